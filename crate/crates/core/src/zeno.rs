//! Coherent protocol: short joint evolutions interleaved with a two-outcome
//! projective measurement `{I (x) |phi><phi|, I - I (x) |phi><phi|}` on the
//! device.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::log_log_slope;
use crate::model::{device_expectation, effective_hamiltonian, DeviceState, JointModel};
use crate::qmath::{
    commutator, conjugate, eigenvalues, evolve_unitary, partial_trace_device, trace,
    trace_distance, unitary_propagator, ComplexMatrix, DensityMatrix, HermitianOperator, C64, I,
};

/// Survival below this makes the selective branch undefined.
pub const EXTINCTION_THRESHOLD: f64 = 1e-14;
/// Euler steps whose output has an eigenvalue below this are rejected.
pub const EULER_NEGATIVITY_LIMIT: f64 = -1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Stepper {
    /// `U rho U^dagger` with `U = exp(-i H_SD dt)`.
    #[default]
    Exact,
    /// First-order `rho + i dt [rho, H_SD]`; not positivity preserving.
    Euler,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MeasurementMode {
    /// Keep and renormalize the `|phi>` branch.
    #[default]
    Selective,
    /// Sum both projected branches.
    Nonselective,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub total_time: f64,
    pub n_steps: usize,
    pub stepper: Stepper,
    pub measurement_mode: MeasurementMode,
}

impl ProtocolConfig {
    pub fn new(total_time: f64, n_steps: usize) -> Result<Self> {
        Self { total_time, n_steps, stepper: Stepper::Exact, measurement_mode: MeasurementMode::Selective }
            .validated()
    }

    pub fn with_stepper(mut self, stepper: Stepper) -> Self {
        self.stepper = stepper;
        self
    }

    pub fn with_mode(mut self, mode: MeasurementMode) -> Self {
        self.measurement_mode = mode;
        self
    }

    pub fn with_steps(mut self, n_steps: usize) -> Result<Self> {
        self.n_steps = n_steps;
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.total_time > 0.0 && self.total_time.is_finite()) {
            return Err(Error::InvalidArgument(format!("total time must be positive, got {}", self.total_time)));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
        }
        Ok(self)
    }

    pub fn dt(&self) -> f64 {
        self.total_time / self.n_steps as f64
    }
}

#[derive(Clone, Debug)]
pub struct ZenoRunResult {
    pub final_system_state: DensityMatrix,
    pub survival_probability: f64,
    /// `1 - survival_probability`, accumulated without cancellation.
    pub one_minus_survival: f64,
    pub per_step_survival: Vec<f64>,
    pub reference_state: DensityMatrix,
    pub error: f64,
}

fn require_joint_dim(rho: &ComplexMatrix, joint: &JointModel) -> Result<()> {
    if rho.nrows() != joint.dim() || rho.ncols() != joint.dim() {
        return Err(Error::DimensionMismatch { expected: joint.dim(), found: rho.nrows() });
    }
    Ok(())
}

pub fn step_exact(rho_sd: &DensityMatrix, joint: &JointModel, dt: f64) -> Result<DensityMatrix> {
    require_joint_dim(rho_sd.matrix(), joint)?;
    let u = unitary_propagator(joint.hamiltonian(), dt)?;
    Ok(DensityMatrix::from_cptp_output(conjugate(&u, rho_sd.matrix())))
}

/// `rho + i dt [rho, H_SD]`, returned unvalidated.
pub fn step_euler(rho_sd: &ComplexMatrix, joint: &JointModel, dt: f64) -> Result<ComplexMatrix> {
    require_joint_dim(rho_sd, joint)?;
    Ok(rho_sd + commutator(rho_sd, joint.hamiltonian().matrix()) * (I * dt))
}

/// Result of one Zeno measurement on the joint state.
#[derive(Clone, Debug)]
pub struct Measured {
    /// Joint state after the measurement.
    pub state: ComplexMatrix,
    /// System factor: the conditional state (selective) or the marginal
    /// (nonselective).
    pub system: ComplexMatrix,
    pub p_survive: f64,
}

/// Measurement on an arbitrary Hermitian joint operator (e.g. a raw Euler
/// output).
pub fn project_device(rho_sd: &ComplexMatrix, phi: &DeviceState, mode: MeasurementMode) -> Result<Measured> {
    let m = phi.dim();
    if !rho_sd.nrows().is_multiple_of(m) || rho_sd.nrows() != rho_sd.ncols() {
        return Err(Error::DimensionMismatch { expected: m, found: rho_sd.nrows() });
    }
    let d_sys = rho_sd.nrows() / m;
    let kept = device_expectation(rho_sd, phi.amplitudes(), d_sys, m);
    let p_survive = trace(&kept).re;
    let proj = phi.ket().projector();
    match mode {
        MeasurementMode::Selective => {
            if p_survive <= EXTINCTION_THRESHOLD {
                return Err(Error::ZenoBranchExtinguished(p_survive));
            }
            let system = kept.unscale(p_survive);
            let state = crate::qmath::tensor(&system, &proj);
            Ok(Measured { state, system, p_survive })
        }
        MeasurementMode::Nonselective => {
            // per device block B: B - PB - BP + 2 PBP
            let mut state = rho_sd.clone();
            for s in 0..d_sys {
                for t in 0..d_sys {
                    let block = rho_sd.view((s * m, t * m), (m, m)).into_owned();
                    let pb = &proj * &block;
                    let bp = &block * &proj;
                    let pbp = &pb * &proj;
                    let new = block - pb - bp + pbp.scale(2.0);
                    state.view_mut((s * m, t * m), (m, m)).copy_from(&new);
                }
            }
            let system = partial_trace_device(&state, d_sys, m)?;
            Ok(Measured { state, system, p_survive })
        }
    }
}

pub fn zeno_measure(rho_sd: &DensityMatrix, phi: &DeviceState, mode: MeasurementMode) -> Result<(DensityMatrix, f64)> {
    let out = project_device(rho_sd.matrix(), phi, mode)?;
    Ok((DensityMatrix::from_cptp_output(out.state), out.p_survive))
}

fn min_eig(m: &ComplexMatrix) -> Result<f64> {
    let vals = eigenvalues(&HermitianOperator::symmetrized(m.clone()))?;
    Ok(vals.iter().copied().fold(f64::INFINITY, f64::min))
}

pub fn run_zeno(
    rho_s0: &DensityMatrix,
    phi: &DeviceState,
    joint: &JointModel,
    cfg: &ProtocolConfig,
) -> Result<ZenoRunResult> {
    let cfg = cfg.validated()?;
    if rho_s0.dim() != joint.d_sys() {
        return Err(Error::DimensionMismatch { expected: joint.d_sys(), found: rho_s0.dim() });
    }
    if phi.dim() != joint.d_dev() {
        return Err(Error::DimensionMismatch { expected: joint.d_dev(), found: phi.dim() });
    }
    let dt = cfg.dt();
    let h_eff = effective_hamiltonian(joint, phi)?;
    let reference_state = evolve_unitary(&h_eff, cfg.total_time, rho_s0)?;

    let propagator = match cfg.stepper {
        Stepper::Exact => Some(unitary_propagator(joint.hamiltonian(), dt)?),
        Stepper::Euler => None,
    };
    let mut state = rho_s0.tensor(&DensityMatrix::pure(phi.ket())).into_matrix();
    let mut system = rho_s0.matrix().clone();
    let mut per_step_survival = Vec::with_capacity(cfg.n_steps);
    let mut log_survival = 0.0;
    for _ in 0..cfg.n_steps {
        let stepped = match &propagator {
            Some(u) => conjugate(u, &state),
            None => {
                let raw = step_euler(&state, joint, dt)?;
                let min = min_eig(&raw)?;
                if min < EULER_NEGATIVITY_LIMIT {
                    return Err(Error::EulerUnphysical(min));
                }
                raw
            }
        };
        let measured = project_device(&stepped, phi, cfg.measurement_mode)?;
        per_step_survival.push(measured.p_survive);
        log_survival += measured.p_survive.ln();
        state = measured.state;
        system = measured.system;
    }
    let final_system_state = match cfg.measurement_mode {
        MeasurementMode::Selective => DensityMatrix::from_cptp_output(system),
        MeasurementMode::Nonselective => {
            DensityMatrix::from_cptp_output(partial_trace_device(&state, joint.d_sys(), joint.d_dev())?)
        }
    };
    let survival_probability = per_step_survival.iter().product::<f64>().clamp(0.0, 1.0);
    let one_minus_survival = if log_survival.is_finite() { -log_survival.exp_m1() } else { 1.0 };
    let error = trace_distance(&final_system_state, &reference_state)?;
    Ok(ZenoRunResult {
        final_system_state,
        survival_probability,
        one_minus_survival: one_minus_survival.clamp(0.0, 1.0),
        per_step_survival,
        reference_state,
        error,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub n_steps: usize,
    pub dt: f64,
    pub error: f64,
    pub one_minus_survival: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// Log-log slope of error against dt; `None` if errors vanish.
    pub error_slope: Option<f64>,
    /// Log-log slope of `1 - survival` against dt.
    pub survival_slope: Option<f64>,
}

/// One run per entry of `n_list` at fixed total time; runs execute in
/// parallel, results keep `n_list` order.
pub fn convergence_sweep(
    rho_s0: &DensityMatrix,
    phi: &DeviceState,
    joint: &JointModel,
    total_time: f64,
    n_list: &[usize],
    template: &ProtocolConfig,
) -> Result<SweepResult> {
    if n_list.is_empty() {
        return Err(Error::InvalidArgument("n_list must be nonempty".into()));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("n_list must be strictly ascending".into()));
    }
    let cfgs: Vec<ProtocolConfig> = n_list
        .iter()
        .map(|&n| ProtocolConfig { total_time, n_steps: n, ..*template }.validated())
        .collect::<Result<_>>()?;
    let points = cfgs
        .par_iter()
        .map(|cfg| {
            let run = run_zeno(rho_s0, phi, joint, cfg)?;
            Ok(SweepPoint {
                n_steps: cfg.n_steps,
                dt: cfg.dt(),
                error: run.error,
                one_minus_survival: run.one_minus_survival,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dts: Vec<f64> = points.iter().map(|p| p.dt).collect();
    let errs: Vec<f64> = points.iter().map(|p| p.error).collect();
    let leaks: Vec<f64> = points.iter().map(|p| p.one_minus_survival).collect();
    Ok(SweepResult {
        error_slope: log_log_slope(&dts, &errs),
        survival_slope: log_log_slope(&dts, &leaks),
        points,
    })
}

/// The system update predicted to first order by the effective Hamiltonian:
/// `rho + i dt [rho, H_eff]`.
pub fn first_order_update(rho_s: &ComplexMatrix, h_eff: &HermitianOperator, dt: f64) -> ComplexMatrix {
    rho_s + commutator(rho_s, h_eff.matrix()) * C64::new(0.0, dt)
}

/// One step from `rho_s (x) |phi><phi|` followed by a selective measurement;
/// returns the conditional system state.
pub fn conditioned_single_step(
    rho_s: &DensityMatrix,
    phi: &DeviceState,
    joint: &JointModel,
    dt: f64,
    stepper: Stepper,
) -> Result<ComplexMatrix> {
    let joint_state = rho_s.tensor(&DensityMatrix::pure(phi.ket()));
    let stepped = match stepper {
        Stepper::Exact => step_exact(&joint_state, joint, dt)?.into_matrix(),
        Stepper::Euler => step_euler(joint_state.matrix(), joint, dt)?,
    };
    Ok(project_device(&stepped, phi, MeasurementMode::Selective)?.system)
}
