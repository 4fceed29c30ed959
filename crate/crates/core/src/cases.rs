//! Case studies: a cavity field coupled to an atom used as the device, a
//! Stern-Gerlach magnet held in a superposition of gradient directions, and
//! a step scatterer held in a superposition of mirrored positions.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{build_joint_hamiltonian, effective_hamiltonian, ClassicalLabel, DeviceModel, DeviceState, JointModel};
use crate::qmath::{max_abs, pauli_x, pauli_y, pauli_z, unitary_propagator, ComplexMatrix, HermitianOperator, C64};

// ---------------------------------------------------------------------------
// Cavity
// ---------------------------------------------------------------------------

/// Atom as device (`e`, `g`), photon number space `0..=n_max` as system:
/// `H_S(e) = +g N`, `H_S(g) = -g N`.
pub fn cavity_model(g: f64, n_max: usize) -> Result<DeviceModel> {
    if n_max < 1 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let n: Vec<f64> = (0..=n_max).map(|k| k as f64).collect();
    let plus = HermitianOperator::from_real_diagonal(&n.iter().map(|k| g * k).collect::<Vec<_>>());
    let minus = HermitianOperator::from_real_diagonal(&n.iter().map(|k| -g * k).collect::<Vec<_>>());
    DeviceModel::new(vec![ClassicalLabel::new("e"), ClassicalLabel::new("g")], vec![plus, minus])
}

// ---------------------------------------------------------------------------
// Stern-Gerlach
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct SgSpec {
    pub g: f64,
    pub momentum_grid: Vec<[f64; 2]>,
    pub directions: Vec<[f64; 2]>,
    pub amplitudes: DeviceState,
}

impl SgSpec {
    pub fn new(g: f64, momentum_grid: Vec<[f64; 2]>, directions: Vec<[f64; 2]>, amplitudes: DeviceState) -> Result<Self> {
        if momentum_grid.is_empty() {
            return Err(Error::InvalidArgument("momentum grid must be nonempty".into()));
        }
        if directions.is_empty() {
            return Err(Error::InvalidArgument("need at least one direction".into()));
        }
        for n in &directions {
            let norm = (n[0] * n[0] + n[1] * n[1]).sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("direction {n:?} is not a unit vector")));
            }
        }
        if amplitudes.dim() != directions.len() {
            return Err(Error::DimensionMismatch { expected: directions.len(), found: amplitudes.dim() });
        }
        Ok(Self { g, momentum_grid, directions, amplitudes })
    }

    /// `|x>` and `|y>` in equal superposition.
    pub fn orthogonal_pair(g: f64, momentum_grid: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(g, momentum_grid, vec![[1.0, 0.0], [0.0, 1.0]], DeviceState::equal_superposition(2)?)
    }

    pub fn d_sys(&self) -> usize {
        2 * self.momentum_grid.len()
    }
}

/// `g (n.p) (n_x sigma_x + n_y sigma_y)` on one momentum point.
pub fn sg_block(g: f64, n: [f64; 2], p: [f64; 2]) -> ComplexMatrix {
    let np = n[0] * p[0] + n[1] * p[1];
    (pauli_x().scale(n[0]) + pauli_y().scale(n[1])).scale(g * np)
}

/// `(g/2)(p_x sigma_x + p_y sigma_y)`, the rotation-invariant block.
pub fn isotropic_block(g: f64, p: [f64; 2]) -> ComplexMatrix {
    (pauli_x().scale(p[0]) + pauli_y().scale(p[1])).scale(0.5 * g)
}

fn block_diagonal(blocks: &[ComplexMatrix]) -> ComplexMatrix {
    let n = blocks.len() * 2;
    let mut m = DMatrix::zeros(n, n);
    for (k, b) in blocks.iter().enumerate() {
        m.view_mut((2 * k, 2 * k), (2, 2)).copy_from(b);
    }
    m
}

/// System index `2 k + spin` for momentum point `k`.
pub fn sg_model(spec: &SgSpec) -> Result<(DeviceModel, JointModel)> {
    let mut labels = Vec::with_capacity(spec.directions.len());
    let mut hams = Vec::with_capacity(spec.directions.len());
    for (j, n) in spec.directions.iter().enumerate() {
        let blocks: Vec<_> = spec.momentum_grid.iter().map(|&p| sg_block(spec.g, *n, p)).collect();
        hams.push(HermitianOperator::new(block_diagonal(&blocks))?);
        labels.push(ClassicalLabel::with_payload(format!("n{j}"), n.to_vec()));
    }
    let dev = DeviceModel::new(labels, hams)?;
    let joint = build_joint_hamiltonian(&dev);
    Ok((dev, joint))
}

pub fn sg_effective(spec: &SgSpec) -> Result<HermitianOperator> {
    let (_, joint) = sg_model(spec)?;
    effective_hamiltonian(&joint, &spec.amplitudes)
}

/// 2x2 spin block of a system operator at momentum point `k`.
pub fn momentum_block(h: &ComplexMatrix, k: usize) -> ComplexMatrix {
    h.view((2 * k, 2 * k), (2, 2)).into_owned()
}

/// Largest entry of `h` that couples different momentum points.
pub fn cross_momentum_leakage(h: &ComplexMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..h.nrows() {
        for c in 0..h.ncols() {
            if r / 2 != c / 2 {
                worst = worst.max(h[(r, c)].norm());
            }
        }
    }
    worst
}

/// `exp(-i theta sigma_z / 2)`.
pub fn spin_rotation(theta: f64) -> ComplexMatrix {
    unitary_propagator(&HermitianOperator::new(pauli_z().scale(0.5)).expect("sigma_z"), theta)
        .expect("2x2 eigendecomposition")
}

pub fn planar_rotation(theta: f64, p: [f64; 2]) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

/// Orientation `s` such that `R(theta)^dagger B(p) R(theta) = B(rot(s theta) p)`,
/// fixed by trying both signs at `theta = pi/2`.
pub fn rotation_orientation() -> f64 {
    let r = spin_rotation(FRAC_PI_2);
    let p = [1.0, 0.0];
    let lhs = r.adjoint() * isotropic_block(2.0, p) * &r;
    let err = |s: f64| max_abs(&(&lhs - isotropic_block(2.0, planar_rotation(s * FRAC_PI_2, p))));
    if err(1.0) <= err(-1.0) {
        1.0
    } else {
        -1.0
    }
}

/// Max over grid points of `|| R^dagger B_k R - B(rot p_k) ||_max`, where
/// `B_k` is the `k`-th spin block of `h_eff`.
pub fn sg_rotation_covariance(h_eff: &HermitianOperator, spec: &SgSpec, theta: f64) -> Result<f64> {
    if h_eff.dim() != spec.d_sys() {
        return Err(Error::DimensionMismatch { expected: spec.d_sys(), found: h_eff.dim() });
    }
    let r = spin_rotation(theta);
    let orient = rotation_orientation();
    let mut worst: f64 = 0.0;
    for (k, &p) in spec.momentum_grid.iter().enumerate() {
        let b = momentum_block(h_eff.matrix(), k);
        let rotated = r.adjoint() * b * &r;
        let want = isotropic_block(spec.g, planar_rotation(orient * theta, p));
        worst = worst.max(max_abs(&(rotated - want)));
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Scatterer
// ---------------------------------------------------------------------------

/// Smallest grid accepted for spectrum analysis.
pub const MIN_SPECTRUM_GRID: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScattererSpec {
    pub step_height: f64,
    pub half_width: f64,
    pub mass: f64,
    pub box_half_length: f64,
    pub grid_points: usize,
}

impl ScattererSpec {
    pub fn new(step_height: f64, half_width: f64, mass: f64, box_half_length: f64, grid_points: usize) -> Result<Self> {
        let spec = Self::unchecked(step_height, half_width, mass, box_half_length, grid_points)?;
        if grid_points < MIN_SPECTRUM_GRID {
            return Err(Error::InvalidArgument(format!(
                "grid_points {grid_points} below {MIN_SPECTRUM_GRID} for spectrum analysis"
            )));
        }
        Ok(spec)
    }

    /// Same physical checks as [`ScattererSpec::new`] without the minimum
    /// grid size, for joint system-device dynamics on small grids.
    pub fn for_dynamics(step_height: f64, half_width: f64, mass: f64, box_half_length: f64, grid_points: usize) -> Result<Self> {
        Self::unchecked(step_height, half_width, mass, box_half_length, grid_points)
    }

    fn unchecked(step_height: f64, half_width: f64, mass: f64, box_half_length: f64, grid_points: usize) -> Result<Self> {
        if !(step_height > 0.0 && half_width > 0.0 && mass > 0.0) {
            return Err(Error::InvalidArgument("step height, half width and mass must be positive".into()));
        }
        if box_half_length <= 3.0 * half_width {
            return Err(Error::InvalidArgument(format!(
                "box half length {box_half_length} must exceed 3 * half width"
            )));
        }
        if grid_points < 3 {
            return Err(Error::InvalidArgument("need at least three grid points".into()));
        }
        Ok(Self { step_height, half_width, mass, box_half_length, grid_points })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.box_half_length / (self.grid_points + 1) as f64
    }

    /// Interior points of `[-L, L]`; the wavefunction vanishes at `+-L`.
    pub fn grid(&self) -> Vec<f64> {
        let h = self.spacing();
        (1..=self.grid_points).map(|i| -self.box_half_length + i as f64 * h).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Arrangement {
    /// `V0 * [x > 0]`.
    SingleStep,
    /// `w_left V0 [x < -a] + w_right V0 [x > a]`.
    #[default]
    MirroredPair,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    pub values: Vec<f64>,
    /// The lower of the two asymptotic values; the continuum threshold.
    pub v_asym: f64,
}

/// `weights` are the (left, right) device weights for the mirrored pair,
/// defaulting to one half each. Ignored for a single step.
pub fn scatterer_potential(spec: &ScattererSpec, arrangement: Arrangement, weights: Option<[f64; 2]>) -> Result<Potential> {
    let v0 = spec.step_height;
    let a = spec.half_width;
    let xs = spec.grid();
    match arrangement {
        Arrangement::SingleStep => Ok(Potential {
            values: xs.iter().map(|&x| if x > 0.0 { v0 } else { 0.0 }).collect(),
            v_asym: 0.0,
        }),
        Arrangement::MirroredPair => {
            let [wl, wr] = weights.unwrap_or([0.5, 0.5]);
            if wl < 0.0 || wr < 0.0 || ((wl + wr) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("invalid mirrored weights [{wl}, {wr}]")));
            }
            let values = xs
                .iter()
                .map(|&x| {
                    let left = if -x > a { wl * v0 } else { 0.0 };
                    let right = if x > a { wr * v0 } else { 0.0 };
                    left + right
                })
                .collect();
            Ok(Potential { values, v_asym: wl.min(wr) * v0 })
        }
    }
}

/// Symmetric tridiagonal matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn to_hermitian(&self) -> HermitianOperator {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(self.diag[i], 0.0);
        }
        for (i, &e) in self.off.iter().enumerate() {
            m[(i, i + 1)] = C64::new(e, 0.0);
            m[(i + 1, i)] = C64::new(e, 0.0);
        }
        HermitianOperator::symmetrized(m)
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut acc = self.diag[i] * v[i];
                if i > 0 {
                    acc += self.off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    acc += self.off[i] * v[i + 1];
                }
                acc
            })
            .collect()
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence).
    pub fn count_below(&self, x: f64) -> usize {
        let tiny = f64::MIN_POSITIVE.sqrt();
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.dim() {
            let e2 = if i > 0 { self.off[i - 1].powi(2) } else { 0.0 };
            q = self.diag[i] - x - if i > 0 { e2 / q } else { 0.0 };
            if q == 0.0 {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// `k`-th smallest eigenvalue (0-based) by bisection.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        let scale = lo.abs().max(hi.abs()).max(1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * scale {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Unit eigenvector for an accurate eigenvalue by inverse iteration,
    /// orthogonalized against `previous`.
    pub fn eigenvector(&self, lambda: f64, previous: &[Vec<f64>]) -> Vec<f64> {
        let n = self.dim();
        let (lo, hi) = self.gershgorin();
        let shift = lambda + 1e-10 * (hi - lo).max(1.0);
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64 * 0.01).collect();
        for _ in 0..4 {
            for p in previous {
                let dot: f64 = p.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, pi) in v.iter_mut().zip(p) {
                    *vi -= dot * pi;
                }
            }
            solve_shifted(self, shift, &mut v);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in v.iter_mut() {
                *x /= norm;
            }
        }
        v
    }
}

/// Solves `(T - shift) y = b` in place by Gaussian elimination with
/// partial pivoting.
fn solve_shifted(t: &Tridiagonal, shift: f64, b: &mut [f64]) {
    let n = t.dim();
    let mut d: Vec<f64> = t.diag.iter().map(|x| x - shift).collect();
    let dl = &t.off;
    let mut du = t.off.clone();
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    let tiny = f64::EPSILON * t.gershgorin().1.abs().max(1.0);
    for i in 0..n.saturating_sub(1) {
        if d[i].abs() >= dl[i].abs() {
            if d[i] == 0.0 {
                d[i] = tiny;
            }
            let f = dl[i] / d[i];
            d[i + 1] -= f * du[i];
            b[i + 1] -= f * b[i];
        } else {
            let f = d[i] / dl[i];
            d[i] = dl[i];
            let tmp = d[i + 1];
            d[i + 1] = du[i] - f * tmp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -f * du2[i];
            }
            du[i] = tmp;
            let bi = b[i];
            b[i] = b[i + 1];
            b[i + 1] = bi - f * b[i + 1];
        }
    }
    if d[n - 1] == 0.0 {
        d[n - 1] = tiny;
    }
    b[n - 1] /= d[n - 1];
    if n > 1 {
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
    }
}

/// Second-order central-difference Hamiltonian `-(1/2m) d^2/dx^2 + V` with
/// Dirichlet walls at `+-L`.
pub fn fd_hamiltonian(potential: &[f64], spec: &ScattererSpec) -> Result<Tridiagonal> {
    if potential.len() != spec.grid_points {
        return Err(Error::DimensionMismatch { expected: spec.grid_points, found: potential.len() });
    }
    let h = spec.spacing();
    let limit = spec.half_width / 10.0;
    if h > limit {
        return Err(Error::GridTooCoarse { spacing: h, limit });
    }
    let kin = 1.0 / (spec.mass * h * h);
    Ok(Tridiagonal {
        diag: potential.iter().map(|v| kin + v).collect(),
        off: vec![-0.5 * kin; spec.grid_points - 1],
    })
}

/// Thresholds for calling an eigenstate bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundStateCriteria {
    /// Required gap below the asymptote.
    pub energy_margin: f64,
    /// Required probability inside `|x| <= a + margin`.
    pub min_localization: f64,
    /// Margin in decay lengths `1/kappa`.
    pub decay_lengths: f64,
    /// Margin cap as a fraction of `L`.
    pub max_margin_fraction: f64,
    /// Eigenpairs above the asymptote reported alongside the bound ones.
    pub extra_states: usize,
}

impl Default for BoundStateCriteria {
    fn default() -> Self {
        Self { energy_margin: 1e-6, min_localization: 1.0 - 1e-3, decay_lengths: 5.0, max_margin_fraction: 0.25, extra_states: 3 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumResult {
    pub energies: Vec<f64>,
    pub bound_flags: Vec<bool>,
    pub localization: Vec<f64>,
    /// Unit-norm eigenvectors on the grid, one per energy.
    pub wavefunctions: Vec<Vec<f64>>,
    pub v_asym: f64,
}

impl SpectrumResult {
    pub fn bound_count(&self) -> usize {
        self.bound_flags.iter().filter(|&&b| b).count()
    }

    pub fn bound_energies(&self) -> Vec<f64> {
        self.energies.iter().zip(&self.bound_flags).filter(|(_, &b)| b).map(|(e, _)| *e).collect()
    }
}

pub fn bound_states(spec: &ScattererSpec, potential: &Potential) -> Result<SpectrumResult> {
    bound_states_with(spec, potential, &BoundStateCriteria::default())
}

pub fn bound_states_with(spec: &ScattererSpec, potential: &Potential, crit: &BoundStateCriteria) -> Result<SpectrumResult> {
    let ham = fd_hamiltonian(&potential.values, spec)?;
    let below = ham.count_below(potential.v_asym);
    let n_states = (below + crit.extra_states).min(ham.dim());
    let xs = spec.grid();
    let mut energies = Vec::with_capacity(n_states);
    let mut wavefunctions: Vec<Vec<f64>> = Vec::with_capacity(n_states);
    let mut localization = Vec::with_capacity(n_states);
    let mut bound_flags = Vec::with_capacity(n_states);
    for k in 0..n_states {
        let e = ham.eigenvalue(k);
        let near: Vec<Vec<f64>> = energies
            .iter()
            .zip(&wavefunctions)
            .filter(|(ep, _): &(&f64, &Vec<f64>)| (e - **ep).abs() < 1e-6 * e.abs().max(1.0))
            .map(|(_, v)| v.clone())
            .collect();
        let v = ham.eigenvector(e, &near);
        let cap = crit.max_margin_fraction * spec.box_half_length;
        let margin = if e < potential.v_asym {
            (crit.decay_lengths / (2.0 * spec.mass * (potential.v_asym - e)).sqrt()).min(cap)
        } else {
            cap
        };
        let inside = spec.half_width + margin;
        let loc: f64 = xs.iter().zip(&v).filter(|(x, _)| x.abs() <= inside).map(|(_, c)| c * c).sum();
        bound_flags.push(e < potential.v_asym - crit.energy_margin && loc >= crit.min_localization);
        energies.push(e);
        localization.push(loc);
        wavefunctions.push(v);
    }
    Ok(SpectrumResult { energies, bound_flags, localization, wavefunctions, v_asym: potential.v_asym })
}

/// Two classical scatterer positions: a step `V0 [x > a]` and its mirror
/// `V0 [x < -a]`. Their equal-weight average is the mirrored pair.
pub fn scatterer_device(spec: &ScattererSpec) -> Result<DeviceModel> {
    let v0 = spec.step_height;
    let a = spec.half_width;
    let xs = spec.grid();
    let right: Vec<f64> = xs.iter().map(|&x| if x > a { v0 } else { 0.0 }).collect();
    let left: Vec<f64> = xs.iter().map(|&x| if -x > a { v0 } else { 0.0 }).collect();
    let hr = fd_hamiltonian(&right, spec)?.to_hermitian();
    let hl = fd_hamiltonian(&left, spec)?.to_hermitian();
    DeviceModel::new(
        vec![ClassicalLabel::with_payload("left", vec![-a]), ClassicalLabel::with_payload("right", vec![a])],
        vec![hl, hr],
    )
}
