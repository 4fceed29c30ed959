use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use super::config::{ExperimentConfig, ExperimentKind, ResolvedModel};
use super::output::{emit_outputs, Cell, Table};
use super::{CliError, TOOL_VERSION};
use crate::cases::{self, Arrangement};
use crate::incoherent::{
    averaged_state_error, channel_convergence, exact_average_channel, monte_carlo_average, step_unitaries,
};
use crate::model::{classical_weights, effective_hamiltonian, DeviceModel};
use crate::qmath::{eigenvalues, max_abs, trace_distance, ComplexMatrix, DensityMatrix};
use crate::zeno::{convergence_sweep, run_zeno};

#[derive(Clone, Debug)]
pub struct RunReport {
    pub experiment: ExperimentKind,
    pub summary: Value,
    pub table: Table,
}

impl RunReport {
    /// Output paths resolved against `out_dir`; defaults to
    /// `<experiment>.csv` and `<experiment>.json`.
    pub fn output_paths(&self, cfg: &ExperimentConfig, out_dir: &Path) -> (PathBuf, PathBuf) {
        let name = self.experiment.name();
        let out = cfg.output.as_ref();
        let csv = out.and_then(|o| o.csv_path.clone()).unwrap_or_else(|| format!("{name}.csv"));
        let json = out.and_then(|o| o.json_path.clone()).unwrap_or_else(|| format!("{name}.json"));
        (out_dir.join(csv), out_dir.join(json))
    }

    pub fn emit(&self, cfg: &ExperimentConfig, out_dir: &Path) -> Result<(PathBuf, PathBuf), CliError> {
        let (csv, json) = self.output_paths(cfg, out_dir);
        emit_outputs(&self.summary, &self.table, &csv, &json)
    }
}

type EngineResult<T> = std::result::Result<T, crate::Error>;

fn matrix_json(m: &ComplexMatrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|r| Value::Array((0..m.ncols()).map(|c| json!([m[(r, c)].re, m[(r, c)].im])).collect()))
            .collect(),
    )
}

fn slope_json(s: Option<f64>) -> Value {
    s.map_or(Value::Null, |x| json!(x))
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn all_finite(v: &Value) -> bool {
    match v {
        Value::Number(n) => n.as_f64().is_some_and(f64::is_finite),
        Value::Array(a) => a.iter().all(all_finite),
        Value::Object(o) => o.values().all(all_finite),
        _ => true,
    }
}

fn needs_device<'a>(model: &'a ResolvedModel, what: &str) -> Result<&'a DeviceModel, CliError> {
    model
        .device
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("{what} needs per-configuration Hamiltonians")))
}

/// Runs the configured experiment. `seed_override` replaces the Monte Carlo
/// seed from the config. Nothing is written; see [`RunReport::emit`].
pub fn run_experiment(cfg: &ExperimentConfig, seed_override: Option<u64>) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let kind = cfg.experiment;
    let seed = seed_override.or(cfg.monte_carlo.as_ref().map(|m| m.seed));
    let engine = |source: crate::Error| CliError::Engine { experiment: kind.name(), source };

    let (results, table) = match kind {
        ExperimentKind::Scatter => scatter(cfg).map_err(engine)?,
        ExperimentKind::SgCheck => sg_check(cfg).map_err(engine)?,
        _ => {
            let model = cfg.resolve_model()?;
            let rho0 = cfg.initial_system_state(model.joint.d_sys())?;
            match kind {
                ExperimentKind::Zeno => zeno(cfg, &model, &rho0).map_err(engine)?,
                ExperimentKind::Sweep => sweep(cfg, &model, &rho0).map_err(engine)?,
                ExperimentKind::Incoherent => {
                    let dev = needs_device(&model, "incoherent")?;
                    incoherent(cfg, &model, dev, &rho0, seed.unwrap_or(0)).map_err(engine)?
                }
                ExperimentKind::Compare => {
                    let dev = needs_device(&model, "compare")?;
                    compare(cfg, &model, dev, &rho0).map_err(engine)?
                }
                ExperimentKind::Cavity => cavity(cfg, &model).map_err(engine)?,
                ExperimentKind::Scatter | ExperimentKind::SgCheck => unreachable!(),
            }
        }
    };
    let results = Value::Object(results);
    if !all_finite(&results) {
        return Err(engine(crate::Error::NonFinite));
    }
    let summary = json!({
        "experiment": kind.name(),
        "results": results,
        "seed": seed,
        "tool_version": TOOL_VERSION,
    });
    Ok(RunReport { experiment: kind, summary, table })
}

type Outcome = EngineResult<(Map<String, Value>, Table)>;

fn protocol(cfg: &ExperimentConfig) -> &super::config::ProtocolSection {
    cfg.protocol.as_ref().expect("validated")
}

fn zeno(cfg: &ExperimentConfig, model: &ResolvedModel, rho0: &DensityMatrix) -> Outcome {
    let p = protocol(cfg);
    let pc = cfg.protocol_config(p, p.n_steps.expect("validated")).expect("validated");
    let run = run_zeno(rho0, &model.phi, &model.joint, &pc)?;
    let mut table = Table::new(&["step", "survival", "cumulative_survival"]);
    let mut cumulative = 1.0;
    for (k, &s) in run.per_step_survival.iter().enumerate() {
        cumulative *= s;
        table.push(vec![Cell::Int(k as u64 + 1), Cell::Float(s), Cell::Float(cumulative)]);
    }
    let mut r = Map::new();
    r.insert("n_steps".into(), json!(pc.n_steps));
    r.insert("dt".into(), json!(pc.dt()));
    r.insert("total_time".into(), json!(pc.total_time));
    r.insert("error".into(), json!(run.error));
    r.insert("survival_probability".into(), json!(run.survival_probability));
    r.insert("one_minus_survival".into(), json!(run.one_minus_survival));
    r.insert("final_state".into(), matrix_json(run.final_system_state.matrix()));
    r.insert("reference_state".into(), matrix_json(run.reference_state.matrix()));
    Ok((r, table))
}

fn sweep(cfg: &ExperimentConfig, model: &ResolvedModel, rho0: &DensityMatrix) -> Outcome {
    let p = protocol(cfg);
    let n_list = p.n_list.as_ref().expect("validated");
    let template = cfg.protocol_config(p, n_list[0]).expect("validated");
    let res = convergence_sweep(rho0, &model.phi, &model.joint, p.total_time, n_list, &template)?;
    let mut table = Table::new(&["n_steps", "dt", "error", "one_minus_survival"]);
    for pt in &res.points {
        table.push(vec![
            Cell::Int(pt.n_steps as u64),
            Cell::Float(pt.dt),
            Cell::Float(pt.error),
            Cell::Float(pt.one_minus_survival),
        ]);
    }
    let mut r = Map::new();
    r.insert("error_slope".into(), slope_json(res.error_slope));
    r.insert("survival_slope".into(), slope_json(res.survival_slope));
    r.insert("error".into(), json!(res.points.iter().map(|p| p.error).collect::<Vec<_>>()));
    r.insert(
        "one_minus_survival".into(),
        json!(res.points.iter().map(|p| p.one_minus_survival).collect::<Vec<_>>()),
    );
    r.insert("n_list".into(), json!(n_list));
    Ok((r, table))
}

fn incoherent(
    cfg: &ExperimentConfig,
    model: &ResolvedModel,
    dev: &DeviceModel,
    rho0: &DensityMatrix,
    seed: u64,
) -> Outcome {
    let p = protocol(cfg);
    let n = p.n_steps.expect("validated");
    let n_traj = cfg.monte_carlo.as_ref().expect("validated").n_traj;
    let weights = classical_weights(&model.phi);
    let dt = p.total_time / n as f64;
    let unitaries = step_unitaries(dev, dt)?;
    let mc = monte_carlo_average(rho0, &weights, &unitaries, n, n_traj, seed)?;
    let exact = exact_average_channel(&weights, &unitaries)?.power(n).apply(rho0)?;
    let (_, reference_error) = averaged_state_error(rho0, dev, &weights, p.total_time, n)?;
    let mc_distance = trace_distance(&mc.averaged_state, &exact)?;

    let mut table = Table::new(&["row", "col", "mc_re", "mc_im", "exact_re", "exact_im"]);
    let (a, b) = (mc.averaged_state.matrix(), exact.matrix());
    for c in 0..a.ncols() {
        for r in 0..a.nrows() {
            table.push(vec![
                Cell::Int(r as u64),
                Cell::Int(c as u64),
                Cell::Float(a[(r, c)].re),
                Cell::Float(a[(r, c)].im),
                Cell::Float(b[(r, c)].re),
                Cell::Float(b[(r, c)].im),
            ]);
        }
    }
    let mut res = Map::new();
    res.insert("n_steps".into(), json!(n));
    res.insert("dt".into(), json!(dt));
    res.insert("n_traj".into(), json!(n_traj));
    res.insert("mc_distance_to_exact".into(), json!(mc_distance));
    res.insert("stderr_estimate".into(), json!(mc.stderr_estimate));
    res.insert("within_5_stderr".into(), json!(mc_distance <= 5.0 * mc.stderr_estimate));
    res.insert("exact_error_to_reference".into(), json!(reference_error));
    Ok((res, table))
}

fn compare(cfg: &ExperimentConfig, model: &ResolvedModel, dev: &DeviceModel, rho0: &DensityMatrix) -> Outcome {
    let p = protocol(cfg);
    let n_list = p.n_list.as_ref().expect("validated");
    let weights = classical_weights(&model.phi);
    let channel = channel_convergence(dev, &weights, p.total_time, n_list)?;
    let mut zeno_error = Vec::with_capacity(n_list.len());
    let mut channel_distance = Vec::with_capacity(n_list.len());
    let mut table = Table::new(&[
        "n_steps",
        "dt",
        "zeno_error",
        "incoherent_channel_distance",
        "incoherent_state_error",
        "zeno_incoherent_distance",
    ]);
    for (&n, pt) in n_list.iter().zip(&channel) {
        let pc = cfg.protocol_config(p, n).expect("validated");
        let run = run_zeno(rho0, &model.phi, &model.joint, &pc)?;
        let (inc_state, inc_err) = averaged_state_error(rho0, dev, &weights, p.total_time, n)?;
        let between = trace_distance(&run.final_system_state, &inc_state)?;
        table.push(vec![
            Cell::Int(n as u64),
            Cell::Float(pt.dt),
            Cell::Float(run.error),
            Cell::Float(pt.distance.frobenius),
            Cell::Float(inc_err),
            Cell::Float(between),
        ]);
        zeno_error.push(run.error);
        channel_distance.push(pt.distance.frobenius);
    }
    let mut r = Map::new();
    r.insert("n_list".into(), json!(n_list));
    r.insert("zeno_error_decreasing".into(), json!(strictly_decreasing(&zeno_error)));
    r.insert("incoherent_channel_distance_decreasing".into(), json!(strictly_decreasing(&channel_distance)));
    r.insert("zeno_error".into(), json!(zeno_error));
    r.insert("incoherent_channel_distance".into(), json!(channel_distance));
    Ok((r, table))
}

fn cavity(cfg: &ExperimentConfig, model: &ResolvedModel) -> Outcome {
    let super::config::ModelConfig::Cavity { g, .. } = &cfg.model else { unreachable!("validated") };
    let h = effective_hamiltonian(&model.joint, &model.phi)?;
    let w = classical_weights(&model.phi);
    let imbalance = w.as_slice()[0] - w.as_slice()[1];
    let m = h.matrix();
    let mut offdiag: f64 = 0.0;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if r != c {
                offdiag = offdiag.max(m[(r, c)].norm());
            }
        }
    }
    let spectrum = eigenvalues(&h)?;
    let mut expected: Vec<f64> = (0..m.nrows()).map(|n| g * imbalance * n as f64).collect();
    expected.sort_by(f64::total_cmp);
    let mut table = Table::new(&["n", "effective_energy", "expected"]);
    let mut worst: f64 = 0.0;
    for n in 0..m.nrows() {
        let e = m[(n, n)].re;
        let want = g * imbalance * n as f64;
        worst = worst.max((e - want).abs());
        table.push(vec![Cell::Int(n as u64), Cell::Float(e), Cell::Float(want)]);
    }
    let spectrum_dev = spectrum.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut r = Map::new();
    r.insert("weight_imbalance".into(), json!(imbalance));
    r.insert("max_diagonal_deviation".into(), json!(worst));
    r.insert("max_offdiagonal".into(), json!(offdiag));
    r.insert("spectrum_deviation".into(), json!(spectrum_dev));
    Ok((r, table))
}

const DEFAULT_ANGLES: [f64; 4] = [std::f64::consts::FRAC_PI_6, std::f64::consts::FRAC_PI_3, std::f64::consts::FRAC_PI_2, 1.0];

fn sg_check(cfg: &ExperimentConfig) -> Outcome {
    let spec = cfg.sg_spec().expect("validated");
    let h = cases::sg_effective(&spec)?;
    let mut block_dev: f64 = 0.0;
    let mut spectrum_dev: f64 = 0.0;
    for (k, &p) in spec.momentum_grid.iter().enumerate() {
        let block = cases::momentum_block(h.matrix(), k);
        block_dev = block_dev.max(max_abs(&(&block - cases::isotropic_block(spec.g, p))));
        let vals = eigenvalues(&crate::qmath::HermitianOperator::new(block)?)?;
        let half = 0.5 * spec.g.abs() * p[0].hypot(p[1]);
        spectrum_dev = spectrum_dev.max((vals[0] + half).abs()).max((vals[1] - half).abs());
    }
    let angles = cfg.angles.clone().unwrap_or_else(|| DEFAULT_ANGLES.to_vec());
    let mut table = Table::new(&["angle", "covariance_deviation"]);
    let mut worst: f64 = 0.0;
    for &theta in &angles {
        let d = cases::sg_rotation_covariance(&h, &spec, theta)?;
        worst = worst.max(d);
        table.push(vec![Cell::Float(theta), Cell::Float(d)]);
    }
    let mut r = Map::new();
    r.insert("isotropic_block_deviation".into(), json!(block_dev));
    r.insert("block_spectrum_deviation".into(), json!(spectrum_dev));
    r.insert("cross_momentum_leakage".into(), json!(cases::cross_momentum_leakage(h.matrix())));
    r.insert("max_covariance_deviation".into(), json!(worst));
    r.insert("rotation_orientation".into(), json!(cases::rotation_orientation()));
    Ok((r, table))
}

fn scatter(cfg: &ExperimentConfig) -> Outcome {
    let super::config::ModelConfig::Scatterer { arrangement, weights, .. } = &cfg.model else {
        unreachable!("validated")
    };
    let spec = cfg.scatterer_spec(true).expect("validated");
    let arrangement = arrangement.map(Arrangement::from).unwrap_or_default();
    let pot = cases::scatterer_potential(&spec, arrangement, *weights)?;
    let sp = cases::bound_states(&spec, &pot)?;
    let mut table = Table::new(&["index", "energy", "bound", "localization"]);
    for k in 0..sp.energies.len() {
        table.push(vec![
            Cell::Int(k as u64),
            Cell::Float(sp.energies[k]),
            Cell::Bool(sp.bound_flags[k]),
            Cell::Float(sp.localization[k]),
        ]);
    }
    let mut r = Map::new();
    r.insert("bound_count".into(), json!(sp.bound_count()));
    r.insert("bound_energies".into(), json!(sp.bound_energies()));
    r.insert("v_asym".into(), json!(sp.v_asym));
    r.insert(
        "arrangement".into(),
        json!(match arrangement {
            Arrangement::SingleStep => "single_step",
            Arrangement::MirroredPair => "mirrored_pair",
        }),
    );
    Ok((r, table))
}
