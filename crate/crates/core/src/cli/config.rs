//! JSON experiment configuration.
//!
//! Complex numbers are `[re, im]` pairs; matrices are row-major nested
//! arrays of pairs. Unknown keys are rejected everywhere.

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::cases::{self, Arrangement, ScattererSpec, SgSpec};
use crate::model::{build_joint_hamiltonian, ClassicalLabel, DeviceModel, DeviceState, JointModel};
use crate::qmath::{ComplexMatrix, DensityMatrix, HermitianOperator, Ket, C64};
use crate::zeno::{MeasurementMode, ProtocolConfig, Stepper};

pub type ComplexPair = [f64; 2];
pub type MatrixJson = Vec<Vec<ComplexPair>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Zeno,
    Incoherent,
    Sweep,
    Compare,
    Cavity,
    SgCheck,
    Scatter,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Zeno => "zeno",
            Self::Incoherent => "incoherent",
            Self::Sweep => "sweep",
            Self::Compare => "compare",
            Self::Cavity => "cavity",
            Self::SgCheck => "sg_check",
            Self::Scatter => "scatter",
        }
    }

    pub fn parse(name: &str) -> Result<Self, CliError> {
        serde_json::from_value(serde_json::Value::String(name.to_string()))
            .map_err(|_| CliError::Config(format!("unknown experiment {name:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Explicit per-configuration system Hamiltonians.
    Inline {
        hamiltonians: Vec<MatrixJson>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<Vec<String>>,
        device_state: Vec<ComplexPair>,
    },
    /// Arbitrary joint Hamiltonian on system (x) device.
    Joint { h_sd: MatrixJson, d_sys: usize, d_dev: usize, device_state: Vec<ComplexPair> },
    Cavity { g: f64, n_max: usize, device_state: Vec<ComplexPair> },
    Sg { g: f64, momentum_grid: Vec<[f64; 2]>, directions: Vec<[f64; 2]>, device_state: Vec<ComplexPair> },
    Scatterer {
        step_height: f64,
        half_width: f64,
        #[serde(default = "unit_mass")]
        mass: f64,
        box_half_length: f64,
        grid_points: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        arrangement: Option<ArrangementJson>,
        /// Left/right device weights; one half each by default.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<[f64; 2]>,
    },
}

fn unit_mass() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrangementJson {
    SingleStep,
    MirroredPair,
}

impl From<ArrangementJson> for Arrangement {
    fn from(a: ArrangementJson) -> Self {
        match a {
            ArrangementJson::SingleStep => Arrangement::SingleStep,
            ArrangementJson::MirroredPair => Arrangement::MirroredPair,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    Basis(usize),
    Ket(Vec<ComplexPair>),
    Density(MatrixJson),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepperJson {
    Exact,
    Euler,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeJson {
    Selective,
    Nonselective,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub total_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stepper: Option<StepperJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement_mode: Option<ModeJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    pub n_traj: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json_path: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<InitialState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloSection>,
    /// Rotation angles for `sg_check`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("at `{path}`: {}", e.inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn cfg_err(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("at `{path}`: {msg}"))
}

pub(crate) fn complex_vec(v: &[ComplexPair], path: &str) -> Result<Vec<C64>, CliError> {
    v.iter()
        .enumerate()
        .map(|(i, [re, im])| {
            if re.is_finite() && im.is_finite() {
                Ok(C64::new(*re, *im))
            } else {
                Err(cfg_err(&format!("{path}[{i}]"), "non-finite entry"))
            }
        })
        .collect()
}

pub(crate) fn complex_matrix(m: &MatrixJson, path: &str) -> Result<ComplexMatrix, CliError> {
    let rows = m.len();
    if rows == 0 {
        return Err(cfg_err(path, "empty matrix"));
    }
    let cols = m[0].len();
    let mut out = ComplexMatrix::zeros(rows, cols);
    for (r, row) in m.iter().enumerate() {
        if row.len() != cols {
            return Err(cfg_err(&format!("{path}[{r}]"), format!("row has {} entries, expected {cols}", row.len())));
        }
        for (c, z) in complex_vec(row, &format!("{path}[{r}]"))?.into_iter().enumerate() {
            out[(r, c)] = z;
        }
    }
    Ok(out)
}

fn hermitian(m: &MatrixJson, path: &str) -> Result<HermitianOperator, CliError> {
    HermitianOperator::new(complex_matrix(m, path)?).map_err(|e| cfg_err(path, e))
}

fn device_state(v: &[ComplexPair], path: &str) -> Result<DeviceState, CliError> {
    DeviceState::new(complex_vec(v, path)?).map_err(|e| cfg_err(path, e))
}

/// A model resolved into engine types.
#[derive(Clone, Debug)]
pub struct ResolvedModel {
    /// Per-configuration system Hamiltonians, absent for generic joint input.
    pub device: Option<DeviceModel>,
    pub joint: JointModel,
    pub phi: DeviceState,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        use ExperimentKind::*;
        let need_protocol = |field: &str| -> Result<&ProtocolSection, CliError> {
            self.protocol.as_ref().ok_or_else(|| cfg_err("protocol", format!("required for {field}")))
        };
        match self.experiment {
            Zeno | Incoherent => {
                let p = need_protocol(self.experiment.name())?;
                if p.n_steps.is_none() {
                    return Err(cfg_err("protocol.n_steps", "required"));
                }
            }
            Sweep | Compare => {
                let p = need_protocol(self.experiment.name())?;
                match &p.n_list {
                    None => return Err(cfg_err("protocol.n_list", "required")),
                    Some(l) if l.is_empty() || l.windows(2).any(|w| w[0] >= w[1]) || l[0] == 0 => {
                        return Err(cfg_err("protocol.n_list", "must be strictly ascending positive counts"))
                    }
                    _ => {}
                }
            }
            Cavity => {
                if !matches!(self.model, ModelConfig::Cavity { .. }) {
                    return Err(cfg_err("model.kind", "cavity experiment needs a cavity model"));
                }
            }
            SgCheck => {
                if !matches!(self.model, ModelConfig::Sg { .. }) {
                    return Err(cfg_err("model.kind", "sg_check experiment needs an sg model"));
                }
            }
            Scatter => {
                if !matches!(self.model, ModelConfig::Scatterer { .. }) {
                    return Err(cfg_err("model.kind", "scatter experiment needs a scatterer model"));
                }
            }
        }
        if self.experiment == Incoherent && self.monte_carlo.is_none() {
            return Err(cfg_err("monte_carlo", "required for incoherent"));
        }
        if matches!(self.experiment, Incoherent | Compare) && matches!(self.model, ModelConfig::Joint { .. }) {
            return Err(cfg_err("model.kind", "incoherent protocol needs per-configuration Hamiltonians"));
        }
        if let Some(p) = &self.protocol {
            self.protocol_config(p, p.n_steps.unwrap_or(1))?;
        }
        if let Some(mc) = &self.monte_carlo {
            if mc.n_traj < 2 {
                return Err(cfg_err("monte_carlo.n_traj", "must be at least 2"));
            }
        }
        if self.experiment != Scatter {
            let resolved = self.resolve_model()?;
            self.initial_system_state(resolved.joint.d_sys())?;
        } else {
            self.scatterer_spec(true)?;
        }
        Ok(())
    }

    pub fn protocol_config(&self, p: &ProtocolSection, n_steps: usize) -> Result<ProtocolConfig, CliError> {
        let stepper = match p.stepper.unwrap_or(StepperJson::Exact) {
            StepperJson::Exact => Stepper::Exact,
            StepperJson::Euler => Stepper::Euler,
        };
        let mode = match p.measurement_mode.unwrap_or(ModeJson::Selective) {
            ModeJson::Selective => MeasurementMode::Selective,
            ModeJson::Nonselective => MeasurementMode::Nonselective,
        };
        Ok(ProtocolConfig::new(p.total_time, n_steps)
            .map_err(|e| cfg_err("protocol", e))?
            .with_stepper(stepper)
            .with_mode(mode))
    }

    pub fn scatterer_spec(&self, for_spectrum: bool) -> Result<ScattererSpec, CliError> {
        match &self.model {
            ModelConfig::Scatterer { step_height, half_width, mass, box_half_length, grid_points, .. } => {
                let build = if for_spectrum { ScattererSpec::new } else { ScattererSpec::for_dynamics };
                build(*step_height, *half_width, *mass, *box_half_length, *grid_points).map_err(|e| cfg_err("model", e))
            }
            _ => Err(cfg_err("model.kind", "not a scatterer model")),
        }
    }

    pub fn resolve_model(&self) -> Result<ResolvedModel, CliError> {
        match &self.model {
            ModelConfig::Inline { hamiltonians, labels, device_state: amps } => {
                let hams = hamiltonians
                    .iter()
                    .enumerate()
                    .map(|(j, m)| hermitian(m, &format!("model.hamiltonians[{j}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                let labels = match labels {
                    Some(l) => l.iter().map(ClassicalLabel::new).collect(),
                    None => (0..hams.len()).map(|j| ClassicalLabel::new(format!("chi{j}"))).collect(),
                };
                let dev = DeviceModel::new(labels, hams).map_err(|e| cfg_err("model", e))?;
                let phi = device_state(amps, "model.device_state")?;
                if phi.dim() != dev.d_dev() {
                    return Err(cfg_err("model.device_state", format!("expected {} amplitudes", dev.d_dev())));
                }
                Ok(ResolvedModel { joint: build_joint_hamiltonian(&dev), device: Some(dev), phi })
            }
            ModelConfig::Joint { h_sd, d_sys, d_dev, device_state: amps } => {
                let h = hermitian(h_sd, "model.h_sd")?;
                let joint = JointModel::generic(h, *d_sys, *d_dev).map_err(|e| cfg_err("model", e))?;
                let phi = device_state(amps, "model.device_state")?;
                if phi.dim() != *d_dev {
                    return Err(cfg_err("model.device_state", format!("expected {d_dev} amplitudes")));
                }
                Ok(ResolvedModel { device: None, joint, phi })
            }
            ModelConfig::Cavity { g, n_max, device_state: amps } => {
                let dev = cases::cavity_model(*g, *n_max).map_err(|e| cfg_err("model", e))?;
                let phi = device_state(amps, "model.device_state")?;
                if phi.dim() != 2 {
                    return Err(cfg_err("model.device_state", "expected 2 amplitudes (e, g)"));
                }
                Ok(ResolvedModel { joint: build_joint_hamiltonian(&dev), device: Some(dev), phi })
            }
            ModelConfig::Sg { .. } => {
                let spec = self.sg_spec()?;
                let (dev, joint) = cases::sg_model(&spec).map_err(|e| cfg_err("model", e))?;
                Ok(ResolvedModel { device: Some(dev), joint, phi: spec.amplitudes })
            }
            ModelConfig::Scatterer { weights, .. } => {
                let spec = self.scatterer_spec(false)?;
                let dev = cases::scatterer_device(&spec).map_err(|e| cfg_err("model", e))?;
                let [wl, wr] = weights.unwrap_or([0.5, 0.5]);
                let phi = DeviceState::from_weights(&[wl, wr]).map_err(|e| cfg_err("model.weights", e))?;
                Ok(ResolvedModel { joint: build_joint_hamiltonian(&dev), device: Some(dev), phi })
            }
        }
    }

    pub fn sg_spec(&self) -> Result<SgSpec, CliError> {
        match &self.model {
            ModelConfig::Sg { g, momentum_grid, directions, device_state: amps } => {
                let phi = device_state(amps, "model.device_state")?;
                SgSpec::new(*g, momentum_grid.clone(), directions.clone(), phi).map_err(|e| cfg_err("model", e))
            }
            _ => Err(cfg_err("model.kind", "not an sg model")),
        }
    }

    /// Defaults to the first basis state.
    pub fn initial_system_state(&self, d_sys: usize) -> Result<DensityMatrix, CliError> {
        let path = "initial_state";
        match self.initial_state.as_ref().unwrap_or(&InitialState::Basis(0)) {
            InitialState::Basis(k) => Ket::basis(d_sys, *k).map(|k| DensityMatrix::pure(&k)).map_err(|e| cfg_err(path, e)),
            InitialState::Ket(v) => {
                let amps = complex_vec(v, "initial_state.ket")?;
                if amps.len() != d_sys {
                    return Err(cfg_err("initial_state.ket", format!("expected {d_sys} amplitudes")));
                }
                Ket::new(amps).map(|k| DensityMatrix::pure(&k)).map_err(|e| cfg_err(path, e))
            }
            InitialState::Density(m) => {
                let m = complex_matrix(m, "initial_state.density")?;
                if m.nrows() != d_sys {
                    return Err(cfg_err("initial_state.density", format!("expected {d_sys}x{d_sys}")));
                }
                DensityMatrix::new(m).map_err(|e| cfg_err("initial_state.density", e))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "experiment": "zeno",
        "model": {
            "kind": "inline",
            "hamiltonians": [
                [[[0, 0], [1, 0]], [[1, 0], [0, 0]]],
                [[[1, 0], [0, 0]], [[0, 0], [-1, 0]]]
            ],
            "device_state": [[1, 0], [1, 0]]
        },
        "protocol": {"total_time": 1.0, "n_steps": 100}
    }"#;

    #[test]
    fn minimal_config_round_trips() {
        let cfg = parse_config(MINIMAL).unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let again = parse_config(&text).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(text, serde_json::to_string_pretty(&again).unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        v["bogus"] = serde_json::json!(1);
        let err = parse_config(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");

        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        v["protocol"]["stepz"] = serde_json::json!("exact");
        let err = parse_config(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("protocol") && err.contains("stepz"), "{err}");

        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        v["model"]["extra"] = serde_json::json!(0);
        let err = parse_config(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("extra"), "{err}");
    }

    #[test]
    fn zero_hamiltonians_accepted() {
        let text = MINIMAL.replace("[1, 0]], [[1, 0]", "[0, 0]], [[0, 0]").replace(
            "[[[1, 0], [0, 0]], [[0, 0], [-1, 0]]]",
            "[[[0, 0], [0, 0]], [[0, 0], [0, 0]]]",
        );
        let cfg = parse_config(&text).unwrap();
        let model = cfg.resolve_model().unwrap();
        assert!(model.joint.hamiltonian().matrix().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn non_hermitian_rejected_with_path() {
        let text = MINIMAL.replacen("[[[0, 0], [1, 0]], [[1, 0], [0, 0]]]", "[[[0, 0], [1, 0]], [[2, 0], [0, 0]]]", 1);
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("model.hamiltonians[0]") && err.contains("Hermitian"), "{err}");
    }

    #[test]
    fn experiment_specific_requirements() {
        let text = MINIMAL.replace("\"n_steps\": 100", "\"n_list\": [10, 20]");
        assert!(parse_config(&text).unwrap_err().to_string().contains("n_steps"));
        let text = MINIMAL.replace("\"zeno\"", "\"sweep\"");
        assert!(parse_config(&text).unwrap_err().to_string().contains("n_list"));
        let text = MINIMAL.replace("\"zeno\"", "\"incoherent\"");
        assert!(parse_config(&text).unwrap_err().to_string().contains("monte_carlo"));
        let text = MINIMAL.replace("\"zeno\"", "\"scatter\"");
        assert!(parse_config(&text).is_err());
        let text = MINIMAL.replace("\"zeno\"", "\"nope\"");
        assert!(parse_config(&text).unwrap_err().to_string().contains("experiment"));
    }
}
