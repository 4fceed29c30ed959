//! Device models, the joint system-device Hamiltonian and the effective
//! Hamiltonian seen by a system when the device is held in `|phi>`.

use std::collections::HashSet;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::qmath::{tensor, ComplexMatrix, HermitianOperator, Ket, C64, ZERO};

/// A classical parameter value, e.g. a field direction or a position.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalLabel {
    pub name: String,
    pub payload: Option<Vec<f64>>,
}

impl ClassicalLabel {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), payload: None }
    }

    pub fn with_payload(name: impl Into<String>, payload: Vec<f64>) -> Self {
        Self { name: name.into(), payload: Some(payload) }
    }
}

/// Finite set of classical device configurations, each with the system
/// Hamiltonian it induces. Classical state `j` is the `j`-th standard basis
/// vector of the device space.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceModel {
    labels: Vec<ClassicalLabel>,
    hamiltonians: Vec<HermitianOperator>,
    d_sys: usize,
}

impl DeviceModel {
    pub fn new(labels: Vec<ClassicalLabel>, hamiltonians: Vec<HermitianOperator>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument("device needs at least one classical state".into()));
        }
        if labels.len() != hamiltonians.len() {
            return Err(Error::DimensionMismatch { expected: labels.len(), found: hamiltonians.len() });
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.name.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate classical label {:?}", l.name)));
            }
        }
        let d_sys = hamiltonians[0].dim();
        for h in &hamiltonians {
            if h.dim() != d_sys {
                return Err(Error::DimensionMismatch { expected: d_sys, found: h.dim() });
            }
        }
        Ok(Self { labels, hamiltonians, d_sys })
    }

    /// Labels `chi0, chi1, ...` for each Hamiltonian.
    pub fn from_hamiltonians(hamiltonians: Vec<HermitianOperator>) -> Result<Self> {
        let labels = (0..hamiltonians.len()).map(|j| ClassicalLabel::new(format!("chi{j}"))).collect();
        Self::new(labels, hamiltonians)
    }

    pub fn labels(&self) -> &[ClassicalLabel] {
        &self.labels
    }

    pub fn hamiltonians(&self) -> &[HermitianOperator] {
        &self.hamiltonians
    }

    pub fn d_sys(&self) -> usize {
        self.d_sys
    }

    pub fn d_dev(&self) -> usize {
        self.labels.len()
    }
}

/// Pure device state `sum_j alpha_j |chi_j>`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceState {
    ket: Ket,
}

impl DeviceState {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        Ok(Self { ket: Ket::new(amplitudes)? })
    }

    pub fn from_ket(ket: Ket) -> Self {
        Self { ket }
    }

    pub fn classical(m: usize, j: usize) -> Result<Self> {
        Ok(Self { ket: Ket::basis(m, j)? })
    }

    pub fn equal_superposition(m: usize) -> Result<Self> {
        Self::new(vec![C64::new(1.0, 0.0); m])
    }

    /// Real amplitudes `sqrt(p_j)` for the given weights.
    pub fn from_weights(p: &[f64]) -> Result<Self> {
        Self::new(p.iter().map(|&w| C64::new(w.max(0.0).sqrt(), 0.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.ket.dim()
    }

    pub fn ket(&self) -> &Ket {
        &self.ket
    }

    pub fn amplitudes(&self) -> &[C64] {
        self.ket.amplitudes().as_slice()
    }
}

/// The joint Hamiltonian on system (x) device.
#[derive(Clone, Debug)]
pub struct JointModel {
    h_sd: HermitianOperator,
    d_sys: usize,
    d_dev: usize,
    block_diagonal: bool,
    source: Option<Arc<DeviceModel>>,
}

impl JointModel {
    /// `H_SD = sum_j H_S(chi_j) (x) |chi_j><chi_j|`.
    pub fn from_device(dev: &DeviceModel) -> Self {
        let (d_sys, m) = (dev.d_sys(), dev.d_dev());
        let mut h = DMatrix::zeros(d_sys * m, d_sys * m);
        for (j, hs) in dev.hamiltonians().iter().enumerate() {
            let mut proj = DMatrix::zeros(m, m);
            proj[(j, j)] = C64::new(1.0, 0.0);
            h += tensor(hs.matrix(), &proj);
        }
        Self {
            h_sd: HermitianOperator::symmetrized(h),
            d_sys,
            d_dev: m,
            block_diagonal: true,
            source: Some(Arc::new(dev.clone())),
        }
    }

    /// Arbitrary Hermitian joint Hamiltonian. Block-diagonality in the device
    /// index is detected and recorded, not required.
    pub fn generic(h_sd: HermitianOperator, d_sys: usize, d_dev: usize) -> Result<Self> {
        if h_sd.dim() != d_sys * d_dev {
            return Err(Error::DimensionMismatch { expected: d_sys * d_dev, found: h_sd.dim() });
        }
        let block_diagonal = is_device_block_diagonal(h_sd.matrix(), d_sys, d_dev);
        Ok(Self { h_sd, d_sys, d_dev, block_diagonal, source: None })
    }

    pub fn hamiltonian(&self) -> &HermitianOperator {
        &self.h_sd
    }

    pub fn d_sys(&self) -> usize {
        self.d_sys
    }

    pub fn d_dev(&self) -> usize {
        self.d_dev
    }

    pub fn dim(&self) -> usize {
        self.d_sys * self.d_dev
    }

    pub fn is_block_diagonal(&self) -> bool {
        self.block_diagonal
    }

    pub fn source(&self) -> Option<&DeviceModel> {
        self.source.as_deref()
    }
}

pub fn build_joint_hamiltonian(dev: &DeviceModel) -> JointModel {
    JointModel::from_device(dev)
}

fn is_device_block_diagonal(h: &ComplexMatrix, d_sys: usize, d_dev: usize) -> bool {
    (0..d_sys * d_dev).all(|r| {
        (0..d_sys * d_dev).all(|c| r % d_dev == c % d_dev || h[(r, c)] == ZERO)
    })
}

/// Classical weights `p_j = |<chi_j|phi>|^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    p: Vec<f64>,
}

impl WeightVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidArgument("weights must be nonempty".into()));
        }
        if p.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
            return Err(Error::InvalidArgument(format!("weights outside [0, 1]: {p:?}")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { p })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

pub fn classical_weights(phi: &DeviceState) -> WeightVector {
    WeightVector { p: phi.amplitudes().iter().map(|a| a.norm_sqr()).collect() }
}

/// `<phi| H_SD |phi>`, a system operator.
pub fn effective_hamiltonian(joint: &JointModel, phi: &DeviceState) -> Result<HermitianOperator> {
    let (d_sys, m) = (joint.d_sys(), joint.d_dev());
    if phi.dim() != m {
        return Err(Error::DimensionMismatch { expected: m, found: phi.dim() });
    }
    Ok(HermitianOperator::symmetrized(device_expectation(joint.hamiltonian().matrix(), phi.amplitudes(), d_sys, m)))
}

/// `(<phi| M |phi>)_{st} = sum_{jk} conj(alpha_j) alpha_k M_{(s,j),(t,k)}`.
pub(crate) fn device_expectation(h: &ComplexMatrix, alpha: &[C64], d_sys: usize, m: usize) -> ComplexMatrix {
    DMatrix::from_fn(d_sys, d_sys, |s, t| {
        let mut acc = ZERO;
        for (j, aj) in alpha.iter().enumerate() {
            for (k, ak) in alpha.iter().enumerate() {
                acc += aj.conj() * ak * h[(s * m + j, t * m + k)];
            }
        }
        acc
    })
}

/// `sum_j p_j H_S(chi_j)`; agrees with [`effective_hamiltonian`] for
/// block-diagonal joint models.
pub fn weighted_hamiltonian(dev: &DeviceModel, weights: &WeightVector) -> Result<HermitianOperator> {
    if weights.len() != dev.d_dev() {
        return Err(Error::DimensionMismatch { expected: dev.d_dev(), found: weights.len() });
    }
    let mut acc = DMatrix::zeros(dev.d_sys(), dev.d_sys());
    for (p, h) in weights.as_slice().iter().zip(dev.hamiltonians()) {
        acc += h.matrix().scale(*p);
    }
    Ok(HermitianOperator::symmetrized(acc))
}
