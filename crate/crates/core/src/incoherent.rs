//! Incoherent protocol: the device is re-prepared every step in a classical
//! state drawn with probability `p_j = |<chi_j|phi>|^2`.
//!
//! Channels act on column-stacked density matrices, `vec(rho)[i + j d] =
//! rho[(i, j)]`, which coincides with nalgebra's column-major storage.

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{DeviceModel, WeightVector};
use crate::qmath::{
    conjugate, trace_distance, trace_norm_distance, unitarity_defect, unitary_propagator, ComplexMatrix,
    DensityMatrix, HermitianOperator, Ket, Tolerances, C64, I, ONE, ZERO,
};

/// Linear map on `d x d` matrices stored as a `d^2 x d^2` superoperator.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumChannel {
    d: usize,
    superop: ComplexMatrix,
}

fn vec_of(m: &ComplexMatrix) -> ComplexMatrix {
    let d = m.nrows();
    ComplexMatrix::from_column_slice(d * d, 1, m.as_slice())
}

fn unvec(v: &ComplexMatrix, d: usize) -> ComplexMatrix {
    ComplexMatrix::from_column_slice(d, d, v.as_slice())
}

fn matrix_unit(d: usize, i: usize, j: usize) -> ComplexMatrix {
    let mut e = DMatrix::zeros(d, d);
    e[(i, j)] = ONE;
    e
}

impl QuantumChannel {
    pub fn identity(d: usize) -> Self {
        Self { d, superop: DMatrix::identity(d * d, d * d) }
    }

    /// Build from the action on matrix units: column `i + j d` is
    /// `vec(map(E_ij))`.
    pub fn from_map<F: Fn(&ComplexMatrix) -> ComplexMatrix>(d: usize, map: F) -> Self {
        let mut superop = DMatrix::zeros(d * d, d * d);
        for j in 0..d {
            for i in 0..d {
                let out = map(&matrix_unit(d, i, j));
                superop.set_column(i + j * d, &vec_of(&out).column(0));
            }
        }
        Self { d, superop }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn superoperator(&self) -> &ComplexMatrix {
        &self.superop
    }

    pub fn apply_matrix(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        if rho.nrows() != self.d || rho.ncols() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, found: rho.nrows() });
        }
        Ok(unvec(&(&self.superop * vec_of(rho)), self.d))
    }

    /// Apply to a state. Only valid for CPTP channels, which is everything
    /// this module constructs.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        Ok(DensityMatrix::from_cptp_output(self.apply_matrix(rho.matrix())?))
    }

    /// `self` raised to the `n`-th power by repeated squaring.
    pub fn power(&self, n: usize) -> Self {
        let mut result = Self::identity(self.d);
        let mut base = self.clone();
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                result.superop = &base.superop * &result.superop;
            }
            base.superop = &base.superop * &base.superop;
            k >>= 1;
        }
        result
    }
}

pub fn channel_from_unitary(u: &ComplexMatrix) -> Result<QuantumChannel> {
    let defect = unitarity_defect(u)?;
    if defect > Tolerances::DEFAULT.unitarity {
        return Err(Error::NotUnitary(defect));
    }
    Ok(QuantumChannel::from_map(u.nrows(), |e| conjugate(u, e)))
}

/// `rho -> sum_j p_j U_j rho U_j^dagger`.
pub fn exact_average_channel(weights: &WeightVector, unitaries: &[ComplexMatrix]) -> Result<QuantumChannel> {
    if weights.len() != unitaries.len() {
        return Err(Error::DimensionMismatch { expected: weights.len(), found: unitaries.len() });
    }
    let d = unitaries[0].nrows();
    let mut superop = DMatrix::zeros(d * d, d * d);
    for (p, u) in weights.as_slice().iter().zip(unitaries) {
        if u.nrows() != d {
            return Err(Error::DimensionMismatch { expected: d, found: u.nrows() });
        }
        superop += channel_from_unitary(u)?.superop.scale(*p);
    }
    Ok(QuantumChannel { d, superop })
}

/// `c2` acts first.
pub fn compose(c1: &QuantumChannel, c2: &QuantumChannel) -> Result<QuantumChannel> {
    if c1.d != c2.d {
        return Err(Error::DimensionMismatch { expected: c1.d, found: c2.d });
    }
    Ok(QuantumChannel { d: c1.d, superop: &c1.superop * &c2.superop })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelDistance {
    /// `|| S1 - S2 ||_F / d`.
    pub frobenius: f64,
    /// Max trace distance between outputs over `d^2` pure probe states
    /// (`|i>`, `(|i> + |j>)/sqrt 2`, `(|i> + i|j>)/sqrt 2`).
    pub max_probe_trace_distance: f64,
}

fn probe_states(d: usize) -> Vec<DensityMatrix> {
    let mut probes = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in i..d {
            let mut amps = vec![ZERO; d];
            amps[i] = ONE;
            if i == j {
                probes.push(DensityMatrix::pure(&Ket::new(amps).expect("basis ket")));
                continue;
            }
            for phase in [ONE, I] {
                let mut a = amps.clone();
                a[j] = phase;
                probes.push(DensityMatrix::pure(&Ket::new(a).expect("probe ket")));
            }
        }
    }
    probes
}

pub fn channel_distance(c1: &QuantumChannel, c2: &QuantumChannel) -> Result<ChannelDistance> {
    if c1.d != c2.d {
        return Err(Error::DimensionMismatch { expected: c1.d, found: c2.d });
    }
    let frobenius = (&c1.superop - &c2.superop).norm() / c1.d as f64;
    let mut max_probe: f64 = 0.0;
    for probe in probe_states(c1.d) {
        let a = c1.apply_matrix(probe.matrix())?;
        let b = c2.apply_matrix(probe.matrix())?;
        max_probe = max_probe.max(trace_norm_distance(&a, &b)?);
    }
    Ok(ChannelDistance { frobenius, max_probe_trace_distance: max_probe })
}

/// Deterministic draw of `n` classical indices from `weights`.
pub fn sample_sequence(weights: &WeightVector, n: usize, seed: u64) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(weights.as_slice())
        .map_err(|e| Error::InvalidArgument(format!("cannot sample from weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| dist.sample(&mut rng)).collect())
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub sequence: Vec<usize>,
    pub final_state: DensityMatrix,
}

/// Applies `U(sequence[0])` first and `U(sequence[N-1])` last.
pub fn run_trajectory(rho_s0: &DensityMatrix, sequence: &[usize], unitaries: &[ComplexMatrix]) -> Result<TrajectoryRecord> {
    let mut rho = rho_s0.matrix().clone();
    for &k in sequence {
        let u = unitaries.get(k).ok_or(Error::IndexOutOfRange { index: k, len: unitaries.len() })?;
        if u.nrows() != rho.nrows() {
            return Err(Error::DimensionMismatch { expected: rho.nrows(), found: u.nrows() });
        }
        rho = conjugate(u, &rho);
    }
    Ok(TrajectoryRecord { sequence: sequence.to_vec(), final_state: DensityMatrix::from_cptp_output(rho) })
}

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trajectory `index` under master seed `seed`.
pub fn trajectory_seed(seed: u64, index: u64) -> u64 {
    seed ^ mix64(index)
}

#[derive(Clone, Debug)]
pub struct MonteCarloResult {
    pub averaged_state: DensityMatrix,
    /// Sample standard deviation of the trajectories' trace distances to
    /// the mean, divided by `sqrt(M)`.
    pub stderr_estimate: f64,
}

/// Averages `n_traj` independent trajectories. Trajectories run in
/// parallel; the reduction is sequential in trajectory order, so the result
/// is bitwise reproducible for a given seed.
pub fn monte_carlo_average(
    rho_s0: &DensityMatrix,
    weights: &WeightVector,
    unitaries: &[ComplexMatrix],
    n_steps: usize,
    n_traj: usize,
    seed: u64,
) -> Result<MonteCarloResult> {
    if n_traj < 2 {
        return Err(Error::InvalidArgument("need at least two trajectories".into()));
    }
    if weights.len() != unitaries.len() {
        return Err(Error::DimensionMismatch { expected: weights.len(), found: unitaries.len() });
    }
    let finals: Vec<ComplexMatrix> = (0..n_traj as u64)
        .into_par_iter()
        .map(|t| {
            let seq = sample_sequence(weights, n_steps, trajectory_seed(seed, t))?;
            Ok(run_trajectory(rho_s0, &seq, unitaries)?.final_state.into_matrix())
        })
        .collect::<Result<_>>()?;
    let d = rho_s0.dim();
    let mut sum = DMatrix::<C64>::zeros(d, d);
    for f in &finals {
        sum += f;
    }
    let mean = DensityMatrix::from_cptp_output(sum.unscale(n_traj as f64));
    let dists = finals
        .iter()
        .map(|f| trace_norm_distance(f, mean.matrix()))
        .collect::<Result<Vec<f64>>>()?;
    let m = n_traj as f64;
    let avg = dists.iter().sum::<f64>() / m;
    let var = dists.iter().map(|x| (x - avg).powi(2)).sum::<f64>() / (m - 1.0);
    Ok(MonteCarloResult { averaged_state: mean, stderr_estimate: var.sqrt() / m.sqrt() })
}

/// `exp(-i H_S(chi_j) dt)` for each classical configuration.
pub fn step_unitaries(dev: &DeviceModel, dt: f64) -> Result<Vec<ComplexMatrix>> {
    dev.hamiltonians().iter().map(|h| unitary_propagator(h, dt)).collect()
}

pub fn effective_unitary_channel(h_eff: &HermitianOperator, t: f64) -> Result<QuantumChannel> {
    channel_from_unitary(&unitary_propagator(h_eff, t)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelSweepPoint {
    pub n_steps: usize,
    pub dt: f64,
    pub distance: ChannelDistance,
}

/// For each `N`, distance between the `N`-fold averaged channel at
/// `dt = T/N` and `exp(-i H_eff T)` as a channel.
pub fn channel_convergence(
    dev: &DeviceModel,
    weights: &WeightVector,
    total_time: f64,
    n_list: &[usize],
) -> Result<Vec<ChannelSweepPoint>> {
    let h_eff = crate::model::weighted_hamiltonian(dev, weights)?;
    let target = effective_unitary_channel(&h_eff, total_time)?;
    n_list
        .iter()
        .map(|&n| {
            if n == 0 {
                return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
            }
            let dt = total_time / n as f64;
            let avg = exact_average_channel(weights, &step_unitaries(dev, dt)?)?;
            let distance = channel_distance(&avg.power(n), &target)?;
            Ok(ChannelSweepPoint { n_steps: n, dt, distance })
        })
        .collect()
}

/// Trace distance between a state pushed through the `N`-fold averaged
/// channel and the same state under `exp(-i H_eff T)`.
pub fn averaged_state_error(
    rho_s0: &DensityMatrix,
    dev: &DeviceModel,
    weights: &WeightVector,
    total_time: f64,
    n_steps: usize,
) -> Result<(DensityMatrix, f64)> {
    let dt = total_time / n_steps as f64;
    let avg = exact_average_channel(weights, &step_unitaries(dev, dt)?)?.power(n_steps);
    let out = avg.apply(rho_s0)?;
    let h_eff = crate::model::weighted_hamiltonian(dev, weights)?;
    let reference = crate::qmath::evolve_unitary(&h_eff, total_time, rho_s0)?;
    let err = trace_distance(&out, &reference)?;
    Ok((out, err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::testing::{random_density, random_unitary};
    use crate::qmath::{commutator, max_abs, pauli_x, pauli_z, trace};
    use rand::Rng;

    fn herm(m: ComplexMatrix) -> HermitianOperator {
        HermitianOperator::new(m).unwrap()
    }

    fn xz_device() -> DeviceModel {
        DeviceModel::from_hamiltonians(vec![herm(pauli_x()), herm(pauli_z())]).unwrap()
    }

    fn half() -> WeightVector {
        WeightVector::new(vec![0.5, 0.5]).unwrap()
    }

    fn ket(amps: &[C64]) -> DensityMatrix {
        DensityMatrix::pure(&Ket::new(amps.to_vec()).unwrap())
    }

    #[test]
    fn identity_and_bit_flip_channels() {
        let id = channel_from_unitary(&crate::qmath::identity(3)).unwrap();
        assert_eq!(id, QuantumChannel::identity(3));
        let flip = channel_from_unitary(&pauli_x()).unwrap();
        let out = flip.apply(&ket(&[ONE, ZERO])).unwrap();
        assert!(max_abs(&(out.matrix() - ket(&[ZERO, ONE]).matrix())) < 1e-15);
    }

    #[test]
    fn unitary_channel_matches_conjugation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let u = random_unitary(&mut rng, 3);
        let ch = channel_from_unitary(&u).unwrap();
        for _ in 0..10 {
            let rho = random_density(&mut rng, 3);
            let got = ch.apply(&rho).unwrap();
            assert!(max_abs(&(got.matrix() - &u * rho.matrix() * u.adjoint())) < 1e-12);
        }
    }

    #[test]
    fn rejects_non_unitary() {
        let m = pauli_x().scale(1.1);
        assert!(matches!(channel_from_unitary(&m), Err(Error::NotUnitary(_))));
    }

    #[test]
    fn dephasing_mixture() {
        let ch = exact_average_channel(&half(), &[crate::qmath::identity(2), pauli_z()]).unwrap();
        let out = ch.apply(&ket(&[ONE, ONE])).unwrap();
        assert!(max_abs(&(out.matrix() - crate::qmath::identity(2).scale(0.5))) < 1e-15);
        let single = exact_average_channel(&WeightVector::new(vec![1.0]).unwrap(), &[pauli_x()]).unwrap();
        assert_eq!(single, channel_from_unitary(&pauli_x()).unwrap());
        assert!(exact_average_channel(&half(), &[pauli_x()]).is_err());
    }

    #[test]
    fn average_channel_first_order_generator() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let rho = random_density(&mut rng, 2);
        let dev = xz_device();
        let h_eff = crate::model::weighted_hamiltonian(&dev, &half()).unwrap();
        let remainder = |dt: f64| {
            let ch = exact_average_channel(&half(), &step_unitaries(&dev, dt).unwrap()).unwrap();
            let got = ch.apply_matrix(rho.matrix()).unwrap() - rho.matrix();
            let first = commutator(h_eff.matrix(), rho.matrix()) * C64::new(0.0, -dt);
            max_abs(&(got - first))
        };
        let (a, b, c) = (remainder(0.02), remainder(0.01), remainder(0.005));
        assert!((a / b - 4.0).abs() < 0.2 && (b / c - 4.0).abs() < 0.2, "{a} {b} {c}");
    }

    #[test]
    fn composition_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let c = channel_from_unitary(&random_unitary(&mut rng, 2)).unwrap();
        assert_eq!(compose(&QuantumChannel::identity(2), &c).unwrap(), c);
        let x = channel_from_unitary(&pauli_x()).unwrap();
        let xx = compose(&x, &x).unwrap();
        assert!(max_abs(&(xx.superoperator() - QuantumChannel::identity(2).superoperator())) < 1e-15);

        let (u1, u2) = (random_unitary(&mut rng, 3), random_unitary(&mut rng, 3));
        let composed = compose(&channel_from_unitary(&u2).unwrap(), &channel_from_unitary(&u1).unwrap()).unwrap();
        let product = channel_from_unitary(&(&u2 * &u1)).unwrap();
        assert!(max_abs(&(composed.superoperator() - product.superoperator())) < 1e-12);
        assert!(compose(&x, &QuantumChannel::identity(3)).is_err());

        let p5 = c.power(5);
        let mut manual = QuantumChannel::identity(2);
        for _ in 0..5 {
            manual = compose(&c, &manual).unwrap();
        }
        assert!(max_abs(&(p5.superoperator() - manual.superoperator())) < 1e-13);
    }

    #[test]
    fn channels_preserve_trace_and_hermiticity() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let us: Vec<_> = (0..3).map(|_| random_unitary(&mut rng, 3)).collect();
        let w = WeightVector::new(vec![0.2, 0.5, 0.3]).unwrap();
        let ch = exact_average_channel(&w, &us).unwrap();
        for _ in 0..20 {
            let rho = random_density(&mut rng, 3);
            let out = ch.apply_matrix(rho.matrix()).unwrap();
            assert!((trace(&out) - ONE).norm() <= 1e-10);
            assert!(max_abs(&(&out - out.adjoint())) <= 1e-10);
            let direct = us
                .iter()
                .zip(w.as_slice())
                .fold(DMatrix::zeros(3, 3), |acc, (u, p)| acc + (u * rho.matrix() * u.adjoint()).scale(*p));
            assert!(max_abs(&(out - direct)) <= 1e-12);
        }
    }

    #[test]
    fn channel_distance_examples() {
        let x = channel_from_unitary(&pauli_x()).unwrap();
        let id = QuantumChannel::identity(2);
        let zero = channel_distance(&x, &x).unwrap();
        assert_eq!(zero.frobenius, 0.0);
        assert_eq!(zero.max_probe_trace_distance, 0.0);
        // superop of sigma_x conjugation permutes vec indices 0<->3, 1<->2: the
        // difference from identity has eight unit entries, so ||.||_F = sqrt 8
        let d = channel_distance(&id, &x).unwrap();
        assert!((d.frobenius - 8f64.sqrt() / 2.0).abs() < 1e-15);
        assert!((d.max_probe_trace_distance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_deterministic_and_fair() {
        let w = WeightVector::new(vec![1.0, 0.0]).unwrap();
        assert!(sample_sequence(&w, 100, 9).unwrap().iter().all(|&k| k == 0));
        let a = sample_sequence(&half(), 500, 42).unwrap();
        assert_eq!(a, sample_sequence(&half(), 500, 42).unwrap());
        assert_ne!(a, sample_sequence(&half(), 500, 43).unwrap());
        let big = sample_sequence(&half(), 10_000, 7).unwrap();
        let zeros = big.iter().filter(|&&k| k == 0).count() as f64 / 1e4;
        assert!((zeros - 0.5).abs() <= 0.02, "{zeros}");
    }

    #[test]
    fn sampling_passes_chi_square() {
        let w = WeightVector::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let n = 20_000;
        let seq = sample_sequence(&w, n, 1234).unwrap();
        let mut counts = [0usize; 4];
        for k in seq {
            counts[k] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .zip(w.as_slice())
            .map(|(&c, &p)| {
                let e = p * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        // 3 degrees of freedom, 0.999 quantile is 16.27
        assert!(chi2 < 16.27, "chi2 {chi2}");
    }

    #[test]
    fn trajectories() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let rho = random_density(&mut rng, 2);
        let dev = xz_device();
        let dt = 0.05;
        let us = step_unitaries(&dev, dt).unwrap();
        let empty = run_trajectory(&rho, &[], &us).unwrap();
        assert_eq!(empty.final_state, rho);

        let constant = run_trajectory(&rho, &[0; 12], &us).unwrap();
        let direct = crate::qmath::evolve_unitary(&dev.hamiltonians()[0], 12.0 * dt, &rho).unwrap();
        assert!(max_abs(&(constant.final_state.matrix() - direct.matrix())) < 1e-13);

        let seq: Vec<usize> = (0..15).map(|_| rng.random_range(0..2)).collect();
        let rec = run_trajectory(&rho, &seq, &us).unwrap();
        let product = seq.iter().fold(crate::qmath::identity(2), |acc, &k| &us[k] * acc);
        let want = &product * rho.matrix() * product.adjoint();
        assert!(max_abs(&(rec.final_state.matrix() - want)) < 1e-13);
        assert!(matches!(run_trajectory(&rho, &[2], &us), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn monte_carlo_degenerate_distribution() {
        let dev = xz_device();
        let us = step_unitaries(&dev, 0.02).unwrap();
        let rho = ket(&[ONE, ZERO]);
        let w = WeightVector::new(vec![1.0, 0.0]).unwrap();
        let mc = monte_carlo_average(&rho, &w, &us, 50, 16, 3).unwrap();
        let want = crate::qmath::evolve_unitary(&dev.hamiltonians()[0], 1.0, &rho).unwrap();
        assert!(max_abs(&(mc.averaged_state.matrix() - want.matrix())) < 1e-12);
        assert!(mc.stderr_estimate < 1e-12);
        assert!(monte_carlo_average(&rho, &w, &us, 50, 1, 3).is_err());
    }

    #[test]
    fn monte_carlo_is_bitwise_reproducible() {
        let dev = xz_device();
        let us = step_unitaries(&dev, 0.02).unwrap();
        let rho = ket(&[ONE, ZERO]);
        let a = monte_carlo_average(&rho, &half(), &us, 50, 300, 11).unwrap();
        let b = monte_carlo_average(&rho, &half(), &us, 50, 300, 11).unwrap();
        assert_eq!(a.averaged_state, b.averaged_state);
        assert_eq!(a.stderr_estimate.to_bits(), b.stderr_estimate.to_bits());
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| monte_carlo_average(&rho, &half(), &us, 50, 300, 11).unwrap());
        assert_eq!(a.averaged_state, c.averaged_state);
    }

    #[test]
    fn channel_sweep_distance_decreases() {
        let pts = channel_convergence(&xz_device(), &half(), 1.0, &[25, 50, 100, 200]).unwrap();
        for w in pts.windows(2) {
            assert!(w[1].distance.frobenius < w[0].distance.frobenius + 1e-12);
        }
    }
}
