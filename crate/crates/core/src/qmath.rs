//! Dense complex linear algebra shared by the engines.
//!
//! Composite spaces always use system-first ordering: the joint basis index
//! of system state `s` and device state `j` is `s * d_dev + j`, which is the
//! ordering produced by [`tensor`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Numerical tolerances used when validating operators and states.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Max elementwise `|M - M^dagger|` accepted for a Hermitian operator.
    pub hermiticity: f64,
    /// Max `|Tr rho - 1|` accepted for a density matrix.
    pub trace: f64,
    /// Smallest eigenvalue accepted for a density matrix (negative slack).
    pub positivity: f64,
    /// Max elementwise `|U U^dagger - 1|` accepted for a unitary.
    pub unitarity: f64,
    /// Max `| ||v|| - 1 |` after normalization of kets.
    pub normalization: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        hermiticity: 1e-10,
        trace: 1e-9,
        positivity: -1e-9,
        unitarity: 1e-9,
        normalization: 1e-10,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}

pub fn pauli_x() -> ComplexMatrix {
    DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> ComplexMatrix {
    DMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> ComplexMatrix {
    DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

pub fn identity(d: usize) -> ComplexMatrix {
    DMatrix::identity(d, d)
}

/// Lift a real matrix to a complex one.
pub fn complexify(m: &DMatrix<f64>) -> ComplexMatrix {
    m.map(|x| C64::new(x, 0.0))
}

/// Largest elementwise modulus.
pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn trace(m: &ComplexMatrix) -> C64 {
    m.diagonal().iter().sum()
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b - b * a
}

fn require_square(m: &ComplexMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare(m.nrows(), m.ncols()));
    }
    Ok(m.nrows())
}

fn require_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Kronecker product with system-first ordering.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Trace out the second (device) factor of a `d_sys * d_dev` square matrix.
pub fn partial_trace_device(m: &ComplexMatrix, d_sys: usize, d_dev: usize) -> Result<ComplexMatrix> {
    let n = require_square(m)?;
    require_dim(d_sys * d_dev, n)?;
    Ok(DMatrix::from_fn(d_sys, d_sys, |s, t| {
        (0..d_dev).map(|j| m[(s * d_dev + j, t * d_dev + j)]).sum()
    }))
}

/// Trace out the first (system) factor, leaving the device marginal.
pub fn partial_trace_system(m: &ComplexMatrix, d_sys: usize, d_dev: usize) -> Result<ComplexMatrix> {
    let n = require_square(m)?;
    require_dim(d_sys * d_dev, n)?;
    Ok(DMatrix::from_fn(d_dev, d_dev, |j, k| {
        (0..d_sys).map(|s| m[(s * d_dev + j, s * d_dev + k)]).sum()
    }))
}

/// A Hermitian operator, stored in exactly symmetrized form.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    matrix: ComplexMatrix,
}

impl HermitianOperator {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(m, Tolerances::DEFAULT.hermiticity)
    }

    pub fn with_tolerance(m: ComplexMatrix, tol: f64) -> Result<Self> {
        require_square(&m)?;
        if !is_finite(&m) {
            return Err(Error::NonFinite);
        }
        let asym = max_abs(&(&m - m.adjoint()));
        if asym > tol {
            return Err(Error::NotHermitian(asym));
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrize without checking; `(M + M^dagger) / 2`.
    pub(crate) fn symmetrized(m: ComplexMatrix) -> Self {
        let adj = m.adjoint();
        Self { matrix: (m + adj).scale(0.5) }
    }

    pub fn zeros(d: usize) -> Self {
        Self { matrix: DMatrix::zeros(d, d) }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = DVector::from_iterator(diag.len(), diag.iter().map(|&x| C64::new(x, 0.0)));
        Self { matrix: DMatrix::from_diagonal(&d) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }
}

/// A normalized state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Ket {
    amplitudes: DVector<C64>,
}

impl Ket {
    /// Normalizes the supplied amplitudes.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidArgument("ket must have at least one amplitude".into()));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let v = DVector::from_vec(amplitudes);
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok(Self { amplitudes: v.unscale(norm) })
    }

    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::IndexOutOfRange { index: k, len: dim });
        }
        let mut v = vec![ZERO; dim];
        v[k] = ONE;
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    /// `|v><v|`
    pub fn projector(&self) -> ComplexMatrix {
        &self.amplitudes * self.amplitudes.adjoint()
    }
}

/// A trace-one positive semi-definite Hermitian operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        Self::with_tolerances(m, &Tolerances::DEFAULT)
    }

    pub fn with_tolerances(m: ComplexMatrix, tol: &Tolerances) -> Result<Self> {
        let h = HermitianOperator::with_tolerance(m, tol.hermiticity)?;
        let tr = trace(h.matrix()).re;
        if (tr - 1.0).abs() > tol.trace {
            return Err(Error::InvalidTrace(tr));
        }
        let min = min_eigenvalue(&h)?;
        if min < tol.positivity {
            return Err(Error::NotPositive(min));
        }
        Ok(Self { matrix: h.into_matrix() })
    }

    /// Wrap the output of a map known to be CPTP; only symmetrizes.
    pub(crate) fn from_cptp_output(m: ComplexMatrix) -> Self {
        Self { matrix: HermitianOperator::symmetrized(m).into_matrix() }
    }

    pub fn pure(ket: &Ket) -> Self {
        Self { matrix: ket.projector() }
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self { matrix: identity(d).unscale(d as f64) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        Self { matrix: tensor(&self.matrix, &other.matrix) }
    }
}

/// Eigendecomposition of a Hermitian operator, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors as columns, ordered like `values`.
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    /// `V f(diag(lambda)) V^dagger`
    pub fn apply_function<F: Fn(f64) -> C64>(&self, f: F) -> ComplexMatrix {
        let mut scaled = self.vectors.clone();
        for (k, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            for z in scaled.column_mut(k).iter_mut() {
                *z *= w;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

pub fn hermitian_eig(h: &HermitianOperator) -> Result<HermitianEigen> {
    let d = h.dim();
    if d == 0 {
        return Ok(HermitianEigen { values: DVector::zeros(0), vectors: DMatrix::zeros(0, 0) });
    }
    let eig = h
        .matrix()
        .clone()
        .try_symmetric_eigen(EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or(Error::EigenNoConvergence)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(d, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermitianEigen { values, vectors })
}

pub fn eigenvalues(h: &HermitianOperator) -> Result<DVector<f64>> {
    Ok(hermitian_eig(h)?.values)
}

fn min_eigenvalue(h: &HermitianOperator) -> Result<f64> {
    let vals = eigenvalues(h)?;
    Ok(vals.iter().copied().fold(f64::INFINITY, f64::min))
}

/// `exp(-i H t)`, built from the eigendecomposition of `H`.
pub fn unitary_propagator(h: &HermitianOperator, t: f64) -> Result<ComplexMatrix> {
    let eig = hermitian_eig(h)?;
    Ok(eig.apply_function(|lam| C64::from_polar(1.0, -lam * t)))
}

/// `U rho U^dagger` for an arbitrary square `U` of matching dimension.
pub fn conjugate(u: &ComplexMatrix, rho: &ComplexMatrix) -> ComplexMatrix {
    u * rho * u.adjoint()
}

pub fn evolve_unitary(h: &HermitianOperator, t: f64, rho: &DensityMatrix) -> Result<DensityMatrix> {
    require_dim(h.dim(), rho.dim())?;
    let u = unitary_propagator(h, t)?;
    Ok(DensityMatrix::from_cptp_output(conjugate(&u, rho.matrix())))
}

/// Max elementwise deviation of `U U^dagger` from the identity.
pub fn unitarity_defect(u: &ComplexMatrix) -> Result<f64> {
    let d = require_square(u)?;
    Ok(max_abs(&(u * u.adjoint() - identity(d))))
}

/// Half the sum of absolute eigenvalues of `A - B` for Hermitian `A`, `B`.
pub fn trace_norm_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    let n = require_square(a)?;
    require_dim(n, require_square(b)?)?;
    let diff = HermitianOperator::symmetrized(a - b);
    let vals = eigenvalues(&diff)?;
    Ok(0.5 * vals.iter().map(|x| x.abs()).sum::<f64>())
}

pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    let d = trace_norm_distance(rho.matrix(), sigma.matrix())?;
    Ok(d.clamp(0.0, 1.0))
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use rand::Rng;

    pub fn random_complex<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
        DMatrix::from_fn(rows, cols, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    pub fn random_hermitian<R: Rng>(rng: &mut R, d: usize) -> HermitianOperator {
        HermitianOperator::symmetrized(random_complex(rng, d, d))
    }

    pub fn random_density<R: Rng>(rng: &mut R, d: usize) -> DensityMatrix {
        let g = random_complex(rng, d, d);
        let m = &g * g.adjoint();
        let tr = trace(&m).re;
        DensityMatrix::new(m.unscale(tr)).unwrap()
    }

    pub fn random_unitary<R: Rng>(rng: &mut R, d: usize) -> ComplexMatrix {
        unitary_propagator(&random_hermitian(rng, d), 1.3).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn ket(re: &[f64]) -> Ket {
        Ket::new(re.iter().map(|&x| C64::new(x, 0.0)).collect()).unwrap()
    }

    #[test]
    fn tensor_identity_and_ordering() {
        assert_eq!(tensor(&identity(2), &identity(2)), identity(4));

        let p0 = ket(&[1.0, 0.0]).projector();
        let got = tensor(&pauli_z(), &p0);
        let want = HermitianOperator::from_real_diagonal(&[1.0, 0.0, -1.0, 0.0]);
        assert_eq!(&got, want.matrix());
    }

    #[test]
    fn tensor_xx_is_antidiagonal() {
        let got = tensor(&pauli_x(), &pauli_x());
        for r in 0..4 {
            for c in 0..4 {
                let want = if r + c == 3 { ONE } else { ZERO };
                assert_eq!(got[(r, c)], want, "entry ({r},{c})");
            }
        }
    }

    #[test]
    fn tensor_matches_index_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_complex(&mut rng, 3, 2);
        let b = random_complex(&mut rng, 2, 4);
        let k = tensor(&a, &b);
        for i in 0..3 {
            for j in 0..2 {
                for p in 0..2 {
                    for q in 0..4 {
                        assert_eq!(k[(i * 2 + p, j * 4 + q)], a[(i, j)] * b[(p, q)]);
                    }
                }
            }
        }
    }

    #[test]
    fn partial_trace_product_and_mixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = random_density(&mut rng, 3);
        let phi = ket(&[0.6, 0.8]);
        let joint = rho.tensor(&DensityMatrix::pure(&phi));
        let back = partial_trace_device(joint.matrix(), 3, 2).unwrap();
        assert!(max_abs(&(back - rho.matrix())) < 1e-15);

        let mixed = DensityMatrix::maximally_mixed(4);
        let half = partial_trace_device(mixed.matrix(), 2, 2).unwrap();
        assert!(max_abs(&(half - identity(2).scale(0.5))) < 1e-15);
    }

    #[test]
    fn partial_trace_matches_index_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rho = random_density(&mut rng, 4);
        let m = rho.matrix();
        let got = partial_trace_device(m, 2, 2).unwrap();
        let oracle = [
            [m[(0, 0)] + m[(1, 1)], m[(0, 2)] + m[(1, 3)]],
            [m[(2, 0)] + m[(3, 1)], m[(2, 2)] + m[(3, 3)]],
        ];
        for s in 0..2 {
            for t in 0..2 {
                assert!((got[(s, t)] - oracle[s][t]).norm() < 1e-15);
            }
        }
        assert!((trace(&got) - trace(m)).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_dimension_mismatch() {
        let m = identity(6);
        assert!(matches!(
            partial_trace_device(&m, 2, 2),
            Err(Error::DimensionMismatch { expected: 4, found: 6 })
        ));
    }

    #[test]
    fn eig_pauli_z_and_zero() {
        let e = hermitian_eig(&HermitianOperator::new(pauli_z()).unwrap()).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-15);
        assert!((e.values[1] - 1.0).abs() < 1e-15);
        let z = hermitian_eig(&HermitianOperator::zeros(3)).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eig_reconstruction_random_6x6() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = random_hermitian(&mut rng, 6);
        let e = hermitian_eig(&h).unwrap();
        let rebuilt = e.apply_function(|x| C64::new(x, 0.0));
        assert!(max_abs(&(rebuilt - h.matrix())) < 1e-9);
        let gram = e.vectors.adjoint() * &e.vectors;
        assert!(max_abs(&(gram - identity(6))) < 1e-9);
        let norm2 = e.values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for k in 0..6 {
            let v = e.vectors.column(k);
            let res = (h.matrix() * v - v * C64::new(e.values[k], 0.0)).norm();
            assert!(res <= 1e-9 * norm2);
        }
        assert!(e.values.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn hermitian_rejects_asymmetric() {
        let mut m = pauli_x();
        m[(0, 1)] = C64::new(1.0 + 1e-6, 0.0);
        assert!(matches!(HermitianOperator::new(m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn density_validation() {
        assert!(matches!(
            DensityMatrix::new(identity(2)),
            Err(Error::InvalidTrace(_))
        ));
        let neg = HermitianOperator::from_real_diagonal(&[1.5, -0.5]).into_matrix();
        assert!(matches!(DensityMatrix::new(neg), Err(Error::NotPositive(_))));
    }

    #[test]
    fn evolve_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rho = random_density(&mut rng, 3);
        let h = random_hermitian(&mut rng, 3);
        let same = evolve_unitary(&h, 0.0, &rho).unwrap();
        assert!(max_abs(&(same.matrix() - rho.matrix())) < 1e-14);
        let zero = evolve_unitary(&HermitianOperator::zeros(3), 4.2, &rho).unwrap();
        assert!(max_abs(&(zero.matrix() - rho.matrix())) < 1e-14);
    }

    #[test]
    fn evolve_sigma_z_flips_plus_to_minus() {
        // exp(-i pi sigma_z) = -1, so |+> flips to |-> at t = pi/2 and returns at t = pi.
        let plus = DensityMatrix::pure(&ket(&[1.0, 1.0]));
        let minus = DensityMatrix::pure(&ket(&[1.0, -1.0]));
        let h = HermitianOperator::new(pauli_z()).unwrap();
        let half = evolve_unitary(&h, PI / 2.0, &plus).unwrap();
        assert!(trace_distance(&half, &minus).unwrap() < 1e-12);
        let full = evolve_unitary(&h, PI, &plus).unwrap();
        assert!(trace_distance(&full, &plus).unwrap() < 1e-12);
    }

    #[test]
    fn propagator_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = random_hermitian(&mut rng, 5);
        let u = unitary_propagator(&h, 2.7).unwrap();
        assert!(unitarity_defect(&u).unwrap() < 1e-9);
    }

    #[test]
    fn trace_distance_cases() {
        let zero = DensityMatrix::pure(&ket(&[1.0, 0.0]));
        let one = DensityMatrix::pure(&ket(&[0.0, 1.0]));
        let plus = DensityMatrix::pure(&ket(&[1.0, 1.0]));
        assert!(trace_distance(&zero, &zero).unwrap() < 1e-15);
        assert!((trace_distance(&zero, &one).unwrap() - 1.0).abs() < 1e-14);
        // |0><0| - |+><+| = [[1/2, -1/2], [-1/2, -1/2]], eigenvalues +-1/sqrt(2)
        let oracle = 0.5 * (2.0 * 0.5f64.sqrt());
        assert!((trace_distance(&zero, &plus).unwrap() - oracle).abs() < 1e-14);
        assert!(trace_distance(&zero, &DensityMatrix::maximally_mixed(3)).is_err());
    }
}
