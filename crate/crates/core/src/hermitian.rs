//! Dense complex Hermitian linear algebra.
//!
//! Everything the solvers need reduces to a handful of operations on small
//! Hermitian matrices (dimension = number of transmit antennas): a full
//! eigendecomposition, the smallest eigenpair, the trace of the inverse and
//! a PSD test. The eigendecomposition is a cyclic complex Jacobi iteration,
//! which is accurate to working precision for the sizes involved here.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

const MAX_SWEEPS: usize = 100;

/// A square complex matrix with `A == A^H`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    data: ComplexMatrix,
}

/// Eigenvalues in non-increasing order with the matching unitary basis.
#[derive(Clone, Debug)]
pub struct EvdResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl EvdResult {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Rebuilds `U diag(f(alpha_i)) U^H`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> HermitianMatrix {
        let n = self.dim();
        let mut out = ComplexMatrix::zeros(n, n);
        for (i, &alpha) in self.eigenvalues.iter().enumerate() {
            let weight = f(alpha);
            if weight == 0.0 {
                continue;
            }
            let u = self.eigenvectors.column(i);
            for c in 0..n {
                let uc = u[c].conj() * weight;
                for r in 0..n {
                    out[(r, c)] += u[r] * uc;
                }
            }
        }
        HermitianMatrix::symmetrized(out)
    }

    /// Rebuilds `U diag(values) U^H`; zero entries are skipped.
    pub fn reconstruct_with_values(&self, values: &[f64]) -> HermitianMatrix {
        assert_eq!(values.len(), self.dim());
        let n = self.dim();
        let mut out = ComplexMatrix::zeros(n, n);
        for (i, &weight) in values.iter().enumerate() {
            if weight == 0.0 {
                continue;
            }
            let u = self.eigenvectors.column(i);
            for c in 0..n {
                let uc = u[c].conj() * weight;
                for r in 0..n {
                    out[(r, c)] += u[r] * uc;
                }
            }
        }
        HermitianMatrix::symmetrized(out)
    }

    pub fn reconstruct(&self) -> HermitianMatrix {
        self.reconstruct_with(|a| a)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("empty decomposition")
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }
}

impl HermitianMatrix {
    /// Validates Hermitian symmetry (`max|A - A^H| <= 1e-12 max|A|`) and
    /// finiteness, then stores the exactly symmetrized matrix.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let n = m.nrows();
        let mut asym: f64 = 0.0;
        for r in 0..n {
            for c in r..n {
                asym = asym.max((m[(r, c)] - m[(c, r)].conj()).norm());
            }
        }
        if asym > 1e-12 * scale {
            return Err(Error::NotHermitian { asymmetry: asym });
        }
        Ok(Self::symmetrized(m))
    }

    /// Takes `(M + M^H) / 2` without checking; for matrices Hermitian by construction.
    pub(crate) fn symmetrized(m: ComplexMatrix) -> Self {
        let n = m.nrows();
        let mut data = m;
        for r in 0..n {
            data[(r, r)] = Complex64::new(data[(r, r)].re, 0.0);
            for c in (r + 1)..n {
                let avg = (data[(r, c)] + data[(c, r)].conj()) * 0.5;
                data[(r, c)] = avg;
                data[(c, r)] = avg.conj();
            }
        }
        Self { data }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            data: ComplexMatrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, c: f64) -> Self {
        Self {
            data: ComplexMatrix::from_diagonal_element(n, n, Complex64::new(c, 0.0)),
        }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut data = ComplexMatrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            data[(i, i)] = Complex64::new(d, 0.0);
        }
        Self { data }
    }

    /// `v v^H`.
    pub fn outer(v: &ComplexVector) -> Self {
        Self::symmetrized(v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.data
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.data[(i, i)].re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `v^H A v` (real for Hermitian `A`).
    pub fn quad_form(&self, v: &ComplexVector) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for r in 0..n {
            let mut row = Complex64::new(0.0, 0.0);
            for c in 0..n {
                row += self.data[(r, c)] * v[c];
            }
            acc += (v[r].conj() * row).re;
        }
        acc
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            data: &self.data * Complex64::new(c, 0.0),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::symmetrized(&self.data + &other.data)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::symmetrized(&self.data - &other.data)
    }

    /// `tr(A B)` for Hermitian `A`, `B`.
    pub fn inner(&self, other: &Self) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for r in 0..n {
            for c in 0..n {
                acc += (self.data[(r, c)] * other.data[(c, r)]).re;
            }
        }
        acc
    }

    pub fn evd(&self) -> EvdResult {
        jacobi_evd(&self.data)
    }

    /// Smallest eigenvalue and a unit-norm eigenvector.
    pub fn min_eigpair(&self) -> (f64, ComplexVector) {
        let evd = self.evd();
        let last = evd.dim() - 1;
        (evd.eigenvalues[last], evd.eigenvectors.column(last).into_owned())
    }

    /// Default singularity cutoff for [`trace_inverse`](Self::trace_inverse).
    pub fn default_pd_tol(&self) -> f64 {
        1e-10 * self.trace() / self.dim() as f64
    }

    /// `sum_i 1/alpha_i`, or `+inf` as soon as any eigenvalue is `<= pd_tol`.
    pub fn trace_inverse(&self, pd_tol: f64) -> f64 {
        let evd = self.evd();
        trace_inverse_of(&evd.eigenvalues, pd_tol)
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.evd().min_eigenvalue() >= -tol
    }

    /// Inverse through the eigendecomposition; `None` if singular at `pd_tol`.
    pub fn inverse(&self, pd_tol: f64) -> Option<Self> {
        let evd = self.evd();
        if evd.min_eigenvalue() <= pd_tol {
            return None;
        }
        Some(evd.reconstruct_with(|a| 1.0 / a))
    }
}

/// Number of real parameters of an `n x n` Hermitian matrix.
pub fn real_param_count(n: usize) -> usize {
    n * n
}

impl HermitianMatrix {
    /// Real parameters: the `n` diagonal entries, then `(re, im)` of each
    /// strictly upper-triangular entry in row-major order.
    pub fn to_real_params(&self, out: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(out.len(), n * n);
        for i in 0..n {
            out[i] = self.data[(i, i)].re;
        }
        let mut k = n;
        for r in 0..n {
            for c in (r + 1)..n {
                out[k] = self.data[(r, c)].re;
                out[k + 1] = self.data[(r, c)].im;
                k += 2;
            }
        }
    }

    pub fn from_real_params(n: usize, params: &[f64]) -> Self {
        debug_assert_eq!(params.len(), n * n);
        let mut data = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            data[(i, i)] = Complex64::new(params[i], 0.0);
        }
        let mut k = n;
        for r in 0..n {
            for c in (r + 1)..n {
                let z = Complex64::new(params[k], params[k + 1]);
                data[(r, c)] = z;
                data[(c, r)] = z.conj();
                k += 2;
            }
        }
        Self { data }
    }

    /// Gradient of `S -> tr(self * S)` with respect to the real parameters of `S`.
    pub fn trace_gradient(&self, out: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(out.len(), n * n);
        for i in 0..n {
            out[i] = self.data[(i, i)].re;
        }
        let mut k = n;
        for r in 0..n {
            for c in (r + 1)..n {
                out[k] = 2.0 * self.data[(r, c)].re;
                out[k + 1] = 2.0 * self.data[(r, c)].im;
                k += 2;
            }
        }
    }
}

pub(crate) fn trace_inverse_of(eigenvalues: &[f64], pd_tol: f64) -> f64 {
    let pd_tol = pd_tol.max(0.0);
    if eigenvalues.iter().any(|&a| a <= pd_tol) {
        return f64::INFINITY;
    }
    eigenvalues.iter().map(|a| 1.0 / a).sum()
}

fn jacobi_evd(m: &ComplexMatrix) -> EvdResult {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = ComplexMatrix::identity(n, n);
    let total: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>();

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for r in 0..n {
            for c in 0..n {
                if r != c {
                    off += a[(r, c)].norm_sqr();
                }
            }
        }
        if off <= 1e-32 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let b = apq.norm();
                if b <= f64::MIN_POSITIVE {
                    continue;
                }
                let phase = apq / b;
                let zeta = (a[(q, q)].re - a[(p, p)].re) / (2.0 * b);
                let t = if zeta == 0.0 {
                    1.0
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Unitary rotation J on the (p, q) plane; A <- J^H A J zeroes a_pq.
                let jpp = Complex64::new(c, 0.0);
                let jqq = jpp;
                let jpq = phase * s;
                let jqp = -phase.conj() * s;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * jpp + akq * jqp;
                    a[(k, q)] = akp * jpq + akq * jqq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = jpp.conj() * apk + jqp.conj() * aqk;
                    a[(q, k)] = jpq.conj() * apk + jqq.conj() * aqk;
                }
                a[(p, q)] = Complex64::new(0.0, 0.0);
                a[(q, p)] = Complex64::new(0.0, 0.0);
                a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * jpp + vkq * jqp;
                    v[(k, q)] = vkp * jpq + vkq * jqq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].re.total_cmp(&a[(i, i)].re));
    let eigenvalues = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut eigenvectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &v.column(src));
    }
    EvdResult {
        eigenvalues,
        eigenvectors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub(crate) fn random_hermitian(n: usize, rng: &mut impl Rng) -> HermitianMatrix {
        let m = ComplexMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        HermitianMatrix::symmetrized(&m + m.adjoint())
    }

    fn rel_reconstruction(a: &HermitianMatrix) -> (f64, f64) {
        let evd = a.evd();
        let rebuilt = evd.reconstruct();
        let err = (rebuilt.as_matrix() - a.as_matrix()).norm() / a.frobenius_norm().max(1e-300);
        let n = a.dim();
        let gram = evd.eigenvectors.adjoint() * &evd.eigenvectors;
        let unit = (gram - ComplexMatrix::identity(n, n)).norm();
        (err, unit)
    }

    #[test]
    fn identity_and_diagonal() {
        let evd = HermitianMatrix::identity(2).evd();
        assert_eq!(evd.eigenvalues, vec![1.0, 1.0]);
        let d = HermitianMatrix::from_real_diagonal(&[1.0, 4.0]);
        let evd = d.evd();
        assert_eq!(evd.eigenvalues, vec![4.0, 1.0]);
        assert!((evd.eigenvectors[(1, 0)].norm() - 1.0).abs() < 1e-15);
        assert!((evd.eigenvectors[(0, 1)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reconstruction_and_unitarity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=8 {
            for _ in 0..150 {
                let a = random_hermitian(n, &mut rng);
                let (err, unit) = rel_reconstruction(&a);
                assert!(err < 1e-10, "n={n} err={err}");
                assert!(unit < 1e-10, "n={n} unit={unit}");
                let evd = a.evd();
                assert!(evd.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = ComplexMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 1.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(HermitianMatrix::new(m), Err(Error::NotHermitian { .. })));
        let rect = ComplexMatrix::zeros(2, 3);
        assert!(HermitianMatrix::new(rect).is_err());
    }

    #[test]
    fn min_eigpair_cases() {
        let (val, vec) = HermitianMatrix::from_real_diagonal(&[4.0, 1.0]).min_eigpair();
        assert_eq!(val, 1.0);
        assert!((vec[1].norm() - 1.0).abs() < 1e-15);

        let (val, vec) = HermitianMatrix::identity(4).min_eigpair();
        assert_eq!(val, 1.0);
        assert!((vec.norm() - 1.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let b = random_hermitian(4, &mut rng);
            let psd = HermitianMatrix::symmetrized(b.as_matrix() * b.as_matrix());
            let h = ComplexVector::from_fn(4, |_, _| c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)));
            let a = psd.sub(&HermitianMatrix::outer(&h));
            let (alpha, v) = a.min_eigpair();
            let resid = (a.as_matrix() * &v - &v * c(alpha, 0.0)).norm();
            assert!(resid <= 1e-9 * a.frobenius_norm(), "resid {resid}");
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_inverse_cases() {
        assert_eq!(HermitianMatrix::identity(4).trace_inverse(1e-10), 4.0);
        let iso = HermitianMatrix::scaled_identity(4, 0.25);
        assert!((iso.trace_inverse(iso.default_pd_tol()) - 16.0).abs() < 1e-12);
        let sing = HermitianMatrix::from_real_diagonal(&[1.0, 0.0]);
        assert!(sing.trace_inverse(sing.default_pd_tol()).is_infinite());
    }

    #[test]
    fn trace_inverse_matches_eigenvalues_and_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let b = random_hermitian(4, &mut rng);
            let pd = HermitianMatrix::symmetrized(b.as_matrix() * b.as_matrix()).add(&HermitianMatrix::scaled_identity(4, 0.1));
            let ti = pd.trace_inverse(pd.default_pd_tol());
            let direct: f64 = pd.evd().eigenvalues.iter().map(|a| 1.0 / a).sum();
            assert!((ti - direct).abs() <= 1e-9 * direct);
            let cst = rng.random_range(0.1..10.0);
            let scaled = pd.scale(cst);
            let ts = scaled.trace_inverse(scaled.default_pd_tol());
            assert!((ts - ti / cst).abs() <= 1e-9 * ti / cst);
            let inv = pd.inverse(0.0).unwrap();
            assert!((inv.trace() - ti).abs() <= 1e-9 * ti);
        }
    }

    #[test]
    fn psd_checks() {
        assert!(HermitianMatrix::identity(3).is_psd(0.0));
        assert!(!HermitianMatrix::from_real_diagonal(&[1.0, -1e-3]).is_psd(1e-9));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let h = ComplexVector::from_fn(4, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let g = HermitianMatrix::outer(&h);
            assert!(g.is_psd(1e-12 * g.trace()));
        }
    }

    #[test]
    fn real_params_and_trace_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in 1..6 {
            let a = random_hermitian(n, &mut rng);
            let m = random_hermitian(n, &mut rng);
            let mut p = vec![0.0; real_param_count(n)];
            a.to_real_params(&mut p);
            assert_eq!(HermitianMatrix::from_real_params(n, &p), a);
            // Linear functional: gradient . params == tr(M A).
            let mut g = vec![0.0; real_param_count(n)];
            m.trace_gradient(&mut g);
            let lin: f64 = g.iter().zip(&p).map(|(x, y)| x * y).sum();
            assert!((lin - m.inner(&a)).abs() < 1e-12);
        }
    }

    #[test]
    fn quad_form_and_inner() {
        let a = HermitianMatrix::from_real_diagonal(&[2.0, 3.0]);
        let v = ComplexVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0)]);
        assert!((a.quad_form(&v) - 5.0).abs() < 1e-15);
        assert!((a.inner(&HermitianMatrix::outer(&v)) - 5.0).abs() < 1e-15);
    }
}
