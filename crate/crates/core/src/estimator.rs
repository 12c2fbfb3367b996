//! Monte Carlo check of the CRB: extended targets on uniform linear arrays,
//! Gaussian waveforms, noisy echoes and least-squares estimation of the
//! target response matrix.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hermitian::{ComplexMatrix, ComplexVector, HermitianMatrix};
use crate::model::{crb_trace, cscg, SystemConfig, TransmitCovariance};
use crate::par::{map_indexed, Execution};

/// Point scatterers `(theta, beta)` making up an extended target.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatterTarget {
    scatters: Vec<(f64, Complex64)>,
}

impl ScatterTarget {
    pub fn new(scatters: Vec<(f64, Complex64)>) -> Result<Self> {
        if scatters.is_empty() {
            return Err(Error::InvalidConfig("target needs at least one scatterer".into()));
        }
        if let Some(&(theta, _)) = scatters.iter().find(|(t, _)| !(t.abs() < PI / 2.0)) {
            return Err(Error::InvalidConfig(format!("scatter angle {theta} outside (-pi/2, pi/2)")));
        }
        Ok(Self { scatters })
    }

    /// `m` scatterers at equally spaced angles with unit-magnitude,
    /// random-phase amplitudes.
    pub fn equally_spaced(m: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scatters = (0..m)
            .map(|i| {
                let theta = -PI / 2.0 + PI * (i as f64 + 0.5) / m as f64;
                (theta, Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
            })
            .collect();
        Self::new(scatters)
    }

    pub fn scatters(&self) -> &[(f64, Complex64)] {
        &self.scatters
    }
}

/// Target response `G` (`N_r x N_t`).
#[derive(Clone, Debug, PartialEq)]
pub struct TargetResponse {
    pub g: ComplexMatrix,
}

/// Half-wavelength ULA response `[1, e^{j pi sin theta}, ...]`.
pub fn steering_vector(theta: f64, n: usize) -> ComplexVector {
    let phase = PI * theta.sin();
    ComplexVector::from_fn(n, |i, _| Complex64::from_polar(1.0, phase * i as f64))
}

/// `G = sum_m beta_m a_r^*(theta_m) a_t^H(theta_m)`.
pub fn synthesize_target(target: &ScatterTarget, cfg: &SystemConfig) -> TargetResponse {
    let mut g = ComplexMatrix::zeros(cfg.n_rx, cfg.n_tx);
    for &(theta, beta) in &target.scatters {
        let ar = steering_vector(theta, cfg.n_rx).conjugate();
        let at = steering_vector(theta, cfg.n_tx);
        g += (ar * at.adjoint()) * beta;
    }
    TargetResponse { g }
}

/// Square-root factor `F` with `F F^H = S`, negative eigenvalues clipped.
fn sqrt_factor(s: &HermitianMatrix) -> Result<ComplexMatrix> {
    let evd = s.evd();
    if evd.min_eigenvalue() < -1e-9 * s.trace().abs().max(1.0) {
        return Err(Error::NotPsd { min_eigenvalue: evd.min_eigenvalue() });
    }
    let mut f = evd.eigenvectors.clone();
    for (j, &a) in evd.eigenvalues.iter().enumerate() {
        let r = a.max(0.0).sqrt();
        f.column_mut(j).scale_mut(r);
    }
    Ok(f)
}

fn gaussian_matrix(rows: usize, cols: usize, variance: f64, rng: &mut impl Rng) -> ComplexMatrix {
    // Column-major fill keeps the draw order independent of nalgebra internals.
    let mut m = ComplexMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = cscg(rng, variance);
        }
    }
    m
}

fn draw_waveform(f: &ComplexMatrix, symbols: usize, rng: &mut impl Rng) -> ComplexMatrix {
    f * gaussian_matrix(f.ncols(), symbols, 1.0, rng)
}

/// `L` i.i.d. `CN(0, S)` columns.
pub fn sample_waveform(s: &HermitianMatrix, symbols: usize, seed: u64) -> Result<ComplexMatrix> {
    let f = sqrt_factor(s)?;
    Ok(draw_waveform(&f, symbols, &mut ChaCha8Rng::seed_from_u64(seed)))
}

fn echo(g: &ComplexMatrix, x: &ComplexMatrix, sigma_r2: f64, rng: &mut impl Rng) -> Result<ComplexMatrix> {
    if g.ncols() != x.nrows() {
        return Err(Error::DimensionMismatch { expected: g.ncols(), got: x.nrows() });
    }
    let clean = g * x;
    if sigma_r2 == 0.0 {
        return Ok(clean);
    }
    Ok(clean + gaussian_matrix(g.nrows(), x.ncols(), sigma_r2, rng))
}

/// `Y = G X + Z` with `Z` i.i.d. `CN(0, sigma_r2)`; `sigma_r2 = 0` disables
/// the noise.
pub fn simulate_echo(g: &ComplexMatrix, x: &ComplexMatrix, sigma_r2: f64, seed: u64) -> Result<ComplexMatrix> {
    echo(g, x, sigma_r2, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn gram_inverse(x: &ComplexMatrix) -> Result<HermitianMatrix> {
    let gram = HermitianMatrix::symmetrized(x * x.adjoint());
    let evd = gram.evd();
    let min = evd.min_eigenvalue();
    if min <= 1e-12 * evd.max_eigenvalue().max(f64::MIN_POSITIVE) {
        return Err(Error::Singular { min_eigenvalue: min });
    }
    Ok(evd.reconstruct_with(|a| 1.0 / a))
}

/// `G_hat = Y X^H (X X^H)^-1`.
pub fn ls_estimate(y: &ComplexMatrix, x: &ComplexMatrix) -> Result<TargetResponse> {
    if y.ncols() != x.ncols() {
        return Err(Error::DimensionMismatch { expected: x.ncols(), got: y.ncols() });
    }
    let inv = gram_inverse(x)?;
    Ok(TargetResponse { g: y * x.adjoint() * inv.as_matrix() })
}

/// Exact LS error for a fixed waveform, `sigma_r^2 N_r tr((X X^H)^-1)`.
pub fn fixed_x_mse(x: &ComplexMatrix, cfg: &SystemConfig) -> Result<f64> {
    Ok(cfg.noise_radar * cfg.n_rx as f64 * gram_inverse(x)?.trace())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McReport {
    pub trials: usize,
    #[serde(rename = "L")]
    pub symbols: usize,
    pub crb_trace: f64,
    /// Mean of `|G_hat - G|_F^2`.
    pub empirical_mse: f64,
    /// Mean over trials of the exact error for that trial's waveform.
    pub fixed_x_exact: f64,
    /// `empirical_mse / crb_trace`.
    pub ratio: f64,
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64 + 1);
    rng
}

/// Empirical LS error over `trials` fresh waveforms and noise draws,
/// compared with the CRB of `S`.
pub fn mc_crb_check(
    s: &TransmitCovariance,
    target: &TargetResponse,
    cfg: &SystemConfig,
    trials: usize,
    seed: u64,
    mode: Execution,
) -> Result<McReport> {
    cfg.validate()?;
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    if s.dim() != cfg.n_tx {
        return Err(Error::DimensionMismatch { expected: cfg.n_tx, got: s.dim() });
    }
    let f = sqrt_factor(s.matrix())?;
    let outcomes = map_indexed(trials, mode, |trial| -> Result<(f64, f64)> {
        let mut rng = trial_rng(seed, trial);
        let x = draw_waveform(&f, cfg.symbols, &mut rng);
        let y = echo(&target.g, &x, cfg.noise_radar, &mut rng)?;
        let est = ls_estimate(&y, &x)?;
        Ok(((est.g - &target.g).norm_squared(), fixed_x_mse(&x, cfg)?))
    });
    let mut mse = 0.0;
    let mut exact = 0.0;
    for o in outcomes {
        let (m, e) = o?;
        mse += m;
        exact += e;
    }
    let n = trials as f64;
    let crb = crb_trace(s, cfg);
    Ok(McReport {
        trials,
        symbols: cfg.symbols,
        crb_trace: crb,
        empirical_mse: mse / n,
        fixed_x_exact: exact / n,
        ratio: mse / n / crb,
    })
}

/// Empirical LS error over `draws` noise realizations with the waveform
/// held fixed, returned with the exact value for that waveform.
pub fn fixed_x_check(
    x: &ComplexMatrix,
    target: &TargetResponse,
    cfg: &SystemConfig,
    draws: usize,
    seed: u64,
    mode: Execution,
) -> Result<(f64, f64)> {
    if draws == 0 {
        return Err(Error::InvalidConfig("draws must be >= 1".into()));
    }
    let exact = fixed_x_mse(x, cfg)?;
    let errors = map_indexed(draws, mode, |d| -> Result<f64> {
        let y = echo(&target.g, x, cfg.noise_radar, &mut trial_rng(seed, d))?;
        Ok((ls_estimate(&y, x)?.g - &target.g).norm_squared())
    });
    let mut sum = 0.0;
    for e in errors {
        sum += e?;
    }
    Ok((sum / draws as f64, exact))
}
