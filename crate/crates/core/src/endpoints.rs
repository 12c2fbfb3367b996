//! The two anchor points of the CRB-rate region.
//!
//! The CRB-minimizing point is isotropic transmission and has a closed form.
//! The rate-maximizing point solves the multicast capacity problem
//! `max_S min_k h_k^H S h_k  s.t. tr S <= P, S >= 0` by bisection on the
//! target SNR with an ellipsoid feasibility search for every candidate,
//! bracketed from above by the minimax dual bound
//! `P min_{mu in simplex} lambda_max(sum_k mu_k h_k h_k^H)`.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::ellipsoid::{find_feasible, minimize, Ellipsoid, Feasibility, FeasibilityOptions, Query, SearchOutcome};
use crate::error::{Error, Result};
use crate::hermitian::{real_param_count, ComplexMatrix, HermitianMatrix};
use crate::model::{crb_trace, multicast_rate, ChannelSet, CrPoint, SystemConfig, TransmitCovariance};

/// A boundary point with the covariance achieving it.
#[derive(Clone, Debug)]
pub struct Endpoint {
    pub point: CrPoint,
    pub covariance: TransmitCovariance,
    /// Worst-user SNR achieved by `covariance`.
    pub snr: f64,
    /// Certified upper bound on the optimal worst-user SNR.
    pub snr_upper: f64,
    /// Simplex weights behind `snr_upper` (one per user).
    pub dual_weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RateMaxOptions {
    /// Bisection stops when the SNR bracket is `<= tol * (1 + upper)`.
    pub tol: f64,
    /// Eigen-directions carrying less than `rank_tol * P` are dropped when
    /// doing so keeps the worst-user SNR within `tol`.
    pub rank_tol: f64,
    pub feasibility: FeasibilityOptions,
    pub dual: FeasibilityOptions,
}

impl Default for RateMaxOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            rank_tol: 1e-3,
            feasibility: FeasibilityOptions {
                max_iterations: 30_000,
                volume_tol: 1e-7,
            },
            dual: FeasibilityOptions {
                max_iterations: 20_000,
                volume_tol: 1e-9,
            },
        }
    }
}

/// Isotropic transmission `(P/N_t) I`: minimum CRB and the rate it yields.
pub fn crb_min_point(ch: &ChannelSet, cfg: &SystemConfig) -> Result<(CrPoint, TransmitCovariance)> {
    cfg.validate()?;
    if ch.n_tx() != cfg.n_tx {
        return Err(Error::DimensionMismatch { expected: cfg.n_tx, got: ch.n_tx() });
    }
    let nt = cfg.n_tx as f64;
    let crb = cfg.n_rx as f64 * nt * nt * cfg.noise_radar / (cfg.symbols as f64 * cfg.power);
    let rate = (1.0 + cfg.power / nt * ch.min_gain() / cfg.noise_comm).log2();
    Ok((CrPoint { crb, rate }, TransmitCovariance::isotropic(cfg)))
}

/// Minimax bound `P min_mu lambda_max(sum mu_k H_k)` on `max_S min_k h_k^H S h_k`,
/// in gain units (not divided by the noise power). Returns the bound and the
/// weights attaining it.
pub fn multicast_dual_bound(ch: &ChannelSet, cfg: &SystemConfig, opts: &FeasibilityOptions) -> (f64, Vec<f64>) {
    let k = ch.n_users();
    let dim = k - 1;
    let p = cfg.power;
    let weights_of = |z: &DVector<f64>| -> Vec<f64> {
        let mut w: Vec<f64> = z.iter().copied().collect();
        w.push(1.0 - z.sum());
        w
    };
    let top_eig = |w: &[f64]| {
        let mut m = ComplexMatrix::zeros(ch.n_tx(), ch.n_tx());
        for (h, &wk) in ch.channels().iter().zip(w) {
            m += h * h.adjoint() * Complex64::new(wk, 0.0);
        }
        let evd = HermitianMatrix::symmetrized(m).evd();
        (evd.eigenvalues[0], evd.eigenvectors.column(0).into_owned())
    };

    let uniform = vec![1.0 / k as f64; k];
    let (uniform_val, _) = top_eig(&uniform);
    let mut best = (p * uniform_val, uniform);

    let center = DVector::from_element(dim, 1.0 / k as f64);
    let ell = Ellipsoid::ball(center, (dim as f64).sqrt());
    let found = minimize(ell, opts, |z| {
        if let Some(i) = (0..dim).find(|&i| z[i] < 0.0) {
            let mut g = DVector::zeros(dim);
            g[i] = -1.0;
            return Query::Violated { violation: -z[i], subgradient: g };
        }
        let total = z.sum();
        if total > 1.0 {
            return Query::Violated { violation: total - 1.0, subgradient: DVector::from_element(dim, 1.0) };
        }
        let w = weights_of(z);
        let (val, v) = top_eig(&w);
        let last = ch.get(k - 1).dotc(&v).norm_sqr();
        let g = DVector::from_fn(dim, |i, _| p * (ch.get(i).dotc(&v).norm_sqr() - last));
        Query::Objective { value: p * val, subgradient: g }
    });
    if found.value < best.0 {
        if let Some(z) = found.point {
            best = (found.value, weights_of(&z));
        }
    }
    best
}

/// Searches for `S >= 0`, `tr S <= P` with `h_k^H S h_k >= target` for all users.
pub(crate) fn multicast_feasible(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    target: f64,
    opts: &FeasibilityOptions,
) -> Option<HermitianMatrix> {
    let n = cfg.n_tx;
    let dim = real_param_count(n);
    let mut center = vec![0.0; dim];
    HermitianMatrix::scaled_identity(n, cfg.power / n as f64).to_real_params(&mut center);
    let radius = 1.01 * cfg.power * (1.0 + 1.0 / (n as f64).sqrt());
    let ell = Ellipsoid::ball(DVector::from_vec(center), radius);
    let mut grad = vec![0.0; dim];
    let grams: Vec<HermitianMatrix> = (0..ch.n_users()).map(|k| ch.gram(k)).collect();

    let outcome = find_feasible(ell, opts, |x| {
        let s = HermitianMatrix::from_real_params(n, x.as_slice());
        let tr = s.trace();
        if tr > cfg.power {
            HermitianMatrix::identity(n).trace_gradient(&mut grad);
            return Feasibility::Violated { violation: tr - cfg.power, subgradient: DVector::from_column_slice(&grad) };
        }
        let (lmin, v) = s.min_eigpair();
        if lmin < 0.0 {
            HermitianMatrix::outer(&v).scale(-1.0).trace_gradient(&mut grad);
            return Feasibility::Violated { violation: -lmin, subgradient: DVector::from_column_slice(&grad) };
        }
        let (worst, gain) = grams
            .iter()
            .enumerate()
            .map(|(k, g)| (k, g.inner(&s)))
            .fold((0, f64::INFINITY), |acc, (k, v)| if v < acc.1 { (k, v) } else { acc });
        if gain < target {
            grams[worst].scale(-1.0).trace_gradient(&mut grad);
            return Feasibility::Violated { violation: target - gain, subgradient: DVector::from_column_slice(&grad) };
        }
        Feasibility::Feasible
    });
    match outcome {
        SearchOutcome::Found(x) => Some(HermitianMatrix::from_real_params(n, x.as_slice())),
        SearchOutcome::NotFound { .. } => None,
    }
}

fn worst_gain(s: &HermitianMatrix, ch: &ChannelSet) -> f64 {
    ch.channels().iter().map(|h| s.quad_form(h)).fold(f64::INFINITY, f64::min)
}

/// Projects `S` onto the span of the channels and rescales it to full
/// power; directions orthogonal to every channel carry no useful power.
fn project_to_channel_span(s: &HermitianMatrix, ch: &ChannelSet, power: f64) -> HermitianMatrix {
    let n = ch.n_tx();
    let mut sum = ComplexMatrix::zeros(n, n);
    for h in ch.channels() {
        sum += h * h.adjoint();
    }
    let evd = HermitianMatrix::symmetrized(sum).evd();
    let cutoff = 1e-12 * evd.eigenvalues[0].max(f64::MIN_POSITIVE);
    let proj = evd.reconstruct_with(|a| if a > cutoff { 1.0 } else { 0.0 });
    let projected = HermitianMatrix::symmetrized(proj.as_matrix() * s.as_matrix() * proj.as_matrix());
    rescale_to_power(&projected, power)
}

fn rescale_to_power(s: &HermitianMatrix, power: f64) -> HermitianMatrix {
    let tr = s.trace();
    if tr > 0.0 {
        s.scale(power / tr)
    } else {
        s.clone()
    }
}

/// Drops weak eigen-directions while the worst-user gain stays within `tol`.
fn reduce_rank(s: HermitianMatrix, ch: &ChannelSet, power: f64, rank_tol: f64, tol: f64) -> HermitianMatrix {
    let reference = worst_gain(&s, ch);
    let floor = 1e-12 * power;
    let mut current = s;
    for _ in 0..current.dim() {
        let evd = current.evd();
        let positive = evd.eigenvalues.iter().filter(|&&a| a > floor).count();
        if positive <= 1 || evd.eigenvalues[positive - 1] >= rank_tol * power {
            return current;
        }
        let mut values = evd.eigenvalues.clone();
        values[positive - 1] = 0.0;
        let candidate = rescale_to_power(&evd.reconstruct_with_values(&values), power);
        if worst_gain(&candidate, ch) >= reference * (1.0 - tol) {
            current = candidate;
        } else {
            return current;
        }
    }
    current
}

/// Rate-maximizing endpoint. `CRB_com` is `+inf` when the returned
/// covariance is rank deficient.
pub fn rate_max_point(ch: &ChannelSet, cfg: &SystemConfig, opts: &RateMaxOptions) -> Result<Endpoint> {
    cfg.validate()?;
    if ch.n_tx() != cfg.n_tx {
        return Err(Error::DimensionMismatch { expected: cfg.n_tx, got: ch.n_tx() });
    }
    let sigma2 = cfg.noise_comm;
    let (gain_upper, dual_weights) = multicast_dual_bound(ch, cfg, &opts.dual);
    let snr_upper = gain_upper / sigma2;

    let iso = TransmitCovariance::isotropic(cfg);
    let mut best = iso.matrix().clone();
    let mut lo = worst_gain(&best, ch) / sigma2;
    let mut hi = snr_upper.max(lo);
    let width = |hi: f64| opts.tol * (1.0 + hi);
    let top = hi;
    while hi - lo > width(top) {
        let mid = 0.5 * (lo + hi);
        match multicast_feasible(ch, cfg, mid * sigma2, &opts.feasibility) {
            Some(s) => {
                let achieved = worst_gain(&s, ch) / sigma2;
                lo = achieved.max(mid);
                best = s;
            }
            None => hi = mid,
        }
    }

    let cleaned = project_to_channel_span(&best, ch, cfg.power);
    let cleaned = reduce_rank(cleaned, ch, cfg.power, opts.rank_tol, opts.tol);
    let covariance = TransmitCovariance::new(cleaned)?;
    let snr = worst_gain(covariance.matrix(), ch) / sigma2;

    if snr_upper - snr > 1e-3 * (1.0 + snr_upper) {
        return Err(Error::NotConverged { iterations: 0, primal: snr, dual: snr_upper });
    }
    let rate = multicast_rate(&covariance, ch, cfg)?;
    let crb = crb_trace(&covariance, cfg);
    Ok(Endpoint {
        point: CrPoint { crb, rate },
        covariance,
        snr,
        snr_upper,
        dual_weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermitian::ComplexVector;
    use crate::model::generate_rayleigh_channels;

    fn e(n: usize, i: usize) -> ComplexVector {
        let mut v = ComplexVector::zeros(n);
        v[i] = Complex64::new(1.0, 0.0);
        v
    }

    #[test]
    fn crb_min_reference_config() {
        let cfg = SystemConfig::default();
        let ch = generate_rayleigh_channels(3, 4, 0).unwrap();
        let (pt, s) = crb_min_point(&ch, &cfg).unwrap();
        assert!((pt.crb - 0.25).abs() < 1e-12);
        assert!((pt.rate - multicast_rate(&s, &ch, &cfg).unwrap()).abs() < 1e-12);
        assert!((pt.crb - crb_trace(&s, &cfg)).abs() < 1e-12);
    }

    #[test]
    fn identical_users_reduce_to_mrt() {
        let cfg = SystemConfig::default();
        let h = ComplexVector::from_vec(vec![
            Complex64::new(0.5, 0.2),
            Complex64::new(-0.3, 0.9),
            Complex64::new(1.1, 0.0),
            Complex64::new(0.0, -0.4),
        ]);
        let ch = ChannelSet::new(vec![h.clone(), h.clone()]).unwrap();
        let ep = rate_max_point(&ch, &cfg, &RateMaxOptions::default()).unwrap();
        let expected = (1.0 + cfg.power * h.norm_squared() / cfg.noise_comm).log2();
        assert!((ep.point.rate - expected).abs() < 1e-4, "{} vs {expected}", ep.point.rate);
        let evd = ep.covariance.matrix().evd();
        assert!(evd.eigenvalues[1] < 1e-12);
        assert!(ep.point.crb.is_infinite());
    }

    #[test]
    fn orthogonal_users_split_power() {
        let cfg = SystemConfig::default();
        let ch = ChannelSet::new(vec![e(4, 0), e(4, 1)]).unwrap();
        let ep = rate_max_point(&ch, &cfg, &RateMaxOptions::default()).unwrap();
        assert!((ep.point.rate - 1.5f64.log2()).abs() < 1e-4);
        let m = ep.covariance.matrix().as_matrix();
        assert!((m[(0, 0)].re - 0.5).abs() < 1e-3 && (m[(1, 1)].re - 0.5).abs() < 1e-3);
        assert!(m[(2, 2)].re.abs() < 1e-12 && m[(3, 3)].re.abs() < 1e-12);
        assert!(ep.point.crb.is_infinite());
    }

    /// Every 2x2 PSD matrix with trace `P` is `(P/2)(I + x . sigma)` with
    /// `|x| <= 1`. Dense search over the unit ball, then a shrinking
    /// pattern search around the best point.
    fn grid_rate_max(ch: &ChannelSet, cfg: &SystemConfig) -> f64 {
        let p = cfg.power;
        let eval = |x: [f64; 3]| {
            let norm = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            let x = if norm > 1.0 { x.map(|v| v / norm) } else { x };
            let h = 0.5 * p;
            let s = ComplexMatrix::from_row_slice(
                2,
                2,
                &[
                    Complex64::new(h * (1.0 + x[2]), 0.0),
                    Complex64::new(h * x[0], -h * x[1]),
                    Complex64::new(h * x[0], h * x[1]),
                    Complex64::new(h * (1.0 - x[2]), 0.0),
                ],
            );
            (worst_gain(&HermitianMatrix::symmetrized(s), ch), x)
        };
        let mut best = eval([0.0; 3]);
        let n = 24;
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    let x = [i, j, k].map(|v| -1.0 + 2.0 * v as f64 / n as f64);
                    let cand = eval(x);
                    if cand.0 > best.0 {
                        best = cand;
                    }
                }
            }
        }
        let mut step = 2.0 / n as f64;
        while step > 1e-10 {
            let mut improved = false;
            for d in 0..3 {
                for sign in [-1.0, 1.0] {
                    let mut x = best.1;
                    x[d] += sign * step;
                    let cand = eval(x);
                    if cand.0 > best.0 {
                        best = cand;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        (1.0 + best.0 / cfg.noise_comm).log2()
    }

    #[test]
    fn matches_grid_oracle_two_antennas() {
        let cfg = SystemConfig { n_tx: 2, n_rx: 2, ..SystemConfig::default() };
        for seed in 0..3 {
            let ch = generate_rayleigh_channels(3, 2, 100 + seed).unwrap();
            let ep = rate_max_point(&ch, &cfg, &RateMaxOptions::default()).unwrap();
            let oracle = grid_rate_max(&ch, &cfg);
            assert!((ep.point.rate - oracle).abs() < 1e-3, "seed {seed}: {} vs {oracle}", ep.point.rate);
        }
    }

    #[test]
    fn weak_duality_certificate_and_feasibility() {
        let cfg = SystemConfig::default();
        for seed in 0..4 {
            let ch = generate_rayleigh_channels(3 + 4 * seed as usize, 4, seed).unwrap();
            let ep = rate_max_point(&ch, &cfg, &RateMaxOptions::default()).unwrap();
            let s = ep.covariance.matrix();
            assert!(s.trace() <= cfg.power * (1.0 + 1e-6));
            assert!(s.evd().min_eigenvalue() >= -1e-8 * cfg.power);
            let w = &ep.dual_weights;
            assert!(w.iter().all(|&x| x >= -1e-12) && (w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let mut m = ComplexMatrix::zeros(4, 4);
            for (h, &wk) in ch.channels().iter().zip(w) {
                m += h * h.adjoint() * Complex64::new(wk, 0.0);
            }
            let lmax = HermitianMatrix::symmetrized(m).evd().max_eigenvalue();
            let bound = (1.0 + cfg.power * lmax / cfg.noise_comm).log2();
            assert!(ep.point.rate <= bound + 1e-12);
            let (iso, _) = crb_min_point(&ch, &cfg).unwrap();
            assert!(iso.rate <= ep.point.rate + 1e-9);
            assert!(iso.crb <= ep.point.crb);
        }
    }
}
