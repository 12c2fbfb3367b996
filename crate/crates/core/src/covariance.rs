//! CRB-constrained multicast rate maximization over the transmit covariance.
//!
//! The problem `max_S min_k h_k^H S h_k  s.t. tr(S^-1) <= Gamma, tr S <= P`
//! is solved in the Lagrange dual. With simplex weights `mu`, multipliers
//! `lambda1` (CRB) and `lambda2` (power), and `A = lambda2 I - sum mu_k H_k`
//! positive semidefinite with eigenpairs `(alpha_i, u_i)`, the inner
//! minimization has the closed form
//!
//! ```text
//! S* = sqrt(lambda1) U diag(alpha_i^-1/2) U^H,
//! g  = 2 sqrt(lambda1) sum sqrt(alpha_i) - lambda1 Gamma - lambda2 P.
//! ```
//!
//! The ellipsoid method minimizes the upper bound `U = -g` over
//! `(mu_1..mu_{K-1}, lambda1, lambda2)`. Each dual-feasible center also yields
//! a primal-feasible covariance (the closed-form inner minimizer, scaled to full power and, if
//! needed, blended toward isotropic until the CRB budget holds), so the
//! solver stops on a certified primal-dual gap.

use std::io::Write;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::ellipsoid::{CutOutcome, Ellipsoid};
use crate::endpoints::{rate_max_point, Endpoint, RateMaxOptions};
use crate::error::{Error, Result};
use crate::hermitian::{ComplexMatrix, EvdResult, HermitianMatrix};
use crate::model::{crb_trace, ChannelSet, SystemConfig, TransmitCovariance};

/// Relative band around `CRB_min` treated as the isotropic point.
const CRB_MIN_BAND: f64 = 1e-9;

/// Dual variables. `mu` holds the first `K - 1` weights; the last is
/// `1 - sum(mu)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualPoint {
    pub mu: Vec<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl DualPoint {
    /// All `K` weights, including the implied last one.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = self.mu.clone();
        w.push(1.0 - self.mu.iter().sum::<f64>());
        w
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = self.mu.clone();
        v.push(self.lambda1);
        v.push(self.lambda2);
        DVector::from_vec(v)
    }

    /// Inverse of [`DualPoint::to_vector`]; `z` has `K + 1` entries.
    pub fn from_vector(z: &DVector<f64>) -> Self {
        let k = z.len() - 1;
        Self {
            mu: z.as_slice()[..k - 1].to_vec(),
            lambda1: z[k - 1],
            lambda2: z[k],
        }
    }

    /// Nearest point of the dual box: weights clipped and renormalized onto
    /// the simplex, multipliers clipped at zero.
    pub fn projected(&self) -> Self {
        let mut w: Vec<f64> = self.weights().into_iter().map(|x| x.max(0.0)).collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            w.iter_mut().for_each(|x| *x /= total);
        } else {
            let k = w.len() as f64;
            w.iter_mut().for_each(|x| *x = 1.0 / k);
        }
        w.pop();
        Self {
            mu: w,
            lambda1: self.lambda1.max(0.0),
            lambda2: self.lambda2.max(0.0),
        }
    }
}

/// `lambda2 I - sum_k mu_k h_k h_k^H` with the implied last weight.
pub fn build_a_matrix(dual: &DualPoint, ch: &ChannelSet) -> HermitianMatrix {
    let n = ch.n_tx();
    let mut a = ComplexMatrix::identity(n, n) * Complex64::new(dual.lambda2, 0.0);
    for (h, w) in ch.channels().iter().zip(dual.weights()) {
        a -= h * h.adjoint() * Complex64::new(w, 0.0);
    }
    HermitianMatrix::symmetrized(a)
}

/// Dual function value and the inner minimizer.
#[derive(Clone, Debug)]
pub struct DualEvaluation {
    pub value: f64,
    /// `None` when `lambda1 = 0` (the minimizer is `S = 0`) or when `A` is
    /// singular (the minimizer is unbounded along its null space).
    pub covariance: Option<TransmitCovariance>,
    pub a_evd: EvdResult,
}

fn psd_tol(a: &EvdResult) -> f64 {
    1e-12 * a.eigenvalues.iter().fold(1.0f64, |m, x| m.max(x.abs()))
}

/// Evaluates the dual function at `dual` for the trace-inverse budget `gamma`.
pub fn eval_dual(dual: &DualPoint, ch: &ChannelSet, cfg: &SystemConfig, gamma: f64) -> Result<DualEvaluation> {
    let evd = build_a_matrix(dual, ch).evd();
    let tol = psd_tol(&evd);
    if evd.min_eigenvalue() < -tol {
        return Err(Error::InfeasibleDual(format!(
            "A has eigenvalue {:.3e} < 0",
            evd.min_eigenvalue()
        )));
    }
    let offset = -dual.lambda1 * gamma - dual.lambda2 * cfg.power;
    if dual.lambda1 <= 0.0 {
        return Ok(DualEvaluation { value: -dual.lambda2 * cfg.power, covariance: None, a_evd: evd });
    }
    let root = dual.lambda1.sqrt();
    let value = 2.0 * root * evd.eigenvalues.iter().map(|a| a.max(0.0).sqrt()).sum::<f64>() + offset;
    let covariance = (evd.min_eigenvalue() > tol)
        .then(|| TransmitCovariance::new_unchecked(evd.reconstruct_with(|a| root / a.sqrt())));
    Ok(DualEvaluation { value, covariance, a_evd: evd })
}

/// Which constraint produced a cut.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CutKind {
    Objective,
    /// `mu_k >= 0` for the zero-based index `k < K - 1`.
    MuNonNegative(usize),
    /// `sum mu_k <= 1`, i.e. the implied last weight is nonnegative.
    Simplex,
    Lambda1NonNegative,
    Lambda2NonNegative,
    /// `A >= 0`, cut along the smallest eigenvector.
    PsdA,
}

impl CutKind {
    pub fn tag(&self) -> &'static str {
        match self {
            CutKind::Objective => "objective",
            CutKind::MuNonNegative(_) => "mu_nonneg",
            CutKind::Simplex => "simplex",
            CutKind::Lambda1NonNegative => "lambda1_nonneg",
            CutKind::Lambda2NonNegative => "lambda2_nonneg",
            CutKind::PsdA => "psd",
        }
    }
}

/// A cut `vector^T (z - center) + depth <= 0` in dual coordinates.
#[derive(Clone, Debug)]
pub struct DualCut {
    pub kind: CutKind,
    pub vector: DVector<f64>,
    pub depth: f64,
}

fn unit(dim: usize, i: usize, value: f64) -> DVector<f64> {
    let mut v = DVector::zeros(dim);
    v[i] = value;
    v
}

/// Checks the dual constraints in order and returns the first violated one,
/// or `None` if `dual` lies in the dual domain.
fn constraint_cut(dual: &DualPoint, ch: &ChannelSet, a_evd: &EvdResult) -> Option<DualCut> {
    let k = ch.n_users();
    let dim = k + 1;
    if let Some((i, &m)) = dual.mu.iter().enumerate().find(|(_, &m)| m < 0.0) {
        return Some(DualCut { kind: CutKind::MuNonNegative(i), vector: unit(dim, i, -1.0), depth: -m });
    }
    let total: f64 = dual.mu.iter().sum();
    if total > 1.0 {
        let mut v = DVector::from_element(dim, 1.0);
        v[k - 1] = 0.0;
        v[k] = 0.0;
        return Some(DualCut { kind: CutKind::Simplex, vector: v, depth: total - 1.0 });
    }
    if dual.lambda1 <= 0.0 {
        return Some(DualCut { kind: CutKind::Lambda1NonNegative, vector: unit(dim, k - 1, -1.0), depth: -dual.lambda1 });
    }
    if dual.lambda2 < 0.0 {
        return Some(DualCut { kind: CutKind::Lambda2NonNegative, vector: unit(dim, k, -1.0), depth: -dual.lambda2 });
    }
    let min = a_evd.min_eigenvalue();
    // Singular A is on the boundary of the domain; cut it off centrally.
    if min <= psd_tol(a_evd) {
        let v = a_evd.eigenvectors.column(a_evd.dim() - 1).into_owned();
        let last = ch.get(k - 1).dotc(&v).norm_sqr();
        let mut g = DVector::zeros(dim);
        for i in 0..k - 1 {
            g[i] = ch.get(i).dotc(&v).norm_sqr() - last;
        }
        g[k] = -1.0;
        return Some(DualCut { kind: CutKind::PsdA, vector: g, depth: (-min).max(0.0) });
    }
    None
}

/// The cut at `dual`: a violated dual constraint, or the subgradient of the
/// upper bound `-g` built from the inner minimizer `s_star`.
pub fn dual_subgradients(
    dual: &DualPoint,
    s_star: Option<&TransmitCovariance>,
    ch: &ChannelSet,
    cfg: &SystemConfig,
    gamma: f64,
) -> DualCut {
    let a_evd = build_a_matrix(dual, ch).evd();
    if let Some(cut) = constraint_cut(dual, ch, &a_evd) {
        return cut;
    }
    let k = ch.n_users();
    let owned;
    let s = match s_star {
        Some(s) => s.matrix(),
        None => {
            let root = dual.lambda1.sqrt();
            owned = a_evd.reconstruct_with(|a| root / a.sqrt());
            &owned
        }
    };
    let last = s.quad_form(ch.get(k - 1));
    let mut g = DVector::zeros(k + 1);
    for i in 0..k - 1 {
        g[i] = s.quad_form(ch.get(i)) - last;
    }
    g[k - 1] = gamma - s.trace_inverse(0.0);
    g[k] = cfg.power - s.trace();
    DualCut { kind: CutKind::Objective, vector: g, depth: 0.0 }
}

#[derive(Clone, Debug)]
pub struct P1Options {
    /// Relative primal-dual gap in SNR units.
    pub gap_tol: f64,
    /// Defaults to `max(5000, 200 (K + 1)^2)`.
    pub max_iterations: Option<usize>,
    pub record_trace: bool,
    /// Rate-maximizing endpoint, if already known. Thresholds at or above
    /// its CRB return it directly.
    pub rate_max: Option<Endpoint>,
}

impl Default for P1Options {
    fn default() -> Self {
        Self {
            gap_tol: 1e-4,
            max_iterations: None,
            record_trace: false,
            rate_max: None,
        }
    }
}

/// Where the returned covariance came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionSource {
    DualEllipsoid,
    Isotropic,
    RateMaxEndpoint,
}

/// How the closed-form inner minimizer was mapped to a primal-feasible one:
/// `p_i = (1 - theta) * scale * s_i + theta * P / N_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Recovery {
    pub scale: f64,
    pub theta: f64,
}

impl Recovery {
    pub fn apply(&self, s: f64, cfg: &SystemConfig) -> f64 {
        (1.0 - self.theta) * self.scale * s + self.theta * cfg.power / cfg.n_tx as f64
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct P1Diagnostics {
    pub iterations: usize,
    pub source: SolutionSource,
    /// Best primal value `min_k h_k^H S h_k`.
    pub primal: f64,
    /// Best dual upper bound on the same quantity.
    pub dual_bound: f64,
    /// `crb / gamma_bar - 1`; nonpositive when feasible.
    pub crb_residual: f64,
    /// `tr S / P - 1`.
    pub power_residual: f64,
    /// `lambda1 (tr S^-1 - Gamma)` and `lambda2 (tr S - P)`.
    pub slackness: (f64, f64),
    /// Users attaining the minimum SNR within `1e-9` relative.
    pub argmin_users: Vec<usize>,
    pub recovery: Recovery,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Dual function value at the center, `NaN` on constraint cuts.
    pub dual_value: f64,
    pub cut: &'static str,
    pub log_volume: f64,
}

pub fn write_trace_csv<W: Write>(records: &[TraceRecord], mut out: W) -> Result<()> {
    writeln!(out, "iteration,dual_value,cut,log_volume")?;
    for r in records {
        writeln!(out, "{},{},{},{}", r.iteration, r.dual_value, r.cut, r.log_volume)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct P1Solution {
    pub covariance: TransmitCovariance,
    pub t_star: f64,
    pub rate: f64,
    pub dual: DualPoint,
    pub gap: f64,
    pub diagnostics: P1Diagnostics,
    pub trace: Vec<TraceRecord>,
}

struct Context<'a> {
    ch: &'a ChannelSet,
    cfg: &'a SystemConfig,
    gamma: f64,
}

/// `|u_i^H h_k|^2` for every user `k` and eigenvector `i`.
fn projections(evd: &EvdResult, ch: &ChannelSet) -> Vec<Vec<f64>> {
    ch.channels()
        .iter()
        .map(|h| (0..evd.dim()).map(|i| evd.eigenvectors.column(i).dotc(h).norm_sqr()).collect())
        .collect()
}

/// Smallest blend toward isotropic that meets the trace-inverse budget.
fn recover(raw: &[f64], cfg: &SystemConfig, gamma: f64) -> (Vec<f64>, Recovery) {
    let p = cfg.power;
    let iso = p / cfg.n_tx as f64;
    let scale = p / raw.iter().sum::<f64>();
    let scaled: Vec<f64> = raw.iter().map(|s| s * scale).collect();
    let inv = |theta: f64| scaled.iter().map(|s| 1.0 / ((1.0 - theta) * s + theta * iso)).sum::<f64>();
    let mut theta = 0.0;
    if inv(0.0) > gamma {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if inv(mid) > gamma {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        theta = hi;
    }
    let rec = Recovery { scale, theta };
    let powers = raw.iter().map(|&s| rec.apply(s, cfg)).collect();
    (powers, rec)
}

struct Candidate {
    t: f64,
    center: DVector<f64>,
    powers: Vec<f64>,
    evd: EvdResult,
    recovery: Recovery,
}

enum Step {
    Cut(DualCut),
    Feasible { upper: f64, cut: DualCut, candidate: Candidate },
}

fn step(z: &DVector<f64>, ctx: &Context) -> Step {
    let dual = DualPoint::from_vector(z);
    let evd = build_a_matrix(&dual, ctx.ch).evd();
    if let Some(cut) = constraint_cut(&dual, ctx.ch, &evd) {
        return Step::Cut(cut);
    }
    let k = ctx.ch.n_users();
    let root = dual.lambda1.sqrt();
    let raw: Vec<f64> = evd.eigenvalues.iter().map(|a| root / a.sqrt()).collect();
    let q = projections(&evd, ctx.ch);
    let gain = |user: usize, s: &[f64]| -> f64 { s.iter().zip(&q[user]).map(|(a, b)| a * b).sum() };

    let last = gain(k - 1, &raw);
    let mut g = DVector::zeros(k + 1);
    for i in 0..k - 1 {
        g[i] = gain(i, &raw) - last;
    }
    g[k - 1] = ctx.gamma - raw.iter().map(|s| 1.0 / s).sum::<f64>();
    g[k] = ctx.cfg.power - raw.iter().sum::<f64>();
    let upper = dual.lambda1 * ctx.gamma + dual.lambda2 * ctx.cfg.power
        - 2.0 * root * evd.eigenvalues.iter().map(|a| a.sqrt()).sum::<f64>();

    let (powers, recovery) = recover(&raw, ctx.cfg, ctx.gamma);
    let t = (0..k).map(|u| gain(u, &powers)).fold(f64::INFINITY, f64::min);
    Step::Feasible {
        upper,
        cut: DualCut { kind: CutKind::Objective, vector: g, depth: 0.0 },
        candidate: Candidate { t, center: z.clone(), powers, evd, recovery },
    }
}

/// Box containing every optimal dual point, from a Slater point
/// `a I` with equal relative slack `s` in both constraints:
/// `lambda1 Gamma s + lambda2 P s <= t* <= P max_k |h_k|^2`.
fn initial_ellipsoid(ctx: &Context) -> Ellipsoid {
    let k = ctx.ch.n_users();
    let n = (k + 1) as f64;
    let p = ctx.cfg.power;
    let c = ctx.gamma * p / (ctx.cfg.n_tx * ctx.cfg.n_tx) as f64 - 1.0;
    let s = 1.0 - 1.0 / (1.0 + c).sqrt();
    let t_hi = p * ctx.ch.max_gain();
    let l1 = t_hi / (ctx.gamma * s);
    let l2 = t_hi / (p * s);
    let mut center = vec![1.0 / k as f64; k - 1];
    center.push(0.5 * l1);
    center.push(0.5 * l2);
    let mut semi = vec![n.sqrt(); k - 1];
    semi.push(n.sqrt() * 0.5 * l1);
    semi.push(n.sqrt() * 0.5 * l2);
    Ellipsoid::axis_aligned(DVector::from_vec(center), &semi)
}

fn finish(
    covariance: TransmitCovariance,
    dual: DualPoint,
    dual_bound: f64,
    iterations: usize,
    source: SolutionSource,
    recovery: Recovery,
    trace: Vec<TraceRecord>,
    ch: &ChannelSet,
    cfg: &SystemConfig,
    gamma_bar: f64,
) -> P1Solution {
    let sigma2 = cfg.noise_comm;
    let s = covariance.matrix();
    let gains: Vec<f64> = ch.channels().iter().map(|h| s.quad_form(h)).collect();
    let t = gains.iter().copied().fold(f64::INFINITY, f64::min);
    let argmin_users = (0..gains.len()).filter(|&k| gains[k] <= t * (1.0 + 1e-9)).collect();
    let crb = crb_trace(&covariance, cfg);
    let gamma = cfg.trace_inverse_budget(gamma_bar);
    let inv = crb / cfg.crb_scale();
    let slack1 = if dual.lambda1 > 0.0 { dual.lambda1 * (inv - gamma) } else { 0.0 };
    let gap = ((dual_bound - t) / sigma2).max(0.0) / (1.0 + (dual_bound / sigma2).abs());
    P1Solution {
        rate: (1.0 + t / sigma2).log2(),
        t_star: t,
        gap,
        diagnostics: P1Diagnostics {
            iterations,
            source,
            primal: t,
            dual_bound,
            crb_residual: crb / gamma_bar - 1.0,
            power_residual: s.trace() / cfg.power - 1.0,
            slackness: (slack1, dual.lambda2 * (s.trace() - cfg.power)),
            argmin_users,
            recovery,
        },
        dual,
        covariance,
        trace,
    }
}

fn endpoint_solution(ep: &Endpoint, ch: &ChannelSet, cfg: &SystemConfig, gamma_bar: f64, iterations: usize) -> P1Solution {
    let mut mu = ep.dual_weights.clone();
    mu.pop();
    let dual = DualPoint { mu, lambda1: 0.0, lambda2: ep.snr_upper * cfg.noise_comm / cfg.power };
    finish(
        ep.covariance.clone(),
        dual,
        ep.snr_upper * cfg.noise_comm,
        iterations,
        SolutionSource::RateMaxEndpoint,
        Recovery { scale: 1.0, theta: 0.0 },
        Vec::new(),
        ch,
        cfg,
        gamma_bar,
    )
}

/// Maximizes the multicast rate subject to `CRB <= gamma_bar` and the power
/// budget.
pub fn solve_p1(ch: &ChannelSet, cfg: &SystemConfig, gamma_bar: f64, opts: &P1Options) -> Result<P1Solution> {
    cfg.validate()?;
    if ch.n_tx() != cfg.n_tx {
        return Err(Error::DimensionMismatch { expected: cfg.n_tx, got: ch.n_tx() });
    }
    let crb_min = cfg.crb_min();
    if !(gamma_bar >= crb_min * (1.0 - CRB_MIN_BAND)) {
        return Err(Error::Infeasible { gamma_bar, crb_min });
    }
    let k = ch.n_users();
    let uniform = DualPoint { mu: vec![1.0 / k as f64; k - 1], lambda1: 0.0, lambda2: 0.0 };
    // With every channel zero all designs give rate 0; isotropic is optimal.
    if gamma_bar <= crb_min * (1.0 + CRB_MIN_BAND) || ch.max_gain() == 0.0 {
        let iso = TransmitCovariance::isotropic(cfg);
        let t = ch.min_gain() * cfg.power / cfg.n_tx as f64;
        return Ok(finish(
            iso,
            uniform,
            t,
            0,
            SolutionSource::Isotropic,
            Recovery { scale: 1.0, theta: 1.0 },
            Vec::new(),
            ch,
            cfg,
            gamma_bar,
        ));
    }
    if let Some(ep) = &opts.rate_max {
        if ep.point.crb <= gamma_bar {
            return Ok(endpoint_solution(ep, ch, cfg, gamma_bar, 0));
        }
    }

    let ctx = Context { ch, cfg, gamma: cfg.trace_inverse_budget(gamma_bar) };
    let sigma2 = cfg.noise_comm;
    let max_iterations = opts.max_iterations.unwrap_or_else(|| 5000.max(200 * (k + 1) * (k + 1)));
    let mut ell = initial_ellipsoid(&ctx);
    let mut trace = Vec::new();
    let mut upper_best = f64::INFINITY;
    let mut best: Option<Candidate> = None;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iterations {
        iterations += 1;
        let center = ell.center().clone();
        let (cut, dual_value) = match step(&center, &ctx) {
            Step::Cut(cut) => (cut, f64::NAN),
            Step::Feasible { upper, mut cut, candidate } => {
                if upper < upper_best {
                    upper_best = upper;
                }
                if best.as_ref().is_none_or(|b| candidate.t > b.t) {
                    best = Some(candidate);
                }
                cut.depth = upper - upper_best;
                (cut, -upper)
            }
        };
        let outcome = ell.cut(&cut.vector, cut.depth);
        if opts.record_trace {
            trace.push(TraceRecord {
                iteration: iterations,
                dual_value,
                cut: cut.kind.tag(),
                log_volume: ell.log_volume(),
            });
        }
        if let Some(b) = &best {
            let gap = ((upper_best - b.t) / sigma2) / (1.0 + (upper_best / sigma2).abs());
            if gap <= opts.gap_tol {
                converged = true;
                break;
            }
        }
        if outcome != CutOutcome::Updated {
            break;
        }
    }

    match best {
        Some(b) if converged => {
            let s = TransmitCovariance::new_unchecked(b.evd.reconstruct_with_values(&b.powers));
            Ok(finish(
                s,
                DualPoint::from_vector(&b.center),
                upper_best,
                iterations,
                SolutionSource::DualEllipsoid,
                b.recovery,
                trace,
                ch,
                cfg,
                gamma_bar,
            ))
        }
        best => {
            // Near or beyond CRB_com the dual optimum sits on the boundary of
            // the domain and the ellipsoid stalls; the rate-max endpoint
            // answers if it satisfies the CRB budget.
            let ep = rate_max_point(ch, cfg, &RateMaxOptions::default())?;
            if ep.point.crb <= gamma_bar {
                return Ok(endpoint_solution(&ep, ch, cfg, gamma_bar, iterations));
            }
            Err(Error::NotConverged {
                iterations,
                primal: best.map_or(f64::NAN, |b| b.t / sigma2),
                dual: upper_best / sigma2,
            })
        }
    }
}

/// Splits the optimal covariance along `B = -sum mu_k H_k`: the range of `B`
/// carries the jointly used (ISAC) power, its null space dedicated sensing
/// power.
#[derive(Clone, Debug, Serialize)]
pub struct CovarianceSplit {
    /// `N_com = rank(B)`.
    pub n_com: usize,
    /// Eigenvalues of `B` on its range, ascending (most negative first).
    pub delta: Vec<f64>,
    /// Powers of the covariance along the matching eigenvectors of `B`.
    pub isac_powers: Vec<f64>,
    /// `sqrt(lambda1) (lambda2 + delta_i)^-1/2` mapped through the solver's
    /// recovery step.
    pub isac_formula: Vec<f64>,
    pub sensing_powers: Vec<f64>,
    /// `sqrt(lambda1 / lambda2)` mapped through the recovery step.
    pub sensing_formula: f64,
    #[serde(skip)]
    pub isac_part: HermitianMatrix,
    #[serde(skip)]
    pub sensing_part: HermitianMatrix,
    /// `||isac + sensing - S||_F / ||S||_F`.
    pub reconstruction_error: f64,
}

pub fn decompose_remark1(sol: &P1Solution, ch: &ChannelSet, cfg: &SystemConfig) -> Result<CovarianceSplit> {
    let dual = &sol.dual;
    if !(dual.lambda1 > 0.0) {
        return Err(Error::NotApplicable("decomposition needs lambda1 > 0".into()));
    }
    let n = ch.n_tx();
    let mut b = ComplexMatrix::zeros(n, n);
    for (h, w) in ch.channels().iter().zip(dual.weights()) {
        b -= h * h.adjoint() * Complex64::new(w, 0.0);
    }
    let evd = HermitianMatrix::symmetrized(b).evd();
    let scale = evd.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tau = 1e-8 * scale.max(f64::MIN_POSITIVE);
    // Descending order puts the null space first, then the negative range.
    let range: Vec<usize> = (0..n).filter(|&i| evd.eigenvalues[i] < -tau).rev().collect();
    let null: Vec<usize> = (0..n).filter(|&i| evd.eigenvalues[i] >= -tau).collect();

    let s = sol.covariance.matrix();
    let project = |idx: &[usize]| {
        let mut p = ComplexMatrix::zeros(n, n);
        for &i in idx {
            let u = evd.eigenvectors.column(i);
            p += u * u.adjoint();
        }
        HermitianMatrix::symmetrized(&p * s.as_matrix() * &p)
    };
    let isac_part = project(&range);
    let sensing_part = project(&null);
    let power_along = |i: usize| s.quad_form(&evd.eigenvectors.column(i).into_owned());
    let rec = sol.diagnostics.recovery;
    let root = dual.lambda1.sqrt();

    let delta: Vec<f64> = range.iter().map(|&i| evd.eigenvalues[i]).collect();
    let reconstruction_error = isac_part.add(&sensing_part).sub(s).frobenius_norm() / s.frobenius_norm();
    Ok(CovarianceSplit {
        n_com: range.len(),
        isac_powers: range.iter().map(|&i| power_along(i)).collect(),
        isac_formula: delta.iter().map(|d| rec.apply(root / (dual.lambda2 + d).sqrt(), cfg)).collect(),
        sensing_powers: null.iter().map(|&i| power_along(i)).collect(),
        sensing_formula: rec.apply((dual.lambda1 / dual.lambda2).sqrt(), cfg),
        delta,
        isac_part,
        sensing_part,
        reconstruction_error,
    })
}
