//! Single information beam plus dedicated sensing covariance.
//!
//! The transmit covariance is `S = w w^H + S_s` with `S_s >= 0`. Every user
//! decodes the beam `w` while `S_s` acts as interference, so the achievable
//! multicast SINR is `min_k |h_k^H w|^2 / (h_k^H S_s h_k + sigma^2)`.
//! The SINR constraint is non-convex in `w`; successive convex
//! approximation replaces `|h^H w|^2` by its tangent at the current beam,
//! and each convexified problem is solved by bisection on the SINR target
//! with an ellipsoid feasibility search over `(w, S)`.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::covariance::{solve_p1, P1Options, P1Solution};
use crate::ellipsoid::{find_feasible, Ellipsoid, Feasibility, FeasibilityOptions, SearchOutcome};
use crate::error::{Error, Result};
use crate::hermitian::{real_param_count, ComplexVector, HermitianMatrix};
use crate::model::{crb_trace, ChannelSet, SystemConfig, TransmitCovariance};

/// Tangent lower bound `psi(w) = 2 Re(w^H v) - c` of `|h^H w|^2` at a local
/// point `w_l`, with `v = h h^H w_l` and `c = |h^H w_l|^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct TaylorBound {
    pub gradient: ComplexVector,
    pub offset: f64,
}

impl TaylorBound {
    pub fn eval(&self, w: &ComplexVector) -> f64 {
        2.0 * w.dotc(&self.gradient).re - self.offset
    }
}

pub fn taylor_lower_bound(w_local: &ComplexVector, h: &ComplexVector) -> TaylorBound {
    let proj = h.dotc(w_local);
    TaylorBound {
        gradient: h * proj,
        offset: proj.norm_sqr(),
    }
}

/// Beam and total covariance packed as real coordinates:
/// `[Re w, Im w, params(S)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityVars {
    pub w: ComplexVector,
    pub s: HermitianMatrix,
}

impl FeasibilityVars {
    pub fn dim(n: usize) -> usize {
        2 * n + real_param_count(n)
    }

    pub fn encode(&self) -> DVector<f64> {
        let n = self.w.len();
        let mut out = vec![0.0; Self::dim(n)];
        for i in 0..n {
            out[i] = self.w[i].re;
            out[n + i] = self.w[i].im;
        }
        self.s.to_real_params(&mut out[2 * n..]);
        DVector::from_vec(out)
    }

    pub fn decode(n: usize, x: &[f64]) -> Self {
        let w = ComplexVector::from_fn(n, |i, _| Complex64::new(x[i], x[n + i]));
        Self { w, s: HermitianMatrix::from_real_params(n, &x[2 * n..]) }
    }

    pub fn sensing(&self) -> HermitianMatrix {
        self.s.sub(&HermitianMatrix::outer(&self.w))
    }
}

/// True multicast SINR `min_k |h_k^H w|^2 / (h_k^H (S - w w^H) h_k + sigma^2)`.
pub fn true_sinr(vars: &FeasibilityVars, ch: &ChannelSet, cfg: &SystemConfig) -> f64 {
    ch.channels()
        .iter()
        .map(|h| {
            let signal = h.dotc(&vars.w).norm_sqr();
            signal / ((vars.s.quad_form(h) - signal).max(0.0) + cfg.noise_comm)
        })
        .fold(f64::INFINITY, f64::min)
}

/// SINR of the linearized constraint at `vars` for tangents `bounds`.
fn linearized_sinr(vars: &FeasibilityVars, bounds: &[TaylorBound], ch: &ChannelSet, cfg: &SystemConfig) -> f64 {
    ch.channels()
        .iter()
        .zip(bounds)
        .map(|(h, b)| {
            let psi = b.eval(&vars.w);
            psi / (vars.s.quad_form(h) - psi + cfg.noise_comm)
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug)]
pub enum FeasibilityOutcome {
    Feasible(FeasibilityVars),
    /// `certified` is true when a deep cut proved emptiness; otherwise the
    /// search ran out of volume or iterations.
    Infeasible { certified: bool },
}

/// Solver settings for one convexified problem and the outer loop.
#[derive(Clone, Debug)]
pub struct ScaOptions {
    /// Bisection stops at `t_tol * (1 + bracket top)`.
    pub t_tol: f64,
    /// Outer loop stops when the true SINR improves by less than this.
    pub sca_tol: f64,
    pub max_iterations: usize,
    /// Share of the principal eigen-power of the initial covariance given
    /// to the beam.
    pub rho: f64,
    pub feasibility: FeasibilityOptions,
    /// Upper bracket for the SINR; defaults to the covariance-optimal SNR.
    pub t_upper: Option<f64>,
    pub p1: P1Options,
    pub record_trace: bool,
}

impl Default for ScaOptions {
    fn default() -> Self {
        Self {
            t_tol: 1e-4,
            sca_tol: 1e-4,
            max_iterations: 30,
            rho: 0.9,
            feasibility: FeasibilityOptions { max_iterations: 40_000, volume_tol: 1e-6 },
            t_upper: None,
            p1: P1Options::default(),
            record_trace: false,
        }
    }
}

struct Problem<'a> {
    ch: &'a ChannelSet,
    cfg: &'a SystemConfig,
    /// Trace-inverse budget.
    gamma: f64,
    eps_pd: f64,
}

impl Problem<'_> {
    fn new<'a>(ch: &'a ChannelSet, cfg: &'a SystemConfig, gamma_bar: f64) -> Result<Problem<'a>> {
        cfg.validate()?;
        if ch.n_tx() != cfg.n_tx {
            return Err(Error::DimensionMismatch { expected: cfg.n_tx, got: ch.n_tx() });
        }
        let crb_min = cfg.crb_min();
        if !(gamma_bar >= crb_min * (1.0 - 1e-9)) {
            return Err(Error::Infeasible { gamma_bar, crb_min });
        }
        // At CRB_min the covariance is pinned to a single point, which an
        // ellipsoid cannot hit; relax by far less than the CRB tolerance.
        let effective = gamma_bar.max(crb_min * (1.0 + 1e-5));
        Ok(Problem {
            ch,
            cfg,
            gamma: cfg.trace_inverse_budget(effective),
            eps_pd: 1e-8 * cfg.power / cfg.n_tx as f64,
        })
    }

    /// First violated constraint of the convexified problem at `x`.
    fn oracle(&self, x: &DVector<f64>, t: f64, bounds: &[TaylorBound], grad: &mut [f64]) -> Feasibility {
        let n = self.cfg.n_tx;
        let vars = FeasibilityVars::decode(n, x.as_slice());
        let s = &vars.s;
        let emit = |grad: &mut [f64], w_grad: Option<&ComplexVector>, s_grad: &HermitianMatrix, violation: f64| {
            grad.iter_mut().for_each(|g| *g = 0.0);
            if let Some(wg) = w_grad {
                for i in 0..n {
                    grad[i] = wg[i].re;
                    grad[n + i] = wg[i].im;
                }
            }
            s_grad.trace_gradient(&mut grad[2 * n..]);
            Feasibility::Violated { violation, subgradient: DVector::from_column_slice(grad) }
        };

        let tr = s.trace();
        if tr > self.cfg.power {
            return emit(grad, None, &HermitianMatrix::identity(n), tr - self.cfg.power);
        }
        for (h, b) in self.ch.channels().iter().zip(bounds) {
            let psi = b.eval(&vars.w);
            let f = t * (s.quad_form(h) + self.cfg.noise_comm) - (1.0 + t) * psi;
            if f > 0.0 {
                let wg = &b.gradient * Complex64::new(-2.0 * (1.0 + t), 0.0);
                return emit(grad, Some(&wg), &HermitianMatrix::outer(h).scale(t), f);
            }
        }
        let evd = s.evd();
        let lmin = evd.min_eigenvalue();
        if lmin < self.eps_pd {
            let v = evd.eigenvectors.column(n - 1).into_owned();
            return emit(grad, None, &HermitianMatrix::outer(&v).scale(-1.0), self.eps_pd - lmin);
        }
        let inv_trace: f64 = evd.eigenvalues.iter().map(|a| 1.0 / a).sum();
        if inv_trace > self.gamma {
            let g = evd.reconstruct_with(|a| -1.0 / (a * a));
            return emit(grad, None, &g, inv_trace - self.gamma);
        }
        let (smin, v) = vars.sensing().min_eigpair();
        if smin < 0.0 {
            let vw = v.dotc(&vars.w);
            let wg = &v * (vw * 2.0);
            return emit(grad, Some(&wg), &HermitianMatrix::outer(&v).scale(-1.0), -smin);
        }
        Feasibility::Feasible
    }

    /// Ball around `center` containing every `(w, S)` with `tr S <= P` and
    /// `S >= w w^H`: both points have `|w|^2 <= P` and `|S|_F <= P`.
    fn ellipsoid(&self, center: &FeasibilityVars) -> Ellipsoid {
        let p = self.cfg.power;
        let radius = 1.01 * (4.0 * p + 4.0 * p * p).sqrt();
        Ellipsoid::ball(center.encode(), radius)
    }
}

fn bounds_at(w_local: &ComplexVector, ch: &ChannelSet) -> Vec<TaylorBound> {
    ch.channels().iter().map(|h| taylor_lower_bound(w_local, h)).collect()
}

fn isotropic_start(cfg: &SystemConfig) -> FeasibilityVars {
    FeasibilityVars {
        w: ComplexVector::zeros(cfg.n_tx),
        s: HermitianMatrix::scaled_identity(cfg.n_tx, cfg.power / cfg.n_tx as f64),
    }
}

fn search(problem: &Problem, t: f64, bounds: &[TaylorBound], center: &FeasibilityVars, opts: &FeasibilityOptions) -> FeasibilityOutcome {
    let mut grad = vec![0.0; FeasibilityVars::dim(problem.cfg.n_tx)];
    match find_feasible(problem.ellipsoid(center), opts, |x| problem.oracle(x, t, bounds, &mut grad)) {
        SearchOutcome::Found(x) => FeasibilityOutcome::Feasible(FeasibilityVars::decode(problem.cfg.n_tx, x.as_slice())),
        SearchOutcome::NotFound { certified, .. } => FeasibilityOutcome::Infeasible { certified },
    }
}

/// Feasibility of the convexified problem at SINR target `t`, linearized
/// at `w_local`.
pub fn feasibility_p23(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    gamma_bar: f64,
    t: f64,
    w_local: &ComplexVector,
    opts: &FeasibilityOptions,
) -> Result<FeasibilityOutcome> {
    let problem = Problem::new(ch, cfg, gamma_bar)?;
    let bounds = bounds_at(w_local, ch);
    Ok(search(&problem, t.max(0.0), &bounds, &isotropic_start(cfg), opts))
}

/// Result of one bisection.
#[derive(Clone, Debug)]
pub struct P22Solution {
    pub t: f64,
    pub vars: FeasibilityVars,
    /// Bisection steps rejected without a certificate.
    pub uncertified: usize,
}

fn bisect(
    problem: &Problem,
    w_local: &ComplexVector,
    start: (f64, FeasibilityVars),
    top: f64,
    opts: &ScaOptions,
) -> P22Solution {
    let bounds = bounds_at(w_local, problem.ch);
    let (mut lo, mut best) = start;
    let mut hi = top.max(lo);
    let width = opts.t_tol * (1.0 + top);
    let mut uncertified = 0;
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        match search(problem, mid, &bounds, &best, &opts.feasibility) {
            FeasibilityOutcome::Feasible(vars) => {
                lo = linearized_sinr(&vars, &bounds, problem.ch, problem.cfg).max(mid);
                best = vars;
            }
            FeasibilityOutcome::Infeasible { certified } => {
                if !certified {
                    uncertified += 1;
                }
                hi = mid;
            }
        }
    }
    P22Solution { t: lo, vars: best, uncertified }
}

/// Bisection on the SINR target for the problem linearized at `w_local`.
/// `start` is a known feasible point with its SINR; without one the search
/// starts from zero.
pub fn solve_p22(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    gamma_bar: f64,
    w_local: &ComplexVector,
    start: Option<(f64, FeasibilityVars)>,
    opts: &ScaOptions,
) -> Result<P22Solution> {
    let problem = Problem::new(ch, cfg, gamma_bar)?;
    let top = opts.t_upper.unwrap_or(cfg.power * ch.max_gain() / cfg.noise_comm);
    let start = match start {
        Some(s) => s,
        None => {
            let bounds = bounds_at(w_local, ch);
            match search(&problem, 0.0, &bounds, &isotropic_start(cfg), &opts.feasibility) {
                FeasibilityOutcome::Feasible(vars) => (0.0, vars),
                FeasibilityOutcome::Infeasible { .. } => {
                    return Err(Error::NotConverged { iterations: 0, primal: f64::NAN, dual: top })
                }
            }
        }
    };
    Ok(bisect(&problem, w_local, start, top, opts))
}

#[derive(Clone, Debug, Serialize)]
pub struct ScaRecord {
    pub iteration: usize,
    /// True SINR of the iterate.
    pub t: f64,
    pub power_residual: f64,
    pub crb_residual: f64,
    /// Smallest eigenvalue of the sensing covariance.
    pub sensing_min_eig: f64,
    pub uncertified: usize,
}

#[derive(Clone, Debug)]
pub struct BeamformingSolution {
    pub w: ComplexVector,
    pub covariance: TransmitCovariance,
    pub sensing: HermitianMatrix,
    pub t: f64,
    pub rate: f64,
    pub iterations: usize,
    /// True SINR of the initial point and of every iterate.
    pub history: Vec<f64>,
    pub trace: Vec<ScaRecord>,
}

fn record(iteration: usize, vars: &FeasibilityVars, t: f64, uncertified: usize, cfg: &SystemConfig, gamma_bar: f64) -> ScaRecord {
    let crb = crb_trace(&TransmitCovariance::new_unchecked(vars.s.clone()), cfg);
    ScaRecord {
        iteration,
        t,
        power_residual: vars.s.trace() / cfg.power - 1.0,
        crb_residual: crb / gamma_bar - 1.0,
        sensing_min_eig: vars.sensing().evd().min_eigenvalue(),
        uncertified,
    }
}

/// Initial point from a covariance-optimal solution: the beam takes a
/// share `rho` of its strongest eigenmode, the rest stays as sensing power.
/// Also returns the SINR upper bound certified by its dual.
pub fn start_from_p1(p1: &P1Solution, cfg: &SystemConfig, gamma_bar: f64, rho: f64) -> (FeasibilityVars, f64) {
    let upper = p1.diagnostics.dual_bound / cfg.noise_comm;
    let s = p1.covariance.matrix().clone();
    let crb = crb_trace(&p1.covariance, cfg);
    let s = if crb <= gamma_bar && s.evd().min_eigenvalue() > 0.0 {
        s
    } else {
        HermitianMatrix::scaled_identity(cfg.n_tx, cfg.power / cfg.n_tx as f64)
    };
    let evd = s.evd();
    let u = evd.eigenvectors.column(0).into_owned();
    let w = u * Complex64::new((rho * evd.eigenvalues[0]).sqrt(), 0.0);
    (FeasibilityVars { w, s }, upper)
}

fn default_start(ch: &ChannelSet, cfg: &SystemConfig, gamma_bar: f64, opts: &ScaOptions) -> Result<(FeasibilityVars, Option<f64>)> {
    let p1 = solve_p1(ch, cfg, gamma_bar, &opts.p1)?;
    let (vars, upper) = start_from_p1(&p1, cfg, gamma_bar, opts.rho);
    Ok((vars, Some(upper)))
}

/// Successive convex approximation for the beamforming design. `init` must
/// satisfy the power, CRB and `S >= w w^H` constraints; by default it is
/// derived from the covariance-optimal solution.
pub fn solve_p2_sca(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    gamma_bar: f64,
    init: Option<FeasibilityVars>,
    opts: &ScaOptions,
) -> Result<BeamformingSolution> {
    let problem = Problem::new(ch, cfg, gamma_bar)?;
    let (mut vars, p1_upper) = match init {
        Some(v) => (v, None),
        None => default_start(ch, cfg, gamma_bar, opts)?,
    };
    let top = opts
        .t_upper
        .or(p1_upper)
        .unwrap_or(cfg.power * ch.max_gain() / cfg.noise_comm);

    let mut t = true_sinr(&vars, ch, cfg);
    let mut history = vec![t];
    let mut trace = Vec::new();
    if opts.record_trace {
        trace.push(record(0, &vars, t, 0, cfg, gamma_bar));
    }
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let w_local = vars.w.clone();
        let sol = bisect(&problem, &w_local, (t, vars.clone()), top, opts);
        let next = true_sinr(&sol.vars, ch, cfg);
        // Tangency makes the previous iterate feasible at its own SINR, so
        // the true SINR can only go up.
        let improved = next - t;
        if next >= t {
            vars = sol.vars;
            t = next;
        }
        history.push(t);
        if opts.record_trace {
            trace.push(record(iterations, &vars, t, sol.uncertified, cfg, gamma_bar));
        }
        if improved < opts.sca_tol {
            break;
        }
    }

    let sensing = vars.sensing();
    Ok(BeamformingSolution {
        rate: (1.0 + t).log2(),
        t,
        w: vars.w,
        covariance: TransmitCovariance::new_unchecked(vars.s),
        sensing,
        iterations,
        history,
        trace,
    })
}
