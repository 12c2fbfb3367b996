//! Run configuration and the batch drivers behind the command-line tool:
//! endpoints, CRB-threshold sweeps, user-count sweeps and Monte Carlo
//! checks.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize, Serializer};

use crate::beamforming::{solve_p2_sca, start_from_p1, ScaOptions};
use crate::covariance::{solve_p1, P1Options};
use crate::endpoints::{crb_min_point, rate_max_point, RateMaxOptions};
use crate::error::{Error, Result};
use crate::estimator::{mc_crb_check, synthesize_target, McReport, ScatterTarget};
use crate::model::{
    beamforming_rate, crb_trace, generate_channels, multicast_rate, ChannelModel, ChannelSet, SystemConfig,
    TransmitCovariance,
};
use crate::par::{map_indexed, Execution};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    #[default]
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Optimal,
    Beamforming,
    Isotropic,
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Flat JSON run configuration. Powers are in dB.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub symbols: usize,
    pub noise_comm_db: f64,
    pub noise_radar_db: f64,
    pub power_db: f64,
    pub users: usize,
    pub seed: u64,
    /// Channel CSV; when set, replaces generated channels.
    pub channels: Option<PathBuf>,
    pub channel_model: ChannelModel,
    pub gamma_lo: Option<f64>,
    pub gamma_hi: Option<f64>,
    pub points: usize,
    pub spacing: Spacing,
    pub schemes: Vec<Scheme>,
    /// CRB threshold for user-count sweeps and covariance Monte Carlo.
    pub gamma_bar: f64,
    pub k_list: Vec<usize>,
    /// Channel draws per user count.
    pub trials: usize,
    pub mc_trials: usize,
    pub mc_scheme: Scheme,
    pub p1_gap_tol: f64,
    pub rate_max_tol: f64,
    pub sca_tol: f64,
    pub sca_max_iterations: usize,
    pub bisection_tol: f64,
    pub execution: Execution,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_tx: 4,
            n_rx: 4,
            symbols: 256,
            noise_comm_db: 0.0,
            noise_radar_db: 0.0,
            power_db: 0.0,
            users: 3,
            seed: 0,
            channels: None,
            channel_model: ChannelModel::default(),
            gamma_lo: None,
            gamma_hi: None,
            points: 20,
            spacing: Spacing::default(),
            schemes: vec![Scheme::Optimal, Scheme::Beamforming, Scheme::Isotropic],
            gamma_bar: 0.5,
            k_list: vec![3, 5, 10, 15, 20, 25, 30, 35],
            trials: 20,
            mc_trials: 500,
            mc_scheme: Scheme::Isotropic,
            p1_gap_tol: 1e-4,
            rate_max_tol: 1e-5,
            sca_tol: 1e-4,
            sca_max_iterations: 30,
            bisection_tol: 1e-4,
            execution: Execution::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let run: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        run.validate()?;
        Ok(run)
    }

    pub fn system(&self) -> SystemConfig {
        SystemConfig {
            n_tx: self.n_tx,
            n_rx: self.n_rx,
            symbols: self.symbols,
            noise_comm: db_to_linear(self.noise_comm_db),
            noise_radar: db_to_linear(self.noise_radar_db),
            power: db_to_linear(self.power_db),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = self.system();
        cfg.validate()?;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.users < 2 {
            return bad(format!("users must be >= 2, got {}", self.users));
        }
        if self.points < 2 {
            return bad(format!("points must be >= 2, got {}", self.points));
        }
        if let Some(lo) = self.gamma_lo {
            if !(lo >= cfg.crb_min() * (1.0 - 1e-9)) {
                return bad(format!("gamma_lo {lo} is below CRB_min {}", cfg.crb_min()));
            }
        }
        if let (Some(lo), Some(hi)) = (self.gamma_lo, self.gamma_hi) {
            if !(hi > lo) {
                return bad(format!("gamma_hi {hi} must exceed gamma_lo {lo}"));
            }
        }
        if !(self.gamma_bar >= cfg.crb_min() * (1.0 - 1e-9)) {
            return bad(format!("gamma_bar {} is below CRB_min {}", self.gamma_bar, cfg.crb_min()));
        }
        if self.k_list.iter().any(|&k| k < 2) {
            return bad("every entry of k_list must be >= 2".into());
        }
        if self.trials == 0 || self.mc_trials == 0 {
            return bad("trials and mc_trials must be >= 1".into());
        }
        if self.mc_scheme == Scheme::Beamforming {
            return bad("mc_scheme must be optimal or isotropic".into());
        }
        for (name, v) in [
            ("p1_gap_tol", self.p1_gap_tol),
            ("rate_max_tol", self.rate_max_tol),
            ("sca_tol", self.sca_tol),
            ("bisection_tol", self.bisection_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    pub fn p1_options(&self) -> P1Options {
        P1Options { gap_tol: self.p1_gap_tol, ..P1Options::default() }
    }

    pub fn sca_options(&self) -> ScaOptions {
        ScaOptions {
            t_tol: self.bisection_tol,
            sca_tol: self.sca_tol,
            max_iterations: self.sca_max_iterations,
            p1: self.p1_options(),
            ..ScaOptions::default()
        }
    }

    pub fn rate_max_options(&self) -> RateMaxOptions {
        RateMaxOptions { tol: self.rate_max_tol, ..RateMaxOptions::default() }
    }

    /// Channels from the configured file, or generated from the seed.
    pub fn load_channels(&self) -> Result<ChannelSet> {
        let ch = match &self.channels {
            Some(path) => ChannelSet::load(path)?,
            None => generate_channels(self.channel_model, self.users, self.n_tx, self.seed)?,
        };
        if ch.n_tx() != self.n_tx {
            return Err(Error::InvalidConfig(format!(
                "channel file has {} antennas, config has {}",
                ch.n_tx(),
                self.n_tx
            )));
        }
        Ok(ch)
    }

    fn wants(&self, scheme: Scheme) -> bool {
        self.schemes.contains(&scheme)
    }
}

fn number_or_inf<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EndpointsReport {
    pub crb_min: f64,
    pub r_sen: f64,
    pub r_max: f64,
    #[serde(serialize_with = "number_or_inf")]
    pub crb_com: f64,
}

pub fn endpoints(run: &RunConfig, ch: &ChannelSet) -> Result<EndpointsReport> {
    let cfg = run.system();
    let (sen, _) = crb_min_point(ch, &cfg)?;
    let com = rate_max_point(ch, &cfg, &run.rate_max_options())?;
    Ok(EndpointsReport { crb_min: sen.crb, r_sen: sen.rate, r_max: com.point.rate, crb_com: com.point.crb })
}

/// Threshold grid from `gamma_lo` (default `CRB_min * 1.0001`) to
/// `min(CRB_com, gamma_hi)`.
pub fn gamma_grid(run: &RunConfig, crb_min: f64, crb_com: f64) -> Result<Vec<f64>> {
    let lo = run.gamma_lo.unwrap_or(crb_min * 1.0001);
    let hi = match run.gamma_hi {
        Some(hi) => hi.min(crb_com),
        None if crb_com.is_finite() => crb_com,
        None => {
            return Err(Error::InvalidConfig(
                "CRB_com is infinite for these channels; set gamma_hi".into(),
            ))
        }
    };
    if !(hi > lo) {
        return Err(Error::InvalidConfig(format!("empty threshold range [{lo}, {hi}]")));
    }
    let n = run.points;
    Ok((0..n)
        .map(|i| {
            let f = i as f64 / (n - 1) as f64;
            match run.spacing {
                Spacing::Linear => lo + f * (hi - lo),
                Spacing::Log => lo * (hi / lo).powf(f),
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Skipped,
    Infeasible,
    NotConverged,
    /// The returned design failed re-evaluation against the constraints.
    Uncertified,
    Failed,
}

impl RowStatus {
    fn as_str(&self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Skipped => "skipped",
            RowStatus::Infeasible => "infeasible",
            RowStatus::NotConverged => "not_converged",
            RowStatus::Uncertified => "uncertified",
            RowStatus::Failed => "failed",
        }
    }

    fn from_error(e: &Error) -> Self {
        match e {
            Error::Infeasible { .. } => RowStatus::Infeasible,
            Error::NotConverged { .. } => RowStatus::NotConverged,
            _ => RowStatus::Failed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeResult {
    pub rate: Option<f64>,
    pub status: RowStatus,
}

impl SchemeResult {
    fn skipped() -> Self {
        Self { rate: None, status: RowStatus::Skipped }
    }

    fn ok(rate: f64) -> Self {
        Self { rate: Some(rate), status: RowStatus::Ok }
    }

    fn failed(e: &Error) -> Self {
        Self { rate: None, status: RowStatus::from_error(e) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub gamma: f64,
    pub optimal: SchemeResult,
    pub beamforming: SchemeResult,
    pub isotropic: SchemeResult,
}

const CRB_SLACK: f64 = 1e-4;
const POWER_SLACK: f64 = 1e-6;

fn certify(s: &TransmitCovariance, cfg: &SystemConfig, gamma_bar: f64) -> bool {
    let lmin = s.matrix().evd().min_eigenvalue();
    lmin >= -1e-9 * cfg.power
        && s.power() <= cfg.power * (1.0 + POWER_SLACK)
        && crb_trace(s, cfg) <= gamma_bar * (1.0 + CRB_SLACK)
}

/// All requested schemes at one threshold. Rates are re-evaluated from the
/// returned designs before they are reported.
pub fn solve_point(run: &RunConfig, ch: &ChannelSet, gamma_bar: f64) -> SweepRow {
    let cfg = run.system();
    let crb_min = cfg.crb_min();
    let p1 = (run.wants(Scheme::Optimal) || run.wants(Scheme::Beamforming))
        .then(|| solve_p1(ch, &cfg, gamma_bar, &run.p1_options()));

    let optimal = match (&p1, run.wants(Scheme::Optimal)) {
        (_, false) | (None, _) => SchemeResult::skipped(),
        (Some(Err(e)), true) => SchemeResult::failed(e),
        (Some(Ok(sol)), true) => {
            if certify(&sol.covariance, &cfg, gamma_bar) {
                SchemeResult::ok(multicast_rate(&sol.covariance, ch, &cfg).unwrap_or(f64::NAN))
            } else {
                SchemeResult { rate: None, status: RowStatus::Uncertified }
            }
        }
    };

    let beamforming = match (&p1, run.wants(Scheme::Beamforming)) {
        (_, false) | (None, _) => SchemeResult::skipped(),
        (Some(Err(e)), true) => SchemeResult::failed(e),
        (Some(Ok(sol)), true) => {
            let opts = run.sca_options();
            let (init, upper) = start_from_p1(sol, &cfg, gamma_bar, opts.rho);
            let opts = ScaOptions { t_upper: Some(upper), ..opts };
            match solve_p2_sca(ch, &cfg, gamma_bar, Some(init), &opts) {
                Err(e) => SchemeResult::failed(&e),
                Ok(bf) => {
                    let sensing_ok = bf.sensing.evd().min_eigenvalue() >= -1e-8 * cfg.power;
                    if sensing_ok && certify(&bf.covariance, &cfg, gamma_bar) {
                        SchemeResult::ok(beamforming_rate(&bf.w, &bf.sensing, ch, &cfg).unwrap_or(f64::NAN))
                    } else {
                        SchemeResult { rate: None, status: RowStatus::Uncertified }
                    }
                }
            }
        }
    };

    let isotropic = if !run.wants(Scheme::Isotropic) {
        SchemeResult::skipped()
    } else if gamma_bar >= crb_min * (1.0 - 1e-9) {
        match crb_min_point(ch, &cfg) {
            Ok((point, _)) => SchemeResult::ok(point.rate),
            Err(e) => SchemeResult::failed(&e),
        }
    } else {
        SchemeResult { rate: None, status: RowStatus::Infeasible }
    };

    SweepRow { gamma: gamma_bar, optimal, beamforming, isotropic }
}

/// Every grid point of [`gamma_grid`], rows in grid order.
pub fn sweep(run: &RunConfig, ch: &ChannelSet) -> Result<Vec<SweepRow>> {
    let ends = endpoints(run, ch)?;
    let grid = gamma_grid(run, ends.crb_min, ends.crb_com)?;
    Ok(map_indexed(grid.len(), run.execution, |i| solve_point(run, ch, grid[i])))
}

fn fmt_rate(out: &mut String, rate: Option<f64>) {
    if let Some(r) = rate {
        let _ = write!(out, "{r:.10}");
    }
}

pub const SWEEP_HEADER: &str =
    "gamma,rate_optimal,rate_beamforming,rate_isotropic,status_optimal,status_beamforming,status_isotropic";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for row in rows {
        let _ = write!(out, "{:.10}", row.gamma);
        for r in [&row.optimal, &row.beamforming, &row.isotropic] {
            out.push(',');
            fmt_rate(&mut out, r.rate);
        }
        for r in [&row.optimal, &row.beamforming, &row.isotropic] {
            out.push(',');
            out.push_str(r.status.as_str());
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct KSweepRow {
    pub k: usize,
    pub rate_optimal: Option<f64>,
    pub rate_beamforming: Option<f64>,
    pub rate_isotropic: Option<f64>,
    /// Draws where a requested scheme did not return a certified rate.
    pub failures: usize,
}

/// Seed of channel draw `trial` for `k` users.
pub fn draw_seed(base: u64, k: usize, trial: usize) -> u64 {
    base ^ ((k as u64) << 40) ^ trial as u64
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Average rates at `run.gamma_bar` over `run.trials` channel draws for
/// every user count in `k_list`. Averages cover certified draws only.
pub fn k_sweep(run: &RunConfig, k_list: &[usize]) -> Result<Vec<KSweepRow>> {
    run.validate()?;
    if k_list.is_empty() || k_list.iter().any(|&k| k < 2) {
        return Err(Error::InvalidConfig("k_list must be non-empty with entries >= 2".into()));
    }
    let jobs: Vec<(usize, usize)> = k_list.iter().flat_map(|&k| (0..run.trials).map(move |t| (k, t))).collect();
    let rows = map_indexed(jobs.len(), run.execution, |j| -> Result<SweepRow> {
        let (k, t) = jobs[j];
        let ch = generate_channels(run.channel_model, k, run.n_tx, draw_seed(run.seed, k, t))?;
        Ok(solve_point(run, &ch, run.gamma_bar))
    });
    let rows: Vec<SweepRow> = rows.into_iter().collect::<Result<_>>()?;
    Ok(k_list
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let draws = &rows[i * run.trials..(i + 1) * run.trials];
            let failures = draws
                .iter()
                .filter(|r| {
                    [&r.optimal, &r.beamforming, &r.isotropic]
                        .iter()
                        .any(|s| !matches!(s.status, RowStatus::Ok | RowStatus::Skipped))
                })
                .count();
            KSweepRow {
                k,
                rate_optimal: mean(draws.iter().map(|r| r.optimal.rate)),
                rate_beamforming: mean(draws.iter().map(|r| r.beamforming.rate)),
                rate_isotropic: mean(draws.iter().map(|r| r.isotropic.rate)),
                failures,
            }
        })
        .collect())
}

pub fn k_sweep_csv(rows: &[KSweepRow]) -> String {
    let mut out = String::from("k,rate_optimal,rate_beamforming,rate_isotropic\n");
    for row in rows {
        let _ = write!(out, "{}", row.k);
        for r in [row.rate_optimal, row.rate_beamforming, row.rate_isotropic] {
            out.push(',');
            fmt_rate(&mut out, r);
        }
        out.push('\n');
    }
    out
}

/// Monte Carlo CRB check on the isotropic covariance or on the
/// covariance-optimal design at `run.gamma_bar`.
pub fn montecarlo(run: &RunConfig, ch: Option<&ChannelSet>) -> Result<McReport> {
    let cfg = run.system();
    let s = match run.mc_scheme {
        Scheme::Isotropic => TransmitCovariance::isotropic(&cfg),
        Scheme::Optimal => {
            let ch = ch.ok_or_else(|| Error::InvalidConfig("optimal scheme needs channels".into()))?;
            solve_p1(ch, &cfg, run.gamma_bar, &run.p1_options())?.covariance
        }
        Scheme::Beamforming => return Err(Error::InvalidConfig("mc_scheme must be optimal or isotropic".into())),
    };
    let target = synthesize_target(&ScatterTarget::equally_spaced(cfg.n_tx, run.seed)?, &cfg);
    mc_crb_check(&s, &target, &cfg, run.mc_trials, run.seed, run.execution)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

/// Writes `text` to `path`, or to stdout when `path` is `None`.
pub fn emit(text: &str, path: Option<&std::path::Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_run() -> RunConfig {
        RunConfig { users: 3, seed: 4, gamma_hi: Some(1.0), points: 4, ..RunConfig::default() }
    }

    #[test]
    fn config_parsing_and_db_conversion() {
        let run = RunConfig::from_json(r#"{"power_db": 10, "noise_comm_db": -3, "users": 5}"#).unwrap();
        let cfg = run.system();
        assert!((cfg.power - 10.0).abs() < 1e-12);
        assert!((cfg.noise_comm - 0.501187).abs() < 1e-6);
        assert_eq!(run.users, 5);
        assert_eq!(RunConfig::default().system(), SystemConfig::default());

        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"users": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"points": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"gamma_lo": 0.2}"#).is_err());
        assert!(RunConfig::from_json(r#"{"n_rx": 2}"#).is_err());
        assert!(RunConfig::from_json("not json").is_err());
        let spaced = RunConfig::from_json(r#"{"spacing": "linear", "schemes": ["optimal"], "channel_model": "rayleigh"}"#).unwrap();
        assert_eq!(spaced.spacing, Spacing::Linear);
        assert_eq!(spaced.channel_model, ChannelModel::Rayleigh);
    }

    #[test]
    fn grid_shapes() {
        let run = RunConfig { points: 5, gamma_hi: Some(4.0), ..RunConfig::default() };
        let g = gamma_grid(&run, 0.25, f64::INFINITY).unwrap();
        assert_eq!(g.len(), 5);
        assert!((g[0] - 0.25 * 1.0001).abs() < 1e-15);
        assert!((g[4] - 4.0).abs() < 1e-12);
        let ratios: Vec<f64> = g.windows(2).map(|w| w[1] / w[0]).collect();
        assert!(ratios.windows(2).all(|r| (r[0] - r[1]).abs() < 1e-12));
        let g = gamma_grid(&run, 0.25, 2.0).unwrap();
        assert!((g[4] - 2.0).abs() < 1e-12);
        let lin = gamma_grid(&RunConfig { spacing: Spacing::Linear, gamma_lo: Some(0.5), ..run.clone() }, 0.25, 8.0).unwrap();
        assert_eq!(lin, vec![0.5, 1.375, 2.25, 3.125, 4.0]);
        assert!(gamma_grid(&RunConfig::default(), 0.25, f64::INFINITY).is_err());
    }

    #[test]
    fn endpoints_json_shape() {
        let run = small_run();
        let e = endpoints(&run, &run.load_channels().unwrap()).unwrap();
        assert!((e.crb_min - 0.25).abs() < 1e-12);
        let json = serde_json::to_value(&e).unwrap();
        for key in ["crb_min", "r_sen", "r_max", "crb_com"] {
            assert!(json.get(key).is_some());
        }
        let inf = EndpointsReport { crb_com: f64::INFINITY, ..e };
        assert_eq!(serde_json::to_value(&inf).unwrap()["crb_com"], "inf");
    }

    #[test]
    fn sweep_rows_are_consistent() {
        let run = small_run();
        let ch = run.load_channels().unwrap();
        let rows = sweep(&run, &ch).unwrap();
        assert_eq!(rows.len(), 4);
        for w in rows.windows(2) {
            assert!(w[1].gamma > w[0].gamma);
            assert!(w[1].optimal.rate.unwrap() >= w[0].optimal.rate.unwrap() - 1e-4);
        }
        for r in &rows {
            assert_eq!(r.optimal.status, RowStatus::Ok);
            assert_eq!(r.beamforming.status, RowStatus::Ok);
            assert!(r.beamforming.rate.unwrap() <= r.optimal.rate.unwrap() + 1e-4);
            assert!(r.isotropic.rate.unwrap() <= r.optimal.rate.unwrap() + 1e-6);
        }
        let at_min = solve_point(&run, &ch, run.system().crb_min());
        assert!((at_min.optimal.rate.unwrap() - at_min.isotropic.rate.unwrap()).abs() < 1e-3);

        let csv = sweep_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], SWEEP_HEADER);
        assert_eq!(lines.len(), 5);
        assert!(lines[1].ends_with(",ok,ok,ok"));

        let seq = RunConfig { execution: Execution::Sequential, ..run };
        assert_eq!(sweep_csv(&sweep(&seq, &ch).unwrap()), csv);
    }

    #[test]
    fn skipped_schemes_leave_empty_cells() {
        let run = RunConfig { schemes: vec![Scheme::Isotropic], ..small_run() };
        let row = solve_point(&run, &run.load_channels().unwrap(), 0.5);
        assert_eq!(row.optimal, SchemeResult::skipped());
        let csv = sweep_csv(&[row]);
        assert!(csv.lines().nth(1).unwrap().starts_with("0.5000000000,,,"));
    }

    #[test]
    fn k_sweep_small() {
        let run = RunConfig { trials: 2, schemes: vec![Scheme::Optimal, Scheme::Isotropic], ..RunConfig::default() };
        let rows = k_sweep(&run, &[2, 6]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].rate_beamforming.is_none());
        for r in &rows {
            assert!(r.rate_isotropic.unwrap() <= r.rate_optimal.unwrap() + 1e-6);
            assert_eq!(r.failures, 0);
        }
        let csv = k_sweep_csv(&rows);
        assert!(csv.starts_with("k,rate_optimal,rate_beamforming,rate_isotropic\n2,"));
        assert!(k_sweep(&run, &[]).is_err());
    }

    #[test]
    fn montecarlo_schemes() {
        let run = RunConfig { mc_trials: 300, ..small_run() };
        let iso = montecarlo(&run, None).unwrap();
        assert!((0.97..=1.10).contains(&iso.ratio));
        let ch = run.load_channels().unwrap();
        let opt = montecarlo(&RunConfig { mc_scheme: Scheme::Optimal, ..run.clone() }, Some(&ch)).unwrap();
        assert!((0.97..=1.10).contains(&opt.ratio), "{opt:?}");
        assert!(opt.crb_trace <= 0.5 * (1.0 + 1e-4));
        assert!(montecarlo(&RunConfig { mc_scheme: Scheme::Optimal, ..run }, None).is_err());
    }
}
