//! System model: configuration, channels, transmit covariance and the
//! rate / SINR / CRB metrics every solver evaluates.

use std::io::{BufRead, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{ComplexVector, HermitianMatrix};

/// Antenna counts, radar interval length, noise powers and power budget.
/// Powers are linear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub symbols: usize,
    pub noise_comm: f64,
    pub noise_radar: f64,
    pub power: f64,
}

impl Default for SystemConfig {
    /// Four transmit and four receive antennas, `L = 256`, unit noise powers
    /// and `P = 0 dB`.
    fn default() -> Self {
        Self {
            n_tx: 4,
            n_rx: 4,
            symbols: 256,
            noise_comm: 1.0,
            noise_radar: 1.0,
            power: 1.0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_tx < 2 {
            return Err(Error::InvalidConfig(format!("n_tx must be > 1, got {}", self.n_tx)));
        }
        if self.n_rx < self.n_tx {
            return Err(Error::InvalidConfig(format!(
                "n_rx ({}) must be >= n_tx ({})",
                self.n_rx, self.n_tx
            )));
        }
        if self.symbols == 0 {
            return Err(Error::InvalidConfig("symbols must be >= 1".into()));
        }
        for (name, v) in [
            ("noise_comm", self.noise_comm),
            ("noise_radar", self.noise_radar),
            ("power", self.power),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `N_r sigma_r^2 / L`: maps `tr(S^-1)` to CRB units.
    pub fn crb_scale(&self) -> f64 {
        self.n_rx as f64 * self.noise_radar / self.symbols as f64
    }

    /// Minimum achievable CRB, `N_r N_t^2 sigma_r^2 / (L P)`.
    pub fn crb_min(&self) -> f64 {
        let nt = self.n_tx as f64;
        self.crb_scale() * nt * nt / self.power
    }

    /// Trace-inverse budget equivalent to a CRB threshold.
    pub fn trace_inverse_budget(&self, gamma_bar: f64) -> f64 {
        gamma_bar / self.crb_scale()
    }
}

/// Downlink channel vectors `h_k`, one per user.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    channels: Vec<ComplexVector>,
}

impl ChannelSet {
    pub fn new(channels: Vec<ComplexVector>) -> Result<Self> {
        if channels.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 users, got {}",
                channels.len()
            )));
        }
        let n = channels[0].len();
        if n == 0 {
            return Err(Error::InvalidConfig("empty channel vector".into()));
        }
        for h in &channels {
            if h.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: h.len() });
            }
            if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        Ok(Self { channels })
    }

    pub fn n_users(&self) -> usize {
        self.channels.len()
    }

    pub fn n_tx(&self) -> usize {
        self.channels[0].len()
    }

    pub fn channels(&self) -> &[ComplexVector] {
        &self.channels
    }

    pub fn get(&self, k: usize) -> &ComplexVector {
        &self.channels[k]
    }

    pub fn gains(&self) -> Vec<f64> {
        self.channels.iter().map(|h| h.norm_squared()).collect()
    }

    pub fn max_gain(&self) -> f64 {
        self.gains().into_iter().fold(0.0, f64::max)
    }

    pub fn min_gain(&self) -> f64 {
        self.gains().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// `H_k = h_k h_k^H`.
    pub fn gram(&self, k: usize) -> HermitianMatrix {
        HermitianMatrix::outer(&self.channels[k])
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.n_tx() {
            return Err(Error::DimensionMismatch { expected: self.n_tx(), got: n });
        }
        Ok(())
    }

    /// Parses the channel CSV: one row per user, `2 N_t` columns holding
    /// `re(h_1), im(h_1), ..., re(h_Nt), im(h_Nt)`. A non-numeric first row
    /// is taken as a header.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut rows = Vec::new();
        let mut width = None;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            let values = match parsed {
                Ok(v) => v,
                Err(_) if rows.is_empty() && width.is_none() => {
                    width = Some(fields.len());
                    continue;
                }
                Err(e) => {
                    return Err(Error::Parse { line: idx + 1, message: e.to_string() });
                }
            };
            if values.len() % 2 != 0 || values.is_empty() {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected an even number of columns, got {}", values.len()),
                });
            }
            if let Some(w) = width {
                if w != values.len() {
                    return Err(Error::Parse {
                        line: idx + 1,
                        message: format!("expected {w} columns, got {}", values.len()),
                    });
                }
            }
            width = Some(values.len());
            let h = ComplexVector::from_iterator(
                values.len() / 2,
                values.chunks(2).map(|p| Complex64::new(p[0], p[1])),
            );
            rows.push(h);
        }
        Self::new(rows)
    }

    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        let header: Vec<String> = (1..=self.n_tx())
            .flat_map(|i| [format!("re_h{i}"), format!("im_h{i}")])
            .collect();
        writeln!(writer, "{}", header.join(","))?;
        for h in &self.channels {
            let row: Vec<String> = h.iter().flat_map(|z| [z.re.to_string(), z.im.to_string()]).collect();
            writeln!(writer, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Rayleigh channels: entries i.i.d. `CN(0, 1)`. Deterministic in `seed`.
pub fn generate_rayleigh_channels(k: usize, n_tx: usize, seed: u64) -> Result<ChannelSet> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 users, got {k}")));
    }
    if n_tx == 0 {
        return Err(Error::InvalidConfig("n_tx must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channels = (0..k)
        .map(|_| ComplexVector::from_fn(n_tx, |_, _| cscg(&mut rng, 1.0)))
        .collect();
    ChannelSet::new(channels)
}

/// How user channels are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelModel {
    /// Entries i.i.d. `CN(0, 1)`.
    Rayleigh,
    /// Rayleigh directions with every user rescaled to `|h_k|^2 = N_t`, so
    /// users differ only in direction and the average entry power stays 1.
    #[default]
    NormalizedRayleigh,
}

/// Channels under `model`, deterministic in `seed`. Both models consume the
/// same random stream, so a seed gives the same directions under either.
pub fn generate_channels(model: ChannelModel, k: usize, n_tx: usize, seed: u64) -> Result<ChannelSet> {
    let raw = generate_rayleigh_channels(k, n_tx, seed)?;
    match model {
        ChannelModel::Rayleigh => Ok(raw),
        ChannelModel::NormalizedRayleigh => {
            let target = (n_tx as f64).sqrt();
            ChannelSet::new(raw.channels.iter().map(|h| h * Complex64::new(target / h.norm(), 0.0)).collect())
        }
    }
}

/// One circularly-symmetric complex Gaussian draw with the given variance.
pub(crate) fn cscg(rng: &mut impl rand::Rng, variance: f64) -> Complex64 {
    let sd = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * sd, im * sd)
}

/// Transmit covariance `S_x`: Hermitian PSD.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmitCovariance(HermitianMatrix);

impl TransmitCovariance {
    /// Accepts `S` if its smallest eigenvalue is `>= -1e-9 * max(tr S, 1)`.
    pub fn new(s: HermitianMatrix) -> Result<Self> {
        let min = s.evd().min_eigenvalue();
        if min < -1e-9 * s.trace().abs().max(1.0) {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        Ok(Self(s))
    }

    pub(crate) fn new_unchecked(s: HermitianMatrix) -> Self {
        Self(s)
    }

    /// `(P / N_t) I`.
    pub fn isotropic(cfg: &SystemConfig) -> Self {
        Self(HermitianMatrix::scaled_identity(cfg.n_tx, cfg.power / cfg.n_tx as f64))
    }

    pub fn zeros(n: usize) -> Self {
        Self(HermitianMatrix::zeros(n))
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> HermitianMatrix {
        self.0
    }

    pub fn power(&self) -> f64 {
        self.0.trace()
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }
}

/// A (CRB, rate) pair. `crb` may be `+inf`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CrPoint {
    pub crb: f64,
    pub rate: f64,
}

/// Received SNR of every user, `h_k^H S h_k / sigma^2`.
pub fn per_user_snr(s: &TransmitCovariance, ch: &ChannelSet, cfg: &SystemConfig) -> Result<Vec<f64>> {
    ch.check_dim(s.dim())?;
    Ok(ch
        .channels()
        .iter()
        .map(|h| s.matrix().quad_form(h).max(0.0) / cfg.noise_comm)
        .collect())
}

/// Multicast rate `min_k log2(1 + h_k^H S h_k / sigma^2)` in bits/s/Hz.
pub fn multicast_rate(s: &TransmitCovariance, ch: &ChannelSet, cfg: &SystemConfig) -> Result<f64> {
    let snr = per_user_snr(s, ch, cfg)?;
    let worst = snr.into_iter().fold(f64::INFINITY, f64::min);
    Ok((1.0 + worst).log2())
}

/// `(N_r sigma_r^2 / L) tr(S^-1)`, `+inf` for singular `S`.
pub fn crb_trace(s: &TransmitCovariance, cfg: &SystemConfig) -> f64 {
    let m = s.matrix();
    if m.trace() <= 0.0 {
        return f64::INFINITY;
    }
    cfg.crb_scale() * m.trace_inverse(m.default_pd_tol())
}

/// `|h^H w|^2 / (h^H S_s h + sigma^2)`.
pub fn sinr_with_sensing(
    w: &ComplexVector,
    sensing: &HermitianMatrix,
    h: &ComplexVector,
    cfg: &SystemConfig,
) -> Result<f64> {
    if w.len() != h.len() {
        return Err(Error::DimensionMismatch { expected: h.len(), got: w.len() });
    }
    if sensing.dim() != h.len() {
        return Err(Error::DimensionMismatch { expected: h.len(), got: sensing.dim() });
    }
    let signal = h.dotc(w).norm_sqr();
    let interference = sensing.quad_form(h).max(0.0);
    Ok(signal / (interference + cfg.noise_comm))
}

/// Multicast rate of an information beam with sensing interference.
pub fn beamforming_rate(
    w: &ComplexVector,
    sensing: &HermitianMatrix,
    ch: &ChannelSet,
    cfg: &SystemConfig,
) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for h in ch.channels() {
        worst = worst.min(sinr_with_sensing(w, sensing, h, cfg)?);
    }
    Ok((1.0 + worst).log2())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn e(n: usize, i: usize) -> ComplexVector {
        let mut v = ComplexVector::zeros(n);
        v[i] = c(1.0, 0.0);
        v
    }

    fn random_psd(n: usize, rng: &mut impl Rng) -> TransmitCovariance {
        let m = crate::hermitian::ComplexMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        TransmitCovariance::new(HermitianMatrix::symmetrized(&m * m.adjoint())).unwrap()
    }

    #[test]
    fn config_validation() {
        let cfg = SystemConfig::default();
        cfg.validate().unwrap();
        assert!(SystemConfig { n_rx: 3, ..cfg.clone() }.validate().is_err());
        assert!(SystemConfig { n_tx: 1, n_rx: 1, ..cfg.clone() }.validate().is_err());
        assert!(SystemConfig { power: 0.0, ..cfg.clone() }.validate().is_err());
        assert!(SystemConfig { symbols: 0, ..cfg }.validate().is_err());
    }

    #[test]
    fn rate_examples() {
        let cfg = SystemConfig::default();
        // Aligned rank-one covariance; the K > 1 requirement is met with a duplicate user.
        let ch = ChannelSet::new(vec![e(4, 0), e(4, 0)]).unwrap();
        let s = TransmitCovariance::new(HermitianMatrix::outer(&e(4, 0))).unwrap();
        assert!((multicast_rate(&s, &ch, &cfg).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(multicast_rate(&TransmitCovariance::zeros(4), &ch, &cfg).unwrap(), 0.0);

        let ch = generate_rayleigh_channels(5, 4, 9).unwrap();
        let iso = TransmitCovariance::isotropic(&cfg);
        let r_sen = (1.0 + cfg.power / 4.0 * ch.min_gain() / cfg.noise_comm).log2();
        assert!((multicast_rate(&iso, &ch, &cfg).unwrap() - r_sen).abs() < 1e-12);
        assert!(multicast_rate(&TransmitCovariance::isotropic(&SystemConfig { n_tx: 3, n_rx: 3, ..cfg.clone() }), &ch, &cfg).is_err());
    }

    #[test]
    fn crb_examples() {
        let cfg = SystemConfig::default();
        let iso = TransmitCovariance::isotropic(&cfg);
        assert!((crb_trace(&iso, &cfg) - 0.25).abs() < 1e-12);
        let rank_one = TransmitCovariance::new(HermitianMatrix::outer(&e(4, 2))).unwrap();
        assert!(crb_trace(&rank_one, &cfg).is_infinite());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_psd(4, &mut rng);
        let doubled = TransmitCovariance::new(s.matrix().scale(2.0)).unwrap();
        assert!((crb_trace(&doubled, &cfg) - crb_trace(&s, &cfg) / 2.0).abs() < 1e-9 * crb_trace(&s, &cfg));
    }

    #[test]
    fn sinr_examples() {
        let cfg = SystemConfig::default();
        let h = e(4, 0);
        let w = e(4, 0);
        let v = sinr_with_sensing(&w, &HermitianMatrix::identity(4), &h, &cfg).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        assert_eq!(sinr_with_sensing(&ComplexVector::zeros(4), &HermitianMatrix::identity(4), &h, &cfg).unwrap(), 0.0);
        let w = ComplexVector::from_vec(vec![c(0.3, 0.1), c(-0.2, 0.5), c(0.0, 0.0), c(1.0, -1.0)]);
        let no_sense = sinr_with_sensing(&w, &HermitianMatrix::zeros(4), &h, &cfg).unwrap();
        assert!((no_sense - h.dotc(&w).norm_sqr()).abs() < 1e-15);
        assert!(sinr_with_sensing(&ComplexVector::zeros(3), &HermitianMatrix::zeros(4), &h, &cfg).is_err());
    }

    #[test]
    fn beamforming_rate_consistency_and_bound() {
        let cfg = SystemConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = ComplexVector::from_fn(4, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let ch = ChannelSet::new(vec![h.clone(), h.scale(2.0)]).unwrap();
        let w = ComplexVector::from_fn(4, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let bf = beamforming_rate(&w, &HermitianMatrix::zeros(4), &ch, &cfg).unwrap();
        let mc = multicast_rate(&TransmitCovariance::new(HermitianMatrix::outer(&w)).unwrap(), &ch, &cfg).unwrap();
        assert!((bf - mc).abs() < 1e-12);
        assert_eq!(beamforming_rate(&ComplexVector::zeros(4), &HermitianMatrix::identity(4), &ch, &cfg).unwrap(), 0.0);

        for seed in 0..200 {
            let ch = generate_rayleigh_channels(3, 4, seed).unwrap();
            let ss = random_psd(4, &mut rng);
            let w = ComplexVector::from_fn(4, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let bf = beamforming_rate(&w, ss.matrix(), &ch, &cfg).unwrap();
            let total = TransmitCovariance::new(ss.matrix().add(&HermitianMatrix::outer(&w))).unwrap();
            assert!(bf <= multicast_rate(&total, &ch, &cfg).unwrap() + 1e-12);
        }
    }

    #[test]
    fn rayleigh_generation() {
        let a = generate_rayleigh_channels(35, 4, 42).unwrap();
        let b = generate_rayleigh_channels(35, 4, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_users(), 35);
        assert!(a.channels().iter().all(|h| h.len() == 4));
        assert!(generate_rayleigh_channels(1, 4, 0).is_err());

        let big = generate_rayleigh_channels(25_000, 4, 3).unwrap();
        let n = (big.n_users() * 4) as f64;
        let var: f64 = big.channels().iter().flat_map(|h| h.iter()).map(|z| z.norm_sqr()).sum::<f64>() / n;
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn normalized_rayleigh_equalizes_gains() {
        let raw = generate_channels(ChannelModel::Rayleigh, 6, 4, 8).unwrap();
        assert_eq!(raw, generate_rayleigh_channels(6, 4, 8).unwrap());
        let norm = generate_channels(ChannelModel::NormalizedRayleigh, 6, 4, 8).unwrap();
        for (a, b) in raw.channels().iter().zip(norm.channels()) {
            assert!((b.norm_squared() - 4.0).abs() < 1e-12);
            assert!((a.dotc(b).norm() - a.norm() * b.norm()).abs() < 1e-12);
        }
        assert!(generate_channels(ChannelModel::NormalizedRayleigh, 1, 4, 0).is_err());
    }

    #[test]
    fn monotonicity_under_psd_ordering() {
        let cfg = SystemConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for seed in 0..100 {
            let ch = generate_rayleigh_channels(4, 4, seed).unwrap();
            let s = random_psd(4, &mut rng);
            let d = random_psd(4, &mut rng);
            let bigger = TransmitCovariance::new(s.matrix().add(d.matrix())).unwrap();
            assert!(multicast_rate(&bigger, &ch, &cfg).unwrap() >= multicast_rate(&s, &ch, &cfg).unwrap() - 1e-12);
            assert!(crb_trace(&bigger, &cfg) <= crb_trace(&s, &cfg) * (1.0 + 1e-12));
            // AM-HM: crb >= N_r sigma_r^2 N_t^2 / (L tr S).
            let bound = cfg.crb_scale() * 16.0 / s.power();
            assert!(crb_trace(&s, &cfg) >= bound * (1.0 - 1e-12));
        }
        let iso = TransmitCovariance::isotropic(&cfg);
        assert!((crb_trace(&iso, &cfg) - cfg.crb_scale() * 16.0 / iso.power()).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_and_header_detection() {
        let ch = generate_rayleigh_channels(3, 4, 5).unwrap();
        let mut buf = Vec::new();
        ch.write_csv(&mut buf).unwrap();
        let back = ChannelSet::read_csv(buf.as_slice()).unwrap();
        assert_eq!(ch, back);

        let no_header = "1,0,0,0\n0,0,1,0\n";
        let parsed = ChannelSet::read_csv(no_header.as_bytes()).unwrap();
        assert_eq!(parsed.n_tx(), 2);
        assert_eq!(parsed.get(1)[1], c(1.0, 0.0));

        assert!(ChannelSet::read_csv("1,0,0\n0,1,0\n".as_bytes()).is_err());
        assert!(ChannelSet::read_csv("1,0,0,0\n0,x,1,0\n".as_bytes()).is_err());
        assert!(ChannelSet::read_csv("1,0,0,0\n".as_bytes()).is_err());
    }
}
