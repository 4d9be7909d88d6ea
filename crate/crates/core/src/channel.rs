//! Doubly dispersive channel realizations, chirp-periodic prefix and AWGN.
//!
//! A realization is a list of paths with complex gain `h_i`, integer delay
//! `l_i` and normalized Doppler `ν_i = N·f_i`. Its impulse response at time
//! `n` is `g_n(l) = Σ h_i exp(-j2π f_i n) δ(l - l_i)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::daft::{cis_turns, AfdmConfig, C64};
use crate::error::{check_len, Error, Result};

/// One propagation path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "PathRecord", into = "PathRecord")]
pub struct Path {
    pub gain: C64,
    pub delay: usize,
    /// Normalized Doppler shift `ν`.
    pub doppler: f64,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
struct PathRecord {
    gain_re: f64,
    gain_im: f64,
    delay: usize,
    doppler: f64,
}

impl From<PathRecord> for Path {
    fn from(r: PathRecord) -> Self {
        Path {
            gain: C64::new(r.gain_re, r.gain_im),
            delay: r.delay,
            doppler: r.doppler,
        }
    }
}

impl From<Path> for PathRecord {
    fn from(p: Path) -> Self {
        PathRecord {
            gain_re: p.gain.re,
            gain_im: p.gain.im,
            delay: p.delay,
            doppler: p.doppler,
        }
    }
}

/// Whether sampled Doppler shifts are snapped to the integer grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DopplerMode {
    Integer,
    #[default]
    Fractional,
}

impl std::str::FromStr for DopplerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "integer" => Ok(DopplerMode::Integer),
            "fractional" => Ok(DopplerMode::Fractional),
            other => Err(Error::InvalidConfig(format!("unknown Doppler mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub paths: Vec<Path>,
}

impl ChannelRealization {
    pub fn new(paths: Vec<Path>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::InvalidChannel("a channel needs at least one path".into()));
        }
        Ok(ChannelRealization { paths })
    }

    /// Single unit-gain path with no delay and no Doppler.
    pub fn identity() -> Self {
        ChannelRealization {
            paths: vec![Path {
                gain: C64::new(1.0, 0.0),
                delay: 0,
                doppler: 0.0,
            }],
        }
    }

    pub fn l_max(&self) -> usize {
        self.paths.iter().map(|p| p.delay).max().unwrap_or(0)
    }

    pub fn energy(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm_sqr()).sum()
    }

    /// Checks the realization against the waveform: `l_max < N` and
    /// `|ν_i| ≤ ν_max`.
    pub fn validate(&self, cfg: &AfdmConfig) -> Result<()> {
        if self.paths.is_empty() {
            return Err(Error::InvalidChannel("a channel needs at least one path".into()));
        }
        if self.l_max() >= cfg.n {
            return Err(Error::InvalidChannel(format!(
                "maximum delay {} must be below N = {}",
                self.l_max(),
                cfg.n
            )));
        }
        for p in &self.paths {
            if !p.doppler.is_finite() || p.doppler.abs() > cfg.nu_max + 1e-12 {
                return Err(Error::InvalidChannel(format!(
                    "Doppler {} outside [-{}, {}]",
                    p.doppler, cfg.nu_max, cfg.nu_max
                )));
            }
        }
        Ok(())
    }

    pub fn is_integer_doppler(&self) -> bool {
        self.paths
            .iter()
            .all(|p| (p.doppler - p.doppler.round()).abs() < 1e-9)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ch: ChannelRealization = serde_json::from_str(s)?;
        Self::new(ch.paths)
    }
}

/// Draws a realization with fixed delays, Jakes Doppler `ν_i = ν_max cos θ_i`
/// (`θ_i ~ U[-π, π]`) and gains `h_i ~ CN(0, 1/P)`.
pub fn sample_jakes<R: Rng + ?Sized>(
    nu_max: f64,
    delays: &[usize],
    mode: DopplerMode,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if delays.is_empty() {
        return Err(Error::InvalidChannel("empty delay list".into()));
    }
    if !(nu_max.is_finite() && nu_max >= 0.0) {
        return Err(Error::InvalidChannel(format!("invalid nu_max {nu_max}")));
    }
    let sigma = (0.5 / delays.len() as f64).sqrt();
    let paths = delays
        .iter()
        .map(|&delay| {
            let theta: f64 = rng.random_range(-PI..=PI);
            let mut doppler = nu_max * theta.cos();
            if mode == DopplerMode::Integer {
                doppler = doppler.round();
            }
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Path {
                gain: C64::new(re, im) * sigma,
                delay,
                doppler,
            }
        })
        .collect();
    Ok(ChannelRealization { paths })
}

/// Noise level of one simulation point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub snr_db: f64,
    /// Noise variance per complex sample.
    pub n0: f64,
}

impl NoiseSpec {
    /// `N0 = Es/γ` with `Es = 1`.
    pub fn from_snr_db(snr_db: f64) -> Self {
        NoiseSpec {
            snr_db,
            n0: 10f64.powf(-snr_db / 10.0),
        }
    }

    /// Linear SNR `γ`.
    pub fn gamma(&self) -> f64 {
        1.0 / self.n0
    }
}

/// `n` samples of `CN(0, n0)`.
pub fn awgn<R: Rng + ?Sized>(n: usize, n0: f64, rng: &mut R) -> Vec<C64> {
    let sigma = (0.5 * n0).sqrt();
    let dist = StandardNormal;
    (0..n)
        .map(|_| {
            let re: f64 = dist.sample(rng);
            let im: f64 = dist.sample(rng);
            C64::new(re, im) * sigma
        })
        .collect()
}

/// Prepends `m` samples of chirp-periodic prefix,
/// `s_n = s_{N+n} exp(-j2π c1 (N² + 2Nn))` for `n = -m..-1`.
pub fn add_cpp(s: &[C64], m: usize, cfg: &AfdmConfig) -> Result<Vec<C64>> {
    check_len(cfg.n, s.len())?;
    let n = cfg.n as i64;
    if m as i64 > n {
        return Err(Error::InvalidConfig(format!("prefix length {m} exceeds N = {n}")));
    }
    let mut out = Vec::with_capacity(cfg.n + m);
    for k in -(m as i64)..0 {
        let phase = cis_turns(-cfg.c1 * (n * n + 2 * n * k) as f64);
        out.push(s[(n + k) as usize] * phase);
    }
    out.extend_from_slice(s);
    Ok(out)
}

/// Passes a prefixed block through the channel without noise and returns
/// the `N` samples that follow the prefix.
pub fn transmit(s_cpp: &[C64], prefix: usize, ch: &ChannelRealization) -> Result<Vec<C64>> {
    if s_cpp.len() <= prefix {
        return Err(Error::Dimension {
            expected: prefix + 1,
            got: s_cpp.len(),
        });
    }
    let n = s_cpp.len() - prefix;
    if ch.l_max() > prefix {
        return Err(Error::InvalidChannel(format!(
            "delay {} exceeds the prefix length {prefix}",
            ch.l_max()
        )));
    }
    let mut r = vec![C64::new(0.0, 0.0); n];
    for p in &ch.paths {
        let f = p.doppler / n as f64;
        for (t, out) in r.iter_mut().enumerate() {
            *out += p.gain * cis_turns(-f * t as f64) * s_cpp[prefix + t - p.delay];
        }
    }
    Ok(r)
}

/// Received block `r_n = Σ_l s_{n-l} g_n(l) + w_n` for `n = 0..N-1`.
pub fn apply_channel<R: Rng + ?Sized>(
    s_cpp: &[C64],
    prefix: usize,
    ch: &ChannelRealization,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<Vec<C64>> {
    let mut r = transmit(s_cpp, prefix, ch)?;
    let w = awgn(r.len(), noise.n0, rng);
    for (v, w) in r.iter_mut().zip(w) {
        *v += w;
    }
    Ok(r)
}

/// Phase carried by a sample that wraps into the prefix.
#[inline]
fn cpp_phase(cfg: &AfdmConfig, t: usize, delay: usize) -> C64 {
    if t < delay {
        let n = cfg.n as i64;
        let k = t as i64 - delay as i64;
        cis_turns(-cfg.c1 * (n * n + 2 * n * k) as f64)
    } else {
        C64::new(1.0, 0.0)
    }
}

/// The `N × N` time-domain channel matrix with the prefix folded in.
pub fn time_domain_matrix(ch: &ChannelRealization, cfg: &AfdmConfig) -> DMatrix<C64> {
    let n = cfg.n;
    let mut h = DMatrix::zeros(n, n);
    for p in &ch.paths {
        let f = p.doppler / n as f64;
        for t in 0..n {
            let col = (t + n - p.delay % n) % n;
            h[(t, col)] += p.gain * cis_turns(-f * t as f64) * cpp_phase(cfg, t, p.delay);
        }
    }
    h
}

/// Sparse application of [`time_domain_matrix`] to a length-`N` block.
pub fn apply_time_domain(s: &[C64], ch: &ChannelRealization, cfg: &AfdmConfig) -> Result<Vec<C64>> {
    check_len(cfg.n, s.len())?;
    let n = cfg.n;
    let mut r = vec![C64::new(0.0, 0.0); n];
    for p in &ch.paths {
        let f = p.doppler / n as f64;
        for (t, out) in r.iter_mut().enumerate() {
            let col = (t + n - p.delay % n) % n;
            *out += p.gain * cis_turns(-f * t as f64) * cpp_phase(cfg, t, p.delay) * s[col];
        }
    }
    Ok(r)
}
