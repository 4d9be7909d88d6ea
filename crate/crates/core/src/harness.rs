//! Monte-Carlo BER experiments.
//!
//! Every frame draws its own channel, noise and bits from a ChaCha stream
//! selected by `(seed, frame index)`. All detector arms and all SNR points
//! of a frame see the same draws, and the channel and noise are drawn
//! before the bits so AFDM and OFDM runs with one seed share them too.
//! Frames run in parallel; tallies are integers, so results do not depend
//! on scheduling.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::band::OpCounter;
use crate::channel::{add_cpp, awgn, sample_jakes, transmit, DopplerMode, NoiseSpec};
use crate::daft::{AfdmConfig, DaftPlan, C64};
use crate::detect::{lmmse_band, ml_detect, mrc_dfe, DenseLmmse, DetectorResult, DfeConfig};
use crate::effective::{build_fast, EffectiveChannel};
use crate::error::{Error, Result};
use crate::framing::{Constellation, FrameLayout, Qam4};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Waveform {
    #[default]
    Afdm,
    Ofdm,
}

impl FromStr for Waveform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "afdm" => Ok(Waveform::Afdm),
            "ofdm" => Ok(Waveform::Ofdm),
            other => Err(Error::InvalidConfig(format!("unknown waveform '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    LmmseExact,
    LmmseBand,
    MrcDfe,
    Ml,
}

impl DetectorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DetectorKind::LmmseExact => "lmmse_exact",
            DetectorKind::LmmseBand => "lmmse_band",
            DetectorKind::MrcDfe => "mrc_dfe",
            DetectorKind::Ml => "ml",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lmmse_exact" => Ok(DetectorKind::LmmseExact),
            "lmmse_band" => Ok(DetectorKind::LmmseBand),
            "mrc_dfe" => Ok(DetectorKind::MrcDfe),
            "ml" => Ok(DetectorKind::Ml),
            other => Err(Error::InvalidConfig(format!("unknown detector '{other}'"))),
        }
    }
}

/// Path delays and Doppler statistics of the simulated channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSpec {
    pub delays: Vec<usize>,
    pub nu_max: f64,
    pub doppler: DopplerMode,
    pub k_nu: usize,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        ChannelSpec {
            delays: vec![0, 1, 2],
            nu_max: 1.0,
            doppler: DopplerMode::Integer,
            k_nu: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub waveform: Waveform,
    pub n: usize,
    /// Constellation size; only 4-QAM is implemented.
    pub modulation_order: usize,
    pub snr_db: Vec<f64>,
    pub frames: u64,
    pub detectors: Vec<DetectorKind>,
    pub channel: ChannelSpec,
    /// Null guard symbols; defaults to the minimum `Q`.
    pub guard: Option<usize>,
    pub dfe: DfeConfig,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            waveform: Waveform::Afdm,
            n: 128,
            modulation_order: 4,
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            frames: 1000,
            detectors: vec![DetectorKind::LmmseBand, DetectorKind::MrcDfe],
            channel: ChannelSpec::default(),
            guard: None,
            dfe: DfeConfig::default(),
            seed: 1,
            output: None,
            json: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Waveform parameters implied by the configuration.
    pub fn waveform_config(&self) -> Result<AfdmConfig> {
        let ch = &self.channel;
        match self.waveform {
            Waveform::Ofdm => AfdmConfig::ofdm(self.n, ch.nu_max),
            Waveform::Afdm => match ch.doppler {
                DopplerMode::Integer => {
                    if ch.nu_max.fract() != 0.0 || ch.k_nu != 0 {
                        return Err(Error::InvalidConfig(
                            "integer Doppler needs an integer nu_max and k_nu = 0".into(),
                        ));
                    }
                    AfdmConfig::integer_doppler(self.n, ch.nu_max as usize)
                }
                DopplerMode::Fractional => AfdmConfig::fractional_doppler(self.n, ch.nu_max, ch.k_nu),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::InvalidConfig("frames must be at least 1".into()));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidConfig("SNR list must be non-empty and finite".into()));
        }
        if self.modulation_order != 4 {
            return Err(Error::InvalidConfig(format!(
                "modulation order {} is not supported (only 4-QAM)",
                self.modulation_order
            )));
        }
        if self.detectors.is_empty() {
            return Err(Error::InvalidConfig("no detector selected".into()));
        }
        if self.channel.delays.is_empty() {
            return Err(Error::InvalidChannel("empty delay list".into()));
        }
        if self.waveform == Waveform::Ofdm {
            if let Some(d) = self
                .detectors
                .iter()
                .find(|d| !matches!(d, DetectorKind::LmmseExact | DetectorKind::Ml))
            {
                return Err(Error::InvalidConfig(format!(
                    "detector {d} needs the zero-padded AFDM frame"
                )));
            }
        }
        self.dfe.validate()
    }
}

/// One BER point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerRecord {
    pub snr_db: f64,
    pub detector: String,
    pub frames: u64,
    pub bit_errors: u64,
    pub total_bits: u64,
    pub ber: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95: f64,
    pub mean_iters: f64,
    pub converged_fraction: f64,
    /// Mean complex multiplications per frame.
    pub cm: f64,
    pub ca: f64,
    pub cd: f64,
    pub wall_ms: u64,
}

impl BerRecord {
    /// Binomial standard deviation of the BER estimate.
    pub fn sigma(&self) -> f64 {
        binomial_sigma(self.ber, self.total_bits)
    }
}

pub fn binomial_sigma(p: f64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    }
}

/// One point of an ε sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRecord {
    pub epsilon: f64,
    pub snr_db: f64,
    pub frames: u64,
    pub bit_errors: u64,
    pub total_bits: u64,
    pub ber: f64,
    pub ci95: f64,
    pub mean_iters: f64,
    pub converged_fraction: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Copy, Debug)]
struct Arm {
    detector: DetectorKind,
    dfe: DfeConfig,
}

#[derive(Clone, Copy, Debug, Default)]
struct Tally {
    bit_errors: u64,
    iterations: u64,
    converged: u64,
    ops: OpCounter,
    nanos: u128,
}

impl Tally {
    fn merge(&mut self, other: &Tally) {
        self.bit_errors += other.bit_errors;
        self.iterations += other.iterations;
        self.converged += other.converged;
        self.ops += other.ops;
        self.nanos += other.nanos;
    }
}

struct Simulation {
    cfg: ExperimentConfig,
    wf: AfdmConfig,
    plan: DaftPlan,
    layout: FrameLayout,
    prefix: usize,
    noise: Vec<NoiseSpec>,
    arms: Vec<Arm>,
}

/// Stream of random numbers owned by one frame.
pub fn frame_rng(seed: u64, frame: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame);
    rng
}

impl Simulation {
    fn new(cfg: &ExperimentConfig, snrs: &[f64], arms: Vec<Arm>) -> Result<Self> {
        cfg.validate()?;
        let wf = cfg.waveform_config()?;
        let l_max = *cfg.channel.delays.iter().max().expect("validated non-empty");
        let layout = match cfg.waveform {
            Waveform::Ofdm => {
                if l_max >= cfg.n {
                    return Err(Error::InvalidChannel(format!(
                        "maximum delay {l_max} must be below N = {}",
                        cfg.n
                    )));
                }
                FrameLayout::unpadded(cfg.n)
            }
            Waveform::Afdm => match cfg.guard {
                Some(g) => FrameLayout::new(&wf, g, l_max)?,
                None => FrameLayout::minimal(&wf, l_max)?,
            },
        };
        let bits = layout.data_len() * Qam4.bits_per_symbol();
        if arms.iter().any(|a| a.detector == DetectorKind::Ml) && bits > crate::detect::ML_BIT_BUDGET {
            return Err(Error::SearchBudget {
                bits,
                budget: crate::detect::ML_BIT_BUDGET,
            });
        }
        Ok(Simulation {
            cfg: cfg.clone(),
            plan: DaftPlan::new(&wf),
            wf,
            layout,
            prefix: l_max,
            noise: snrs.iter().map(|&s| NoiseSpec::from_snr_db(s)).collect(),
            arms,
        })
    }

    /// Runs one frame and returns tallies indexed `[snr][arm]`.
    fn frame(&self, index: u64) -> Result<Vec<Vec<Tally>>> {
        let mut rng = frame_rng(self.cfg.seed, index);
        let ch = sample_jakes(
            self.cfg.channel.nu_max,
            &self.cfg.channel.delays,
            self.cfg.channel.doppler,
            &mut rng,
        )?;
        let mut noise = awgn(self.wf.n, 1.0, &mut rng);
        self.plan.forward_in_place(&mut noise)?;
        let bits: Vec<u8> = (0..self.layout.data_len() * Qam4.bits_per_symbol())
            .map(|_| rng.random_range(0..2u8))
            .collect();

        let frame = self.layout.assemble(&Qam4.map(&bits)?)?;
        let s = self.plan.inverse(&frame.full)?;
        let r = transmit(&add_cpp(&s, self.prefix, &self.wf)?, self.prefix, &ch)?;
        let y_clean = self.plan.forward(&r)?;

        let channel = match self.cfg.waveform {
            Waveform::Afdm => {
                let eff = EffectiveChannel::from_channel(&ch, &self.plan, self.layout)?;
                let dense = self.needs_dense().then(|| DenseLmmse::new(eff.dense().clone()));
                ChannelMatrix::Padded { eff, dense }
            }
            Waveform::Ofdm => ChannelMatrix::Cyclic(DenseLmmse::new(build_fast(&ch, &self.plan)?)),
        };

        let mut out = Vec::with_capacity(self.noise.len());
        for spec in &self.noise {
            let scale = spec.n0.sqrt();
            let y: Vec<C64> = y_clean.iter().zip(&noise).map(|(a, w)| a + w * scale).collect();
            let mut row = Vec::with_capacity(self.arms.len());
            for arm in &self.arms {
                let started = Instant::now();
                let res = channel.detect(arm, &y, spec)?;
                let nanos = started.elapsed().as_nanos();
                let data = self.layout.extract(&frame_vector(&self.layout, &res.xhat))?;
                let decided = Qam4.demap(&data);
                let errors = decided.iter().zip(&bits).filter(|(a, b)| a != b).count() as u64;
                row.push(Tally {
                    bit_errors: errors,
                    iterations: res.iterations as u64,
                    converged: u64::from(res.converged),
                    ops: res.ops,
                    nanos,
                });
            }
            out.push(row);
        }
        Ok(out)
    }

    fn run(&self) -> Result<Vec<Vec<Tally>>> {
        let empty = || vec![vec![Tally::default(); self.arms.len()]; self.noise.len()];
        (0..self.cfg.frames)
            .into_par_iter()
            .map(|i| self.frame(i))
            .try_fold(empty, |mut acc, frame| {
                let frame = frame?;
                for (a, f) in acc.iter_mut().zip(&frame) {
                    for (x, y) in a.iter_mut().zip(f) {
                        x.merge(y);
                    }
                }
                Ok::<_, Error>(acc)
            })
            .try_reduce(empty, |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    for (u, v) in x.iter_mut().zip(y) {
                        u.merge(v);
                    }
                }
                Ok(a)
            })
    }

    fn needs_dense(&self) -> bool {
        self.arms
            .iter()
            .any(|a| matches!(a.detector, DetectorKind::LmmseExact | DetectorKind::Ml))
    }

    fn total_bits(&self) -> u64 {
        self.cfg.frames * (self.layout.data_len() * Qam4.bits_per_symbol()) as u64
    }
}

fn frame_vector(layout: &FrameLayout, data: &[C64]) -> Vec<C64> {
    let mut full = vec![C64::new(0.0, 0.0); layout.n()];
    full[layout.data_range()].copy_from_slice(data);
    full
}

enum ChannelMatrix {
    Padded {
        eff: EffectiveChannel,
        dense: Option<DenseLmmse>,
    },
    Cyclic(DenseLmmse),
}

impl ChannelMatrix {
    fn detect(&self, arm: &Arm, y: &[C64], noise: &NoiseSpec) -> Result<DetectorResult> {
        let mut ops = OpCounter::default();
        let (eff, dense) = match self {
            ChannelMatrix::Padded { eff, dense } => (Some(eff), dense.as_ref()),
            ChannelMatrix::Cyclic(dense) => (None, Some(dense)),
        };
        match (arm.detector, eff, dense) {
            (DetectorKind::LmmseExact, _, Some(d)) => d.detect(y, noise.n0),
            (DetectorKind::Ml, _, Some(d)) => ml_result(d.channel(), y),
            (DetectorKind::LmmseBand, Some(h), _) => lmmse_band(h, y, noise.n0, &mut ops),
            (DetectorKind::MrcDfe, Some(h), _) => mrc_dfe(h, y, noise.gamma(), &arm.dfe, &mut ops),
            (d, _, _) => Err(Error::InvalidConfig(format!(
                "detector {d} is not available for this waveform"
            ))),
        }
    }
}

fn ml_result(h: &nalgebra::DMatrix<C64>, y: &[C64]) -> Result<DetectorResult> {
    Ok(DetectorResult {
        xhat: ml_detect(h, y, &Qam4)?,
        iterations: 1,
        converged: true,
        ops: OpCounter::default(),
        deltas: Vec::new(),
    })
}

/// BER versus SNR for every configured detector.
pub fn run_ber_sweep(cfg: &ExperimentConfig) -> Result<Vec<BerRecord>> {
    let arms = cfg
        .detectors
        .iter()
        .map(|&detector| Arm { detector, dfe: cfg.dfe })
        .collect();
    let sim = Simulation::new(cfg, &cfg.snr_db, arms)?;
    let tallies = sim.run()?;
    let bits = sim.total_bits();
    let frames = cfg.frames as f64;
    let mut records = Vec::new();
    for (spec, row) in sim.noise.iter().zip(&tallies) {
        for (arm, t) in sim.arms.iter().zip(row) {
            let ber = t.bit_errors as f64 / bits as f64;
            records.push(BerRecord {
                snr_db: spec.snr_db,
                detector: arm.detector.to_string(),
                frames: cfg.frames,
                bit_errors: t.bit_errors,
                total_bits: bits,
                ber,
                ci95: 1.96 * binomial_sigma(ber, bits),
                mean_iters: t.iterations as f64 / frames,
                converged_fraction: t.converged as f64 / frames,
                cm: t.ops.cm as f64 / frames,
                ca: t.ops.ca as f64 / frames,
                cd: t.ops.cd as f64 / frames,
                wall_ms: (t.nanos / 1_000_000) as u64,
            });
        }
    }
    Ok(records)
}

/// The OFDM reference: `c1 = c2 = 0`, cyclic prefix, no null symbols and a
/// dense LMMSE over the full DFT-domain channel.
pub fn run_ofdm_baseline(cfg: &ExperimentConfig) -> Result<Vec<BerRecord>> {
    let ofdm = ExperimentConfig {
        waveform: Waveform::Ofdm,
        detectors: vec![DetectorKind::LmmseExact],
        guard: None,
        ..cfg.clone()
    };
    run_ber_sweep(&ofdm)
}

/// MRC-DFE BER and iteration count for each stopping threshold, at the
/// first SNR of the configuration.
pub fn epsilon_sweep(cfg: &ExperimentConfig, epsilons: &[f64]) -> Result<Vec<EpsilonRecord>> {
    if epsilons.is_empty() {
        return Err(Error::InvalidConfig("epsilon list is empty".into()));
    }
    let snr = *cfg
        .snr_db
        .first()
        .ok_or_else(|| Error::InvalidConfig("SNR list must be non-empty".into()))?;
    let arms: Vec<Arm> = epsilons
        .iter()
        .map(|&epsilon| {
            let dfe = DfeConfig { epsilon, ..cfg.dfe };
            dfe.validate().map(|_| Arm {
                detector: DetectorKind::MrcDfe,
                dfe,
            })
        })
        .collect::<Result<_>>()?;
    let cfg = ExperimentConfig {
        detectors: vec![DetectorKind::MrcDfe],
        ..cfg.clone()
    };
    let sim = Simulation::new(&cfg, &[snr], arms)?;
    let tallies = sim.run()?;
    let bits = sim.total_bits();
    let frames = cfg.frames as f64;
    Ok(sim
        .arms
        .iter()
        .zip(&tallies[0])
        .map(|(arm, t)| {
            let ber = t.bit_errors as f64 / bits as f64;
            EpsilonRecord {
                epsilon: arm.dfe.epsilon,
                snr_db: snr,
                frames: cfg.frames,
                bit_errors: t.bit_errors,
                total_bits: bits,
                ber,
                ci95: 1.96 * binomial_sigma(ber, bits),
                mean_iters: t.iterations as f64 / frames,
                converged_fraction: t.converged as f64 / frames,
                wall_ms: (t.nanos / 1_000_000) as u64,
            }
        })
        .collect())
}

#[derive(Serialize)]
struct BerRow<'a> {
    snr_db: f64,
    detector: &'a str,
    frames: u64,
    bit_errors: u64,
    ber: f64,
    ci95: f64,
    mean_iters: f64,
    cm: f64,
    ca: f64,
    cd: f64,
    wall_ms: u64,
}

/// CSV with header `snr_db,detector,frames,bit_errors,ber,ci95,mean_iters,cm,ca,cd,wall_ms`.
pub fn write_ber_csv<W: Write>(records: &[BerRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(BerRow {
            snr_db: r.snr_db,
            detector: &r.detector,
            frames: r.frames,
            bit_errors: r.bit_errors,
            ber: r.ber,
            ci95: r.ci95,
            mean_iters: r.mean_iters,
            cm: r.cm,
            ca: r.ca,
            cd: r.cd,
            wall_ms: r.wall_ms,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct EpsilonRow {
    epsilon: f64,
    snr_db: f64,
    frames: u64,
    bit_errors: u64,
    ber: f64,
    ci95: f64,
    mean_iters: f64,
    converged: f64,
    wall_ms: u64,
}

/// CSV with header `epsilon,snr_db,frames,bit_errors,ber,ci95,mean_iters,converged,wall_ms`.
pub fn write_epsilon_csv<W: Write>(records: &[EpsilonRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(EpsilonRow {
            epsilon: r.epsilon,
            snr_db: r.snr_db,
            frames: r.frames,
            bit_errors: r.bit_errors,
            ber: r.ber,
            ci95: r.ci95,
            mean_iters: r.mean_iters,
            converged: r.converged_fraction,
            wall_ms: r.wall_ms,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize, W: Write>(records: &[T], out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, records)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(detectors: Vec<DetectorKind>) -> ExperimentConfig {
        ExperimentConfig {
            n: 32,
            snr_db: vec![10.0, 20.0],
            frames: 20,
            detectors,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn noiseless_identity_channel_is_error_free() {
        let cfg = ExperimentConfig {
            snr_db: vec![120.0],
            frames: 100,
            detectors: vec![DetectorKind::LmmseExact, DetectorKind::LmmseBand, DetectorKind::MrcDfe],
            channel: ChannelSpec {
                delays: vec![0],
                nu_max: 0.0,
                doppler: DopplerMode::Integer,
                k_nu: 0,
            },
            ..ExperimentConfig::default()
        };
        for r in run_ber_sweep(&cfg).unwrap() {
            assert_eq!(r.bit_errors, 0, "{}", r.detector);
            assert_eq!(r.ber, 0.0);
        }
    }

    #[test]
    fn records_are_reproducible() {
        let cfg = small(vec![DetectorKind::LmmseBand, DetectorKind::MrcDfe]);
        let a = run_ber_sweep(&cfg).unwrap();
        let b = run_ber_sweep(&cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.bit_errors, y.bit_errors);
            assert_eq!(x.mean_iters, y.mean_iters);
            assert_eq!(x.cm, y.cm);
        }
        let other = run_ber_sweep(&ExperimentConfig { seed: 2, ..cfg }).unwrap();
        assert!(a.iter().zip(&other).any(|(x, y)| x.bit_errors != y.bit_errors || x.cm != y.cm));
    }

    #[test]
    fn detector_arms_share_draws() {
        // Running arms together or one at a time yields identical tallies.
        let both = run_ber_sweep(&small(vec![DetectorKind::LmmseBand, DetectorKind::MrcDfe])).unwrap();
        let dfe_only = run_ber_sweep(&small(vec![DetectorKind::MrcDfe])).unwrap();
        let from_both: Vec<u64> = both.iter().filter(|r| r.detector == "mrc_dfe").map(|r| r.bit_errors).collect();
        let alone: Vec<u64> = dfe_only.iter().map(|r| r.bit_errors).collect();
        assert_eq!(from_both, alone);
    }

    #[test]
    fn ber_fields_are_consistent() {
        for r in run_ber_sweep(&small(vec![DetectorKind::LmmseBand])).unwrap() {
            assert_eq!(r.total_bits, 20 * 2 * (32 - 8));
            assert!((r.ber - r.bit_errors as f64 / r.total_bits as f64).abs() < 1e-15);
            assert!((0.0..=1.0).contains(&r.ber));
            assert!((r.ci95 - 1.96 * (r.ber * (1.0 - r.ber) / r.total_bits as f64).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn epsilon_sweep_iterations() {
        let cfg = small(vec![DetectorKind::MrcDfe]);
        let recs = epsilon_sweep(&ExperimentConfig { snr_db: vec![20.0], ..cfg }, &[1e3, 0.1, 0.001]).unwrap();
        assert_eq!(recs[0].mean_iters, 1.0);
        assert!(recs[1].mean_iters <= recs[2].mean_iters);
    }

    #[test]
    fn ofdm_rejects_band_detectors() {
        let cfg = ExperimentConfig {
            waveform: Waveform::Ofdm,
            ..small(vec![DetectorKind::LmmseBand])
        };
        assert!(run_ber_sweep(&cfg).is_err());
        let recs = run_ofdm_baseline(&small(vec![DetectorKind::LmmseBand])).unwrap();
        assert!(recs.iter().all(|r| r.detector == "lmmse_exact" && r.total_bits == 20 * 64));
    }

    #[test]
    fn config_validation() {
        assert!(run_ber_sweep(&ExperimentConfig { frames: 0, ..small(vec![DetectorKind::MrcDfe]) }).is_err());
        assert!(run_ber_sweep(&ExperimentConfig { snr_db: vec![], ..small(vec![DetectorKind::MrcDfe]) }).is_err());
        assert!(run_ber_sweep(&ExperimentConfig { modulation_order: 16, ..small(vec![DetectorKind::MrcDfe]) }).is_err());
        assert!(run_ber_sweep(&small(vec![DetectorKind::Ml])).is_err());
        let too_small_guard = ExperimentConfig { guard: Some(4), ..small(vec![DetectorKind::MrcDfe]) };
        assert!(matches!(run_ber_sweep(&too_small_guard), Err(Error::GuardTooSmall { .. })));
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            waveform = "afdm"
            n = 64
            snr_db = [5.0, 15.0]
            frames = 10
            detectors = ["lmmse_band", "mrc_dfe"]
            seed = 9

            [channel]
            delays = [0, 2]
            nu_max = 1.0
            doppler = "fractional"
            k_nu = 1

            [dfe]
            epsilon = 0.001
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.n, 64);
        assert_eq!(cfg.channel.doppler, DopplerMode::Fractional);
        assert_eq!(cfg.dfe.epsilon, 0.001);
        assert_eq!(cfg.dfe.max_iterations, 25);
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
    }
}
