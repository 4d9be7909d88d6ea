//! Equalizers for the zero-padded AFDM frame.
//!
//! * [`lmmse_exact`]: dense `H^H (H H^H + N0 I)^{-1} y`, the O(N³) reference.
//! * [`lmmse_band`]: the same estimator on the band part of the channel,
//!   via band Gram product, band `LDL^H` and two band substitutions.
//! * [`mrc_dfe`]: iterative weighted maximal-ratio combining with
//!   interference cancellation over the sparse tap maps.
//! * [`ml_detect`]: exhaustive search, only for tiny frames.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::band::OpCounter;
use crate::daft::C64;
use crate::effective::EffectiveChannel;
use crate::error::{check_len, Error, Result};
use crate::framing::{Constellation, Qam4};

/// Output of one detector invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorResult {
    /// Soft estimates of the data symbols.
    pub xhat: Vec<C64>,
    /// Sweeps performed (1 for the non-iterative detectors).
    pub iterations: usize,
    pub converged: bool,
    pub ops: OpCounter,
    /// `‖x̂^(n) - x̂^(n-1)‖` after every sweep (MRC-DFE only).
    pub deltas: Vec<f64>,
}

impl DetectorResult {
    fn single_pass(xhat: Vec<C64>, ops: OpCounter) -> Self {
        DetectorResult {
            xhat,
            iterations: 1,
            converged: true,
            ops,
            deltas: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DfeConfig {
    pub max_iterations: usize,
    /// Stopping threshold on the change between sweeps, see [`StopNorm`].
    pub epsilon: f64,
    pub norm: StopNorm,
    /// Feed back sliced symbols instead of the soft combiner output.
    pub hard_decision: bool,
}

/// How the change between sweeps is compared with `epsilon`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopNorm {
    /// `‖x̂^(n) - x̂^(n-1)‖₂ < epsilon · ‖x̂^(n)‖₂`
    #[default]
    Relative,
    /// `‖x̂^(n) - x̂^(n-1)‖₂ < epsilon`
    Absolute,
}

impl std::str::FromStr for StopNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relative" => Ok(StopNorm::Relative),
            "absolute" => Ok(StopNorm::Absolute),
            other => Err(Error::InvalidConfig(format!("unknown stopping norm '{other}'"))),
        }
    }
}

impl Default for DfeConfig {
    fn default() -> Self {
        DfeConfig {
            max_iterations: 25,
            epsilon: 0.01,
            norm: StopNorm::Relative,
            hard_decision: false,
        }
    }
}

impl DfeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("DFE needs at least one iteration".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "DFE epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

fn check_noise(n0: f64) -> Result<()> {
    if n0 > 0.0 && n0.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("noise variance must be positive, got {n0}")))
    }
}

/// Dense LMMSE estimate `H^H (H H^H + n0 I)^{-1} y`.
pub fn lmmse_exact(h: &DMatrix<C64>, y: &[C64], n0: f64) -> Result<DetectorResult> {
    DenseLmmse::new(h.clone()).detect(y, n0)
}

/// Dense LMMSE with `H H^H` cached, for detecting one channel at several
/// noise levels.
#[derive(Clone, Debug)]
pub struct DenseLmmse {
    h: DMatrix<C64>,
    gram: DMatrix<C64>,
}

impl DenseLmmse {
    pub fn new(h: DMatrix<C64>) -> Self {
        let gram = &h * h.adjoint();
        DenseLmmse { h, gram }
    }

    pub fn channel(&self) -> &DMatrix<C64> {
        &self.h
    }

    pub fn detect(&self, y: &[C64], n0: f64) -> Result<DetectorResult> {
        check_len(self.h.nrows(), y.len())?;
        check_noise(n0)?;
        let mut m = self.gram.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += n0;
        }
        let chol = m.cholesky().ok_or(Error::Singular)?;
        let d = chol.solve(&DVector::from_column_slice(y));
        let x = self.h.ad_mul(&d);
        Ok(DetectorResult::single_pass(x.as_slice().to_vec(), OpCounter::default()))
    }
}

/// Low-complexity LMMSE on the band approximation of the channel.
pub fn lmmse_band(
    h: &EffectiveChannel,
    y: &[C64],
    n0: f64,
    counter: &mut OpCounter,
) -> Result<DetectorResult> {
    check_len(h.layout().n(), y.len())?;
    check_noise(n0)?;
    let start = *counter;
    let band = h.band();
    let m = band.gram(n0, counter);
    let fact = m.ldl(counter)?;
    let d = fact.solve(y, counter)?;
    let x = band.adjoint_mul(&d, counter)?;
    let ops = *counter - start;
    Ok(DetectorResult::single_pass(x, ops))
}

/// One in-place MRC-DFE sweep over all data symbols in ascending order.
///
/// Symbols before `k` already hold this sweep's estimates, symbols after
/// `k` still hold the previous sweep's. Returns `‖x_new - x_old‖₂`.
pub fn dfe_sweep(
    h: &EffectiveChannel,
    y: &[C64],
    gamma: f64,
    hard_decision: bool,
    x: &mut [C64],
    counter: &mut OpCounter,
) -> Result<f64> {
    check_len(h.layout().n(), y.len())?;
    check_len(h.layout().data_len(), x.len())?;
    let inv_gamma = 1.0 / gamma;
    let mut change = 0.0;
    for k in 0..x.len() {
        let d_k = h.column_energy()[k];
        if !(d_k > 0.0) {
            return Err(Error::DegenerateColumn(k));
        }
        let taps = h.column_taps(k);
        let mut g = C64::new(0.0, 0.0);
        for &(q, h_qk) in taps {
            // b_k^i: received sample q with every other retained symbol removed.
            let mut b = y[q];
            let row = h.row_taps(q);
            for &(j, h_qj) in row {
                if j != k {
                    b -= h_qj * x[j];
                }
            }
            let others = row.len() as u64 - 1;
            counter.cm += others;
            counter.ca += others;
            g += h_qk.conj() * b;
        }
        counter.cm += taps.len() as u64;
        counter.ca += taps.len() as u64;
        counter.cd += 1;

        let c = g / (d_k + inv_gamma);
        let next = if hard_decision { Qam4.slice(c) } else { c };
        change += (next - x[k]).norm_sqr();
        x[k] = next;
    }
    Ok(change.sqrt())
}

/// Weighted MRC-based decision feedback equalizer, starting from `x̂⁰ = 0`.
pub fn mrc_dfe(
    h: &EffectiveChannel,
    y: &[C64],
    gamma: f64,
    cfg: &DfeConfig,
    counter: &mut OpCounter,
) -> Result<DetectorResult> {
    cfg.validate()?;
    if !(gamma > 0.0) {
        return Err(Error::InvalidConfig(format!("SNR must be positive, got {gamma}")));
    }
    let start = *counter;
    let mut x = vec![C64::new(0.0, 0.0); h.layout().data_len()];
    let mut deltas = Vec::with_capacity(cfg.max_iterations);
    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        let delta = dfe_sweep(h, y, gamma, cfg.hard_decision, &mut x, counter)?;
        deltas.push(delta);
        let scale = match cfg.norm {
            StopNorm::Relative => x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt(),
            StopNorm::Absolute => 1.0,
        };
        if delta < cfg.epsilon * scale || delta == 0.0 {
            converged = true;
            break;
        }
    }
    let ops = *counter - start;
    Ok(DetectorResult {
        xhat: x,
        iterations: deltas.len(),
        converged,
        ops,
        deltas,
    })
}

/// Largest exhaustive search, in bits per frame.
pub const ML_BIT_BUDGET: usize = 16;

/// Exhaustive `argmin ‖y - H x‖²` over every symbol vector.
pub fn ml_detect<C: Constellation + ?Sized>(
    h: &DMatrix<C64>,
    y: &[C64],
    alphabet: &C,
) -> Result<Vec<C64>> {
    check_len(h.nrows(), y.len())?;
    let k = h.ncols();
    let bits = k * alphabet.bits_per_symbol();
    if bits > ML_BIT_BUDGET {
        return Err(Error::SearchBudget {
            bits,
            budget: ML_BIT_BUDGET,
        });
    }
    let points = alphabet.points();
    let m = points.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    // Odometer over label vectors with an incrementally updated residual.
    let mut labels = vec![0usize; k];
    let mut residual: Vec<C64> = y.to_vec();
    for j in 0..k {
        for (r, v) in residual.iter_mut().enumerate() {
            *v -= h[(r, j)] * points[0];
        }
    }
    let mut best = residual.iter().map(|v| v.norm_sqr()).sum::<f64>();
    let mut best_labels = labels.clone();
    loop {
        let mut j = 0;
        loop {
            if j == k {
                return Ok(best_labels.iter().map(|&l| points[l]).collect());
            }
            let old = points[labels[j]];
            labels[j] = (labels[j] + 1) % m;
            let delta = old - points[labels[j]];
            for (r, v) in residual.iter_mut().enumerate() {
                *v += h[(r, j)] * delta;
            }
            if labels[j] != 0 {
                break;
            }
            j += 1;
        }
        let metric = residual.iter().map(|v| v.norm_sqr()).sum::<f64>();
        if metric < best {
            best = metric;
            best_labels.copy_from_slice(&labels);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_jakes, DopplerMode};
    use crate::daft::{AfdmConfig, DaftPlan};
    use crate::framing::FrameLayout;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_c(rng: &mut impl Rng) -> C64 {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn max_diff(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    fn norm(a: &[C64]) -> f64 {
        a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    fn identity_channel(n: usize) -> EffectiveChannel {
        let cfg = AfdmConfig::integer_doppler(n, 0).unwrap();
        let layout = FrameLayout::minimal(&cfg, 0).unwrap();
        EffectiveChannel::new(&DMatrix::identity(n, n), layout, 1).unwrap()
    }

    fn scenario(
        cfg: &AfdmConfig,
        mode: DopplerMode,
        rng: &mut impl Rng,
    ) -> (EffectiveChannel, Vec<C64>) {
        let plan = DaftPlan::new(cfg);
        let ch = sample_jakes(cfg.nu_max, &[0, 1, 2], mode, rng).unwrap();
        let layout = FrameLayout::minimal(cfg, 2).unwrap();
        let eff = EffectiveChannel::from_channel(&ch, &plan, layout).unwrap();
        let y = (0..cfg.n).map(|_| rand_c(rng)).collect();
        (eff, y)
    }

    #[test]
    fn exact_on_identity() {
        let h = DMatrix::<C64>::identity(8, 8);
        let y: Vec<C64> = (0..8).map(|k| C64::new(k as f64, 1.0)).collect();
        let x = lmmse_exact(&h, &y, 1.0).unwrap().xhat;
        let half: Vec<C64> = y.iter().map(|v| v / 2.0).collect();
        assert!(max_diff(&x, &half) < 1e-14);
        let x = lmmse_exact(&h, &y, 1e-12).unwrap().xhat;
        assert!(max_diff(&x, &y) < 1e-10);
        assert!(lmmse_exact(&h, &y, 0.0).is_err());
    }

    #[test]
    fn exact_matches_push_through_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = AfdmConfig::fractional_doppler(64, 1.0, 1).unwrap();
        let (eff, y) = scenario(&cfg, DopplerMode::Fractional, &mut rng);
        let h = eff.dense();
        let n0 = 0.05;
        let x = lmmse_exact(h, &y, n0).unwrap().xhat;
        let k = h.ncols();
        let g = h.adjoint() * h + DMatrix::identity(k, k) * C64::new(n0, 0.0);
        let rhs = h.adjoint() * DVector::from_vec(y);
        let oracle = g.lu().solve(&rhs).unwrap();
        assert!(max_diff(&x, oracle.as_slice()) < 1e-9);
    }

    #[test]
    fn band_equals_exact_on_identity() {
        let eff = identity_channel(16);
        let y: Vec<C64> = (0..16).map(|k| C64::new(1.0, k as f64)).collect();
        let band = lmmse_band(&eff, &y, 0.3, &mut OpCounter::default()).unwrap();
        let exact = lmmse_exact(eff.dense(), &y, 0.3).unwrap();
        assert!(max_diff(&band.xhat, &exact.xhat) < 1e-14);
    }

    #[test]
    fn band_equals_exact_on_integer_doppler() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = AfdmConfig::integer_doppler(128, 1).unwrap();
        for _ in 0..10 {
            let (eff, y) = scenario(&cfg, DopplerMode::Integer, &mut rng);
            let mut ops = OpCounter::default();
            let band = lmmse_band(&eff, &y, 0.01, &mut ops).unwrap();
            let exact = lmmse_exact(eff.dense(), &y, 0.01).unwrap();
            assert!(max_diff(&band.xhat, &exact.xhat) < 1e-8);
            assert_eq!(band.ops, ops);
        }
    }

    #[test]
    fn band_approximates_exact_on_fractional_doppler() {
        // Leakage outside the band is about 1% of the channel energy for
        // k_ν = 2, so the band estimate sits roughly 10% away from the dense one.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = AfdmConfig::fractional_doppler(128, 1.0, 2).unwrap();
        let mut rel = Vec::new();
        for _ in 0..21 {
            let (eff, _) = scenario(&cfg, DopplerMode::Fractional, &mut rng);
            let x: Vec<C64> = (0..eff.layout().data_len()).map(|_| Qam4.points()[rng.random_range(0..4)]).collect();
            let y = eff.apply(&x).unwrap();
            let band = lmmse_band(&eff, &y, 0.01, &mut OpCounter::default()).unwrap().xhat;
            let exact = lmmse_exact(eff.dense(), &y, 0.01).unwrap().xhat;
            let diff: Vec<C64> = band.iter().zip(&exact).map(|(a, b)| a - b).collect();
            rel.push(norm(&diff) / norm(&exact));
        }
        rel.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(rel[10] < 0.2, "median relative deviation {}", rel[10]);
    }

    #[test]
    fn dfe_on_identity_converges_in_two_sweeps() {
        let eff = identity_channel(16);
        let y: Vec<C64> = (0..16).map(|k| C64::new(0.5, -(k as f64) / 8.0)).collect();
        let gamma = 100.0;
        let res = mrc_dfe(&eff, &y, gamma, &DfeConfig::default(), &mut OpCounter::default()).unwrap();
        let expected: Vec<C64> = y.iter().map(|v| v / (1.0 + 1.0 / gamma)).collect();
        assert!(max_diff(&res.xhat, &expected) < 1e-15);
        assert_eq!(res.iterations, 2);
        assert!(res.converged);
        assert_eq!(res.deltas[1], 0.0);
    }

    #[test]
    fn dfe_converges_to_lmmse_on_integer_doppler() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = AfdmConfig::integer_doppler(128, 1).unwrap();
        let n0 = 0.01;
        for _ in 0..10 {
            let (eff, _) = scenario(&cfg, DopplerMode::Integer, &mut rng);
            let x: Vec<C64> = (0..eff.layout().data_len()).map(|_| Qam4.points()[rng.random_range(0..4)]).collect();
            let mut y = eff.apply(&x).unwrap();
            for v in y.iter_mut() {
                *v += rand_c(&mut rng) * 0.1;
            }
            let cfg = DfeConfig { max_iterations: 200, epsilon: 1e-6, ..DfeConfig::default() };
            let dfe = mrc_dfe(&eff, &y, 1.0 / n0, &cfg, &mut OpCounter::default()).unwrap();
            let exact = lmmse_exact(eff.dense(), &y, n0).unwrap().xhat;
            let diff: Vec<C64> = dfe.xhat.iter().zip(&exact).map(|(a, b)| a - b).collect();
            assert!(norm(&diff) / norm(&exact) < 1e-2);
        }
    }

    #[test]
    fn lmmse_is_a_dfe_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = AfdmConfig::integer_doppler(32, 1).unwrap();
        let n0 = 0.02;
        let (eff, y) = scenario(&cfg, DopplerMode::Integer, &mut rng);
        let mut x = lmmse_exact(eff.dense(), &y, n0).unwrap().xhat;
        let change = dfe_sweep(&eff, &y, 1.0 / n0, false, &mut x, &mut OpCounter::default()).unwrap();
        assert!(change < 1e-6, "{change}");
    }

    #[test]
    fn dfe_counts_match_leading_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cfg = AfdmConfig::integer_doppler(128, 1).unwrap();
        let (eff, y) = scenario(&cfg, DopplerMode::Integer, &mut rng);
        let mut ops = OpCounter::default();
        let res = mrc_dfe(&eff, &y, 100.0, &DfeConfig::default(), &mut ops).unwrap();
        let l = eff.support() as u64;
        let predicted = res.iterations as u64 * (2 * l * l + 1) * eff.layout().data_len() as u64;
        let ratio = ops.total() as f64 / predicted as f64;
        assert!((ratio - 1.0).abs() < 0.15, "{ratio}");
        assert!(ops.total() <= predicted);
    }

    #[test]
    fn huge_epsilon_exits_after_one_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = AfdmConfig::integer_doppler(32, 1).unwrap();
        let (eff, y) = scenario(&cfg, DopplerMode::Integer, &mut rng);
        let dfe = DfeConfig { epsilon: 1e3, ..DfeConfig::default() };
        let res = mrc_dfe(&eff, &y, 10.0, &dfe, &mut OpCounter::default()).unwrap();
        assert_eq!(res.iterations, 1);
        assert!(res.converged);
    }

    #[test]
    fn hard_feedback_outputs_constellation_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = AfdmConfig::integer_doppler(32, 1).unwrap();
        let (eff, y) = scenario(&cfg, DopplerMode::Integer, &mut rng);
        let dfe = DfeConfig { hard_decision: true, ..DfeConfig::default() };
        let res = mrc_dfe(&eff, &y, 10.0, &dfe, &mut OpCounter::default()).unwrap();
        assert!(res.xhat.iter().all(|v| Qam4.points().contains(v)));
    }

    #[test]
    fn dfe_config_validation() {
        let eff = identity_channel(8);
        let y = vec![C64::new(1.0, 0.0); 8];
        let bad = DfeConfig { max_iterations: 0, ..DfeConfig::default() };
        assert!(mrc_dfe(&eff, &y, 1.0, &bad, &mut OpCounter::default()).is_err());
        let bad = DfeConfig { epsilon: 0.0, ..DfeConfig::default() };
        assert!(mrc_dfe(&eff, &y, 1.0, &bad, &mut OpCounter::default()).is_err());
    }

    #[test]
    fn ml_recovers_noiseless_symbols() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = AfdmConfig::integer_doppler(8, 0).unwrap();
        let plan = DaftPlan::new(&cfg);
        let ch = sample_jakes(0.0, &[0, 1, 2], DopplerMode::Integer, &mut rng).unwrap();
        let layout = FrameLayout::minimal(&cfg, 2).unwrap();
        let eff = EffectiveChannel::from_channel(&ch, &plan, layout).unwrap();
        let x: Vec<C64> = (0..6).map(|_| Qam4.points()[rng.random_range(0..4)]).collect();
        let y = eff.apply(&x).unwrap();
        assert_eq!(ml_detect(eff.dense(), &y, &Qam4).unwrap(), x);
    }

    #[test]
    fn ml_single_symbol_is_zero_forced_slice() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let h = DMatrix::from_fn(3, 1, |_, _| rand_c(&mut rng));
            let y: Vec<C64> = (0..3).map(|_| rand_c(&mut rng)).collect();
            let zf = h.ad_mul(&DVector::from_vec(y.clone()))[0] / h.norm_squared();
            assert_eq!(ml_detect(&h, &y, &Qam4).unwrap(), vec![Qam4.slice(zf)]);
        }
    }

    #[test]
    fn ml_matches_brute_force_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = Qam4.points();
        for _ in 0..30 {
            let h = DMatrix::from_fn(4, 3, |_, _| rand_c(&mut rng));
            let y: Vec<C64> = (0..4).map(|_| rand_c(&mut rng) * 2.0).collect();
            let metric = |x: &[C64]| -> f64 {
                let hx = &h * DVector::from_column_slice(x);
                y.iter().zip(hx.iter()).map(|(a, b)| (a - b).norm_sqr()).sum()
            };
            let mut best = f64::INFINITY;
            for a in pts {
                for b in pts {
                    for c in pts {
                        best = best.min(metric(&[*a, *b, *c]));
                    }
                }
            }
            let found = ml_detect(&h, &y, &Qam4).unwrap();
            assert!((metric(&found) - best).abs() < 1e-12);
        }
    }

    #[test]
    fn ml_refuses_large_frames() {
        let h = DMatrix::<C64>::identity(9, 9);
        let y = vec![C64::new(0.0, 0.0); 9];
        assert!(matches!(ml_detect(&h, &y, &Qam4), Err(Error::SearchBudget { bits: 18, .. })));
    }
}
