//! Fast self-checks of the signal chain, run by `afdm verify`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::band::OpCounter;
use crate::channel::{add_cpp, sample_jakes, time_domain_matrix, transmit, DopplerMode};
use crate::daft::{daft, daft_matrix, AfdmConfig, DaftPlan, C64};
use crate::detect::{lmmse_band, lmmse_exact, mrc_dfe, DfeConfig};
use crate::effective::{build_exact, build_fast, build_integer_sparse, EffectiveChannel};
use crate::error::Result;
use crate::framing::{Constellation, FrameLayout, Qam4};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    /// Largest observed error.
    pub error: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.error < self.tolerance
    }
}

fn max_abs(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn max_abs_matrix(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    max_abs(a.as_slice(), b.as_slice())
}

fn random_symbols<R: Rng>(n: usize, rng: &mut R) -> Vec<C64> {
    (0..n).map(|_| Qam4.points()[rng.random_range(0..4)]).collect()
}

/// Runs every check with realizations drawn from `seed`.
pub fn run_all(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = AfdmConfig::integer_doppler(64, 1)?;
    let plan = DaftPlan::new(&cfg);
    let delays = [0, 1, 3];
    let layout = FrameLayout::minimal(&cfg, 3)?;
    let mut checks = Vec::new();

    let a = daft_matrix(&cfg);
    let gram = &a * a.adjoint();
    checks.push(Check {
        name: "daft_unitary",
        error: max_abs_matrix(&gram, &DMatrix::identity(64, 64)),
        tolerance: 1e-10,
    });

    let x = random_symbols(64, &mut rng);
    checks.push(Check {
        name: "daft_round_trip",
        error: max_abs(&plan.forward(&plan.inverse(&x)?)?, &x),
        tolerance: 1e-10,
    });
    checks.push(Check {
        name: "daft_fast_matches_direct",
        error: max_abs(&plan.forward(&x)?, &daft(&x, &cfg)?),
        tolerance: 1e-10,
    });

    let (mut closed, mut fast, mut io, mut band, mut dfe) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10 {
        let ch = sample_jakes(1.0, &delays, DopplerMode::Integer, &mut rng)?;
        let exact = build_exact(&time_domain_matrix(&ch, &cfg), &cfg)?;
        closed = closed.max(max_abs_matrix(&exact, &build_integer_sparse(&ch, &cfg)?));
        fast = fast.max(max_abs_matrix(&exact, &build_fast(&ch, &plan)?));

        let eff = EffectiveChannel::from_channel(&ch, &plan, layout)?;
        let data = random_symbols(layout.data_len(), &mut rng);
        let s = plan.inverse(&layout.assemble(&data)?.full)?;
        let y = plan.forward(&transmit(&add_cpp(&s, 3, &cfg)?, 3, &ch)?)?;
        io = io.max(max_abs(&y, &eff.apply(&data)?));

        let n0 = 0.05;
        let reference = lmmse_exact(eff.dense(), &y, n0)?.xhat;
        band = band.max(max_abs(&lmmse_band(&eff, &y, n0, &mut OpCounter::default())?.xhat, &reference));
        let tight = DfeConfig {
            max_iterations: 500,
            epsilon: 1e-12,
            ..DfeConfig::default()
        };
        let xd = mrc_dfe(&eff, &y, 1.0 / n0, &tight, &mut OpCounter::default())?.xhat;
        dfe = dfe.max(max_abs(&xd, &reference));
    }
    checks.push(Check { name: "integer_doppler_closed_form", error: closed, tolerance: 1e-10 });
    checks.push(Check { name: "effective_channel_fast_build", error: fast, tolerance: 1e-10 });
    checks.push(Check { name: "input_output_relation", error: io, tolerance: 1e-10 });
    checks.push(Check { name: "band_lmmse_matches_dense", error: band, tolerance: 1e-8 });
    checks.push(Check { name: "dfe_fixed_point_is_lmmse", error: dfe, tolerance: 1e-6 });
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_all(3).unwrap() {
            assert!(c.passed(), "{c:?}");
        }
    }
}
