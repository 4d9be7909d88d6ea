//! Discrete affine Fourier transform.
//!
//! The DAFT matrix is `A = Λ(c2) · F · Λ(c1)` where `F` is the unitary DFT
//! and `Λ(c) = diag(exp(-j2π c n²))`. Both directions are scaled by `1/√N`
//! so that `A` is unitary and `idaft` is exactly `A^H`.
//!
//! [`daft`] and [`idaft`] evaluate the O(N²) sums directly. [`DaftPlan`]
//! computes the same transforms as chirp, FFT, chirp in O(N log N) and is
//! what the simulation loops use.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

pub type C64 = Complex64;

/// `exp(j2π·turns)`, with `turns` reduced to `[-1/2, 1/2]` first so large
/// arguments keep their fractional precision.
#[inline]
pub fn cis_turns(turns: f64) -> C64 {
    let t = turns - turns.round();
    C64::from_polar(1.0, TAU * t)
}

/// AFDM waveform parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AfdmConfig {
    /// Number of chirp subcarriers.
    pub n: usize,
    /// First chirp rate, cycles per sample².
    pub c1: f64,
    /// Second chirp parameter.
    pub c2: f64,
    /// Maximum normalized Doppler `ν_max` (units of subcarrier spacing).
    pub nu_max: f64,
    /// Extra Doppler bins reserved on each side of a fractional-Doppler peak.
    pub k_nu: usize,
}

impl AfdmConfig {
    pub fn new(n: usize, c1: f64, c2: f64, nu_max: f64, k_nu: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidConfig(format!("N must be at least 2, got {n}")));
        }
        if !c1.is_finite() {
            return Err(Error::InvalidConfig("c1 must be finite".into()));
        }
        if !(c2.is_finite() && c2 >= 0.0 && c2 < 0.5 / n as f64) {
            return Err(Error::InvalidConfig(format!(
                "c2 must lie in [0, 1/(2N)), got {c2}"
            )));
        }
        if !(nu_max.is_finite() && nu_max >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "nu_max must be a nonnegative real, got {nu_max}"
            )));
        }
        Ok(AfdmConfig { n, c1, c2, nu_max, k_nu })
    }

    /// Tuning for integer Doppler shifts: `c1 = (2ν_max + 1) / 2N`.
    pub fn integer_doppler(n: usize, nu_max: usize) -> Result<Self> {
        let c1 = (2 * nu_max + 1) as f64 / (2 * n) as f64;
        Self::new(n, c1, Self::default_c2(n), nu_max as f64, 0)
    }

    /// Tuning for fractional Doppler shifts: `c1 = (2(⌊ν_max⌋ + k_ν) + 1) / 2N`.
    pub fn fractional_doppler(n: usize, nu_max: f64, k_nu: usize) -> Result<Self> {
        if !(nu_max.is_finite() && nu_max >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "nu_max must be a nonnegative real, got {nu_max}"
            )));
        }
        let alpha = nu_max.floor() as usize + k_nu;
        let c1 = (2 * alpha + 1) as f64 / (2 * n) as f64;
        Self::new(n, c1, Self::default_c2(n), nu_max, k_nu)
    }

    /// The `c1 = c2 = 0` degenerate case, i.e. plain OFDM.
    pub fn ofdm(n: usize, nu_max: f64) -> Result<Self> {
        Self::new(n, 0.0, 0.0, nu_max, 0)
    }

    /// Default second chirp parameter `1/(2N²)`.
    pub fn default_c2(n: usize) -> f64 {
        1.0 / (2.0 * (n * n) as f64)
    }

    /// `α_max = ⌊ν_max⌋`.
    pub fn alpha_max(&self) -> usize {
        self.nu_max.floor() as usize
    }

    /// Doppler half-span in DAFT bins, `α_max + k_ν`.
    pub fn doppler_span(&self) -> usize {
        self.alpha_max() + self.k_nu
    }

    /// Diagonal of `Λ(c1)`.
    pub fn chirp1(&self) -> Vec<C64> {
        chirp_diagonal(self.c1, self.n)
    }

    /// Diagonal of `Λ(c2)`.
    pub fn chirp2(&self) -> Vec<C64> {
        chirp_diagonal(self.c2, self.n)
    }

    /// Entry `A[m, n]` of the DAFT matrix.
    #[inline]
    pub fn kernel(&self, m: usize, n: usize) -> C64 {
        let size = self.n;
        let turns = self.c2 * (m * m) as f64
            + ((m * n) % size) as f64 / size as f64
            + self.c1 * (n * n) as f64;
        cis_turns(-turns) / (size as f64).sqrt()
    }
}

impl fmt::Display for AfdmConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "N={} c1={} c2={} nu_max={} k_nu={}",
            self.n, self.c1, self.c2, self.nu_max, self.k_nu
        )
    }
}

fn chirp_diagonal(c: f64, n: usize) -> Vec<C64> {
    (0..n).map(|i| cis_turns(-c * (i * i) as f64)).collect()
}

/// Forward DAFT `y = A·r`, evaluated as a direct sum.
pub fn daft(r: &[C64], cfg: &AfdmConfig) -> Result<Vec<C64>> {
    check_len(cfg.n, r.len())?;
    Ok((0..cfg.n)
        .map(|m| {
            r.iter()
                .enumerate()
                .map(|(n, &v)| cfg.kernel(m, n) * v)
                .sum()
        })
        .collect())
}

/// Inverse DAFT `s = A^H·x`, evaluated as a direct sum.
pub fn idaft(x: &[C64], cfg: &AfdmConfig) -> Result<Vec<C64>> {
    check_len(cfg.n, x.len())?;
    Ok((0..cfg.n)
        .map(|n| {
            x.iter()
                .enumerate()
                .map(|(m, &v)| cfg.kernel(m, n).conj() * v)
                .sum()
        })
        .collect())
}

/// The unitary DAFT matrix `A`.
pub fn daft_matrix(cfg: &AfdmConfig) -> DMatrix<C64> {
    DMatrix::from_fn(cfg.n, cfg.n, |m, n| cfg.kernel(m, n))
}

/// Precomputed chirps and FFT plans for O(N log N) transforms.
#[derive(Clone)]
pub struct DaftPlan {
    cfg: AfdmConfig,
    chirp1: Vec<C64>,
    chirp2: Vec<C64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl fmt::Debug for DaftPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DaftPlan").field("cfg", &self.cfg).finish()
    }
}

impl DaftPlan {
    pub fn new(cfg: &AfdmConfig) -> Self {
        let mut planner = FftPlanner::new();
        DaftPlan {
            cfg: *cfg,
            chirp1: cfg.chirp1(),
            chirp2: cfg.chirp2(),
            fft: planner.plan_fft_forward(cfg.n),
            ifft: planner.plan_fft_inverse(cfg.n),
            scale: 1.0 / (cfg.n as f64).sqrt(),
        }
    }

    pub fn config(&self) -> &AfdmConfig {
        &self.cfg
    }

    /// In-place forward transform.
    pub fn forward_in_place(&self, buf: &mut [C64]) -> Result<()> {
        check_len(self.cfg.n, buf.len())?;
        for (v, c) in buf.iter_mut().zip(&self.chirp1) {
            *v *= c;
        }
        self.fft.process(buf);
        for (v, c) in buf.iter_mut().zip(&self.chirp2) {
            *v *= c * self.scale;
        }
        Ok(())
    }

    /// In-place inverse transform.
    pub fn inverse_in_place(&self, buf: &mut [C64]) -> Result<()> {
        check_len(self.cfg.n, buf.len())?;
        for (v, c) in buf.iter_mut().zip(&self.chirp2) {
            *v *= c.conj();
        }
        self.ifft.process(buf);
        for (v, c) in buf.iter_mut().zip(&self.chirp1) {
            *v *= c.conj() * self.scale;
        }
        Ok(())
    }

    pub fn forward(&self, r: &[C64]) -> Result<Vec<C64>> {
        let mut out = r.to_vec();
        self.forward_in_place(&mut out)?;
        Ok(out)
    }

    pub fn inverse(&self, x: &[C64]) -> Result<Vec<C64>> {
        let mut out = x.to_vec();
        self.inverse_in_place(&mut out)?;
        Ok(out)
    }
}
