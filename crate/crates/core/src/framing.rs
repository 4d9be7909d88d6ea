//! Constellation mapping and zero-padded frame layout.
//!
//! A padded frame carries `N - Q_g` data symbols at the contiguous DAFT
//! indices `[Q_g - (α_max + k_ν), N - (α_max + k_ν) - 1]` and exact zeros
//! everywhere else. With `Q_g ≥ Q` the truncated effective channel is a band
//! matrix without wrap-around.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;

use crate::daft::{AfdmConfig, C64};
use crate::error::{Error, Result};

/// Minimum number of null guard symbols,
/// `Q = (l_max + 1)(2(α_max + k_ν) + 1) - 1`.
pub fn guard_width(l_max: usize, cfg: &AfdmConfig) -> Result<usize> {
    if l_max >= cfg.n {
        return Err(Error::InvalidChannel(format!(
            "maximum delay {l_max} must be below N = {}",
            cfg.n
        )));
    }
    Ok((l_max + 1) * (2 * cfg.doppler_span() + 1) - 1)
}

/// Symbol alphabet with a bit labelling.
pub trait Constellation {
    fn bits_per_symbol(&self) -> usize;

    /// Constellation points indexed by their integer label (MSB first).
    fn points(&self) -> &[C64];

    /// Label of the point closest to `s`.
    fn nearest(&self, s: C64) -> usize;

    fn slice(&self, s: C64) -> C64 {
        self.points()[self.nearest(s)]
    }

    fn map(&self, bits: &[u8]) -> Result<Vec<C64>> {
        let k = self.bits_per_symbol();
        if !bits.len().is_multiple_of(k) {
            return Err(Error::Dimension {
                expected: bits.len().div_ceil(k) * k,
                got: bits.len(),
            });
        }
        Ok(bits
            .chunks(k)
            .map(|chunk| {
                let label = chunk.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
                self.points()[label]
            })
            .collect())
    }

    /// Hard nearest-point decision back to bits.
    fn demap(&self, symbols: &[C64]) -> Vec<u8> {
        let k = self.bits_per_symbol();
        let mut bits = Vec::with_capacity(symbols.len() * k);
        for &s in symbols {
            let label = self.nearest(s);
            for shift in (0..k).rev() {
                bits.push(((label >> shift) & 1) as u8);
            }
        }
        bits
    }
}

/// Gray-labelled 4-QAM with unit average energy. The first bit selects the
/// sign of the real part, the second the sign of the imaginary part; a zero
/// bit maps to the positive sign.
#[derive(Clone, Copy, Debug, Default)]
pub struct Qam4;

const QAM4_POINTS: [C64; 4] = [
    C64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    C64::new(FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
    C64::new(-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    C64::new(-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
];

impl Constellation for Qam4 {
    fn bits_per_symbol(&self) -> usize {
        2
    }

    fn points(&self) -> &[C64] {
        &QAM4_POINTS
    }

    #[inline]
    fn nearest(&self, s: C64) -> usize {
        (usize::from(s.re < 0.0) << 1) | usize::from(s.im < 0.0)
    }
}

/// Placement of data and null symbols inside one DAFT-domain frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameLayout {
    n: usize,
    guard: usize,
    bandwidth: usize,
    data_start: usize,
}

impl FrameLayout {
    /// Padded layout with `guard` null symbols for a channel whose largest
    /// delay is `l_max`.
    pub fn new(cfg: &AfdmConfig, guard: usize, l_max: usize) -> Result<Self> {
        let bandwidth = guard_width(l_max, cfg)?;
        if guard < bandwidth {
            return Err(Error::GuardTooSmall {
                guard,
                required: bandwidth,
            });
        }
        if guard >= cfg.n {
            return Err(Error::InvalidConfig(format!(
                "guard of {guard} leaves no data symbols in a frame of {}",
                cfg.n
            )));
        }
        Ok(FrameLayout {
            n: cfg.n,
            guard,
            bandwidth,
            data_start: guard - cfg.doppler_span(),
        })
    }

    /// Padded layout with the minimal guard `Q_g = Q`.
    pub fn minimal(cfg: &AfdmConfig, l_max: usize) -> Result<Self> {
        Self::new(cfg, guard_width(l_max, cfg)?, l_max)
    }

    /// Every index carries data; used for the cyclic OFDM baseline.
    pub fn unpadded(n: usize) -> Self {
        FrameLayout {
            n,
            guard: 0,
            bandwidth: 0,
            data_start: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of null symbols `Q_g`.
    pub fn guard(&self) -> usize {
        self.guard
    }

    /// Band half-width `Q` required by the channel.
    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn data_len(&self) -> usize {
        self.n - self.guard
    }

    /// First DAFT index that carries data.
    pub fn data_start(&self) -> usize {
        self.data_start
    }

    pub fn data_range(&self) -> std::ops::Range<usize> {
        self.data_start..self.data_start + self.data_len()
    }

    /// Places `data` into a length-`N` vector.
    pub fn assemble(&self, data: &[C64]) -> Result<Frame> {
        if data.len() != self.data_len() {
            return Err(Error::Dimension {
                expected: self.data_len(),
                got: data.len(),
            });
        }
        let mut full = vec![C64::new(0.0, 0.0); self.n];
        full[self.data_range()].copy_from_slice(data);
        Ok(Frame { layout: *self, full })
    }

    /// Reads the data positions of a length-`N` vector (`T·x`).
    pub fn extract(&self, full: &[C64]) -> Result<Vec<C64>> {
        if full.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: full.len(),
            });
        }
        Ok(full[self.data_range()].to_vec())
    }

    /// The row-selection matrix `T`, of size `(N - Q_g) × N`.
    pub fn truncation_matrix(&self) -> DMatrix<f64> {
        let start = self.data_start;
        DMatrix::from_fn(self.data_len(), self.n, |r, c| if c == start + r { 1.0 } else { 0.0 })
    }
}

/// An assembled frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub layout: FrameLayout,
    pub full: Vec<C64>,
}

impl Frame {
    pub fn data(&self) -> &[C64] {
        &self.full[self.layout.data_range()]
    }
}
