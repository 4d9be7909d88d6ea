//! DAFT-domain effective channel `H_eff = A·H·A^H`, its truncation to the
//! data columns and the sparse tap maps used by the MRC-DFE.

use nalgebra::DMatrix;

use crate::band::BandedColumns;
use crate::channel::{apply_time_domain, ChannelRealization};
use crate::daft::{cis_turns, daft_matrix, AfdmConfig, DaftPlan, C64};
use crate::error::{check_len, Error, Result};
use crate::framing::FrameLayout;

/// `A·H·A^H` by dense matrix products.
pub fn build_exact(h: &DMatrix<C64>, cfg: &AfdmConfig) -> Result<DMatrix<C64>> {
    check_len(cfg.n, h.nrows())?;
    check_len(cfg.n, h.ncols())?;
    let a = daft_matrix(cfg);
    Ok(&a * h * a.adjoint())
}

/// `A·H·A^H` column by column, as the DAFT of the channel output for each
/// chirp subcarrier. O(N² (log N + P)).
pub fn build_fast(ch: &ChannelRealization, plan: &DaftPlan) -> Result<DMatrix<C64>> {
    let cfg = plan.config();
    let n = cfg.n;
    ch.validate(cfg)?;
    let mut out = DMatrix::zeros(n, n);
    let mut unit = vec![C64::new(0.0, 0.0); n];
    for q in 0..n {
        unit.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        unit[q] = C64::new(1.0, 0.0);
        plan.inverse_in_place(&mut unit)?;
        let mut col = apply_time_domain(&unit, ch, cfg)?;
        plan.forward_in_place(&mut col)?;
        out.column_mut(q).copy_from_slice(&col);
    }
    Ok(out)
}

/// Closed form for integer Doppler:
/// `H_i(p, q) = exp(j2π/N (N c1 l_i² - q l_i + N c2 (q² - p²)))` on
/// `q = (p + loc_i) mod N`, with `loc_i = ν_i + 2N c1 l_i`.
pub fn build_integer_sparse(ch: &ChannelRealization, cfg: &AfdmConfig) -> Result<DMatrix<C64>> {
    ch.validate(cfg)?;
    if !ch.is_integer_doppler() {
        return Err(Error::Mode("closed form needs integer Doppler shifts".into()));
    }
    let n = cfg.n;
    let step = 2.0 * n as f64 * cfg.c1;
    if (step - step.round()).abs() > 1e-9 {
        return Err(Error::Mode(format!("2N·c1 = {step} is not an integer")));
    }
    let step = step.round() as i64;
    let mut h = DMatrix::zeros(n, n);
    for path in &ch.paths {
        let l = path.delay as i64;
        let loc = (path.doppler.round() as i64 + step * l).rem_euclid(n as i64) as usize;
        for p in 0..n {
            let q = (p + loc) % n;
            let turns = cfg.c1 * (l * l) as f64 - ((q as i64 * l) % n as i64) as f64 / n as f64
                + cfg.c2 * ((q * q) as f64 - (p * p) as f64);
            h[(p, q)] += path.gain * cis_turns(turns);
        }
    }
    Ok(h)
}

/// One retained coefficient: the index along the other axis and its value.
pub type Tap = (usize, C64);

/// Truncated effective channel `H̲_eff = H_eff·T^H` with its band view and
/// sparse tap maps.
#[derive(Clone, Debug)]
pub struct EffectiveChannel {
    layout: FrameLayout,
    support: usize,
    dense: DMatrix<C64>,
    band: BandedColumns,
    col_taps: Vec<Vec<Tap>>,
    row_taps: Vec<Vec<Tap>>,
    energy: Vec<f64>,
}

impl EffectiveChannel {
    /// Keeps the data columns of the full `N × N` effective channel and
    /// indexes the `support` largest-magnitude entries of every column.
    ///
    /// Ties go to the lower row index. Row maps are the transpose of the
    /// column maps, so both describe the same sparse matrix.
    pub fn new(h_eff: &DMatrix<C64>, layout: FrameLayout, support: usize) -> Result<Self> {
        let n = layout.n();
        check_len(n, h_eff.nrows())?;
        check_len(n, h_eff.ncols())?;
        if support == 0 {
            return Err(Error::InvalidConfig("support size must be positive".into()));
        }
        let start = layout.data_start();
        let ncols = layout.data_len();
        let dense = h_eff.columns(start, ncols).into_owned();
        let band = BandedColumns::from_dense(
            &dense,
            layout.guard() - layout.bandwidth(),
            layout.bandwidth(),
        )?;

        let keep = support.min(n);
        let mut col_taps = Vec::with_capacity(ncols);
        let mut row_taps: Vec<Vec<Tap>> = vec![Vec::new(); n];
        let mut energy = Vec::with_capacity(ncols);
        let mut order: Vec<usize> = Vec::with_capacity(n);
        for k in 0..ncols {
            let col = dense.column(k);
            order.clear();
            order.extend(0..n);
            order.sort_by(|&a, &b| {
                col[b]
                    .norm_sqr()
                    .partial_cmp(&col[a].norm_sqr())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            let mut rows: Vec<usize> = order[..keep].to_vec();
            rows.sort_unstable();
            let taps: Vec<Tap> = rows.iter().map(|&r| (r, col[r])).collect();
            let d: f64 = taps.iter().map(|(_, v)| v.norm_sqr()).sum();
            if !(d > 0.0) {
                return Err(Error::DegenerateColumn(k));
            }
            for &(r, v) in &taps {
                row_taps[r].push((k, v));
            }
            energy.push(d);
            col_taps.push(taps);
        }
        Ok(EffectiveChannel {
            layout,
            support: keep,
            dense,
            band,
            col_taps,
            row_taps,
            energy,
        })
    }

    /// Effective channel of a realization, with `L = (2k_ν + 1)·P` retained
    /// entries per column.
    pub fn from_channel(ch: &ChannelRealization, plan: &DaftPlan, layout: FrameLayout) -> Result<Self> {
        let support = (2 * plan.config().k_nu + 1) * ch.paths.len();
        Self::new(&build_fast(ch, plan)?, layout, support)
    }

    pub fn layout(&self) -> &FrameLayout {
        &self.layout
    }

    /// Band half-width `Q`.
    pub fn bandwidth(&self) -> usize {
        self.layout.bandwidth()
    }

    /// Retained entries per column, `L`.
    pub fn support(&self) -> usize {
        self.support
    }

    /// `N × (N - Q_g)` truncated channel.
    pub fn dense(&self) -> &DMatrix<C64> {
        &self.dense
    }

    /// In-band part of the truncated channel.
    pub fn band(&self) -> &BandedColumns {
        &self.band
    }

    /// Retained `(row, value)` pairs of data column `k`, ascending rows.
    pub fn column_taps(&self, k: usize) -> &[Tap] {
        &self.col_taps[k]
    }

    /// Retained `(column, value)` pairs of received row `r`, ascending columns.
    pub fn row_taps(&self, r: usize) -> &[Tap] {
        &self.row_taps[r]
    }

    /// `q_k^i`: row index of the i-th retained coefficient of column `k`.
    pub fn q_map(&self) -> Vec<Vec<usize>> {
        self.col_taps.iter().map(|t| t.iter().map(|&(r, _)| r).collect()).collect()
    }

    /// `p_k^i`: column index of the i-th retained coefficient of row `k`.
    pub fn p_map(&self) -> Vec<Vec<usize>> {
        self.row_taps.iter().map(|t| t.iter().map(|&(c, _)| c).collect()).collect()
    }

    /// Column energies `d_k` over the retained support.
    pub fn column_energy(&self) -> &[f64] {
        &self.energy
    }

    /// `H̲_eff·x̲`.
    pub fn apply(&self, data: &[C64]) -> Result<Vec<C64>> {
        check_len(self.dense.ncols(), data.len())?;
        let x = nalgebra::DVector::from_column_slice(data);
        Ok((&self.dense * x).as_slice().to_vec())
    }
}
