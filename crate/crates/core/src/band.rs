//! Hermitian band matrices, band LDL^H factorization and band solves.
//!
//! Every routine tallies the complex multiplications, additions and
//! divisions it actually performs into a caller-owned [`OpCounter`].

use std::ops::{Add, AddAssign, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::daft::C64;
use crate::error::{check_len, Error, Result};

/// Complex operation tally.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounter {
    /// Complex multiplications.
    pub cm: u64,
    /// Complex additions.
    pub ca: u64,
    /// Complex divisions.
    pub cd: u64,
}

impl OpCounter {
    pub fn total(&self) -> u64 {
        self.cm + self.ca + self.cd
    }
}

impl Add for OpCounter {
    type Output = OpCounter;

    fn add(self, rhs: OpCounter) -> OpCounter {
        OpCounter {
            cm: self.cm + rhs.cm,
            ca: self.ca + rhs.ca,
            cd: self.cd + rhs.cd,
        }
    }
}

impl Sub for OpCounter {
    type Output = OpCounter;

    fn sub(self, rhs: OpCounter) -> OpCounter {
        OpCounter {
            cm: self.cm - rhs.cm,
            ca: self.ca - rhs.ca,
            cd: self.cd - rhs.cd,
        }
    }
}

impl AddAssign for OpCounter {
    fn add_assign(&mut self, rhs: OpCounter) {
        *self = *self + rhs;
    }
}

/// A tall `nrows × ncols` matrix whose column `j` is nonzero only on rows
/// `offset + j ..= offset + j + bandwidth`.
///
/// This is the shape of the truncated effective channel: every data column
/// touches at most `Q + 1` consecutive received samples.
#[derive(Clone, Debug, PartialEq)]
pub struct BandedColumns {
    nrows: usize,
    ncols: usize,
    offset: usize,
    bandwidth: usize,
    data: Vec<C64>,
}

impl BandedColumns {
    pub fn new(nrows: usize, ncols: usize, offset: usize, bandwidth: usize) -> Result<Self> {
        if ncols > 0 && offset + ncols - 1 + bandwidth >= nrows {
            return Err(Error::InvalidConfig(format!(
                "band of width {} at offset {offset} does not fit {ncols} columns into {nrows} rows",
                bandwidth + 1
            )));
        }
        Ok(BandedColumns {
            nrows,
            ncols,
            offset,
            bandwidth,
            data: vec![C64::new(0.0, 0.0); ncols * (bandwidth + 1)],
        })
    }

    /// Keeps the in-band part of a dense matrix and drops everything else.
    pub fn from_dense(dense: &DMatrix<C64>, offset: usize, bandwidth: usize) -> Result<Self> {
        let mut band = Self::new(dense.nrows(), dense.ncols(), offset, bandwidth)?;
        for j in 0..band.ncols {
            for t in 0..=bandwidth {
                band.data[j * (bandwidth + 1) + t] = dense[(offset + j + t, j)];
            }
        }
        Ok(band)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// In-band entries of column `j`, starting at row `offset + j`.
    pub fn column(&self, j: usize) -> &[C64] {
        let w = self.bandwidth + 1;
        &self.data[j * w..(j + 1) * w]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [C64] {
        let w = self.bandwidth + 1;
        &mut self.data[j * w..(j + 1) * w]
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        let first = self.offset + col;
        if row < first || row > first + self.bandwidth {
            C64::new(0.0, 0.0)
        } else {
            self.column(col)[row - first]
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.nrows, self.ncols, |r, c| self.get(r, c))
    }

    /// `M = H·H^H + n0·I`, touching only entries within the band.
    pub fn gram(&self, n0: f64, counter: &mut OpCounter) -> BandHermitian {
        let q = self.bandwidth;
        let mut m = BandHermitian::zeros(self.nrows, q);
        for r1 in 0..self.nrows {
            for delta in 0..=q.min(r1) {
                let r2 = r1 - delta;
                // Columns j with offset + j ≤ r2 and r1 ≤ offset + j + q.
                if self.ncols == 0 || r2 < self.offset {
                    continue;
                }
                let lo = r1.saturating_sub(self.offset + q);
                let hi = (r2 - self.offset).min(self.ncols - 1);
                if lo > hi {
                    continue;
                }
                let mut acc = C64::new(0.0, 0.0);
                for j in lo..=hi {
                    let first = self.offset + j;
                    let col = self.column(j);
                    acc += col[r1 - first] * col[r2 - first].conj();
                }
                let terms = (hi - lo + 1) as u64;
                counter.cm += terms;
                counter.ca += terms - 1;
                m.set_lower(r1, r2, acc);
            }
        }
        for r in 0..self.nrows {
            let d = m.lower(r, r) + n0;
            m.set_lower(r, r, d);
        }
        counter.ca += self.nrows as u64;
        m
    }

    /// `H^H·d`.
    pub fn adjoint_mul(&self, d: &[C64], counter: &mut OpCounter) -> Result<Vec<C64>> {
        check_len(self.nrows, d.len())?;
        let w = self.bandwidth as u64 + 1;
        let out = (0..self.ncols)
            .map(|j| {
                let first = self.offset + j;
                self.column(j)
                    .iter()
                    .zip(&d[first..first + self.bandwidth + 1])
                    .map(|(h, v)| h.conj() * v)
                    .sum()
            })
            .collect();
        counter.cm += w * self.ncols as u64;
        counter.ca += (w - 1) * self.ncols as u64;
        Ok(out)
    }
}

/// Hermitian matrix of order `N` with lower and upper bandwidth `Q`, stored
/// as its `Q + 1` lower diagonals.
#[derive(Clone, Debug, PartialEq)]
pub struct BandHermitian {
    order: usize,
    bandwidth: usize,
    /// `diags[d * order + c] = M[c + d, c]`.
    diags: Vec<C64>,
}

impl BandHermitian {
    pub fn zeros(order: usize, bandwidth: usize) -> Self {
        BandHermitian {
            order,
            bandwidth,
            diags: vec![C64::new(0.0, 0.0); order * (bandwidth + 1)],
        }
    }

    /// Reads the lower band of a dense Hermitian matrix.
    pub fn from_dense(dense: &DMatrix<C64>, bandwidth: usize) -> Result<Self> {
        check_len(dense.nrows(), dense.ncols())?;
        let mut m = Self::zeros(dense.nrows(), bandwidth);
        for c in 0..m.order {
            for d in 0..=bandwidth.min(m.order - 1 - c) {
                m.set_lower(c + d, c, dense[(c + d, c)]);
            }
        }
        Ok(m)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn lower(&self, r: usize, c: usize) -> C64 {
        self.diags[(r - c) * self.order + c]
    }

    #[inline]
    fn set_lower(&mut self, r: usize, c: usize, v: C64) {
        self.diags[(r - c) * self.order + c] = v;
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        if r.abs_diff(c) > self.bandwidth {
            C64::new(0.0, 0.0)
        } else if r >= c {
            self.lower(r, c)
        } else {
            self.lower(c, r).conj()
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.order, self.order, |r, c| self.get(r, c))
    }

    /// `M·x`.
    pub fn mul_vec(&self, x: &[C64]) -> Result<Vec<C64>> {
        check_len(self.order, x.len())?;
        let q = self.bandwidth;
        Ok((0..self.order)
            .map(|r| {
                let lo = r.saturating_sub(q);
                let hi = (r + q).min(self.order - 1);
                (lo..=hi).map(|c| self.get(r, c) * x[c]).sum()
            })
            .collect())
    }

    /// Band `LDL^H` factorization.
    pub fn ldl(&self, counter: &mut OpCounter) -> Result<BandLdl> {
        let n = self.order;
        let q = self.bandwidth;
        let max_diag = (0..n).map(|i| self.lower(i, i).re.abs()).fold(0.0, f64::max);
        let tol = 1e-14 * max_diag.max(f64::MIN_POSITIVE);
        let mut fact = BandLdl {
            order: n,
            bandwidth: q,
            lower: vec![C64::new(0.0, 0.0); n * (q + 1)],
            d: vec![0.0; n],
        };
        // v[k - kmin] = conj(L[j, k]) · D[k]
        let mut v = vec![C64::new(0.0, 0.0); q];
        for j in 0..n {
            let kmin = j.saturating_sub(q);
            let width = j - kmin;
            for k in kmin..j {
                v[k - kmin] = fact.l(j, k).conj() * fact.d[k];
            }
            let mut dj = self.lower(j, j);
            for k in kmin..j {
                dj -= fact.l(j, k) * v[k - kmin];
            }
            counter.cm += 2 * width as u64;
            counter.ca += width as u64;
            let pivot = dj.re;
            if !(pivot > tol) {
                return Err(Error::NotPositiveDefinite { index: j, pivot });
            }
            fact.d[j] = pivot;

            for i in j + 1..=(j + q).min(n - 1) {
                let k0 = kmin.max(i.saturating_sub(q));
                let mut s = self.lower(i, j);
                for k in k0..j {
                    s -= fact.l(i, k) * v[k - kmin];
                }
                let terms = (j - k0) as u64;
                counter.cm += terms;
                counter.ca += terms;
                counter.cd += 1;
                fact.set_l(i, j, s / pivot);
            }
        }
        Ok(fact)
    }
}

/// `M = L·D·L^H` with unit lower-triangular `L` of bandwidth `Q` and real
/// positive `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandLdl {
    order: usize,
    bandwidth: usize,
    lower: Vec<C64>,
    d: Vec<f64>,
}

impl BandLdl {
    #[inline]
    fn l(&self, r: usize, c: usize) -> C64 {
        self.lower[(r - c) * self.order + c]
    }

    #[inline]
    fn set_l(&mut self, r: usize, c: usize, v: C64) {
        self.lower[(r - c) * self.order + c] = v;
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.d
    }

    /// Dense unit lower-triangular factor.
    pub fn l_dense(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.order, self.order, |r, c| {
            if r == c {
                C64::new(1.0, 0.0)
            } else if r > c && r - c <= self.bandwidth {
                self.l(r, c)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// `L·D·L^H` as a dense matrix.
    pub fn reconstruct(&self) -> DMatrix<C64> {
        let l = self.l_dense();
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.order,
            self.d.iter().map(|&v| C64::new(v, 0.0)),
        ));
        &l * d * l.adjoint()
    }

    /// Solves `L·f = y`, `D·g = f`, `L^H·x = g`.
    pub fn solve(&self, y: &[C64], counter: &mut OpCounter) -> Result<Vec<C64>> {
        check_len(self.order, y.len())?;
        let n = self.order;
        let q = self.bandwidth;
        let mut x = y.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(q);
            let mut acc = x[i];
            for k in lo..i {
                acc -= self.l(i, k) * x[k];
            }
            counter.cm += (i - lo) as u64;
            counter.ca += (i - lo) as u64;
            x[i] = acc;
        }
        for (v, &d) in x.iter_mut().zip(&self.d) {
            if d == 0.0 {
                return Err(Error::Singular);
            }
            *v /= d;
        }
        counter.cd += n as u64;
        for i in (0..n).rev() {
            let hi = (i + q).min(n - 1);
            let mut acc = x[i];
            for k in i + 1..=hi {
                acc -= self.l(k, i).conj() * x[k];
            }
            counter.cm += (hi - i) as u64;
            counter.ca += (hi - i) as u64;
            x[i] = acc;
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_c(rng: &mut impl Rng) -> C64 {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn random_band_columns(rng: &mut impl Rng, ncols: usize, q: usize, offset: usize) -> BandedColumns {
        let mut h = BandedColumns::new(ncols + q + offset, ncols, offset, q).unwrap();
        for j in 0..ncols {
            for v in h.column_mut(j) {
                *v = rand_c(rng);
            }
        }
        h
    }

    fn max_abs(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn gram_of_identity() {
        let mut h = BandedColumns::new(6, 6, 0, 0).unwrap();
        for j in 0..6 {
            h.column_mut(j)[0] = C64::new(1.0, 0.0);
        }
        let mut ops = OpCounter::default();
        let m = h.gram(0.5, &mut ops).to_dense();
        let expected = DMatrix::<C64>::identity(6, 6) * C64::new(1.5, 0.0);
        assert!(max_abs(&(m - expected)) < 1e-15);
    }

    #[test]
    fn gram_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (ncols, q, offset) in [(40, 5, 0), (30, 8, 3), (12, 0, 2), (20, 3, 1)] {
            let h = random_band_columns(&mut rng, ncols, q, offset);
            let dense = h.to_dense();
            let mut ops = OpCounter::default();
            let m = h.gram(0.25, &mut ops).to_dense();
            let expected = &dense * dense.adjoint() + DMatrix::identity(dense.nrows(), dense.nrows()) * C64::new(0.25, 0.0);
            assert!(max_abs(&(m - expected)) < 1e-11);
        }
    }

    #[test]
    fn gram_ops_bounded_by_leading_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (ncols, q) = (120, 8);
        let h = random_band_columns(&mut rng, ncols, q, 0);
        let n = h.nrows() as u64;
        let mut ops = OpCounter::default();
        h.gram(0.1, &mut ops);
        let q = q as u64;
        assert!(ops.cm * 2 <= (q * q + 3 * q + 2) * n);
        assert!(ops.ca * 2 <= (q * q + q + 2) * n);
    }

    fn random_spd(rng: &mut impl Rng, n: usize, q: usize) -> BandHermitian {
        let h = random_band_columns(rng, n - q, q, 0);
        let mut ops = OpCounter::default();
        h.gram(0.3, &mut ops)
    }

    #[test]
    fn ldl_of_identity() {
        let m = BandHermitian::from_dense(&DMatrix::identity(5, 5), 2).unwrap();
        let f = m.ldl(&mut OpCounter::default()).unwrap();
        assert_eq!(f.l_dense(), DMatrix::identity(5, 5));
        assert_eq!(f.diagonal(), &[1.0; 5]);
        let y: Vec<C64> = (0..5).map(|k| C64::new(k as f64, 1.0)).collect();
        assert_eq!(f.solve(&y, &mut OpCounter::default()).unwrap(), y);
    }

    #[test]
    fn ldl_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_spd(&mut rng, 64, 8);
        let f = m.ldl(&mut OpCounter::default()).unwrap();
        let err = max_abs(&(f.reconstruct() - m.to_dense()));
        assert!(err < 1e-9, "{err}");
        assert!(f.diagonal().iter().all(|&d| d > 0.0));
    }

    #[test]
    fn ldl_division_count_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (n, q) in [(64usize, 8usize), (50, 3), (10, 0)] {
            let m = random_spd(&mut rng, n, q);
            let mut ops = OpCounter::default();
            m.ldl(&mut ops).unwrap();
            assert_eq!(ops.cd as usize, q * n - q * (q + 1) / 2);
            let q = q as u64;
            let n = n as u64;
            assert!(2 * ops.cm <= (q * q + 3 * q) * n);
            assert!(2 * ops.ca <= (q * q + q) * n);
        }
    }

    #[test]
    fn solve_matches_dense_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, q) = (64, 6);
        let m = random_spd(&mut rng, n, q);
        let y: Vec<C64> = (0..n).map(|_| rand_c(&mut rng)).collect();
        let mut ops = OpCounter::default();
        let f = m.ldl(&mut OpCounter::default()).unwrap();
        let x = f.solve(&y, &mut ops).unwrap();
        let dense = m.to_dense().lu().solve(&nalgebra::DVector::from_vec(y.clone())).unwrap();
        let err = x.iter().zip(dense.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9);
        let resid = m.mul_vec(&x).unwrap();
        let rel = resid.iter().zip(&y).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
            / y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!(rel < 1e-9);
        // Two band substitutions plus the diagonal scaling.
        let lead = (q * n - q * (q + 1) / 2) as u64;
        assert_eq!(ops.cm, 2 * lead);
        assert_eq!(ops.ca, 2 * lead);
        assert_eq!(ops.cd, n as u64);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let mut dense = DMatrix::<C64>::identity(4, 4);
        dense[(2, 2)] = C64::new(-1.0, 0.0);
        let m = BandHermitian::from_dense(&dense, 1).unwrap();
        assert!(matches!(
            m.ldl(&mut OpCounter::default()),
            Err(Error::NotPositiveDefinite { index: 2, .. })
        ));
    }

    #[test]
    fn band_shape_must_fit() {
        assert!(BandedColumns::new(10, 8, 1, 2).is_err());
        assert!(BandedColumns::new(10, 8, 0, 2).is_ok());
    }
}
