//! Matrix-valued affine expressions in the scalar coordinates of an SDP.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{dim_err, Result};
use crate::linalg::Mat;

/// `E(y) = E0 + Σ_k y_k E_k`, stored as a dense constant and a sorted list of
/// `(coordinate, row, col, coefficient)` triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct AffExpr {
    constant: Mat,
    terms: Vec<(usize, usize, usize, f64)>,
}

impl AffExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { constant: Mat::zeros(rows, cols), terms: Vec::new() }
    }

    pub fn constant(m: Mat) -> Self {
        Self { constant: m, terms: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(Mat::identity(n, n))
    }

    pub(crate) fn from_terms(rows: usize, cols: usize, terms: Vec<(usize, usize, usize, f64)>) -> Self {
        let mut e = Self { constant: Mat::zeros(rows, cols), terms };
        e.normalize();
        e
    }

    pub fn rows(&self) -> usize {
        self.constant.nrows()
    }

    pub fn cols(&self) -> usize {
        self.constant.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn constant_part(&self) -> &Mat {
        &self.constant
    }

    pub fn terms(&self) -> &[(usize, usize, usize, f64)] {
        &self.terms
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    /// Largest coordinate index referenced, plus one.
    pub fn coord_bound(&self) -> usize {
        self.terms.iter().map(|t| t.0 + 1).max().unwrap_or(0)
    }

    fn normalize(&mut self) {
        self.terms.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
        let mut out: Vec<(usize, usize, usize, f64)> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            match out.last_mut() {
                Some(last) if (last.0, last.1, last.2) == (t.0, t.1, t.2) => last.3 += t.3,
                _ => out.push(t),
            }
        }
        out.retain(|t| t.3 != 0.0);
        self.terms = out;
    }

    pub fn try_add(&self, other: &AffExpr) -> Result<AffExpr> {
        if self.shape() != other.shape() {
            return Err(dim_err("expression sum", format!("{:?}", self.shape()), format!("{:?}", other.shape())));
        }
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        let mut e = AffExpr { constant: &self.constant + &other.constant, terms };
        e.normalize();
        Ok(e)
    }

    pub fn scale(&self, s: f64) -> AffExpr {
        let mut e = AffExpr {
            constant: &self.constant * s,
            terms: self.terms.iter().map(|&(k, i, j, v)| (k, i, j, v * s)).collect(),
        };
        e.normalize();
        e
    }

    /// `M · E`.
    pub fn lmul(&self, m: &Mat) -> Result<AffExpr> {
        if m.ncols() != self.rows() {
            return Err(dim_err("left product", format!("{} columns", self.rows()), m.ncols()));
        }
        let mut terms = Vec::with_capacity(self.terms.len() * m.nrows());
        for &(k, r, c, v) in &self.terms {
            for i in 0..m.nrows() {
                let a = m[(i, r)];
                if a != 0.0 {
                    terms.push((k, i, c, a * v));
                }
            }
        }
        let mut e = AffExpr { constant: m * &self.constant, terms };
        e.normalize();
        Ok(e)
    }

    /// `E · M`.
    pub fn rmul(&self, m: &Mat) -> Result<AffExpr> {
        if m.nrows() != self.cols() {
            return Err(dim_err("right product", format!("{} rows", self.cols()), m.nrows()));
        }
        let mut terms = Vec::with_capacity(self.terms.len() * m.ncols());
        for &(k, r, c, v) in &self.terms {
            for j in 0..m.ncols() {
                let a = m[(c, j)];
                if a != 0.0 {
                    terms.push((k, r, j, v * a));
                }
            }
        }
        let mut e = AffExpr { constant: &self.constant * m, terms };
        e.normalize();
        Ok(e)
    }

    pub fn t(&self) -> AffExpr {
        let mut e = AffExpr {
            constant: self.constant.transpose(),
            terms: self.terms.iter().map(|&(k, i, j, v)| (k, j, i, v)).collect(),
        };
        e.normalize();
        e
    }

    /// `E + Eᵀ`.
    pub fn he(&self) -> Result<AffExpr> {
        self.try_add(&self.t())
    }

    /// `trace(Mᵀ E)` as a 1×1 expression.
    pub fn inner(&self, m: &Mat) -> Result<AffExpr> {
        if m.shape() != self.shape() {
            return Err(dim_err("inner product", format!("{:?}", self.shape()), format!("{:?}", m.shape())));
        }
        let c = crate::linalg::inner(m, &self.constant);
        let terms = self.terms.iter().map(|&(k, i, j, v)| (k, 0, 0, v * m[(i, j)])).collect();
        let mut e = AffExpr { constant: Mat::from_element(1, 1, c), terms };
        e.normalize();
        Ok(e)
    }

    pub fn trace(&self) -> Result<AffExpr> {
        if self.rows() != self.cols() {
            return Err(dim_err("trace", "square expression", format!("{:?}", self.shape())));
        }
        self.inner(&Mat::identity(self.rows(), self.cols()))
    }

    /// Block matrix of expressions with the same layout rules as
    /// [`crate::linalg::bmat`].
    pub fn block(blocks: &[Vec<AffExpr>]) -> Result<AffExpr> {
        let consts: Vec<Vec<Mat>> = blocks.iter().map(|row| row.iter().map(|b| b.constant.clone()).collect()).collect();
        let constant = crate::linalg::bmat(&consts)?;
        let mut terms = Vec::new();
        let mut r0 = 0;
        for row in blocks {
            let mut c0 = 0;
            for b in row {
                terms.extend(b.terms.iter().map(|&(k, i, j, v)| (k, r0 + i, c0 + j, v)));
                c0 += b.cols();
            }
            r0 += row.first().map_or(0, |b| b.rows());
        }
        let mut e = AffExpr { constant, terms };
        e.normalize();
        Ok(e)
    }

    /// Value at the coordinate vector `y`.
    pub fn eval(&self, y: &[f64]) -> Mat {
        let mut out = self.constant.clone();
        for &(k, i, j, v) in &self.terms {
            out[(i, j)] += v * y[k];
        }
        out
    }

    /// Value of a 1×1 expression.
    pub fn eval_scalar(&self, y: &[f64]) -> f64 {
        self.eval(y)[(0, 0)]
    }

    /// Groups the triplets by coordinate.
    pub(crate) fn by_coord(&self) -> Vec<(usize, Vec<(usize, usize, f64)>)> {
        let mut out: Vec<(usize, Vec<(usize, usize, f64)>)> = Vec::new();
        for &(k, i, j, v) in &self.terms {
            match out.last_mut() {
                Some((kk, list)) if *kk == k => list.push((i, j, v)),
                _ => out.push((k, vec![(i, j, v)])),
            }
        }
        out
    }
}

impl From<Mat> for AffExpr {
    fn from(m: Mat) -> Self {
        AffExpr::constant(m)
    }
}

impl Add for &AffExpr {
    type Output = AffExpr;
    fn add(self, rhs: &AffExpr) -> AffExpr {
        self.try_add(rhs).expect("expression shapes must agree")
    }
}

impl Add for AffExpr {
    type Output = AffExpr;
    fn add(self, rhs: AffExpr) -> AffExpr {
        &self + &rhs
    }
}

impl Sub for &AffExpr {
    type Output = AffExpr;
    fn sub(self, rhs: &AffExpr) -> AffExpr {
        self.try_add(&rhs.scale(-1.0)).expect("expression shapes must agree")
    }
}

impl Sub for AffExpr {
    type Output = AffExpr;
    fn sub(self, rhs: AffExpr) -> AffExpr {
        &self - &rhs
    }
}

impl Neg for &AffExpr {
    type Output = AffExpr;
    fn neg(self) -> AffExpr {
        self.scale(-1.0)
    }
}

impl Neg for AffExpr {
    type Output = AffExpr;
    fn neg(self) -> AffExpr {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &AffExpr {
    type Output = AffExpr;
    fn mul(self, s: f64) -> AffExpr {
        self.scale(s)
    }
}

impl Mul<f64> for AffExpr {
    type Output = AffExpr;
    fn mul(self, s: f64) -> AffExpr {
        self.scale(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var2x2(offset: usize) -> AffExpr {
        AffExpr::from_terms(2, 2, vec![(offset, 0, 0, 1.0), (offset + 1, 0, 1, 1.0), (offset + 2, 1, 0, 1.0), (offset + 3, 1, 1, 1.0)])
    }

    #[test]
    fn products_match_dense_evaluation() {
        let x = var2x2(0);
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, -3.0, 0.5]);
        let y = [0.3, -1.2, 2.0, 0.7];
        let xv = x.eval(&y);
        assert_eq!(x.lmul(&m).unwrap().eval(&y), &m * &xv);
        assert_eq!(x.rmul(&m).unwrap().eval(&y), &xv * &m);
        assert_eq!(x.he().unwrap().eval(&y), &xv + xv.transpose());
        assert!((x.trace().unwrap().eval_scalar(&y) - xv.trace()).abs() < 1e-15);
    }

    #[test]
    fn duplicate_terms_merge_and_cancel() {
        let x = var2x2(0);
        let z = &x - &x;
        assert!(z.is_constant());
    }

    #[test]
    fn block_offsets() {
        let x = var2x2(0);
        let b = AffExpr::block(&[vec![x.clone(), AffExpr::zeros(2, 1)], vec![AffExpr::zeros(1, 2), AffExpr::identity(1)]]).unwrap();
        let y = [1.0, 2.0, 3.0, 4.0];
        let v = b.eval(&y);
        assert_eq!(v[(1, 1)], 4.0);
        assert_eq!(v[(2, 2)], 1.0);
        assert_eq!(v[(2, 0)], 0.0);
    }
}
