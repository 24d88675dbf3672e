//! Small dense linear-algebra helpers shared by every module.

use nalgebra::{DMatrix, DVector};
use nalgebra::Complex;

pub type Complex64 = Complex<f64>;

use crate::error::{dim_err, Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Matrices whose reciprocal condition number falls below this are treated
/// as singular.
pub const SINGULAR_RCOND: f64 = 1e-14;

/// `A + Aᵀ`.
pub fn he(a: &Mat) -> Mat {
    a + a.transpose()
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Largest absolute entry, or 0 for an empty matrix.
pub fn max_abs(a: &Mat) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `‖A − Aᵀ‖_max / max(1, ‖A‖_max)`.
pub fn relative_asymmetry(a: &Mat) -> f64 {
    if a.nrows() != a.ncols() {
        return f64::INFINITY;
    }
    let skew = max_abs(&(a - a.transpose()));
    skew / max_abs(a).max(1.0)
}

/// Eigenvalues of the symmetric part of `a`, ascending.
pub fn sym_eigenvalues(a: &Mat) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let s = symmetrize(a);
    let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

pub fn lambda_max(a: &Mat) -> f64 {
    sym_eigenvalues(a).last().copied().unwrap_or(0.0)
}

pub fn lambda_min(a: &Mat) -> f64 {
    sym_eigenvalues(a).first().copied().unwrap_or(0.0)
}

/// Reciprocal 2-norm condition number `σ_min / σ_max` (0 for the zero matrix).
pub fn rcond(a: &Mat) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0.0;
    }
    sv.min() / smax
}

/// Inverse of a square matrix, failing with [`Error::Singular`] naming `factor`.
pub fn inverse(a: &Mat, factor: &'static str) -> Result<Mat> {
    if a.nrows() != a.ncols() {
        return Err(dim_err(factor, "square matrix", format!("{}x{}", a.nrows(), a.ncols())));
    }
    let rc = rcond(a);
    if !(rc > SINGULAR_RCOND) {
        return Err(Error::Singular { factor, rcond: rc });
    }
    a.clone().try_inverse().ok_or(Error::Singular { factor, rcond: rc })
}

/// Largest singular value.
pub fn spectral_norm(a: &Mat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(a: &Mat) -> Vec<Complex64> {
    if a.is_empty() {
        return Vec::new();
    }
    a.complex_eigenvalues().iter().copied().collect()
}

/// `max Re spec(A)`.
pub fn spectral_abscissa(a: &Mat) -> f64 {
    eigenvalues(a).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Assembles a dense block matrix. Every block row must have matching heights
/// and every block column matching widths.
pub fn bmat(blocks: &[Vec<Mat>]) -> Result<Mat> {
    let nr = blocks.len();
    if nr == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let nc = blocks[0].len();
    if blocks.iter().any(|row| row.len() != nc) {
        return Err(dim_err("bmat", format!("{nc} block columns per row"), "ragged block rows"));
    }
    let heights: Vec<usize> = blocks.iter().map(|row| row[0].nrows()).collect();
    let widths: Vec<usize> = (0..nc).map(|j| blocks[0][j].ncols()).collect();
    for (i, row) in blocks.iter().enumerate() {
        for (j, b) in row.iter().enumerate() {
            if b.nrows() != heights[i] || b.ncols() != widths[j] {
                return Err(dim_err(
                    format!("bmat block ({i},{j})"),
                    format!("{}x{}", heights[i], widths[j]),
                    format!("{}x{}", b.nrows(), b.ncols()),
                ));
            }
        }
    }
    let mut out = Mat::zeros(heights.iter().sum(), widths.iter().sum());
    let mut r0 = 0;
    for (i, row) in blocks.iter().enumerate() {
        let mut c0 = 0;
        for (j, b) in row.iter().enumerate() {
            out.view_mut((r0, c0), (heights[i], widths[j])).copy_from(b);
            c0 += widths[j];
        }
        r0 += heights[i];
    }
    Ok(out)
}

pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let m: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(n, m);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn hstack(blocks: &[&Mat]) -> Result<Mat> {
    bmat(&[blocks.iter().map(|b| (*b).clone()).collect()])
}

pub fn vstack(blocks: &[&Mat]) -> Result<Mat> {
    let rows: Vec<Vec<Mat>> = blocks.iter().map(|b| vec![(*b).clone()]).collect();
    bmat(&rows)
}

/// Frobenius inner product `⟨A, B⟩ = trace(AᵀB)`.
pub fn inner(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub(crate) fn check_shape(m: &Mat, rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(dim_err(what, format!("{rows}x{cols}"), format!("{}x{}", m.nrows(), m.ncols())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_reports_singular_factor() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        match inverse(&a, "V") {
            Err(Error::Singular { factor, .. }) => assert_eq!(factor, "V"),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn bmat_rejects_mismatched_heights() {
        let a = Mat::zeros(2, 2);
        let b = Mat::zeros(3, 1);
        assert!(bmat(&[vec![a, b]]).is_err());
    }

    #[test]
    fn spectral_abscissa_of_rotation() {
        let a = Mat::from_row_slice(2, 2, &[-0.5, 2.0, -2.0, -0.5]);
        assert!((spectral_abscissa(&a) + 0.5).abs() < 1e-12);
    }
}
