//! Dense linear-algebra helpers built on nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used by the pseudoinverse.
pub fn default_rcond(rows: usize, cols: usize) -> f64 {
    f64::EPSILON * rows.max(cols) as f64
}

/// Thin SVD `a = U diag(s) Vᵀ` computed with faer.
fn thin_svd(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let (m, n) = a.shape();
    let fa = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)]);
    let svd = fa
        .thin_svd()
        .map_err(|e| Error::InvalidInput(format!("SVD did not converge: {e:?}")))?;
    let k = m.min(n);
    let (fu, fs, fv) = (svd.U(), svd.S().column_vector(), svd.V());
    let u = DMatrix::from_fn(m, k, |i, j| fu[(i, j)]);
    let s = (0..k).map(|j| fs[j]).collect();
    let v = DMatrix::from_fn(n, k, |i, j| fv[(i, j)]);
    Ok((u, s, v))
}

fn cutoff(rows: usize, cols: usize, singular_values: &[f64]) -> f64 {
    let s_max = singular_values.iter().copied().fold(0.0, f64::max);
    default_rcond(rows, cols) * s_max
}

/// Moore-Penrose pseudoinverse via SVD. Returns the inverse and the numerical rank.
pub fn pseudoinverse(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, usize)> {
    check_finite(a.iter())?;
    let (m, n) = a.shape();
    let (u, s, v) = thin_svd(a)?;
    let tol = cutoff(m, n, &s);
    let mut pinv = DMatrix::zeros(n, m);
    let mut rank = 0;
    for (k, &sk) in s.iter().enumerate() {
        if sk > tol && sk > 0.0 {
            rank += 1;
            // pinv += v_k u_kᵀ / s_k
            pinv.ger(1.0 / sk, &v.column(k), &u.column(k), 1.0);
        }
    }
    Ok((pinv, rank))
}

/// Minimum-norm least-squares solution `x⁺ y`. Also returns the numerical rank.
pub fn pseudoinverse_solve_with_rank(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, usize)> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidInput(format!("x has {} rows, y has {}", x.nrows(), y.len())));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidInput("empty system".into()));
    }
    check_finite(x.iter().chain(y.iter()))?;
    let (m, n) = x.shape();
    let (u, s, v) = thin_svd(x)?;
    let tol = cutoff(m, n, &s);
    let mut w = DVector::zeros(n);
    let mut rank = 0;
    for (k, &sk) in s.iter().enumerate() {
        if sk > tol && sk > 0.0 {
            rank += 1;
            let coef = u.column(k).dot(y) / sk;
            w.axpy(coef, &v.column(k), 1.0);
        }
    }
    Ok((w, rank))
}

pub fn pseudoinverse_solve(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    pseudoinverse_solve_with_rank(x, y).map(|(w, _)| w)
}

fn check_finite<'a>(mut values: impl Iterator<Item = &'a f64>) -> Result<()> {
    if values.any(|v| !v.is_finite()) {
        Err(Error::InvalidInput("non-finite entry in linear system".into()))
    } else {
        Ok(())
    }
}
