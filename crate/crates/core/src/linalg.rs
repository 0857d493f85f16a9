//! Dense symmetric positive (semi-)definite helpers.
//!
//! Dimensions here are small (tens), so a plain Cholesky is all that is
//! needed for Gaussian sampling and Newton solves.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a symmetric PSD matrix.
///
/// Pivots below `-tol · scale` mean the matrix is not PSD; pivots within
/// `±tol · scale` are treated as exactly zero (semi-definite directions).
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::invalid_input(format!(
            "matrix must be square, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let scale = a.diag().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * scale;
    for i in 0..n {
        for j in 0..i {
            if (a[[i, j]] - a[[j, i]]).abs() > 1e-8 * scale {
                return Err(Error::invalid_input(format!(
                    "matrix is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut pivot = a[[j, j]];
        for k in 0..j {
            pivot -= l[[j, k]] * l[[j, k]];
        }
        if pivot < -tol {
            return Err(Error::invalid_input(format!(
                "matrix is not positive semi-definite (pivot {pivot:.3e} at {j})"
            )));
        }
        let pivot = pivot.max(0.0).sqrt();
        l[[j, j]] = pivot;
        for i in (j + 1)..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = if pivot > 0.0 { v / pivot } else { 0.0 };
        }
    }
    Ok(l)
}

/// Solve `A x = b` for symmetric positive definite `A` via Cholesky.
pub fn solve_spd(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let l = cholesky(a)?;
    let n = b.len();
    // forward: L y = b
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[[i, k]] * y[k];
        }
        if l[[i, i]] == 0.0 {
            return Err(Error::degenerate("singular system in solve_spd".to_string()));
        }
        y[i] = v / l[[i, i]];
    }
    // backward: Lᵀ x = y
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut v = y[i];
        for k in (i + 1)..n {
            v -= l[[k, i]] * x[k];
        }
        x[i] = v / l[[i, i]];
    }
    Ok(x)
}
