//! Dense linear-algebra helpers shared by the LTI and estimator modules.
//!
//! Everything here is small-matrix work (orders below ~100), so the
//! implementations favour robustness over asymptotic speed: matrices are
//! balanced before eigenvalue extraction, and the matrix-equation solvers
//! (`lyap`, `care`) verify their own residuals.

mod care;
mod lyap;
pub mod poly;

pub use care::{care_residual, solve_care_filter};
pub(crate) use care::matrix_sign;
pub use lyap::{solve_lyapunov, solve_sylvester};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// In-place Parlett–Reinsch balancing: a diagonal similarity D⁻¹AD with
/// powers of two that roughly equalizes row/column norms. Returns the
/// diagonal scaling factors. Eigenvalues are preserved exactly (powers of
/// two introduce no rounding).
pub fn balance(a: &mut DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut d = vec![1.0_f64; n];
    let radix = 2.0_f64;
    let mut converged = false;
    let mut sweeps = 0;
    while !converged && sweeps < 100 {
        converged = true;
        sweeps += 1;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let mut f = 1.0;
            let mut cc = c;
            let mut rr = r;
            let s = c + r;
            while cc < rr / radix {
                f *= radix;
                cc *= radix;
                rr /= radix;
            }
            while cc >= rr * radix {
                f /= radix;
                cc /= radix;
                rr *= radix;
            }
            // Only rescale when it meaningfully reduces the 1-norm.
            if (cc + rr) < 0.95 * s {
                converged = false;
                d[i] *= f;
                for j in 0..n {
                    a[(i, j)] /= f;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
    }
    d
}

/// Eigenvalues of a general real matrix, computed after balancing.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension {
            context: "eigenvalues",
            expected: "square matrix".into(),
            got: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    if a.is_empty() {
        return Ok(Vec::new());
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigenvalues"));
    }
    let mut b = a.clone();
    balance(&mut b);
    let eig = b.complex_eigenvalues();
    let vals: Vec<Complex64> = eig.iter().map(|z| Complex64::new(z.re, z.im)).collect();
    if vals.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Eigen("eigenvalue iteration did not converge"));
    }
    Ok(vals)
}

/// Largest singular value of a complex matrix.
pub fn spectral_norm(m: &DMatrix<Complex64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Frobenius norm of a real or complex matrix.
pub fn frobenius_norm<T: nalgebra::ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    m.iter()
        .map(|z| z.clone().modulus_squared())
        .sum::<f64>()
        .sqrt()
}

/// Numerical rank via singular values, with a relative tolerance.
pub fn rank(m: &DMatrix<Complex64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}
