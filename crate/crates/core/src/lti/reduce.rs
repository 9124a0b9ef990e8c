//! Balanced-truncation model order reduction.
//!
//! Gramians come from the same Bartels–Stewart Lyapunov backend as the
//! Riccati refinement; the balancing transformation uses the square-root
//! algorithm (SVD of the product of gramian factors), which avoids forming
//! the ill-conditioned product P·Q explicitly.

use nalgebra::DMatrix;

use super::freq::log_grid;
use super::ss::StateSpace;
use crate::error::{Error, Result};
use crate::linalg;

/// Hankel values below this fraction of the largest are clamped before the
/// inverse-square-root scaling (they belong to numerically unreachable or
/// unobservable directions).
const SIGMA_CLAMP: f64 = 1e-14;

/// Solve `A P + P Aᵀ + B Bᵀ = 0` for a Hurwitz system.
pub fn controllability_gramian(sys: &StateSpace) -> Result<DMatrix<f64>> {
    require_hurwitz(sys)?;
    linalg::solve_lyapunov(sys.a(), &(sys.b() * sys.b().transpose()))
}

/// Solve `Aᵀ Q + Q A + Cᵀ C = 0` for a Hurwitz system.
pub fn observability_gramian(sys: &StateSpace) -> Result<DMatrix<f64>> {
    require_hurwitz(sys)?;
    linalg::solve_lyapunov(
        &sys.a().transpose(),
        &(sys.c().transpose() * sys.c()),
    )
}

fn require_hurwitz(sys: &StateSpace) -> Result<()> {
    if !sys.is_hurwitz()? {
        return Err(Error::Reduction(
            "system is not Hurwitz; gramians are undefined".into(),
        ));
    }
    Ok(())
}

/// Symmetric PSD square root factor `L` with `M ≈ L Lᵀ`; small negative
/// eigenvalues from rounding are clamped to zero.
fn psd_factor(m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let eig = nalgebra::SymmetricEigen::new(0.5 * (&m + m.transpose()));
    let mut l = eig.eigenvectors;
    for j in 0..n {
        let s = eig.eigenvalues[j].max(0.0).sqrt();
        for i in 0..n {
            l[(i, j)] *= s;
        }
    }
    l
}

/// Hankel singular values (descending) of a Hurwitz system.
pub fn hankel_singular_values(sys: &StateSpace) -> Result<Vec<f64>> {
    Ok(balancing_data(sys)?.0)
}

/// σ (descending) plus the SVD factors of LqᵀLp and the gramian factors,
/// shared between `hankel_singular_values` and `balanced_truncation`.
#[allow(clippy::type_complexity)]
fn balancing_data(
    sys: &StateSpace,
) -> Result<(Vec<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let lp = psd_factor(controllability_gramian(sys)?);
    let lq = psd_factor(observability_gramian(sys)?);
    let mut svd = nalgebra::SVD::new(lq.transpose() * &lp, true, true);
    svd.sort_by_singular_values();
    let u = svd.u.ok_or(Error::Eigen("SVD of gramian product"))?;
    let vt = svd.v_t.ok_or(Error::Eigen("SVD of gramian product"))?;
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    Ok((sigma, u, vt, lp, lq))
}

/// Reduce `sys` to order `r` by balanced truncation.
///
/// Returns the reduced system together with the H∞ error bound
/// `2·(σ_{r+1}+…+σ_n)`; the bound is verified on a log frequency grid
/// before returning.
pub fn balanced_truncation(sys: &StateSpace, r: usize) -> Result<(StateSpace, f64)> {
    let n = sys.order();
    if r < 1 || r > n {
        return Err(Error::InvalidParam {
            name: "r",
            message: format!("target order must satisfy 1 ≤ r ≤ {n}, got {r}"),
        });
    }
    let (sigma, u, vt, lp, lq) = balancing_data(sys)?;
    let sigma_max = sigma[0];
    if sigma_max <= 1e-300 {
        // Zero transfer: any realization of the feedthrough will do.
        let reduced = StateSpace::new(
            -DMatrix::<f64>::identity(r, r),
            DMatrix::zeros(r, sys.inputs()),
            DMatrix::zeros(sys.outputs(), r),
            sys.d().clone(),
        )?;
        return Ok((reduced, 0.0));
    }
    // T = Lp V Σ^{-1/2}, T⁻¹ = Σ^{-1/2} Uᵀ Lqᵀ (exact inverse when σ > 0).
    let clamped: Vec<f64> = sigma
        .iter()
        .map(|&s| s.max(SIGMA_CLAMP * sigma_max))
        .collect();
    let mut t = &lp * vt.transpose();
    let mut t_inv = u.transpose() * lq.transpose();
    for j in 0..n {
        let s = clamped[j].sqrt();
        for i in 0..n {
            t[(i, j)] /= s;
            t_inv[(j, i)] /= s;
        }
    }
    let a_bal = &t_inv * sys.a() * &t;
    let b_bal = &t_inv * sys.b();
    let c_bal = sys.c() * &t;
    let reduced = StateSpace::new(
        a_bal.view((0, 0), (r, r)).clone_owned(),
        b_bal.view((0, 0), (r, sys.inputs())).clone_owned(),
        c_bal.view((0, 0), (sys.outputs(), r)).clone_owned(),
        sys.d().clone(),
    )?;
    let bound = 2.0 * sigma[r..].iter().sum::<f64>();

    // Self-check: the grid estimate of the H∞ error must respect the bound.
    let grid = log_grid(1e-2, 1e3, 128);
    let err = sys
        .response(&grid)?
        .spectral_distance(&reduced.response(&grid)?)?;
    let scale = sys.response(&grid)?.hinf_estimate().max(1.0);
    if err > bound * (1.0 + 1e-6) + 1e-8 * scale {
        return Err(Error::Reduction(format!(
            "truncation error {err:.3e} exceeds Hankel bound {bound:.3e}"
        )));
    }
    Ok((reduced, bound))
}

/// Split a system with no eigenvalues near the imaginary axis into a
/// Hurwitz part (which keeps the feedthrough) and an antistable part, such
/// that their responses sum to the original.
pub fn stable_antistable_split(sys: &StateSpace) -> Result<(StateSpace, StateSpace)> {
    let n = sys.order();
    let margin = 1e-9;
    let eigs = sys.eigenvalues()?;
    if eigs.iter().any(|l| l.re.abs() <= margin) {
        return Err(Error::Reduction(
            "eigenvalue too close to the imaginary axis to split".into(),
        ));
    }
    let n_stable = eigs.iter().filter(|l| l.re < 0.0).count();
    let empty = |ins: usize, outs: usize| {
        StateSpace::new(
            DMatrix::zeros(0, 0),
            DMatrix::zeros(0, ins),
            DMatrix::zeros(outs, 0),
            DMatrix::zeros(outs, ins),
        )
    };
    if n_stable == n {
        return Ok((sys.clone(), empty(sys.inputs(), sys.outputs())?));
    }
    if n_stable == 0 {
        // The feedthrough stays with the (order-0) stable part.
        let anti = StateSpace::new(
            sys.a().clone(),
            sys.b().clone(),
            sys.c().clone(),
            DMatrix::zeros(sys.outputs(), sys.inputs()),
        )?;
        let stable = StateSpace::new(
            DMatrix::zeros(0, 0),
            DMatrix::zeros(0, sys.inputs()),
            DMatrix::zeros(sys.outputs(), 0),
            sys.d().clone(),
        )?;
        return Ok((stable, anti));
    }
    // Spectral projector onto the stable subspace via the matrix sign
    // function; its leading left singular vectors give an orthonormal basis.
    let sign = linalg::matrix_sign(sys.a())?;
    let projector = 0.5 * (DMatrix::<f64>::identity(n, n) - sign);
    let mut svd = nalgebra::SVD::new(projector, true, true);
    svd.sort_by_singular_values();
    let u = svd.u.ok_or(Error::Eigen("SVD of spectral projector"))?;
    // Â = UᵀAU is block upper-triangular (stable block first); decouple the
    // off-diagonal block with a Sylvester solve.
    let a_hat = u.transpose() * sys.a() * &u;
    let r = n_stable;
    let a11 = a_hat.view((0, 0), (r, r)).clone_owned();
    let a12 = a_hat.view((0, r), (r, n - r)).clone_owned();
    let a22 = a_hat.view((r, r), (n - r, n - r)).clone_owned();
    let x = linalg::solve_sylvester(&a11, &(-&a22), &a12)?;
    // Full transform W = U·[[I, X],[0, I]]; W⁻¹ = [[I, -X],[0, I]]·Uᵀ.
    let b_hat = u.transpose() * sys.b();
    let b1 = b_hat.view((0, 0), (r, sys.inputs())).clone_owned()
        - &x * b_hat.view((r, 0), (n - r, sys.inputs())).clone_owned();
    let b2 = b_hat.view((r, 0), (n - r, sys.inputs())).clone_owned();
    let c_hat = sys.c() * &u;
    let c1 = c_hat.view((0, 0), (sys.outputs(), r)).clone_owned();
    let c2 = c_hat.view((0, r), (sys.outputs(), n - r)).clone_owned()
        + &c1 * &x;
    let stable = StateSpace::new(a11, b1, c1, sys.d().clone())?;
    let anti = StateSpace::new(a22, b2, c2, DMatrix::zeros(sys.outputs(), sys.inputs()))?;
    Ok((stable, anti))
}
