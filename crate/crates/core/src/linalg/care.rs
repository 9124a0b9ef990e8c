//! Filter-form continuous algebraic Riccati equation
//! `A X + X Aᵀ − X M X + W = 0` (M, W symmetric PSD).
//!
//! The stabilizing solution is the graph of the stable invariant subspace
//! of the Hamiltonian `H = [[Aᵀ, −M], [−W, −A]]`. The subspace is computed
//! with the determinant-scaled matrix sign iteration (quadratically
//! convergent whenever `H` has no imaginary-axis eigenvalues, which is the
//! solvability condition), and the candidate is then driven to full
//! accuracy by Newton–Kleinman refinement, each step a Lyapunov solve on
//! the shared Bartels–Stewart backend.

use nalgebra::DMatrix;

use super::lyap::solve_lyapunov;
use crate::error::{Error, Result};

const SIGN_MAX_ITER: usize = 120;
const NEWTON_MAX_ITER: usize = 25;

/// Residual `A X + X Aᵀ − X M X + W` of the filter CARE.
pub fn care_residual(
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
    w: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> DMatrix<f64> {
    a * x + x * a.transpose() - x * m * x + w
}

/// Solve the filter CARE for its symmetric stabilizing solution.
/// `tol` is the relative residual acceptance: the returned `X` satisfies
/// `‖residual‖_F ≤ tol · max(1, ‖W‖_F)`.
pub fn solve_care_filter(
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
    w: &DMatrix<f64>,
    tol: f64,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || m.nrows() != n || m.ncols() != n || w.nrows() != n || w.ncols() != n {
        return Err(Error::Dimension {
            context: "solve_care_filter",
            expected: format!("A, M, W all {n}x{n}"),
            got: format!(
                "{}x{}, {}x{}, {}x{}",
                a.nrows(),
                a.ncols(),
                m.nrows(),
                m.ncols(),
                w.nrows(),
                w.ncols()
            ),
        });
    }

    // Hamiltonian of the filter equation.
    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&a.transpose());
    h.view_mut((0, n), (n, n)).copy_from(&(-m));
    h.view_mut((n, 0), (n, n)).copy_from(&(-w));
    h.view_mut((n, n), (n, n)).copy_from(&(-a));

    let sign = matrix_sign(&h)?;

    // Stable-subspace projector; its range has dimension n when the
    // Hamiltonian splits cleanly off the imaginary axis.
    let proj = 0.5 * (DMatrix::<f64>::identity(2 * n, 2 * n) - sign);
    let mut svd = proj.svd(true, false);
    svd.sort_by_singular_values();
    let sv = &svd.singular_values;
    if sv[n - 1] < 0.5 || (sv.len() > n && sv[n] > 0.5) {
        return Err(Error::Eigen(
            "Hamiltonian eigenvalues too close to the imaginary axis",
        ));
    }
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let u1 = u.view((0, 0), (n, n)).clone_owned();
    let u2 = u.view((n, 0), (n, n)).clone_owned();
    let x_t = u1
        .transpose()
        .lu()
        .solve(&u2.transpose())
        .ok_or(Error::Eigen("singular subspace basis (U1 not invertible)"))?;
    let mut x = 0.5 * (&x_t.transpose() + &x_t);

    // Newton–Kleinman refinement to the requested residual.
    let w_scale = w.norm().max(1.0);
    let mut best = x.clone();
    let mut best_res = care_residual(a, m, w, &x).norm();
    for _ in 0..NEWTON_MAX_ITER {
        if best_res <= 0.01 * tol * w_scale {
            break;
        }
        let r = care_residual(a, m, w, &x);
        let a_cl = a - &x * m;
        let delta = solve_lyapunov(&a_cl, &r)?;
        x += delta;
        x = 0.5 * (&x + x.transpose());
        let res = care_residual(a, m, w, &x).norm();
        if res < best_res {
            best_res = res;
            best = x.clone();
        } else {
            break;
        }
    }
    if best_res > tol * w_scale {
        return Err(Error::Riccati {
            residual: best_res,
            tolerance: tol * w_scale,
        });
    }
    Ok(best)
}

/// Determinant-scaled Newton iteration for the matrix sign function.
pub(crate) fn matrix_sign(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = h.nrows();
    let mut z = h.clone();
    for _ in 0..SIGN_MAX_ITER {
        let lu = z.clone().lu();
        let det = lu.determinant();
        if !det.is_finite() || det == 0.0 {
            return Err(Error::Eigen("singular iterate in matrix sign function"));
        }
        let z_inv = lu
            .try_inverse()
            .ok_or(Error::Eigen("singular iterate in matrix sign function"))?;
        let mu = det.abs().powf(-1.0 / n as f64);
        let next = 0.5 * (mu * &z + z_inv / mu);
        let step = (&next - &z).norm();
        let scale = z.norm().max(1.0);
        z = next;
        if step <= 1e-14 * scale {
            return Ok(z);
        }
    }
    // Accept a slightly stale sign if the iteration plateaued; Newton
    // refinement downstream will reject it if it is genuinely wrong.
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn scalar_closed_form() {
        // -2x - x^2 + 1 = 0 → x = √2 − 1
        let a = DMatrix::from_element(1, 1, -1.0);
        let m = DMatrix::from_element(1, 1, 1.0);
        let w = DMatrix::from_element(1, 1, 1.0);
        let x = solve_care_filter(&a, &m, &w, 1e-12).unwrap();
        assert_relative_eq!(x[(0, 0)], 2.0_f64.sqrt() - 1.0, epsilon = 1e-13);
    }

    #[test]
    fn random_filter_equations() {
        let mut rng = StdRng::seed_from_u64(42);
        for n in [2usize, 3, 4, 6] {
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let c = DMatrix::from_fn(2, n, |_, _| rng.random_range(-1.0..1.0));
            let b = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
            let m = c.transpose() * &c;
            let w = &b * b.transpose() + DMatrix::<f64>::identity(n, n) * 1e-6;
            let x = solve_care_filter(&a, &m, &w, 1e-10).unwrap();
            let res = care_residual(&a, &m, &w, &x).norm();
            assert!(res <= 1e-10 * w.norm().max(1.0), "n={n} residual {res:.3e}");
            // Stabilizing: A - X M must be Hurwitz.
            let a_cl = &a - &x * &m;
            let stable = crate::linalg::eigenvalues(&a_cl)
                .unwrap()
                .iter()
                .all(|l| l.re < 0.0);
            assert!(stable, "closed loop not Hurwitz for n={n}");
            // Symmetric PSD.
            let eig = nalgebra::SymmetricEigen::new(x.clone());
            assert!(eig.eigenvalues.iter().all(|&l| l > -1e-8 * x.norm().max(1.0)));
        }
    }
}
