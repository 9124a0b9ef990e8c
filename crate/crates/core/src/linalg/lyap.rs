//! Continuous Lyapunov (`A X + X Aᵀ + Q = 0`) and Sylvester
//! (`A X + X B + Q = 0`) equations via Bartels–Stewart: real Schur forms,
//! then block back-substitution over the quasi-triangular factors. Shared
//! backend for the Riccati refinement and the balanced-truncation gramians.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Solve `A X + X Aᵀ + Q = 0` for symmetric `Q`. Requires that no two
/// eigenvalues of `A` sum to zero (always true for Hurwitz `A`).
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::Dimension {
            context: "solve_lyapunov",
            expected: format!("A and Q both {n}x{n}"),
            got: format!("{}x{} and {}x{}", a.nrows(), a.ncols(), q.nrows(), q.ncols()),
        });
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let schur = a
        .clone()
        .try_schur(f64::EPSILON, 50_000)
        .ok_or(Error::Eigen("real Schur iteration (Lyapunov)"))?;
    let (u, t) = schur.unpack();
    let q_t = u.transpose() * q * &u;
    let y = solve_quasi_triangular(&t, &q_t)?;
    let x = &u * y * u.transpose();
    Ok(0.5 * (&x + x.transpose()))
}

/// Solve `A X + X B + Q = 0` for rectangular `Q` (`A` p×p, `B` q×q, `Q` p×q).
/// Requires that no eigenvalue of `A` equals the negative of an eigenvalue
/// of `B`.
pub fn solve_sylvester(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    let m = b.nrows();
    if a.ncols() != p || b.ncols() != m || q.nrows() != p || q.ncols() != m {
        return Err(Error::Dimension {
            context: "solve_sylvester",
            expected: format!("A {p}x{p}, B {m}x{m}, Q {p}x{m}"),
            got: format!(
                "A {}x{}, B {}x{}, Q {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                q.nrows(),
                q.ncols()
            ),
        });
    }
    if p == 0 || m == 0 {
        return Ok(DMatrix::zeros(p, m));
    }
    let schur_a = a
        .clone()
        .try_schur(f64::EPSILON, 50_000)
        .ok_or(Error::Eigen("real Schur iteration (Sylvester, left)"))?;
    let schur_b = b
        .clone()
        .try_schur(f64::EPSILON, 50_000)
        .ok_or(Error::Eigen("real Schur iteration (Sylvester, right)"))?;
    let (ua, ta) = schur_a.unpack();
    let (ub, tb) = schur_b.unpack();
    let q_t = ua.transpose() * q * &ub;

    let starts_a = block_starts(&ta);
    let starts_b = block_starts(&tb);
    let (na, nb) = (starts_a.len(), starts_b.len());
    let size = |starts: &[usize], total: usize, b: usize| -> usize {
        let lo = starts[b];
        let hi = if b + 1 < starts.len() { starts[b + 1] } else { total };
        hi - lo
    };
    let mut y = DMatrix::<f64>::zeros(p, m);
    // Row blocks depend on later rows (Ta upper-triangular); column blocks
    // depend on earlier columns (Y·Tb pulls in columns k < j).
    for bj in 0..nb {
        for bi in (0..na).rev() {
            let (i0, bp) = (starts_a[bi], size(&starts_a, p, bi));
            let (j0, bq) = (starts_b[bj], size(&starts_b, m, bj));
            let mut rhs = -q_t.view((i0, j0), (bp, bq)).clone_owned();
            for bk in bi + 1..na {
                let (k0, ks) = (starts_a[bk], size(&starts_a, p, bk));
                rhs -= ta.view((i0, k0), (bp, ks)) * y.view((k0, j0), (ks, bq));
            }
            for bk in 0..bj {
                let (k0, ks) = (starts_b[bk], size(&starts_b, m, bk));
                rhs -= y.view((i0, k0), (bp, ks)) * tb.view((k0, j0), (ks, bq));
            }
            let a_ii = ta.view((i0, i0), (bp, bp)).clone_owned();
            let b_jj = tb.view((j0, j0), (bq, bq)).clone_owned();
            let m_block = DMatrix::<f64>::identity(bq, bq).kronecker(&a_ii)
                + b_jj.transpose().kronecker(&DMatrix::<f64>::identity(bp, bp));
            let rhs_vec = nalgebra::DVector::from_column_slice(rhs.as_slice());
            let sol = m_block
                .lu()
                .solve(&rhs_vec)
                .ok_or(Error::Lyapunov("singular Sylvester block (shared eigenvalue)"))?;
            let block = DMatrix::from_column_slice(bp, bq, sol.as_slice());
            y.view_mut((i0, j0), (bp, bq)).copy_from(&block);
        }
    }
    Ok(&ua * y * ub.transpose())
}

/// Diagonal-block boundaries of a real quasi-triangular matrix.
fn block_starts(t: &DMatrix<f64>) -> Vec<usize> {
    let n = t.nrows();
    let mut starts = Vec::new();
    let mut i = 0;
    while i < n {
        starts.push(i);
        if i + 1 < n {
            let sub = t[(i + 1, i)].abs();
            let diag = t[(i, i)].abs() + t[(i + 1, i + 1)].abs();
            if sub > f64::EPSILON * diag.max(1e-300) {
                i += 2;
                continue;
            }
        }
        i += 1;
    }
    starts
}

/// Solve `T Y + Y Tᵀ + Q = 0` with `T` quasi-upper-triangular.
fn solve_quasi_triangular(t: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    let starts = block_starts(t);
    let nb = starts.len();
    let size = |b: usize| -> usize {
        let lo = starts[b];
        let hi = if b + 1 < nb { starts[b + 1] } else { n };
        hi - lo
    };
    let mut y = DMatrix::<f64>::zeros(n, n);
    // Dependencies run toward larger block indices in both coordinates, so
    // sweep both block indices from the bottom-right corner.
    for bj in (0..nb).rev() {
        for bi in (0..nb).rev() {
            let (i0, p) = (starts[bi], size(bi));
            let (j0, qn) = (starts[bj], size(bj));
            let mut rhs = -q.view((i0, j0), (p, qn)).clone_owned();
            // - Σ_{k>i} T_ik Y_kj
            for bk in bi + 1..nb {
                let (k0, ks) = (starts[bk], size(bk));
                rhs -= t.view((i0, k0), (p, ks)) * y.view((k0, j0), (ks, qn));
            }
            // - Σ_{k>j} Y_ik (T_jk)ᵀ
            for bk in bj + 1..nb {
                let (k0, ks) = (starts[bk], size(bk));
                rhs -= y.view((i0, k0), (p, ks)) * t.view((j0, k0), (qn, ks)).transpose();
            }
            let t_ii = t.view((i0, i0), (p, p)).clone_owned();
            let t_jj = t.view((j0, j0), (qn, qn)).clone_owned();
            // vec(T_ii X + X T_jjᵀ) = (I ⊗ T_ii + T_jj ⊗ I) vec(X)
            let m = DMatrix::<f64>::identity(qn, qn).kronecker(&t_ii)
                + t_jj.kronecker(&DMatrix::<f64>::identity(p, p));
            let rhs_vec = nalgebra::DVector::from_column_slice(rhs.as_slice());
            let sol = m
                .lu()
                .solve(&rhs_vec)
                .ok_or(Error::Lyapunov("singular block (eigenvalue pair sums to zero)"))?;
            let block = DMatrix::from_column_slice(p, qn, sol.as_slice());
            y.view_mut((i0, j0), (p, qn)).copy_from(&block);
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_stable(n: usize, rng: &mut StdRng) -> DMatrix<f64> {
        // Random matrix shifted left far enough to be comfortably Hurwitz.
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let shift = m.norm() + 0.5;
        m - DMatrix::identity(n, n) * shift
    }

    #[test]
    fn residual_small_on_random_stable_systems() {
        let mut rng = StdRng::seed_from_u64(7);
        for n in [1usize, 2, 3, 5, 8, 13] {
            let a = random_stable(n, &mut rng);
            let b = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
            let q = &b * b.transpose();
            let x = solve_lyapunov(&a, &q).unwrap();
            let res = (&a * &x + &x * a.transpose() + &q).norm();
            assert!(
                res <= 1e-10 * q.norm().max(1.0),
                "n={n} residual {res:.3e}"
            );
            // Controllability-gramian-like solution must be PSD.
            let eig = nalgebra::SymmetricEigen::new(x.clone());
            assert!(eig.eigenvalues.iter().all(|&l| l > -1e-10 * x.norm()));
        }
    }

    #[test]
    fn matches_scalar_closed_form() {
        // a x + x a + q = 0 → x = -q / (2a)
        let a = DMatrix::from_element(1, 1, -3.0);
        let q = DMatrix::from_element(1, 1, 5.0);
        let x = solve_lyapunov(&a, &q).unwrap();
        approx::assert_relative_eq!(x[(0, 0)], 5.0 / 6.0, max_relative = 1e-14);
    }

    #[test]
    fn sylvester_residual_small_on_rectangular_problems() {
        let mut rng = StdRng::seed_from_u64(11);
        for (p, m) in [(1usize, 1usize), (2, 3), (4, 2), (5, 5), (7, 3)] {
            let a = random_stable(p, &mut rng);
            let b = random_stable(m, &mut rng);
            let q = DMatrix::from_fn(p, m, |_, _| rng.random_range(-1.0..1.0));
            let x = solve_sylvester(&a, &b, &q).unwrap();
            let res = (&a * &x + &x * &b + &q).norm();
            assert!(res <= 1e-10 * q.norm().max(1.0), "{p}x{m} residual {res:.3e}");
        }
    }

    #[test]
    fn sylvester_decouples_block_triangular_matrix() {
        // A11 X − X A22 + A12 = 0 zeroes the off-diagonal coupling of
        // [[A11, A12], [0, A22]] under [[I, X], [0, I]].
        let a11 = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let a22 = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, -1.0, 5.0]);
        let a12 = DMatrix::from_row_slice(2, 2, &[0.7, -0.2, 1.1, 0.4]);
        let x = solve_sylvester(&a11, &(-&a22), &a12).unwrap();
        let res = (&a11 * &x - &x * &a22 + &a12).norm();
        assert!(res < 1e-12);
    }
}
