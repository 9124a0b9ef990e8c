//! State-space realization of proper transfer matrices.
//!
//! Each input column gets one controllable-canonical block over the
//! column's least common denominator. To keep the companion blocks
//! well-conditioned when pole magnitudes span decades, each block is built
//! in a frequency-scaled variable and the scaling is folded back into
//! (A, B); the assembled realization is then diagonally balanced. The
//! result is checked against the transfer matrix's own frequency response
//! before being returned.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::freq::log_grid;
use super::rational::{pole_multiset_difference, pole_multiset_union};
use super::ss::StateSpace;
use super::tf::TransferMatrix;
use crate::error::{Error, Result};
use crate::linalg::poly;

/// Realize a proper transfer matrix as a state-space system.
pub fn realize(tf: &TransferMatrix) -> Result<StateSpace> {
    let (p, m) = tf.shape();
    for i in 0..p {
        for j in 0..m {
            if !tf.entry(i, j).is_proper() {
                return Err(Error::Realization(format!(
                    "entry ({i},{j}) is improper and has no state-space realization"
                )));
            }
        }
    }

    // Column denominators: LCM of the entry pole multisets.
    let mut col_poles: Vec<Vec<Complex64>> = Vec::with_capacity(m);
    for j in 0..m {
        let mut acc: Vec<Complex64> = Vec::new();
        for i in 0..p {
            let e = tf.entry(i, j);
            if e.is_zero() {
                continue;
            }
            acc = pole_multiset_union(&acc, e.poles())?;
        }
        col_poles.push(acc);
    }
    let total: usize = col_poles.iter().map(|c| c.len()).sum();

    let mut a = DMatrix::<f64>::zeros(total, total);
    let mut b = DMatrix::<f64>::zeros(total, m);
    let mut c = DMatrix::<f64>::zeros(p, total);
    let mut d = DMatrix::<f64>::zeros(p, m);

    let mut offset = 0;
    for j in 0..m {
        let nu = col_poles[j].len();
        // Feedthrough first (also needed for columns of order zero).
        for i in 0..p {
            let e = tf.entry(i, j);
            if !e.is_zero() && e.zeros().len() == e.poles().len() {
                d[(i, j)] = e.gain();
            }
        }
        if nu == 0 {
            continue;
        }
        // Scale the variable so the companion coefficients stay near unity.
        let alpha = geometric_scale(&col_poles[j]);
        let scaled: Vec<Complex64> = col_poles[j].iter().map(|&r| r / alpha).collect();
        let den = poly::from_roots(&scaled, 1.0)?;
        debug_assert_eq!(den.len(), nu + 1);

        // Companion block in the scaled variable, then multiply A and B by
        // alpha to undo the substitution s → s/alpha.
        for k in 0..nu.saturating_sub(1) {
            a[(offset + k, offset + k + 1)] = alpha;
        }
        for k in 0..nu {
            a[(offset + nu - 1, offset + k)] = -den[k] * alpha;
        }
        b[(offset + nu - 1, j)] = alpha;

        for i in 0..p {
            let e = tf.entry(i, j);
            if e.is_zero() {
                continue;
            }
            // Numerator over the column denominator (in scaled variable):
            // gain·Π(s−zᵢ)·Π(s−extraₖ) with the entry's missing column poles.
            let extras = pole_multiset_difference(&col_poles[j], e.poles())?;
            let mut roots: Vec<Complex64> = e.zeros().to_vec();
            roots.extend(extras);
            let scaled_roots: Vec<Complex64> = roots.iter().map(|&r| r / alpha).collect();
            let power_fix = alpha.powi(roots.len() as i32 - nu as i32);
            let mut num = poly::from_roots(&scaled_roots, e.gain() * power_fix)?;
            // Strictly proper remainder: subtract D·den.
            if d[(i, j)] != 0.0 {
                num = poly::add_scaled(&num, -d[(i, j)], &den);
            }
            for (k, &coeff) in num.iter().enumerate().take(nu) {
                c[(i, offset + k)] = coeff;
            }
        }
        offset += nu;
    }

    let sys = StateSpace::new(a, b, c, d)?.balanced_scaling();

    // Diagnostics: realization must reproduce the zpk response.
    let grid = log_grid(1e-2, 1e3, 64);
    let rel = tf.response(&grid)?.relative_distance(&sys.response(&grid)?)?;
    if rel > 1e-6 {
        return Err(Error::Realization(format!(
            "realization diverges from transfer-matrix response (relative error {rel:.3e})"
        )));
    }
    Ok(sys)
}

/// Geometric mean of the nonzero root magnitudes, clamped to [1e-3, 1e3].
fn geometric_scale(roots: &[Complex64]) -> f64 {
    let mut log_sum = 0.0;
    let mut count = 0usize;
    for r in roots {
        let mag = r.norm();
        if mag > 1e-12 {
            log_sum += mag.ln();
            count += 1;
        }
    }
    if count == 0 {
        return 1.0;
    }
    (log_sum / count as f64).exp().clamp(1e-3, 1e3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::rational::RationalEntry;
    use nalgebra::DMatrix;

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn scalar_lag_realizes_exactly() {
        let tf = TransferMatrix::from_entries(vec![vec![RationalEntry::new(
            vec![],
            vec![c64(-2.0, 0.0)],
            3.0,
        )
        .unwrap()]])
        .unwrap();
        let sys = realize(&tf).unwrap();
        assert_eq!(sys.order(), 1);
        let v = sys.eval(c64(0.0, 1.0)).unwrap()[(0, 0)];
        let expect = 3.0 / c64(2.0, 1.0);
        assert!((v - expect).norm() < 1e-12);
    }

    #[test]
    fn biproper_entry_produces_feedthrough() {
        let tf = TransferMatrix::from_entries(vec![vec![RationalEntry::new(
            vec![c64(-1.0, 0.0)],
            vec![c64(-4.0, 0.0)],
            2.0,
        )
        .unwrap()]])
        .unwrap();
        let sys = realize(&tf).unwrap();
        approx::assert_relative_eq!(sys.d()[(0, 0)], 2.0, max_relative = 1e-12);
        let grid = log_grid(1e-2, 1e3, 40);
        let rel = tf
            .response(&grid)
            .unwrap()
            .relative_distance(&sys.response(&grid).unwrap())
            .unwrap();
        assert!(rel < 1e-10);
    }

    #[test]
    fn round_trip_through_tf_is_response_identical() {
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                -2.0, 1.0, 0.0, 0.5, //
                -1.0, -2.0, 0.3, 0.0, //
                0.0, 0.0, -5.0, 2.0, //
                0.0, 0.0, -2.0, -5.0,
            ],
        );
        let b = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 0.5, 0.5, -0.5, 1.0]);
        let c = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        let d = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.0]);
        let sys = StateSpace::new(a, b, c, d).unwrap();
        let tf = TransferMatrix::from_state_space(&sys).unwrap();
        let realized = realize(&tf).unwrap();
        let grid = log_grid(1e-2, 1e3, 50);
        let rel = sys
            .response(&grid)
            .unwrap()
            .relative_distance(&realized.response(&grid).unwrap())
            .unwrap();
        assert!(rel < 1e-8, "relative error {rel:.3e}");
    }

    #[test]
    fn improper_entry_is_rejected() {
        let tf = TransferMatrix::from_entries(vec![vec![RationalEntry::new(
            vec![c64(-1.0, 0.0), c64(-2.0, 0.0)],
            vec![c64(-3.0, 0.0)],
            1.0,
        )
        .unwrap()]])
        .unwrap();
        assert!(matches!(realize(&tf), Err(Error::Realization(_))));
    }

    #[test]
    fn zero_matrix_realizes_to_order_zero() {
        let tf = TransferMatrix::zeros(2, 2);
        let sys = realize(&tf).unwrap();
        assert_eq!(sys.order(), 0);
        assert!(sys.d().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wide_pole_spread_stays_accurate() {
        // Poles spanning two decades, as produced by obfuscator sampling.
        let e = |zr: f64, pr: &[f64], g: f64| {
            RationalEntry::new(
                vec![c64(zr, 0.0)],
                pr.iter().map(|&x| c64(x, 0.0)).collect(),
                g,
            )
            .unwrap()
        };
        let tf = TransferMatrix::from_entries(vec![
            vec![e(-3.0, &[-0.5, -27.0, -44.0], 1.7), e(-10.0, &[-0.6, -31.0, -2.2], -0.8)],
            vec![e(-21.0, &[-0.9, -14.0, -48.0], 0.4), e(-1.5, &[-5.0, -18.0, -36.0], 1.1)],
        ])
        .unwrap();
        let sys = realize(&tf).unwrap();
        let grid = log_grid(1e-2, 1e3, 80);
        let rel = tf
            .response(&grid)
            .unwrap()
            .relative_distance(&sys.response(&grid).unwrap())
            .unwrap();
        assert!(rel < 1e-8, "relative error {rel:.3e}");
    }
}
