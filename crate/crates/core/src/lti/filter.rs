//! Frequency-domain filtering of sampled signals.
//!
//! `apply_filter` multiplies the DFT of the signal by the transfer matrix
//! evaluated on the DFT grid of the trial horizon (circular convolution).
//! Because the operation is exactly pointwise multiplication in the
//! transform domain, applying `G₂` after `G₁` agrees with applying `G₂·G₁`
//! in one pass up to the accuracy of the rational product itself (plus a
//! second-order phase term confined to the Nyquist bin) — the property the
//! relay-equivalence checks in this crate rely on.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;

use super::signal::Signal;
use super::tf::TransferMatrix;
use crate::error::{Error, Result};

/// Largest admissible magnitude of any filter entry on the evaluation grid.
pub const AMPLIFICATION_GUARD: f64 = 1e8;

/// A filter whose Frobenius norm at `s = 0` exceeds its norm at the first
/// resolvable DFT bin by this factor is treated as singular at the origin
/// (a structural integrator, as the learning filters produce), and the
/// first-bin value stands in for the undefined DC limit.
pub const DC_SINGULAR_RATIO: f64 = 1e3;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_forward(buf: &mut [Complex64]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(buf));
}

fn fft_inverse(buf: &mut [Complex64]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(buf));
}

/// Filter `u` through `g` on the DFT grid of the signal's own horizon.
///
/// The input is detrended (per-channel mean removed, with `G_dc·mean`
/// restored after the inverse transform), transformed, and multiplied
/// pointwise by `G(jωₖ)` with `ωₖ = 2πk/(N·dt)`. Upper bins use the
/// conjugate-mirrored filter value so real signals map to real signals.
/// For even N the Nyquist-bin gain is projected onto its real part: the
/// frequency there is ambiguous between ±π/dt, and the real part is the
/// symmetric choice that keeps real signals real while perturbing filter
/// composition only at second order in the phase.
///
/// `G_dc` is `G(0)` (real for a real-coefficient filter) unless the filter
/// is singular at the origin — learning filters carry a structural
/// integrator, `‖G(0)‖ > DC_SINGULAR_RATIO·‖G(jω₁)‖` — in which case no DC
/// limit exists and `Re G(jω₁)`, the response at the longest period the
/// window resolves, stands in for it. Entries larger than
/// `AMPLIFICATION_GUARD` anywhere on the evaluated grid abort the call.
pub fn apply_filter(g: &TransferMatrix, u: &Signal) -> Result<Signal> {
    let m = g.cols();
    let p = g.rows();
    if u.channels() != m {
        return Err(Error::Dimension {
            context: "apply_filter",
            expected: format!("{m} signal channels"),
            got: format!("{}", u.channels()),
        });
    }
    let n = u.len();
    let dt = u.dt();

    let means = u.channel_means();
    let mut input: Vec<Vec<Complex64>> = (0..m)
        .map(|c| {
            u.channel(c)
                .iter()
                .map(|&v| Complex64::new(v - means[c], 0.0))
                .collect()
        })
        .collect();
    for buf in &mut input {
        fft_forward(buf);
    }
    let mut output: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); n]; p];

    let omega1 = 2.0 * std::f64::consts::PI / (n as f64 * dt);
    let g0 = g.eval(Complex64::new(0.0, 0.0));
    let g1 = g.eval(Complex64::new(0.0, omega1));
    let frob = |mat: &DMatrix<Complex64>| mat.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let norm0 = frob(&g0);
    let dc_singular = !norm0.is_finite() || norm0 > DC_SINGULAR_RATIO * frob(&g1).max(1e-300);
    let g_dc: DMatrix<f64> = if dc_singular {
        g1.map(|v| v.re)
    } else {
        g0.map(|v| v.re)
    };
    let dc_peak = g_dc.iter().fold(0.0f64, |mx, v| mx.max(v.abs()));
    if !dc_peak.is_finite() || dc_peak > AMPLIFICATION_GUARD {
        return Err(Error::Conditioning {
            omega: 0.0,
            value: dc_peak,
            guard: AMPLIFICATION_GUARD,
        });
    }

    let half = n / 2;
    let nyquist = if n % 2 == 0 { Some(half) } else { None };
    let mut uk = DVector::<Complex64>::zeros(m);
    let gk0 = g_dc.map(|v| Complex64::new(v, 0.0));
    for (c, slot) in uk.iter_mut().enumerate() {
        *slot = input[c][0];
    }
    let y0 = &gk0 * &uk;
    for c in 0..p {
        output[c][0] = y0[c];
    }
    for k in 1..=half {
        let omega = 2.0 * std::f64::consts::PI * k as f64 / (n as f64 * dt);
        let mut gk: DMatrix<Complex64> = g.eval(Complex64::new(0.0, omega));
        let peak = gk.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if peak > AMPLIFICATION_GUARD {
            return Err(Error::Conditioning {
                omega,
                value: peak,
                guard: AMPLIFICATION_GUARD,
            });
        }
        if Some(k) == nyquist {
            gk = gk.map(|v| Complex64::new(v.re, 0.0));
        }
        for (c, slot) in uk.iter_mut().enumerate() {
            *slot = input[c][k];
        }
        let yk = &gk * &uk;
        for c in 0..p {
            output[c][k] = yk[c];
        }
        if k != n - k {
            let gk_conj = gk.map(|v| v.conj());
            for (c, slot) in uk.iter_mut().enumerate() {
                *slot = input[c][n - k];
            }
            let yk = &gk_conj * &uk;
            for c in 0..p {
                output[c][n - k] = yk[c];
            }
        }
    }

    let mean_vec = DVector::<f64>::from_column_slice(&means);
    let dc_offset = &g_dc * &mean_vec;
    let mut data = Vec::with_capacity(p);
    for (c, buf) in output.iter_mut().enumerate() {
        fft_inverse(buf);
        let scale = 1.0 / n as f64;
        data.push(
            buf.iter()
                .map(|v| v.re * scale + dc_offset[c])
                .collect::<Vec<f64>>(),
        );
    }
    Signal::new(data, dt, u.t0())
}
