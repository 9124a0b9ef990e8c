//! Jump-diffusion road generation.
//!
//! The ground-truth road input is the road *velocity* seen at the two
//! wheels, `w = η̇ + σ_ζ ζ̇`: a compound-Poisson jump part (potholes and
//! bumps — steps in the displacement profile, hence impulses in velocity)
//! plus a Wiener diffusion part (rough texture). One realization is shared
//! by every vehicle in a trial, which is what makes relayed learning
//! signals transferable between vehicles at all.

use nalgebra::{Matrix2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::lti::Signal;

/// Jump-diffusion process parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JdpParams {
    /// Poisson arrival rate of jumps (potholes/bumps) per second.
    pub lambda: f64,
    /// Mean jump size per channel (negative: pothole-like) [m].
    pub mu_eta: [f64; 2],
    /// Jump-size covariance (row-major 2×2, positive semi-definite).
    pub sigma_eta: [[f64; 2]; 2],
    /// Diffusion gain: `σ_ζ σ_ζᵀ` is the Wiener covariance (row-major 2×2).
    pub sigma_zeta: [[f64; 2]; 2],
}

impl Default for JdpParams {
    fn default() -> Self {
        JdpParams {
            lambda: 0.5,
            mu_eta: [-0.05, -0.05],
            sigma_eta: [[0.0004, 0.0], [0.0, 0.0004]],
            sigma_zeta: [[0.01, 0.0], [0.0, 0.01]],
        }
    }
}

fn to_matrix(m: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])
}

/// Square root of a symmetric PSD 2×2 matrix (eigendecomposition with
/// clamped negative rounding residue).
fn psd_sqrt(m: &Matrix2<f64>) -> Matrix2<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * Matrix2::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

impl JdpParams {
    /// Checks rate non-negativity, jump covariance PSD-ness and finiteness.
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::InvalidParam {
                name: "lambda",
                message: format!("must be a finite non-negative rate, got {}", self.lambda),
            });
        }
        let all = self
            .mu_eta
            .iter()
            .chain(self.sigma_eta.iter().flatten())
            .chain(self.sigma_zeta.iter().flatten());
        for &v in all {
            if !v.is_finite() {
                return Err(Error::NonFinite("JdpParams"));
            }
        }
        let se = to_matrix(&self.sigma_eta);
        if (se[(0, 1)] - se[(1, 0)]).abs() > 1e-12 * se.amax().max(1.0) {
            return Err(Error::InvalidParam {
                name: "sigma_eta",
                message: "must be symmetric".into(),
            });
        }
        let eig = ((se + se.transpose()) * 0.5).symmetric_eigen();
        let min = eig.eigenvalues.min();
        if min < -1e-12 * se.amax().max(1.0) {
            return Err(Error::InvalidParam {
                name: "sigma_eta",
                message: format!("must be positive semi-definite (min eigenvalue {min:.3e})"),
            });
        }
        Ok(())
    }
}

/// One sampled realization of the road-velocity process.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoadRealization {
    /// Road velocity at the two wheels, channels `[w_l, w_r]`.
    pub w: Signal,
    /// Seed the realization was drawn from.
    pub seed: u64,
    /// Parameters the realization was drawn with.
    pub params: JdpParams,
    /// Number of jump arrivals in the realization (shared by both channels).
    pub jump_count: u64,
}

/// Draws a road-velocity realization on a uniform grid.
///
/// Per step `k`, `w[k] = (Σ jump sizes arriving in the step)/dt +
/// σ_ζ·ΔW/dt` with the jump count `~ Poisson(λ·dt)`, jump-size vectors
/// `~ N(μ_η, Σ_η)` (both channels share arrival times; sizes are drawn
/// jointly so correlation comes only from Σ_η), and `ΔW ~ N(0, dt·I)`.
/// A jump of size `J` thus appears as a one-sample velocity pulse `J/dt`,
/// which integrates back to an exact displacement step of `J`.
///
/// The draw order per step is fixed (count, then sizes, then diffusion), so
/// the realization is a deterministic function of `(params, horizon, dt,
/// seed)`.
pub fn generate_road(params: &JdpParams, horizon: f64, dt: f64, seed: u64) -> Result<RoadRealization> {
    params.validate()?;
    if !(horizon > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidParam {
            name: "horizon/dt",
            message: format!("horizon and dt must be positive, got {horizon} and {dt}"),
        });
    }
    let n = (horizon / dt).round() as usize;
    if n == 0 {
        return Err(Error::InvalidParam {
            name: "horizon",
            message: "horizon shorter than one sample".into(),
        });
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let poisson = if params.lambda > 0.0 {
        Some(Poisson::new(params.lambda * dt).map_err(|_| Error::InvalidParam {
            name: "lambda",
            message: "lambda*dt is not a valid Poisson mean".into(),
        })?)
    } else {
        None
    };
    let mu = Vector2::new(params.mu_eta[0], params.mu_eta[1]);
    let eta_gain = psd_sqrt(&to_matrix(&params.sigma_eta));
    let zeta_gain = to_matrix(&params.sigma_zeta);
    let sqrt_dt = dt.sqrt();

    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    let mut jump_count = 0u64;
    for _ in 0..n {
        let mut v = Vector2::zeros();
        if let Some(p) = &poisson {
            let count = p.sample(&mut rng).round() as u64;
            jump_count += count;
            for _ in 0..count {
                let xi = Vector2::new(unit.sample(&mut rng), unit.sample(&mut rng));
                v += (mu + eta_gain * xi) / dt;
            }
        }
        let xi = Vector2::new(unit.sample(&mut rng), unit.sample(&mut rng));
        v += zeta_gain * xi * (sqrt_dt / dt);
        left.push(v[0]);
        right.push(v[1]);
    }

    Ok(RoadRealization {
        w: Signal::new(vec![left, right], dt, 0.0)?,
        seed,
        params: *params,
        jump_count,
    })
}

/// Displacement profile: cumulative trapezoidal integral of the velocity.
pub fn road_profile(real: &RoadRealization) -> Signal {
    real.w.cumulative_integral()
}

impl RoadRealization {
    /// CSV rendering with header `t,w_l,w_r`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,w_l,w_r\n");
        for k in 0..self.w.len() {
            let _ = writeln!(
                out,
                "{},{},{}",
                self.w.time(k),
                self.w.channel(0)[k],
                self.w.channel(1)[k]
            );
        }
        out
    }
}
