//! Frequency-response grids and distances between responses.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;

/// Default evaluation band (rad/s), log-spaced.
pub const DEFAULT_GRID_LO: f64 = 1e-2;
pub const DEFAULT_GRID_HI: f64 = 1e3;
pub const DEFAULT_GRID_POINTS: usize = 512;

/// Log-spaced grid of angular frequencies on [lo, hi].
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && points >= 2);
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (llo + (lhi - llo) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

pub fn default_grid() -> Vec<f64> {
    log_grid(DEFAULT_GRID_LO, DEFAULT_GRID_HI, DEFAULT_GRID_POINTS)
}

/// A sampled matrix-valued frequency response G(jω) on a grid.
#[derive(Debug, Clone)]
pub struct FrequencyResponse {
    omegas: Vec<f64>,
    values: Vec<DMatrix<Complex64>>,
}

impl FrequencyResponse {
    pub fn new(omegas: Vec<f64>, values: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if omegas.len() != values.len() || omegas.is_empty() {
            return Err(Error::Dimension {
                context: "FrequencyResponse::new",
                expected: "one matrix per grid point (non-empty)".into(),
                got: format!("{} omegas, {} values", omegas.len(), values.len()),
            });
        }
        let shape = values[0].shape();
        if values.iter().any(|m| m.shape() != shape) {
            return Err(Error::Dimension {
                context: "FrequencyResponse::new",
                expected: format!("uniform shape {}x{}", shape.0, shape.1),
                got: "mixed shapes".into(),
            });
        }
        Ok(FrequencyResponse { omegas, values })
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }
    pub fn values(&self) -> &[DMatrix<Complex64>] {
        &self.values
    }
    pub fn shape(&self) -> (usize, usize) {
        self.values[0].shape()
    }

    /// Largest spectral norm over the grid — a grid estimate of ‖G‖∞.
    pub fn hinf_estimate(&self) -> f64 {
        self.values
            .iter()
            .map(linalg::spectral_norm)
            .fold(0.0, f64::max)
    }

    /// Largest Frobenius norm over the grid.
    pub fn frobenius_peak(&self) -> f64 {
        self.values
            .iter()
            .map(|m| m.norm())
            .fold(0.0, f64::max)
    }

    fn check_compatible(&self, other: &FrequencyResponse) -> Result<()> {
        if self.omegas.len() != other.omegas.len() || self.shape() != other.shape() {
            return Err(Error::Dimension {
                context: "FrequencyResponse::distance",
                expected: "matching grids and shapes".into(),
                got: "mismatch".into(),
            });
        }
        Ok(())
    }

    /// max over the grid of ‖G(jω) − H(jω)‖_F.
    pub fn distance(&self, other: &FrequencyResponse) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// max over the grid of ‖G(jω) − H(jω)‖₂ (spectral norm per point),
    /// the grid estimate of the H∞ distance.
    pub fn spectral_distance(&self, other: &FrequencyResponse) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| linalg::spectral_norm(&(a - b)))
            .fold(0.0, f64::max))
    }

    /// `distance / max(1, frobenius_peak(self))` — the distance is read
    /// relative to the scale of the reference response (`self`).
    pub fn relative_distance(&self, other: &FrequencyResponse) -> Result<f64> {
        let scale = self.frobenius_peak().max(1.0);
        Ok(self.distance(other)? / scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_log_spaced_and_inclusive() {
        let g = log_grid(1e-2, 1e3, 6);
        assert_eq!(g.len(), 6);
        assert!((g[0] - 1e-2).abs() < 1e-15);
        assert!((g[5] - 1e3).abs() < 1e-9);
        let ratio = g[1] / g[0];
        for w in g.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-9 * ratio);
        }
    }

    #[test]
    fn default_grid_shape() {
        let g = default_grid();
        assert_eq!(g.len(), DEFAULT_GRID_POINTS);
        assert!(g[0] <= 1e-2 + 1e-12 && g[g.len() - 1] >= 1e3 - 1e-6);
    }

    #[test]
    fn distance_of_identical_is_zero() {
        let omegas = vec![0.1, 1.0, 10.0];
        let vals: Vec<_> = omegas
            .iter()
            .map(|&w| DMatrix::from_element(1, 1, Complex64::new(1.0 / (1.0 + w * w), -w)))
            .collect();
        let f = FrequencyResponse::new(omegas.clone(), vals.clone()).unwrap();
        let g = FrequencyResponse::new(omegas, vals).unwrap();
        assert_eq!(f.distance(&g).unwrap(), 0.0);
    }
}
