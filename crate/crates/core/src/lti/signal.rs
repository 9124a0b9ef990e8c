//! Uniformly sampled multi-channel time series over one road-segment
//! traversal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// channels × N real samples with a common sample period.
///
/// Two signals are composable (addable, comparable) only when channel
/// count, length, and dt agree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    data: Vec<Vec<f64>>,
    dt: f64,
    t0: f64,
}

impl Signal {
    pub fn new(data: Vec<Vec<f64>>, dt: f64, t0: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidParam {
                name: "data",
                message: "signal needs at least one channel".into(),
            });
        }
        let n = data[0].len();
        if n == 0 {
            return Err(Error::InvalidParam {
                name: "data",
                message: "signal needs at least one sample".into(),
            });
        }
        if data.iter().any(|ch| ch.len() != n) {
            return Err(Error::Dimension {
                context: "Signal::new",
                expected: format!("{n} samples per channel"),
                got: "ragged channel lengths".into(),
            });
        }
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(Error::InvalidParam {
                name: "dt/t0",
                message: format!("dt = {dt}, t0 = {t0}"),
            });
        }
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Signal::new"));
        }
        Ok(Signal { data, dt, t0 })
    }

    pub fn zeros(channels: usize, n: usize, dt: f64, t0: f64) -> Result<Self> {
        Signal::new(vec![vec![0.0; n]; channels], dt, t0)
    }

    /// Build from a per-(channel, time) function.
    pub fn from_fn(
        channels: usize,
        n: usize,
        dt: f64,
        t0: f64,
        mut f: impl FnMut(usize, f64) -> f64,
    ) -> Result<Self> {
        let data = (0..channels)
            .map(|c| (0..n).map(|k| f(c, t0 + k as f64 * dt)).collect())
            .collect();
        Signal::new(data, dt, t0)
    }

    pub fn channels(&self) -> usize {
        self.data.len()
    }

    pub fn len(&self) -> usize {
        self.data[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: N ≥ 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.dt
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.data[i]
    }

    pub fn data(&self) -> &[Vec<f64>] {
        &self.data
    }

    /// Sample instant of index k.
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn compatible_with(&self, other: &Signal) -> bool {
        self.channels() == other.channels()
            && self.len() == other.len()
            && (self.dt - other.dt).abs() <= 1e-12 * self.dt
    }

    fn check_compatible(&self, other: &Signal, context: &'static str) -> Result<()> {
        if !self.compatible_with(other) {
            return Err(Error::Dimension {
                context,
                expected: format!(
                    "{} channels x {} samples at dt {}",
                    self.channels(),
                    self.len(),
                    self.dt
                ),
                got: format!(
                    "{} channels x {} samples at dt {}",
                    other.channels(),
                    other.len(),
                    other.dt
                ),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Signal) -> Result<Signal> {
        self.check_compatible(other, "Signal::add")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        Signal::new(data, self.dt, self.t0)
    }

    pub fn sub(&self, other: &Signal) -> Result<Signal> {
        self.check_compatible(other, "Signal::sub")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        Signal::new(data, self.dt, self.t0)
    }

    pub fn scale(&self, alpha: f64) -> Result<Signal> {
        let data = self
            .data
            .iter()
            .map(|ch| ch.iter().map(|x| alpha * x).collect())
            .collect();
        Signal::new(data, self.dt, self.t0)
    }

    /// L2 norm over all channels and samples (unweighted sample sum).
    pub fn l2_norm(&self) -> f64 {
        self.data
            .iter()
            .flatten()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Relative L2 distance `‖a−b‖ / max(‖a‖, ‖b‖)`; zero signals compare
    /// as distance 0.
    pub fn rel_l2_distance(&self, other: &Signal) -> Result<f64> {
        self.check_compatible(other, "Signal::rel_l2_distance")?;
        let denom = self.l2_norm().max(other.l2_norm());
        if denom == 0.0 {
            return Ok(0.0);
        }
        Ok(self.sub(other)?.l2_norm() / denom)
    }

    /// Drop the first `seconds` of samples (estimator-transient exclusion).
    /// At least one sample always remains.
    pub fn trim_head(&self, seconds: f64) -> Signal {
        let skip = ((seconds / self.dt).round() as usize).min(self.len() - 1);
        let data = self.data.iter().map(|ch| ch[skip..].to_vec()).collect();
        Signal {
            data,
            dt: self.dt,
            t0: self.t0 + skip as f64 * self.dt,
        }
    }

    /// Cumulative trapezoidal integral per channel, anchored at 0.
    pub fn cumulative_integral(&self) -> Signal {
        let data = self
            .data
            .iter()
            .map(|ch| {
                let mut acc = 0.0;
                let mut prev = ch[0];
                let mut out = Vec::with_capacity(ch.len());
                out.push(0.0);
                for &v in &ch[1..] {
                    acc += 0.5 * (prev + v) * self.dt;
                    prev = v;
                    out.push(acc);
                }
                out
            })
            .collect();
        Signal {
            data,
            dt: self.dt,
            t0: self.t0,
        }
    }

    /// Per-channel means.
    pub fn channel_means(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|ch| ch.iter().sum::<f64>() / ch.len() as f64)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn arithmetic_and_norms() {
        let a = Signal::new(vec![vec![1.0, 2.0], vec![3.0, 4.0]], 0.5, 0.0).unwrap();
        let b = a.scale(2.0).unwrap();
        let sum = a.add(&b).unwrap();
        assert_eq!(sum.channel(0), &[3.0, 6.0]);
        assert_relative_eq!(a.l2_norm(), (1.0f64 + 4.0 + 9.0 + 16.0).sqrt());
        assert_relative_eq!(a.rel_l2_distance(&a).unwrap(), 0.0);
    }

    #[test]
    fn incompatible_signals_rejected() {
        let a = Signal::zeros(2, 10, 0.1, 0.0).unwrap();
        let b = Signal::zeros(2, 11, 0.1, 0.0).unwrap();
        assert!(a.add(&b).is_err());
    }

    #[test]
    fn integral_of_constant_ramps() {
        let w = Signal::from_fn(2, 21, 0.1, 0.0, |_, _| 1.0).unwrap();
        let p = w.cumulative_integral();
        assert_relative_eq!(p.channel(0)[20], 2.0, epsilon = 1e-12);
        assert_relative_eq!(p.channel(1)[10], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn trim_head_shifts_t0() {
        let s = Signal::from_fn(1, 100, 0.01, 0.0, |_, t| t).unwrap();
        let trimmed = s.trim_head(0.25);
        assert_eq!(trimmed.len(), 75);
        assert_relative_eq!(trimmed.t0(), 0.25, epsilon = 1e-12);
        assert_relative_eq!(trimmed.channel(0)[0], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(Signal::new(vec![vec![f64::NAN]], 0.1, 0.0).is_err());
        assert!(Signal::new(vec![vec![1.0]], 0.0, 0.0).is_err());
    }
}
