//! Matrix-valued transfer functions with zero/pole/gain entries.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::freq::{default_grid, FrequencyResponse};
use super::rational::RationalEntry;
use super::ss::StateSpace;
use crate::error::{Error, Result};
use crate::linalg::poly;

/// Relative determinant-magnitude guard for matrix inversion: the smallest
/// |det G(jω)| on the default grid must reach this fraction of the largest.
pub const INVERSE_DET_GUARD: f64 = 1e-10;

/// Relative tolerance used when clustering poles across entries.
const POLE_CLUSTER_TOL: f64 = 1e-6;

/// A p×m transfer matrix; entries are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<RationalEntry>,
}

impl TransferMatrix {
    pub fn from_entries(entries: Vec<Vec<RationalEntry>>) -> Result<Self> {
        let rows = entries.len();
        if rows == 0 || entries[0].is_empty() {
            return Err(Error::Dimension {
                context: "TransferMatrix::from_entries",
                expected: "non-empty entry grid".into(),
                got: "empty".into(),
            });
        }
        let cols = entries[0].len();
        if entries.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension {
                context: "TransferMatrix::from_entries",
                expected: format!("{cols} entries per row"),
                got: "ragged rows".into(),
            });
        }
        Ok(TransferMatrix {
            rows,
            cols,
            entries: entries.into_iter().flatten().collect(),
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![RationalEntry::zero(); n * n];
        for i in 0..n {
            entries[i * n + i] = RationalEntry::one();
        }
        TransferMatrix {
            rows: n,
            cols: n,
            entries,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        TransferMatrix {
            rows,
            cols,
            entries: vec![RationalEntry::zero(); rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn entry(&self, i: usize, j: usize) -> &RationalEntry {
        &self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> impl Iterator<Item = &RationalEntry> {
        self.entries.iter()
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.len() != self.rows * self.cols || self.rows == 0 || self.cols == 0 {
            return Err(Error::Schema("transfer matrix shape mismatch".into()));
        }
        for e in &self.entries {
            e.validate()?;
        }
        Ok(())
    }

    pub fn eval(&self, s: Complex64) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).eval(s))
    }

    pub fn response(&self, omegas: &[f64]) -> Result<FrequencyResponse> {
        let values = omegas
            .iter()
            .map(|&w| self.eval(Complex64::new(0.0, w)))
            .collect();
        FrequencyResponse::new(omegas.to_vec(), values)
    }

    /// Relative L∞ grid distance between two transfer matrices:
    /// `max_ω ‖G−H‖₂ / max(1, supω‖G‖₂, supω‖H‖₂)`.
    pub fn response_distance(&self, other: &TransferMatrix, omegas: &[f64]) -> Result<f64> {
        self.response(omegas)?.relative_distance(&other.response(omegas)?)
    }

    pub fn neg(&self) -> Self {
        self.map(|e| e.neg())
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|e| e.scale(k))
    }

    fn map(&self, f: impl Fn(&RationalEntry) -> RationalEntry) -> Self {
        TransferMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(f).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension {
                context: "TransferMatrix::add",
                expected: format!("{}x{}", self.rows, self.cols),
                got: format!("{}x{}", other.rows, other.cols),
            });
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.add(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(TransferMatrix {
            rows: self.rows,
            cols: self.cols,
            entries,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    /// Matrix product `self · other`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension {
                context: "TransferMatrix::mul",
                expected: format!("{} rows on the right factor", self.cols),
                got: format!("{}", other.rows),
            });
        }
        let mut entries = Vec::with_capacity(self.rows * other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = RationalEntry::zero();
                for k in 0..self.cols {
                    acc = acc.add(&self.entry(i, k).mul(other.entry(k, j))?)?;
                }
                entries.push(acc);
            }
        }
        Ok(TransferMatrix {
            rows: self.rows,
            cols: other.cols,
            entries,
        })
    }

    /// Determinant of a 1×1 or 2×2 transfer matrix.
    pub fn det(&self) -> Result<RationalEntry> {
        match self.shape() {
            (1, 1) => Ok(self.entry(0, 0).clone()),
            (2, 2) => self
                .entry(0, 0)
                .mul(self.entry(1, 1))?
                .sub(&self.entry(0, 1).mul(self.entry(1, 0))?),
            _ => Err(Error::InvalidParam {
                name: "shape",
                message: "determinant supported for 1x1 and 2x2 only".into(),
            }),
        }
    }

    /// The para-conjugate `G*(s) = G(−s)ᵀ`: on the imaginary axis this is
    /// the pointwise conjugate transpose, so `G·G*` is positive
    /// semidefinite there.
    pub fn para_conjugate(&self) -> Self {
        let mut entries = Vec::with_capacity(self.rows * self.cols);
        for i in 0..self.cols {
            for j in 0..self.rows {
                entries.push(self.entry(j, i).flip_s());
            }
        }
        TransferMatrix {
            rows: self.cols,
            cols: self.rows,
            entries,
        }
    }

    /// Inverse of a 1×1 or 2×2 transfer matrix via the adjugate. Before
    /// inverting, |det G(jω)| is swept over the default grid; if its minimum
    /// falls below `INVERSE_DET_GUARD` times its maximum the matrix is
    /// reported as numerically singular.
    pub fn inverse(&self) -> Result<Self> {
        self.inverse_with_guard(INVERSE_DET_GUARD)
    }

    /// `inverse` with an explicit relative determinant guard; a guard of
    /// zero rejects only an identically zero determinant. Used by the
    /// regularized fallback, whose determinant is positive on the axis by
    /// construction but legitimately tiny relative to its peak.
    pub(crate) fn inverse_with_guard(&self, guard: f64) -> Result<Self> {
        let det = self.det()?;
        let grid = default_grid();
        let mut min_mag = f64::INFINITY;
        let mut min_omega = grid[0];
        let mut max_mag: f64 = 0.0;
        for &w in &grid {
            let mag = det.eval(Complex64::new(0.0, w)).norm();
            if mag < min_mag {
                min_mag = mag;
                min_omega = w;
            }
            max_mag = max_mag.max(mag);
        }
        let threshold = guard * max_mag;
        if det.is_zero() || min_mag < threshold || max_mag == 0.0 {
            return Err(Error::Singular {
                omega: min_omega,
                det_mag: min_mag.min(max_mag),
                threshold,
            });
        }
        let det_inv = det.inverse()?;
        match self.shape() {
            (1, 1) => Ok(TransferMatrix {
                rows: 1,
                cols: 1,
                entries: vec![det_inv],
            }),
            (2, 2) => {
                let entries = vec![
                    self.entry(1, 1).mul(&det_inv)?,
                    self.entry(0, 1).neg().mul(&det_inv)?,
                    self.entry(1, 0).neg().mul(&det_inv)?,
                    self.entry(0, 0).mul(&det_inv)?,
                ];
                Ok(TransferMatrix {
                    rows: 2,
                    cols: 2,
                    entries,
                })
            }
            _ => Err(Error::InvalidParam {
                name: "shape",
                message: "inverse supported for 1x1 and 2x2 only".into(),
            }),
        }
    }

    /// Pole set of the matrix: clusters of entry poles, each counted with
    /// the largest multiplicity it attains in any single entry.
    pub fn poles(&self) -> Vec<Complex64> {
        #[derive(Clone)]
        struct Cluster {
            center: Complex64,
            max_count: usize,
        }
        let mut clusters: Vec<Cluster> = Vec::new();
        for e in &self.entries {
            // per-entry counts against the running cluster list
            let mut counts = vec![0usize; clusters.len()];
            for &p in e.poles() {
                let mut found = None;
                for (ci, cl) in clusters.iter().enumerate() {
                    if (p - cl.center).norm()
                        <= POLE_CLUSTER_TOL * p.norm().max(cl.center.norm()).max(1.0)
                    {
                        found = Some(ci);
                        break;
                    }
                }
                match found {
                    Some(ci) => counts[ci] += 1,
                    None => {
                        clusters.push(Cluster {
                            center: p,
                            max_count: 0,
                        });
                        counts.push(1);
                    }
                }
            }
            for (ci, &c) in counts.iter().enumerate() {
                if c > clusters[ci].max_count {
                    clusters[ci].max_count = c;
                }
            }
        }
        let mut out = Vec::new();
        for cl in clusters {
            for _ in 0..cl.max_count {
                out.push(cl.center);
            }
        }
        out
    }

    /// True when every entry has all poles strictly in the left half plane.
    pub fn is_stable(&self) -> bool {
        self.entries.iter().all(|e| e.is_stable())
    }

    /// Exact conversion of a state-space realization to zpk entries.
    ///
    /// Each numerator `Gᵢⱼ(s)·det(sI−A)` is a polynomial of degree ≤ n; it is
    /// recovered by sampling on a circle of radius `2(1+ρ(A))` and inverting
    /// the DFT, which is exact interpolation for polynomials of that degree.
    /// The result is cross-checked against the realization's frequency
    /// response before being returned.
    pub fn from_state_space(ss: &StateSpace) -> Result<Self> {
        let n = ss.order();
        let (p, m) = (ss.outputs(), ss.inputs());
        if n == 0 {
            let entries = (0..p)
                .flat_map(|i| (0..m).map(move |j| (i, j)))
                .map(|(i, j)| RationalEntry::constant(ss.d()[(i, j)]))
                .collect();
            return Ok(TransferMatrix {
                rows: p,
                cols: m,
                entries,
            });
        }
        let eigs = ss.eigenvalues()?;
        let rho = eigs.iter().map(|l| l.norm()).fold(0.0, f64::max);
        let radius = 2.0 * (1.0 + rho);
        let npts = n + 1;
        // Sample G(s)·char(s) on the circle.
        let mut samples: Vec<DMatrix<Complex64>> = Vec::with_capacity(npts);
        let mut points = Vec::with_capacity(npts);
        for k in 0..npts {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / npts as f64;
            let s = radius * Complex64::new(theta.cos(), theta.sin());
            let charpoly: Complex64 = eigs.iter().map(|&l| s - l).product();
            samples.push(ss.eval(s)?.map(|v| v * charpoly));
            points.push(s);
        }
        let char_scale = radius.powi(n as i32);
        let mut entries = Vec::with_capacity(p * m);
        for i in 0..p {
            for j in 0..m {
                // Inverse DFT in the scaled variable t = s/radius, where the
                // sample points are the (n+1)-th roots of unity.
                let mut coeffs = Vec::with_capacity(npts);
                let mut max_mag: f64 = 0.0;
                for mm in 0..npts {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for k in 0..npts {
                        let theta =
                            -2.0 * std::f64::consts::PI * (k * mm) as f64 / npts as f64;
                        acc += samples[k][(i, j)] * Complex64::new(theta.cos(), theta.sin());
                    }
                    acc /= npts as f64;
                    max_mag = max_mag.max(acc.norm());
                    coeffs.push(acc.re);
                }
                // Numerator indistinguishable from zero at the scale of the
                // characteristic polynomial on the circle.
                if max_mag <= 1e-12 * char_scale {
                    entries.push(RationalEntry::zero());
                    continue;
                }
                let trimmed = poly::trim_leading(&coeffs, 1e-11);
                let deg = trimmed.len() - 1;
                let zeros_t = poly::roots(&trimmed)?;
                let zeros: Vec<Complex64> = zeros_t.into_iter().map(|z| z * radius).collect();
                let gain = trimmed[deg] / radius.powi(deg as i32);
                let entry = RationalEntry::new(zeros, eigs.clone(), gain)?.simplify();
                entries.push(entry);
            }
        }
        let tf = TransferMatrix {
            rows: p,
            cols: m,
            entries,
        };
        // Diagnostics: the zpk form must reproduce the realization response.
        let grid = super::freq::log_grid(1e-2, 1e3, 64);
        let rel = tf.response(&grid)?.relative_distance(&ss.response(&grid)?)?;
        if rel > 1e-6 {
            return Err(Error::Realization(format!(
                "zpk conversion diverges from realization response (relative error {rel:.3e})"
            )));
        }
        Ok(tf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn lag(pole: f64, gain: f64) -> RationalEntry {
        RationalEntry::new(vec![], vec![c(pole, 0.0)], gain).unwrap()
    }

    fn sample_2x2() -> TransferMatrix {
        TransferMatrix::from_entries(vec![
            vec![lag(-1.0, 1.0), lag(-2.0, 0.5)],
            vec![lag(-3.0, -0.7), lag(-4.0, 2.0)],
        ])
        .unwrap()
    }

    #[test]
    fn identity_is_multiplicative_unit() {
        let g = sample_2x2();
        let gi = g.mul(&TransferMatrix::identity(2)).unwrap();
        let ig = TransferMatrix::identity(2).mul(&g).unwrap();
        let grid = super::super::freq::log_grid(1e-2, 1e3, 50);
        assert!(g.response_distance(&gi, &grid).unwrap() < 1e-12);
        assert!(g.response_distance(&ig, &grid).unwrap() < 1e-12);
    }

    #[test]
    fn inverse_times_self_is_identity() {
        let g = sample_2x2();
        let ginv = g.inverse().unwrap();
        let prod = g.mul(&ginv).unwrap();
        let grid = super::super::freq::log_grid(1e-2, 1e3, 64);
        let dist = prod
            .response_distance(&TransferMatrix::identity(2), &grid)
            .unwrap();
        assert!(dist < 1e-8, "distance {dist}");
    }

    #[test]
    fn inverse_guard_rejects_singular_matrix() {
        // Second row is twice the first: determinant is identically zero.
        let row = vec![lag(-1.0, 1.0), lag(-2.0, 0.5)];
        let doubled = vec![lag(-1.0, 2.0), lag(-2.0, 1.0)];
        let g = TransferMatrix::from_entries(vec![row, doubled]).unwrap();
        assert!(matches!(g.inverse(), Err(Error::Singular { .. })));
    }

    #[test]
    fn ss_to_tf_cancels_hidden_mode() {
        // C(sI−A)⁻¹B with transfer (s+2)/((s+1)(s+2)) reduces to 1/(s+1).
        let ss = StateSpace::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[2.0, 1.0]),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let tf = TransferMatrix::from_state_space(&ss).unwrap();
        let e = tf.entry(0, 0);
        assert_eq!(e.poles().len(), 1);
        assert!(e.zeros().is_empty());
        assert_relative_eq!(e.poles()[0].re, -1.0, epsilon = 1e-9);
        assert_relative_eq!(e.gain(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn ss_to_tf_handles_pure_feedthrough() {
        let ss = StateSpace::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let tf = TransferMatrix::from_state_space(&ss).unwrap();
        let e = tf.entry(0, 0);
        assert!(e.poles().is_empty() && e.zeros().is_empty());
        assert_relative_eq!(e.gain(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ss_to_tf_mimo_matches_response() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, -2.0, -1.0, 1.0, 0.0, 0.0, -4.0]);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let cmat = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let d = DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.0, 0.0]);
        let ss = StateSpace::new(a, b, cmat, d).unwrap();
        let tf = TransferMatrix::from_state_space(&ss).unwrap();
        let grid = super::super::freq::log_grid(1e-2, 1e3, 80);
        let rel = tf
            .response(&grid)
            .unwrap()
            .relative_distance(&ss.response(&grid).unwrap())
            .unwrap();
        assert!(rel < 1e-8, "relative error {rel}");
    }

    #[test]
    fn pole_union_uses_max_multiplicity() {
        let e11 = lag(-1.0, 1.0);
        let e22 = RationalEntry::new(vec![], vec![c(-1.0, 0.0), c(-2.0, 0.0)], 1.0).unwrap();
        let g = TransferMatrix::from_entries(vec![
            vec![e11, RationalEntry::zero()],
            vec![RationalEntry::zero(), e22],
        ])
        .unwrap();
        let mut poles: Vec<f64> = g.poles().iter().map(|p| p.re).collect();
        poles.sort_by(f64::total_cmp);
        assert_eq!(poles.len(), 2);
        assert_relative_eq!(poles[0], -2.0, epsilon = 1e-12);
        assert_relative_eq!(poles[1], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn det_of_2x2_matches_pointwise() {
        let g = sample_2x2();
        let det = g.det().unwrap();
        for w in [0.05, 0.9, 12.0] {
            let s = c(0.0, w);
            let m = g.eval(s);
            let direct = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            assert!((det.eval(s) - direct).norm() < 1e-12 * direct.norm().max(1.0));
        }
    }
}
