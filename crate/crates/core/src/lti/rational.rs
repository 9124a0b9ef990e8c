//! Scalar rational transfer-function entries in zero/pole/gain form.
//!
//! Entries stay in factored form through products and inverses; sums go
//! through a shared-pole least-common-denominator expansion followed by
//! numerator root-finding, so repeated filter updates do not accumulate
//! spurious common factors.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::poly;

/// Relative tolerance for cancelling a zero against a pole, and for
/// recognising a pole shared by two denominators.
pub const CANCEL_TOL: f64 = 1e-7;

/// Relative tolerance when enforcing conjugate closure of root lists.
const PAIR_TOL: f64 = 1e-6;

fn rel_close(a: Complex64, b: Complex64, tol: f64) -> bool {
    (a - b).norm() <= tol * a.norm().max(b.norm()).max(1.0)
}

mod complex_pairs {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = v.iter().map(|c| [c.re, c.im]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<Complex64>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

/// `g · Π(s − zᵢ) / Π(s − pⱼ)` with real coefficients (root lists closed
/// under conjugation). The zero function is the canonical `gain = 0` entry
/// with empty root lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalEntry {
    #[serde(with = "complex_pairs")]
    zeros: Vec<Complex64>,
    #[serde(with = "complex_pairs")]
    poles: Vec<Complex64>,
    gain: f64,
}

impl RationalEntry {
    pub fn new(zeros: Vec<Complex64>, poles: Vec<Complex64>, gain: f64) -> Result<Self> {
        if !gain.is_finite() {
            return Err(Error::NonFinite("RationalEntry gain"));
        }
        if zeros.iter().chain(poles.iter()).any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("RationalEntry roots"));
        }
        if gain == 0.0 {
            return Ok(RationalEntry {
                zeros: Vec::new(),
                poles: Vec::new(),
                gain: 0.0,
            });
        }
        Ok(RationalEntry {
            zeros: canonical_roots(&zeros, "zeros")?,
            poles: canonical_roots(&poles, "poles")?,
            gain,
        })
    }

    /// Constant entry `g` (the zero entry when `g = 0`).
    pub fn constant(gain: f64) -> Self {
        RationalEntry {
            zeros: Vec::new(),
            poles: Vec::new(),
            gain,
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    /// Build from real numerator/denominator coefficients (ascending powers).
    pub fn from_num_den(num: &[f64], den: &[f64]) -> Result<Self> {
        let den = poly::trim_leading(den, 1e-13);
        if den.len() == 1 && den[0] == 0.0 {
            return Err(Error::InvalidParam {
                name: "den",
                message: "denominator polynomial is zero".into(),
            });
        }
        let num_scale = num.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let den_scale = den.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let num = poly::trim_leading(num, 1e-13);
        if num_scale <= 1e-300 || num_scale < 1e-14 * den_scale.max(1.0) {
            return Ok(Self::zero());
        }
        let zeros = poly::roots(&num)?;
        let poles = poly::roots(&den)?;
        RationalEntry::new(zeros, poles, num[num.len() - 1] / den[den.len() - 1])
    }

    pub fn zeros(&self) -> &[Complex64] {
        &self.zeros
    }
    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }
    pub fn gain(&self) -> f64 {
        self.gain
    }
    pub fn is_zero(&self) -> bool {
        self.gain == 0.0
    }

    /// True when all poles lie strictly in the open left half plane.
    pub fn is_stable(&self) -> bool {
        self.poles.iter().all(|p| p.re < 0.0)
    }

    /// True when all zeros lie strictly in the open left half plane.
    pub fn is_min_phase(&self) -> bool {
        self.zeros.iter().all(|z| z.re < 0.0)
    }

    /// Proper: numerator degree does not exceed denominator degree.
    pub fn is_proper(&self) -> bool {
        self.is_zero() || self.zeros.len() <= self.poles.len()
    }

    /// Numerator/denominator real coefficient vectors (ascending powers).
    pub fn num_den(&self) -> (Vec<f64>, Vec<f64>) {
        if self.is_zero() {
            return (vec![0.0], vec![1.0]);
        }
        (
            poly::from_roots(&self.zeros, self.gain).expect("entry roots are conjugate-closed"),
            poly::from_roots(&self.poles, 1.0).expect("entry roots are conjugate-closed"),
        )
    }

    /// Evaluate at a complex point, interleaving numerator and denominator
    /// factors so partial products stay near unit magnitude.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        if self.is_zero() {
            return Complex64::new(0.0, 0.0);
        }
        let mut acc = Complex64::new(self.gain, 0.0);
        let steps = self.zeros.len().max(self.poles.len());
        for i in 0..steps {
            if let Some(z) = self.zeros.get(i) {
                acc *= s - z;
            }
            if let Some(p) = self.poles.get(i) {
                acc /= s - p;
            }
        }
        acc
    }

    /// The entry with `s` replaced by `−s`: zeros and poles reflect across
    /// the imaginary axis and the gain absorbs `(−1)^(deg num − deg den)`.
    pub fn flip_s(&self) -> Self {
        if self.is_zero() {
            return RationalEntry::zero();
        }
        let reflect = |roots: &[Complex64]| roots.iter().map(|&r| -r).collect::<Vec<_>>();
        let parity = self.zeros.len() as i32 - self.poles.len() as i32;
        let sign = if parity.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        // Negation preserves finiteness and conjugate closure exactly.
        RationalEntry::new(reflect(&self.zeros), reflect(&self.poles), sign * self.gain)
            .expect("reflected roots stay finite and conjugate-closed")
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        out.gain = -out.gain;
        out
    }

    pub fn scale(&self, k: f64) -> Self {
        if k == 0.0 || self.is_zero() {
            return Self::zero();
        }
        let mut out = self.clone();
        out.gain *= k;
        out
    }

    /// Product, followed by zero/pole cancellation at `CANCEL_TOL`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.is_zero() || other.is_zero() {
            return Ok(Self::zero());
        }
        let mut zeros = self.zeros.clone();
        zeros.extend_from_slice(&other.zeros);
        let mut poles = self.poles.clone();
        poles.extend_from_slice(&other.poles);
        RationalEntry::new(zeros, poles, self.gain * other.gain).map(|e| e.simplify())
    }

    /// Reciprocal entry. Errors on the zero entry.
    pub fn inverse(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::InvalidParam {
                name: "entry",
                message: "cannot invert the zero entry".into(),
            });
        }
        RationalEntry::new(self.poles.clone(), self.zeros.clone(), 1.0 / self.gain)
    }

    /// Sum over a least common denominator built by matching near-identical
    /// poles of the two operands, so `f + f` keeps the degree of `f`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.is_zero() {
            return Ok(other.clone());
        }
        if other.is_zero() {
            return Ok(self.clone());
        }
        let (shared, only_a, only_b) = split_pole_sets(&self.poles, &other.poles)?;
        // self = gₐ Zₐ / (shared ∪ onlyₐ); multiply through by onlyᵦ, etc.
        let term_a = poly::mul(
            &poly::from_roots(&self.zeros, self.gain)?,
            &poly::from_roots(&only_b, 1.0)?,
        );
        let term_b = poly::mul(
            &poly::from_roots(&other.zeros, other.gain)?,
            &poly::from_roots(&only_a, 1.0)?,
        );
        let sum = poly::add_scaled(&term_a, 1.0, &term_b);
        let input_scale = term_a
            .iter()
            .chain(term_b.iter())
            .fold(0.0f64, |m, c| m.max(c.abs()));
        let sum = poly::trim_cancelled(&sum, &term_a, 1.0, &term_b, 1e-12);
        let sum_scale = sum.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        if sum_scale <= 1e-12 * input_scale.max(1e-300) {
            return Ok(Self::zero());
        }
        // Companion-matrix seeds from the expanded sum, polished against the
        // factored form of the two terms (the expanded coefficients lose
        // digits near roots once their degree passes ~40). The gain is
        // value-fitted for the same reason: the expanded leading coefficient
        // is a difference of the terms' leading coefficients and can carry
        // mostly cancellation noise.
        let seeds = poly::roots(&sum)?;
        let mut roots_a = self.zeros.clone();
        roots_a.extend_from_slice(&only_b);
        let mut roots_b = other.zeros.clone();
        roots_b.extend_from_slice(&only_a);
        let terms = [(self.gain, roots_a), (other.gain, roots_b)];
        let zeros = poly::refine_sum_roots(&terms, &seeds);
        let fitted = poly::fit_factored_gain(&terms, &zeros);
        let gain = fitted.unwrap_or(sum[sum.len() - 1]);
        let mut poles = shared;
        poles.extend(only_a);
        poles.extend(only_b);
        let zeros_refined = zeros.clone();
        let raw = RationalEntry::new(zeros, poles, gain)?;
        let out = raw.simplify();
        if std::env::var_os("ROADCAST_ADD_DIAG").is_some() {
            let mut worst_refined = 0.0f64;
            let mut worst_raw = 0.0f64;
            let mut worst_out = 0.0f64;
            for k in 0..25 {
                let omega = 10f64.powf(-2.0 + 5.0 * (k as f64) / 24.0);
                let s = Complex64::new(0.0, omega);
                let va = self.eval(s);
                let vb = other.eval(s);
                let exact = va + vb;
                let scale = (va.norm() + vb.norm()).max(1e-300);
                let mut refined = Complex64::new(gain, 0.0);
                for i in 0..raw.zeros.len().max(raw.poles.len()) {
                    if let Some(z) = zeros_refined.get(i) {
                        refined *= s - z;
                    }
                    if let Some(p) = raw.poles.get(i) {
                        refined /= s - p;
                    }
                }
                worst_refined = worst_refined.max((refined - exact).norm() / scale);
                worst_raw = worst_raw.max((raw.eval(s) - exact).norm() / scale);
                worst_out = worst_out.max((out.eval(s) - exact).norm() / scale);
            }
            if worst_refined > 1e-6 {
                if let Some(dir) = std::env::var_os("ROADCAST_ADD_DUMP") {
                    let path = std::path::Path::new(&dir).join(format!(
                        "add-{:.2e}-{}.json",
                        worst_refined,
                        std::process::id()
                    ));
                    let payload = serde_json::json!({
                        "a": self,
                        "b": other,
                        "worst_refined": worst_refined,
                    });
                    let _ = std::fs::write(
                        &path,
                        serde_json::to_string_pretty(&payload).unwrap_or_default(),
                    );
                }
            }
            if worst_out > 1e-9 {
                let idx = sum.len() - 1;
                let lead_src = term_a.get(idx).map_or(0.0, |v| v.abs())
                    + term_b.get(idx).map_or(0.0, |v| v.abs());
                eprintln!(
                    "add diag: refined={worst_refined:.2e} raw={worst_raw:.2e} \
                     simplified={worst_out:.2e} \
                     a=({}/{}) b=({}/{}) out=({}/{}) lead_cancel={:.1e} fit={:?}",
                    self.zeros.len(),
                    self.poles.len(),
                    other.zeros.len(),
                    other.poles.len(),
                    out.zeros.len(),
                    out.poles.len(),
                    sum[idx].abs() / lead_src.max(1e-300),
                    fitted.map(|g| g / sum[idx]),
                );
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    /// Remove zero/pole pairs closer than `CANCEL_TOL` (relative), provided
    /// the cancellation is harmless where responses are evaluated.
    ///
    /// Striking a pair `(z, p)` multiplies the response by
    /// `(jω − p)/(jω − z)`, an error of order `|z − p| / |jω − p|`, so a
    /// pair that satisfies the relative-closeness test can still move the
    /// response by orders of magnitude more when it sits near the
    /// evaluation band (lightly damped, `|re| ≪ |im|`). Such pairs are
    /// kept: the degree bloat is bounded and the response stays exact.
    pub fn simplify(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        let band_gap = |r: Complex64| {
            let im = r.im.abs();
            let clamped = im.clamp(super::freq::DEFAULT_GRID_LO, super::freq::DEFAULT_GRID_HI);
            (r.re * r.re + (im - clamped) * (im - clamped)).sqrt()
        };
        let mut zeros = self.zeros.clone();
        let mut poles = self.poles.clone();
        let mut zi = 0;
        while zi < zeros.len() {
            let mut best: Option<(usize, f64)> = None;
            for (pi, p) in poles.iter().enumerate() {
                let d = (zeros[zi] - *p).norm();
                if rel_close(zeros[zi], *p, CANCEL_TOL)
                    && d <= 1e-9 * band_gap(*p).min(band_gap(zeros[zi]))
                    && best.map_or(true, |(_, bd)| d < bd)
                {
                    best = Some((pi, d));
                }
            }
            if let Some((pi, _)) = best {
                poles.remove(pi);
                zeros.remove(zi);
            } else {
                zi += 1;
            }
        }
        RationalEntry {
            zeros,
            poles,
            gain: self.gain,
        }
    }

    /// Validate an entry received from an external source.
    pub fn validate(&self) -> Result<()> {
        if !self.gain.is_finite()
            || self
                .zeros
                .iter()
                .chain(self.poles.iter())
                .any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(Error::NonFinite("RationalEntry"));
        }
        if self.gain == 0.0 && (!self.zeros.is_empty() || !self.poles.is_empty()) {
            return Err(Error::Schema(
                "zero-gain entry must have empty root lists".into(),
            ));
        }
        if self.gain != 0.0 {
            canonical_roots(&self.zeros, "zeros")?;
            canonical_roots(&self.poles, "poles")?;
        }
        Ok(())
    }
}

/// Sort, conjugate-pair, and symmetrise a root list.
fn canonical_roots(roots: &[Complex64], what: &'static str) -> Result<Vec<Complex64>> {
    let (mut reals, mut reps) = poly::pair_conjugates(roots, PAIR_TOL).map_err(|_| {
        Error::InvalidParam {
            name: what,
            message: "root list is not closed under conjugation".into(),
        }
    })?;
    reals.sort_by(|a, b| a.total_cmp(b));
    reps.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut out = Vec::with_capacity(reals.len() + 2 * reps.len());
    out.extend(reals.into_iter().map(|r| Complex64::new(r, 0.0)));
    for rep in reps {
        out.push(rep);
        out.push(rep.conj());
    }
    Ok(out)
}

/// Least-common-multiple of two conjugate-closed pole multisets: each
/// cluster appears with the larger of its two multiplicities.
pub(crate) fn pole_multiset_union(a: &[Complex64], b: &[Complex64]) -> Result<Vec<Complex64>> {
    let (shared, only_a, only_b) = split_pole_sets(a, b)?;
    let mut out = shared;
    out.extend(only_a);
    out.extend(only_b);
    Ok(out)
}

/// Multiset difference `a \ b` under `CANCEL_TOL` matching, computed on
/// conjugate representatives so the result stays conjugate-closed.
pub(crate) fn pole_multiset_difference(
    a: &[Complex64],
    b: &[Complex64],
) -> Result<Vec<Complex64>> {
    let (_, only_a, _) = split_pole_sets(a, b)?;
    Ok(only_a)
}

/// Partition two conjugate-closed pole lists into (shared, only-in-a,
/// only-in-b), where shared poles are matched at `CANCEL_TOL` and replaced
/// by pair midpoints. Matching is done on conjugate representatives so all
/// three outputs stay conjugate-closed.
fn split_pole_sets(
    a: &[Complex64],
    b: &[Complex64],
) -> Result<(Vec<Complex64>, Vec<Complex64>, Vec<Complex64>)> {
    let (reals_a, reps_a) = poly::pair_conjugates(a, PAIR_TOL)?;
    let (reals_b, reps_b) = poly::pair_conjugates(b, PAIR_TOL)?;

    let mut shared = Vec::new();
    let mut only_a = Vec::new();
    let mut only_b: Vec<Complex64> = Vec::new();

    let mut used_b = vec![false; reals_b.len()];
    for &ra in &reals_a {
        let mut best: Option<(usize, f64)> = None;
        for (i, &rb) in reals_b.iter().enumerate() {
            if used_b[i] {
                continue;
            }
            let d = (ra - rb).abs();
            if rel_close(Complex64::new(ra, 0.0), Complex64::new(rb, 0.0), CANCEL_TOL)
                && best.map_or(true, |(_, bd)| d < bd)
            {
                best = Some((i, d));
            }
        }
        match best {
            Some((i, _)) => {
                used_b[i] = true;
                shared.push(Complex64::new(0.5 * (ra + reals_b[i]), 0.0));
            }
            None => only_a.push(Complex64::new(ra, 0.0)),
        }
    }
    for (i, &rb) in reals_b.iter().enumerate() {
        if !used_b[i] {
            only_b.push(Complex64::new(rb, 0.0));
        }
    }

    let mut usedc_b = vec![false; reps_b.len()];
    for &ca in &reps_a {
        let mut best: Option<(usize, f64)> = None;
        for (i, &cb) in reps_b.iter().enumerate() {
            if usedc_b[i] {
                continue;
            }
            let d = (ca - cb).norm();
            if rel_close(ca, cb, CANCEL_TOL) && best.map_or(true, |(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        match best {
            Some((i, _)) => {
                usedc_b[i] = true;
                let mid = 0.5 * (ca + reps_b[i]);
                shared.push(mid);
                shared.push(mid.conj());
            }
            None => {
                only_a.push(ca);
                only_a.push(ca.conj());
            }
        }
    }
    for (i, &cb) in reps_b.iter().enumerate() {
        if !usedc_b[i] {
            only_b.push(cb);
            only_b.push(cb.conj());
        }
    }

    Ok((shared, only_a, only_b))
}
