//! Real-coefficient polynomials in ascending order: `c[k]` multiplies `s^k`.
//!
//! Root finding goes through a variable-scaled, balanced companion matrix
//! followed by Newton polishing on the original coefficients; this keeps
//! degree ~60 products of vehicle/observer/obfuscator factors accurate
//! enough for the response-residual checks used throughout the crate.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::balance;
use crate::error::{Error, Result};

/// Remove numerically-vanished leading (highest-order) coefficients.
/// The threshold is relative to the largest coefficient magnitude, so a
/// biproper-minus-biproper cancellation deflates cleanly.
pub fn trim_leading(c: &[f64], rel_tol: f64) -> Vec<f64> {
    let max = c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return vec![0.0];
    }
    let mut end = c.len();
    while end > 1 && c[end - 1].abs() <= rel_tol * max {
        end -= 1;
    }
    c[..end].to_vec()
}

pub fn degree(c: &[f64]) -> usize {
    trim_leading(c, 0.0).len() - 1
}

/// Horner evaluation at a complex point.
pub fn eval(c: &[f64], s: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &ck in c.iter().rev() {
        acc = acc * s + ck;
    }
    acc
}

/// Horner evaluation of the derivative at a complex point.
pub fn eval_derivative(c: &[f64], s: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in (1..c.len()).rev() {
        acc = acc * s + c[k] * k as f64;
    }
    acc
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// `a + alpha * b`, padded to the longer operand.
pub fn add_scaled(a: &[f64], alpha: f64, b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    let mut out = vec![0.0; n];
    for (k, slot) in out.iter_mut().enumerate() {
        let av = a.get(k).copied().unwrap_or(0.0);
        let bv = b.get(k).copied().unwrap_or(0.0);
        *slot = av + alpha * bv;
    }
    out
}

/// Split a conjugate-closed root list into real roots and one
/// representative (positive imaginary part) per conjugate pair.
///
/// Pairs are matched greedily by distance and symmetrized, so mildly
/// asymmetric eigensolver output comes back exactly closed. Roots whose
/// nearest "partner" is further than `rel_tol`·(1+|z|) are rejected.
pub fn pair_conjugates(roots: &[Complex64], rel_tol: f64) -> Result<(Vec<f64>, Vec<Complex64>)> {
    let mut reals = Vec::new();
    let mut uppers = Vec::new();
    let mut pending: Vec<Complex64> = Vec::new();
    for &r in roots {
        if r.im.abs() <= rel_tol * (1.0 + r.norm()) {
            reals.push(r.re);
        } else {
            pending.push(r);
        }
    }
    while let Some(z) = pending.pop() {
        let conj = z.conj();
        let mut best: Option<(usize, f64)> = None;
        for (i, &cand) in pending.iter().enumerate() {
            let d = (cand - conj).norm();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        match best {
            Some((i, d)) if d <= rel_tol * (1.0 + z.norm()) => {
                let partner = pending.swap_remove(i);
                let re = 0.5 * (z.re + partner.re);
                let im = 0.5 * (z.im.abs() + partner.im.abs());
                uppers.push(Complex64::new(re, im));
            }
            _ => {
                return Err(Error::Eigen(
                    "complex root without a conjugate partner (non-real polynomial?)",
                ))
            }
        }
    }
    uppers.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    reals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((reals, uppers))
}

/// Expand `gain · Π (s − rᵢ)` into real coefficients. The root list must be
/// conjugate-closed (within a loose tolerance); conjugate pairs are expanded
/// as real quadratics so no imaginary residue leaks into the coefficients.
pub fn from_roots(roots: &[Complex64], gain: f64) -> Result<Vec<f64>> {
    let (reals, uppers) = pair_conjugates(roots, 1e-4)?;
    // Multiply small-magnitude factors first to limit intermediate growth.
    let mut factors: Vec<Vec<f64>> = Vec::with_capacity(reals.len() + uppers.len());
    for r in reals {
        factors.push(vec![-r, 1.0]);
    }
    for z in uppers {
        factors.push(vec![z.norm_sqr(), -2.0 * z.re, 1.0]);
    }
    factors.sort_by(|a, b| a[0].abs().partial_cmp(&b[0].abs()).unwrap());
    let mut out = vec![gain];
    for f in factors {
        out = mul(&out, &f);
    }
    Ok(out)
}

/// Remove leading coefficients explained by cancellation: `sum` came from
/// `a + alpha·b`, so a leading coefficient below `rel_tol` times the
/// same-index magnitude of the source terms is numerical residue, while a
/// genuinely small leading coefficient (tiny against the polynomial's
/// *other* coefficients but not against its own sources) survives.
pub fn trim_cancelled(sum: &[f64], a: &[f64], alpha: f64, b: &[f64], rel_tol: f64) -> Vec<f64> {
    let source = |k: usize| {
        a.get(k).map_or(0.0, |v| v.abs()) + b.get(k).map_or(0.0, |v| (alpha * v).abs())
    };
    let mut end = sum.len();
    while end > 1 && sum[end - 1].abs() <= rel_tol * source(end - 1) {
        end -= 1;
    }
    sum[..end].to_vec()
}

/// All complex roots of a real polynomial. Only exactly-zero leading
/// coefficients are dropped; deflating almost-cancelled leading terms is
/// the caller's job, since only the caller knows the source scale.
pub fn roots(c: &[f64]) -> Result<Vec<Complex64>> {
    let c = trim_leading(c, 0.0);
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("polynomial roots"));
    }
    let n = c.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    // Exact zeros at the origin deflate first.
    let lead_zeros = c.iter().take_while(|v| **v == 0.0).count();
    if lead_zeros > 0 {
        let mut out = vec![Complex64::new(0.0, 0.0); lead_zeros];
        out.extend(roots(&c[lead_zeros..])?);
        return Ok(out);
    }
    if n == 1 {
        return Ok(vec![Complex64::new(-c[0] / c[1], 0.0)]);
    }
    if n == 2 {
        return Ok(quadratic_roots(c[0], c[1], c[2]));
    }

    // Variable scaling s = alpha·t with alpha from the Fujiwara root bound,
    // so the companion matrix works on O(1) numbers.
    let cn = c[n];
    let mut alpha = 0.0_f64;
    for k in 0..n {
        if c[k] != 0.0 {
            alpha = alpha.max((c[k].abs() / cn.abs()).powf(1.0 / (n - k) as f64));
        }
    }
    if alpha == 0.0 {
        return Ok(vec![Complex64::new(0.0, 0.0); n]);
    }
    let mut monic = vec![0.0; n]; // scaled d_k for k = 0..n-1, d_n = 1
    let mut scale = 1.0;
    for k in (0..n).rev() {
        // d_k = c_k·alpha^k / (c_n·alpha^n) accumulated without overflow
        scale /= alpha;
        monic[k] = c[k] / cn * scale;
    }
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        companion[(i, n - 1)] = -monic[i];
        if i + 1 < n {
            companion[(i + 1, i)] = 1.0;
        }
    }
    balance(&mut companion);
    let eig = companion.complex_eigenvalues();
    if eig.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Eigen("companion eigenvalue iteration failed"));
    }
    let mut out: Vec<Complex64> = eig
        .iter()
        .map(|z| Complex64::new(z.re * alpha, z.im * alpha))
        .collect();
    for r in out.iter_mut() {
        *r = polish_root(&c, *r);
    }
    Ok(out)
}

/// Refine `seeds` as roots of the factored sum
/// `f(s) = Σₜ gainₜ · Π_k (s − rootsₜ[k])` by Aberth–Ehrlich iteration.
///
/// Near a root of `f` the expanded coefficients evaluate with relative
/// error proportional to the coefficient mass `Σ|cₖ||s|^k / |f(s)|`,
/// which for degree ≳ 40 sums of large factored products wipes out most
/// of the mantissa; evaluating term by term in factored form instead
/// keeps the error at a few ulps of the *term* magnitudes, so the
/// iteration converges to the pseudo-roots the data actually supports.
/// The expanded form should still provide the seeds (companion matrix):
/// this routine only polishes.
///
/// `seeds` may be fewer than the factored degree when the leading
/// coefficients of the sum cancel; the missing roots are then far outside
/// the seed region and their influence on the Aberth correction is
/// negligible. Non-finite intermediate values (overflow of a factored
/// product at a huge stray seed) freeze that seed instead of poisoning
/// the rest.
///
/// The sweeps update in place (Gauss–Seidel), which converges more
/// reliably than simultaneous updates but lets conjugate partners drift
/// apart through the update order; the seeds are therefore mirrored into
/// an exactly closed configuration first, and the result is symmetrized
/// again afterwards to restore exact closure.
pub fn refine_sum_roots(terms: &[(f64, Vec<Complex64>)], seeds: &[Complex64]) -> Vec<Complex64> {
    let trace = std::env::var_os("ROADCAST_REFINE_TRACE").is_some();
    let mut z: Vec<Complex64> = symmetrize_closure(seeds).unwrap_or_else(|| seeds.to_vec());
    let n = z.len();
    for sweep in 0..40 {
        let mut max_step = 0.0f64;
        let mut moved = false;
        for i in 0..n {
            let (f, df) = eval_factored_sum(terms, z[i]);
            if !f.re.is_finite() || !f.im.is_finite() || !df.re.is_finite() || !df.im.is_finite() {
                continue;
            }
            if f.norm() == 0.0 {
                continue;
            }
            if df.norm() == 0.0 {
                // Exactly critical point: nudge off it and retry next sweep.
                let nudge = 1e-12 * (1.0 + z[i].norm());
                z[i] += Complex64::new(nudge, 0.0);
                moved = true;
                continue;
            }
            let w = f / df;
            let mut repulsion = Complex64::new(0.0, 0.0);
            for (j, &zj) in z.iter().enumerate() {
                if j != i {
                    let d = z[i] - zj;
                    if d.norm_sqr() > 0.0 {
                        repulsion += d.inv();
                    }
                }
            }
            let denom = Complex64::new(1.0, 0.0) - w * repulsion;
            let step = if denom.norm() > 1e-6 { w / denom } else { w };
            let next = z[i] - step;
            if next.re.is_finite() && next.im.is_finite() {
                z[i] = next;
                max_step = max_step.max(step.norm());
                if step.norm() > 1e-14 * (1.0 + z[i].norm()) {
                    moved = true;
                }
            }
        }
        if trace {
            let worst = z
                .iter()
                .map(|&r| eval_factored_sum(terms, r).0.norm())
                .fold(0.0f64, f64::max);
            eprintln!("refine sweep {sweep}: max_step={max_step:.3e} worst|f|={worst:.3e}");
        }
        if !moved {
            break;
        }
    }
    symmetrize_closure(&z).unwrap_or_else(|| seeds.to_vec())
}

/// Force a root list back to exact conjugate closure.
///
/// Upper-half roots are matched greedily to the conjugates of lower-half
/// roots and both are replaced by the mirrored pair midpoint; isolated
/// near-axis strays are snapped onto the axis. Returns `None` when a root
/// has no plausible partner (match further than 1% relative), which means
/// the list did not come from a real-coefficient computation and the
/// caller should fall back to its input.
fn symmetrize_closure(z: &[Complex64]) -> Option<Vec<Complex64>> {
    let rel = |v: &Complex64| 1e-2 * (1.0 + v.norm());
    let mut out: Vec<Complex64> = Vec::with_capacity(z.len());
    let mut uppers: Vec<Complex64> = Vec::new();
    let mut lowers: Vec<Complex64> = Vec::new();
    for &r in z {
        // Classify near-axis roots as real before any pairing: a real root
        // carries rounding-level imaginary residue (~1e-15 relative), and
        // letting it enter the pair matching can marry two *distinct* real
        // roots into a bogus midpoint pair — a first-order move. Flattening
        // a genuinely thin pair, by contrast, perturbs the response only at
        // second order in the imaginary part.
        if r.im.abs() <= 1e-9 * (1.0 + r.norm()) {
            out.push(Complex64::new(r.re, 0.0));
        } else if r.im > 0.0 {
            uppers.push(r);
        } else {
            lowers.push(r);
        }
    }
    // Pair the most-complex roots first so near-axis strays cannot steal a
    // deep pair's partner.
    uppers.sort_by(|a, b| b.im.partial_cmp(&a.im).unwrap());
    for u in uppers {
        let mut best: Option<(usize, f64)> = None;
        for (i, l) in lowers.iter().enumerate() {
            let d = (u - l.conj()).norm();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        match best {
            Some((i, d)) if d <= rel(&u) => {
                let l = lowers.swap_remove(i);
                let rep = 0.5 * (u + l.conj());
                if rep.im > 0.0 {
                    out.push(rep);
                    out.push(rep.conj());
                } else {
                    // Pair collapsed onto the axis: keep the two real roots
                    // slightly apart so Aberth repulsion can still separate
                    // them (coincident roots stop repelling and freeze).
                    let split = 1e-9 * (1.0 + rep.re.abs());
                    out.push(Complex64::new(rep.re - split, 0.0));
                    out.push(Complex64::new(rep.re + split, 0.0));
                }
            }
            _ if u.im <= rel(&u) => out.push(Complex64::new(u.re, 0.0)),
            _ => return None,
        }
    }
    for l in lowers {
        if l.im.abs() <= rel(&l) {
            out.push(Complex64::new(l.re, 0.0));
        } else {
            return None;
        }
    }
    // Exactly coincident roots (e.g. both halves of an axis-snapped thin
    // pair) stop repelling each other — the Aberth correction degenerates
    // to plain Newton and they move in lockstep forever, wedging the whole
    // configuration. Spread any exact duplicates along the real axis; a
    // real shift applies identically to a duplicated pair's representative
    // and mirror, so conjugate closure survives.
    for i in 0..out.len() {
        let mut dups = 1;
        for j in (i + 1)..out.len() {
            if out[j] == out[i] {
                dups += 1;
                let delta = 1e-9 * (1.0 + out[j].norm()) * dups as f64;
                out[j] += Complex64::new(delta, 0.0);
            }
        }
    }
    Some(out)
}

/// Recover the leading coefficient of `f(s) = Σₜ gainₜ·Π(s − rootsₜ[k])`
/// from values of the factored sum, given `roots` of `f`.
///
/// The expanded leading coefficient is the sum of the terms' leading
/// coefficients; when those nearly cancel it keeps only the cancelled
/// digits, and every response computed from the entry inherits that error.
/// Value fitting sidesteps the subtraction: at a probe point `s`,
/// `gain = f(s)/Π(s − rootsᵢ)` exactly, and both sides evaluate to a few
/// ulps in factored form. Each term's ratio to the root product is
/// accumulated factor-by-factor (largest magnitudes paired first) so
/// nothing overflows, and the probe with the least term-vs-sum
/// cancellation wins. Returns `None` when every probe is degenerate.
pub fn fit_factored_gain(terms: &[(f64, Vec<Complex64>)], roots: &[Complex64]) -> Option<f64> {
    let scale = 1.0 + roots.iter().map(|r| r.norm()).fold(0.0, f64::max);
    let probes = [
        Complex64::new(0.0, 0.7 * scale),
        Complex64::new(0.0, 1.4 * scale),
        Complex64::new(0.0, 2.9 * scale),
        Complex64::new(1.1 * scale, 0.9 * scale),
        Complex64::new(-1.3 * scale, 0.6 * scale),
    ];
    let mut denom_sorted: Vec<Complex64> = roots.to_vec();
    denom_sorted.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap());

    let mut best: Option<(f64, f64)> = None; // (conditioning, gain)
    'probe: for &s in &probes {
        if roots.iter().any(|r| (s - r).norm() < 1e-3 * scale) {
            continue;
        }
        let mut total = Complex64::new(0.0, 0.0);
        let mut mass = 0.0_f64;
        for (gain, term_roots) in terms {
            let mut num_sorted: Vec<Complex64> = term_roots.to_vec();
            num_sorted.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap());
            let mut ratio = Complex64::new(*gain, 0.0);
            let len = num_sorted.len().max(denom_sorted.len());
            for k in 0..len {
                if let Some(&r) = num_sorted.get(k) {
                    ratio *= s - r;
                }
                if let Some(&r) = denom_sorted.get(k) {
                    ratio /= s - r;
                }
                if !ratio.re.is_finite() || !ratio.im.is_finite() {
                    continue 'probe;
                }
            }
            total += ratio;
            mass += ratio.norm();
        }
        if mass == 0.0 {
            continue;
        }
        let cond = total.norm() / mass;
        if best.map_or(true, |(bc, _)| cond > bc) {
            best = Some((cond, total.re));
        }
    }
    match best {
        Some((cond, gain)) if cond > 1e-12 && gain != 0.0 => Some(gain),
        _ => None,
    }
}

/// Value and derivative of `Σₜ gainₜ · Π_k (s − rootsₜ[k])` at `s`,
/// accumulated with the product rule so roots equal to `s` cost nothing.
fn eval_factored_sum(terms: &[(f64, Vec<Complex64>)], s: Complex64) -> (Complex64, Complex64) {
    let mut f = Complex64::new(0.0, 0.0);
    let mut df = Complex64::new(0.0, 0.0);
    for (gain, roots) in terms {
        let mut v = Complex64::new(*gain, 0.0);
        let mut d = Complex64::new(0.0, 0.0);
        for &r in roots {
            let factor = s - r;
            d = d * factor + v;
            v *= factor;
        }
        f += v;
        df += d;
    }
    (f, df)
}

fn quadratic_roots(c0: f64, c1: f64, c2: f64) -> Vec<Complex64> {
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        let q = -0.5 * (c1 + c1.signum() * sq);
        let (r1, r2) = if q != 0.0 {
            (q / c2, c0 / q)
        } else {
            (0.0, 0.0)
        };
        vec![Complex64::new(r1, 0.0), Complex64::new(r2, 0.0)]
    } else {
        let re = -c1 / (2.0 * c2);
        let im = (-disc).sqrt() / (2.0 * c2).abs();
        vec![Complex64::new(re, im), Complex64::new(re, -im)]
    }
}

/// A few guarded Newton steps on the original coefficients.
fn polish_root(c: &[f64], start: Complex64) -> Complex64 {
    let mut r = start;
    let mut best = r;
    let mut best_val = eval(c, r).norm();
    for _ in 0..6 {
        let p = eval(c, r);
        let dp = eval_derivative(c, r);
        if dp.norm() == 0.0 {
            break;
        }
        let step = p / dp;
        r -= step;
        let val = eval(c, r).norm();
        if val < best_val {
            best_val = val;
            best = r;
        }
        if step.norm() <= 1e-15 * (1.0 + r.norm()) {
            break;
        }
    }
    best
}
