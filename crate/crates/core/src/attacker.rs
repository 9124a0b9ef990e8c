//! The eavesdropper: pole inference from intercepted relay messages.
//!
//! The adversary modelled here holds exactly one relay message (honest-but-
//! curious receivers and wire eavesdroppers see the same bytes under this
//! protocol) plus the true system order, and tries to recover the sender's
//! poles by reducing the obfuscated sensitivity back to that order. Against
//! plaintext messages the attack is exact; against obfuscated ones the
//! reduced poles land far from the truth, which [`pole_matching_distance`]
//! quantifies.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{balanced_truncation, realize, stable_antistable_split};
use crate::privacy::RelayMessage;

/// A pole-matching distance above this value counts as a failed inference
/// (units: rad/s in the complex plane, the same scale as the pole bands).
pub const PRIVACY_THRESHOLD_DEFAULT: f64 = 0.5;

/// Largest combined pole-set size solved by exact assignment; beyond this
/// a greedy matching stands in (documented approximation).
const EXACT_MATCHING_LIMIT: usize = 22;

/// Estimate the sender's poles from an intercepted message.
///
/// Realizes the wire transfer matrices in state space, reduces `S̃` to
/// `assumed_order` by balanced truncation, and returns the poles of the
/// reduced system, sorted by real then imaginary part. When the assumed
/// order exceeds the realization order, every realized pole is returned.
/// A realization with eigenvalues in the closed right half plane (never
/// produced by this crate's obfuscators, but possible for external
/// messages) is split first and only its stable part is reduced; the
/// antistable poles pass through untouched.
pub fn infer_poles(msg: &RelayMessage, assumed_order: usize) -> Result<Vec<Complex64>> {
    if assumed_order < 1 {
        return Err(Error::InvalidParam {
            name: "assumed_order",
            message: format!("assumed order must be at least 1, got {assumed_order}"),
        });
    }
    // The attacker reconstructs both wire systems; T̃ is realized to mirror
    // the full interception pipeline even though the pole estimate below
    // comes from S̃ (whose plaintext counterpart carries the model poles).
    realize(&msg.t_tilde)?;
    let sys = realize(&msg.s_tilde)?;
    let n = sys.order();
    if n == 0 {
        return Ok(Vec::new());
    }
    let eigs = sys.eigenvalues()?;
    let mut poles = if eigs.iter().any(|l| l.re >= 0.0) {
        let (stable, antistable) = stable_antistable_split(&sys)?;
        let mut out = antistable.eigenvalues()?;
        let n_stable = stable.order();
        if n_stable > 0 {
            let r = assumed_order.min(n_stable);
            let (reduced, _) = balanced_truncation(&stable, r)?;
            out.extend(reduced.eigenvalues()?);
        }
        out
    } else {
        let r = assumed_order.min(n);
        let (reduced, _) = balanced_truncation(&sys, r)?;
        reduced.eigenvalues()?
    };
    poles.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).expect("finite poles"));
    Ok(poles)
}

/// Run the attack from serialized wire bytes alone — the strongest form of
/// the "attacker sees only the message" claim.
pub fn infer_poles_from_json(wire: &str, assumed_order: usize) -> Result<Vec<Complex64>> {
    let msg = RelayMessage::from_json(wire)?;
    infer_poles(&msg, assumed_order)
}

/// Average Euclidean distance of an optimal assignment between two pole
/// sets in the complex plane.
///
/// Every element of the smaller set is matched to a distinct element of
/// the larger one at minimum total cost; unmatched elements of the larger
/// set pay a miss penalty equal to the truth set's diameter. The total is
/// averaged over `max(|estimated|, |truth|)`. Two empty sets are at
/// distance zero; one empty set is infinitely far from a non-empty one.
/// Matchings beyond [`EXACT_MATCHING_LIMIT`] combined elements fall back
/// to a greedy closest-pair assignment.
pub fn pole_matching_distance(estimated: &[Complex64], truth: &[Complex64]) -> f64 {
    match (estimated.is_empty(), truth.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return f64::INFINITY,
        _ => {}
    }
    let mut diameter = 0.0f64;
    for (i, a) in truth.iter().enumerate() {
        for b in &truth[i + 1..] {
            diameter = diameter.max((a - b).norm());
        }
    }
    let (small, large) = if estimated.len() <= truth.len() {
        (estimated, truth)
    } else {
        (truth, estimated)
    };
    let cost: Vec<Vec<f64>> = small
        .iter()
        .map(|a| large.iter().map(|b| (a - b).norm()).collect())
        .collect();
    let matched = if large.len() <= EXACT_MATCHING_LIMIT {
        exact_assignment(&cost, large.len())
    } else {
        greedy_assignment(&cost, large.len())
    };
    let misses = (large.len() - small.len()) as f64;
    (matched + misses * diameter) / large.len() as f64
}

/// Min-cost injection of the rows into the columns by subset DP.
fn exact_assignment(cost: &[Vec<f64>], n_large: usize) -> f64 {
    let mut dp = vec![f64::INFINITY; 1usize << n_large];
    dp[0] = 0.0;
    for mask in 1usize..(1 << n_large) {
        let row = mask.count_ones() as usize - 1;
        if row >= cost.len() {
            continue;
        }
        let mut best = f64::INFINITY;
        let mut bits = mask;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            let prev = dp[mask & !(1 << j)];
            if prev.is_finite() {
                best = best.min(prev + cost[row][j]);
            }
            bits &= bits - 1;
        }
        dp[mask] = best;
    }
    (0..(1usize << n_large))
        .filter(|m| m.count_ones() as usize == cost.len())
        .map(|m| dp[m])
        .fold(f64::INFINITY, f64::min)
}

/// Approximate matching for oversized sets: repeatedly take the globally
/// closest unmatched pair.
fn greedy_assignment(cost: &[Vec<f64>], n_large: usize) -> f64 {
    let mut used_small = vec![false; cost.len()];
    let mut used_large = vec![false; n_large];
    let mut total = 0.0;
    for _ in 0..cost.len() {
        let mut best = (f64::INFINITY, 0, 0);
        for (i, row) in cost.iter().enumerate() {
            if used_small[i] {
                continue;
            }
            for (j, &c) in row.iter().enumerate() {
                if !used_large[j] && c < best.0 {
                    best = (c, i, j);
                }
            }
        }
        total += best.0;
        used_small[best.1] = true;
        used_large[best.2] = true;
    }
    total
}

/// One attack outcome, as written to the pole-distance CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackRecord {
    pub trial: usize,
    pub vehicle: usize,
    pub true_poles: Vec<Complex64>,
    pub inferred_poles: Vec<Complex64>,
    pub distance: f64,
}

impl AttackRecord {
    pub fn csv_header() -> &'static str {
        "trial,vehicle,true_poles,inferred_poles,distance"
    }

    /// Deterministic CSV row; pole lists are semicolon-separated `a+bi`
    /// values inside one quoted field.
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},\"{}\",\"{}\",{}",
            self.trial,
            self.vehicle,
            format_poles(&self.true_poles),
            format_poles(&self.inferred_poles),
            format_distance(self.distance)
        )
    }
}

fn format_poles(poles: &[Complex64]) -> String {
    poles
        .iter()
        .map(|p| format!("{:.6e}{:+.6e}i", p.re, p.im))
        .collect::<Vec<_>>()
        .join(";")
}

fn format_distance(d: f64) -> String {
    if d.is_finite() {
        format!("{d:.6e}")
    } else {
        "inf".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collab::build_sensitivities;
    use crate::estimator::solve_riccati;
    use crate::lti::{Signal, TransferMatrix};
    use crate::privacy::{obfuscate, Obfuscator};
    use crate::road::JdpParams;
    use crate::vehicle::{VehicleInstance, VehicleParams};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn intercepted(obf: &Obfuscator) -> (RelayMessage, Vec<Complex64>) {
        let p = VehicleParams::default();
        let v = VehicleInstance::new(0, p, p).unwrap();
        let design = solve_riccati(&v.model, &JdpParams::default()).unwrap();
        let (t, s) = build_sensitivities(&v, &design).unwrap();
        let zero = Signal::zeros(2, 64, 1e-3, 0.0).unwrap();
        let msg = obfuscate(obf, &t, &s, &zero, &zero).unwrap();
        (msg, s.poles())
    }

    #[test]
    fn matching_distance_examples() {
        assert_eq!(pole_matching_distance(&[c(-1.0, 0.0)], &[c(-1.0, 0.0)]), 0.0);
        let d = pole_matching_distance(&[c(-2.0, 0.0)], &[c(-1.0, 0.0)]);
        assert!((d - 1.0).abs() <= 1e-12);
        let d = pole_matching_distance(
            &[c(-3.0, 0.0), c(-1.0, 0.0)],
            &[c(-1.0, 0.0), c(-3.0, 0.0)],
        );
        assert!(d <= 1e-12, "ordering must not matter, got {d}");
    }

    #[test]
    fn unmatched_poles_pay_the_truth_diameter() {
        let truth = [c(-1.0, 0.0), c(-3.0, 0.0)];
        let est = [c(-1.0, 0.0), c(-3.0, 0.0), c(-50.0, 0.0)];
        let d = pole_matching_distance(&est, &truth);
        assert!((d - 2.0 / 3.0).abs() <= 1e-12, "got {d}");
    }

    #[test]
    fn empty_set_conventions() {
        assert_eq!(pole_matching_distance(&[], &[]), 0.0);
        assert!(pole_matching_distance(&[], &[c(-1.0, 0.0)]).is_infinite());
        assert!(pole_matching_distance(&[c(-1.0, 0.0)], &[]).is_infinite());
    }

    #[test]
    fn identity_obfuscation_recovers_the_true_poles() {
        let (msg, truth) = intercepted(&Obfuscator::identity(0));
        let inferred = infer_poles(&msg, truth.len()).unwrap();
        assert_eq!(inferred.len(), truth.len());
        let d = pole_matching_distance(&inferred, &truth);
        assert!(d <= 1e-6, "baseline attack should be exact, got {d:.3e}");
    }

    #[test]
    fn default_obfuscation_defeats_the_attack() {
        let (baseline_msg, truth) = intercepted(&Obfuscator::identity(0));
        let baseline = pole_matching_distance(
            &infer_poles(&baseline_msg, truth.len()).unwrap(),
            &truth,
        );
        let seeds = 20u64;
        let mut above_threshold = 0usize;
        for seed in 0..seeds {
            let obf = Obfuscator::with_defaults(900 + seed).unwrap();
            let (msg, truth) = intercepted(&obf);
            // An attack that errors out recovered nothing: infinite distance.
            let distance = match infer_poles(&msg, truth.len()) {
                Ok(poles) => pole_matching_distance(&poles, &truth),
                Err(_) => f64::INFINITY,
            };
            if distance > PRIVACY_THRESHOLD_DEFAULT {
                above_threshold += 1;
            }
            assert!(
                distance >= 10.0 * baseline.max(1e-9),
                "seed {seed}: distance {distance:.3e} not well above baseline {baseline:.3e}"
            );
        }
        assert!(
            above_threshold * 10 >= 9 * seeds as usize,
            "attack defeated in only {above_threshold}/{seeds} trials"
        );
    }

    #[test]
    fn larger_assumed_order_returns_that_many_poles() {
        let obf = Obfuscator::with_defaults(77).unwrap();
        let (msg, truth) = intercepted(&obf);
        let inferred = infer_poles(&msg, truth.len() + 2).unwrap();
        assert_eq!(inferred.len(), truth.len() + 2);
        assert!(pole_matching_distance(&inferred, &truth).is_finite());
    }

    #[test]
    fn attack_consumes_only_wire_bytes() {
        let obf = Obfuscator::with_defaults(5).unwrap();
        let (msg, _) = intercepted(&obf);
        let wire = msg.to_json().unwrap();
        let from_wire = infer_poles_from_json(&wire, 4).unwrap();
        let in_memory = infer_poles(&msg, 4).unwrap();
        assert_eq!(from_wire.len(), in_memory.len());
        let d = pole_matching_distance(&from_wire, &in_memory);
        assert!(d <= 1e-12, "wire and in-memory attacks diverged by {d:.3e}");
    }

    #[test]
    fn zero_assumed_order_is_rejected() {
        let (msg, _) = intercepted(&Obfuscator::identity(0));
        assert!(matches!(
            infer_poles(&msg, 0),
            Err(Error::InvalidParam { .. })
        ));
    }

    #[test]
    fn records_render_as_csv() {
        let rec = AttackRecord {
            trial: 3,
            vehicle: 1,
            true_poles: vec![c(-1.0, 2.0), c(-1.0, -2.0)],
            inferred_poles: vec![],
            distance: f64::INFINITY,
        };
        assert_eq!(AttackRecord::csv_header().split(',').count(), 5);
        let row = rec.to_csv_row();
        assert!(row.starts_with("3,1,"));
        assert!(row.ends_with(",inf"));
        assert!(row.contains("-1.000000e0+2.000000e0i"));
    }

    #[test]
    fn zero_wire_system_yields_no_poles() {
        let zero_tf = TransferMatrix::zeros(2, 2);
        let zero_sig = Signal::zeros(2, 16, 1e-3, 0.0).unwrap();
        let msg = RelayMessage {
            version: crate::privacy::WIRE_VERSION,
            sender_id: "test".into(),
            t_tilde: zero_tf.clone(),
            s_tilde: zero_tf,
            e_tilde: zero_sig.clone(),
            w_f_tilde: zero_sig,
        };
        assert!(infer_poles(&msg, 4).unwrap().is_empty());
    }
}
