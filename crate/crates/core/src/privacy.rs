//! Dynamics obfuscation for relayed learning tuples.
//!
//! Before a vehicle relays its sensitivities and signals, it composes them
//! with two private random stable transfer matrices: the receiver can
//! still build exactly-optimal learning filters from the obfuscated tuple
//! (the obfuscators cancel algebraically in the filter update), but the
//! wire message no longer determines the sender's dynamics — for any
//! candidate plant there exist obfuscators that explain the same bytes,
//! and [`construct_alternative_explanation`] produces them.
//!
//! The outgoing tuple `(T, S, e, wᶠ)` becomes
//! `(Ψ¹T, Ψ¹SΨ², Ψ¹e, (Ψ²)⁻¹wᶠ)`. Both Ψ factors are minimum-phase so
//! that every filtering step, including the inverse, is stable.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::collab::{build_filters, session_mse, ChainResult, ErrorSpace, FILTER_RESIDUAL_TOL};
use crate::error::{Error, Result};
use crate::lti::{apply_filter, default_grid, FrequencyResponse, RationalEntry, Signal, TransferMatrix};
use crate::road::RoadRealization;
use crate::synth::{random_spectrum, seeded};

/// Default real-part band for obfuscator poles (rad/s).
pub const POLE_BAND_DEFAULT: [f64; 2] = [-50.0, -0.5];
/// Default real-part band for obfuscator zeros (rad/s).
pub const ZERO_BAND_DEFAULT: [f64; 2] = [-50.0, -0.5];
/// Imaginary parts of obfuscator roots stay within ±OBF_IM_MAX.
pub const OBF_IM_MAX: f64 = 30.0;
/// Default entry order for both obfuscating matrices.
pub const N_OBF_DEFAULT: usize = 3;
/// Rejection-sampling budget for grid invertibility.
pub const OBF_MAX_ATTEMPTS: usize = 100;
/// Accuracy-preservation budget: obfuscated and plain chains must agree to
/// this relative L2 distance.
pub const ACCURACY_TOL: f64 = 1e-4;
/// Version tag of the wire format.
pub const WIRE_VERSION: u32 = 1;

/// A vehicle's private obfuscating pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Obfuscator {
    /// Left factor applied to T, S, and e.
    pub psi_s1: TransferMatrix,
    /// Right factor applied to S; its inverse filters wᶠ.
    pub psi_s2: TransferMatrix,
    /// Entry order of `psi_s1` (poles and zeros per entry).
    pub n1: usize,
    /// Entry order of `psi_s2`.
    pub n2: usize,
    /// Seed the pair was drawn from.
    pub seed: u64,
}

impl Obfuscator {
    /// The degenerate plaintext "obfuscator" (identity factors). Used for
    /// privacy-off runs and baseline tests; [`generate_obfuscator`] never
    /// produces it.
    pub fn identity(seed: u64) -> Self {
        Obfuscator {
            psi_s1: TransferMatrix::identity(2),
            psi_s2: TransferMatrix::identity(2),
            n1: 0,
            n2: 0,
            seed,
        }
    }

    /// Random obfuscator with all defaults (order 3, default bands).
    pub fn with_defaults(seed: u64) -> Result<Self> {
        generate_obfuscator(N_OBF_DEFAULT, N_OBF_DEFAULT, seed, None, None)
    }

    /// Check the structural invariants: 2×2 factors, stable minimum-phase
    /// biproper entries with the declared orders, a pole set shared by all
    /// entries of each factor, and grid invertibility.
    pub fn validate(&self) -> Result<()> {
        for (psi, n, which) in [(&self.psi_s1, self.n1, "psi_s1"), (&self.psi_s2, self.n2, "psi_s2")] {
            if psi.shape() != (2, 2) {
                return Err(Error::Dimension {
                    context: "Obfuscator::validate",
                    expected: "2x2".into(),
                    got: format!("{}x{}", psi.shape().0, psi.shape().1),
                });
            }
            let mut shared: Option<Vec<Complex64>> = None;
            for entry in psi.entries() {
                entry.validate()?;
                if entry.is_zero() {
                    continue;
                }
                if !entry.is_stable() || !entry.is_min_phase() {
                    return Err(Error::Unstable(format!(
                        "{which} entry has roots outside the open left half plane"
                    )));
                }
                if entry.zeros().len() != n || entry.poles().len() != n {
                    return Err(Error::InvalidParam {
                        name: "order",
                        message: format!(
                            "{which} entry has {} zeros / {} poles, declared order {n}",
                            entry.zeros().len(),
                            entry.poles().len()
                        ),
                    });
                }
                match &shared {
                    None => shared = Some(entry.poles().to_vec()),
                    Some(reference) => {
                        let same = reference.len() == entry.poles().len()
                            && reference
                                .iter()
                                .zip(entry.poles())
                                .all(|(a, b)| (a - b).norm() <= 1e-9 * (1.0 + a.norm()));
                        if !same {
                            return Err(Error::InvalidParam {
                                name: "poles",
                                message: format!("{which} entries do not share one pole set"),
                            });
                        }
                    }
                }
            }
            psi.inverse()?;
        }
        Ok(())
    }
}

/// Draw an obfuscating pair.
///
/// Per factor: one shared conjugate-closed pole set of the requested order
/// (drawn inside `pole_band × ±OBF_IM_MAX`), an independent zero set per
/// entry (inside `zero_band`), and entry gains log-uniform in [0.5, 2].
/// Bands are real-part intervals inside the open left half plane; `None`
/// selects the defaults. Candidates failing grid invertibility are
/// rejected and redrawn, up to [`OBF_MAX_ATTEMPTS`] times per factor.
pub fn generate_obfuscator(
    n1: usize,
    n2: usize,
    seed: u64,
    pole_band: Option<[f64; 2]>,
    zero_band: Option<[f64; 2]>,
) -> Result<Obfuscator> {
    let pole_band = pole_band.unwrap_or(POLE_BAND_DEFAULT);
    let zero_band = zero_band.unwrap_or(ZERO_BAND_DEFAULT);
    if n1 < 1 || n2 < 1 {
        return Err(Error::InvalidParam {
            name: "n1/n2",
            message: format!("entry orders must be at least 1, got n1={n1}, n2={n2}"),
        });
    }
    for (band, name) in [(pole_band, "pole_band"), (zero_band, "zero_band")] {
        if !(band[0].is_finite() && band[1].is_finite() && band[0] <= band[1] && band[1] < 0.0) {
            return Err(Error::InvalidParam {
                name,
                message: format!(
                    "band [{}, {}] must be an ordered interval inside the open left half plane",
                    band[0], band[1]
                ),
            });
        }
    }
    let mut rng = seeded(seed);
    let psi_s1 = random_psi(&mut rng, n1, pole_band, zero_band)?;
    let psi_s2 = random_psi(&mut rng, n2, pole_band, zero_band)?;
    let obf = Obfuscator {
        psi_s1,
        psi_s2,
        n1,
        n2,
        seed,
    };
    obf.validate()?;
    Ok(obf)
}

/// One random 2×2 factor: shared poles, per-entry zeros, rejection on
/// grid invertibility.
fn random_psi(
    rng: &mut impl Rng,
    n: usize,
    pole_band: [f64; 2],
    zero_band: [f64; 2],
) -> Result<TransferMatrix> {
    for _ in 0..OBF_MAX_ATTEMPTS {
        let poles = random_spectrum(rng, n, pole_band[0], pole_band[1], OBF_IM_MAX);
        let mut rows = Vec::with_capacity(2);
        for _ in 0..2 {
            let mut row = Vec::with_capacity(2);
            for _ in 0..2 {
                let zeros = random_spectrum(rng, n, zero_band[0], zero_band[1], OBF_IM_MAX);
                let gain = rng.random_range(0.5f64.ln()..=2.0f64.ln()).exp();
                row.push(
                    RationalEntry::new(zeros, poles.clone(), gain)
                        .expect("conjugate-closed spectra form a valid entry"),
                );
            }
            rows.push(row);
        }
        let candidate = TransferMatrix::from_entries(rows)?;
        if candidate.inverse().is_ok() {
            return Ok(candidate);
        }
    }
    Err(Error::Rejection {
        context: "generate_obfuscator",
        attempts: OBF_MAX_ATTEMPTS,
    })
}

/// The tuple a vehicle actually puts on the wire.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelayMessage {
    /// Wire-format version.
    pub version: u32,
    /// Opaque per-trial sender token (not a persistent identity).
    pub sender_id: String,
    /// Ψ¹T.
    pub t_tilde: TransferMatrix,
    /// Ψ¹SΨ².
    pub s_tilde: TransferMatrix,
    /// Ψ¹e.
    pub e_tilde: Signal,
    /// (Ψ²)⁻¹wᶠ.
    pub w_f_tilde: Signal,
}

impl RelayMessage {
    /// Serialize to the versioned JSON wire format.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Schema(e.to_string()))
    }

    /// Parse and validate a wire message.
    pub fn from_json(text: &str) -> Result<Self> {
        let msg: RelayMessage =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        msg.validate()?;
        Ok(msg)
    }

    /// Structural validation of a (possibly externally produced) message.
    pub fn validate(&self) -> Result<()> {
        if self.version != WIRE_VERSION {
            return Err(Error::Schema(format!(
                "unsupported wire version {} (expected {WIRE_VERSION})",
                self.version
            )));
        }
        for (tf, name) in [(&self.t_tilde, "T"), (&self.s_tilde, "S")] {
            if tf.shape() != (2, 2) {
                return Err(Error::Schema(format!(
                    "{name} must be 2x2, got {}x{}",
                    tf.shape().0,
                    tf.shape().1
                )));
            }
            tf.validate()?;
        }
        if self.e_tilde.channels() != 2 || self.w_f_tilde.channels() != 2 {
            return Err(Error::Schema("signals must have two channels".into()));
        }
        if !self.e_tilde.compatible_with(&self.w_f_tilde) {
            return Err(Error::Schema(
                "error and learning signals must share one sample grid".into(),
            ));
        }
        Ok(())
    }
}

/// Opaque sender token derived from (but not revealing) the seed.
fn sender_token(seed: u64) -> String {
    // One splitmix64 round; good avalanche, not meant to be cryptographic.
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    format!("{:016x}", z ^ (z >> 31))
}

/// Obfuscate an outgoing tuple: `T̃ = Ψ¹T`, `S̃ = Ψ¹SΨ²`, `ẽ = Ψ¹e`,
/// `w̃ᶠ = (Ψ²)⁻¹wᶠ`. The message is assembled exclusively from the
/// composed values — no plaintext field is copied through.
pub fn obfuscate(
    obf: &Obfuscator,
    t: &TransferMatrix,
    s: &TransferMatrix,
    e: &Signal,
    w_f: &Signal,
) -> Result<RelayMessage> {
    let t_tilde = obf.psi_s1.mul(t)?;
    let s_tilde = obf.psi_s1.mul(s)?.mul(&obf.psi_s2)?;
    let e_tilde = apply_filter(&obf.psi_s1, e)?;
    // Stable because Ψ² is minimum-phase; the amplification guard inside
    // apply_filter still watches the composition.
    let psi2_inv = obf.psi_s2.inverse()?;
    let w_f_tilde = apply_filter(&psi2_inv, w_f)?;
    Ok(RelayMessage {
        version: WIRE_VERSION,
        sender_id: sender_token(obf.seed),
        t_tilde,
        s_tilde,
        e_tilde,
        w_f_tilde,
    })
}

/// Per-vehicle comparison between a plain and an obfuscated chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VehicleAccuracy {
    pub vehicle: usize,
    /// Relative L2 distance between the plain and obfuscated wᶠ.
    pub w_f_distance: f64,
    /// Relative L2 distance between the plain and obfuscated ŵ.
    pub w_hat_distance: f64,
    /// Profile-space MSE of the plain session.
    pub mse_plain: f64,
    /// Profile-space MSE of the obfuscated session.
    pub mse_obfuscated: f64,
    /// Relative gap between the two MSEs.
    pub mse_gap: f64,
    /// Relative response distance of L̃₁ from L₁Ψ²_prev (vehicles > 0).
    pub l1_identity_residual: Option<f64>,
    /// Relative response distance of L̃₂ from L₂(Ψ¹_prev)⁻¹ (vehicles > 0).
    pub l2_identity_residual: Option<f64>,
}

/// Outcome of [`verify_accuracy_preservation`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub per_vehicle: Vec<VehicleAccuracy>,
    /// Signal/MSE agreement budget (relative L2).
    pub tolerance: f64,
    /// Filter-identity budget (relative response distance).
    pub filter_tolerance: f64,
    pub pass: bool,
}

/// Compare a plaintext chain against an obfuscated chain run on identical
/// seeds: per vehicle, the relative L2 distances of wᶠ and ŵ, the
/// profile-space MSE gap, and — for every relaying step — the filter
/// identities `L̃₁ = L₁Ψ²_prev` and `L̃₂ = L₂(Ψ¹_prev)⁻¹`. Passes when all
/// distances stay within [`ACCURACY_TOL`] and the identities within
/// [`FILTER_RESIDUAL_TOL`].
pub fn verify_accuracy_preservation(
    plain: &ChainResult,
    obfuscated: &ChainResult,
    road: &RoadRealization,
) -> Result<AccuracyReport> {
    if plain.sessions.len() != obfuscated.sessions.len() {
        return Err(Error::Dimension {
            context: "verify_accuracy_preservation",
            expected: format!("{} sessions", plain.sessions.len()),
            got: format!("{}", obfuscated.sessions.len()),
        });
    }
    let grid = default_grid();
    let mut per_vehicle = Vec::with_capacity(plain.sessions.len());
    let mut pass = true;
    for (j, (sp, so)) in plain
        .sessions
        .iter()
        .zip(&obfuscated.sessions)
        .enumerate()
    {
        let w_f_distance = sp.w_f.rel_l2_distance(&so.w_f)?;
        let w_hat_distance = sp.w_hat.rel_l2_distance(&so.w_hat)?;
        let mse_plain = session_mse(sp, road, ErrorSpace::Profile)?;
        let mse_obfuscated = session_mse(so, road, ErrorSpace::Profile)?;
        let mse_gap = (mse_plain - mse_obfuscated).abs() / mse_plain.max(mse_obfuscated).max(1e-300);

        let (mut l1_res, mut l2_res) = (None, None);
        if j > 0 {
            let mp = &plain.messages[j - 1];
            let mo = &obfuscated.messages[j - 1];
            let plain_filters = build_filters(&mp.t_tilde, &mp.s_tilde, &sp.t, &sp.s)?;
            let obf_filters = build_filters(&mo.t_tilde, &mo.s_tilde, &so.t, &so.s)?;
            let psi_prev = &obfuscated.obfuscators[j - 1];
            let l1_expected = plain_filters.l1.mul(&psi_prev.psi_s2)?;
            let l2_expected = plain_filters.l2.mul(&psi_prev.psi_s1.inverse()?)?;
            l1_res = Some(obf_filters.l1.response_distance(&l1_expected, &grid)?);
            l2_res = Some(obf_filters.l2.response_distance(&l2_expected, &grid)?);
        }

        pass &= w_f_distance <= ACCURACY_TOL
            && w_hat_distance <= ACCURACY_TOL
            && mse_gap <= ACCURACY_TOL
            && l1_res.is_none_or(|r| r <= FILTER_RESIDUAL_TOL)
            && l2_res.is_none_or(|r| r <= FILTER_RESIDUAL_TOL);

        per_vehicle.push(VehicleAccuracy {
            vehicle: j,
            w_f_distance,
            w_hat_distance,
            mse_plain,
            mse_obfuscated,
            mse_gap,
            l1_identity_residual: l1_res,
            l2_identity_residual: l2_res,
        });
    }
    Ok(AccuracyReport {
        per_vehicle,
        tolerance: ACCURACY_TOL,
        filter_tolerance: FILTER_RESIDUAL_TOL,
        pass,
    })
}

/// Given only a wire message and any candidate sensitivity pair
/// `(T̄, S̄)`, produce obfuscators that explain the message as coming from
/// that candidate: `Ψ̄¹ = T̃T̄⁻¹` and `Ψ̄² = S̄⁻¹T̄T̃⁻¹S̃`, so that
/// `Ψ̄¹T̄ = T̃` and `Ψ̄¹S̄Ψ̄² = S̃` identically.
///
/// Nothing beyond the message is needed — which is the point: an
/// interceptor cannot distinguish the true sender dynamics from any such
/// alternative.
pub fn construct_alternative_explanation(
    msg: &RelayMessage,
    t_bar: &TransferMatrix,
    s_bar: &TransferMatrix,
) -> Result<(TransferMatrix, TransferMatrix)> {
    let psi1_bar = msg.t_tilde.mul(&t_bar.inverse()?)?;
    let psi2_bar = s_bar
        .inverse()?
        .mul(t_bar)?
        .mul(&msg.t_tilde.inverse()?)?
        .mul(&msg.s_tilde)?;
    Ok((psi1_bar, psi2_bar))
}

/// Residuals of an alternative explanation against the wire message:
/// relative response distances of `Ψ̄¹T̄` from `T̃` and of `Ψ̄¹S̄Ψ̄²` from
/// `S̃`, evaluated pointwise on the default grid.
pub fn explanation_residuals(
    msg: &RelayMessage,
    t_bar: &TransferMatrix,
    s_bar: &TransferMatrix,
    psi1_bar: &TransferMatrix,
    psi2_bar: &TransferMatrix,
) -> Result<(f64, f64)> {
    let grid = default_grid();
    let p1 = psi1_bar.response(&grid)?;
    let p2 = psi2_bar.response(&grid)?;
    let tb = t_bar.response(&grid)?;
    let sb = s_bar.response(&grid)?;
    let product = |factors: &[&FrequencyResponse]| -> Result<FrequencyResponse> {
        let values = (0..grid.len())
            .map(|k| {
                factors[1..]
                    .iter()
                    .fold(factors[0].values()[k].clone(), |acc, f| acc * &f.values()[k])
            })
            .collect();
        FrequencyResponse::new(grid.clone(), values)
    };
    let r1 = product(&[&p1, &tb])?.relative_distance(&msg.t_tilde.response(&grid)?)?;
    let r2 = product(&[&p1, &sb, &p2])?.relative_distance(&msg.s_tilde.response(&grid)?)?;
    Ok((r1, r2))
}
