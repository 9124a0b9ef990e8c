//! Half-car vehicle models.
//!
//! Each vehicle is a 4-state heave/roll model of one axle with two
//! suspension corners. The state is `x = [q₁, q₂, ż, θ̇]` — the two
//! suspension deflections, the heave rate, and the roll rate — the input is
//! the road *velocity* at the two wheels, `w = [w₁, w₂]`, and the measured
//! outputs are the two corner accelerations `y = [z̈₁, z̈₂]`.
//!
//! A [`VehicleInstance`] carries two such models: the `plant` built from the
//! true (unknown in the field, known to the simulation) parameters, and the
//! `model` built from the parameters the vehicle believes, drawn as a
//! perturbation of the truth. All collaborative machinery downstream works
//! with the model; the plant only produces measurements.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::StateSpace;

/// Physical parameters of the half-car axle model. All strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Sprung body mass [kg].
    pub m_b: f64,
    /// Roll inertia convention of the axle model [kg·m²].
    #[serde(rename = "I_x")]
    pub i_x: f64,
    /// Suspension stiffness per corner [N/m].
    pub k_s: f64,
    /// Suspension damping per corner [N·s/m].
    pub c_s: f64,
    /// Lateral distance from the roll axis to the left corner [m].
    #[serde(rename = "L1")]
    pub l1: f64,
    /// Lateral distance from the roll axis to the right corner [m].
    #[serde(rename = "L2")]
    pub l2: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            m_b: 700.0,
            i_x: 500.0,
            k_s: 30_000.0,
            c_s: 2_500.0,
            l1: 0.75,
            l2: 0.75,
        }
    }
}

impl VehicleParams {
    /// Checks that every parameter is strictly positive and finite.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("m_b", self.m_b),
            ("I_x", self.i_x),
            ("k_s", self.k_s),
            ("c_s", self.c_s),
            ("L1", self.l1),
            ("L2", self.l2),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::InvalidParam {
                    name,
                    message: format!("must be strictly positive and finite, got {value}"),
                });
            }
        }
        Ok(())
    }
}

/// Builds the 4-state half-car realization from physical parameters.
///
/// With `x = [q₁, q₂, ż, θ̇]`, `w = [w₁, w₂]` (road velocities) and
/// `y = [z̈₁, z̈₂]` (corner accelerations):
///
/// * deflection rates: `q̇ᵢ = ż ± Lᵢ·θ̇ − wᵢ`,
/// * heave: `m·z̈ = −k(q₁+q₂) − c(q̇₁+q̇₂)`,
/// * roll: `I·θ̈ = 2L₁(−kq₁−cq̇₁) − 2L₂(−kq₂−cq̇₂)`,
/// * outputs: `z̈ᵢ = z̈ ± Lᵢ·θ̈`, i.e. rows 3/4 of `(A, B)` recombined.
///
/// The feedthrough `D` has determinant `2c²(L₁+L₂)²/(mI) > 0`, so the
/// acceleration channel is biproper and invertible.
pub fn build_half_car(params: &VehicleParams) -> Result<StateSpace> {
    params.validate()?;
    let VehicleParams {
        m_b: m,
        i_x: i,
        k_s: k,
        c_s: c,
        l1,
        l2,
    } = *params;

    let a = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0,
            0.0,
            1.0,
            l1,
            0.0,
            0.0,
            1.0,
            -l2,
            -k / m,
            -k / m,
            -2.0 * c / m,
            -c * (l1 - l2) / m,
            -2.0 * l1 * k / i,
            2.0 * l2 * k / i,
            2.0 * (l2 - l1) * c / i,
            -2.0 * (l1 * l1 + l2 * l2) * c / i,
        ],
    );
    let b = DMatrix::from_row_slice(
        4,
        2,
        &[
            -1.0,
            0.0,
            0.0,
            -1.0,
            c / m,
            c / m,
            2.0 * l1 * c / i,
            -2.0 * l2 * c / i,
        ],
    );

    // z̈₁ = z̈ + L₁θ̈ and z̈₂ = z̈ − L₂θ̈: recombine the acceleration rows.
    let mut cm = DMatrix::<f64>::zeros(2, 4);
    let mut dm = DMatrix::<f64>::zeros(2, 2);
    for col in 0..4 {
        cm[(0, col)] = a[(2, col)] + l1 * a[(3, col)];
        cm[(1, col)] = a[(2, col)] - l2 * a[(3, col)];
    }
    for col in 0..2 {
        dm[(0, col)] = b[(2, col)] + l1 * b[(3, col)];
        dm[(1, col)] = b[(2, col)] - l2 * b[(3, col)];
    }

    StateSpace::new(a, b, cm, dm)
}

/// Draws a perturbed copy of `params`.
///
/// Each parameter is multiplied by an independent factor with mean 1 and
/// standard deviation `rel_sigma`, truncated at ±3σ (so positivity is
/// preserved for every admissible `rel_sigma < 0.3`). Draw order is fixed —
/// `m_b, I_x, k_s, c_s, L1, L2` — so results are reproducible for a given
/// RNG state.
pub fn perturb_params(
    params: &VehicleParams,
    rel_sigma: f64,
    rng: &mut impl Rng,
) -> Result<VehicleParams> {
    params.validate()?;
    if !(0.0..0.3).contains(&rel_sigma) {
        return Err(Error::InvalidParam {
            name: "rel_sigma",
            message: format!("must lie in [0, 0.3), got {rel_sigma}"),
        });
    }
    if rel_sigma == 0.0 {
        return Ok(*params);
    }
    let normal = Normal::new(1.0, rel_sigma).expect("finite positive sigma");
    let mut factor = || loop {
        let f: f64 = normal.sample(rng);
        if (f - 1.0).abs() <= 3.0 * rel_sigma {
            return f;
        }
    };
    Ok(VehicleParams {
        m_b: params.m_b * factor(),
        i_x: params.i_x * factor(),
        k_s: params.k_s * factor(),
        c_s: params.c_s * factor(),
        l1: params.l1 * factor(),
        l2: params.l2 * factor(),
    })
}

/// One vehicle of the fleet: true plant plus believed model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VehicleInstance {
    /// Position of the vehicle in the chain (0-based).
    pub id: usize,
    /// Parameters of the physical vehicle.
    pub true_params: VehicleParams,
    /// Parameters the vehicle's estimator believes.
    pub model_params: VehicleParams,
    /// Realization of `true_params`; produces measurements.
    pub plant: StateSpace,
    /// Realization of `model_params`; drives estimation and filtering.
    pub model: StateSpace,
}

impl VehicleInstance {
    /// Builds a vehicle from explicit true and believed parameters.
    pub fn new(id: usize, true_params: VehicleParams, model_params: VehicleParams) -> Result<Self> {
        Ok(VehicleInstance {
            id,
            true_params,
            model_params,
            plant: build_half_car(&true_params)?,
            model: build_half_car(&model_params)?,
        })
    }

    /// Draws a heterogeneous vehicle: the true parameters perturb the
    /// nominal ones by `rel_sigma_fleet`, and the believed parameters
    /// perturb the true ones by `rel_sigma_model`.
    pub fn heterogeneous(
        id: usize,
        nominal: &VehicleParams,
        rel_sigma_fleet: f64,
        rel_sigma_model: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let true_params = perturb_params(nominal, rel_sigma_fleet, rng)?;
        let model_params = perturb_params(&true_params, rel_sigma_model, rng)?;
        VehicleInstance::new(id, true_params, model_params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{Signal, TransferMatrix};
    use crate::synth::seeded;
    use approx::assert_relative_eq;

    /// Independent reconstruction of the model from the per-corner force
    /// balance, assembled entry by entry in a different order than the
    /// production constructor.
    fn half_car_by_force_assembly(p: &VehicleParams) -> (DMatrix<f64>, DMatrix<f64>) {
        let (m, i, k, c, l1, l2) = (p.m_b, p.i_x, p.k_s, p.c_s, p.l1, p.l2);
        let mut a = DMatrix::<f64>::zeros(4, 4);
        let mut b = DMatrix::<f64>::zeros(4, 2);

        // Deflection kinematics q̇ᵢ = ż ± Lᵢθ̇ − wᵢ.
        a[(0, 2)] = 1.0;
        a[(0, 3)] = l1;
        b[(0, 0)] = -1.0;
        a[(1, 2)] = 1.0;
        a[(1, 3)] = -l2;
        b[(1, 1)] = -1.0;

        // Corner force Fᵢ = −k qᵢ − c q̇ᵢ expressed in (x, w) coordinates:
        // rows of [∂F/∂x | ∂F/∂w], with q̇ᵢ substituted from the kinematics.
        let f1_x = [-k, 0.0, -c, -c * l1];
        let f1_w = [c, 0.0];
        let f2_x = [0.0, -k, -c, c * l2];
        let f2_w = [0.0, c];

        // Heave: m z̈ = F₁ + F₂.
        for col in 0..4 {
            a[(2, col)] = (f1_x[col] + f2_x[col]) / m;
        }
        for col in 0..2 {
            b[(2, col)] = (f1_w[col] + f2_w[col]) / m;
        }
        // Roll: I θ̈ = 2L₁F₁ − 2L₂F₂.
        for col in 0..4 {
            a[(3, col)] = (2.0 * l1 * f1_x[col] - 2.0 * l2 * f2_x[col]) / i;
        }
        for col in 0..2 {
            b[(3, col)] = (2.0 * l1 * f1_w[col] - 2.0 * l2 * f2_w[col]) / i;
        }
        (a, b)
    }

    #[test]
    fn matches_force_assembly_entry_by_entry() {
        let p = VehicleParams {
            m_b: 640.0,
            i_x: 410.0,
            k_s: 27_500.0,
            c_s: 2_100.0,
            l1: 0.68,
            l2: 0.81,
        };
        let sys = build_half_car(&p).unwrap();
        let (a_ref, b_ref) = half_car_by_force_assembly(&p);
        for r in 0..4 {
            for c in 0..4 {
                assert_relative_eq!(sys.a()[(r, c)], a_ref[(r, c)], epsilon = 1e-12);
            }
            for c in 0..2 {
                assert_relative_eq!(sys.b()[(r, c)], b_ref[(r, c)], epsilon = 1e-12);
            }
        }
        // Output rows recombine the acceleration rows with the same lever arms.
        for c in 0..4 {
            assert_relative_eq!(
                sys.c()[(0, c)],
                a_ref[(2, c)] + p.l1 * a_ref[(3, c)],
                epsilon = 1e-12
            );
            assert_relative_eq!(
                sys.c()[(1, c)],
                a_ref[(2, c)] - p.l2 * a_ref[(3, c)],
                epsilon = 1e-12
            );
        }
        for c in 0..2 {
            assert_relative_eq!(
                sys.d()[(0, c)],
                b_ref[(2, c)] + p.l1 * b_ref[(3, c)],
                epsilon = 1e-12
            );
            assert_relative_eq!(
                sys.d()[(1, c)],
                b_ref[(2, c)] - p.l2 * b_ref[(3, c)],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn default_vehicle_is_hurwitz_with_invertible_feedthrough() {
        let p = VehicleParams::default();
        let sys = build_half_car(&p).unwrap();
        assert!(sys.is_hurwitz().unwrap());
        let det = sys.d()[(0, 0)] * sys.d()[(1, 1)] - sys.d()[(0, 1)] * sys.d()[(1, 0)];
        let det_expected =
            2.0 * p.c_s * p.c_s * (p.l1 + p.l2) * (p.l1 + p.l2) / (p.m_b * p.i_x);
        assert_relative_eq!(det, det_expected, max_relative = 1e-12);
        assert!(det > 0.0);
    }

    #[test]
    fn transfer_matrix_is_biproper_and_invertible() {
        let sys = build_half_car(&VehicleParams::default()).unwrap();
        let g = TransferMatrix::from_state_space(&sys).unwrap();
        let inv = g.inverse().unwrap();
        let prod = g.mul(&inv).unwrap();
        let id = TransferMatrix::identity(2);
        assert!(prod.response_distance(&id, &crate::lti::default_grid()).unwrap() < 1e-6);
    }

    #[test]
    fn symmetric_geometry_decouples_heave_and_roll() {
        // With L1 = L2, in coordinates (q₁+q₂, ż | q₁−q₂, θ̇) the dynamics
        // split into two independent 2×2 blocks.
        let p = VehicleParams::default();
        assert_eq!(p.l1, p.l2);
        let sys = build_half_car(&p).unwrap();
        let a = sys.a();
        // Sum coordinate: q̇₁+q̇₂ = 2ż (no θ̇ term since L1−L2 = 0).
        assert_relative_eq!(a[(0, 3)] + a[(1, 3)], 0.0, epsilon = 1e-14);
        // Heave row has no roll-rate coupling and roll row no heave terms.
        assert_relative_eq!(a[(2, 3)], 0.0, epsilon = 1e-14);
        assert_relative_eq!(a[(3, 2)], 0.0, epsilon = 1e-14);
        assert_relative_eq!(a[(3, 0)] + a[(3, 1)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn symmetric_forcing_never_excites_roll() {
        let sys = build_half_car(&VehicleParams::default()).unwrap();
        let u = Signal::from_fn(2, 4000, 1e-3, 0.0, |_, t| {
            (7.0 * t).sin() + 0.3 * (19.0 * t).cos()
        })
        .unwrap();
        let mut roll_peak: f64 = 0.0;
        let mut heave_peak: f64 = 0.0;
        sys.simulate_with(&u, &[0.0; 4], |_, x| {
            roll_peak = roll_peak.max(x[3].abs());
            heave_peak = heave_peak.max(x[2].abs());
        })
        .unwrap();
        assert!(heave_peak > 1e-3, "forcing should move the body");
        assert!(roll_peak <= 1e-12 * heave_peak.max(1.0));
    }

    #[test]
    fn perturb_zero_sigma_is_identity() {
        let p = VehicleParams::default();
        let q = perturb_params(&p, 0.0, &mut seeded(1)).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn perturb_is_deterministic_and_within_bounds() {
        let p = VehicleParams::default();
        let a = perturb_params(&p, 0.1, &mut seeded(5)).unwrap();
        let b = perturb_params(&p, 0.1, &mut seeded(5)).unwrap();
        assert_eq!(a, b);
        for (nominal, drawn) in [
            (p.m_b, a.m_b),
            (p.i_x, a.i_x),
            (p.k_s, a.k_s),
            (p.c_s, a.c_s),
            (p.l1, a.l1),
            (p.l2, a.l2),
        ] {
            let factor = drawn / nominal;
            assert!((factor - 1.0).abs() <= 0.3 + 1e-12);
            assert!(drawn > 0.0);
        }
    }

    #[test]
    fn perturb_factors_are_unbiased() {
        let p = VehicleParams::default();
        let mut rng = seeded(77);
        let draws = 10_000;
        let mut mean = [0.0f64; 6];
        for _ in 0..draws {
            let q = perturb_params(&p, 0.1, &mut rng).unwrap();
            for (slot, (nominal, drawn)) in mean.iter_mut().zip([
                (p.m_b, q.m_b),
                (p.i_x, q.i_x),
                (p.k_s, q.k_s),
                (p.c_s, q.c_s),
                (p.l1, q.l1),
                (p.l2, q.l2),
            ]) {
                *slot += drawn / nominal;
            }
        }
        for slot in &mut mean {
            *slot /= draws as f64;
            assert!((*slot - 1.0).abs() < 0.01, "mean factor {slot}");
        }
    }

    #[test]
    fn perturbed_fleet_stays_hurwitz() {
        let mut rng = seeded(11);
        for id in 0..25 {
            let v = VehicleInstance::heterogeneous(
                id,
                &VehicleParams::default(),
                0.10,
                0.05,
                &mut rng,
            )
            .unwrap();
            assert!(v.plant.is_hurwitz().unwrap());
            assert!(v.model.is_hurwitz().unwrap());
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let mut p = VehicleParams::default();
        p.k_s = 0.0;
        assert!(matches!(
            build_half_car(&p),
            Err(Error::InvalidParam { name: "k_s", .. })
        ));
        assert!(matches!(
            perturb_params(&VehicleParams::default(), 0.3, &mut seeded(0)),
            Err(Error::InvalidParam {
                name: "rel_sigma",
                ..
            })
        ));
    }

    #[test]
    fn params_serde_round_trip() {
        let p = VehicleParams::default();
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.contains("\"I_x\""));
        assert!(text.contains("\"L1\""));
        let back: VehicleParams = serde_json::from_str(&text).unwrap();
        assert_eq!(p, back);
    }
}
