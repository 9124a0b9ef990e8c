//! Single-vehicle estimation stack.
//!
//! Two cascaded pieces:
//!
//! 1. a *state estimator* `x̂̇ = Ax̂ + F(Cx̂ − y) + (B + FD)λμ_η`, whose
//!    gain `F` is optimal for the jump-diffusion road statistics and comes
//!    out of a filter-form Riccati equation, and
//! 2. an *input observer* `ε̇ = −γSε + γSKAx̂ + (γS)²Kx̂`,
//!    `ŵ = −ε + γSKx̂`, which reconstructs the unknown road input from the
//!    state-estimate trajectory.
//!
//! The cascade is exposed both as time-domain runs (`run_state_estimator`,
//! `run_input_observer`, [`estimate`]) and as the 6-state LTI block
//! `y → ŵ` ([`estimator_as_lti`]) that the collaborative layer composes
//! into sensitivity dynamics. The constant bias `(B+FD)λμ_η` makes the
//! time-domain estimator affine; its steady-state footprint on `ŵ` is
//! computed once per design ([`EstimatorDesign::w_offset`]) and subtracted,
//! so the relayed signals match the LTI picture.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_care_filter;
use crate::lti::{Signal, StateSpace};
use crate::road::JdpParams;

/// Default input-observer gain.
pub const GAMMA_DEFAULT: f64 = 20.0;
/// Relative Riccati residual accepted by `solve_riccati`.
pub const RICCATI_TOL: f64 = 1e-8;
/// Rank tolerance of the PBH stabilizability/detectability tests.
pub const PBH_TOL: f64 = 1e-8;

/// Everything `solve_riccati` decides about one vehicle's estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorDesign {
    /// Estimator gain (n×p).
    pub f: DMatrix<f64>,
    /// Riccati solution (n×n, symmetric PSD).
    pub q: DMatrix<f64>,
    /// Effective input covariance Σ̄ = σ_ζσ_ζᵀ + λμ_ημ_ηᵀ + λΣ_η (m×m).
    pub sigma_bar: DMatrix<f64>,
    /// Process-noise term V₁ = BΣ̄Bᵀ − BΣ̄DᵀV₂⁻¹DΣ̄Bᵀ (n×n).
    pub v1: DMatrix<f64>,
    /// Innovation covariance V₂ = σ_ζσ_ζᵀ + DΣ̄Dᵀ (p×p).
    pub v2: DMatrix<f64>,
    /// Input-observer scalar gain (must exceed 0.5).
    pub gamma: f64,
    /// Observer matrix S = 0.5(1+γ)·I (m×m).
    pub s_obs: DMatrix<f64>,
    /// Left inverse K = (BᵀB)⁻¹Bᵀ of the input matrix (m×n).
    pub k_obs: DMatrix<f64>,
    /// Constant estimator drive (B+FD)λμ_η (n-vector).
    pub bias_term: DVector<f64>,
    /// Steady-state footprint of the bias on ŵ, subtracted from the raw
    /// observer output so estimates match the linear block: KA(A+FC)⁻¹·bias.
    pub w_offset: DVector<f64>,
}

/// Output of one estimation pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationResult {
    /// State-estimate trajectory (n channels).
    pub x_hat: Signal,
    /// Initial road-input estimate ŵᵒ (m channels), bias offset removed.
    pub w_hat_o: Signal,
}

/// Smallest singular value relative to the largest, for PBH rank tests.
fn relative_rank_gap(m: DMatrix<Complex64>) -> f64 {
    let sv = m.svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 {
        return 0.0;
    }
    sv.min() / max
}

fn pbh_checks(model: &StateSpace) -> Result<()> {
    let n = model.order();
    let eigs = model.eigenvalues()?;
    let to_c = |m: &DMatrix<f64>| m.map(|v| Complex64::new(v, 0.0));
    let (a, b, c) = (to_c(model.a()), to_c(model.b()), to_c(model.c()));
    for lambda in eigs.iter().filter(|l| l.re >= 0.0) {
        let shift = &a - DMatrix::<Complex64>::identity(n, n) * *lambda;
        // Stabilizability: [A−λI, B] full row rank.
        let mut wide = DMatrix::<Complex64>::zeros(n, n + model.inputs());
        wide.view_mut((0, 0), (n, n)).copy_from(&shift);
        wide.view_mut((0, n), (n, model.inputs())).copy_from(&b);
        if relative_rank_gap(wide) <= PBH_TOL {
            return Err(Error::Pbh {
                kind: "stabilizability",
                re: lambda.re,
                im: lambda.im,
            });
        }
        // Detectability: [A−λI; C] full column rank.
        let mut tall = DMatrix::<Complex64>::zeros(n + model.outputs(), n);
        tall.view_mut((0, 0), (n, n)).copy_from(&shift);
        tall.view_mut((n, 0), (model.outputs(), n)).copy_from(&c);
        if relative_rank_gap(tall) <= PBH_TOL {
            return Err(Error::Pbh {
                kind: "detectability",
                re: lambda.re,
                im: lambda.im,
            });
        }
    }
    Ok(())
}

/// Designs the estimator for `model` under the default observer gain.
pub fn solve_riccati(model: &StateSpace, jdp: &JdpParams) -> Result<EstimatorDesign> {
    solve_riccati_with(model, jdp, GAMMA_DEFAULT)
}

/// Designs the estimator for `model` with an explicit observer gain γ.
///
/// Derives the road-statistics covariances from `jdp` — the effective
/// input covariance `Σ̄ = σ_ζσ_ζᵀ + λμ_ημ_ηᵀ + λΣ_η` and the mean drive
/// `λμ_η` — and defers to [`design_from_covariances`].
pub fn solve_riccati_with(
    model: &StateSpace,
    jdp: &JdpParams,
    gamma: f64,
) -> Result<EstimatorDesign> {
    jdp.validate()?;
    if model.inputs() != 2 || model.outputs() != 2 {
        return Err(Error::Dimension {
            context: "solve_riccati",
            expected: "2-input 2-output vehicle model".into(),
            got: format!("{} inputs, {} outputs", model.inputs(), model.outputs()),
        });
    }
    let sz = DMatrix::from_row_slice(
        2,
        2,
        &[
            jdp.sigma_zeta[0][0],
            jdp.sigma_zeta[0][1],
            jdp.sigma_zeta[1][0],
            jdp.sigma_zeta[1][1],
        ],
    );
    let se = DMatrix::from_row_slice(
        2,
        2,
        &[
            jdp.sigma_eta[0][0],
            jdp.sigma_eta[0][1],
            jdp.sigma_eta[1][0],
            jdp.sigma_eta[1][1],
        ],
    );
    let mu = DVector::from_column_slice(&jdp.mu_eta);
    let zeta_cov = &sz * sz.transpose();
    let sigma_bar = &zeta_cov + jdp.lambda * (&mu * mu.transpose() + se);
    let lambda_mu = jdp.lambda * mu;
    design_from_covariances(model, &sigma_bar, &zeta_cov, &lambda_mu, gamma)
}

/// Core estimator design from explicit covariances (any dimensions).
///
/// Solves the filter Riccati equation
/// `ÃQ + QÃᵀ + V₁ − QCᵀV₂⁻¹CQ = 0` with `Ã = A − BΣ̄DᵀV₂⁻¹C`, sets
/// `F = −BΣ̄DᵀV₂⁻¹ − QCᵀV₂⁻¹`, and verifies the design invariants:
/// residual ≤ `RICCATI_TOL`·max(1, ‖V₁‖_F), `Q ⪰ 0`, `A+FC` Hurwitz.
pub fn design_from_covariances(
    model: &StateSpace,
    sigma_bar: &DMatrix<f64>,
    zeta_cov: &DMatrix<f64>,
    lambda_mu: &DVector<f64>,
    gamma: f64,
) -> Result<EstimatorDesign> {
    let (m, p) = (model.inputs(), model.outputs());
    if sigma_bar.shape() != (m, m) || zeta_cov.shape() != (p, p) || lambda_mu.len() != m {
        return Err(Error::Dimension {
            context: "design_from_covariances",
            expected: format!("Σ̄ {m}x{m}, ζ-covariance {p}x{p}, λμ of length {m}"),
            got: format!(
                "{}x{}, {}x{}, {}",
                sigma_bar.nrows(),
                sigma_bar.ncols(),
                zeta_cov.nrows(),
                zeta_cov.ncols(),
                lambda_mu.len()
            ),
        });
    }
    if !(gamma > 0.5) {
        return Err(Error::InvalidParam {
            name: "gamma",
            message: format!("gamma must exceed 0.5, got {gamma}"),
        });
    }
    pbh_checks(model)?;

    let (a, b, c, d) = (model.a(), model.b(), model.c(), model.d());
    let v2 = zeta_cov + d * sigma_bar * d.transpose();
    let v2_chol = v2.clone().cholesky().ok_or_else(|| Error::InvalidParam {
        name: "V2",
        message: "innovation covariance is not positive definite".into(),
    })?;
    let v2_inv = v2_chol.inverse();

    let bsd = b * sigma_bar * d.transpose(); // n×p
    let a_tilde = a - &bsd * &v2_inv * c;
    let v1_raw = b * sigma_bar * b.transpose() - &bsd * &v2_inv * bsd.transpose();
    let v1 = 0.5 * (&v1_raw + v1_raw.transpose());
    let riccati_m = c.transpose() * &v2_inv * c;

    let q = solve_care_filter(&a_tilde, &riccati_m, &v1, RICCATI_TOL)?;
    let f = -(&bsd * &v2_inv) - &q * c.transpose() * &v2_inv;

    // Invariants of an accepted design.
    let sym_floor = -1e-8 * q.norm().max(1.0);
    let q_min_eig = (0.5 * (&q + q.transpose()))
        .symmetric_eigen()
        .eigenvalues
        .min();
    if q_min_eig < sym_floor {
        return Err(Error::Riccati {
            residual: q_min_eig.abs(),
            tolerance: sym_floor.abs(),
        });
    }
    let a_cl = a + &f * c;
    if crate::linalg::eigenvalues(&a_cl)?
        .iter()
        .any(|l| l.re >= -crate::lti::DEFAULT_STABILITY_MARGIN)
    {
        return Err(Error::Unstable("A + FC is not Hurwitz".into()));
    }

    let btb = (b.transpose() * b)
        .try_inverse()
        .ok_or_else(|| Error::InvalidParam {
            name: "B",
            message: "BᵀB is singular; the input observer needs full column rank".into(),
        })?;
    let k_obs = btb * b.transpose();
    let s_obs = DMatrix::<f64>::identity(m, m) * (0.5 * (1.0 + gamma));
    let bias_term = (b + &f * d) * lambda_mu;
    // Steady state of the bias response through the cascade: the estimator
    // settles at x̂_ss = −(A+FC)⁻¹·bias and the observer then reports
    // ŵ_ss = −KA·x̂_ss.
    let a_cl_inv = a_cl.clone().try_inverse().ok_or(Error::Eigen(
        "A + FC is Hurwitz yet numerically singular",
    ))?;
    let w_offset = &k_obs * a * a_cl_inv * &bias_term;

    Ok(EstimatorDesign {
        f,
        q,
        sigma_bar: sigma_bar.clone(),
        v1,
        v2,
        gamma,
        s_obs,
        k_obs,
        bias_term,
        w_offset,
    })
}

impl EstimatorDesign {
    /// Frobenius norm of the Riccati residual for this design on `model`.
    pub fn riccati_residual(&self, model: &StateSpace) -> f64 {
        let (a, b, c, d) = (model.a(), model.b(), model.c(), model.d());
        let v2_inv = self
            .v2
            .clone()
            .try_inverse()
            .expect("V2 was positive definite at construction");
        let bsd = b * &self.sigma_bar * d.transpose();
        let a_tilde = a - &bsd * &v2_inv * c;
        let m = c.transpose() * &v2_inv * c;
        crate::linalg::care_residual(&a_tilde, &m, &self.v1, &self.q).norm()
    }
}

/// Integrates the (affine) state estimator on a measurement record.
///
/// `x̂̇ = Ax̂ + F(Cx̂ − y) + bias`, `x̂(0) = 0`; returns the n-channel
/// state-estimate trajectory on the same grid as `y`.
pub fn run_state_estimator(
    design: &EstimatorDesign,
    model: &StateSpace,
    y: &Signal,
) -> Result<Signal> {
    let (n, p) = (model.order(), model.outputs());
    if y.channels() != p {
        return Err(Error::Dimension {
            context: "run_state_estimator",
            expected: format!("{p} measurement channels"),
            got: format!("{}", y.channels()),
        });
    }
    // Affine dynamics as an LTI system with input [y; 1].
    let a_cl = model.a() + &design.f * model.c();
    let mut b_aug = DMatrix::<f64>::zeros(n, p + 1);
    b_aug.view_mut((0, 0), (n, p)).copy_from(&(-&design.f));
    b_aug.view_mut((0, p), (n, 1)).copy_from(&design.bias_term);
    let sys = StateSpace::new(
        a_cl,
        b_aug,
        DMatrix::identity(n, n),
        DMatrix::zeros(n, p + 1),
    )?;
    let mut data: Vec<Vec<f64>> = (0..p).map(|c| y.channel(c).to_vec()).collect();
    data.push(vec![1.0; y.len()]);
    let y_aug = Signal::new(data, y.dt(), y.t0())?;
    sys.simulate(&y_aug, &vec![0.0; n])
}

/// Integrates the input observer on a state-estimate trajectory.
///
/// `ε̇ = −γSε + γSKAx̂ + (γS)²Kx̂`, `ŵ = −ε + γSKx̂`, `ε(0) = 0`.
/// The output is the *raw* observer estimate; the constant bias offset is
/// removed one level up, in [`estimate`].
pub fn run_input_observer(
    design: &EstimatorDesign,
    model: &StateSpace,
    x_hat: &Signal,
) -> Result<Signal> {
    let (n, m) = (model.order(), model.inputs());
    if x_hat.channels() != n {
        return Err(Error::Dimension {
            context: "run_input_observer",
            expected: format!("{n} state channels"),
            got: format!("{}", x_hat.channels()),
        });
    }
    let sys = observer_stage(design, model)?;
    sys.simulate(x_hat, &vec![0.0; m])
}

/// The observer stage as an LTI block x̂ → ŵ.
fn observer_stage(design: &EstimatorDesign, model: &StateSpace) -> Result<StateSpace> {
    let m = model.inputs();
    let gs = design.gamma * &design.s_obs;
    let d_obs = &gs * &design.k_obs; // γSK, the feedthrough
    let b_obs = &gs * &design.k_obs * model.a() + &gs * &d_obs; // γSKA + (γS)²K
    StateSpace::new(
        -gs,
        b_obs,
        -DMatrix::<f64>::identity(m, m),
        d_obs,
    )
}

/// The full estimator as one LTI block `y → ŵ` (bias ignored: the block is
/// the linear part; the affine offset is handled via `w_offset`).
pub fn estimator_as_lti(design: &EstimatorDesign, model: &StateSpace) -> Result<StateSpace> {
    let (n, p) = (model.order(), model.outputs());
    let a_cl = model.a() + &design.f * model.c();
    let stage1 = StateSpace::new(
        a_cl,
        -&design.f,
        DMatrix::identity(n, n),
        DMatrix::zeros(n, p),
    )?;
    let stage2 = observer_stage(design, model)?;
    stage1.series(&stage2)
}

/// One full estimation pass: state estimator, input observer, bias removal.
pub fn estimate(
    design: &EstimatorDesign,
    model: &StateSpace,
    y: &Signal,
) -> Result<EstimationResult> {
    let x_hat = run_state_estimator(design, model, y)?;
    let raw = run_input_observer(design, model, &x_hat)?;
    let offset: Vec<f64> = design.w_offset.iter().copied().collect();
    let data: Vec<Vec<f64>> = (0..raw.channels())
        .map(|c| raw.channel(c).iter().map(|v| v - offset[c]).collect())
        .collect();
    let w_hat_o = Signal::new(data, raw.dt(), raw.t0())?;
    Ok(EstimationResult { x_hat, w_hat_o })
}
