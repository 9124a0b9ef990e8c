//! Continuous-time LTI state-space quadruple (A, B, C, D).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::freq::FrequencyResponse;
use super::signal::Signal;
use crate::error::{Error, Result};
use crate::linalg;

/// Stability margin: Hurwitz means max Re(eig) < −margin.
pub const DEFAULT_STABILITY_MARGIN: f64 = 1e-9;

/// Any simulated state beyond this magnitude counts as divergence.
pub const OVERFLOW_GUARD: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension {
                context: "StateSpace::new",
                expected: "square A".into(),
                got: format!("{}x{}", a.nrows(), a.ncols()),
            });
        }
        let m = b.ncols();
        let p = c.nrows();
        if b.nrows() != n || c.ncols() != n || d.nrows() != p || d.ncols() != m {
            return Err(Error::Dimension {
                context: "StateSpace::new",
                expected: format!("B {n}x{m}, C {p}x{n}, D {p}x{m}"),
                got: format!(
                    "B {}x{}, C {}x{}, D {}x{}",
                    b.nrows(),
                    b.ncols(),
                    c.nrows(),
                    c.ncols(),
                    d.nrows(),
                    d.ncols()
                ),
            });
        }
        for mat in [&a, &b, &c, &d] {
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("StateSpace::new"));
            }
        }
        Ok(StateSpace { a, b, c, d })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    /// State dimension n.
    pub fn order(&self) -> usize {
        self.a.nrows()
    }
    /// Input dimension m.
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
    /// Output dimension p.
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        linalg::eigenvalues(&self.a)
    }

    /// True iff every eigenvalue of A satisfies Re < −margin.
    pub fn is_hurwitz_with(&self, margin: f64) -> Result<bool> {
        Ok(self.eigenvalues()?.iter().all(|l| l.re < -margin))
    }

    pub fn is_hurwitz(&self) -> Result<bool> {
        self.is_hurwitz_with(DEFAULT_STABILITY_MARGIN)
    }

    /// `C (sI − A)⁻¹ B + D` at one complex point.
    pub fn eval(&self, s: Complex64) -> Result<DMatrix<Complex64>> {
        let n = self.order();
        let to_c = |m: &DMatrix<f64>| m.map(|v| Complex64::new(v, 0.0));
        if n == 0 {
            return Ok(to_c(&self.d));
        }
        let mut si_a = to_c(&self.a).map(|v| -v);
        for i in 0..n {
            si_a[(i, i)] += s;
        }
        let x = si_a
            .lu()
            .solve(&to_c(&self.b))
            .ok_or(Error::Singular {
                omega: s.im,
                det_mag: 0.0,
                threshold: 0.0,
            })?;
        Ok(to_c(&self.c) * x + to_c(&self.d))
    }

    /// Frequency response on a grid of angular frequencies.
    pub fn response(&self, omegas: &[f64]) -> Result<FrequencyResponse> {
        let values = omegas
            .iter()
            .map(|&w| self.eval(Complex64::new(0.0, w)))
            .collect::<Result<Vec<_>>>()?;
        FrequencyResponse::new(omegas.to_vec(), values)
    }

    /// Series interconnection: `self` drives `after` (output of self feeds
    /// input of after); the result maps self's input to after's output.
    pub fn series(&self, after: &StateSpace) -> Result<StateSpace> {
        if after.inputs() != self.outputs() {
            return Err(Error::Dimension {
                context: "StateSpace::series",
                expected: format!("{} downstream inputs", self.outputs()),
                got: format!("{}", after.inputs()),
            });
        }
        let n1 = self.order();
        let n2 = after.order();
        let mut a = DMatrix::<f64>::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&after.b * &self.c));
        a.view_mut((n1, n1), (n2, n2)).copy_from(&after.a);
        let mut b = DMatrix::<f64>::zeros(n1 + n2, self.inputs());
        b.view_mut((0, 0), (n1, self.inputs())).copy_from(&self.b);
        b.view_mut((n1, 0), (n2, self.inputs()))
            .copy_from(&(&after.b * &self.d));
        let mut c = DMatrix::<f64>::zeros(after.outputs(), n1 + n2);
        c.view_mut((0, 0), (after.outputs(), n1))
            .copy_from(&(&after.d * &self.c));
        c.view_mut((0, n1), (after.outputs(), n2)).copy_from(&after.c);
        let d = &after.d * &self.d;
        StateSpace::new(a, b, c, d)
    }

    /// Fixed-step RK4 integration of ẋ = Ax + Bu, y = Cx + Du with
    /// linearly interpolated (first-order-hold) input; y[k] is evaluated at
    /// (x[k], u[k]).
    ///
    /// First-order hold keeps the effective input free of the half-sample
    /// delay a zero-order hold would introduce, so staged simulations agree
    /// with simulations of the series-composed system to second order in
    /// dt — the estimator self-consistency checks depend on that.
    pub fn simulate(&self, u: &Signal, x0: &[f64]) -> Result<Signal> {
        self.simulate_with(u, x0, |_, _| ())
    }

    /// As `simulate`, additionally invoking `tap(k, x)` with the state at
    /// every sample instant (used to expose state trajectories).
    pub fn simulate_with(
        &self,
        u: &Signal,
        x0: &[f64],
        mut tap: impl FnMut(usize, &DVector<f64>),
    ) -> Result<Signal> {
        if u.channels() != self.inputs() {
            return Err(Error::Dimension {
                context: "StateSpace::simulate",
                expected: format!("{} input channels", self.inputs()),
                got: format!("{}", u.channels()),
            });
        }
        let n = self.order();
        if x0.len() != n {
            return Err(Error::Dimension {
                context: "StateSpace::simulate",
                expected: format!("x0 of length {n}"),
                got: format!("{}", x0.len()),
            });
        }
        let dt = u.dt();
        let steps = u.len();
        let p = self.outputs();
        let mut data = vec![vec![0.0; steps]; p];

        let mut x = DVector::<f64>::from_column_slice(x0);
        let mut uk = DVector::<f64>::zeros(self.inputs());
        let mut u_next = DVector::<f64>::zeros(self.inputs());
        let mut bu0 = DVector::<f64>::zeros(n);
        let mut bum = DVector::<f64>::zeros(n);
        let mut bu1 = DVector::<f64>::zeros(n);
        let mut k1 = DVector::<f64>::zeros(n);
        let mut k2 = DVector::<f64>::zeros(n);
        let mut k3 = DVector::<f64>::zeros(n);
        let mut k4 = DVector::<f64>::zeros(n);
        let mut tmp = DVector::<f64>::zeros(n);
        let mut y = DVector::<f64>::zeros(p);

        for k in 0..steps {
            for (c, slot) in uk.iter_mut().enumerate() {
                *slot = u.channel(c)[k];
            }
            // y[k] = C x + D u
            y.gemv(1.0, &self.c, &x, 0.0);
            y.gemv(1.0, &self.d, &uk, 1.0);
            for (c, row) in data.iter_mut().enumerate() {
                row[k] = y[c];
            }
            tap(k, &x);
            if x.amax() > OVERFLOW_GUARD || !y.amax().is_finite() {
                return Err(Error::Divergence {
                    t: u.time(k),
                    guard: OVERFLOW_GUARD,
                });
            }
            if k + 1 == steps {
                break;
            }
            // First-order hold: Bu at the step start, midpoint and end.
            for (c, slot) in u_next.iter_mut().enumerate() {
                *slot = u.channel(c)[k + 1];
            }
            bu0.gemv(1.0, &self.b, &uk, 0.0);
            bu1.gemv(1.0, &self.b, &u_next, 0.0);
            bum.copy_from(&bu0);
            bum.axpy(0.5, &bu1, 0.5);
            k1.copy_from(&bu0);
            k1.gemv(1.0, &self.a, &x, 1.0);
            tmp.copy_from(&x);
            tmp.axpy(0.5 * dt, &k1, 1.0);
            k2.copy_from(&bum);
            k2.gemv(1.0, &self.a, &tmp, 1.0);
            tmp.copy_from(&x);
            tmp.axpy(0.5 * dt, &k2, 1.0);
            k3.copy_from(&bum);
            k3.gemv(1.0, &self.a, &tmp, 1.0);
            tmp.copy_from(&x);
            tmp.axpy(dt, &k3, 1.0);
            k4.copy_from(&bu1);
            k4.gemv(1.0, &self.a, &tmp, 1.0);
            x.axpy(dt / 6.0, &k1, 1.0);
            x.axpy(dt / 3.0, &k2, 1.0);
            x.axpy(dt / 3.0, &k3, 1.0);
            x.axpy(dt / 6.0, &k4, 1.0);
        }
        Signal::new(data, dt, u.t0())
    }

    /// Similarity-scale the realization with a balancing diagonal; the
    /// transfer function is unchanged, conditioning usually improves.
    pub fn balanced_scaling(&self) -> StateSpace {
        let mut a = self.a.clone();
        let d = linalg::balance(&mut a);
        let mut b = self.b.clone();
        let mut c = self.c.clone();
        for i in 0..self.order() {
            for j in 0..b.ncols() {
                b[(i, j)] /= d[i];
            }
            for j in 0..c.nrows() {
                c[(j, i)] *= d[i];
            }
        }
        StateSpace {
            a,
            b,
            c,
            d: self.d.clone(),
        }
    }
}
