//! Newmark-type predictor-corrector for the semi-discrete third-order system
//!
//! ```text
//! τ M u_ttt + M_α u_tt + (δ+τc²) K u_t + c² K u − M_μ u_t − M_η u = F + N(u)
//! ```
//!
//! with the jerk `u_ttt` at the new time level as the unknown of each step.
//! The predictor is a truncated Taylor expansion; the corrector adds the new
//! jerk with weights `a3`, `beta`, `gamma` on `u`, `u_t`, `u_tt`. On the
//! `(u_t, u_tt, u_ttt)` subsystem this is classical Newmark-β, and the update
//! is exact for cubic polynomials in time.
//!
//! Nonlinear terms `N` never enter the system matrix: they are evaluated from
//! the previous fixed-point iterate and treated as a load, so one
//! factorization serves every step of a run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{kuznetsov_rhs, westervelt_rhs, FemOperators};
use crate::medium::MediumParams;
use crate::sparse::{BandCholesky, CsrMatrix};

/// Nodal fields at one time level. Vectors span all mesh nodes; boundary
/// entries are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct AcousticState {
    pub t: f64,
    pub u: Vec<f64>,
    pub u_t: Vec<f64>,
    pub u_tt: Vec<f64>,
    pub u_ttt: Vec<f64>,
}

impl AcousticState {
    pub fn zeros(n_nodes: usize) -> Self {
        AcousticState {
            t: 0.0,
            u: vec![0.0; n_nodes],
            u_t: vec![0.0; n_nodes],
            u_tt: vec![0.0; n_nodes],
            u_ttt: vec![0.0; n_nodes],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.u.len()
    }

    pub fn is_finite(&self) -> bool {
        [&self.u, &self.u_t, &self.u_tt, &self.u_ttt]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        let sc = |v: &[f64]| v.iter().map(|x| s * x).collect();
        AcousticState {
            t: self.t,
            u: sc(&self.u),
            u_t: sc(&self.u_t),
            u_tt: sc(&self.u_tt),
            u_ttt: sc(&self.u_ttt),
        }
    }
}

fn default_a3() -> f64 {
    1.0 / 12.0
}
fn default_beta() -> f64 {
    0.25
}
fn default_gamma() -> f64 {
    0.5
}
fn default_cfl() -> f64 {
    0.1
}
fn default_fp_tol() -> f64 {
    1e-8
}
fn default_fp_max_iter() -> usize {
    50
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewmarkParams {
    #[serde(default = "default_a3")]
    pub a3: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_fp_tol")]
    pub fp_tol: f64,
    #[serde(default = "default_fp_max_iter")]
    pub fp_max_iter: usize,
}

impl Default for NewmarkParams {
    fn default() -> Self {
        NewmarkParams {
            a3: default_a3(),
            beta: default_beta(),
            gamma: default_gamma(),
            cfl: default_cfl(),
            fp_tol: default_fp_tol(),
            fp_max_iter: default_fp_max_iter(),
        }
    }
}

impl NewmarkParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma > 0.0
            && self.gamma <= 1.0
            && self.beta > 0.0
            && self.beta <= 0.5
            && self.a3 > 0.0
            && self.a3 <= 1.0 / 6.0
            && self.cfl > 0.0
            && self.fp_tol > 0.0
            && self.fp_max_iter > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "Newmark parameters out of range: {self:?}"
            )))
        }
    }
}

/// Δt = CFL·h / (c + √(δ̄/τ)), before rounding to the final time.
pub fn stable_dt(m: &MediumParams, delta_bar: f64, h: f64, p: &NewmarkParams) -> f64 {
    p.cfl * h / (m.c + (delta_bar / m.tau).sqrt())
}

/// Largest step not exceeding `dt_max` that divides `final_time` into an
/// integer number of steps.
pub fn time_grid(final_time: f64, dt_max: f64) -> Result<(usize, f64)> {
    if !(final_time > 0.0 && dt_max > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time grid needs T > 0 and dt > 0 (T={final_time}, dt={dt_max})"
        )));
    }
    let ratio = final_time / dt_max;
    let steps = if (ratio - ratio.round()).abs() <= 1e-9 * ratio {
        ratio.round()
    } else {
        ratio.ceil()
    };
    let steps = steps.max(1.0) as usize;
    Ok((steps, final_time / steps as f64))
}

/// Predicted fields at the new time level.
#[derive(Clone, Debug, PartialEq)]
pub struct Predicted {
    pub t: f64,
    pub u: Vec<f64>,
    pub u_t: Vec<f64>,
    pub u_tt: Vec<f64>,
}

pub fn newmark_predict(s: &AcousticState, dt: f64, p: &NewmarkParams) -> Predicted {
    let n = s.n_nodes();
    let (dt2, dt3) = (dt * dt, dt * dt * dt);
    let mut u = Vec::with_capacity(n);
    let mut u_t = Vec::with_capacity(n);
    let mut u_tt = Vec::with_capacity(n);
    for i in 0..n {
        let j = s.u_ttt[i];
        u.push(s.u[i] + dt * s.u_t[i] + 0.5 * dt2 * s.u_tt[i] + dt3 * (1.0 / 6.0 - p.a3) * j);
        u_t.push(s.u_t[i] + dt * s.u_tt[i] + dt2 * (0.5 - p.beta) * j);
        u_tt.push(s.u_tt[i] + dt * (1.0 - p.gamma) * j);
    }
    Predicted {
        t: s.t + dt,
        u,
        u_t,
        u_tt,
    }
}

pub fn newmark_correct(pred: &Predicted, j_new: &[f64], dt: f64, p: &NewmarkParams) -> AcousticState {
    let (wa, wb, wg) = (dt * dt * dt * p.a3, dt * dt * p.beta, dt * p.gamma);
    AcousticState {
        t: pred.t,
        u: pred.u.iter().zip(j_new).map(|(x, j)| x + wa * j).collect(),
        u_t: pred.u_t.iter().zip(j_new).map(|(x, j)| x + wb * j).collect(),
        u_tt: pred.u_tt.iter().zip(j_new).map(|(x, j)| x + wg * j).collect(),
        u_ttt: j_new.to_vec(),
    }
}

/// A coefficient of the generalized linear equation: constant or a nodal field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Constant(f64),
    Nodal(Vec<f64>),
}

impl Coefficient {
    fn is_zero(&self) -> bool {
        match self {
            Coefficient::Constant(c) => *c == 0.0,
            Coefficient::Nodal(v) => v.iter().all(|&x| x == 0.0),
        }
    }

    fn mass(&self, ops: &FemOperators) -> CsrMatrix {
        match self {
            Coefficient::Constant(c) => CsrMatrix::linear_combination(&[(*c, ops.mass())]),
            Coefficient::Nodal(w) => ops.weighted_mass(w),
        }
    }
}

/// (α, μ, η) of `τp_ttt + αp_tt − bΔp_t − c²Δp − μp_t − ηp = f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearCoefficients {
    pub alpha: Coefficient,
    pub mu: Coefficient,
    pub eta: Coefficient,
}

impl LinearCoefficients {
    /// α = α₀, μ = η = 0.
    pub fn mgt(alpha0: f64) -> Self {
        LinearCoefficients {
            alpha: Coefficient::Constant(alpha0),
            mu: Coefficient::Constant(0.0),
            eta: Coefficient::Constant(0.0),
        }
    }
}

/// Quadratic right-hand side of the nonlinear models.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Nonlinearity {
    Linear,
    /// ½(k p²)_tt
    Westervelt { k: f64 },
    /// ½(κ ψ_t² + σ|∇ψ|²)_t
    Kuznetsov { kappa: f64, sigma: f64 },
}

impl Nonlinearity {
    pub fn is_trivial(&self) -> bool {
        match *self {
            Nonlinearity::Linear => true,
            Nonlinearity::Westervelt { k } => k == 0.0,
            Nonlinearity::Kuznetsov { kappa, sigma } => kappa == 0.0 && sigma == 0.0,
        }
    }

    /// Interior load vector of the nonlinear term evaluated at `state`.
    pub fn rhs(&self, ops: &FemOperators, state: &AcousticState) -> Vec<f64> {
        match *self {
            Nonlinearity::Linear => vec![0.0; ops.n_interior()],
            Nonlinearity::Westervelt { k } => westervelt_rhs(ops, k, state),
            Nonlinearity::Kuznetsov { kappa, sigma } => kuznetsov_rhs(ops, kappa, sigma, state),
        }
    }
}

/// Factorized step matrix for one (Δt, medium, coefficients) combination.
#[derive(Clone, Debug)]
pub struct StepOperator {
    dt: f64,
    params: NewmarkParams,
    b: f64,
    c2: f64,
    m_alpha: CsrMatrix,
    m_mu: Option<CsrMatrix>,
    m_eta: Option<CsrMatrix>,
    matrix: CsrMatrix,
    factor: BandCholesky,
}

impl StepOperator {
    pub fn new(
        ops: &FemOperators,
        m: &MediumParams,
        coeffs: &LinearCoefficients,
        dt: f64,
        params: &NewmarkParams,
    ) -> Result<Self> {
        m.validate()?;
        params.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let (b, c2) = (m.b(), m.c2());
        let m_alpha = coeffs.alpha.mass(ops);
        let m_mu = (!coeffs.mu.is_zero()).then(|| coeffs.mu.mass(ops));
        let m_eta = (!coeffs.eta.is_zero()).then(|| coeffs.eta.mass(ops));
        let (wg, wb, wa) = (dt * params.gamma, dt * dt * params.beta, dt * dt * dt * params.a3);

        let mut terms: Vec<(f64, &CsrMatrix)> = vec![
            (m.tau, ops.mass()),
            (wg, &m_alpha),
            (wb * b + wa * c2, ops.stiffness()),
        ];
        if let Some(mm) = &m_mu {
            terms.push((-wb, mm));
        }
        if let Some(me) = &m_eta {
            terms.push((-wa, me));
        }
        let matrix = CsrMatrix::linear_combination(&terms);
        let factor = BandCholesky::factor(&matrix)?;
        Ok(StepOperator {
            dt,
            params: *params,
            b,
            c2,
            m_alpha,
            m_mu,
            m_eta,
            matrix,
            factor,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn params(&self) -> &NewmarkParams {
        &self.params
    }

    /// The assembled (interior) step matrix.
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Interior vector M_α u_tt + (bK − M_μ) u_t + (c²K − M_η) u.
    fn operator_residual(&self, ops: &FemOperators, u: &[f64], u_t: &[f64], u_tt: &[f64]) -> Vec<f64> {
        let mesh = ops.mesh();
        let (u, u_t, u_tt) = (mesh.restrict(u), mesh.restrict(u_t), mesh.restrict(u_tt));
        let mut r = self.m_alpha.mul_vec(&u_tt);
        ops.stiffness().mul_vec_add(self.b, &u_t, &mut r);
        ops.stiffness().mul_vec_add(self.c2, &u, &mut r);
        if let Some(mm) = &self.m_mu {
            mm.mul_vec_add(-1.0, &u_t, &mut r);
        }
        if let Some(me) = &self.m_eta {
            me.mul_vec_add(-1.0, &u, &mut r);
        }
        r
    }

    /// Solves for the new jerk given the predicted state and the total load
    /// (source plus frozen nonlinear term) at the new time level.
    pub fn solve_jerk(&self, ops: &FemOperators, pred: &Predicted, load: &[f64]) -> Vec<f64> {
        let mut rhs = self.operator_residual(ops, &pred.u, &pred.u_t, &pred.u_tt);
        for (r, l) in rhs.iter_mut().zip(load) {
            *r = l - *r;
        }
        self.factor.solve_in_place(&mut rhs);
        ops.mesh().extend(&rhs)
    }

    /// One linear step. `load` is the interior load vector at t + Δt.
    pub fn step_linear(&self, ops: &FemOperators, s: &AcousticState, load: &[f64]) -> AcousticState {
        let pred = newmark_predict(s, self.dt, &self.params);
        let j = self.solve_jerk(ops, &pred, load);
        newmark_correct(&pred, &j, self.dt, &self.params)
    }

    /// One step of the nonlinear model, resolving the quadratic term by
    /// fixed-point iteration. Returns the state and the number of linear
    /// solves used.
    pub fn step_nonlinear(
        &self,
        ops: &FemOperators,
        nl: &Nonlinearity,
        s: &AcousticState,
        load: &[f64],
    ) -> Result<(AcousticState, usize)> {
        if nl.is_trivial() {
            return Ok((self.step_linear(ops, s, load), 1));
        }
        let mesh = ops.mesh();
        let pred = newmark_predict(s, self.dt, &self.params);
        let mut iterate = AcousticState {
            t: pred.t,
            u: pred.u.clone(),
            u_t: pred.u_t.clone(),
            u_tt: pred.u_tt.clone(),
            u_ttt: s.u_ttt.clone(),
        };
        let mut ratio = f64::INFINITY;
        for it in 1..=self.params.fp_max_iter {
            let mut total = nl.rhs(ops, &iterate);
            for (t, l) in total.iter_mut().zip(load) {
                *t += l;
            }
            let j = self.solve_jerk(ops, &pred, &total);
            let next = newmark_correct(&pred, &j, self.dt, &self.params);
            if !next.is_finite() {
                return Err(Error::NoConvergence {
                    iterations: it,
                    time: pred.t,
                    ratio: f64::INFINITY,
                });
            }
            let d_tt: Vec<f64> = next.u_tt.iter().zip(&iterate.u_tt).map(|(a, b)| a - b).collect();
            let d_t: Vec<f64> = next.u_t.iter().zip(&iterate.u_t).map(|(a, b)| a - b).collect();
            let diff = ops.mass_norm(&mesh.restrict(&d_tt)) + ops.stiffness_norm(&mesh.restrict(&d_t));
            let scale = ops.mass_norm(&mesh.restrict(&next.u_tt)) + ops.stiffness_norm(&mesh.restrict(&next.u_t));
            ratio = if scale > 0.0 { diff / scale } else { diff };
            if !ratio.is_finite() || !scale.is_finite() {
                return Err(Error::NoConvergence {
                    iterations: it,
                    time: pred.t,
                    ratio: f64::INFINITY,
                });
            }
            iterate = next;
            if it > 1 && (diff == 0.0 || ratio <= self.params.fp_tol) {
                return Ok((iterate, it));
            }
        }
        Err(Error::NoConvergence {
            iterations: self.params.fp_max_iter,
            time: pred.t,
            ratio,
        })
    }
}

/// Linear step with a fresh factorization; prefer [`StepOperator`] when
/// stepping repeatedly.
pub fn step_linear(
    ops: &FemOperators,
    m: &MediumParams,
    coeffs: &LinearCoefficients,
    load: &[f64],
    s: &AcousticState,
    dt: f64,
    p: &NewmarkParams,
) -> Result<AcousticState> {
    Ok(StepOperator::new(ops, m, coeffs, dt, p)?.step_linear(ops, s, load))
}

/// Jerk at t = 0 from the equation itself:
/// τM u_ttt = F + N − M_α u_tt − (bK − M_μ) u_t − (c²K − M_η) u.
pub fn initial_jerk(
    ops: &FemOperators,
    m: &MediumParams,
    coeffs: &LinearCoefficients,
    nl: &Nonlinearity,
    s: &AcousticState,
    load: &[f64],
) -> Result<Vec<f64>> {
    let tau_mass = CsrMatrix::linear_combination(&[(m.tau, ops.mass())]);
    let factor = BandCholesky::factor(&tau_mass)?;
    let mesh = ops.mesh();
    let (u, u_t, u_tt) = (mesh.restrict(&s.u), mesh.restrict(&s.u_t), mesh.restrict(&s.u_tt));
    let mut rhs = load.to_vec();
    if !nl.is_trivial() {
        for (r, n) in rhs.iter_mut().zip(nl.rhs(ops, s)) {
            *r += n;
        }
    }
    coeffs.alpha.mass(ops).mul_vec_add(-1.0, &u_tt, &mut rhs);
    ops.stiffness().mul_vec_add(-m.b(), &u_t, &mut rhs);
    ops.stiffness().mul_vec_add(-m.c2(), &u, &mut rhs);
    if !coeffs.mu.is_zero() {
        coeffs.mu.mass(ops).mul_vec_add(1.0, &u_t, &mut rhs);
    }
    if !coeffs.eta.is_zero() {
        coeffs.eta.mass(ops).mul_vec_add(1.0, &u, &mut rhs);
    }
    factor.solve_in_place(&mut rhs);
    Ok(mesh.extend(&rhs))
}

/// Scalar modal equation `τa''' + αa'' + bλ a' + c²λ a = 0` written as
/// `τa''' + α a'' + damping·a' + stiffness·a = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModalOde {
    pub tau: f64,
    pub alpha: f64,
    pub damping: f64,
    pub stiffness: f64,
}

impl ModalOde {
    /// Mode of the MGT equation for Laplacian eigenvalue `lambda`.
    pub fn mgt(m: &MediumParams, lambda: f64) -> Self {
        ModalOde {
            tau: m.tau,
            alpha: m.alpha0,
            damping: m.b() * lambda,
            stiffness: m.c2() * lambda,
        }
    }

    /// Integrates from `(a, a', a'')` at t = 0 over `steps` steps of size
    /// `dt` with the Newmark predictor-corrector, returning `(a, a', a'')`
    /// at every time level including t = 0.
    pub fn integrate(&self, init: [f64; 3], dt: f64, steps: usize, p: &NewmarkParams) -> Vec<[f64; 3]> {
        let [a0, a1, a2] = init;
        let j0 = -(self.alpha * a2 + self.damping * a1 + self.stiffness * a0) / self.tau;
        let mut s = AcousticState {
            t: 0.0,
            u: vec![a0],
            u_t: vec![a1],
            u_tt: vec![a2],
            u_ttt: vec![j0],
        };
        let (wg, wb, wa) = (dt * p.gamma, dt * dt * p.beta, dt * dt * dt * p.a3);
        let lhs = self.tau + self.alpha * wg + self.damping * wb + self.stiffness * wa;
        let mut out = Vec::with_capacity(steps + 1);
        out.push(init);
        for _ in 0..steps {
            let pred = newmark_predict(&s, dt, p);
            let r = self.alpha * pred.u_tt[0] + self.damping * pred.u_t[0] + self.stiffness * pred.u[0];
            s = newmark_correct(&pred, &[-r / lhs], dt, p);
            out.push([s.u[0], s.u_t[0], s.u_tt[0]]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::energy;
    use crate::fem::assemble;
    use crate::mesh::{interval_mesh, square_triangle_mesh};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit_medium(delta: f64) -> MediumParams {
        MediumParams {
            tau: 0.1,
            c: 1.0,
            delta,
            rho: 1.0,
            b_over_a: 0.0,
            alpha0: 1.0,
        }
    }

    #[test]
    fn stable_dt_examples() {
        let p = NewmarkParams::default();
        let m = MediumParams::water(1.5e-5, 0.0);
        let h = 0.4 / 600.0;
        let dt = stable_dt(&m, 1.0, h, &p);
        assert_relative_eq!(dt, 0.1 * h / (1500.0 + (1.0f64 / 1.5e-5).sqrt()), max_relative = 1e-15);
        assert_relative_eq!(dt, 3.792e-8, max_relative = 1e-3);
        assert_eq!(stable_dt(&m, 0.0, h, &p), 0.1 * h / 1500.0);
        let dt2 = stable_dt(&m, 1e-2, 0.01, &p);
        assert_relative_eq!(dt2, 0.1 * 0.01 / (1500.0 + (1e-2f64 / 1.5e-5).sqrt()), max_relative = 1e-15);
        assert_relative_eq!(dt2, 6.554e-7, max_relative = 1e-3);
    }

    #[test]
    fn time_grid_rounds_down_the_step() {
        let (n, dt) = time_grid(7e-5, 3.9e-8).unwrap();
        assert!(dt <= 3.9e-8);
        assert_relative_eq!(n as f64 * dt, 7e-5, max_relative = 1e-14);
        assert_eq!(time_grid(1.0, 0.25).unwrap(), (4, 0.25));
        assert!(time_grid(0.0, 0.1).is_err());
    }

    fn scalar_state(v: [f64; 4]) -> AcousticState {
        AcousticState {
            t: 0.0,
            u: vec![v[0]],
            u_t: vec![v[1]],
            u_tt: vec![v[2]],
            u_ttt: vec![v[3]],
        }
    }

    #[test]
    fn predictor_examples() {
        let p = NewmarkParams::default();
        let pr = newmark_predict(&scalar_state([1.0, 0.0, 0.0, 1.0]), 1.0, &p);
        assert_relative_eq!(pr.u[0], 1.0 + (1.0 / 6.0 - 1.0 / 12.0), max_relative = 1e-15);
        assert_relative_eq!(pr.u[0], 1.08333, max_relative = 1e-5);
        assert_eq!(pr.u_t[0], 0.25);
        assert_eq!(pr.u_tt[0], 0.5);

        let s = scalar_state([0.3, -1.0, 2.0, 0.0]);
        let dt = 0.1;
        let pr = newmark_predict(&s, dt, &p);
        assert_relative_eq!(pr.u[0], 0.3 - 0.1 + 0.5 * 0.01 * 2.0, max_relative = 1e-15);
        assert_relative_eq!(pr.u_t[0], -1.0 + 0.2, max_relative = 1e-15);
        assert_eq!(pr.u_tt[0], 2.0);

        let pr = newmark_predict(&s, 0.0, &p);
        assert_eq!((pr.u[0], pr.u_t[0], pr.u_tt[0]), (0.3, -1.0, 2.0));
    }

    #[test]
    fn corrector_with_zero_jerk_is_predictor() {
        let p = NewmarkParams::default();
        let pr = newmark_predict(&scalar_state([1.0, 2.0, 3.0, 4.0]), 0.01, &p);
        let c = newmark_correct(&pr, &[0.0], 0.01, &p);
        assert_eq!((c.u[0], c.u_t[0], c.u_tt[0], c.u_ttt[0]), (pr.u[0], pr.u_t[0], pr.u_tt[0], 0.0));
    }

    #[test]
    fn exact_on_cubics() {
        // u(t) = 1 + 2t − t² + 0.5t³, u''' ≡ 3.
        let p = NewmarkParams::default();
        let u = |t: f64| [1.0 + 2.0 * t - t * t + 0.5 * t.powi(3), 2.0 - 2.0 * t + 1.5 * t * t, -2.0 + 3.0 * t];
        let s0 = u(0.0);
        let dt = 0.37;
        let pr = newmark_predict(&scalar_state([s0[0], s0[1], s0[2], 3.0]), dt, &p);
        let c = newmark_correct(&pr, &[3.0], dt, &p);
        let e = u(dt);
        assert_relative_eq!(c.u[0], e[0], max_relative = 1e-14);
        assert_relative_eq!(c.u_t[0], e[1], max_relative = 1e-14);
        assert_relative_eq!(c.u_tt[0], e[2], max_relative = 1e-14);
    }

    /// Taylor series of u''' = −u to high order, used as the reference solution.
    fn taylor_reference(init: [f64; 3], t: f64) -> [f64; 3] {
        // derivatives cycle: u⁽ᵏ⁺³⁾ = −u⁽ᵏ⁾
        let mut d = vec![init[0], init[1], init[2]];
        for k in 3..60 {
            let v = -d[k - 3];
            d.push(v);
        }
        let mut out = [0.0; 3];
        for (shift, o) in out.iter_mut().enumerate() {
            let mut term = 1.0;
            let mut sum = 0.0;
            for k in 0..50 {
                sum += d[k + shift] * term;
                term *= t / (k + 1) as f64;
            }
            *o = sum;
        }
        out
    }

    #[test]
    fn one_step_of_jerk_oscillator() {
        let ode = ModalOde {
            tau: 1.0,
            alpha: 0.0,
            damping: 0.0,
            stiffness: 1.0,
        };
        let traj = ode.integrate([1.0, 0.0, 0.0], 0.01, 1, &NewmarkParams::default());
        let exact = taylor_reference([1.0, 0.0, 0.0], 0.01);
        for k in 0..3 {
            assert!((traj[1][k] - exact[k]).abs() <= 1e-8, "component {k}: {} vs {}", traj[1][k], exact[k]);
        }
    }

    #[test]
    fn scalar_integrator_is_second_order() {
        let ode = ModalOde {
            tau: 1.0,
            alpha: 0.0,
            damping: 0.0,
            stiffness: 1.0,
        };
        let p = NewmarkParams::default();
        let exact = taylor_reference([1.0, 0.5, -0.2], 2.0);
        let mut errs = Vec::new();
        for k in 0..4 {
            let steps = 20 << k;
            let traj = ode.integrate([1.0, 0.5, -0.2], 2.0 / steps as f64, steps, &p);
            errs.push((traj[steps][0] - exact[0]).abs());
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.9, "{errs:?}");
        }
    }

    fn zero_load(ops: &FemOperators) -> Vec<f64> {
        vec![0.0; ops.n_interior()]
    }

    #[test]
    fn zero_data_stays_zero() {
        let mesh = interval_mesh(1.0, 20).unwrap();
        let ops = assemble(&mesh);
        let m = unit_medium(0.01);
        let op = StepOperator::new(&ops, &m, &LinearCoefficients::mgt(1.0), 0.01, &NewmarkParams::default()).unwrap();
        let mut s = AcousticState::zeros(mesh.n_nodes());
        for _ in 0..20 {
            s = op.step_linear(&ops, &s, &zero_load(&ops));
        }
        assert!(s.u.iter().chain(&s.u_t).chain(&s.u_tt).chain(&s.u_ttt).all(|&v| v == 0.0));
        assert_relative_eq!(s.t, 0.2, max_relative = 1e-12);
    }

    #[test]
    fn single_node_step_matches_scalar_modal_step() {
        let mesh = interval_mesh(1.0, 2).unwrap();
        let ops = assemble(&mesh);
        let lambda_h = ops.stiffness().get(0, 0) / ops.mass().get(0, 0);
        assert_relative_eq!(lambda_h, 12.0, max_relative = 1e-14);

        let m = unit_medium(0.05);
        let p = NewmarkParams::default();
        let coeffs = LinearCoefficients::mgt(1.0);
        let dt = 0.02;
        let mut s = AcousticState::zeros(3);
        s.u[1] = 1.0;
        s.u_t[1] = -0.5;
        s.u_tt[1] = 0.25;
        s.u_ttt = initial_jerk(&ops, &m, &coeffs, &Nonlinearity::Linear, &s, &[0.0]).unwrap();
        let op = StepOperator::new(&ops, &m, &coeffs, dt, &p).unwrap();
        let mut fem = vec![[s.u[1], s.u_t[1], s.u_tt[1]]];
        for _ in 0..10 {
            s = op.step_linear(&ops, &s, &[0.0]);
            fem.push([s.u[1], s.u_t[1], s.u_tt[1]]);
        }
        let reference = ModalOde::mgt(&m, lambda_h).integrate([1.0, -0.5, 0.25], dt, 10, &p);
        for (a, b) in fem.iter().zip(&reference) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 1e-10 * (1.0 + b[k].abs()));
            }
        }
    }

    fn sine_mode_state(mesh: &crate::mesh::Mesh, ops: &FemOperators, m: &MediumParams) -> AcousticState {
        let mut s = AcousticState::zeros(mesh.n_nodes());
        s.u = mesh.sample(|x| (PI * x[0]).sin());
        mesh.clamp_boundary(&mut s.u);
        s.u_t = s.u.iter().map(|v| -0.3 * v).collect();
        s.u_ttt = initial_jerk(ops, m, &LinearCoefficients::mgt(1.0), &Nonlinearity::Linear, &s, &zero_load(ops)).unwrap();
        s
    }

    #[test]
    fn z_energy_is_nearly_constant_without_diffusivity() {
        let mesh = interval_mesh(1.0, 50).unwrap();
        let ops = assemble(&mesh);
        let m = unit_medium(0.0);
        let p = NewmarkParams::default();
        let dt = stable_dt(&m, 0.0, mesh.h(), &p);
        let op = StepOperator::new(&ops, &m, &LinearCoefficients::mgt(1.0), dt, &p).unwrap();
        let mut s = sine_mode_state(&mesh, &ops, &m);
        let e0 = energy(&ops, &m, &s).e_z;
        for _ in 0..100 {
            s = op.step_linear(&ops, &s, &zero_load(&ops));
            let e = energy(&ops, &m, &s).e_z;
            assert!((e - e0).abs() <= 0.05 * e0, "{e} vs {e0}");
        }
    }

    #[test]
    fn initial_jerk_satisfies_equation() {
        let mesh = square_triangle_mesh(1.0, 0.125).unwrap();
        let ops = assemble(&mesh);
        let m = unit_medium(0.02);
        let coeffs = LinearCoefficients::mgt(1.0);
        let mut s = AcousticState::zeros(mesh.n_nodes());
        s.u = mesh.sample(|x| (PI * x[0]).sin() * (PI * x[1]).sin());
        s.u_tt = mesh.sample(|x| x[0] * x[1] * (1.0 - x[0]) * (1.0 - x[1]));
        mesh.clamp_boundary(&mut s.u);
        mesh.clamp_boundary(&mut s.u_tt);
        let load = crate::fem::load_vector(&ops, &mesh.sample(|x| x[0]));
        s.u_ttt = initial_jerk(&ops, &m, &coeffs, &Nonlinearity::Linear, &s, &load).unwrap();
        let j = mesh.restrict(&s.u_ttt);
        let mut r = ops.mass().mul_vec(&j);
        r.iter_mut().for_each(|v| *v *= m.tau);
        ops.mass().mul_vec_add(1.0, &mesh.restrict(&s.u_tt), &mut r);
        ops.stiffness().mul_vec_add(m.b(), &mesh.restrict(&s.u_t), &mut r);
        ops.stiffness().mul_vec_add(m.c2(), &mesh.restrict(&s.u), &mut r);
        let scale = load.iter().map(|v| v * v).sum::<f64>().sqrt();
        let res = r.iter().zip(&load).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(res <= 1e-10 * scale);
    }

    #[test]
    fn superposition_of_linear_runs() {
        let mesh = interval_mesh(1.0, 30).unwrap();
        let ops = assemble(&mesh);
        let m = unit_medium(0.01);
        let p = NewmarkParams::default();
        let op = StepOperator::new(&ops, &m, &LinearCoefficients::mgt(1.0), 0.005, &p).unwrap();
        let mut a = AcousticState::zeros(mesh.n_nodes());
        a.u = mesh.sample(|x| (PI * x[0]).sin());
        let mut b = AcousticState::zeros(mesh.n_nodes());
        b.u_t = mesh.sample(|x| (3.0 * PI * x[0]).sin());
        mesh.clamp_boundary(&mut b.u_t);
        let la = crate::fem::load_vector(&ops, &mesh.sample(|x| x[0] * x[0]));
        let lb = crate::fem::load_vector(&ops, &mesh.sample(|x| 1.0 - x[0]));
        let lab: Vec<f64> = la.iter().zip(&lb).map(|(x, y)| 2.0 * x - y).collect();
        let mut ab = AcousticState::zeros(mesh.n_nodes());
        for i in 0..mesh.n_nodes() {
            ab.u[i] = 2.0 * a.u[i] - b.u[i];
            ab.u_t[i] = 2.0 * a.u_t[i] - b.u_t[i];
        }
        for _ in 0..50 {
            a = op.step_linear(&ops, &a, &la);
            b = op.step_linear(&ops, &b, &lb);
            ab = op.step_linear(&ops, &ab, &lab);
        }
        let scale = ab.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..mesh.n_nodes() {
            assert!((2.0 * a.u[i] - b.u[i] - ab.u[i]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn linear_model_fixed_point_is_a_single_linear_step() {
        let mesh = interval_mesh(1.0, 20).unwrap();
        let ops = assemble(&mesh);
        let m = unit_medium(0.0);
        let p = NewmarkParams::default();
        let op = StepOperator::new(&ops, &m, &LinearCoefficients::mgt(1.0), 0.01, &p).unwrap();
        let s = sine_mode_state(&mesh, &ops, &m);
        let lin = op.step_linear(&ops, &s, &zero_load(&ops));
        for nl in [
            Nonlinearity::Linear,
            Nonlinearity::Westervelt { k: 0.0 },
            Nonlinearity::Kuznetsov { kappa: 0.0, sigma: 0.0 },
        ] {
            let (st, its) = op.step_nonlinear(&ops, &nl, &s, &zero_load(&ops)).unwrap();
            assert_eq!(its, 1);
            assert_eq!(st, lin);
        }
    }

    #[test]
    fn step_nonlinear_converges_for_small_amplitude() {
        let mesh = interval_mesh(1.0, 40).unwrap();
        let ops = assemble(&mesh);
        let m = unit_medium(0.01);
        let p = NewmarkParams::default();
        let op = StepOperator::new(&ops, &m, &LinearCoefficients::mgt(1.0), 0.002, &p).unwrap();
        let s = sine_mode_state(&mesh, &ops, &m);
        let (st, its) = op
            .step_nonlinear(&ops, &Nonlinearity::Westervelt { k: 0.1 }, &s, &zero_load(&ops))
            .unwrap();
        assert!(its >= 2 && its <= 10, "{its}");
        assert!(st.is_finite());
    }

    #[test]
    fn step_nonlinear_reports_divergence() {
        let mesh = interval_mesh(1.0, 40).unwrap();
        let ops = assemble(&mesh);
        let m = unit_medium(0.01);
        let p = NewmarkParams::default();
        let op = StepOperator::new(&ops, &m, &LinearCoefficients::mgt(1.0), 0.002, &p).unwrap();
        let s = sine_mode_state(&mesh, &ops, &m).scaled(1e6);
        let err = op
            .step_nonlinear(&ops, &Nonlinearity::Westervelt { k: 1.0 }, &s, &zero_load(&ops))
            .unwrap_err();
        assert!(matches!(err, Error::NoConvergence { .. }));
    }

    #[test]
    fn runs_are_bitwise_deterministic() {
        let run = || {
            let mesh = square_triangle_mesh(1.0, 0.125).unwrap();
            let ops = assemble(&mesh);
            let m = unit_medium(0.01);
            let p = NewmarkParams::default();
            let op = StepOperator::new(&ops, &m, &LinearCoefficients::mgt(1.0), 0.01, &p).unwrap();
            let mut s = AcousticState::zeros(mesh.n_nodes());
            s.u = mesh.sample(|x| (PI * x[0]).sin() * (PI * x[1]).sin());
            mesh.clamp_boundary(&mut s.u);
            for _ in 0..10 {
                s = op.step_nonlinear(&ops, &Nonlinearity::Kuznetsov { kappa: 0.3, sigma: 2.0 }, &s, &zero_load(&ops)).unwrap().0;
            }
            s
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn nodal_coefficients_match_constant_ones() {
        let mesh = interval_mesh(1.0, 10).unwrap();
        let ops = assemble(&mesh);
        let m = unit_medium(0.01);
        let p = NewmarkParams::default();
        let n = mesh.n_nodes();
        let c1 = LinearCoefficients {
            alpha: Coefficient::Constant(0.8),
            mu: Coefficient::Constant(0.1),
            eta: Coefficient::Constant(-0.2),
        };
        let c2 = LinearCoefficients {
            alpha: Coefficient::Nodal(vec![0.8; n]),
            mu: Coefficient::Nodal(vec![0.1; n]),
            eta: Coefficient::Nodal(vec![-0.2; n]),
        };
        let s = sine_mode_state(&mesh, &ops, &m);
        let a = step_linear(&ops, &m, &c1, &zero_load(&ops), &s, 0.01, &p).unwrap();
        let b = step_linear(&ops, &m, &c2, &zero_load(&ops), &s, 0.01, &p).unwrap();
        for (x, y) in a.u.iter().zip(&b.u) {
            assert!((x - y).abs() <= 1e-13);
        }
    }

    proptest! {
        #[test]
        fn step_matrix_is_spd_for_unit_alpha(delta in 0.0f64..10.0, log_dt in -9.0f64..-1.0) {
            let mesh = square_triangle_mesh(1.0, 0.25).unwrap();
            let ops = assemble(&mesh);
            let m = MediumParams::water(1.5e-5, delta);
            let op = StepOperator::new(&ops, &m, &LinearCoefficients::mgt(1.0), 10f64.powf(log_dt), &NewmarkParams::default());
            prop_assert!(op.is_ok());
            prop_assert!(op.unwrap().matrix().asymmetry() <= 1e-13);
        }
    }
}
