//! Convergence studies and consistency checks against closed-form
//! solutions; used by the `validate` command and the acceptance suite.

use std::f64::consts::PI;

use crate::analysis::{fit_points, Cubic, ModalSolution};
use crate::error::Result;
use crate::integrator::{AcousticState, ModalOde, NewmarkParams};
use crate::medium::MediumParams;
use crate::models::{
    kuznetsov_scenario, mode_1d_scenario, westervelt_potential_scenario, ProblemSpec,
};
use crate::simulation::Simulation;

/// Error of one refinement level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Level {
    pub h: f64,
    pub dt: f64,
    pub error: f64,
}

/// Observed order log2(e_k / e_{k+1}) between consecutive levels.
pub fn observed_orders(levels: &[Level]) -> Vec<f64> {
    levels.windows(2).map(|w| (w[0].error / w[1].error).log2()).collect()
}

/// Least-squares order of error against step size.
pub fn fitted_order(levels: &[Level], by_dt: bool) -> Result<f64> {
    let pts: Vec<(f64, f64)> = levels
        .iter()
        .map(|l| (if by_dt { l.dt } else { l.h }, l.error))
        .collect();
    Ok(fit_points(&pts)?.slope)
}

/// Linear MGT with a single Dirichlet eigenmode on (0, `length`): relative
/// sup-in-time discrete L² error of the FEM solution against the modal
/// solution, for `n0·2^k` elements and Δt = `courant`·h/c.
pub fn modal_fem_study(
    medium: &MediumParams,
    length: f64,
    final_time: f64,
    n0: usize,
    levels: usize,
    courant: f64,
) -> Result<Vec<Level>> {
    let lambda = (PI / length).powi(2);
    let sol = ModalSolution::new(Cubic::mgt(medium, lambda), [1.0, 0.0, 0.0])?;
    let mut out = Vec::with_capacity(levels);
    for k in 0..levels {
        let n = n0 << k;
        let spec = mode_1d_scenario(*medium, length, n, 1, final_time);
        let h = length / n as f64;
        let sim = Simulation::with_max_dt(&spec, &NewmarkParams::default(), courant * h / medium.c)?;
        let ops = sim.ops();
        let mesh = ops.mesh();
        let shape = mesh.restrict(&mesh.sample(|x| (PI * x[0] / length).sin()));
        let shape_norm = ops.mass_norm(&shape);
        let (mut sup_err, mut sup_ref) = (0.0f64, 0.0f64);
        sim.run(|s| {
            let a = sol.eval(s.t).a;
            let diff: Vec<f64> = mesh.restrict(&s.u).iter().zip(&shape).map(|(u, p)| u - a * p).collect();
            sup_err = sup_err.max(ops.mass_norm(&diff));
            sup_ref = sup_ref.max(a.abs() * shape_norm);
            Ok(())
        })?;
        out.push(Level {
            h,
            dt: sim.dt(),
            error: sup_err / sup_ref,
        });
    }
    Ok(out)
}

/// Scalar modal ODE integrated with the Newmark scheme against its
/// closed-form solution: error in (a, a', a'') at `final_time`, relative to
/// the size of the exact state, for `steps0·2^k` steps.
pub fn integrator_study(ode: &ModalOde, init: [f64; 3], final_time: f64, steps0: usize, levels: usize) -> Result<Vec<Level>> {
    let cubic = Cubic {
        c3: ode.tau,
        c2: ode.alpha,
        c1: ode.damping,
        c0: ode.stiffness,
    };
    let exact = ModalSolution::new(cubic, init)?.eval(final_time);
    let w = ode.stiffness.max(ode.damping / ode.tau).sqrt().max(1.0);
    let scale = exact.a.abs() + exact.a_t.abs() / w + exact.a_tt.abs() / (w * w);
    let mut out = Vec::with_capacity(levels);
    for k in 0..levels {
        let steps = steps0 << k;
        let dt = final_time / steps as f64;
        let last = *ode.integrate(init, dt, steps, &NewmarkParams::default()).last().unwrap();
        let e = (last[0] - exact.a).abs() + (last[1] - exact.a_t).abs() / w + (last[2] - exact.a_tt).abs() / (w * w);
        out.push(Level {
            h: 0.0,
            dt,
            error: e / scale,
        });
    }
    Ok(out)
}

/// Full state trajectory of a run.
pub fn trajectory(spec: &ProblemSpec, delta_bar: f64) -> Result<Vec<AcousticState>> {
    let sim = Simulation::new(spec, &NewmarkParams::default(), delta_bar)?;
    let mut states = Vec::with_capacity(sim.steps() + 1);
    sim.run(|s| {
        states.push(s.clone());
        Ok(())
    })?;
    Ok(states)
}

/// max |a − b| / max |b| over all fields and time levels.
pub fn max_relative_difference(a: &[AcousticState], b: &[AcousticState]) -> f64 {
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        for (fx, fy) in [(&x.u, &y.u), (&x.u_t, &y.u_t), (&x.u_tt, &y.u_tt)] {
            for (p, q) in fx.iter().zip(fy) {
                num = num.max((p - q).abs());
                den = den.max(q.abs());
            }
        }
    }
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    num / den
}

/// Kuznetsov with σ = 0 and the mapped κ against the Westervelt potential
/// form; returns the relative trajectory difference.
pub fn kuznetsov_westervelt_difference(tau: f64, final_time: f64) -> Result<f64> {
    let mut w = westervelt_potential_scenario(0.0, tau);
    w.final_time = final_time;
    let mut k = kuznetsov_scenario(0.0, tau, 0.0, w.nonlin.kappa);
    k.final_time = final_time;
    Ok(max_relative_difference(&trajectory(&k, 0.0)?, &trajectory(&w, 0.0)?))
}

/// Whether the κ = σ = 0 Kuznetsov run equals the linear run bitwise.
pub fn kuznetsov_linear_identical(tau: f64, final_time: f64) -> Result<bool> {
    let mut k = kuznetsov_scenario(0.0, tau, 0.0, 0.0);
    k.final_time = final_time;
    let l = k.clone().linearized();
    Ok(trajectory(&k, 0.0)? == trajectory(&l, 0.0)?)
}

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Quick versions of the oracle and consistency checks.
pub fn quick_checks() -> Vec<Check> {
    let mut out = Vec::new();
    let mut push = |name: &'static str, r: Result<(bool, String)>| {
        let (passed, detail) = r.unwrap_or_else(|e| (false, e.to_string()));
        out.push(Check { name, passed, detail });
    };

    push("modal oracle vs FEM", (|| {
        let m = MediumParams::water(1.5e-5, 1e-3);
        let lv = modal_fem_study(&m, 1.0, 1e-3, 16, 3, 1.0)?;
        let ord = observed_orders(&lv);
        let min = ord.iter().copied().fold(f64::INFINITY, f64::min);
        Ok((min >= 1.9, format!("orders {ord:.3?}, finest error {:.3e}", lv.last().unwrap().error)))
    })());

    push("Newmark order on modal ODE", (|| {
        let ode = ModalOde::mgt(&MediumParams::water(1.5e-5, 1e-3), PI * PI);
        let lv = integrator_study(&ode, [1.0, 0.0, 0.0], 1e-3, 40, 4)?;
        let ord = fitted_order(&lv, true)?;
        Ok((ord >= 1.9, format!("order {ord:.3}")))
    })());

    push("Kuznetsov sigma=0 vs Westervelt potential", (|| {
        let d = kuznetsov_westervelt_difference(1.5e-5, 2e-6)?;
        Ok((d <= 1e-10, format!("relative difference {d:.3e}")))
    })());

    push("Kuznetsov kappa=sigma=0 vs linear", (|| {
        let same = kuznetsov_linear_identical(1.5e-5, 2e-6)?;
        Ok((same, format!("bitwise equal: {same}")))
    })());

    out
}
