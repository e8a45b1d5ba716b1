//! Energies, energy-norm errors, convergence-rate fits and the closed-form
//! modal solution of the linear MGT equation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::FemOperators;
use crate::integrator::AcousticState;
use crate::medium::MediumParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub t: f64,
    /// E[p] = τ²/2‖p_tt‖² + τ²c²/2‖∇p_t‖² + c²/2‖∇p‖²
    pub e_full: f64,
    /// Ẽ[z] = ½‖z_t‖² + c²/2‖∇z‖² for z = τp_t + p
    pub e_z: f64,
    /// ‖p_tt‖_M
    pub norm_u_tt: f64,
    /// ‖∇p_t‖ = ‖p_t‖_K
    pub norm_grad_u_t: f64,
}

pub fn energy(ops: &FemOperators, m: &MediumParams, s: &AcousticState) -> EnergySample {
    let mesh = ops.mesh();
    let (u, u_t, u_tt) = (mesh.restrict(&s.u), mesh.restrict(&s.u_t), mesh.restrict(&s.u_tt));
    let (tau, c2) = (m.tau, m.c2());
    let m_tt = ops.mass().quad_form(&u_tt).max(0.0);
    let k_t = ops.stiffness().quad_form(&u_t).max(0.0);
    let k_u = ops.stiffness().quad_form(&u).max(0.0);
    let z: Vec<f64> = u_t.iter().zip(&u).map(|(a, b)| tau * a + b).collect();
    let z_t: Vec<f64> = u_tt.iter().zip(&u_t).map(|(a, b)| tau * a + b).collect();
    EnergySample {
        t: s.t,
        e_full: 0.5 * tau * tau * m_tt + 0.5 * tau * tau * c2 * k_t + 0.5 * c2 * k_u,
        e_z: 0.5 * ops.mass().quad_form(&z_t).max(0.0) + 0.5 * c2 * ops.stiffness().quad_form(&z).max(0.0),
        norm_u_tt: m_tt.sqrt(),
        norm_grad_u_t: k_t.sqrt(),
    }
}

/// Interior `(u_t, u_tt)` history of a run on a fixed time grid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub u_t: Vec<Vec<f64>>,
    pub u_tt: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn push(&mut self, ops: &FemOperators, s: &AcousticState) {
        self.times.push(s.t);
        self.u_t.push(ops.mesh().restrict(&s.u_t));
        self.u_tt.push(ops.mesh().restrict(&s.u_tt));
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Running sup-in-time trackers of ‖v_tt‖_M and ‖v_t‖_K.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SupNorms {
    pub sup_tt: f64,
    pub sup_t: f64,
}

impl SupNorms {
    pub fn observe(&mut self, ops: &FemOperators, v_t: &[f64], v_tt: &[f64]) {
        self.sup_tt = self.sup_tt.max(ops.mass_norm(v_tt));
        self.sup_t = self.sup_t.max(ops.stiffness_norm(v_t));
    }

    /// sup‖v_tt‖ + sup‖∇v_t‖
    pub fn value(&self) -> f64 {
        self.sup_tt + self.sup_t
    }
}

/// Energy norm sup_t ‖p_tt‖ + sup_t ‖∇p_t‖ of a trajectory.
pub fn energy_norm(ops: &FemOperators, traj: &Trajectory) -> f64 {
    let mut acc = SupNorms::default();
    for (v_t, v_tt) in traj.u_t.iter().zip(&traj.u_tt) {
        acc.observe(ops, v_t, v_tt);
    }
    acc.value()
}

/// Streaming form of [`energy_norm_error`]: compares each new state of a run
/// against the stored reference state at the same step.
#[derive(Clone, Debug)]
pub struct ErrorAccumulator<'a> {
    ops: &'a FemOperators,
    reference: &'a Trajectory,
    step: usize,
    diff: SupNorms,
}

impl<'a> ErrorAccumulator<'a> {
    pub fn new(ops: &'a FemOperators, reference: &'a Trajectory) -> Self {
        ErrorAccumulator {
            ops,
            reference,
            step: 0,
            diff: SupNorms::default(),
        }
    }

    pub fn observe(&mut self, s: &AcousticState) -> Result<()> {
        let k = self.step;
        if k >= self.reference.len() || (self.reference.times[k] - s.t).abs() > 1e-9 * s.t.abs().max(1e-300) {
            return Err(Error::TrajectoryMismatch(format!(
                "state at t={:e} (step {k}) has no reference sample",
                s.t
            )));
        }
        let mesh = self.ops.mesh();
        let d_t: Vec<f64> = mesh.restrict(&s.u_t).iter().zip(&self.reference.u_t[k]).map(|(a, b)| a - b).collect();
        let d_tt: Vec<f64> = mesh.restrict(&s.u_tt).iter().zip(&self.reference.u_tt[k]).map(|(a, b)| a - b).collect();
        self.diff.observe(self.ops, &d_t, &d_tt);
        self.step += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<f64> {
        if self.step != self.reference.len() {
            return Err(Error::TrajectoryMismatch(format!(
                "run has {} samples, reference has {}",
                self.step,
                self.reference.len()
            )));
        }
        relative(self.diff.value(), energy_norm(self.ops, self.reference))
    }
}

fn relative(num: f64, den: f64) -> Result<f64> {
    if !(den >= 1e-300) {
        return Err(Error::DegenerateReference(den));
    }
    Ok(num / den)
}

/// err = ‖p^(δ) − p‖_E / ‖p‖_E with sup-in-time norms over the shared grid.
pub fn energy_norm_error(ops: &FemOperators, run: &Trajectory, reference: &Trajectory) -> Result<f64> {
    if run.len() != reference.len() {
        return Err(Error::TrajectoryMismatch(format!(
            "run has {} samples, reference has {}",
            run.len(),
            reference.len()
        )));
    }
    let mut diff = SupNorms::default();
    for k in 0..run.len() {
        let d_t: Vec<f64> = run.u_t[k].iter().zip(&reference.u_t[k]).map(|(a, b)| a - b).collect();
        let d_tt: Vec<f64> = run.u_tt[k].iter().zip(&reference.u_tt[k]).map(|(a, b)| a - b).collect();
        diff.observe(ops, &d_t, &d_tt);
    }
    relative(diff.value(), energy_norm(ops, reference))
}

/// Run metadata and relative error for one member of a δ-sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub delta: f64,
    pub err_rel: f64,
    pub dt: f64,
    pub h: f64,
    pub steps: usize,
    pub max_fp_iters: usize,
    pub mean_fp_iters: f64,
    pub max_energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Least-squares slope of log(err) against log(δ).
    pub slope: f64,
    pub intercept: f64,
    /// (δ, err/δ) for every fitted record.
    pub ratios: Vec<(f64, f64)>,
    /// max |err/δ − mean| / mean over the fitted records.
    pub max_ratio_deviation: f64,
}

/// Fits err ≈ C·δ^slope to the records with positive δ and error.
pub fn fit_rate(records: &[SweepRecord]) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.delta > 0.0 && r.err_rel > 0.0 && r.err_rel.is_finite())
        .map(|r| (r.delta, r.err_rel))
        .collect();
    fit_points(&pts)
}

pub fn fit_points(pts: &[(f64, f64)]) -> Result<RateFit> {
    let mut deltas: Vec<f64> = pts.iter().map(|p| p.0).collect();
    deltas.sort_by(f64::total_cmp);
    deltas.dedup();
    if pts.len() < 3 || deltas.len() != pts.len() {
        return Err(Error::InsufficientData(format!(
            "need at least 3 records with distinct positive delta and positive error, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ratios: Vec<(f64, f64)> = pts.iter().map(|&(d, e)| (d, e / d)).collect();
    let mean = ratios.iter().map(|r| r.1).sum::<f64>() / n;
    let max_ratio_deviation = ratios.iter().map(|r| (r.1 - mean).abs() / mean).fold(0.0, f64::max);
    Ok(RateFit {
        slope,
        intercept,
        ratios,
        max_ratio_deviation,
    })
}

/// Characteristic polynomial τs³ + αs² + Bs + C of a modal MGT equation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cubic {
    pub c3: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl Cubic {
    pub fn mgt(m: &MediumParams, lambda: f64) -> Self {
        Cubic {
            c3: m.tau,
            c2: m.alpha0,
            c1: m.b() * lambda,
            c0: m.c2() * lambda,
        }
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        ((s * self.c3 + self.c2) * s + self.c1) * s + self.c0
    }

    pub fn deriv(&self, s: Complex64) -> Complex64 {
        (s * (3.0 * self.c3) + 2.0 * self.c2) * s + self.c1
    }

    /// All three roots: a real root by bracketing, the remaining pair from
    /// the deflated quadratic, each polished by one Newton step on the cubic.
    pub fn roots(&self) -> [Complex64; 3] {
        let (a, b, c) = (self.c2 / self.c3, self.c1 / self.c3, self.c0 / self.c3);
        let p = |x: f64| ((x + a) * x + b) * x + c;
        let bound = 1.0 + a.abs().max(b.abs()).max(c.abs());
        let (mut lo, mut hi) = (-bound, bound);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if p(lo).signum() == p(mid).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = 0.5 * (lo + hi);
        // x³ + ax² + bx + c = (x − r)(x² + qx + w)
        let q = a + r;
        let w = if r.abs() > 1.0 { -c / r } else { b + r * q };
        let disc = Complex64::new(q * q - 4.0 * w, 0.0).sqrt();
        // stable quadratic roots
        let sgn = if q >= 0.0 { 1.0 } else { -1.0 };
        let t = -0.5 * (q + sgn * disc);
        let (r2, r3) = if t.norm() == 0.0 {
            (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
        } else {
            (t, Complex64::new(w, 0.0) / t)
        };
        let mut roots = [Complex64::new(r, 0.0), r2, r3];
        for s in roots.iter_mut() {
            let d = self.deriv(*s);
            if d.norm() > 0.0 {
                let step = self.eval(*s) / d;
                if step.is_finite() {
                    *s -= step;
                }
            }
        }
        roots
    }
}

/// Modal coefficient and its first two time derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModalValue {
    pub a: f64,
    pub a_t: f64,
    pub a_tt: f64,
}

/// Relative separation below which computed roots are treated as one
/// repeated root. Roots of multiplicity m are only determined to about
/// ε^(1/m), hence the looser triple threshold.
const DOUBLE_ROOT_TOL: f64 = 1e-6;
const TRIPLE_ROOT_TOL: f64 = 1e-4;
/// Required relative accuracy when the basis reproduces the initial data.
const INIT_CHECK_TOL: f64 = 1e-8;

/// Closed-form solution of τa''' + αa'' + (δ+τc²)λa' + c²λa = 0 with
/// (a, a', a'')(0) = `init`, evaluated at `t`.
pub fn modal_oracle(m: &MediumParams, lambda: f64, init: [f64; 3], t: f64) -> Result<ModalValue> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("eigenvalue must be positive, got {lambda}")));
    }
    Ok(ModalSolution::new(Cubic::mgt(m, lambda), init)?.eval(t))
}

/// Precomputed exponential-basis representation of a modal solution.
#[derive(Clone, Debug)]
pub struct ModalSolution {
    roots: [Complex64; 3],
    /// Basis function k is t^{powers[k]} e^{roots[k] t}.
    powers: [i32; 3],
    coeffs: [Complex64; 3],
}

impl ModalSolution {
    pub fn new(cubic: Cubic, init: [f64; 3]) -> Result<Self> {
        let mut roots = cubic.roots();
        let scale = roots.iter().map(|r| r.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let sep = |x: Complex64, y: Complex64| (x - y).norm() / scale;
        let mut powers = [0, 0, 0];
        let max_sep = sep(roots[0], roots[1]).max(sep(roots[1], roots[2])).max(sep(roots[0], roots[2]));
        if max_sep < TRIPLE_ROOT_TOL {
            let s = Complex64::new(-cubic.c2 / (3.0 * cubic.c3), 0.0);
            roots = [s, s, s];
            powers = [0, 1, 2];
        } else {
            // closest pair first
            let pairs = [(0, 1), (0, 2), (1, 2)];
            let &(i, j) = pairs
                .iter()
                .min_by(|a, b| sep(roots[a.0], roots[a.1]).total_cmp(&sep(roots[b.0], roots[b.1])))
                .unwrap();
            if sep(roots[i], roots[j]) < DOUBLE_ROOT_TOL {
                // a double root is a root of p', polish the pair mean on it
                let mut s = (roots[i] + roots[j]) / 2.0;
                for _ in 0..3 {
                    let d2 = 6.0 * cubic.c3 * s + 2.0 * cubic.c2;
                    if d2.norm() == 0.0 {
                        break;
                    }
                    s -= cubic.deriv(s) / d2;
                }
                let single = Complex64::new(-cubic.c2 / cubic.c3, 0.0) - 2.0 * s;
                roots = [s, s, single];
                powers = [0, 1, 0];
            }
        }
        // rows: value, first and second derivative of each basis function at t = 0
        let mut mat = [[Complex64::new(0.0, 0.0); 3]; 3];
        for k in 0..3 {
            let col = basis_derivs_at_zero(roots[k], powers[k]);
            for (r, v) in col.iter().enumerate() {
                mat[r][k] = *v;
            }
        }
        let rhs = init.map(|v| Complex64::new(v, 0.0));
        let coeffs = solve3(mat, rhs)
            .ok_or_else(|| Error::IllConditionedRoots("singular exponential-basis system".into()))?;
        let sol = ModalSolution { roots, powers, coeffs };

        // The basis must reproduce the data; near-coincident roots that were
        // not merged make the system too ill-conditioned for that.
        let back = sol.eval(0.0);
        for (r, (got, want)) in [back.a, back.a_t, back.a_tt].into_iter().zip(init).enumerate() {
            let size: f64 = init
                .iter()
                .enumerate()
                .map(|(q, v)| v.abs() * scale.powi(r as i32 - q as i32))
                .sum();
            if (got - want).abs() > INIT_CHECK_TOL * size {
                return Err(Error::IllConditionedRoots(format!(
                    "basis reproduces derivative {r} of the initial data as {got:e} instead of {want:e} (roots {:?})",
                    sol.roots
                )));
            }
        }
        Ok(sol)
    }

    pub fn roots(&self) -> [Complex64; 3] {
        self.roots
    }

    pub fn eval(&self, t: f64) -> ModalValue {
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for k in 0..3 {
            let (s, p, c) = (self.roots[k], self.powers[k], self.coeffs[k]);
            let e = (s * t).exp();
            // derivatives of t^p e^{st}
            let tp = |q: i32| if q < 0 { 0.0 } else { t.powi(q) };
            let pf = p as f64;
            let f0 = tp(p);
            let f1 = pf * tp(p - 1);
            let f2 = pf * (pf - 1.0) * tp(p - 2);
            out[0] += c * e * f0;
            out[1] += c * e * (s * f0 + f1);
            out[2] += c * e * (s * s * f0 + 2.0 * s * f1 + f2);
        }
        ModalValue {
            a: out[0].re,
            a_t: out[1].re,
            a_tt: out[2].re,
        }
    }
}

fn basis_derivs_at_zero(s: Complex64, p: i32) -> [Complex64; 3] {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    match p {
        0 => [one, s, s * s],
        1 => [zero, one, 2.0 * s],
        _ => [zero, zero, Complex64::new(2.0, 0.0)],
    }
}

/// Gaussian elimination with partial pivoting on a 3×3 complex system.
fn solve3(mut a: [[Complex64; 3]; 3], mut b: [Complex64; 3]) -> Option<[Complex64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))?;
        if a[piv][col].norm() == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut x = [Complex64::new(0.0, 0.0); 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for k in row + 1..3 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}
