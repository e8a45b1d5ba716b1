//! P1 finite-element operators on [`Mesh`]es.
//!
//! Global matrices are kept in two forms: over all nodes (used for load
//! vectors, where boundary values of the data matter for the quadrature) and
//! reduced to the interior nodes (the unknowns of the homogeneous Dirichlet
//! problem).

use crate::integrator::AcousticState;
use crate::mesh::Mesh;
use crate::sparse::CsrMatrix;

/// Gradients of the barycentric basis functions on one element.
///
/// Entries beyond `dim + 1` and components beyond `dim` are zero.
pub fn element_gradients(mesh: &Mesh, el: &[usize]) -> [[f64; 2]; 3] {
    let mut g = [[0.0; 2]; 3];
    match mesh.dim() {
        1 => {
            let len = mesh.coord(el[1])[0] - mesh.coord(el[0])[0];
            g[0][0] = -1.0 / len;
            g[1][0] = 1.0 / len;
        }
        _ => {
            let p: Vec<&[f64]> = el.iter().map(|&n| mesh.coord(n)).collect();
            let two_area = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            for i in 0..3 {
                let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                g[i] = [(p[j][1] - p[k][1]) / two_area, (p[k][0] - p[j][0]) / two_area];
            }
        }
    }
    g
}

/// Consistent P1 element mass matrix entry: measure·(1 + δ_ij)/((d+1)(d+2)).
fn element_mass_entry(measure: f64, dim: usize, i: usize, j: usize) -> f64 {
    let denom = ((dim + 1) * (dim + 2)) as f64;
    measure * if i == j { 2.0 } else { 1.0 } / denom
}

#[derive(Clone, Debug)]
pub struct FemOperators {
    mesh: Mesh,
    mass_full: CsrMatrix,
    stiffness_full: CsrMatrix,
    mass: CsrMatrix,
    stiffness: CsrMatrix,
}

/// Assembles mass and stiffness matrices for `mesh`.
pub fn assemble(mesh: &Mesh) -> FemOperators {
    let n = mesh.n_nodes();
    let dim = mesh.dim();
    let per = (dim + 1) * (dim + 1);
    let mut mt = Vec::with_capacity(per * mesh.n_elements());
    let mut kt = Vec::with_capacity(per * mesh.n_elements());
    for el in mesh.elements() {
        let meas = mesh.element_measure(el);
        let grads = element_gradients(mesh, el);
        for (a, &na) in el.iter().enumerate() {
            for (b, &nb) in el.iter().enumerate() {
                mt.push((na, nb, element_mass_entry(meas, dim, a, b)));
                let gg = grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1];
                kt.push((na, nb, meas * gg));
            }
        }
    }
    let mass_full = CsrMatrix::from_triplets(n, mt);
    let stiffness_full = CsrMatrix::from_triplets(n, kt);
    let map: Vec<Option<usize>> = (0..n).map(|i| mesh.interior_index(i)).collect();
    let mass = mass_full.submatrix(&map, mesh.n_interior());
    let stiffness = stiffness_full.submatrix(&map, mesh.n_interior());
    FemOperators {
        mesh: mesh.clone(),
        mass_full,
        stiffness_full,
        mass,
        stiffness,
    }
}

impl FemOperators {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Mass matrix over interior nodes.
    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    /// Stiffness matrix over interior nodes.
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn mass_full(&self) -> &CsrMatrix {
        &self.mass_full
    }

    pub fn stiffness_full(&self) -> &CsrMatrix {
        &self.stiffness_full
    }

    pub fn n_interior(&self) -> usize {
        self.mesh.n_interior()
    }

    /// Interior mass matrix weighted by a nodal coefficient field.
    ///
    /// Each element matrix is scaled by the mean of the weight over its
    /// vertices, which is exact for constant weights.
    pub fn weighted_mass(&self, weights: &[f64]) -> CsrMatrix {
        let mesh = &self.mesh;
        let dim = mesh.dim();
        let mut trip = Vec::new();
        for el in mesh.elements() {
            let w = el.iter().map(|&n| weights[n]).sum::<f64>() / el.len() as f64;
            let meas = mesh.element_measure(el);
            for (a, &na) in el.iter().enumerate() {
                let Some(ia) = mesh.interior_index(na) else { continue };
                for (b, &nb) in el.iter().enumerate() {
                    if let Some(ib) = mesh.interior_index(nb) {
                        trip.push((ia, ib, w * element_mass_entry(meas, dim, a, b)));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(mesh.n_interior(), trip)
    }

    /// ‖v‖_M for an interior vector.
    pub fn mass_norm(&self, v: &[f64]) -> f64 {
        nonneg(self.mass.quad_form(v)).sqrt()
    }

    /// ‖v‖_K (discrete H¹ seminorm) for an interior vector.
    pub fn stiffness_norm(&self, v: &[f64]) -> f64 {
        nonneg(self.stiffness.quad_form(v)).sqrt()
    }
}

/// Clamps round-off negatives of a quadratic form to zero; NaN passes through.
fn nonneg(q: f64) -> f64 {
    if q < 0.0 {
        0.0
    } else {
        q
    }
}

/// Mass-matrix quadrature of the nodal interpolant of `g`, restricted to the
/// interior rows.
pub fn load_vector(ops: &FemOperators, g: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; ops.n_interior()];
    load_vector_into(ops, g, &mut out);
    out
}

fn load_vector_into(ops: &FemOperators, g: &[f64], out: &mut [f64]) {
    let mesh = ops.mesh();
    for (slot, &node) in out.iter_mut().zip(mesh.interior_nodes()) {
        *slot = ops.mass_full.row(node).map(|(j, v)| v * g[j]).sum();
    }
}

/// Load vector of k·(p·p_tt + p_t²), the expanded ½(k p²)_tt.
pub fn westervelt_rhs(ops: &FemOperators, k: f64, state: &AcousticState) -> Vec<f64> {
    if k == 0.0 {
        return vec![0.0; ops.n_interior()];
    }
    let g: Vec<f64> = state
        .u
        .iter()
        .zip(&state.u_t)
        .zip(&state.u_tt)
        .map(|((&p, &pt), &ptt)| k * (p * ptt + pt * pt))
        .collect();
    load_vector(ops, &g)
}

/// Load vector of κ·ψ_t·ψ_tt + σ·∇ψ·∇ψ_t, the expanded ½(κψ_t² + σ|∇ψ|²)_t.
///
/// The gradient product is element-constant for P1 fields and is integrated
/// exactly against each basis function (∫φ_i = measure/(d+1)).
pub fn kuznetsov_rhs(ops: &FemOperators, kappa: f64, sigma: f64, state: &AcousticState) -> Vec<f64> {
    let mut out = vec![0.0; ops.n_interior()];
    if kappa != 0.0 {
        let g: Vec<f64> = state
            .u_t
            .iter()
            .zip(&state.u_tt)
            .map(|(&a, &b)| kappa * a * b)
            .collect();
        load_vector_into(ops, &g, &mut out);
    }
    if sigma != 0.0 {
        let mesh = ops.mesh();
        let share = 1.0 / (mesh.dim() + 1) as f64;
        for el in mesh.elements() {
            let grads = element_gradients(mesh, el);
            let mut gu = [0.0; 2];
            let mut gv = [0.0; 2];
            for (a, &n) in el.iter().enumerate() {
                for d in 0..2 {
                    gu[d] += state.u[n] * grads[a][d];
                    gv[d] += state.u_t[n] * grads[a][d];
                }
            }
            let val = sigma * (gu[0] * gv[0] + gu[1] * gv[1]) * mesh.element_measure(el) * share;
            for &n in el {
                if let Some(i) = mesh.interior_index(n) {
                    out[i] += val;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{interval_mesh, square_triangle_mesh};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn state_from(mesh: &Mesh, u: Vec<f64>, u_t: Vec<f64>, u_tt: Vec<f64>) -> AcousticState {
        let n = mesh.n_nodes();
        AcousticState {
            t: 0.0,
            u,
            u_t,
            u_tt,
            u_ttt: vec![0.0; n],
        }
    }

    #[test]
    fn two_element_interval_operators() {
        let mesh = interval_mesh(1.0, 2).unwrap();
        let ops = assemble(&mesh);
        // element mass (h/6)[[2,1],[1,2]] with h = 0.5
        assert_relative_eq!(ops.mass_full().get(0, 0), 0.5 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(ops.mass_full().get(0, 1), 0.5 / 6.0, max_relative = 1e-15);
        assert_eq!(ops.mass().dim(), 1);
        assert_relative_eq!(ops.mass().get(0, 0), 1.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(ops.stiffness().get(0, 0), 4.0, max_relative = 1e-15);
    }

    #[test]
    fn right_triangle_stiffness() {
        let mesh = square_triangle_mesh(1.0, 1.0).unwrap();
        // First triangle (0,0),(1,0),(1,1): right angle at node 1 = (1,0).
        let el = mesh.element(0).to_vec();
        let g = element_gradients(&mesh, &el);
        let area = mesh.element_measure(&el);
        let kk = |a: usize, b: usize| area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
        assert_relative_eq!(kk(1, 1), 1.0, max_relative = 1e-15);
        assert_relative_eq!(kk(0, 0), 0.5, max_relative = 1e-15);
        assert_relative_eq!(kk(0, 1), -0.5, max_relative = 1e-15);
    }

    #[test]
    fn stiffness_annihilates_constants() {
        for mesh in [interval_mesh(0.4, 30).unwrap(), square_triangle_mesh(0.5, 0.05).unwrap()] {
            let ops = assemble(&mesh);
            let ones = vec![1.0; mesh.n_nodes()];
            for v in ops.stiffness_full().mul_vec(&ones) {
                assert!(v.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mass_partition_of_unity() {
        for mesh in [interval_mesh(0.4, 600).unwrap(), square_triangle_mesh(0.5, 0.01).unwrap()] {
            let ops = assemble(&mesh);
            let ones = vec![1.0; mesh.n_nodes()];
            let total = ops.mass_full().quad_form(&ones);
            assert_relative_eq!(total, mesh.domain_measure(), max_relative = 1e-10);
        }
    }

    #[test]
    fn operators_are_symmetric() {
        let ops = assemble(&square_triangle_mesh(0.5, 0.05).unwrap());
        assert!(ops.mass().asymmetry() <= 1e-13);
        assert!(ops.stiffness().asymmetry() <= 1e-13);
    }

    #[test]
    fn load_of_constant() {
        let mesh = interval_mesh(0.4, 40).unwrap();
        let ops = assemble(&mesh);
        let zero = load_vector(&ops, &vec![0.0; mesh.n_nodes()]);
        assert!(zero.iter().all(|&v| v == 0.0));
        for v in load_vector(&ops, &vec![1.0; mesh.n_nodes()]) {
            assert_relative_eq!(v, mesh.h(), max_relative = 1e-12);
        }

        let mesh = square_triangle_mesh(0.5, 0.05).unwrap();
        let ops = assemble(&mesh);
        let load = load_vector(&ops, &vec![1.0; mesh.n_nodes()]);
        // six triangles of area h²/2 around each interior node
        let patch = 6.0 * 0.5 * 0.05 * 0.05;
        for v in load {
            assert_relative_eq!(v, patch / 3.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn westervelt_rhs_examples() {
        let mesh = interval_mesh(1.0, 2).unwrap();
        let ops = assemble(&mesh);
        let bump = vec![0.0, 1.0, 0.0];
        let s = state_from(&mesh, bump.clone(), vec![0.0; 3], bump.clone());
        let r = westervelt_rhs(&ops, 1.0, &s);
        assert_relative_eq!(r[0], 1.0 / 3.0, max_relative = 1e-15);
        assert_eq!(westervelt_rhs(&ops, 0.0, &s), vec![0.0]);

        let mesh = interval_mesh(1.0, 20).unwrap();
        let ops = assemble(&mesh);
        let n = mesh.n_nodes();
        let mut pt = mesh.sample(|x| (7.0 * x[0]).sin());
        mesh.clamp_boundary(&mut pt);
        let s = state_from(&mesh, vec![0.0; n], pt, vec![0.0; n]);
        assert!(westervelt_rhs(&ops, 2.0, &s).iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn kuznetsov_gradient_term_for_linear_fields() {
        let mesh = interval_mesh(1.0, 10).unwrap();
        let ops = assemble(&mesh);
        let (a, b, sigma) = (3.0, -2.0, 2.0);
        let u = mesh.sample(|x| a * x[0]);
        let u_t = mesh.sample(|x| b * x[0]);
        let s = state_from(&mesh, u, u_t, vec![0.0; mesh.n_nodes()]);
        let r = kuznetsov_rhs(&ops, 0.0, sigma, &s);
        let patch = 2.0 * mesh.h();
        for v in r {
            assert_relative_eq!(v, sigma * a * b * patch / 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn kuznetsov_rhs_vanishes() {
        let mesh = square_triangle_mesh(1.0, 0.25).unwrap();
        let ops = assemble(&mesh);
        let f = mesh.sample(|x| x[0] * (1.0 - x[0]) * x[1]);
        let s = state_from(&mesh, f.clone(), f.clone(), f.clone());
        assert!(kuznetsov_rhs(&ops, 0.0, 0.0, &s).iter().all(|&v| v == 0.0));
        let s = state_from(&mesh, f.clone(), vec![0.0; f.len()], f);
        assert!(kuznetsov_rhs(&ops, 1.5, 2.0, &s).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn assembly_is_deterministic() {
        let mesh = square_triangle_mesh(0.5, 0.05).unwrap();
        let a = assemble(&mesh);
        let b = assemble(&mesh);
        assert_eq!(a.mass(), b.mass());
        assert_eq!(a.stiffness(), b.stiffness());
    }

    #[test]
    fn weighted_mass_with_unit_weight_is_mass() {
        let mesh = square_triangle_mesh(0.5, 0.1).unwrap();
        let ops = assemble(&mesh);
        let w = ops.weighted_mass(&vec![1.0; mesh.n_nodes()]);
        for (i, j, v) in ops.mass().triplets() {
            assert_relative_eq!(w.get(i, j), v, max_relative = 1e-14);
        }
    }

    fn random_fields(mesh: &Mesh, seed: &[f64]) -> Vec<f64> {
        let mut f: Vec<f64> = (0..mesh.n_nodes()).map(|i| seed[i % seed.len()]).collect();
        mesh.clamp_boundary(&mut f);
        f
    }

    proptest! {
        #[test]
        fn mass_positive_and_stiffness_nonnegative(seed in prop::collection::vec(-1.0f64..1.0, 1..60)) {
            let mesh = square_triangle_mesh(1.0, 0.125).unwrap();
            let ops = assemble(&mesh);
            let v = mesh.restrict(&random_fields(&mesh, &seed));
            let nonzero = v.iter().any(|&x| x != 0.0);
            let vm = ops.mass().quad_form(&v);
            let vk = ops.stiffness().quad_form(&v);
            prop_assert!(vk >= -1e-14);
            if nonzero {
                prop_assert!(vm > 0.0);
                prop_assert!(vk > 0.0);
            }
        }

        #[test]
        fn westervelt_rhs_is_quadratic(seed in prop::collection::vec(-1.0f64..1.0, 3..40), s in -5.0f64..5.0) {
            let mesh = interval_mesh(1.0, 16).unwrap();
            let ops = assemble(&mesh);
            let f = random_fields(&mesh, &seed);
            let g: Vec<f64> = f.iter().rev().copied().collect();
            let st = state_from(&mesh, f.clone(), g.clone(), f.iter().map(|x| x * 0.3).collect());
            let scaled = state_from(
                &mesh,
                st.u.iter().map(|x| s * x).collect(),
                st.u_t.iter().map(|x| s * x).collect(),
                st.u_tt.iter().map(|x| s * x).collect(),
            );
            let r1 = westervelt_rhs(&ops, 1.3, &st);
            let r2 = westervelt_rhs(&ops, 1.3, &scaled);
            for (a, b) in r1.iter().zip(&r2) {
                prop_assert!((s * s * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn kuznetsov_without_gradient_matches_westervelt_pattern(seed in prop::collection::vec(-1.0f64..1.0, 3..40)) {
            // κ ψ_t ψ_tt equals k(p p_tt + p_t²) with (p, p_t, p_tt) = (ψ_t, 0, ψ_tt).
            let mesh = square_triangle_mesh(1.0, 0.25).unwrap();
            let ops = assemble(&mesh);
            let n = mesh.n_nodes();
            let f = random_fields(&mesh, &seed);
            let g: Vec<f64> = f.iter().map(|x| x * x - 0.2).collect();
            let mut g = g;
            mesh.clamp_boundary(&mut g);
            let kz = state_from(&mesh, vec![0.0; n], f.clone(), g.clone());
            let wv = state_from(&mesh, f, vec![0.0; n], g);
            let a = kuznetsov_rhs(&ops, 0.7, 0.0, &kz);
            let b = westervelt_rhs(&ops, 0.7, &wv);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-14 * (1.0 + y.abs()));
            }
        }
    }
}
