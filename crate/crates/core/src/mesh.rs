//! Uniform meshes of an interval and of a square, with the bookkeeping needed
//! to eliminate homogeneous Dirichlet boundary nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Description of a mesh, as stored in problem definitions and config files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    Interval { length: f64, n_elements: usize },
    Square { side: f64, h: f64 },
}

impl DomainSpec {
    pub fn build(&self) -> Result<Mesh> {
        match *self {
            DomainSpec::Interval { length, n_elements } => interval_mesh(length, n_elements),
            DomainSpec::Square { side, h } => square_triangle_mesh(side, h),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Interval { .. } => 1,
            DomainSpec::Square { .. } => 2,
        }
    }

    pub fn mesh_size(&self) -> f64 {
        match *self {
            DomainSpec::Interval { length, n_elements } => length / n_elements as f64,
            DomainSpec::Square { h, .. } => h,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    dim: usize,
    /// Node coordinates, `dim` entries per node.
    coords: Vec<[f64; 2]>,
    /// Element connectivity; only the first `dim + 1` entries are used.
    elements: Vec<[usize; 3]>,
    h: f64,
    /// node -> position in the interior (unknown) numbering
    interior_index: Vec<Option<usize>>,
    interior_nodes: Vec<usize>,
    boundary_nodes: Vec<usize>,
    measure: f64,
}

impl Mesh {
    fn from_parts(
        dim: usize,
        coords: Vec<[f64; 2]>,
        elements: Vec<[usize; 3]>,
        h: f64,
        is_boundary: Vec<bool>,
        measure: f64,
    ) -> Self {
        let mut interior_index = vec![None; coords.len()];
        let mut interior_nodes = Vec::new();
        let mut boundary_nodes = Vec::new();
        for (node, &b) in is_boundary.iter().enumerate() {
            if b {
                boundary_nodes.push(node);
            } else {
                interior_index[node] = Some(interior_nodes.len());
                interior_nodes.push(node);
            }
        }
        Mesh {
            dim,
            coords,
            elements,
            h,
            interior_index,
            interior_nodes,
            boundary_nodes,
            measure,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_interior(&self) -> usize {
        self.interior_nodes.len()
    }

    /// Nominal mesh size: element length in 1D, grid spacing in 2D.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Largest element diameter (the hypotenuse for the 2D right triangles).
    pub fn max_diameter(&self) -> f64 {
        self.elements()
            .map(|el| {
                let mut d: f64 = 0.0;
                for a in 0..el.len() {
                    for b in a + 1..el.len() {
                        let (p, q) = (self.coords[el[a]], self.coords[el[b]]);
                        d = d.max(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
                    }
                }
                d
            })
            .fold(0.0, f64::max)
    }

    /// Measure of the whole domain.
    pub fn domain_measure(&self) -> f64 {
        self.measure
    }

    pub fn coord(&self, node: usize) -> &[f64] {
        &self.coords[node][..self.dim]
    }

    /// Iterates element connectivity as slices of length `dim + 1`.
    pub fn elements(&self) -> impl Iterator<Item = &[usize]> + '_ {
        let n = self.dim + 1;
        self.elements.iter().map(move |e| &e[..n])
    }

    pub fn element(&self, e: usize) -> &[usize] {
        &self.elements[e][..self.dim + 1]
    }

    pub fn interior_index(&self, node: usize) -> Option<usize> {
        self.interior_index[node]
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.interior_index[node].is_none()
    }

    /// Signed measure of an element: length in 1D, signed area in 2D.
    pub fn element_measure(&self, el: &[usize]) -> f64 {
        match self.dim {
            1 => self.coords[el[1]][0] - self.coords[el[0]][0],
            _ => {
                let [a, b, c] = [self.coords[el[0]], self.coords[el[1]], self.coords[el[2]]];
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
            }
        }
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.n_nodes()).map(|n| f(self.coord(n))).collect()
    }

    /// Restricts a full nodal vector to the interior numbering.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.interior_nodes.iter().map(|&n| full[n]).collect()
    }

    /// Extends an interior vector by zeros on the boundary.
    pub fn extend(&self, interior: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_nodes()];
        for (&n, &v) in self.interior_nodes.iter().zip(interior) {
            full[n] = v;
        }
        full
    }

    /// Writes `interior` into the interior slots of `full`, zeroing the boundary.
    pub fn extend_into(&self, interior: &[f64], full: &mut [f64]) {
        for &n in &self.boundary_nodes {
            full[n] = 0.0;
        }
        for (&n, &v) in self.interior_nodes.iter().zip(interior) {
            full[n] = v;
        }
    }

    pub fn clamp_boundary(&self, full: &mut [f64]) {
        for &n in &self.boundary_nodes {
            full[n] = 0.0;
        }
    }
}

/// Uniform mesh of `[0, length]` with `n_elements` segments.
pub fn interval_mesh(length: f64, n_elements: usize) -> Result<Mesh> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "interval length must be positive, got {length}"
        )));
    }
    if n_elements < 2 {
        return Err(Error::InvalidArgument(format!(
            "interval mesh needs at least 2 elements, got {n_elements}"
        )));
    }
    let h = length / n_elements as f64;
    let coords = (0..=n_elements)
        .map(|i| [length * i as f64 / n_elements as f64, 0.0])
        .collect();
    let elements = (0..n_elements).map(|i| [i, i + 1, usize::MAX]).collect();
    let mut is_boundary = vec![false; n_elements + 1];
    is_boundary[0] = true;
    is_boundary[n_elements] = true;
    Ok(Mesh::from_parts(1, coords, elements, h, is_boundary, length))
}

/// Uniform right-triangulated mesh of `[0, side]²` with grid spacing `h`.
///
/// Nodes are numbered row by row (x fastest). Each grid cell is split along
/// its lower-left to upper-right diagonal.
pub fn square_triangle_mesh(side: f64, h: f64) -> Result<Mesh> {
    if !(side > 0.0 && side.is_finite() && h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "square mesh needs side > 0 and h > 0, got side={side}, h={h}"
        )));
    }
    let ratio = side / h;
    let n = ratio.round();
    if n < 1.0 || (n * h - side).abs() > 1e-9 * side {
        return Err(Error::InvalidArgument(format!(
            "grid spacing {h} does not divide side {side}"
        )));
    }
    let n = n as usize;
    let np = n + 1;
    let node = |i: usize, j: usize| j * np + i;

    let mut coords = Vec::with_capacity(np * np);
    let mut is_boundary = Vec::with_capacity(np * np);
    for j in 0..np {
        for i in 0..np {
            coords.push([side * i as f64 / n as f64, side * j as f64 / n as f64]);
            is_boundary.push(i == 0 || j == 0 || i == n || j == n);
        }
    }
    let mut elements = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v01, v11) = (node(i, j), node(i + 1, j), node(i, j + 1), node(i + 1, j + 1));
            elements.push([v00, v10, v11]);
            elements.push([v00, v11, v01]);
        }
    }
    Ok(Mesh::from_parts(
        2,
        coords,
        elements,
        side / n as f64,
        is_boundary,
        side * side,
    ))
}
