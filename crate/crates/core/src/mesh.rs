//! Structured triangulations of a rectangle, P1 fields and element quadrature.
//!
//! Node `(i, j)` sits at `(v_min + i*hv, z_min + j*hz)` and has global index
//! `i + j*(n+1)`, so a row of constant `z` is contiguous in memory. Each grid
//! cell is split along its lower-left to upper-right diagonal.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};

/// Relative slack (in units of the cell size) within which a point just
/// outside the rectangle still counts as inside.
const BOUNDARY_SLACK: f64 = 1e-12;

/// Axis-aligned rectangle `[v_min, v_max] x [z_min, z_max]`.
///
/// The first axis is the velocity-like variable, the second is `x`, `z` or the
/// rescaled `z` depending on the formulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectDomain {
    pub v_min: f64,
    pub v_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl RectDomain {
    pub fn new(v_min: f64, v_max: f64, z_min: f64, z_max: f64) -> Result<Self> {
        let finite = [v_min, v_max, z_min, z_max].iter().all(|x| x.is_finite());
        if !finite {
            return Err(invalid("domain", "bounds must be finite"));
        }
        if v_min >= v_max {
            return Err(invalid("domain", format!("v_min {v_min} >= v_max {v_max}")));
        }
        if z_min >= z_max {
            return Err(invalid("domain", format!("z_min {z_min} >= z_max {z_max}")));
        }
        Ok(Self {
            v_min,
            v_max,
            z_min,
            z_max,
        })
    }

    /// The square `[-half, half]^2`.
    pub fn centered_square(half: f64) -> Result<Self> {
        Self::new(-half, half, -half, half)
    }

    /// `|Omega_1|`, the extent along the first axis.
    pub fn width_v(&self) -> f64 {
        self.v_max - self.v_min
    }

    /// `|Omega_2|`, the extent along the second axis.
    pub fn width_z(&self) -> f64 {
        self.z_max - self.z_min
    }

    pub fn area(&self) -> f64 {
        self.width_v() * self.width_z()
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.v_min && p[0] <= self.v_max && p[1] >= self.z_min && p[1] <= self.z_max
    }
}

/// Which form of the equation a field (or run) lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Formulation {
    /// `f(t, v, x)`.
    Original,
    /// `g(t, v, z)` with `z = x + t v`.
    Lagrangian,
    /// `g~(s, v~, z~)` in self-similar variables.
    SelfSimilar,
}

impl Formulation {
    pub const ALL: [Formulation; 3] = [
        Formulation::Original,
        Formulation::Lagrangian,
        Formulation::SelfSimilar,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Formulation::Original => "original",
            Formulation::Lagrangian => "lagrangian",
            Formulation::SelfSimilar => "selfsimilar",
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Formulation::Original),
            "lagrangian" => Ok(Formulation::Lagrangian),
            "selfsimilar" => Ok(Formulation::SelfSimilar),
            other => Err(invalid(
                "form",
                format!("unknown formulation `{other}` (expected original|lagrangian|selfsimilar)"),
            )),
        }
    }
}

/// Uniform triangulation of a [`RectDomain`] with `n` cells per side.
#[derive(Debug, Clone)]
pub struct TriMesh {
    domain: RectDomain,
    n: usize,
    hv: f64,
    hz: f64,
    nodes: Vec<[f64; 2]>,
    elements: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    /// Interior (free) node index for every node, `None` on the boundary.
    dof_of_node: Vec<Option<usize>>,
    /// Global node index of each interior unknown.
    free_nodes: Vec<usize>,
}

impl TriMesh {
    /// Builds the structured mesh; each cell is cut along the same diagonal.
    pub fn structured(domain: RectDomain, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "mesh needs at least one subdivision per side"));
        }
        let hv = domain.width_v() / n as f64;
        let hz = domain.width_z() / n as f64;
        let np = n + 1;

        let mut nodes = Vec::with_capacity(np * np);
        let mut boundary = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                // Pin the last row/column to the exact bound.
                let v = if i == n {
                    domain.v_max
                } else {
                    domain.v_min + i as f64 * hv
                };
                let z = if j == n {
                    domain.z_max
                } else {
                    domain.z_min + j as f64 * hz
                };
                nodes.push([v, z]);
                boundary.push(i == 0 || j == 0 || i == n || j == n);
            }
        }

        let mut elements = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let a = i + j * np;
                let b = a + 1;
                let c = b + np;
                let d = a + np;
                elements.push([a, b, c]);
                elements.push([a, c, d]);
            }
        }

        let mut dof_of_node = vec![None; nodes.len()];
        let mut free_nodes = Vec::with_capacity((n.saturating_sub(1)).pow(2));
        for (k, &on_boundary) in boundary.iter().enumerate() {
            if !on_boundary {
                dof_of_node[k] = Some(free_nodes.len());
                free_nodes.push(k);
            }
        }

        Ok(Self {
            domain,
            n,
            hv,
            hz,
            nodes,
            elements,
            boundary,
            dof_of_node,
            free_nodes,
        })
    }

    pub fn domain(&self) -> &RectDomain {
        &self.domain
    }

    /// Subdivisions per side.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Characteristic element size: the longer of the two cell sides.
    pub fn h(&self) -> f64 {
        self.hv.max(self.hz)
    }

    pub fn cell_sizes(&self) -> (f64, f64) {
        (self.hv, self.hz)
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn boundary(&self) -> &[bool] {
        &self.boundary
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    /// Number of interior unknowns.
    pub fn num_free(&self) -> usize {
        self.free_nodes.len()
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    pub fn dof_of_node(&self, node: usize) -> Option<usize> {
        self.dof_of_node[node]
    }

    /// Node index of grid point `(i, j)`.
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        i + j * (self.n + 1)
    }

    pub fn element_vertices(&self, e: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.elements[e];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn element_area(&self, e: usize) -> f64 {
        signed_area(&self.element_vertices(e))
    }

    /// Constant gradients of the three barycentric basis functions.
    pub fn element_gradients(&self, e: usize) -> [[f64; 2]; 3] {
        barycentric_gradients(&self.element_vertices(e))
    }

    pub fn element_quadrature(&self, e: usize) -> Result<[([f64; 2], f64); 3]> {
        triangle_quadrature(&self.element_vertices(e))
    }

    /// Scatters interior values into a full nodal vector with zero boundary.
    pub fn expand(&self, interior: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.num_nodes()];
        for (dof, &node) in self.free_nodes.iter().enumerate() {
            full[node] = interior[dof];
        }
        full
    }

    /// Gathers the interior entries of a full nodal vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free_nodes.iter().map(|&k| full[k]).collect()
    }

    /// Evaluates the P1 function with nodal values `values` at `p`.
    ///
    /// Points outside the rectangle evaluate to zero (homogeneous Dirichlet
    /// extension). Lookup is O(1) through the grid structure.
    pub fn interpolate(&self, values: &[f64], p: [f64; 2]) -> f64 {
        let n = self.n as f64;
        let xi = (p[0] - self.domain.v_min) / self.hv;
        let eta = (p[1] - self.domain.z_min) / self.hz;
        if !(xi >= -BOUNDARY_SLACK && xi <= n + BOUNDARY_SLACK)
            || !(eta >= -BOUNDARY_SLACK && eta <= n + BOUNDARY_SLACK)
        {
            return 0.0;
        }
        let xi = xi.clamp(0.0, n);
        let eta = eta.clamp(0.0, n);
        let i = (xi.floor() as usize).min(self.n - 1);
        let j = (eta.floor() as usize).min(self.n - 1);
        let x = xi - i as f64;
        let y = eta - j as f64;

        let np = self.n + 1;
        let a = i + j * np;
        let b = a + 1;
        let c = b + np;
        let d = a + np;
        if y <= x {
            values[a] * (1.0 - x) + values[b] * (x - y) + values[c] * y
        } else {
            values[a] * (1.0 - y) + values[c] * x + values[d] * (y - x)
        }
    }
}

/// Twice-oriented area halved: positive for counter-clockwise vertices.
pub fn signed_area(p: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

pub fn barycentric_gradients(p: &[[f64; 2]; 3]) -> [[f64; 2]; 3] {
    let two_area = 2.0 * signed_area(p);
    let mut grads = [[0.0; 2]; 3];
    for k in 0..3 {
        let a = p[(k + 1) % 3];
        let b = p[(k + 2) % 3];
        grads[k] = [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area];
    }
    grads
}

/// Edge-midpoint rule: three points with weight `|T|/3`, exact up to degree 2.
pub fn triangle_quadrature(p: &[[f64; 2]; 3]) -> Result<[([f64; 2], f64); 3]> {
    let area = signed_area(p).abs();
    let scale = (0..3)
        .map(|k| {
            let a = p[k];
            let b = p[(k + 1) % 3];
            (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
        })
        .fold(0.0, f64::max);
    if !(area > 1e-14 * scale) {
        return Err(Error::DegenerateElement { area });
    }
    let mid = |a: [f64; 2], b: [f64; 2]| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    let w = area / 3.0;
    Ok([
        (mid(p[0], p[1]), w),
        (mid(p[1], p[2]), w),
        (mid(p[2], p[0]), w),
    ])
}

/// Nodal coefficients of a P1 function on a shared mesh.
#[derive(Debug, Clone)]
pub struct Field {
    mesh: Arc<TriMesh>,
    pub values: Vec<f64>,
    /// `t` for the original and Lagrangian forms, `s` for the self-similar form.
    pub time: f64,
    pub form: Formulation,
}

impl Field {
    pub fn new(mesh: Arc<TriMesh>, values: Vec<f64>, time: f64, form: Formulation) -> Result<Self> {
        if values.len() != mesh.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: mesh.num_nodes(),
                found: values.len(),
            });
        }
        Ok(Self {
            mesh,
            values,
            time,
            form,
        })
    }

    pub fn zeros(mesh: Arc<TriMesh>, time: f64, form: Formulation) -> Self {
        let values = vec![0.0; mesh.num_nodes()];
        Self {
            mesh,
            values,
            time,
            form,
        }
    }

    /// Nodal samples of `f`.
    pub fn from_fn(
        mesh: Arc<TriMesh>,
        time: f64,
        form: Formulation,
        f: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let values = mesh.nodes().iter().map(|p| f(p[0], p[1])).collect();
        Self {
            mesh,
            values,
            time,
            form,
        }
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    pub fn interpolate(&self, p: [f64; 2]) -> f64 {
        self.mesh.interpolate(&self.values, p)
    }

    pub fn interior_values(&self) -> Vec<f64> {
        self.mesh.restrict(&self.values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
