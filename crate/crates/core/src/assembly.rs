//! P1 finite element matrices on the interior (homogeneous Dirichlet) space.
//!
//! Every element integrand is a polynomial of total degree at most two, so
//! the edge-midpoint rule makes all matrices exact.

use crate::error::{invalid, Result};
use crate::mesh::{Formulation, TriMesh};
use crate::sparse::{CsrMatrix, dot};

/// Which nodes a matrix is assembled over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Space {
    Interior,
    Full,
}

/// Local element data handed to the integrand closures.
struct ElementData {
    area: f64,
    grads: [[f64; 2]; 3],
    /// Quadrature points with weights; basis values at edge midpoints.
    quad: [([f64; 2], f64); 3],
}

/// Basis values at the three edge midpoints returned by
/// [`crate::mesh::triangle_quadrature`] (order: ab, bc, ca).
const MIDPOINT_BASIS: [[f64; 3]; 3] = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];

fn assemble(
    mesh: &TriMesh,
    space: Space,
    local: impl Fn(&ElementData, usize, usize) -> f64,
) -> Result<CsrMatrix> {
    let dim = match space {
        Space::Interior => mesh.num_free(),
        Space::Full => mesh.num_nodes(),
    };
    let index = |node: usize| match space {
        Space::Interior => mesh.dof_of_node(node),
        Space::Full => Some(node),
    };
    let mut triplets = Vec::with_capacity(9 * mesh.num_elements());
    for (e, verts) in mesh.elements().iter().enumerate() {
        let data = ElementData {
            area: mesh.element_area(e),
            grads: mesh.element_gradients(e),
            quad: mesh.element_quadrature(e)?,
        };
        for (a, &na) in verts.iter().enumerate() {
            let Some(row) = index(na) else { continue };
            for (b, &nb) in verts.iter().enumerate() {
                let Some(col) = index(nb) else { continue };
                triplets.push((row, col, local(&data, a, b)));
            }
        }
    }
    CsrMatrix::from_triplets(dim, dim, &triplets)
}

fn mass_local(d: &ElementData, i: usize, j: usize) -> f64 {
    d.quad
        .iter()
        .zip(MIDPOINT_BASIS)
        .map(|((_, w), phi)| w * phi[i] * phi[j])
        .sum()
}

/// Consistent mass matrix on interior nodes.
pub fn assemble_mass(mesh: &TriMesh) -> Result<CsrMatrix> {
    assemble(mesh, Space::Interior, mass_local)
}

/// Consistent mass matrix on all nodes (before Dirichlet reduction).
pub fn assemble_mass_full(mesh: &TriMesh) -> Result<CsrMatrix> {
    assemble(mesh, Space::Full, mass_local)
}

/// The mesh-dependent pieces from which every spatial form is recombined.
#[derive(Debug, Clone)]
pub struct OperatorBlocks {
    pub mass: CsrMatrix,
    /// `(d_v u, d_v w)`.
    pub vv: CsrMatrix,
    /// `(d_v u, d_z w) + (d_z u, d_v w)`.
    pub cross: CsrMatrix,
    /// `(d_z u, d_z w)`.
    pub zz: CsrMatrix,
    /// `((v/2) d_v u + (3z/2) d_z u, w)`.
    pub advection: CsrMatrix,
}

impl OperatorBlocks {
    pub fn new(mesh: &TriMesh) -> Result<Self> {
        Ok(Self {
            mass: assemble_mass(mesh)?,
            vv: assemble(mesh, Space::Interior, |d, i, j| d.area * d.grads[i][0] * d.grads[j][0])?,
            cross: assemble(mesh, Space::Interior, |d, i, j| {
                d.area * (d.grads[j][0] * d.grads[i][1] + d.grads[j][1] * d.grads[i][0])
            })?,
            zz: assemble(mesh, Space::Interior, |d, i, j| d.area * d.grads[i][1] * d.grads[j][1])?,
            advection: assemble(mesh, Space::Interior, |d, i, j| {
                let gj = d.grads[j];
                d.quad
                    .iter()
                    .zip(MIDPOINT_BASIS)
                    .map(|(([v, z], w), phi)| w * (0.5 * v * gj[0] + 1.5 * z * gj[1]) * phi[i])
                    .sum()
            })?,
        })
    }

    /// `a_t = vv + t cross + t^2 zz`.
    pub fn lagrangian(&self, t: f64) -> Result<CsrMatrix> {
        CsrMatrix::linear_combination(&[(1.0, &self.vv), (t, &self.cross), (t * t, &self.zz)])
    }

    /// Matrix of `-K_1` in weak form at self-similar time `s`:
    /// `vv + A cross + A^2 zz - advection - sigma1 mass`, `A = 1 - e^{-s}`.
    pub fn selfsimilar(&self, s: f64, sigma1: f64) -> Result<CsrMatrix> {
        let a = shear_factor(s);
        CsrMatrix::linear_combination(&[
            (1.0, &self.vv),
            (a, &self.cross),
            (a * a, &self.zz),
            (-1.0, &self.advection),
            (-sigma1, &self.mass),
        ])
    }
}

/// `A(s) = 1 - e^{-s}`.
pub fn shear_factor(s: f64) -> f64 {
    -(-s).exp_m1()
}

/// Stiffness matrix of `a_t(g, w) = ((d_v + t d_z) g, (d_v + t d_z) w)`.
pub fn assemble_lagrangian(mesh: &TriMesh, t: f64) -> Result<CsrMatrix> {
    if !(t >= 0.0) {
        return Err(invalid("t", format!("time must be non-negative, got {t}")));
    }
    let blocks = assemble(mesh, Space::Interior, |d, i, j| {
        let di = d.grads[i][0] + t * d.grads[i][1];
        let dj = d.grads[j][0] + t * d.grads[j][1];
        d.area * di * dj
    })?;
    Ok(blocks)
}

/// The v-direction diffusion matrix `(d_v u, d_v w)`.
pub fn assemble_heat_v(mesh: &TriMesh) -> Result<CsrMatrix> {
    assemble_lagrangian(mesh, 0.0)
}

/// Weak form of `-K_1` for the self-similar equation; see
/// [`OperatorBlocks::selfsimilar`].
pub fn assemble_selfsimilar_k1(mesh: &TriMesh, s: f64, sigma1: f64) -> Result<CsrMatrix> {
    check_sigma1(sigma1)?;
    if !(s >= 0.0) {
        return Err(invalid("s", format!("time must be non-negative, got {s}")));
    }
    OperatorBlocks::new(mesh)?.selfsimilar(s, sigma1)
}

fn check_sigma1(sigma1: f64) -> Result<()> {
    if sigma1 <= 1.0 {
        Ok(())
    } else {
        Err(invalid("sigma1", format!("must be <= 1 for coercivity, got {sigma1}")))
    }
}

/// Mass matrix plus the spatial form at one assembly time.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub mass: CsrMatrix,
    pub a: CsrMatrix,
    pub time: f64,
    pub form: Formulation,
}

impl OperatorSet {
    /// Assembles the form used by `form` at `time`; `sigma1` only matters for
    /// the self-similar form.
    pub fn assemble(mesh: &TriMesh, form: Formulation, time: f64, sigma1: f64) -> Result<Self> {
        let a = match form {
            Formulation::Original => assemble_heat_v(mesh)?,
            Formulation::Lagrangian => assemble_lagrangian(mesh, time)?,
            Formulation::SelfSimilar => assemble_selfsimilar_k1(mesh, time, sigma1)?,
        };
        Ok(Self {
            mass: assemble_mass(mesh)?,
            a,
            time,
            form,
        })
    }
}

/// Splitting parameters of the self-similar scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitParams {
    pub sigma1: f64,
    pub sigma2: f64,
    pub theta: f64,
}

impl SplitParams {
    pub fn new(sigma1: f64, theta: f64) -> Result<Self> {
        check_sigma1(sigma1)?;
        if !(0.0..=1.0).contains(&theta) {
            return Err(invalid("theta", format!("must lie in [0, 1], got {theta}")));
        }
        Ok(Self {
            sigma1,
            sigma2: 2.0 - sigma1,
            theta,
        })
    }
}

impl Default for SplitParams {
    fn default() -> Self {
        Self {
            sigma1: 1.0,
            sigma2: 1.0,
            theta: 0.5,
        }
    }
}

/// `sqrt(x^T M x)`, the L2 norm of the P1 function with coefficients `x`.
pub fn mass_norm(mass: &CsrMatrix, x: &[f64]) -> Result<f64> {
    let mx = mass.matvec(x)?;
    Ok(dot(x, &mx).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::RectDomain;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn mesh(n: usize) -> TriMesh {
        TriMesh::structured(RectDomain::new(-1.5, 2.0, -1.0, 1.5).unwrap(), n).unwrap()
    }

    fn random_interior(mesh: &TriMesh, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..mesh.num_free()).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// `int ((d_v + c d_z) u)^2` computed from the constant element gradients.
    fn directional_energy(mesh: &TriMesh, interior: &[f64], c: f64) -> f64 {
        let full = mesh.expand(interior);
        let mut total = 0.0;
        for (e, verts) in mesh.elements().iter().enumerate() {
            let g = mesh.element_gradients(e);
            let mut grad = [0.0; 2];
            for (k, &node) in verts.iter().enumerate() {
                grad[0] += full[node] * g[k][0];
                grad[1] += full[node] * g[k][1];
            }
            let d = grad[0] + c * grad[1];
            total += mesh.element_area(e) * d * d;
        }
        total
    }

    /// `int u^2` via a 7-point degree-5 triangle rule (exact for P1 squared).
    fn l2_squared(mesh: &TriMesh, interior: &[f64]) -> f64 {
        let full = mesh.expand(interior);
        let mut total = 0.0;
        for (e, verts) in mesh.elements().iter().enumerate() {
            let area = mesh.element_area(e);
            let u: Vec<f64> = verts.iter().map(|&k| full[k]).collect();
            // Vertex/centroid formula: exact for quadratics.
            let sq: f64 = u.iter().map(|x| x * x).sum();
            let cross = u[0] * u[1] + u[1] * u[2] + u[0] * u[2];
            total += area / 6.0 * (sq + cross);
        }
        total
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn reference_element_mass() {
        let dom = RectDomain::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let m = TriMesh::structured(dom, 1).unwrap();
        let full = assemble_mass_full(&m).unwrap();
        // Nodes 0 and 3 lie on the diagonal shared by both triangles of area 1/2.
        let t = 0.5;
        assert!((full.get(1, 1) - 2.0 * t / 12.0).abs() < 1e-15);
        assert!((full.get(0, 0) - 4.0 * t / 12.0).abs() < 1e-15);
        assert!((full.get(0, 1) - t / 12.0).abs() < 1e-15);
        assert!((full.get(0, 3) - 2.0 * t / 12.0).abs() < 1e-15);
        assert!((full.get(2, 3) - t / 12.0).abs() < 1e-15);
        assert_eq!(full.get(1, 2), 0.0);
    }

    #[test]
    fn mass_integrates_one() {
        let m = mesh(7);
        let full = assemble_mass_full(&m).unwrap();
        let ones = vec![1.0; m.num_nodes()];
        let total = full.quadratic_form(&ones).unwrap();
        assert!(rel(total, m.domain().area()) < 1e-13);
        assert_eq!(full.asymmetry(), 0.0);
        assert_eq!(assemble_mass(&m).unwrap().asymmetry(), 0.0);
    }

    #[test]
    fn mass_matches_l2_norm() {
        let m = mesh(9);
        let mass = assemble_mass(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let x = random_interior(&m, &mut rng);
            assert!(rel(mass.quadratic_form(&x).unwrap(), l2_squared(&m, &x)) < 1e-12);
        }
    }

    #[test]
    fn lagrangian_at_zero_is_v_stiffness() {
        let m = mesh(6);
        let a = assemble_lagrangian(&m, 0.0).unwrap();
        let b = OperatorBlocks::new(&m).unwrap();
        assert_eq!(a.to_dense(), b.vv.to_dense());
        assert_eq!(assemble_heat_v(&m).unwrap().to_dense(), a.to_dense());
    }

    #[test]
    fn lagrangian_form_is_a_perfect_square() {
        let m = mesh(10);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for t in [0.0, 0.4, 1.0, 3.7] {
            let a = assemble_lagrangian(&m, t).unwrap();
            assert_eq!(a.asymmetry(), 0.0, "t={t}");
            for _ in 0..20 {
                let x = random_interior(&m, &mut rng);
                let q = a.quadratic_form(&x).unwrap();
                assert!(rel(q, directional_energy(&m, &x, t)) < 1e-12, "t={t}");
            }
        }
    }

    #[test]
    fn lagrangian_blocks_agree_with_direct_assembly() {
        let m = mesh(8);
        let b = OperatorBlocks::new(&m).unwrap();
        for t in [0.0, 1.3, 3.7] {
            let direct = assemble_lagrangian(&m, t).unwrap().to_dense();
            let combined = b.lagrangian(t).unwrap().to_dense();
            for (r1, r2) in direct.iter().zip(&combined) {
                for (x, y) in r1.iter().zip(r2) {
                    assert!((x - y).abs() < 1e-12 * (1.0 + x.abs()));
                }
            }
        }
    }

    #[test]
    fn lagrangian_rejects_negative_time() {
        assert!(assemble_lagrangian(&mesh(2), -0.1).is_err());
    }

    #[test]
    fn heat_matrix_is_positive_semidefinite() {
        let m = mesh(12);
        let a = assemble_heat_v(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            assert!(a.quadratic_form(&random_interior(&m, &mut rng)).unwrap() >= 0.0);
        }
    }

    #[test]
    fn heat_energy_of_sine_product() {
        let dom = RectDomain::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let m = TriMesh::structured(dom, 64).unwrap();
        let a = assemble_heat_v(&m).unwrap();
        let u: Vec<f64> = m
            .free_nodes()
            .iter()
            .map(|&k| {
                let [v, z] = m.nodes()[k];
                (PI * v).sin() * (PI * z).sin()
            })
            .collect();
        let energy = a.quadratic_form(&u).unwrap();
        assert!(rel(energy, PI * PI / 4.0) < 0.02, "{energy}");
    }

    #[test]
    fn selfsimilar_at_zero_has_no_shear() {
        let m = mesh(6);
        let b = OperatorBlocks::new(&m).unwrap();
        let k = assemble_selfsimilar_k1(&m, 0.0, 0.7).unwrap();
        let expected = CsrMatrix::linear_combination(&[(1.0, &b.vv), (-1.0, &b.advection), (-0.7, &b.mass)]).unwrap();
        let (kd, ed) = (k.to_dense(), expected.to_dense());
        for (r1, r2) in kd.iter().zip(&ed) {
            for (x, y) in r1.iter().zip(r2) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn selfsimilar_energy_identity() {
        let m = mesh(10);
        let mass = assemble_mass(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for s in [0.0, 0.5, 2.0] {
            for sigma1 in [1.0, 0.5, -0.3] {
                let k = assemble_selfsimilar_k1(&m, s, sigma1).unwrap();
                for _ in 0..20 {
                    let x = random_interior(&m, &mut rng);
                    let expected =
                        directional_energy(&m, &x, shear_factor(s)) + (1.0 - sigma1) * mass.quadratic_form(&x).unwrap();
                    let q = k.quadratic_form(&x).unwrap();
                    assert!(rel(q, expected) < 1e-12, "s={s} sigma1={sigma1}: {q} vs {expected}");
                }
            }
        }
    }

    #[test]
    fn advection_symmetric_part_is_minus_mass() {
        let m = mesh(11);
        let b = OperatorBlocks::new(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x = random_interior(&m, &mut rng);
            let bx = b.advection.quadratic_form(&x).unwrap();
            let mx = b.mass.quadratic_form(&x).unwrap();
            assert!(rel(2.0 * bx, -2.0 * mx) < 1e-12);
        }
    }

    #[test]
    fn coercivity_threshold() {
        let m = mesh(10);
        assert!(assemble_selfsimilar_k1(&m, 1.0, 1.0 + 1e-6).is_err());
        let b = OperatorBlocks::new(&m).unwrap();
        let s = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // The zeroth-order part of the identity, (1 - sigma1)||u||^2, turns
        // negative as soon as sigma1 exceeds one.
        for (sigma1, negative) in [(1.0 + 1e-6, true), (1.0, false), (0.0, false), (-2.0, false)] {
            let reaction = CsrMatrix::linear_combination(&[(-1.0, &b.advection), (-sigma1, &b.mass)]).unwrap();
            let k = b.selfsimilar(s, sigma1).unwrap();
            for _ in 0..20 {
                let x = random_interior(&m, &mut rng);
                let r = reaction.quadratic_form(&x).unwrap();
                if negative {
                    assert!(r < 0.0, "sigma1={sigma1}: {r}");
                } else {
                    assert!(r >= -1e-12 * b.mass.quadratic_form(&x).unwrap());
                    assert!(k.quadratic_form(&x).unwrap() >= 0.0);
                }
            }
        }
    }

    #[test]
    fn bandwidth_matches_structured_mesh() {
        let n = 9;
        let m = mesh(n);
        let b = OperatorBlocks::new(&m).unwrap();
        for mat in [&b.mass, &b.vv, &b.cross, &b.zz, &b.advection] {
            assert!(mat.bandwidth() <= 2 * (n + 1) + 2);
        }
    }

    #[test]
    fn split_params_validation() {
        let p = SplitParams::new(0.5, 0.5).unwrap();
        assert_eq!(p.sigma1 + p.sigma2, 2.0);
        assert!(SplitParams::new(1.5, 0.5).is_err());
        assert!(SplitParams::new(1.0, 1.2).is_err());
        assert!(SplitParams::new(1.0, -0.1).is_err());
    }
}
