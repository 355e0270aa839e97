//! Finite-element operators on a fixed triangulated surface.
//!
//! Vector fields are stored interleaved: degree of freedom `3 * i + c` is
//! component `c` at vertex `i`. All element quantities use the constant
//! gradients of P1 hat functions on flat triangles, so every integral below
//! is exact except where mass lumping is applied on purpose.

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{projected_shoelace, ElementGeometry, MeshError, Point, SurfaceMesh};
use crate::solver::{CsrMatrix, TripletMatrix};

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("averaged normal vanishes at vertex {0}")]
    ZeroNormal(usize),
    #[error("boundary loop has {0} vertices, at least 3 are needed")]
    ShortLoop(usize),
    #[error("non-finite operator entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

/// Bilinear form used to select the tangential motion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TangentialForm {
    /// `∫ ∇v · ∇η`, component-wise.
    #[default]
    FullGradient,
    /// `½ ∫ (∇v + ∇vᵀ) : (∇η + ∇ηᵀ)`.
    SymmetricGradient,
}

#[derive(Clone, Debug)]
pub struct OperatorSet {
    pub form: TangentialForm,
    /// `M_i = Σ_{K∋i} |K| / 3`.
    pub lumped_mass: Vec<f64>,
    /// `Nvec_i = Σ_{K∋i} |K| / 3 n_K`.
    pub lumped_normal: Vec<Point>,
    /// Scalar stiffness, `N x N`.
    pub stiffness: CsrMatrix,
    /// Component-wise stiffness `A ⊗ I3`, `3N x 3N`.
    pub vector_stiffness: CsrMatrix,
    /// `3N x 3N`; equals `vector_stiffness` for the full-gradient form.
    pub tangential_form: CsrMatrix,
    /// `Σ_{K∋i} |K| / 3 n_K n_Kᵀ`.
    pub bgn_normal_blocks: Vec<Matrix3<f64>>,
    /// `A3 x` with `x` the vertex positions.
    pub rhs_geometry: Vec<f64>,
}

impl OperatorSet {
    pub fn num_vertices(&self) -> usize {
        self.lumped_mass.len()
    }

    /// `n̂_i = Nvec_i / M_i`, the lumped projection of the face normals.
    pub fn averaged_normals(&self) -> Vec<Point> {
        self.lumped_normal.iter().zip(&self.lumped_mass).map(|(n, m)| n / *m).collect()
    }
}

/// Validated per-element geometry, failing on the first degenerate triangle.
pub fn element_geometry(mesh: &SurfaceMesh) -> Result<Vec<ElementGeometry>, AssemblyError> {
    (0..mesh.num_triangles())
        .map(|k| {
            let (_, area) = mesh.face_normal_and_area(k)?;
            ElementGeometry::from_corners(mesh.corners(k)).ok_or(AssemblyError::Mesh(MeshError::Degenerate {
                triangle: k,
                area,
                threshold: mesh.eps_area(),
            }))
        })
        .collect()
}

struct ElementContribution {
    stiffness: [[f64; 3]; 3],
    /// `|K| ∇φ_k[a] ∇φ_l[b]`, indexed `[l][a][k][b]` for row `(l, a)`, column `(k, b)`.
    sym_extra: Option<[[[[f64; 3]; 3]; 3]; 3]>,
}

fn element_contribution(g: &ElementGeometry, form: TangentialForm) -> ElementContribution {
    let stiffness = std::array::from_fn(|i| std::array::from_fn(|j| g.area * g.grads[i].dot(&g.grads[j])));
    let sym_extra = (form == TangentialForm::SymmetricGradient).then(|| {
        std::array::from_fn(|l| {
            std::array::from_fn(|a| {
                std::array::from_fn(|k| std::array::from_fn(|b| g.area * g.grads[k][a] * g.grads[l][b]))
            })
        })
    });
    ElementContribution { stiffness, sym_extra }
}

/// Assembles every operator needed by the schemes on `mesh`.
///
/// Elements are evaluated in parallel and merged in element order, so the
/// result does not depend on the thread count.
pub fn assemble_operators(mesh: &SurfaceMesh, form: TangentialForm) -> Result<OperatorSet, AssemblyError> {
    let n = mesh.num_vertices();
    let geometry = element_geometry(mesh)?;
    let contributions: Vec<ElementContribution> = geometry.par_iter().map(|g| element_contribution(g, form)).collect();

    let mut lumped_mass = vec![0.0; n];
    let mut lumped_normal = vec![Point::zeros(); n];
    let mut bgn_normal_blocks = vec![Matrix3::zeros(); n];
    let mut a = TripletMatrix::with_capacity(n, n, 9 * mesh.num_triangles());
    let mut a3 = TripletMatrix::with_capacity(3 * n, 3 * n, 27 * mesh.num_triangles());
    let mut extra = TripletMatrix::new(3 * n, 3 * n);
    for ((t, g), c) in mesh.triangles().iter().zip(&geometry).zip(&contributions) {
        let nn = g.normal * g.normal.transpose();
        for &i in t {
            lumped_mass[i] += g.area / 3.0;
            lumped_normal[i] += g.normal * (g.area / 3.0);
            bgn_normal_blocks[i] += nn * (g.area / 3.0);
        }
        for (li, &i) in t.iter().enumerate() {
            for (lj, &j) in t.iter().enumerate() {
                let s = c.stiffness[li][lj];
                a.push(i, j, s);
                for comp in 0..3 {
                    a3.push(3 * i + comp, 3 * j + comp, s);
                }
            }
        }
        if let Some(e) = &c.sym_extra {
            for (l, &vl) in t.iter().enumerate() {
                for ca in 0..3 {
                    for (k, &vk) in t.iter().enumerate() {
                        for cb in 0..3 {
                            extra.push(3 * vl + ca, 3 * vk + cb, e[l][ca][k][cb]);
                        }
                    }
                }
            }
        }
    }
    let stiffness = a.to_csr().map_err(non_finite)?;
    let tangential_form = match form {
        TangentialForm::FullGradient => None,
        TangentialForm::SymmetricGradient => {
            let mut g = a3.clone();
            g.extend(extra);
            Some(g.to_csr().map_err(non_finite)?)
        }
    };
    let vector_stiffness = a3.to_csr().map_err(non_finite)?;
    let tangential_form = tangential_form.unwrap_or_else(|| vector_stiffness.clone());
    let x: Vec<f64> = mesh.vertices().iter().flat_map(|p| [p.x, p.y, p.z]).collect();
    let rhs_geometry = vector_stiffness.spmv(&x);
    Ok(OperatorSet {
        form,
        lumped_mass,
        lumped_normal,
        stiffness,
        vector_stiffness,
        tangential_form,
        bgn_normal_blocks,
        rhs_geometry,
    })
}

fn non_finite(e: crate::solver::SolveError) -> AssemblyError {
    match e {
        crate::solver::SolveError::NonFinite { row, col } => AssemblyError::NonFinite { row, col },
        other => unreachable!("triplet compression only fails on non-finite entries: {other}"),
    }
}

/// `Σ_K |K|/3 Σ_j values[K][j]`: the lumped quadrature of a field given by
/// its value at each corner of each triangle.
pub fn mass_lumped_integral(mesh: &SurfaceMesh, values: &[[f64; 3]]) -> f64 {
    assert_eq!(values.len(), mesh.num_triangles(), "one value triple per triangle");
    values.iter().enumerate().map(|(k, v)| mesh.triangle_area(k) / 3.0 * (v[0] + v[1] + v[2])).sum()
}

/// Consistent (non-lumped) vector mass matrix `∫ v · η`, `3N x 3N`.
pub fn consistent_vector_mass(mesh: &SurfaceMesh) -> Result<CsrMatrix, AssemblyError> {
    let n = mesh.num_vertices();
    let geometry = element_geometry(mesh)?;
    let mut m = TripletMatrix::with_capacity(3 * n, 3 * n, 27 * mesh.num_triangles());
    for (t, g) in mesh.triangles().iter().zip(&geometry) {
        for (li, &i) in t.iter().enumerate() {
            for (lj, &j) in t.iter().enumerate() {
                let w = if li == lj { g.area / 6.0 } else { g.area / 12.0 };
                for c in 0..3 {
                    m.push(3 * i + c, 3 * j + c, w);
                }
            }
        }
    }
    m.to_csr().map_err(non_finite)
}

/// Operators of the MDR normal-velocity row.
#[derive(Clone, Debug)]
pub struct MdrConstraint {
    /// `M_i n̂_i`: the lumped pairing `∫^(h) (v · n̂) φ_i`.
    pub pairing: Vec<Point>,
    /// `N x 3N`: entry `(i, 3j + c)` is `∫ ∇(φ_j e_c) · ∇(φ_i n̂)`.
    pub coupling: CsrMatrix,
}

/// Assembles `∫^(h)(v·n̂)φ` and `∫ ∇X · ∇(φ n̂)` for the given nodal `n_hat`.
///
/// `∇(φ_i n̂)` is affine on each element and `∇X` is constant, so the
/// element integral is the area times the integrand at the centroid.
pub fn mdr_constraint_row(mesh: &SurfaceMesh, n_hat: &[Point]) -> Result<MdrConstraint, AssemblyError> {
    let n = mesh.num_vertices();
    assert_eq!(n_hat.len(), n, "one normal per vertex");
    if let Some(i) = n_hat.iter().position(|v| !(v.norm() > 0.0)) {
        return Err(AssemblyError::ZeroNormal(i));
    }
    let geometry = element_geometry(mesh)?;
    let mut pairing = vec![Point::zeros(); n];
    let mut d = TripletMatrix::with_capacity(n, 3 * n, 27 * mesh.num_triangles());
    for (t, g) in mesh.triangles().iter().zip(&geometry) {
        let centroid_normal = (n_hat[t[0]] + n_hat[t[1]] + n_hat[t[2]]) / 3.0;
        for &i in t {
            pairing[i] += n_hat[i] * (g.area / 3.0);
        }
        for (li, &i) in t.iter().enumerate() {
            for c in 0..3 {
                // gradient of the c-th component of φ_i n̂ at the centroid
                let mut grad = g.grads[li] * centroid_normal[c];
                for (lk, &k) in t.iter().enumerate() {
                    grad += g.grads[lk] * (n_hat[k][c] / 3.0);
                }
                for (lj, &j) in t.iter().enumerate() {
                    d.push(i, 3 * j + c, g.area * g.grads[lj].dot(&grad));
                }
            }
        }
    }
    Ok(MdrConstraint { pairing, coupling: d.to_csr().map_err(non_finite)? })
}

/// `n̂_i = Nvec_i / M_i`, rejecting vertices where it vanishes.
pub fn lumped_normal_projection(mesh: &SurfaceMesh) -> Result<Vec<Point>, AssemblyError> {
    element_geometry(mesh)?;
    let n_hat = mesh.averaged_vertex_normals();
    match n_hat.iter().position(|v| !(v.norm() > 1e-12)) {
        Some(i) => Err(AssemblyError::ZeroNormal(i)),
        None => Ok(n_hat),
    }
}

/// Contact-line terms for an open surface resting on `z = 0`.
///
/// With `X = id + τ v` and `n_∂ = ½(∂_s id + ∂_s X) × e3` integrated over the
/// current boundary, `∫ n_∂ · w ds = load(w) + (τ/2) coupling(v, w)`.
#[derive(Clone, Debug)]
pub struct BoundaryTerms {
    pub cos_theta: f64,
    pub sin_theta: f64,
    /// Per-vertex vector; `load(w) = Σ_i load_i · w_i`.
    pub load: Vec<Point>,
    /// `3N x 3N`, row index from `w`, column index from `v`.
    pub coupling: CsrMatrix,
    /// Half the length of the incident boundary edges, per vertex.
    pub half_edge_length: Vec<f64>,
}

/// `cos θ`, snapped to exactly zero at right angles so that the boundary
/// terms vanish identically there.
pub fn contact_cos(theta: f64) -> f64 {
    let c = theta.cos();
    if c.abs() < 1e-15 {
        0.0
    } else {
        c
    }
}

pub fn boundary_conormal_terms(mesh: &SurfaceMesh, theta: f64) -> Result<BoundaryTerms, AssemblyError> {
    mesh.check_boundary_on_substrate()?;
    let n = mesh.num_vertices();
    let e3 = Point::z();
    let mut load = vec![Point::zeros(); n];
    let mut half_edge_length = vec![0.0; n];
    let mut c = TripletMatrix::new(3 * n, 3 * n);
    for lp in mesh.boundary_loops() {
        for (idx, &p) in lp.iter().enumerate() {
            let q = lp[(idx + 1) % lp.len()];
            let edge = mesh.vertices()[q] - mesh.vertices()[p];
            let outward = edge.cross(&e3);
            load[p] += outward * 0.5;
            load[q] += outward * 0.5;
            half_edge_length[p] += 0.5 * edge.norm();
            half_edge_length[q] += 0.5 * edge.norm();
            // ((v_q - v_p) × e3) · (w_p + w_q) / 2; (u × e3) = (u_y, -u_x, 0)
            for &row in &[p, q] {
                for (col, sign) in [(q, 0.5), (p, -0.5)] {
                    c.push(3 * row, 3 * col + 1, sign);
                    c.push(3 * row + 1, 3 * col, -sign);
                }
            }
        }
    }
    Ok(BoundaryTerms {
        cos_theta: contact_cos(theta),
        sin_theta: theta.sin(),
        load,
        coupling: c.to_csr().map_err(non_finite)?,
        half_edge_length,
    })
}

/// Signed area enclosed by a loop in `z = 0`; positive when counter-clockwise
/// seen from `+z`.
pub fn substrate_area(loop_positions: &[Point]) -> Result<f64, AssemblyError> {
    if loop_positions.len() < 3 {
        return Err(AssemblyError::ShortLoop(loop_positions.len()));
    }
    Ok(projected_shoelace(loop_positions))
}

/// Total signed substrate area over all boundary loops of `mesh`.
pub fn mesh_substrate_area(mesh: &SurfaceMesh) -> Result<f64, AssemblyError> {
    (0..mesh.boundary_loops().len()).map(|l| substrate_area(&mesh.loop_positions(l))).sum()
}

/// Flattens per-vertex vectors into interleaved degrees of freedom.
pub fn flatten(points: &[Point]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

pub fn unflatten(values: &[f64]) -> Vec<Point> {
    values.chunks_exact(3).map(|c| Point::new(c[0], c[1], c[2])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{gen_cuboid, gen_icosphere, gen_planar_grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn perturbed_sphere(s: u32, amp: f64, seed: u64) -> SurfaceMesh {
        let m = gen_icosphere(s, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = m.vertices().iter().map(|p| p * (1.0 + amp * rng.random_range(-1.0..1.0))).collect();
        m.with_vertices(v).unwrap()
    }

    fn random_field(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn unit_right_triangle_stiffness() {
        let m = SurfaceMesh::new(
            vec![Point::new(0.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0), Point::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let ops = assemble_operators(&m, TangentialForm::FullGradient).unwrap();
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((ops.stiffness.get(i, j) - expected[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_triangle_square_matches_hand_sum() {
        let m = gen_planar_grid(1, 1, 1.0, 1.0).unwrap();
        let ops = assemble_operators(&m, TangentialForm::FullGradient).unwrap();
        let mut dense = [[0.0; 4]; 4];
        for t in m.triangles() {
            // right isoceles with unit legs: the right-angle corner gets 1, others 1/2
            let p: Vec<Point> = t.iter().map(|&i| m.vertices()[i]).collect();
            for a in 0..3 {
                for b in 0..3 {
                    let ea = p[(a + 2) % 3] - p[(a + 1) % 3];
                    let eb = p[(b + 2) % 3] - p[(b + 1) % 3];
                    // ∇φ_a · ∇φ_b |K| = e_a · e_b / (4|K|)
                    dense[t[a]][t[b]] += ea.dot(&eb) / (4.0 * 0.5);
                }
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                assert!((ops.stiffness.get(i, j) - dense[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn operator_invariants_on_perturbed_sphere() {
        let m = perturbed_sphere(2, 0.05, 1);
        let ops = assemble_operators(&m, TangentialForm::FullGradient).unwrap();
        let n = m.num_vertices();
        for i in 0..n {
            let row: f64 = ops.stiffness.row(i).map(|(_, v)| v).sum();
            let scale: f64 = ops.stiffness.row(i).map(|(_, v)| v.abs()).sum();
            assert!(row.abs() <= 1e-12 * scale);
        }
        let total: f64 = ops.lumped_mass.iter().sum();
        assert!((total - m.surface_area()).abs() < 1e-13 * total);
        let nhat = m.averaged_vertex_normals();
        for i in 0..n {
            assert!(ops.lumped_mass[i] > 0.0);
            assert!((ops.lumped_normal[i] - nhat[i] * ops.lumped_mass[i]).norm() < 1e-12);
        }
        let g = ops.tangential_form.spmv(&[1.0, 2.0, 3.0].repeat(n));
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn lumped_mass_sum_on_closed_cuboid() {
        let m = gen_cuboid(1.0, 1.0, 8.0, 0.2, false).unwrap();
        let ops = assemble_operators(&m, TangentialForm::FullGradient).unwrap();
        assert!((ops.lumped_mass.iter().sum::<f64>() - 34.0).abs() < 1e-11);
    }

    #[test]
    fn full_gradient_form_is_componentwise_stiffness() {
        let m = perturbed_sphere(1, 0.1, 5);
        let ops = assemble_operators(&m, TangentialForm::FullGradient).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = random_field(3 * m.num_vertices(), &mut rng);
        let q = ops.tangential_form.bilinear(&v, &v);
        let by_component: f64 = (0..3)
            .map(|c| {
                let comp: Vec<f64> = v.iter().skip(c).step_by(3).copied().collect();
                ops.stiffness.bilinear(&comp, &comp)
            })
            .sum();
        assert!(q >= 0.0);
        assert!((q - by_component).abs() < 1e-12 * by_component);
    }

    /// Direct quadrature of `½ |D + Dᵀ|²` with `D = Σ_k ∇φ_k v_kᵀ`.
    fn symmetric_energy(m: &SurfaceMesh, v: &[Point]) -> f64 {
        let mut e = 0.0;
        for (k, t) in m.triangles().iter().enumerate() {
            let g = m.element(k);
            let mut d = Matrix3::zeros();
            for (l, &i) in t.iter().enumerate() {
                d += g.grads[l] * v[i].transpose();
            }
            e += g.area * 0.5 * (d + d.transpose()).norm_squared();
        }
        e
    }

    #[test]
    fn symmetric_gradient_form_matches_direct_quadrature() {
        let m = perturbed_sphere(1, 0.1, 2);
        let ops = assemble_operators(&m, TangentialForm::SymmetricGradient).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let flat = random_field(3 * m.num_vertices(), &mut rng);
        let q = ops.tangential_form.bilinear(&flat, &flat);
        let e = symmetric_energy(&m, &unflatten(&flat));
        assert!(q > 0.0);
        assert!((q - e).abs() < 1e-12 * e);
        let g = &ops.tangential_form;
        assert!(g.max_abs_diff(&g.transpose()) < 1e-14);
    }

    #[test]
    fn symmetric_gradient_kernel() {
        // constants on any surface; in-plane rotations on a flat patch
        let m = perturbed_sphere(2, 0.05, 4);
        let ops = assemble_operators(&m, TangentialForm::SymmetricGradient).unwrap();
        let c = [0.3, -1.0, 2.0].repeat(m.num_vertices());
        assert!(ops.tangential_form.spmv(&c).iter().all(|v| v.abs() < 1e-10));

        let flat = gen_planar_grid(5, 4, 1.0, 0.8).unwrap();
        let ops = assemble_operators(&flat, TangentialForm::SymmetricGradient).unwrap();
        let rot: Vec<Point> = flat.vertices().iter().map(|p| Point::z().cross(p)).collect();
        assert!(ops.tangential_form.spmv(&flatten(&rot)).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn bgn_blocks_match_corner_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..5 {
            let m = perturbed_sphere(1, 0.15, 20 + seed);
            let ops = assemble_operators(&m, TangentialForm::FullGradient).unwrap();
            let v = unflatten(&random_field(3 * m.num_vertices(), &mut rng));
            let eta = unflatten(&random_field(3 * m.num_vertices(), &mut rng));
            let corner: Vec<[f64; 3]> = m
                .triangles()
                .iter()
                .enumerate()
                .map(|(k, t)| {
                    let n = m.element(k).normal;
                    std::array::from_fn(|j| v[t[j]].dot(&n) * eta[t[j]].dot(&n))
                })
                .collect();
            let brute = mass_lumped_integral(&m, &corner);
            let blocks: f64 = (0..m.num_vertices()).map(|i| v[i].dot(&(ops.bgn_normal_blocks[i] * eta[i]))).sum();
            assert!((brute - blocks).abs() < 1e-12 * brute.abs().max(1.0));
            for b in &ops.bgn_normal_blocks {
                assert!((b - b.transpose()).norm() < 1e-15);
                assert!(b.symmetric_eigenvalues().iter().all(|&e| e > -1e-14));
            }
        }
    }

    #[test]
    fn lumped_integral_of_unit_integrands() {
        let m = perturbed_sphere(2, 0.05, 6);
        let ones = vec![[1.0; 3]; m.num_triangles()];
        assert!((mass_lumped_integral(&m, &ones) - m.surface_area()).abs() < 1e-12);
        let nn: Vec<[f64; 3]> = (0..m.num_triangles())
            .map(|k| {
                let n = m.element(k).normal;
                [n.dot(&n); 3]
            })
            .collect();
        assert!((mass_lumped_integral(&m, &nn) - m.surface_area()).abs() < 1e-12);
    }

    /// Three-point Gauss rule (degree 2) for `∫ ∇X · ∇(φ_i n̂)`.
    fn gauss_coupling(m: &SurfaceMesh, n_hat: &[Point], x: &[Point], phi: &[f64]) -> f64 {
        let pts =
            [[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0]];
        let mut total = 0.0;
        for (k, t) in m.triangles().iter().enumerate() {
            let g = m.element(k);
            // ∇X as a 3x3 matrix: row a is the gradient direction, column c the component
            let mut gx = Matrix3::zeros();
            for l in 0..3 {
                gx += g.grads[l] * x[t[l]].transpose();
            }
            for bary in pts {
                let phi_q: f64 = (0..3).map(|l| bary[l] * phi[t[l]]).sum();
                let n_q: Point = (0..3).map(|l| n_hat[t[l]] * bary[l]).sum();
                let mut gw = Matrix3::zeros();
                for l in 0..3 {
                    // ∇(φ n̂) = ∇φ n̂ᵀ + φ ∇n̂
                    gw += g.grads[l] * (n_q * phi[t[l]] + n_hat[t[l]] * phi_q).transpose();
                }
                total += g.area / 3.0 * gx.component_mul(&gw).sum();
            }
        }
        total
    }

    #[test]
    fn mdr_coupling_matches_gauss_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m = perturbed_sphere(2, 0.1, 7);
        let n_hat = m.averaged_vertex_normals();
        let row = mdr_constraint_row(&m, &n_hat).unwrap();
        let x = unflatten(&random_field(3 * m.num_vertices(), &mut rng));
        let phi = random_field(m.num_vertices(), &mut rng);
        let ours = row.coupling.bilinear(&phi, &flatten(&x));
        let oracle = gauss_coupling(&m, &n_hat, &x, &phi);
        assert!((ours - oracle).abs() < 1e-13 * oracle.abs().max(1.0), "{ours} {oracle}");
        let ops = assemble_operators(&m, TangentialForm::FullGradient).unwrap();
        for i in 0..m.num_vertices() {
            assert!((row.pairing[i] - ops.lumped_normal[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn mdr_coupling_trivial_cases() {
        let flat = gen_planar_grid(4, 3, 1.0, 1.0).unwrap();
        let n_hat = flat.averaged_vertex_normals();
        let row = mdr_constraint_row(&flat, &n_hat).unwrap();
        let dx = row.coupling.spmv(&flatten(flat.vertices()));
        assert!(dx.iter().all(|v| v.abs() < 1e-12));

        let m = perturbed_sphere(1, 0.1, 8);
        let c = vec![Point::new(0.2, -0.4, 0.9); m.num_vertices()];
        let row = mdr_constraint_row(&m, &c).unwrap();
        let ones = vec![1.0; m.num_vertices()];
        let x = flatten(m.vertices());
        assert!(row.coupling.bilinear(&ones, &x).abs() < 1e-12);

        let mut zero = m.averaged_vertex_normals();
        zero[3] = Point::zeros();
        assert!(matches!(mdr_constraint_row(&m, &zero), Err(AssemblyError::ZeroNormal(3))));
    }

    fn square_loop() -> Vec<Point> {
        vec![Point::new(0.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0), Point::new(1.0, 1.0, 0.0), Point::new(0.0, 1.0, 0.0)]
    }

    #[test]
    fn substrate_area_examples() {
        let sq = square_loop();
        assert!((substrate_area(&sq).unwrap() - 1.0).abs() < 1e-15);
        let rev: Vec<Point> = sq.iter().rev().copied().collect();
        assert!((substrate_area(&rev).unwrap() + 1.0).abs() < 1e-15);
        let rect = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(1.0, 6.0, 0.0),
            Point::new(0.0, 6.0, 0.0),
        ];
        assert!((substrate_area(&rect).unwrap() - 6.0).abs() < 1e-14);
        assert!(matches!(substrate_area(&sq[..2]), Err(AssemblyError::ShortLoop(2))));
    }

    /// An open fan over a planar polygon: centre vertex lifted, rim on z = 0.
    fn fan(rim: Vec<Point>) -> SurfaceMesh {
        let n = rim.len();
        let mut v = rim;
        let c: Point = v.iter().sum::<Point>() / n as f64 + Point::new(0.0, 0.0, 0.5);
        v.push(c);
        let t = (0..n).map(|i| [i, (i + 1) % n, n]).collect();
        SurfaceMesh::new(v, t).unwrap()
    }

    #[test]
    fn constant_test_field_has_zero_load() {
        let m = fan(square_loop());
        let b = boundary_conormal_terms(&m, 1.0).unwrap();
        let total: Point = b.load.iter().sum();
        assert!(total.norm() < 1e-15);
    }

    #[test]
    fn circle_limit_of_radial_flux() {
        // ∮ (t × e3) · x ds over a regular n-gon of circumradius 1 is 2 × area → 2π
        let n = 2000;
        let rim: Vec<Point> = (0..n)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                Point::new(a.cos(), a.sin(), 0.0)
            })
            .collect();
        let m = fan(rim);
        let b = boundary_conormal_terms(&m, 2.0).unwrap();
        let flux: f64 = (0..n).map(|i| b.load[i].dot(&m.vertices()[i])).sum();
        assert!((flux - 2.0 * std::f64::consts::PI).abs() < 1e-4, "{flux}");
    }

    #[test]
    fn coupling_of_identity_is_twice_shoelace() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let rim = star_polygon(&mut rng);
            let m = fan(rim.clone());
            let b = boundary_conormal_terms(&m, 2.0).unwrap();
            let x = flatten(m.vertices());
            let area = substrate_area(&rim).unwrap();
            assert!((b.coupling.bilinear(&x, &x) - 2.0 * area).abs() < 1e-12 * area);
        }
    }

    fn star_polygon(rng: &mut ChaCha8Rng) -> Vec<Point> {
        let n = rng.random_range(5..30);
        (0..n)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * (k as f64 + rng.random_range(-0.3..0.3)) / n as f64;
                let r = rng.random_range(0.5..1.5);
                Point::new(r * a.cos() + 0.3, r * a.sin() - 0.7, 0.0)
            })
            .collect()
    }

    #[test]
    fn exact_substrate_area_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..50 {
            let rim = star_polygon(&mut rng);
            let m = fan(rim.clone());
            let nv = m.num_vertices();
            let b = boundary_conormal_terms(&m, 2.0).unwrap();
            let d: Vec<Point> =
                (0..nv).map(|_| Point::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), 0.0)).collect();
            let df = flatten(&d);
            let lhs: f64 = (0..nv).map(|i| b.load[i].dot(&d[i])).sum::<f64>() + 0.5 * b.coupling.bilinear(&df, &df);
            let moved: Vec<Point> = rim.iter().zip(&d).map(|(p, q)| p + q).collect();
            let rhs = substrate_area(&moved).unwrap() - substrate_area(&rim).unwrap();
            let scale = substrate_area(&rim).unwrap();
            assert!((lhs - rhs).abs() < 1e-12 * scale, "{lhs} {rhs}");
        }
    }

    #[test]
    fn right_angle_snaps_to_zero() {
        assert_eq!(contact_cos(std::f64::consts::FRAC_PI_2), 0.0);
        assert!((contact_cos(2.0 * std::f64::consts::PI / 3.0) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn off_substrate_boundary_rejected() {
        let mut rim = square_loop();
        rim[2].z = 0.1;
        let m = fan(rim);
        assert!(matches!(boundary_conormal_terms(&m, 1.0), Err(AssemblyError::Mesh(MeshError::OffSubstrate { .. }))));
    }

    #[test]
    fn consistent_mass_total() {
        let m = perturbed_sphere(1, 0.1, 3);
        let mm = consistent_vector_mass(&m).unwrap();
        let ones = vec![1.0; 3 * m.num_vertices()];
        assert!((mm.bilinear(&ones, &ones) - 3.0 * m.surface_area()).abs() < 1e-12);
    }
}
