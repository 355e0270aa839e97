//! Element shape quality and the discrete well-posedness conditions.

use nalgebra::DMatrix;

use super::{Point, SurfaceMesh};

#[derive(Clone, Debug)]
pub struct MeshQualityReport {
    /// Largest circumcircle-to-incircle diameter ratio; 2 for equilateral triangles.
    pub sigma_max: f64,
    pub min_area: f64,
    pub per_triangle_ratio: Vec<f64>,
    /// Triangles whose ratio could not be formed (zero area).
    pub degenerate: Vec<usize>,
}

/// `h(K) / r(K)` with `h` the circumdiameter and `r` the incircle diameter.
///
/// Returns `+inf` for a triangle with zero area.
pub fn triangle_ratio(a: Point, b: Point, c: Point) -> f64 {
    let (la, lb, lc) = ((b - c).norm(), (c - a).norm(), (a - b).norm());
    let area = 0.5 * (b - a).cross(&(c - a)).norm();
    if !(area > 0.0) {
        return f64::INFINITY;
    }
    let circumradius = la * lb * lc / (4.0 * area);
    let inradius = area / (0.5 * (la + lb + lc));
    circumradius / inradius
}

pub fn mesh_quality(mesh: &SurfaceMesh) -> MeshQualityReport {
    let mut per_triangle_ratio = Vec::with_capacity(mesh.num_triangles());
    let mut degenerate = Vec::new();
    let mut min_area = f64::INFINITY;
    for k in 0..mesh.num_triangles() {
        let [a, b, c] = mesh.corners(k);
        let r = triangle_ratio(a, b, c);
        if !r.is_finite() {
            degenerate.push(k);
        }
        per_triangle_ratio.push(r);
        min_area = min_area.min(mesh.triangle_area(k));
    }
    let sigma_max = per_triangle_ratio.iter().copied().fold(0.0, f64::max);
    MeshQualityReport { sigma_max, min_area, per_triangle_ratio, degenerate }
}

#[derive(Clone, Debug)]
pub struct AdmissibilityReport {
    /// Every element area above the degeneracy threshold.
    pub a1: bool,
    /// Averaged normals nonzero everywhere and spanning all three directions.
    pub a2: bool,
    pub normal_rank: usize,
    pub singular_values: [f64; 3],
    pub zero_normal_vertices: Vec<usize>,
    pub degenerate_triangles: Vec<usize>,
}

impl AdmissibilityReport {
    pub fn passes(&self) -> bool {
        self.a1 && self.a2
    }
}

/// Evaluates (A1) nondegeneracy and (A2) the rank of the averaged vertex normals.
///
/// The rank counts singular values of the `3 x N` normal matrix above
/// `1e-10` times the largest one.
pub fn check_admissible(mesh: &SurfaceMesh) -> AdmissibilityReport {
    let degenerate_triangles: Vec<usize> =
        (0..mesh.num_triangles()).filter(|&k| !(mesh.triangle_area(k) > mesh.eps_area())).collect();
    let normals = averaged_normals_tolerant(mesh);
    let zero_normal_vertices: Vec<usize> =
        normals.iter().enumerate().filter(|(_, n)| !(n.norm() > 1e-12)).map(|(i, _)| i).collect();
    let stacked = DMatrix::from_fn(normals.len(), 3, |i, c| normals[i][c]);
    let mut sv: Vec<f64> = stacked.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let largest = sv[0];
    let normal_rank = sv.iter().filter(|&&s| s > 0.0 && s > 1e-10 * largest).count();
    AdmissibilityReport {
        a1: degenerate_triangles.is_empty(),
        a2: zero_normal_vertices.is_empty() && normal_rank == 3,
        normal_rank,
        singular_values: [sv[0], sv[1], sv[2]],
        zero_normal_vertices,
        degenerate_triangles,
    }
}

fn averaged_normals_tolerant(mesh: &SurfaceMesh) -> Vec<Point> {
    let mut acc = vec![Point::zeros(); mesh.num_vertices()];
    let mut w = vec![0.0; mesh.num_vertices()];
    for (k, t) in mesh.triangles().iter().enumerate() {
        let [a, b, c] = mesh.corners(k);
        let cross = (b - a).cross(&(c - a));
        for &i in t {
            acc[i] += 0.5 * cross;
            w[i] += 0.5 * cross.norm();
        }
    }
    acc.iter().zip(&w).map(|(a, w)| if *w > 0.0 { a / *w } else { Point::zeros() }).collect()
}
