//! Triangulated surfaces: connectivity, boundary loops, per-element geometry.
//!
//! A [`SurfaceMesh`] is immutable once built. Every constructor runs the same
//! validation (index range, distinct corners, nondegenerate elements,
//! manifold and consistently oriented edges) and extracts the boundary loops,
//! each oriented counterclockwise when viewed from `+z`.

mod generate;
mod io;
mod quality;

pub use generate::{
    dumbbell_counts, dumbbell_grid_for_target, dumbbell_point, gen_cuboid, gen_dumbbell, gen_hemisphere, gen_icosphere,
    gen_planar_grid,
};
pub use io::{load_mesh, save_mesh, save_vtk_with_fields, MeshFormat, VertexAttribute};
pub use quality::{check_admissible, mesh_quality, triangle_ratio, AdmissibilityReport, MeshQualityReport};

use std::collections::HashMap;

use nalgebra::Vector3;
use thiserror::Error;

pub type Point = Vector3<f64>;

/// Relative area below which an element is treated as degenerate.
pub const DEGENERACY_FACTOR: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh has no triangles")]
    Empty,
    #[error("triangle {triangle} references vertex {index}, but the mesh has {count} vertices")]
    IndexOutOfRange { triangle: usize, index: usize, count: usize },
    #[error("triangle {0} repeats a vertex")]
    RepeatedVertex(usize),
    #[error("triangle {triangle} is degenerate (area {area:e} <= {threshold:e})")]
    Degenerate { triangle: usize, area: f64, threshold: f64 },
    #[error("triangle {triangle} was inverted by the update")]
    Inverted { triangle: usize },
    #[error("edge ({0}, {1}) is shared by more than two triangles")]
    NonManifoldEdge(usize, usize),
    #[error("edge ({0}, {1}) is traversed in the same direction by two triangles")]
    InconsistentOrientation(usize, usize),
    #[error("vertex {0} has more than one outgoing boundary edge")]
    NonManifoldBoundary(usize),
    #[error("vertex {0} is not referenced by any triangle")]
    IsolatedVertex(usize),
    #[error("non-finite coordinate at vertex {0}")]
    NonFinite(usize),
    #[error("field has {got} entries, mesh has {expected} vertices")]
    FieldLength { expected: usize, got: usize },
    #[error("boundary vertex {vertex} has z = {z:e}, expected 0")]
    OffSubstrate { vertex: usize, z: f64 },
    #[error("generator parameters rejected: {0}")]
    Generator(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl MeshError {
    /// True for errors that signal element collapse during an evolution.
    pub fn is_degeneracy(&self) -> bool {
        matches!(self, MeshError::Degenerate { .. } | MeshError::Inverted { .. })
    }
}

/// Unit normal, area and constant barycentric gradients of one flat triangle.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub normal: Point,
    pub area: f64,
    /// `grads[k]` is the surface gradient of the hat function at corner `k`.
    pub grads: [Point; 3],
}

impl ElementGeometry {
    pub fn from_corners(p: [Point; 3]) -> Option<Self> {
        let cross = (p[1] - p[0]).cross(&(p[2] - p[0]));
        let norm = cross.norm();
        if !(norm > 0.0) {
            return None;
        }
        let normal = cross / norm;
        let area = 0.5 * norm;
        let grads = std::array::from_fn(|k| {
            let e = p[(k + 2) % 3] - p[(k + 1) % 3];
            normal.cross(&e) / norm
        });
        Some(Self { normal, area, grads })
    }
}

#[derive(Clone, Debug)]
pub struct SurfaceMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_loops: Vec<Vec<usize>>,
    /// Boundary flag per vertex.
    on_boundary: Vec<bool>,
    eps_area: f64,
}

impl SurfaceMesh {
    /// Builds and validates a mesh. Fails on any invariant violation.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        let n = vertices.len();
        for (i, v) in vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(MeshError::NonFinite(i));
            }
        }
        let mut used = vec![false; n];
        for (k, t) in triangles.iter().enumerate() {
            for &i in t {
                if i >= n {
                    return Err(MeshError::IndexOutOfRange { triangle: k, index: i, count: n });
                }
                used[i] = true;
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(MeshError::RepeatedVertex(k));
            }
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(MeshError::IsolatedVertex(i));
        }
        let eps_area = DEGENERACY_FACTOR * characteristic_area(&vertices);
        let boundary_loops = extract_boundary_loops(n, &triangles, &vertices)?;
        let mut on_boundary = vec![false; n];
        for l in &boundary_loops {
            for &i in l {
                on_boundary[i] = true;
            }
        }
        let mesh = Self { vertices, triangles, boundary_loops, on_boundary, eps_area };
        mesh.check_nondegenerate()?;
        Ok(mesh)
    }

    fn check_nondegenerate(&self) -> Result<(), MeshError> {
        for k in 0..self.triangles.len() {
            let area = self.triangle_area(k);
            if !(area > self.eps_area) {
                return Err(MeshError::Degenerate { triangle: k, area, threshold: self.eps_area });
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_loops(&self) -> &[Vec<usize>] {
        &self.boundary_loops
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_closed(&self) -> bool {
        self.boundary_loops.is_empty()
    }

    pub fn is_boundary_vertex(&self, i: usize) -> bool {
        self.on_boundary[i]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.on_boundary
    }

    /// Area threshold used for the nondegeneracy check.
    pub fn eps_area(&self) -> f64 {
        self.eps_area
    }

    pub fn corners(&self, k: usize) -> [Point; 3] {
        let t = self.triangles[k];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn triangle_area(&self, k: usize) -> f64 {
        let [a, b, c] = self.corners(k);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Unit outward normal and area of triangle `k`.
    pub fn face_normal_and_area(&self, k: usize) -> Result<(Point, f64), MeshError> {
        let [a, b, c] = self.corners(k);
        let cross = (b - a).cross(&(c - a));
        let area = 0.5 * cross.norm();
        if !(area > self.eps_area) {
            return Err(MeshError::Degenerate { triangle: k, area, threshold: self.eps_area });
        }
        Ok((cross / (2.0 * area), area))
    }

    pub fn element(&self, k: usize) -> ElementGeometry {
        ElementGeometry::from_corners(self.corners(k)).expect("validated meshes have nondegenerate elements")
    }

    pub fn elements(&self) -> Vec<ElementGeometry> {
        (0..self.triangles.len()).map(|k| self.element(k)).collect()
    }

    /// Area-weighted average of incident face normals, not renormalized.
    pub fn averaged_vertex_normals(&self) -> Vec<Point> {
        let mut acc = vec![Point::zeros(); self.vertices.len()];
        let mut weight = vec![0.0; self.vertices.len()];
        for (k, t) in self.triangles.iter().enumerate() {
            let g = self.element(k);
            for &i in t {
                acc[i] += g.normal * g.area;
                weight[i] += g.area;
            }
        }
        acc.iter().zip(&weight).map(|(a, w)| a / *w).collect()
    }

    /// Unit-length version of [`Self::averaged_vertex_normals`], for output only.
    pub fn normalized_vertex_normals(&self) -> Vec<Point> {
        self.averaged_vertex_normals()
            .into_iter()
            .map(|n| {
                let l = n.norm();
                if l > 0.0 {
                    n / l
                } else {
                    n
                }
            })
            .collect()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|k| self.triangle_area(k)).sum()
    }

    pub fn min_triangle_area(&self) -> (usize, f64) {
        (0..self.triangles.len()).map(|k| (k, self.triangle_area(k))).fold((0, f64::INFINITY), |acc, x| {
            if x.1 < acc.1 {
                x
            } else {
                acc
            }
        })
    }

    /// Positions of the vertices of boundary loop `l`, in loop order.
    pub fn loop_positions(&self, l: usize) -> Vec<Point> {
        self.boundary_loops[l].iter().map(|&i| self.vertices[i]).collect()
    }

    /// Sum over triangles of `centroid . n |K| / 3`; the enclosed volume for closed meshes.
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|k| {
                let [a, b, c] = self.corners(k);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Largest circumdiameter over all triangles.
    pub fn mesh_size(&self) -> f64 {
        (0..self.triangles.len())
            .map(|k| {
                let [a, b, c] = self.corners(k);
                let (la, lb, lc) = ((b - c).norm(), (c - a).norm(), (a - b).norm());
                la * lb * lc / (2.0 * self.triangle_area(k))
            })
            .fold(0.0, f64::max)
    }

    /// Checks that every boundary vertex lies exactly on the substrate `z = 0`.
    pub fn check_boundary_on_substrate(&self) -> Result<(), MeshError> {
        for l in &self.boundary_loops {
            for &i in l {
                let z = self.vertices[i].z;
                if z != 0.0 {
                    return Err(MeshError::OffSubstrate { vertex: i, z });
                }
            }
        }
        Ok(())
    }

    /// Moves every vertex by `displacement`, keeping connectivity.
    ///
    /// Element collapse or inversion is reported as an error rather than
    /// accepted; callers treat it as the pinch-off/degeneracy signal.
    pub fn update_positions(&self, displacement: &[Point]) -> Result<SurfaceMesh, MeshError> {
        if displacement.len() != self.vertices.len() {
            return Err(MeshError::FieldLength { expected: self.vertices.len(), got: displacement.len() });
        }
        let vertices: Vec<Point> = self.vertices.iter().zip(displacement).map(|(x, d)| x + d).collect();
        for (i, v) in vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(MeshError::NonFinite(i));
            }
        }
        let moved = SurfaceMesh {
            vertices,
            triangles: self.triangles.clone(),
            boundary_loops: self.boundary_loops.clone(),
            on_boundary: self.on_boundary.clone(),
            eps_area: self.eps_area,
        };
        moved.check_nondegenerate()?;
        for k in 0..self.triangles.len() {
            let [a0, b0, c0] = self.corners(k);
            let [a1, b1, c1] = moved.corners(k);
            let n0 = (b0 - a0).cross(&(c0 - a0));
            let n1 = (b1 - a1).cross(&(c1 - a1));
            if n0.dot(&n1) <= 0.0 {
                return Err(MeshError::Inverted { triangle: k });
            }
        }
        Ok(moved)
    }

    /// Same connectivity, new positions; runs the full validation.
    pub fn with_vertices(&self, vertices: Vec<Point>) -> Result<SurfaceMesh, MeshError> {
        SurfaceMesh::new(vertices, self.triangles.clone())
    }

    /// Returns the mesh with every triangle's orientation reversed.
    pub fn flipped(&self) -> SurfaceMesh {
        let triangles = self.triangles.iter().map(|t| [t[0], t[2], t[1]]).collect();
        SurfaceMesh::new(self.vertices.clone(), triangles).expect("flip preserves validity")
    }

    /// Undirected edges with the number of incident triangles.
    pub fn edges(&self) -> Vec<((usize, usize), usize)> {
        let mut map: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for j in 0..3 {
                let (a, b) = (t[j], t[(j + 1) % 3]);
                *map.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        let mut edges: Vec<_> = map.into_iter().collect();
        edges.sort_unstable();
        edges
    }
}

fn characteristic_area(vertices: &[Point]) -> f64 {
    if vertices.is_empty() {
        return 0.0;
    }
    let mut lo = vertices[0];
    let mut hi = vertices[0];
    for v in vertices {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    (hi - lo).norm_squared()
}

/// Shoelace area of the `xy` projection of a closed polygon.
pub(crate) fn projected_shoelace(points: &[Point]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| {
            let (p, q) = (points[i], points[(i + 1) % n]);
            p.x * q.y - q.x * p.y
        })
        .sum::<f64>()
        * 0.5
}

fn extract_boundary_loops(
    n: usize,
    triangles: &[[usize; 3]],
    vertices: &[Point],
) -> Result<Vec<Vec<usize>>, MeshError> {
    // directed edge -> number of uses
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    for t in triangles {
        for j in 0..3 {
            let e = (t[j], t[(j + 1) % 3]);
            let c = directed.entry(e).or_insert(0);
            *c += 1;
            if *c > 1 {
                return Err(MeshError::InconsistentOrientation(e.0, e.1));
            }
        }
    }
    let mut next: Vec<Option<usize>> = vec![None; n];
    let mut boundary_edges: Vec<(usize, usize)> = Vec::new();
    for &(a, b) in directed.keys() {
        let reverse = directed.contains_key(&(b, a));
        if !reverse {
            boundary_edges.push((a, b));
        }
    }
    // a third triangle on an edge shows up as a second use of one direction,
    // caught above; count undirected uses to report non-manifold edges.
    let mut undirected: HashMap<(usize, usize), usize> = HashMap::new();
    for &(a, b) in directed.keys() {
        *undirected.entry((a.min(b), a.max(b))).or_insert(0) += 1;
    }
    boundary_edges.sort_unstable();
    for &(a, b) in &boundary_edges {
        if next[a].is_some() {
            return Err(MeshError::NonManifoldBoundary(a));
        }
        next[a] = Some(b);
    }
    let mut visited = vec![false; n];
    let mut loops = Vec::new();
    for &(start, _) in &boundary_edges {
        if visited[start] {
            continue;
        }
        let mut l = vec![start];
        visited[start] = true;
        let mut cur = next[start].expect("boundary edge start");
        while cur != start {
            if visited[cur] {
                return Err(MeshError::NonManifoldBoundary(cur));
            }
            visited[cur] = true;
            l.push(cur);
            cur = next[cur].ok_or(MeshError::NonManifoldBoundary(cur))?;
        }
        let pts: Vec<Point> = l.iter().map(|&i| vertices[i]).collect();
        if projected_shoelace(&pts) < 0.0 {
            l.reverse();
            // keep the smallest index first for a stable representation
        }
        let pos = l.iter().enumerate().min_by_key(|(_, &v)| v).map(|(p, _)| p).unwrap_or(0);
        l.rotate_left(pos);
        loops.push(l);
    }
    Ok(loops)
}
