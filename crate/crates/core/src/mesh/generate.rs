//! Benchmark geometries: icospheres, hemispherical caps, the dumbbell, boxes.

use std::collections::HashMap;
use std::f64::consts::PI;

use super::{MeshError, Point, SurfaceMesh};

/// Midpoint subdivision with a shared-edge cache; new points are projected by `project`.
fn subdivide(vertices: &mut Vec<Point>, triangles: &[[usize; 3]], project: impl Fn(Point) -> Point) -> Vec<[usize; 3]> {
    let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
        *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
            vertices.push(project(0.5 * (vertices[a] + vertices[b])));
            vertices.len() - 1
        })
    };
    let mut out = Vec::with_capacity(4 * triangles.len());
    for &[a, b, c] in triangles {
        let ab = midpoint(a, b, vertices);
        let bc = midpoint(b, c, vertices);
        let ca = midpoint(c, a, vertices);
        out.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
    }
    out
}

/// Icosahedron refined `subdivisions` times, all vertices on the sphere of `radius`.
///
/// Vertex count is `10 * 4^s + 2`.
pub fn gen_icosphere(subdivisions: u32, radius: f64) -> SurfaceMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ];
    let project = |p: Point| p * (radius / p.norm());
    let mut vertices: Vec<Point> = raw.iter().map(|&(x, y, z)| project(Point::new(x, y, z))).collect();
    let mut triangles = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        triangles = subdivide(&mut vertices, &triangles, project);
    }
    SurfaceMesh::new(vertices, triangles).expect("icosphere is a valid closed mesh")
}

/// Upper half of a refined octahedron projected onto the sphere of `radius`.
///
/// The rim lies exactly in `z = 0` and the cap meets the plane at 90 degrees.
pub fn gen_hemisphere(subdivisions: u32, radius: f64) -> SurfaceMesh {
    let project = |p: Point| p * (radius / p.norm());
    let mut vertices = vec![
        Point::new(radius, 0.0, 0.0),
        Point::new(0.0, radius, 0.0),
        Point::new(-radius, 0.0, 0.0),
        Point::new(0.0, -radius, 0.0),
        Point::new(0.0, 0.0, radius),
    ];
    let mut triangles = vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]];
    for _ in 0..subdivisions {
        triangles = subdivide(&mut vertices, &triangles, project);
    }
    for v in &mut vertices {
        if v.z.abs() < 1e-15 * radius {
            v.z = 0.0;
        }
    }
    SurfaceMesh::new(vertices, triangles).expect("hemisphere is a valid open mesh")
}

/// Point of the dumbbell parameterization at polar angle `phi` and azimuth `theta`.
pub fn dumbbell_point(theta: f64, phi: f64) -> Point {
    let r = 0.6 * phi.cos().powi(2) + 0.4;
    Point::new(phi.cos(), r * theta.cos() * phi.sin(), r * theta.sin() * phi.sin())
}

/// `(vertices, triangles)` produced by [`gen_dumbbell`] for a grid.
pub fn dumbbell_counts(n_theta: usize, n_phi: usize) -> (usize, usize) {
    let ring = n_theta * (n_phi - 1);
    (ring + 2, 2 * ring)
}

/// Grid whose vertex count is close to `target_vertices` with roughly square cells.
pub fn dumbbell_grid_for_target(target_vertices: usize) -> (usize, usize) {
    // profile length of the generating curve and its mean distance to the axis
    let samples = 2000;
    let (mut length, mut radius) = (0.0, 0.0);
    for k in 0..samples {
        let (a, b) = (PI * k as f64 / samples as f64, PI * (k + 1) as f64 / samples as f64);
        let (pa, pb) = (dumbbell_point(0.0, a), dumbbell_point(0.0, b));
        let ds = (pb - pa).norm();
        length += ds;
        radius += 0.5 * (pa.y + pb.y) * ds;
    }
    radius /= length;
    let mut best = (3, 2);
    let mut best_score = f64::INFINITY;
    for n_theta in 3..=256 {
        for n_phi in 2..=256 {
            let (v, _) = dumbbell_counts(n_theta, n_phi);
            let aspect = (length / n_phi as f64) / (2.0 * PI * radius / n_theta as f64);
            let score = (v as f64 - target_vertices as f64).abs() / target_vertices as f64 + 0.02 * aspect.ln().abs();
            if score < best_score {
                best_score = score;
                best = (n_theta, n_phi);
            }
        }
    }
    best
}

/// Dumbbell sampled on a uniform `(theta, phi)` grid with fanned poles at `(+-1, 0, 0)`.
pub fn gen_dumbbell(n_theta: usize, n_phi: usize) -> Result<SurfaceMesh, MeshError> {
    if n_theta < 3 || n_phi < 2 {
        return Err(MeshError::Generator(format!(
            "dumbbell grid {n_theta}x{n_phi} too coarse (need n_theta >= 3, n_phi >= 2)"
        )));
    }
    let mut vertices = vec![Point::new(1.0, 0.0, 0.0)];
    for j in 1..n_phi {
        let phi = PI * j as f64 / n_phi as f64;
        for i in 0..n_theta {
            let theta = 2.0 * PI * i as f64 / n_theta as f64;
            vertices.push(dumbbell_point(theta, phi));
        }
    }
    vertices.push(Point::new(-1.0, 0.0, 0.0));
    let south = vertices.len() - 1;
    let at = |j: usize, i: usize| 1 + (j - 1) * n_theta + (i % n_theta);
    let mut triangles = Vec::new();
    for i in 0..n_theta {
        triangles.push([0, at(1, i), at(1, i + 1)]);
    }
    for j in 1..n_phi - 1 {
        for i in 0..n_theta {
            let (a, b, c, d) = (at(j, i), at(j + 1, i), at(j + 1, i + 1), at(j, i + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    for i in 0..n_theta {
        triangles.push([at(n_phi - 1, i), south, at(n_phi - 1, i + 1)]);
    }
    SurfaceMesh::new(vertices, triangles)
}

/// Axis-aligned box triangulated on structured face grids of spacing close to `target_h`.
///
/// A closed box is centered at the origin. With `open_bottom` the `z = 0` face is
/// omitted, the box spans `z` in `[0, lz]` with its footprint centered at the
/// origin, and the single boundary loop is the footprint rectangle.
pub fn gen_cuboid(lx: f64, ly: f64, lz: f64, target_h: f64, open_bottom: bool) -> Result<SurfaceMesh, MeshError> {
    if !(lx > 0.0 && ly > 0.0 && lz > 0.0 && target_h > 0.0) {
        return Err(MeshError::Generator(format!(
            "cuboid needs positive dimensions and spacing, got {lx}x{ly}x{lz}, h={target_h}"
        )));
    }
    let divisions = |l: f64| ((l / target_h).round() as usize).max(1);
    let n = [divisions(lx), divisions(ly), divisions(lz)];
    let len = [lx, ly, lz];
    let z0 = if open_bottom { 0.0 } else { -0.5 * lz };
    let origin = [-0.5 * lx, -0.5 * ly, z0];
    let coord = |axis: usize, i: usize| {
        if i == n[axis] {
            origin[axis] + len[axis]
        } else {
            origin[axis] + len[axis] * i as f64 / n[axis] as f64
        }
    };

    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut vertex = |ijk: [usize; 3], vertices: &mut Vec<Point>| -> usize {
        *index.entry(ijk).or_insert_with(|| {
            vertices.push(Point::new(coord(0, ijk[0]), coord(1, ijk[1]), coord(2, ijk[2])));
            vertices.len() - 1
        })
    };

    let mut triangles = Vec::new();
    // each face: fixed axis and side, in-plane axes (u, w) with u x w = outward normal
    let faces: [(usize, bool, usize, usize); 6] =
        [(0, false, 2, 1), (0, true, 1, 2), (1, false, 0, 2), (1, true, 2, 0), (2, false, 1, 0), (2, true, 0, 1)];
    for &(axis, high, u, w) in &faces {
        if open_bottom && axis == 2 && !high {
            continue;
        }
        let fixed = if high { n[axis] } else { 0 };
        let point = |a: usize, b: usize| {
            let mut ijk = [0; 3];
            ijk[axis] = fixed;
            ijk[u] = a;
            ijk[w] = b;
            ijk
        };
        for a in 0..n[u] {
            for b in 0..n[w] {
                let p00 = vertex(point(a, b), &mut vertices);
                let p10 = vertex(point(a + 1, b), &mut vertices);
                let p11 = vertex(point(a + 1, b + 1), &mut vertices);
                let p01 = vertex(point(a, b + 1), &mut vertices);
                // alternate diagonals for a symmetric pattern
                if (a + b) % 2 == 0 {
                    triangles.push([p00, p10, p11]);
                    triangles.push([p00, p11, p01]);
                } else {
                    triangles.push([p00, p10, p01]);
                    triangles.push([p10, p11, p01]);
                }
            }
        }
    }
    SurfaceMesh::new(vertices, triangles)
}

/// Flat `lx x ly` rectangle in `z = 0` with its corner at the origin.
pub fn gen_planar_grid(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<SurfaceMesh, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::Generator("planar grid needs at least one cell per side".into()));
    }
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Point::new(lx * i as f64 / nx as f64, ly * j as f64 / ny as f64, 0.0));
        }
    }
    let at = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            triangles.push([at(i, j), at(i + 1, j), at(i + 1, j + 1)]);
            triangles.push([at(i, j), at(i + 1, j + 1), at(i, j + 1)]);
        }
    }
    SurfaceMesh::new(vertices, triangles)
}
