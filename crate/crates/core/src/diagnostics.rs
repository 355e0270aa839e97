//! Per-step measurements, exact-solution errors and stopping signals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{contact_cos, mesh_substrate_area, AssemblyError};
use crate::mesh::{mesh_quality, SurfaceMesh};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("need at least 3 positive (error, parameter) pairs, got {0}")]
    TooFewPairs(usize),
    #[error("errors and parameters differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("exact sphere radius is undefined at t = {0} (extinction at t = 0.25)")]
    PastExtinction(f64),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

pub fn surface_area(mesh: &SurfaceMesh) -> f64 {
    mesh.surface_area()
}

/// `W = |Γ| − cos θ |S1|` with `θ` in radians.
pub fn dewetting_energy(mesh: &SurfaceMesh, theta: f64) -> Result<f64, DiagnosticsError> {
    mesh.check_boundary_on_substrate().map_err(AssemblyError::from)?;
    Ok(mesh.surface_area() - contact_cos(theta) * mesh_substrate_area(mesh)?)
}

/// Radius at time `t` of the unit sphere under mean curvature flow.
pub fn exact_sphere_radius(t: f64) -> Result<f64, DiagnosticsError> {
    if t >= 0.25 || t.is_nan() {
        return Err(DiagnosticsError::PastExtinction(t));
    }
    Ok((1.0 - 4.0 * t).sqrt())
}

/// `max_j | |x_j| − √(1 − 4t) |`.
pub fn sphere_error(mesh: &SurfaceMesh, t: f64) -> Result<f64, DiagnosticsError> {
    let r = exact_sphere_radius(t)?;
    Ok(mesh.vertices().iter().map(|x| (x.norm() - r).abs()).fold(0.0, f64::max))
}

/// Least-squares slope of `log(error)` against `log(parameter)`.
pub fn estimate_order(errors: &[f64], parameters: &[f64]) -> Result<f64, DiagnosticsError> {
    if errors.len() != parameters.len() {
        return Err(DiagnosticsError::LengthMismatch(errors.len(), parameters.len()));
    }
    let pairs: Vec<(f64, f64)> =
        parameters.iter().zip(errors).filter(|(p, e)| **p > 0.0 && **e > 0.0).map(|(p, e)| (p.ln(), e.ln())).collect();
    if pairs.len() < 3 || pairs.len() != errors.len() {
        return Err(DiagnosticsError::TooFewPairs(pairs.len()));
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pairs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pairs.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Neck measure for elongated, axis-aligned geometries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeckCriterion {
    /// 0, 1 or 2 for x, y, z.
    pub axis: usize,
    /// Event when the neck radius falls below this value.
    pub threshold: f64,
    /// Slab width along the axis.
    #[serde(default = "default_slab_width")]
    pub slab_width: f64,
    /// Length excluded at each end of the body before slabs are measured.
    #[serde(default)]
    pub end_margin: f64,
}

fn default_slab_width() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq)]
pub enum PinchOffEvent {
    DegenerateTriangle { triangle: usize, area: f64 },
    Neck { radius: f64, position: f64 },
}

impl std::fmt::Display for PinchOffEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PinchOffEvent::DegenerateTriangle { triangle, area } => {
                write!(f, "triangle {triangle} degenerate (area {area:.3e})")
            }
            PinchOffEvent::Neck { radius, position } => write!(f, "neck radius {radius:.4} at {position:.4}"),
        }
    }
}

/// Minimum over slabs of the largest distance of slab vertices from the axis,
/// which passes through the vertex centroid. Returns `(radius, slab centre)`.
pub fn neck_radius(mesh: &SurfaceMesh, c: &NeckCriterion) -> Option<(f64, f64)> {
    let axis = c.axis.min(2);
    let (u, w) = ((axis + 1) % 3, (axis + 2) % 3);
    let nv = mesh.num_vertices() as f64;
    let centroid = mesh.vertices().iter().sum::<crate::mesh::Point>() / nv;
    let (lo, hi) =
        mesh.vertices().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[axis]), b.max(p[axis])));
    let (lo, hi) = (lo + c.end_margin, hi - c.end_margin);
    if !(hi > lo) || !(c.slab_width > 0.0) {
        return None;
    }
    let slabs = ((hi - lo) / c.slab_width).ceil().max(1.0) as usize;
    let mut reach = vec![f64::NAN; slabs];
    for p in mesh.vertices() {
        let s = p[axis];
        if s < lo || s > hi {
            continue;
        }
        let k = (((s - lo) / c.slab_width) as usize).min(slabs - 1);
        let d = ((p[u] - centroid[u]).powi(2) + (p[w] - centroid[w]).powi(2)).sqrt();
        reach[k] = if reach[k].is_nan() { d } else { reach[k].max(d) };
    }
    reach
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_nan())
        .map(|(k, r)| (*r, lo + (k as f64 + 0.5) * c.slab_width))
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

/// Degenerate element first, then the optional neck criterion.
pub fn detect_pinch_off(mesh: &SurfaceMesh, neck: Option<&NeckCriterion>) -> Option<PinchOffEvent> {
    let (triangle, area) = mesh.min_triangle_area();
    if !(area >= mesh.eps_area()) {
        return Some(PinchOffEvent::DegenerateTriangle { triangle, area });
    }
    let c = neck?;
    let (radius, position) = neck_radius(mesh, c)?;
    (radius < c.threshold).then_some(PinchOffEvent::Neck { radius, position })
}

/// One CSV row; step fields describe the step from `step` to `step + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub time: f64,
    pub area: f64,
    pub substrate_area: Option<f64>,
    pub energy: f64,
    pub area_delta: Option<f64>,
    pub sigma_max: f64,
    pub min_area: f64,
    pub lambda_inf: Option<f64>,
    pub residual: Option<f64>,
    pub status: String,
}

pub const CSV_HEADER: &str =
    "step,time,area,substrate_area,energy,area_delta,sigma_max,min_area,lambda_inf,residual,status";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

impl DiagnosticsRecord {
    /// Geometric part of a record; step fields are filled in by the caller.
    pub fn measure(mesh: &SurfaceMesh, step: usize, time: f64, theta: Option<f64>) -> Result<Self, DiagnosticsError> {
        let area = mesh.surface_area();
        let substrate_area = match theta {
            Some(_) => Some(mesh_substrate_area(mesh)?),
            None => None,
        };
        let energy = match (theta, substrate_area) {
            (Some(t), Some(s)) => area - contact_cos(t) * s,
            _ => area,
        };
        let q = mesh_quality(mesh);
        Ok(Self {
            step,
            time,
            area,
            substrate_area,
            energy,
            area_delta: None,
            sigma_max: q.sigma_max,
            min_area: q.min_area,
            lambda_inf: None,
            residual: None,
            status: "ok".into(),
        })
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{:.17e},{:.17e},{},{:.17e},{},{:.17e},{:.17e},{},{},{}",
            self.step,
            self.time,
            self.area,
            opt(self.substrate_area),
            self.energy,
            opt(self.area_delta),
            self.sigma_max,
            self.min_area,
            opt(self.lambda_inf),
            opt(self.residual),
            self.status
        )
    }
}

/// Parses a CSV written by [`DiagnosticsRecord::to_csv_row`].
pub fn parse_csv(text: &str) -> Option<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines();
    if lines.next()? != CSV_HEADER {
        return None;
    }
    let f = |s: &str| -> Option<Option<f64>> {
        if s.is_empty() {
            Some(None)
        } else {
            s.parse().ok().map(Some)
        }
    };
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            if c.len() != 11 {
                return None;
            }
            Some(DiagnosticsRecord {
                step: c[0].parse().ok()?,
                time: c[1].parse().ok()?,
                area: c[2].parse().ok()?,
                substrate_area: f(c[3])?,
                energy: c[4].parse().ok()?,
                area_delta: f(c[5])?,
                sigma_max: c[6].parse().ok()?,
                min_area: c[7].parse().ok()?,
                lambda_inf: f(c[8])?,
                residual: f(c[9])?,
                status: c[10].to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{gen_cuboid, gen_icosphere, Point};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn areas() {
        let c = gen_cuboid(1.0, 1.0, 8.0, 0.2, false).unwrap();
        assert!((surface_area(&c) - 34.0).abs() < 1e-11);
        let s = gen_icosphere(3, 1.0);
        let s2 = s.with_vertices(s.vertices().iter().map(|p| p * 2.0).collect()).unwrap();
        assert!((surface_area(&s2) - 4.0 * surface_area(&s)).abs() < 1e-12);
        assert!(surface_area(&s) < 4.0 * std::f64::consts::PI);
        assert!(surface_area(&gen_icosphere(5, 1.0)) > surface_area(&s));
    }

    #[test]
    fn dewetting_energies() {
        let cube = gen_cuboid(1.0, 1.0, 1.0, 0.25, true).unwrap();
        let half_pi = std::f64::consts::FRAC_PI_2;
        assert_eq!(dewetting_energy(&cube, half_pi).unwrap(), surface_area(&cube));
        assert!((dewetting_energy(&cube, 60f64.to_radians()).unwrap() - 4.5).abs() < 1e-12);
        let box16 = gen_cuboid(1.0, 6.0, 1.0, 0.2, true).unwrap();
        assert!((dewetting_energy(&box16, 120f64.to_radians()).unwrap() - 23.0).abs() < 1e-11);
    }

    #[test]
    fn sphere_errors() {
        let r = 0.6f64.sqrt();
        assert!((exact_sphere_radius(0.1).unwrap() - 0.7745966692).abs() < 1e-10);
        let s = gen_icosphere(3, 1.0);
        assert!(sphere_error(&s, 0.0).unwrap() < 1e-15);
        let shrunk = s.with_vertices(s.vertices().iter().map(|p| p * r).collect()).unwrap();
        assert!(sphere_error(&shrunk, 0.1).unwrap() < 1e-15);
        assert!(sphere_error(&s, 0.3).is_err());
    }

    #[test]
    fn orders() {
        let p = [1.0, 0.5, 0.25, 0.125];
        assert!((estimate_order(&p, &p).unwrap() - 1.0).abs() < 1e-14);
        let sq: Vec<f64> = p.iter().map(|x| x * x).collect();
        assert!((estimate_order(&sq, &p).unwrap() - 2.0).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let taus = [4e-3, 2e-3, 1e-3, 5e-4];
        let e: Vec<f64> = taus.iter().map(|t| 3.0 * t + rng.random_range(-1e-6..1e-6)).collect();
        assert!((estimate_order(&e, &taus).unwrap() - 1.0).abs() < 0.05);
        assert!(estimate_order(&p[..2], &p[..2]).is_err());
        assert!(estimate_order(&[1.0, 0.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn pinch_off_signals() {
        let s = gen_icosphere(2, 1.0);
        assert_eq!(detect_pinch_off(&s, None), None);
        let mut v = s.vertices().to_vec();
        let [a, b, c] = s.triangles()[7];
        v[b] = (v[a] + v[c]) * 0.5;
        let squashed = SurfaceMesh::new(v, s.triangles().to_vec());
        // construction may itself refuse the degenerate mesh; a valid mesh must report it
        if let Ok(m) = squashed {
            assert!(matches!(detect_pinch_off(&m, None), Some(PinchOffEvent::DegenerateTriangle { .. })));
        }
        let bar = gen_cuboid(1.0, 1.0, 8.0, 0.2, false).unwrap();
        let c = NeckCriterion { axis: 2, threshold: 0.3, slab_width: 0.1, end_margin: 0.5 };
        let (r, _) = neck_radius(&bar, &c).unwrap();
        assert!((r - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(detect_pinch_off(&bar, Some(&c)), None);
        let pinched: Vec<Point> = bar
            .vertices()
            .iter()
            .map(|p| {
                let f = 1.0 - 0.9 * (-(p.z * p.z) / 0.1).exp();
                Point::new(p.x * f, p.y * f, p.z)
            })
            .collect();
        let pinched = bar.with_vertices(pinched).unwrap();
        match detect_pinch_off(&pinched, Some(&c)) {
            Some(PinchOffEvent::Neck { radius, position }) => {
                assert!(radius < 0.3);
                assert!(position.abs() < 0.2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let s = gen_icosphere(1, 1.0);
        let mut r = DiagnosticsRecord::measure(&s, 3, 0.25, None).unwrap();
        r.area_delta = Some(1e-3);
        let text = format!("{CSV_HEADER}\n{}\n", r.to_csv_row());
        assert_eq!(parse_csv(&text).unwrap(), vec![r]);
    }
}
