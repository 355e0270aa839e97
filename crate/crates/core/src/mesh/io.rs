//! ASCII OFF / OBJ readers and OFF / OBJ / legacy VTK writers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{MeshError, Point, SurfaceMesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
    Vtk,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "off" => Some(Self::Off),
            "obj" => Some(Self::Obj),
            "vtk" => Some(Self::Vtk),
            _ => None,
        }
    }
}

/// Per-vertex data attached to a VTK snapshot.
pub enum VertexAttribute<'a> {
    Scalar(&'a str, &'a [f64]),
    Vector(&'a str, &'a [Point]),
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse { path: path.display().to_string(), line, message: message.into() }
}

fn io_err(path: &Path, source: std::io::Error) -> MeshError {
    MeshError::Io { path: path.display().to_string(), source }
}

/// Reads a triangle-only mesh. A closed (or substrate-bounded) mesh whose
/// triangles are consistently oriented inward is flipped once globally.
pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<SurfaceMesh, MeshError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let (vertices, triangles) = match format {
        MeshFormat::Off => parse_off(path, &text)?,
        MeshFormat::Obj => parse_obj(path, &text)?,
        MeshFormat::Vtk => return Err(parse_err(path, 0, "VTK is an output-only format")),
    };
    let mesh = SurfaceMesh::new(vertices, triangles)?;
    let substrate_bounded = !mesh.is_closed() && mesh.check_boundary_on_substrate().is_ok();
    if (mesh.is_closed() || substrate_bounded) && mesh.signed_volume() < 0.0 {
        return Ok(mesh.flipped());
    }
    Ok(mesh)
}

/// Meaningful lines with their 1-based line numbers, comments stripped.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64, MeshError> {
    s.parse().map_err(|_| parse_err(path, line, format!("invalid number `{s}`")))
}

fn parse_off(path: &Path, text: &str) -> Result<(Vec<Point>, Vec<[usize; 3]>), MeshError> {
    let mut lines = content_lines(text);
    let (line, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let mut tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.first() != Some(&"OFF") {
        return Err(parse_err(path, line, "missing OFF header"));
    }
    tokens.remove(0);
    let counts_line = if tokens.is_empty() {
        let (l, c) = lines.next().ok_or_else(|| parse_err(path, line, "missing element counts"))?;
        tokens = c.split_whitespace().collect();
        l
    } else {
        line
    };
    if tokens.len() < 2 {
        return Err(parse_err(path, counts_line, "expected vertex and face counts"));
    }
    let count = |s: &str| s.parse::<usize>().map_err(|_| parse_err(path, counts_line, format!("invalid count `{s}`")));
    let (nv, nf) = (count(tokens[0])?, count(tokens[1])?);
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (l, s) = lines.next().ok_or_else(|| parse_err(path, counts_line, "truncated vertex list"))?;
        let t: Vec<&str> = s.split_whitespace().collect();
        if t.len() < 3 {
            return Err(parse_err(path, l, "vertex needs three coordinates"));
        }
        vertices.push(Point::new(parse_f64(path, l, t[0])?, parse_f64(path, l, t[1])?, parse_f64(path, l, t[2])?));
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, s) = lines.next().ok_or_else(|| parse_err(path, counts_line, "truncated face list"))?;
        let t: Vec<&str> = s.split_whitespace().collect();
        let k: usize =
            t.first().and_then(|x| x.parse().ok()).ok_or_else(|| parse_err(path, l, "invalid face record"))?;
        if k != 3 {
            return Err(parse_err(path, l, format!("face with {k} vertices; only triangles are supported")));
        }
        if t.len() < 4 {
            return Err(parse_err(path, l, "face record too short"));
        }
        let mut tri = [0; 3];
        for j in 0..3 {
            tri[j] = t[j + 1].parse().map_err(|_| parse_err(path, l, format!("invalid index `{}`", t[j + 1])))?;
        }
        triangles.push(tri);
    }
    Ok((vertices, triangles))
}

fn parse_obj(path: &Path, text: &str) -> Result<(Vec<Point>, Vec<[usize; 3]>), MeshError> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (l, s) in content_lines(text) {
        let mut t = s.split_whitespace();
        match t.next() {
            Some("v") => {
                let c: Vec<&str> = t.collect();
                if c.len() < 3 {
                    return Err(parse_err(path, l, "vertex needs three coordinates"));
                }
                vertices.push(Point::new(
                    parse_f64(path, l, c[0])?,
                    parse_f64(path, l, c[1])?,
                    parse_f64(path, l, c[2])?,
                ));
            }
            Some("f") => {
                let refs: Vec<&str> = t.collect();
                if refs.len() != 3 {
                    return Err(parse_err(
                        path,
                        l,
                        format!("face with {} vertices; only triangles are supported", refs.len()),
                    ));
                }
                let mut tri = [0; 3];
                for (j, r) in refs.iter().enumerate() {
                    let head = r.split('/').next().unwrap_or("");
                    let idx: i64 = head.parse().map_err(|_| parse_err(path, l, format!("invalid index `{r}`")))?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        return Err(parse_err(path, l, "OBJ indices are 1-based"));
                    };
                    if resolved < 0 {
                        return Err(parse_err(path, l, format!("index `{r}` out of range")));
                    }
                    tri[j] = resolved as usize;
                }
                triangles.push(tri);
            }
            _ => {}
        }
    }
    Ok((vertices, triangles))
}

fn fmt_point(out: &mut String, p: &Point) {
    let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", p.x, p.y, p.z);
}

fn render(mesh: &SurfaceMesh, format: MeshFormat, attributes: &[VertexAttribute]) -> String {
    let mut out = String::new();
    match format {
        MeshFormat::Off => {
            let _ = writeln!(out, "OFF\n{} {} 0", mesh.num_vertices(), mesh.num_triangles());
            for p in mesh.vertices() {
                fmt_point(&mut out, p);
            }
            for t in mesh.triangles() {
                let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
            }
        }
        MeshFormat::Obj => {
            for p in mesh.vertices() {
                out.push_str("v ");
                fmt_point(&mut out, p);
            }
            for t in mesh.triangles() {
                let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
            }
        }
        MeshFormat::Vtk => {
            let nt = mesh.num_triangles();
            let _ = writeln!(out, "# vtk DataFile Version 3.0\ngeoflow surface\nASCII\nDATASET UNSTRUCTURED_GRID");
            let _ = writeln!(out, "POINTS {} double", mesh.num_vertices());
            for p in mesh.vertices() {
                fmt_point(&mut out, p);
            }
            let _ = writeln!(out, "CELLS {} {}", nt, 4 * nt);
            for t in mesh.triangles() {
                let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
            }
            let _ = writeln!(out, "CELL_TYPES {nt}");
            for _ in 0..nt {
                out.push_str("5\n");
            }
            if !attributes.is_empty() {
                let _ = writeln!(out, "POINT_DATA {}", mesh.num_vertices());
            }
            for a in attributes {
                match a {
                    VertexAttribute::Scalar(name, values) => {
                        let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
                        for v in values.iter() {
                            let _ = writeln!(out, "{v:.16e}");
                        }
                    }
                    VertexAttribute::Vector(name, values) => {
                        let _ = writeln!(out, "VECTORS {name} double");
                        for v in values.iter() {
                            fmt_point(&mut out, v);
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn save_mesh(mesh: &SurfaceMesh, path: &Path, format: MeshFormat) -> Result<(), MeshError> {
    save_vtk_with_fields(mesh, path, format, &[])
}

/// Writes `mesh`; `attributes` are emitted only for the VTK format.
pub fn save_vtk_with_fields(
    mesh: &SurfaceMesh,
    path: &Path,
    format: MeshFormat,
    attributes: &[VertexAttribute],
) -> Result<(), MeshError> {
    if mesh.num_triangles() == 0 {
        return Err(MeshError::Empty);
    }
    for a in attributes {
        let len = match a {
            VertexAttribute::Scalar(_, v) => v.len(),
            VertexAttribute::Vector(_, v) => v.len(),
        };
        if len != mesh.num_vertices() {
            return Err(MeshError::FieldLength { expected: mesh.num_vertices(), got: len });
        }
    }
    fs::write(path, render(mesh, format, attributes)).map_err(|e| io_err(path, e))
}
