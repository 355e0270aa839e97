//! Solid-state dewetting of an open box resting on the substrate `z = 0`.
//!
//! Tracks the dewetting energy, the wetted area and the mesh quality until the
//! end time or the first degeneracy signal.
//!
//! Usage:
//! `cargo run --release --example dewetting_box -- LX LY LZ THETA_DEG TAU T_END [scheme] [form]`
//!
//! `cargo run --release --example dewetting_box -- 1 6 1 120 1e-2 2` reproduces the
//! rectangular island benchmark; `1 1 16 90 1e-2 4 dual_mdr_dewetting symmetric_gradient`
//! the long-time pinch-off run.

use geoflow::assembly::TangentialForm;
use geoflow::mesh::mesh_quality;
use geoflow::schemes::{run_flow_on, FlowConfig, MeshSource, SchemeKind};

fn arg<T: std::str::FromStr>(args: &[String], k: usize, default: &str) -> T {
    args.get(k).map_or(default, String::as_str).parse().ok().expect("numeric argument")
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dims = [arg(&args, 0, "1"), arg(&args, 1, "6"), arg(&args, 2, "1")];
    let theta: f64 = arg(&args, 3, "120");
    let tau: f64 = arg(&args, 4, "1e-2");
    let t_end: f64 = arg(&args, 5, "2");
    let parse = |k: usize, default: &str| serde_json::Value::String(args.get(k).map_or(default, String::as_str).into());
    let kind: SchemeKind = serde_json::from_value(parse(6, "dual_mdr_dewetting")).expect("scheme kind");
    let form: TangentialForm = serde_json::from_value(parse(7, "full_gradient")).expect("tangential form");

    let source = MeshSource::OpenBox { dims, h: 0.2 };
    let config = FlowConfig::new(kind, source.clone(), tau, t_end).with_theta_degrees(theta).with_form(form);
    let mesh = source.build().expect("mesh");
    println!("{kind} ({form:?}): {} vertices, {} triangles", mesh.num_vertices(), mesh.num_triangles());
    let every = ((0.05 / tau).round() as usize).max(1);
    let out = run_flow_on(&config, mesh, |view| {
        if (view.step + 1) % every == 0 {
            let q = mesh_quality(view.new);
            let height = view.new.vertices().iter().map(|p| p.z).fold(0.0, f64::max);
            let worst = (0..view.new.num_triangles())
                .max_by(|&a, &b| q.per_triangle_ratio[a].total_cmp(&q.per_triangle_ratio[b]))
                .unwrap_or(0);
            let [a, b, c] = view.new.corners(worst);
            let at = (a + b + c) / 3.0;
            println!(
                "t {:.3}  area {:.5}  height {height:.3}  sigma_max {:.3} at ({:.2}, {:.2}, {:.2})  min_area {:.2e}",
                view.time + tau,
                view.new.surface_area(),
                q.sigma_max,
                at.x,
                at.y,
                at.z,
                q.min_area
            );
        }
    })
    .expect("run");
    let last = out.records.last().unwrap();
    println!(
        "status {} at t = {:.4}  energy {:.6}  substrate {:.6}",
        out.status.as_str(),
        out.final_time,
        last.energy,
        last.substrate_area.unwrap_or(f64::NAN)
    );
    if let Some(e) = out.event {
        println!("{e}");
    }
    if let Some(f) = out.failure {
        println!("failure: {f}");
    }
}
