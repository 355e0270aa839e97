//! Surface diffusion of a 1:1:8 cuboid until its midsection pinches off.
//!
//! Prints the neck radius and mesh quality along the way and stops at the
//! first pinch-off signal.
//!
//! Usage: `cargo run --release --example cuboid_pinch_off -- [scheme] [tau] [t_end]`
//! with `scheme` one of `dual_mdr_sd` (default) or `bgn_sd`.

use geoflow::diagnostics::neck_radius;
use geoflow::mesh::mesh_quality;
use geoflow::schemes::{run_flow_on, FlowConfig, MeshSource, SchemeKind};
use geoflow::verify::cuboid_neck;

fn main() {
    let mut args = std::env::args().skip(1);
    let kind: SchemeKind = args
        .next()
        .map_or(SchemeKind::DualMdrSd, |s| serde_json::from_value(serde_json::Value::String(s)).expect("scheme kind"));
    let tau: f64 = args.next().map_or(1e-3, |s| s.parse().expect("tau"));
    let t_end: f64 = args.next().map_or(0.5, |s| s.parse().expect("t_end"));
    let source = MeshSource::Cuboid { dims: [1.0, 1.0, 8.0], h: 0.2 };
    let neck = cuboid_neck();
    let config = FlowConfig::new(kind, source.clone(), tau, t_end).with_pinch_off(neck.clone());
    let mesh = source.build().expect("mesh");
    println!("{kind}: {} vertices, sigma_max {:.3}", mesh.num_vertices(), mesh_quality(&mesh).sigma_max);
    let every = ((0.01 / tau).round() as usize).max(1);
    let out = run_flow_on(&config, mesh, |view| {
        if (view.step + 1) % every == 0 {
            let (r, z) = neck_radius(view.new, &neck).unwrap_or((f64::NAN, f64::NAN));
            let q = mesh_quality(view.new);
            println!(
                "t {:.3}  neck {r:.4} at z {z:+.2}  area {:.5}  sigma_max {:.3}",
                view.time + tau,
                view.new.surface_area(),
                q.sigma_max
            );
        }
    })
    .expect("run");
    println!("status {} at t = {:.4}", out.status.as_str(), out.final_time);
    if let Some(e) = out.event {
        println!("{e}");
    }
}
