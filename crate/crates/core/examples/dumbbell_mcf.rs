//! Mean curvature flow of the dumbbell, which rounds off and shrinks to a point
//! shortly after t = 0.09.
//!
//! Prints area, elongation and mesh quality every 0.01, then the last records
//! before the run stops.
//!
//! Usage: `cargo run --release --example dumbbell_mcf -- [scheme] [tau] [t_end]`

use geoflow::schemes::{run_flow_on, FlowConfig, MeshSource, SchemeKind};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind: SchemeKind = serde_json::from_value(serde_json::Value::String(
        args.first().cloned().unwrap_or_else(|| "dual_mdr_mcf".into()),
    ))
    .expect("scheme kind");
    let tau: f64 = args.get(1).map_or(1e-4, |s| s.parse().expect("tau"));
    let t_end: f64 = args.get(2).map_or(0.15, |s| s.parse().expect("t_end"));

    let source = MeshSource::Dumbbell { n_theta: None, n_phi: None, target_vertices: Some(1078) };
    let mesh = source.build().expect("mesh");
    println!("{kind}: {} vertices, {} triangles", mesh.num_vertices(), mesh.num_triangles());
    let config = FlowConfig::new(kind, source, tau, t_end);
    let every = ((0.01 / tau).round() as usize).max(1);
    let mut worst_increase = f64::NEG_INFINITY;
    let out = run_flow_on(&config, mesh, |view| {
        let (a0, a1) = (view.old.surface_area(), view.new.surface_area());
        worst_increase = worst_increase.max((a1 - a0) / a0);
        if (view.step + 1) % every == 0 {
            let q = geoflow::mesh::mesh_quality(view.new);
            let lambda = view.solution.lambda_inf().map_or(String::new(), |l| format!("  |lambda|_inf {l:.2e}"));
            let extent = |c: usize| {
                let (lo, hi) =
                    view.new.vertices().iter().fold((f64::MAX, f64::MIN), |(l, h), p| (l.min(p[c]), h.max(p[c])));
                hi - lo
            };
            println!(
                "t {:.3}  area {a1:.5}  length/width {:.3}  sigma_max {:.3}  min_area {:.2e}{lambda}",
                view.time + tau,
                extent(0) / extent(1),
                q.sigma_max,
                q.min_area
            );
        }
    })
    .expect("run");
    for r in out.records.iter().rev().take(4).rev() {
        let residual = r.residual.map_or(String::new(), |x| format!("  residual {x:.1e}"));
        println!("t {:.5}  area {:.3e}  sigma_max {:.3}{residual}", r.time, r.area, r.sigma_max);
    }
    println!("status {} at t = {:.5}", out.status.as_str(), out.final_time);
    println!("largest relative area increase per step {worst_increase:.2e}");
    if let Some(e) = out.event {
        println!("{e}");
    }
    if let Some(f) = out.failure {
        println!("failure: {f}");
    }
}
