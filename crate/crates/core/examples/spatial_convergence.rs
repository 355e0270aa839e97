//! Spatial convergence of the dual-MDR scheme for the shrinking sphere.
//!
//! Fixes a small time step and refines the icosphere, printing the radius
//! error against the vertex count and the fitted slope.
//!
//! Usage: `cargo run --release --example spatial_convergence -- [tau] [t_end]`
//! Defaults to `tau = 1e-5`, `t_end = 0.1`.

use std::time::Instant;

use geoflow::diagnostics::{estimate_order, sphere_error};
use geoflow::schemes::{run_flow, FlowConfig, MeshSource, SchemeKind};

fn main() {
    let mut args = std::env::args().skip(1);
    let tau: f64 = args.next().map_or(1e-5, |s| s.parse().expect("tau"));
    let t_end: f64 = args.next().map_or(0.1, |s| s.parse().expect("t_end"));
    let mut errors = Vec::new();
    let mut counts = Vec::new();
    for subdivisions in 2..=4 {
        let config =
            FlowConfig::new(SchemeKind::DualMdrMcf, MeshSource::Icosphere { subdivisions, radius: 1.0 }, tau, t_end);
        let start = Instant::now();
        let out = run_flow(&config).expect("run");
        let e = sphere_error(&out.final_mesh, out.final_time).unwrap();
        let np = out.final_mesh.num_vertices();
        println!("s {subdivisions}  N_p {np:5}  error {e:.6e}  {:.1}s", start.elapsed().as_secs_f64());
        errors.push(e);
        counts.push(np as f64);
    }
    println!("slope {:.3}", estimate_order(&errors, &counts).unwrap());
}
