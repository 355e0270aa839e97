//! Mean curvature flow of the unit sphere with the dual-MDR scheme.
//!
//! Runs a ladder of time steps to T = 0.1 and prints the radius error against
//! `sqrt(1 - 4t)` together with the fitted order.
//!
//! Usage: `cargo run --release --example sphere_convergence -- [subdivisions] [t_end]`

use std::time::Instant;

use geoflow::diagnostics::{estimate_order, sphere_error};
use geoflow::schemes::{run_flow, FlowConfig, MeshSource, RunStatus, SchemeKind};

fn main() {
    let mut args = std::env::args().skip(1);
    let subdivisions: u32 = args.next().map_or(4, |s| s.parse().expect("subdivisions"));
    let t_end: f64 = args.next().map_or(0.1, |s| s.parse().expect("t_end"));
    let taus = [4e-3, 2e-3, 1e-3, 5e-4];
    let mut errors = Vec::new();
    for tau in taus {
        let config =
            FlowConfig::new(SchemeKind::DualMdrMcf, MeshSource::Icosphere { subdivisions, radius: 1.0 }, tau, t_end);
        let start = Instant::now();
        let out = run_flow(&config).expect("run");
        assert_eq!(out.status, RunStatus::Completed);
        let e = sphere_error(&out.final_mesh, out.final_time).unwrap();
        println!(
            "tau {tau:.1e}  steps {:5}  error {e:.6e}  {:.1}s",
            out.records.len() - 1,
            start.elapsed().as_secs_f64()
        );
        errors.push(e);
    }
    println!("order {:.3}", estimate_order(&errors, &taus).unwrap());
}
