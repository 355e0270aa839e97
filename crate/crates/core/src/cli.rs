//! Command-line front end: `mesh gen`, `run` and `verify`.
//!
//! Exit codes: 0 success, 2 invalid configuration or arguments, 3 solver
//! failure or failed verification, 4 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::diagnostics::sphere_error;
use crate::mesh::{
    dumbbell_counts, dumbbell_grid_for_target, gen_cuboid, gen_dumbbell, gen_hemisphere, gen_icosphere, mesh_quality,
    save_mesh, MeshError, MeshFormat, SurfaceMesh,
};
use crate::schemes::{load_config, run_flow, MeshSource, RunError, RunStatus};
use crate::verify::{run_suite, Fault, Suite};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "geoflow", version, about = "Parametric FEM for curvature flows and solid-state dewetting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Mesh utilities.
    Mesh {
        #[command(subcommand)]
        action: MeshCommand,
    },
    /// Runs a flow described by a JSON config.
    Run { config: PathBuf },
    /// Runs the invariant suites and prints a pass/fail table.
    Verify {
        #[arg(value_enum, default_value = "fast")]
        suite: SuiteArg,
        /// Deliberately breaks the schemes to check that the suite notices.
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Subcommand, Debug)]
pub enum MeshCommand {
    /// Generates a benchmark mesh and writes it to disk.
    Gen(GenArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub shape: Shape,
    /// Icosphere or hemisphere refinement level.
    #[arg(long, default_value_t = 3)]
    pub subdiv: u32,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// Box edge lengths.
    #[arg(long, num_args = 3, value_names = ["LX", "LY", "LZ"])]
    pub dims: Option<Vec<f64>>,
    /// Target edge length for boxes.
    #[arg(long, default_value_t = 0.2)]
    pub h: f64,
    #[arg(long)]
    pub n_theta: Option<usize>,
    #[arg(long)]
    pub n_phi: Option<usize>,
    /// Dumbbell vertex-count target, used when the grid is not given.
    #[arg(long, default_value_t = 1078)]
    pub target_vertices: usize,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Shape {
    Icosphere,
    Hemisphere,
    Cuboid,
    Openbox,
    Dumbbell,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SuiteArg {
    Fast,
    Full,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FaultArg {
    FlipLumpedNormal,
}

/// Parses `args` (including the program name) and executes the command.
pub fn run_cli<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK });
        }
    };
    if let Err(msg) = apply_thread_limit() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_CONFIG);
    }
    ExitCode::from(match cli.command {
        Command::Mesh { action: MeshCommand::Gen(args) } => cmd_mesh_gen(&args),
        Command::Run { config } => cmd_run(&config),
        Command::Verify { suite, inject_fault } => cmd_verify(suite, inject_fault),
    })
}

/// Honors `GEOFLOW_THREADS` for both assembly and the sparse factorization.
fn apply_thread_limit() -> Result<(), String> {
    let Ok(value) = std::env::var("GEOFLOW_THREADS") else { return Ok(()) };
    let threads: usize =
        value.trim().parse().map_err(|_| format!("GEOFLOW_THREADS must be a positive integer, got {value:?}"))?;
    if threads == 0 {
        return Err("GEOFLOW_THREADS must be at least 1".into());
    }
    // a second initialization in the same process is harmless
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    crate::solver::set_parallelism(threads);
    Ok(())
}

fn mesh_exit_code(e: &MeshError) -> u8 {
    match e {
        MeshError::Io { .. } => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn build_shape(args: &GenArgs) -> Result<SurfaceMesh, MeshError> {
    let dims = |name: &str| -> Result<[f64; 3], MeshError> {
        match args.dims.as_deref() {
            Some(&[a, b, c]) => Ok([a, b, c]),
            _ => Err(MeshError::Generator(format!("--shape {name} needs --dims LX LY LZ"))),
        }
    };
    match args.shape {
        Shape::Icosphere => Ok(gen_icosphere(args.subdiv, args.radius)),
        Shape::Hemisphere => Ok(gen_hemisphere(args.subdiv, args.radius)),
        Shape::Cuboid => {
            let [a, b, c] = dims("cuboid")?;
            gen_cuboid(a, b, c, args.h, false)
        }
        Shape::Openbox => {
            let [a, b, c] = dims("openbox")?;
            gen_cuboid(a, b, c, args.h, true)
        }
        Shape::Dumbbell => {
            let (nt, np) = match (args.n_theta, args.n_phi) {
                (Some(a), Some(b)) => (a, b),
                (None, None) => dumbbell_grid_for_target(args.target_vertices),
                _ => return Err(MeshError::Generator("give both --n-theta and --n-phi or neither".into())),
            };
            let (v, t) = dumbbell_counts(nt, np);
            println!("dumbbell grid {nt} x {np} ({v} vertices, {t} triangles)");
            gen_dumbbell(nt, np)
        }
    }
}

pub fn cmd_mesh_gen(args: &GenArgs) -> u8 {
    let mesh = match build_shape(args) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return mesh_exit_code(&e);
        }
    };
    let Some(format) = MeshFormat::from_path(&args.output) else {
        eprintln!("error: cannot infer mesh format from {}", args.output.display());
        return EXIT_CONFIG;
    };
    if let Err(e) = save_mesh(&mesh, &args.output, format) {
        eprintln!("error: {e}");
        return mesh_exit_code(&e);
    }
    let q = mesh_quality(&mesh);
    println!("vertices {}", mesh.num_vertices());
    println!("triangles {}", mesh.num_triangles());
    println!("sigma_max {:.6}", q.sigma_max);
    println!("area {:.12}", mesh.surface_area());
    println!("boundary_loops {}", mesh.boundary_loops().len());
    println!("wrote {}", args.output.display());
    EXIT_OK
}

pub fn cmd_run(path: &Path) -> u8 {
    let config = match load_config(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return if path.exists() { EXIT_CONFIG } else { EXIT_IO };
        }
    };
    let outcome = match run_flow(&config) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return match e {
                RunError::Config(_) => EXIT_CONFIG,
                RunError::Mesh(m) => mesh_exit_code(&m),
                RunError::Io { .. } => EXIT_IO,
                RunError::Diagnostics(_) => EXIT_SOLVER,
            };
        }
    };
    let first = outcome.records.first().expect("a run records at least its initial state");
    let last = outcome.records.last().expect("a run records at least its initial state");
    println!("scheme {}", config.scheme.kind);
    println!("steps {}", last.step);
    println!("final_time {:.6}", outcome.final_time);
    println!("area {:.12} -> {:.12}", first.area, last.area);
    if let Some(e) = &outcome.event {
        println!("pinch-off: {e}");
    }
    if config.scheme.kind.is_mean_curvature_flow()
        && matches!(config.mesh, MeshSource::Icosphere { radius, .. } if radius == 1.0)
    {
        match sphere_error(&outcome.final_mesh, outcome.final_time) {
            Ok(err) => println!("sphere_error {err:.6e}"),
            Err(e) => println!("sphere_error unavailable: {e}"),
        }
    }
    if let Some(dir) = &config.output.dir {
        println!("output {}", dir.display());
    }
    println!("status {}", outcome.status.as_str());
    match outcome.status {
        RunStatus::Completed | RunStatus::PinchOff => EXIT_OK,
        RunStatus::SolverFailure => {
            if let Some(f) = &outcome.failure {
                eprintln!("error: {f}");
            }
            EXIT_SOLVER
        }
    }
}

pub fn cmd_verify(suite: SuiteArg, fault: Option<FaultArg>) -> u8 {
    let suite = match suite {
        SuiteArg::Fast => Suite::Fast,
        SuiteArg::Full => Suite::Full,
    };
    let fault = fault.map(|f| match f {
        FaultArg::FlipLumpedNormal => Fault::FlipLumpedNormal,
    });
    let report = run_suite(suite, fault);
    print!("{}", report.table());
    if report.passed() {
        EXIT_OK
    } else {
        EXIT_SOLVER
    }
}
