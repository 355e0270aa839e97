use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Scheme, SchemeError, SchemeKind, StepSolution, Stepper};
use crate::assembly::TangentialForm;
use crate::diagnostics::{
    detect_pinch_off, DiagnosticsError, DiagnosticsRecord, NeckCriterion, PinchOffEvent, CSV_HEADER,
};
use crate::mesh::{
    dumbbell_grid_for_target, gen_cuboid, gen_dumbbell, gen_hemisphere, gen_icosphere, load_mesh, save_vtk_with_fields,
    MeshError, MeshFormat, Point, SurfaceMesh, VertexAttribute,
};
use crate::solver::{LinearSolver, SolveMethod, DIRECT_RESIDUAL_LIMIT};

pub type PinchOffSettings = NeckCriterion;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub kind: SchemeKind,
    #[serde(default)]
    pub tangential_form: TangentialForm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSource {
    Icosphere {
        subdivisions: u32,
        #[serde(default = "one")]
        radius: f64,
    },
    Hemisphere {
        subdivisions: u32,
        #[serde(default = "one")]
        radius: f64,
    },
    /// Either an explicit grid or a target vertex count.
    Dumbbell {
        #[serde(default)]
        n_theta: Option<usize>,
        #[serde(default)]
        n_phi: Option<usize>,
        #[serde(default)]
        target_vertices: Option<usize>,
    },
    Cuboid {
        dims: [f64; 3],
        h: f64,
    },
    OpenBox {
        dims: [f64; 3],
        h: f64,
    },
    File {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

impl MeshSource {
    pub fn build(&self) -> Result<SurfaceMesh, MeshError> {
        match self {
            MeshSource::Icosphere { subdivisions, radius } => Ok(gen_icosphere(*subdivisions, *radius)),
            MeshSource::Hemisphere { subdivisions, radius } => Ok(gen_hemisphere(*subdivisions, *radius)),
            MeshSource::Dumbbell { n_theta, n_phi, target_vertices } => {
                let (nt, np) = match (n_theta, n_phi, target_vertices) {
                    (Some(a), Some(b), None) => (*a, *b),
                    (None, None, Some(t)) => dumbbell_grid_for_target(*t),
                    (None, None, None) => dumbbell_grid_for_target(1078),
                    _ => {
                        return Err(MeshError::Generator(
                            "dumbbell takes either n_theta and n_phi or target_vertices".into(),
                        ))
                    }
                };
                gen_dumbbell(nt, np)
            }
            MeshSource::Cuboid { dims, h } => gen_cuboid(dims[0], dims[1], dims[2], *h, false),
            MeshSource::OpenBox { dims, h } => gen_cuboid(dims[0], dims[1], dims[2], *h, true),
            MeshSource::File { path } => {
                let format = MeshFormat::from_path(path)
                    .ok_or_else(|| MeshError::Generator(format!("unknown mesh format: {}", path.display())))?;
                load_mesh(path, format)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub tau: f64,
    pub t_end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DewettingSection {
    pub theta_degrees: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default)]
    pub method: SolveMethod,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_tol() -> f64 {
    DIRECT_RESIDUAL_LIMIT
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { method: SolveMethod::DirectLu, tol: default_tol() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    /// No files are written when absent.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_csv")]
    pub csv_name: String,
    /// Snapshot every this many steps; 0 disables snapshots.
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default = "default_format")]
    pub snapshot_format: String,
}

fn default_csv() -> String {
    "diagnostics.csv".into()
}

fn default_format() -> String {
    "vtk".into()
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self { dir: None, csv_name: default_csv(), snapshot_every: 0, snapshot_format: default_format() }
    }
}

/// A complete run description; this is also the JSON config document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    #[serde(default = "version_one")]
    pub version: u32,
    pub scheme: SchemeSection,
    pub mesh: MeshSource,
    pub time: TimeSection,
    #[serde(default)]
    pub dewetting: Option<DewettingSection>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub output: OutputSettings,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub pinch_off: Option<PinchOffSettings>,
}

fn version_one() -> u32 {
    1
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unsupported config version {0}")]
    Version(u32),
    #[error("tau must be positive and finite, got {0}")]
    Tau(f64),
    #[error("t_end must be non-negative and finite, got {0}")]
    EndTime(f64),
    #[error("contact angle must lie strictly between 0 and 180 degrees, got {0}")]
    Theta(f64),
    #[error("{0} needs a dewetting section with theta_degrees")]
    MissingTheta(SchemeKind),
    #[error("dewetting section given for the closed-surface scheme {0}")]
    UnexpectedTheta(SchemeKind),
    #[error("solver tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error("unsupported snapshot format {0:?} (only \"vtk\")")]
    SnapshotFormat(String),
    #[error("pinch-off axis must be 0, 1 or 2, got {0}")]
    Axis(usize),
}

impl FlowConfig {
    pub fn new(kind: SchemeKind, mesh: MeshSource, tau: f64, t_end: f64) -> Self {
        Self {
            version: 1,
            scheme: SchemeSection { kind, tangential_form: TangentialForm::FullGradient },
            mesh,
            time: TimeSection { tau, t_end },
            dewetting: None,
            solver: SolverSettings::default(),
            output: OutputSettings::default(),
            deterministic: true,
            pinch_off: None,
        }
    }

    pub fn with_theta_degrees(mut self, theta: f64) -> Self {
        self.dewetting = Some(DewettingSection { theta_degrees: theta });
        self
    }

    pub fn with_form(mut self, form: TangentialForm) -> Self {
        self.scheme.tangential_form = form;
        self
    }

    pub fn with_pinch_off(mut self, neck: NeckCriterion) -> Self {
        self.pinch_off = Some(neck);
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != 1 {
            return Err(ConfigError::Version(self.version));
        }
        let t = &self.time;
        if !(t.tau > 0.0 && t.tau.is_finite()) {
            return Err(ConfigError::Tau(t.tau));
        }
        if !(t.t_end >= 0.0 && t.t_end.is_finite()) {
            return Err(ConfigError::EndTime(t.t_end));
        }
        let kind = self.scheme.kind;
        match (&self.dewetting, kind.is_dewetting()) {
            (None, true) => return Err(ConfigError::MissingTheta(kind)),
            (Some(_), false) => return Err(ConfigError::UnexpectedTheta(kind)),
            (Some(d), true) if !(d.theta_degrees > 0.0 && d.theta_degrees < 180.0) => {
                return Err(ConfigError::Theta(d.theta_degrees))
            }
            _ => {}
        }
        if !(self.solver.tol > 0.0) {
            return Err(ConfigError::Tolerance(self.solver.tol));
        }
        if self.output.snapshot_format != "vtk" {
            return Err(ConfigError::SnapshotFormat(self.output.snapshot_format.clone()));
        }
        if let Some(p) = &self.pinch_off {
            if p.axis > 2 {
                return Err(ConfigError::Axis(p.axis));
            }
        }
        Ok(())
    }

    /// Contact angle in radians, for dewetting kinds.
    pub fn theta(&self) -> Option<f64> {
        self.dewetting.as_ref().map(|d| d.theta_degrees.to_radians())
    }

    pub fn scheme(&self) -> Scheme {
        let s = Scheme::new(self.scheme.kind).with_form(self.scheme.tangential_form);
        match self.theta() {
            Some(t) => s.with_theta(t),
            None => s,
        }
    }

    /// Number of steps to reach `t_end`.
    pub fn num_steps(&self) -> usize {
        (self.time.t_end / self.time.tau - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    PinchOff,
    SolverFailure,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::PinchOff => "pinch-off",
            RunStatus::SolverFailure => "solver-failure",
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub records: Vec<DiagnosticsRecord>,
    /// The last mesh that passed all checks.
    pub final_mesh: SurfaceMesh,
    pub final_time: f64,
    pub event: Option<PinchOffEvent>,
    pub failure: Option<String>,
}

/// What an observer sees after each accepted step.
pub struct StepView<'a> {
    pub step: usize,
    pub time: f64,
    pub old: &'a SurfaceMesh,
    pub new: &'a SurfaceMesh,
    pub solution: &'a StepSolution,
}

struct Output {
    dir: PathBuf,
    csv: BufWriter<File>,
    csv_path: PathBuf,
    every: usize,
}

impl Output {
    fn open(settings: &OutputSettings) -> Result<Option<Self>, RunError> {
        let Some(dir) = &settings.dir else { return Ok(None) };
        std::fs::create_dir_all(dir).map_err(|source| RunError::Io { path: dir.clone(), source })?;
        let csv_path = dir.join(&settings.csv_name);
        let file = File::create(&csv_path).map_err(|source| RunError::Io { path: csv_path.clone(), source })?;
        let mut out = Self { dir: dir.clone(), csv: BufWriter::new(file), csv_path, every: settings.snapshot_every };
        out.line(CSV_HEADER)?;
        Ok(Some(out))
    }

    fn line(&mut self, s: &str) -> Result<(), RunError> {
        writeln!(self.csv, "{s}")
            .and_then(|_| self.csv.flush())
            .map_err(|source| RunError::Io { path: self.csv_path.clone(), source })
    }

    fn snapshot(&self, name: &str, mesh: &SurfaceMesh, sol: Option<&StepSolution>) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let normals = mesh.normalized_vertex_normals();
        let mut attrs = vec![VertexAttribute::Vector("normal", &normals)];
        if let Some(s) = sol {
            attrs.push(VertexAttribute::Vector("velocity", &s.v));
            if let Some(h) = &s.h {
                attrs.push(VertexAttribute::Scalar("mean_curvature", h));
            }
            if let Some(l) = &s.lambda {
                attrs.push(VertexAttribute::Vector("dual_multiplier", l));
            }
            if let Some(k) = &s.kappa {
                attrs.push(VertexAttribute::Scalar("kappa", k));
            }
        }
        save_vtk_with_fields(mesh, &path, MeshFormat::Vtk, &attrs).map_err(|e| match e {
            MeshError::Io { path, source } => RunError::Io { path: path.into(), source },
            other => RunError::Mesh(other),
        })
    }
}

/// Builds the mesh from the config source and runs the flow, writing
/// outputs if an output directory is configured.
pub fn run_flow(config: &FlowConfig) -> Result<RunOutcome, RunError> {
    config.validate()?;
    let mesh = config.mesh.build()?;
    run_flow_on(config, mesh, |_| {})
}

/// Runs the flow from an explicit initial mesh, calling `observer` after each accepted step.
pub fn run_flow_on(
    config: &FlowConfig,
    mesh: SurfaceMesh,
    mut observer: impl FnMut(&StepView<'_>),
) -> Result<RunOutcome, RunError> {
    config.validate()?;
    let tau = config.time.tau;
    let theta = config.theta();
    let steps = config.num_steps();
    let mut output = Output::open(&config.output)?;
    if config.deterministic {
        crate::solver::set_parallelism(1);
    }
    let mut stepper = Stepper::new(config.scheme(), LinearSolver::new(config.solver.method, config.solver.tol));
    let mut mesh = mesh;
    let mut records = Vec::new();
    let mut step = 0;
    let mut event = None;
    let mut failure = None;

    let status = loop {
        let time = step as f64 * tau;
        let mut rec = DiagnosticsRecord::measure(&mesh, step, time, theta)?;
        if step >= steps {
            rec.status = RunStatus::Completed.as_str().into();
            emit(&mut output, &mut records, rec)?;
            break RunStatus::Completed;
        }
        let solution = match stepper.step(&mesh, tau) {
            Ok(s) => s,
            Err(e) => {
                if let SchemeError::Singular { residual, .. } = &e {
                    rec.residual = Some(*residual);
                }
                failure = Some(e.to_string());
                rec.status = RunStatus::SolverFailure.as_str().into();
                emit(&mut output, &mut records, rec)?;
                break RunStatus::SolverFailure;
            }
        };
        if let Some(out) = &output {
            if out.every > 0 && step % out.every == 0 {
                out.snapshot(&format!("surf_{step:06}.vtk"), &mesh, Some(&solution))?;
            }
        }
        rec.residual = Some(solution.report.relative_residual);
        rec.lambda_inf = solution.lambda_inf();
        let displacement: Vec<Point> = solution.v.iter().map(|v| v * tau).collect();
        let new = match mesh.update_positions(&displacement) {
            Ok(m) => m,
            Err(e) if e.is_degeneracy() => {
                event = Some(match e {
                    MeshError::Degenerate { triangle, area, .. } => {
                        PinchOffEvent::DegenerateTriangle { triangle, area }
                    }
                    MeshError::Inverted { triangle } => PinchOffEvent::DegenerateTriangle { triangle, area: 0.0 },
                    _ => unreachable!(),
                });
                rec.status = RunStatus::PinchOff.as_str().into();
                emit(&mut output, &mut records, rec)?;
                break RunStatus::PinchOff;
            }
            Err(e) => {
                failure = Some(e.to_string());
                rec.status = RunStatus::SolverFailure.as_str().into();
                emit(&mut output, &mut records, rec)?;
                break RunStatus::SolverFailure;
            }
        };
        rec.area_delta = Some(rec.area - new.surface_area());
        observer(&StepView { step, time, old: &mesh, new: &new, solution: &solution });
        emit(&mut output, &mut records, rec)?;
        mesh = new;
        step += 1;
        if let Some(e) = detect_pinch_off(&mesh, config.pinch_off.as_ref()) {
            let mut last = DiagnosticsRecord::measure(&mesh, step, step as f64 * tau, theta)?;
            last.status = RunStatus::PinchOff.as_str().into();
            emit(&mut output, &mut records, last)?;
            event = Some(e);
            break RunStatus::PinchOff;
        }
    };
    if let Some(out) = &output {
        out.snapshot("final.vtk", &mesh, None)?;
    }
    Ok(RunOutcome { status, records, final_time: step as f64 * tau, final_mesh: mesh, event, failure })
}

fn emit(
    output: &mut Option<Output>,
    records: &mut Vec<DiagnosticsRecord>,
    rec: DiagnosticsRecord,
) -> Result<(), RunError> {
    if let Some(out) = output {
        out.line(&rec.to_csv_row())?;
    }
    records.push(rec);
    Ok(())
}

/// Reads and validates a JSON config file.
pub fn load_config(path: &Path) -> Result<FlowConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let config: FlowConfig = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    config.validate().map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(config)
}
