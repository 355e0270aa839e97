//! One-step solvers for each formulation, and the outer time loop.
//!
//! Every scheme is linearly implicit: one sparse solve per step on the
//! current mesh `Γ^m`, returning a velocity `v` with `X^{m+1} = id + τ v`.

mod run;
mod system;

pub use run::{
    load_config, run_flow, run_flow_on, ConfigError, DewettingSection, FlowConfig, MeshSource, OutputSettings,
    PinchOffSettings, RunError, RunOutcome, RunStatus, SchemeSection, SolverSettings, StepView, TimeSection,
};
pub use system::{AssembledSystem, Layout, Slot, SystemBuilder};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{
    assemble_operators, boundary_conormal_terms, consistent_vector_mass, mdr_constraint_row, unflatten, AssemblyError,
    BoundaryTerms, OperatorSet, TangentialForm,
};
use crate::mesh::{check_admissible, Point, SurfaceMesh};
use crate::solver::{CsrMatrix, LinearSolver, SolveError, SolveReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    DziukMcf,
    BgnMcf,
    MdrMcf,
    DualMdrMcf,
    BgnSd,
    DualMdrSd,
    MdrDewetting,
    DualMdrDewetting,
    BgnDewetting,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 9] = [
        SchemeKind::DziukMcf,
        SchemeKind::BgnMcf,
        SchemeKind::MdrMcf,
        SchemeKind::DualMdrMcf,
        SchemeKind::BgnSd,
        SchemeKind::DualMdrSd,
        SchemeKind::MdrDewetting,
        SchemeKind::DualMdrDewetting,
        SchemeKind::BgnDewetting,
    ];

    pub fn is_mean_curvature_flow(self) -> bool {
        matches!(self, SchemeKind::DziukMcf | SchemeKind::BgnMcf | SchemeKind::MdrMcf | SchemeKind::DualMdrMcf)
    }

    pub fn is_dewetting(self) -> bool {
        matches!(self, SchemeKind::MdrDewetting | SchemeKind::DualMdrDewetting | SchemeKind::BgnDewetting)
    }

    /// Whether the tangential form changes the scheme.
    pub fn uses_tangential_form(self) -> bool {
        matches!(
            self,
            SchemeKind::MdrMcf
                | SchemeKind::DualMdrMcf
                | SchemeKind::DualMdrSd
                | SchemeKind::MdrDewetting
                | SchemeKind::DualMdrDewetting
        )
    }

    pub fn is_dual(self) -> bool {
        matches!(self, SchemeKind::DualMdrMcf | SchemeKind::DualMdrSd | SchemeKind::DualMdrDewetting)
    }

    /// Unknown blocks `[v, H, λ, κ]` present in the system.
    fn blocks(self) -> [bool; 4] {
        match self {
            SchemeKind::DziukMcf | SchemeKind::BgnMcf => [true, false, false, false],
            SchemeKind::MdrMcf => [true, false, false, true],
            SchemeKind::BgnSd | SchemeKind::BgnDewetting => [true, true, false, false],
            SchemeKind::MdrDewetting => [true, true, false, true],
            SchemeKind::DualMdrMcf | SchemeKind::DualMdrSd | SchemeKind::DualMdrDewetting => [true; 4],
        }
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("singular system (relative residual {residual:.3e})")]
    Singular { residual: f64, report: SolveReport },
    #[error("{0} requires a closed surface")]
    RequiresClosed(SchemeKind),
    #[error("{0} requires an open surface with its boundary on z = 0")]
    RequiresOpen(SchemeKind),
    #[error("mesh is not admissible: {0}")]
    Inadmissible(String),
}

/// Scheme selection plus the contact angle in radians (ignored for closed flows).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scheme {
    pub kind: SchemeKind,
    pub form: TangentialForm,
    pub theta: f64,
}

impl Scheme {
    pub fn new(kind: SchemeKind) -> Self {
        Self { kind, form: TangentialForm::FullGradient, theta: std::f64::consts::FRAC_PI_2 }
    }

    pub fn with_form(mut self, form: TangentialForm) -> Self {
        self.form = form;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }
}

#[derive(Clone, Debug)]
pub struct StepSolution {
    pub v: Vec<Point>,
    pub h: Option<Vec<f64>>,
    pub lambda: Option<Vec<Point>>,
    pub kappa: Option<Vec<f64>>,
    pub report: SolveReport,
}

impl StepSolution {
    pub fn lambda_inf(&self) -> Option<f64> {
        self.lambda.as_ref().map(|l| l.iter().map(|p| p.amax()).fold(0.0, f64::max))
    }

    /// `id + τ v` at each vertex of `mesh`.
    pub fn new_positions(&self, mesh: &SurfaceMesh, tau: f64) -> Vec<Point> {
        mesh.vertices().iter().zip(&self.v).map(|(x, v)| x + v * tau).collect()
    }
}

/// Operators and geometric data behind one assembled step.
pub struct StepOperators {
    pub ops: OperatorSet,
    pub boundary: Option<BoundaryTerms>,
}

fn validate(scheme: &Scheme, mesh: &SurfaceMesh) -> Result<(), SchemeError> {
    if scheme.kind.is_dewetting() {
        if mesh.is_closed() || mesh.check_boundary_on_substrate().is_err() {
            return Err(SchemeError::RequiresOpen(scheme.kind));
        }
        return Ok(());
    }
    let adm = check_admissible(mesh);
    if !adm.a1 {
        return Err(SchemeError::Inadmissible(format!("{} degenerate triangles", adm.degenerate_triangles.len())));
    }
    if !adm.a2 {
        return Err(SchemeError::Inadmissible(format!(
            "averaged normals span {} dimensions ({} vanish)",
            adm.normal_rank,
            adm.zero_normal_vertices.len()
        )));
    }
    if !mesh.is_closed() {
        return Err(SchemeError::RequiresClosed(scheme.kind));
    }
    Ok(())
}

/// `C_ψ[i, ·] = Σ_b n̂_i[b] C[3i + b, ·]`: boundary coupling tested with `ψ n̂`.
fn contract_rows(m: &CsrMatrix, n_hat: &[Point]) -> CsrMatrix {
    let mut t = crate::solver::TripletMatrix::new(n_hat.len(), m.ncols());
    for (i, n) in n_hat.iter().enumerate() {
        for b in 0..3 {
            for (c, v) in m.row(3 * i + b) {
                t.push(i, c, n[b] * v);
            }
        }
    }
    t.to_csr().expect("finite boundary coupling")
}

/// Assembles the step system of `scheme` on `mesh` with time step `tau`.
pub fn assemble_system(
    scheme: &Scheme,
    mesh: &SurfaceMesh,
    tau: f64,
) -> Result<(AssembledSystem, StepOperators), SchemeError> {
    assemble_system_impl(scheme, mesh, tau, true)
}

/// Dewetting systems without any contact-line term, for comparisons.
pub fn assemble_system_without_contact_terms(
    scheme: &Scheme,
    mesh: &SurfaceMesh,
    tau: f64,
) -> Result<(AssembledSystem, StepOperators), SchemeError> {
    assemble_system_impl(scheme, mesh, tau, false)
}

fn assemble_system_impl(
    scheme: &Scheme,
    mesh: &SurfaceMesh,
    tau: f64,
    contact_terms: bool,
) -> Result<(AssembledSystem, StepOperators), SchemeError> {
    use Slot::*;
    validate(scheme, mesh)?;
    let kind = scheme.kind;
    let n = mesh.num_vertices();
    let ops = assemble_operators(mesh, scheme.form)?;
    let boundary = if kind.is_dewetting() { Some(boundary_conormal_terms(mesh, scheme.theta)?) } else { None };
    let fixed: Vec<usize> =
        if kind.is_dewetting() { mesh.boundary_loops().iter().flatten().copied().collect() } else { Vec::new() };
    let mut b = SystemBuilder::new(Layout::new(n, kind.blocks(), &fixed));
    let a3 = &ops.vector_stiffness;
    let g = &ops.tangential_form;
    let nvec = &ops.lumped_normal;

    match kind {
        SchemeKind::DziukMcf => {
            let mass = consistent_vector_mass(mesh)?;
            b.add_matrix(Velocity, Velocity, &mass, 1.0);
            b.add_matrix(Velocity, Velocity, a3, tau);
            b.add_rhs_vector(Velocity, &ops.rhs_geometry, -1.0);
        }
        SchemeKind::BgnMcf => {
            // κ eliminated from the (v, κ) pair: Σ_i M_i (v_i·n̂_i)(η_i·n̂_i)
            for (i, nv) in nvec.iter().enumerate() {
                let blk = nv * nv.transpose() / ops.lumped_mass[i];
                for r in 0..3 {
                    for c in 0..3 {
                        b.add(Velocity, 3 * i + r, Velocity, 3 * i + c, blk[(r, c)]);
                    }
                }
            }
            b.add_matrix(Velocity, Velocity, a3, tau);
            b.add_rhs_vector(Velocity, &ops.rhs_geometry, -1.0);
        }
        SchemeKind::MdrMcf => {
            let n_hat = ops.averaged_normals();
            let mdr = mdr_constraint_row(mesh, &n_hat)?;
            // η rows: ∫∇v·∇η − ∫^(h) κ n̂·η = 0
            b.add_matrix(Velocity, Velocity, g, 1.0);
            b.add_vertex_vectors(Velocity, Multiplier, &mdr.pairing, -1.0);
            // φ rows: ∫^(h)(v·n̂)φ + τ∫∇v·∇(φn̂) = −∫∇id·∇(φn̂)
            b.add_vertex_vectors_transposed(Multiplier, Velocity, &mdr.pairing, 1.0);
            b.add_matrix(Multiplier, Velocity, &mdr.coupling, tau);
            let dx = mdr.coupling.spmv(&crate::assembly::flatten(mesh.vertices()));
            b.add_rhs_vector(Multiplier, &dx, -1.0);
        }
        SchemeKind::BgnSd
        | SchemeKind::BgnDewetting
        | SchemeKind::DualMdrMcf
        | SchemeKind::DualMdrSd
        | SchemeKind::DualMdrDewetting => {
            // row (a), tested with w
            b.add_matrix(Velocity, Velocity, a3, tau);
            b.add_vertex_vectors(Velocity, Curvature, nvec, -1.0);
            b.add_rhs_vector(Velocity, &ops.rhs_geometry, -1.0);
            if let Some(bt) = boundary.as_ref().filter(|bt| contact_terms && bt.cos_theta != 0.0) {
                b.add_matrix(Velocity, Velocity, &bt.coupling, -bt.cos_theta * tau / 2.0);
                b.add_rhs_vector(Velocity, &crate::assembly::flatten(&bt.load), bt.cos_theta);
            }
            // row (b), tested with φ
            b.add_vertex_vectors_transposed(Curvature, Velocity, nvec, 1.0);
            if kind == SchemeKind::DualMdrMcf {
                b.add_diagonal(Curvature, Curvature, &ops.lumped_mass, 1.0);
            } else {
                b.add_matrix(Curvature, Curvature, &ops.stiffness, 1.0);
            }
            if kind.is_dual() {
                b.add_matrix(Velocity, Dual, g, -1.0);
                // row (c), tested with η
                b.add_matrix(Dual, Velocity, g, 1.0);
                b.add_vertex_vectors(Dual, Multiplier, nvec, -1.0);
                // row (d), tested with φ
                b.add_vertex_vectors_transposed(Multiplier, Dual, nvec, 1.0);
            }
        }
        SchemeKind::MdrDewetting => {
            let bt = boundary.as_ref().expect("dewetting boundary terms");
            let n_hat = ops.averaged_normals();
            let mdr = mdr_constraint_row(mesh, &n_hat)?;
            // ψ rows (Curvature slot): −∫^(h)Hψ + ∫∇X·∇(ψn̂) − ∫_∂ (cosθ n_∂ − sinθ e3)·n̂ψ = 0
            b.add_diagonal(Curvature, Curvature, &ops.lumped_mass, -1.0);
            b.add_matrix(Curvature, Velocity, &mdr.coupling, tau);
            let dx = mdr.coupling.spmv(&crate::assembly::flatten(mesh.vertices()));
            b.add_rhs_vector(Curvature, &dx, -1.0);
            if contact_terms && bt.cos_theta != 0.0 {
                let c_psi = contract_rows(&bt.coupling, &n_hat);
                b.add_matrix(Curvature, Velocity, &c_psi, -bt.cos_theta * tau / 2.0);
                for i in 0..n {
                    b.add_rhs(Curvature, i, bt.cos_theta * bt.load[i].dot(&n_hat[i]));
                }
            }
            if contact_terms {
                for i in 0..n {
                    b.add_rhs(Curvature, i, -bt.sin_theta * bt.half_edge_length[i] * n_hat[i].z);
                }
            }
            // φ rows (Multiplier slot): ∫^(h)(v·n̂)φ + ∫∇H·∇φ = 0
            b.add_vertex_vectors_transposed(Multiplier, Velocity, nvec, 1.0);
            b.add_matrix(Multiplier, Curvature, &ops.stiffness, 1.0);
            // η rows (Velocity slot): a(v, η) − ∫^(h) κ n̂·η = 0
            b.add_matrix(Velocity, Velocity, g, 1.0);
            b.add_vertex_vectors(Velocity, Multiplier, nvec, -1.0);
        }
    }
    let system = b.finish()?;
    Ok((system, StepOperators { ops, boundary }))
}

/// Splits a solved reduced vector into the step fields.
pub fn unpack(layout: &Layout, x: &[f64], report: SolveReport) -> StepSolution {
    let v = unflatten(&layout.extract(Slot::Velocity, x));
    let h = layout.has(Slot::Curvature).then(|| layout.extract(Slot::Curvature, x));
    let lambda = layout.has(Slot::Dual).then(|| unflatten(&layout.extract(Slot::Dual, x)));
    let kappa = layout.has(Slot::Multiplier).then(|| layout.extract(Slot::Multiplier, x));
    StepSolution { v, h, lambda, kappa, report }
}

/// Reusable per-run stepping state; keeps the solver's symbolic analysis.
pub struct Stepper {
    pub scheme: Scheme,
    solver: LinearSolver,
}

impl Stepper {
    pub fn new(scheme: Scheme, solver: LinearSolver) -> Self {
        Self { scheme, solver }
    }

    pub fn step(&mut self, mesh: &SurfaceMesh, tau: f64) -> Result<StepSolution, SchemeError> {
        let (system, _) = assemble_system(&self.scheme, mesh, tau)?;
        self.solve_system(&system)
    }

    pub fn solve_system(&mut self, system: &AssembledSystem) -> Result<StepSolution, SchemeError> {
        let (x, report) = self.solver.solve(&system.matrix, &system.rhs)?;
        if report.singular {
            return Err(SchemeError::Singular { residual: report.relative_residual, report });
        }
        Ok(unpack(&system.layout, &x, report))
    }

    pub fn solver_mut(&mut self) -> &mut LinearSolver {
        &mut self.solver
    }
}

fn one_step(scheme: Scheme, mesh: &SurfaceMesh, tau: f64) -> Result<StepSolution, SchemeError> {
    Stepper::new(scheme, LinearSolver::direct()).step(mesh, tau)
}

pub fn step_dziuk_mcf(mesh: &SurfaceMesh, tau: f64) -> Result<StepSolution, SchemeError> {
    one_step(Scheme::new(SchemeKind::DziukMcf), mesh, tau)
}

pub fn step_bgn_mcf(mesh: &SurfaceMesh, tau: f64) -> Result<StepSolution, SchemeError> {
    one_step(Scheme::new(SchemeKind::BgnMcf), mesh, tau)
}

pub fn step_mdr_mcf(mesh: &SurfaceMesh, tau: f64) -> Result<StepSolution, SchemeError> {
    one_step(Scheme::new(SchemeKind::MdrMcf), mesh, tau)
}

pub fn step_dual_mdr_mcf(mesh: &SurfaceMesh, tau: f64, form: TangentialForm) -> Result<StepSolution, SchemeError> {
    one_step(Scheme::new(SchemeKind::DualMdrMcf).with_form(form), mesh, tau)
}

pub fn step_bgn_sd(mesh: &SurfaceMesh, tau: f64) -> Result<StepSolution, SchemeError> {
    one_step(Scheme::new(SchemeKind::BgnSd), mesh, tau)
}

pub fn step_dual_mdr_sd(mesh: &SurfaceMesh, tau: f64, form: TangentialForm) -> Result<StepSolution, SchemeError> {
    one_step(Scheme::new(SchemeKind::DualMdrSd).with_form(form), mesh, tau)
}

pub fn step_mdr_dewetting(
    mesh: &SurfaceMesh,
    tau: f64,
    theta: f64,
    form: TangentialForm,
) -> Result<StepSolution, SchemeError> {
    one_step(Scheme::new(SchemeKind::MdrDewetting).with_form(form).with_theta(theta), mesh, tau)
}

pub fn step_dual_mdr_dewetting(
    mesh: &SurfaceMesh,
    tau: f64,
    theta: f64,
    form: TangentialForm,
) -> Result<StepSolution, SchemeError> {
    one_step(Scheme::new(SchemeKind::DualMdrDewetting).with_form(form).with_theta(theta), mesh, tau)
}

pub fn step_bgn_dewetting(mesh: &SurfaceMesh, tau: f64, theta: f64) -> Result<StepSolution, SchemeError> {
    one_step(Scheme::new(SchemeKind::BgnDewetting).with_theta(theta), mesh, tau)
}

#[cfg(test)]
mod tests;
