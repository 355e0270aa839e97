//! Invariant suites run by `geoflow verify`.
//!
//! Each check is self-contained and reports a pass flag with a short detail
//! string. The fast suite targets well under a minute; the full suite adds the
//! cuboid pinch-off run and the sphere convergence ladder.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{assemble_operators, boundary_conormal_terms, flatten, mesh_substrate_area, TangentialForm};
use crate::diagnostics::{dewetting_energy, estimate_order, sphere_error, NeckCriterion};
use crate::mesh::{gen_cuboid, gen_icosphere, gen_planar_grid, Point, SurfaceMesh};
use crate::schemes::{
    assemble_system, run_flow, unpack, AssembledSystem, FlowConfig, MeshSource, RunStatus, Scheme, SchemeError,
    SchemeKind, Slot, StepSolution,
};
use crate::solver::{CsrMatrix, LinearSolver, SolveMethod, TripletMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Fast,
    Full,
}

/// Deliberate defects used to confirm that the suites can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Negates the lumped normal in the curvature test rows only.
    FlipLumpedNormal,
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

pub struct Report {
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for c in &self.checks {
            let mark = if c.passed { "PASS" } else { "FAIL" };
            out += &format!("{mark}  {:width$}  {:7.2}s  {}\n", c.name, c.elapsed.as_secs_f64(), c.detail);
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        out += &format!("{} checks, {failed} failed\n", self.checks.len());
        out
    }
}

type Check = fn(Option<Fault>) -> Result<String, String>;

pub fn run_suite(suite: Suite, fault: Option<Fault>) -> Report {
    let mut list: Vec<(&'static str, Check)> = vec![
        ("lumped pairings vs corner sums", lumped_pairings),
        ("stiffness identities", stiffness_identities),
        ("sparse solve vs dense oracle", solver_oracle),
        ("homogeneous systems are uniquely solvable", homogeneous_uniqueness),
        ("flat patches are rejected", flat_patch_rejected),
        ("area monotone on small runs", area_monotone),
        ("dewetting energy and substrate identity", dewetting_identity),
    ];
    if suite == Suite::Full {
        list.push(("1:1:8 cuboid pinch-off time", cuboid_pinch_off));
        list.push(("sphere temporal order", sphere_order));
    }
    let checks = list
        .into_iter()
        .map(|(name, f)| {
            let start = Instant::now();
            let r = f(fault);
            let elapsed = start.elapsed();
            match r {
                Ok(detail) => CheckResult { name, passed: true, detail, elapsed },
                Err(detail) => CheckResult { name, passed: false, detail, elapsed },
            }
        })
        .collect();
    Report { checks }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Icosphere with every vertex scaled radially by `1 + amp * U(-1, 1)`.
pub fn perturbed_icosphere(subdivisions: u32, amp: f64, seed: u64) -> SurfaceMesh {
    let m = gen_icosphere(subdivisions, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = m.vertices().iter().map(|p| p * (1.0 + amp * rng.random_range(-1.0..1.0))).collect();
    m.with_vertices(v).expect("small perturbation keeps the mesh valid")
}

fn lumped_pairings(_: Option<Fault>) -> Result<String, String> {
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let m = perturbed_icosphere(1 + (seed % 2) as u32, 0.15, seed);
        let ops = assemble_operators(&m, TangentialForm::FullGradient).map_err(|e| e.to_string())?;
        let n = m.num_vertices();
        let mut mass = vec![0.0; n];
        let mut normal = vec![Point::zeros(); n];
        let mut blocks = vec![nalgebra::Matrix3::zeros(); n];
        for (k, tri) in m.triangles().iter().enumerate() {
            let [a, b, c] = m.corners(k);
            let cross = (b - a).cross(&(c - a));
            let area = 0.5 * cross.norm();
            let nk = cross / cross.norm();
            for &i in tri {
                mass[i] += area / 3.0;
                normal[i] += nk * area / 3.0;
                blocks[i] += nk * nk.transpose() * area / 3.0;
            }
        }
        for i in 0..n {
            worst = worst
                .max((ops.lumped_mass[i] - mass[i]).abs())
                .max((ops.lumped_normal[i] - normal[i]).amax())
                .max((ops.bgn_normal_blocks[i] - blocks[i]).amax());
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:.3e}"))?;
    Ok(format!("50 meshes, max deviation {worst:.1e}"))
}

fn stiffness_identities(_: Option<Fault>) -> Result<String, String> {
    let m = perturbed_icosphere(2, 0.1, 7);
    let ops = assemble_operators(&m, TangentialForm::SymmetricGradient).map_err(|e| e.to_string())?;
    let x = flatten(m.vertices());
    let n = m.num_vertices();
    let ones = vec![1.0; n];
    let kernel = ops.stiffness.spmv(&ones).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let rhs = ops.vector_stiffness.spmv(&x);
    let rhs_err = rhs.iter().zip(&ops.rhs_geometry).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    let symmetric = ops.tangential_form.max_abs_diff(&ops.tangential_form.transpose());
    let translation: Vec<f64> = (0..3 * n).map(|k| if k % 3 == 1 { 1.0 } else { 0.0 }).collect();
    let g_kernel = ops.tangential_form.spmv(&translation).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let worst = kernel.max(rhs_err).max(symmetric).max(g_kernel);
    ensure(worst <= 1e-12, || {
        format!("constants {kernel:.1e}, A3 x {rhs_err:.1e}, symmetry {symmetric:.1e}, translations {g_kernel:.1e}")
    })?;
    Ok(format!("max deviation {worst:.1e}"))
}

fn dense_solve(a: &CsrMatrix, b: &[f64]) -> Vec<f64> {
    let dense = a.to_dense();
    let n = b.len();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| dense[i][j]);
    m.lu().solve(&nalgebra::DVector::from_column_slice(b)).expect("oracle matrix is regular").as_slice().to_vec()
}

fn solver_oracle(_: Option<Fault>) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst = 0.0f64;
    for &n in &[10usize, 57, 200] {
        // sparse nonsymmetric matrix with a saddle-point tail
        let core = n * 3 / 4;
        let mut t = TripletMatrix::new(n, n);
        for i in 0..core {
            t.push(i, i, 4.0 + rng.random::<f64>());
            for _ in 0..3 {
                let j = rng.random_range(0..core);
                t.push(i, j, rng.random_range(-1.0..1.0));
            }
        }
        for i in core..n {
            for _ in 0..2 {
                let j = rng.random_range(0..core);
                let v = rng.random_range(-1.0..1.0);
                t.push(i, j, v);
                t.push(j, i, v);
            }
            t.push(i, i - core, 1.0);
            t.push(i - core, i, 1.0);
        }
        let a = t.to_csr().map_err(|e| e.to_string())?;
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let oracle = dense_solve(&a, &b);
        let scale = oracle.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        for method in [SolveMethod::DirectLu, SolveMethod::Gmres] {
            let (x, _) = LinearSolver::new(method, 1e-13).solve(&a, &b).map_err(|e| e.to_string())?;
            let d = x.iter().zip(&oracle).fold(0.0f64, |a, (p, q)| a.max((p - q).abs())) / scale;
            ensure(d <= 1e-10, || format!("{method:?} n={n}: {d:.3e}"))?;
            worst = worst.max(d);
        }
    }
    Ok(format!("n up to 200, max deviation {worst:.1e}"))
}

fn homogeneous_uniqueness(_: Option<Fault>) -> Result<String, String> {
    let kinds = [SchemeKind::DualMdrMcf, SchemeKind::DualMdrSd, SchemeKind::BgnSd, SchemeKind::MdrMcf];
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let m = perturbed_icosphere(2, 0.1, 100 + seed);
        for kind in kinds {
            let (sys, _) = assemble_system(&Scheme::new(kind), &m, 1e-2).map_err(|e| e.to_string())?;
            let (x, rep) =
                LinearSolver::direct().solve(&sys.matrix, &vec![0.0; sys.rhs.len()]).map_err(|e| e.to_string())?;
            let u = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            ensure(!rep.singular && u <= 1e-9, || format!("{kind}: |u| = {u:.3e}"))?;
            worst = worst.max(u);
        }
    }
    Ok(format!("20 solves, max |u| {worst:.1e}"))
}

fn flat_patch_rejected(_: Option<Fault>) -> Result<String, String> {
    let flat = gen_planar_grid(4, 4, 1.0, 1.0).map_err(|e| e.to_string())?;
    for kind in [SchemeKind::DziukMcf, SchemeKind::DualMdrMcf, SchemeKind::DualMdrSd, SchemeKind::BgnSd] {
        match assemble_system(&Scheme::new(kind), &flat, 1e-3) {
            Err(SchemeError::Inadmissible(_)) => {}
            other => return Err(format!("{kind}: {:?}", other.map(|_| ()))),
        }
    }
    Ok("4 schemes".into())
}

/// Applies `fault` to an assembled system.
fn inject(system: &mut AssembledSystem, fault: Option<Fault>) -> Result<(), String> {
    let Some(Fault::FlipLumpedNormal) = fault else { return Ok(()) };
    let layout = &system.layout;
    if !layout.has(Slot::Curvature) {
        return Ok(());
    }
    let n = layout.num_vertices();
    let mut rows = vec![false; layout.len()];
    let mut cols = vec![false; layout.len()];
    for i in 0..n {
        if let Some(r) = layout.index(Slot::Curvature, i) {
            rows[r] = true;
        }
        for c in 0..3 {
            if let Some(k) = layout.index(Slot::Velocity, 3 * i + c) {
                cols[k] = true;
            }
        }
    }
    let mut t = TripletMatrix::new(layout.len(), layout.len());
    for &(i, j, v) in system.matrix.to_triplets().entries() {
        t.push(i, j, if rows[i] && cols[j] { -v } else { v });
    }
    system.matrix = t.to_csr().map_err(|e| e.to_string())?;
    Ok(())
}

fn faulty_step(scheme: &Scheme, mesh: &SurfaceMesh, tau: f64, fault: Option<Fault>) -> Result<StepSolution, String> {
    let (mut sys, _) = assemble_system(scheme, mesh, tau).map_err(|e| e.to_string())?;
    inject(&mut sys, fault)?;
    let (x, rep) = LinearSolver::direct().solve(&sys.matrix, &sys.rhs).map_err(|e| e.to_string())?;
    ensure(!rep.singular, || format!("{}: singular solve", scheme.kind))?;
    Ok(unpack(&sys.layout, &x, rep))
}

fn advance(mesh: &SurfaceMesh, s: &StepSolution, tau: f64) -> Result<SurfaceMesh, String> {
    mesh.with_vertices(s.new_positions(mesh, tau)).map_err(|e| e.to_string())
}

fn area_monotone(fault: Option<Fault>) -> Result<String, String> {
    let kinds =
        [SchemeKind::DziukMcf, SchemeKind::BgnMcf, SchemeKind::DualMdrMcf, SchemeKind::DualMdrSd, SchemeKind::BgnSd];
    let mut steps = 0;
    for seed in 0..2 {
        let start = perturbed_icosphere(2, 0.2, 200 + seed);
        for kind in kinds {
            for tau in [1e-3, 1e-2, 1e-1] {
                let scheme = Scheme::new(kind);
                let mut mesh = start.clone();
                for _ in 0..3 {
                    let s = faulty_step(&scheme, &mesh, tau, fault)?;
                    let next = advance(&mesh, &s, tau)?;
                    let (a0, a1) = (mesh.surface_area(), next.surface_area());
                    ensure(a1 - a0 <= 1e-9 * a0, || format!("{kind} tau {tau}: area {a0:.12} -> {a1:.12}"))?;
                    mesh = next;
                    steps += 1;
                }
            }
        }
    }
    Ok(format!("{steps} steps"))
}

fn dewetting_identity(fault: Option<Fault>) -> Result<String, String> {
    let start = gen_cuboid(1.0, 2.0, 1.0, 0.34, true).map_err(|e| e.to_string())?;
    let theta = 120f64.to_radians();
    let tau = 1e-2;
    let mut worst = 0.0f64;
    for kind in [SchemeKind::DualMdrDewetting, SchemeKind::BgnDewetting] {
        let scheme = Scheme::new(kind).with_theta(theta);
        let mut mesh = start.clone();
        for _ in 0..4 {
            let s = faulty_step(&scheme, &mesh, tau, fault)?;
            let next = advance(&mesh, &s, tau)?;
            let w0 = dewetting_energy(&mesh, theta).map_err(|e| e.to_string())?;
            let w1 = dewetting_energy(&next, theta).map_err(|e| e.to_string())?;
            ensure(w1 <= w0 + 1e-9 * w0.abs(), || format!("{kind}: energy {w0:.12} -> {w1:.12}"))?;
            let bt = boundary_conormal_terms(&mesh, theta).map_err(|e| e.to_string())?;
            let d: Vec<f64> = flatten(&s.v).iter().map(|v| v * tau).collect();
            let pairing: f64 =
                flatten(&bt.load).iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() + 0.5 * bt.coupling.bilinear(&d, &d);
            let a0 = mesh_substrate_area(&mesh).map_err(|e| e.to_string())?;
            let a1 = mesh_substrate_area(&next).map_err(|e| e.to_string())?;
            let rel = (pairing - (a1 - a0)).abs() / a0;
            ensure(rel <= 1e-10, || format!("{kind}: substrate identity off by {rel:.3e}"))?;
            worst = worst.max(rel);
            mesh = next;
        }
    }
    Ok(format!("8 steps, identity within {worst:.1e}"))
}

/// Neck settings for the 1:1:8 cuboid benchmark.
pub fn cuboid_neck() -> NeckCriterion {
    NeckCriterion { axis: 2, threshold: CUBOID_NECK_THRESHOLD, slab_width: 0.1, end_margin: 1.0 }
}

/// Neck radius at which the 1:1:8 cuboid counts as pinched.
pub const CUBOID_NECK_THRESHOLD: f64 = 0.05;

fn cuboid_pinch_off(_: Option<Fault>) -> Result<String, String> {
    let config =
        FlowConfig::new(SchemeKind::DualMdrSd, MeshSource::Cuboid { dims: [1.0, 1.0, 8.0], h: 0.2 }, 1e-3, 0.6)
            .with_pinch_off(cuboid_neck());
    let out = run_flow(&config).map_err(|e| e.to_string())?;
    ensure(out.status == RunStatus::PinchOff, || format!("status {}", out.status.as_str()))?;
    let t = out.final_time;
    ensure((0.33..=0.40).contains(&t), || format!("pinch-off at t = {t:.3}"))?;
    Ok(format!("pinch-off at t = {t:.3}"))
}

fn sphere_order(_: Option<Fault>) -> Result<String, String> {
    let taus = [4e-3, 2e-3, 1e-3, 5e-4];
    let mut errors = Vec::new();
    for tau in taus {
        let config =
            FlowConfig::new(SchemeKind::DualMdrMcf, MeshSource::Icosphere { subdivisions: 4, radius: 1.0 }, tau, 0.1);
        let out = run_flow(&config).map_err(|e| e.to_string())?;
        ensure(out.status == RunStatus::Completed, || format!("tau {tau}: {}", out.status.as_str()))?;
        errors.push(sphere_error(&out.final_mesh, out.final_time).map_err(|e| e.to_string())?);
    }
    let order = estimate_order(&errors, &taus).map_err(|e| e.to_string())?;
    ensure((order - 1.0).abs() <= 0.25, || format!("order {order:.3}"))?;
    Ok(format!("order {order:.3}"))
}
