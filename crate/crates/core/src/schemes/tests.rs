use super::*;
use crate::assembly::{boundary_conormal_terms, flatten, mesh_substrate_area, substrate_area};
use crate::diagnostics::dewetting_energy;
use crate::mesh::{gen_cuboid, gen_hemisphere, gen_icosphere, gen_planar_grid};
use crate::solver::{CsrMatrix, TripletMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn perturbed_sphere(s: u32, amp: f64, seed: u64) -> SurfaceMesh {
    let m = gen_icosphere(s, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = m.vertices().iter().map(|p| p * (1.0 + amp * rng.random_range(-1.0..1.0))).collect();
    m.with_vertices(v).unwrap()
}

fn radial_components(mesh: &SurfaceMesh, v: &[Point]) -> Vec<f64> {
    mesh.vertices().iter().zip(v).map(|(x, v)| v.dot(&x.normalize())).collect()
}

fn advance(mesh: &SurfaceMesh, sol: &StepSolution, tau: f64) -> SurfaceMesh {
    mesh.with_vertices(sol.new_positions(mesh, tau)).unwrap()
}

#[test]
fn dziuk_sphere_velocity_and_area() {
    // the band is reached from s = 5 on; coarser icospheres have ~20% curvature spread
    let m = gen_icosphere(5, 1.0);
    let s = step_dziuk_mcf(&m, 1e-3).unwrap();
    assert!(radial_components(&m, &s.v).iter().all(|r| (-2.2..=-1.8).contains(r)));
    let m1 = advance(&m, &s, 1e-3);
    let m2 = advance(&m1, &step_dziuk_mcf(&m1, 1e-3).unwrap(), 1e-3);
    assert!(m1.surface_area() < m.surface_area() && m2.surface_area() < m1.surface_area());
}

#[test]
fn closed_schemes_reject_flat_patches() {
    let flat = gen_planar_grid(4, 4, 1.0, 1.0).unwrap();
    for kind in [SchemeKind::DziukMcf, SchemeKind::DualMdrMcf, SchemeKind::BgnSd] {
        let r = assemble_system(&Scheme::new(kind), &flat, 1e-3);
        assert!(matches!(r, Err(SchemeError::Inadmissible(_))), "{kind}");
    }
}

#[test]
fn bgn_mcf_sphere_and_discrete_harmonicity() {
    let m = perturbed_sphere(3, 0.02, 3);
    let tau = 1e-3;
    let s = step_bgn_mcf(&gen_icosphere(4, 1.0), tau).unwrap();
    let r = radial_components(&gen_icosphere(4, 1.0), &s.v);
    assert!(r.iter().all(|x| (-2.2..=-1.8).contains(x)), "{:?}", r.iter().fold(0.0f64, |a, b| a.max(b.abs())));

    let s = step_bgn_mcf(&m, tau).unwrap();
    let ops = crate::assembly::assemble_operators(&m, TangentialForm::FullGradient).unwrap();
    let residual = ops.vector_stiffness.spmv(&flatten(&s.new_positions(&m, tau)));
    // sup over nodal-tangential η of |∫∇X·∇η| / |η| is the norm of the projected residual
    let n_hat = m.normalized_vertex_normals();
    let tangential = n_hat
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let r = Point::new(residual[3 * i], residual[3 * i + 1], residual[3 * i + 2]);
            (r - n * r.dot(n)).norm_squared()
        })
        .sum::<f64>()
        .sqrt();
    assert!(tangential < 1e-9, "{tangential}");
    assert!(advance(&m, &s, tau).surface_area() <= m.surface_area());
}

#[test]
fn mdr_mcf_sphere() {
    let m = gen_icosphere(4, 1.0);
    let s = step_mdr_mcf(&m, 1e-3).unwrap();
    let n_hat = m.averaged_vertex_normals();
    for (v, n) in s.v.iter().zip(&n_hat) {
        let vn = v.dot(n) / n.norm();
        assert!((-2.2..=-1.8).contains(&vn), "{vn}");
    }
    assert!(s.kappa.unwrap().iter().all(|k| k.is_finite()));
}

/// Dense minimizer of `wᵀ A3 w` subject to `Bᵀ w = Bᵀ v`, via the KKT system.
fn constrained_minimum(a3: &CsrMatrix, nvec: &[Point], v: &[f64]) -> Vec<f64> {
    let n = nvec.len();
    let mut t = a3.to_triplets();
    let mut big = TripletMatrix::new(4 * n, 4 * n);
    for &(i, j, x) in t.entries() {
        big.push(i, j, x);
    }
    for (i, p) in nvec.iter().enumerate() {
        for c in 0..3 {
            big.push(3 * i + c, 3 * n + i, p[c]);
            big.push(3 * n + i, 3 * i + c, p[c]);
        }
    }
    t = big;
    let mut rhs = vec![0.0; 4 * n];
    for (i, p) in nvec.iter().enumerate() {
        rhs[3 * n + i] = (0..3).map(|c| p[c] * v[3 * i + c]).sum();
    }
    let dense = t.to_csr().unwrap().to_dense();
    let m = nalgebra::DMatrix::from_fn(4 * n, 4 * n, |i, j| dense[i][j]);
    let x = m.lu().solve(&nalgebra::DVector::from_vec(rhs)).unwrap();
    x.as_slice()[..3 * n].to_vec()
}

#[test]
fn mdr_velocity_minimizes_deformation_rate() {
    let m = perturbed_sphere(1, 0.1, 4);
    assert!(m.num_vertices() <= 50);
    let s = step_mdr_mcf(&m, 1e-2).unwrap();
    let ops = crate::assembly::assemble_operators(&m, TangentialForm::FullGradient).unwrap();
    let v = flatten(&s.v);
    let w = constrained_minimum(&ops.vector_stiffness, &ops.lumped_normal, &v);
    let ev = ops.vector_stiffness.bilinear(&v, &v);
    let ew = ops.vector_stiffness.bilinear(&w, &w);
    assert!(ev <= ew * (1.0 + 1e-10), "{ev} {ew}");
    // any other admissible field costs more
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let t: Vec<Point> = (0..m.num_vertices())
            .map(|_| Point::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        // remove the lumped normal part so that Bᵀ(v + t) = Bᵀ v
        let t: Vec<Point> =
            t.iter().zip(&ops.lumped_normal).map(|(t, n)| t - n * (t.dot(n) / n.norm_squared())).collect();
        let other: Vec<f64> = v.iter().zip(flatten(&t)).map(|(a, b)| a + 0.1 * b).collect();
        assert!(ev <= ops.vector_stiffness.bilinear(&other, &other));
    }
}

#[test]
fn dual_mcf_sphere_curvature_and_multiplier() {
    let m = gen_icosphere(4, 1.0);
    let s = step_dual_mdr_mcf(&m, 1e-4, TangentialForm::FullGradient).unwrap();
    let h = s.h.as_ref().unwrap();
    let mean = h.iter().sum::<f64>() / h.len() as f64;
    assert!((mean - 2.0).abs() < 0.1, "{mean}");
    assert!(s.lambda_inf().unwrap() < 1e-2);
}

fn block_residuals(system: &AssembledSystem, x: &[f64]) -> f64 {
    crate::solver::relative_residual(&system.matrix, x, &system.rhs)
}

#[test]
fn dual_blocks_are_adjoint() {
    let m = perturbed_sphere(2, 0.05, 6);
    let tau = 1e-2;
    for kind in [SchemeKind::DualMdrMcf, SchemeKind::DualMdrSd] {
        let (sys, _) = assemble_system(&Scheme::new(kind), &m, tau).unwrap();
        let l = &sys.layout;
        let n = m.num_vertices();
        let get =
            |rs: Slot, r: usize, cs: Slot, c: usize| sys.matrix.get(l.index(rs, r).unwrap(), l.index(cs, c).unwrap());
        for i in 0..n {
            for c in 0..3 {
                // (a, H) block is −B, (b, v) block is Bᵀ, (d, λ) block is Bᵀ, (c, κ) is −B
                let b = get(Slot::Velocity, 3 * i + c, Slot::Curvature, i);
                assert!((b + get(Slot::Curvature, i, Slot::Velocity, 3 * i + c)).abs() < 1e-13);
                assert!((b + get(Slot::Multiplier, i, Slot::Dual, 3 * i + c)).abs() < 1e-13);
                assert!((b - get(Slot::Dual, 3 * i + c, Slot::Multiplier, i)).abs() < 1e-13);
            }
        }
    }
}

#[test]
fn dual_solution_satisfies_every_block_row() {
    let m = perturbed_sphere(2, 0.05, 7);
    for form in [TangentialForm::FullGradient, TangentialForm::SymmetricGradient] {
        let scheme = Scheme::new(SchemeKind::DualMdrMcf).with_form(form);
        let (sys, _) = assemble_system(&scheme, &m, 1e-3).unwrap();
        let (x, rep) =
            crate::solver::solve(&sys.matrix, &sys.rhs, crate::solver::SolveMethod::DirectLu, 1e-12).unwrap();
        assert!(!rep.singular);
        let r = sys.matrix.spmv(&x);
        let scale = sys.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        for slot in [Slot::Velocity, Slot::Curvature, Slot::Dual, Slot::Multiplier] {
            let got = sys.layout.extract(slot, &r);
            let want = sys.layout.extract(slot, &sys.rhs);
            let err = got.iter().zip(&want).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
            assert!(err <= 1e-10 * scale, "{slot:?} {err}");
        }
        assert!(block_residuals(&sys, &x) < 1e-10);
    }
}

#[test]
fn translation_equivariance() {
    let m = perturbed_sphere(2, 0.05, 8);
    let shift = Point::new(3.0, -1.5, 0.25);
    let moved = m.with_vertices(m.vertices().iter().map(|p| p + shift).collect()).unwrap();
    let tau = 1e-2;
    for kind in [SchemeKind::DualMdrMcf, SchemeKind::DualMdrSd] {
        let a = one_step(Scheme::new(kind), &m, tau).unwrap();
        let b = one_step(Scheme::new(kind), &moved, tau).unwrap();
        let xa = a.new_positions(&m, tau);
        let xb = b.new_positions(&moved, tau);
        for (p, q) in xa.iter().zip(&xb) {
            assert!((p + shift - q).norm() < 1e-10);
        }
        let diff = |u: &[f64], w: &[f64]| u.iter().zip(w).fold(0.0f64, |acc, (p, q)| acc.max((p - q).abs()));
        let close = |u: &[f64], w: &[f64]| diff(u, w) < 1e-10 * (1.0 + u.iter().fold(0.0f64, |a, p| a.max(p.abs())));
        assert!(close(a.h.as_ref().unwrap(), b.h.as_ref().unwrap()));
        assert!(close(a.kappa.as_ref().unwrap(), b.kappa.as_ref().unwrap()));
        assert!(close(&flatten(a.lambda.as_ref().unwrap()), &flatten(b.lambda.as_ref().unwrap())));
    }
}

#[test]
fn homogeneous_systems_have_only_the_zero_solution() {
    let m = perturbed_sphere(2, 0.05, 9);
    for kind in [SchemeKind::DualMdrMcf, SchemeKind::DualMdrSd, SchemeKind::BgnSd, SchemeKind::MdrMcf] {
        let (sys, _) = assemble_system(&Scheme::new(kind), &m, 1e-2).unwrap();
        let mut solver = LinearSolver::direct();
        let (x, _) = solver.solve(&sys.matrix, &vec![0.0; sys.rhs.len()]).unwrap();
        assert!(x.iter().all(|v| v.abs() <= 1e-9));
        let smin = solver.smallest_singular_value(&sys.matrix, 30).unwrap();
        assert!(smin > 1e-8, "{kind}: {smin}");
    }
}

#[test]
fn area_is_non_increasing_for_energy_stable_schemes() {
    for seed in 0..3 {
        let m = perturbed_sphere(2, 0.2, 10 + seed);
        for kind in
            [SchemeKind::DziukMcf, SchemeKind::BgnMcf, SchemeKind::DualMdrMcf, SchemeKind::DualMdrSd, SchemeKind::BgnSd]
        {
            for tau in [1e-3, 1e-1] {
                let s = one_step(Scheme::new(kind), &m, tau).unwrap();
                let a1 = advance(&m, &s, tau).surface_area();
                assert!(a1 <= m.surface_area() * (1.0 + 1e-12), "{kind} tau {tau}: {} -> {a1}", m.surface_area());
            }
        }
    }
}

#[test]
fn surface_diffusion_preserves_lumped_volume() {
    // summing the curvature rows kills the stiffness term: Σ_i v_i·N_i = 0
    let m = perturbed_sphere(3, 0.05, 12);
    let tau = 1e-3;
    let nvec = crate::assembly::assemble_operators(&m, TangentialForm::FullGradient).unwrap().lumped_normal;
    for s in [step_dual_mdr_sd(&m, tau, TangentialForm::FullGradient).unwrap(), step_bgn_sd(&m, tau).unwrap()] {
        let flux: f64 = s.v.iter().zip(&nvec).map(|(v, n)| v.dot(n)).sum();
        let scale: f64 = s.v.iter().zip(&nvec).map(|(v, n)| v.norm() * n.norm()).sum();
        assert!(flux.abs() < 1e-10 * scale, "{flux} {scale}");
    }
}

fn open_box(h: f64) -> SurfaceMesh {
    gen_cuboid(1.0, 6.0, 1.0, h, true).unwrap()
}

#[test]
fn right_angle_removes_contact_terms_exactly() {
    let m = open_box(0.5);
    let half_pi = std::f64::consts::FRAC_PI_2;
    for kind in [SchemeKind::DualMdrDewetting, SchemeKind::BgnDewetting] {
        let scheme = Scheme::new(kind).with_theta(half_pi);
        let (a, _) = assemble_system(&scheme, &m, 1e-2).unwrap();
        let (b, _) = assemble_system_without_contact_terms(&scheme, &m, 1e-2).unwrap();
        assert_eq!(a.matrix.values(), b.matrix.values());
        assert_eq!(a.matrix.indices(), b.matrix.indices());
        assert_eq!(a.rhs, b.rhs);
    }
}

#[test]
fn dewetting_steps_keep_contact_line_on_substrate_and_decrease_energy() {
    let m = open_box(0.5);
    let theta = 120f64.to_radians();
    let tau = 1e-2;
    for kind in [SchemeKind::DualMdrDewetting, SchemeKind::BgnDewetting, SchemeKind::MdrDewetting] {
        let scheme = Scheme::new(kind).with_theta(theta);
        let mut mesh = m.clone();
        for _ in 0..3 {
            let s = one_step(scheme, &mesh, tau).unwrap();
            for &i in mesh.boundary_loops().iter().flatten() {
                assert_eq!(s.v[i].z, 0.0);
            }
            let next = advance(&mesh, &s, tau);
            next.check_boundary_on_substrate().unwrap();
            if kind != SchemeKind::MdrDewetting {
                let (w0, w1) = (dewetting_energy(&mesh, theta).unwrap(), dewetting_energy(&next, theta).unwrap());
                assert!(w1 <= w0 + 1e-12 * w0, "{kind}: {w0} -> {w1}");
                // the contact-line pairing of the displacement equals the substrate-area change
                let bt = boundary_conormal_terms(&mesh, theta).unwrap();
                let d: Vec<f64> = flatten(&s.v).iter().map(|v| v * tau).collect();
                let pairing: f64 = flatten(&bt.load).iter().zip(&d).map(|(a, b)| a * b).sum::<f64>()
                    + 0.5 * bt.coupling.bilinear(&d, &d);
                let change = mesh_substrate_area(&next).unwrap() - mesh_substrate_area(&mesh).unwrap();
                assert!((pairing - change).abs() < 1e-12 * 6.0);
            }
            mesh = next;
        }
    }
    assert!(substrate_area(&m.loop_positions(0)).unwrap() > 0.0);
}

#[test]
fn hemisphere_at_right_angle_is_near_equilibrium() {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let speeds: Vec<f64> = (2..=4)
        .map(|s| {
            let m = gen_hemisphere(s, 1.0);
            let sol = step_mdr_dewetting(&m, 1e-3, half_pi, TangentialForm::FullGradient).unwrap();
            sol.v.iter().map(|v| v.amax()).fold(0.0, f64::max)
        })
        .collect();
    assert!(speeds[1] < speeds[0] && speeds[2] < speeds[1] && speeds[2] < 0.25 * speeds[0], "{speeds:?}");
}

#[test]
fn dewetting_schemes_reject_closed_meshes() {
    let m = gen_icosphere(1, 1.0);
    let r = step_dual_mdr_dewetting(&m, 1e-2, 1.0, TangentialForm::FullGradient);
    assert!(matches!(r, Err(SchemeError::RequiresOpen(_))));
}
