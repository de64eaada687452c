use std::sync::OnceLock;

use milne_core::indata::InData;
use milne_core::milne::{coefficient_law_residual, cross_validate, decay_diagnostics, fit_decay, MilneSolver};
use milne_core::slab::{solve_dense_reference, solve_direct, solve_source_iteration, Scheme, SlabConfig};
use milne_core::spectrum::spectral_report;
use milne_core::*;
use nalgebra::DMatrix;

struct Fixture {
    op: CollisionOperator,
    basis: HydroBasis,
    consts: DecayConstants,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let g = build_grid(GridSpec { n_x: 16, n_y: 16, ..Default::default() }).unwrap();
        let op = assemble(&g, &OperatorConfig::default()).unwrap();
        let basis = build_basis(&g, op.table());
        let nu0 = spectral_report(&op, &basis, false).unwrap().nu0_spectral;
        let consts = decay_constants(&basis, nu0).unwrap();
        Fixture { op, basis, consts }
    })
}

fn solver(cfg: SlabConfig) -> MilneSolver {
    let f = fixture();
    MilneSolver::new(&f.op, &f.basis, f.consts, cfg, true).unwrap()
}

fn random(seed: u64) -> Vec<f64> {
    let f = fixture();
    InData::Random { amplitude: 1.0, seed }.evaluate(f.op.grid(), f.op.table())
}

fn rel_distance(basis: &HydroBasis, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    (basis.inner(&d, &d) / basis.inner(b, b).max(f64::MIN_POSITIVE)).sqrt()
}

#[test]
fn zero_data_and_kernel_modes_are_exact() {
    let f = fixture();
    let b = &f.basis;
    let s = solver(SlabConfig::default());
    let zero = s.solve_milne(&vec![0.0; b.len()], 0.0).unwrap();
    assert!(zero.states.iter().flatten().all(|v| *v == 0.0));

    let e = -0.8;
    let want: Vec<f64> = b.psi_e.iter().zip(&b.psi_m).map(|(x, y)| 0.3 * x + e / b.gamma * y).collect();
    let sol = s.solve_milne(&want, e).unwrap();
    for st in &sol.states {
        assert!(rel_distance(b, st, &want) < 1e-10);
    }
    let d = decay_diagnostics(&sol, b, &f.consts).unwrap();
    assert!(d.eta_fit.is_none());
    assert!((d.b_inf - e / b.gamma).abs() < 1e-10 * (e / b.gamma).abs());
    assert!((d.a_inf - 0.3).abs() < 1e-10);
    assert!(d.energy_drift < 1e-10 && d.momentum_drift < 1e-10);
}

#[test]
fn direct_solver_matches_dense_reference() {
    let g = build_grid(GridSpec { n_x: 8, n_y: 8, ..Default::default() }).unwrap();
    let op = assemble(&g, &OperatorConfig::default()).unwrap();
    let basis = build_basis(&g, op.table());
    let nu0 = spectral_report(&op, &basis, false).unwrap().nu0_spectral;
    let consts = decay_constants(&basis, nu0).unwrap();
    let cfg = SlabConfig { l: Some(3.0), n_xcells: 13, ..Default::default() };
    let s = MilneSolver::new(&op, &basis, consts, cfg, true).unwrap();
    let p = s.problem();
    let f0: Vec<f64> = InData::Random { amplitude: 1.0, seed: 4 }.evaluate(&g, op.table())[..p.half()].to_vec();
    for eps in [0.0, 0.3] {
        let dense = solve_dense_reference(p, &f0, eps).unwrap();
        let fast = solve_direct(p, &DMatrix::from_column_slice(p.half(), 1, &f0), eps).unwrap();
        for (a, b) in dense.iter().zip(&fast.states) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-11, "{x} {y}");
            }
        }
    }
}

#[test]
fn source_iteration_agrees_with_direct_solve() {
    let cfg = SlabConfig { l: Some(2.0), n_xcells: 40, ..Default::default() };
    let s = solver(cfg);
    let p = s.problem();
    let f0 = random(3)[..p.half()].to_vec();
    let eps = 0.5;
    let (it, sweeps) = solve_source_iteration(p, &f0, eps, 1e-13, 5000).unwrap();
    let direct = solve_direct(p, &DMatrix::from_column_slice(p.half(), 1, &f0), eps).unwrap();
    assert!(sweeps > 1);
    let scale = direct.states.iter().map(|m| m.amax()).fold(0.0, f64::max);
    for (a, b) in it.states.iter().zip(&direct.states) {
        assert!((a - b).amax() < 1e-10 * scale);
    }
    let err = solve_source_iteration(p, &f0, eps, 1e-13, 2).unwrap_err();
    assert!(err.to_string().starts_with("non-convergence"), "{err}");
}

#[test]
fn coefficient_laws_of_the_regularized_problem() {
    let f = fixture();
    for eps in [0.05, 0.4] {
        let s = solver(SlabConfig { l: Some(4.0), n_xcells: 80, epsilon: eps, ..Default::default() });
        let sol = s.solve_slab(&random(8)).unwrap();
        let r = coefficient_law_residual(&sol, &f.basis, eps);
        assert!(r < 1e-11, "eps {eps}: {r}");
        // the law is not satisfied with the wrong ε
        assert!(coefficient_law_residual(&sol, &f.basis, 2.0 * eps) > 1e3 * r.max(1e-15));
    }
}

#[test]
fn slab_length_convergence() {
    let f = fixture();
    let l = 3.0;
    let short = solver(SlabConfig { l: Some(l), n_xcells: 60, ..Default::default() });
    let long = solver(SlabConfig { l: Some(2.0 * l), n_xcells: 120, ..Default::default() });
    let data = random(21);
    let a = short.solve_milne(&data, 1.5).unwrap();
    let b = long.solve_milne(&data, 1.5).unwrap();
    let bound = (-f.consts.c1 * l / 2.0).exp();
    for i in 0..=30 {
        let d = rel_distance(&f.basis, &a.states[i], &b.states[i]);
        assert!(d <= bound, "x = {}: {d} > {bound}", a.x_nodes[i]);
    }
}

#[test]
fn random_data_diagnostics() {
    let f = fixture();
    let s = solver(SlabConfig::default());
    let data: Vec<(Vec<f64>, f64)> = vec![(random(1), 0.7), (random(2), -2.0)];
    for sol in s.solve_milne_batch(&data).unwrap() {
        let d = decay_diagnostics(&sol, &f.basis, &f.consts).unwrap();
        let fit = d.eta_fit.as_ref().unwrap();
        assert!(fit.samples >= 10);
        assert!(fit.eta >= 0.9 * f.consts.c1);
        assert!(d.energy_drift < 1e-10 && d.momentum_drift < 1e-9);
        assert!(d.entropy_increase < 1e-10 && d.entropy_min > -1e-10);
        assert!(d.entropy_start <= d.entropy_boundary_bound * (1.0 + 1e-12));
        assert!(d.dissipation_excess <= 1e-10 && d.integrated_dissipation_excess <= 1e-10);
        assert!(d.b_inf_error < 1e-8);
        assert!(d.flatness_distance2 <= d.flatness_bound.unwrap());
        assert!(d.d_norm_solution.is_finite() && d.d_norm_derivative.is_finite());
    }
}

#[test]
fn energy_mode_with_perturbation_has_zero_momentum_limit() {
    let f = fixture();
    let b = &f.basis;
    let s = solver(SlabConfig::default());
    let data: Vec<f64> = b.psi_e.iter().zip(random(5)).map(|(e, r)| e + 0.2 * r).collect();
    let sol = s.solve_milne(&data, 0.0).unwrap();
    let d = decay_diagnostics(&sol, b, &f.consts).unwrap();
    assert!(d.b_inf.abs() < 1e-10, "{}", d.b_inf);
    assert!(d.a_inf.is_finite() && d.a_inf.abs() > 0.1);
    assert!(d.a_inf * d.b_inf.abs() < 1e-9);
}

#[test]
fn short_slab_cannot_be_fitted() {
    let s = solver(SlabConfig { n_xcells: 8, ..Default::default() });
    let sol = s.solve_milne(&random(6), 0.0).unwrap();
    let err = fit_decay(&sol).unwrap_err();
    assert!(err.to_string().starts_with("fit-window-too-short"), "{err}");
}

#[test]
fn schemes_cross_validate() {
    let f = fixture();
    let data = vec![(random(12), 0.4), (f.basis.psi_e.clone(), 0.0)];
    let direct = solver(SlabConfig::default()).solve_milne_batch(&data).unwrap();
    let chain = solver(SlabConfig { scheme: Scheme::EpsilonChain, epsilon: 1e-3, ..Default::default() })
        .solve_milne_batch(&data)
        .unwrap();
    assert!(cross_validate(&direct[0], &direct[0], &f.basis).unwrap() == 0.0);
    assert!(cross_validate(&direct[0], &chain[0], &f.basis).unwrap() < 1e-8);
    assert!(cross_validate(&direct[1], &chain[1], &f.basis).unwrap() < 1e-8);
    let other = solver(SlabConfig { n_xcells: 20, ..Default::default() }).solve_milne(&random(12), 0.4).unwrap();
    let err = cross_validate(&direct[0], &other, &f.basis).unwrap_err();
    assert!(err.to_string().starts_with("grid-mismatch"), "{err}");
}

#[test]
fn rejects_wrong_data_length() {
    let err = solver(SlabConfig::default()).solve_milne(&[1.0, 2.0], 0.0).unwrap_err();
    assert!(err.to_string().starts_with("size-mismatch"), "{err}");
}
