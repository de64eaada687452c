use milne_core::operator::{symmetry_defect, ModeProjector};
use milne_core::spectrum::{kernel_residuals, spectral_report};
use milne_core::*;
use nalgebra::DVector;
use proptest::prelude::*;
use std::sync::OnceLock;

fn op16() -> &'static (CollisionOperator, HydroBasis) {
    static CELL: OnceLock<(CollisionOperator, HydroBasis)> = OnceLock::new();
    CELL.get_or_init(|| {
        let g = build_grid(GridSpec { n_x: 16, n_y: 16, ..Default::default() }).unwrap();
        let op = assemble(&g, &OperatorConfig::default()).unwrap();
        let b = build_basis(&g, op.table());
        (op, b)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deflated_operator_is_dissipative(seed in any::<u64>(), amp in 0.1f64..10.0) {
        let (op, b) = op16();
        let w = op.inner_weights();
        let proj = ModeProjector::new(vec![b.psi_e.clone(), b.psi_m.clone()], &w);
        let l = proj.deflate(&op.l_matrix());
        let f = indata::InData::Random { amplitude: amp, seed }.evaluate(op.grid(), op.table());
        let lf = &l * DVector::from_column_slice(&f);
        let form: f64 = f.iter().zip(lf.iter()).zip(&w).map(|((a, c), w)| a * c * w).sum();
        let scale: f64 = f.iter().zip(&op.nu).zip(&w).map(|((a, n), w)| a * a * n * w).sum();
        prop_assert!(form <= 1e-12 * scale, "form {} scale {}", form, scale);
    }
}

#[test]
fn raw_dissipativity_defect_shrinks_under_refinement() {
    // the lowest pencil eigenvalue of -L is a small negative quadrature artifact
    let lowest = |n: usize| {
        let g = build_grid(GridSpec { n_x: n, n_y: n, ..Default::default() }).unwrap();
        let op = assemble(&g, &OperatorConfig::default()).unwrap();
        let b = build_basis(&g, op.table());
        spectral_report(&op, &b, false).unwrap().lowest[0]
    };
    let (a, c) = (lowest(16), lowest(32));
    assert!(a.abs() / c.abs() >= 2.0, "{a} {c}");
}

#[test]
fn symmetry_defect_decreases_and_symmetrization_removes_it() {
    let defect = |n: usize| {
        let g = build_grid(GridSpec { n_x: n, n_y: n, ..Default::default() }).unwrap();
        assemble(&g, &OperatorConfig::default()).unwrap().symmetry_defect()
    };
    let d: Vec<f64> = [16, 32, 64].iter().map(|n| defect(*n)).collect();
    assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    let (op, _) = op16();
    let s = op.symmetrized();
    assert!(s.symmetry_defect() < 1e-14);
    assert!(symmetry_defect(&s.k, &s.inner_weights()) < 1e-14);
    assert_eq!(s.nu, op.nu);
}

#[test]
fn kernel_residuals_decrease_under_refinement() {
    let res = |n: usize| {
        let g = build_grid(GridSpec { n_x: n, n_y: n, ..Default::default() }).unwrap();
        let op = assemble(&g, &OperatorConfig::default()).unwrap();
        let b = build_basis(&g, op.table());
        kernel_residuals(&op.l_matrix(), &op, &b)
    };
    let (a, c) = (res(16), res(32));
    assert!(a[0] / c[0] >= 2.0, "{a:?} {c:?}");
    assert!(a[1] > c[1], "{a:?} {c:?}");
}

#[test]
fn sequential_and_parallel_assembly_agree() {
    let g = build_grid(GridSpec { n_x: 12, n_y: 12, ..Default::default() }).unwrap();
    let seq = assemble(&g, &OperatorConfig { exec: Exec::Sequential, ..Default::default() }).unwrap();
    let par = assemble(&g, &OperatorConfig { exec: Exec::Parallel, ..Default::default() }).unwrap();
    assert_eq!(seq.k, par.k);
    assert_eq!(seq.nu, par.nu);
}

#[test]
fn nodal_quadrature_is_available() {
    let g = build_grid(GridSpec { n_x: 16, n_y: 16, ..Default::default() }).unwrap();
    let op = assemble(&g, &OperatorConfig { quadrature: KernelQuadrature::Nodal, ..Default::default() }).unwrap();
    assert!(op.nu.iter().all(|v| *v > 0.0));
    let (lo, hi) = op.frequency_bounds();
    assert!(lo > 0.0 && hi.is_finite());
    assert_eq!(op.k.nrows(), g.len());
}

#[test]
fn density_scales_the_operator() {
    let (op, _) = op16();
    let g = op.grid();
    let op2 = assemble(g, &OperatorConfig { n: 2.0, ..Default::default() }).unwrap();
    for (a, b) in op.nu.iter().zip(&op2.nu) {
        assert!((2.0 * a - b).abs() <= 1e-12 * b);
    }
    assert!((&op.k * 2.0 - &op2.k).amax() <= 1e-12 * op2.k.amax());
    assert!(assemble(g, &OperatorConfig { n: 0.0, ..Default::default() }).is_err());
}

#[test]
fn operator_dump_round_trips_metadata() {
    let (op, _) = op16();
    let meta = op.meta();
    let json = serde_json::to_string(&meta).unwrap();
    let back: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(back["grid_hash"], op.grid().hash());
    let mut buf = Vec::new();
    op.write_binary(&mut buf).unwrap();
    let j = op.len();
    assert_eq!(buf.len(), 8 * (j * j + j));
}
