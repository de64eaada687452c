use milne_core::resolvent::{resolvent_residual, transport_resolvent};
use milne_core::Exec;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// For `f = c0 + c1 x`, `p_x > 0`: `g = α + 2 c1 x - α e^{κx}` with
    /// `α = 2 c0 + 2 c1 / κ`, `κ = ε / p_x`.
    #[test]
    fn linear_source_forward(c0 in -2.0f64..2.0, c1 in -2.0f64..2.0, px in 0.1f64..3.0, eps in 0.01f64..1.0) {
        let (l, n) = (2.0, 37);
        let speed = [px];
        let f: Vec<Vec<f64>> = (0..=n)
            .map(|i| {
                let x = i as f64 * l / n as f64;
                vec![c0 + c1 * x, 0.0]
            })
            .collect();
        let g = transport_resolvent(&f, &speed, l, eps, Exec::Sequential).unwrap();
        let kappa = eps / px;
        let alpha = 2.0 * c0 + 2.0 * c1 / kappa;
        let scale = alpha.abs() * (kappa * l).exp();
        for (i, row) in g.iter().enumerate() {
            let x = i as f64 * l / n as f64;
            let want = alpha + 2.0 * c1 * x - alpha * (kappa * x).exp();
            prop_assert!((row[0] - want).abs() <= 1e-10 * scale.max(1.0), "{} vs {}", row[0], want);
        }
    }

    /// Constant sources `c` at `-p_x` and `c'` at `+p_x`:
    /// `g(x, -p_x) = -2 [c' e^{κ(l-x)} (e^{κl} - 1) + c (e^{κ(l-x)} - 1)]`.
    #[test]
    fn constant_source_reflected(c in -2.0f64..2.0, cp in -2.0f64..2.0, px in 0.1f64..3.0, eps in 0.01f64..1.0) {
        let (l, n) = (1.5, 20);
        let f = vec![vec![cp, c]; n + 1];
        let g = transport_resolvent(&f, &[px], l, eps, Exec::Sequential).unwrap();
        let kappa = eps / px;
        for (i, row) in g.iter().enumerate() {
            let x = i as f64 * l / n as f64;
            let back = (kappa * (l - x)).exp();
            let want = -2.0 * (cp * back * (kappa * l).exp_m1() + c * (kappa * (l - x)).exp_m1());
            prop_assert!(rel(row[1], want) <= 1e-12, "{} vs {}", row[1], want);
        }
    }
}

#[test]
fn residual_decreases_at_second_order() {
    let speed: Vec<f64> = (1..=12).map(|k| 0.15 * k as f64).collect();
    let h = speed.len();
    let (l, eps) = (2.0, 0.2);
    let field = |n: usize| -> Vec<Vec<f64>> {
        (0..=n)
            .map(|i| {
                let x = i as f64 * l / n as f64;
                (0..2 * h)
                    .map(|j| {
                        let px = if j < h { speed[j] } else { -speed[j - h] };
                        (x * (1.0 + px)).cos() + 0.3 * px
                    })
                    .collect()
            })
            .collect()
    };
    let res: Vec<f64> = [40, 80, 160]
        .iter()
        .map(|&n| {
            let f = field(n);
            let g = transport_resolvent(&f, &speed, l, eps, Exec::Parallel).unwrap();
            resolvent_residual(&g, &f, &speed, l, eps).unwrap()
        })
        .collect();
    assert!(res[0] / res[1] >= 3.0 && res[1] / res[2] >= 3.0, "{res:?}");
}

#[test]
fn sequential_and_parallel_paths_agree() {
    let speed = [0.2, 0.9, 1.7];
    let f: Vec<Vec<f64>> = (0..=25).map(|i| (0..6).map(|j| ((i * 7 + j * 3) as f64).sin()).collect()).collect();
    let a = transport_resolvent(&f, &speed, 1.0, 0.3, Exec::Sequential).unwrap();
    let b = transport_resolvent(&f, &speed, 1.0, 0.3, Exec::Parallel).unwrap();
    assert_eq!(a, b);
}
