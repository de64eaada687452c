//! Explicit resolvent of the regularized transport operator on the slab.
//!
//! Solves `½ g - (p_x / 2ε) ∂_x g = f` on `[0, l]` with `g(0, p) = 0` for
//! `p_x > 0` and specular reflection `g(l, p_x) = g(l, -p_x)`. With
//! `κ = ε/|p_x|`,
//!
//! - `p_x > 0`: `g(x) = -2κ ∫_0^x e^{κ(x-y)} f(y, p) dy`
//! - `p_x < 0`: `g(x) = -2κ [e^{κ(l-x)} ∫_0^l e^{κ(l-y)} f(y, -p_x) dy + ∫_x^l e^{κ(y-x)} f(y, p) dy]`
//!
//! The reflected term reads the mirrored node, which is what the boundary
//! condition at `l` requires. `f` is taken piecewise linear between the
//! x-nodes and integrated exactly against the exponentials.

use crate::error::{Error, Result};
use crate::exec::{map_indices, Exec};

/// `∫_0^h e^{κs} ds` and `∫_0^h s e^{κs} ds / h`.
fn cell_moments(kappa: f64, h: f64) -> (f64, f64) {
    let z = kappa * h;
    if z.abs() < 0.5 {
        // Σ z^k / k! / (k+1) and Σ z^k / k! / (k+2)
        let (mut i0, mut i1, mut term) = (0.0, 0.0, 1.0);
        for k in 0..25 {
            let kf = k as f64;
            i0 += term / (kf + 1.0);
            i1 += term / (kf + 2.0);
            term *= z / (kf + 1.0);
        }
        (h * i0, h * i1)
    } else {
        let em1 = z.exp_m1();
        let i0 = h * em1 / z;
        let i1 = h * (z * (em1 + 1.0) - em1) / (z * z);
        (i0, i1)
    }
}

fn check(states: &[Vec<f64>], speed: &[f64], length: f64, eps: f64) -> Result<usize> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Precondition(format!("resolvent needs ε > 0, got {eps}")));
    }
    if !(length > 0.0) {
        return Err(Error::Precondition(format!("slab length l = {length} must be positive")));
    }
    if states.len() < 2 {
        return Err(Error::Precondition("resolvent needs at least two x-nodes".into()));
    }
    if speed.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Precondition("p_x = 0 has no resolvent; all speeds must be positive".into()));
    }
    let h = speed.len();
    for s in states {
        if s.len() != 2 * h {
            return Err(Error::SizeMismatch { expected: 2 * h, got: s.len() });
        }
    }
    Ok(h)
}

/// Applies the resolvent to `states[i][j] = f(x_i, p_j)` on uniform nodes
/// `x_i = i l / N`.
///
/// Momentum indexing follows the slab solver: `speed[k]` is `p_x > 0` of
/// node `k` and node `k + half` is its mirror.
pub fn transport_resolvent(
    states: &[Vec<f64>],
    speed: &[f64],
    length: f64,
    eps: f64,
    exec: Exec,
) -> Result<Vec<Vec<f64>>> {
    let half = check(states, speed, length, eps)?;
    let n = states.len() - 1;
    let dx = length / n as f64;

    // columns[k] = (g at +speed, g at -speed) along x
    let columns = map_indices(exec, half, |k| {
        let kappa = eps / speed[k];
        let (i0, i1) = cell_moments(kappa, dx);
        let grow = (kappa * dx).exp();
        let fp = |i: usize| states[i][k];
        let fm = |i: usize| states[i][k + half];

        // forward: G_i = ∫_0^{x_i} e^{κ(x_i - y)} f dy
        let mut g_fwd = vec![0.0; n + 1];
        for i in 1..=n {
            g_fwd[i] = grow * g_fwd[i - 1] + fp(i) * i0 + (fp(i - 1) - fp(i)) * i1;
        }
        // backward: H_i = ∫_{x_i}^l e^{κ(y - x_i)} f dy on the mirror node
        let mut h_bwd = vec![0.0; n + 1];
        for i in (0..n).rev() {
            h_bwd[i] = grow * h_bwd[i + 1] + fm(i) * i0 + (fm(i + 1) - fm(i)) * i1;
        }
        let plus: Vec<f64> = g_fwd.iter().map(|g| -2.0 * kappa * g).collect();
        let minus: Vec<f64> = (0..=n)
            .map(|i| {
                let reflect = (kappa * (length - i as f64 * dx)).exp() * g_fwd[n];
                -2.0 * kappa * (reflect + h_bwd[i])
            })
            .collect();
        (plus, minus)
    });

    let mut out = vec![vec![0.0; 2 * half]; n + 1];
    for (k, (plus, minus)) in columns.into_iter().enumerate() {
        for i in 0..=n {
            out[i][k] = plus[i];
            out[i][k + half] = minus[i];
        }
    }
    Ok(out)
}

/// Largest `|½ g - (p_x/2ε) ∂_x g - f|` over interior x-nodes, with central
/// differences, relative to `max |f|`.
pub fn resolvent_residual(g: &[Vec<f64>], f: &[Vec<f64>], speed: &[f64], length: f64, eps: f64) -> Result<f64> {
    let half = check(f, speed, length, eps)?;
    if g.len() != f.len() {
        return Err(Error::SizeMismatch { expected: f.len(), got: g.len() });
    }
    let n = f.len() - 1;
    let dx = length / n as f64;
    let scale = f.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for i in 1..n {
        for j in 0..2 * half {
            let px = if j < half { speed[j] } else { -speed[j - half] };
            let dg = (g[i + 1][j] - g[i - 1][j]) / (2.0 * dx);
            let r = 0.5 * g[i][j] - px / (2.0 * eps) * dg - f[i][j];
            worst = worst.max(r.abs());
        }
    }
    Ok(worst / scale)
}

/// Closed form for a source constant in `x` at `p_x > 0`:
/// `g(x) = -2 f (e^{εx/p_x} - 1)`.
pub fn constant_source_solution(f: f64, px: f64, eps: f64, x: f64) -> f64 {
    -2.0 * f * (eps * x / px).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(n: usize, l: f64, speed: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<Vec<f64>> {
        let h = speed.len();
        (0..=n)
            .map(|i| {
                let x = i as f64 * l / n as f64;
                (0..2 * h)
                    .map(|j| if j < h { f(x, speed[j]) } else { f(x, -speed[j - h]) })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn cell_moments_match_quadrature_on_both_branches() {
        for &(kappa, h) in &[(1e-9, 0.1), (0.3, 0.2), (4.0, 0.5), (-2.0, 0.3)] {
            let m = 20000;
            let (mut a, mut b) = (0.0, 0.0);
            for q in 0..m {
                let s = (q as f64 + 0.5) * h / m as f64;
                a += (kappa * s).exp() * h / m as f64;
                b += s * (kappa * s).exp() * h / m as f64 / h;
            }
            let (i0, i1) = cell_moments(kappa, h);
            assert!((i0 - a).abs() < 1e-8 * a.abs().max(1.0), "{kappa} {h}");
            assert!((i1 - b).abs() < 1e-8 * b.abs().max(1.0), "{kappa} {h}");
        }
    }

    #[test]
    fn zero_source_gives_zero() {
        let speed = [0.3, 1.0];
        let f = field(10, 2.0, &speed, |_, _| 0.0);
        let g = transport_resolvent(&f, &speed, 2.0, 0.5, Exec::Sequential).unwrap();
        assert!(g.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_source_matches_characteristics() {
        let speed = [0.25, 0.7, 2.0];
        let (l, eps) = (3.0, 0.4);
        let f = field(30, l, &speed, |_, px| 1.0 + px * px);
        let g = transport_resolvent(&f, &speed, l, eps, Exec::Sequential).unwrap();
        for (i, row) in g.iter().enumerate() {
            let x = i as f64 * l / 30.0;
            for (k, s) in speed.iter().enumerate() {
                let want = constant_source_solution(1.0 + s * s, *s, eps, x);
                assert!((row[k] - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn boundary_conditions_hold() {
        let speed = [0.5, 1.5];
        let l = 2.0;
        let f = field(40, l, &speed, |x, px| (x + px).sin());
        let g = transport_resolvent(&f, &speed, l, 0.3, Exec::Sequential).unwrap();
        assert_eq!(g[0][0], 0.0);
        assert_eq!(g[0][1], 0.0);
        let end = &g[40];
        for k in 0..2 {
            assert!((end[k] - end[k + 2]).abs() < 1e-13 * end[k].abs().max(1.0));
        }
    }

    #[test]
    fn rejects_bad_input() {
        let speed = [1.0];
        let f = field(4, 1.0, &speed, |_, _| 1.0);
        assert!(transport_resolvent(&f, &speed, 1.0, 0.0, Exec::Sequential).is_err());
        assert!(transport_resolvent(&f, &[0.0], 1.0, 1.0, Exec::Sequential).is_err());
        assert!(transport_resolvent(&f, &[1.0, 2.0], 1.0, 1.0, Exec::Sequential).is_err());
    }
}
