//! Closed-form reduced collision kernels.
//!
//! After the energy and x-momentum Dirac measures are integrated out, the gain
//! operator is `K h(p) = 2πn Σ_i ∫ k_i(p, q) h(q) dq`. Each kernel is a
//! smooth factor times the indicator of a region in the `(q_x, q_y)` plane
//! bounded by parabolas in `q_x`; those regions are exposed as [`Curve`]s so
//! the operator can integrate across cells exactly up to the boundary.
//!
//! All four collision momenta are restricted to `λ <= |p_i| <= p_max`.
//! With `p_max = ∞` only the lower cutoff applies.

use crate::grid::Node;
use crate::planck::planck;
use crate::quadrature::Curve;

/// Momentum cutoffs applied to every momentum taking part in a collision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff {
    pub lambda: f64,
    pub p_max: f64,
}

impl Cutoff {
    pub fn new(lambda: f64, p_max: f64) -> Self {
        Self { lambda, p_max }
    }

    pub fn lower_only(lambda: f64) -> Self {
        Self {
            lambda,
            p_max: f64::INFINITY,
        }
    }

    #[inline]
    fn admits(&self, s: f64) -> bool {
        s >= self.lambda * self.lambda && s <= self.p_max * self.p_max
    }
}

/// Kernel for `p + p_3 <- p_2`-type gains: `p_3 = p - p_2` in the x
/// direction and `|p_3|^2 = |p|^2 - |p_2|^2`.
pub fn kernel_k1(p: &Node, p2: &Node, cut: &Cutoff) -> f64 {
    let (s, q2) = (p.p2(), p2.p2());
    let s3 = s - q2;
    let dx = p.px - p2.px;
    if !(s3 - dx * dx > 0.0) || !cut.admits(s) || !cut.admits(q2) || !cut.admits(s3) {
        return 0.0;
    }
    k1_value(s, q2)
}

/// Kernel for `p_1 -> p + p_3`: `|p_3|^2 = |p_1|^2 - |p|^2`.
pub fn kernel_k2(p: &Node, p1: &Node, cut: &Cutoff) -> f64 {
    let (s, q2) = (p.p2(), p1.p2());
    let s3 = q2 - s;
    let dx = p1.px - p.px;
    if !(s3 - dx * dx > 0.0) || !cut.admits(s) || !cut.admits(q2) || !cut.admits(s3) {
        return 0.0;
    }
    k2_value(s, q2)
}

/// Kernel for `p + p_3 -> p_1`: `p_1 = p + p_3` in the x direction and
/// `|p_1|^2 = |p|^2 + |p_3|^2`.
///
/// The transverse part of `p_1` must be real, so the indicator is
/// `|p|^2 + |p_3|^2 - (p_x + p_3x)^2 > 0`.
pub fn kernel_k3(p: &Node, p3: &Node, cut: &Cutoff) -> f64 {
    let (s, q2) = (p.p2(), p3.p2());
    let s1 = s + q2;
    let sx = p.px + p3.px;
    if !(s1 - sx * sx > 0.0) || !cut.admits(s) || !cut.admits(q2) || !cut.admits(s1) {
        return 0.0;
    }
    k3_value(s, q2)
}

/// `P(q) (1/(P(p)(e^{|p|^2-|q|^2}-1)) - 1)`, no indicator.
#[inline]
pub fn k1_value(s: f64, q2: f64) -> f64 {
    planck(q2) * (s.exp_m1() / (s - q2).exp_m1() - 1.0)
}

/// `P(q) (1/P(p) + 1 + 1/(P(p)(e^{|q|^2-|p|^2}-1)))`, no indicator.
#[inline]
pub fn k2_value(s: f64, q2: f64) -> f64 {
    let e = s.exp_m1();
    planck(q2) * (e + 1.0 + e / (q2 - s).exp_m1())
}

/// `P(q) (1/(P(p)(e^{|p|^2+|q|^2}-1)) - 1)`, no indicator.
#[inline]
pub fn k3_value(s: f64, q2: f64) -> f64 {
    planck(q2) * (s.exp_m1() / (s + q2).exp_m1() - 1.0)
}

/// Integrand of the first collision-frequency term (`1 + P_2 + P_3`).
#[inline]
pub fn nu1_value(s: f64, q2: f64) -> f64 {
    1.0 + planck(q2) + planck(s - q2)
}

/// Integrand of the second collision-frequency term (`P_3 - P_1`).
#[inline]
pub fn nu2_value(s: f64, q2: f64) -> f64 {
    planck(q2) - planck(s + q2)
}

/// Integration region of one kernel for fixed `p`, as bounds on
/// `y = q_r^2`. Bounds coming from `λ <= |q| <= p_max` are not included.
#[derive(Debug, Clone, Copy)]
pub struct KernelRegion {
    pub lower: [Curve; 2],
    pub n_lower: usize,
    pub upper: [Curve; 2],
    pub n_upper: usize,
}

impl KernelRegion {
    pub fn lower(&self) -> &[Curve] {
        &self.lower[..self.n_lower]
    }

    pub fn upper(&self) -> &[Curve] {
        &self.upper[..self.n_upper]
    }

    /// Bounds of the region intersected with the shell.
    pub fn with_shell(&self, cut: &Cutoff) -> ([Curve; 3], usize, [Curve; 3], usize) {
        let mut lo = [Curve::new(0.0, 0.0, 0.0); 3];
        let mut hi = [Curve::new(0.0, 0.0, 0.0); 3];
        lo[..self.n_lower].copy_from_slice(self.lower());
        hi[..self.n_upper].copy_from_slice(self.upper());
        let mut nl = self.n_lower;
        let mut nh = self.n_upper;
        lo[nl] = Curve::new(cut.lambda * cut.lambda, 0.0, -1.0);
        nl += 1;
        if cut.p_max.is_finite() {
            hi[nh] = Curve::new(cut.p_max * cut.p_max, 0.0, -1.0);
            nh += 1;
        }
        (lo, nl, hi, nh)
    }
}

const ZERO: Curve = Curve::new(0.0, 0.0, 0.0);

/// Support of `k1(p, ·)` (and of the first frequency term).
pub fn region_k1(p: &Node, cut: &Cutoff) -> KernelRegion {
    let s = p.p2();
    KernelRegion {
        lower: [ZERO; 2],
        n_lower: 0,
        // y < s - x^2 - (p_x - x)^2 and |p_3|^2 = s - x^2 - y >= λ^2
        upper: [
            Curve::new(s - p.px * p.px, 2.0 * p.px, -2.0),
            Curve::new(s - cut.lambda * cut.lambda, 0.0, -1.0),
        ],
        n_upper: 2,
    }
}

/// Support of `k2(p, ·)`.
pub fn region_k2(p: &Node, cut: &Cutoff) -> KernelRegion {
    let s = p.p2();
    KernelRegion {
        // y > s + (x - p_x)^2 - x^2 and x^2 + y - s >= λ^2
        lower: [
            Curve::new(s + p.px * p.px, -2.0 * p.px, 0.0),
            Curve::new(s + cut.lambda * cut.lambda, 0.0, -1.0),
        ],
        n_lower: 2,
        upper: [ZERO; 2],
        n_upper: 0,
    }
}

/// Support of `k3(p, ·)` (and of the second frequency term).
pub fn region_k3(p: &Node, cut: &Cutoff) -> KernelRegion {
    let s = p.p2();
    let mut region = KernelRegion {
        // y > (p_x + x)^2 - s - x^2
        lower: [Curve::new(p.px * p.px - s, 2.0 * p.px, 0.0), ZERO],
        n_lower: 1,
        upper: [ZERO; 2],
        n_upper: 0,
    };
    if cut.p_max.is_finite() {
        // |p_1|^2 = s + x^2 + y <= p_max^2
        region.upper[0] = Curve::new(cut.p_max * cut.p_max - s, 0.0, -1.0);
        region.n_upper = 1;
    }
    region
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn k1_hand_value() {
        let cut = Cutoff::lower_only(0.5);
        let v = kernel_k1(&Node::new(0.0, 4.0), &Node::new(0.0, 1.0), &cut);
        let e = std::f64::consts::E;
        let expect = (1.0 / (e - 1.0)) * ((e.powi(4) - 1.0) / (e.powi(3) - 1.0) - 1.0);
        assert!(rel(v, expect) < 1e-13, "{v} vs {expect}");
    }

    #[test]
    fn k2_hand_value() {
        let cut = Cutoff::lower_only(0.5);
        let v = kernel_k2(&Node::new(0.0, 1.0), &Node::new(0.0, 4.0), &cut);
        let e = std::f64::consts::E;
        let p1 = 1.0 / (e.powi(4) - 1.0);
        let expect = p1 * ((e - 1.0) + 1.0 + (e - 1.0) / (e.powi(3) - 1.0));
        assert!(rel(v, expect) < 1e-13);
    }

    #[test]
    fn k3_hand_value_is_negative() {
        let cut = Cutoff::lower_only(0.5);
        let v = kernel_k3(&Node::new(0.0, 1.0), &Node::new(0.0, 1.0), &cut);
        let e = std::f64::consts::E;
        let expect = (1.0 / (e - 1.0)) * ((e - 1.0) / (e * e - 1.0) - 1.0);
        assert!(rel(v, expect) < 1e-13);
        assert!(v < 0.0);
    }

    #[test]
    fn indicators_and_cutoffs() {
        let cut = Cutoff::lower_only(0.5);
        // p^2 - p2^2 - (p_x - p2x)^2 = 4 - 4 - 0
        assert_eq!(kernel_k1(&Node::new(0.0, 4.0), &Node::new(0.0, 4.0), &cut), 0.0);
        // |p_3|^2 = 0.2 < λ^2 while the triangle indicator holds
        assert_eq!(kernel_k1(&Node::new(0.0, 1.2), &Node::new(0.0, 1.0), &cut), 0.0);
        // p1 below p in energy
        assert_eq!(kernel_k2(&Node::new(0.0, 4.0), &Node::new(0.0, 1.0), &cut), 0.0);
        assert_eq!(kernel_k2(&Node::new(0.0, 1.0), &Node::new(0.0, 1.2), &cut), 0.0);
        // p_3 anti-aligned with p in x: p_1 has no transverse room
        assert_eq!(kernel_k3(&Node::new(2.0, 0.0), &Node::new(2.0, 0.0), &cut), 0.0);
        // p_max cap on the outgoing momentum
        let capped = Cutoff::new(0.5, 1.2);
        assert_eq!(kernel_k3(&Node::new(0.0, 1.0), &Node::new(0.0, 1.0), &capped), 0.0);
    }

    #[test]
    fn k3_sign_follows_exponential_monotonicity() {
        let cut = Cutoff::lower_only(0.5);
        for &(a, b) in &[(0.3, 0.5), (1.0, 2.0), (2.5, 0.7)] {
            let v = kernel_k3(&Node::new(0.1, a), &Node::new(0.2, b), &cut);
            assert!(v < 0.0);
        }
    }

    #[test]
    fn regions_match_pointwise_indicators() {
        let cut = Cutoff::new(0.7, 5.0);
        let p = Node::new(0.8, 2.3);
        let inside = |lower: &[Curve], upper: &[Curve], q: &Node| {
            lower.iter().all(|c| q.y > c.at(q.px)) && upper.iter().all(|c| q.y < c.at(q.px))
        };
        let r1 = region_k1(&p, &cut);
        let r2 = region_k2(&p, &cut);
        let r3 = region_k3(&p, &cut);
        let mut hits = [0usize; 3];
        for i in 0..60 {
            for j in 0..60 {
                let q = Node::new(-5.0 + 10.0 * (i as f64 + 0.37) / 60.0, 25.0 * (j as f64 + 0.61) / 60.0);
                let q2 = q.p2();
                if q2 < 0.49 || q2 > 25.0 {
                    continue;
                }
                let checks = [
                    (inside(r1.lower(), r1.upper(), &q), kernel_k1(&p, &q, &cut) != 0.0),
                    (inside(r2.lower(), r2.upper(), &q), kernel_k2(&p, &q, &cut) != 0.0),
                    (inside(r3.lower(), r3.upper(), &q), kernel_k3(&p, &q, &cut) != 0.0),
                ];
                for (k, (a, b)) in checks.into_iter().enumerate() {
                    assert_eq!(a, b, "kernel {} at {q:?}", k + 1);
                    hits[k] += a as usize;
                }
            }
        }
        assert!(hits.iter().all(|&h| h > 0));
    }
}
