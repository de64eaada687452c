//! Cell quadrature on the `(p_x, y = p_r^2)` plane.
//!
//! Every integration region the crate needs (the truncated annulus, the
//! reduced collision kernels' supports, the cutoff conditions) is bounded in
//! `y` by quadratics in `p_x`. A rectangular cell is integrated with
//! Gauss-Legendre in `p_x`; at each abscissa the admissible `y` interval is
//! computed exactly and integrated with Gauss-Legendre in `y`. Cut cells are
//! first split in `p_x` wherever two bounding curves cross, so areas of
//! clipped cells are exact up to rounding.

use serde::{Deserialize, Serialize};

/// `y = c0 + c1 x + c2 x^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curve {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Curve {
    pub const fn new(c0: f64, c1: f64, c2: f64) -> Self {
        Self { c0, c1, c2 }
    }

    #[inline]
    pub fn at(&self, x: f64) -> f64 {
        self.c0 + x * (self.c1 + x * self.c2)
    }

    fn vertex_in(&self, x0: f64, x1: f64) -> Option<f64> {
        if self.c2 == 0.0 {
            return None;
        }
        let xv = -self.c1 / (2.0 * self.c2);
        (xv > x0 && xv < x1).then_some(xv)
    }

    /// Maximum over `[x0, x1]`.
    pub fn max_on(&self, x0: f64, x1: f64) -> f64 {
        let mut m = self.at(x0).max(self.at(x1));
        if let Some(xv) = self.vertex_in(x0, x1) {
            m = m.max(self.at(xv));
        }
        m
    }

    /// Minimum over `[x0, x1]`.
    pub fn min_on(&self, x0: f64, x1: f64) -> f64 {
        let mut m = self.at(x0).min(self.at(x1));
        if let Some(xv) = self.vertex_in(x0, x1) {
            m = m.min(self.at(xv));
        }
        m
    }
}

/// Axis-aligned cell `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    /// Reflection `x -> -x`.
    pub fn mirrored(&self) -> Rect {
        Rect {
            x0: -self.x1,
            x1: -self.x0,
            y0: self.y0,
            y1: self.y1,
        }
    }

    /// Splits into `k x k` equal sub-cells.
    pub fn split(&self, k: usize) -> Vec<Rect> {
        let dx = (self.x1 - self.x0) / k as f64;
        let dy = (self.y1 - self.y0) / k as f64;
        let mut out = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                out.push(Rect {
                    x0: self.x0 + i as f64 * dx,
                    x1: if i + 1 == k { self.x1 } else { self.x0 + (i + 1) as f64 * dx },
                    y0: self.y0 + j as f64 * dy,
                    y1: if j + 1 == k { self.y1 } else { self.y0 + (j + 1) as f64 * dy },
                });
            }
        }
        out
    }
}

/// Region `{ y >= l(x) for all lower l, y <= u(x) for all upper u }`.
#[derive(Debug, Clone, Copy)]
pub struct Region<'a> {
    pub lower: &'a [Curve],
    pub upper: &'a [Curve],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coverage {
    Empty,
    Full,
    Cut,
}

impl Region<'_> {
    /// Conservative classification of a cell against the region.
    pub fn coverage(&self, r: &Rect) -> Coverage {
        let mut full = true;
        for u in self.upper {
            if u.max_on(r.x0, r.x1) <= r.y0 {
                return Coverage::Empty;
            }
            if u.min_on(r.x0, r.x1) < r.y1 {
                full = false;
            }
        }
        for l in self.lower {
            if l.min_on(r.x0, r.x1) >= r.y1 {
                return Coverage::Empty;
            }
            if l.max_on(r.x0, r.x1) > r.y0 {
                full = false;
            }
        }
        if full {
            Coverage::Full
        } else {
            Coverage::Cut
        }
    }

    #[inline]
    fn y_range(&self, x: f64, y0: f64, y1: f64) -> (f64, f64) {
        let mut lo = y0;
        let mut hi = y1;
        for l in self.lower {
            lo = lo.max(l.at(x));
        }
        for u in self.upper {
            hi = hi.min(u.at(x));
        }
        (lo, hi)
    }
}

/// Gauss-Legendre points per axis for fully covered and for cut cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRule {
    pub full_x: usize,
    pub full_y: usize,
    pub cut_x: usize,
    pub cut_y: usize,
}

impl CellRule {
    pub const fn uniform(n: usize) -> Self {
        Self {
            full_x: n,
            full_y: n,
            cut_x: n,
            cut_y: n,
        }
    }
}

impl Default for CellRule {
    fn default() -> Self {
        Self {
            full_x: 2,
            full_y: 2,
            cut_x: 4,
            cut_y: 3,
        }
    }
}

const GL1: [(f64, f64); 1] = [(0.0, 2.0)];
const GL2: [(f64, f64); 2] = [(-0.577_350_269_189_625_8, 1.0), (0.577_350_269_189_625_8, 1.0)];
const GL3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 0.555_555_555_555_555_6),
    (0.0, 0.888_888_888_888_888_9),
    (0.774_596_669_241_483_4, 0.555_555_555_555_555_6),
];
const GL4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];
const GL5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664_0, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664_0, 0.236_926_885_056_189_1),
];
const GL6: [(f64, f64); 6] = [
    (-0.932_469_514_203_152_0, 0.171_324_492_379_170_3),
    (-0.661_209_386_466_264_5, 0.360_761_573_048_138_6),
    (-0.238_619_186_083_196_9, 0.467_913_934_572_691_0),
    (0.238_619_186_083_196_9, 0.467_913_934_572_691_0),
    (0.661_209_386_466_264_5, 0.360_761_573_048_138_6),
    (0.932_469_514_203_152_0, 0.171_324_492_379_170_3),
];

/// Gauss-Legendre nodes and weights on `[-1, 1]`, `n` in `1..=6`.
pub fn gauss_legendre(n: usize) -> &'static [(f64, f64)] {
    match n {
        0 | 1 => &GL1,
        2 => &GL2,
        3 => &GL3,
        4 => &GL4,
        5 => &GL5,
        _ => &GL6,
    }
}

/// Integrates `f` over `rect ∩ region` in `dx dy` measure.
pub fn integrate<F>(rect: &Rect, region: Region<'_>, rule: CellRule, mut f: F) -> f64
where
    F: FnMut(f64, f64) -> f64,
{
    integrate_many(rect, region, rule, |x, y| [f(x, y)])[0]
}

/// Integrates several integrands sharing one set of evaluation points.
pub fn integrate_many<const N: usize, F>(rect: &Rect, region: Region<'_>, rule: CellRule, mut f: F) -> [f64; N]
where
    F: FnMut(f64, f64) -> [f64; N],
{
    match region.coverage(rect) {
        Coverage::Empty => [0.0; N],
        Coverage::Full => tensor(rect, rule.full_x, rule.full_y, &mut f),
        Coverage::Cut => cut(rect, region, rule.cut_x, rule.cut_y, &mut f),
    }
}

#[inline]
fn axpy<const N: usize>(acc: &mut [f64; N], w: f64, v: [f64; N]) {
    for (a, v) in acc.iter_mut().zip(v) {
        *a += w * v;
    }
}

fn tensor<const N: usize, F: FnMut(f64, f64) -> [f64; N]>(r: &Rect, nx: usize, ny: usize, f: &mut F) -> [f64; N] {
    let (xm, xh) = (0.5 * (r.x0 + r.x1), 0.5 * (r.x1 - r.x0));
    let (ym, yh) = (0.5 * (r.y0 + r.y1), 0.5 * (r.y1 - r.y0));
    let mut acc = [0.0; N];
    for &(tx, wx) in gauss_legendre(nx) {
        let x = xm + xh * tx;
        for &(ty, wy) in gauss_legendre(ny) {
            axpy(&mut acc, wx * wy, f(x, ym + yh * ty));
        }
    }
    acc.map(|a| a * xh * yh)
}

/// Roots of `c0 + c1 x + c2 x^2` strictly inside `(x0, x1)`.
fn roots_in(c0: f64, c1: f64, c2: f64, x0: f64, x1: f64, out: &mut Vec<f64>) {
    let mut push = |x: f64| {
        if x > x0 && x < x1 && x.is_finite() {
            out.push(x);
        }
    };
    let scale = c0.abs().max(c1.abs()).max(c2.abs());
    if scale == 0.0 {
        return;
    }
    if c2.abs() <= 1e-14 * scale {
        if c1 != 0.0 {
            push(-c0 / c1);
        }
        return;
    }
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 {
        return;
    }
    let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
    if q != 0.0 {
        push(q / c2);
        push(c0 / q);
    } else {
        push(0.0);
    }
}

/// Abscissas inside the cell where the active bound of the clipped region
/// can change: crossings of the curves with each other and with the cell's
/// horizontal edges.
fn breakpoints(r: &Rect, region: Region<'_>) -> Vec<f64> {
    let edges = [Curve::new(r.y0, 0.0, 0.0), Curve::new(r.y1, 0.0, 0.0)];
    let all: Vec<&Curve> = region.lower.iter().chain(region.upper).chain(edges.iter()).collect();
    let mut pts = vec![r.x0, r.x1];
    for (i, a) in all.iter().enumerate() {
        for b in &all[i + 1..] {
            roots_in(a.c0 - b.c0, a.c1 - b.c1, a.c2 - b.c2, r.x0, r.x1, &mut pts);
        }
    }
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + b.abs()));
    pts
}

/// Cut cells: the x-range is split at [`breakpoints`], so on every piece
/// the admissible `y` interval has polynomial endpoints and the geometry is
/// integrated exactly.
fn cut<const N: usize, F: FnMut(f64, f64) -> [f64; N]>(
    r: &Rect,
    region: Region<'_>,
    nx: usize,
    ny: usize,
    f: &mut F,
) -> [f64; N] {
    let pts = breakpoints(r, region);
    let mut acc = [0.0; N];
    for seg in pts.windows(2) {
        let (xm, xh) = (0.5 * (seg[0] + seg[1]), 0.5 * (seg[1] - seg[0]));
        for &(tx, wx) in gauss_legendre(nx) {
            let x = xm + xh * tx;
            let (lo, hi) = region.y_range(x, r.y0, r.y1);
            if hi <= lo {
                continue;
            }
            let (ym, yh) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            for &(ty, wy) in gauss_legendre(ny) {
                axpy(&mut acc, xh * wx * wy * yh, f(x, ym + yh * ty));
            }
        }
    }
    acc
}
