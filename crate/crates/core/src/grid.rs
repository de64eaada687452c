//! Cylindrically symmetric momentum quadrature and equilibrium tables.
//!
//! Momenta are stored as `(p_x, y)` with `y = p_r^2`, so the 3-D measure
//! `dp = 2π p_r dp_r dp_x` becomes `π dp_x dy`. The domain is the truncated
//! shell `λ^2 <= p_x^2 + y <= p_max^2`.
//!
//! Nodes come in mirrored pairs: node `k` and node `k + half` are
//! `(p_x, y)` and `(-p_x, y)` with bitwise equal weights. All positive-`p_x`
//! nodes come first.

use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::planck;
use crate::quadrature::{integrate_many, CellRule, Coverage, Curve, Rect, Region};

/// A momentum in cylindrical variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub px: f64,
    /// `p_r^2`
    pub y: f64,
}

impl Node {
    pub const fn new(px: f64, y: f64) -> Self {
        Self { px, y }
    }

    /// `|p|^2`
    #[inline]
    pub fn p2(&self) -> f64 {
        self.px * self.px + self.y
    }

    #[inline]
    pub fn abs(&self) -> f64 {
        self.p2().sqrt()
    }

    pub fn mirrored(&self) -> Node {
        Node { px: -self.px, y: self.y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub lambda: f64,
    pub p_max: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub refine_near_cutoff: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            p_max: 6.0,
            n_x: 32,
            n_y: 32,
            refine_near_cutoff: false,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.p_max.is_finite()) {
            return Err(Error::InvalidDomain("lambda and p_max must be finite".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidDomain(format!("lambda = {} must be positive", self.lambda)));
        }
        if self.lambda >= self.p_max {
            return Err(Error::InvalidDomain(format!(
                "lambda = {} must be below p_max = {}",
                self.lambda, self.p_max
            )));
        }
        if self.n_x < 4 || self.n_y < 4 {
            return Err(Error::InvalidDomain(format!(
                "need n_x, n_y >= 4, got ({}, {})",
                self.n_x, self.n_y
            )));
        }
        if self.n_x % 2 != 0 {
            return Err(Error::InvalidDomain(format!("n_x = {} must be even", self.n_x)));
        }
        Ok(())
    }

    /// Same domain, both counts multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> GridSpec {
        GridSpec {
            n_x: self.n_x * factor,
            n_y: self.n_y * factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone)]
pub struct MomentumGrid {
    spec: GridSpec,
    nodes: Vec<Node>,
    weights: Vec<f64>,
    cells: Vec<Rect>,
    half: usize,
}

/// Exact for the clipped-cell area and first moments.
const GEOMETRY_RULE: CellRule = CellRule::uniform(3);

/// Builds the composite cut-cell midpoint grid.
///
/// Each tensor cell clipped to the shell contributes one node at the
/// centroid of its clipped part, with weight `π * clipped area`. With
/// `refine_near_cutoff`, cells crossed by `|p| = λ` are split 2x2 first.
pub fn build_grid(spec: GridSpec) -> Result<MomentumGrid> {
    spec.validate()?;
    let GridSpec {
        lambda,
        p_max,
        n_x,
        n_y,
        refine_near_cutoff,
    } = spec;
    let dx = 2.0 * p_max / n_x as f64;
    let dy = p_max * p_max / n_y as f64;
    let (lower, upper) = shell_curves(lambda, p_max);
    let shell = Region {
        lower: &lower,
        upper: &upper,
    };
    let inner = Region {
        lower: &lower,
        upper: &[],
    };

    let mut half_cells = Vec::new();
    for i in n_x / 2..n_x {
        let x0 = -p_max + i as f64 * dx;
        let x1 = if i + 1 == n_x { p_max } else { -p_max + (i + 1) as f64 * dx };
        for j in 0..n_y {
            let y0 = j as f64 * dy;
            let y1 = if j + 1 == n_y { p_max * p_max } else { (j + 1) as f64 * dy };
            let rect = Rect { x0, x1, y0, y1 };
            if shell.coverage(&rect) == Coverage::Empty {
                continue;
            }
            if refine_near_cutoff && inner.coverage(&rect) == Coverage::Cut {
                half_cells.extend(rect.split(2));
            } else {
                half_cells.push(rect);
            }
        }
    }

    let mut nodes = Vec::with_capacity(half_cells.len());
    let mut weights = Vec::with_capacity(half_cells.len());
    let mut cells = Vec::with_capacity(half_cells.len());
    for rect in half_cells {
        let (area, node) = match shell.coverage(&rect) {
            Coverage::Full => (rect.area(), Node::new(0.5 * (rect.x0 + rect.x1), 0.5 * (rect.y0 + rect.y1))),
            Coverage::Empty => continue,
            Coverage::Cut => {
                let [area, mx, my] = integrate_many(&rect, shell, GEOMETRY_RULE, |x, y| [1.0, x, y]);
                if area <= 1e-12 * rect.area() {
                    continue;
                }
                (area, place_inside(&rect, Node::new(mx / area, my / area), lambda, p_max))
            }
        };
        nodes.push(node);
        weights.push(std::f64::consts::PI * area);
        cells.push(rect);
    }
    let half = nodes.len();
    for k in 0..half {
        nodes.push(nodes[k].mirrored());
        weights.push(weights[k]);
        cells.push(cells[k].mirrored());
    }
    Ok(MomentumGrid {
        spec,
        nodes,
        weights,
        cells,
        half,
    })
}

/// Centroids of concave clipped pieces can fall outside the shell; pull
/// them back onto the admissible `y` range.
fn place_inside(rect: &Rect, c: Node, lambda: f64, p_max: f64) -> Node {
    let inside = |n: &Node| n.p2() >= lambda * lambda && n.p2() <= p_max * p_max && n.y >= 0.0;
    if inside(&c) {
        return c;
    }
    let range_at = |x: f64| {
        let lo = rect.y0.max(lambda * lambda - x * x);
        let hi = rect.y1.min(p_max * p_max - x * x);
        (lo, hi)
    };
    let (lo, hi) = range_at(c.px);
    if hi > lo {
        return Node::new(c.px, c.y.clamp(lo, hi));
    }
    let mut best = (f64::NEG_INFINITY, c);
    for k in 0..=32 {
        let x = rect.x0 + (rect.x1 - rect.x0) * (k as f64 + 0.5) / 33.0;
        let (lo, hi) = range_at(x);
        if hi - lo > best.0 {
            best = (hi - lo, Node::new(x, 0.5 * (lo + hi)));
        }
    }
    best.1
}

/// Lower and upper `y` bounds of the shell `λ <= |p| <= p_max`.
pub fn shell_curves(lambda: f64, p_max: f64) -> ([Curve; 1], [Curve; 1]) {
    (
        [Curve::new(lambda * lambda, 0.0, -1.0)],
        [Curve::new(p_max * p_max, 0.0, -1.0)],
    )
}

impl MomentumGrid {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn lambda(&self) -> f64 {
        self.spec.lambda
    }

    pub fn p_max(&self) -> f64 {
        self.spec.p_max
    }

    pub fn counts(&self) -> (usize, usize) {
        (self.spec.n_x, self.spec.n_y)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of nodes with `p_x > 0`; these are indices `0..half`.
    pub fn half(&self) -> usize {
        self.half
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Tensor cell each node represents (before clipping to the shell).
    pub fn cells(&self) -> &[Rect] {
        &self.cells
    }

    /// Index of the node `(-p_x, y)`.
    #[inline]
    pub fn mirror(&self, i: usize) -> usize {
        if i < self.half {
            i + self.half
        } else {
            i - self.half
        }
    }

    pub fn shell_region_curves(&self) -> ([Curve; 1], [Curve; 1]) {
        shell_curves(self.lambda(), self.p_max())
    }

    /// Exact volume of the truncated shell, `(4π/3)(p_max^3 - λ^3)`.
    pub fn analytic_volume(&self) -> f64 {
        4.0 * std::f64::consts::PI / 3.0 * (self.p_max().powi(3) - self.lambda().powi(3))
    }

    /// Evaluates `f` at every node.
    pub fn map_nodes(&self, f: impl Fn(&Node) -> f64) -> Vec<f64> {
        self.nodes.iter().map(f).collect()
    }

    pub fn check_len(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::SizeMismatch {
                expected: self.len(),
                got: values.len(),
            });
        }
        Ok(())
    }

    /// `Σ_k weight_k g(k)`, summed over mirrored pairs so that integrands odd
    /// in `p_x` cancel exactly.
    pub fn paired_sum(&self, g: impl Fn(usize) -> f64) -> f64 {
        (0..self.half)
            .map(|k| self.weights[k] * (g(k) + g(k + self.half)))
            .sum()
    }

    /// Short content hash over the spec, node coordinates and weights.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.spec).unwrap_or_default());
        for (n, w) in self.nodes.iter().zip(&self.weights) {
            h.update(n.px.to_le_bytes());
            h.update(n.y.to_le_bytes());
            h.update(w.to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }
}

/// Quadrature of per-node values: `Σ weight * integrand`.
pub fn moment(grid: &MomentumGrid, integrand: &[f64]) -> Result<f64> {
    grid.check_len(integrand)?;
    Ok(grid.paired_sum(|k| integrand[k]))
}

/// Equilibrium tables at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanckTable {
    /// `P = 1 / (e^{|p|^2} - 1)`
    pub p: Vec<f64>,
    /// `M = e^{-|p|^2}`
    pub m: Vec<f64>,
    /// `P / (1 + P)`
    pub ratio: Vec<f64>,
    /// `P (1 + P)`
    pub prod: Vec<f64>,
}

pub fn planck_table(grid: &MomentumGrid) -> PlanckTable {
    let s: Vec<f64> = grid.map_nodes(Node::p2);
    let p: Vec<f64> = s.iter().map(|&s| planck::planck(s)).collect();
    PlanckTable {
        m: s.iter().map(|&s| planck::maxwellian(s)).collect(),
        ratio: p.iter().map(|&p| p / (1.0 + p)).collect(),
        prod: p.iter().map(|&p| p * (1.0 + p)).collect(),
        p,
    }
}

impl PlanckTable {
    /// Node weights of the inner product of `L^2_{P/(1+P)}`: `weight * P/(1+P)`.
    pub fn inner_weights(&self, grid: &MomentumGrid) -> Vec<f64> {
        grid.weights().iter().zip(&self.ratio).map(|(w, r)| w * r).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridHeader {
    pub lambda: f64,
    pub p_max: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub refine_near_cutoff: bool,
    pub nodes: usize,
    pub grid_hash: String,
}

impl MomentumGrid {
    pub fn header(&self) -> GridHeader {
        GridHeader {
            lambda: self.lambda(),
            p_max: self.p_max(),
            n_x: self.spec.n_x,
            n_y: self.spec.n_y,
            refine_near_cutoff: self.spec.refine_near_cutoff,
            nodes: self.len(),
            grid_hash: self.hash(),
        }
    }

    /// Columnar CSV: `index,p_x,y,weight,P,M`.
    pub fn write_csv<W: Write>(&self, table: &PlanckTable, mut out: W) -> Result<()> {
        writeln!(out, "index,p_x,y,weight,P,M")?;
        for (i, (n, w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            writeln!(out, "{i},{:e},{:e},{:e},{:e},{:e}", n.px, n.y, w, table.p[i], table.m[i])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_grid() -> MomentumGrid {
        build_grid(GridSpec::default()).unwrap()
    }

    #[test]
    fn volume_matches_shell() {
        let g = default_grid();
        let vol: f64 = g.weights().iter().sum();
        let rel = (vol - g.analytic_volume()).abs() / g.analytic_volume();
        assert!(rel < 1e-12, "relative volume error {rel:e}");
    }

    #[test]
    fn nodes_inside_and_weights_positive() {
        let g = build_grid(GridSpec {
            refine_near_cutoff: true,
            ..GridSpec::default()
        })
        .unwrap();
        for (n, w) in g.nodes().iter().zip(g.weights()) {
            assert!(*w > 0.0);
            assert!(n.y >= 0.0);
            assert!(n.p2() >= 1.0 - 1e-12 && n.p2() <= 36.0 + 1e-12, "{n:?}");
            assert!(n.px != 0.0);
        }
    }

    #[test]
    fn mirror_pairs_exact() {
        let g = default_grid();
        for k in 0..g.half() {
            let m = g.mirror(k);
            assert_eq!(g.nodes()[m].px, -g.nodes()[k].px);
            assert_eq!(g.nodes()[m].y, g.nodes()[k].y);
            assert_eq!(g.weights()[m], g.weights()[k]);
            assert!(g.nodes()[k].px > 0.0);
        }
    }

    #[test]
    fn invalid_domains() {
        let bad = |spec: GridSpec| matches!(build_grid(spec), Err(Error::InvalidDomain(_)));
        assert!(bad(GridSpec { lambda: 1.0, p_max: 1.0, ..GridSpec::default() }));
        assert!(bad(GridSpec { lambda: 2.0, p_max: 1.0, ..GridSpec::default() }));
        assert!(bad(GridSpec { lambda: 0.0, ..GridSpec::default() }));
        assert!(bad(GridSpec { n_x: 2, ..GridSpec::default() }));
        assert!(bad(GridSpec { n_x: 31, ..GridSpec::default() }));
        assert!(bad(GridSpec { n_y: 3, ..GridSpec::default() }));
    }

    #[test]
    fn deterministic() {
        assert_eq!(default_grid().hash(), default_grid().hash());
    }

    #[test]
    fn odd_moment_vanishes() {
        let g = default_grid();
        let t = planck_table(&g);
        let odd: Vec<f64> = g.nodes().iter().zip(&t.p).map(|(n, p)| n.px * p).collect();
        assert_eq!(moment(&g, &odd).unwrap(), 0.0);
        let zero = vec![0.0; g.len()];
        assert_eq!(moment(&g, &zero).unwrap(), 0.0);
        assert!(matches!(moment(&g, &[1.0]), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn planck_identities() {
        let g = default_grid();
        let t = planck_table(&g);
        for i in 0..g.len() {
            let (p, m) = (t.p[i], t.m[i]);
            assert!(p > 0.0 && m > 0.0 && t.ratio[i] > 0.0 && t.prod[i] > 0.0);
            assert!(((1.0 + p) * m - p).abs() <= 1e-12 * p);
            assert!((t.ratio[i] - m).abs() <= 1e-12 * m);
        }
    }

    #[test]
    fn csv_has_one_row_per_node() {
        let g = default_grid();
        let t = planck_table(&g);
        let mut buf = Vec::new();
        g.write_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), g.len() + 1);
        assert!(text.starts_with("index,p_x,y,weight,P,M"));
    }
}
