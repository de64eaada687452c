//! Assembly of the discretized linearized operator `L = K - diag(ν)`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indices, Exec};
use crate::grid::{planck_table, MomentumGrid, Node, PlanckTable};
use crate::kernels::{
    k1_value, k2_value, k3_value, kernel_k1, kernel_k2, kernel_k3, nu1_value, nu2_value, region_k1, region_k2,
    region_k3, Cutoff, KernelRegion,
};
use crate::quadrature::{integrate, integrate_many, CellRule, Curve, Rect, Region};

/// How a kernel is turned into matrix entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelQuadrature {
    /// Entry = kernel integrated over the column's clipped cell, with the
    /// kernel's support boundary resolved exactly inside cut cells.
    #[default]
    CellAverage,
    /// Entry = kernel at the column node times the node weight.
    Nodal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorConfig {
    /// Condensate density.
    pub n: f64,
    pub quadrature: KernelQuadrature,
    pub rule: CellRule,
    pub exec: Exec,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            n: 1.0,
            quadrature: KernelQuadrature::default(),
            rule: CellRule::default(),
            exec: Exec::default(),
        }
    }
}

/// The two collision-frequency terms and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Frequency {
    pub term1: Vec<f64>,
    pub term2: Vec<f64>,
    pub total: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CollisionOperator {
    pub nu: Vec<f64>,
    pub k: DMatrix<f64>,
    pub n: f64,
    frequency: Frequency,
    grid: MomentumGrid,
    table: PlanckTable,
    config: OperatorConfig,
}

fn check_density(n: f64) -> Result<()> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Precondition(format!("density n = {n} must be positive")));
    }
    Ok(())
}

fn cutoff(grid: &MomentumGrid) -> Cutoff {
    Cutoff::new(grid.lambda(), grid.p_max())
}

struct Regions {
    k: [KernelRegion; 3],
}

impl Regions {
    fn new(p: &Node, cut: &Cutoff) -> Self {
        Self {
            k: [region_k1(p, cut), region_k2(p, cut), region_k3(p, cut)],
        }
    }
}

fn with_shell<R>(r: &KernelRegion, cut: &Cutoff, body: impl FnOnce(Region<'_>) -> R) -> R {
    let (lo, nl, hi, nh) = r.with_shell(cut);
    body(Region {
        lower: &lo[..nl],
        upper: &hi[..nh],
    })
}

/// `(term1, term2)` of the collision frequency at `p`, integrated over the
/// grid's cells.
fn frequency_at(p: &Node, cells: &[Rect], cut: &Cutoff, rule: CellRule, n: f64) -> (f64, f64) {
    let s = p.p2();
    let regions = Regions::new(p, cut);
    let mut t1 = 0.0;
    let mut t3 = 0.0;
    with_shell(&regions.k[0], cut, |r| {
        for c in cells {
            t1 += integrate(c, r, rule, |x, y| nu1_value(s, x * x + y));
        }
    });
    with_shell(&regions.k[2], cut, |r| {
        for c in cells {
            t3 += integrate(c, r, rule, |x, y| nu2_value(s, x * x + y));
        }
    });
    (PI * PI * n * t1, 2.0 * PI * PI * n * t3)
}

/// One row of `K` plus the frequency terms at the row node, in a single
/// sweep over the cells.
fn row_cell_average(p: &Node, cells: &[Rect], cut: &Cutoff, rule: CellRule, n: f64) -> (Vec<f64>, f64, f64) {
    let s = p.p2();
    let regions = Regions::new(p, cut);
    let scale = 2.0 * PI * PI * n;
    let mut row = vec![0.0; cells.len()];
    let mut t1 = 0.0;
    let mut t3 = 0.0;
    with_shell(&regions.k[0], cut, |r| {
        for (c, out) in cells.iter().zip(row.iter_mut()) {
            let [k, nu] = integrate_many(c, r, rule, |x, y| {
                let q2 = x * x + y;
                [k1_value(s, q2), nu1_value(s, q2)]
            });
            *out += k;
            t1 += nu;
        }
    });
    with_shell(&regions.k[1], cut, |r| {
        for (c, out) in cells.iter().zip(row.iter_mut()) {
            *out += integrate(c, r, rule, |x, y| k2_value(s, x * x + y));
        }
    });
    with_shell(&regions.k[2], cut, |r| {
        for (c, out) in cells.iter().zip(row.iter_mut()) {
            let [k, nu] = integrate_many(c, r, rule, |x, y| {
                let q2 = x * x + y;
                [k3_value(s, q2), nu2_value(s, q2)]
            });
            *out += k;
            t3 += nu;
        }
    });
    row.iter_mut().for_each(|v| *v *= scale);
    (row, PI * PI * n * t1, 2.0 * PI * PI * n * t3)
}

fn row_nodal(p: &Node, grid: &MomentumGrid, cut: &Cutoff, n: f64) -> Vec<f64> {
    let scale = 2.0 * PI * n;
    grid.nodes()
        .iter()
        .zip(grid.weights())
        .map(|(q, w)| scale * w * (kernel_k1(p, q, cut) + kernel_k2(p, q, cut) + kernel_k3(p, q, cut)))
        .collect()
}

/// Fills the `p_x < 0` half from the `p_x > 0` half using the reflection
/// symmetry `K(Rp, Rq) = K(p, q)`.
fn mirror_rows(grid: &MomentumGrid, half_rows: Vec<Vec<f64>>) -> DMatrix<f64> {
    let j = grid.len();
    let mut k = DMatrix::zeros(j, j);
    for (i, row) in half_rows.into_iter().enumerate() {
        let mi = grid.mirror(i);
        for (c, v) in row.into_iter().enumerate() {
            k[(i, c)] = v;
            k[(mi, grid.mirror(c))] = v;
        }
    }
    k
}

/// Collision frequency `ν = term1 + term2` at every node.
pub fn collision_frequency(grid: &MomentumGrid, n: f64, rule: CellRule, exec: Exec) -> Result<Frequency> {
    check_density(n)?;
    let cut = cutoff(grid);
    let half: Vec<(f64, f64)> = map_indices(exec, grid.half(), |i| {
        frequency_at(&grid.nodes()[i], grid.cells(), &cut, rule, n)
    });
    Ok(mirror_frequency(grid, &half))
}

fn mirror_frequency(grid: &MomentumGrid, half: &[(f64, f64)]) -> Frequency {
    let j = grid.len();
    let mut term1 = vec![0.0; j];
    let mut term2 = vec![0.0; j];
    for (i, &(a, b)) in half.iter().enumerate() {
        term1[i] = a;
        term2[i] = b;
        term1[grid.mirror(i)] = a;
        term2[grid.mirror(i)] = b;
    }
    let total = term1.iter().zip(&term2).map(|(a, b)| a + b).collect();
    Frequency { term1, term2, total }
}

/// Dense gain matrix; entry `(p, q)` already contains `2πn` and the
/// quadrature weight of `q`.
pub fn assemble_k(grid: &MomentumGrid, cfg: &OperatorConfig) -> Result<DMatrix<f64>> {
    Ok(assemble(grid, cfg)?.k)
}

/// Assembles `ν` and `K` on `grid`.
pub fn assemble(grid: &MomentumGrid, cfg: &OperatorConfig) -> Result<CollisionOperator> {
    check_density(cfg.n)?;
    let cut = cutoff(grid);
    let n = cfg.n;
    let (rows, freq) = match cfg.quadrature {
        KernelQuadrature::CellAverage => {
            let out = map_indices(cfg.exec, grid.half(), |i| {
                row_cell_average(&grid.nodes()[i], grid.cells(), &cut, cfg.rule, n)
            });
            let freq: Vec<(f64, f64)> = out.iter().map(|r| (r.1, r.2)).collect();
            (out.into_iter().map(|r| r.0).collect(), mirror_frequency(grid, &freq))
        }
        KernelQuadrature::Nodal => {
            let rows = map_indices(cfg.exec, grid.half(), |i| row_nodal(&grid.nodes()[i], grid, &cut, n));
            (rows, collision_frequency(grid, n, cfg.rule, cfg.exec)?)
        }
    };
    let k = mirror_rows(grid, rows);
    Ok(CollisionOperator {
        nu: freq.total.clone(),
        k,
        n,
        frequency: freq,
        grid: grid.clone(),
        table: planck_table(grid),
        config: *cfg,
    })
}

/// Area of `{y > 0, y < |p|^2 - x^2 - (p_x - x)^2}`, the support of the
/// first frequency term without cutoff, integrated with the same cut-cell
/// rule on an `n_x x n_y` lattice over `[-p_max, p_max] x [0, p_max^2]`.
pub fn term1_measure(p: &Node, p_max: f64, n_x: usize, n_y: usize, rule: CellRule) -> f64 {
    let upper = [Curve::new(p.p2() - p.px * p.px, 2.0 * p.px, -2.0)];
    let region = Region { lower: &[], upper: &upper };
    let dx = 2.0 * p_max / n_x as f64;
    let dy = p_max * p_max / n_y as f64;
    let mut acc = 0.0;
    for i in 0..n_x {
        for j in 0..n_y {
            let r = Rect {
                x0: -p_max + i as f64 * dx,
                x1: -p_max + (i + 1) as f64 * dx,
                y0: j as f64 * dy,
                y1: (j + 1) as f64 * dy,
            };
            acc += integrate(&r, region, rule, |_, _| 1.0);
        }
    }
    acc
}

/// Closed form of [`term1_measure`]: `(1/3)(p_x^2 + 2 p_r^2)^{3/2}`.
pub fn term1_measure_exact(p: &Node) -> f64 {
    (p.px * p.px + 2.0 * p.y).powf(1.5) / 3.0
}

/// `2nπ^2 √π ζ(3/2)`, the bound on the second frequency term.
pub fn term2_bound(n: f64) -> f64 {
    const ZETA_3_2: f64 = 2.612_375_348_685_488;
    2.0 * n * PI * PI * PI.sqrt() * ZETA_3_2
}

impl CollisionOperator {
    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    pub fn table(&self) -> &PlanckTable {
        &self.table
    }

    pub fn config(&self) -> &OperatorConfig {
        &self.config
    }

    pub fn frequency(&self) -> &Frequency {
        &self.frequency
    }

    pub fn len(&self) -> usize {
        self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }

    /// Weights of the inner product `(f, g) = ∫ f g P/(1+P) dp`.
    pub fn inner_weights(&self) -> Vec<f64> {
        self.table.inner_weights(&self.grid)
    }

    /// `L = K - diag(ν)` as a dense matrix.
    pub fn l_matrix(&self) -> DMatrix<f64> {
        let mut l = self.k.clone();
        for (i, nu) in self.nu.iter().enumerate() {
            l[(i, i)] -= nu;
        }
        l
    }

    /// `L f`.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.grid.check_len(f)?;
        let v = DVector::from_column_slice(f);
        let mut out = &self.k * v;
        for (i, nu) in self.nu.iter().enumerate() {
            out[i] -= nu * f[i];
        }
        Ok(out.as_slice().to_vec())
    }

    /// `ν(p) / (1+|p|)^3` at every node.
    pub fn growth_ratios(&self) -> Vec<f64> {
        self.grid
            .nodes()
            .iter()
            .zip(&self.nu)
            .map(|(p, nu)| nu / (1.0 + p.abs()).powi(3))
            .collect()
    }

    /// `(ν₀, ν₁)`: extreme values of `ν(p)/(1+|p|)^3` over the grid.
    pub fn frequency_bounds(&self) -> (f64, f64) {
        self.growth_ratios()
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)))
    }

    /// `‖W K - Kᵀ W‖_F / ‖W K‖_F` with `W = diag(weight · P/(1+P))`.
    pub fn symmetry_defect(&self) -> f64 {
        symmetry_defect(&self.k, &self.inner_weights())
    }

    /// Replaces `K` by its `W`-symmetric part `½(K + W⁻¹KᵀW)`.
    pub fn symmetrized(&self) -> CollisionOperator {
        let w = self.inner_weights();
        let j = self.len();
        let mut ks = self.k.clone();
        for i in 0..j {
            for c in (i + 1)..j {
                let a = self.k[(i, c)];
                let b = self.k[(c, i)];
                // W_i K_ic and W_c K_ci must coincide
                let m = 0.5 * (w[i] * a + w[c] * b);
                ks[(i, c)] = m / w[i];
                ks[(c, i)] = m / w[c];
            }
        }
        CollisionOperator { k: ks, ..self.clone() }
    }
}

pub fn symmetry_defect(k: &DMatrix<f64>, w: &[f64]) -> f64 {
    let j = k.nrows();
    let mut num = 0.0;
    let mut den = 0.0;
    for c in 0..j {
        for i in 0..j {
            let wk = w[i] * k[(i, c)];
            let d = wk - k[(c, i)] * w[c];
            num += d * d;
            den += wk * wk;
        }
    }
    if den == 0.0 {
        return 0.0;
    }
    (num / den).sqrt()
}

/// `W`-orthogonal projector onto a set of mutually orthogonal modes.
#[derive(Debug, Clone)]
pub struct ModeProjector {
    modes: Vec<Vec<f64>>,
    /// `W ψ / (ψ, ψ)` for each mode.
    duals: Vec<Vec<f64>>,
}

impl ModeProjector {
    pub fn new(modes: Vec<Vec<f64>>, w: &[f64]) -> Self {
        let duals = modes
            .iter()
            .map(|m| {
                let norm2: f64 = m.iter().zip(w).map(|(a, w)| a * a * w).sum();
                m.iter().zip(w).map(|(a, w)| a * w / norm2).collect()
            })
            .collect();
        Self { modes, duals }
    }

    pub fn coefficients(&self, f: &[f64]) -> Vec<f64> {
        self.duals.iter().map(|d| d.iter().zip(f).map(|(a, b)| a * b).sum()).collect()
    }

    /// `(I - Π) f`
    pub fn complement(&self, f: &[f64]) -> Vec<f64> {
        let mut out = f.to_vec();
        for (m, c) in self.modes.iter().zip(self.coefficients(f)) {
            for (o, v) in out.iter_mut().zip(m) {
                *o -= c * v;
            }
        }
        out
    }

    /// `(I - Π) A (I - Π)`.
    pub fn deflate(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let j = a.nrows();
        let mut out = a.clone();
        // right factor: A - (A ψ) φᵀ
        for (m, d) in self.modes.iter().zip(&self.duals) {
            let am = &out * DVector::from_column_slice(m);
            out -= am * DVector::from_column_slice(d).transpose();
        }
        // left factor: B - ψ (φᵀ B)
        for (m, d) in self.modes.iter().zip(&self.duals) {
            let db = DVector::from_column_slice(d).transpose() * &out;
            out -= DVector::from_column_slice(m) * db;
        }
        debug_assert_eq!(out.nrows(), j);
        out
    }
}

/// JSON sidecar of an operator dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorMeta {
    pub lambda: f64,
    pub p_max: f64,
    pub n: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub nodes: usize,
    pub grid_hash: String,
    pub quadrature: KernelQuadrature,
    pub symmetry_defect: f64,
    pub nu0_fit: f64,
    pub nu1_fit: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu0_spectral: Option<f64>,
    pub layout: String,
}

impl CollisionOperator {
    pub fn meta(&self) -> OperatorMeta {
        let (nu0, nu1) = self.frequency_bounds();
        OperatorMeta {
            lambda: self.grid.lambda(),
            p_max: self.grid.p_max(),
            n: self.n,
            n_x: self.grid.spec().n_x,
            n_y: self.grid.spec().n_y,
            nodes: self.len(),
            grid_hash: self.grid.hash(),
            quadrature: self.config.quadrature,
            symmetry_defect: self.symmetry_defect(),
            nu0_fit: nu0,
            nu1_fit: nu1,
            alpha0: None,
            nu0_spectral: None,
            layout: "f64 little-endian; nu (J values) then K row-major (J*J values)".into(),
        }
    }

    /// Raw dump: `ν` followed by `K` in row-major order.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        for v in &self.nu {
            out.write_all(&v.to_le_bytes())?;
        }
        for i in 0..self.len() {
            for c in 0..self.len() {
                out.write_all(&self.k[(i, c)].to_le_bytes())?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridSpec};

    fn small() -> CollisionOperator {
        let g = build_grid(GridSpec {
            n_x: 12,
            n_y: 12,
            ..GridSpec::default()
        })
        .unwrap();
        assemble(&g, &OperatorConfig::default()).unwrap()
    }

    #[test]
    fn mirror_symmetry_is_exact() {
        let op = small();
        let g = op.grid();
        for i in 0..g.len() {
            assert_eq!(op.nu[i], op.nu[g.mirror(i)]);
            for c in 0..g.len() {
                assert_eq!(op.k[(i, c)], op.k[(g.mirror(i), g.mirror(c))]);
            }
        }
    }

    #[test]
    fn frequency_positive_and_matches_standalone() {
        let op = small();
        let f = collision_frequency(op.grid(), 1.0, CellRule::default(), Exec::Sequential).unwrap();
        for i in 0..op.len() {
            assert!(op.nu[i] > 0.0);
            assert!((f.total[i] - op.nu[i]).abs() <= 1e-12 * op.nu[i]);
        }
    }

    #[test]
    fn symmetrized_defect_is_roundoff() {
        let op = small().symmetrized();
        assert!(op.symmetry_defect() < 1e-13);
    }

    #[test]
    fn density_scales_linearly() {
        let g = build_grid(GridSpec {
            n_x: 8,
            n_y: 8,
            ..GridSpec::default()
        })
        .unwrap();
        let a = assemble(&g, &OperatorConfig::default()).unwrap();
        let b = assemble(&g, &OperatorConfig { n: 2.5, ..Default::default() }).unwrap();
        for i in 0..a.len() {
            assert!((b.nu[i] - 2.5 * a.nu[i]).abs() <= 1e-12 * b.nu[i]);
        }
        assert!(matches!(
            assemble(&g, &OperatorConfig { n: 0.0, ..Default::default() }),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn deflation_annihilates_modes() {
        let op = small();
        let w = op.inner_weights();
        let psi: Vec<f64> = op.table().p.iter().map(|p| 1.0 + p).collect();
        let pe: Vec<f64> = op.grid().nodes().iter().zip(&psi).map(|(n, a)| n.p2() * a).collect();
        let pm: Vec<f64> = op.grid().nodes().iter().zip(&psi).map(|(n, a)| n.px * a).collect();
        let proj = ModeProjector::new(vec![pe.clone(), pm.clone()], &w);
        let ld = proj.deflate(&op.l_matrix());
        let scale = ld.amax();
        for m in [&pe, &pm] {
            let r = &ld * DVector::from_column_slice(m);
            let mmax = m.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            assert!(r.amax() < 1e-10 * scale * mmax);
        }
    }

    #[test]
    fn term1_measure_oracle_small_grid() {
        let p = Node::new(0.7, 1.9);
        let approx = term1_measure(&p, 6.0, 16, 16, CellRule::default());
        let exact = term1_measure_exact(&p);
        assert!((approx - exact).abs() / exact < 1e-2, "{approx} vs {exact}");
    }

    #[test]
    fn binary_dump_size() {
        let op = small();
        let mut buf = Vec::new();
        op.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 * (op.len() + op.len() * op.len()));
    }
}
