//! grid → operator → constants → solve, and the single-step commands.

use std::f64::consts::PI;
use std::io::Write;

use milne_core::grid::GridHeader;
use milne_core::milne::{decay_diagnostics, default_length, DecayReport, MilneSolution, MilneSolver};
use milne_core::operator::OperatorMeta;
use milne_core::slab::{ChainHistory, Scheme};
use milne_core::spectrum::{check_spectral_inequality, kernel_residuals, spectral_report, InequalityCheck, SpectrumReport};
use milne_core::{
    assemble as assemble_operator, build_basis, build_grid, decay_constants, CollisionOperator, DecayConstants,
    HydroBasis, Result,
};
use serde::Serialize;

use crate::report::Writer;
use crate::{CliError, RunConfig};

/// Random vectors used by the spectral-inequality check.
pub const INEQUALITY_SAMPLES: usize = 100;

/// Operator on the configured grid, symmetrized if requested. The second
/// value is the weighted symmetry defect before symmetrization.
pub fn operator(cfg: &RunConfig) -> Result<(CollisionOperator, f64)> {
    let grid = build_grid(cfg.grid)?;
    let op = assemble_operator(&grid, &cfg.operator_config())?;
    let raw_defect = op.symmetry_defect();
    let op = if cfg.physics.symmetrize { op.symmetrized() } else { op };
    Ok((op, raw_defect))
}

pub struct Context {
    pub op: CollisionOperator,
    pub raw_defect: f64,
    pub basis: HydroBasis,
    pub spectrum: SpectrumReport,
    pub consts: DecayConstants,
}

impl Context {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let (op, raw_defect) = operator(cfg)?;
        let basis = build_basis(op.grid(), op.table());
        let spectrum = spectral_report(&op, &basis, false)?;
        let consts = decay_constants(&basis, spectrum.nu0_spectral)?;
        Ok(Self {
            op,
            raw_defect,
            basis,
            spectrum,
            consts,
        })
    }

    pub fn grid_hash(&self) -> String {
        self.op.grid().hash()
    }

    pub fn solver(&self, cfg: &RunConfig) -> Result<MilneSolver> {
        MilneSolver::new(&self.op, &self.basis, self.consts, cfg.slab_config(), cfg.slab.deflate)
    }

    pub fn data(&self, cfg: &RunConfig) -> Vec<f64> {
        cfg.data.in_data.evaluate(self.op.grid(), self.op.table())
    }
}

/// `Σ_k k^{-s}` for `s > 1`, partial sum plus Euler-Maclaurin tail.
pub fn zeta(s: f64) -> f64 {
    let m = 1000;
    let head: f64 = (1..m).map(|k| (k as f64).powf(-s)).sum();
    let mf = m as f64;
    head + mf.powf(1.0 - s) / (s - 1.0) + 0.5 * mf.powf(-s) + s / 12.0 * mf.powf(-s - 1.0)
}

/// `γ` on the whole space: `(5/4) π^{3/2} ζ(5/2)`.
pub fn gamma_limit() -> f64 {
    1.25 * PI.powf(1.5) * zeta(2.5)
}

#[derive(Serialize)]
struct AssembleReport<'a> {
    #[serde(flatten)]
    meta: OperatorMeta,
    symmetrized: bool,
    /// Defect of the assembled `K` before any symmetrization.
    symmetry_defect_assembled: f64,
    /// `‖L ψ‖ / ‖ν ψ‖` for `ψ_E`, `ψ_M`.
    kernel_residuals: [f64; 2],
    binary: &'a str,
}

pub fn assemble(cfg: &RunConfig, out: &mut Writer) -> std::result::Result<(), CliError> {
    let (op, raw_defect) = operator(cfg)?;
    let grid = op.grid();
    let hash = grid.hash();
    let basis = build_basis(grid, op.table());
    out.file("grid.csv", |w| grid.write_csv(op.table(), w))?;
    out.json::<GridHeader>("grid.json", &hash, &grid.header())?;
    out.file("operator.bin", |w| op.write_binary(w))?;
    let report = AssembleReport {
        meta: op.meta(),
        symmetrized: cfg.physics.symmetrize,
        symmetry_defect_assembled: raw_defect,
        kernel_residuals: kernel_residuals(&op.l_matrix(), &op, &basis),
        binary: "operator.bin",
    };
    out.json("operator.meta.json", &hash, &report)
}

#[derive(Serialize)]
struct SpectrumOut<'a> {
    #[serde(flatten)]
    report: &'a SpectrumReport,
    inequality: InequalityCheck,
    seed: u64,
}

pub fn spectrum(cfg: &RunConfig, out: &mut Writer) -> std::result::Result<(), CliError> {
    let ctx = Context::build(cfg)?;
    let inequality = check_spectral_inequality(
        &ctx.op,
        &ctx.basis,
        ctx.spectrum.nu0_spectral,
        INEQUALITY_SAMPLES,
        cfg.seed,
    );
    let body = SpectrumOut {
        report: &ctx.spectrum,
        inequality,
        seed: cfg.seed,
    };
    out.json("spectrum.json", &ctx.grid_hash(), &body)
}

#[derive(Serialize)]
pub struct ConstantsOut {
    pub gamma: f64,
    pub alpha2: f64,
    pub beta2: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Spectral gap used for `c₁`.
    pub nu0: f64,
    /// Extremes of `ν(p)/(1+|p|)^3` on the grid.
    pub nu0_fit: f64,
    pub nu1_fit: f64,
    pub alpha0: f64,
    /// `γ` for `λ → 0`, `p_max → ∞`.
    pub gamma_limit: f64,
    /// Slab length used when `slab.l` is unset.
    pub default_length: f64,
}

impl ConstantsOut {
    pub fn new(ctx: &Context) -> Self {
        let (nu0_fit, nu1_fit) = ctx.op.frequency_bounds();
        let b = &ctx.basis;
        let c = &ctx.consts;
        Self {
            gamma: b.gamma,
            alpha2: b.alpha2,
            beta2: b.beta2,
            c1: c.c1,
            c2: c.c2,
            c3: c.c3,
            nu0: c.nu0,
            nu0_fit,
            nu1_fit,
            alpha0: ctx.spectrum.alpha0,
            gamma_limit: gamma_limit(),
            default_length: default_length(c),
        }
    }
}

pub fn constants(cfg: &RunConfig, out: &mut Writer) -> std::result::Result<(), CliError> {
    let ctx = Context::build(cfg)?;
    out.json("constants.json", &ctx.grid_hash(), &ConstantsOut::new(&ctx))
}

#[derive(Serialize)]
struct SolutionSummary<'a> {
    in_data: &'a milne_core::indata::InData,
    energy: f64,
    /// `E/γ`, the `ψ_M` coefficient added back after the zero-flux solve.
    shift: f64,
    scheme: Scheme,
    epsilon: f64,
    iterations: usize,
    chain: &'a Option<ChainHistory>,
    deflated: bool,
    length: f64,
    n_xcells: usize,
    nodes: usize,
    field_layout: &'static str,
}

#[derive(Serialize)]
struct DiagnosticsOut<'a> {
    solution: SolutionSummary<'a>,
    diagnostics: DecayReport,
}

/// Writes `solution.csv`, `fluxes.csv`, `field.bin` and optionally `field.csv`.
pub fn write_solution(sol: &MilneSolution, ctx: &Context, field_csv: bool, out: &mut Writer) -> std::result::Result<(), CliError> {
    let t = &sol.traj;
    let rows: Vec<Vec<f64>> = (0..sol.x_nodes.len())
        .map(|i| vec![sol.x_nodes[i], t.a[i], t.b[i], t.w_norm2[i]])
        .collect();
    out.csv("solution.csv", &["x", "a", "b", "w_norm2"], &rows)?;
    let rows: Vec<Vec<f64>> = (0..t.flux_x.len())
        .map(|k| vec![t.flux_x[k], t.energy_flux[k], t.momentum_flux[k], t.entropy_flux[k]])
        .collect();
    out.csv("fluxes.csv", &["x", "energy_flux", "momentum_flux", "entropy_flux"], &rows)?;
    out.file("field.bin", |w| {
        for f in &sol.states {
            for v in f {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    })?;
    if field_csv {
        let nodes = ctx.op.grid().nodes();
        out.file("field.csv", |w| {
            writeln!(w, "x,node,p_x,y,f")?;
            for (x, f) in sol.x_nodes.iter().zip(&sol.states) {
                for (j, (n, v)) in nodes.iter().zip(f).enumerate() {
                    writeln!(w, "{x:e},{j},{:e},{:e},{v:e}", n.px, n.y)?;
                }
            }
            Ok(())
        })?;
    }
    Ok(())
}

pub fn solve(cfg: &RunConfig, out: &mut Writer) -> std::result::Result<(), CliError> {
    let ctx = Context::build(cfg)?;
    let solver = ctx.solver(cfg)?;
    let sol = solver.solve_milne(&ctx.data(cfg), cfg.data.energy)?;
    log::info!(
        "solved on l = {} with {} cells ({:?}, {} iterations)",
        solver.length(),
        cfg.slab.n_xcells,
        sol.scheme,
        sol.iterations
    );
    // files first, so a failing fit still leaves the solution on disk
    write_solution(&sol, &ctx, cfg.output.field_csv, out)?;
    let diagnostics = decay_diagnostics(&sol, &ctx.basis, &ctx.consts)?;
    let body = DiagnosticsOut {
        solution: SolutionSummary {
            in_data: &cfg.data.in_data,
            energy: sol.energy,
            shift: sol.shift,
            scheme: sol.scheme,
            epsilon: cfg.slab.epsilon,
            iterations: sol.iterations,
            chain: &sol.chain,
            deflated: sol.deflated,
            length: sol.length(),
            n_xcells: sol.x_nodes.len() - 1,
            nodes: ctx.op.len(),
            field_layout: "f64 little-endian; one row of all momentum nodes per x-node",
        },
        diagnostics,
    };
    out.json("diagnostics.json", &sol.grid_hash, &body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_matches_known_values() {
        assert!((zeta(2.0) - PI * PI / 6.0).abs() < 1e-12);
        assert!((zeta(4.0) - PI.powi(4) / 90.0).abs() < 1e-14);
        assert!((zeta(2.5) - 1.341_487_257_250_917_2).abs() < 1e-12);
    }
}
