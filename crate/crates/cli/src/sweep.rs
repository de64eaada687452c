//! Refinement studies: slab length, regularization `ε` and momentum grid.

use milne_core::milne::{coefficient_law_residual, cross_validate, default_length, fit_decay, MilneSolution, MilneSolver};
use milne_core::slab::{Scheme, SlabConfig};
use milne_core::spectrum::kernel_residuals;
use milne_core::{GridSpec, HydroBasis, Result};
use serde_json::{Map, Value};

use crate::pipeline::Context;
use crate::report::Writer;
use crate::{CliError, RunConfig};

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    let m: Map<String, Value> = self.header.iter().zip(r).map(|(h, v)| (h.to_string(), (*v).into())).collect();
                    Value::Object(m)
                })
                .collect(),
        )
    }
}

/// `(a, b)` at `x = 3l/4` and the relative error of `b` against `E/γ`.
fn asymptotics(sol: &MilneSolution, basis: &HydroBasis) -> (f64, f64, f64) {
    let i = sol.node_at(0.75 * sol.length());
    let (a, b) = (sol.traj.a[i], sol.traj.b[i]);
    let want = sol.energy / basis.gamma;
    let err = if want != 0.0 { (b - want).abs() / want.abs() } else { b.abs() };
    (a, b, err)
}

/// Fitted rate, or NaN when the slab is too short for a fit window.
fn eta(sol: &MilneSolution) -> f64 {
    match fit_decay(sol) {
        Ok(Some(fit)) => fit.eta,
        _ => f64::NAN,
    }
}

fn length_table(cfg: &RunConfig, ctx: &Context) -> Result<Table> {
    let base = cfg.slab.l.unwrap_or_else(|| default_length(&ctx.consts));
    let data = ctx.data(cfg);
    let mut t = Table::new(&["factor", "l", "n_xcells", "a_inf", "b_inf", "b_inf_rel_error", "eta_fit", "w_norm2_end"]);
    for &factor in &cfg.sweep.length_factors {
        // keep Δx fixed
        let n_xcells = ((factor * cfg.slab.n_xcells as f64).round() as usize).max(2);
        let slab = SlabConfig {
            l: Some(factor * base),
            n_xcells,
            ..cfg.slab_config()
        };
        let solver = MilneSolver::new(&ctx.op, &ctx.basis, ctx.consts, slab, cfg.slab.deflate)?;
        let sol = solver.solve_milne(&data, cfg.data.energy)?;
        let (a, b, err) = asymptotics(&sol, &ctx.basis);
        let w_end = *sol.traj.w_norm2.last().unwrap_or(&0.0);
        t.push(vec![factor, sol.length(), n_xcells as f64, a, b, err, eta(&sol), w_end]);
    }
    Ok(t)
}

/// Zero-flux slab problems `ε f + p_x ∂_x f = L f` against `ε = 0`.
fn epsilon_table(cfg: &RunConfig, ctx: &Context) -> Result<Table> {
    let shift = cfg.data.energy / ctx.basis.gamma;
    let data: Vec<f64> = ctx.data(cfg).iter().zip(&ctx.basis.psi_m).map(|(f, m)| f - shift * m).collect();
    let solve = |eps: f64| -> Result<MilneSolution> {
        let slab = SlabConfig {
            scheme: Scheme::DirectSparse,
            epsilon: eps,
            ..cfg.slab_config()
        };
        MilneSolver::new(&ctx.op, &ctx.basis, ctx.consts, slab, cfg.slab.deflate)?.solve_slab(&data)
    };
    let reference = solve(0.0)?;
    let mut t = Table::new(&["epsilon", "discrepancy", "coefficient_law_residual", "a_inf", "b_inf"]);
    for &eps in &cfg.sweep.epsilons {
        let sol = solve(eps)?;
        let (a, b, _) = asymptotics(&sol, &ctx.basis);
        t.push(vec![
            eps,
            cross_validate(&sol, &reference, &ctx.basis)?,
            coefficient_law_residual(&sol, &ctx.basis, eps),
            a,
            b,
        ]);
    }
    Ok(t)
}

fn grid_table(cfg: &RunConfig) -> Result<Table> {
    let mut t = Table::new(&[
        "n", "nodes", "gamma", "alpha2", "beta2", "c1", "c2", "nu0", "alpha0", "symmetry_defect",
        "energy_mode_residual", "momentum_mode_residual", "a_inf", "b_inf", "b_inf_rel_error",
    ]);
    for &n in &cfg.sweep.grid_sizes {
        let mut local = cfg.clone();
        local.grid = GridSpec { n_x: n, n_y: n, ..cfg.grid };
        log::info!("grid sweep: {n}x{n}");
        let ctx = Context::build(&local)?;
        let res = kernel_residuals(&ctx.op.l_matrix(), &ctx.op, &ctx.basis);
        let sol = ctx.solver(&local)?.solve_milne(&ctx.data(&local), cfg.data.energy)?;
        let (a, b, err) = asymptotics(&sol, &ctx.basis);
        let (bs, c) = (&ctx.basis, &ctx.consts);
        t.push(vec![
            n as f64,
            ctx.op.len() as f64,
            bs.gamma,
            bs.alpha2,
            bs.beta2,
            c.c1,
            c.c2,
            c.nu0,
            ctx.spectrum.alpha0,
            ctx.raw_defect,
            res[0],
            res[1],
            a,
            b,
            err,
        ]);
    }
    Ok(t)
}

pub fn run(cfg: &RunConfig, out: &mut Writer) -> std::result::Result<(), CliError> {
    let ctx = Context::build(cfg)?;
    let tables = [
        ("length", length_table(cfg, &ctx)?),
        ("epsilon", epsilon_table(cfg, &ctx)?),
        ("grid", grid_table(cfg)?),
    ];
    let mut body = Map::new();
    for (name, table) in &tables {
        out.csv(&format!("sweep_{name}.csv"), &table.header, &table.rows)?;
        body.insert(name.to_string(), table.to_json());
    }
    out.json("sweep.json", &ctx.grid_hash(), &Value::Object(body))
}
