//! Half-space problem `p_x ∂_x f = L f` with in-flow data and prescribed
//! energy flux, emulated on a long specularly reflecting slab.
//!
//! The data are shifted by `(E/γ) ψ_M` so the slab problem carries zero
//! energy flux, solved, and shifted back.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydro::{DecayConstants, HydroBasis};
use crate::operator::{CollisionOperator, ModeProjector};
use crate::slab::{
    solve_direct, solve_epsilon_chain, solve_source_iteration, ChainHistory, Scheme, SlabConfig, SlabField,
    SlabProblem,
};

/// Everything needed to solve slab problems on one grid.
#[derive(Debug, Clone)]
pub struct MilneSolver {
    problem: SlabProblem,
    basis: HydroBasis,
    consts: DecayConstants,
    cfg: SlabConfig,
    deflated: bool,
}

impl MilneSolver {
    /// `deflate` replaces `L` by `(I - Π) L (I - Π)`, which makes both
    /// kernel modes exact null vectors of the discrete operator.
    pub fn new(
        op: &CollisionOperator,
        basis: &HydroBasis,
        consts: DecayConstants,
        cfg: SlabConfig,
        deflate: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        if op.grid().hash() != basis.grid().hash() {
            return Err(Error::GridMismatch("operator and basis live on different grids".into()));
        }
        let mut l = op.l_matrix();
        if deflate {
            let proj = ModeProjector::new(vec![basis.psi_e.clone(), basis.psi_m.clone()], &op.inner_weights());
            l = proj.deflate(&l);
        }
        let grid = op.grid();
        let speed = grid.nodes()[..grid.half()].iter().map(|n| n.px).collect();
        let length = cfg.l.unwrap_or_else(|| default_length(&consts));
        let problem = SlabProblem::new(l, speed, length, cfg.n_xcells)?;
        Ok(Self {
            problem,
            basis: basis.clone(),
            consts,
            cfg,
            deflated: deflate,
        })
    }

    pub fn problem(&self) -> &SlabProblem {
        &self.problem
    }

    pub fn basis(&self) -> &HydroBasis {
        &self.basis
    }

    pub fn constants(&self) -> &DecayConstants {
        &self.consts
    }

    pub fn config(&self) -> &SlabConfig {
        &self.cfg
    }

    pub fn length(&self) -> f64 {
        self.problem.length
    }

    fn half_data(&self, f0: &[f64]) -> Result<Vec<f64>> {
        let h = self.problem.half();
        match f0.len() {
            n if n == h || n == 2 * h => Ok(f0[..h].to_vec()),
            n => Err(Error::SizeMismatch { expected: 2 * h, got: n }),
        }
    }

    /// Solves the zero-flux slab problem for each in-flow vector (only the
    /// `p_x > 0` entries are used).
    pub fn solve_slab_batch(&self, data: &[Vec<f64>]) -> Result<Vec<MilneSolution>> {
        let h = self.problem.half();
        let cols: Vec<Vec<f64>> = data.iter().map(|f| self.half_data(f)).collect::<Result<_>>()?;
        let f0 = DMatrix::from_fn(h, cols.len(), |k, c| cols[c][k]);
        let (fields, iterations, chain) = match self.cfg.scheme {
            Scheme::DirectSparse => (split_columns(solve_direct(&self.problem, &f0, self.cfg.epsilon)?), 1, None),
            Scheme::EpsilonChain => {
                let (field, hist) =
                    solve_epsilon_chain(&self.problem, &f0, self.cfg.epsilon, self.cfg.tol, self.cfg.max_iter)?;
                let it = hist.epsilons.len();
                (split_columns(field), it, Some(hist))
            }
            Scheme::SourceIteration => {
                let mut out = Vec::new();
                let mut iters = 0;
                for c in &cols {
                    let (field, it) =
                        solve_source_iteration(&self.problem, c, self.cfg.epsilon, self.cfg.tol, self.cfg.max_iter)?;
                    iters = iters.max(it);
                    out.extend(split_columns(field));
                }
                (out, iters, None)
            }
        };
        Ok(fields
            .into_iter()
            .map(|states| self.package(states, 0.0, iterations, chain.clone()))
            .collect())
    }

    pub fn solve_slab(&self, f0_shifted: &[f64]) -> Result<MilneSolution> {
        Ok(self.solve_slab_batch(&[f0_shifted.to_vec()])?.remove(0))
    }

    /// Solves the half-space problem with in-flow data `f0` and energy flux
    /// `e` for each `(f0, e)` pair.
    pub fn solve_milne_batch(&self, data: &[(Vec<f64>, f64)]) -> Result<Vec<MilneSolution>> {
        let gamma = self.basis.gamma;
        let shifted: Vec<Vec<f64>> = data
            .iter()
            .map(|(f0, e)| {
                let h = self.half_data(f0)?;
                Ok(h.iter()
                    .zip(&self.basis.psi_m)
                    .map(|(f, m)| f - e / gamma * m)
                    .collect())
            })
            .collect::<Result<_>>()?;
        let mut sols = self.solve_slab_batch(&shifted)?;
        for (sol, (_, e)) in sols.iter_mut().zip(data) {
            let shift = e / gamma;
            for state in &mut sol.states {
                for (v, m) in state.iter_mut().zip(&self.basis.psi_m) {
                    *v += shift * m;
                }
            }
            sol.shift = shift;
            sol.energy = *e;
            sol.recompute(&self.basis, &self.problem);
        }
        if self.length() < 5.0 / self.consts.c1 {
            log::warn!(
                "slab length {} is below 5/c1 = {}; asymptotic values are unreliable",
                self.length(),
                5.0 / self.consts.c1
            );
        }
        Ok(sols)
    }

    pub fn solve_milne(&self, f0: &[f64], e: f64) -> Result<MilneSolution> {
        Ok(self.solve_milne_batch(&[(f0.to_vec(), e)])?.remove(0))
    }

    fn package(&self, states: Vec<Vec<f64>>, shift: f64, iterations: usize, chain: Option<ChainHistory>) -> MilneSolution {
        let mut sol = MilneSolution {
            x_nodes: self.problem.x_nodes(),
            states,
            shift,
            energy: 0.0,
            scheme: self.cfg.scheme,
            iterations,
            chain,
            deflated: self.deflated,
            grid_hash: self.basis.grid().hash(),
            traj: Trajectories::default(),
        };
        sol.recompute(&self.basis, &self.problem);
        sol
    }
}

/// `8 / c₁`, rounded up to an integer.
pub fn default_length(consts: &DecayConstants) -> f64 {
    (8.0 / consts.c1).ceil()
}

fn split_columns(field: SlabField) -> Vec<Vec<Vec<f64>>> {
    let ncols = field.states.first().map_or(0, |s| s.ncols());
    (0..ncols)
        .map(|c| field.states.iter().map(|s| s.column(c).iter().copied().collect()).collect())
        .collect()
}

/// Trajectories derived from the field.
///
/// Node quantities live at `x_i = i Δx`. Fluxes live on the upwind states
/// `u_k = (f_{k-1}^+, f_k^-)` at `x = (k - ½) Δx`, `k = 1..=N`, for which the
/// discrete conservation laws and the entropy inequality hold exactly.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trajectories {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `∫ (1+|p|)^3 w^2 P/(1+P) dp` at the nodes.
    pub w_norm2: Vec<f64>,
    pub flux_x: Vec<f64>,
    /// Energy flux `∫ p_x |p|^2 f P dp` of the solution.
    pub energy_flux: Vec<f64>,
    /// Entropy flux of the shifted solution `f - (E/γ) ψ_M`.
    pub entropy_flux: Vec<f64>,
    /// `∫ p_x^2 f P dp`, equal to `γ a + ∫ p_x^2 w P dp`.
    pub momentum_flux: Vec<f64>,
    /// Entropy flux of the shifted solution at `x = l` (vanishes by reflection).
    pub entropy_flux_end: f64,
    /// Weighted norm `∫(1+|p|)^3 f̃^2 P/(1+P) dp` of the shifted boundary state.
    pub data_norm2: f64,
}

#[derive(Debug, Clone)]
pub struct MilneSolution {
    pub x_nodes: Vec<f64>,
    /// `f(x_i, ·)` for every node.
    pub states: Vec<Vec<f64>>,
    /// Coefficient of `ψ_M` added back after the slab solve (`E/γ`).
    pub shift: f64,
    /// Prescribed energy flux.
    pub energy: f64,
    pub scheme: Scheme,
    pub iterations: usize,
    pub chain: Option<ChainHistory>,
    pub deflated: bool,
    pub grid_hash: String,
    pub traj: Trajectories,
}

impl MilneSolution {
    pub fn dx(&self) -> f64 {
        self.x_nodes[1] - self.x_nodes[0]
    }

    pub fn length(&self) -> f64 {
        *self.x_nodes.last().unwrap_or(&0.0)
    }

    /// Upwind state between nodes `k-1` and `k`.
    pub fn interface_state(&self, k: usize) -> Vec<f64> {
        let h = self.states[0].len() / 2;
        let mut u = self.states[k - 1].clone();
        u[h..].copy_from_slice(&self.states[k][h..]);
        u
    }

    fn shifted(&self, f: &[f64], basis: &HydroBasis) -> Vec<f64> {
        f.iter().zip(&basis.psi_m).map(|(v, m)| v - self.shift * m).collect()
    }

    fn recompute(&mut self, basis: &HydroBasis, problem: &SlabProblem) {
        let n = self.states.len() - 1;
        let dx = problem.dx();
        let mut t = Trajectories::default();
        for f in &self.states {
            let d = basis.decompose(f).expect("state length matches grid");
            t.w_norm2.push(basis.weighted_norm2(&d.w));
            t.a.push(d.a);
            t.b.push(d.b);
        }
        for k in 1..=n {
            let u = self.interface_state(k);
            t.flux_x.push((k as f64 - 0.5) * dx);
            t.energy_flux.push(basis.energy_flux(&u).expect("length"));
            t.momentum_flux.push(basis.momentum_moment(&u).expect("length"));
            t.entropy_flux.push(basis.entropy_flux_raw(&self.shifted(&u, basis)));
        }
        t.entropy_flux_end = basis.entropy_flux_raw(&self.shifted(&self.states[n], basis));
        t.data_norm2 = basis.weighted_norm2(&self.shifted(&self.states[0], basis));
        self.traj = t;
    }

    /// Node index closest to `x`.
    pub fn node_at(&self, x: f64) -> usize {
        ((x / self.dx()).round() as usize).min(self.x_nodes.len() - 1)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFit {
    /// `η` in `∫(1+|p|)^3 w^2 ≈ c e^{-2ηx}`.
    pub eta: f64,
    /// `c` of the same fit.
    pub c: f64,
    pub window: [f64; 2],
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayReport {
    /// `None` when `w` vanishes identically (kernel-mode solutions).
    pub eta_fit: Option<DecayFit>,
    pub c1: f64,
    pub nu0: f64,
    pub a_inf: f64,
    pub b_inf: f64,
    /// `E / γ`
    pub b_expected: f64,
    pub b_inf_error: f64,
    /// `max_k |E_k - E|` relative to `max(|E|, flux scale)`.
    pub energy_drift: f64,
    /// Drift of `γ a + ∫ p_x^2 w P dp`, relative.
    pub momentum_drift: f64,
    /// Largest increase `W_{k+1} - W_k` (0 when nonincreasing), relative.
    pub entropy_increase: f64,
    /// Smallest entropy flux over the slab, relative.
    pub entropy_min: f64,
    pub entropy_end: f64,
    /// `W(u_1)` and the bound `½ ∫_{p_x>0} p_x f̃_0^2 P/(1+P) dp`.
    pub entropy_start: f64,
    pub entropy_boundary_bound: f64,
    /// Largest `W_{k+1} - W_k + Δx ν₀ ∫(1+|p|)^3 w_k^2`, relative; must be <= 0.
    pub dissipation_excess: f64,
    /// `W(l) + ν₀ Σ Δx ∫(1+|p|)^3 w^2 - W(0)`, relative; must be <= 0.
    pub integrated_dissipation_excess: f64,
    /// `‖f(3l/4) - a_∞ ψ_E - b_∞ ψ_M‖^2` (weighted, `(1+|p|)^3`).
    pub flatness_distance2: f64,
    /// `c e^{-2η·3l/4}` from the fit plus the rounding floor; `None` without a fit.
    pub flatness_bound: Option<f64>,
    /// `sup_x ∫(1+|p|)^3 f^2 P/(1+P) dp`
    pub d_norm_solution: f64,
    /// `sup_x ∫(1+|p|)^{-3} (p_x ∂_x f)^2 P/(1+P) dp`, upwind differences.
    pub d_norm_derivative: f64,
}

fn rel_scale(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Diagnostics of a solution against the decay constants.
pub fn decay_diagnostics(sol: &MilneSolution, basis: &HydroBasis, consts: &DecayConstants) -> Result<DecayReport> {
    let t = &sol.traj;
    let l = sol.length();
    let dx = sol.dx();
    let n = sol.states.len() - 1;

    // Scales are absolute moments of the boundary state, so zero-flux data
    // are measured against the size of the data rather than against roundoff.
    let nodes = basis.grid().nodes();
    let inner = basis.inner_weights();
    let h = sol.states[0].len() / 2;
    let f0_shift: Vec<f64> = sol.states[0].iter().zip(&basis.psi_m).map(|(v, m)| v - sol.shift * m).collect();
    let abs_moment = |g: &dyn Fn(&crate::grid::Node) -> f64, f: &[f64]| -> f64 {
        nodes.iter().zip(inner).zip(f).map(|((nd, w), v)| w * g(nd).abs() * v.abs()).sum()
    };
    let e_scale = sol
        .energy
        .abs()
        .max(abs_moment(&|nd| nd.px * nd.p2(), &sol.states[0]))
        .max(f64::MIN_POSITIVE);
    let energy_drift = t.energy_flux.iter().map(|e| (e - sol.energy).abs()).fold(0.0, f64::max) / e_scale;
    let q_scale = abs_moment(&|nd| nd.px * nd.px, &sol.states[0])
        .max(rel_scale(&t.momentum_flux))
        .max(f64::MIN_POSITIVE);
    let (qmin, qmax) = t
        .momentum_flux
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let momentum_drift = if t.momentum_flux.is_empty() { 0.0 } else { (qmax - qmin) / q_scale };

    let entropy_boundary_bound = 0.5 * (0..h).map(|k| inner[k] * nodes[k].px * f0_shift[k] * f0_shift[k]).sum::<f64>();
    let w_scale = (0.5 * nodes.iter().zip(inner).zip(&f0_shift).map(|((nd, w), v)| w * nd.px.abs() * v * v).sum::<f64>())
        .max(rel_scale(&t.entropy_flux))
        .max(f64::MIN_POSITIVE);
    let entropy_increase = t
        .entropy_flux
        .windows(2)
        .map(|p| (p[1] - p[0]).max(0.0))
        .fold(0.0, f64::max)
        / w_scale;
    let entropy_min = t.entropy_flux.iter().copied().fold(f64::INFINITY, f64::min).min(t.entropy_flux_end) / w_scale;

    let entropy_start = t.entropy_flux.first().copied().unwrap_or(0.0);

    // W_{k+1} - W_k uses node k between interfaces k and k+1
    let nu0 = consts.nu0;
    let mut dissipation_excess = f64::NEG_INFINITY;
    let mut integrated = 0.0;
    for k in 1..n {
        let step = t.entropy_flux[k] - t.entropy_flux[k - 1] + dx * nu0 * t.w_norm2[k];
        dissipation_excess = dissipation_excess.max(step / w_scale);
        integrated += dx * nu0 * t.w_norm2[k];
    }
    let integrated_dissipation_excess =
        (t.entropy_flux.last().copied().unwrap_or(0.0) + integrated - entropy_start) / w_scale;

    let ia = sol.node_at(0.75 * l);
    let a_inf = t.a[ia];
    let b_inf = t.b[ia];
    let b_expected = sol.energy / basis.gamma;
    let b_inf_error = if b_expected != 0.0 {
        (b_inf - b_expected).abs() / b_expected.abs()
    } else {
        b_inf.abs()
    };
    let flat: Vec<f64> = sol.states[ia]
        .iter()
        .zip(basis.psi_e.iter().zip(&basis.psi_m))
        .map(|(f, (e, m))| f - a_inf * e - b_inf * m)
        .collect();

    let eta_fit = fit_decay(sol)?;
    let plateau = t.w_norm2.iter().copied().fold(f64::INFINITY, f64::min);
    let flatness_bound = eta_fit
        .as_ref()
        .map(|fit| fit.c * (-2.0 * fit.eta * sol.x_nodes[ia]).exp() + 100.0 * plateau);

    let d_norm_solution = sol.states.iter().map(|f| basis.weighted_norm2(f)).fold(0.0, f64::max);
    let mut d_norm_derivative: f64 = 0.0;
    for k in 1..=n {
        let (prev, next) = (&sol.states[k - 1], &sol.states[k]);
        let v: f64 = nodes
            .iter()
            .enumerate()
            .map(|(j, nd)| {
                let d = nd.px * (next[j] - prev[j]) / dx;
                inner[j] * d * d / (1.0 + nd.abs()).powi(3)
            })
            .sum();
        d_norm_derivative = d_norm_derivative.max(v);
    }

    Ok(DecayReport {
        eta_fit,
        c1: consts.c1,
        nu0,
        a_inf,
        b_inf,
        b_expected,
        b_inf_error,
        energy_drift,
        momentum_drift,
        entropy_increase,
        entropy_min,
        entropy_end: t.entropy_flux_end,
        entropy_start,
        entropy_boundary_bound,
        dissipation_excess: if n > 1 { dissipation_excess } else { 0.0 },
        integrated_dissipation_excess,
        flatness_distance2: basis.weighted_norm2(&flat),
        flatness_bound,
        d_norm_solution,
        d_norm_derivative,
    })
}

/// Least-squares fit of `log ∫(1+|p|)^3 w^2` against `x`.
///
/// The window is `[x_s/4, 3x_s/4]`, where `x_s` is the end of the slab or,
/// if `w` reaches the rounding floor before that, the first node where it
/// does. When the decay is slow enough to last the whole slab this is the
/// window `[l/4, 3l/4]`.
pub fn fit_decay(sol: &MilneSolution) -> Result<Option<DecayFit>> {
    let t = &sol.traj;
    let peak = t.w_norm2.iter().copied().fold(0.0, f64::max);
    // w at roundoff level everywhere: kernel-mode data
    if peak <= 1e-20 * t.data_norm2 || peak == 0.0 {
        return Ok(None);
    }
    let plateau = t.w_norm2.iter().copied().fold(f64::INFINITY, f64::min);
    let floor = (100.0 * plateau).max(1e-26 * peak);
    if peak <= floor {
        return Ok(None);
    }
    let x_s = sol
        .x_nodes
        .iter()
        .zip(&t.w_norm2)
        .skip(1)
        .find(|(_, v)| **v <= floor)
        .map_or(sol.length(), |(x, _)| *x);
    let (lo, hi) = (0.25 * x_s, 0.75 * x_s);
    let pts: Vec<(f64, f64)> = sol
        .x_nodes
        .iter()
        .zip(&t.w_norm2)
        .filter(|(x, v)| **x >= lo && **x <= hi && **v > floor)
        .map(|(x, v)| (*x, v.ln()))
        .collect();
    if pts.len() < 10 {
        return Err(Error::FitWindowTooShort(format!(
            "{} samples above the rounding floor in [{lo:.3}, {hi:.3}], need 10",
            pts.len()
        )));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    Ok(Some(DecayFit {
        eta: -0.5 * slope,
        c: (my - slope * mx).exp(),
        window: [pts[0].0, pts[pts.len() - 1].0],
        samples: pts.len(),
    }))
}

/// Largest over `x` of the weighted `L^2` distance between two solutions,
/// relative to the largest weighted norm of either.
pub fn cross_validate(a: &MilneSolution, b: &MilneSolution, basis: &HydroBasis) -> Result<f64> {
    if a.grid_hash != b.grid_hash || a.states.len() != b.states.len() {
        return Err(Error::GridMismatch(format!(
            "solutions on grids {} / {} with {} / {} x-nodes",
            a.grid_hash,
            b.grid_hash,
            a.states.len(),
            b.states.len()
        )));
    }
    let mut diff: f64 = 0.0;
    let mut norm: f64 = 0.0;
    for (fa, fb) in a.states.iter().zip(&b.states) {
        let d: Vec<f64> = fa.iter().zip(fb).map(|(x, y)| x - y).collect();
        diff = diff.max(basis.inner(&d, &d));
        norm = norm.max(basis.inner(fa, fa)).max(basis.inner(fb, fb));
    }
    if norm == 0.0 {
        return Ok(diff.sqrt());
    }
    Ok((diff / norm).sqrt())
}

/// Residual of the discrete coefficient laws of the `ε`-problem,
/// `F_E(k+1) - F_E(k) = -ε Δx β^2 a_k` and
/// `F_M(k+1) - F_M(k) = -ε Δx α^2 b_k`, relative to the flux scale.
pub fn coefficient_law_residual(sol: &MilneSolution, basis: &HydroBasis, eps: f64) -> f64 {
    let t = &sol.traj;
    let dx = sol.dx();
    let scale = rel_scale(&t.energy_flux)
        .max(rel_scale(&t.momentum_flux))
        .max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for k in 1..t.energy_flux.len() {
        let re = t.energy_flux[k] - t.energy_flux[k - 1] + eps * dx * basis.beta2 * t.a[k];
        let rm = t.momentum_flux[k] - t.momentum_flux[k - 1] + eps * dx * basis.alpha2 * t.b[k];
        worst = worst.max(re.abs()).max(rm.abs());
    }
    worst / scale
}
