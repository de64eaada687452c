//! Slab problem `ε f + p_x ∂_x f = L f` on `[0, l]`, in-flow data at `x = 0`
//! for `p_x > 0`, specular reflection at `x = l`.
//!
//! Discretization: nodes `x_i = i Δx`, `i = 0..=N`, first-order upwind along
//! characteristics, collision term implicit at the node. With
//! `B = diag(|p_x|/Δx) + ε - L` every interior node satisfies
//!
//! ```text
//! B f_i = diag(|p_x|/Δx) [f_{i-1}^+ ; f_{i+1}^-]
//! ```
//!
//! so each node is a scattering layer mapping the two incoming half-vectors
//! to the two outgoing ones. Because the grid and `L` are mirror symmetric,
//! a layer is described by one transmission and one reflection matrix. The
//! direct solver composes layers by recursive doubling and recovers the
//! interior field by bisection. The node at `x = l` closes the stack as a
//! reflector, the node at `x = 0` is solved last.

use std::collections::HashMap;
use std::rc::Rc;

use nalgebra::{DMatrix, LU};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Direct block elimination of the full upwind system.
    #[default]
    DirectSparse,
    /// Scalar transport sweeps with the off-diagonal collision part lagged.
    SourceIteration,
    /// Direct solves for `ε_k = ε₀ 2^{-k}` extrapolated to `ε = 0`.
    EpsilonChain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlabConfig {
    /// Slab length; `None` picks `8 / c₁` from the decay constants.
    pub l: Option<f64>,
    pub n_xcells: usize,
    /// Regularization used by the direct and source-iteration schemes, and
    /// the first member of the chain for `epsilon_chain`.
    pub epsilon: f64,
    pub scheme: Scheme,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SlabConfig {
    fn default() -> Self {
        Self {
            l: None,
            n_xcells: 400,
            epsilon: 0.0,
            scheme: Scheme::DirectSparse,
            tol: 1e-10,
            max_iter: 12,
        }
    }
}

impl SlabConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.l {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Precondition(format!("slab length l = {l} must be positive")));
            }
        }
        if self.n_xcells < 2 {
            return Err(Error::Precondition(format!("n_xcells = {} must be >= 2", self.n_xcells)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Precondition(format!("tol = {} must be positive", self.tol)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Precondition(format!("epsilon = {} must be >= 0", self.epsilon)));
        }
        if self.scheme == Scheme::EpsilonChain && self.epsilon <= 0.0 {
            return Err(Error::Precondition("epsilon_chain needs epsilon > 0 as its first member".into()));
        }
        Ok(())
    }
}

/// Discrete slab problem: everything that does not depend on the data.
#[derive(Debug, Clone)]
pub struct SlabProblem {
    /// Collision matrix used by the solver (mirror symmetric).
    pub l_matrix: DMatrix<f64>,
    /// `|p_x|` of the `p_x > 0` half, in grid order.
    pub speed: Vec<f64>,
    pub length: f64,
    pub n_xcells: usize,
}

impl SlabProblem {
    /// `l_matrix` must be indexed with the `p_x > 0` half first and node
    /// `k + half` the mirror of node `k`.
    pub fn new(l_matrix: DMatrix<f64>, speed: Vec<f64>, length: f64, n_xcells: usize) -> Result<Self> {
        let h = speed.len();
        if l_matrix.nrows() != 2 * h || l_matrix.ncols() != 2 * h {
            return Err(Error::SizeMismatch {
                expected: 2 * h,
                got: l_matrix.nrows(),
            });
        }
        if speed.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Precondition("all transport speeds must be positive".into()));
        }
        // enforce bitwise mirror symmetry so both halves share one layer
        let mut l = l_matrix;
        for i in 0..h {
            for c in 0..2 * h {
                let mc = if c < h { c + h } else { c - h };
                l[(i + h, mc)] = l[(i, c)];
            }
        }
        Ok(Self {
            l_matrix: l,
            speed,
            length,
            n_xcells,
        })
    }

    pub fn half(&self) -> usize {
        self.speed.len()
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_xcells as f64
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        (0..=self.n_xcells).map(|i| i as f64 * self.dx()).collect()
    }

    fn b_matrix(&self, eps: f64) -> DMatrix<f64> {
        let h = self.half();
        let dx = self.dx();
        let mut b = -&self.l_matrix;
        for k in 0..h {
            let d = self.speed[k] / dx + eps;
            b[(k, k)] += d;
            b[(k + h, k + h)] += d;
        }
        b
    }
}

/// Node values of a slab solution: column `i` is `f(x_i, ·)`.
#[derive(Debug, Clone)]
pub struct SlabField {
    pub states: Vec<DMatrix<f64>>,
}

struct Layer {
    t: DMatrix<f64>,
    r: DMatrix<f64>,
}

struct Stack {
    size: usize,
    layer: Rc<Layer>,
    /// Left part, right part, and LU of `I - R_A R_B`.
    parts: Option<(Rc<Stack>, Rc<Stack>, LU<f64, nalgebra::Dyn, nalgebra::Dyn>)>,
}

impl Stack {
    fn t(&self) -> &DMatrix<f64> {
        &self.layer.t
    }
    fn r(&self) -> &DMatrix<f64> {
        &self.layer.r
    }
}

fn singular(what: &str) -> Error {
    Error::SingularSystem(format!("{what} is singular"))
}

struct Builder {
    unit: Rc<Stack>,
    memo: HashMap<usize, Rc<Stack>>,
}

impl Builder {
    fn stack(&mut self, m: usize) -> Result<Rc<Stack>> {
        if m == 1 {
            return Ok(self.unit.clone());
        }
        if let Some(s) = self.memo.get(&m) {
            return Ok(s.clone());
        }
        let a = self.stack(m / 2)?;
        let b = self.stack(m - m / 2)?;
        let h = a.t().nrows();
        let coupling = DMatrix::identity(h, h) - a.r() * b.r();
        let lu = coupling.lu();
        let inner = lu.solve(a.t()).ok_or_else(|| singular("layer coupling"))?;
        let t = b.t() * &inner;
        let r = a.r() + a.t() * (b.r() * &inner);
        let s = Rc::new(Stack {
            size: m,
            layer: Rc::new(Layer { t, r }),
            parts: Some((a, b, lu)),
        });
        self.memo.insert(m, s.clone());
        Ok(s)
    }
}

/// Writes interior node states `offset+1 ..= offset+size` given the
/// half-vectors entering the stack from the left (`h_in`) and right (`g_in`).
fn fill(stack: &Stack, unit: &Layer, h_in: &DMatrix<f64>, g_in: &DMatrix<f64>, offset: usize, out: &mut [DMatrix<f64>]) {
    match &stack.parts {
        None => {
            let hp = &unit.t * h_in + &unit.r * g_in;
            let gm = &unit.r * h_in + &unit.t * g_in;
            let mut f = DMatrix::zeros(2 * hp.nrows(), hp.ncols());
            f.rows_mut(0, hp.nrows()).copy_from(&hp);
            f.rows_mut(hp.nrows(), hp.nrows()).copy_from(&gm);
            out[offset + 1] = f;
        }
        Some((a, b, lu)) => {
            let rhs = a.t() * h_in + a.r() * (b.t() * g_in);
            let h_mid = lu.solve(&rhs).expect("factorization checked during build");
            let g_mid = b.r() * &h_mid + b.t() * g_in;
            fill(a, unit, h_in, &g_mid, offset, out);
            fill(b, unit, &h_mid, g_in, offset + a.size, out);
        }
    }
}

/// Direct solve of the upwind system for every column of `f0` (in-flow data
/// on the `p_x > 0` half).
pub fn solve_direct(problem: &SlabProblem, f0: &DMatrix<f64>, eps: f64) -> Result<SlabField> {
    let h = problem.half();
    if f0.nrows() != h {
        return Err(Error::SizeMismatch {
            expected: h,
            got: f0.nrows(),
        });
    }
    let n = problem.n_xcells;
    let dx = problem.dx();
    let b = problem.b_matrix(eps);
    let dplus = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(h, problem.speed.iter().map(|s| s / dx)));

    // single layer from one factorization of B
    let lu = b.clone().lu();
    let mut rhs = DMatrix::zeros(2 * h, h);
    rhs.rows_mut(0, h).copy_from(&dplus);
    let tr = lu.solve(&rhs).ok_or_else(|| singular("node matrix B"))?;
    let unit_layer = Rc::new(Layer {
        t: tr.rows(0, h).into_owned(),
        r: tr.rows(h, h).into_owned(),
    });

    let bpp = b.view((0, 0), (h, h)).into_owned();
    let bpm = b.view((0, h), (h, h)).into_owned();
    // reflector at x = l: (B++ + B+-) h_N = D h_{N-1}, g_N = h_N
    let y = (&bpp + &bpm).lu().solve(&dplus).ok_or_else(|| singular("reflection block"))?;

    let mut states = vec![DMatrix::zeros(2 * h, f0.ncols()); n + 1];
    let (h_last, g_first);
    if n == 1 {
        h_last = f0.clone();
        g_first = &y * f0;
    } else {
        let unit = Rc::new(Stack {
            size: 1,
            layer: unit_layer.clone(),
            parts: None,
        });
        let mut builder = Builder {
            unit,
            memo: HashMap::new(),
        };
        let stack = builder.stack(n - 1)?;
        // h_{N-1} = (I - R_S Y)^{-1} T_S h_0
        let closing = (DMatrix::identity(h, h) - stack.r() * &y).lu();
        h_last = closing.solve(&(stack.t() * f0)).ok_or_else(|| singular("end reflection"))?;
        let g_end = &y * &h_last;
        g_first = stack.r() * f0 + stack.t() * &g_end;
        fill(&stack, &unit_layer, f0, &g_end, 0, &mut states);
    }
    // x = l
    let h_end = &y * &h_last;
    let mut last = DMatrix::zeros(2 * h, f0.ncols());
    last.rows_mut(0, h).copy_from(&h_end);
    last.rows_mut(h, h).copy_from(&h_end);
    states[n] = last;
    // x = 0: B-- g_0 = D g_1 - B-+ h_0, with B-- = B++ and B-+ = B+-
    let g0 = bpp
        .lu()
        .solve(&(&dplus * &g_first - &bpm * f0))
        .ok_or_else(|| singular("boundary block"))?;
    let mut first = DMatrix::zeros(2 * h, f0.ncols());
    first.rows_mut(0, h).copy_from(f0);
    first.rows_mut(h, h).copy_from(&g0);
    states[0] = first;
    Ok(SlabField { states })
}

/// Assembles and solves the full `(N+1)·J` upwind system with a dense LU.
/// Only meant as a reference for small problems.
pub fn solve_dense_reference(problem: &SlabProblem, f0: &[f64], eps: f64) -> Result<Vec<Vec<f64>>> {
    let h = problem.half();
    let j = 2 * h;
    let n = problem.n_xcells;
    let dx = problem.dx();
    let b = problem.b_matrix(eps);
    let dim = (n + 1) * j;
    let mut a = DMatrix::zeros(dim, dim);
    let mut rhs = nalgebra::DVector::zeros(dim);
    let idx = |i: usize, k: usize| i * j + k;
    for i in 0..=n {
        for k in 0..j {
            let row = idx(i, k);
            let plus = k < h;
            let d = problem.speed[if plus { k } else { k - h }] / dx;
            if plus && i == 0 {
                a[(row, row)] = 1.0;
                rhs[row] = f0[k];
                continue;
            }
            if !plus && i == n {
                // specular reflection f_N^- = f_N^+
                a[(row, row)] = 1.0;
                a[(row, idx(n, k - h))] = -1.0;
                continue;
            }
            for c in 0..j {
                a[(row, idx(i, c))] += b[(k, c)];
            }
            let up = if plus { idx(i - 1, k) } else { idx(i + 1, k) };
            a[(row, up)] -= d;
        }
    }
    let sol = a.lu().solve(&rhs).ok_or_else(|| singular("dense reference system"))?;
    Ok((0..=n).map(|i| sol.rows(i * j, j).iter().copied().collect()).collect())
}

/// Residual of the upwind equations, relative to the size of the data.
pub fn discrete_residual(problem: &SlabProblem, field: &SlabField, eps: f64) -> f64 {
    let h = problem.half();
    let n = problem.n_xcells;
    let dx = problem.dx();
    let b = problem.b_matrix(eps);
    let mut worst: f64 = 0.0;
    let scale = field
        .states
        .iter()
        .map(|s| s.amax())
        .fold(f64::MIN_POSITIVE, f64::max);
    for i in 0..=n {
        let bf = &b * &field.states[i];
        for col in 0..bf.ncols() {
            for k in 0..2 * h {
                let plus = k < h;
                if (plus && i == 0) || (!plus && i == n) {
                    continue;
                }
                let d = problem.speed[if plus { k } else { k - h }] / dx;
                let up = if plus { field.states[i - 1][(k, col)] } else { field.states[i + 1][(k, col)] };
                worst = worst.max((bf[(k, col)] - d * up).abs() / (d.max(1.0) * scale));
            }
        }
        // reflection condition
        if i == n {
            for col in 0..field.states[n].ncols() {
                for k in 0..h {
                    let s = &field.states[n];
                    worst = worst.max((s[(k, col)] - s[(k + h, col)]).abs() / scale);
                }
            }
        }
    }
    worst
}

/// Source iteration: each sweep solves the decoupled scalar upwind
/// recurrences with the diagonal of `B`, lagging the off-diagonal part of
/// `L`. Returns the field and the number of sweeps.
pub fn solve_source_iteration(
    problem: &SlabProblem,
    f0: &[f64],
    eps: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(SlabField, usize)> {
    let h = problem.half();
    let j = 2 * h;
    let n = problem.n_xcells;
    let dx = problem.dx();
    let l = &problem.l_matrix;
    let diag: Vec<f64> = (0..j).map(|k| l[(k, k)]).collect();
    let mut f: Vec<nalgebra::DVector<f64>> = vec![nalgebra::DVector::zeros(j); n + 1];
    let mut last_change = f64::INFINITY;
    for iter in 1..=max_iter {
        // lagged source: (L - diag L) f
        let src: Vec<nalgebra::DVector<f64>> = f
            .iter()
            .map(|fi| {
                let mut s = l * fi;
                for k in 0..j {
                    s[k] -= diag[k] * fi[k];
                }
                s
            })
            .collect();
        let mut next = vec![nalgebra::DVector::zeros(j); n + 1];
        for k in 0..h {
            let d = problem.speed[k] / dx;
            let a = d + eps - diag[k];
            next[0][k] = f0[k];
            for i in 1..=n {
                next[i][k] = (d * next[i - 1][k] + src[i][k]) / a;
            }
        }
        for k in 0..h {
            let km = k + h;
            let d = problem.speed[k] / dx;
            let a = d + eps - diag[km];
            next[n][km] = next[n][k];
            for i in (0..n).rev() {
                next[i][km] = (d * next[i + 1][km] + src[i][km]) / a;
            }
        }
        let scale = next.iter().map(|v| v.amax()).fold(f64::MIN_POSITIVE, f64::max);
        last_change = next.iter().zip(&f).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max) / scale;
        f = next;
        if last_change < tol {
            let states = f.into_iter().map(|v| DMatrix::from_column_slice(j, 1, v.as_slice())).collect();
            return Ok((SlabField { states }, iter));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: last_change,
    })
}

/// Outcome of the `ε`-chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainHistory {
    pub epsilons: Vec<f64>,
    /// Relative change between successive extrapolated fields.
    pub changes: Vec<f64>,
    pub converged: bool,
}

/// Solves for `ε_k = ε₀ 2^{-k}` and extrapolates the fields to `ε = 0`
/// (Neville's scheme on the whole field), stopping when two successive
/// extrapolants differ by less than `tol` relative.
pub fn solve_epsilon_chain(
    problem: &SlabProblem,
    f0: &DMatrix<f64>,
    eps0: f64,
    tol: f64,
    max_levels: usize,
) -> Result<(SlabField, ChainHistory)> {
    let mut eps = Vec::new();
    // tableau diagonal row: p[k] = P_{level-k .. level}
    let mut row: Vec<Vec<DMatrix<f64>>> = Vec::new();
    let mut best: Option<Vec<DMatrix<f64>>> = None;
    let mut changes = Vec::new();
    for level in 0..max_levels.max(2) {
        let e = eps0 * 0.5f64.powi(level as i32);
        let sol = solve_direct(problem, f0, e)?.states;
        eps.push(e);
        let mut new_row = vec![sol];
        for k in 1..=level {
            // P_{i..level} from P_{i+1..level} and P_{i..level-1}, evaluated at ε = 0
            let ei = eps[level - k];
            let el = eps[level];
            let a = &new_row[k - 1];
            let b = &row[k - 1];
            let comb: Vec<DMatrix<f64>> = a
                .iter()
                .zip(b)
                .map(|(pa, pb)| (pa * ei - pb * el) / (ei - el))
                .collect();
            new_row.push(comb);
        }
        let est = new_row.last().cloned().unwrap_or_default();
        if let Some(prev) = &best {
            let scale = est.iter().map(|m| m.amax()).fold(f64::MIN_POSITIVE, f64::max);
            let change = est
                .iter()
                .zip(prev)
                .map(|(a, b)| (a - b).amax())
                .fold(0.0, f64::max)
                / scale;
            changes.push(change);
            if change < tol {
                return Ok((
                    SlabField { states: est },
                    ChainHistory {
                        epsilons: eps,
                        changes,
                        converged: true,
                    },
                ));
            }
        }
        best = Some(est);
        row = new_row;
    }
    Ok((
        SlabField {
            states: best.unwrap_or_default(),
        },
        ChainHistory {
            epsilons: eps,
            changes,
            converged: false,
        },
    ))
}
