//! Spectral structure of the discretized operator in the weighted space
//! `L^2_{P/(1+P)}`.
//!
//! Everything is computed on the symmetric matrix
//! `S = sym(W^{1/2} L W^{-1/2})`, whose quadratic form is `(Lf, f)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydro::HydroBasis;
use crate::operator::{CollisionOperator, ModeProjector};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Largest eigenvalue of `K/ν` orthogonal to the kernel modes.
    pub alpha0: f64,
    /// `min -(Lf, f) / ((1+|p|)^3 f, f)` over `f` orthogonal to the kernel modes.
    pub nu0_spectral: f64,
    /// `‖L ψ‖ / ‖ν ψ‖` (weighted norms) for `ψ_E` and `ψ_M`.
    pub kernel_residuals: [f64; 2],
    /// Eigenvalues of the pencil `(-S, (1+|p|)^3)` at or below `kernel_tolerance`.
    pub near_null: usize,
    pub kernel_tolerance: f64,
    /// Smallest few eigenvalues of the pencil `(-S, (1+|p|)^3)`.
    pub lowest: Vec<f64>,
    /// Largest eigenvalue of `S` apart from the `near_null` ones.
    pub max_nonkernel_eigenvalue: f64,
    pub deflated: bool,
}

fn symmetric_scaled(l: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let j = l.nrows();
    let sq: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    DMatrix::from_fn(j, j, |i, c| 0.5 * (sq[i] * l[(i, c)] / sq[c] + sq[c] * l[(c, i)] / sq[i]))
}

fn eigenvalues_sorted(m: DMatrix<f64>) -> Result<Vec<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigensolver("matrix has non-finite entries".into()));
    }
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    if ev.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigensolver("eigenvalues did not converge".into()));
    }
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev)
}

/// Eigenvalues of the symmetric-definite pencil `(a, b)`.
pub fn pencil_eigenvalues(a: &DMatrix<f64>, b: DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = b
        .cholesky()
        .ok_or_else(|| Error::Eigensolver("pencil metric is not positive definite".into()))?;
    let lo = chol.l();
    // C = L^{-1} A L^{-T}
    let x = lo
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::Eigensolver("singular Cholesky factor".into()))?;
    let c = lo
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::Eigensolver("singular Cholesky factor".into()))?;
    let c = 0.5 * (&c + c.transpose());
    eigenvalues_sorted(c)
}

fn pencil_diag(a: &DMatrix<f64>, d: &[f64]) -> Result<Vec<f64>> {
    let inv: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
    let j = a.nrows();
    eigenvalues_sorted(DMatrix::from_fn(j, j, |i, c| inv[i] * a[(i, c)] * inv[c]))
}

/// Applies `H = I - 2 v vᵀ` on both sides of the symmetric matrix `a`.
fn reflect_both(a: &mut DMatrix<f64>, v: &DVector<f64>) {
    let av = &*a * v;
    let vav = v.dot(&av);
    // H A H = A - 2 v (Av)ᵀ - 2 (Av) vᵀ + 4 (vᵀAv) v vᵀ
    a.ger(-2.0, v, &av, 1.0);
    a.ger(-2.0, &av, v, 1.0);
    a.ger(4.0 * vav, v, v, 1.0);
}

/// Householder vector mapping `x` to a multiple of `e_k`, acting on
/// coordinates `k..`.
fn householder(x: &DVector<f64>, k: usize) -> DVector<f64> {
    let mut v = x.clone();
    for i in 0..k {
        v[i] = 0.0;
    }
    let norm = v.norm();
    let alpha = if v[k] >= 0.0 { -norm } else { norm };
    v[k] -= alpha;
    let n = v.norm();
    if n > 0.0 {
        v /= n;
    }
    v
}

/// Orthogonal change of basis whose first two vectors span `u1, u2`
/// (assumed orthogonal); returns the blocks of the given symmetric
/// matrices on the orthogonal complement.
fn restrict_to_complement(u1: &DVector<f64>, u2: &DVector<f64>, mats: Vec<DMatrix<f64>>) -> Vec<DMatrix<f64>> {
    let v1 = householder(u1, 0);
    let u2r = u2 - 2.0 * v1.dot(u2) * &v1;
    let v2 = householder(&u2r, 1);
    let j = u1.len();
    mats.into_iter()
        .map(|mut m| {
            reflect_both(&mut m, &v1);
            reflect_both(&mut m, &v2);
            m.view((2, 2), (j - 2, j - 2)).into_owned()
        })
        .collect()
}

/// Spectral report of `op` (optionally deflated onto the complement of the
/// kernel modes first).
pub fn spectral_report(op: &CollisionOperator, basis: &HydroBasis, deflate: bool) -> Result<SpectrumReport> {
    let w = op.inner_weights();
    let mut l = op.l_matrix();
    let modes = vec![basis.psi_e.clone(), basis.psi_m.clone()];
    if deflate {
        l = ModeProjector::new(modes.clone(), &w).deflate(&l);
    }
    let s = symmetric_scaled(&l, &w);
    let neg = -&s;
    let d: Vec<f64> = op.grid().nodes().iter().map(|p| (1.0 + p.abs()).powi(3)).collect();

    let kernel_residuals = kernel_residuals(&l, op, basis);

    // Largest Rayleigh quotient on span{ψ_E, ψ_M}: bounds the two lowest
    // pencil eigenvalues from above.
    let sq: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let u: Vec<DVector<f64>> = modes
        .iter()
        .map(|m| DVector::from_iterator(m.len(), m.iter().zip(&sq).map(|(a, s)| a * s)))
        .collect();
    let a2 = DMatrix::from_fn(2, 2, |i, c| u[i].dot(&(&neg * &u[c])));
    let b2 = DMatrix::from_fn(2, 2, |i, c| u[i].iter().zip(u[c].iter()).zip(&d).map(|((x, y), d)| x * y * d).sum());
    let span_max = pencil_eigenvalues(&a2, b2)?[1];
    let scale = neg.amax();
    let kernel_tolerance = 10.0 * span_max.abs().max(1e-12 * scale);

    let full = pencil_diag(&neg, &d)?;
    let near_null = full.iter().filter(|&&m| m <= kernel_tolerance).count();
    let lowest = full.iter().take(6).copied().collect();

    let plain = eigenvalues_sorted(s.clone())?;
    let max_nonkernel_eigenvalue = plain[plain.len().saturating_sub(near_null + 1)];

    let ddiag = DMatrix::from_diagonal(&DVector::from_column_slice(&d));
    let nudiag = DMatrix::from_diagonal(&DVector::from_column_slice(&op.nu));
    let blocks = restrict_to_complement(&u[0], &u[1], vec![neg, ddiag, nudiag]);
    let nu0_spectral = pencil_eigenvalues(&blocks[0], blocks[1].clone())?[0];
    // K/ν = I + L/ν, so the top of (K, ν) is 1 - min of (-L, ν)
    let alpha0 = 1.0 - pencil_eigenvalues(&blocks[0], blocks[2].clone())?[0];

    Ok(SpectrumReport {
        alpha0,
        nu0_spectral,
        kernel_residuals,
        near_null,
        kernel_tolerance,
        lowest,
        max_nonkernel_eigenvalue,
        deflated: deflate,
    })
}

/// `‖L ψ‖ / ‖ν ψ‖` in the weighted norm, for `ψ_E` then `ψ_M`.
pub fn kernel_residuals(l: &DMatrix<f64>, op: &CollisionOperator, basis: &HydroBasis) -> [f64; 2] {
    let w = op.inner_weights();
    let norm = |v: &[f64]| v.iter().zip(&w).map(|(a, w)| a * a * w).sum::<f64>().sqrt();
    let one = |psi: &[f64]| {
        let r = l * DVector::from_column_slice(psi);
        let nu_psi: Vec<f64> = psi.iter().zip(&op.nu).map(|(a, n)| a * n).collect();
        norm(r.as_slice()) / norm(&nu_psi)
    };
    [one(&basis.psi_e), one(&basis.psi_m)]
}

/// Result of testing `-(Lf, f) >= ν₀ ((1+|p|)^3 f, f)` on random vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub samples: usize,
    /// Smallest observed `-(Lf, f) / (ν₀ ((1+|p|)^3 f, f))`.
    pub min_ratio: f64,
    /// Largest observed `(Lf, f) / ((1+|p|)^3 f, f)`; must not be positive.
    pub max_form: f64,
}

/// Draws `samples` random vectors, projects them onto the complement of
/// the kernel modes and evaluates the spectral inequality.
pub fn check_spectral_inequality(
    op: &CollisionOperator,
    basis: &HydroBasis,
    nu0: f64,
    samples: usize,
    seed: u64,
) -> InequalityCheck {
    let w = op.inner_weights();
    let l = op.l_matrix();
    let proj = ModeProjector::new(vec![basis.psi_e.clone(), basis.psi_m.clone()], &w);
    let d: Vec<f64> = op.grid().nodes().iter().map(|p| (1.0 + p.abs()).powi(3)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_ratio = f64::INFINITY;
    let mut max_form = f64::NEG_INFINITY;
    for _ in 0..samples {
        // scale by W^{-1/2} so components are comparable in the weighted norm
        let raw: Vec<f64> = w.iter().map(|w| rng.gen_range(-1.0..1.0) / w.sqrt()).collect();
        let f = proj.complement(&raw);
        let lf = &l * DVector::from_column_slice(&f);
        let form: f64 = f.iter().zip(lf.iter()).zip(&w).map(|((a, b), w)| a * b * w).sum();
        let dnorm: f64 = f.iter().zip(&d).zip(&w).map(|((a, d), w)| a * a * d * w).sum();
        min_ratio = min_ratio.min(-form / (nu0 * dnorm));
        max_form = max_form.max(form / dnorm);
    }
    InequalityCheck {
        samples,
        min_ratio,
        max_form,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridSpec};
    use crate::hydro::build_basis;
    use crate::operator::{assemble, OperatorConfig};

    #[test]
    fn pencil_of_diagonal_matrices() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 6.0, 1.0]));
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 4.0]));
        let ev = pencil_eigenvalues(&a, b).unwrap();
        assert!((ev[0] - 0.25).abs() < 1e-14 && (ev[1] - 2.0).abs() < 1e-14 && (ev[2] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn complement_restriction_drops_modes() {
        // A = diag(1,2,3,4) in a rotated basis; removing e1, e2 leaves {3, 4}
        let u1 = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let u2 = DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0]);
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]));
        let r = restrict_to_complement(&u1, &u2, vec![a]);
        let ev = eigenvalues_sorted(r[0].clone()).unwrap();
        assert!((ev[0] - 3.0).abs() < 1e-14 && (ev[1] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn small_grid_structure() {
        let g = build_grid(GridSpec {
            n_x: 12,
            n_y: 12,
            ..GridSpec::default()
        })
        .unwrap();
        let op = assemble(&g, &OperatorConfig::default()).unwrap().symmetrized();
        let basis = build_basis(&g, op.table());
        let rep = spectral_report(&op, &basis, false).unwrap();
        assert_eq!(rep.near_null, 2);
        assert!(rep.alpha0 < 1.0);
        assert!(rep.nu0_spectral > 0.0);
        let chk = check_spectral_inequality(&op, &basis, rep.nu0_spectral, 20, 1);
        assert!(chk.min_ratio >= 1.0 - 1e-8);
        assert!(chk.max_form <= 0.0);
        let defl = spectral_report(&op, &basis, true).unwrap();
        assert_eq!(defl.near_null, 2);
        assert!(defl.kernel_residuals.iter().all(|r| *r < 1e-12));
    }
}
