//! Kernel modes, the hydrodynamic decomposition, fluxes and decay constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{MomentumGrid, PlanckTable};

/// The two kernel modes and the moments built from them.
#[derive(Debug, Clone)]
pub struct HydroBasis {
    /// `|p|^2 (1+P)`
    pub psi_e: Vec<f64>,
    /// `p_x (1+P)`
    pub psi_m: Vec<f64>,
    /// `∫ p_x^2 P(1+P) dp`
    pub alpha2: f64,
    /// `∫ |p|^4 P(1+P) dp`
    pub beta2: f64,
    /// `∫ p_x^2 |p|^2 P(1+P) dp`
    pub gamma: f64,
    /// `∫ p_x^4 P(1+P) dp`
    pub px4: f64,
    /// `∫ p_x^2 |p|^4 P(1+P) dp`
    pub px2_p4: f64,
    grid: MomentumGrid,
    /// `weight * P/(1+P)`
    inner: Vec<f64>,
    /// `weight * P`
    flux: Vec<f64>,
}

pub fn build_basis(grid: &MomentumGrid, table: &PlanckTable) -> HydroBasis {
    let nodes = grid.nodes();
    let psi_e: Vec<f64> = nodes.iter().zip(&table.p).map(|(n, p)| n.p2() * (1.0 + p)).collect();
    let psi_m: Vec<f64> = nodes.iter().zip(&table.p).map(|(n, p)| n.px * (1.0 + p)).collect();
    let var = |k: usize, g: &dyn Fn(f64, f64) -> f64| g(nodes[k].px, nodes[k].p2()) * table.prod[k];
    let alpha2 = grid.paired_sum(|k| var(k, &|x, _| x * x));
    let beta2 = grid.paired_sum(|k| var(k, &|_, s| s * s));
    let gamma = grid.paired_sum(|k| var(k, &|x, s| x * x * s));
    let px4 = grid.paired_sum(|k| var(k, &|x, _| x.powi(4)));
    let px2_p4 = grid.paired_sum(|k| var(k, &|x, s| x * x * s * s));
    HydroBasis {
        psi_e,
        psi_m,
        alpha2,
        beta2,
        gamma,
        px4,
        px2_p4,
        grid: grid.clone(),
        inner: table.inner_weights(grid),
        flux: grid.weights().iter().zip(&table.p).map(|(w, p)| w * p).collect(),
    }
}

/// `f = a ψ_E + b ψ_M + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub a: f64,
    pub b: f64,
    pub w: Vec<f64>,
}

impl HydroBasis {
    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.psi_e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi_e.is_empty()
    }

    /// Node weights of `(f, g) = ∫ f g P/(1+P) dp`.
    pub fn inner_weights(&self) -> &[f64] {
        &self.inner
    }

    /// `(f, g)` summed over mirrored pairs.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        let h = self.grid.half();
        (0..h)
            .map(|k| self.inner[k] * (f[k] * g[k] + f[k + h] * g[k + h]))
            .sum()
    }

    /// `∫ h(p) f P dp` for a per-node factor `h`.
    fn flux_moment(&self, f: &[f64], h: impl Fn(usize) -> f64) -> f64 {
        let half = self.grid.half();
        (0..half)
            .map(|k| self.flux[k] * (h(k) * f[k] + h(k + half) * f[k + half]))
            .sum()
    }

    pub fn decompose(&self, f: &[f64]) -> Result<Decomposition> {
        self.grid.check_len(f)?;
        let a = self.inner(f, &self.psi_e) / self.beta2;
        let b = self.inner(f, &self.psi_m) / self.alpha2;
        let w = f
            .iter()
            .zip(self.psi_e.iter().zip(&self.psi_m))
            .map(|(f, (e, m))| f - a * e - b * m)
            .collect();
        Ok(Decomposition { a, b, w })
    }

    /// `a ψ_E + b ψ_M + w`.
    pub fn reconstruct(&self, d: &Decomposition) -> Vec<f64> {
        d.w.iter()
            .zip(self.psi_e.iter().zip(&self.psi_m))
            .map(|(w, (e, m))| d.a * e + d.b * m + w)
            .collect()
    }

    /// Energy flux `∫ p_x |p|^2 f P dp`.
    pub fn energy_flux(&self, f: &[f64]) -> Result<f64> {
        self.grid.check_len(f)?;
        let n = self.grid.nodes();
        Ok(self.flux_moment(f, |k| n[k].px * n[k].p2()))
    }

    /// `∫ p_x^2 f P dp`.
    pub fn momentum_moment(&self, f: &[f64]) -> Result<f64> {
        self.grid.check_len(f)?;
        let n = self.grid.nodes();
        Ok(self.flux_moment(f, |k| n[k].px * n[k].px))
    }

    /// Entropy flux `½ ∫ p_x f^2 P/(1+P) dp` without preconditions.
    pub fn entropy_flux_raw(&self, f: &[f64]) -> f64 {
        let n = self.grid.nodes();
        let half = self.grid.half();
        0.5 * (0..half)
            .map(|k| self.inner[k] * n[k].px * (f[k] * f[k] - f[k + half] * f[k + half]))
            .sum::<f64>()
    }

    /// Entropy flux of a zero-energy-flux state.
    ///
    /// Fails with a precondition error when the energy flux of `f` exceeds
    /// `tol` relative to `∫ |p_x| |p|^2 |f| P dp`.
    pub fn entropy_flux(&self, f: &[f64], tol: f64) -> Result<f64> {
        let e = self.energy_flux(f)?;
        let n = self.grid.nodes();
        let scale: f64 = f
            .iter()
            .zip(n)
            .zip(&self.flux)
            .map(|((f, n), w)| w * (n.px * n.p2() * f).abs())
            .sum();
        if e.abs() > tol * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Precondition(format!(
                "entropy flux needs zero energy flux, got {e:e} (scale {scale:e})"
            )));
        }
        Ok(self.entropy_flux_raw(f))
    }

    /// Entropy flux from the non-hydrodynamic part alone:
    /// `½ ∫ p_x w^2 P/(1+P) - (1/γ) ∫ p_x^2 w P ∫ p_x |p|^2 w P`.
    pub fn entropy_flux_from_w(&self, w: &[f64]) -> Result<f64> {
        let cross = self.momentum_moment(w)? * self.energy_flux(w)?;
        Ok(self.entropy_flux_raw(w) - cross / self.gamma)
    }

    /// `∫ (1+|p|)^3 f^2 P/(1+P) dp`.
    pub fn weighted_norm2(&self, f: &[f64]) -> f64 {
        let n = self.grid.nodes();
        f.iter()
            .zip(n)
            .zip(&self.inner)
            .map(|((f, n), w)| w * (1.0 + n.abs()).powi(3) * f * f)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayConstants {
    pub c1: f64,
    pub c2: f64,
    /// Cauchy-Schwarz constant bounding the cross term of the entropy flux.
    pub c3: f64,
    pub nu0: f64,
}

pub fn decay_constants(basis: &HydroBasis, nu0: f64) -> Result<DecayConstants> {
    if !(nu0 > 0.0 && nu0.is_finite()) {
        return Err(Error::Precondition(format!("nu0 = {nu0} must be positive")));
    }
    let c2 = 2.0 / basis.gamma * (basis.px4 * basis.px2_p4).sqrt();
    // |∫p_x²wP ∫p_x|p|²wP| <= sqrt(px4 * px2_p4) (w, w), which is (γ c3 / 2)(w, w)
    let c3 = c2;
    Ok(DecayConstants {
        c1: (nu0 / 2.0).min(nu0 / (2.0 * c2)),
        c2,
        c3,
        nu0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, planck_table, GridSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis() -> HydroBasis {
        let g = build_grid(GridSpec::default()).unwrap();
        let t = planck_table(&g);
        build_basis(&g, &t)
    }

    #[test]
    fn modes_orthogonal_with_expected_norms() {
        let b = basis();
        assert_eq!(b.inner(&b.psi_e, &b.psi_m), 0.0);
        assert!((b.inner(&b.psi_m, &b.psi_m) - b.alpha2).abs() < 1e-12 * b.alpha2);
        assert!((b.inner(&b.psi_e, &b.psi_e) - b.beta2).abs() < 1e-12 * b.beta2);
        assert!(b.alpha2 > 0.0 && b.beta2 > 0.0 && b.gamma > 0.0);
    }

    #[test]
    fn decompose_basis_vectors() {
        let b = basis();
        let d = b.decompose(&b.psi_m).unwrap();
        assert!(d.a.abs() < 1e-14 && (d.b - 1.0).abs() < 1e-12);
        let f: Vec<f64> = b.psi_e.iter().zip(&b.psi_m).map(|(e, m)| 3.0 * e - 2.0 * m).collect();
        let d = b.decompose(&f).unwrap();
        assert!((d.a - 3.0).abs() < 1e-12 && (d.b + 2.0).abs() < 1e-12);
        let scale = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(d.w.iter().all(|w| w.abs() < 1e-12 * scale));
    }

    #[test]
    fn fluxes_of_modes() {
        let b = basis();
        assert_eq!(b.energy_flux(&b.psi_e).unwrap(), 0.0);
        let e = b.energy_flux(&b.psi_m).unwrap();
        assert!((e - b.gamma).abs() < 1e-12 * b.gamma);
    }

    #[test]
    fn entropy_flux_identity_on_random_zero_flux_state() {
        let b = basis();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let raw: Vec<f64> = (0..b.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = b.decompose(&raw).unwrap().w;
        // pick b̃ so the total energy flux vanishes, a arbitrary
        let bt = -b.energy_flux(&w).unwrap() / b.gamma;
        let f = b.reconstruct(&Decomposition { a: 0.8, b: bt, w: w.clone() });
        let direct = b.entropy_flux(&f, 1e-10).unwrap();
        let via_w = b.entropy_flux_from_w(&w).unwrap();
        assert!((direct - via_w).abs() <= 1e-8 * direct.abs().max(via_w.abs()), "{direct} {via_w}");
        assert!(matches!(b.entropy_flux(&b.psi_m, 1e-10), Err(Error::Precondition(_))));
    }

    #[test]
    fn constants_structure() {
        let b = basis();
        let c = decay_constants(&b, 0.3).unwrap();
        let c2x = decay_constants(&b, 0.6).unwrap();
        assert!(c.c2 >= 2.0);
        assert!(c.c1 <= 0.15 + 1e-15);
        assert!((c2x.c1 - 2.0 * c.c1).abs() < 1e-15);
        assert!(decay_constants(&b, 0.0).is_err());
    }
}
