//! In-flow data generators. Every generator returns values on all grid
//! nodes; solvers only read the `p_x > 0` half.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{MomentumGrid, PlanckTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InData {
    Zero,
    /// `a ψ_E + b ψ_M`
    KernelMode { a: f64, b: f64 },
    /// `amplitude · exp(-((p_x - center)^2 + p_r^2) / width^2)`
    Bump { amplitude: f64, center: f64, width: f64 },
    /// `amplitude · ξ (1+P)` with `ξ` uniform in `[-1, 1]`, seeded.
    Random { amplitude: f64, seed: u64 },
}

impl Default for InData {
    fn default() -> Self {
        InData::Random { amplitude: 1.0, seed: 0 }
    }
}

impl InData {
    pub fn name(&self) -> &'static str {
        match self {
            InData::Zero => "zero",
            InData::KernelMode { .. } => "kernel_mode",
            InData::Bump { .. } => "bump",
            InData::Random { .. } => "random",
        }
    }

    pub fn evaluate(&self, grid: &MomentumGrid, table: &PlanckTable) -> Vec<f64> {
        let nodes = grid.nodes();
        match *self {
            InData::Zero => vec![0.0; grid.len()],
            InData::KernelMode { a, b } => nodes
                .iter()
                .zip(&table.p)
                .map(|(n, p)| (a * n.p2() + b * n.px) * (1.0 + p))
                .collect(),
            InData::Bump { amplitude, center, width } => nodes
                .iter()
                .map(|n| amplitude * (-((n.px - center).powi(2) + n.y) / (width * width)).exp())
                .collect(),
            InData::Random { amplitude, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                table.p.iter().map(|p| amplitude * rng.gen_range(-1.0..1.0) * (1.0 + p)).collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, planck_table, GridSpec};

    #[test]
    fn generators_are_deterministic() {
        let g = build_grid(GridSpec { n_x: 8, n_y: 8, ..Default::default() }).unwrap();
        let t = planck_table(&g);
        let r = InData::Random { amplitude: 1.0, seed: 5 };
        assert_eq!(r.evaluate(&g, &t), r.evaluate(&g, &t));
        assert_ne!(r.evaluate(&g, &t), InData::Random { amplitude: 1.0, seed: 6 }.evaluate(&g, &t));
        assert!(InData::Zero.evaluate(&g, &t).iter().all(|v| *v == 0.0));
        let k = InData::KernelMode { a: 0.0, b: 1.0 }.evaluate(&g, &t);
        assert_eq!(k[0], g.nodes()[0].px * (1.0 + t.p[0]));
    }

    #[test]
    fn serde_tagging() {
        let d: InData = serde_json::from_str(r#"{"kind":"bump","amplitude":1,"center":1,"width":0.5}"#).unwrap();
        assert_eq!(d.name(), "bump");
    }
}
