//! Run configuration: one JSON document, every field optional, plus dotted
//! `key=value` overrides applied on top.

use std::path::{Path, PathBuf};

use milne_core::indata::InData;
use milne_core::slab::{Scheme, SlabConfig};
use milne_core::{Exec, GridSpec, KernelQuadrature, OperatorConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Physics {
    /// Condensate density `n`.
    pub n: f64,
    pub quadrature: KernelQuadrature,
    /// Replace `K` by its weighted symmetric part after assembly.
    pub symmetrize: bool,
    pub exec: Exec,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            n: 1.0,
            quadrature: KernelQuadrature::CellAverage,
            symmetrize: false,
            exec: Exec::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Slab {
    /// `null` picks `8 / c₁`.
    pub l: Option<f64>,
    pub n_xcells: usize,
    pub scheme: Scheme,
    /// `ε` for the direct and source-iteration schemes, `ε₀` for the chain.
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Project the kernel modes out of `L` before solving.
    pub deflate: bool,
}

impl Default for Slab {
    fn default() -> Self {
        let s = SlabConfig::default();
        Self {
            l: s.l,
            n_xcells: s.n_xcells,
            scheme: s.scheme,
            epsilon: s.epsilon,
            tol: s.tol,
            max_iter: s.max_iter,
            deflate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Data {
    pub in_data: InData,
    /// Prescribed energy flux `E`.
    pub energy: f64,
}

impl Default for Data {
    fn default() -> Self {
        Self {
            in_data: InData::Random { amplitude: 1.0, seed: 0 },
            energy: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    pub dir: PathBuf,
    /// Also write the full field as CSV (large).
    pub field_csv: bool,
}

impl Default for Output {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            field_csv: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    /// Slab lengths as multiples of the configured (or default) length.
    pub length_factors: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// `n_x = n_y` values for the grid refinement table.
    pub grid_sizes: Vec<usize>,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            length_factors: vec![0.125, 0.25, 0.5, 1.0],
            epsilons: vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3],
            grid_sizes: vec![8, 16, 32],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub physics: Physics,
    pub slab: Slab,
    pub data: Data,
    pub output: Output,
    /// Seeds every random vector drawn by `spectrum` and `verify`.
    pub seed: u64,
    pub sweep: Sweep,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                let user: Value = serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                // validate the file alone first so unknown keys are reported as such
                let cfg: RunConfig = serde_json::from_value(user)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                serde_json::to_value(cfg).expect("config serializes")
            }
            None => serde_json::to_value(RunConfig::default()).expect("config serializes"),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Preconditions of every module the config feeds.
    pub fn validate(&self) -> Result<(), CliError> {
        self.grid.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.slab_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.physics.n > 0.0 && self.physics.n.is_finite()) {
            return bad(format!("physics.n = {} must be positive", self.physics.n));
        }
        if !self.data.energy.is_finite() {
            return bad("data.energy must be finite".into());
        }
        if let InData::Bump { width, .. } = self.data.in_data {
            if !(width > 0.0) {
                return bad(format!("bump width {width} must be positive"));
            }
        }
        if self.slab.scheme == Scheme::EpsilonChain && !(self.slab.epsilon > 0.0) {
            return bad("slab.epsilon must be positive for the epsilon_chain scheme".into());
        }
        if self.sweep.length_factors.iter().any(|f| !(*f > 0.0)) || self.sweep.epsilons.iter().any(|e| !(*e > 0.0)) {
            return bad("sweep factors and epsilons must be positive".into());
        }
        if self.sweep.grid_sizes.iter().any(|n| *n < 4 || n % 2 == 1) {
            return bad("sweep.grid_sizes must be even and at least 4".into());
        }
        Ok(())
    }

    pub fn operator_config(&self) -> OperatorConfig {
        OperatorConfig {
            n: self.physics.n,
            quadrature: self.physics.quadrature,
            exec: self.physics.exec,
            ..OperatorConfig::default()
        }
    }

    pub fn slab_config(&self) -> SlabConfig {
        SlabConfig {
            l: self.slab.l,
            n_xcells: self.slab.n_xcells,
            epsilon: self.slab.epsilon,
            scheme: self.slab.scheme,
            tol: self.slab.tol,
            max_iter: self.slab.max_iter,
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form,
    /// excluding the output section.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut v {
            m.remove("output");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Applies `a.b.c=value`. The value is parsed as JSON, falling back to a
/// plain string; the key must already exist.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("`{key}`: `{}` is not a section", parts[..i].join("."))))?;
        let slot = obj
            .get_mut(*part)
            .ok_or_else(|| CliError::Config(format!("unknown config key `{key}`")))?;
        if i + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        node = slot;
    }
    unreachable!("split always yields one part")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = RunConfig::load(
            None,
            &[
                "grid.n_x=16".into(),
                "slab.scheme=epsilon_chain".into(),
                "slab.epsilon=0.001".into(),
                "slab.l=12.5".into(),
                r#"data.in_data={"kind":"bump","amplitude":2,"center":1,"width":0.5}"#.into(),
                "seed=9".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.grid.n_x, 16);
        assert_eq!(cfg.slab.scheme, Scheme::EpsilonChain);
        assert_eq!(cfg.slab.l, Some(12.5));
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.data.in_data.name(), "bump");
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        for o in ["grid.nx=3", "grid=3", "grid.n_x", "grid.lambda=7", "physics.n=-1", "grid.n_x.y=2"] {
            let e = RunConfig::load(None, &[o.to_string()]).unwrap_err();
            assert_eq!(e.exit_code(), 1, "{o}: {e}");
        }
    }

    #[test]
    fn hash_ignores_output_and_tracks_physics() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output.dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.physics.n = 2.0;
        assert_ne!(a.hash(), b.hash());
    }
}
