//! Experiment configuration: a strict JSON schema covering the system,
//! grid, network, and training blocks. Unknown keys are rejected so typos
//! cannot silently change hyperparameters.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::autodiff::NetworkConfig;
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::models::{spin_boson_spec, xxz_spec, BathParams, SystemSpec};
use crate::oracle::TimeGrid;
use crate::training::TrainConfig;

/// Initial reduced states selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    /// |0⟩⟨0| (two-level).
    Ket0,
    /// |00⟩⟨00| (two-qubit).
    Ket00,
    /// (|00⟩ + |11⟩)/√2 as a density matrix.
    Bell,
    /// Explicit density matrix from `rho0_matrix`.
    CustomMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// "spin-boson" or "xxz".
    pub name: String,
    #[serde(rename = "J", default)]
    pub j: Option<f64>,
    #[serde(rename = "Delta", default)]
    pub delta: Option<f64>,
    #[serde(rename = "Gamma")]
    pub coupling: f64,
    #[serde(rename = "gamma")]
    pub char_freq: f64,
    #[serde(rename = "T")]
    pub temperature: f64,
    pub rho0: InitialState,
    /// Row-major (re, im) entries, required with `rho0 = "custom-matrix"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho0_matrix: Option<Vec<[f64; 2]>>,
}

impl SystemConfig {
    pub fn build_spec(&self) -> Result<SystemSpec> {
        let bath = BathParams::new(self.coupling, self.char_freq, self.temperature)?;
        match self.name.as_str() {
            "spin-boson" => Ok(spin_boson_spec(bath)),
            "xxz" => {
                let j = self.j.ok_or_else(|| Error::InvalidConfig("xxz needs J".into()))?;
                let delta =
                    self.delta.ok_or_else(|| Error::InvalidConfig("xxz needs Delta".into()))?;
                Ok(xxz_spec(j, delta, bath))
            }
            other => Err(Error::InvalidConfig(format!(
                "unknown system '{other}'; expected spin-boson or xxz"
            ))),
        }
    }

    pub fn build_rho0(&self, dim: usize) -> Result<ComplexMatrix> {
        let m = match self.rho0 {
            InitialState::Ket0 => {
                if dim != 2 {
                    return Err(Error::InvalidConfig("ket0 is a two-level state".into()));
                }
                ComplexMatrix::diag(&[1.0, 0.0])
            }
            InitialState::Ket00 => {
                if dim != 4 {
                    return Err(Error::InvalidConfig("ket00 is a two-qubit state".into()));
                }
                ComplexMatrix::diag(&[1.0, 0.0, 0.0, 0.0])
            }
            InitialState::Bell => {
                if dim != 4 {
                    return Err(Error::InvalidConfig("bell is a two-qubit state".into()));
                }
                let mut m = ComplexMatrix::zeros(4);
                for (i, j) in [(0usize, 0usize), (0, 3), (3, 0), (3, 3)] {
                    m.set(i, j, Complex64::new(0.5, 0.0));
                }
                m
            }
            InitialState::CustomMatrix => {
                let parts = self.rho0_matrix.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("custom-matrix needs rho0_matrix entries".into())
                })?;
                if parts.len() != dim * dim {
                    return Err(Error::InvalidConfig(format!(
                        "rho0_matrix needs {} entries, got {}",
                        dim * dim,
                        parts.len()
                    )));
                }
                let entries = parts.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
                ComplexMatrix::from_entries(dim, entries)?
            }
        };
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Number of sample points N_t.
    pub t_f: usize,
    #[serde(rename = "T_tot")]
    pub t_total: f64,
}

impl GridConfig {
    pub fn build(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_f, self.t_total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub grid: GridConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    /// Density-phase network; defaults to a plain net mirroring `network`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_network: Option<NetworkConfig>,
    /// Density-phase training overrides (the evolution regularizer defaults
    /// to off in this phase).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_train: Option<TrainConfig>,
    /// RK4 sub-steps per grid interval for oracle commands.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn default_substeps() -> usize {
    crate::oracle::DEFAULT_SUBSTEPS
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.system.build_spec()?;
        self.grid.build()?;
        self.network.validate()?;
        self.train.validate()?;
        if let Some(r) = &self.rho_network {
            r.validate()?;
        }
        if let Some(t) = &self.rho_train {
            t.validate()?;
        }
        self.system.build_rho0(spec.dim)?;
        if self.substeps == 0 {
            return Err(Error::InvalidConfig("substeps must be at least 1".into()));
        }
        Ok(())
    }

    /// Apply a dotted-path override such as `train.lambda_er=0.0` or
    /// `system.gamma=0.5` onto the raw JSON before parsing.
    pub fn apply_override(raw: &mut serde_json::Value, assignment: &str) -> Result<()> {
        let (path, value) = assignment.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("override '{assignment}' is not key=value"))
        })?;
        let parsed: serde_json::Value = match serde_json::from_str(value) {
            Ok(v) => v,
            Err(_) => serde_json::Value::String(value.to_string()),
        };
        let mut cursor = raw;
        let segments: Vec<&str> = path.split('.').collect();
        for (i, seg) in segments.iter().enumerate() {
            if i + 1 == segments.len() {
                cursor
                    .as_object_mut()
                    .ok_or_else(|| Error::InvalidConfig(format!("cannot set '{path}'")))?
                    .insert(seg.to_string(), parsed);
                return Ok(());
            }
            cursor = cursor
                .as_object_mut()
                .ok_or_else(|| Error::InvalidConfig(format!("cannot descend into '{seg}'")))?
                .entry(seg.to_string())
                .or_insert_with(|| serde_json::Value::Object(Default::default()));
        }
        Ok(())
    }

    /// Parse with a list of `key=value` overrides applied first.
    pub fn from_json_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut raw: serde_json::Value = serde_json::from_str(text)?;
        for assignment in overrides {
            Self::apply_override(&mut raw, assignment)?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(raw)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The density-phase network config: explicit if given, otherwise a
    /// plain single-head net with the trunk widths of the operator network.
    pub fn rho_network_config(&self, spec: &SystemSpec) -> NetworkConfig {
        match &self.rho_network {
            Some(cfg) => cfg.clone(),
            None => NetworkConfig {
                architecture: crate::autodiff::Architecture::Plain,
                shared_layers: self.network.shared_layers.clone(),
                branch_layers: vec![],
                out_features: vec![spec.rho_layout.n_features()],
                activation: self.network.activation,
                dropout_rate: self.network.dropout_rate,
                layer_norm: self.network.layer_norm,
                output_init_scale: self.network.output_init_scale,
                dropout_per_point: self.network.dropout_per_point,
                seed: self.network.seed,
            },
        }
    }

    /// The density-phase train config: explicit if given, otherwise the
    /// operator-phase settings with the evolution regularizer disabled.
    pub fn rho_train_config(&self) -> TrainConfig {
        match &self.rho_train {
            Some(cfg) => cfg.clone(),
            None => TrainConfig { lambda_er: 0.0, ..self.train.clone() },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_json() -> String {
        r#"{
            "system": {"name": "spin-boson", "Gamma": 0.1, "gamma": 0.3, "T": 20.0, "rho0": "ket0"},
            "grid": {"t_f": 201, "T_tot": 6.0},
            "network": {
                "architecture": "forked",
                "shared_layers": [64, 64, 64],
                "branch_layers": [32],
                "out_features": [4, 4],
                "dropout_rate": 0.0,
                "layer_norm": false,
                "seed": 1
            },
            "train": {"t_max": 5000, "lambda_er": 0.01, "seed": 1}
        }"#
        .to_string()
    }

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_json(&sample_json()).unwrap();
        assert_eq!(cfg.train.eta0, 5e-3);
        assert_eq!(cfg.train.tau, 0.002);
        let json = cfg.to_json().unwrap();
        let again = ExperimentConfig::from_json(&json).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = sample_json().replace("\"t_f\": 201", "\"t_f\": 201, \"typo_key\": 3");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn overrides_apply() {
        let cfg = ExperimentConfig::from_json_with_overrides(
            &sample_json(),
            &["train.lambda_er=0.0".into(), "system.gamma=0.5".into()],
        )
        .unwrap();
        assert_eq!(cfg.train.lambda_er, 0.0);
        assert_eq!(cfg.system.char_freq, 0.5);
    }

    #[test]
    fn builds_spec_and_initial_state() {
        let cfg = ExperimentConfig::from_json(&sample_json()).unwrap();
        let spec = cfg.system.build_spec().unwrap();
        assert_eq!(spec.dim, 2);
        let rho0 = cfg.system.build_rho0(2).unwrap();
        assert_eq!(rho0.get(0, 0).re, 1.0);
    }

    #[test]
    fn bell_state_dimensions_are_checked() {
        let mut cfg = ExperimentConfig::from_json(&sample_json()).unwrap();
        cfg.system.rho0 = InitialState::Bell;
        assert!(cfg.system.build_rho0(2).is_err());
        assert!(cfg.system.build_rho0(4).is_ok());
    }
}
