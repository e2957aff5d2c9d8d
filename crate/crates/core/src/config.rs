//! Flat key-value run configuration, read from JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activations::{ActivationFamily, ActivationKind, GradientMode, DEFAULT_APLU_HINGES, DEFAULT_MELU_K};
use crate::ensemble::ModelId;
use crate::eval::{ExperimentConfig, InputScaling};
use crate::nn::TrainConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Train,
    Evaluate,
    Ensemble,
    Gradcheck,
    Basis,
    Report,
}

/// Every setting of a run. Unknown keys are rejected and missing keys take
/// their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    /// CSV files, or `images,labels` IDX pairs.
    pub datasets: Vec<String>,
    /// Activation labels such as `relu`, `aplu` or `melu4`.
    pub families: Vec<String>,
    pub max_inputs: Vec<f64>,
    /// MeLU parameters per channel for labels without a suffix.
    pub k: usize,
    /// APLU hinges for labels without a suffix.
    pub hinges: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub folds: usize,
    pub seed: u64,
    /// `CxHxW` applied to CSV features.
    pub shape: Option<String>,
    pub normalize_to_maxinput: bool,
    pub published_gradients: bool,
    pub augment: bool,
    pub gradcheck_points: usize,
    pub out: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        RunConfig {
            command: None,
            datasets: Vec::new(),
            families: ActivationKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            max_inputs: vec![1.0],
            k: DEFAULT_MELU_K,
            hinges: DEFAULT_APLU_HINGES,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            epochs: train.epochs,
            folds: 5,
            seed: 0,
            shape: None,
            normalize_to_maxinput: false,
            published_gradients: false,
            augment: true,
            gradcheck_points: 1000,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        if self.folds < 2 {
            return Err(Error::config(format!("folds must be at least 2, got {}", self.folds)));
        }
        if self.max_inputs.is_empty() {
            return Err(Error::config("max_inputs is empty"));
        }
        if let Some(s) = &self.shape {
            crate::data::parse_shape(s)?;
        }
        self.families()?;
        Ok(())
    }

    pub fn gradient_mode(&self) -> GradientMode {
        if self.published_gradients {
            GradientMode::Published
        } else {
            GradientMode::Analytic
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            seed: self.seed,
        }
    }

    /// Families at the first `max_input`, with `k`, `hinges` and the
    /// gradient mode applied.
    pub fn families(&self) -> Result<Vec<ActivationFamily>> {
        let m = self.max_inputs.first().copied().unwrap_or(1.0);
        self.families_at(m)
    }

    fn families_at(&self, max_input: f64) -> Result<Vec<ActivationFamily>> {
        if self.families.is_empty() {
            return Err(Error::config("families is empty"));
        }
        self.families
            .iter()
            .map(|label| {
                let mut f = ActivationFamily::parse_label(label, max_input)?;
                let has_suffix = label.chars().any(|c| c.is_ascii_digit());
                if !has_suffix {
                    f.melu_total_params = self.k;
                    f.aplu_hinge_count = self.hinges;
                }
                f.gradient_mode = self.gradient_mode();
                f.validate()?;
                Ok(f)
            })
            .collect()
    }

    /// Every family at every `max_input`, in family-major order.
    pub fn model_ids(&self) -> Result<Vec<ModelId>> {
        let mut out = Vec::new();
        for &m in &self.max_inputs {
            for f in self.families_at(m)? {
                out.push(ModelId::new(f));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for id in &out {
            if !seen.insert(id.to_string()) {
                return Err(Error::config(format!("duplicate model id `{id}`")));
            }
        }
        Ok(out)
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            train: self.train_config(),
            folds: self.folds,
            seed: self.seed,
            augment: self.augment,
            input_scaling: if self.normalize_to_maxinput {
                InputScaling::ToMaxInput
            } else {
                InputScaling::AsIs
            },
            hidden_layers: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c.batch_size, 30);
        assert_eq!(c.learning_rate, 0.0001);
        assert_eq!(c.epochs, 30);
        assert_eq!(c.folds, 5);
        assert_eq!(c.families.len(), 8);
    }

    #[test]
    fn unknown_key_rejected() {
        let e = RunConfig::from_json(r#"{"batchsize": 3}"#).unwrap_err();
        assert!(e.is_validation());
    }

    #[test]
    fn round_trip() {
        let c = RunConfig {
            command: Some(Command::Evaluate),
            datasets: vec!["a.csv".into()],
            max_inputs: vec![1.0, 255.0],
            shape: Some("1x4x4".into()),
            ..Default::default()
        };
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json(), c.to_json());
    }

    #[test]
    fn model_grid() {
        let c = RunConfig {
            families: vec!["relu".into(), "melu".into()],
            max_inputs: vec![1.0, 255.0],
            k: 4,
            ..Default::default()
        };
        let ids: Vec<String> = c.model_ids().unwrap().iter().map(ToString::to_string).collect();
        assert_eq!(ids.len(), 4);
        assert!(ids.iter().any(|i| i.starts_with("melu4")));
        let dup = RunConfig { families: vec!["relu".into(), "relu".into()], ..Default::default() };
        assert!(dup.model_ids().is_err());
    }
}
