//! One flat run configuration driving every command, and its hash.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{Ablation, ClassifierConfig};
use crate::datasets::SimConfig;
use crate::error::{Error, Result};
use crate::event_model::EventModelConfig;
use crate::graph::BuilderConfig;
use crate::hierarchy::{Aggregation, HierarchyConfig};
use crate::numerics::Activation;
use crate::train::TrainConfig;

/// Hex SHA-256 of the value's JSON encoding.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Label categories; read from the dataset manifest when absent.
    pub categories: Option<Vec<String>>,
    pub window: usize,
    pub stride: usize,
    pub split: [f64; 3],
    pub bridge_gaps: bool,

    pub radius: usize,
    pub embed_dim: usize,
    pub event_hidden_dim: usize,
    pub pyramid_scales: Vec<f64>,
    pub negative_samples: Option<usize>,
    pub event_activation: Activation,

    pub hierarchy_levels: usize,
    pub pool_ratios: Vec<f64>,
    pub aggregation: Aggregation,

    pub hidden_dim: usize,
    pub layers: usize,
    pub threshold: f64,

    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub milestones: Option<Vec<usize>>,
    pub lr_gamma: f64,
    pub patience: usize,
    pub pretrain_epochs: usize,

    pub ablation: Ablation,
    pub future_offsets: Vec<usize>,
    /// Prefix lengths of the growing-window curve; all of `1..=window` when
    /// absent.
    pub growing_prefixes: Option<Vec<usize>>,

    pub simulator: SimConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let event = EventModelConfig::default();
        let hierarchy = HierarchyConfig {
            levels: 2,
            ..HierarchyConfig::default()
        };
        let classifier = ClassifierConfig::default();
        let train = TrainConfig::default();
        let simulator = SimConfig::default();
        Self {
            seed: 0,
            categories: None,
            window: simulator.window,
            stride: simulator.window,
            split: [0.7, 0.2, 0.1],
            bridge_gaps: false,
            radius: event.radius,
            embed_dim: event.embed_dim,
            event_hidden_dim: event.hidden_dim,
            pyramid_scales: event.scales,
            negative_samples: event.negative_samples,
            event_activation: event.activation,
            hierarchy_levels: hierarchy.levels,
            pool_ratios: hierarchy.pool_ratios,
            aggregation: hierarchy.aggregation,
            hidden_dim: classifier.hidden_dim,
            layers: classifier.layers,
            threshold: classifier.threshold,
            lr: train.lr,
            batch_size: train.batch_size,
            epochs: train.epochs,
            milestones: train.milestones,
            lr_gamma: train.lr_gamma,
            patience: train.patience,
            pretrain_epochs: train.pretrain_epochs,
            ablation: Ablation::None,
            future_offsets: vec![0, 2, 4, 8],
            growing_prefixes: None,
            simulator,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.check()?;
        Ok(c)
    }

    pub fn hash(&self) -> Result<String> {
        config_hash(self)
    }

    pub fn builder(&self) -> BuilderConfig {
        BuilderConfig {
            bridge_gaps: self.bridge_gaps,
            temporal_edges: true,
        }
    }

    pub fn event_model(&self) -> EventModelConfig {
        EventModelConfig {
            radius: self.radius,
            embed_dim: self.embed_dim,
            hidden_dim: self.event_hidden_dim,
            scales: self.pyramid_scales.clone(),
            negative_samples: self.negative_samples,
            activation: self.event_activation,
        }
    }

    pub fn hierarchy(&self) -> HierarchyConfig {
        HierarchyConfig {
            levels: self.hierarchy_levels,
            pool_ratios: self.pool_ratios.clone(),
            aggregation: self.aggregation,
            radius: self.radius,
        }
    }

    pub fn classifier(&self) -> ClassifierConfig {
        ClassifierConfig {
            hidden_dim: self.hidden_dim,
            layers: self.layers,
            threshold: self.threshold,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            milestones: self.milestones.clone(),
            lr_gamma: self.lr_gamma,
            patience: self.patience,
            pretrain_epochs: self.pretrain_epochs,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.window == 0 || self.stride == 0 {
            return Err(Error::Config("window and stride must be positive".into()));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if let Some(p) = &self.growing_prefixes {
            if let Some(bad) = p.iter().find(|&&x| x == 0 || x > self.window) {
                return Err(Error::Config(format!("growing prefix {bad} outside 1..={}", self.window)));
            }
        }
        self.event_model().check()?;
        self.hierarchy().check()?;
        self.train().check()?;
        self.simulator.validate()
    }

    pub fn prefixes(&self) -> Vec<usize> {
        self.growing_prefixes
            .clone()
            .unwrap_or_else(|| (1..=self.window).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let c = RunConfig::default();
        c.check().unwrap();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), c);
        assert_eq!(c.hash().unwrap(), RunConfig::from_json(&text).unwrap().hash().unwrap());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(matches!(RunConfig::from_json(r#"{"windw": 3}"#), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"window": 0}"#), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"pool_ratios": [1.5]}"#), Err(Error::Config(_))));
        let partial = RunConfig::from_json(r#"{"seed": 9}"#).unwrap();
        assert_eq!(partial.seed, 9);
        assert_ne!(partial.hash().unwrap(), RunConfig::default().hash().unwrap());
    }
}
