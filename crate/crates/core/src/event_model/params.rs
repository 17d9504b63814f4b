use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Activation, Linear, Matrix, Mlp, Parameters, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventModelConfig {
    /// Neighbourhood radius in hops.
    pub radius: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Pool ratio of each pyramid scale relative to the previous one;
    /// `1.0` keeps a scale unpooled.
    pub scales: Vec<f64>,
    /// Sampled negative pairs per criterion evaluation; `None` enumerates
    /// every ordered pair.
    pub negative_samples: Option<usize>,
    pub activation: Activation,
}

impl Default for EventModelConfig {
    fn default() -> Self {
        Self {
            radius: 1,
            embed_dim: 16,
            hidden_dim: 16,
            scales: vec![1.0, 0.5],
            negative_samples: None,
            activation: Activation::Relu,
        }
    }
}

impl EventModelConfig {
    pub fn check(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("event model dims must be positive".into()));
        }
        if self.scales.is_empty() {
            return Err(Error::Config("pyramid needs at least one scale".into()));
        }
        if let Some(r) = self.scales.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::Config(format!("pool ratio {r} outside (0, 1]")));
        }
        if self.negative_samples == Some(0) {
            return Err(Error::Config("negative_samples must be positive".into()));
        }
        Ok(())
    }
}

/// Trainable weights of the node encoder, neighbourhood aggregator,
/// similarity head and pyramid cross projections.
#[derive(Clone, Debug, PartialEq)]
pub struct EventModelParams<T = Matrix> {
    /// Node encoder, `F -> embed`.
    pub encoder: Mlp<T>,
    /// Linear map applied to every neighbourhood member before averaging.
    pub member_map: Linear<T>,
    /// `(radius + 1) x 1` weights mixing the per-hop member means.
    pub hop_mix: T,
    /// Neighbourhood embedding, `embed -> embed`.
    pub aggregator: Mlp<T>,
    /// Scores a concatenated `(node, neighbourhood)` pair, `2 embed -> 1`.
    pub similarity: Mlp<T>,
    /// Fine-to-coarse projection per adjacent scale pair.
    pub cross_down: Vec<T>,
    /// Coarse-to-fine projection per adjacent scale pair.
    pub cross_up: Vec<T>,
}

impl EventModelParams<Matrix> {
    pub fn init(feature_dim: usize, config: &EventModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.check()?;
        let (d, h) = (config.embed_dim, config.hidden_dim);
        let act = config.activation;
        let pairs = config.scales.len() - 1;
        let proj = |rng: &mut _| Linear::init(d, d, rng).weight.map(|w| 0.1 * w);
        let cross_down = (0..pairs).map(|_| proj(rng)).collect();
        let cross_up = (0..pairs).map(|_| proj(rng)).collect();
        Ok(Self {
            encoder: Mlp::init(&[feature_dim, h, d], act, rng)?,
            member_map: Linear::init(feature_dim, d, rng),
            hop_mix: Matrix::filled(config.radius + 1, 1, 1.0),
            aggregator: Mlp::init(&[d, h, d], act, rng)?,
            similarity: Mlp::init(&[2 * d, h, 1], act, rng)?,
            cross_down,
            cross_up,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn bind(&self, tape: &mut Tape) -> EventModelParams<Var> {
        self.map(&mut |m| tape.leaf(m.clone()))
    }
}

impl<T> EventModelParams<T> {
    pub fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> EventModelParams<U> {
        EventModelParams {
            encoder: self.encoder.map(f),
            member_map: self.member_map.map(f),
            hop_mix: f(&self.hop_mix),
            aggregator: self.aggregator.map(f),
            similarity: self.similarity.map(f),
            cross_down: self.cross_down.iter().map(&mut *f).collect(),
            cross_up: self.cross_up.iter().map(&mut *f).collect(),
        }
    }
}

impl Parameters for EventModelParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        self.encoder.visit(&format!("{prefix}.encoder"), f);
        self.member_map.visit(&format!("{prefix}.member_map"), f);
        f(format!("{prefix}.hop_mix"), &self.hop_mix);
        self.aggregator.visit(&format!("{prefix}.aggregator"), f);
        self.similarity.visit(&format!("{prefix}.similarity"), f);
        for (i, m) in self.cross_down.iter().enumerate() {
            f(format!("{prefix}.cross_down.{i}"), m);
        }
        for (i, m) in self.cross_up.iter().enumerate() {
            f(format!("{prefix}.cross_up.{i}"), m);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        self.encoder.visit_mut(&format!("{prefix}.encoder"), f);
        self.member_map.visit_mut(&format!("{prefix}.member_map"), f);
        f(format!("{prefix}.hop_mix"), &mut self.hop_mix);
        self.aggregator.visit_mut(&format!("{prefix}.aggregator"), f);
        self.similarity.visit_mut(&format!("{prefix}.similarity"), f);
        for (i, m) in self.cross_down.iter_mut().enumerate() {
            f(format!("{prefix}.cross_down.{i}"), m);
        }
        for (i, m) in self.cross_up.iter_mut().enumerate() {
            f(format!("{prefix}.cross_up.{i}"), m);
        }
    }
}
