use rand::Rng;

use super::input::Relation;
use crate::error::{Error, Result};
use crate::numerics::{Activation, Linear, Matrix, Mlp, Parameters, Tape, Var};

/// One relational layer: a weight per relation, a self weight and a bias.
#[derive(Clone, Debug, PartialEq)]
pub struct RgcnLayer<T = Matrix> {
    pub relations: Vec<T>,
    pub self_weight: T,
    pub bias: T,
}

impl RgcnLayer<Matrix> {
    pub fn init(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let relations = (0..Relation::COUNT)
            .map(|_| Linear::init(input, output, rng).weight)
            .collect();
        Self {
            relations,
            self_weight: Linear::init(input, output, rng).weight,
            bias: Matrix::zeros(1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.self_weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.self_weight.cols()
    }
}

impl<T> RgcnLayer<T> {
    pub fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> RgcnLayer<U> {
        RgcnLayer {
            relations: self.relations.iter().map(&mut *f).collect(),
            self_weight: f(&self.self_weight),
            bias: f(&self.bias),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams<T = Matrix> {
    pub layers: Vec<RgcnLayer<T>>,
    /// Maps the multi-level readout to one logit per category.
    pub head: Mlp<T>,
}

impl ClassifierParams<Matrix> {
    /// `levels` counts every level including 0; the readout concatenates
    /// one mean per level.
    pub fn init(
        input_dim: usize,
        hidden_dim: usize,
        layer_count: usize,
        levels: usize,
        categories: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if hidden_dim == 0 || categories == 0 || levels == 0 {
            return Err(Error::Config(
                "classifier needs positive hidden dim, levels and categories".into(),
            ));
        }
        let mut layers = Vec::with_capacity(layer_count);
        let mut dim = input_dim;
        for _ in 0..layer_count {
            layers.push(RgcnLayer::init(dim, hidden_dim, rng));
            dim = hidden_dim;
        }
        let head = Mlp::init(&[levels * dim, hidden_dim, categories], Activation::Relu, rng)?;
        Ok(Self { layers, head })
    }

    pub fn bind(&self, tape: &mut Tape) -> ClassifierParams<Var> {
        self.map(&mut |m| tape.leaf(m.clone()))
    }

    pub fn categories(&self) -> usize {
        self.head.output_dim()
    }
}

impl<T> ClassifierParams<T> {
    pub fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> ClassifierParams<U> {
        ClassifierParams {
            layers: self.layers.iter().map(|l| l.map(f)).collect(),
            head: self.head.map(f),
        }
    }
}

impl Parameters for ClassifierParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        for (i, layer) in self.layers.iter().enumerate() {
            for (r, m) in layer.relations.iter().enumerate() {
                f(format!("{prefix}.layer.{i}.relation.{r}"), m);
            }
            f(format!("{prefix}.layer.{i}.self"), &layer.self_weight);
            f(format!("{prefix}.layer.{i}.bias"), &layer.bias);
        }
        self.head.visit(&format!("{prefix}.head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (r, m) in layer.relations.iter_mut().enumerate() {
                f(format!("{prefix}.layer.{i}.relation.{r}"), m);
            }
            f(format!("{prefix}.layer.{i}.self"), &mut layer.self_weight);
            f(format!("{prefix}.layer.{i}.bias"), &mut layer.bias);
        }
        self.head.visit_mut(&format!("{prefix}.head"), f);
    }
}
