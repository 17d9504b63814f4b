//! Linear layers and multilayer perceptrons.
//!
//! Parameter containers are generic over their leaf type so the same shape
//! can hold values (`Matrix`), tape handles (`Var`) or gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::Parameters;
use super::tape::{Tape, Var};
use super::tensor::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// `y = x W + b` with `W: in x out` and `b: 1 x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T = Matrix> {
    pub weight: T,
    pub bias: T,
}

impl Linear<Matrix> {
    /// Uniform Glorot initialisation, zero bias.
    pub fn init(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (input + output).max(1) as f64).sqrt();
        let data = (0..input * output)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Self {
            weight: Matrix::from_vec(input, output, data).expect("sized"),
            bias: Matrix::zeros(1, output),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(input, output),
            bias: Matrix::zeros(1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }
}

impl<T> Linear<T> {
    pub fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> Linear<U> {
        Linear {
            weight: f(&self.weight),
            bias: f(&self.bias),
        }
    }
}

impl Linear<Var> {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let h = tape.matmul(x, self.weight)?;
        tape.add_row(h, self.bias)
    }
}

impl Parameters for Linear {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        f(format!("{prefix}.weight"), &self.weight);
        f(format!("{prefix}.bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        f(format!("{prefix}.weight"), &mut self.weight);
        f(format!("{prefix}.bias"), &mut self.bias);
    }
}

/// Stack of linear layers with a hidden activation between them and no
/// activation after the last layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T = Matrix> {
    pub layers: Vec<Linear<T>>,
    pub activation: Activation,
}

impl Mlp<Matrix> {
    /// `dims = [input, hidden..., output]`.
    pub fn init(dims: &[usize], activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument(
                "an MLP needs at least input and output dims".into(),
            ));
        }
        let layers = dims
            .windows(2)
            .map(|w| Linear::init(w[0], w[1], rng))
            .collect();
        Ok(Self { layers, activation })
    }

    pub fn from_layers(layers: Vec<Linear>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("an MLP needs a layer".into()));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} but layer {} takes {}",
                    w[0].output_dim(),
                    i + 1,
                    w[1].input_dim()
                )));
            }
        }
        Ok(Self { layers, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Linear::output_dim)
    }

    pub fn bind(&self, tape: &mut Tape) -> Mlp<Var> {
        self.map(&mut |m| tape.leaf(m.clone()))
    }
}

impl<T> Mlp<T> {
    pub fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> Mlp<U> {
        Mlp {
            layers: self.layers.iter().map(|l| l.map(f)).collect(),
            activation: self.activation,
        }
    }
}

impl Mlp<Var> {
    /// Row-wise forward pass on an `n x input` matrix.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, h)?;
            if i < last {
                h = self.activation.apply(tape, h);
            }
        }
        Ok(h)
    }
}

impl Parameters for Mlp {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&format!("{prefix}.{i}"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&format!("{prefix}.{i}"), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn eval(mlp: &Mlp, x: &Matrix) -> Matrix {
        let mut tape = Tape::new();
        let vars = mlp.bind(&mut tape);
        let xv = tape.leaf(x.clone());
        let y = vars.forward(&mut tape, xv).unwrap();
        tape.value(y).clone()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mlp = Mlp::from_layers(
            vec![Linear {
                weight: Matrix::identity(3),
                bias: Matrix::zeros(1, 3),
            }],
            Activation::Relu,
        )
        .unwrap();
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.0, 3.0, -1.0]]).unwrap();
        assert_eq!(eval(&mlp, &x), x);
    }

    #[test]
    fn zero_weights_give_constant_bias() {
        let mut layer = Linear::zeros(4, 2);
        layer.bias = Matrix::row_vector(vec![0.25, -1.5]);
        let mlp = Mlp::from_layers(vec![layer], Activation::Tanh).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0], vec![-9.0, 0.0, 0.1, 7.0]]).unwrap();
        let y = eval(&mlp, &x);
        for r in 0..2 {
            assert_eq!(y.row(r), &[0.25, -1.5]);
        }
    }

    #[test]
    fn two_layer_net_matches_straight_line_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mlp = Mlp::init(&[3, 4, 2], Activation::Relu, &mut rng).unwrap();
        let x = [0.3, -1.2, 0.8];
        let got = eval(&mlp, &Matrix::row_vector(x.to_vec()));

        // hand-rolled: out_k = b2_k + sum_j relu(b1_j + sum_i x_i W1_ij) W2_jk
        let (w1, b1) = (&mlp.layers[0].weight, &mlp.layers[0].bias);
        let (w2, b2) = (&mlp.layers[1].weight, &mlp.layers[1].bias);
        let mut hidden = [0.0; 4];
        for (j, h) in hidden.iter_mut().enumerate() {
            let mut s = b1.get(0, j);
            for (i, xi) in x.iter().enumerate() {
                s += xi * w1.get(i, j);
            }
            *h = if s > 0.0 { s } else { 0.0 };
        }
        for k in 0..2 {
            let mut s = b2.get(0, k);
            for (j, h) in hidden.iter().enumerate() {
                s += h * w2.get(j, k);
            }
            assert!((got.get(0, k) - s).abs() < 1e-14);
        }
    }

    #[test]
    fn mismatched_input_is_shape_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::init(&[3, 2], Activation::Relu, &mut rng).unwrap();
        let mut tape = Tape::new();
        let vars = mlp.bind(&mut tape);
        let x = tape.leaf(Matrix::zeros(1, 4));
        assert!(matches!(vars.forward(&mut tape, x), Err(Error::Shape(_))));
    }

    #[test]
    fn layer_dims_must_chain() {
        let err = Mlp::from_layers(vec![Linear::zeros(2, 3), Linear::zeros(4, 1)], Activation::Relu);
        assert!(err.is_err());
    }
}
