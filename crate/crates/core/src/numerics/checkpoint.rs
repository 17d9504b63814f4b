//! Versioned JSON checkpoints of named parameter arrays.
//!
//! Floats are written in shortest round-trip form and parsed with exact
//! round-tripping, so save/load is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{load_named, named, Parameters};
use super::tensor::Matrix;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: String,
    pub config_hash: String,
    /// Module-specific configuration block.
    pub meta: serde_json::Value,
    pub params: Vec<StoredTensor>,
}

impl Checkpoint {
    pub fn new(kind: &str, config_hash: &str, meta: serde_json::Value) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            kind: kind.to_string(),
            config_hash: config_hash.to_string(),
            meta,
            params: Vec::new(),
        }
    }

    pub fn push_params(&mut self, params: &impl Parameters, prefix: &str) {
        for (name, m) in named(params, prefix) {
            self.params.push(StoredTensor {
                name,
                shape: [m.rows(), m.cols()],
                data: m.into_data(),
            });
        }
    }

    pub fn load_params(&self, params: &mut impl Parameters, prefix: &str) -> Result<()> {
        let source = self
            .params
            .iter()
            .map(|t| Ok((t.name.clone(), Matrix::from_vec(t.shape[0], t.shape[1], t.data.clone())?)))
            .collect::<Result<Vec<_>>>()?;
        load_named(params, prefix, &source)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses and checks the format version and tensor shapes.
    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {} is not supported (expected {CHECKPOINT_FORMAT_VERSION})",
                ckpt.format_version
            )));
        }
        for t in &ckpt.params {
            if t.shape[0].checked_mul(t.shape[1]) != Some(t.data.len()) {
                return Err(Error::Checkpoint(format!(
                    "{}: shape {:?} does not match {} values",
                    t.name,
                    t.shape,
                    t.data.len()
                )));
            }
        }
        Ok(ckpt)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected a {kind} checkpoint, found {}",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::mlp::{Activation, Mlp};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(values in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 6)) {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut mlp = Mlp::init(&[2, 2], Activation::Relu, &mut rng).unwrap();
            crate::numerics::params::assign_values(&mut mlp, &values).unwrap();
            let mut ck = Checkpoint::new("test", "abc", serde_json::json!({"k": 1}));
            ck.push_params(&mlp, "net");
            let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
            let mut restored = Mlp::init(&[2, 2], Activation::Relu, &mut rng).unwrap();
            back.load_params(&mut restored, "net").unwrap();
            let a: Vec<u64> = crate::numerics::params::flatten_values(&mlp).iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = crate::numerics::params::flatten_values(&restored).iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut ck = Checkpoint::new("test", "h", serde_json::Value::Null);
        ck.format_version = 99;
        let text = serde_json::to_string(&ck).unwrap();
        assert!(matches!(Checkpoint::from_json(&text), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn missing_or_misshapen_parameters_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let small = Mlp::init(&[2, 2], Activation::Relu, &mut rng).unwrap();
        let mut big = Mlp::init(&[3, 2], Activation::Relu, &mut rng).unwrap();
        let mut ck = Checkpoint::new("test", "h", serde_json::Value::Null);
        ck.push_params(&small, "net");
        assert!(ck.load_params(&mut big, "net").is_err());
        assert!(ck.load_params(&mut big, "other").is_err());
    }
}
