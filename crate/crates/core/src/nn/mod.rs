//! Graph encoder with policy and value heads, and their gradients.
//!
//! All learnable matrices live in one flat parameter vector; a [`Layout`]
//! names the slices. Weight matrices are stored row-major as
//! `out x in`.

mod dist;
mod model;

pub use self::dist::{entropy, log_prob, masked_distribution};
pub use self::model::{forward, Forward};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{EDGE_FEATURES, FACE_FEATURES, NODE_FEATURES};

pub const CHECKPOINT_FORMAT: &str = "slumroad-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub layers: usize,
    pub policy_hidden: usize,
    pub value_hidden: usize,
    /// Biases in the policy and value perceptrons.
    pub head_bias: bool,
    pub n2e: bool,
    pub f2e: bool,
    pub e2e: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { dim: 16, layers: 2, policy_hidden: 32, value_hidden: 32, head_bias: true, n2e: true, f2e: true, e2e: true }
    }
}

impl ModelConfig {
    pub fn value_input(&self) -> usize {
        2 * self.dim + 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSlots {
    pub w_ne: Slot,
    pub b_ne: Slot,
    pub w_int: Slot,
    pub b_int: Slot,
}

/// Where each named matrix lives in the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub w_n: Slot,
    pub w_e: Slot,
    pub w_f: Slot,
    pub layers: Vec<LayerSlots>,
    pub p_w1: Slot,
    pub p_b1: Option<Slot>,
    pub p_w2: Slot,
    pub p_b2: Option<Slot>,
    pub v_w1: Slot,
    pub v_b1: Option<Slot>,
    pub v_w2: Slot,
    pub v_b2: Option<Slot>,
    pub v_w3: Slot,
    pub v_b3: Option<Slot>,
    pub total: usize,
    names: Vec<(String, Slot, bool)>,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Layout {
        let mut names = Vec::new();
        let mut offset = 0;
        let mut slot = |name: String, rows: usize, cols: usize, weight: bool| {
            let s = Slot { offset, rows, cols };
            offset += rows * cols;
            names.push((name, s, weight));
            s
        };
        let d = cfg.dim;
        let w_n = slot("w_n".into(), d, NODE_FEATURES, true);
        let w_e = slot("w_e".into(), d, EDGE_FEATURES, true);
        let w_f = slot("w_f".into(), d, FACE_FEATURES, true);
        let layers = (0..cfg.layers)
            .map(|l| LayerSlots {
                w_ne: slot(format!("layer{l}.w_ne"), d, 2 * d, true),
                b_ne: slot(format!("layer{l}.b_ne"), 1, d, false),
                w_int: slot(format!("layer{l}.w_int"), d, 3 * d, true),
                b_int: slot(format!("layer{l}.b_int"), 1, d, false),
            })
            .collect();
        let (ph, vh, vi) = (cfg.policy_hidden, cfg.value_hidden, cfg.value_input());
        let bias = cfg.head_bias;
        let p_w1 = slot("policy.w1".into(), ph, d, true);
        let p_b1 = bias.then(|| slot("policy.b1".into(), 1, ph, false));
        let p_w2 = slot("policy.w2".into(), 1, ph, true);
        let p_b2 = bias.then(|| slot("policy.b2".into(), 1, 1, false));
        let v_w1 = slot("value.w1".into(), vh, vi, true);
        let v_b1 = bias.then(|| slot("value.b1".into(), 1, vh, false));
        let v_w2 = slot("value.w2".into(), vh, vh, true);
        let v_b2 = bias.then(|| slot("value.b2".into(), 1, vh, false));
        let v_w3 = slot("value.w3".into(), 1, vh, true);
        let v_b3 = bias.then(|| slot("value.b3".into(), 1, 1, false));
        Layout { w_n, w_e, w_f, layers, p_w1, p_b1, p_w2, p_b2, v_w1, v_b1, v_w2, v_b2, v_w3, v_b3, total: offset, names }
    }

    /// `(name, slot)` for every tensor in storage order.
    pub fn tensors(&self) -> impl Iterator<Item = (&str, Slot)> {
        self.names.iter().map(|(n, s, _)| (n.as_str(), *s))
    }
}

/// Learnable parameters of the encoder and both heads.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub config: ModelConfig,
    pub layout: Layout,
    pub values: Vec<f64>,
}

impl Params {
    pub fn zeros(config: &ModelConfig) -> Result<Params> {
        if config.dim == 0 || config.policy_hidden == 0 || config.value_hidden == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        let layout = Layout::new(config);
        Ok(Params { values: vec![0.0; layout.total], layout, config: config.clone() })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Params> {
        let mut p = Params::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, s, weight) in &p.layout.names {
            if !weight {
                continue;
            }
            let limit = (6.0 / (s.rows + s.cols) as f64).sqrt();
            for v in &mut p.values[s.range()] {
                *v = rng.random_range(-limit..=limit);
            }
        }
        Ok(p)
    }

    pub fn slice(&self, s: Slot) -> &[f64] {
        &self.values[s.range()]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            tensors: self
                .layout
                .tensors()
                .map(|(name, s)| Tensor { name: name.into(), shape: [s.rows, s.cols], values: self.slice(s).to_vec() })
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Params> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Parse(format!("not a checkpoint: format {:?}", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!("unsupported checkpoint version {}", ck.version)));
        }
        let mut p = Params::zeros(&ck.config)?;
        let expected: Vec<(String, Slot)> = p.layout.tensors().map(|(n, s)| (n.to_owned(), s)).collect();
        if expected.len() != ck.tensors.len() {
            return Err(Error::Shape(format!("checkpoint has {} tensors, model needs {}", ck.tensors.len(), expected.len())));
        }
        for ((name, s), t) in expected.iter().zip(&ck.tensors) {
            if *name != t.name || t.shape != [s.rows, s.cols] || t.values.len() != s.len() {
                return Err(Error::Shape(format!("tensor {} does not match {name} {}x{}", t.name, s.rows, s.cols)));
            }
            if t.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("tensor {name} has non-finite values")));
            }
            p.values[s.range()].copy_from_slice(&t.values);
        }
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_checkpoint()).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Params> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Params::from_checkpoint(&ck)
    }
}

/// Serialized parameters: every tensor with its shape and row-major values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}
