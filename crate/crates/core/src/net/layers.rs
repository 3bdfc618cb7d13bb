//! Dense layers evaluated in `f64` over token matrices (one row per token).

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::net::weights::NetworkWeights;

const LAYER_NORM_EPS: f64 = 1e-5;

fn matrix(weights: &NetworkWeights, name: &str) -> Result<DMatrix<f64>> {
    let t = weights.get(name)?;
    let (rows, cols) = (t.shape[0], t.shape[1]);
    Ok(DMatrix::from_row_iterator(
        rows,
        cols,
        t.data.iter().map(|&v| v as f64),
    ))
}

pub(crate) fn vector(weights: &NetworkWeights, name: &str) -> Result<DVector<f64>> {
    let t = weights.get(name)?;
    Ok(DVector::from_iterator(t.numel(), t.data.iter().map(|&v| v as f64)))
}

#[derive(Debug, Clone)]
pub struct Linear {
    /// Stored transposed, `[in, out]`, so a forward pass is `x · W + b`.
    weight_t: DMatrix<f64>,
    bias: DVector<f64>,
}

impl Linear {
    pub fn load(weights: &NetworkWeights, prefix: &str) -> Result<Self> {
        Ok(Linear {
            weight_t: matrix(weights, &format!("{prefix}.weight"))?.transpose(),
            bias: vector(weights, &format!("{prefix}.bias"))?,
        })
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x * &self.weight_t;
        for mut row in y.row_iter_mut() {
            row += self.bias.transpose();
        }
        y
    }
}

pub fn relu(mut x: DMatrix<f64>) -> DMatrix<f64> {
    x.apply(|v| *v = v.max(0.0));
    x
}

/// Two linear layers with a ReLU between them.
#[derive(Debug, Clone)]
pub struct Mlp {
    fc1: Linear,
    fc2: Linear,
}

impl Mlp {
    pub fn load(weights: &NetworkWeights, prefix: &str) -> Result<Self> {
        Ok(Mlp {
            fc1: Linear::load(weights, &format!("{prefix}.fc1"))?,
            fc2: Linear::load(weights, &format!("{prefix}.fc2"))?,
        })
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.fc2.forward(&relu(self.fc1.forward(x)))
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    gain: DVector<f64>,
    bias: DVector<f64>,
}

impl LayerNorm {
    pub fn load(weights: &NetworkWeights, prefix: &str) -> Result<Self> {
        Ok(LayerNorm {
            gain: vector(weights, &format!("{prefix}.weight"))?,
            bias: vector(weights, &format!("{prefix}.bias"))?,
        })
    }

    pub fn identity(d: usize) -> Self {
        LayerNorm {
            gain: DVector::from_element(d, 1.0),
            bias: DVector::zeros(d),
        }
    }

    /// Per-token normalization with biased variance.
    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let d = x.ncols() as f64;
        let mut y = x.clone();
        for mut row in y.row_iter_mut() {
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for (k, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) * inv * self.gain[k] + self.bias[k];
            }
        }
        y
    }
}

/// Unmasked multi-head self-attention.
#[derive(Debug, Clone)]
pub struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    heads: usize,
}

impl Attention {
    pub fn load(weights: &NetworkWeights, prefix: &str, heads: usize) -> Result<Self> {
        Ok(Attention {
            q: Linear::load(weights, &format!("{prefix}.q"))?,
            k: Linear::load(weights, &format!("{prefix}.k"))?,
            v: Linear::load(weights, &format!("{prefix}.v"))?,
            out: Linear::load(weights, &format!("{prefix}.out"))?,
            heads,
        })
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, d) = x.shape();
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = self.q.forward(x);
        let k = self.k.forward(x);
        let v = self.v.forward(x);
        let mut merged = DMatrix::zeros(n, d);
        for h in 0..self.heads {
            let cols = h * dh;
            let qh = q.columns(cols, dh);
            let kh = k.columns(cols, dh);
            let vh = v.columns(cols, dh);
            let mut scores = qh * kh.transpose() * scale;
            for mut row in scores.row_iter_mut() {
                let max = row.max();
                row.apply(|s| *s = (*s - max).exp());
                let sum = row.sum();
                row /= sum;
            }
            merged.columns_mut(cols, dh).copy_from(&(scores * vh));
        }
        self.out.forward(&merged)
    }
}

/// Post-norm transformer block: `LN(x + MHA(x))`, then `LN(y + FFN(y))`.
#[derive(Debug, Clone)]
pub struct Block {
    attn: Attention,
    ffn: Mlp,
    ln1: LayerNorm,
    ln2: LayerNorm,
}

impl Block {
    pub fn load(weights: &NetworkWeights, prefix: &str) -> Result<Self> {
        Ok(Block {
            attn: Attention::load(weights, &format!("{prefix}.attn"), weights.hyper.heads)?,
            ffn: Mlp::load(weights, &format!("{prefix}.ffn"))?,
            ln1: LayerNorm::load(weights, &format!("{prefix}.ln1"))?,
            ln2: LayerNorm::load(weights, &format!("{prefix}.ln2"))?,
        })
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let y = self.ln1.forward(&(x + self.attn.forward(x)));
        self.ln2.forward(&(&y + self.ffn.forward(&y)))
    }
}

/// A stack of blocks sharing one prefix, `<net>.block{i}`.
#[derive(Debug, Clone)]
pub struct Transformer {
    blocks: Vec<Block>,
}

impl Transformer {
    pub fn load(weights: &NetworkWeights, net: &str) -> Result<Self> {
        let blocks = (0..weights.hyper.blocks)
            .map(|b| Block::load(weights, &format!("{net}.block{b}")))
            .collect::<Result<_>>()?;
        Ok(Transformer { blocks })
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.blocks.iter().fold(x.clone(), |h, b| b.forward(&h))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Sigmoid kept strictly inside `(0, 1)` even where `f64` would round to an
/// endpoint.
pub fn open_sigmoid(x: f64) -> f64 {
    sigmoid(x).clamp(f64::EPSILON, 1.0 - f64::EPSILON)
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
