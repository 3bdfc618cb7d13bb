//! Generators and discriminators over layouts.
//!
//! A [`GeneratorHandle`] pairs a generator `G: (Z, L) -> B` with a
//! discriminator `D: (B, L) -> score`. Two generators exist: the transformer
//! network loaded from a weight container, and a seeded affine-sigmoid map
//! used for desk-scale optimization runs. The analytic generator is paired
//! with a toy realism score, `D(B) = -(alignment(B) + overlap(B))`.

mod layers;
mod model;
mod weights;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use layers::{open_sigmoid, sigmoid, softmax, Block, LayerNorm};
pub use model::{
    lexicographic_order, reconstruction_loss, DiscriminatorOutput, GanDiagnostics, LayoutNet,
    Reconstruction,
};
pub use weights::{Hyperparameters, NetworkWeights, Tensor, FORMAT_TAG};

use crate::error::{Error, Result};
use crate::layout::{BBox, Label, LabelVocabulary, Layout};
use crate::metrics::{alignment_score, overlap_score};

/// Default per-element latent dimension.
pub const DEFAULT_D_Z: usize = 4;

/// One latent vector per element, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct LatentCodes {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for LatentCodes {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Validation("latent rows have unequal lengths".into()));
        }
        LatentCodes::from_flat(rows.len(), dim, rows.into_iter().flatten().collect())
    }
}

impl From<LatentCodes> for Vec<Vec<f64>> {
    fn from(z: LatentCodes) -> Self {
        if z.dim == 0 {
            return vec![Vec::new(); z.rows];
        }
        z.data.chunks(z.dim).map(<[f64]>::to_vec).collect()
    }
}

impl LatentCodes {
    pub fn from_flat(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::SizeMismatch {
                what: "latent code length",
                left: data.len(),
                right: rows * dim,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent codes".into()));
        }
        Ok(LatentCodes { rows, dim, data })
    }

    /// Standard-normal draws from a ChaCha stream seeded with `seed`.
    pub fn sample(rows: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        LatentCodes { rows, dim, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Reorders rows: row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let data = perm.iter().flat_map(|&p| self.row(p).to_vec()).collect();
        LatentCodes {
            rows: perm.len(),
            dim: self.dim,
            data,
        }
    }
}

/// Smallest width or height the analytic generator produces.
pub const MIN_SIZE: f64 = 0.02;

/// `b_i = sigmoid(W z_i + U onehot(l_i) + c)` with seeded fixed parameters;
/// the size rows are then mapped affinely onto `[MIN_SIZE, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticGenerator {
    pub seed: u64,
    pub d_z: usize,
    pub vocab_size: usize,
    /// `4 x d_z`, row-major.
    w: Vec<f64>,
    /// `4 x vocab_size`, row-major.
    u: Vec<f64>,
    c: [f64; 4],
}

impl AnalyticGenerator {
    /// Position rows get a wider latent gain than size rows, and the size
    /// offsets start boxes at roughly a fifth of the canvas per side.
    pub fn new(seed: u64, vocab_size: usize, d_z: usize) -> Result<Self> {
        if d_z == 0 || vocab_size == 0 {
            return Err(Error::Validation(
                "analytic generator needs d_z >= 1 and a nonempty vocabulary".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let gain = [1.5, 1.5, 0.75, 0.75];
        let scale = 1.0 / (d_z as f64).sqrt();
        let w = (0..4 * d_z)
            .map(|k| normal() * gain[k / d_z] * scale)
            .collect();
        let u = (0..4 * vocab_size).map(|_| normal() * 0.5).collect();
        Ok(AnalyticGenerator {
            seed,
            d_z,
            vocab_size,
            w,
            u,
            c: [0.0, 0.0, -1.5, -1.5],
        })
    }

    pub fn generate(&self, z: &LatentCodes, labels: &[Label]) -> Result<Layout> {
        if labels.is_empty() {
            return Err(Error::Validation("label set is empty".into()));
        }
        if z.rows() != labels.len() || z.dim() != self.d_z {
            return Err(Error::Validation(format!(
                "latent codes are {}x{}, expected {}x{}",
                z.rows(),
                z.dim(),
                labels.len(),
                self.d_z
            )));
        }
        let mut boxes = Vec::with_capacity(labels.len());
        for (i, &l) in labels.iter().enumerate() {
            if l >= self.vocab_size {
                return Err(Error::Validation(format!(
                    "label {l} is outside the vocabulary of {} labels",
                    self.vocab_size
                )));
            }
            let zi = z.row(i);
            let mut b = [0.0; 4];
            for (k, out) in b.iter_mut().enumerate() {
                let dot: f64 = self.w[k * self.d_z..(k + 1) * self.d_z]
                    .iter()
                    .zip(zi)
                    .map(|(w, z)| w * z)
                    .sum();
                let s = open_sigmoid(dot + self.u[k * self.vocab_size + l] + self.c[k]);
                *out = if k < 2 { s } else { MIN_SIZE + (1.0 - MIN_SIZE) * s };
            }
            boxes.push(BBox::from_array(b));
        }
        Layout::from_parts(labels, &boxes)
    }
}

/// `-(alignment + overlap)`: 0 for a disjoint, perfectly aligned layout and
/// negative otherwise.
pub fn toy_realism(layout: &Layout) -> f64 {
    -(alignment_score(layout) + overlap_score(layout))
}

#[derive(Debug, Clone)]
pub enum Generator {
    Network(Arc<LayoutNet>),
    Analytic(AnalyticGenerator),
}

#[derive(Debug, Clone)]
pub enum Discriminator {
    Network(Arc<LayoutNet>),
    ToyRealism,
}

/// A generator/discriminator pair with the vocabulary they share.
#[derive(Debug, Clone)]
pub struct GeneratorHandle {
    pub generator: Generator,
    pub discriminator: Discriminator,
    vocab: LabelVocabulary,
    d_z: usize,
}

impl GeneratorHandle {
    /// Seeded analytic generator paired with the toy realism score.
    pub fn analytic(seed: u64, vocab: LabelVocabulary, d_z: usize) -> Result<Self> {
        let g = AnalyticGenerator::new(seed, vocab.len(), d_z)?;
        Ok(GeneratorHandle {
            generator: Generator::Analytic(g),
            discriminator: Discriminator::ToyRealism,
            vocab,
            d_z,
        })
    }

    /// Transformer generator and discriminator from one weight container.
    pub fn network(weights: &NetworkWeights) -> Result<Self> {
        let net = Arc::new(LayoutNet::new(weights)?);
        let vocab = match &weights.vocabulary {
            Some(names) => LabelVocabulary::new(names.clone())?,
            None => LabelVocabulary::numbered(weights.hyper.vocab_size),
        };
        Ok(GeneratorHandle {
            generator: Generator::Network(net.clone()),
            discriminator: Discriminator::Network(net),
            d_z: weights.hyper.d_z,
            vocab,
        })
    }

    pub fn vocab(&self) -> &LabelVocabulary {
        &self.vocab
    }

    pub fn d_z(&self) -> usize {
        self.d_z
    }

    pub fn generate(&self, z: &LatentCodes, labels: &[Label]) -> Result<Layout> {
        match &self.generator {
            Generator::Network(net) => net.generate(z, labels),
            Generator::Analytic(g) => g.generate(z, labels),
        }
    }

    pub fn discriminate(&self, layout: &Layout) -> Result<f64> {
        match &self.discriminator {
            Discriminator::Network(net) => Ok(net.discriminate(layout)?.score),
            Discriminator::ToyRealism => Ok(toy_realism(layout)),
        }
    }

    /// Draws `Z ~ N(0, I)` for the given labels and decodes it.
    pub fn sample(&self, labels: &[Label], seed: u64) -> Result<(Layout, LatentCodes)> {
        let z = LatentCodes::sample(labels.len(), self.d_z, seed);
        Ok((self.generate(&z, labels)?, z))
    }
}
