//! Named-tensor weight container.
//!
//! On disk a model is a JSON manifest plus a raw blob of little-endian `f32`
//! values. The manifest carries the hyperparameters and one `{name, shape,
//! offset}` record per tensor, where `offset` is in bytes from the start of
//! the blob. Tensors are written in manifest order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "latentlayout-weights/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub d_model: usize,
    /// Hidden width of the transformer feed-forward layer.
    pub ffn_hidden: usize,
    pub heads: usize,
    pub blocks: usize,
    /// Hidden width of the encoder/decoder perceptrons.
    pub mlp_hidden: usize,
    pub d_z: usize,
    pub vocab_size: usize,
    /// Number of positional embeddings held by the auxiliary decoder.
    pub max_elements: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            d_model: 256,
            ffn_hidden: 128,
            heads: 4,
            blocks: 8,
            mlp_hidden: 256,
            d_z: 4,
            vocab_size: 5,
            max_elements: 9,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_model", self.d_model),
            ("ffn_hidden", self.ffn_hidden),
            ("heads", self.heads),
            ("mlp_hidden", self.mlp_hidden),
            ("d_z", self.d_z),
            ("vocab_size", self.vocab_size),
            ("max_elements", self.max_elements),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Validation(format!("hyperparameter {name} must be > 0")));
            }
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::Validation(format!(
                "heads ({}) must divide d_model ({})",
                self.heads, self.d_model
            )));
        }
        Ok(())
    }

    /// Every tensor of the fixed naming scheme with its shape, in canonical
    /// order. Linear weights are `[out, in]`.
    pub fn tensor_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut specs = Vec::new();
        let mlp = |specs: &mut Vec<(String, Vec<usize>)>, prefix: &str, input: usize, output: usize| {
            specs.push((format!("{prefix}.fc1.weight"), vec![self.mlp_hidden, input]));
            specs.push((format!("{prefix}.fc1.bias"), vec![self.mlp_hidden]));
            specs.push((format!("{prefix}.fc2.weight"), vec![output, self.mlp_hidden]));
            specs.push((format!("{prefix}.fc2.bias"), vec![output]));
        };
        let d = self.d_model;
        let v = self.vocab_size;
        let blocks = |specs: &mut Vec<(String, Vec<usize>)>, net: &str| {
            for b in 0..self.blocks {
                let p = format!("{net}.block{b}");
                for proj in ["q", "k", "v", "out"] {
                    specs.push((format!("{p}.attn.{proj}.weight"), vec![d, d]));
                    specs.push((format!("{p}.attn.{proj}.bias"), vec![d]));
                }
                specs.push((format!("{p}.ffn.fc1.weight"), vec![self.ffn_hidden, d]));
                specs.push((format!("{p}.ffn.fc1.bias"), vec![self.ffn_hidden]));
                specs.push((format!("{p}.ffn.fc2.weight"), vec![d, self.ffn_hidden]));
                specs.push((format!("{p}.ffn.fc2.bias"), vec![d]));
                for ln in ["ln1", "ln2"] {
                    specs.push((format!("{p}.{ln}.weight"), vec![d]));
                    specs.push((format!("{p}.{ln}.bias"), vec![d]));
                }
            }
        };

        mlp(&mut specs, "gen.enc", self.d_z + v, d);
        blocks(&mut specs, "gen");
        mlp(&mut specs, "gen.dec", d, 4);

        mlp(&mut specs, "disc.enc", 4 + v, d);
        specs.push(("disc.h_const".into(), vec![d]));
        blocks(&mut specs, "disc");
        mlp(&mut specs, "disc.dec", d, 1);

        mlp(&mut specs, "aux.enc", 2 * d, d);
        specs.push(("aux.pos".into(), vec![self.max_elements, d]));
        blocks(&mut specs, "aux");
        mlp(&mut specs, "aux.dec", d, 4 + v);
        specs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Parameters of the generator, discriminator and auxiliary decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub hyper: Hyperparameters,
    /// Optional label names; when present their count equals `vocab_size`.
    pub vocabulary: Option<Vec<String>>,
    tensors: BTreeMap<String, Tensor>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    hyperparameters: Hyperparameters,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocabulary: Option<Vec<String>>,
    blob: String,
    tensors: Vec<TensorRecord>,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

impl NetworkWeights {
    /// Validates a tensor map against the naming scheme.
    pub fn from_tensors(
        hyper: Hyperparameters,
        vocabulary: Option<Vec<String>>,
        tensors: BTreeMap<String, Tensor>,
    ) -> Result<Self> {
        hyper.validate()?;
        if let Some(v) = &vocabulary {
            if v.len() != hyper.vocab_size {
                return Err(Error::SizeMismatch {
                    what: "vocabulary names vs vocab_size",
                    left: v.len(),
                    right: hyper.vocab_size,
                });
            }
        }
        let specs = hyper.tensor_specs();
        let known: BTreeMap<&str, &Vec<usize>> =
            specs.iter().map(|(n, s)| (n.as_str(), s)).collect();
        for (name, t) in &tensors {
            let Some(expected) = known.get(name.as_str()) else {
                return Err(Error::UnknownTensor(name.clone()));
            };
            if &&t.shape != expected {
                return Err(Error::TensorShape {
                    name: name.clone(),
                    expected: (*expected).clone(),
                    found: t.shape.clone(),
                });
            }
            if t.data.len() != t.shape.iter().product::<usize>() {
                return Err(Error::TensorShape {
                    name: name.clone(),
                    expected: t.shape.clone(),
                    found: vec![t.data.len()],
                });
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("tensor `{name}`")));
            }
        }
        for (name, _) in &specs {
            if !tensors.contains_key(name) {
                return Err(Error::MissingTensor(name.clone()));
            }
        }
        Ok(NetworkWeights {
            hyper,
            vocabulary,
            tensors,
        })
    }

    /// All parameters zero, including layer-norm gains.
    pub fn zeros(hyper: Hyperparameters) -> Result<Self> {
        let tensors = hyper
            .tensor_specs()
            .into_iter()
            .map(|(name, shape)| (name, Tensor::zeros(shape)))
            .collect();
        NetworkWeights::from_tensors(hyper, None, tensors)
    }

    /// Seeded initialization: linear layers uniform in `±1/√fan_in`, layer
    /// norms at unit gain and zero bias, `disc.h_const` uniform in `±1`,
    /// positional embeddings uniform in `[0, 1]`.
    pub fn random(hyper: Hyperparameters, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        let specs = hyper.tensor_specs();
        // Biases share their weight's fan-in, so resolve it up front.
        let fan_in: BTreeMap<String, usize> = specs
            .iter()
            .filter(|(n, _)| n.ends_with(".weight"))
            .map(|(n, s)| (n.trim_end_matches(".weight").to_string(), *s.last().unwrap()))
            .collect();
        for (name, shape) in specs {
            let mut t = Tensor::zeros(shape);
            let is_ln = name.contains(".ln1.") || name.contains(".ln2.");
            if is_ln {
                if name.ends_with(".weight") {
                    t.data.iter_mut().for_each(|v| *v = 1.0);
                }
            } else if name == "aux.pos" {
                t.data.iter_mut().for_each(|v| *v = rng.random::<f32>());
            } else if name == "disc.h_const" {
                t.data
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(-1.0f32..1.0));
            } else {
                let base = name
                    .trim_end_matches(".weight")
                    .trim_end_matches(".bias");
                let bound = 1.0 / (fan_in[base] as f32).sqrt();
                t.data
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(-bound..bound));
            }
            tensors.insert(name, t);
        }
        NetworkWeights::from_tensors(hyper, None, tensors)
    }

    pub fn with_vocabulary(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.hyper.vocab_size {
            return Err(Error::SizeMismatch {
                what: "vocabulary names vs vocab_size",
                left: names.len(),
                right: self.hyper.vocab_size,
            });
        }
        self.vocabulary = Some(names);
        Ok(self)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Writes `<path>` (manifest) and a sibling blob `<stem>.bin`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let blob_name = format!(
            "{}.bin",
            path.file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("weights")
        );
        let blob_path = sibling(path, &blob_name);
        let mut blob = Vec::with_capacity(self.parameter_count() * 4);
        let mut records = Vec::new();
        for (name, _) in self.hyper.tensor_specs() {
            let t = &self.tensors[&name];
            records.push(TensorRecord {
                name,
                shape: t.shape.clone(),
                offset: blob.len(),
            });
            for v in &t.data {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = Manifest {
            format: FORMAT_TAG.into(),
            hyperparameters: self.hyper,
            vocabulary: self.vocabulary.clone(),
            blob: blob_name,
            tensors: records,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(&blob_path, blob).map_err(|e| Error::io(&blob_path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        if manifest.format != FORMAT_TAG {
            return Err(Error::Parse(format!(
                "unsupported weight format `{}`",
                manifest.format
            )));
        }
        let blob_path = sibling(path, &manifest.blob);
        let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
        let expected = manifest
            .tensors
            .iter()
            .map(|r| r.offset + 4 * r.shape.iter().product::<usize>())
            .max()
            .unwrap_or(0);
        if blob.len() < expected {
            return Err(Error::TruncatedBlob {
                expected,
                found: blob.len(),
            });
        }
        let mut tensors = BTreeMap::new();
        for r in manifest.tensors {
            let n: usize = r.shape.iter().product();
            let bytes = &blob[r.offset..r.offset + 4 * n];
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if tensors
                .insert(r.name.clone(), Tensor { shape: r.shape, data })
                .is_some()
            {
                return Err(Error::Validation(format!("tensor `{}` listed twice", r.name)));
            }
        }
        NetworkWeights::from_tensors(manifest.hyperparameters, manifest.vocabulary, tensors)
    }
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    match path.parent() {
        Some(dir) => dir.join(name),
        None => PathBuf::from(name),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mini() -> Hyperparameters {
        Hyperparameters {
            d_model: 8,
            ffn_hidden: 4,
            heads: 2,
            blocks: 1,
            mlp_hidden: 6,
            d_z: 3,
            vocab_size: 3,
            max_elements: 4,
        }
    }

    #[test]
    fn default_naming_scheme() {
        let specs = Hyperparameters::default().tensor_specs();
        let names: Vec<&str> = specs.iter().map(|(n, _)| n.as_str()).collect();
        assert!(names.contains(&"gen.block7.attn.q.weight"));
        assert!(names.contains(&"disc.h_const"));
        assert!(names.contains(&"aux.pos"));
        assert!(!names.contains(&"gen.block8.ln1.weight"));
    }

    #[test]
    fn heads_must_divide() {
        let hp = Hyperparameters {
            heads: 3,
            ..mini()
        };
        assert!(NetworkWeights::zeros(hp).is_err());
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let a = NetworkWeights::random(mini(), 7).unwrap();
        let b = NetworkWeights::random(mini(), 7).unwrap();
        let c = NetworkWeights::random(mini(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let pos = a.get("aux.pos").unwrap();
        assert!(pos.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(a.get("gen.block0.ln1.weight").unwrap().data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rejects_unknown_and_misshapen() {
        let w = NetworkWeights::zeros(mini()).unwrap();
        let mut t = w.tensors.clone();
        t.insert("gen.extra".into(), Tensor::zeros(vec![1]));
        assert!(matches!(
            NetworkWeights::from_tensors(mini(), None, t),
            Err(Error::UnknownTensor(_))
        ));
        let mut t = w.tensors.clone();
        t.insert("disc.h_const".into(), Tensor::zeros(vec![7]));
        assert!(matches!(
            NetworkWeights::from_tensors(mini(), None, t),
            Err(Error::TensorShape { .. })
        ));
        let mut t = w.tensors.clone();
        t.get_mut("aux.pos").unwrap().data[0] = f32::NAN;
        assert!(matches!(
            NetworkWeights::from_tensors(mini(), None, t),
            Err(Error::NonFinite(_))
        ));
    }
}
