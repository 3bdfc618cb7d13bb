//! Model descriptors.
//!
//! `analytic:<seed>[:<vocabulary>]` selects the seeded analytic generator
//! with the toy realism discriminator; the vocabulary is one of `publaynet`
//! (default), `rico` or `magazine`. Anything else names a weight manifest.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use latentlayout::layout::LabelVocabulary;
use latentlayout::net::{GeneratorHandle, NetworkWeights, DEFAULT_D_Z};
use serde::Serialize;

use crate::error::{AppError, Result};

pub const VOCABULARIES: [&str; 3] = ["publaynet", "rico", "magazine"];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ModelRef {
    Analytic { seed: u64, vocabulary: String },
    Weights(PathBuf),
}

fn preset(name: &str) -> Option<LabelVocabulary> {
    match name {
        "publaynet" => Some(LabelVocabulary::publaynet()),
        "rico" => Some(LabelVocabulary::rico()),
        "magazine" => Some(LabelVocabulary::magazine()),
        _ => None,
    }
}

impl ModelRef {
    /// Parses an analytic descriptor, or returns `None` when `text` is not one.
    pub fn parse_analytic(text: &str) -> Option<Result<Self>> {
        let rest = text.strip_prefix("analytic")?;
        let bad = || AppError::field("model", format!("malformed analytic descriptor `{text}`"));
        let rest = match rest.strip_prefix(':') {
            Some(r) => r,
            None if rest.is_empty() => "0",
            None => return None,
        };
        let mut parts = rest.splitn(2, ':');
        let seed = match parts.next().unwrap_or("0").parse::<u64>() {
            Ok(s) => s,
            Err(_) => return Some(Err(bad())),
        };
        let vocabulary = parts.next().unwrap_or("publaynet").to_string();
        if preset(&vocabulary).is_none() {
            return Some(Err(AppError::field(
                "model",
                format!(
                    "unknown vocabulary `{vocabulary}`; expected one of {}",
                    VOCABULARIES.join(", ")
                ),
            )));
        }
        Some(Ok(ModelRef::Analytic { seed, vocabulary }))
    }

    /// CLI form: an analytic descriptor or a path to a weight manifest.
    pub fn parse_cli(text: &str) -> Result<Self> {
        ModelRef::parse_analytic(text).unwrap_or_else(|| Ok(ModelRef::Weights(PathBuf::from(text))))
    }

    pub fn descriptor(&self) -> String {
        match self {
            ModelRef::Analytic { seed, vocabulary } => format!("analytic:{seed}:{vocabulary}"),
            ModelRef::Weights(p) => p.display().to_string(),
        }
    }

    pub fn load(&self) -> Result<GeneratorHandle> {
        match self {
            ModelRef::Analytic { seed, vocabulary } => {
                let vocab = preset(vocabulary).expect("validated at parse time");
                Ok(GeneratorHandle::analytic(*seed, vocab, DEFAULT_D_Z)?)
            }
            ModelRef::Weights(path) => {
                let weights = NetworkWeights::load(path)?;
                Ok(GeneratorHandle::network(&weights)?)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelInfo {
    pub id: String,
    pub kind: &'static str,
    pub vocabulary: Vec<String>,
    pub d_z: usize,
}

/// Models reachable from a service workspace: analytic descriptors plus
/// manifests stored under `<workspace>/models/<name>.json`, addressed by
/// `<name>`. Loaded handles are cached and shared between requests.
#[derive(Debug)]
pub struct ModelRegistry {
    dir: PathBuf,
    cache: Mutex<HashMap<ModelRef, Arc<GeneratorHandle>>>,
}

fn is_plain_name(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !s.starts_with('.')
}

impl ModelRegistry {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ModelRegistry {
            dir: dir.into(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn resolve(&self, id: &str) -> Result<ModelRef> {
        if let Some(r) = ModelRef::parse_analytic(id) {
            return r;
        }
        let path = self.dir.join(format!("{id}.json"));
        if is_plain_name(id) && path.is_file() {
            Ok(ModelRef::Weights(path))
        } else {
            Err(AppError::NotFound(format!("model `{id}`")))
        }
    }

    pub fn get(&self, id: &str) -> Result<(ModelRef, Arc<GeneratorHandle>)> {
        let r = self.resolve(id)?;
        if let Some(h) = self.cache.lock().expect("model cache poisoned").get(&r) {
            return Ok((r, h.clone()));
        }
        let handle = Arc::new(r.load()?);
        self.cache
            .lock()
            .expect("model cache poisoned")
            .insert(r.clone(), handle.clone());
        Ok((r, handle))
    }

    pub fn list(&self) -> Vec<ModelInfo> {
        let mut out: Vec<ModelInfo> = VOCABULARIES
            .iter()
            .map(|v| {
                let vocab = preset(v).expect("known preset");
                ModelInfo {
                    id: format!("analytic:0:{v}"),
                    kind: "analytic",
                    vocabulary: vocab.names().to_vec(),
                    d_z: DEFAULT_D_Z,
                }
            })
            .collect();
        let mut files: Vec<PathBuf> = std::fs::read_dir(&self.dir)
            .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).collect())
            .unwrap_or_default();
        files.sort();
        for path in files {
            let Some(name) = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_suffix(".json"))
            else {
                continue;
            };
            if let Ok((_, h)) = self.get(name) {
                out.push(ModelInfo {
                    id: name.to_string(),
                    kind: "network",
                    vocabulary: h.vocab().names().to_vec(),
                    d_z: h.d_z(),
                });
            }
        }
        out
    }
}
