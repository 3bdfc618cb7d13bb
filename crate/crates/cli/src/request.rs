//! Request documents shared by the CLI and the HTTP service.

use latentlayout::constraints::ConstraintSet;
use latentlayout::layout::{Label, LabelVocabulary};
use latentlayout::net::{GeneratorHandle, LatentCodes};
use latentlayout::optim::SolveOptions;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{AppError, FieldErrors, Result};

/// A label given by vocabulary index or by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelToken {
    Index(usize),
    Name(String),
}

pub fn resolve_labels(tokens: &[LabelToken], vocab: &LabelVocabulary, errors: &mut FieldErrors) -> Vec<Label> {
    if tokens.is_empty() {
        errors.add("labels", "at least one label is required");
    }
    tokens
        .iter()
        .enumerate()
        .filter_map(|(i, t)| {
            let r = match t {
                LabelToken::Index(l) => vocab.check(*l).map(|_| *l),
                LabelToken::Name(n) => vocab.resolve(n),
            };
            errors.take(&format!("labels[{i}]"), r)
        })
        .collect()
}

/// Comma-separated labels as given on the command line.
pub fn parse_label_list(text: &str) -> Vec<LabelToken> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s.parse::<usize>() {
            Ok(i) => LabelToken::Index(i),
            Err(_) => LabelToken::Name(s.to_string()),
        })
        .collect()
}

/// A fully resolved optimize request; rerunning it reproduces its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRequest {
    pub model: String,
    pub labels: Vec<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<LatentCodes>,
    pub constraints: ConstraintSet,
    pub options: SolveOptions,
}

/// Checks everything that depends on the model: label ids, latent shape,
/// constraint indices and options.
pub fn validate_solve(
    handle: &GeneratorHandle,
    labels: &[Label],
    z: Option<&LatentCodes>,
    constraints: &ConstraintSet,
    options: &SolveOptions,
    errors: &mut FieldErrors,
) {
    for (i, &l) in labels.iter().enumerate() {
        errors.take(&format!("labels[{i}]"), handle.vocab().check(l));
    }
    if labels.len() > latentlayout::layout::DEFAULT_MAX_ELEMENTS {
        errors.add(
            "labels",
            format!(
                "{} labels exceed the maximum of {}",
                labels.len(),
                latentlayout::layout::DEFAULT_MAX_ELEMENTS
            ),
        );
    }
    if let Some(z) = z {
        if z.rows() != labels.len() || z.dim() != handle.d_z() {
            errors.add(
                "z",
                format!(
                    "latent codes are {}x{}, expected {}x{}",
                    z.rows(),
                    z.dim(),
                    labels.len(),
                    handle.d_z()
                ),
            );
        }
    }
    for (i, c) in constraints.constraints.iter().enumerate() {
        errors.take(&format!("constraints[{i}]"), c.validate(labels.len()));
    }
    errors.take("options", options.validate());
    if let Some(l) = &options.lambda0 {
        if l.len() != constraints.len() {
            errors.add(
                "options.lambda0",
                format!("{} multipliers for {} constraints", l.len(), constraints.len()),
            );
        }
    }
}

/// Splits a JSON object into typed fields, recording failures per field.
pub struct Fields {
    map: Map<String, Value>,
}

impl Fields {
    pub fn new(body: &[u8], allowed: &[&str]) -> Result<Self> {
        let value: Value = serde_json::from_slice(body)
            .map_err(|e| AppError::field("body", format!("invalid JSON: {e}")))?;
        let Value::Object(map) = value else {
            return Err(AppError::field("body", "expected a JSON object"));
        };
        let mut errors = FieldErrors::default();
        for k in map.keys() {
            if !allowed.contains(&k.as_str()) {
                errors.add(k.clone(), "unknown field");
            }
        }
        errors.finish()?;
        Ok(Fields { map })
    }

    pub fn required<T: DeserializeOwned>(&mut self, name: &str, errors: &mut FieldErrors) -> Option<T> {
        match self.map.remove(name) {
            None | Some(Value::Null) => {
                errors.add(name, "missing field");
                None
            }
            Some(v) => errors.take(name, serde_json::from_value(v)),
        }
    }

    pub fn optional<T: DeserializeOwned>(&mut self, name: &str, errors: &mut FieldErrors) -> Option<T> {
        match self.map.remove(name) {
            None | Some(Value::Null) => None,
            Some(v) => errors.take(name, serde_json::from_value(v)),
        }
    }
}
