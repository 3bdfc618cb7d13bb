use std::collections::BTreeMap;

use latentlayout::Error as CoreError;

pub type Result<T, E = AppError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] CoreError),
    /// Request fields that failed validation, keyed by field path.
    #[error("invalid request: {}", summarize(.0))]
    Fields(BTreeMap<String, String>),
    #[error("{0} not found")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

fn summarize(fields: &BTreeMap<String, String>) -> String {
    fields
        .iter()
        .map(|(k, v)| format!("{k}: {v}"))
        .collect::<Vec<_>>()
        .join("; ")
}

impl AppError {
    pub fn field(name: impl Into<String>, message: impl ToString) -> Self {
        AppError::Fields(BTreeMap::from([(name.into(), message.to_string())]))
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        AppError::Io {
            context: context.into(),
            source,
        }
    }

    /// Whether the failure stems from user input rather than the environment.
    pub fn is_client_error(&self) -> bool {
        match self {
            AppError::Core(e) => !matches!(e, CoreError::Io { .. }),
            AppError::Fields(_) | AppError::NotFound(_) | AppError::Conflict(_) => true,
            AppError::Io { .. } => false,
        }
    }
}

/// Accumulates per-field validation failures.
#[derive(Debug, Default)]
pub struct FieldErrors(BTreeMap<String, String>);

impl FieldErrors {
    pub fn add(&mut self, field: impl Into<String>, message: impl ToString) {
        self.0.entry(field.into()).or_insert_with(|| message.to_string());
    }

    pub fn take<T, E: ToString>(&mut self, field: &str, r: std::result::Result<T, E>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.add(field, e);
                None
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn finish(self) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(AppError::Fields(self.0))
        }
    }
}
