//! Fréchet distance between Gaussian fits of two feature sets.
//!
//! The feature extractor is external; this module consumes one feature vector
//! per layout.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues in `[-EIGEN_TOLERANCE, 0)` are treated as zero; anything below
/// is rejected as a non-PSD matrix.
pub const EIGEN_TOLERANCE: f64 = 1e-6;

/// One feature row per layout. At least two rows, all finite, equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FeatureFile", into = "FeatureFile")]
pub struct FeatureSet {
    rows: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct FeatureFile {
    features: Vec<Vec<f64>>,
}

impl TryFrom<FeatureFile> for FeatureSet {
    type Error = Error;

    fn try_from(f: FeatureFile) -> Result<Self> {
        FeatureSet::new(f.features)
    }
}

impl From<FeatureSet> for FeatureFile {
    fn from(f: FeatureSet) -> Self {
        FeatureFile { features: f.rows }
    }
}

impl FeatureSet {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Validation(format!(
                "feature set needs at least 2 rows, got {}",
                rows.len()
            )));
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::Validation("feature dimension is 0".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::SizeMismatch {
                    what: "feature row length",
                    left: r.len(),
                    right: d,
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("feature row {i}")));
            }
        }
        Ok(FeatureSet { rows })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Sample mean and unbiased covariance.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.len();
        let d = self.dim();
        let mut mean = DVector::zeros(d);
        for r in &self.rows {
            for (k, v) in r.iter().enumerate() {
                mean[k] += v;
            }
        }
        mean /= m as f64;
        let mut cov = DMatrix::zeros(d, d);
        for r in &self.rows {
            let c = DVector::from_iterator(d, r.iter().zip(mean.iter()).map(|(v, mu)| v - mu));
            cov += &c * c.transpose();
        }
        cov /= (m - 1) as f64;
        (mean, cov)
    }
}

fn checked_eigen(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let sym = (&m + m.transpose()) * 0.5;
    let mut eig = sym.symmetric_eigen();
    for v in eig.eigenvalues.iter_mut() {
        if *v < -EIGEN_TOLERANCE {
            return Err(Error::NotPositiveSemidefinite(*v));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(eig)
}

fn psd_sqrt(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = checked_eigen(m)?;
    let roots = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * roots * eig.eigenvectors.transpose())
}

/// `‖μ₁ − μ₂‖² + Tr(Σ₁ + Σ₂ − 2 (Σ₁ Σ₂)^{1/2})`.
///
/// `Tr((Σ₁Σ₂)^{1/2})` is evaluated as the sum of square-rooted eigenvalues of
/// the symmetric product `Σ₁^{1/2} Σ₂ Σ₁^{1/2}`, which shares its spectrum.
pub fn fid(real: &FeatureSet, generated: &FeatureSet) -> Result<f64> {
    if real.dim() != generated.dim() {
        return Err(Error::SizeMismatch {
            what: "feature dimension",
            left: real.dim(),
            right: generated.dim(),
        });
    }
    let (mu1, s1) = real.moments();
    let (mu2, s2) = generated.moments();
    fid_from_moments(&mu1, &s1, &mu2, &s2)
}

pub fn fid_from_moments(
    mu1: &DVector<f64>,
    s1: &DMatrix<f64>,
    mu2: &DVector<f64>,
    s2: &DMatrix<f64>,
) -> Result<f64> {
    let diff = mu1 - mu2;
    let mean_term = diff.dot(&diff);
    let s1_half = psd_sqrt(s1.clone())?;
    let product = &s1_half * s2 * &s1_half;
    let eig = checked_eigen(product)?;
    let cross: f64 = eig.eigenvalues.iter().map(|v| v.sqrt()).sum();
    let value = mean_term + s1.trace() + s2.trace() - 2.0 * cross;
    if !value.is_finite() {
        return Err(Error::NonFinite("fid".into()));
    }
    if value < -EIGEN_TOLERANCE {
        return Err(Error::NotPositiveSemidefinite(value));
    }
    Ok(value.max(0.0))
}
