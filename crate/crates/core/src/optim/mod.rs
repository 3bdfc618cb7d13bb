//! Constrained latent-code optimization.
//!
//! [`clg_lo_solve`] minimizes the clamped discriminator objective over the
//! latent codes subject to constraint costs `h_n(Z) = 0`, using the
//! augmented Lagrangian
//!
//! ```text
//! L_A(Z; λ, μ) = f'(Z) + Σ λ_n h_n(Z) + (μ/2) Σ h_n(Z)²
//! ```
//!
//! with multiplier updates `λ ← λ + μ h` and `μ ← α μ` after every inner
//! solve. The outer loop itself is available for arbitrary problems through
//! [`augmented_lagrangian_solve`].

mod adam;
mod cmaes;
mod solve;

use serde::{Deserialize, Serialize};

pub use adam::{adam_minimize, central_difference, AdamOptions, GradientOracle, FD_STEP};
pub use cmaes::{cma_es_minimize, default_population, CmaEsOptions};
pub use solve::{
    clamped_objective, clg_lo_solve, clg_lo_solve_with, FinalState, InitialState,
    OuterIteration, SolveReport,
};

use crate::error::{Error, Result};

/// Best point found by an inner optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub iterations: usize,
}

impl Minimum {
    fn new(x: Vec<f64>, f: f64, evaluations: usize, iterations: usize) -> Self {
        Minimum {
            x,
            f,
            evaluations,
            iterations,
        }
    }
}

/// CMA-ES settings as they appear in solve options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmaEsSettings {
    pub sigma0: f64,
    pub iters: usize,
    /// `None` selects `4 + ⌊3 ln n⌋`.
    pub population: Option<usize>,
}

impl Default for CmaEsSettings {
    fn default() -> Self {
        CmaEsSettings {
            sigma0: 0.25,
            iters: 200,
            population: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum InnerOptimizer {
    CmaEs(CmaEsSettings),
    Adam(AdamOptions),
}

impl Default for InnerOptimizer {
    fn default() -> Self {
        InnerOptimizer::CmaEs(CmaEsSettings::default())
    }
}

impl InnerOptimizer {
    /// Minimizes `objective` from `x0`. `lower_bound` is a value the
    /// objective can never go below; reaching it ends the search early.
    pub fn minimize<F>(
        &self,
        objective: F,
        x0: &[f64],
        seed: u64,
        lower_bound: Option<f64>,
    ) -> Result<Minimum>
    where
        F: FnMut(&[f64]) -> Result<f64>,
    {
        match self {
            InnerOptimizer::CmaEs(s) => cma_es_minimize(
                objective,
                x0,
                &CmaEsOptions {
                    sigma0: s.sigma0,
                    iters: s.iters,
                    population: s.population,
                    seed,
                    f_target: lower_bound,
                },
            ),
            InnerOptimizer::Adam(a) => adam_minimize(objective, None, x0, a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub alpha: f64,
    pub mu0: f64,
    /// Initial multipliers; `None` means all zero.
    pub lambda0: Option<Vec<f64>>,
    pub k_max: usize,
    pub inner: InnerOptimizer,
    pub eps_stop: f64,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            alpha: 3.0,
            mu0: 1.0,
            lambda0: None,
            k_max: 5,
            inner: InnerOptimizer::default(),
            eps_stop: 1e-4,
            seed: 0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidOptions(m.to_string()));
        if !(self.alpha > 1.0) || !self.alpha.is_finite() {
            return bad("alpha must be greater than 1");
        }
        if !(self.mu0 > 0.0) || !self.mu0.is_finite() {
            return bad("mu0 must be positive");
        }
        if self.k_max == 0 {
            return bad("k_max must be at least 1");
        }
        if !(self.eps_stop >= 0.0) || !self.eps_stop.is_finite() {
            return bad("eps_stop must be a nonnegative number");
        }
        if let Some(l) = &self.lambda0 {
            if l.iter().any(|v| !v.is_finite()) {
                return bad("lambda0 entries must be finite");
            }
        }
        match &self.inner {
            InnerOptimizer::CmaEs(s) => {
                if !(s.sigma0 > 0.0) || !s.sigma0.is_finite() {
                    return bad("inner.sigma0 must be positive");
                }
                if s.iters == 0 {
                    return bad("inner.iters must be at least 1");
                }
                if s.population.is_some_and(|p| p < 2) {
                    return bad("inner.population must be at least 2");
                }
            }
            InnerOptimizer::Adam(a) => {
                if !(a.lr > 0.0) || !a.lr.is_finite() {
                    return bad("inner.lr must be positive");
                }
                if a.iters == 0 {
                    return bad("inner.iters must be at least 1");
                }
                if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
                    return bad("inner.beta1 and inner.beta2 must lie in [0, 1)");
                }
                if !(a.eps > 0.0) {
                    return bad("inner.eps must be positive");
                }
            }
        }
        Ok(())
    }
}

fn check_arity(what: &'static str, a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::SizeMismatch {
            what,
            left: a,
            right: b,
        })
    }
}

/// `f' + Σ λ_n h_n + (μ/2) Σ h_n²`.
pub fn augmented_lagrangian(f_clamped: f64, h: &[f64], lambda: &[f64], mu: f64) -> Result<f64> {
    check_arity("constraint costs vs multipliers", h.len(), lambda.len())?;
    if !(mu > 0.0) {
        return Err(Error::InvalidOptions("mu must be positive".into()));
    }
    let linear: f64 = h.iter().zip(lambda).map(|(h, l)| l * h).sum();
    let quadratic: f64 = h.iter().map(|h| h * h).sum();
    Ok(f_clamped + linear + 0.5 * mu * quadratic)
}

/// `λ' = λ + μ h`, `μ' = α μ`.
pub fn update_duals(lambda: &[f64], mu: f64, h: &[f64], alpha: f64) -> Result<(Vec<f64>, f64)> {
    check_arity("multipliers vs constraint costs", lambda.len(), h.len())?;
    let next = lambda.iter().zip(h).map(|(l, h)| l + mu * h).collect();
    Ok((next, alpha * mu))
}

/// Result of one outer iteration of [`augmented_lagrangian_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct OuterStep {
    pub k: usize,
    pub x: Vec<f64>,
    pub f: f64,
    pub h: Vec<f64>,
    pub lagrangian: f64,
    /// Multipliers and penalty the inner solve ran with.
    pub lambda: Vec<f64>,
    pub mu: f64,
}

/// Outer augmented-Lagrangian loop for a problem returning `(f(x), h(x))`.
///
/// Runs until `max h ≤ eps_stop` or `k_max` inner solves have completed.
/// `lower_bound` is forwarded to the inner optimizer as an early-stop target
/// and should be set only when `f` is known to be bounded below by it.
/// `on_step` sees every completed iteration and may abort by returning an
/// error.
pub fn augmented_lagrangian_solve<P, S>(
    mut problem: P,
    x0: &[f64],
    options: &SolveOptions,
    lower_bound: Option<f64>,
    mut on_step: S,
) -> Result<Vec<OuterStep>>
where
    P: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    S: FnMut(&OuterStep) -> Result<()>,
{
    options.validate()?;
    let m = problem(x0)?.1.len();
    let mut lambda = match &options.lambda0 {
        Some(l) => {
            check_arity("lambda0 vs constraint count", l.len(), m)?;
            l.clone()
        }
        None => vec![0.0; m],
    };
    let mut mu = options.mu0;
    let mut x = x0.to_vec();
    let mut steps = Vec::new();
    for k in 0..options.k_max {
        let (lam, mu_k) = (lambda.clone(), mu);
        let objective = |p: &[f64]| -> Result<f64> {
            let (f, h) = problem(p)?;
            augmented_lagrangian(f, &h, &lam, mu_k)
        };
        let best = options
            .inner
            .minimize(objective, &x, inner_seed(options.seed, k), lower_bound)?;
        let (f, h) = problem(&best.x)?;
        let step = OuterStep {
            k,
            lagrangian: augmented_lagrangian(f, &h, &lam, mu_k)?,
            x: best.x,
            f,
            h,
            lambda: lam,
            mu: mu_k,
        };
        on_step(&step)?;
        let (next, next_mu) = update_duals(&step.lambda, step.mu, &step.h, options.alpha)?;
        lambda = next;
        mu = next_mu;
        x = step.x.clone();
        let done = max_cost(&step.h) <= options.eps_stop;
        steps.push(step);
        if done {
            break;
        }
    }
    Ok(steps)
}

/// Largest entry, 0 for an empty vector.
pub fn max_cost(h: &[f64]) -> f64 {
    h.iter().copied().fold(0.0, f64::max)
}

/// Independent stream for the `k`-th inner solve.
fn inner_seed(seed: u64, k: usize) -> u64 {
    let mut z = seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lagrangian_examples() {
        assert_eq!(augmented_lagrangian(0.7, &[0.0, 0.0], &[1.0, 2.0], 5.0).unwrap(), 0.7);
        let v = augmented_lagrangian(0.2, &[0.1], &[0.5], 2.0).unwrap();
        assert!((v - 0.26).abs() < 1e-15, "{v}");
        assert_eq!(augmented_lagrangian(0.0, &[0.5], &[0.0], 1.0).unwrap(), 0.125);
        assert!(augmented_lagrangian(0.0, &[0.5], &[], 1.0).is_err());
    }

    #[test]
    fn dual_examples() {
        let (l, mu) = update_duals(&[0.0], 1.0, &[0.5], 3.0).unwrap();
        assert_eq!((l, mu), (vec![0.5], 3.0));
        let (l, mu) = update_duals(&[0.25, 1.0], 7.0, &[0.0, 0.0], 3.0).unwrap();
        assert_eq!((l, mu), (vec![0.25, 1.0], 21.0));
        assert!(update_duals(&[0.0], 1.0, &[0.5, 0.1], 3.0).is_err());
    }

    #[test]
    fn options_serde_defaults() {
        let o: SolveOptions = serde_json::from_str("{}").unwrap();
        assert_eq!(o, SolveOptions::default());
        let o: SolveOptions =
            serde_json::from_str(r#"{"seed": 4, "inner": {"method": "adam", "lr": 0.05}}"#).unwrap();
        assert_eq!(o.seed, 4);
        match o.inner {
            InnerOptimizer::Adam(a) => assert_eq!((a.lr, a.iters), (0.05, 200)),
            _ => panic!("expected adam"),
        }
        let text = serde_json::to_string(&SolveOptions::default()).unwrap();
        assert_eq!(serde_json::from_str::<SolveOptions>(&text).unwrap(), SolveOptions::default());
    }

    #[test]
    fn options_validation() {
        let base = SolveOptions::default();
        assert!(base.validate().is_ok());
        for bad in [
            SolveOptions { alpha: 1.0, ..base.clone() },
            SolveOptions { mu0: 0.0, ..base.clone() },
            SolveOptions { k_max: 0, ..base.clone() },
            SolveOptions {
                inner: InnerOptimizer::CmaEs(CmaEsSettings { sigma0: -1.0, ..Default::default() }),
                ..base.clone()
            },
            SolveOptions {
                inner: InnerOptimizer::Adam(AdamOptions { lr: 0.0, ..Default::default() }),
                ..base.clone()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn one_dimensional_oracle() {
        let steps = augmented_lagrangian_solve(
            |x| Ok((x[0] * x[0], vec![(1.0 - x[0]).max(0.0)])),
            &[0.0],
            &SolveOptions::default(),
            None,
            |_| Ok(()),
        )
        .unwrap();
        let last = steps.last().unwrap();
        assert!((last.x[0] - 1.0).abs() < 1e-3, "{steps:?}");
        for (k, s) in steps.iter().enumerate() {
            assert_eq!(s.mu, 3f64.powi(k as i32));
        }
    }
}
