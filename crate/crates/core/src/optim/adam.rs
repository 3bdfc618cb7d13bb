//! Adam with an optional gradient oracle; central finite differences
//! otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::Minimum;

pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamOptions {
    pub lr: f64,
    pub iters: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamOptions {
    fn default() -> Self {
        AdamOptions {
            lr: 0.01,
            iters: 200,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Central differences with step `step` in each coordinate.
pub fn central_difference<F>(objective: &mut F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64> + ?Sized,
{
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = objective(&probe)?;
        probe[i] = x[i] - step;
        let down = objective(&probe)?;
        probe[i] = x[i];
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

pub type GradientOracle<'a> = &'a mut dyn FnMut(&[f64]) -> Result<Vec<f64>>;

/// Runs `iters` Adam steps from `x0`, returning the best iterate evaluated.
pub fn adam_minimize<F>(
    mut objective: F,
    mut gradient: Option<GradientOracle<'_>>,
    x0: &[f64],
    opts: &AdamOptions,
) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(opts.lr > 0.0) || opts.iters == 0 {
        return Err(Error::InvalidOptions(
            "Adam needs lr > 0 and at least one iteration".into(),
        ));
    }
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut best_x = x.clone();
    let mut best_f = f64::INFINITY;
    let mut evaluations = 0;

    let check = |f: f64, x: &[f64]| -> Result<f64> {
        if f.is_finite() {
            Ok(f)
        } else {
            Err(Error::NonFiniteObjective {
                value: f,
                point: x.to_vec(),
            })
        }
    };

    for t in 1..=opts.iters {
        let f = check(objective(&x)?, &x)?;
        evaluations += 1;
        if f < best_f {
            best_f = f;
            best_x = x.clone();
        }
        let g = match gradient.as_mut() {
            Some(oracle) => oracle(&x)?,
            None => {
                evaluations += 2 * n;
                central_difference(&mut objective, &x, FD_STEP)?
            }
        };
        if g.len() != n {
            return Err(Error::SizeMismatch {
                what: "gradient length",
                left: g.len(),
                right: n,
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient at {x:?}")));
        }
        let bc1 = 1.0 - opts.beta1.powi(t as i32);
        let bc2 = 1.0 - opts.beta2.powi(t as i32);
        for i in 0..n {
            m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * g[i];
            v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            x[i] -= opts.lr * m_hat / (v_hat.sqrt() + opts.eps);
        }
    }
    let f = check(objective(&x)?, &x)?;
    evaluations += 1;
    if f < best_f {
        best_f = f;
        best_x = x;
    }
    Ok(Minimum::new(best_x, best_f, evaluations, opts.iters))
}
