//! (μ/μ_w, λ)-CMA-ES with cumulative step-size adaptation and rank-one plus
//! rank-μ covariance updates, following Hansen's tutorial parameterization.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::optim::Minimum;

#[derive(Debug, Clone, PartialEq)]
pub struct CmaEsOptions {
    pub sigma0: f64,
    /// Number of generations.
    pub iters: usize,
    /// Offspring per generation; `None` means `4 + ⌊3 ln n⌋`.
    pub population: Option<usize>,
    pub seed: u64,
    /// Stop as soon as a value at or below this is seen.
    pub f_target: Option<f64>,
}

impl Default for CmaEsOptions {
    fn default() -> Self {
        CmaEsOptions {
            sigma0: 0.25,
            iters: 200,
            population: None,
            seed: 0,
            f_target: None,
        }
    }
}

pub fn default_population(n: usize) -> usize {
    4 + (3.0 * (n.max(1) as f64).ln()).floor() as usize
}

struct Evaluator<'a, F> {
    objective: &'a mut F,
    best_x: Vec<f64>,
    best_f: f64,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> Result<f64>> Evaluator<'_, F> {
    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        let f = (self.objective)(x)?;
        self.evaluations += 1;
        if !f.is_finite() {
            return Err(Error::NonFiniteObjective {
                value: f,
                point: x.to_vec(),
            });
        }
        if f < self.best_f {
            self.best_f = f;
            self.best_x = x.to_vec();
        }
        Ok(f)
    }
}

/// Minimizes `objective` from `x0`. The starting point is evaluated too, and
/// the best point ever evaluated is returned.
pub fn cma_es_minimize<F>(mut objective: F, x0: &[f64], opts: &CmaEsOptions) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    if n == 0 {
        return Err(Error::InvalidOptions("CMA-ES needs at least one dimension".into()));
    }
    if !(opts.sigma0 > 0.0) || !opts.sigma0.is_finite() {
        return Err(Error::InvalidOptions("sigma0 must be positive".into()));
    }
    if opts.iters == 0 {
        return Err(Error::InvalidOptions("iters must be at least 1".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("CMA-ES start point".into()));
    }
    let lambda = opts.population.unwrap_or_else(|| default_population(n)).max(2);
    let mu = lambda / 2;

    let raw: Vec<f64> = (0..mu)
        .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
        .collect();
    let sum: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
    let mueff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let nf = n as f64;
    let cs = (mueff + 2.0) / (nf + mueff + 5.0);
    let ds = 1.0 + 2.0 * (((mueff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
    let cc = (4.0 + mueff / nf) / (nf + 4.0 + 2.0 * mueff / nf);
    let c1 = 2.0 / ((nf + 1.3).powi(2) + mueff);
    let cmu = (1.0 - c1).min(2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nf + 2.0).powi(2) + mueff));
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut ev = Evaluator {
        objective: &mut objective,
        best_x: x0.to_vec(),
        best_f: f64::INFINITY,
        evaluations: 0,
    };
    ev.eval(x0)?;

    let mut mean = DVector::from_column_slice(x0);
    let mut sigma = opts.sigma0;
    let mut cov = DMatrix::<f64>::identity(n, n);
    let mut basis = DMatrix::<f64>::identity(n, n);
    let mut scales = DVector::<f64>::from_element(n, 1.0);
    let mut ps = DVector::<f64>::zeros(n);
    let mut pc = DVector::<f64>::zeros(n);

    let reached = |f: f64| opts.f_target.is_some_and(|t| f <= t);
    let mut generations = 0;
    if reached(ev.best_f) {
        return Ok(Minimum::new(ev.best_x, ev.best_f, ev.evaluations, 0));
    }

    for g in 0..opts.iters {
        generations = g + 1;
        let bd = &basis * DMatrix::from_diagonal(&scales);
        let mut offspring: Vec<(f64, DVector<f64>, DVector<f64>)> = Vec::with_capacity(lambda);
        for _ in 0..lambda {
            let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
            let y = &bd * z;
            let x = &mean + sigma * &y;
            let f = ev.eval(x.as_slice())?;
            offspring.push((f, y, x));
        }
        if reached(ev.best_f) {
            break;
        }
        offspring.sort_by(|a, b| a.0.total_cmp(&b.0));

        let old_mean = mean.clone();
        mean = DVector::zeros(n);
        for (w, (_, _, x)) in weights.iter().zip(&offspring) {
            mean += *w * x;
        }
        let y_w = (&mean - &old_mean) / sigma;

        let inv_sqrt = &basis * DMatrix::from_diagonal(&scales.map(|d| 1.0 / d)) * basis.transpose();
        ps = (1.0 - cs) * &ps + (cs * (2.0 - cs) * mueff).sqrt() * (&inv_sqrt * &y_w);
        let ps_norm = ps.norm();
        let decay = 1.0 - (1.0 - cs).powi(2 * (g as i32 + 1));
        let hsig = ps_norm / decay.sqrt() < (1.4 + 2.0 / (nf + 1.0)) * chi_n;
        let hsig_f = if hsig { 1.0 } else { 0.0 };
        pc = (1.0 - cc) * &pc + hsig_f * (cc * (2.0 - cc) * mueff).sqrt() * &y_w;

        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (w, (_, y, _)) in weights.iter().zip(&offspring) {
            rank_mu += *w * y * y.transpose();
        }
        let keep = 1.0 - c1 - cmu + (1.0 - hsig_f) * c1 * cc * (2.0 - cc);
        cov = keep * &cov + c1 * &pc * pc.transpose() + cmu * rank_mu;
        cov = (&cov + cov.transpose()) * 0.5;

        sigma *= ((cs / ds) * (ps_norm / chi_n - 1.0)).exp();
        sigma = sigma.clamp(1e-300, 1e150);

        let eig = cov.clone().symmetric_eigen();
        basis = eig.eigenvectors;
        scales = eig.eigenvalues.map(|v| v.max(1e-300).sqrt());

        // Distribution has collapsed to a point; further generations would
        // only re-evaluate the mean.
        if sigma * scales.max() < 1e-15 * (1.0 + mean.amax()) {
            break;
        }
    }
    Ok(Minimum::new(ev.best_x, ev.best_f, ev.evaluations, generations))
}
