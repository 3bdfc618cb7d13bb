use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::layout::{Label, Layout};
use crate::net::{GeneratorHandle, LatentCodes};
use crate::optim::{augmented_lagrangian_solve, max_cost, SolveOptions};

/// One completed outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterIteration {
    /// Zero-based outer iteration index.
    pub k: usize,
    /// `-D(G(Z))` at the inner solution.
    pub f_raw: f64,
    pub f_clamped: f64,
    pub h: Vec<f64>,
    #[serde(rename = "L_A")]
    pub lagrangian: f64,
    /// Multipliers and penalty used by this iteration's inner solve.
    pub lambda: Vec<f64>,
    pub mu: f64,
    pub snapshot: Layout,
    pub z_snapshot: LatentCodes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub layout: Layout,
    pub z: LatentCodes,
    pub f_raw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalState {
    pub layout: Layout,
    pub z: LatentCodes,
    pub satisfied: bool,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub initial: InitialState,
    pub outer_history: Vec<OuterIteration>,
    #[serde(rename = "final")]
    pub final_state: FinalState,
}

/// `max(f(Z) − f(Z₀), 0)` with `f(Z) = −D(G(Z, L))`.
pub fn clamped_objective(
    handle: &GeneratorHandle,
    z: &LatentCodes,
    labels: &[Label],
    baseline: f64,
) -> Result<f64> {
    let layout = handle.generate(z, labels)?;
    Ok((-handle.discriminate(&layout)? - baseline).max(0.0))
}

/// Runs the constrained solve from `Z₀ ~ N(0, I)` drawn with `options.seed`.
pub fn clg_lo_solve(
    handle: &GeneratorHandle,
    labels: &[Label],
    constraints: &ConstraintSet,
    options: &SolveOptions,
) -> Result<SolveReport> {
    clg_lo_solve_with(handle, labels, constraints, options, None, |_| Ok(()))
}

/// Like [`clg_lo_solve`], optionally starting from a given `z0`, and calling
/// `on_iteration` after every outer iteration.
pub fn clg_lo_solve_with<S>(
    handle: &GeneratorHandle,
    labels: &[Label],
    constraints: &ConstraintSet,
    options: &SolveOptions,
    z0: Option<LatentCodes>,
    mut on_iteration: S,
) -> Result<SolveReport>
where
    S: FnMut(&OuterIteration) -> Result<()>,
{
    options.validate()?;
    constraints.validate(labels.len())?;
    let (n, d_z) = (labels.len(), handle.d_z());
    let z0 = match z0 {
        Some(z) => {
            if z.rows() != n || z.dim() != d_z {
                return Err(Error::Validation(format!(
                    "initial latent codes are {}x{}, expected {n}x{d_z}",
                    z.rows(),
                    z.dim()
                )));
            }
            z
        }
        None => LatentCodes::sample(n, d_z, options.seed),
    };
    let layout0 = handle.generate(&z0, labels)?;
    let baseline = -handle.discriminate(&layout0)?;
    let initial = InitialState {
        layout: layout0.clone(),
        z: z0.clone(),
        f_raw: baseline,
    };
    if constraints.is_empty() {
        return Ok(SolveReport {
            initial,
            outer_history: Vec::new(),
            final_state: FinalState {
                layout: layout0,
                z: z0,
                satisfied: true,
                max_violation: 0.0,
            },
        });
    }

    let decode = |x: &[f64]| -> Result<(LatentCodes, Layout, f64)> {
        let z = LatentCodes::from_flat(n, d_z, x.to_vec())?;
        let layout = handle.generate(&z, labels)?;
        let f_raw = -handle.discriminate(&layout)?;
        Ok((z, layout, f_raw))
    };
    let problem = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (_, layout, f_raw) = decode(x)?;
        Ok(((f_raw - baseline).max(0.0), constraints.eval_validated(&layout)))
    };

    let mut history: Vec<OuterIteration> = Vec::new();
    augmented_lagrangian_solve(problem, z0.as_flat(), options, Some(0.0), |step| {
        let (z, layout, f_raw) = decode(&step.x)?;
        let it = OuterIteration {
            k: step.k,
            f_raw,
            f_clamped: step.f,
            h: step.h.clone(),
            lagrangian: step.lagrangian,
            lambda: step.lambda.clone(),
            mu: step.mu,
            snapshot: layout,
            z_snapshot: z,
        };
        on_iteration(&it)?;
        history.push(it);
        Ok(())
    })?;

    let last = history.last().expect("k_max >= 1 guarantees one iteration");
    let max_violation = max_cost(&last.h);
    let final_state = FinalState {
        layout: last.snapshot.clone(),
        z: last.z_snapshot.clone(),
        satisfied: max_violation <= options.eps_stop,
        max_violation,
    };
    Ok(SolveReport {
        initial,
        outer_history: history,
        final_state,
    })
}
