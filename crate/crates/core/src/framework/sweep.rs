use super::cost::check_finite;
use super::{choose_alpha, minimize, AdmissibleSetSpec, ObservationVector, ProblemInstance, RegularizationWeights, SolverConfig};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Uniform noise on [−δ, δ] with one component set to ±δ, so the max-norm is
/// exactly δ. The problem may project the draw back into its data space.
pub fn inject_noise<P: ProblemInstance + ?Sized>(
    problem: &P,
    y: &ObservationVector,
    delta: f64,
    seed: u64,
) -> Result<ObservationVector> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("noise level must be >= 0, got {delta}")));
    }
    let n = y.len();
    let mut noise = vec![0.0; n];
    if delta > 0.0 && n > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in noise.iter_mut() {
            *v = rng.gen_range(-delta..=delta);
        }
        let k = rng.gen_range(0..n);
        noise[k] = if rng.gen_bool(0.5) { delta } else { -delta };
        problem.project_noise(&mut noise, delta);
    }
    let values = y.values().iter().zip(&noise).map(|(a, b)| a + b).collect();
    y.with_values(values, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum AlphaRule {
    /// α = choose_alpha(δ).
    Rule,
    /// Fixed α; bypasses the parameter-choice rule.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub alpha: f64,
    pub error: f64,
    pub discrepancy: f64,
    pub b_norm: f64,
    pub iterations: usize,
    pub feasible: bool,
    pub delta_sq_over_alpha: f64,
    pub gamma_over_alpha: f64,
    pub final_cost: f64,
    pub cost_trace: Vec<f64>,
    pub stage_starts: Vec<usize>,
    pub diagnostic: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<SweepRow>,
    pub b_norm_bounded: bool,
    pub error_decreased: bool,
    pub all_feasible: bool,
    pub rule_violation: bool,
    pub base_seed: u64,
}

impl ConvergenceReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["delta", "alpha", "error", "discrepancy", "b_norm", "iterations", "feasible"])?;
        for r in &self.rows {
            w.write_record([
                format!("{:e}", r.delta),
                format!("{:e}", r.alpha),
                format!("{:e}", r.error),
                format!("{:e}", r.discrepancy),
                format!("{:e}", r.b_norm),
                r.iterations.to_string(),
                r.feasible.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

pub struct SweepSetup<'a> {
    pub deltas: &'a [f64],
    pub truth: &'a [f64],
    pub weights: RegularizationWeights,
    pub alpha_rule: AlphaRule,
    pub spec: &'a AdmissibleSetSpec,
    pub config: &'a SolverConfig,
    pub base_seed: u64,
    /// Worker threads; 0 uses the rayon default.
    pub jobs: usize,
}

/// Noise sweep: for each δ perturb the exact data (seed = base_seed + index),
/// choose α, minimize and record errors. Per-δ failures are recorded and
/// the sweep continues.
pub fn run_noise_sweep<P: ProblemInstance + ?Sized>(
    problem: &P,
    y_exact: &ObservationVector,
    setup: &SweepSetup<'_>,
) -> Result<ConvergenceReport> {
    let deltas = setup.deltas;
    if deltas.is_empty() {
        return Err(Error::InvalidArgument("empty noise sweep".into()));
    }
    if deltas.iter().any(|d| !(*d > 0.0)) || deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("deltas must be positive and strictly decreasing".into()));
    }
    check_finite("exact data", y_exact.values())?;
    if setup.truth.len() != problem.param_len() {
        return Err(Error::InvalidArgument("true parameter has the wrong length".into()));
    }

    let run_one = |k: usize| -> SweepRow {
        let delta = deltas[k];
        let alpha = match setup.alpha_rule {
            AlphaRule::Rule => choose_alpha(delta, &setup.weights),
            AlphaRule::Fixed(a) => Ok(a),
        };
        let outcome = alpha.and_then(|alpha| {
            let y = inject_noise(problem, y_exact, delta, setup.base_seed.wrapping_add(k as u64))?;
            minimize(problem, &y, alpha, setup.spec, setup.config).map(|r| (alpha, r))
        });
        match outcome {
            Ok((alpha, r)) => SweepRow {
                delta,
                alpha,
                error: problem.parameter_error(&r.params, &r.state, setup.truth),
                discrepancy: r.discrepancy_value,
                b_norm: r.b_norm,
                iterations: r.iterations,
                feasible: r.constraint_satisfied,
                delta_sq_over_alpha: delta * delta / alpha,
                gamma_over_alpha: (1.0 + delta) * delta / alpha,
                final_cost: r.final_cost,
                cost_trace: r.cost_trace,
                stage_starts: r.stage_starts,
                diagnostic: r.diagnostic,
            },
            Err(e) => SweepRow {
                delta,
                alpha: f64::NAN,
                error: f64::NAN,
                discrepancy: f64::NAN,
                b_norm: f64::NAN,
                iterations: 0,
                feasible: false,
                delta_sq_over_alpha: f64::NAN,
                gamma_over_alpha: f64::NAN,
                final_cost: f64::NAN,
                cost_trace: Vec::new(),
                stage_starts: Vec::new(),
                diagnostic: format!("failed: {e}"),
            },
        }
    };

    let rows: Vec<SweepRow> = if setup.jobs == 1 {
        (0..deltas.len()).map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(setup.jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| (0..deltas.len()).into_par_iter().map(run_one).collect())
    };

    let first = &rows[0];
    let last = &rows[rows.len() - 1];
    let b_norm_bounded = rows.iter().all(|r| r.b_norm <= 2.0 * first.b_norm);
    let error_decreased = last.error < first.error;
    let all_feasible = rows.iter().all(|r| r.feasible);
    let rule_violation = match setup.alpha_rule {
        AlphaRule::Rule => rows.iter().any(|r| r.delta_sq_over_alpha > setup.weights.c0 * (1.0 + 1e-12)),
        AlphaRule::Fixed(_) => true,
    };
    Ok(ConvergenceReport {
        rows,
        b_norm_bounded,
        error_decreased,
        all_feasible,
        rule_violation,
        base_seed: setup.base_seed,
    })
}
