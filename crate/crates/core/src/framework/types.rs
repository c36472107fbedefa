use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationWeights {
    /// Fixed α, used only when the parameter rule is bypassed.
    pub alpha: f64,
    pub alpha0: f64,
    pub c0: f64,
}

impl RegularizationWeights {
    pub fn new(alpha: f64, alpha0: f64, c0: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("alpha0", alpha0), ("c0", c0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { alpha, alpha0, c0 })
    }

    /// Rule constants only; `alpha` is set to `alpha0`.
    pub fn rule(alpha0: f64, c0: f64) -> Result<Self> {
        Self::new(alpha0, alpha0, c0)
    }
}

/// Per-parameter box. A single entry broadcasts to every parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    pub fn uniform(lower: f64, upper: f64) -> Self {
        Self { lower: vec![lower], upper: vec![upper] }
    }

    pub fn unbounded() -> Self {
        Self::uniform(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn lower_at(&self, k: usize) -> f64 {
        if self.lower.len() == 1 { self.lower[0] } else { self.lower[k] }
    }

    pub fn upper_at(&self, k: usize) -> f64 {
        if self.upper.len() == 1 { self.upper[0] } else { self.upper[k] }
    }

    fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(Error::InvalidArgument("box bounds must have equal, nonzero length".into()));
        }
        for (k, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo < hi) {
                return Err(Error::InvalidArgument(format!("box bound {k}: lower {lo} is not below upper {hi}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleSetSpec {
    pub tau: f64,
    pub rho: f64,
    #[serde(rename = "box")]
    pub bounds: BoxBounds,
}

impl AdmissibleSetSpec {
    pub fn new(tau: f64, rho: f64, bounds: BoxBounds) -> Result<Self> {
        let s = Self { tau, rho, bounds };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 1.0) || !self.tau.is_finite() {
            return Err(Error::InvalidArgument(format!("tau must be > 1, got {}", self.tau)));
        }
        if !(self.rho >= 0.0) {
            return Err(Error::InvalidArgument(format!("rho must be >= 0, got {}", self.rho)));
        }
        self.bounds.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    Fixed,
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySchedule {
    pub initial_weight: f64,
    pub growth: f64,
    pub max_stages: usize,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        Self { initial_weight: 1.0, growth: 10.0, max_stages: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Outer iterations per penalty stage.
    pub max_iterations: usize,
    pub step_rule: StepRule,
    pub initial_step: f64,
    pub gradient_tolerance: f64,
    pub penalty: PenaltySchedule,
    /// L-BFGS memory for the state block.
    pub lbfgs_memory: usize,
    /// State-block steps per outer iteration.
    pub state_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            step_rule: StepRule::Backtracking,
            initial_step: 1.0,
            gradient_tolerance: 1e-8,
            penalty: PenaltySchedule::default(),
            lbfgs_memory: 10,
            state_steps: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.penalty.growth > 1.0) {
            return Err(Error::InvalidArgument(format!("penalty growth must be > 1, got {}", self.penalty.growth)));
        }
        if !(self.penalty.initial_weight > 0.0) {
            return Err(Error::InvalidArgument("initial penalty weight must be positive".into()));
        }
        if !(self.gradient_tolerance > 0.0) || !(self.initial_step > 0.0) {
            return Err(Error::InvalidArgument("tolerances and initial step must be positive".into()));
        }
        if self.max_iterations == 0 || self.penalty.max_stages == 0 || self.state_steps == 0 {
            return Err(Error::InvalidArgument("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    /// Parameter part x.
    pub params: Vec<f64>,
    /// Kernel part û of the state.
    pub state: Vec<f64>,
    /// Q_E + α·R at the returned point.
    pub final_cost: f64,
    pub misfit: f64,
    pub regularizer: f64,
    /// Penalized cost after every accepted outer iteration.
    pub cost_trace: Vec<f64>,
    /// Index into `cost_trace` where each penalty stage starts.
    pub stage_starts: Vec<usize>,
    /// ‖C(û)‖∞ (or the full-form discrepancy).
    pub discrepancy_value: f64,
    /// R̃ at the returned point.
    pub constraint_value: f64,
    pub constraint_satisfied: bool,
    pub b_norm: f64,
    pub iterations: usize,
    pub feasibility_factor: f64,
    pub diagnostic: String,
}
