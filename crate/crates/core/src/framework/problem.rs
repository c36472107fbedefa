use super::{AdmissibleSetSpec, BlockLabel};
use crate::error::Result;

/// Contract shared by every physics module.
///
/// `x` is the parameter vector and states are flat vectors. Methods named
/// `*_total` take the full state `û + Cʳⁱ(y)`; the framework adds the lift.
/// All methods are read-only so instances can be shared across threads.
pub trait ProblemInstance: Sync {
    fn param_len(&self) -> usize;
    fn state_len(&self) -> usize;
    /// Block structure of data vectors.
    fn data_blocks(&self) -> Vec<BlockLabel>;

    fn data_len(&self) -> usize {
        self.data_blocks().iter().map(|b| b.len).sum()
    }

    /// Right inverse Cʳⁱ: a state with `observe(lift(y)) = y` on the image of C.
    fn lift(&self, y: &[f64]) -> Result<Vec<f64>>;

    /// Observation operator C.
    fn observe(&self, state: &[f64]) -> Vec<f64>;

    /// Accumulates `scale * Cᵀ w` into `gu`.
    fn observe_adjoint(&self, w: &[f64], scale: f64, gu: &mut [f64]);

    /// Cʳⁱᵀ g for a state-space vector g. When provided (and C is onto),
    /// the solver keeps C(û) in the discrepancy ball exactly by writing
    /// û = v − Cʳⁱ(C v) + Cʳⁱ(d) with ‖d‖∞ ≤ τδ.
    fn lift_adjoint(&self, _g: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Projection onto {d in the image of C : ‖d‖∞ ≤ radius}.
    fn project_data_ball(&self, d: &mut [f64], radius: f64) {
        d.iter_mut().for_each(|v| *v = v.clamp(-radius, radius));
    }

    /// Whether C is onto the data space. If not, the full admissible set is used.
    fn image_is_full(&self) -> bool {
        true
    }

    /// Residual blocks at the total state, scaled so `Q_E = ½ Σ ‖block‖²`.
    /// Each block must be affine along lift directions.
    fn residual_blocks_total(&self, x: &[f64], total: &[f64]) -> Result<Vec<Vec<f64>>>;

    /// Q_E at the total state.
    fn misfit_total(&self, x: &[f64], total: &[f64]) -> Result<f64> {
        let blocks = self.residual_blocks_total(x, total)?;
        Ok(0.5 * blocks.iter().flatten().map(|v| v * v).sum::<f64>())
    }

    /// Q_E and its gradient (accumulated into `gx`, `gu`).
    fn misfit_gradient_total(&self, x: &[f64], total: &[f64], gx: &mut [f64], gu: &mut [f64]) -> Result<f64>;

    /// R(x, û), with gradient accumulated after scaling by `scale`.
    fn regularizer(&self, x: &[f64], state: &[f64]) -> f64;
    fn regularizer_gradient(&self, x: &[f64], state: &[f64], scale: f64, gx: &mut [f64], gu: &mut [f64]) -> f64;

    /// R̃(x, û), the Ivanov constraint functional.
    fn constraint(&self, x: &[f64], state: &[f64], spec: &AdmissibleSetSpec) -> f64;

    /// Smooth surrogate of R̃ for penalization with gradient accumulated
    /// after scaling. Returns `None` when R̃ is enforced by `project_params`.
    fn constraint_smooth(
        &self,
        _x: &[f64],
        _state: &[f64],
        _spec: &AdmissibleSetSpec,
        _scale: f64,
        _gx: Option<&mut [f64]>,
        _gu: Option<&mut [f64]>,
    ) -> Option<f64> {
        None
    }

    /// Penalty for membership conditions of the state space that the
    /// discretization does not build in. Gradient accumulated after scaling.
    fn membership_penalty_total(&self, _total: &[f64], _scale: f64, _gu: Option<&mut [f64]>) -> f64 {
        0.0
    }

    /// Minimizer over the admissible parameters of Q_E(x, total) + α·R(x, û)
    /// for fixed state, when it has a closed form. The solver still checks
    /// that the penalized cost decreases before accepting it.
    fn param_argmin(&self, _x: &[f64], _state: &[f64], _total: &[f64], _alpha: f64, _spec: &AdmissibleSetSpec) -> Option<Vec<f64>> {
        None
    }

    /// Entries of x the solver may change.
    fn param_mask(&self) -> Vec<bool> {
        vec![true; self.param_len()]
    }

    /// Entries of the state the solver may change (gauge pins, Dirichlet
    /// nodes and inactive nodes are fixed at zero).
    fn state_mask(&self) -> Vec<bool> {
        vec![true; self.state_len()]
    }

    /// Projection onto the parameter constraints; defaults to the box.
    fn project_params(&self, x: &mut [f64], spec: &AdmissibleSetSpec) {
        let mask = self.param_mask();
        for (k, v) in x.iter_mut().enumerate() {
            if mask[k] {
                *v = v.clamp(spec.bounds.lower_at(k), spec.bounds.upper_at(k));
            }
        }
    }

    fn initial_point(&self, spec: &AdmissibleSetSpec) -> (Vec<f64>, Vec<f64>);

    /// Problem-specific ‖(x, û)‖_B surrogate.
    fn b_norm(&self, x: &[f64], state: &[f64]) -> f64;

    /// Parameter error against the truth.
    fn parameter_error(&self, x: &[f64], state: &[f64], truth: &[f64]) -> f64;

    /// Linear projection onto the data space (identity when every vector is
    /// admissible). Used to build lift-norm bounds from projected unit vectors.
    fn project_to_data_space(&self, _v: &mut [f64]) {}

    /// Adjusts a noise draw so it stays in the data space (e.g. sum-zero blocks).
    /// Must keep the max-norm at `delta`.
    fn project_noise(&self, _noise: &mut [f64], _delta: f64) {}
}
