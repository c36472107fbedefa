//! Numerical invariant checks shared by `verify` and the test suites.

use super::cost::add_into;
use super::{assemble_cost, check_data_continuity, cost_gradient, ObservationVector, ProblemInstance};
use crate::error::Result;
use rand::Rng;
use serde::Serialize;
use std::ops::Range;

/// Outcome of one check: the measured quantity against its tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckOutcome {
    pub fn at_most(value: f64, tolerance: f64) -> Self {
        Self { value, tolerance, pass: value <= tolerance }
    }
}

/// Random data vector in the problem's data space (entries in [−1, 1]).
pub fn random_data<P: ProblemInstance + ?Sized, R: Rng>(problem: &P, rng: &mut R) -> Result<ObservationVector> {
    let mut v: Vec<f64> = (0..problem.data_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    problem.project_noise(&mut v, 1.0);
    ObservationVector::new(v, problem.data_blocks(), 0.0)
}

/// max |C(Cʳⁱ y) − y| over `draws` random data vectors.
pub fn round_trip_error<P: ProblemInstance + ?Sized, R: Rng>(problem: &P, draws: usize, rng: &mut R) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let y = random_data(problem, rng)?;
        let back = problem.observe(&problem.lift(y.values())?);
        for (a, b) in back.iter().zip(y.values()) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// Relative mismatch of ⟨C u, w⟩ and ⟨u, Cᵀ w⟩ for a random pair.
/// `corrupt` is applied to Cᵀ w before comparing (fault injection).
pub fn observation_adjoint_error<P: ProblemInstance + ?Sized, R: Rng>(
    problem: &P,
    rng: &mut R,
    corrupt: impl Fn(&mut [f64]),
) -> f64 {
    let u: Vec<f64> = (0..problem.state_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..problem.data_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut ct = vec![0.0; u.len()];
    problem.observe_adjoint(&w, 1.0, &mut ct);
    corrupt(&mut ct);
    let a: f64 = problem.observe(&u).iter().zip(&w).map(|(p, q)| p * q).sum();
    let b: f64 = u.iter().zip(&ct).map(|(p, q)| p * q).sum();
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Worst relative error of the analytic gradient of T_α against central
/// differences along one random direction per block.
///
/// Each direction is differenced at `step` and `step / 10` and the better
/// agreement is kept: a stencil straddling a kink of a piecewise-smooth cost
/// is off at one step only, a wrong gradient is off at both.
pub fn gradient_error<P: ProblemInstance + ?Sized, R: Rng>(
    problem: &P,
    x: &[f64],
    state: &[f64],
    y: &ObservationVector,
    alpha: f64,
    blocks: &GradientBlocks,
    step: f64,
    rng: &mut R,
) -> Result<f64> {
    let (_, gx, gu) = cost_gradient(problem, x, state, y, alpha)?;
    let cost = |x: &[f64], u: &[f64]| assemble_cost(problem, x, u, y, alpha);
    let shift = |v: &[f64], d: &[f64], t: f64| -> Vec<f64> { v.iter().zip(d).map(|(a, b)| a + t * b).collect() };
    let mut worst = 0.0f64;
    let direction = |len: usize, r: &Range<usize>, rng: &mut R| {
        let mut d = vec![0.0; len];
        d[r.clone()].iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        d
    };
    for r in &blocks.params {
        let d = direction(x.len(), r, rng);
        let an: f64 = gx.iter().zip(&d).map(|(a, b)| a * b).sum();
        let mut best = f64::INFINITY;
        for h in [step, step / 10.0] {
            let fd = (cost(&shift(x, &d, h), state)? - cost(&shift(x, &d, -h), state)?) / (2.0 * h);
            best = best.min(rel(fd, an));
        }
        worst = worst.max(best);
    }
    for r in &blocks.state {
        let d = direction(state.len(), r, rng);
        let an: f64 = gu.iter().zip(&d).map(|(a, b)| a * b).sum();
        let mut best = f64::INFINITY;
        for h in [step, step / 10.0] {
            let fd = (cost(x, &shift(state, &d, h))? - cost(x, &shift(state, &d, -h))?) / (2.0 * h);
            best = best.min(rel(fd, an));
        }
        worst = worst.max(best);
    }
    Ok(worst)
}

fn rel(fd: f64, an: f64) -> f64 {
    if fd == an {
        0.0
    } else {
        (fd - an).abs() / an.abs().max(fd.abs())
    }
}

/// Index ranges probed separately by [`gradient_error`].
#[derive(Debug, Clone, Default)]
pub struct GradientBlocks {
    pub params: Vec<Range<usize>>,
    pub state: Vec<Range<usize>>,
}

/// Number of violations of the data-continuity bound over `draws` random
/// (x, û, z₁, z₂); `sample` draws (x, û).
pub fn continuity_violations<P: ProblemInstance + ?Sized, R: Rng>(
    problem: &P,
    draws: usize,
    rng: &mut R,
    mut sample: impl FnMut(&mut R) -> (Vec<f64>, Vec<f64>),
) -> Result<usize> {
    let mut bad = 0;
    for _ in 0..draws {
        let (x, u) = sample(rng);
        let z1 = random_data(problem, rng)?;
        let scale = rng.gen_range(1e-3..1.0);
        let z2 = random_data(problem, rng)?;
        let z2 = z1.with_values(add_scaled(z1.values(), z2.values(), scale), 0.0)?;
        if !check_data_continuity(problem, &x, &u, &z1, &z2)?.holds {
            bad += 1;
        }
    }
    Ok(bad)
}

fn add_scaled(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    let sb: Vec<f64> = b.iter().map(|v| s * v).collect();
    add_into(a, &sb)
}
