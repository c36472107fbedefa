use crate::acoustics::{AcousticConstants, AcousticOptions, AcousticProblem, MicArray};
use crate::eit::{ElectrodeLayout, EitProblem};
use crate::error::{Error, Result};
use crate::framework::checks::{continuity_violations, gradient_error, observation_adjoint_error, random_data, round_trip_error, CheckOutcome, GradientBlocks};
use crate::framework::ProblemInstance;
use crate::grid2d::{Grid, ScalarField, VectorField};
use crate::magnet::{excitation_fields, uniform_knots, Coil, CoilSpec, ExcitationProfile, MagnetProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::str::FromStr;

/// Deliberate defects for exercising the verifier itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Transposed operators are off by a relative 10⁻³.
    BrokenAdjoint,
}

impl FromStr for Fault {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "broken-adjoint" => Ok(Fault::BrokenAdjoint),
            _ => Err(Error::InvalidArgument(format!("unknown fault `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Grid,
    Eit,
    Magnet,
    Acoustic,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Grid, Suite::Eit, Suite::Magnet, Suite::Acoustic];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Grid => "grid",
            Suite::Eit => "eit",
            Suite::Magnet => "magnet",
            Suite::Acoustic => "acoustic",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown problem `{s}` (expected grid, eit, magnet or acoustic)")))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub suite: &'static str,
    pub check: String,
    #[serde(flatten)]
    pub outcome: CheckOutcome,
}

/// One problem instance with the sampling rules the checks need.
pub struct Target {
    pub suite: Suite,
    pub problem: Box<dyn ProblemInstance + Send>,
    pub blocks: GradientBlocks,
    /// Uniform range for parameter draws.
    pub x_range: (f64, f64),
    /// Half-width of state draws.
    pub u_scale: f64,
    /// Central-difference step.
    pub fd_step: f64,
}

impl Target {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let p = &self.problem;
        let x = (0..p.param_len()).map(|_| rng.gen_range(self.x_range.0..self.x_range.1)).collect();
        let u = (0..p.state_len()).map(|_| rng.gen_range(-self.u_scale..self.u_scale)).collect();
        (x, u)
    }

    /// Small but representative instance of `suite` on an n×n grid.
    pub fn build(suite: Suite, n: usize) -> Result<Self> {
        let g = Grid::unit_square(n, n)?;
        let (m, nn) = (g.num_cells(), g.num_nodes());
        let big = n >= 24;
        match suite {
            Suite::Grid => Err(Error::InvalidArgument("the grid suite has no problem instance".into())),
            Suite::Eit => {
                let (count, patterns) = if big { (12, 8) } else { (4, 2) };
                let layout = ElectrodeLayout::uniform(&g, count, 0.5, 0.5)?;
                let p = EitProblem::new(g, layout, patterns)?;
                let blocks = GradientBlocks { params: vec![0..m], state: (0..2 * patterns).map(|b| b * nn..(b + 1) * nn).collect() };
                Ok(Self { suite, problem: Box::new(p), blocks, x_range: (0.5, 2.0), u_scale: 1.0, fd_step: 1e-4 })
            }
            Suite::Magnet => {
                let ex = excitation_fields(&g, ExcitationProfile::Mixed, &[0.8, 1.6]);
                let knots = uniform_knots(3.0, 16)?;
                let coil = Coil::new(&g, CoilSpec { lower: [0.25, 0.25], upper: [0.75, 0.75], normal: [1.0, 0.0], depth: 1.0 })?;
                let p = MagnetProblem::new(g, knots, (1.0, 3.0), coil, ex)?;
                let blocks = GradientBlocks { params: vec![0..16], state: (0..4).map(|b| b * nn..(b + 1) * nn).collect() };
                Ok(Self { suite, problem: Box::new(p), blocks, x_range: (1.1, 2.9), u_scale: 0.05, fd_step: 1e-6 })
            }
            Suite::Acoustic => {
                let mics = MicArray::ring(&g, [0.5, 0.5], 0.2, if big { 16 } else { 6 })?;
                let p = AcousticProblem::new(g, AcousticConstants::default(), mics, &AcousticOptions::default())?;
                let params = vec![0..2 * m, 2 * m..4 * m, 4 * m..4 * m + nn, 4 * m + nn..4 * m + 2 * nn];
                let state = vec![0..nn, nn..2 * nn, 2 * nn..2 * nn + 2 * m, 2 * nn + 2 * m..2 * nn + 4 * m];
                Ok(Self { suite, problem: Box::new(p), blocks: GradientBlocks { params, state }, x_range: (-1.0, 1.0), u_scale: 1.0, fd_step: 1e-3 })
            }
        }
    }
}

fn corrupt(fault: Option<Fault>) -> impl Fn(&mut [f64]) {
    move |v: &mut [f64]| {
        if fault == Some(Fault::BrokenAdjoint) {
            v.iter_mut().for_each(|x| *x *= 1.0 + 1e-3);
        }
    }
}

fn row(suite: Suite, check: &str, outcome: CheckOutcome) -> CheckRow {
    CheckRow { suite: suite.name(), check: check.into(), outcome }
}

pub fn grid_checks(seed: u64, fault: Option<Fault>) -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let broken = corrupt(fault);
    for (label, g) in [("square", Grid::unit_square(16, 16)?), ("disk", Grid::disk(24, 24)?)] {
        let f = ScalarField::from_vec((0..g.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let v = g.sample_cells(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
        let d = g.divergence(&g.perp_gradient(&f));
        let worst = (0..g.num_nodes()).filter(|&n| g.is_interior_node(n)).map(|n| d[n].abs()).fold(0.0, f64::max);
        rows.push(row(Suite::Grid, &format!("{label}: div(perp grad) at interior nodes"), CheckOutcome::at_most(worst, 1e-12)));

        let gv = g.l2_inner_vector(&g.gradient(&f), &v);
        let lhs = gv + g.l2_inner_scalar(&f, &g.divergence(&v));
        let green = (lhs - g.boundary_term(&f, &v)).abs() / gv.abs().max(1.0);
        rows.push(row(Suite::Grid, &format!("{label}: discrete Green identity"), CheckOutcome::at_most(green, 1e-12)));

        let mut dt = VectorField::zeros(g.num_cells());
        g.divergence_transpose_add(f.as_slice(), &mut dt.x, &mut dt.y);
        broken(&mut dt.x);
        broken(&mut dt.y);
        let a: f64 = g.divergence(&v).as_slice().iter().zip(f.as_slice()).map(|(p, q)| p * q).sum();
        let b: f64 = v.x.iter().zip(&dt.x).chain(v.y.iter().zip(&dt.y)).map(|(p, q)| p * q).sum();
        rows.push(row(Suite::Grid, &format!("{label}: divergence transpose"), CheckOutcome::at_most((a - b).abs() / a.abs().max(1.0), 1e-12)));

        let mut gt = vec![0.0; g.num_nodes()];
        g.gradient_transpose_add(&v.x, &v.y, &mut gt);
        broken(&mut gt);
        let gf = g.gradient(&f);
        let a: f64 = gf.x.iter().zip(&v.x).chain(gf.y.iter().zip(&v.y)).map(|(p, q)| p * q).sum();
        let b: f64 = f.as_slice().iter().zip(&gt).map(|(p, q)| p * q).sum();
        rows.push(row(Suite::Grid, &format!("{label}: gradient transpose"), CheckOutcome::at_most((a - b).abs() / a.abs().max(1.0), 1e-12)));
    }
    Ok(rows)
}

/// Round trip, observation adjoint, gradient and data-continuity checks.
pub fn problem_checks(target: &Target, seed: u64, fault: Option<Fault>, gradient_points: usize, continuity_draws: usize) -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = target.problem.as_ref();
    let s = target.suite;
    let mut rows = Vec::new();
    rows.push(row(s, "observe(lift(y)) = y (20 draws)", CheckOutcome::at_most(round_trip_error(p, 20, &mut rng)?, 1e-12)));
    let adj = observation_adjoint_error(p, &mut rng, corrupt(fault));
    rows.push(row(s, "observation adjoint", CheckOutcome::at_most(adj, 1e-12)));
    let mut worst = 0.0f64;
    for k in 0..gradient_points {
        let (x, u) = target.sample(&mut rng);
        let y = random_data(p, &mut rng)?;
        let alpha = if k % 2 == 0 { 0.0 } else { 0.3 };
        worst = worst.max(gradient_error(p, &x, &u, &y, alpha, &target.blocks, target.fd_step, &mut rng)?);
    }
    rows.push(row(s, &format!("gradient vs central differences ({gradient_points} points)"), CheckOutcome::at_most(worst, 1e-5)));
    let bad = continuity_violations(p, continuity_draws, &mut rng, |r| target.sample(r))?;
    rows.push(row(s, &format!("data-continuity bound ({continuity_draws} draws)"), CheckOutcome::at_most(bad as f64, 0.0)));
    Ok(rows)
}

/// Runs the invariant suites; `jobs = 0` uses the rayon default.
pub fn run_suites(suites: &[Suite], seed: u64, jobs: usize, fault: Option<Fault>) -> Result<Vec<CheckRow>> {
    if suites.is_empty() {
        return Err(Error::InvalidArgument("empty problem list".into()));
    }
    let one = |s: &Suite| -> Result<Vec<CheckRow>> {
        match s {
            Suite::Grid => grid_checks(seed, fault),
            _ => problem_checks(&Target::build(*s, 12)?, seed, fault, 4, 20),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let parts: Vec<Result<Vec<CheckRow>>> = pool.install(|| suites.par_iter().map(one).collect());
    let mut rows = Vec::new();
    for p in parts {
        rows.extend(p?);
    }
    Ok(rows)
}
