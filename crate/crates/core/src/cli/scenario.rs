use super::config::{CurveTruth, DomainChoice, ProblemKind, RunConfig, SourceKind};
use crate::acoustics::{self, AcousticOptions, AcousticProblem, AcousticSynthesisConfig, MicArray, SourceSet};
use crate::eit::{self, ElectrodeLayout, EitProblem, SynthesisConfig};
use crate::error::{Error, Result};
use crate::framework::{
    inject_noise, minimize, run_noise_sweep, AdmissibleSetSpec, AlphaRule, BoxBounds, ConvergenceReport, ObservationVector,
    ProblemInstance, RegularizationWeights, SolverResult, SweepSetup,
};
use crate::grid2d::{write_cell_matrix_csv, write_node_matrix_csv, BoundaryLayout, DomainKind, Grid, Segment};
use crate::magnet::{self, Coil, MagnetProblem, MagnetSynthesisConfig, PermeabilityCurve};
use serde_json::json;
use std::path::Path;

pub enum Physics {
    Eit(EitProblem),
    Magnet(MagnetProblem),
    Acoustic(AcousticProblem),
}

/// A configured problem with its true parameters and exact synthetic data.
pub struct Scenario {
    pub physics: Physics,
    pub truth: Vec<f64>,
    pub y_exact: ObservationVector,
    pub spec: AdmissibleSetSpec,
    pub weights: RegularizationWeights,
}

impl Scenario {
    pub fn problem(&self) -> &dyn ProblemInstance {
        match &self.physics {
            Physics::Eit(p) => p,
            Physics::Magnet(p) => p,
            Physics::Acoustic(p) => p,
        }
    }

    pub fn build(config: &RunConfig) -> Result<Self> {
        let ps = &config.problem;
        let kind = match ps.domain {
            DomainChoice::UnitSquare => DomainKind::UnitSquare,
            DomainChoice::Disk => DomainKind::DiskEmbedded,
        };
        let grid = Grid::new(ps.nx, ps.ny, kind)?;
        let reg = &config.regularization;
        let weights = RegularizationWeights::new(reg.alpha.unwrap_or(reg.alpha0), reg.alpha0, reg.c0)?;
        match ps.kind {
            ProblemKind::Eit => {
                let e = &config.eit;
                let layout = match &e.layout_file {
                    Some(path) => ElectrodeLayout::from_csv(&grid, path)?,
                    None => ElectrodeLayout::uniform(&grid, e.electrodes, e.coverage, e.contact_impedance)?,
                };
                let patterns = eit::trig_patterns(&grid, &layout, e.patterns);
                let mut truth = vec![e.background; grid.num_cells()];
                for inc in &e.inclusions {
                    let s = eit::inclusion_conductivity(&grid, f64::NAN, inc.center, inc.radius, inc.value);
                    for (t, v) in truth.iter_mut().zip(s) {
                        if !v.is_nan() {
                            *t = v;
                        }
                    }
                }
                let problem = EitProblem::new(grid, layout, e.patterns)?;
                let y_exact = eit::synthesize_data(&problem, &truth, &patterns, &SynthesisConfig::default())?.data;
                let spec = box_spec(config, (0.5, 2.5))?;
                Ok(Self { physics: Physics::Eit(problem), truth, y_exact, spec, weights })
            }
            ProblemKind::Magnet => {
                let m = &config.magnet;
                let ex = magnet::excitation_fields(&grid, m.profile, &m.amplitudes);
                let h_max = magnet::h_max_for(&grid, &ex);
                let knots = magnet::uniform_knots(h_max, m.knots)?;
                let coil = Coil::new(&grid, m.coil)?;
                let [lo, hi] = m.mu_bounds;
                let problem = MagnetProblem::new(grid, knots, (lo, hi), coil, ex)?;
                let curve = match m.truth {
                    CurveTruth::Saturating => PermeabilityCurve::sampled(h_max, m.knots, lo, hi, |s| hi - (hi - lo) * s / h_max)?,
                    CurveTruth::Flat => PermeabilityCurve::sampled(h_max, m.knots, lo, hi, |_| m.flat_value)?,
                };
                let y_exact = magnet::synthesize_flux(&problem, &curve, &MagnetSynthesisConfig::default())?.data;
                let spec = box_spec(config, (lo, hi))?;
                Ok(Self { physics: Physics::Magnet(problem), truth: curve.values().to_vec(), y_exact, spec, weights })
            }
            ProblemKind::Acoustic => {
                let a = &config.acoustic;
                let mics = match (&a.mic_file, &a.ring) {
                    (Some(path), _) => MicArray::from_csv(&grid, path)?,
                    (None, Some(r)) => MicArray::ring(&grid, r.center, r.radius, r.count)?,
                    (None, None) => return Err(Error::Config("acoustic: no microphones".into())),
                };
                let layout = if a.boundary.is_empty() {
                    None
                } else {
                    let segs = a.boundary.iter().map(|s| Segment { kind: s.kind, start: s.start, end: s.end }).collect();
                    Some(BoundaryLayout::new(grid.boundary(), segs)?)
                };
                let options = AcousticOptions { layout, bump_radius: a.bump_radius, skip_f: a.skip_f, skip_g: a.skip_g };
                let mut truth = vec![0.0; 0];
                for s in &a.sources {
                    let set = match s.kind {
                        SourceKind::Point => SourceSet::point_source(&grid, s.center, s.amplitude),
                        SourceKind::Plateau => SourceSet::plateau(&grid, s.center, s.radius, s.amplitude),
                    };
                    let v = set.to_params();
                    if truth.is_empty() {
                        truth = v;
                    } else {
                        truth.iter_mut().zip(v).for_each(|(t, x)| *t += x);
                    }
                }
                let problem = AcousticProblem::new(grid, a.constants(), mics, &options)?;
                let syn = acoustics::synthesize_pressure(&problem, &truth, &AcousticSynthesisConfig::default())?;
                // Scale sources and data so ‖y‖∞ = 1; δ is then relative.
                let ymax = syn.data.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if !(ymax > 0.0) {
                    return Err(Error::InvalidArgument("sources produce no pressure at the microphones".into()));
                }
                truth.iter_mut().for_each(|v| *v /= ymax);
                let y_exact = syn.data.with_values(syn.data.values().iter().map(|v| v / ymax).collect(), 0.0)?;
                let rho = reg.rho.unwrap_or(a.rho_factor * problem.sparsity_norm(&truth));
                let spec = AdmissibleSetSpec::new(reg.tau, rho, BoxBounds::unbounded())?;
                Ok(Self { physics: Physics::Acoustic(problem), truth, y_exact, spec, weights })
            }
        }
    }

    /// Synthesize → perturb (seed) → minimize at δ.
    pub fn solve(&self, config: &RunConfig, delta: f64, seed: u64) -> Result<SolverResult> {
        let p = self.problem();
        let y = inject_noise(p, &self.y_exact, delta, seed)?;
        let alpha = crate::framework::choose_alpha(delta, &self.weights)?;
        minimize(p, &y, alpha, &self.spec, &config.solver)
    }

    pub fn study(&self, config: &RunConfig, seed: u64, jobs: usize) -> Result<ConvergenceReport> {
        let alpha_rule = match config.regularization.alpha {
            Some(a) => AlphaRule::Fixed(a),
            None => AlphaRule::Rule,
        };
        let setup = SweepSetup {
            deltas: &config.noise.deltas,
            truth: &self.truth,
            weights: self.weights,
            alpha_rule,
            spec: &self.spec,
            config: &config.solver,
            base_seed: seed,
            jobs,
        };
        run_noise_sweep(self.problem(), &self.y_exact, &setup)
    }

    /// Writes the reconstruction files and `summary.json` into `dir`.
    pub fn write_solution(&self, dir: &Path, delta: f64, seed: u64, r: &SolverResult) -> Result<()> {
        let p = self.problem();
        let mut summary = json!({
            "delta": delta,
            "seed": seed,
            "tau": self.spec.tau,
            "rho": self.spec.rho,
            "feasible": r.constraint_satisfied,
            "feasibility_factor": r.feasibility_factor,
            "discrepancy": r.discrepancy_value,
            "constraint_value": r.constraint_value,
            "misfit": r.misfit,
            "regularizer": r.regularizer,
            "final_cost": r.final_cost,
            "b_norm": r.b_norm,
            "iterations": r.iterations,
            "parameter_error": p.parameter_error(&r.params, &r.state, &self.truth),
            "diagnostic": r.diagnostic,
        });
        match &self.physics {
            Physics::Eit(e) => {
                let g = e.grid();
                write_cell_matrix_csv(&dir.join("sigma.csv"), g, &r.params)?;
                summary["argmax_cell_center"] = json!(eit::argmax_cell_center(g, &r.params));
            }
            Physics::Magnet(m) => {
                let tr = m.trust_region(&r.state);
                let knots = m.knots();
                let unconstrained: Vec<bool> = (0..knots.len()).map(|k| !tr.supports_knot(knots, k)).collect();
                magnet::write_curve_csv(&dir.join("curve.csv"), knots, &r.params, &unconstrained)?;
                summary["trust_region"] = json!(tr);
            }
            Physics::Acoustic(a) => {
                let g = a.grid();
                let s = a.sources(&r.params);
                let stacked = |f: &crate::grid2d::VectorField| -> Vec<f64> { f.x.iter().chain(&f.y).copied().collect() };
                write_stacked_cells(&dir.join("f_re.csv"), g, &stacked(&s.f_re))?;
                write_stacked_cells(&dir.join("f_im.csv"), g, &stacked(&s.f_im))?;
                write_node_matrix_csv(&dir.join("g_re.csv"), g, s.g_re.as_slice())?;
                write_node_matrix_csv(&dir.join("g_im.csv"), g, s.g_im.as_slice())?;
                let gm = a.g_magnitude(&r.params);
                let sm = a.source_magnitude(&r.params);
                let at = |k: usize| json!({ "node": k, "position": g.node_position(k) });
                let maxima: Vec<_> = acoustics::local_maxima(g, &sm, 0.3).into_iter().take(8).map(|k| json!({ "node": k, "position": g.node_position(k), "value": sm[k] })).collect();
                summary["argmax_g"] = at(acoustics::argmax_node(&gm));
                summary["max_g"] = json!(gm.iter().cloned().fold(0.0, f64::max));
                summary["argmax_source"] = at(acoustics::argmax_node(&sm));
                summary["max_source"] = json!(sm.iter().cloned().fold(0.0, f64::max));
                summary["source_maxima"] = json!(maxima);
                summary["sparsity_norm"] = json!(a.sparsity_norm(&r.params));
            }
        }
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
        Ok(())
    }
}

fn box_spec(config: &RunConfig, default: (f64, f64)) -> Result<AdmissibleSetSpec> {
    let r = &config.regularization;
    let lo = r.lower.unwrap_or(default.0);
    let hi = r.upper.unwrap_or(default.1);
    // default: the ball around the box center covers the whole box
    let rho = r.rho.unwrap_or(0.5 * (hi - lo));
    AdmissibleSetSpec::new(r.tau, rho, BoxBounds::uniform(lo, hi)).map_err(|e| Error::Config(e.to_string()))
}

/// Vector cell field as a `2·ny x nx` matrix: x-components, then y-components.
fn write_stacked_cells(path: &Path, grid: &Grid, values: &[f64]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_path(path)?;
    w.write_record(["nx", "ny", "hx", "hy"])?;
    w.write_record([grid.nx.to_string(), grid.ny.to_string(), format!("{:e}", grid.hx), format!("{:e}", grid.hy)])?;
    for row in values.chunks(grid.nx) {
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}
