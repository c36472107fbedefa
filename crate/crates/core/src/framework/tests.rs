use super::*;
use crate::error::{Error, Result};
use proptest::prelude::*;

/// Small nonlinear toy: state w ∈ Rⁿ, parameters x ∈ Rⁿ, residual
/// w_k − x_k², data = first m state entries (or an overdetermined
/// combination when `full_image` is false).
struct Toy {
    n: usize,
    m: usize,
    full_image: bool,
}

impl Toy {
    fn new() -> Self {
        Self { n: 6, m: 3, full_image: true }
    }
}

impl ProblemInstance for Toy {
    fn param_len(&self) -> usize {
        self.n
    }
    fn state_len(&self) -> usize {
        self.n
    }
    fn data_blocks(&self) -> Vec<BlockLabel> {
        ObservationVector::tiled_blocks([("obs", self.m)])
    }
    fn lift(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut w = vec![0.0; self.n];
        let k = if self.full_image { self.m } else { self.m - 1 };
        w[..k].copy_from_slice(&y[..k]);
        Ok(w)
    }
    fn observe(&self, w: &[f64]) -> Vec<f64> {
        if self.full_image {
            w[..self.m].to_vec()
        } else {
            let mut c = w[..self.m - 1].to_vec();
            c.push(w[0] + w[1]);
            c
        }
    }
    fn observe_adjoint(&self, v: &[f64], scale: f64, gu: &mut [f64]) {
        if self.full_image {
            for k in 0..self.m {
                gu[k] += scale * v[k];
            }
        } else {
            for k in 0..self.m - 1 {
                gu[k] += scale * v[k];
            }
            gu[0] += scale * v[self.m - 1];
            gu[1] += scale * v[self.m - 1];
        }
    }
    fn image_is_full(&self) -> bool {
        self.full_image
    }
    fn residual_blocks_total(&self, x: &[f64], w: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(vec![w.iter().zip(x).map(|(w, x)| w - x * x).collect()])
    }
    fn misfit_gradient_total(&self, x: &[f64], w: &[f64], gx: &mut [f64], gu: &mut [f64]) -> Result<f64> {
        let mut q = 0.0;
        for k in 0..self.n {
            let r = w[k] - x[k] * x[k];
            q += 0.5 * r * r;
            gu[k] += r;
            gx[k] += -2.0 * x[k] * r;
        }
        Ok(q)
    }
    fn regularizer(&self, _x: &[f64], u: &[f64]) -> f64 {
        0.5 * u.iter().map(|v| v * v).sum::<f64>()
    }
    fn regularizer_gradient(&self, x: &[f64], u: &[f64], scale: f64, _gx: &mut [f64], gu: &mut [f64]) -> f64 {
        for (g, v) in gu.iter_mut().zip(u) {
            *g += scale * v;
        }
        self.regularizer(x, u)
    }
    fn constraint(&self, x: &[f64], _u: &[f64], _spec: &AdmissibleSetSpec) -> f64 {
        x.iter().fold(0.0, |m, v| m.max((v - 1.0).abs()))
    }
    fn project_params(&self, x: &mut [f64], spec: &AdmissibleSetSpec) {
        let lo = spec.bounds.lower_at(0).max(1.0 - spec.rho);
        let hi = spec.bounds.upper_at(0).min(1.0 + spec.rho);
        for v in x.iter_mut() {
            *v = if lo <= hi { v.clamp(lo, hi) } else { 1.0 };
        }
    }
    fn initial_point(&self, _spec: &AdmissibleSetSpec) -> (Vec<f64>, Vec<f64>) {
        (vec![1.0; self.n], vec![0.0; self.n])
    }
    fn b_norm(&self, x: &[f64], u: &[f64]) -> f64 {
        x.iter().chain(u).map(|v| v * v).sum::<f64>().sqrt()
    }
    fn parameter_error(&self, x: &[f64], _u: &[f64], truth: &[f64]) -> f64 {
        let k = self.m;
        let num: f64 = x[..k].iter().zip(&truth[..k]).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = truth[..k].iter().map(|b| b * b).sum();
        (num / den).sqrt()
    }
}

fn truth() -> Vec<f64> {
    vec![1.3, 0.7, 1.6, 1.1, 0.9, 1.2]
}

fn exact_data(p: &Toy) -> ObservationVector {
    let w: Vec<f64> = truth().iter().map(|x| x * x).collect();
    ObservationVector::exact(p.observe(&w), p.data_blocks()).unwrap()
}

fn spec() -> AdmissibleSetSpec {
    AdmissibleSetSpec::new(1.5, 1.0, BoxBounds::uniform(0.0, 2.0)).unwrap()
}

#[test]
fn choose_alpha_examples() {
    let w = RegularizationWeights::rule(1.0, 10.0).unwrap();
    assert!((choose_alpha(0.1, &w).unwrap() - 0.01).abs() < 1e-15);
    let w = RegularizationWeights::rule(5.0, 1.0).unwrap();
    assert!((choose_alpha(1e-3, &w).unwrap() - 5e-6).abs() < 1e-18);
    assert!(matches!(choose_alpha(0.0, &w), Err(Error::ExactData)));
    assert!(choose_alpha(-1.0, &w).is_err());
}

#[test]
fn weights_must_be_positive() {
    assert!(RegularizationWeights::new(0.0, 1.0, 1.0).is_err());
    assert!(RegularizationWeights::rule(1.0, -1.0).is_err());
}

#[test]
fn admissible_spec_validation() {
    assert!(AdmissibleSetSpec::new(1.0, 1.0, BoxBounds::unbounded()).is_err());
    assert!(AdmissibleSetSpec::new(1.1, 1.0, BoxBounds::uniform(2.0, 1.0)).is_err());
    assert!(AdmissibleSetSpec::new(1.1, -0.5, BoxBounds::unbounded()).is_err());
    assert!(AdmissibleSetSpec::new(1.1, 0.0, BoxBounds::unbounded()).is_ok());
}

#[test]
fn solver_config_validation() {
    let mut c = SolverConfig::default();
    c.penalty.growth = 1.0;
    assert!(c.validate().is_err());
    let mut c = SolverConfig::default();
    c.gradient_tolerance = 0.0;
    assert!(c.validate().is_err());
}

#[test]
fn observation_blocks_must_tile() {
    let blocks = ObservationVector::tiled_blocks([("a", 2), ("b", 1)]);
    assert!(ObservationVector::exact(vec![1.0, 2.0, 3.0], blocks.clone()).is_ok());
    assert!(ObservationVector::exact(vec![1.0, 2.0], blocks.clone()).is_err());
    let overlap = vec![
        BlockLabel { name: "a".into(), offset: 0, len: 2 },
        BlockLabel { name: "b".into(), offset: 1, len: 2 },
    ];
    assert!(ObservationVector::exact(vec![0.0; 3], overlap).is_err());
    assert!(ObservationVector::new(vec![0.0; 3], blocks, -1e-3).is_err());
    let y = ObservationVector::single_block("x", vec![4.0, 5.0], 0.1).unwrap();
    assert_eq!(y.block("x"), Some(&[4.0, 5.0][..]));
    assert_eq!(y.block("nope"), None);
}

#[test]
fn discrepancy_examples() {
    let v = |a: Vec<f64>| ObservationVector::single_block("y", a, 0.0).unwrap();
    assert_eq!(discrepancy(&v(vec![1.0, 2.0]), &v(vec![1.0, 2.0])).unwrap(), 0.0);
    assert_eq!(discrepancy(&v(vec![1.0, 2.0]), &v(vec![3.0, 1.0])).unwrap(), 2.0);
    assert_eq!(discrepancy(&v(vec![0.0, 0.0, 0.0]), &v(vec![-0.5, 0.2, 0.0])).unwrap(), 0.5);
    let other = ObservationVector::exact(vec![1.0, 2.0], ObservationVector::tiled_blocks([("a", 1), ("b", 1)])).unwrap();
    assert!(matches!(discrepancy(&v(vec![1.0, 2.0]), &other), Err(Error::BlockMismatch(_))));
}

#[test]
fn assemble_cost_properties() {
    let p = Toy::new();
    let y = exact_data(&p);
    let x = truth();
    let w: Vec<f64> = x.iter().map(|v| v * v).collect();
    let mut u_true = w.clone();
    u_true[..p.m].iter_mut().for_each(|v| *v = 0.0);
    assert!(assemble_cost(&p, &x, &u_true, &y, 0.0).unwrap() < 1e-28);

    let u = vec![0.3, -0.2, 0.1, 0.5, 0.0, 1.0];
    let q = assemble_cost(&p, &x, &u, &y, 0.0).unwrap();
    let total: Vec<f64> = u.iter().zip(p.lift(y.values()).unwrap()).map(|(a, b)| a + b).collect();
    assert_eq!(q, p.misfit_total(&x, &total).unwrap());
    let with_reg = assemble_cost(&p, &x, &u, &y, 0.5).unwrap();
    assert!((with_reg - q - 0.5 * p.regularizer(&x, &u)).abs() < 1e-14);

    // quadratic growth along a state ray from the exact solution
    let dir = [0.2, -0.4, 0.1, 0.3, -0.7, 0.5];
    let at = |eps: f64| {
        let ue: Vec<f64> = u_true.iter().zip(dir).map(|(a, d)| a + eps * d).collect();
        assemble_cost(&p, &x, &ue, &y, 0.0).unwrap()
    };
    for eps in [1e-1, 1e-2, 1e-3] {
        assert!((at(2.0 * eps) / at(eps) - 4.0).abs() < 1e-8);
    }
}

#[test]
fn assemble_cost_rejects_blow_up() {
    let p = Toy::new();
    let y = exact_data(&p);
    let mut u = vec![0.0; 6];
    u[4] = f64::NAN;
    assert!(matches!(assemble_cost(&p, &truth(), &u, &y, 1.0), Err(Error::NumericalBlowUp(_))));
}

#[test]
fn smooth_max_bounds_and_gradient() {
    let v = [0.3, -0.9, 0.5, 0.89];
    let beta = 1e3;
    let mut g = [0.0; 4];
    let s = smooth_max_abs(&v, beta, Some(&mut g));
    assert!(s >= 0.9 && s <= 0.9 + (8.0f64).ln() / beta);
    for k in 0..4 {
        let mut vp = v;
        vp[k] += 1e-7;
        let mut vm = v;
        vm[k] -= 1e-7;
        let fd = (smooth_max_abs(&vp, beta, None) - smooth_max_abs(&vm, beta, None)) / 2e-7;
        assert!((fd - g[k]).abs() < 1e-5, "{fd} vs {}", g[k]);
    }
}

#[test]
fn minimize_recovers_identified_parameters() {
    let p = Toy::new();
    let y = exact_data(&p).with_values(exact_data(&p).values().to_vec(), 1e-6).unwrap();
    let r = minimize(&p, &y, 1e-6, &spec(), &SolverConfig::default()).unwrap();
    assert!(r.constraint_satisfied, "{}", r.diagnostic);
    assert!(p.parameter_error(&r.params, &r.state, &truth()) <= 1e-2);
    assert!(r.discrepancy_value <= 1.05 * 1.5e-6);
}

#[test]
fn cost_trace_monotone_within_stages() {
    let p = Toy::new();
    let y = inject_noise(&p, &exact_data(&p), 0.05, 3).unwrap();
    let r = minimize(&p, &y, 1e-3, &spec(), &SolverConfig::default()).unwrap();
    let mut bounds = r.stage_starts.clone();
    bounds.push(r.cost_trace.len());
    for w in bounds.windows(2) {
        for k in w[0] + 1..w[1] {
            assert!(r.cost_trace[k] <= r.cost_trace[k - 1] * (1.0 + 1e-14), "increase at {k}");
        }
    }
    let (x0, u0) = p.initial_point(&spec());
    assert!(r.final_cost <= assemble_cost(&p, &x0, &u0, &y, 1e-3).unwrap());
}

#[test]
fn larger_alpha_gives_smaller_regularizer() {
    let p = Toy::new();
    let y = inject_noise(&p, &exact_data(&p), 1e-2, 1).unwrap();
    let small = minimize(&p, &y, 1e-6, &spec(), &SolverConfig::default()).unwrap();
    let large = minimize(&p, &y, 1e6, &spec(), &SolverConfig::default()).unwrap();
    assert!(large.regularizer < small.regularizer);
}

#[test]
fn empty_admissible_set_is_flagged() {
    let p = Toy::new();
    let y = inject_noise(&p, &exact_data(&p), 1e-2, 1).unwrap();
    let mut s = spec();
    s.rho = -1.0;
    let r = minimize(&p, &y, 1e-3, &s, &SolverConfig::default()).unwrap();
    assert!(!r.constraint_satisfied);
    assert!(r.diagnostic.contains("no feasible point"));
}

#[test]
fn full_form_used_without_full_image() {
    let p = Toy { full_image: false, ..Toy::new() };
    assert!(!p.image_is_full());
    let w: Vec<f64> = truth().iter().map(|x| x * x).collect();
    let mut yv = p.observe(&w);
    yv[2] += 0.3; // outside Im(C)
    let y = ObservationVector::single_block("obs", yv.clone(), 0.5).unwrap();
    let r = minimize(&p, &y, 1e-3, &spec(), &SolverConfig::default()).unwrap();
    let total: Vec<f64> = r.state.iter().zip(p.lift(&yv).unwrap()).map(|(a, b)| a + b).collect();
    let full = p.observe(&total).iter().zip(&yv).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert_eq!(r.discrepancy_value, full);
    assert!(r.discrepancy_value >= 0.3 - 1e-12 || r.discrepancy_value <= 1.05 * 0.75);
}

#[test]
fn data_continuity_bound() {
    let p = Toy::new();
    let z1 = exact_data(&p);
    let x = truth();
    let u = vec![0.1; 6];
    let c = check_data_continuity(&p, &x, &u, &z1, &z1).unwrap();
    assert_eq!((c.lhs, c.bound, c.holds), (0.0, 0.0, true));
    let mut ratios = Vec::new();
    for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
        let z2 = inject_noise(&p, &z1, eps, 7).unwrap();
        let c = check_data_continuity(&p, &x, &u, &z1, &z2).unwrap();
        assert!(c.holds, "{c:?}");
        ratios.push(c.lhs / eps);
    }
    let m = ratios.iter().cloned().fold(0.0, f64::max);
    assert!(m.is_finite() && ratios[3] <= 2.0 * ratios[0] + 1.0);
}

#[test]
fn noise_injection_hits_delta_exactly() {
    let p = Toy::new();
    let y = exact_data(&p);
    let a = inject_noise(&p, &y, 0.01, 42).unwrap();
    let b = inject_noise(&p, &y, 0.01, 42).unwrap();
    assert_eq!(a, b);
    // exact up to the round-off of y + noise
    assert!((discrepancy(&y, &a).unwrap() - 0.01).abs() < 1e-15);
    assert_eq!(a.noise_level(), 0.01);
    assert_ne!(a, inject_noise(&p, &y, 0.01, 43).unwrap());
}

fn sweep(p: &Toy, rule: AlphaRule, jobs: usize) -> ConvergenceReport {
    let s = spec();
    let cfg = SolverConfig::default();
    let setup = SweepSetup {
        deltas: &[1e-1, 1e-2, 1e-3, 1e-4],
        truth: &truth(),
        weights: RegularizationWeights::rule(1.0, 1.0).unwrap(),
        alpha_rule: rule,
        spec: &s,
        config: &cfg,
        base_seed: 5,
        jobs,
    };
    run_noise_sweep(p, &exact_data(p), &setup).unwrap()
}

#[test]
fn noise_sweep_report() {
    let p = Toy::new();
    let r = sweep(&p, AlphaRule::Rule, 1);
    assert_eq!(r.rows.len(), 4);
    assert!(r.all_feasible && r.b_norm_bounded && r.error_decreased && !r.rule_violation);
    for row in &r.rows {
        assert!(row.delta_sq_over_alpha <= 1.0 + 1e-12);
    }
    assert_eq!(r, sweep(&p, AlphaRule::Rule, 2));
    assert!(sweep(&p, AlphaRule::Fixed(1e-2), 1).rule_violation);
}

#[test]
fn noise_sweep_rejects_bad_deltas() {
    let p = Toy::new();
    let s = spec();
    let cfg = SolverConfig::default();
    let setup = SweepSetup {
        deltas: &[1e-2, 1e-1],
        truth: &truth(),
        weights: RegularizationWeights::rule(1.0, 1.0).unwrap(),
        alpha_rule: AlphaRule::Rule,
        spec: &s,
        config: &cfg,
        base_seed: 0,
        jobs: 1,
    };
    assert!(run_noise_sweep(&p, &exact_data(&p), &setup).is_err());
}

#[test]
fn report_csv_has_header_and_rows() {
    let p = Toy::new();
    let r = sweep(&p, AlphaRule::Rule, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    r.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "delta,alpha,error,discrepancy,b_norm,iterations,feasible");
    assert_eq!(lines.len(), 5);
}

proptest! {
    #[test]
    fn alpha_rule_bounds(log_delta in -8.0f64..0.0, a0 in 1e-3f64..1e3, c0 in 1e-3f64..1e3) {
        let delta = 10f64.powf(log_delta);
        let w = RegularizationWeights::rule(a0, c0).unwrap();
        let alpha = choose_alpha(delta, &w).unwrap();
        prop_assert!(alpha >= a0 * (delta * delta));
        prop_assert!(delta * delta / alpha <= c0 * (1.0 + 1e-12));
    }

    #[test]
    fn discrepancy_is_metric_like(a in prop::collection::vec(-5.0f64..5.0, 4), b in prop::collection::vec(-5.0f64..5.0, 4)) {
        let ya = ObservationVector::single_block("y", a.clone(), 0.0).unwrap();
        let yb = ObservationVector::single_block("y", b.clone(), 0.0).unwrap();
        let d = discrepancy(&ya, &yb).unwrap();
        prop_assert_eq!(d, discrepancy(&yb, &ya).unwrap());
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d == 0.0, a == b);
        prop_assert_eq!(discrepancy(&ya, &ya).unwrap(), 0.0);
    }
}
