use super::*;
use crate::eit::EitProblem;
use crate::framework::{assemble_cost, cost_gradient, inject_noise, BoxBounds, ProblemInstance};
use crate::grid2d::ScalarField;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn square(n: usize) -> Grid {
    Grid::unit_square(n, n).unwrap()
}

fn coil(grid: &Grid, normal: [f64; 2]) -> Coil {
    Coil::new(grid, CoilSpec { lower: [0.25, 0.25], upper: [0.75, 0.75], normal, depth: 1.0 }).unwrap()
}

fn zero_excitations(grid: &Grid, count: usize) -> Vec<VectorField> {
    (0..count).map(|_| VectorField::zeros(grid.num_cells())).collect()
}

/// Problem with knots on [0, 3], bounds [1, 3].
fn problem(grid: &Grid, excitations: Vec<VectorField>) -> MagnetProblem {
    MagnetProblem::new(grid.clone(), uniform_knots(3.0, 16).unwrap(), (1.0, 3.0), coil(grid, [0.0, 1.0]), excitations).unwrap()
}

fn pack(fields: &[(&ScalarField, &ScalarField)]) -> Vec<f64> {
    fields.iter().flat_map(|(a, b)| a.as_slice().iter().chain(b.as_slice()).copied()).collect()
}

#[test]
fn curve_evaluation_examples() {
    let c = PermeabilityCurve::new(vec![0.0, 1.0, 2.0], vec![1.0, 3.0, 2.0], 1.0, 3.0).unwrap();
    assert_eq!(c.eval(1.0), 3.0);
    assert_eq!(c.eval(0.0), 1.0);
    assert_eq!(c.eval(0.5), 2.0);
    assert_eq!(c.eval(1.5), 2.5);
    assert_eq!(c.eval(7.0), 2.0);
    assert_eq!(c.h_max(), 2.0);
}

#[test]
fn curve_rejects_bad_input() {
    assert!(PermeabilityCurve::new(vec![0.0, 1.0, 1.0], vec![1.0; 3], 1.0, 3.0).is_err());
    assert!(PermeabilityCurve::new(vec![0.5, 1.0], vec![1.0; 2], 1.0, 3.0).is_err());
    assert!(PermeabilityCurve::new(vec![0.0, 1.0], vec![1.0, 4.0], 1.0, 3.0).is_err());
    assert!(PermeabilityCurve::new(vec![0.0, 1.0], vec![1.0; 3], 1.0, 3.0).is_err());
}

#[test]
fn coil_geometry_checks() {
    let g = square(8);
    assert_eq!(coil(&g, [1.0, 0.0]).area(), 0.25);
    let bad = |lower, upper, normal| Coil::new(&g, CoilSpec { lower, upper, normal, depth: 1.0 }).is_err();
    assert!(bad([0.5, 0.5], [1.2, 0.9], [1.0, 0.0]));
    assert!(bad([0.2, 0.2], [0.4, 0.4], [1.0, 1.0]));
    assert!(bad([0.51, 0.51], [0.55, 0.55], [1.0, 0.0]));
    let disk = Grid::disk(16, 16).unwrap();
    assert!(matches!(
        Coil::new(&disk, CoilSpec { lower: [0.0, 0.0], upper: [0.3, 0.3], normal: [1.0, 0.0], depth: 1.0 }),
        Err(crate::error::Error::Geometry(_))
    ));
}

#[test]
fn observation_examples() {
    let g = square(8);
    let p = problem(&g, zero_excitations(&g, 2));
    let n = g.num_nodes();
    assert_eq!(p.observe(&vec![0.0; p.state_len()]), vec![0.0, 0.0]);
    // A = 8(ν₂x₁ − ν₁x₂) with ν = (0, 1)
    let a = g.sample_nodes(|q| 8.0 * q[0]);
    let zero = ScalarField::zeros(n);
    let state = pack(&[(&zero, &a), (&zero, &a.scaled(-0.5))]);
    let phi = p.observe(&state);
    assert!((phi[0] - 2.0).abs() < 1e-13 && (phi[1] + 1.0).abs() < 1e-13, "{phi:?}");
}

#[test]
fn lift_examples() {
    let g = square(8);
    let p = problem(&g, zero_excitations(&g, 1));
    assert!(p.lift(&[0.0]).unwrap().iter().all(|v| *v == 0.0));
    let l = p.lift(&[2.0]).unwrap();
    let n = g.num_nodes();
    assert!(l[..n].iter().all(|v| *v == 0.0));
    for k in 0..n {
        assert!((l[n + k] - 8.0 * g.node_position(k)[0]).abs() < 1e-13);
    }
    assert!((p.observe(&l)[0] - 2.0).abs() < 1e-13);
    assert!(p.lift(&[1.0, 2.0]).is_err());
}

#[test]
fn right_inverse_round_trip() {
    let g = square(24);
    let c = Coil::new(&g, CoilSpec { lower: [0.1, 0.3], upper: [0.6, 0.5], normal: [0.6, 0.8], depth: 0.5 }).unwrap();
    let p = MagnetProblem::new(g.clone(), uniform_knots(3.0, 16).unwrap(), (1.0, 3.0), c, zero_excitations(&g, 4)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let y: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let back = p.observe(&p.lift(&y).unwrap());
        let err = back.iter().zip(&y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 1e-12, "round-trip error {err}");
    }
}

#[test]
fn residual_witnesses() {
    let g = square(10);
    let p = problem(&g, zero_excitations(&g, 1));
    let psi = g.sample_nodes(|q| q[0]);
    let flat = |m: f64| vec![m; 16];
    let q2 = |values: &[f64], a: &ScalarField| -> f64 {
        p.residual_fields(values, &pack(&[(&psi, a)])).unwrap().iter().map(|q| 0.5 * g.l2_inner_vector(q, q)).sum()
    };
    assert!(q2(&flat(1.0), &g.sample_nodes(|q| -q[1])) < 1e-28);
    assert!(q2(&flat(2.9), &g.sample_nodes(|q| -2.9 * q[1])) < 1e-28);
    let q = q2(&flat(2.0), &ScalarField::zeros(g.num_nodes()));
    assert!((q - 0.5 * 2.0 * g.area()).abs() < 1e-13, "{q}");
}

#[test]
fn flat_curve_matches_eit_bit_for_bit() {
    let g = square(12);
    let p = problem(&g, zero_excitations(&g, 2));
    let lay = crate::eit::ElectrodeLayout::uniform(&g, 4, 0.5, 1.0).unwrap();
    let e = EitProblem::new(g.clone(), lay, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let total: Vec<f64> = (0..p.state_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for mu in [1.0, 1.7, 2.5] {
        let a = p.residual_fields(&vec![mu; 16], &total).unwrap();
        let b = e.residual_fields(&vec![mu; g.num_cells()], &total).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn gauge_invariance_in_a() {
    let g = square(10);
    let p = problem(&g, excitation_fields(&g, ExcitationProfile::Mixed, &[0.5]));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let values: Vec<f64> = (0..16).map(|_| rng.gen_range(1.0..3.0)).collect();
    let mut total: Vec<f64> = (0..p.state_len()).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let before = p.misfit_total(&values, &total).unwrap();
    let n = g.num_nodes();
    total[n..].iter_mut().for_each(|v| *v += 4.25);
    assert!((p.misfit_total(&values, &total).unwrap() - before).abs() <= 1e-13 * before);
}

fn fd_check(p: &MagnetProblem, x: &[f64], state: &[f64], y: &ObservationVector, alpha: f64, rng: &mut ChaCha8Rng) {
    let (_, gx, gu) = cost_gradient(p, x, state, y, alpha).unwrap();
    let h = 1e-6;
    let cost = |x: &[f64], u: &[f64]| assemble_cost(p, x, u, y, alpha).unwrap();
    let shift = |v: &[f64], d: &[f64], t: f64| -> Vec<f64> { v.iter().zip(d).map(|(a, b)| a + t * b).collect() };
    let dx: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let fd = (cost(&shift(x, &dx, h), state) - cost(&shift(x, &dx, -h), state)) / (2.0 * h);
    let an: f64 = gx.iter().zip(&dx).map(|(a, b)| a * b).sum();
    assert!((fd - an).abs() <= 1e-5 * an.abs(), "knot block: fd {fd} vs {an}");
    let n = p.grid().num_nodes();
    for b in 0..2 * p.experiments() {
        let mut du = vec![0.0; state.len()];
        du[b * n..(b + 1) * n].iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let fd = (cost(x, &shift(state, &du, h)) - cost(x, &shift(state, &du, -h))) / (2.0 * h);
        let an: f64 = gu.iter().zip(&du).map(|(a, b)| a * b).sum();
        assert!((fd - an).abs() <= 1e-5 * an.abs(), "state block {b}: fd {fd} vs {an}");
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let g = square(12);
    let p = problem(&g, excitation_fields(&g, ExcitationProfile::Mixed, &[0.8, 1.6]));
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let y = ObservationVector::new(vec![0.3, -0.2], p.data_blocks(), 0.0).unwrap();
    for _ in 0..3 {
        let x: Vec<f64> = (0..16).map(|_| rng.gen_range(1.1..2.9)).collect();
        let state: Vec<f64> = (0..p.state_len()).map(|_| rng.gen_range(-0.05..0.05)).collect();
        fd_check(&p, &x, &state, &y, 0.0, &mut rng);
        fd_check(&p, &x, &state, &y, 0.3, &mut rng);
    }
}

#[test]
fn zero_residual_point_is_stationary() {
    let g = square(10);
    let p = problem(&g, zero_excitations(&g, 1));
    let state = pack(&[(&g.sample_nodes(|q| q[0]), &g.sample_nodes(|q| -1.5 * q[1]))]);
    let y = ObservationVector::new(vec![0.0], p.data_blocks(), 0.0).unwrap();
    let (c, gx, gu) = cost_gradient(&p, &vec![1.5; 16], &state, &y, 0.0).unwrap();
    assert!(c < 1e-28);
    assert!(gx.iter().chain(&gu).all(|v| v.abs() < 1e-13));
}

#[test]
fn strong_fields_only_move_the_last_knot() {
    let g = square(8);
    // |H| = 5 > H_max = 3 everywhere
    let p = problem(&g, excitation_fields(&g, ExcitationProfile::Uniform, &[5.0]));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a: Vec<f64> = (0..g.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let total: Vec<f64> = vec![0.0; g.num_nodes()].into_iter().chain(a).collect();
    let mut gx = vec![0.0; 16];
    let mut gu = vec![0.0; total.len()];
    p.misfit_gradient_total(&vec![2.0; 16], &total, &mut gx, &mut gu).unwrap();
    assert!(gx[..15].iter().all(|v| *v == 0.0));
    assert!(gx[15] != 0.0);
}

#[test]
fn unvisited_knots_have_zero_gradient() {
    let g = square(8);
    // |H| = 0.4 uniformly: only the support of knots 1 and 2 (0.2, 0.4, 0.6) is hit
    let p = problem(&g, excitation_fields(&g, ExcitationProfile::Uniform, &[0.4]));
    let total = vec![0.0; p.state_len()];
    let mut gx = vec![0.0; 16];
    let mut gu = vec![0.0; total.len()];
    let x: Vec<f64> = (0..16).map(|k| 1.0 + 0.1 * k as f64).collect();
    p.misfit_gradient_total(&x, &total, &mut gx, &mut gu).unwrap();
    let region = p.trust_region(&total);
    for k in 0..16 {
        if !region.supports_knot(p.knots(), k) {
            assert_eq!(gx[k], 0.0, "knot {k}");
        }
    }
    assert!(gx[2] != 0.0);
}

#[test]
fn corrupt_curve_is_an_error() {
    let g = square(8);
    let p = problem(&g, excitation_fields(&g, ExcitationProfile::Uniform, &[0.1]));
    let mut x = vec![2.0; 16];
    x[0] = 0.2;
    x[1] = 0.2;
    assert!(p.misfit_total(&x, &vec![0.0; p.state_len()]).is_err());
}

#[test]
fn synthesis_with_flat_curve_is_explicit() {
    let g = square(12);
    let p = problem(&g, excitation_fields(&g, ExcitationProfile::Uniform, &[0.5, 1.0]));
    let curve = PermeabilityCurve::new(p.knots().to_vec(), vec![2.0; 16], 1.0, 3.0).unwrap();
    let s = synthesize_flux(&p, &curve, &MagnetSynthesisConfig::default()).unwrap();
    assert!(s.misfit < 1e-20, "{}", s.misfit);
    // uniform H = (a, 0), B = 2H, coil normal (0, 1) sees no flux
    assert!(s.data.values().iter().all(|v| v.abs() < 1e-10), "{:?}", s.data.values());
    let q = MagnetProblem::new(g.clone(), p.knots().to_vec(), (1.0, 3.0), coil(&g, [1.0, 0.0]), p.excitations().to_vec()).unwrap();
    let s = synthesize_flux(&q, &curve, &MagnetSynthesisConfig::default()).unwrap();
    let v = s.data.values();
    assert!((v[0] - 2.0 * 0.5 * 0.25).abs() < 1e-10 && (v[1] - 2.0 * 1.0 * 0.25).abs() < 1e-10, "{v:?}");
}

#[test]
fn synthesis_with_saturating_curve_converges() {
    let g = square(16);
    let ex = excitation_fields(&g, ExcitationProfile::Mixed, &[0.4, 0.8, 1.2, 1.6]);
    let h_max = h_max_for(&g, &ex);
    let knots = uniform_knots(h_max, 16).unwrap();
    let p = MagnetProblem::new(g.clone(), knots, (1.0, 3.0), coil(&g, [1.0, 0.0]), ex).unwrap();
    let curve = PermeabilityCurve::sampled(h_max, 16, 1.0, 3.0, |s| 3.0 - 2.0 * s / h_max).unwrap();
    let s = synthesize_flux(&p, &curve, &MagnetSynthesisConfig::default()).unwrap();
    assert!(s.misfit < 1e-18, "{}", s.misfit);
    let region = p.trust_region(&s.state);
    let (lo, hi) = region.hull();
    assert!(lo < hi && hi <= h_max);
    // stronger excitation, lower permeability: flux grows sublinearly
    let v = s.data.values();
    assert!(v.windows(2).all(|w| w[1] > w[0]));
    assert!(v[3] / v[0] < 4.0);
}

#[test]
fn flat_curve_is_recovered_on_the_trust_region() {
    let g = square(16);
    let ex = excitation_fields(&g, ExcitationProfile::Uniform, &[0.5, 1.0, 1.5]);
    let h_max = h_max_for(&g, &ex);
    let p = MagnetProblem::new(g.clone(), uniform_knots(h_max, 16).unwrap(), (1.0, 3.5), coil(&g, [1.0, 0.0]), ex).unwrap();
    let truth = PermeabilityCurve::new(p.knots().to_vec(), vec![2.0; 16], 1.0, 3.5).unwrap();
    let s = synthesize_flux(&p, &truth, &MagnetSynthesisConfig::default()).unwrap();
    let y = inject_noise(&p, &s.data, 1e-4, 4).unwrap();
    let spec = AdmissibleSetSpec::new(1.5, 1.0, BoxBounds::uniform(1.0, 3.5)).unwrap();
    let config = SolverConfig { max_iterations: 300, state_steps: 10, ..SolverConfig::default() };
    let w = RegularizationWeights::rule(1e-4, 1e6).unwrap();
    let r = solve_inverse(&p, &y, &w, &spec, &config).unwrap();
    assert!(r.result.constraint_satisfied, "{}", r.result.diagnostic);
    let err = p.curve_error(&r.result.params, truth.values(), &r.trust_region);
    assert!(err <= 0.05, "curve error {err} on {:?}", r.trust_region);
    assert!(r.unconstrained.iter().any(|u| *u));
    // knots never reached keep the initial (box-center) value
    for k in 0..16 {
        if r.unconstrained[k] {
            assert_eq!(r.result.params[k], 2.25);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn curve_is_monotone_in_knot_values(k in 0usize..6, bump in 0.0f64..1.0, s in 0.0f64..7.0, seed in 0u64..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let knots = uniform_knots(5.0, 6).unwrap();
        let values: Vec<f64> = (0..6).map(|_| rng.gen_range(1.0..2.0)).collect();
        let mut raised = values.clone();
        raised[k] += bump;
        let a = PermeabilityCurve::new(knots.clone(), values, 1.0, 3.0).unwrap();
        let b = PermeabilityCurve::new(knots, raised, 1.0, 3.0).unwrap();
        prop_assert!(b.eval(s) >= a.eval(s));
    }

    #[test]
    fn observation_is_linear(seed in 0u64..1000, c in -3.0f64..3.0) {
        let g = square(8);
        let p = problem(&g, zero_excitations(&g, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..p.state_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..p.state_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let comb: Vec<f64> = u.iter().zip(&w).map(|(a, b)| c * a + b).collect();
        let (ou, ow, oc) = (p.observe(&u), p.observe(&w), p.observe(&comb));
        for k in 0..2 {
            prop_assert!((oc[k] - c * ou[k] - ow[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoints_are_transposes(seed in 0u64..1000) {
        let g = square(8);
        let p = problem(&g, zero_excitations(&g, 3));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..p.state_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lhs: f64 = p.observe(&u).iter().zip(&w).map(|(a, b)| a * b).sum();
        let mut gu = vec![0.0; u.len()];
        p.observe_adjoint(&w, 1.0, &mut gu);
        let rhs: f64 = gu.iter().zip(&u).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        let lhs: f64 = p.lift(&w).unwrap().iter().zip(&u).map(|(a, b)| a * b).sum();
        let rhs: f64 = p.lift_adjoint(&u).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }
}
