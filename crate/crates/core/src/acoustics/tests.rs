use super::*;
use crate::framework::{assemble_cost, cost_gradient, BoxBounds, ProblemInstance, SolverConfig};
use crate::grid2d::{BoundaryLayout, Segment, SegmentKind};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn square(n: usize) -> Grid {
    Grid::unit_square(n, n).unwrap()
}

fn ring_problem(n: usize, opts: &AcousticOptions) -> AcousticProblem {
    let g = square(n);
    let mics = MicArray::ring(&g, [0.5, 0.5], 0.15, 16).unwrap();
    AcousticProblem::new(g, AcousticConstants::default(), mics, opts).unwrap()
}

fn random(len: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn spec(rho: f64) -> AdmissibleSetSpec {
    AdmissibleSetSpec::new(1.5, rho, BoxBounds::unbounded()).unwrap()
}

#[test]
fn bump_profile_values() {
    assert_eq!(bump_value(0.1, 0.0), 1.0);
    assert!((bump_value(0.1, 0.1 / 2f64.sqrt()) - 0.25).abs() < 1e-15);
    assert_eq!(bump_value(0.1, 0.1), 0.0);
    assert_eq!(bump_value(0.1, 0.3), 0.0);
}

#[test]
fn bumps_are_kronecker_at_mics() {
    let p = ring_problem(64, &AcousticOptions::default());
    let nodes = p.mics().nodes();
    for (l, bump) in p.bumps().support.iter().enumerate() {
        for (j, &m) in nodes.iter().enumerate() {
            let v = bump.iter().find(|(n, _)| *n == m).map_or(0.0, |e| e.1);
            assert_eq!(v, if l == j { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn mic_geometry_errors() {
    let g = square(16);
    assert!(MicArray::snapped(&g, &[[0.5, 0.5], [0.51, 0.5]]).is_err());
    assert!(MicArray::snapped(&g, &[[0.0, 0.5]]).is_err());
    assert!(MicArray::snapped(&g, &[[1.5, 0.5]]).is_err());
    let mics = MicArray::snapped(&g, &[[0.5, 0.5], [0.625, 0.5]]).unwrap();
    let opts = AcousticOptions { bump_radius: Some(0.07), ..Default::default() };
    assert!(matches!(
        AcousticProblem::new(g.clone(), AcousticConstants::default(), mics.clone(), &opts),
        Err(Error::Geometry(_))
    ));
    let opts = AcousticOptions { skip_f: true, skip_g: true, ..Default::default() };
    assert!(AcousticProblem::new(g.clone(), AcousticConstants::default(), mics.clone(), &opts).is_err());
    let bad = AcousticConstants { omega: 0.0, ..Default::default() };
    assert!(AcousticProblem::new(g, bad, mics, &AcousticOptions::default()).is_err());
}

#[test]
fn electrode_segments_are_rejected() {
    let g = square(16);
    let mics = MicArray::snapped(&g, &[[0.5, 0.5]]).unwrap();
    let layout = BoundaryLayout::uniform(g.boundary(), SegmentKind::Gap);
    let opts = AcousticOptions { layout: Some(layout), ..Default::default() };
    assert!(AcousticProblem::new(g, AcousticConstants::default(), mics, &opts).is_err());
}

#[test]
fn lift_examples() {
    let p = ring_problem(32, &AcousticOptions::default());
    let l = p.mics().len();
    assert!(p.lift(&vec![0.0; 2 * l]).unwrap().iter().all(|&v| v == 0.0));
    assert!(p.lift(&vec![0.0; 2 * l + 1]).is_err());
    let mut y = vec![0.0; 2 * l];
    y[2] = 2.0;
    let u = p.lift(&y).unwrap();
    let s = p.state(&u);
    let n = p.grid().num_nodes();
    let mut expect = vec![0.0; n];
    for &(k, b) in &p.bumps().support[2] {
        expect[k] = 2.0 * b;
    }
    assert_eq!(s.p_re.as_slice(), expect.as_slice());
    assert!(s.p_im.as_slice().iter().chain(&s.v_re.x).chain(&s.v_im.y).all(|&v| v == 0.0));
}

#[test]
fn right_inverse_round_trip() {
    let p = ring_problem(64, &AcousticOptions::default());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let y = random(p.data_len(), 1.0, &mut rng);
        let back = p.observe(&p.lift(&y).unwrap());
        assert_eq!(back, y);
    }
}

#[test]
fn zero_everything_has_zero_residual() {
    let p = ring_problem(16, &AcousticOptions::default());
    let r = p.residual_total(&vec![0.0; p.param_len()], &vec![0.0; p.state_len()]).unwrap();
    assert!(r.q1.x.iter().chain(&r.q2.y).chain(r.q3.as_slice()).chain(r.q4.as_slice()).all(|&v| v == 0.0));
    assert!(r.boundary.iter().all(|b| b == &[0.0, 0.0]));
}

/// Plane wave p = e^{ik·x} (with v from the momentum equation); returns
/// max interior |q| and the interior sin-normalized q₃ at a sample node.
fn plane_wave_residual(n: usize, kscale: f64) -> (f64, f64) {
    let g = square(n);
    let c = AcousticConstants::default();
    let mics = MicArray::snapped(&g, &[[0.5, 0.5]]).unwrap();
    let p = AcousticProblem::new(g.clone(), c, mics, &AcousticOptions::default()).unwrap();
    let kn = kscale * c.omega / c.c0;
    let k = [kn * 0.6, kn * 0.8];
    let phase = |x: [f64; 2]| k[0] * x[0] + k[1] * x[1];
    let s = c.rho0 * c.omega;
    let state = AcousticState {
        p_re: g.sample_nodes(|x| phase(x).cos()),
        p_im: g.sample_nodes(|x| phase(x).sin()),
        v_re: g.sample_cells(|x| [-k[0] * phase(x).cos() / s, -k[1] * phase(x).cos() / s]),
        v_im: g.sample_cells(|x| [-k[0] * phase(x).sin() / s, -k[1] * phase(x).sin() / s]),
    };
    let r = p.residual_total(&vec![0.0; p.param_len()], &state.to_vec()).unwrap();
    let mut worst = 0.0f64;
    for c in 0..g.num_cells() {
        let [a, b] = g.cell_center(c);
        if a > 0.1 && a < 0.9 && b > 0.1 && b < 0.9 {
            worst = worst.max(r.q1.x[c].abs()).max(r.q1.y[c].abs()).max(r.q2.x[c].abs()).max(r.q2.y[c].abs());
        }
    }
    let mut ratio = f64::NAN;
    for node in 0..g.num_nodes() {
        let [a, b] = g.node_position(node);
        if a > 0.1 && a < 0.9 && b > 0.1 && b < 0.9 {
            worst = worst.max(r.q3[node].abs()).max(r.q4[node].abs());
            let sn = phase([a, b]).sin();
            if sn.abs() > 0.9 && ratio.is_nan() {
                ratio = r.q3[node] / sn;
            }
        }
    }
    (worst, ratio)
}

#[test]
fn plane_wave_residual_is_second_order() {
    let (coarse, _) = plane_wave_residual(32, 1.0);
    let (fine, _) = plane_wave_residual(64, 1.0);
    let ratio = coarse / fine;
    assert!((ratio - 4.0).abs() <= 0.8, "refinement ratio {ratio} ({coarse:e} -> {fine:e})");
}

#[test]
fn mismatched_wavenumber_leaves_a_residual() {
    let c = AcousticConstants::default();
    let (_, ratio) = plane_wave_residual(128, 2.0);
    let expect = 3.0 * c.omega / (c.c0 * c.c0);
    assert!((ratio - expect).abs() <= 0.05 * expect, "q3/sin = {ratio}, expected {expect}");
}

#[test]
fn sparsity_norm_block_oracle() {
    let p = ring_problem(16, &AcousticOptions::default());
    let g = p.grid();
    assert_eq!(p.sparsity_norm(&vec![0.0; p.param_len()]), 0.0);
    let mut s = SourceSet::zeros(g);
    for j in 2..5 {
        for i in 2..5 {
            let c = g.cell_index(i, j);
            s.f_re.x[c] = g.cell_center(c)[0];
        }
    }
    // direct summation: a node collects +½·hy·f_x from the cells to its
    // right and −½·hy·f_x from the cells to its left
    let w = g.nx + 1;
    let mut oracle = 0.0;
    for node in 0..g.num_nodes() {
        let (i, j) = ((node % w) as isize, (node / w) as isize);
        let mut acc = 0.0;
        for (di, dj, sign) in [(0, 0, 1.0), (0, -1, 1.0), (-1, 0, -1.0), (-1, -1, -1.0)] {
            let (ci, cj) = (i + di, j + dj);
            if ci >= 0 && cj >= 0 && (ci as usize) < g.nx && (cj as usize) < g.ny {
                acc += sign * 0.5 * g.hy * s.f_re.x[g.cell_index(ci as usize, cj as usize)];
            }
        }
        oracle += f64::abs(acc);
    }
    let value = p.sparsity_norm(&s.to_params());
    assert!((value - oracle).abs() <= 1e-12 * oracle, "{value} vs {oracle}");
}

#[test]
fn regularizer_examples() {
    let p = ring_problem(16, &AcousticOptions::default());
    let g = p.grid();
    let zx = vec![0.0; p.param_len()];
    let zu = vec![0.0; p.state_len()];
    assert_eq!(p.regularizer(&zx, &zu), 0.0);
    let mut s = SourceSet::zeros(g);
    s.g_re[g.node_index(3, 4)] = 1.0;
    assert!((p.regularizer(&s.to_params(), &zu) - 0.5 * g.cell_area()).abs() < 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(p.param_len(), 1.0, &mut rng);
    let u = random(p.state_len(), 1.0, &mut rng);
    let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let u2: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
    let (a, b) = (p.regularizer(&x, &u), p.regularizer(&x2, &u2));
    assert!((b - 4.0 * a).abs() <= 1e-12 * b);
}

#[test]
fn misfit_is_quadratic_along_rays() {
    let p = ring_problem(16, &AcousticOptions::default());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x0 = random(p.param_len(), 1.0, &mut rng);
    let u0 = random(p.state_len(), 1.0, &mut rng);
    let dx = random(p.param_len(), 1.0, &mut rng);
    let du = random(p.state_len(), 1.0, &mut rng);
    let q = |t: f64| {
        let x: Vec<f64> = x0.iter().zip(&dx).map(|(a, b)| a + t * b).collect();
        let u: Vec<f64> = u0.iter().zip(&du).map(|(a, b)| a + t * b).collect();
        p.misfit_total(&x, &u).unwrap()
    };
    let (qm, q0, qp) = (q(-1.0), q(0.0), q(1.0));
    let (a, b) = (0.5 * (qp + qm) - q0, 0.5 * (qp - qm));
    for t in [-2.0, -0.5, 0.3, 1.7, 3.0] {
        let fit = q0 + b * t + a * t * t;
        assert!((q(t) - fit).abs() <= 1e-10 * q(t).abs().max(q0), "t = {t}");
    }
}

fn fd_check(p: &AcousticProblem, x: &[f64], state: &[f64], y: &ObservationVector, alpha: f64, rng: &mut ChaCha8Rng) {
    let (_, gx, gu) = cost_gradient(p, x, state, y, alpha).unwrap();
    let h = 1e-5;
    let cost = |x: &[f64], u: &[f64]| assemble_cost(p, x, u, y, alpha).unwrap();
    let shift = |v: &[f64], d: &[f64], t: f64| -> Vec<f64> { v.iter().zip(d).map(|(a, b)| a + t * b).collect() };
    let (m, n) = (p.grid().num_cells(), p.grid().num_nodes());
    let x_blocks = [(0, 2 * m), (2 * m, 4 * m), (4 * m, 4 * m + n), (4 * m + n, 4 * m + 2 * n)];
    for (b, &(lo, hi)) in x_blocks.iter().enumerate() {
        let mut d = vec![0.0; x.len()];
        d[lo..hi].iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let fd = (cost(&shift(x, &d, h), state) - cost(&shift(x, &d, -h), state)) / (2.0 * h);
        let an: f64 = gx.iter().zip(&d).map(|(a, b)| a * b).sum();
        assert!((fd - an).abs() <= 1e-5 * an.abs(), "source block {b}: fd {fd} vs {an}");
    }
    let u_blocks = [(0, n), (n, 2 * n), (2 * n, 2 * n + 2 * m), (2 * n + 2 * m, 2 * n + 4 * m)];
    for (b, &(lo, hi)) in u_blocks.iter().enumerate() {
        let mut d = vec![0.0; state.len()];
        d[lo..hi].iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let fd = (cost(x, &shift(state, &d, h)) - cost(x, &shift(state, &d, -h))) / (2.0 * h);
        let an: f64 = gu.iter().zip(&d).map(|(a, b)| a * b).sum();
        assert!((fd - an).abs() <= 1e-5 * an.abs(), "state block {b}: fd {fd} vs {an}");
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    // mixed boundary: lower half absorbing, upper half rigid
    let g = square(12);
    let half = 0.5 * g.boundary().perimeter();
    let layout = BoundaryLayout::new(
        g.boundary(),
        vec![
            Segment { kind: SegmentKind::Absorbing, start: 0.0, end: half },
            Segment { kind: SegmentKind::Rigid, start: half, end: 2.0 * half },
        ],
    )
    .unwrap();
    let mics = MicArray::ring(&g, [0.5, 0.5], 0.2, 6).unwrap();
    let p = AcousticProblem::new(g, AcousticConstants::default(), mics, &AcousticOptions { layout: Some(layout), ..Default::default() }).unwrap();
    for _ in 0..3 {
        let x = random(p.param_len(), 1.0, &mut rng);
        let u = random(p.state_len(), 1.0, &mut rng);
        let y = ObservationVector::new(random(p.data_len(), 1.0, &mut rng), p.data_blocks(), 0.0).unwrap();
        fd_check(&p, &x, &u, &y, 0.0, &mut rng);
        fd_check(&p, &x, &u, &y, 0.7, &mut rng);
    }
}

#[test]
fn smoothed_constraint_gradient() {
    let p = ring_problem(12, &AcousticOptions::default());
    let sp = spec(3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(p.param_len(), 1.0, &mut rng);
    let u = vec![0.0; p.state_len()];
    let mut gx = vec![0.0; x.len()];
    let v = p.constraint_smooth(&x, &u, &sp, 1.0, Some(&mut gx), None).unwrap();
    let exact = p.sparsity_norm(&x);
    assert!(v <= exact && exact - v <= 1e-3 * sp.rho + 1e-12);
    let d = random(x.len(), 1.0, &mut rng);
    let h = 1e-6;
    let at = |t: f64| {
        let xs: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
        p.constraint_smooth(&xs, &u, &sp, 0.0, None, None).unwrap()
    };
    let fd = (at(h) - at(-h)) / (2.0 * h);
    let an: f64 = gx.iter().zip(&d).map(|(a, b)| a * b).sum();
    assert!((fd - an).abs() <= 1e-5 * an.abs(), "{fd} vs {an}");
}

#[test]
fn measurement_region_masks_sources() {
    let p = ring_problem(32, &AcousticOptions::default());
    let (m, n) = (p.grid().num_cells(), p.grid().num_nodes());
    let mask = p.param_mask();
    let region = p.region();
    for c in 0..m {
        assert_eq!(mask[c], !region.cells[c]);
    }
    for k in 0..n {
        assert_eq!(mask[4 * m + k], !region.nodes[k]);
    }
    let mut x = vec![1.0; p.param_len()];
    p.project_params(&mut x, &spec(1.0));
    assert!(x.iter().zip(&mask).all(|(&v, &free)| if free { v == 1.0 } else { v == 0.0 }));
    let q = ring_problem(32, &AcousticOptions { skip_g: true, ..Default::default() });
    assert!(q.param_mask()[4 * m..].iter().all(|&f| !f));
    let q = ring_problem(32, &AcousticOptions { skip_f: true, ..Default::default() });
    assert!(q.param_mask()[..4 * m].iter().all(|&f| !f));
}

#[test]
fn zero_data_gives_zero_sources() {
    let p = ring_problem(16, &AcousticOptions::default());
    let y = ObservationVector::new(vec![0.0; p.data_len()], p.data_blocks(), 1e-3).unwrap();
    let w = RegularizationWeights::rule(1e-4, 1e6).unwrap();
    let cfg = SolverConfig { max_iterations: 20, ..SolverConfig::default() };
    let r = solve_inverse(&p, &y, &w, &spec(1.0), &cfg).unwrap();
    assert!(r.constraint_satisfied);
    assert!(r.params.iter().all(|&v| v == 0.0));
}

#[test]
fn small_solve_is_feasible_and_respects_the_mask() {
    let p = ring_problem(16, &AcousticOptions::default());
    let g = p.grid();
    let truth = SourceSet::plateau(g, [0.15, 0.8], 0.1, 1.0).to_params();
    let syn = synthesize_pressure(&p, &truth, &AcousticSynthesisConfig::default()).unwrap();
    let y = syn.data.with_values(syn.data.values().to_vec(), 1e-2).unwrap();
    let rho = 1.1 * p.sparsity_norm(&truth);
    let w = RegularizationWeights::rule(1e-4, 1e6).unwrap();
    let cfg = SolverConfig { max_iterations: 60, state_steps: 5, ..SolverConfig::default() };
    let r = solve_inverse(&p, &y, &w, &spec(rho), &cfg).unwrap();
    assert!(r.constraint_satisfied, "{}", r.diagnostic);
    let disc = p.observe(&r.state).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(disc <= 1.05 * 1.5 * 1e-2);
    let mask = p.param_mask();
    assert!(r.params.iter().zip(&mask).all(|(&v, &free)| free || v == 0.0));
}

#[test]
fn synthesis_of_zero_sources_is_zero() {
    let p = ring_problem(16, &AcousticOptions::default());
    let syn = synthesize_pressure(&p, &vec![0.0; p.param_len()], &AcousticSynthesisConfig::default()).unwrap();
    assert!(syn.data.values().iter().all(|&v| v == 0.0));
    assert_eq!(syn.misfit, 0.0);
}

#[test]
fn localization_helpers() {
    let g = square(8);
    let mut v = vec![0.0; g.num_nodes()];
    v[g.node_index(2, 3)] = 2.0;
    v[g.node_index(6, 6)] = 1.0;
    v[g.node_index(6, 5)] = 0.5;
    assert_eq!(argmax_node(&v), g.node_index(2, 3));
    assert_eq!(local_maxima(&g, &v, 0.1), vec![g.node_index(2, 3), g.node_index(6, 6)]);
    assert_eq!(node_distance_cells(&g, g.node_index(2, 3), g.node_index(6, 6)), 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sparsity_norm_is_a_seminorm(seed in 0u64..1000, c in -3.0f64..3.0) {
        let p = ring_problem(16, &AcousticOptions::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(p.param_len(), 1.0, &mut rng);
        let b = random(p.param_len(), 1.0, &mut rng);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let (na, nb, ns) = (p.sparsity_norm(&a), p.sparsity_norm(&b), p.sparsity_norm(&sum));
        prop_assert!(ns <= na + nb + 1e-12 * (na + nb));
        let scaled: Vec<f64> = a.iter().map(|x| c * x).collect();
        prop_assert!((p.sparsity_norm(&scaled) - c.abs() * na).abs() <= 1e-12 * na.max(1.0));
    }

    #[test]
    fn adjoints_are_transposes(seed in 0u64..1000) {
        let p = ring_problem(16, &AcousticOptions::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = random(p.data_len(), 1.0, &mut rng);
        let u = random(p.state_len(), 1.0, &mut rng);
        let lhs: f64 = p.lift(&y).unwrap().iter().zip(&u).map(|(a, b)| a * b).sum();
        let rhs: f64 = p.lift_adjoint(&u).unwrap().iter().zip(&y).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        let mut gu = vec![0.0; p.state_len()];
        p.observe_adjoint(&y, 1.0, &mut gu);
        let lhs: f64 = p.observe(&u).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = gu.iter().zip(&u).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }
}
