use super::cost::{add_into, check_dims, check_finite, max_abs, smooth_max_abs};
use super::{AdmissibleSetSpec, ObservationVector, ProblemInstance, SolverConfig, SolverResult, StepRule};
use crate::error::{Error, Result};
use std::collections::VecDeque;

/// Constraints count as satisfied within this factor of their bound.
pub const FEASIBILITY_FACTOR: f64 = 1.05;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 50;
const STALL_WINDOW: usize = 10;

/// State parameterization. In kernel mode û = v − Cʳⁱ(C v) + Cʳⁱ(d), so
/// C(û) = d exactly; otherwise û = v and d is empty.
struct StateMap<'a, P: ?Sized> {
    problem: &'a P,
    kernel: bool,
}

impl<P: ProblemInstance + ?Sized> StateMap<'_, P> {
    fn state(&self, v: &[f64], d: &[f64]) -> Result<Vec<f64>> {
        if !self.kernel {
            return Ok(v.to_vec());
        }
        let p = self.problem;
        let cv = p.observe(v);
        let a = p.lift(&cv)?;
        let b = p.lift(d)?;
        Ok(v.iter().zip(&a).zip(&b).map(|((v, a), b)| v - a + b).collect())
    }

    /// Pulls a gradient with respect to û back to (v, d).
    fn pullback(&self, gu: &[f64], gv: &mut [f64], gd: &mut [f64]) {
        gv.copy_from_slice(gu);
        if self.kernel {
            let a = self.problem.lift_adjoint(gu).expect("kernel mode requires lift_adjoint");
            self.problem.observe_adjoint(&a, -1.0, gv);
            gd.copy_from_slice(&a);
        }
    }
}

/// Penalized cost for one stage.
struct Penalized<'a, P: ?Sized> {
    problem: &'a P,
    map: StateMap<'a, P>,
    spec: &'a AdmissibleSetSpec,
    y: &'a [f64],
    lift: Vec<f64>,
    alpha: f64,
    reduced: bool,
    tau_delta: f64,
    disc_scale: f64,
    beta: f64,
    weight: f64,
    x_mask: Vec<bool>,
    u_mask: Vec<bool>,
}

impl<P: ProblemInstance + ?Sized> Penalized<'_, P> {
    fn discrepancy_vector(&self, state: &[f64], total: &[f64]) -> Vec<f64> {
        if self.reduced {
            self.problem.observe(state)
        } else {
            self.problem.observe(total).iter().zip(self.y).map(|(c, y)| c - y).collect()
        }
    }

    fn eval(&self, x: &[f64], v: &[f64], d: &[f64], grads: Option<(&mut [f64], &mut [f64], &mut [f64])>) -> Result<f64> {
        let p = self.problem;
        let u = self.map.state(v, d)?;
        let u = u.as_slice();
        let total = add_into(u, &self.lift);
        let mut value;
        match grads {
            None => {
                value = p.misfit_total(x, &total)? + self.alpha * p.regularizer(x, u);
                if !self.map.kernel {
                    let d = self.discrepancy_vector(u, &total);
                    let viol = (smooth_max_abs(&d, self.beta, None) - self.tau_delta).max(0.0) / self.disc_scale;
                    value += self.weight * viol * viol;
                }
                if let Some(r) = p.constraint_smooth(x, u, self.spec, 0.0, None, None) {
                    let v = (r - self.spec.rho).max(0.0) / self.rho_scale();
                    value += self.weight * v * v;
                }
                value += p.membership_penalty_total(&total, self.membership_scale(), None);
            }
            Some((gx, gv, gd)) => {
                let mut gu = vec![0.0; u.len()];
                gx.iter_mut().for_each(|v| *v = 0.0);
                value = p.misfit_gradient_total(x, &total, gx, &mut gu)?;
                value += self.alpha * p.regularizer_gradient(x, u, self.alpha, gx, &mut gu);
                if !self.map.kernel {
                    let d = self.discrepancy_vector(u, &total);
                    let mut w = vec![0.0; d.len()];
                    let viol = (smooth_max_abs(&d, self.beta, Some(&mut w)) - self.tau_delta).max(0.0) / self.disc_scale;
                    if viol > 0.0 {
                        value += self.weight * viol * viol;
                        p.observe_adjoint(&w, 2.0 * self.weight * viol / self.disc_scale, &mut gu);
                    }
                }
                if let Some(r) = p.constraint_smooth(x, u, self.spec, 0.0, None, None) {
                    let v = (r - self.spec.rho).max(0.0) / self.rho_scale();
                    if v > 0.0 {
                        value += self.weight * v * v;
                        let scale = 2.0 * self.weight * v / self.rho_scale();
                        p.constraint_smooth(x, u, self.spec, scale, Some(&mut *gx), Some(&mut gu));
                    }
                }
                value += p.membership_penalty_total(&total, self.membership_scale(), Some(&mut gu));
                for (g, &free) in gx.iter_mut().zip(&self.x_mask) {
                    if !free {
                        *g = 0.0;
                    }
                }
                self.map.pullback(&gu, gv, gd);
                for (g, &free) in gv.iter_mut().zip(&self.u_mask) {
                    if !free {
                        *g = 0.0;
                    }
                }
                if !gx.iter().chain(gv.iter()).chain(gd.iter()).all(|v| v.is_finite()) {
                    return Err(Error::NumericalBlowUp("non-finite gradient".into()));
                }
            }
        }
        Ok(value)
    }

    fn rho_scale(&self) -> f64 {
        if self.spec.rho > 0.0 { self.spec.rho } else { 1.0 }
    }

    fn membership_scale(&self) -> f64 {
        self.weight / (self.disc_scale * self.disc_scale)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Two-loop recursion: returns `-H g`.
fn lbfgs_direction(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y) in pairs.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push((a, rho));
    }
    if let Some((s, y)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y), (a, rho)) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

struct Feasibility {
    discrepancy: f64,
    constraint: f64,
    feasible: bool,
}

fn feasibility<P: ProblemInstance + ?Sized>(
    problem: &P,
    spec: &AdmissibleSetSpec,
    y: &ObservationVector,
    lift: &[f64],
    x: &[f64],
    u: &[f64],
) -> Feasibility {
    let discrepancy = if problem.image_is_full() {
        max_abs(&problem.observe(u))
    } else {
        let c = problem.observe(&add_into(u, lift));
        c.iter().zip(y.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let constraint = problem.constraint(x, u, spec);
    let tau_delta = spec.tau * y.noise_level();
    let floor = 1e-10 * max_abs(y.values()).max(1.0);
    let feasible = discrepancy <= FEASIBILITY_FACTOR * tau_delta + floor
        && constraint <= FEASIBILITY_FACTOR * spec.rho + 1e-12 * spec.rho.abs().max(1.0);
    Feasibility { discrepancy, constraint, feasible }
}

/// Penalty-method minimization of Q_E + α·R over the admissible set.
///
/// Outer iterations update the parameters (closed-form block minimizer when
/// the problem provides one, else a projected spectral-gradient step), the
/// data-ball component d (projected spectral-gradient step, kernel mode
/// only) and the state (L-BFGS), each step with Armijo backtracking.
/// Constraints that are not built in are penalized with a weight that grows
/// geometrically until they hold within [`FEASIBILITY_FACTOR`]. The best
/// feasible point seen (the initial point included) is returned.
pub fn minimize<P: ProblemInstance + ?Sized>(
    problem: &P,
    y: &ObservationVector,
    alpha: f64,
    spec: &AdmissibleSetSpec,
    config: &SolverConfig,
) -> Result<SolverResult> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    config.validate()?;
    let (mut x, mut v) = problem.initial_point(spec);
    check_dims(problem, &x, &v, y)?;
    let delta = y.noise_level();
    let tau_delta = spec.tau * delta;
    let lift = problem.lift(y.values())?;
    check_finite("lifted data", &lift)?;
    let x_mask = problem.param_mask();
    let u_mask = problem.state_mask();
    problem.project_params(&mut x, spec);
    for (val, &free) in v.iter_mut().zip(&u_mask) {
        if !free {
            *val = 0.0;
        }
    }
    let kernel = problem.image_is_full() && problem.lift_adjoint(&vec![0.0; v.len()]).is_some();
    let map = StateMap { problem, kernel };
    let mut d = if kernel {
        let mut d = problem.observe(&v);
        problem.project_data_ball(&mut d, tau_delta);
        d
    } else {
        Vec::new()
    };

    let objective = |x: &[f64], u: &[f64]| -> Result<(f64, f64, f64)> {
        let q = problem.misfit_total(x, &add_into(u, &lift))?;
        let r = problem.regularizer(x, u);
        Ok((q + alpha * r, q, r))
    };

    let mut best: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    {
        let u = map.state(&v, &d)?;
        if feasibility(problem, spec, y, &lift, &x, &u).feasible {
            let t = objective(&x, &u)?.0;
            best = Some((x.clone(), u, t));
        }
    }

    let mut trace = Vec::new();
    let mut stage_starts = Vec::new();
    let mut iterations = 0;
    let mut diagnostic = String::new();
    let (nx, nu, nd) = (x.len(), v.len(), d.len());
    let mut gx = vec![0.0; nx];
    let mut gv = vec![0.0; nu];
    let mut gd = vec![0.0; nd];
    let mut gx_new = vec![0.0; nx];
    let mut gv_new = vec![0.0; nu];
    let mut gd_new = vec![0.0; nd];
    let mut stages = 0;

    for stage in 0..config.penalty.max_stages {
        stages = stage + 1;
        let pen = Penalized {
            problem,
            map: StateMap { problem, kernel },
            spec,
            y: y.values(),
            lift: lift.clone(),
            alpha,
            reduced: problem.image_is_full(),
            tau_delta,
            disc_scale: if tau_delta > 0.0 { tau_delta } else { 1.0 },
            beta: if tau_delta > 0.0 { (100.0 / tau_delta).max(1e3) } else { 1e3 },
            weight: config.penalty.initial_weight * config.penalty.growth.powi(stage as i32),
            x_mask: x_mask.clone(),
            u_mask: u_mask.clone(),
        };
        let mut phi = pen.eval(&x, &v, &d, Some((&mut gx, &mut gv, &mut gd)))?;
        stage_starts.push(trace.len());
        trace.push(phi);
        let mut pairs: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::new();
        let mut x_step = config.initial_step / max_abs(&gx).max(1e-300);
        let mut d_step = if tau_delta > 0.0 { tau_delta / max_abs(&gd).max(1e-300) } else { 0.0 };
        let mut stall = 0;

        for _ in 0..config.max_iterations {
            iterations += 1;
            let phi_prev = phi;
            let mut moved = false;

            // parameter block: closed-form minimizer when available
            let mut exact = false;
            if let Some(mut xt) = problem.param_argmin(&x, &map.state(&v, &d)?, &add_into(&map.state(&v, &d)?, &lift), alpha, spec) {
                problem.project_params(&mut xt, spec);
                if xt == x {
                    exact = true;
                } else if pen.eval(&xt, &v, &d, None)? <= phi {
                    phi = pen.eval(&xt, &v, &d, Some((&mut gx, &mut gv, &mut gd)))?;
                    x = xt;
                    moved = true;
                    exact = true;
                }
            }
            if !exact && nx > 0 && max_abs(&gx) > 0.0 {
                let mut t = x_step;
                let mut accepted = None;
                for _ in 0..MAX_BACKTRACKS {
                    let mut xt: Vec<f64> = x.iter().zip(&gx).map(|(a, g)| a - t * g).collect();
                    problem.project_params(&mut xt, spec);
                    let dx: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
                    if max_abs(&dx) == 0.0 {
                        break;
                    }
                    let ft = pen.eval(&xt, &v, &d, None)?;
                    if config.step_rule == StepRule::Fixed || ft <= phi + ARMIJO_C1 * dot(&gx, &dx) {
                        accepted = Some((xt, dx));
                        break;
                    }
                    t *= 0.5;
                }
                if let Some((xt, dx)) = accepted {
                    phi = pen.eval(&xt, &v, &d, Some((&mut gx_new, &mut gv, &mut gd)))?;
                    let dg: Vec<f64> = gx_new.iter().zip(&gx).map(|(a, b)| a - b).collect();
                    let sy = dot(&dx, &dg);
                    x_step = if config.step_rule == StepRule::Fixed {
                        x_step
                    } else if sy > 0.0 {
                        (dot(&dx, &dx) / sy).min(1e12)
                    } else {
                        t * 2.0
                    };
                    x = xt;
                    std::mem::swap(&mut gx, &mut gx_new);
                    moved = true;
                } else {
                    x_step = config.initial_step / max_abs(&gx).max(1e-300);
                }
            }

            // data-ball block
            if nd > 0 && tau_delta > 0.0 && max_abs(&gd) > 0.0 {
                let mut t = d_step;
                let mut accepted = None;
                for _ in 0..MAX_BACKTRACKS {
                    let mut dt: Vec<f64> = d.iter().zip(&gd).map(|(a, g)| a - t * g).collect();
                    problem.project_data_ball(&mut dt, tau_delta);
                    let dd: Vec<f64> = dt.iter().zip(&d).map(|(a, b)| a - b).collect();
                    if max_abs(&dd) == 0.0 {
                        break;
                    }
                    let ft = pen.eval(&x, &v, &dt, None)?;
                    if ft <= phi + ARMIJO_C1 * dot(&gd, &dd) {
                        accepted = Some((dt, dd));
                        break;
                    }
                    t *= 0.5;
                }
                if let Some((dt, dd)) = accepted {
                    phi = pen.eval(&x, &v, &dt, Some((&mut gx, &mut gv, &mut gd_new)))?;
                    let dg: Vec<f64> = gd_new.iter().zip(&gd).map(|(a, b)| a - b).collect();
                    let sy = dot(&dd, &dg);
                    d_step = if sy > 0.0 { dot(&dd, &dd) / sy } else { t * 2.0 };
                    d = dt;
                    std::mem::swap(&mut gd, &mut gd_new);
                    moved = true;
                } else {
                    d_step = tau_delta / max_abs(&gd).max(1e-300);
                }
            }

            // state block
            for _ in 0..config.state_steps {
                if max_abs(&gv) == 0.0 {
                    break;
                }
                let mut dir = if config.step_rule == StepRule::Fixed {
                    gv.iter().map(|g| -config.initial_step * g).collect()
                } else {
                    lbfgs_direction(&gv, &pairs)
                };
                let mut slope = dot(&gv, &dir);
                if !(slope < 0.0) {
                    pairs.clear();
                    dir = lbfgs_direction(&gv, &pairs);
                    slope = dot(&gv, &dir);
                }
                if pairs.is_empty() && config.step_rule == StepRule::Backtracking {
                    let s = config.initial_step / max_abs(&dir).max(1e-300);
                    dir.iter_mut().for_each(|v| *v *= s.min(1.0));
                    slope = dot(&gv, &dir);
                }
                let mut t = 1.0;
                let mut accepted = None;
                for _ in 0..MAX_BACKTRACKS {
                    let vt: Vec<f64> = v.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
                    let ft = pen.eval(&x, &vt, &d, None)?;
                    if config.step_rule == StepRule::Fixed || ft <= phi + ARMIJO_C1 * t * slope {
                        accepted = Some(vt);
                        break;
                    }
                    t *= 0.5;
                }
                let Some(vt) = accepted else {
                    pairs.clear();
                    break;
                };
                phi = pen.eval(&x, &vt, &d, Some((&mut gx, &mut gv_new, &mut gd)))?;
                let s: Vec<f64> = vt.iter().zip(&v).map(|(a, b)| a - b).collect();
                let yv: Vec<f64> = gv_new.iter().zip(&gv).map(|(a, b)| a - b).collect();
                if dot(&s, &yv) > 1e-14 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
                    pairs.push_back((s, yv));
                    if pairs.len() > config.lbfgs_memory {
                        pairs.pop_front();
                    }
                }
                v = vt;
                std::mem::swap(&mut gv, &mut gv_new);
                moved = true;
            }
            if !phi.is_finite() {
                return Err(Error::NumericalBlowUp("penalized cost is not finite".into()));
            }
            trace.push(phi);
            if !moved {
                break;
            }
            let rel = (phi_prev - phi) / phi_prev.abs().max(1e-300);
            if rel < config.gradient_tolerance {
                stall += 1;
                if stall >= STALL_WINDOW {
                    break;
                }
            } else {
                stall = 0;
            }
        }

        let u = map.state(&v, &d)?;
        let f = feasibility(problem, spec, y, &lift, &x, &u);
        if f.feasible {
            let t = objective(&x, &u)?.0;
            if best.as_ref().map_or(true, |b| t <= b.2) {
                best = Some((x.clone(), u, t));
            }
            break;
        }
        diagnostic = format!(
            "stage {stage}: discrepancy {:.3e} (bound {:.3e}), constraint {:.3e} (bound {:.3e})",
            f.discrepancy, tau_delta, f.constraint, spec.rho
        );
    }

    let (xr, ur, satisfied) = match best {
        Some((bx, bu, _)) => (bx, bu, true),
        None => {
            let u = map.state(&v, &d)?;
            (x, u, false)
        }
    };
    let f = feasibility(problem, spec, y, &lift, &xr, &ur);
    let (cost, q, r) = objective(&xr, &ur)?;
    if satisfied {
        diagnostic = format!("feasible after {stages} penalty stage(s)");
    } else {
        diagnostic = format!("no feasible point after {stages} penalty stage(s); {diagnostic}");
    }
    Ok(SolverResult {
        b_norm: problem.b_norm(&xr, &ur),
        params: xr,
        state: ur,
        final_cost: cost,
        misfit: q,
        regularizer: r,
        cost_trace: trace,
        stage_starts,
        discrepancy_value: f.discrepancy,
        constraint_value: f.constraint,
        constraint_satisfied: satisfied,
        iterations,
        feasibility_factor: FEASIBILITY_FACTOR,
        diagnostic,
    })
}
