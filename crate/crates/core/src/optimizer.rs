//! Projected descent for the reduced problem.
//!
//! Gradients arrive in the plain pairing of the nodal arrays; directions are
//! their Riesz representatives in the quadrature-weighted inner product
//! (optionally smoothed with `(-Lap_N + 1)^{s_ell}` on the profile), combined
//! with an L-BFGS two-loop recursion. Steps are projected onto the admissible
//! set and accepted by an Armijo test on the projected displacement.
//! Line-search trials are evaluated in batches; the accepted trial is always
//! the smallest index that passes, so the iterates do not depend on the
//! batch width.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryProfile, ReferenceDomain};
use crate::objective::{ControlDirection, ControlVector, Evaluation, ObjectiveBreakdown, ReducedProblem};
use crate::parallel::BatchEvaluator;
use crate::params::TimeGrid;

/// Consecutive rejected trials before the line search gives up.
pub const MAX_REJECTIONS: usize = 20;

/// Search-direction rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescentMode {
    GradientDescent,
    Lbfgs { memory: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub armijo_c1: f64,
    /// Multiplier on the first trial step of every line search.
    pub step_init: f64,
    pub step_shrink: f64,
    /// Absolute tolerance on the gradient norm; `None` uses
    /// `1e-6 * (1 + J(initial))`.
    pub grad_tol: Option<f64>,
    pub mode: DescentMode,
    pub smooth_riesz: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            armijo_c1: 1e-4,
            step_init: 1.0,
            step_shrink: 0.5,
            grad_tol: None,
            mode: DescentMode::Lbfgs { memory: 8 },
            smooth_riesz: true,
        }
    }
}

impl OptimizerConfig {
    pub fn check(&self) -> Result<()> {
        let ok = self.armijo_c1 > 0.0
            && self.armijo_c1 < 1.0
            && self.step_init > 0.0
            && self.step_shrink > 0.0
            && self.step_shrink < 1.0
            && self.grad_tol.is_none_or(|t| t >= 0.0)
            && !matches!(self.mode, DescentMode::Lbfgs { memory: 0 });
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(alloc::format!("optimizer settings out of range: {self:?}")))
        }
    }
}

/// Why the iteration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchStalled,
}

/// One accepted iterate (iteration 0 is the projected starting point).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateRecord {
    pub iteration: usize,
    pub breakdown: ObjectiveBreakdown,
    /// Dual norm of the full gradient and of its three blocks.
    pub grad_norm: f64,
    pub grad_norm_g: f64,
    pub grad_norm_h: f64,
    pub grad_norm_ell: f64,
    /// Accepted step length (0 at iteration 0).
    pub step: f64,
    /// Trials rejected before acceptance.
    pub rejected: usize,
    /// Whether the profile is admissible and the state non-degenerate.
    pub feasible: bool,
    /// `min (1 - 2k p)` over the trajectory.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateHistory {
    pub records: Vec<IterateRecord>,
    pub termination: Termination,
}

impl IterateHistory {
    /// Accepted objective values never increase.
    pub fn is_monotone(&self) -> bool {
        self.records.windows(2).all(|w| w[1].breakdown.total <= w[0].breakdown.total)
    }

    pub fn initial(&self) -> &IterateRecord {
        &self.records[0]
    }

    pub fn last(&self) -> &IterateRecord {
        &self.records[self.records.len() - 1]
    }
}

/// Projection onto the admissible set: initial layers of `g - g0` and
/// `h - h0` are zeroed, `ell - ell0` gets zero endpoint values and slopes and
/// is scaled into the closeness ball `|ell - ell0| <= ell0 / 2`.
pub fn project_admissible(raw: &ControlVector, prior: &ControlVector) -> ControlVector {
    let mut out = raw.clone();
    for n in 0..2.min(out.g.n_time()) {
        out.g.row_mut(n).copy_from_slice(prior.g.row(n));
    }
    if out.h.n_time() > 0 {
        out.h.row_mut(0).copy_from_slice(prior.h.row(0));
    }
    let ell0 = out.ell.ell0_ref;
    let n = out.ell.len();
    let mut dev = out.ell.deviation();
    for i in [0, 1, n - 2, n - 1] {
        dev[i] = 0.0;
    }
    let bound = 0.5 * ell0;
    let max = crate::math::norm_inf(&dev);
    if max > bound {
        let f = bound / max;
        dev.iter_mut().for_each(|d| *d *= f);
    }
    for (l, d) in out.ell.ell.iter_mut().zip(&dev) {
        *l = ell0 + d;
    }
    out
}

/// Riesz map of the weighted inner product.
struct Metric<'a> {
    problem: &'a ReducedProblem,
    time_weights: Vec<f64>,
    b_weights: Vec<f64>,
    smooth: bool,
}

impl<'a> Metric<'a> {
    fn new(problem: &'a ReducedProblem, smooth: bool) -> Self {
        Self {
            problem,
            time_weights: problem.time.weights(),
            b_weights: problem.dom.b_weights(),
            smooth,
        }
    }

    /// Primal representative of a dual vector, restricted to the tangent space.
    fn riesz(&self, d: &ControlDirection) -> Result<ControlDirection> {
        let dx = self.problem.dom.dx();
        let mut out = d.clone();
        for n in 0..out.g.n_time() {
            for i in 0..out.g.n_space() {
                out.g.set(n, i, d.g.get(n, i) / (self.time_weights[n] * self.b_weights[i]));
            }
            for q in 0..out.h.n_space() {
                out.h.set(n, q, d.h.get(n, q) / (self.time_weights[n] * dx));
            }
        }
        let scaled: Vec<f64> = d.ell.iter().zip(&self.b_weights).map(|(v, w)| v / w).collect();
        out.ell = if self.smooth {
            self.problem.reg.fractional(&scaled, -self.problem.reg.spec().s_ell)?
        } else {
            scaled
        };
        out.project_tangent();
        Ok(out)
    }
}

/// Block-wise dual norms `sqrt(<G, R G>)`.
fn dual_norms(grad: &ControlDirection, rep: &ControlDirection) -> [f64; 3] {
    let dot = |a: &[f64], b: &[f64]| crate::math::dot(a, b).max(0.0);
    [
        crate::math::sqrt(dot(grad.g.as_slice(), rep.g.as_slice())),
        crate::math::sqrt(dot(grad.h.as_slice(), rep.h.as_slice())),
        crate::math::sqrt(dot(&grad.ell, &rep.ell)),
    ]
}

/// Curvature of the (quadratic) regularizer along `d`.
fn regularizer_curvature(problem: &ReducedProblem, d: &ControlDirection) -> Result<f64> {
    let dom: &ReferenceDomain = &problem.dom;
    let time: &TimeGrid = &problem.time;
    let mut zero = ControlVector::zeros(dom, time);
    zero.ell = BoundaryProfile::flat(dom);
    let probe = zero.moved(1.0, d);
    let hd = problem.reg.gradient(&probe, &zero, problem.params.theta)?;
    Ok(hd.dot(d).max(0.0))
}

struct Pair {
    s: ControlDirection,
    y: ControlDirection,
    rho: f64,
}

fn lbfgs_direction(metric: &Metric, grad: &ControlDirection, pairs: &VecDeque<Pair>) -> Result<ControlDirection> {
    let mut q = grad.clone();
    let mut alphas = Vec::with_capacity(pairs.len());
    for p in pairs.iter().rev() {
        let a = p.rho * p.s.dot(&q);
        q.axpy(-a, &p.y);
        alphas.push(a);
    }
    let mut r = metric.riesz(&q)?;
    if let Some(p) = pairs.back() {
        let ry = metric.riesz(&p.y)?;
        let gamma = 1.0 / (p.rho * p.y.dot(&ry));
        r = r.scaled(gamma);
    }
    for (p, a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = p.rho * p.y.dot(&r);
        r.axpy(a - b, &p.s);
    }
    r.project_tangent();
    Ok(r.scaled(-1.0))
}

/// Outcome of one trial point.
struct Trial {
    controls: ControlVector,
    evaluation: Option<Evaluation>,
}

/// Minimizes the reduced objective from `start`. `on_accept` sees every
/// accepted iterate (iteration 0 included), e.g. for checkpointing.
pub fn optimize<E: BatchEvaluator + Sync>(
    problem: &ReducedProblem,
    config: &OptimizerConfig,
    start: &ControlVector,
    evaluator: &E,
    on_accept: &mut dyn FnMut(&IterateRecord, &ControlVector),
) -> Result<(ControlVector, IterateHistory)> {
    config.check()?;
    let metric = Metric::new(problem, config.smooth_riesz);
    let mut u = project_admissible(start, &problem.prior);
    let mut ev = problem.evaluate(&u)?;
    let (_, mut grad) = problem.gradient_at(&u, &ev)?;
    grad.project_tangent();
    let mut rep = metric.riesz(&grad)?;
    let tol = config.grad_tol.unwrap_or(1e-6 * (1.0 + ev.breakdown.total));
    let memory = match config.mode {
        DescentMode::GradientDescent => 0,
        DescentMode::Lbfgs { memory } => memory,
    };
    let mut pairs: VecDeque<Pair> = VecDeque::with_capacity(memory);
    let mut records = Vec::new();
    let record = |iteration: usize, ev: &Evaluation, grad: &ControlDirection, rep: &ControlDirection, step: f64, rejected: usize| {
        let [g, h, l] = dual_norms(grad, rep);
        IterateRecord {
            iteration,
            breakdown: ev.breakdown,
            grad_norm: crate::math::norm2(&[g, h, l]),
            grad_norm_g: g,
            grad_norm_h: h,
            grad_norm_ell: l,
            step,
            rejected,
            feasible: true,
            margin: ev.state.margin,
        }
    };
    records.push(record(0, &ev, &grad, &rep, 0.0, 0));
    on_accept(&records[0], &u);

    let mut termination = Termination::MaxIterations;
    let mut last_step: Option<(ControlDirection, ControlDirection)> = None;
    for iteration in 1..=config.max_iters {
        if records[records.len() - 1].grad_norm < tol {
            termination = Termination::Converged;
            break;
        }
        let mut d = if memory > 0 {
            lbfgs_direction(&metric, &grad, &pairs)?
        } else {
            rep.scaled(-1.0)
        };
        let mut slope = grad.dot(&d);
        if !(slope < 0.0) {
            pairs.clear();
            d = rep.scaled(-1.0);
            slope = grad.dot(&d);
        }
        let alpha0 = config.step_init * initial_step(problem, &ev, &d, slope, memory > 0 && !pairs.is_empty(), &last_step)?;

        let j0 = ev.breakdown.total;
        let mut accepted: Option<(usize, f64, Trial)> = None;
        let width = evaluator.width().max(1);
        let mut index = 0;
        while accepted.is_none() && index < MAX_REJECTIONS {
            let count = width.min(MAX_REJECTIONS - index);
            let alphas: Vec<f64> = (index..index + count).map(|j| alpha0 * crate::math::pow(config.step_shrink, j as f64)).collect();
            let trials = evaluator.map(&alphas, |alpha| {
                let controls = project_admissible(&u.moved(*alpha, &d), &problem.prior);
                let evaluation = problem.evaluate(&controls).ok();
                Trial { controls, evaluation }
            });
            for (k, trial) in trials.into_iter().enumerate() {
                let Some(tev) = &trial.evaluation else { continue };
                let displacement = trial.controls.difference(&u);
                let predicted = config.armijo_c1 * grad.dot(&displacement).min(0.0);
                if tev.breakdown.total <= j0 + predicted && tev.breakdown.total.is_finite() {
                    accepted = Some((index + k, alphas[k], trial));
                    break;
                }
            }
            index += count;
        }
        let Some((rejected, alpha, trial)) = accepted else {
            termination = Termination::LineSearchStalled;
            break;
        };
        let new_ev = trial.evaluation.expect("accepted trials carry an evaluation");
        let (_, mut new_grad) = problem.gradient_at(&trial.controls, &new_ev)?;
        new_grad.project_tangent();
        let s = trial.controls.difference(&u);
        let mut y = new_grad.clone();
        y.axpy(-1.0, &grad);
        let sy = s.dot(&y);
        if memory > 0 {
            if sy > 1e-12 * crate::math::sqrt(s.dot(&s) * y.dot(&y)) && sy > 0.0 {
                if pairs.len() == memory {
                    pairs.pop_front();
                }
                pairs.push_back(Pair { s: s.clone(), y: y.clone(), rho: 1.0 / sy });
            }
        }
        last_step = Some((s, y));
        u = trial.controls;
        ev = new_ev;
        grad = new_grad;
        rep = metric.riesz(&grad)?;
        records.push(record(iteration, &ev, &grad, &rep, alpha, rejected));
        on_accept(&records[records.len() - 1], &u);
    }
    if termination == Termination::MaxIterations && records[records.len() - 1].grad_norm < tol {
        termination = Termination::Converged;
    }
    Ok((u, IterateHistory { records, termination }))
}

/// First trial step. Quasi-Newton directions use the unit step; otherwise the
/// step minimizes a quadratic model whose curvature combines the exact
/// regularizer curvature with a tracking estimate (the Barzilai-Borwein
/// quotient of the last step, or the curvature of a model that vanishes at
/// its minimum).
fn initial_step(
    problem: &ReducedProblem,
    ev: &Evaluation,
    d: &ControlDirection,
    slope: f64,
    quasi_newton: bool,
    last: &Option<(ControlDirection, ControlDirection)>,
) -> Result<f64> {
    if quasi_newton {
        return Ok(1.0);
    }
    let reg = regularizer_curvature(problem, d)?;
    let tracking_value = ev.breakdown.tracking_p + ev.breakdown.tracking_w;
    let model = match last {
        Some((s, y)) if s.dot(y) > 0.0 => {
            let ss = s.dot(s).max(f64::MIN_POSITIVE);
            s.dot(y) / ss * d.dot(d)
        }
        _ => 0.0,
    };
    let tracking = if model > 0.0 {
        model
    } else if tracking_value > 0.0 {
        slope * slope / (2.0 * tracking_value)
    } else {
        0.0
    };
    let curvature = reg + tracking;
    if curvature > 0.0 {
        Ok(-slope / curvature)
    } else {
        Ok(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::bump;
    use crate::objective::{RegularizationSpec, RoiMask, Targets};
    use crate::params::PhysicalParams;
    use crate::spacetime::SpaceTime;

    fn setting() -> (ReferenceDomain, TimeGrid, ControlVector) {
        let dom = ReferenceDomain::new(1.0, 0.25, 1.0, 9, 3, 9).unwrap();
        let time = TimeGrid::new(1.0, 8).unwrap();
        let prior = ControlVector::zeros(&dom, &time);
        (dom, time, prior)
    }

    #[test]
    fn projection_zeroes_initial_layers_and_is_idempotent() {
        let (dom, time, prior) = setting();
        let mut raw = prior.clone();
        raw.g = SpaceTime::from_fn(time.len(), dom.nx, |_, _| 1.0);
        raw.h = SpaceTime::from_fn(time.len(), dom.n_plate(), |_, _| 1.0);
        let p = project_admissible(&raw, &prior);
        assert!(p.g.row(0).iter().chain(p.g.row(1)).all(|v| *v == 0.0));
        assert!(p.g.row(2).iter().all(|v| *v == 1.0));
        assert!(p.h.row(0).iter().all(|v| *v == 0.0));
        assert_eq!(project_admissible(&p, &prior), p);
        assert_eq!(project_admissible(&prior, &prior), prior);
    }

    #[test]
    fn projection_scales_large_profiles_into_the_ball() {
        let (dom, _, prior) = setting();
        let mut raw = prior.clone();
        raw.ell = BoundaryProfile::from_fn(&dom, |x| 1.0 + 0.9 * bump(x, 0.2, 0.8) / bump(0.5, 0.2, 0.8));
        let p = project_admissible(&raw, &prior);
        let dev = crate::math::norm_inf(&p.ell.deviation());
        assert!((dev - 0.5).abs() < 1e-12, "{dev}");
        assert!(crate::geometry::validate_profile(&p.ell, &dom).is_admissible());
        assert_eq!(project_admissible(&p, &prior), p);
    }

    #[test]
    fn stationary_start_converges_at_iteration_zero() {
        let (dom, time, prior) = setting();
        let problem = ReducedProblem::new(
            PhysicalParams::default(),
            dom,
            time,
            Targets::zeros(&dom, &time),
            RoiMask::default_for(&dom),
            prior.clone(),
            RegularizationSpec::default(),
        )
        .unwrap();
        let (u, hist) = optimize(&problem, &OptimizerConfig::default(), &prior, &crate::parallel::Sequential, &mut |_, _| {}).unwrap();
        assert_eq!(u, prior);
        assert_eq!(hist.records.len(), 1);
        assert_eq!(hist.termination, Termination::Converged);
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let c = OptimizerConfig { armijo_c1: 1.5, ..Default::default() };
        assert!(c.check().is_err());
        let c = OptimizerConfig { mode: DescentMode::Lbfgs { memory: 0 }, ..Default::default() };
        assert!(c.check().is_err());
    }
}
