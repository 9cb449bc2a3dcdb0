//! Tracking objective, regularizers and the reduced problem.
//!
//! ```text
//! J = 1/2 int_0^T int_ROI |p_bar + p_til - p_d|^2 + 1/2 int_0^T int_pl |w - w_d|^2
//!   + theta/2 ( |d_tt (g - g0)|^2 + |(-Lap_N + 1)^{s_g} (g - g0)|^2
//!             + |d_t (h - h0)|^2 + |(-Lap_N + 1)^{s_ell/2} (ell - ell0)|^2 )
//! ```
//!
//! This module never touches the adjoint solver, so finite-difference
//! checks built on it are independent of the gradient code.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::forward::{solve_forward, Model, StateTrajectory};
use crate::geometry::{BoundaryProfile, ReferenceDomain};
use crate::operators::NeumannSpectrum;
use crate::params::{InitialData, PhysicalParams, TimeGrid};
use crate::spacetime::SpaceTime;

/// The design `(g, h, ell)`: Neumann control (pull-back convention), plate
/// load and boundary profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlVector {
    pub g: SpaceTime,
    pub h: SpaceTime,
    pub ell: BoundaryProfile,
}

impl ControlVector {
    /// Zero excitations and the flat profile.
    pub fn zeros(dom: &ReferenceDomain, time: &TimeGrid) -> Self {
        Self {
            g: SpaceTime::zeros(time.len(), dom.nx),
            h: SpaceTime::zeros(time.len(), dom.n_plate()),
            ell: BoundaryProfile::flat(dom),
        }
    }

    /// `self + alpha * d`.
    pub fn moved(&self, alpha: f64, d: &ControlDirection) -> Self {
        let mut out = self.clone();
        out.g.axpy(alpha, &d.g);
        out.h.axpy(alpha, &d.h);
        for (a, b) in out.ell.ell.iter_mut().zip(&d.ell) {
            *a += alpha * b;
        }
        out
    }

    /// `self - other` as a direction.
    pub fn difference(&self, other: &Self) -> ControlDirection {
        let mut g = self.g.clone();
        g.axpy(-1.0, &other.g);
        let mut h = self.h.clone();
        h.axpy(-1.0, &other.h);
        ControlDirection {
            g,
            h,
            ell: self.ell.ell.iter().zip(&other.ell.ell).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn check(&self, dom: &ReferenceDomain, time: &TimeGrid) -> Result<()> {
        self.g.check_shape("g", time.len(), dom.nx)?;
        self.h.check_shape("h", time.len(), dom.n_plate())?;
        if self.ell.len() != dom.nx {
            return Err(Error::ShapeMismatch {
                what: "ell",
                expected: dom.nx,
                found: self.ell.len(),
            });
        }
        Ok(())
    }
}

/// A tangent vector (direction or gradient) in control space.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlDirection {
    pub g: SpaceTime,
    pub h: SpaceTime,
    pub ell: Vec<f64>,
}

impl ControlDirection {
    pub fn zeros(dom: &ReferenceDomain, time: &TimeGrid) -> Self {
        Self {
            g: SpaceTime::zeros(time.len(), dom.nx),
            h: SpaceTime::zeros(time.len(), dom.n_plate()),
            ell: vec![0.0; dom.nx],
        }
    }

    /// Plain l2 pairing of the nodal arrays.
    pub fn dot(&self, other: &Self) -> f64 {
        crate::math::dot(self.g.as_slice(), other.g.as_slice())
            + crate::math::dot(self.h.as_slice(), other.h.as_slice())
            + crate::math::dot(&self.ell, &other.ell)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            g: self.g.scaled(alpha),
            h: self.h.scaled(alpha),
            ell: self.ell.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        self.g.axpy(alpha, &other.g);
        self.h.axpy(alpha, &other.h);
        for (a, b) in self.ell.iter_mut().zip(&other.ell) {
            *a += alpha * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.g.max_abs().max(self.h.max_abs()).max(crate::math::norm_inf(&self.ell))
    }

    /// Removes the components that leave the admissible affine space:
    /// the first two time layers of `g`, the first layer of `h`, and the
    /// values and slopes of `ell` at both ends.
    pub fn project_tangent(&mut self) {
        for n in 0..2.min(self.g.n_time()) {
            self.g.row_mut(n).fill(0.0);
        }
        if self.h.n_time() > 0 {
            self.h.row_mut(0).fill(0.0);
        }
        let n = self.ell.len();
        for i in [0, 1, n - 2, n - 1] {
            self.ell[i] = 0.0;
        }
    }
}

/// Tracking data: pressure on the region of interest and plate motion.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub p_d: SpaceTime,
    pub w_d: SpaceTime,
}

impl Targets {
    pub fn zeros(dom: &ReferenceDomain, time: &TimeGrid) -> Self {
        Self {
            p_d: SpaceTime::zeros(time.len(), dom.n_nodes()),
            w_d: SpaceTime::zeros(time.len(), dom.n_plate()),
        }
    }

    /// Targets equal to a computed state.
    pub fn from_state(state: &StateTrajectory) -> Self {
        let n = state.pbar.u.n_time();
        let mut p_d = state.pbar.u.clone();
        p_d.axpy(1.0, &state.ptil.u);
        debug_assert_eq!(p_d.n_time(), n);
        Self {
            p_d,
            w_d: state.wtil.u.clone(),
        }
    }
}

/// Indicator of the region of interest in reference coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiMask {
    pub mask: Vec<f64>,
}

impl RoiMask {
    /// Nodes with `x0 <= x <= x1` and `z0 <= zref <= z1`.
    pub fn rectangle(dom: &ReferenceDomain, x0: f64, x1: f64, z0: f64, z1: f64) -> Self {
        let tol = 1e-12;
        let mut mask = vec![0.0; dom.n_nodes()];
        for j in 0..dom.nz() {
            for i in 0..dom.nx {
                let (x, z) = (dom.x(i), dom.zref(j));
                if x >= x0 - tol && x <= x1 + tol && z >= z0 - tol && z <= z1 + tol {
                    mask[dom.node(i, j)] = 1.0;
                }
            }
        }
        Self { mask }
    }

    /// Default region: the middle half of the fixed block (or of the whole
    /// box when there is no fixed block).
    pub fn default_for(dom: &ReferenceDomain) -> Self {
        if dom.h_fix > 0.0 {
            Self::rectangle(dom, 0.25 * dom.lx, 0.75 * dom.lx, -dom.h_fix, 0.0)
        } else {
            Self::rectangle(dom, 0.25 * dom.lx, 0.75 * dom.lx, 0.0, 0.5 * dom.ell0)
        }
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m != 0.0).count()
    }
}

/// Exponents of the spatial regularizers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationSpec {
    pub s_g: f64,
    pub s_ell: f64,
}

impl Default for RegularizationSpec {
    fn default() -> Self {
        Self { s_g: 0.5, s_ell: 3.0 }
    }
}

impl RegularizationSpec {
    /// Requires `s_g >= 1/2` and `s_ell > 5/2`.
    pub fn check(&self) -> Result<()> {
        if !(self.s_g >= 0.5 && self.s_ell > 2.5) {
            return Err(Error::InvalidParameter(alloc::format!(
                "regularization exponents need s_g >= 0.5 and s_ell > 2.5 (got {}, {})",
                self.s_g,
                self.s_ell
            )));
        }
        Ok(())
    }
}

/// Components of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveBreakdown {
    pub tracking_p: f64,
    pub tracking_w: f64,
    pub reg_g_time: f64,
    pub reg_g_space: f64,
    pub reg_h: f64,
    pub reg_ell: f64,
    pub theta: f64,
    pub total: f64,
}

impl ObjectiveBreakdown {
    fn assemble(tracking_p: f64, tracking_w: f64, reg: [f64; 4], theta: f64) -> Self {
        Self {
            tracking_p,
            tracking_w,
            reg_g_time: reg[0],
            reg_g_space: reg[1],
            reg_h: reg[2],
            reg_ell: reg[3],
            theta,
            total: tracking_p + tracking_w + 0.5 * theta * reg.iter().sum::<f64>(),
        }
    }
}

/// Pressure misfit `P - p_d` at time node `n`.
pub(crate) fn pressure_misfit(state: &StateTrajectory, targets: &Targets, n: usize) -> Vec<f64> {
    state
        .pressure(n)
        .iter()
        .zip(targets.p_d.row(n))
        .map(|(p, d)| p - d)
        .collect()
}

/// The tracking terms.
pub fn tracking(model: &Model, state: &StateTrajectory, targets: &Targets, roi: &RoiMask) -> Result<(f64, f64)> {
    let (nt, n, np) = (model.time.len(), model.n_nodes(), model.n_plate());
    targets.p_d.check_shape("p_d", nt, n)?;
    targets.w_d.check_shape("w_d", nt, np)?;
    if roi.mask.len() != n {
        return Err(Error::ShapeMismatch {
            what: "ROI mask",
            expected: n,
            found: roi.mask.len(),
        });
    }
    let w = model.time.weights();
    let (mut tp, mut tw) = (0.0, 0.0);
    for (k, wk) in w.iter().enumerate() {
        let e = pressure_misfit(state, targets, k);
        let s: f64 = (0..n).map(|i| roi.mask[i] * model.disc.mass[i] * e[i] * e[i]).sum();
        tp += 0.5 * wk * s;
        let s: f64 = (0..np)
            .map(|q| {
                let d = state.wtil.u.get(k, q) - targets.w_d.get(k, q);
                model.disc.plate_mass[q] * d * d
            })
            .sum();
        tw += 0.5 * wk * s;
    }
    Ok((tp, tw))
}

/// Spectral operators of the regularizers on B.
#[derive(Debug, Clone)]
pub struct Regularizer {
    spec: RegularizationSpec,
    spectrum: NeumannSpectrum,
    plate_mass: f64,
    time: TimeGrid,
}

impl Regularizer {
    pub fn new(dom: &ReferenceDomain, time: &TimeGrid, spec: RegularizationSpec) -> Result<Self> {
        Ok(Self {
            spec,
            spectrum: NeumannSpectrum::new(dom.nx, dom.lx)?,
            plate_mass: dom.dx(),
            time: *time,
        })
    }

    pub fn spec(&self) -> RegularizationSpec {
        self.spec
    }

    /// `(-Lap_N + 1)^s` on B.
    pub fn fractional(&self, f: &[f64], s: f64) -> Result<Vec<f64>> {
        self.spectrum.apply(f, s)
    }

    fn weights(&self) -> &[f64] {
        self.spectrum.weights()
    }

    /// The four regularizer components `[g_time, g_space, h, ell]`.
    pub fn values(&self, u: &ControlVector, prior: &ControlVector) -> Result<[f64; 4]> {
        let e = u.difference(prior);
        let dt = self.time.dt();
        let nt = self.time.nt;
        let w = self.weights();
        let mut g_time = 0.0;
        for n in 1..nt {
            for i in 0..w.len() {
                let d2 = (e.g.get(n + 1, i) - 2.0 * e.g.get(n, i) + e.g.get(n - 1, i)) / (dt * dt);
                g_time += dt * w[i] * d2 * d2;
            }
        }
        let tw = self.time.weights();
        let mut g_space = 0.0;
        for n in 0..=nt {
            g_space += tw[n] * self.spectrum.norm_squared(e.g.row(n), self.spec.s_g)?;
        }
        let mut h = 0.0;
        for n in 0..nt {
            for q in 0..e.h.n_space() {
                let d = (e.h.get(n + 1, q) - e.h.get(n, q)) / dt;
                h += dt * self.plate_mass * d * d;
            }
        }
        let ell = self.spectrum.norm_squared(&e.ell, 0.5 * self.spec.s_ell)?;
        Ok([g_time, g_space, h, ell])
    }

    /// Gradient of `(theta/2) * sum(values)` in the l2 pairing.
    pub fn gradient(&self, u: &ControlVector, prior: &ControlVector, theta: f64) -> Result<ControlDirection> {
        let e = u.difference(prior);
        let dt = self.time.dt();
        let nt = self.time.nt;
        let w = self.weights();
        let nx = w.len();
        let mut out = ControlDirection {
            g: SpaceTime::zeros(nt + 1, nx),
            h: SpaceTime::zeros(nt + 1, e.h.n_space()),
            ell: vec![0.0; nx],
        };
        if theta == 0.0 {
            return Ok(out);
        }
        for n in 1..nt {
            for i in 0..nx {
                let d2 = (e.g.get(n + 1, i) - 2.0 * e.g.get(n, i) + e.g.get(n - 1, i)) / (dt * dt);
                let c = theta * dt * w[i] * d2 / (dt * dt);
                for (m, f) in [(n - 1, 1.0), (n, -2.0), (n + 1, 1.0)] {
                    out.g.set(m, i, out.g.get(m, i) + f * c);
                }
            }
        }
        let tw = self.time.weights();
        for n in 0..=nt {
            let a = self.spectrum.apply(e.g.row(n), 2.0 * self.spec.s_g)?;
            for i in 0..nx {
                out.g.set(n, i, out.g.get(n, i) + theta * tw[n] * w[i] * a[i]);
            }
        }
        for n in 0..nt {
            for q in 0..e.h.n_space() {
                let d = (e.h.get(n + 1, q) - e.h.get(n, q)) / dt;
                let c = theta * self.plate_mass * d;
                out.h.set(n + 1, q, out.h.get(n + 1, q) + c);
                out.h.set(n, q, out.h.get(n, q) - c);
            }
        }
        let a = self.spectrum.apply(&e.ell, self.spec.s_ell)?;
        for i in 0..nx {
            out.ell[i] = theta * w[i] * a[i];
        }
        Ok(out)
    }
}

/// Evaluates every component of the objective.
pub fn eval_objective(
    model: &Model,
    controls: &ControlVector,
    prior: &ControlVector,
    state: &StateTrajectory,
    targets: &Targets,
    roi: &RoiMask,
    reg: &Regularizer,
) -> Result<ObjectiveBreakdown> {
    let (tp, tw) = tracking(model, state, targets, roi)?;
    let values = reg.values(controls, prior)?;
    Ok(ObjectiveBreakdown::assemble(tp, tw, values, model.params.theta))
}

/// The reduced optimal control problem: everything except the design.
#[derive(Debug, Clone)]
pub struct ReducedProblem {
    pub params: PhysicalParams,
    pub dom: ReferenceDomain,
    pub time: TimeGrid,
    pub init: InitialData,
    pub targets: Targets,
    pub roi: RoiMask,
    pub prior: ControlVector,
    pub reg: Regularizer,
}

/// Forward solve and objective at one design.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub model: Model,
    pub state: StateTrajectory,
    pub breakdown: ObjectiveBreakdown,
}

impl ReducedProblem {
    pub fn new(
        params: PhysicalParams,
        dom: ReferenceDomain,
        time: TimeGrid,
        targets: Targets,
        roi: RoiMask,
        prior: ControlVector,
        spec: RegularizationSpec,
    ) -> Result<Self> {
        params.check()?;
        spec.check()?;
        prior.check(&dom, &time)?;
        Ok(Self {
            params,
            init: InitialData::zero(&dom),
            reg: Regularizer::new(&dom, &time, spec)?,
            dom,
            time,
            targets,
            roi,
            prior,
        })
    }

    pub fn model(&self, ell: &BoundaryProfile) -> Result<Model> {
        Model::new(self.params, &self.dom, ell, self.time)
    }

    /// Forward solve and objective.
    pub fn evaluate(&self, u: &ControlVector) -> Result<Evaluation> {
        u.check(&self.dom, &self.time)?;
        let model = self.model(&u.ell)?;
        let state = solve_forward(&model, &u.g, &u.h, &self.init)?;
        let breakdown = eval_objective(&model, u, &self.prior, &state, &self.targets, &self.roi, &self.reg)?;
        Ok(Evaluation { model, state, breakdown })
    }

    /// The reduced objective value.
    pub fn objective(&self, u: &ControlVector) -> Result<f64> {
        Ok(self.evaluate(u)?.breakdown.total)
    }
}
