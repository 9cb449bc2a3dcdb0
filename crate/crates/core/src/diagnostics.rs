//! Energies, the linear energy identity, and independent verification
//! oracles (finite differences of the reduced objective and Taylor tests of
//! the solution map).
//!
//! Nothing here depends on the adjoint solver.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::forward::{solve_forward, FieldHistory, Model, StateTrajectory};
use crate::linearized::{solve_linearized, LinearizedRhs};
use crate::objective::{ControlDirection, ControlVector, ReducedProblem};
use crate::operators::NeumannSpectrum;
use crate::parallel::BatchEvaluator;
use crate::params::InitialData;
use crate::spacetime::{time_derivative_second_order, SpaceTime};

/// Terms of the acoustic energy of one pressure component.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AcousticEnergy {
    /// `int_0^t |p_tt|^2`.
    pub acceleration: f64,
    /// `|p_t(t)|_{H^1}^2`.
    pub velocity_h1: f64,
    /// `|Lap p(t)|^2`.
    pub laplacian: f64,
    /// `b int_0^t |Lap p_t|^2`.
    pub viscous: f64,
    /// `beta_a int_0^t |p_tt|^2_{Gamma_a}`.
    pub absorbing: f64,
    /// `gamma_a / 2 |p_t(t)|^2_{Gamma_a}`.
    pub absorbing_velocity: f64,
}

impl AcousticEnergy {
    pub fn total(&self) -> f64 {
        self.acceleration + self.velocity_h1 + self.laplacian + self.viscous + self.absorbing + self.absorbing_velocity
    }

    fn terms(&self) -> [f64; 6] {
        [
            self.acceleration,
            self.velocity_h1,
            self.laplacian,
            self.viscous,
            self.absorbing,
            self.absorbing_velocity,
        ]
    }
}

/// Plate energy of `ww = w_t`: `|ww_t|^2 + |Lap_pl ww|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlateEnergy {
    pub velocity: f64,
    pub bending: f64,
}

impl PlateEnergy {
    pub fn total(&self) -> f64 {
        self.velocity + self.bending
    }
}

/// Energy terms at one time node.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyRecord {
    pub t: f64,
    pub pbar: AcousticEnergy,
    pub ptil: AcousticEnergy,
    pub plate: PlateEnergy,
    /// Data norm accumulated over `[0, t]`.
    pub data_norm: f64,
}

impl EnergyRecord {
    pub fn total(&self) -> f64 {
        self.pbar.total() + self.ptil.total() + self.plate.total()
    }

    /// Every sub-term, for non-negativity checks and CSV output.
    pub fn terms(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(15);
        out.extend(self.pbar.terms());
        out.extend(self.ptil.terms());
        out.push(self.plate.velocity);
        out.push(self.plate.bending);
        out
    }
}

/// Strong-form `-Lap p` and its time derivative from the lumped weak form:
/// `M^{-1} (K p + B_a (beta p_t + gamma p) - B phi)`, where `phi` is the
/// prescribed normal derivative on the Neumann edge or the plate.
struct NegativeLaplacian<'a> {
    model: &'a Model,
}

enum Flux<'a> {
    Neumann(&'a SpaceTime, &'a SpaceTime),
    Plate(&'a SpaceTime, &'a SpaceTime),
}

impl NegativeLaplacian<'_> {
    fn at(&self, f: &FieldHistory, flux: &Flux, n: usize, derivative: bool) -> Vec<f64> {
        let m = self.model;
        let p = &m.params;
        let disc = &m.disc;
        let (u, ut) = if derivative {
            (f.u_t.row(n), f.u_tt.row(n))
        } else {
            (f.u.row(n), f.u_t.row(n))
        };
        let mut out = disc.stiffness.apply(u);
        for (i, o) in out.iter_mut().enumerate() {
            *o += disc.absorbing[i] * (p.beta_a * ut[i] + p.gamma_a * u[i]);
        }
        let dom = m.dom();
        match flux {
            Flux::Neumann(phi, phi_t) => {
                let phi = if derivative { phi_t } else { phi };
                for i in 0..dom.nx {
                    out[dom.node(i, dom.nz() - 1)] -= disc.neumann_mapped[i] * phi.get(n, i);
                }
            }
            Flux::Plate(phi, phi_t) => {
                let phi = if derivative { phi_t } else { phi };
                for q in 0..dom.n_plate() {
                    out[dom.plate_node(q)] -= disc.plate_coupling[q] * phi.get(n, q);
                }
            }
        }
        for (o, mass) in out.iter_mut().zip(&disc.mass) {
            *o /= mass;
        }
        out
    }
}

fn weighted(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), w)| w * x * y).sum()
}

fn acoustic_series(model: &Model, f: &FieldHistory, flux: &Flux) -> Vec<AcousticEnergy> {
    let p = &model.params;
    let disc = &model.disc;
    let lap = NegativeLaplacian { model };
    let dt = model.time.dt();
    let mut out = Vec::with_capacity(model.time.len());
    let mut prev: Option<(f64, f64, f64)> = None;
    let mut acc = AcousticEnergy::default();
    for n in 0..model.time.len() {
        let a = f.u_tt.row(n);
        let v = f.u_t.row(n);
        let l = lap.at(f, flux, n, false);
        let lt = lap.at(f, flux, n, true);
        let rates = (
            weighted(a, a, &disc.mass),
            p.b * weighted(&lt, &lt, &disc.mass),
            p.beta_a * weighted(a, a, &disc.absorbing),
        );
        if let Some(r0) = prev {
            acc.acceleration += 0.5 * dt * (r0.0 + rates.0);
            acc.viscous += 0.5 * dt * (r0.1 + rates.1);
            acc.absorbing += 0.5 * dt * (r0.2 + rates.2);
        }
        prev = Some(rates);
        acc.velocity_h1 = weighted(v, v, &disc.mass) + crate::math::dot(v, &disc.stiffness.apply(v));
        acc.laplacian = weighted(&l, &l, &disc.mass);
        acc.absorbing_velocity = 0.5 * p.gamma_a * weighted(v, v, &disc.absorbing);
        out.push(acc);
    }
    out
}

/// Data norm `|g|^2_{L2(H^{s_g})} + |g_t|^2_{H1(L2)} + |h_t|_{L1(L2)}`,
/// accumulated over time (one value per time node). The Neumann-edge norms
/// use the mapped surface weights.
pub fn data_norm_series(model: &Model, g: &SpaceTime, h: &SpaceTime, s_g: f64) -> Result<Vec<f64>> {
    model.check_g(g)?;
    model.check_h(h)?;
    let dom = model.dom();
    let dt = model.time.dt();
    let spectrum = NeumannSpectrum::new(dom.nx, dom.lx)?;
    let w = &model.disc.neumann_mapped;
    let g_t = time_derivative_second_order(g, dt);
    let g_tt = time_derivative_second_order(&g_t, dt);
    let h_t = time_derivative_second_order(h, dt);
    let mut rates = Vec::with_capacity(model.time.len());
    for n in 0..model.time.len() {
        let f = spectrum.apply(g.row(n), s_g)?;
        let r = weighted(&f, &f, w)
            + weighted(g_t.row(n), g_t.row(n), w)
            + weighted(g_tt.row(n), g_tt.row(n), w)
            + crate::math::sqrt(weighted(h_t.row(n), h_t.row(n), &model.disc.plate_mass));
        rates.push(r);
    }
    let mut out = vec![0.0; rates.len()];
    for n in 1..rates.len() {
        out[n] = out[n - 1] + 0.5 * dt * (rates[n - 1] + rates[n]);
    }
    Ok(out)
}

/// Energy terms at every time node.
pub fn energy_series(model: &Model, state: &StateTrajectory, g: &SpaceTime, h: &SpaceTime, s_g: f64) -> Result<Vec<EnergyRecord>> {
    let pbar = acoustic_series(model, &state.pbar, &Flux::Neumann(&state.flux_n, &state.flux_n_t));
    let ptil = acoustic_series(model, &state.ptil, &Flux::Plate(&state.flux_pl, &state.flux_pl_t));
    let data = data_norm_series(model, g, h, s_g)?;
    let disc = &model.disc;
    Ok((0..model.time.len())
        .map(|n| {
            let ww_t = state.wtil.u_tt.row(n);
            let lap = disc.plate_laplacian.apply(state.wtil.u_t.row(n));
            EnergyRecord {
                t: model.time.t(n),
                pbar: pbar[n],
                ptil: ptil[n],
                plate: PlateEnergy {
                    velocity: weighted(ww_t, ww_t, &disc.plate_mass),
                    bending: weighted(&lap, &lap, &disc.plate_mass),
                },
                data_norm: data[n],
            }
        })
        .collect())
}

/// `max_t E(t) / (E(0) + |data|^2)` with the data norm over the full horizon.
pub fn energy_ratio(records: &[EnergyRecord]) -> f64 {
    let denom = records[0].total() + records[records.len() - 1].data_norm;
    let max = records.iter().map(EnergyRecord::total).fold(0.0, f64::max);
    if denom > 0.0 {
        max / denom
    } else {
        0.0
    }
}

/// Both sides of the linear energy identity for `p_bar` (obtained by testing
/// the equation with `-Lap p_t`):
///
/// ```text
/// 1/2 |grad p_t|^2 + c^2/2 |Lap p|^2 + b int |Lap p_t|^2
///   + beta_a int |p_tt|^2_{Gamma_a} + gamma_a/2 |p_t|^2_{Gamma_a}  =  int int_{Gamma_N} p_tt g_t
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyIdentity {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl EnergyIdentity {
    /// `max_t |lhs - rhs| / max_t |lhs|`.
    pub fn relative_defect(&self) -> f64 {
        let scale = self.lhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let defect = self.lhs.iter().zip(&self.rhs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if scale > 0.0 {
            defect / scale
        } else {
            defect
        }
    }
}

pub fn energy_identity_pbar(model: &Model, state: &StateTrajectory) -> EnergyIdentity {
    let p = &model.params;
    let disc = &model.disc;
    let dom = model.dom();
    let f = &state.pbar;
    let lap = NegativeLaplacian { model };
    let flux = Flux::Neumann(&state.flux_n, &state.flux_n_t);
    let dt = model.time.dt();
    let nt = model.time.len();
    let mut lhs = vec![0.0; nt];
    let mut rhs = vec![0.0; nt];
    let mut prev: Option<(f64, f64, f64)> = None;
    let (mut visc, mut abs, mut work) = (0.0, 0.0, 0.0);
    for n in 0..nt {
        let a = f.u_tt.row(n);
        let v = f.u_t.row(n);
        let l = lap.at(f, &flux, n, false);
        let lt = lap.at(f, &flux, n, true);
        let top: f64 = (0..dom.nx)
            .map(|i| disc.neumann_mapped[i] * a[dom.node(i, dom.nz() - 1)] * state.flux_n_t.get(n, i))
            .sum();
        let rates = (
            p.b * weighted(&lt, &lt, &disc.mass),
            p.beta_a * weighted(a, a, &disc.absorbing),
            top,
        );
        if let Some(r0) = prev {
            visc += 0.5 * dt * (r0.0 + rates.0);
            abs += 0.5 * dt * (r0.1 + rates.1);
            work += 0.5 * dt * (r0.2 + rates.2);
        }
        prev = Some(rates);
        lhs[n] = 0.5 * crate::math::dot(v, &disc.stiffness.apply(v))
            + 0.5 * p.c * p.c * weighted(&l, &l, &disc.mass)
            + visc
            + abs
            + 0.5 * p.gamma_a * weighted(v, v, &disc.absorbing);
        rhs[n] = work;
    }
    let (l0, r0) = (lhs[0], rhs[0]);
    lhs.iter_mut().for_each(|v| *v -= l0);
    rhs.iter_mut().for_each(|v| *v -= r0);
    EnergyIdentity { lhs, rhs }
}

/// One finite-difference probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdProbe {
    pub tau: f64,
    pub value: f64,
    /// Whether the value agrees with the plateau value.
    pub plateau: bool,
}

/// Central differences of the reduced objective along one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub probes: Vec<FdProbe>,
    pub plateau_value: f64,
    pub plateau_tau: f64,
}

/// Relative agreement that marks a probe as part of the plateau.
pub const PLATEAU_TOL: f64 = 1e-4;

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Central differences `(J(u + tau d) - J(u - tau d)) / (2 tau)` for every
/// direction and step; the plateau is the step whose value changes least
/// towards the next smaller step.
pub fn fd_gradient_oracle<E: BatchEvaluator + Sync>(
    problem: &ReducedProblem,
    u: &ControlVector,
    directions: &[ControlDirection],
    taus: &[f64],
    evaluator: &E,
) -> Result<Vec<FdReport>> {
    if taus.is_empty() || taus.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidParameter(alloc::format!("finite-difference steps must be positive: {taus:?}")));
    }
    let mut taus = taus.to_vec();
    taus.sort_by(|a, b| b.total_cmp(a));
    let mut points = Vec::with_capacity(2 * taus.len() * directions.len());
    for d in directions {
        for t in &taus {
            points.push(u.moved(*t, d));
            points.push(u.moved(-*t, d));
        }
    }
    let values = evaluator.map(&points, |c| problem.objective(c));
    let values: Vec<f64> = values.into_iter().collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(directions.len());
    for chunk in values.chunks(2 * taus.len()) {
        let fd: Vec<f64> = taus.iter().enumerate().map(|(j, t)| (chunk[2 * j] - chunk[2 * j + 1]) / (2.0 * t)).collect();
        let best = if fd.len() == 1 {
            0
        } else {
            (0..fd.len() - 1)
                .min_by(|a, b| relative_gap(fd[*a], fd[*a + 1]).total_cmp(&relative_gap(fd[*b], fd[*b + 1])))
                .unwrap_or(0)
        };
        let plateau_value = fd[best];
        out.push(FdReport {
            probes: taus
                .iter()
                .zip(&fd)
                .map(|(t, v)| FdProbe {
                    tau: *t,
                    value: *v,
                    plateau: relative_gap(*v, plateau_value) <= PLATEAU_TOL,
                })
                .collect(),
            plateau_value,
            plateau_tau: taus[best],
        });
    }
    Ok(out)
}

/// Default Taylor-test steps.
pub const TAYLOR_TAUS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

/// Remainders `|S(u + tau d) - S(u) - tau S'(u) d|` of the solution map.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorReport {
    pub taus: Vec<f64>,
    pub remainders: Vec<f64>,
    /// Norm of `S(u)`, the scale of the remainders.
    pub scale: f64,
    /// Least-squares slope of `log r` against `log tau` over the remainders
    /// above the solver noise floor (NaN with fewer than two such points).
    pub slope: f64,
}

/// Relative noise floor of the nonlinear solves.
pub const TAYLOR_FLOOR: f64 = 1e-11;

/// Space-time norm of a field history: trapezoid in time, `weights` in space,
/// applied to values and first time derivatives.
fn history_sq(w_time: &[f64], weights: &[f64], parts: &[(&FieldHistory, f64)]) -> f64 {
    let mut s = 0.0;
    for (n, wn) in w_time.iter().enumerate() {
        for i in 0..weights.len() {
            let mut u = 0.0;
            let mut ut = 0.0;
            for (f, c) in parts {
                u += c * f.u.get(n, i);
                ut += c * f.u_t.get(n, i);
            }
            s += wn * weights[i] * (u * u + ut * ut);
        }
    }
    s
}

/// `|a - b - tau * d|` over `(p_bar, p_til, w_til)` in the norm of `model`.
pub fn trajectory_distance(model: &Model, a: &StateTrajectory, b: &StateTrajectory, d: Option<(&StateTrajectory, f64)>) -> f64 {
    let w = model.time.weights();
    let disc = &model.disc;
    let mut total = 0.0;
    for (pick, weights) in [
        ((|s: &StateTrajectory| &s.pbar) as fn(&StateTrajectory) -> &FieldHistory, &disc.mass),
        (|s: &StateTrajectory| &s.ptil, &disc.mass),
        (|s: &StateTrajectory| &s.wtil, &disc.plate_mass),
    ] {
        let mut parts = vec![(pick(a), 1.0), (pick(b), -1.0)];
        if let Some((d, tau)) = d {
            parts.push((pick(d), -tau));
        }
        total += history_sq(&w, weights, &parts);
    }
    crate::math::sqrt(total)
}

/// Taylor test of the solution map along `d` (all three components).
pub fn taylor_test(
    problem: &ReducedProblem,
    u: &ControlVector,
    d: &ControlDirection,
    taus: &[f64],
) -> Result<TaylorReport> {
    let model = problem.model(&u.ell)?;
    let init: &InitialData = &problem.init;
    let base = solve_forward(&model, &u.g, &u.h, init)?;
    let shape = d.ell.iter().any(|v| *v != 0.0);
    let lin = solve_linearized(&model, &base, &LinearizedRhs::zeros(&model), &d.g, &d.h, shape.then_some(d.ell.as_slice()))?;
    let zero = StateTrajectory {
        pbar: FieldHistory::zeros(model.time.len(), model.n_nodes()),
        ptil: FieldHistory::zeros(model.time.len(), model.n_nodes()),
        wtil: FieldHistory::zeros(model.time.len(), model.n_plate()),
        ..base.clone()
    };
    let scale = trajectory_distance(&model, &base, &zero, None);
    let mut remainders = Vec::with_capacity(taus.len());
    for tau in taus {
        let v = u.moved(*tau, d);
        let m = problem.model(&v.ell)?;
        let s = solve_forward(&m, &v.g, &v.h, init)?;
        remainders.push(trajectory_distance(&model, &s, &base, Some((&lin, *tau))));
    }
    let floor = TAYLOR_FLOOR * scale.max(f64::MIN_POSITIVE);
    let pts: Vec<(f64, f64)> = taus
        .iter()
        .zip(&remainders)
        .filter(|(_, r)| **r > floor)
        .map(|(t, r)| (crate::math::log(*t), crate::math::log(*r)))
        .collect();
    let slope = if pts.len() < 2 {
        f64::NAN
    } else {
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        sxy / sxx
    };
    Ok(TaylorReport {
        taus: taus.to_vec(),
        remainders,
        scale,
        slope,
    })
}
