//! Forward solver for the decoupled state system.
//!
//! The pressure is split as `p = p_bar + p_til`: `p_bar` solves the linear
//! strongly damped wave equation driven by the Neumann control `g`, and
//! `(p_til, w_til)` solve the Westervelt equation coupled to the plate, driven
//! by `p_bar` and the plate load `h`. Both systems are discretized in space by
//! the weak form of [`crate::discretization`] (boundary conditions enter as
//! boundary integrals) and in time by the trapezoidal (average acceleration)
//! scheme of [`crate::stepper`].
//!
//! Coupled unknowns are ordered `[plate; acoustic]`, which keeps the plate
//! coupling inside the band of the acoustic stiffness.

use alloc::vec;
use alloc::vec::Vec;

use crate::discretization::Discretization;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryProfile, Edge, ReferenceDomain};
use crate::math::norm_inf;
use crate::operators::conormal_trace;
use crate::params::{InitialData, PhysicalParams, TimeGrid};
use crate::sparse::{CsrMatrix, TripletBuilder};
use crate::spacetime::{time_derivative, SpaceTime};
use crate::stepper::{integrate, Kinematics, NoPointwise, Pointwise, System};

/// A field with its first and second time derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldHistory {
    pub u: SpaceTime,
    pub u_t: SpaceTime,
    pub u_tt: SpaceTime,
}

impl FieldHistory {
    pub fn zeros(n_time: usize, n_space: usize) -> Self {
        Self {
            u: SpaceTime::zeros(n_time, n_space),
            u_t: SpaceTime::zeros(n_time, n_space),
            u_tt: SpaceTime::zeros(n_time, n_space),
        }
    }

    fn from_kinematics(k: &Kinematics, range: core::ops::Range<usize>) -> Self {
        let pick = |f: &SpaceTime| {
            SpaceTime::from_fn(f.n_time(), range.len(), |n, i| f.get(n, range.start + i))
        };
        Self {
            u: pick(&k.x),
            u_t: pick(&k.v),
            u_tt: pick(&k.a),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.u.max_abs()
    }
}

/// Complete discrete state: both pressure parts, the plate, and the boundary
/// flux variables `dp_bar/dn` on the Neumann edge and `dp_til/dn` on the plate.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub pbar: FieldHistory,
    pub ptil: FieldHistory,
    pub wtil: FieldHistory,
    pub flux_n: SpaceTime,
    pub flux_n_t: SpaceTime,
    pub flux_pl: SpaceTime,
    pub flux_pl_t: SpaceTime,
    /// Smallest `1 - 2k(p_bar + p_til)` met during the solve.
    pub margin: f64,
    pub time: TimeGrid,
}

impl StateTrajectory {
    /// Total pressure `p_bar + p_til` at time node `n`.
    pub fn pressure(&self, n: usize) -> Vec<f64> {
        self.pbar.u.row(n).iter().zip(self.ptil.u.row(n)).map(|(a, b)| a + b).collect()
    }

    /// Largest nodal magnitude over all stored fields.
    pub fn max_abs(&self) -> f64 {
        [self.pbar.max_abs(), self.ptil.max_abs(), self.wtil.max_abs()]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Mass, damping and stiffness of a second-order system.
#[derive(Debug, Clone)]
pub(crate) struct Matrices {
    pub mass: CsrMatrix,
    pub damping: CsrMatrix,
    pub stiffness: CsrMatrix,
}

impl Matrices {
    pub fn system(&self) -> System<'_> {
        System {
            mass: &self.mass,
            damping: &self.damping,
            stiffness: &self.stiffness,
        }
    }
}

/// Parameters, time grid and assembled operators for one boundary profile.
#[derive(Debug, Clone)]
pub struct Model {
    pub params: PhysicalParams,
    pub time: TimeGrid,
    pub disc: Discretization,
    pub(crate) pbar: Matrices,
    pub(crate) coupled: Matrices,
    pub(crate) plate_damping: CsrMatrix,
}

impl Model {
    pub fn new(params: PhysicalParams, dom: &ReferenceDomain, ell: &BoundaryProfile, time: TimeGrid) -> Result<Self> {
        params.check()?;
        Ok(Self::from_discretization(params, Discretization::new(dom, ell)?, time))
    }

    pub fn from_discretization(params: PhysicalParams, disc: Discretization, time: TimeGrid) -> Self {
        let pbar = pbar_matrices(&disc, &params);
        let coupled = coupled_matrices(&disc, &params);
        let plate_damping = disc.plate_damping(&params);
        Self {
            params,
            time,
            disc,
            pbar,
            coupled,
            plate_damping,
        }
    }

    pub fn dom(&self) -> &ReferenceDomain {
        self.disc.dom()
    }

    pub fn n_nodes(&self) -> usize {
        self.dom().n_nodes()
    }

    pub fn n_plate(&self) -> usize {
        self.dom().n_plate()
    }

    /// Checks that a Neumann-edge control has shape `(Nt+1) x Nx`.
    pub fn check_g(&self, g: &SpaceTime) -> Result<()> {
        g.check_shape("g", self.time.len(), self.dom().nx)
    }

    /// Checks that a plate control has shape `(Nt+1) x (Nx-2)`.
    pub fn check_h(&self, h: &SpaceTime) -> Result<()> {
        h.check_shape("h", self.time.len(), self.n_plate())
    }

    /// Node index of every Neumann-edge node.
    pub(crate) fn top_node(&self, i: usize) -> usize {
        let dom = self.dom();
        dom.node(i, dom.nz() - 1)
    }
}

fn diag_plus(diag: &[f64], extra: &[f64], f: f64) -> Vec<f64> {
    diag.iter().zip(extra).map(|(a, b)| a + f * b).collect()
}

fn pbar_matrices(disc: &Discretization, p: &PhysicalParams) -> Matrices {
    let ba = &disc.absorbing;
    let mass = CsrMatrix::from_diagonal(&diag_plus(&disc.mass, ba, p.b * p.beta_a));
    let damp_ba = CsrMatrix::from_diagonal(&ba.iter().map(|w| w * (p.c * p.c * p.beta_a + p.b * p.gamma_a)).collect::<Vec<_>>());
    let stiff_ba = CsrMatrix::from_diagonal(&ba.iter().map(|w| w * p.c * p.c * p.gamma_a).collect::<Vec<_>>());
    Matrices {
        mass,
        damping: CsrMatrix::linear_combination(&[(p.b, &disc.stiffness), (1.0, &damp_ba)]).expect("same shape"),
        stiffness: CsrMatrix::linear_combination(&[(p.c * p.c, &disc.stiffness), (1.0, &stiff_ba)]).expect("same shape"),
    }
}

fn coupled_matrices(disc: &Discretization, p: &PhysicalParams) -> Matrices {
    let dom = disc.dom();
    let np = dom.n_plate();
    let dim = np + dom.n_nodes();
    let acoustic = pbar_matrices(disc, p);
    let plate_damping = disc.plate_damping(p);

    let mut mass = TripletBuilder::new(dim, dim);
    let mut damping = TripletBuilder::new(dim, dim);
    let mut stiffness = TripletBuilder::new(dim, dim);
    for q in 0..np {
        mass.add(q, q, p.rho * disc.plate_mass[q]);
        let node = np + dom.plate_node(q);
        // dp/dn = -rho w_t on the plate enters through c^2 dp/dn + b dp_t/dn.
        mass.add(node, q, p.rho * p.b * disc.plate_coupling[q]);
        damping.add(node, q, p.rho * p.c * p.c * disc.plate_coupling[q]);
        // The plate is forced by kappa p_t.
        damping.add(q, node, -p.kappa * disc.plate_mass[q]);
    }
    damping.add_matrix(&plate_damping, 1.0, 0, 0);
    stiffness.add_matrix(&disc.plate_stiffness, p.delta, 0, 0);
    mass.add_matrix(&acoustic.mass, 1.0, np, np);
    damping.add_matrix(&acoustic.damping, 1.0, np, np);
    stiffness.add_matrix(&acoustic.stiffness, 1.0, np, np);
    Matrices {
        mass: mass.build(),
        damping: damping.build(),
        stiffness: stiffness.build(),
    }
}

/// Adds the Neumann-edge load `omega1 B (c^2 phi + b phi_t)` to `out`.
pub(crate) fn add_neumann_load(model: &Model, weights: &[f64], phi: &[f64], phi_t: &[f64], out: &mut [f64]) {
    let (c2, b) = (model.params.c * model.params.c, model.params.b);
    for i in 0..model.dom().nx {
        out[model.top_node(i)] += weights[i] * (c2 * phi[i] + b * phi_t[i]);
    }
}

/// Solves the `p_bar` equation driven by the Neumann control `g`.
pub fn solve_pbar(model: &Model, g: &SpaceTime) -> Result<FieldHistory> {
    model.check_g(g)?;
    let g_t = time_derivative(g, model.time.dt());
    solve_pbar_with_flux(model, g, &g_t, None)
}

/// `p_bar` solve for a given Neumann flux and its time derivative, with an
/// optional additional nodal load.
pub(crate) fn solve_pbar_with_flux(
    model: &Model,
    phi: &SpaceTime,
    phi_t: &SpaceTime,
    extra: Option<&SpaceTime>,
) -> Result<FieldHistory> {
    let n = model.n_nodes();
    let zero = vec![0.0; n];
    let load = |k: usize, out: &mut [f64]| {
        add_neumann_load(model, &model.disc.neumann_mapped, phi.row(k), phi_t.row(k), out);
        if let Some(e) = extra {
            for (o, v) in out.iter_mut().zip(e.row(k)) {
                *o += v;
            }
        }
    };
    let kin = integrate(&model.pbar.system(), &NoPointwise, model.time.nt, model.time.dt(), &zero, &zero, &load)?;
    Ok(FieldHistory::from_kinematics(&kin, 0..n))
}

/// Westervelt term of the `p_til` rows, written on the acoustic block of the
/// coupled unknown:
/// `m [ -2kP p_til'' - 2k (P')^2 - 2kP p_bar'' ]` with `P = p_bar + p_til`.
struct Westervelt<'a> {
    k: f64,
    mass: &'a [f64],
    pbar: &'a FieldHistory,
    offset: usize,
}

impl Pointwise for Westervelt<'_> {
    fn is_affine(&self) -> bool {
        self.k == 0.0
    }

    fn margin(&self, n: usize, x: &[f64]) -> f64 {
        if self.k == 0.0 {
            return f64::INFINITY;
        }
        let pb = self.pbar.u.row(n);
        x[self.offset..]
            .iter()
            .zip(pb)
            .map(|(pt, pb)| 1.0 - 2.0 * self.k * (pt + pb))
            .fold(f64::INFINITY, f64::min)
    }

    fn add(&self, n: usize, x: &[f64], v: &[f64], a: &[f64], out: &mut [f64]) {
        if self.k == 0.0 {
            return;
        }
        let (pb, pb_t, pb_tt) = (self.pbar.u.row(n), self.pbar.u_t.row(n), self.pbar.u_tt.row(n));
        let o = self.offset;
        for i in 0..pb.len() {
            let p = pb[i] + x[o + i];
            let pt = pb_t[i] + v[o + i];
            out[o + i] += self.mass[i] * (-2.0 * self.k) * (p * a[o + i] + pt * pt + p * pb_tt[i]);
        }
    }

    fn partials(&self, n: usize, x: &[f64], v: &[f64], a: &[f64], dx: &mut [f64], dv: &mut [f64], da: &mut [f64]) {
        dx.fill(0.0);
        dv.fill(0.0);
        da.fill(0.0);
        if self.k == 0.0 {
            return;
        }
        let (pb, pb_t, pb_tt) = (self.pbar.u.row(n), self.pbar.u_t.row(n), self.pbar.u_tt.row(n));
        let o = self.offset;
        let s = -2.0 * self.k;
        for i in 0..pb.len() {
            let m = self.mass[i];
            dx[o + i] = m * s * (a[o + i] + pb_tt[i]);
            dv[o + i] = m * 2.0 * s * (pb_t[i] + v[o + i]);
            da[o + i] = m * s * (pb[i] + x[o + i]);
        }
    }
}

/// Solves the coupled Westervelt-plate system for `(p_til, w_til)` given
/// `p_bar` and the plate control `h`. Returns the two histories and the
/// smallest non-degeneracy margin.
pub fn solve_ptil_plate(
    model: &Model,
    pbar: &FieldHistory,
    h: &SpaceTime,
    init: &InitialData,
) -> Result<(FieldHistory, FieldHistory, f64)> {
    model.check_h(h)?;
    init.check(model.dom())?;
    let (np, n) = (model.n_plate(), model.n_nodes());
    pbar.u.check_shape("p_bar", model.time.len(), n)?;
    let mut x0 = init.w0.clone();
    x0.extend_from_slice(&init.p0);
    let mut v0 = init.w1.clone();
    v0.extend_from_slice(&init.p1);
    let nl = Westervelt {
        k: model.params.k,
        mass: &model.disc.mass,
        pbar,
        offset: np,
    };
    let load = |k: usize, out: &mut [f64]| add_plate_load(model, pbar.u_t.row(k), h.row(k), out);
    let kin = integrate(&model.coupled.system(), &nl, model.time.nt, model.time.dt(), &x0, &v0, &load)?;
    Ok((
        FieldHistory::from_kinematics(&kin, np..np + n),
        FieldHistory::from_kinematics(&kin, 0..np),
        kin.margin,
    ))
}

/// Plate rows of the coupled load: `kappa M_pl p_bar_t|pl + M_pl h`.
pub(crate) fn add_plate_load(model: &Model, pbar_t: &[f64], h: &[f64], out: &mut [f64]) {
    let dom = model.dom();
    let kappa = model.params.kappa;
    for q in 0..dom.n_plate() {
        out[q] += model.disc.plate_mass[q] * (kappa * pbar_t[dom.plate_node(q)] + h[q]);
    }
}

/// Runs both solves and records the boundary flux variables.
pub fn solve_forward(model: &Model, g: &SpaceTime, h: &SpaceTime, init: &InitialData) -> Result<StateTrajectory> {
    let pbar = solve_pbar(model, g)?;
    let (ptil, wtil, margin) = solve_ptil_plate(model, &pbar, h, init)?;
    let rho = model.params.rho;
    Ok(StateTrajectory {
        flux_n: g.clone(),
        flux_n_t: time_derivative(g, model.time.dt()),
        flux_pl: wtil.u_t.scaled(-rho),
        flux_pl_t: wtil.u_tt.scaled(-rho),
        pbar,
        ptil,
        wtil,
        margin,
        time: model.time,
    })
}

/// Residuals of the compatibility conditions of the initial data (largest
/// magnitude on each edge).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompatibilityReport {
    /// `dp0/dn + beta_a p1 + gamma_a p0` on the absorbing sides.
    pub absorbing: f64,
    /// `dp0/dn + rho w1` on the plate.
    pub plate: f64,
    /// `dp0/dn` on the Neumann edge (the `p_til` part carries no flux).
    pub neumann: f64,
    /// `g(0)` and `g_t(0)` (the `p_bar` part starts from rest).
    pub control: f64,
}

impl CompatibilityReport {
    pub fn max(&self) -> f64 {
        [self.absorbing, self.plate, self.neumann, self.control].into_iter().fold(0.0, f64::max)
    }
}

pub fn compatibility_residuals(model: &Model, init: &InitialData, g: &SpaceTime) -> Result<CompatibilityReport> {
    init.check(model.dom())?;
    model.check_g(g)?;
    let dom = model.dom();
    let p = &model.params;
    let coeffs = &model.disc.coeffs;
    let side = conormal_trace(&init.p0, coeffs, Edge::Absorbing)?;
    let side_nodes = dom.edge_nodes(Edge::Absorbing);
    let absorbing = side
        .iter()
        .zip(&side_nodes)
        .map(|(d, &node)| (d + p.beta_a * init.p1[node] + p.gamma_a * init.p0[node]).abs())
        .fold(0.0, f64::max);
    let bottom = conormal_trace(&init.p0, coeffs, Edge::Plate)?;
    let plate = (0..dom.n_plate())
        .map(|q| (bottom[q + 1] + p.rho * init.w1[q]).abs())
        .fold(0.0, f64::max);
    let neumann = norm_inf(&conormal_trace(&init.p0, coeffs, Edge::Neumann)?);
    let g_t = time_derivative(g, model.time.dt());
    let control = norm_inf(g.row(0)).max(norm_inf(g_t.row(0)));
    Ok(CompatibilityReport {
        absorbing,
        plate,
        neumann,
        control,
    })
}

/// Rejects absorbing coefficients that the adjoint does not support.
pub fn require_adjoint_compatible(params: &PhysicalParams) -> Result<()> {
    if params.adjoint_compatible() {
        Ok(())
    } else {
        Err(Error::UnsupportedAbsorbingCoefficients {
            beta_a: params.beta_a,
            gamma_a: params.gamma_a,
        })
    }
}
