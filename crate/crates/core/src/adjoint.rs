//! Backward adjoint solve and boundary multipliers.
//!
//! The adjoint system is the transpose of the semi-discrete state system
//! (same spatial operators), integrated in reversed time `tau = T - t` with
//! the forward time scheme. In `tau` the `(v_til, q_til)` block reads
//!
//! ```text
//! rho M_pl v'' + D v' + delta K_pl v + kappa E^T (b q'' + c^2 q') = -(kappa/rho) M_pl (w - w_d)
//! M_bar q'' - 2k M P q'' + C_bar q' + K_bar q - rho M_pl v'|pl  = -M_roi (P - p_d)
//! ```
//!
//! and `q_bar` then solves
//!
//! ```text
//! M_bar q_bar'' + C_bar q_bar' + K_bar q_bar = 2k M P q_til'' + rho M_pl v'|pl - M_roi (P - p_d).
//! ```
//!
//! With `beta_a = 1/c`, `gamma_a = 0` the absorbing terms keep the form
//! `c dq/dn - q_t = 0` of an absorbing condition in reversed time.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::forward::{require_adjoint_compatible, FieldHistory, Matrices, Model, StateTrajectory};
use crate::residual::TestTuple;
use crate::sparse::TripletBuilder;
use crate::spacetime::{time_derivative_second_order, SpaceTime};
use crate::stepper::{integrate, Kinematics, NoPointwise, Pointwise};

/// Adjoint fields in forward time, with the derivatives in forward time.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    pub qbar: FieldHistory,
    pub qtil: FieldHistory,
    pub vtil: FieldHistory,
    pub mu_n: SpaceTime,
    pub mu_pl: SpaceTime,
}

impl AdjointTrajectory {
    /// The adjoint as a test tuple for the residual pairing.
    pub fn tests(&self) -> TestTuple {
        TestTuple {
            qbar: self.qbar.u.clone(),
            qtil: self.qtil.u.clone(),
            vtil: self.vtil.u.clone(),
            mu_n: self.mu_n.clone(),
            mu_pl: self.mu_pl.clone(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        [self.qbar.max_abs(), self.qtil.max_abs(), self.vtil.max_abs()]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Misfits driving the adjoint: `chi_ROI (P - p_d)` weighted by the lumped
/// mass, and `w - w_d` on the plate.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSources {
    /// `M_roi (P - p_d)` per time node (acoustic nodes).
    pub pressure: SpaceTime,
    /// `M_pl (w - w_d)` per time node (plate nodes).
    pub plate: SpaceTime,
}

fn adjoint_matrices(model: &Model) -> Matrices {
    let disc = &model.disc;
    let p = &model.params;
    let dom = model.dom();
    let np = dom.n_plate();
    let dim = np + dom.n_nodes();
    let mut mass = TripletBuilder::new(dim, dim);
    let mut damping = TripletBuilder::new(dim, dim);
    let mut stiffness = TripletBuilder::new(dim, dim);
    for q in 0..np {
        let node = np + dom.plate_node(q);
        mass.add(q, q, p.rho * disc.plate_mass[q]);
        mass.add(q, node, p.kappa * p.b * disc.plate_coupling[q]);
        damping.add(q, node, p.kappa * p.c * p.c * disc.plate_coupling[q]);
        damping.add(node, q, -p.rho * disc.plate_mass[q]);
    }
    damping.add_matrix(&model.plate_damping.transpose(), 1.0, 0, 0);
    stiffness.add_matrix(&disc.plate_stiffness, p.delta, 0, 0);
    mass.add_matrix(&model.pbar.mass, 1.0, np, np);
    damping.add_matrix(&model.pbar.damping.transpose(), 1.0, np, np);
    stiffness.add_matrix(&model.pbar.stiffness.transpose(), 1.0, np, np);
    Matrices {
        mass: mass.build(),
        damping: damping.build(),
        stiffness: stiffness.build(),
    }
}

/// `-2k M P q''` on the acoustic block, with `P` read in reversed time.
struct ReversedWestervelt<'a> {
    k: f64,
    mass: &'a [f64],
    state: &'a StateTrajectory,
    nt: usize,
    offset: usize,
}

impl ReversedWestervelt<'_> {
    fn pressure(&self, n: usize) -> Vec<f64> {
        self.state.pressure(self.nt - n)
    }
}

impl Pointwise for ReversedWestervelt<'_> {
    fn is_affine(&self) -> bool {
        true
    }

    fn margin(&self, n: usize, _x: &[f64]) -> f64 {
        if self.k == 0.0 {
            return f64::INFINITY;
        }
        self.pressure(n).iter().map(|v| 1.0 - 2.0 * self.k * v).fold(f64::INFINITY, f64::min)
    }

    fn add(&self, n: usize, _x: &[f64], _v: &[f64], a: &[f64], out: &mut [f64]) {
        if self.k == 0.0 {
            return;
        }
        let o = self.offset;
        for (i, p) in self.pressure(n).iter().enumerate() {
            out[o + i] -= 2.0 * self.k * self.mass[i] * p * a[o + i];
        }
    }

    fn partials(&self, n: usize, _x: &[f64], _v: &[f64], _a: &[f64], dx: &mut [f64], dv: &mut [f64], da: &mut [f64]) {
        dx.fill(0.0);
        dv.fill(0.0);
        da.fill(0.0);
        if self.k == 0.0 {
            return;
        }
        let o = self.offset;
        for (i, p) in self.pressure(n).iter().enumerate() {
            da[o + i] = -2.0 * self.k * self.mass[i] * p;
        }
    }
}

/// Reverses a reversed-time kinematic history into forward time.
fn to_forward_time(k: &Kinematics, range: core::ops::Range<usize>) -> FieldHistory {
    let nt = k.x.n_time() - 1;
    let pick = |f: &SpaceTime, sign: f64| {
        SpaceTime::from_fn(nt + 1, range.len(), |n, i| sign * f.get(nt - n, range.start + i))
    };
    FieldHistory {
        u: pick(&k.x, 1.0),
        u_t: pick(&k.v, -1.0),
        u_tt: pick(&k.a, 1.0),
    }
}

/// Solves the adjoint system for the given misfit sources.
pub fn solve_adjoint_with_sources(model: &Model, state: &StateTrajectory, src: &AdjointSources) -> Result<AdjointTrajectory> {
    require_adjoint_compatible(&model.params)?;
    let (np, n, nt) = (model.n_plate(), model.n_nodes(), model.time.nt);
    src.pressure.check_shape("pressure misfit", nt + 1, n)?;
    src.plate.check_shape("plate misfit", nt + 1, np)?;
    let p = model.params;
    let dt = model.time.dt();
    let dom = *model.dom();

    let mats = adjoint_matrices(model);
    let nl = ReversedWestervelt {
        k: p.k,
        mass: &model.disc.mass,
        state,
        nt,
        offset: np,
    };
    let plate_factor = p.kappa / p.rho;
    let load = |m: usize, out: &mut [f64]| {
        let fwd = nt - m;
        for q in 0..np {
            out[q] -= plate_factor * src.plate.get(fwd, q);
        }
        for (o, s) in out[np..].iter_mut().zip(src.pressure.row(fwd)) {
            *o -= s;
        }
    };
    let zero = vec![0.0; np + n];
    let coupled = integrate(&mats.system(), &nl, nt, dt, &zero, &zero, &load)?;

    let qbar_load = |m: usize, out: &mut [f64]| {
        let fwd = nt - m;
        let pressure = state.pressure(fwd);
        let (v_tau, q_tautau) = (coupled.v.row(m), coupled.a.row(m));
        for i in 0..n {
            out[i] = 2.0 * p.k * model.disc.mass[i] * pressure[i] * q_tautau[np + i] - src.pressure.get(fwd, i);
        }
        for q in 0..np {
            out[dom.plate_node(q)] += p.rho * model.disc.plate_mass[q] * v_tau[q];
        }
    };
    let zero = vec![0.0; n];
    let qbar = integrate(&model.pbar.system(), &NoPointwise, nt, dt, &zero, &zero, &qbar_load)?;

    let mut adj = AdjointTrajectory {
        qbar: to_forward_time(&qbar, 0..n),
        qtil: to_forward_time(&coupled, np..np + n),
        vtil: to_forward_time(&coupled, 0..np),
        mu_n: SpaceTime::zeros(nt + 1, dom.nx),
        mu_pl: SpaceTime::zeros(nt + 1, np),
    };
    let (mu_n, mu_pl) = extract_multipliers(&adj, model);
    adj.mu_n = mu_n;
    adj.mu_pl = mu_pl;
    Ok(adj)
}

/// `mu = c^2 q - b q_t` on the Neumann edge (from `q_bar`) and on the plate
/// (from `q_til`), with second-order time differences.
pub fn extract_multipliers(adj: &AdjointTrajectory, model: &Model) -> (SpaceTime, SpaceTime) {
    let p = &model.params;
    let dom = *model.dom();
    let dt = model.time.dt();
    let top: Vec<usize> = (0..dom.nx).map(|i| dom.node(i, dom.nz() - 1)).collect();
    let plate: Vec<usize> = (0..dom.n_plate()).map(|q| dom.plate_node(q)).collect();
    let mu = |field: &SpaceTime, nodes: &[usize]| {
        let trace = SpaceTime::from_fn(field.n_time(), nodes.len(), |n, i| field.get(n, nodes[i]));
        let trace_t = time_derivative_second_order(&trace, dt);
        SpaceTime::from_fn(field.n_time(), nodes.len(), |n, i| p.c * p.c * trace.get(n, i) - p.b * trace_t.get(n, i))
    };
    (mu(&adj.qbar.u, &top), mu(&adj.qtil.u, &plate))
}
