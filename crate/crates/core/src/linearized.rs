//! Linearization of the state system around a base trajectory.
//!
//! The Westervelt term is frozen with the coefficients `a = -2kP`,
//! `b = -4kP'`, `c = -2kP''` of the base pressure `P`, so every time step is a
//! single linear solve (no Newton iteration). A shape direction `dell` enters
//! through the derivative of the residual rows with respect to the profile.

use alloc::vec::Vec;

use crate::error::Result;
use crate::forward::{add_plate_load, solve_pbar_with_flux, FieldHistory, Model, StateTrajectory};
use crate::residual::{shape_residual_derivative, FrozenCoefficients, TestTuple};
use crate::spacetime::{time_derivative, SpaceTime};
use crate::stepper::{integrate, Pointwise};

/// Right-hand sides of the five residual rows (see [`crate::residual`]).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedRhs {
    pub f_pbar: SpaceTime,
    pub f_ptil: SpaceTime,
    pub f_w: SpaceTime,
    pub f_n: SpaceTime,
    pub f_pl: SpaceTime,
}

impl LinearizedRhs {
    pub fn zeros(model: &Model) -> Self {
        let t = TestTuple::zeros(model);
        Self {
            f_pbar: t.qbar,
            f_ptil: t.qtil,
            f_w: t.vtil,
            f_n: t.mu_n,
            f_pl: t.mu_pl,
        }
    }
}

/// Frozen-coefficient Westervelt term of the linearized `p_til` rows, with
/// the known `p_bar` perturbation folded in.
struct Frozen<'a> {
    k: f64,
    base: &'a StateTrajectory,
    mass: &'a [f64],
    dpbar: &'a FieldHistory,
    offset: usize,
}

impl Pointwise for Frozen<'_> {
    fn is_affine(&self) -> bool {
        true
    }

    fn margin(&self, n: usize, _x: &[f64]) -> f64 {
        if self.k == 0.0 {
            return f64::INFINITY;
        }
        let p = self.base.pressure(n);
        p.iter().map(|v| 1.0 - 2.0 * self.k * v).fold(f64::INFINITY, f64::min)
    }

    fn add(&self, n: usize, x: &[f64], v: &[f64], a: &[f64], out: &mut [f64]) {
        if self.k == 0.0 {
            return;
        }
        let fc = FrozenCoefficients::at(self.k, self.base, n);
        let (db, db_t, db_tt) = (self.dpbar.u.row(n), self.dpbar.u_t.row(n), self.dpbar.u_tt.row(n));
        let o = self.offset;
        for i in 0..self.mass.len() {
            out[o + i] += self.mass[i]
                * (fc.a[i] * (a[o + i] + db_tt[i]) + fc.b[i] * (v[o + i] + db_t[i]) + fc.c[i] * (x[o + i] + db[i]));
        }
    }

    fn partials(&self, n: usize, _x: &[f64], _v: &[f64], _a: &[f64], dx: &mut [f64], dv: &mut [f64], da: &mut [f64]) {
        dx.fill(0.0);
        dv.fill(0.0);
        da.fill(0.0);
        if self.k == 0.0 {
            return;
        }
        let fc = FrozenCoefficients::at(self.k, self.base, n);
        let o = self.offset;
        for i in 0..self.mass.len() {
            dx[o + i] = self.mass[i] * fc.c[i];
            dv[o + i] = self.mass[i] * fc.b[i];
            da[o + i] = self.mass[i] * fc.a[i];
        }
    }
}

/// Solves the linearized system around `base` with homogeneous initial data:
/// the returned perturbation `d` satisfies
/// `linearized_residual(model, g, base, d, dg, dh, dell) = rhs`.
pub fn solve_linearized(
    model: &Model,
    base: &StateTrajectory,
    rhs: &LinearizedRhs,
    dg: &SpaceTime,
    dh: &SpaceTime,
    dell: Option<&[f64]>,
) -> Result<StateTrajectory> {
    model.check_g(dg)?;
    model.check_h(dh)?;
    let dom = *model.dom();
    let (np, n) = (model.n_plate(), model.n_nodes());
    let dt = model.time.dt();
    let p = model.params;
    let disc = &model.disc;
    let shape = match dell {
        Some(d) => Some(shape_residual_derivative(model, &base.flux_n, base, d)?),
        None => None,
    };

    // Neumann flux perturbation from the R_N row.
    let mut dphi_n = SpaceTime::from_fn(model.time.len(), dom.nx, |k, i| {
        dg.get(k, i) + rhs.f_n.get(k, i) / disc.neumann_mapped[i]
    });
    if let Some(s) = &shape {
        for k in 0..model.time.len() {
            for i in 0..dom.nx {
                let v = dphi_n.get(k, i) - s.neumann.get(k, i) / disc.neumann_mapped[i];
                dphi_n.set(k, i, v);
            }
        }
    }
    let dphi_n_t = time_derivative(&dphi_n, dt);
    let mut extra = rhs.f_pbar.clone();
    if let Some(s) = &shape {
        extra.axpy(-1.0, &s.pbar);
    }
    let dpbar = solve_pbar_with_flux(model, &dphi_n, &dphi_n_t, Some(&extra))?;

    // Plate flux data from the R_pl row: phi_pl = -rho w' + f_pl / M_pl.
    let fhat = SpaceTime::from_fn(model.time.len(), np, |k, q| rhs.f_pl.get(k, q) / disc.plate_mass[q]);
    let fhat_t = time_derivative(&fhat, dt);
    let mut f_ac = rhs.f_ptil.clone();
    if let Some(s) = &shape {
        f_ac.axpy(-1.0, &s.ptil);
    }
    let load = |k: usize, out: &mut [f64]| {
        add_plate_load(model, dpbar.u_t.row(k), dh.row(k), out);
        for q in 0..np {
            out[q] += rhs.f_w.get(k, q);
            out[np + dom.plate_node(q)] += disc.plate_coupling[q] * (p.c * p.c * fhat.get(k, q) + p.b * fhat_t.get(k, q));
        }
        for (o, v) in out[np..].iter_mut().zip(f_ac.row(k)) {
            *o += v;
        }
    };
    let nl = Frozen {
        k: p.k,
        base,
        mass: &disc.mass,
        dpbar: &dpbar,
        offset: np,
    };
    let zero: Vec<f64> = alloc::vec![0.0; np + n];
    let kin = integrate(&model.coupled.system(), &nl, model.time.nt, dt, &zero, &zero, &load)?;
    let pick = |f: &SpaceTime, r: core::ops::Range<usize>| SpaceTime::from_fn(f.n_time(), r.len(), |k, i| f.get(k, r.start + i));
    let wtil = FieldHistory {
        u: pick(&kin.x, 0..np),
        u_t: pick(&kin.v, 0..np),
        u_tt: pick(&kin.a, 0..np),
    };
    let ptil = FieldHistory {
        u: pick(&kin.x, np..np + n),
        u_t: pick(&kin.v, np..np + n),
        u_tt: pick(&kin.a, np..np + n),
    };
    let mut flux_pl = wtil.u_t.scaled(-p.rho);
    flux_pl.axpy(1.0, &fhat);
    let mut flux_pl_t = wtil.u_tt.scaled(-p.rho);
    flux_pl_t.axpy(1.0, &fhat_t);
    Ok(StateTrajectory {
        pbar: dpbar,
        ptil,
        wtil,
        flux_n: dphi_n,
        flux_n_t: dphi_n_t,
        flux_pl,
        flux_pl_t,
        margin: base.margin,
        time: model.time,
    })
}
