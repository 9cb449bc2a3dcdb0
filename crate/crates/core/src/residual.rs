//! The discrete state operator in residual form and its pairing with test
//! functions.
//!
//! The state is the tuple `(p_bar, p_til, w_til, phi_N, phi_pl)`, where the
//! flux variables stand for `dp_bar/dn` on the Neumann edge and `dp_til/dn` on
//! the plate. The five residual rows are
//!
//! ```text
//! R_bar  = M_bar p_bar'' + C_bar p_bar' + K_bar p_bar - B_N (c^2 phi_N + b phi_N')
//! R_til  = M p_til'' + C_a p_til' + K_a p_til + M eta - E (c^2 phi_pl + b phi_pl')
//! R_w    = rho M_pl w'' + D w' + delta K_pl w - kappa M_pl (p_til' + p_bar')|pl - M_pl h
//! R_N    = B_N (phi_N - g)
//! R_pl   = M_pl (phi_pl + rho w')
//! ```
//!
//! with `eta = -2k (P p_til'' + (P')^2 + P p_bar'')`, `P = p_bar + p_til`,
//! `B_N` the mapped Neumann weights and `E` the plate-edge weights. The
//! pairing with tests `(q_bar, q_til, v_til, mu_N, mu_pl)` is trapezoidal in
//! time, with the plate row weighted by `rho/kappa`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::forward::{Model, StateTrajectory};
use crate::math::dot;
use crate::spacetime::SpaceTime;

/// Test functions paired with the residual rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TestTuple {
    pub qbar: SpaceTime,
    pub qtil: SpaceTime,
    pub vtil: SpaceTime,
    pub mu_n: SpaceTime,
    pub mu_pl: SpaceTime,
}

impl TestTuple {
    pub fn zeros(model: &Model) -> Self {
        let (nt, n, np, nx) = (model.time.len(), model.n_nodes(), model.n_plate(), model.dom().nx);
        Self {
            qbar: SpaceTime::zeros(nt, n),
            qtil: SpaceTime::zeros(nt, n),
            vtil: SpaceTime::zeros(nt, np),
            mu_n: SpaceTime::zeros(nt, nx),
            mu_pl: SpaceTime::zeros(nt, np),
        }
    }
}

/// Nodal residual rows at every time node.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVectors {
    pub pbar: SpaceTime,
    pub ptil: SpaceTime,
    pub plate: SpaceTime,
    pub neumann: SpaceTime,
    pub plate_flux: SpaceTime,
}

impl ResidualVectors {
    fn zeros(model: &Model) -> Self {
        let t = TestTuple::zeros(model);
        Self {
            pbar: t.qbar,
            ptil: t.qtil,
            plate: t.vtil,
            neumann: t.mu_n,
            plate_flux: t.mu_pl,
        }
    }

    /// Trapezoidal-in-time pairing with a test tuple.
    pub fn pair(&self, model: &Model, tests: &TestTuple) -> f64 {
        let w = model.time.weights();
        let plate_factor = model.params.rho / model.params.kappa;
        let mut total = 0.0;
        for (n, wn) in w.iter().enumerate() {
            total += wn
                * (dot(self.pbar.row(n), tests.qbar.row(n))
                    + dot(self.ptil.row(n), tests.qtil.row(n))
                    + plate_factor * dot(self.plate.row(n), tests.vtil.row(n))
                    + dot(self.neumann.row(n), tests.mu_n.row(n))
                    + dot(self.plate_flux.row(n), tests.mu_pl.row(n)));
        }
        total
    }

    /// Largest magnitude over all rows.
    pub fn max_abs(&self) -> f64 {
        [&self.pbar, &self.ptil, &self.plate, &self.neumann, &self.plate_flux]
            .iter()
            .map(|f| f.max_abs())
            .fold(0.0, f64::max)
    }

    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        self.pbar.axpy(alpha, &other.pbar);
        self.ptil.axpy(alpha, &other.ptil);
        self.plate.axpy(alpha, &other.plate);
        self.neumann.axpy(alpha, &other.neumann);
        self.plate_flux.axpy(alpha, &other.plate_flux);
    }
}

fn check_state(model: &Model, s: &StateTrajectory) -> Result<()> {
    let (nt, n, np, nx) = (model.time.len(), model.n_nodes(), model.n_plate(), model.dom().nx);
    for (what, f, m) in [
        ("p_bar", &s.pbar.u, n),
        ("p_bar_t", &s.pbar.u_t, n),
        ("p_bar_tt", &s.pbar.u_tt, n),
        ("p_til", &s.ptil.u, n),
        ("p_til_t", &s.ptil.u_t, n),
        ("p_til_tt", &s.ptil.u_tt, n),
        ("w_til", &s.wtil.u, np),
        ("w_til_t", &s.wtil.u_t, np),
        ("w_til_tt", &s.wtil.u_tt, np),
        ("flux_n", &s.flux_n, nx),
        ("flux_n_t", &s.flux_n_t, nx),
        ("flux_pl", &s.flux_pl, np),
        ("flux_pl_t", &s.flux_pl_t, np),
    ] {
        f.check_shape(what, nt, m)?;
    }
    Ok(())
}

/// The rows without the Westervelt term, for arbitrary state and controls
/// (the map is linear in its arguments).
fn linear_rows(model: &Model, g: &SpaceTime, h: &SpaceTime, s: &StateTrajectory) -> Result<ResidualVectors> {
    model.check_g(g)?;
    model.check_h(h)?;
    check_state(model, s)?;
    let dom = *model.dom();
    let p = &model.params;
    let (c2, b) = (p.c * p.c, p.b);
    let disc = &model.disc;
    let mut r = ResidualVectors::zeros(model);
    for n in 0..model.time.len() {
        let out = r.pbar.row_mut(n);
        model.pbar.mass.matvec_add(1.0, s.pbar.u_tt.row(n), out);
        model.pbar.damping.matvec_add(1.0, s.pbar.u_t.row(n), out);
        model.pbar.stiffness.matvec_add(1.0, s.pbar.u.row(n), out);
        let (phi, phi_t) = (s.flux_n.row(n), s.flux_n_t.row(n));
        for i in 0..dom.nx {
            out[model.top_node(i)] -= disc.neumann_mapped[i] * (c2 * phi[i] + b * phi_t[i]);
        }

        let out = r.ptil.row_mut(n);
        model.pbar.mass.matvec_add(1.0, s.ptil.u_tt.row(n), out);
        model.pbar.damping.matvec_add(1.0, s.ptil.u_t.row(n), out);
        model.pbar.stiffness.matvec_add(1.0, s.ptil.u.row(n), out);
        let (phi, phi_t) = (s.flux_pl.row(n), s.flux_pl_t.row(n));
        for q in 0..dom.n_plate() {
            out[dom.plate_node(q)] -= disc.plate_coupling[q] * (c2 * phi[q] + b * phi_t[q]);
        }

        let out = r.plate.row_mut(n);
        let (w, w_t, w_tt) = (s.wtil.u.row(n), s.wtil.u_t.row(n), s.wtil.u_tt.row(n));
        disc.plate_stiffness.matvec_add(p.delta, w, out);
        model.plate_damping.matvec_add(1.0, w_t, out);
        let (pt_t, pb_t) = (s.ptil.u_t.row(n), s.pbar.u_t.row(n));
        for q in 0..dom.n_plate() {
            let node = dom.plate_node(q);
            out[q] += disc.plate_mass[q] * (p.rho * w_tt[q] - p.kappa * (pt_t[node] + pb_t[node]) - h.get(n, q));
        }

        let out = r.neumann.row_mut(n);
        for i in 0..dom.nx {
            out[i] = disc.neumann_mapped[i] * (s.flux_n.get(n, i) - g.get(n, i));
        }
        let out = r.plate_flux.row_mut(n);
        for q in 0..dom.n_plate() {
            out[q] = disc.plate_mass[q] * (s.flux_pl.get(n, q) + p.rho * w_t[q]);
        }
    }
    Ok(r)
}

/// `eta = -2k (P p_til'' + (P')^2 + P p_bar'')` at time node `n`.
pub(crate) fn westervelt_eta(k: f64, s: &StateTrajectory, n: usize) -> Vec<f64> {
    let (pb, pb_t, pb_tt) = (s.pbar.u.row(n), s.pbar.u_t.row(n), s.pbar.u_tt.row(n));
    let (pt, pt_t, pt_tt) = (s.ptil.u.row(n), s.ptil.u_t.row(n), s.ptil.u_tt.row(n));
    (0..pb.len())
        .map(|i| {
            let (pp, pp_t) = (pb[i] + pt[i], pb_t[i] + pt_t[i]);
            -2.0 * k * (pp * pt_tt[i] + pp_t * pp_t + pp * pb_tt[i])
        })
        .collect()
}

/// Nodal residual rows of a state for the given controls.
pub fn residual_vectors(model: &Model, g: &SpaceTime, h: &SpaceTime, s: &StateTrajectory) -> Result<ResidualVectors> {
    let mut r = linear_rows(model, g, h, s)?;
    if model.params.k != 0.0 {
        for n in 0..model.time.len() {
            let eta = westervelt_eta(model.params.k, s, n);
            for ((o, m), e) in r.ptil.row_mut(n).iter_mut().zip(&model.disc.mass).zip(&eta) {
                *o += m * e;
            }
        }
    }
    Ok(r)
}

/// The pairing `<A(controls, state), tests>`.
pub fn residual_apde(
    model: &Model,
    g: &SpaceTime,
    h: &SpaceTime,
    state: &StateTrajectory,
    tests: &TestTuple,
) -> Result<f64> {
    Ok(residual_vectors(model, g, h, state)?.pair(model, tests))
}

/// Derivative of the residual rows at `(g, h, ell, base)` in the direction
/// `(dg, dh, dell, d)`; `dell = None` means no shape perturbation.
pub fn linearized_residual(
    model: &Model,
    g: &SpaceTime,
    base: &StateTrajectory,
    d: &StateTrajectory,
    dg: &SpaceTime,
    dh: &SpaceTime,
    dell: Option<&[f64]>,
) -> Result<ResidualVectors> {
    let mut r = linear_rows(model, dg, dh, d)?;
    let k = model.params.k;
    if k != 0.0 {
        for n in 0..model.time.len() {
            let coeffs = FrozenCoefficients::at(k, base, n);
            let (dpb, dpb_t, dpb_tt) = (d.pbar.u.row(n), d.pbar.u_t.row(n), d.pbar.u_tt.row(n));
            let (dpt, dpt_t, dpt_tt) = (d.ptil.u.row(n), d.ptil.u_t.row(n), d.ptil.u_tt.row(n));
            let out = r.ptil.row_mut(n);
            for i in 0..out.len() {
                let m = model.disc.mass[i];
                out[i] += m
                    * (coeffs.a[i] * (dpt_tt[i] + dpb_tt[i])
                        + coeffs.b[i] * (dpt_t[i] + dpb_t[i])
                        + coeffs.c[i] * (dpt[i] + dpb[i]));
            }
        }
    }
    if let Some(dell) = dell {
        r.axpy(1.0, &shape_residual_derivative(model, g, base, dell)?);
    }
    Ok(r)
}

/// Frozen coefficients of the linearized Westervelt term:
/// `a = -2kP`, `b = -4kP'`, `c = -2kP''`.
pub(crate) struct FrozenCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl FrozenCoefficients {
    pub fn at(k: f64, s: &StateTrajectory, n: usize) -> Self {
        let sum = |x: &SpaceTime, y: &SpaceTime| -> Vec<f64> { x.row(n).iter().zip(y.row(n)).map(|(a, b)| a + b).collect() };
        let p = sum(&s.pbar.u, &s.ptil.u);
        let p_t = sum(&s.pbar.u_t, &s.ptil.u_t);
        let p_tt = sum(&s.pbar.u_tt, &s.ptil.u_tt);
        Self {
            a: p.iter().map(|v| -2.0 * k * v).collect(),
            b: p_t.iter().map(|v| -4.0 * k * v).collect(),
            c: p_tt.iter().map(|v| -2.0 * k * v).collect(),
        }
    }
}

/// Derivative of the residual rows with respect to the profile, the state
/// held fixed in reference coordinates.
pub fn shape_residual_derivative(model: &Model, g: &SpaceTime, s: &StateTrajectory, dell: &[f64]) -> Result<ResidualVectors> {
    let disc = &model.disc;
    let dk = disc.stiffness_derivative(dell)?;
    let dm = disc.mass_derivative(dell)?;
    let dbn = disc.neumann_mapped_derivative(dell)?;
    let p = &model.params;
    let (c2, b) = (p.c * p.c, p.b);
    let dom = *model.dom();
    let mut r = ResidualVectors::zeros(model);
    let mut u = vec![0.0; model.n_nodes()];
    for n in 0..model.time.len() {
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = b * s.pbar.u_t.get(n, i) + c2 * s.pbar.u.get(n, i);
        }
        let out = r.pbar.row_mut(n);
        dk.matvec_add(1.0, &u, out);
        for (i, o) in out.iter_mut().enumerate() {
            *o += dm[i] * s.pbar.u_tt.get(n, i);
        }
        for i in 0..dom.nx {
            out[model.top_node(i)] -= dbn[i] * (c2 * s.flux_n.get(n, i) + b * s.flux_n_t.get(n, i));
        }

        for (i, ui) in u.iter_mut().enumerate() {
            *ui = b * s.ptil.u_t.get(n, i) + c2 * s.ptil.u.get(n, i);
        }
        let eta = westervelt_eta(p.k, s, n);
        let out = r.ptil.row_mut(n);
        dk.matvec_add(1.0, &u, out);
        for (i, o) in out.iter_mut().enumerate() {
            *o += dm[i] * (s.ptil.u_tt.get(n, i) + eta[i]);
        }

        let out = r.neumann.row_mut(n);
        for i in 0..dom.nx {
            out[i] = dbn[i] * (s.flux_n.get(n, i) - g.get(n, i));
        }
    }
    Ok(r)
}
