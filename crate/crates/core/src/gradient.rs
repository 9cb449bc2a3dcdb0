//! Reduced gradients of the objective with respect to `g`, `h` and `ell`.
//!
//! Gradients are reported in the plain (l2) dual pairing of the nodal
//! control arrays: `J(u + d) - J(u) ~ sum(G * d)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::adjoint::{solve_adjoint_with_sources, AdjointSources, AdjointTrajectory};
use crate::discretization::ShapeAccumulator;
use crate::error::Result;
use crate::forward::{Model, StateTrajectory};
use crate::geometry::{boundary_geometry, Edge, MappedCoefficients, ReferenceDomain};
use crate::objective::{pressure_misfit, ControlDirection, ControlVector, Evaluation, ReducedProblem, Regularizer, RoiMask, Targets};
use crate::operators::conormal_trace;
use crate::residual::westervelt_eta;
use crate::spacetime::{time_derivative_second_order, SpaceTime};

/// Misfit sources of the adjoint system.
pub fn adjoint_sources(model: &Model, state: &StateTrajectory, targets: &Targets, roi: &RoiMask) -> AdjointSources {
    let (nt, n, np) = (model.time.len(), model.n_nodes(), model.n_plate());
    let mut pressure = SpaceTime::zeros(nt, n);
    let mut plate = SpaceTime::zeros(nt, np);
    for k in 0..nt {
        let e = pressure_misfit(state, targets, k);
        for i in 0..n {
            pressure.set(k, i, roi.mask[i] * model.disc.mass[i] * e[i]);
        }
        for q in 0..np {
            plate.set(k, q, model.disc.plate_mass[q] * (state.wtil.u.get(k, q) - targets.w_d.get(k, q)));
        }
    }
    AdjointSources { pressure, plate }
}

/// Adjoint solve for the tracking misfits.
pub fn solve_adjoint(model: &Model, state: &StateTrajectory, targets: &Targets, roi: &RoiMask) -> Result<AdjointTrajectory> {
    solve_adjoint_with_sources(model, state, &adjoint_sources(model, state, targets, roi))
}

/// `theta A_g^* A_g (g - g0) - B_N mu_N` with the two initial layers removed.
pub fn gradient_g(model: &Model, reg_grad_g: &SpaceTime, mu_n: &SpaceTime) -> SpaceTime {
    let w = model.time.weights();
    let mut out = reg_grad_g.clone();
    for n in 0..model.time.len() {
        for i in 0..model.dom().nx {
            let v = out.get(n, i) - w[n] * model.disc.neumann_mapped[i] * mu_n.get(n, i);
            out.set(n, i, v);
        }
    }
    for n in 0..2 {
        out.row_mut(n).fill(0.0);
    }
    out
}

/// `theta A_h^* A_h (h - h0) - (rho/kappa) M_pl v_til` with the initial
/// layer removed.
pub fn gradient_h(model: &Model, reg_grad_h: &SpaceTime, vtil: &SpaceTime) -> SpaceTime {
    let w = model.time.weights();
    let f = model.params.rho / model.params.kappa;
    let mut out = reg_grad_h.clone();
    for n in 0..model.time.len() {
        for q in 0..model.n_plate() {
            let v = out.get(n, q) - f * w[n] * model.disc.plate_mass[q] * vtil.get(n, q);
            out.set(n, q, v);
        }
    }
    out.row_mut(0).fill(0.0);
    out
}

/// Shape gradient: the regularizer part plus the derivative of the tracking
/// term and of the state operator (paired with the adjoint) with respect to
/// the profile, assembled in one sweep over time.
pub fn gradient_ell(
    model: &Model,
    reg_grad_ell: &[f64],
    state: &StateTrajectory,
    adj: &AdjointTrajectory,
    targets: &Targets,
    roi: &RoiMask,
) -> Result<Vec<f64>> {
    let disc = &model.disc;
    let p = &model.params;
    let (c2, b) = (p.c * p.c, p.b);
    let dom = *model.dom();
    let n = model.n_nodes();
    let mut acc = ShapeAccumulator::new(disc);
    let w = model.time.weights();
    let mut u = vec![0.0; n];
    let mut top = vec![0.0; dom.nx];
    for (k, wk) in w.iter().enumerate() {
        for i in 0..n {
            u[i] = b * state.pbar.u_t.get(k, i) + c2 * state.pbar.u.get(k, i);
        }
        acc.add_stiffness(disc, *wk, adj.qbar.u.row(k), &u);
        acc.add_mass(*wk, adj.qbar.u.row(k), state.pbar.u_tt.row(k));
        for i in 0..dom.nx {
            top[i] = -adj.qbar.u.get(k, model.top_node(i))
                * (c2 * state.flux_n.get(k, i) + b * state.flux_n_t.get(k, i));
        }
        acc.add_neumann(*wk, &top);

        for i in 0..n {
            u[i] = b * state.ptil.u_t.get(k, i) + c2 * state.ptil.u.get(k, i);
        }
        acc.add_stiffness(disc, *wk, adj.qtil.u.row(k), &u);
        let eta = westervelt_eta(p.k, state, k);
        let acc_til: Vec<f64> = state.ptil.u_tt.row(k).iter().zip(&eta).map(|(a, e)| a + e).collect();
        acc.add_mass(*wk, adj.qtil.u.row(k), &acc_til);

        let e = pressure_misfit(state, targets, k);
        let masked: Vec<f64> = e.iter().zip(&roi.mask).map(|(v, m)| v * m).collect();
        acc.add_mass(0.5 * wk, &masked, &e);
    }
    let mut g = acc.gradient(disc);
    for (gi, r) in g.iter_mut().zip(reg_grad_ell) {
        *gi += r;
    }
    let nx = dom.nx;
    for i in [0, 1, nx - 2, nx - 1] {
        g[i] = 0.0;
    }
    Ok(g)
}

impl ReducedProblem {
    /// Objective, adjoint and the three reduced gradients.
    pub fn gradient(&self, u: &ControlVector) -> Result<(Evaluation, AdjointTrajectory, ControlDirection)> {
        let ev = self.evaluate(u)?;
        let (adj, grad) = self.gradient_at(u, &ev)?;
        Ok((ev, adj, grad))
    }

    /// Adjoint and reduced gradients at a design whose forward solve is
    /// already available.
    pub fn gradient_at(&self, u: &ControlVector, ev: &Evaluation) -> Result<(AdjointTrajectory, ControlDirection)> {
        let adj = solve_adjoint(&ev.model, &ev.state, &self.targets, &self.roi)?;
        let reg = self.reg.gradient(u, &self.prior, self.params.theta)?;
        let g = gradient_g(&ev.model, &reg.g, &adj.mu_n);
        let h = gradient_h(&ev.model, &reg.h, &adj.vtil.u);
        let ell = gradient_ell(&ev.model, &reg.ell, &ev.state, &adj, &self.targets, &self.roi)?;
        Ok((adj, ControlDirection { g, h, ell }))
    }
}

/// Boundary-integral form of the shape derivative, evaluated as a
/// diagnostic density on B (to be paired with `dell` in the trapezoid rule).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryShapeGradient {
    /// Time-integrated state residuals times adjoints at the Neumann edge.
    pub residual: Vec<f64>,
    /// `d phi/dn` with `phi = int (dp_bar/dn - g) mu_N dt`.
    pub normal: Vec<f64>,
    /// `phi H`.
    pub curvature: Vec<f64>,
    /// Regularizer density `theta A^*A (ell - ell0)` (per unit length).
    pub regularizer: Vec<f64>,
    pub total: Vec<f64>,
}

/// Evaluates the boundary form of the shape derivative. Interior residuals
/// are evaluated at the row below the edge; `g` is extended constantly along
/// the normal and `mu_N` by the interior field `c^2 q_bar - b q_bar_t`.
pub fn shape_gradient_boundary_form(
    model: &Model,
    controls: &ControlVector,
    prior: &ControlVector,
    reg: &Regularizer,
    state: &StateTrajectory,
    adj: &AdjointTrajectory,
) -> Result<BoundaryShapeGradient> {
    let dom = *model.dom();
    let geo = boundary_geometry(&controls.ell, &dom)?;
    let p = &model.params;
    let (nx, n) = (dom.nx, model.n_nodes());
    let w = model.time.weights();
    let dt = model.time.dt();
    let coeffs = &model.disc.coeffs;
    let qbar_t = time_derivative_second_order(&adj.qbar.u, dt);
    let below = |i: usize| dom.node(i, dom.nz() - 2);
    let mut residual = vec![0.0; nx];
    let mut phi = vec![0.0; n];
    let mut r = vec![0.0; n];
    for (k, wk) in w.iter().enumerate() {
        // Strong residuals at nodes via the lumped weak form.
        r.fill(0.0);
        model.pbar.mass.matvec_add(1.0, state.pbar.u_tt.row(k), &mut r);
        model.pbar.damping.matvec_add(1.0, state.pbar.u_t.row(k), &mut r);
        model.pbar.stiffness.matvec_add(1.0, state.pbar.u.row(k), &mut r);
        let rbar: Vec<f64> = r.iter().zip(&model.disc.mass).map(|(a, m)| a / m).collect();
        r.fill(0.0);
        model.pbar.mass.matvec_add(1.0, state.ptil.u_tt.row(k), &mut r);
        model.pbar.damping.matvec_add(1.0, state.ptil.u_t.row(k), &mut r);
        model.pbar.stiffness.matvec_add(1.0, state.ptil.u.row(k), &mut r);
        let eta = westervelt_eta(p.k, state, k);
        let rtil: Vec<f64> = (0..n).map(|i| r[i] / model.disc.mass[i] + eta[i]).collect();
        for i in 0..nx {
            let node = below(i);
            residual[i] += wk * (rbar[node] * adj.qbar.u.get(k, node) + rtil[node] * adj.qtil.u.get(k, node));
        }
        // phi extended into the domain.
        let dn = normal_derivative_field(&dom, state.pbar.u.row(k), &geo.nu, coeffs);
        for j in 0..dom.nz() {
            for i in 0..nx {
                let node = dom.node(i, j);
                let mu = p.c * p.c * adj.qbar.u.get(k, node) - p.b * qbar_t.get(k, node);
                phi[node] += wk * (dn[node] - controls.g.get(k, i)) * mu;
            }
        }
    }
    let dphi = conormal_trace(&phi, coeffs, Edge::Neumann)?;
    let top: Vec<f64> = (0..nx).map(|i| phi[dom.node(i, dom.nz() - 1)]).collect();
    let curvature: Vec<f64> = top.iter().zip(&geo.curvature).map(|(f, h)| f * h).collect();
    let reg_grad = reg.gradient(controls, prior, p.theta)?;
    let bw = dom.b_weights();
    let regularizer: Vec<f64> = reg_grad.ell.iter().zip(&bw).map(|(g, w)| g / w).collect();
    let total = (0..nx)
        .map(|i| residual[i] + dphi[i] + curvature[i] + regularizer[i])
        .collect();
    Ok(BoundaryShapeGradient {
        residual,
        normal: dphi,
        curvature,
        regularizer,
        total,
    })
}

/// `nu . (M grad f)` at every node, with the Neumann-edge normal of each
/// column (the same transform as the conormal trace).
fn normal_derivative_field(dom: &ReferenceDomain, f: &[f64], nu: &[[f64; 2]], coeffs: &MappedCoefficients) -> Vec<f64> {
    let mut out = vec![0.0; dom.n_nodes()];
    let nz = dom.nz();
    for j in 0..nz {
        let (jm, jp) = if j == 0 { (0, 1) } else if j == nz - 1 { (nz - 2, nz - 1) } else { (j - 1, j + 1) };
        for i in 0..dom.nx {
            let (im, ip) = if i == 0 { (0, 1) } else if i == dom.nx - 1 { (dom.nx - 2, dom.nx - 1) } else { (i - 1, i + 1) };
            let node = dom.node(i, j);
            let fx_ref = (f[dom.node(ip, j)] - f[dom.node(im, j)]) / (dom.x(ip) - dom.x(im));
            let fz_ref = (f[dom.node(i, jp)] - f[dom.node(i, jm)]) / (dom.zref(jp) - dom.zref(jm));
            let m = coeffs.m[node];
            let (gx, gz) = (m[0] * fx_ref + m[1] * fz_ref, m[2] * fx_ref + m[3] * fz_ref);
            out[node] = nu[i][0] * gx + nu[i][1] * gz;
        }
    }
    out
}
