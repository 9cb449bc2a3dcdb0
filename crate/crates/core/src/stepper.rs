//! Implicit second-order time integration shared by the forward, linearized
//! and adjoint solvers.
//!
//! Systems have the form `M a + C v + K x + N(n; x, v, a) = f(n)` with
//! `v = x'` and `a = x''`. The average-acceleration Newmark scheme
//!
//! ```text
//! x_{n+1} = x_n + dt v_n + dt^2/4 (a_n + a_{n+1})
//! v_{n+1} = v_n + dt/2 (a_n + a_{n+1})
//! ```
//!
//! is the trapezoidal rule applied to the first-order form in `(x, v)`; the
//! equation is enforced at every time node. The unknown of each step is
//! `x_{n+1}`. The pointwise term `N` is resolved by Newton's method with its
//! exact diagonal Jacobian; each Newton system is solved by Richardson
//! iteration preconditioned with the factorized linear part, falling back to
//! a direct factorization if that iteration does not contract.

use alloc::vec;
use alloc::vec::Vec;

use crate::banded::BandLu;
use crate::error::{Error, Result};
use crate::math::norm_inf;
use crate::sparse::CsrMatrix;
use crate::spacetime::SpaceTime;

pub(crate) const NEWTON_TOL: f64 = 1e-10;
pub(crate) const NEWTON_MAX_ITERS: usize = 25;
pub(crate) const DEGENERACY_THRESHOLD: f64 = 0.1;

/// A pointwise (diagonal) term of the semi-discrete system.
pub(crate) trait Pointwise {
    /// Whether `N` is affine in `(x, v, a)`; then one linear solve per step
    /// suffices.
    fn is_affine(&self) -> bool;

    /// Smallest leading-coefficient factor at step `n` (infinite when the
    /// term has no such factor).
    fn margin(&self, _n: usize, _x: &[f64]) -> f64 {
        f64::INFINITY
    }

    /// Adds `N(n; x, v, a)` to `out`.
    fn add(&self, n: usize, x: &[f64], v: &[f64], a: &[f64], out: &mut [f64]);

    /// Writes the diagonal partials of `N` in `x`, `v` and `a`.
    fn partials(&self, n: usize, x: &[f64], v: &[f64], a: &[f64], dx: &mut [f64], dv: &mut [f64], da: &mut [f64]);
}

/// The absent pointwise term.
pub(crate) struct NoPointwise;

impl Pointwise for NoPointwise {
    fn is_affine(&self) -> bool {
        true
    }

    fn add(&self, _: usize, _: &[f64], _: &[f64], _: &[f64], _: &mut [f64]) {}

    fn partials(&self, _: usize, _: &[f64], _: &[f64], _: &[f64], dx: &mut [f64], dv: &mut [f64], da: &mut [f64]) {
        dx.fill(0.0);
        dv.fill(0.0);
        da.fill(0.0);
    }
}

/// Linear part of a second-order system.
pub(crate) struct System<'a> {
    pub mass: &'a CsrMatrix,
    pub damping: &'a CsrMatrix,
    pub stiffness: &'a CsrMatrix,
}

/// Displacement, velocity and acceleration at every time node.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Kinematics {
    pub x: SpaceTime,
    pub v: SpaceTime,
    pub a: SpaceTime,
    /// Smallest degeneracy margin met (infinite for linear systems).
    pub margin: f64,
}

fn residual(
    sys: &System,
    nl: &dyn Pointwise,
    n: usize,
    x: &[f64],
    v: &[f64],
    a: &[f64],
    f: &[f64],
    out: &mut [f64],
) -> f64 {
    for (o, fi) in out.iter_mut().zip(f) {
        *o = -fi;
    }
    sys.mass.matvec_add(1.0, a, out);
    sys.damping.matvec_add(1.0, v, out);
    sys.stiffness.matvec_add(1.0, x, out);
    nl.add(n, x, v, a, out);
    // Scale for the relative stopping test.
    let mut s = norm_inf(f);
    for (m, y) in [(sys.mass, a), (sys.damping, v), (sys.stiffness, x)] {
        s = s.max(norm_inf(&m.apply(y)));
    }
    s
}

/// Solves `(A + diag(d)) y = r` given the factorization of `A`.
fn shifted_solve(a: &CsrMatrix, lu: &BandLu, d: &[f64], r: &[f64]) -> Result<Vec<f64>> {
    let mut y = r.to_vec();
    lu.solve_in_place(&mut y);
    if d.iter().all(|v| *v == 0.0) {
        return Ok(y);
    }
    let rn = norm_inf(r).max(f64::MIN_POSITIVE);
    let mut last = f64::INFINITY;
    for _ in 0..60 {
        let mut res = r.to_vec();
        a.matvec_add(-1.0, &y, &mut res);
        for ((ri, di), yi) in res.iter_mut().zip(d).zip(&y) {
            *ri -= di * yi;
        }
        let nr = norm_inf(&res);
        if nr <= 1e-14 * rn {
            return Ok(y);
        }
        if nr > 0.5 * last {
            break;
        }
        last = nr;
        lu.solve_in_place(&mut res);
        for (yi, ci) in y.iter_mut().zip(&res) {
            *yi += ci;
        }
    }
    let lu2 = BandLu::factor(a, d)?;
    let mut y = r.to_vec();
    lu2.solve_in_place(&mut y);
    Ok(y)
}

fn check_margin(nl: &dyn Pointwise, n: usize, x: &[f64], worst: &mut f64) -> Result<()> {
    let m = nl.margin(n, x);
    if m <= DEGENERACY_THRESHOLD {
        return Err(Error::NonDegeneracyViolated { step: n, margin: m });
    }
    *worst = worst.min(m);
    Ok(())
}

/// Integrates the system over `nt` steps of size `dt` from `(x0, v0)`.
/// `load(n, out)` writes `f(n)` into a zeroed buffer.
pub(crate) fn integrate(
    sys: &System,
    nl: &dyn Pointwise,
    nt: usize,
    dt: f64,
    x0: &[f64],
    v0: &[f64],
    load: &dyn Fn(usize, &mut [f64]),
) -> Result<Kinematics> {
    let dim = sys.mass.nrows();
    let mut traj = Kinematics {
        x: SpaceTime::zeros(nt + 1, dim),
        v: SpaceTime::zeros(nt + 1, dim),
        a: SpaceTime::zeros(nt + 1, dim),
        margin: f64::INFINITY,
    };
    let mut f = vec![0.0; dim];
    let mut res = vec![0.0; dim];
    let (mut dxv, mut dvv, mut dav) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);

    // Initial acceleration from the equation at t = 0.
    load(0, &mut f);
    check_margin(nl, 0, x0, &mut traj.margin)?;
    let mut a = vec![0.0; dim];
    for it in 0..=NEWTON_MAX_ITERS {
        let scale = residual(sys, nl, 0, x0, v0, &a, &f, &mut res);
        let r = norm_inf(&res);
        if r <= NEWTON_TOL * scale || r == 0.0 {
            break;
        }
        if it == NEWTON_MAX_ITERS {
            return Err(Error::NewtonDiverged { step: 0, residual: r });
        }
        nl.partials(0, x0, v0, &a, &mut dxv, &mut dvv, &mut dav);
        let lu = BandLu::factor(sys.mass, &dav)?;
        lu.solve_in_place(&mut res);
        for (ai, d) in a.iter_mut().zip(&res) {
            *ai -= d;
        }
        if nl.is_affine() && it == 1 {
            break;
        }
    }
    traj.x.row_mut(0).copy_from_slice(x0);
    traj.v.row_mut(0).copy_from_slice(v0);
    traj.a.row_mut(0).copy_from_slice(&a);

    let (c1, c2) = (2.0 / dt, 4.0 / (dt * dt));
    let a_eff = CsrMatrix::linear_combination(&[(c2, sys.mass), (c1, sys.damping), (1.0, sys.stiffness)])?;
    let lu = BandLu::factor(&a_eff, &[])?;
    let mut shift = vec![0.0; dim];
    let (mut x, mut v) = (vec![0.0; dim], vec![0.0; dim]);
    for n in 0..nt {
        let (xn, vn, an) = (traj.x.row(n).to_vec(), traj.v.row(n).to_vec(), traj.a.row(n).to_vec());
        f.fill(0.0);
        load(n + 1, &mut f);
        for i in 0..dim {
            x[i] = xn[i] + dt * vn[i] + 0.5 * dt * dt * an[i];
        }
        let kin = |x: &[f64], v: &mut [f64], a: &mut [f64]| {
            for i in 0..dim {
                v[i] = c1 * (x[i] - xn[i]) - vn[i];
                a[i] = c2 * (x[i] - xn[i] - dt * vn[i]) - an[i];
            }
        };
        let mut iters = 0;
        loop {
            check_margin(nl, n + 1, &x, &mut traj.margin)?;
            kin(&x, &mut v, &mut a);
            let scale = residual(sys, nl, n + 1, &x, &v, &a, &f, &mut res);
            let r = norm_inf(&res);
            if r <= NEWTON_TOL * scale || r == 0.0 || (nl.is_affine() && iters == 1) {
                break;
            }
            if iters == NEWTON_MAX_ITERS || !r.is_finite() {
                return Err(Error::NewtonDiverged { step: n + 1, residual: r });
            }
            nl.partials(n + 1, &x, &v, &a, &mut dxv, &mut dvv, &mut dav);
            for i in 0..dim {
                shift[i] = dxv[i] + c1 * dvv[i] + c2 * dav[i];
                res[i] = -res[i];
            }
            let delta = shifted_solve(&a_eff, &lu, &shift, &res)?;
            for (xi, d) in x.iter_mut().zip(&delta) {
                *xi += d;
            }
            iters += 1;
        }
        traj.x.row_mut(n + 1).copy_from_slice(&x);
        traj.v.row_mut(n + 1).copy_from_slice(&v);
        traj.a.row_mut(n + 1).copy_from_slice(&a);
    }
    Ok(traj)
}
