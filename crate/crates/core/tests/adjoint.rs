mod common;

use aopt_core::adjoint::{extract_multipliers, solve_adjoint_with_sources, AdjointTrajectory};
use aopt_core::forward::{solve_forward, FieldHistory, Model, StateTrajectory};
use aopt_core::linearized::{solve_linearized, LinearizedRhs};
use aopt_core::gradient::{adjoint_sources, solve_adjoint};
use aopt_core::objective::{RoiMask, Targets};
use aopt_core::params::{InitialData, PhysicalParams};
use aopt_core::spacetime::SpaceTime;
use common::*;

fn base(nt: usize) -> (Model, SpaceTime, SpaceTime, StateTrajectory) {
    let dom = tiny_domain();
    let model = model_on(&dom, PhysicalParams::default(), nt);
    let (g, h) = (pulse_g(&model, 1.0), pulse_h(&model, 1.0));
    let s = solve_forward(&model, &g, &h, &InitialData::zero(&dom)).unwrap();
    (model, g, h, s)
}

fn zero_targets(model: &Model) -> Targets {
    Targets::zeros(model.dom(), &model.time)
}

fn fields(adj: &AdjointTrajectory) -> Vec<&SpaceTime> {
    let mut out: Vec<&SpaceTime> = Vec::new();
    for x in [&adj.qbar, &adj.qtil, &adj.vtil] {
        out.extend([&x.u, &x.u_t, &x.u_tt]);
    }
    out.push(&adj.mu_n);
    out.push(&adj.mu_pl);
    out
}

#[test]
fn zero_misfit_gives_zero_adjoint() {
    let (model, _, _, s) = base(8);
    let targets = Targets::from_state(&s);
    let adj = solve_adjoint(&model, &s, &targets, &RoiMask::default_for(model.dom())).unwrap();
    assert_eq!(adj.max_abs(), 0.0);
}

#[test]
fn terminal_conditions_hold_exactly() {
    let (model, _, _, s) = base(8);
    let adj = solve_adjoint(&model, &s, &zero_targets(&model), &RoiMask::default_for(model.dom())).unwrap();
    assert!(adj.max_abs() > 0.0);
    let last = model.time.nt;
    for f in [&adj.qbar, &adj.qtil, &adj.vtil] {
        assert!(f.u.row(last).iter().all(|v| *v == 0.0));
        assert!(f.u_t.row(last).iter().all(|v| *v == 0.0));
    }
}

#[test]
fn adjoint_is_linear_in_the_misfit() {
    let (model, _, _, s) = base(8);
    let roi = RoiMask::default_for(model.dom());
    let src = adjoint_sources(&model, &s, &zero_targets(&model), &roi);
    let mut twice = src.clone();
    twice.pressure = twice.pressure.scaled(2.0);
    twice.plate = twice.plate.scaled(2.0);
    let a = solve_adjoint_with_sources(&model, &s, &src).unwrap();
    let b = solve_adjoint_with_sources(&model, &s, &twice).unwrap();
    for (x, y) in fields(&a).into_iter().zip(fields(&b)) {
        let mut d = y.clone();
        d.axpy(-2.0, x);
        assert!(d.max_abs() <= 1e-9 * y.max_abs().max(1e-300), "{} vs {}", d.max_abs(), y.max_abs());
    }
}

/// Relative mismatch between `<source, linearized state>` and the multiplier
/// pairing for a Neumann (`which = 0`) or plate (`which = 1`) perturbation.
/// The gradients are `-B_N mu_N` and `-(rho/kappa) M_pl v_til`; the mismatch
/// is time-discretization error of the continuous adjoint.
fn duality_mismatch(nt: usize, which: usize) -> f64 {
    let dom = small_domain();
    let model = model_on(&dom, PhysicalParams::default(), nt);
    let (g, h) = (pulse_g(&model, 1.0), pulse_h(&model, 1.0));
    let s = solve_forward(&model, &g, &h, &InitialData::zero(&dom)).unwrap();
    let src = adjoint_sources(&model, &s, &zero_targets(&model), &RoiMask::default_for(&dom));
    let adj = solve_adjoint_with_sources(&model, &s, &src).unwrap();
    let (dg, dh) = if which == 0 {
        (pulse_g(&model, 1.0), SpaceTime::zeros(model.time.len(), model.n_plate()))
    } else {
        (SpaceTime::zeros(model.time.len(), dom.nx), pulse_h(&model, 1.0))
    };
    let lin = solve_linearized(&model, &s, &LinearizedRhs::zeros(&model), &dg, &dh, None).unwrap();
    let f = model.params.rho / model.params.kappa;
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for (n, wn) in model.time.weights().iter().enumerate() {
        let dp = lin.pressure(n);
        lhs += wn * src.pressure.row(n).iter().zip(&dp).map(|(a, b)| a * b).sum::<f64>();
        lhs += wn * src.plate.row(n).iter().zip(lin.wtil.u.row(n)).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..dom.nx {
            rhs -= wn * model.disc.neumann_mapped[i] * adj.mu_n.get(n, i) * dg.get(n, i);
        }
        for q in 0..dom.n_plate() {
            rhs -= f * wn * model.disc.plate_mass[q] * adj.vtil.u.get(n, q) * dh.get(n, q);
        }
    }
    (lhs - rhs).abs() / lhs.abs()
}

#[test]
fn adjoint_is_dual_to_the_linearized_solve() {
    for which in 0..2 {
        let e: Vec<f64> = [32, 64, 128].iter().map(|nt| duality_mismatch(*nt, which)).collect();
        assert!(e[2] < 0.01, "{which}: {e:?}");
        assert!(e[2] < 0.4 * e[1] && e[1] < 0.4 * e[0], "{which}: {e:?}");
    }
}

#[test]
fn multipliers_of_polynomial_traces() {
    let (model, _, _, _) = base(8);
    let dom = *model.dom();
    let nt = model.time.len();
    let n = model.n_nodes();
    let mut adj = AdjointTrajectory {
        qbar: FieldHistory::zeros(nt, n),
        qtil: FieldHistory::zeros(nt, n),
        vtil: FieldHistory::zeros(nt, model.n_plate()),
        mu_n: SpaceTime::zeros(nt, dom.nx),
        mu_pl: SpaceTime::zeros(nt, model.n_plate()),
    };
    let (mu_n, mu_pl) = extract_multipliers(&adj, &model);
    assert_eq!(mu_n.max_abs() + mu_pl.max_abs(), 0.0);

    adj.qbar.u = SpaceTime::from_fn(nt, n, |k, _| model.time.t(k));
    let (mu_n, _) = extract_multipliers(&adj, &model);
    let (c, b) = (model.params.c, model.params.b);
    for k in 0..nt {
        for i in 0..dom.nx {
            let expect = c * c * model.time.t(k) - b;
            assert!((mu_n.get(k, i) - expect).abs() < 1e-12);
        }
    }

    adj.qbar.u = SpaceTime::from_fn(nt, n, |_, _| 1.0);
    let (mu_n, _) = extract_multipliers(&adj, &model);
    assert!(mu_n.as_slice().iter().all(|v| (v - c * c).abs() < 1e-12));
}

