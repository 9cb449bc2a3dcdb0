mod common;

use aopt_core::forward::solve_forward;
use aopt_core::geometry::ReferenceDomain;
use aopt_core::objective::{ControlVector, ReducedProblem, RegularizationSpec, RoiMask, Targets};
use aopt_core::optimizer::{optimize, project_admissible, OptimizerConfig};
use aopt_core::parallel::Sequential;
use aopt_core::params::{InitialData, PhysicalParams, TimeGrid};
use common::*;

fn manufactured(dom: ReferenceDomain, nt: usize, theta: f64) -> (ReducedProblem, ControlVector) {
    let time = TimeGrid::new(1.0, nt).unwrap();
    let mut params = PhysicalParams::default();
    params.theta = theta;
    let model = aopt_core::forward::Model::new(params, &dom, &curved(&dom), time).unwrap();
    let hidden = ControlVector {
        g: pulse_g(&model, 2.0),
        h: pulse_h(&model, 2.0),
        ell: curved(&dom),
    };
    let state = solve_forward(&model, &hidden.g, &hidden.h, &InitialData::zero(&dom)).unwrap();
    let prior = ControlVector::zeros(&dom, &time);
    let rp = ReducedProblem::new(
        params,
        dom,
        time,
        Targets::from_state(&state),
        RoiMask::default_for(&dom),
        prior,
        RegularizationSpec::default(),
    )
    .unwrap();
    (rp, hidden)
}

fn deviation(u: &ControlVector, prior: &ControlVector) -> f64 {
    let d = u.difference(prior);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    norm(d.g.as_slice()) + norm(d.h.as_slice()) + norm(&d.ell)
}

#[test]
fn manufactured_recovery_reduces_the_objective() {
    let (rp, _) = manufactured(small_domain(), 32, 1e-6);
    let config = OptimizerConfig { max_iters: 40, ..Default::default() };
    let (u, hist) = optimize(&rp, &config, &rp.prior, &Sequential, &mut |_, _| {}).unwrap();
    assert!(hist.is_monotone());
    assert_eq!(project_admissible(&u, &rp.prior), u);
    let ratio = hist.last().breakdown.total / hist.initial().breakdown.total;
    assert!(ratio < 0.1, "{ratio}");
    assert!(hist.records.iter().all(|r| r.feasible && r.margin > 0.0));
}

#[test]
fn heavy_regularization_keeps_the_controls_at_the_priors() {
    let config = OptimizerConfig { max_iters: 10, ..Default::default() };
    let mut devs = Vec::new();
    for theta in [1e-6, 1e6] {
        let (rp, _) = manufactured(tiny_domain(), 16, theta);
        let (u, hist) = optimize(&rp, &config, &rp.prior, &Sequential, &mut |_, _| {}).unwrap();
        assert!(hist.is_monotone());
        devs.push(deviation(&u, &rp.prior));
    }
    assert!(devs[0] > 0.0);
    assert!(devs[1] <= 1e-3 * devs[0], "{devs:?}");
}

#[test]
fn accepted_iterates_are_reported_in_order() {
    let (rp, _) = manufactured(tiny_domain(), 8, 1e-6);
    let config = OptimizerConfig { max_iters: 3, ..Default::default() };
    let mut seen = Vec::new();
    let (u, hist) = optimize(&rp, &config, &rp.prior, &Sequential, &mut |r, c| seen.push((r.iteration, c.clone()))).unwrap();
    assert_eq!(seen.len(), hist.records.len());
    assert!(seen.iter().enumerate().all(|(k, (i, _))| *i == k));
    assert_eq!(seen.last().unwrap().1, u);
}
