mod common;

use aopt_core::diagnostics::*;
use aopt_core::forward::{solve_forward, Model};
use aopt_core::geometry::ReferenceDomain;
use aopt_core::params::{InitialData, PhysicalParams, TimeGrid};
use common::*;

fn linear_params() -> PhysicalParams {
    let mut p = PhysicalParams::default();
    p.k = 0.0;
    p
}

fn identity_defect(nx: usize, nt: usize) -> f64 {
    let dom = ReferenceDomain::new(1.0, 0.25, 1.0, nx, (nx - 1) / 4 + 1, nx).unwrap();
    let model = Model::new(linear_params(), &dom, &curved(&dom), TimeGrid::new(1.0, nt).unwrap()).unwrap();
    let g = pulse_g(&model, 1.0);
    let h = pulse_h(&model, 0.0);
    let s = solve_forward(&model, &g, &h, &InitialData::zero(&dom)).unwrap();
    energy_identity_pbar(&model, &s).relative_defect()
}

#[test]
fn linear_energy_identity_defect_converges_at_second_order() {
    let e: Vec<f64> = [(17, 32), (33, 64), (65, 128)].iter().map(|(nx, nt)| identity_defect(*nx, *nt)).collect();
    for w in e.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.8, "{e:?}");
    }
}

#[test]
fn zero_state_has_zero_energy() {
    let dom = tiny_domain();
    let model = model_on(&dom, PhysicalParams::default(), 8);
    let g = pulse_g(&model, 0.0);
    let h = pulse_h(&model, 0.0);
    let s = solve_forward(&model, &g, &h, &InitialData::zero(&dom)).unwrap();
    let rec = energy_series(&model, &s, &g, &h, 0.5).unwrap();
    assert!(rec.iter().all(|r| r.terms().iter().all(|v| *v == 0.0) && r.data_norm == 0.0));
    assert_eq!(energy_ratio(&rec), 0.0);
}

#[test]
fn energy_terms_are_nonnegative_on_random_states() {
    let dom = tiny_domain();
    let model = model_on(&dom, PhysicalParams::default(), 8);
    let mut r = rng(11);
    let mut s = solve_forward(&model, &pulse_g(&model, 1.0), &pulse_h(&model, 1.0), &InitialData::zero(&dom)).unwrap();
    let nt = model.time.len();
    for f in [&mut s.pbar, &mut s.ptil] {
        f.u = random_field(&mut r, nt, dom.n_nodes());
        f.u_t = random_field(&mut r, nt, dom.n_nodes());
        f.u_tt = random_field(&mut r, nt, dom.n_nodes());
    }
    s.wtil.u_t = random_field(&mut r, nt, dom.n_plate());
    s.wtil.u_tt = random_field(&mut r, nt, dom.n_plate());
    let g = random_field(&mut r, nt, dom.nx);
    let h = random_field(&mut r, nt, dom.n_plate());
    let rec = energy_series(&model, &s, &g, &h, 0.5).unwrap();
    for rec in &rec {
        assert!(rec.terms().iter().all(|v| *v >= 0.0), "{:?}", rec.terms());
        assert!(rec.data_norm >= 0.0);
    }
    assert!(rec.windows(2).all(|w| w[1].data_norm >= w[0].data_norm));
}

#[test]
fn energy_ratio_is_stable_under_time_refinement() {
    let dom = small_domain();
    for amp in [0.1, 1.0] {
        let ratios: Vec<f64> = [64, 128]
            .iter()
            .map(|nt| {
                let model = model_on(&dom, PhysicalParams::default(), *nt);
                let (g, h) = (pulse_g(&model, amp), pulse_h(&model, amp));
                let s = solve_forward(&model, &g, &h, &InitialData::zero(&dom)).unwrap();
                energy_ratio(&energy_series(&model, &s, &g, &h, 0.5).unwrap())
            })
            .collect();
        assert!(ratios[0] > 0.0);
        assert!((ratios[1] / ratios[0] - 1.0).abs() <= 0.2, "{ratios:?}");
    }
}
