#![allow(dead_code)]

use aopt_core::forward::Model;
use aopt_core::geometry::{bump, BoundaryProfile, ReferenceDomain};
use aopt_core::params::{PhysicalParams, TimeGrid};
use aopt_core::spacetime::SpaceTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn small_domain() -> ReferenceDomain {
    ReferenceDomain::new(1.0, 0.25, 1.0, 17, 5, 17).unwrap()
}

pub fn tiny_domain() -> ReferenceDomain {
    ReferenceDomain::new(1.0, 0.25, 1.0, 9, 3, 9).unwrap()
}

pub fn curved(dom: &ReferenceDomain) -> BoundaryProfile {
    BoundaryProfile::with_bump(dom, 0.1, 0.25, 0.75)
}

pub fn model_on(dom: &ReferenceDomain, params: PhysicalParams, nt: usize) -> Model {
    Model::new(params, dom, &curved(dom), TimeGrid::new(1.0, nt).unwrap()).unwrap()
}

pub fn pulse_g(model: &Model, amp: f64) -> SpaceTime {
    let dom = *model.dom();
    SpaceTime::from_fn(model.time.len(), dom.nx, |n, i| {
        amp * bump(model.time.t(n), 0.05, 0.55) * bump(dom.x(i), 0.2, 0.8)
    })
}

pub fn pulse_h(model: &Model, amp: f64) -> SpaceTime {
    let dom = *model.dom();
    SpaceTime::from_fn(model.time.len(), dom.n_plate(), |n, q| {
        amp * bump(model.time.t(n), 0.1, 0.7) * (std::f64::consts::PI * dom.x(q + 1)).sin()
    })
}

pub fn random_field(rng: &mut ChaCha8Rng, n_time: usize, n_space: usize) -> SpaceTime {
    SpaceTime::from_fn(n_time, n_space, |_, _| 0.0).clone_with(|_| rng.gen_range(-1.0..1.0))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smooth random shape direction with clamped ends.
pub fn shape_direction(dom: &ReferenceDomain, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let a: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    (0..dom.nx)
        .map(|i| {
            let x = dom.x(i);
            0.05 * (a[0] * bump(x, 0.2, 0.8) + a[1] * bump(x, 0.2, 0.6) + a[2] * bump(x, 0.45, 0.8))
        })
        .collect()
}

pub trait CloneWith {
    fn clone_with(&self, f: impl FnMut(f64) -> f64) -> Self;
}

impl CloneWith for SpaceTime {
    fn clone_with(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let data: Vec<f64> = self.as_slice().iter().map(|v| f(*v)).collect();
        SpaceTime::from_vec(self.n_time(), self.n_space(), data).unwrap()
    }
}
