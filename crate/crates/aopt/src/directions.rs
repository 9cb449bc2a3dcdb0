//! Seeded random admissible directions.
//!
//! A direction is drawn as a small set of smooth bumps described in physical
//! units, so the same draw can be sampled on any grid. Samples are projected
//! onto the tangent space of the admissible set.

use aopt_core::geometry::{bump, ReferenceDomain};
use aopt_core::objective::ControlDirection;
use aopt_core::params::TimeGrid;
use aopt_core::spacetime::SpaceTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Control block a direction acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    G,
    H,
    Ell,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::G, Component::H, Component::Ell];

    pub fn name(self) -> &'static str {
        match self {
            Component::G => "g",
            Component::H => "h",
            Component::Ell => "ell",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Component::G => 0x67,
            Component::H => 0x68,
            Component::Ell => 0x6c,
        }
    }
}

/// One smooth term: `amplitude * bump(t; t0, t1) * shape(x)` with the shape
/// either a bump on `[x0, x1]` (g, ell) or the hinged sine mode `mode` (h).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Term {
    amplitude: f64,
    t0: f64,
    t1: f64,
    x0: f64,
    x1: f64,
    mode: u32,
}

/// A random direction in one control block, independent of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomDirection {
    pub component: Component,
    terms: Vec<Term>,
}

/// Relative size of profile directions with respect to `ell0`.
const SHAPE_SCALE: f64 = 0.05;

fn window(rng: &mut ChaCha8Rng, lo: f64, hi: f64, min_len: f64, max_len: f64) -> (f64, f64) {
    let len = rng.gen_range(min_len..max_len);
    let a = rng.gen_range(lo..hi - len);
    (a, a + len)
}

impl RandomDirection {
    /// Draws a direction; equal seeds give equal directions.
    pub fn draw(component: Component, rng: &mut ChaCha8Rng) -> Self {
        let count = match component {
            Component::Ell => 3,
            _ => 2,
        };
        let terms = (0..count)
            .map(|_| {
                let amplitude = rng.gen_range(-1.0..1.0);
                let (t0, t1) = window(rng, 0.05, 0.95, 0.3, 0.6);
                let (x0, x1) = match component {
                    Component::Ell => window(rng, 0.1, 0.9, 0.25, 0.5),
                    _ => window(rng, 0.0, 1.0, 0.3, 0.6),
                };
                let mode = rng.gen_range(1..=3);
                Term {
                    amplitude,
                    t0,
                    t1,
                    x0,
                    x1,
                    mode,
                }
            })
            .collect();
        Self { component, terms }
    }

    /// `count` directions for `component` from a seed.
    pub fn batch(component: Component, count: usize, seed: u64) -> Vec<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ component.tag());
        (0..count).map(|_| Self::draw(component, &mut rng)).collect()
    }

    /// Samples the direction on a grid.
    pub fn sample(&self, dom: &ReferenceDomain, time: &TimeGrid) -> ControlDirection {
        let mut d = ControlDirection::zeros(dom, time);
        let (lx, tf) = (dom.lx, time.t_final);
        match self.component {
            Component::G => {
                d.g = SpaceTime::from_fn(time.len(), dom.nx, |n, i| {
                    let (t, x) = (time.t(n) / tf, dom.x(i) / lx);
                    self.terms.iter().map(|s| s.amplitude * bump(t, s.t0, s.t1) * bump(x, s.x0, s.x1)).sum()
                });
            }
            Component::H => {
                d.h = SpaceTime::from_fn(time.len(), dom.n_plate(), |n, q| {
                    let (t, x) = (time.t(n) / tf, dom.x(q + 1) / lx);
                    self.terms
                        .iter()
                        .map(|s| s.amplitude * bump(t, s.t0, s.t1) * (s.mode as f64 * std::f64::consts::PI * x).sin())
                        .sum()
                });
            }
            Component::Ell => {
                d.ell = (0..dom.nx)
                    .map(|i| {
                        let x = dom.x(i) / lx;
                        SHAPE_SCALE * dom.ell0 * self.terms.iter().map(|s| s.amplitude * bump(x, s.x0, s.x1)).sum::<f64>()
                    })
                    .collect();
            }
        }
        d.project_tangent();
        d
    }
}

/// Sum of one random direction per block.
pub fn mixed_direction(seed: u64, dom: &ReferenceDomain, time: &TimeGrid) -> ControlDirection {
    let mut d = ControlDirection::zeros(dom, time);
    for c in Component::ALL {
        d.axpy(1.0, &RandomDirection::batch(c, 1, seed)[0].sample(dom, time));
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use aopt_core::geometry::check_perturbation_traces;

    fn grid() -> (ReferenceDomain, TimeGrid) {
        (ReferenceDomain::new(1.0, 0.25, 1.0, 17, 5, 17).unwrap(), TimeGrid::new(1.0, 32).unwrap())
    }

    #[test]
    fn draws_are_reproducible_and_distinct() {
        let a = RandomDirection::batch(Component::G, 3, 7);
        assert_eq!(a, RandomDirection::batch(Component::G, 3, 7));
        assert_ne!(a[0], a[1]);
        assert_ne!(a, RandomDirection::batch(Component::G, 3, 8));
    }

    #[test]
    fn samples_are_admissible_tangents() {
        let (dom, time) = grid();
        for c in Component::ALL {
            for d in RandomDirection::batch(c, 5, 3) {
                let s = d.sample(&dom, &time);
                assert!(s.max_abs() > 0.0);
                let mut p = s.clone();
                p.project_tangent();
                assert_eq!(p, s);
                check_perturbation_traces(&s.ell, &dom).unwrap();
                let others = match c {
                    Component::G => s.h.max_abs() + s.ell.iter().map(|v| v.abs()).sum::<f64>(),
                    Component::H => s.g.max_abs() + s.ell.iter().map(|v| v.abs()).sum::<f64>(),
                    Component::Ell => s.g.max_abs() + s.h.max_abs(),
                };
                assert_eq!(others, 0.0);
            }
        }
    }

    #[test]
    fn the_same_draw_samples_consistently_on_refined_grids() {
        let (dom, time) = grid();
        let d = &RandomDirection::batch(Component::G, 1, 5)[0];
        let coarse = d.sample(&dom, &time);
        let fine = d.sample(&dom.refined(), &time.refined());
        for n in 0..time.len() {
            for i in 0..dom.nx {
                assert_eq!(coarse.g.get(n, i), fine.g.get(2 * n, 2 * i));
            }
        }
    }
}
