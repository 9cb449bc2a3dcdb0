//! Turns a [`RunConfig`] into controls, targets and the reduced problem.

use aopt_core::forward::{solve_forward, Model};
use aopt_core::geometry::{bump, BoundaryProfile, ReferenceDomain};
use aopt_core::objective::{ControlVector, ReducedProblem, RoiMask, Targets};
use aopt_core::params::{InitialData, TimeGrid};
use aopt_core::spacetime::SpaceTime;

use crate::config::{ControlSpec, FieldSource, ProfileSource, RunConfig, TargetSource};
use crate::error::Result;
use crate::formats::{read_line_field, read_profile};

/// Neumann pulse: a bump in time on `[0.05, 0.55] T` times a bump on the
/// middle 60% of the edge. Its first two time layers vanish.
pub fn pulse_g(dom: &ReferenceDomain, time: &TimeGrid, amplitude: f64) -> SpaceTime {
    let t = time.t_final;
    SpaceTime::from_fn(time.len(), dom.nx, |n, i| {
        amplitude * bump(time.t(n), 0.05 * t, 0.55 * t) * bump(dom.x(i), 0.2 * dom.lx, 0.8 * dom.lx)
    })
}

/// Plate pulse: the first hinged mode modulated by a bump on `[0.1, 0.7] T`.
pub fn pulse_h(dom: &ReferenceDomain, time: &TimeGrid, amplitude: f64) -> SpaceTime {
    let t = time.t_final;
    SpaceTime::from_fn(time.len(), dom.n_plate(), |n, q| {
        amplitude * bump(time.t(n), 0.1 * t, 0.7 * t) * (std::f64::consts::PI * dom.x(q + 1) / dom.lx).sin()
    })
}

fn field(
    src: &FieldSource,
    dom: &ReferenceDomain,
    time: &TimeGrid,
    n_space: usize,
    pulse: fn(&ReferenceDomain, &TimeGrid, f64) -> SpaceTime,
) -> Result<SpaceTime> {
    match src {
        FieldSource::Zero => Ok(SpaceTime::zeros(time.len(), n_space)),
        FieldSource::Pulse(a) => Ok(pulse(dom, time, *a)),
        FieldSource::File(p) => read_line_field(p, time.len(), n_space),
    }
}

pub fn profile(src: &ProfileSource, dom: &ReferenceDomain) -> Result<BoundaryProfile> {
    match src {
        ProfileSource::Flat => Ok(BoundaryProfile::flat(dom)),
        ProfileSource::Bump { amplitude, a, b } => Ok(BoundaryProfile::with_bump(dom, *amplitude, *a, *b)),
        ProfileSource::File(p) => read_profile(p, dom),
    }
}

pub fn controls(spec: &ControlSpec, dom: &ReferenceDomain, time: &TimeGrid) -> Result<ControlVector> {
    Ok(ControlVector {
        g: field(&spec.g, dom, time, dom.nx, pulse_g)?,
        h: field(&spec.h, dom, time, dom.n_plate(), pulse_h)?,
        ell: profile(&spec.ell, dom)?,
    })
}

pub fn roi(cfg: &RunConfig) -> RoiMask {
    match cfg.roi {
        None => RoiMask::default_for(&cfg.domain),
        Some([x0, x1, z0, z1]) => RoiMask::rectangle(&cfg.domain, x0, x1, z0, z1),
    }
}

pub fn targets(cfg: &RunConfig) -> Result<Targets> {
    match &cfg.targets {
        TargetSource::Zero => Ok(Targets::zeros(&cfg.domain, &cfg.time)),
        TargetSource::Manufactured(spec) => {
            let hidden = controls(spec, &cfg.domain, &cfg.time)?;
            let model = Model::new(cfg.physics, &cfg.domain, &hidden.ell, cfg.time)?;
            let state = solve_forward(&model, &hidden.g, &hidden.h, &InitialData::zero(&cfg.domain))?;
            Ok(Targets::from_state(&state))
        }
    }
}

/// The reduced problem and the starting design described by `cfg`.
pub fn problem(cfg: &RunConfig) -> Result<(ReducedProblem, ControlVector)> {
    let prior = controls(&cfg.prior, &cfg.domain, &cfg.time)?;
    let start = controls(&cfg.start, &cfg.domain, &cfg.time)?;
    let rp = ReducedProblem::new(
        cfg.physics,
        cfg.domain,
        cfg.time,
        targets(cfg)?,
        roi(cfg),
        prior,
        cfg.regularization,
    )?;
    Ok((rp, start))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pulses_respect_the_initial_layers() {
        let cfg = RunConfig::default();
        let g = pulse_g(&cfg.domain, &cfg.time, 1.0);
        assert!(g.row(0).iter().chain(g.row(1)).all(|v| *v == 0.0));
        assert!(g.max_abs() > 0.5);
        let h = pulse_h(&cfg.domain, &cfg.time, 1.0);
        assert!(h.row(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_targets_and_zero_controls_give_zero_objective() {
        let mut cfg = RunConfig::default();
        cfg.domain = ReferenceDomain::new(1.0, 0.25, 1.0, 9, 3, 9).unwrap();
        cfg.time = TimeGrid::new(1.0, 8).unwrap();
        let (rp, start) = problem(&cfg).unwrap();
        assert_eq!(rp.objective(&start).unwrap(), 0.0);
    }
}
