//! Acceptance suite on the standard configuration. Prints one PASS/FAIL line
//! per criterion and exits non-zero if any criterion fails.

use std::error::Error;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use aopt::commands::{gradient_check, GradcheckRow};
use aopt::config::RunConfig;
use aopt::directions::{mixed_direction, Component};
use aopt::evaluator::PoolEvaluator;
use aopt::formats::{read_csv, read_line_field, read_profile};
use aopt::scenario::{self, pulse_g, pulse_h};
use aopt_core::diagnostics::{energy_identity_pbar, energy_ratio, energy_series, taylor_test, TAYLOR_TAUS};
use aopt_core::discretization::Discretization;
use aopt_core::forward::{solve_forward, Model, StateTrajectory};
use aopt_core::geometry::{
    boundary_geometry, bump, bump_derivative, physical_nodes, BoundaryProfile, ReferenceDomain,
};
use aopt_core::linearized::{solve_linearized, LinearizedRhs};
use aopt_core::operators::{assemble_plate_bilaplacian, plate_fractional_dense, NeumannSpectrum};
use aopt_core::params::{InitialData, PhysicalParams, TimeGrid};
use aopt_core::residual::linearized_residual;
use aopt_core::spacetime::SpaceTime;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), Box<dyn Error>>;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn standard() -> RunConfig {
    RunConfig::default()
}

fn rel_max(a: &SpaceTime, b: &SpaceTime) -> f64 {
    let scale = a.max_abs().max(b.max_abs()).max(f64::MIN_POSITIVE);
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

fn state_fields(s: &StateTrajectory) -> [&SpaceTime; 6] {
    [&s.pbar.u, &s.pbar.u_t, &s.ptil.u, &s.ptil.u_t, &s.wtil.u, &s.wtil.u_t]
}

fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn mapping_identity() -> Outcome {
    let cfg = standard();
    let dom = cfg.domain;
    let mapped = Discretization::new(&dom, &BoundaryProfile::flat(&dom))?;
    let plain = Discretization::plain(&dom)?;
    let identical =
        mapped.mass == plain.mass && mapped.stiffness == plain.stiffness && mapped.neumann_mapped == plain.neumann_mapped;
    let a = Model::from_discretization(cfg.physics, mapped, cfg.time);
    let b = Model::from_discretization(cfg.physics, plain, cfg.time);
    let (g, h) = (pulse_g(&dom, &cfg.time, 0.5), pulse_h(&dom, &cfg.time, 0.5));
    let init = InitialData::zero(&dom);
    let (sa, sb) = (solve_forward(&a, &g, &h, &init)?, solve_forward(&b, &g, &h, &init)?);
    let diff = state_fields(&sa)
        .iter()
        .zip(state_fields(&sb))
        .map(|(x, y)| rel_max(x, y))
        .fold(0.0, f64::max);
    Ok((
        identical && diff <= 1e-12,
        format!("operator entries identical: {identical}, max relative solution difference {diff:.3e}"),
    ))
}

/// Composite Simpson rule on `[0, 1]`.
fn simpson(f: impl Fn(f64) -> f64) -> f64 {
    let n = 200_000;
    let h = 1.0 / n as f64;
    let mut s = f(0.0) + f(1.0);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
    }
    s * h / 3.0
}

struct Profile {
    name: &'static str,
    terms: &'static [(f64, f64, f64)],
}

impl Profile {
    fn value(&self, x: f64) -> f64 {
        1.0 + self.terms.iter().map(|(a, l, r)| a * bump(x, *l, *r)).sum::<f64>()
    }

    fn slope(&self, x: f64) -> f64 {
        self.terms.iter().map(|(a, l, r)| a * bump_derivative(x, *l, *r)).sum()
    }
}

const PROFILES: [Profile; 3] = [
    Profile {
        name: "raised",
        terms: &[(0.3, 0.1, 0.9)],
    },
    Profile {
        name: "lowered",
        terms: &[(-0.2, 0.2, 0.7)],
    },
    Profile {
        name: "two-bump",
        terms: &[(0.25, 0.15, 0.6), (-0.15, 0.5, 0.9)],
    },
];

/// Volume integral of `e^x z^2`, flux of `F = (e^x, x z)` through the
/// graph boundary, and its arc length; mapped quadrature minus exact value.
fn quadrature_errors(p: &Profile, dom: &ReferenceDomain) -> Result<[f64; 3], Box<dyn Error>> {
    let ell = BoundaryProfile::from_fn(dom, |x| p.value(x));
    let disc = Discretization::new(dom, &ell)?;
    let volume: f64 = physical_nodes(&disc.coeffs)
        .iter()
        .zip(&disc.mass)
        .map(|(q, m)| m * q[0].exp() * q[1] * q[1])
        .sum();
    let hf = dom.h_fix;
    let volume_exact = simpson(|x| x.exp() * (p.value(x).powi(3) + hf.powi(3)) / 3.0);

    let geo = boundary_geometry(&ell, dom)?;
    let mut flux = 0.0;
    for i in 0..dom.nx {
        let (x, z) = (dom.x(i), ell.ell[i]);
        let f = [x.exp(), x * z];
        flux += disc.neumann[i] * geo.sigma[i] * (f[0] * geo.nu[i][0] + f[1] * geo.nu[i][1]);
    }
    let flux_exact = simpson(|x| -p.slope(x) * x.exp() + x * p.value(x));

    let length: f64 = disc.neumann_mapped.iter().sum();
    let length_exact = simpson(|x| (1.0 + p.slope(x).powi(2)).sqrt());
    Ok([
        (volume - volume_exact).abs(),
        (flux - flux_exact).abs(),
        (length - length_exact).abs(),
    ])
}

fn geometry_quadrature() -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for p in &PROFILES {
        let mut dom = standard().domain;
        let mut errs = Vec::new();
        for _ in 0..3 {
            errs.push(quadrature_errors(p, &dom)?);
            dom = dom.refined();
        }
        let mut worst = f64::INFINITY;
        for q in 0..3 {
            let e: Vec<f64> = errs.iter().map(|r| r[q]).collect();
            worst = orders(&e).into_iter().fold(worst, f64::min);
        }
        pass &= worst >= 1.9;
        details.push(format!("{} {worst:.2}", p.name));
    }
    Ok((pass, format!("minimum observed order (volume, flux, length): {}", details.join(", "))))
}

fn energy_identity() -> Outcome {
    let mut params = PhysicalParams::default();
    params.k = 0.0;
    let mut defects = Vec::new();
    for (nx, nt) in [(17, 32), (33, 64), (65, 128)] {
        let dom = ReferenceDomain::new(1.0, 0.25, 1.0, nx, (nx - 1) / 4 + 1, nx)?;
        let time = TimeGrid::new(1.0, nt)?;
        let model = Model::new(params, &dom, &BoundaryProfile::with_bump(&dom, 0.1, 0.25, 0.75), time)?;
        let (g, h) = (pulse_g(&dom, &time, 1.0), pulse_h(&dom, &time, 0.0));
        let s = solve_forward(&model, &g, &h, &InitialData::zero(&dom))?;
        defects.push(energy_identity_pbar(&model, &s).relative_defect());
    }
    let o = orders(&defects);
    Ok((
        o.iter().all(|v| *v >= 1.8),
        format!("relative defects {} on 17/32, 33/64, 65/128, orders {}", fmt(&defects), fmt(&o)),
    ))
}

fn energy_ratio_stability() -> Outcome {
    let cfg = standard();
    let dom = cfg.domain;
    let mut ratios = Vec::new();
    for nt in [32, 64, 128] {
        let time = TimeGrid::new(cfg.time.t_final, nt)?;
        let model = Model::new(cfg.physics, &dom, &BoundaryProfile::flat(&dom), time)?;
        let (g, h) = (pulse_g(&dom, &time, 0.1), pulse_h(&dom, &time, 0.1));
        let s = solve_forward(&model, &g, &h, &InitialData::zero(&dom))?;
        ratios.push(energy_ratio(&energy_series(&model, &s, &g, &h, cfg.regularization.s_g)?));
    }
    let variation = ratios.windows(2).map(|w| (w[1] / w[0] - 1.0).abs()).fold(0.0, f64::max);
    let bounded = ratios.iter().all(|r| *r <= 10.0 * ratios[0]);
    Ok((
        ratios[0] > 0.0 && variation <= 0.2 && bounded,
        format!("ratios {} at Nt = 32, 64, 128, largest change per halving {:.1}%", fmt(&ratios), 100.0 * variation),
    ))
}

fn symmetric_eigenvalues(dense: Vec<f64>, n: usize) -> Vec<f64> {
    let m = DMatrix::from_row_slice(n, n, &dense);
    let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn plate_operator() -> Outcome {
    let dom = ReferenceDomain::new(1.0, 0.25, 1.0, 129, 3, 3)?;
    let a = assemble_plate_bilaplacian(&dom)?;
    let ev = symmetric_eigenvalues(a.to_dense(), dom.n_plate());
    let errs: Vec<f64> = (1..=3)
        .map(|k| {
            let exact = (k as f64 * std::f64::consts::PI / dom.lx).powi(4);
            (ev[k - 1] - exact).abs() / exact
        })
        .collect();
    Ok((
        errs.iter().all(|e| *e <= 0.01),
        format!("relative eigenvalue errors {} for k = 1, 2, 3 at 129 plate nodes", fmt(&errs)),
    ))
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

fn dense_apply(m: &[f64], v: &[f64]) -> Vec<f64> {
    m.chunks(v.len()).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn dense_power(sym: &DMatrix<f64>, s: f64) -> DMatrix<f64> {
    let eig = sym.clone().symmetric_eigen();
    let pw = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.powf(s)));
    &eig.eigenvectors * pw * eig.eigenvectors.transpose()
}

fn fractional_operators() -> Outcome {
    let n = 17;
    let exponents = [0.25, 0.5, 1.0, 1.5, 2.0, -0.75, -1.5, -2.0];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut round_trip, mut dense) = (0.0_f64, 0.0_f64);

    // Neumann powers (-Lap_N + id)^s on an interval of the control boundary
    let length = 1.0;
    let spec = NeumannSpectrum::new(n, length)?;
    let h = length / (n - 1) as f64;
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = 2.0 / (h * h) + 1.0;
        if i > 0 {
            a[(i, i - 1)] = -1.0 / (h * h);
        }
        if i + 1 < n {
            a[(i, i + 1)] = -1.0 / (h * h);
        }
    }
    a[(0, 1)] = -2.0 / (h * h);
    a[(n - 1, n - 2)] = -2.0 / (h * h);
    let w = spec.weights();
    let sq = DMatrix::from_diagonal(&DVector::from_iterator(n, w.iter().map(|x| x.sqrt())));
    let isq = DMatrix::from_diagonal(&DVector::from_iterator(n, w.iter().map(|x| 1.0 / x.sqrt())));
    let sym = &sq * &a * &isq;
    let sym = (&sym + sym.transpose()) * 0.5;
    for s in exponents {
        let f = random_vector(&mut rng, n);
        let back = spec.apply(&spec.apply(&f, s)?, -s)?;
        round_trip = round_trip.max(max_diff(&back, &f));
        let reference = &isq * dense_power(&sym, s) * &sq * DVector::from_column_slice(&f);
        let ours = spec.apply(&f, s)?;
        dense = dense.max(max_diff(&ours, reference.as_slice()));
    }

    // hinged plate powers (-Lap_pl)^s with 17 interior plate nodes
    let dom = ReferenceDomain::new(1.0, 0.25, 1.0, n + 2, 3, 3)?;
    let np = dom.n_plate();
    let lap = Discretization::new(&dom, &BoundaryProfile::flat(&dom))?.plate_laplacian.to_dense();
    let minus_lap = DMatrix::from_row_slice(np, np, &lap) * -1.0;
    for s in exponents {
        let f = random_vector(&mut rng, np);
        let fwd = plate_fractional_dense(&dom, s);
        let back = dense_apply(&plate_fractional_dense(&dom, -s), &dense_apply(&fwd, &f));
        round_trip = round_trip.max(max_diff(&back, &f));
        let reference = dense_power(&minus_lap, s) * DVector::from_column_slice(&f);
        dense = dense.max(max_diff(&dense_apply(&fwd, &f), reference.as_slice()));
    }
    let f = random_vector(&mut rng, n);
    let back = spec.apply(&spec.apply(&f, 3.0)?, -3.0)?;
    let plate = dense_apply(&plate_fractional_dense(&dom, -3.0), &dense_apply(&plate_fractional_dense(&dom, 3.0), &f));
    println!(
        "INFO 6: |s| = 3 round trip (condition-limited) {:.3e} Neumann, {:.3e} plate",
        max_diff(&back, &f),
        max_diff(&plate, &f[..np])
    );
    Ok((
        round_trip <= 1e-10 && dense <= 1e-10,
        format!("apply(s) apply(-s) defect {round_trip:.3e}, dense eigendecomposition mismatch {dense:.3e} on 17 nodes, |s| <= 2"),
    ))
}

fn worst_per_component(rows: &[GradcheckRow]) -> [f64; 3] {
    let mut worst = [0.0_f64; 3];
    for r in rows {
        let k = Component::ALL.iter().position(|c| *c == r.component).unwrap();
        worst[k] = worst[k].max(r.relative_error());
    }
    worst
}

fn run_gradcheck(cfg: &RunConfig) -> Result<[f64; 3], Box<dyn Error>> {
    let (problem, u) = scenario::problem(cfg)?;
    let c = &cfg.check;
    let rows = gradient_check(&problem, &u, c.directions, c.seed, &c.taus, &PoolEvaluator::new(1)?)?;
    Ok(worst_per_component(&rows))
}

fn gradient_check_criterion() -> Outcome {
    let cfg = RunConfig::load(&configs().join("gradcheck.ini"))?;
    let coarse = run_gradcheck(&cfg)?;
    let mut fine_cfg = cfg.clone();
    fine_cfg.domain = cfg.domain.refined();
    fine_cfg.time = TimeGrid::new(cfg.time.t_final, 2 * cfg.time.nt)?;
    let fine = run_gradcheck(&fine_cfg)?;

    let mut tracking = cfg.clone();
    tracking.physics.theta = 0.0;
    let untracked = run_gradcheck(&tracking)?;
    println!(
        "INFO 7: tracking-only (theta = 0) worst relative errors g, h, ell = {} on the standard grid",
        fmt(&untracked)
    );

    let within = coarse.iter().all(|e| *e <= cfg.check.tolerance);
    let decreasing = coarse.iter().zip(&fine).all(|(c, f)| f < c);
    Ok((
        within && decreasing,
        format!(
            "worst relative errors g, h, ell = {} on 33x41x64, {} on 65x81x128 ({} directions each)",
            fmt(&coarse),
            fmt(&fine),
            cfg.check.directions
        ),
    ))
}

fn taylor_criterion() -> Outcome {
    let cfg = RunConfig::load(&configs().join("gradcheck.ini"))?;
    let (problem, u) = scenario::problem(&cfg)?;
    let mut slopes = Vec::new();
    for seed in 0..2 {
        let d = mixed_direction(seed, &problem.dom, &problem.time);
        slopes.push(taylor_test(&problem, &u, &d, &TAYLOR_TAUS)?.slope);
    }

    let mut linear = cfg.clone();
    linear.physics.k = 0.0;
    let (problem, u) = scenario::problem(&linear)?;
    let mut d = mixed_direction(7, &problem.dom, &problem.time);
    d.ell.iter_mut().for_each(|v| *v = 0.0);
    let rep = taylor_test(&problem, &u, &d, &TAYLOR_TAUS)?;
    let worst = rep.remainders.iter().fold(0.0_f64, |m, r| m.max(*r)) / rep.scale;
    Ok((
        slopes.iter().all(|s| *s >= 1.9) && worst <= 1e-9,
        format!("mixed-direction slopes {}, linear case remainder / scale {worst:.3e}", fmt(&slopes)),
    ))
}

fn linearized_solvability() -> Outcome {
    let cfg = standard();
    let dom = cfg.domain;
    let model = Model::new(cfg.physics, &dom, &BoundaryProfile::flat(&dom), cfg.time)?;
    let (g, h) = (pulse_g(&dom, &cfg.time, 0.5), pulse_h(&dom, &cfg.time, 0.5));
    let base = solve_forward(&model, &g, &h, &InitialData::zero(&dom))?;
    let (zg, zh) = (g.scaled(0.0), h.scaled(0.0));
    let mut worst = 0.0_f64;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = LinearizedRhs::zeros(&model);
        let mut draw = |f: &SpaceTime| {
            let values = random_vector(&mut rng, f.n_time() * f.n_space());
            SpaceTime::from_vec(f.n_time(), f.n_space(), values).expect("matching shape")
        };
        let rhs = LinearizedRhs {
            f_pbar: draw(&z.f_pbar),
            f_ptil: draw(&z.f_ptil),
            f_w: draw(&z.f_w),
            f_n: draw(&z.f_n),
            f_pl: draw(&z.f_pl),
        };
        let d = solve_linearized(&model, &base, &rhs, &zg, &zh, None)?;
        let r = linearized_residual(&model, &g, &base, &d, &zg, &zh, None)?;
        for (a, b) in [
            (&r.pbar, &rhs.f_pbar),
            (&r.ptil, &rhs.f_ptil),
            (&r.plate, &rhs.f_w),
            (&r.neumann, &rhs.f_n),
            (&r.plate_flux, &rhs.f_pl),
        ] {
            worst = worst.max(rel_max(a, b));
        }
    }
    Ok((worst <= 1e-8, format!("10 random right-hand sides, worst relative residual {worst:.3e}")))
}

fn aopt(args: &[&str], config: &Path, out: &Path) -> Result<(), Box<dyn Error>> {
    let o = Command::new(env!("CARGO_BIN_EXE_aopt"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove("AOPT_OUT")
        .output()?;
    if !o.status.success() {
        return Err(format!("aopt {args:?} failed: {}", String::from_utf8_lossy(&o.stderr)).into());
    }
    Ok(())
}

/// Euclidean distance of the final design in `out` from the priors of `cfg`,
/// and the norm of the priors.
fn prior_deviation(cfg: &RunConfig, out: &Path) -> Result<(f64, f64), Box<dyn Error>> {
    let (dom, time) = (&cfg.domain, &cfg.time);
    let prior = scenario::controls(&cfg.prior, dom, time)?;
    let fin = out.join("final");
    let g = read_line_field(fin.join("g.bin"), time.len(), dom.nx)?;
    let h = read_line_field(fin.join("h.bin"), time.len(), dom.n_plate())?;
    let ell = read_profile(fin.join("ell.csv"), dom)?;
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let dev = sq(g.as_slice(), prior.g.as_slice()) + sq(h.as_slice(), prior.h.as_slice()) + sq(&ell.ell, &prior.ell.ell);
    let zero = |n: usize| vec![0.0; n];
    let norm = sq(prior.g.as_slice(), &zero(prior.g.as_slice().len()))
        + sq(prior.h.as_slice(), &zero(prior.h.as_slice().len()))
        + sq(&prior.ell.ell, &zero(dom.nx));
    Ok((dev.sqrt(), norm.sqrt()))
}

fn optimization(work: &Path) -> Outcome {
    let manufactured = configs().join("manufactured.ini");
    let out = work.join("manufactured");
    aopt(&["optimize"], &manufactured, &out)?;
    let (_, rows) = read_csv(out.join("history.csv"))?;
    let totals: Vec<f64> = rows.iter().map(|r| r[7]).collect();
    let iterations = rows.len() - 1;
    let reduction = 1.0 - totals[iterations] / totals[0];
    let monotone = totals.windows(2).all(|w| w[1] <= w[0]);

    let heavy = configs().join("heavy.ini");
    let heavy_out = work.join("heavy");
    aopt(&["optimize"], &heavy, &heavy_out)?;
    let heavy_cfg = RunConfig::load(&heavy)?;
    let (dev, prior_norm) = prior_deviation(&heavy_cfg, &heavy_out)?;
    let (free_dev, _) = prior_deviation(&RunConfig::load(&manufactured)?, &out)?;
    let relative = dev / prior_norm;
    let against_free = dev / free_dev;
    Ok((
        reduction >= 0.9 && iterations <= 100 && monotone && relative <= 1e-3 && against_free <= 1e-3,
        format!(
            "J reduced by {:.1}% in {iterations} iterations (monotone: {monotone}); theta = 1e6 deviation from priors \
             {relative:.3e} of |prior|, {against_free:.3e} of the theta = 1e-6 deviation",
            100.0 * reduction
        ),
    ))
}

fn determinism(work: &Path) -> Outcome {
    let manufactured = configs().join("manufactured.ini");
    let reference = fs::read(work.join("manufactured").join("history.csv"))?;
    let mut same = Vec::new();
    for (name, jobs) in [("repeat", "1"), ("jobs4", "4")] {
        let out = work.join(name);
        aopt(&["optimize", "--jobs", jobs], &manufactured, &out)?;
        same.push(fs::read(out.join("history.csv"))? == reference);
    }
    Ok((
        same.iter().all(|s| *s),
        format!("history.csv identical on repeat: {}, with --jobs 4: {}", same[0], same[1]),
    ))
}

fn main() -> ExitCode {
    let work = tempfile::tempdir().expect("temporary directory");
    let work = work.path();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("mapping identity", Box::new(mapping_identity)),
        ("geometry quadrature", Box::new(geometry_quadrature)),
        ("linear energy identity", Box::new(energy_identity)),
        ("energy-estimate ratio", Box::new(energy_ratio_stability)),
        ("plate operator", Box::new(plate_operator)),
        ("fractional operators", Box::new(fractional_operators)),
        ("gradient check", Box::new(gradient_check_criterion)),
        ("Taylor test", Box::new(taylor_criterion)),
        ("linearized solvability", Box::new(linearized_solvability)),
        ("optimization", Box::new(|| optimization(work))),
        ("determinism", Box::new(|| determinism(work))),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!pass);
        println!("{} {:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" }, k + 1);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
