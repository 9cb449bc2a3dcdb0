//! The six pipelines behind the command-line interface.
//!
//! Every command echoes the effective configuration to `config.ini` in the
//! output directory, writes its artifacts there and returns a one-line
//! summary.

use std::fs;
use std::path::{Path, PathBuf};

use aopt_core::adjoint::AdjointTrajectory;
use aopt_core::diagnostics::{energy_ratio, energy_series, fd_gradient_oracle, taylor_test, TAYLOR_TAUS};
use aopt_core::error::Error as CoreError;
use aopt_core::forward::StateTrajectory;
use aopt_core::geometry::ReferenceDomain;
use aopt_core::objective::{ControlDirection, ControlVector, Evaluation, ObjectiveBreakdown, ReducedProblem};
use aopt_core::optimizer::{optimize, IterateRecord, Termination};
use aopt_core::params::TimeGrid;
use aopt_core::spacetime::SpaceTime;

use crate::config::RunConfig;
use crate::directions::{mixed_direction, Component, RandomDirection};
use crate::error::{CliError, Result};
use crate::evaluator::PoolEvaluator;
use crate::formats::{
    num, read_csv, read_line_field, read_profile, write_line_field, write_long, write_profile, write_volume_field, CsvWriter,
    DumpIndex,
};
use crate::scenario;

/// Environment variable naming the output directory when `--out` is absent.
pub const OUT_ENV: &str = "AOPT_OUT";

/// Output directory used when neither `--out`, `AOPT_OUT` nor the
/// configuration name one.
pub const DEFAULT_OUT: &str = "aopt-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Forward,
    Adjoint,
    Gradcheck,
    Taylor,
    Optimize,
    Energy,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Forward => "forward",
            Command::Adjoint => "adjoint",
            Command::Gradcheck => "gradcheck",
            Command::Taylor => "taylor",
            Command::Optimize => "optimize",
            Command::Energy => "energy",
        }
    }
}

/// Options that do not belong to the configuration file.
#[derive(Debug, Clone)]
pub struct Options {
    pub jobs: usize,
    pub out: PathBuf,
    /// Continue `optimize` from the checkpoint in the output directory.
    pub resume: bool,
}

/// `--out`, then `AOPT_OUT`, then `[output] dir`, then [`DEFAULT_OUT`].
pub fn output_dir(cli: Option<&Path>, env: Option<&str>, cfg: &RunConfig) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    if let Some(e) = env.filter(|e| !e.is_empty()) {
        return PathBuf::from(e);
    }
    cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Runs one command and returns its summary line.
pub fn run(command: Command, cfg: &RunConfig, opts: &Options) -> Result<String> {
    cfg.validate()?;
    fs::create_dir_all(&opts.out).map_err(|e| CliError::io(&opts.out, e))?;
    let echo = opts.out.join("config.ini");
    fs::write(&echo, cfg.to_ini()).map_err(|e| CliError::io(&echo, e))?;
    let evaluator = PoolEvaluator::new(opts.jobs)?;
    let (problem, start) = scenario::problem(cfg)?;
    match command {
        Command::Forward => forward(cfg, &problem, &start, &opts.out),
        Command::Adjoint => adjoint(cfg, &problem, &start, &opts.out),
        Command::Gradcheck => gradcheck(cfg, &problem, &start, &evaluator, &opts.out),
        Command::Taylor => taylor(cfg, &problem, &start, &opts.out),
        Command::Optimize => run_optimizer(cfg, &problem, &start, &evaluator, opts),
        Command::Energy => energy(cfg, &problem, &start, &opts.out),
    }
}

const BREAKDOWN_HEADER: [&str; 7] = ["tracking_p", "tracking_w", "reg_g_time", "reg_g_space", "reg_h", "reg_ell", "total"];

fn breakdown_values(b: &ObjectiveBreakdown) -> [f64; 7] {
    [b.tracking_p, b.tracking_w, b.reg_g_time, b.reg_g_space, b.reg_h, b.reg_ell, b.total]
}

fn write_runlog(path: &Path, rows: &[(usize, ObjectiveBreakdown)]) -> Result<()> {
    let mut header = vec!["iteration"];
    header.extend(BREAKDOWN_HEADER);
    let mut w = CsvWriter::create(path, &header)?;
    for (it, b) in rows {
        w.indexed(&[*it], &breakdown_values(b))?;
    }
    w.finish()
}

fn write_controls(dir: &Path, dom: &ReferenceDomain, u: &ControlVector) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_line_field(dir.join("g.bin"), &u.g)?;
    write_line_field(dir.join("h.bin"), &u.h)?;
    write_profile(dir.join("ell.csv"), dom, &u.ell)
}

fn read_controls(dir: &Path, dom: &ReferenceDomain, time: &TimeGrid) -> Result<ControlVector> {
    Ok(ControlVector {
        g: read_line_field(dir.join("g.bin"), time.len(), dom.nx)?,
        h: read_line_field(dir.join("h.bin"), time.len(), dom.n_plate())?,
        ell: read_profile(dir.join("ell.csv"), dom)?,
    })
}

fn nearest(values: &[f64], v: f64) -> usize {
    let mut best = 0;
    for (k, x) in values.iter().enumerate() {
        if (x - v).abs() < (values[best] - v).abs() {
            best = k;
        }
    }
    best
}

fn write_probes(path: &Path, cfg: &RunConfig, state: &StateTrajectory) -> Result<()> {
    let dom = &cfg.domain;
    let xs: Vec<f64> = (0..dom.nx).map(|i| dom.x(i)).collect();
    let zs: Vec<f64> = (0..dom.nz()).map(|j| dom.zref(j)).collect();
    let nodes: Vec<usize> = cfg
        .output
        .probes
        .iter()
        .map(|[x, z]| dom.node(nearest(&xs, *x), nearest(&zs, *z)))
        .collect();
    let names: Vec<String> = cfg.output.probes.iter().map(|[x, z]| format!("p@{x}:{z}")).collect();
    let mut header = vec!["t"];
    header.extend(names.iter().map(String::as_str));
    let mut w = CsvWriter::create(path, &header)?;
    for n in 0..state.time.len() {
        let p = state.pressure(n);
        let mut row = vec![state.time.t(n)];
        row.extend(nodes.iter().map(|k| p[*k]));
        w.row(&[], &row)?;
    }
    w.finish()
}

fn total_pressure(state: &StateTrajectory) -> SpaceTime {
    let mut p = state.pbar.u.clone();
    p.axpy(1.0, &state.ptil.u);
    p
}

fn write_state(cfg: &RunConfig, u: &ControlVector, ev: &Evaluation, out: &Path) -> Result<()> {
    let dom = &cfg.domain;
    if cfg.output.dump_fields {
        let s = &ev.state;
        let mut index = DumpIndex::new();
        index.add("p_bar", "pbar.bin", write_volume_field(out.join("pbar.bin"), dom, &s.pbar.u)?);
        index.add("p_til", "ptil.bin", write_volume_field(out.join("ptil.bin"), dom, &s.ptil.u)?);
        index.add("p", "p.bin", write_volume_field(out.join("p.bin"), dom, &total_pressure(s))?);
        index.add("w_til", "wtil.bin", write_line_field(out.join("wtil.bin"), &s.wtil.u)?);
        index.add("g", "g.bin", write_line_field(out.join("g.bin"), &u.g)?);
        index.add("h", "h.bin", write_line_field(out.join("h.bin"), &u.h)?);
        index.write(out.join("index.csv"), &cfg.time)?;
    }
    write_profile(out.join("ell.csv"), dom, &u.ell)?;
    if !cfg.output.probes.is_empty() {
        write_probes(&out.join("probes.csv"), cfg, &ev.state)?;
    }
    write_runlog(&out.join("runlog.csv"), &[(0, ev.breakdown)])
}

fn forward(cfg: &RunConfig, problem: &ReducedProblem, u: &ControlVector, out: &Path) -> Result<String> {
    let ev = problem.evaluate(u)?;
    write_state(cfg, u, &ev, out)?;
    let b = ev.breakdown;
    Ok(format!(
        "forward: J = {} (tracking_p = {}, tracking_w = {}), max|p| = {}, margin = {}",
        num(b.total),
        num(b.tracking_p),
        num(b.tracking_w),
        num(total_pressure(&ev.state).max_abs()),
        num(ev.state.margin)
    ))
}

fn block_norms(d: &ControlDirection) -> [f64; 3] {
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    [sq(d.g.as_slice()), sq(d.h.as_slice()), sq(&d.ell)]
}

fn adjoint(cfg: &RunConfig, problem: &ReducedProblem, u: &ControlVector, out: &Path) -> Result<String> {
    let (ev, adj, grad) = problem.gradient(u)?;
    write_state(cfg, u, &ev, out)?;
    write_adjoint(cfg, &adj, &grad, out)?;
    let [g, h, l] = block_norms(&grad);
    Ok(format!(
        "adjoint: J = {}, max|q| = {}, |grad_g| = {}, |grad_h| = {}, |grad_ell| = {}",
        num(ev.breakdown.total),
        num(adj.max_abs()),
        num(g),
        num(h),
        num(l)
    ))
}

fn write_adjoint(cfg: &RunConfig, adj: &AdjointTrajectory, grad: &ControlDirection, out: &Path) -> Result<()> {
    let dom = &cfg.domain;
    if cfg.output.dump_fields {
        let mut index = DumpIndex::new();
        index.add("q_bar", "qbar.bin", write_volume_field(out.join("qbar.bin"), dom, &adj.qbar.u)?);
        index.add("q_til", "qtil.bin", write_volume_field(out.join("qtil.bin"), dom, &adj.qtil.u)?);
        index.add("v_til", "vtil.bin", write_line_field(out.join("vtil.bin"), &adj.vtil.u)?);
        index.add("grad_g", "grad_g.bin", write_line_field(out.join("grad_g.bin"), &grad.g)?);
        index.add("grad_h", "grad_h.bin", write_line_field(out.join("grad_h.bin"), &grad.h)?);
        index.write(out.join("adjoint_index.csv"), &cfg.time)?;
    }
    write_long(out.join("mu_n.csv"), &cfg.time, &adj.mu_n)?;
    write_long(out.join("mu_pl.csv"), &cfg.time, &adj.mu_pl)?;
    let mut w = CsvWriter::create(out.join("grad_ell.csv"), &["x", "value"])?;
    for (i, v) in grad.ell.iter().enumerate() {
        w.row(&[], &[dom.x(i), *v])?;
    }
    w.finish()
}

/// One adjoint/finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckRow {
    pub component: Component,
    pub direction: usize,
    pub adjoint: f64,
    pub fd: f64,
    pub tau: f64,
}

impl GradcheckRow {
    pub fn relative_error(&self) -> f64 {
        (self.adjoint - self.fd).abs() / self.fd.abs().max(f64::MIN_POSITIVE)
    }
}

/// Adjoint directional derivatives against central differences for `count`
/// random directions per block.
pub fn gradient_check(
    problem: &ReducedProblem,
    u: &ControlVector,
    count: usize,
    seed: u64,
    taus: &[f64],
    evaluator: &PoolEvaluator,
) -> Result<Vec<GradcheckRow>> {
    let (_, grad) = {
        let ev = problem.evaluate(u)?;
        problem.gradient_at(u, &ev)?
    };
    let mut rows = Vec::new();
    for c in Component::ALL {
        let dirs: Vec<ControlDirection> = RandomDirection::batch(c, count, seed)
            .iter()
            .map(|d| d.sample(&problem.dom, &problem.time))
            .collect();
        let reports = fd_gradient_oracle(problem, u, &dirs, taus, evaluator)?;
        for (k, (d, r)) in dirs.iter().zip(&reports).enumerate() {
            rows.push(GradcheckRow {
                component: c,
                direction: k,
                adjoint: grad.dot(d),
                fd: r.plateau_value,
                tau: r.plateau_tau,
            });
        }
    }
    Ok(rows)
}

fn gradcheck(cfg: &RunConfig, problem: &ReducedProblem, u: &ControlVector, evaluator: &PoolEvaluator, out: &Path) -> Result<String> {
    let c = &cfg.check;
    let rows = gradient_check(problem, u, c.directions, c.seed, &c.taus, evaluator)?;
    let mut w = CsvWriter::create(out.join("gradcheck.csv"), &["component", "direction", "adjoint", "fd", "relative_error", "tau"])?;
    for r in &rows {
        w.row(&[r.component.name(), &r.direction.to_string()], &[r.adjoint, r.fd, r.relative_error(), r.tau])?;
    }
    w.finish()?;
    let worst = rows.iter().map(GradcheckRow::relative_error).fold(0.0, f64::max);
    let summary = format!(
        "gradcheck: {} directions, max relative error = {} (tolerance {})",
        rows.len(),
        num(worst),
        num(c.tolerance)
    );
    if worst <= c.tolerance {
        Ok(summary)
    } else {
        Err(CliError::Check(summary))
    }
}

fn taylor(cfg: &RunConfig, problem: &ReducedProblem, u: &ControlVector, out: &Path) -> Result<String> {
    let d = mixed_direction(cfg.check.seed, &problem.dom, &problem.time);
    let report = taylor_test(problem, u, &d, &TAYLOR_TAUS)?;
    let mut w = CsvWriter::create(out.join("taylor.csv"), &["tau", "remainder", "slope"])?;
    for (t, r) in report.taus.iter().zip(&report.remainders) {
        w.row(&[], &[*t, *r, report.slope])?;
    }
    w.finish()?;
    let summary = format!(
        "taylor: slope = {} (minimum {}), scale = {}",
        num(report.slope),
        num(cfg.check.taylor_min_slope),
        num(report.scale)
    );
    if report.slope >= cfg.check.taylor_min_slope {
        Ok(summary)
    } else {
        Err(CliError::Check(summary))
    }
}

fn energy(cfg: &RunConfig, problem: &ReducedProblem, u: &ControlVector, out: &Path) -> Result<String> {
    let ev = problem.evaluate(u)?;
    let records = energy_series(&ev.model, &ev.state, &u.g, &u.h, cfg.regularization.s_g)?;
    let mut header = vec!["t"];
    let parts = ["acceleration", "velocity_h1", "laplacian", "viscous", "absorbing", "absorbing_velocity"];
    let names: Vec<String> = ["pbar", "ptil"]
        .iter()
        .flat_map(|f| parts.iter().map(move |p| format!("{f}_{p}")))
        .collect();
    header.extend(names.iter().map(String::as_str));
    header.extend(["plate_velocity", "plate_bending", "total", "data_norm"]);
    let mut w = CsvWriter::create(out.join("energy.csv"), &header)?;
    for r in &records {
        let mut row = vec![r.t];
        row.extend(r.terms());
        row.push(r.total());
        row.push(r.data_norm);
        w.row(&[], &row)?;
    }
    w.finish()?;
    let max = records.iter().map(|r| r.total()).fold(0.0, f64::max);
    Ok(format!(
        "energy: max E = {}, max E / (E(0) + |data|^2) = {}",
        num(max),
        num(energy_ratio(&records))
    ))
}

const HISTORY_HEADER: [&str; 17] = [
    "iteration",
    "tracking_p",
    "tracking_w",
    "reg_g_time",
    "reg_g_space",
    "reg_h",
    "reg_ell",
    "total",
    "grad_norm",
    "grad_norm_g",
    "grad_norm_h",
    "grad_norm_ell",
    "step",
    "rejected",
    "feasible",
    "margin",
    "theta",
];

fn history_row(r: &IterateRecord, offset: usize) -> String {
    let mut cells = vec![(r.iteration + offset).to_string()];
    cells.extend(breakdown_values(&r.breakdown).iter().map(|v| num(*v)));
    cells.extend([r.grad_norm, r.grad_norm_g, r.grad_norm_h, r.grad_norm_ell, r.step].iter().map(|v| num(*v)));
    cells.push(r.rejected.to_string());
    cells.push(u8::from(r.feasible).to_string());
    cells.push(num(r.margin));
    cells.push(num(r.breakdown.theta));
    cells.join(",")
}

/// Last accepted iteration stored in a checkpoint directory.
fn checkpoint_iteration(dir: &Path) -> Result<usize> {
    let (_, rows) = read_csv(dir.join("iteration.csv"))?;
    rows.first()
        .map(|r| r[0] as usize)
        .ok_or_else(|| CliError::Config(format!("{}: empty checkpoint", dir.display())))
}

fn run_optimizer(
    cfg: &RunConfig,
    problem: &ReducedProblem,
    start: &ControlVector,
    evaluator: &PoolEvaluator,
    opts: &Options,
) -> Result<String> {
    let out = &opts.out;
    let dom = &cfg.domain;
    let checkpoint = out.join("checkpoint");
    let history_path = out.join("history.csv");
    let (start, offset, mut lines) = if opts.resume {
        if !checkpoint.join("iteration.csv").is_file() {
            return Err(CliError::Config(format!("no checkpoint to resume from in {}", checkpoint.display())));
        }
        let u = read_controls(&checkpoint, dom, &cfg.time)?;
        let it = checkpoint_iteration(&checkpoint)?;
        let text = fs::read_to_string(&history_path).map_err(|e| CliError::io(&history_path, e))?;
        // keep the history up to (excluding) the checkpointed iterate, which
        // is re-evaluated as iteration 0 of the resumed run
        let kept: Vec<String> = text.lines().skip(1).take(it).map(str::to_string).collect();
        (u, it, kept)
    } else {
        (start.clone(), 0, Vec::new())
    };
    let mut write_error: Option<CliError> = None;
    let mut on_accept = |r: &IterateRecord, u: &ControlVector| {
        if write_error.is_some() {
            return;
        }
        let it = r.iteration + offset;
        let result = write_controls(&checkpoint, dom, u).and_then(|_| {
            let mut w = CsvWriter::create(checkpoint.join("iteration.csv"), &["iteration", "total"])?;
            w.indexed(&[it], &[r.breakdown.total])?;
            w.finish()
        });
        if let Err(e) = result {
            write_error = Some(e);
        }
    };
    let (u, history) = optimize(problem, &cfg.optimizer, &start, evaluator, &mut on_accept)?;
    if let Some(e) = write_error {
        return Err(e);
    }
    lines.extend(history.records.iter().map(|r| history_row(r, offset)));
    let mut text = HISTORY_HEADER.join(",");
    text.push('\n');
    for l in &lines {
        text.push_str(l);
        text.push('\n');
    }
    fs::write(&history_path, text).map_err(|e| CliError::io(&history_path, e))?;
    let runlog: Vec<(usize, ObjectiveBreakdown)> = history.records.iter().map(|r| (r.iteration + offset, r.breakdown)).collect();
    write_runlog(&out.join("runlog.csv"), &runlog)?;
    write_controls(&out.join("final"), dom, &u)?;

    let (first, last) = (history.initial(), history.last());
    let summary = format!(
        "optimize: J = {} -> {} after {} iterations ({:?}), |grad| = {}",
        num(first.breakdown.total),
        num(last.breakdown.total),
        last.iteration + offset,
        history.termination,
        num(last.grad_norm)
    );
    match history.termination {
        Termination::LineSearchStalled => Err(CliError::Core(CoreError::LineSearchStalled {
            iteration: last.iteration + offset + 1,
        })),
        _ => Ok(summary),
    }
}
