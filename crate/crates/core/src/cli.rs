//! Command implementations behind the `mcn` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{self, Overrides, Resolved};
use crate::error::{Error, Result};
use crate::network::{alpha_links, alpha_nodes, rates, ComputationalModel, RateReport};
use crate::optimize::{brute_force_codesign, codesign, evaluate, CodesignProblem, CodesignSolution, Grid, NetworkWeights};
use crate::report::{self, network_report, RunReport, SolutionFile};
use crate::scheduler::{cartesian_candidates, plateau_start, rate_sweep, schedule_search, Candidate, DEFAULT_BUDGET};
use crate::synthesis::{step_response, StepResponse};

/// Grid resolution used by `--oracle`.
pub const ORACLE_POINTS: usize = 400;

/// Relative change below which consecutive sweep points count as flat.
pub const PLATEAU_REL_TOL: f64 = 1e-6;
pub const PLATEAU_RUN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Codesign,
    ScheduleSearch,
    Simulate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Codesign => "codesign",
            Command::ScheduleSearch => "schedule-search",
            Command::Simulate => "simulate",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: PathBuf,
    pub out: PathBuf,
    pub model: Option<u8>,
    pub pi_max: Option<usize>,
    pub rate_sweep: Option<String>,
    /// Reserved; no numeric effect.
    pub seed: Option<u64>,
    pub oracle: bool,
    pub solution: Option<PathBuf>,
    pub horizon: Option<usize>,
}

/// `lo:hi:step` in Hz, inclusive of `hi` up to round-off.
pub fn parse_sweep(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::config("--rate-sweep", format!("expected lo:hi:step with 0 < lo <= hi, step > 0; got '{spec}'"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad())?;
    let [lo, hi, step] = parts[..] else { return Err(bad()) };
    if !(lo > 0.0 && hi >= lo && step > 0.0) || !hi.is_finite() {
        return Err(bad());
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    if n > 100_000 {
        return Err(bad());
    }
    Ok((0..=n).map(|i| lo + step * i as f64).collect())
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    fs::write(&p, contents).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
    Ok(p)
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, v: &T) -> Result<PathBuf> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
    write(dir, name, &(text + "\n"))
}

fn load(opts: &Options) -> Result<(Resolved, serde_json::Value)> {
    let (cfg, raw) = config::load(&opts.config)?;
    let resolved = config::resolve(
        cfg,
        &raw,
        Overrides {
            model: opts.model,
            max_period: opts.pi_max,
        },
    )?;
    Ok((resolved, raw))
}

fn require_fixed_schedules(r: &Resolved, cmd: Command) -> Result<()> {
    if !r.schedules_r.fixed {
        return Err(Error::config(
            "/controllability/scheduling",
            format!("{} needs an explicit slot map", cmd.name()),
        ));
    }
    if r.schedules_o.as_ref().is_some_and(|s| !s.fixed) {
        return Err(Error::config(
            "/observability/scheduling",
            format!("{} needs an explicit slot map", cmd.name()),
        ));
    }
    Ok(())
}

pub fn rate_report_for(p: &CodesignProblem, observability: bool) -> Result<Option<RateReport>> {
    let (net, q) = if observability {
        (p.observability.as_ref().expect("observability"), &p.quant_y)
    } else {
        (&p.controllability, &p.quant_u)
    };
    let NetworkWeights::Fixed(w) = &net.weights else { return Ok(None) };
    let table = match p.model {
        ComputationalModel::SumThenWeight => alpha_links(&net.graph, &net.schedule, w)?,
        ComputationalModel::WeightThenBroadcast => alpha_nodes(&net.graph, &net.schedule, w)?,
    };
    // zero prefix weights make rates undefined; leave them out of the report
    Ok(rates(&table, q, p.slot_duration(), p.model).ok())
}

fn tf_text(num: &[f64], den: &[f64]) -> String {
    let poly = |c: &[f64]| -> String {
        let terms: Vec<String> = c
            .iter()
            .enumerate()
            .rev()
            .filter(|(_, &v)| v != 0.0)
            .map(|(k, v)| match k {
                0 => format!("{v}"),
                1 => format!("{v}z"),
                _ => format!("{v}z^{k}"),
            })
            .collect();
        if terms.is_empty() { "0".into() } else { terms.join(" + ") }
    };
    format!("({}) / ({})", poly(num), poly(den))
}

pub fn analyze(opts: &Options) -> Result<String> {
    let (r, raw) = load(opts)?;
    require_fixed_schedules(&r, Command::Analyze)?;
    let p = &r.problem;
    let mut rep = RunReport::new("analyze", &r.hash, raw);
    let mut lines = Vec::new();
    for (obs, label) in [(false, "G_R"), (true, "G_O")] {
        let net = if obs {
            match &p.observability {
                Some(o) => o,
                None => continue,
            }
        } else {
            &p.controllability
        };
        let NetworkWeights::Fixed(w) = &net.weights else {
            let at = if obs { "/observability/weights" } else { "/controllability/weights" };
            return Err(Error::config(at, "analyze needs fixed weights"));
        };
        let nr = network_report(&net.graph, &net.schedule, w, rate_report_for(p, obs)?)?;
        lines.push(format!(
            "{label}(z) = {}  total delay {} ms",
            tf_text(&nr.transfer_function.num, &nr.transfer_function.den),
            nr.total_delay_s * 1e3
        ));
        if obs {
            rep.observability = Some(nr);
        } else {
            rep.controllability = Some(nr);
        }
    }
    fs::create_dir_all(&opts.out).map_err(|e| Error::Io(e.to_string()))?;
    write_json(&opts.out, "report.json", &rep)?;
    Ok(lines.join("\n"))
}

fn default_horizon(r: &Resolved, opts: &Options, l: usize) -> usize {
    opts.horizon.or(r.horizon).unwrap_or(l + 10)
}

fn oracle_grid(p: &CodesignProblem, sol: &CodesignSolution) -> Grid {
    let scale = if p.s == 0 {
        let d0 = sol.controller.d.last().copied().unwrap_or(1.0);
        sol.gamma_r.values().fold(0.0f64, |m, g| m.max((g * d0).abs()))
    } else {
        sol.gamma_r.values().fold(0.0f64, |m, g| m.max(g.abs()))
    };
    let r = 2.0 * scale.max(1.0);
    Grid::new(-r, r, ORACLE_POINTS)
}

fn emit_traces(dir: &Path, resp: &StepResponse, amplitude: f64) -> Result<()> {
    write(dir, "trace.csv", &report::trace_csv(resp, amplitude))?;
    let e: Vec<f64> = resp.y.iter().map(|y| amplitude - y).collect();
    write(
        dir,
        "plot.svg",
        &report::svg_plot("step response", &[("y", &resp.y, "#1f77b4"), ("e", &e, "#d62728")]),
    )?;
    Ok(())
}

pub fn solution_file(r: &Resolved, p: &CodesignProblem, sol: &CodesignSolution) -> SolutionFile {
    SolutionFile {
        config_hash: r.hash.clone(),
        model: p.model.index(),
        schedule_r: p.controllability.schedule.clone(),
        schedule_o: p.observability.as_ref().map(|o| o.schedule.clone()),
        controller: sol.controller.clone(),
        weights_r: sol.weights_r.clone(),
        weights_o: sol.weights_o.clone(),
        l2: sol.metrics.l2,
    }
}

fn summary(sol: &CodesignSolution) -> String {
    let m = &sol.metrics;
    let rate = sol
        .rates_o
        .as_ref()
        .map_or(sol.rates_r.max_rate(), |o| o.max_rate().max(sol.rates_r.max_rate()));
    format!(
        "L2 = {:.6}  O_y = {:.6}  O_u = {:.6}  l = {}  nu = {}  max rate = {} Hz",
        m.l2, m.overshoot_y, m.overshoot_u, m.l, m.nu, rate
    )
}

pub fn run_codesign(opts: &Options) -> Result<String> {
    let (r, raw) = load(opts)?;
    require_fixed_schedules(&r, Command::Codesign)?;
    let p = &r.problem;
    let sol = codesign(p)?;
    let mut rep = RunReport::new("codesign", &r.hash, raw);
    let mut lines = vec![summary(&sol)];
    if opts.oracle {
        match brute_force_codesign(p, oracle_grid(p, &sol)) {
            Ok(o) => {
                if let Some(b) = &o.best_problem1 {
                    lines.push(format!("oracle L2 = {:.6} (grid cell variation {:.3e})", b.value.sqrt(), o.cell_variation));
                }
                rep.oracle = Some(o);
            }
            Err(e) => lines.push(format!("oracle unavailable: {e}")),
        }
    }
    let horizon = default_horizon(&r, opts, sol.metrics.l);
    let ev = evaluate(p, &sol.controller, &sol.weights_r, sol.weights_o.as_ref())?;
    let resp = step_response(&ev.closed_loop, p.amplitude, horizon)
        .map_err(|e| Error::config("--horizon", e.to_string()))?;
    if let Some(o) = &p.observability {
        if let Some(w) = &sol.weights_o {
            rep.observability = Some(network_report(&o.graph, &o.schedule, w, sol.rates_o.clone())?);
        }
    }
    rep.controllability = Some(network_report(
        &p.controllability.graph,
        &p.controllability.schedule,
        &sol.weights_r,
        Some(sol.rates_r.clone()),
    )?);
    let violations = sol.violations.clone();
    rep.solution = Some(sol.clone());
    fs::create_dir_all(&opts.out).map_err(|e| Error::Io(e.to_string()))?;
    write_json(&opts.out, "report.json", &rep)?;
    write_json(&opts.out, "solution.json", &solution_file(&r, p, &sol))?;
    emit_traces(&opts.out, &resp, p.amplitude)?;
    if !violations.is_empty() {
        return Err(Error::infeasible("verification", violations.join("; ")));
    }
    Ok(lines.join("\n"))
}

pub fn candidates(r: &Resolved) -> Result<Vec<Candidate>> {
    let mut c = cartesian_candidates(
        &r.schedules_r.schedules,
        r.schedules_o.as_ref().map(|s| s.schedules.as_slice()),
        DEFAULT_BUDGET,
    )?;
    // keep configured names where they exist
    let no = r.schedules_o.as_ref().map_or(1, |s| s.schedules.len());
    for (k, cand) in c.iter_mut().enumerate() {
        let (i, j) = (k / no, k % no);
        cand.name = match &r.schedules_o {
            Some(o) if o.schedules.len() > 1 => format!("{}+{}", r.schedules_r.names[i], o.names[j]),
            _ => r.schedules_r.names[i].clone(),
        };
    }
    Ok(c)
}

pub fn run_schedule_search(opts: &Options) -> Result<String> {
    let (r, raw) = load(opts)?;
    let p = &r.problem;
    let bounds = opts.rate_sweep.as_deref().map(parse_sweep).transpose()?;
    let cands = candidates(&r)?;
    let oracle = opts.oracle.then(|| Grid::new(-10.0, 10.0, ORACLE_POINTS));
    let res = schedule_search(p, &cands, oracle)?;
    let mut rep = RunReport::new("schedule-search", &r.hash, raw);
    let mut lines: Vec<String> = res
        .ranking
        .iter()
        .enumerate()
        .map(|(i, s)| {
            format!(
                "{:>3}. {}  L2 = {}{}",
                i + 1,
                s.name,
                if s.l2.is_finite() { format!("{:.6}", s.l2) } else { "inf".into() },
                if s.optimal { "  *" } else { "" }
            )
        })
        .collect();
    fs::create_dir_all(&opts.out).map_err(|e| Error::Io(e.to_string()))?;
    write(&opts.out, "ranking.csv", &report::ranking_csv(&res))?;
    if let Some(best) = res.best() {
        if let Some(sol) = &best.solution {
            let c = cands.iter().find(|c| c.name == best.name).expect("candidate");
            let mut bp = p.clone();
            bp.controllability.schedule = c.schedule_r.clone();
            if let (Some(o), Some(s)) = (bp.observability.as_mut(), &c.schedule_o) {
                o.schedule = s.clone();
            }
            write_json(&opts.out, "solution.json", &solution_file(&r, &bp, sol))?;
        }
    }
    if let Some(bounds) = bounds {
        let sweep = rate_sweep(p, &cands, &bounds)?;
        let plateau: BTreeMap<String, Option<f64>> = sweep
            .iter()
            .map(|(n, pts)| (n.clone(), plateau_start(pts, PLATEAU_REL_TOL, PLATEAU_RUN)))
            .collect();
        for (n, v) in &plateau {
            lines.push(match v {
                Some(b) => format!("{n}: no improvement beyond {b} Hz"),
                None => format!("{n}: no plateau in the swept range"),
            });
        }
        write(&opts.out, "sweep.csv", &report::sweep_csv(&sweep))?;
        let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
        let series: Vec<(String, Vec<f64>)> = sweep
            .iter()
            .map(|(n, pts)| (n.clone(), pts.iter().map(|p| p.1).collect()))
            .collect();
        let refs: Vec<(&str, &[f64], &str)> = series
            .iter()
            .enumerate()
            .map(|(i, (n, v))| (n.as_str(), v.as_slice(), colors[i % colors.len()]))
            .collect();
        write(&opts.out, "sweep.svg", &report::svg_plot("L2 vs rate bound", &refs))?;
        rep.sweep = Some(sweep);
        rep.plateau_hz = Some(plateau);
    }
    let none_feasible = res.optimal_set.is_empty();
    rep.ranking = Some(res);
    write_json(&opts.out, "report.json", &rep)?;
    if none_feasible {
        return Err(Error::infeasible("schedule-search", "no candidate schedule admits a feasible design"));
    }
    Ok(lines.join("\n"))
}

pub fn run_simulate(opts: &Options) -> Result<String> {
    let (r, _) = load(opts)?;
    let path = opts
        .solution
        .as_ref()
        .ok_or_else(|| Error::config("--solution", "simulate needs a solution file"))?;
    let text = fs::read_to_string(path).map_err(|e| Error::config("--solution", format!("{}: {e}", path.display())))?;
    let sf: SolutionFile = serde_json::from_str(&text).map_err(|e| Error::config("--solution", e.to_string()))?;
    if sf.config_hash != r.hash {
        return Err(Error::config(
            "--solution",
            format!("solution was produced for configuration {} but this one hashes to {}", sf.config_hash, r.hash),
        ));
    }
    let mut p = r.problem.clone();
    p.model = ComputationalModel::from_index(sf.model).ok_or_else(|| Error::config("--solution", "bad model"))?;
    p.controllability.schedule = sf.schedule_r.clone();
    if let (Some(o), Some(s)) = (p.observability.as_mut(), &sf.schedule_o) {
        o.schedule = s.clone();
    }
    let ev = evaluate(&p, &sf.controller, &sf.weights_r, sf.weights_o.as_ref())?;
    let horizon = default_horizon(&r, opts, ev.closed_loop.l);
    if horizon < ev.closed_loop.l {
        return Err(Error::config(
            "--horizon",
            format!("horizon {horizon} is shorter than the response time {}", ev.closed_loop.l),
        ));
    }
    let resp = step_response(&ev.closed_loop, p.amplitude, horizon)?;
    fs::create_dir_all(&opts.out).map_err(|e| Error::Io(e.to_string()))?;
    emit_traces(&opts.out, &resp, p.amplitude)?;
    Ok(format!(
        "simulated {} samples; L2 = {:.6} (solution file: {:.6})",
        horizon + 1,
        ev.metrics.l2,
        sf.l2
    ))
}

pub fn run(cmd: Command, opts: &Options) -> Result<String> {
    match cmd {
        Command::Analyze => analyze(opts),
        Command::Codesign => run_codesign(opts),
        Command::ScheduleSearch => run_schedule_search(opts),
        Command::Simulate => run_simulate(opts),
    }
}
