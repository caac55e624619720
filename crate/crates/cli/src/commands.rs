//! Subcommand implementations. Every artifact goes through [`Outputs`] so a
//! failed run can remove what it already wrote.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use carbon_ppi::analysis::{admissibility_report, efficiency, loss_of_utility, summary_stats, AdmissibilityParams};
use carbon_ppi::filtering::filter_run;
use carbon_ppi::policy::theta;
use carbon_ppi::simulator::{run_monte_carlo, simulate_drivers, trace_ppi, ControlTable, InitialFactor, SimOutput};
use carbon_ppi::{InfoMode, MarketModel, Preference, Solution};
use serde::Serialize;

use crate::config::{PreferenceSpec, ScenarioConfig};
use crate::error::CliError;

/// Carbon-aversion grid of the curve commands.
pub fn epsilon_grid() -> Vec<f64> {
    (0..=20).map(|k| k as f64 * 0.1).collect()
}

const FIGURE_DELTAS: [f64; 3] = [0.7, 1.0, 3.0];

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Tracks written files.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        }
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn write_err(path: &Path, source: std::io::Error) -> CliError {
        CliError::Write {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Creates `name` in the output directory and hands a writer to `body`.
    pub fn file<F>(&mut self, name: &str, body: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        fs::create_dir_all(&self.dir).map_err(|e| Self::write_err(&self.dir, e))?;
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| Self::write_err(&path, e))?;
        self.written.push(path.clone());
        let mut w = BufWriter::new(file);
        body(&mut w).and_then(|_| w.flush()).map_err(|e| Self::write_err(&path, e))?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let text = serde_json::to_string_pretty(value).expect("report types serialise");
        self.file(name, |w| writeln!(w, "{text}"))
    }

    /// Deletes everything written so far.
    pub fn discard(&mut self) {
        for p in self.written.drain(..) {
            let _ = fs::remove_file(p);
        }
    }
}

pub struct Context {
    pub cfg: ScenarioConfig,
    pub out: Outputs,
}

impl Context {
    pub fn new(cfg: ScenarioConfig) -> Self {
        let out = Outputs::new(&cfg.output.dir);
        Self { cfg, out }
    }

    fn market(&self) -> Result<MarketModel, CliError> {
        self.cfg.market()
    }

    fn solve(&self, m: &MarketModel, pref: &Preference) -> Result<Solution, CliError> {
        let s = &self.cfg.simulation;
        Ok(Solution::solve(m, pref, s.horizon, s.ode_steps)?)
    }

    fn preferences(&self) -> Result<&[PreferenceSpec], CliError> {
        if self.cfg.preferences.is_empty() {
            return Err(CliError::Validation(
                "no preferences configured; pass --delta and --epsilon".into(),
            ));
        }
        Ok(&self.cfg.preferences)
    }

    fn initial_cushion(&self, m: &MarketModel) -> f64 {
        let s = &self.cfg.simulation;
        s.v0 - s.v0 * s.protection_level * (-m.r() * s.horizon).exp()
    }
}

fn write_grid_csv(ctx: &mut Context, name: &str, grid: &carbon_ppi::riccati::OdeGrid) -> Result<(), CliError> {
    ctx.out.file(name, |w| grid.write_csv(w))?;
    Ok(())
}

pub fn solve(ctx: &mut Context) -> Result<(), CliError> {
    let m = ctx.market()?;
    let prefs = ctx.preferences()?.to_vec();
    let mut curve_written = false;
    for p in prefs {
        let sol = ctx.solve(&m, &p.preference()?)?;
        if !curve_written {
            ctx.out.file("filter_variance.csv", |w| sol.curve.write_csv(w))?;
            curve_written = true;
        }
        write_grid_csv(ctx, &format!("solve_{}_full.csv", p.tag()), &sol.full)?;
        write_grid_csv(ctx, &format!("solve_{}_partial.csv", p.tag()), &sol.partial)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SimSummary<'a> {
    delta: f64,
    epsilon: f64,
    mode: InfoMode,
    n_paths: usize,
    dt: f64,
    seed: u64,
    stats: &'a carbon_ppi::analysis::SummaryStats,
    mean_std_error: f64,
    variance_std_error: f64,
    absorbed_fraction: f64,
    max_breach: f64,
}

/// Standard error of the unbiased sample variance from the fourth central
/// moment.
pub fn variance_std_error(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    ((m4 - m2 * m2).max(0.0) / n).sqrt()
}

pub fn simulate(ctx: &mut Context) -> Result<(), CliError> {
    let m = ctx.market()?;
    let prefs = ctx.preferences()?.to_vec();
    let modes = ctx.cfg.simulation.modes.clone();
    for p in prefs {
        let sol = ctx.solve(&m, &p.preference()?)?;
        for &mode in &modes {
            let out = run_monte_carlo(&sol, &ctx.cfg.sim_config(mode))?;
            let stem = format!("sim_{}_{mode}", p.tag());
            ctx.out.file(&format!("{stem}.csv"), |w| out.write_csv(w))?;
            let summary = summarise(&p, mode, &out);
            ctx.out.json(&format!("{stem}.json"), &summary)?;
        }
    }
    Ok(())
}

fn summarise<'a>(p: &PreferenceSpec, mode: InfoMode, out: &'a SimOutput) -> SimSummary<'a> {
    let v = out.terminal_wealth();
    SimSummary {
        delta: p.delta,
        epsilon: p.epsilon,
        mode,
        n_paths: out.config.n_paths,
        dt: out.config.dt,
        seed: out.config.seed,
        stats: &out.stats,
        mean_std_error: out.stats.std_error(),
        variance_std_error: variance_std_error(&v),
        absorbed_fraction: out.absorbed_fraction(),
        max_breach: out.records.iter().map(|r| r.breach).fold(0.0, f64::max),
    }
}

/// One path of the factor next to its filter estimate and `P`.
pub fn filter_demo(ctx: &mut Context, name: &str) -> Result<(), CliError> {
    let m = ctx.market()?;
    let s = ctx.cfg.simulation.clone();
    let steps = ctx.cfg.sim_config(InfoMode::Partial).steps()?;
    let curve = carbon_ppi::riccati::solve_filter_variance(&m, s.horizon, 2 * s.ode_steps)?;
    let d = simulate_drivers(&m, s.horizon, s.dt, s.seed, 0, InitialFactor::Prior)?;
    let gamma = filter_run(&d.dlog_s, s.dt, &m, &curve)?;
    let rows: Vec<[f64; 4]> = (0..=steps)
        .map(|k| {
            let t = (k as f64 * s.dt).min(s.horizon);
            Ok([t, d.y[k], gamma[k], curve.p_at(t)?])
        })
        .collect::<carbon_ppi::Result<_>>()?;
    ctx.out.file(name, |w| {
        writeln!(w, "t,y,gamma,p")?;
        for r in &rows {
            writeln!(w, "{},{},{},{}", num(r[0]), num(r[1]), num(r[2]), num(r[3]))?;
        }
        Ok(())
    })?;
    Ok(())
}

pub fn loss_curve(ctx: &mut Context) -> Result<(), CliError> {
    let m = ctx.market()?;
    let c0 = ctx.initial_cushion(&m);
    let mut rows = Vec::new();
    for p in ctx.preferences()?.to_vec() {
        let sol = ctx.solve(&m, &p.preference()?)?;
        for &t in sol.full.t() {
            rows.push([p.delta, p.epsilon, t, loss_of_utility(t, c0, m.gamma0(), &sol)?]);
        }
    }
    ctx.out.file("loss_curve.csv", |w| {
        writeln!(w, "delta,epsilon,t,loss")?;
        for r in &rows {
            writeln!(w, "{},{},{},{}", num(r[0]), num(r[1]), num(r[2]), num(r[3]))?;
        }
        Ok(())
    })?;
    Ok(())
}

fn distinct_deltas(prefs: &[PreferenceSpec]) -> Vec<f64> {
    let mut d: Vec<f64> = prefs.iter().map(|p| p.delta).collect();
    d.sort_by(f64::total_cmp);
    d.dedup();
    d
}

pub fn efficiency_curve(ctx: &mut Context) -> Result<(), CliError> {
    let m = ctx.market()?;
    let mut rows = Vec::new();
    for delta in distinct_deltas(ctx.preferences()?) {
        for eps in epsilon_grid() {
            let sol = ctx.solve(&m, &Preference::from_delta(delta, eps)?)?;
            rows.push([delta, eps, efficiency(&sol)?]);
        }
    }
    ctx.out.file("efficiency_curve.csv", |w| {
        writeln!(w, "delta,epsilon,efficiency")?;
        for r in &rows {
            writeln!(w, "{},{},{}", num(r[0]), num(r[1]), num(r[2]))?;
        }
        Ok(())
    })?;
    Ok(())
}

/// Writes one JSON report per preference and returns the overall flags.
pub fn admissibility(ctx: &mut Context) -> Result<Vec<(PreferenceSpec, bool, bool)>, CliError> {
    let m = ctx.market()?;
    let mut flags = Vec::new();
    for p in ctx.preferences()?.to_vec() {
        let pref = p.preference()?;
        if pref.is_log() {
            return Err(CliError::Validation(
                "the admissibility conditions cover CRRA utility only (delta != 1)".into(),
            ));
        }
        let sol = ctx.solve(&m, &pref)?;
        let report = admissibility_report(&sol, AdmissibilityParams::default())?;
        flags.push((p, report.full_overall, report.partial_overall));
        ctx.out.json(&format!("admissibility_{}.json", p.tag()), &report)?;
    }
    Ok(flags)
}

const TABLE_DELTAS: [f64; 3] = [0.7, 1.0, 3.0];
const TABLE_EPS: [f64; 2] = [0.0, 1.0];

struct Block {
    mean: f64,
    mean_se: f64,
    variance: f64,
    variance_se: f64,
    q05: f64,
    q50: f64,
    q90: f64,
}

impl Block {
    fn from_output(out: &SimOutput) -> Result<Self, CliError> {
        let v = out.terminal_wealth();
        let s = summary_stats(&v)?;
        Ok(Self {
            mean: s.mean,
            mean_se: s.std_error(),
            variance: s.variance,
            variance_se: variance_std_error(&v),
            q05: s.q05,
            q50: s.q50,
            q90: s.q90,
        })
    }

    fn rows(&self) -> [(&'static str, f64); 7] {
        [
            ("mean", self.mean),
            ("mean_se", self.mean_se),
            ("variance", self.variance),
            ("variance_se", self.variance_se),
            ("q05", self.q05),
            ("q50", self.q50),
            ("q90", self.q90),
        ]
    }
}

fn run_block(ctx: &Context, m: &MarketModel, delta: f64, eps: f64, mode: InfoMode) -> Result<Block, CliError> {
    let sol = ctx.solve(m, &Preference::from_delta(delta, eps)?)?;
    Block::from_output(&run_monte_carlo(&sol, &ctx.cfg.sim_config(mode))?)
}

/// Terminal-wealth statistics for the 3 risk aversions x 3 scenarios x
/// 2 carbon aversions of the study, partial information.
pub fn table3(ctx: &mut Context) -> Result<(), CliError> {
    let markets: Vec<MarketModel> = (1..=3).map(|id| ctx.cfg.scenario_market(id)).collect::<Result<_, _>>()?;
    let mut panels = Vec::new();
    for delta in TABLE_DELTAS {
        let mut cols = Vec::new();
        for m in &markets {
            for eps in TABLE_EPS {
                cols.push(run_block(ctx, m, delta, eps, InfoMode::Partial)?);
            }
        }
        panels.push((delta, cols));
    }
    ctx.out.file("table3.csv", |w| {
        write!(w, "delta,statistic")?;
        for s in 1..=3 {
            for e in TABLE_EPS {
                write!(w, ",scenario{s}_eps{e}")?;
            }
        }
        writeln!(w)?;
        for (delta, cols) in &panels {
            for (k, (name, _)) in cols[0].rows().iter().enumerate() {
                write!(w, "{delta},{name}")?;
                for c in cols {
                    write!(w, ",{}", num(c.rows()[k].1))?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    })?;
    Ok(())
}

/// Full against partial information, scenario 3, `delta = 0.7`, `epsilon = 1`.
pub fn table4(ctx: &mut Context) -> Result<(), CliError> {
    let m = ctx.cfg.scenario_market(3)?;
    let full = run_block(ctx, &m, 0.7, 1.0, InfoMode::Full)?;
    let partial = run_block(ctx, &m, 0.7, 1.0, InfoMode::Partial)?;
    ctx.out.file("table4.csv", |w| {
        writeln!(w, "statistic,full,partial")?;
        for ((name, f), (_, p)) in full.rows().iter().zip(partial.rows().iter()) {
            writeln!(w, "{name},{},{}", num(*f), num(*p))?;
        }
        Ok(())
    })?;
    Ok(())
}

pub fn figure(ctx: &mut Context, k: u8) -> Result<(), CliError> {
    match k {
        1 => filter_demo(ctx, "figure1.csv"),
        2 => figure_initial_exposures(ctx),
        3 => figure_multiplier_vs_epsilon(ctx),
        4 => figure_exposure_paths(ctx),
        5 => figure_multiplier_paths(ctx),
        6 => figure_loss_efficiency(ctx),
        _ => Err(CliError::Validation(format!("figure must be 1 to 6, got {k}"))),
    }
}

/// Exposure to each asset at `t = 0` for each `(delta, epsilon)`.
fn figure_initial_exposures(ctx: &mut Context) -> Result<(), CliError> {
    let m = ctx.market()?;
    let v0 = ctx.cfg.simulation.v0;
    let c0 = ctx.initial_cushion(&m);
    let mut rows = Vec::new();
    for delta in FIGURE_DELTAS {
        for eps in TABLE_EPS {
            let sol = ctx.solve(&m, &Preference::from_delta(delta, eps)?)?;
            let th = theta(InfoMode::Partial, 0.0, m.gamma0(), &sol)?.theta;
            for (i, x) in th.iter().enumerate() {
                rows.push((delta, eps, i + 1, x * c0 / v0));
            }
        }
    }
    ctx.out.file("figure2.csv", |w| {
        writeln!(w, "delta,epsilon,asset,exposure")?;
        for (d, e, i, x) in &rows {
            writeln!(w, "{},{},{i},{}", num(*d), num(*e), num(*x))?;
        }
        Ok(())
    })?;
    Ok(())
}

/// Multiplier and risk-free exposure at `t = 0` against `epsilon`.
fn figure_multiplier_vs_epsilon(ctx: &mut Context) -> Result<(), CliError> {
    let m = ctx.market()?;
    let v0 = ctx.cfg.simulation.v0;
    let c0 = ctx.initial_cushion(&m);
    let mut rows = Vec::new();
    for delta in FIGURE_DELTAS {
        for eps in epsilon_grid() {
            let sol = ctx.solve(&m, &Preference::from_delta(delta, eps)?)?;
            let th = theta(InfoMode::Partial, 0.0, m.gamma0(), &sol)?.theta;
            let mult = th.sum();
            rows.push([delta, eps, mult, 1.0 - mult * c0 / v0]);
        }
    }
    ctx.out.file("figure3.csv", |w| {
        writeln!(w, "delta,epsilon,multiplier,risk_free_exposure")?;
        for r in &rows {
            writeln!(w, "{},{},{},{}", num(r[0]), num(r[1]), num(r[2]), num(r[3]))?;
        }
        Ok(())
    })?;
    Ok(())
}

fn traced(ctx: &Context, m: &MarketModel, sol: &Solution, mode: InfoMode) -> Result<carbon_ppi::simulator::PathTrace, CliError> {
    let cfg = ctx.cfg.sim_config(mode);
    let table = ControlTable::new(sol, &cfg)?;
    let d = simulate_drivers(m, cfg.horizon, cfg.dt, cfg.seed, 0, InitialFactor::Prior)?;
    Ok(trace_ppi(&d, &table, m)?)
}

/// Exposures along one simulated path, `delta = 1`, `epsilon = 1`.
fn figure_exposure_paths(ctx: &mut Context) -> Result<(), CliError> {
    let m = ctx.market()?;
    let n = m.n();
    let sol = ctx.solve(&m, &Preference::from_delta(1.0, 1.0)?)?;
    let tr = traced(ctx, &m, &sol, InfoMode::Partial)?;
    ctx.out.file("figure4.csv", |w| {
        write!(w, "t")?;
        for i in 1..=n {
            write!(w, ",exposure{i}")?;
        }
        writeln!(w)?;
        for (k, row) in tr.exposure.chunks_exact(n).enumerate() {
            write!(w, "{}", num(tr.t[k]))?;
            for x in row {
                write!(w, ",{}", num(*x))?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    Ok(())
}

/// Multiplier along one path under both information regimes, `delta = 1`.
fn figure_multiplier_paths(ctx: &mut Context) -> Result<(), CliError> {
    let m = ctx.market()?;
    let n = m.n();
    let mut rows = Vec::new();
    for eps in TABLE_EPS {
        let sol = ctx.solve(&m, &Preference::from_delta(1.0, eps)?)?;
        let full = traced(ctx, &m, &sol, InfoMode::Full)?;
        let partial = traced(ctx, &m, &sol, InfoMode::Partial)?;
        for (k, (f, p)) in full.multiplier(n).into_iter().zip(partial.multiplier(n)).enumerate() {
            rows.push([eps, full.t[k], f, p]);
        }
    }
    ctx.out.file("figure5.csv", |w| {
        writeln!(w, "epsilon,t,full,partial")?;
        for r in &rows {
            writeln!(w, "{},{},{},{}", num(r[0]), num(r[1]), num(r[2]), num(r[3]))?;
        }
        Ok(())
    })?;
    Ok(())
}

/// Loss of utility and efficiency at `t = 0` with unit cushion.
fn figure_loss_efficiency(ctx: &mut Context) -> Result<(), CliError> {
    let m = ctx.market()?;
    let mut rows = Vec::new();
    for delta in FIGURE_DELTAS {
        for eps in epsilon_grid() {
            let sol = ctx.solve(&m, &Preference::from_delta(delta, eps)?)?;
            rows.push([delta, eps, loss_of_utility(0.0, 1.0, m.gamma0(), &sol)?, efficiency(&sol)?]);
        }
    }
    ctx.out.file("figure6.csv", |w| {
        writeln!(w, "delta,epsilon,loss,efficiency")?;
        for r in &rows {
            writeln!(w, "{},{},{},{}", num(r[0]), num(r[1]), num(r[2]), num(r[3]))?;
        }
        Ok(())
    })?;
    Ok(())
}
