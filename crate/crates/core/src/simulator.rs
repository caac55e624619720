//! Monte Carlo engine for the carbon-penalised PPI strategy.
//!
//! Every path owns a ChaCha8 stream selected by `(seed, path_index)`, so the
//! output does not depend on how paths are spread over threads. Per step the
//! engine draws `n + 1` independent normals: the first is reserved for the
//! initial factor value, then each step uses `Z = (Z^S, Z^Y)`.
//!
//! * `log S` takes an Euler step, `Y` an exact OU step driven by the same
//!   normals, so the instantaneous correlation is reproduced per step.
//! * The wealth `V` is rebalanced at grid times with simple returns and is
//!   absorbed (moved to the bond) the first time it touches the floor.
//! * A separate geometric cushion process, which never hits zero, carries
//!   the penalised cushion used by the value function.

use std::io::{self, Write};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{summary_stats, SummaryStats};
use crate::error::{Error, Result};
use crate::filtering::{advance_with_gain, GainTable};
use crate::model::{InfoMode, MarketModel};
use crate::policy::affine_coefficients;
use crate::riccati::Solution;

const GRID_TOLERANCE: f64 = 1e-12;

/// Which control drives the portfolio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ControlSource {
    Optimal,
    /// The optimal control multiplied by a constant factor.
    ScaledOptimal(f64),
    FixedTheta(Vec<f64>),
    FixedMultiplier { m: f64, pi: Vec<f64> },
}

/// How the factor starts on each path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialFactor {
    /// `Y_0 ~ N(Gamma_0, P_0)`.
    Prior,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub info_mode: InfoMode,
    pub v0: f64,
    pub protection_level: f64,
    pub control: ControlSource,
    pub initial_factor: InitialFactor,
}

impl SimConfig {
    pub fn new(horizon: f64, dt: f64, n_paths: usize, seed: u64, info_mode: InfoMode) -> Self {
        Self {
            horizon,
            dt,
            n_paths,
            seed,
            info_mode,
            v0: 1.0,
            protection_level: 1.0,
            control: ControlSource::Optimal,
            initial_factor: InitialFactor::Prior,
        }
    }

    /// Guaranteed amount `G = V0 PL`.
    pub fn guarantee(&self) -> f64 {
        self.v0 * self.protection_level
    }

    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.horizon > 0.0) {
            return Err(Error::InvalidParameter("dt and horizon must be positive".into()));
        }
        let k = (self.horizon / self.dt).round();
        if k < 1.0 || (k * self.dt - self.horizon).abs() > GRID_TOLERANCE * self.horizon.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "dt = {} does not divide the horizon {}",
                self.dt, self.horizon
            )));
        }
        Ok(k as usize)
    }

    pub fn validate(&self, r: f64) -> Result<usize> {
        let steps = self.steps()?;
        if self.n_paths == 0 {
            return Err(Error::InvalidParameter("at least one path is required".into()));
        }
        if !(self.protection_level > 0.0 && self.protection_level <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "protection level must lie in (0, 1], got {}",
                self.protection_level
            )));
        }
        let f0 = self.guarantee() * (-r * self.horizon).exp();
        if !(self.v0 > f0) {
            return Err(Error::InvalidParameter(format!(
                "initial wealth {} does not exceed the initial floor {f0}",
                self.v0
            )));
        }
        Ok(steps)
    }
}

/// Terminal quantities of one simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub terminal_v: f64,
    /// `V_T - G`.
    pub terminal_cushion: f64,
    /// Geometric cushion process at `T`, before the penalty.
    pub cushion_process: f64,
    /// Cushion process times `exp(-1/2 int theta^T Pen theta)`.
    pub penalised_cushion: f64,
    pub absorbed_at: Option<f64>,
    /// Largest `F_t - V_t` seen on the grid, zero if the floor was never crossed.
    pub breach: f64,
    pub initial_factor: f64,
}

/// Factor and log-price path on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverPath {
    pub dt: f64,
    pub y: Vec<f64>,
    /// Log-price increments, `n` per step, row by row.
    pub dlog_s: Vec<f64>,
}

impl DriverPath {
    pub fn steps(&self) -> usize {
        self.y.len() - 1
    }

    /// Cumulative log prices starting at zero, `n` per node.
    pub fn log_prices(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (k, row) in self.dlog_s.chunks_exact(n).enumerate() {
            for i in 0..n {
                let prev = out[k * n + i];
                out.push(prev + row[i]);
            }
        }
        out
    }
}

/// Per-step constants of the driver dynamics.
struct DriverStepper {
    n: usize,
    dt: f64,
    sqrt_dt: f64,
    /// row-major `Sigma~_S`
    sigma_s: Vec<f64>,
    /// `Sigma~_Y / sigma_Y` and `sigma~_Y / sigma_Y`
    y_load: Vec<f64>,
    y_load_last: f64,
    y_decay: f64,
    y_shift: f64,
    y_sd: f64,
    a: Vec<f64>,
    log_drift: Vec<f64>,
    gamma0: f64,
    p0_sd: f64,
}

impl DriverStepper {
    fn new(model: &MarketModel, dt: f64) -> Self {
        let n = model.n();
        let tr = model.transformed();
        let sy = model.sigma_y();
        let l = model.lambda();
        let (decay, shift, var) = if l.abs() < 1e-12 {
            (1.0, model.beta() * dt, sy * sy * dt)
        } else {
            let e = (l * dt).exp();
            (e, model.beta() * (e - 1.0) / l, sy * sy * (2.0 * l * dt).exp_m1() / (2.0 * l))
        };
        Self {
            n,
            dt,
            sqrt_dt: dt.sqrt(),
            sigma_s: (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| tr.sigma_tilde_s[(i, j)])
                .collect(),
            y_load: tr.sigma_tilde_y.iter().map(|v| v / sy).collect(),
            y_load_last: tr.sigma_tilde_y_scalar / sy,
            y_decay: decay,
            y_shift: shift,
            y_sd: var.sqrt(),
            a: model.a().iter().copied().collect(),
            log_drift: (0..n)
                .map(|i| model.b()[i] - 0.5 * model.sigma()[i].powi(2))
                .collect(),
            gamma0: model.gamma0(),
            p0_sd: model.p0().sqrt(),
        }
    }

    fn initial(&self, rng: &mut ChaCha8Rng, init: InitialFactor) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        match init {
            InitialFactor::Prior => self.gamma0 + self.p0_sd * z,
            InitialFactor::Fixed(y) => y,
        }
    }

    /// Fills `dlog` with the log-price increments over one step and returns
    /// the next factor value. `z` is scratch space of length `n + 1`.
    #[inline]
    fn step(&self, rng: &mut ChaCha8Rng, y: f64, z: &mut [f64], dlog: &mut [f64]) -> f64 {
        let n = self.n;
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let mut y_noise = self.y_load_last * z[n];
        for i in 0..n {
            let row = &self.sigma_s[i * n..(i + 1) * n];
            let mut w = 0.0;
            for j in 0..=i {
                w += row[j] * z[j];
            }
            dlog[i] = (self.a[i] * y + self.log_drift[i]) * self.dt + w * self.sqrt_dt;
            y_noise += self.y_load[i] * z[i];
        }
        self.y_decay * y + self.y_shift + self.y_sd * y_noise
    }
}

fn path_rng(seed: u64, path_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index as u64);
    rng
}

/// Simulates the factor and log prices of one path.
pub fn simulate_drivers(
    model: &MarketModel,
    horizon: f64,
    dt: f64,
    seed: u64,
    path_index: usize,
    init: InitialFactor,
) -> Result<DriverPath> {
    let probe = SimConfig::new(horizon, dt, 1, seed, InfoMode::Full);
    let steps = probe.steps()?;
    let stepper = DriverStepper::new(model, dt);
    let n = model.n();
    let mut rng = path_rng(seed, path_index);
    let mut y = stepper.initial(&mut rng, init);
    let mut ys = Vec::with_capacity(steps + 1);
    let mut dlog_s = vec![0.0; steps * n];
    let mut z = vec![0.0; n + 1];
    ys.push(y);
    for k in 0..steps {
        y = stepper.step(&mut rng, y, &mut z, &mut dlog_s[k * n..(k + 1) * n]);
        ys.push(y);
    }
    Ok(DriverPath { dt, y: ys, dlog_s })
}

/// Precomputed per-step controls, filter gains and floor values.
pub struct ControlTable {
    n: usize,
    steps: usize,
    dt: f64,
    mode: InfoMode,
    /// `theta_k(x) = c0_k + c1_k x`, row-major.
    c0: Vec<f64>,
    c1: Vec<f64>,
    gains: Option<GainTable>,
    penalty: Vec<f64>,
    /// row-major `Sigma~_S Sigma~_S^T`
    cov: Vec<f64>,
    r: f64,
    rel_sigma2: Vec<f64>,
    floor: Vec<f64>,
    growth: f64,
    v0: f64,
}

impl ControlTable {
    pub fn new(sol: &Solution, config: &SimConfig) -> Result<Self> {
        let model = &sol.model;
        let steps = config.validate(model.r())?;
        if (config.horizon - sol.horizon).abs() > GRID_TOLERANCE * sol.horizon.max(1.0) {
            return Err(Error::GridMismatch(format!(
                "simulation horizon {} differs from the solved horizon {}",
                config.horizon, sol.horizon
            )));
        }
        let n = model.n();
        let dt = config.dt;
        let mut c0 = Vec::with_capacity(steps * n);
        let mut c1 = Vec::with_capacity(steps * n);
        let fixed = |theta: &[f64]| -> Result<DVector<f64>> {
            if theta.len() != n {
                return Err(Error::WrongShape(format!("control has {} entries for {n} assets", theta.len())));
            }
            Ok(DVector::from_column_slice(theta))
        };
        for k in 0..steps {
            let t = k as f64 * dt;
            let (a0, a1) = match &config.control {
                ControlSource::Optimal => affine_coefficients(sol, config.info_mode, t)?,
                ControlSource::ScaledOptimal(s) => {
                    let (a0, a1) = affine_coefficients(sol, config.info_mode, t)?;
                    (a0 * *s, a1 * *s)
                }
                ControlSource::FixedTheta(theta) => (fixed(theta)?, DVector::zeros(n)),
                ControlSource::FixedMultiplier { m, pi } => (fixed(pi)? * *m, DVector::zeros(n)),
            };
            c0.extend_from_slice(a0.as_slice());
            c1.extend_from_slice(a1.as_slice());
        }
        let gains = match config.info_mode {
            InfoMode::Full => None,
            InfoMode::Partial => Some(GainTable::new(model, &sol.curve, dt, steps)?),
        };
        let g = config.guarantee();
        let r = model.r();
        let floor = (0..=steps)
            .map(|k| g * (-r * (config.horizon - k as f64 * dt)).exp())
            .collect();
        let cov = &model.transformed().cov_s;
        Ok(Self {
            n,
            steps,
            dt,
            mode: config.info_mode,
            c0,
            c1,
            gains,
            penalty: sol.risk.penalty.iter().copied().collect(),
            cov: (0..n * n).map(|idx| cov[(idx / n, idx % n)]).collect(),
            r,
            rel_sigma2: model.sigma().iter().map(|s| 0.5 * s * s).collect(),
            floor,
            growth: (r * dt).exp(),
            v0: config.v0,
        })
    }
}

/// Running state of one path.
struct PathState {
    v: f64,
    log_c: f64,
    penalty_integral: f64,
    gamma: f64,
    absorbed_at: Option<f64>,
    breach: f64,
}

impl PathState {
    fn new(table: &ControlTable, gamma0: f64) -> Self {
        Self {
            v: table.v0,
            log_c: (table.v0 - table.floor[0]).ln(),
            penalty_integral: 0.0,
            gamma: gamma0,
            absorbed_at: None,
            breach: 0.0,
        }
    }

    /// Applies the control chosen at `t_k` to the increments over `[t_k, t_{k+1}]`.
    #[inline]
    fn advance(&mut self, table: &ControlTable, model: &MarketModel, k: usize, y: f64, dlog: &[f64], theta: &mut [f64]) {
        let n = table.n;
        let dt = table.dt;
        let x = match table.mode {
            InfoMode::Full => y,
            InfoMode::Partial => self.gamma,
        };
        let c0 = &table.c0[k * n..(k + 1) * n];
        let c1 = &table.c1[k * n..(k + 1) * n];
        for i in 0..n {
            theta[i] = c0[i] + c1[i] * x;
        }

        // geometric cushion process and penalty, left-point controls
        let mut lin = 0.0;
        let mut quad = 0.0;
        let mut pen = 0.0;
        for i in 0..n {
            lin += theta[i] * (dlog[i] + (table.rel_sigma2[i] - table.r) * dt);
            let row = &table.cov[i * n..(i + 1) * n];
            let mut s = 0.0;
            for j in 0..n {
                s += row[j] * theta[j];
            }
            quad += theta[i] * s;
            pen += table.penalty[i] * theta[i] * theta[i];
        }
        self.log_c += table.r * dt + lin - 0.5 * quad * dt;
        self.penalty_integral += pen * dt;

        // wealth with discrete rebalancing
        if self.absorbed_at.is_none() {
            let cushion = self.v - table.floor[k];
            let bond = table.growth - 1.0;
            let mut excess = 0.0;
            for i in 0..n {
                excess += theta[i] * (dlog[i].exp_m1() - bond);
            }
            self.v = self.v * table.growth + cushion * excess;
            let f = table.floor[k + 1];
            if self.v <= f {
                self.absorbed_at = Some((k + 1) as f64 * dt);
                self.breach = f - self.v;
            }
        } else {
            self.v *= table.growth;
        }

        if let Some(g) = &table.gains {
            self.gamma = advance_with_gain(self.gamma, dlog, dt, model, g.row(k));
        }
    }

    fn finish(self, table: &ControlTable, y0: f64) -> PathRecord {
        let c = self.log_c.exp();
        PathRecord {
            terminal_v: self.v,
            terminal_cushion: self.v - table.floor[table.steps],
            cushion_process: c,
            penalised_cushion: (self.log_c - 0.5 * self.penalty_integral).exp(),
            absorbed_at: self.absorbed_at,
            breach: self.breach,
            initial_factor: y0,
        }
    }
}

/// Evolves the PPI portfolio along a stored driver path.
pub fn evolve_ppi(drivers: &DriverPath, table: &ControlTable, model: &MarketModel) -> Result<PathRecord> {
    let n = table.n;
    if drivers.steps() != table.steps || (drivers.dt - table.dt).abs() > GRID_TOLERANCE {
        return Err(Error::GridMismatch("driver path and control table use different grids".into()));
    }
    let mut state = PathState::new(table, model.gamma0());
    let mut theta = vec![0.0; n];
    for k in 0..table.steps {
        state.advance(table, model, k, drivers.y[k], &drivers.dlog_s[k * n..(k + 1) * n], &mut theta);
    }
    Ok(state.finish(table, drivers.y[0]))
}

/// Node-by-node history of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTrace {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    /// Filter estimate; equal to `y` under full information.
    pub gamma: Vec<f64>,
    pub v: Vec<f64>,
    pub floor: Vec<f64>,
    /// Control chosen at each `t_k`, `n` per step.
    pub theta: Vec<f64>,
    /// Exposure to each asset as a fraction of wealth, zero once absorbed.
    pub exposure: Vec<f64>,
}

impl PathTrace {
    pub fn multiplier(&self, n: usize) -> Vec<f64> {
        self.theta.chunks_exact(n).map(|row| row.iter().sum()).collect()
    }
}

/// Like [`evolve_ppi`] but keeps the whole history.
pub fn trace_ppi(drivers: &DriverPath, table: &ControlTable, model: &MarketModel) -> Result<PathTrace> {
    let n = table.n;
    if drivers.steps() != table.steps || (drivers.dt - table.dt).abs() > GRID_TOLERANCE {
        return Err(Error::GridMismatch("driver path and control table use different grids".into()));
    }
    let mut state = PathState::new(table, model.gamma0());
    let mut theta = vec![0.0; n];
    let cap = table.steps + 1;
    let mut tr = PathTrace {
        t: Vec::with_capacity(cap),
        y: Vec::with_capacity(cap),
        gamma: Vec::with_capacity(cap),
        v: Vec::with_capacity(cap),
        floor: table.floor.clone(),
        theta: Vec::with_capacity(table.steps * n),
        exposure: Vec::with_capacity(table.steps * n),
    };
    for k in 0..=table.steps {
        let y = drivers.y[k];
        tr.t.push(k as f64 * table.dt);
        tr.y.push(y);
        tr.gamma.push(if table.mode == InfoMode::Full { y } else { state.gamma });
        tr.v.push(state.v);
        if k == table.steps {
            break;
        }
        let live = state.absorbed_at.is_none();
        let (v, f) = (state.v, table.floor[k]);
        state.advance(table, model, k, y, &drivers.dlog_s[k * n..(k + 1) * n], &mut theta);
        tr.theta.extend_from_slice(&theta);
        tr.exposure
            .extend(theta.iter().map(|th| if live { th * (v - f) / v } else { 0.0 }));
    }
    Ok(tr)
}

fn run_path(
    model: &MarketModel,
    stepper: &DriverStepper,
    table: &ControlTable,
    config: &SimConfig,
    index: usize,
) -> PathRecord {
    let n = table.n;
    let mut rng = path_rng(config.seed, index);
    let y0 = stepper.initial(&mut rng, config.initial_factor);
    let mut y = y0;
    let mut state = PathState::new(table, model.gamma0());
    let mut z = vec![0.0; n + 1];
    let mut dlog = vec![0.0; n];
    let mut theta = vec![0.0; n];
    for k in 0..table.steps {
        let y_next = stepper.step(&mut rng, y, &mut z, &mut dlog);
        state.advance(table, model, k, y, &dlog, &mut theta);
        y = y_next;
    }
    state.finish(table, y0)
}

/// Result of a Monte Carlo run.
#[derive(Debug, Clone, Serialize)]
pub struct SimOutput {
    pub config: SimConfig,
    pub delta: f64,
    pub epsilon: f64,
    pub records: Vec<PathRecord>,
    /// Statistics of the terminal wealth `V_T`.
    pub stats: SummaryStats,
}

impl SimOutput {
    pub fn terminal_wealth(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.terminal_v).collect()
    }

    pub fn absorbed_fraction(&self) -> f64 {
        self.records.iter().filter(|r| r.absorbed_at.is_some()).count() as f64 / self.records.len() as f64
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "path,terminal_v,terminal_cushion,cushion_process,penalised_cushion,absorbed,absorption_time,breach,initial_factor"
        )?;
        for (i, r) in self.records.iter().enumerate() {
            let tau = r.absorbed_at.map(|t| format!("{t:.16e}")).unwrap_or_default();
            writeln!(
                out,
                "{i},{:.16e},{:.16e},{:.16e},{:.16e},{},{tau},{:.16e},{:.16e}",
                r.terminal_v,
                r.terminal_cushion,
                r.cushion_process,
                r.penalised_cushion,
                u8::from(r.absorbed_at.is_some()),
                r.breach,
                r.initial_factor,
            )?;
        }
        Ok(())
    }
}

/// Simulates `config.n_paths` paths in parallel.
pub fn run_monte_carlo(sol: &Solution, config: &SimConfig) -> Result<SimOutput> {
    let table = ControlTable::new(sol, config)?;
    let model = &sol.model;
    let stepper = DriverStepper::new(model, config.dt);
    let records: Vec<PathRecord> = (0..config.n_paths)
        .into_par_iter()
        .map(|i| run_path(model, &stepper, &table, config, i))
        .collect();
    let v: Vec<f64> = records.iter().map(|r| r.terminal_v).collect();
    let stats = summary_stats(&v)?;
    Ok(SimOutput {
        config: config.clone(),
        delta: sol.pref.delta(),
        epsilon: sol.pref.epsilon,
        records,
        stats,
    })
}
