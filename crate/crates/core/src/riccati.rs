//! Backward Riccati systems of the value function, the forward filter
//! variance equation and the closed forms of the logarithmic case.
//!
//! Everything lives on a uniform grid `t_i = i T / N`. Backward systems are
//! integrated in `s = T - t` with classical RK4. The filter variance is
//! always solved on a grid at least twice as fine, so that the RK4 half
//! steps of the partial-information system land on exact nodes.

use std::io::{self, Write};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{
    discriminant_from_forms, effective_risk, EffectiveRisk, MarketModel, Preference, RiskForms,
    Utility,
};

pub const DEFAULT_STEPS: usize = 2000;
pub const MIN_STEPS: usize = 100;
pub const BLOW_UP: f64 = 1e8;
pub const BARRIER_TOLERANCE: f64 = 1e-10;
const NEGATIVE_VARIANCE: f64 = -1e-12;
const GRID_SLACK: f64 = 1e-12;
const LAMBDA_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    FullInfo,
    PartialInfo,
    LogFull,
    LogPartial,
}

/// Coefficients `(f, g, h)` of an exponential-quadratic value function on a
/// uniform time grid.
#[derive(Debug, Clone)]
pub struct OdeGrid {
    t: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    h: Vec<f64>,
    kind: SystemKind,
    delta: f64,
    epsilon: f64,
}

impl OdeGrid {
    fn from_backward(
        horizon: f64,
        mut f: Vec<f64>,
        mut g: Vec<f64>,
        mut h: Vec<f64>,
        kind: SystemKind,
        pref: &Preference,
    ) -> Self {
        // stored in s-order, flip to t-order
        f.reverse();
        g.reverse();
        h.reverse();
        let steps = f.len() - 1;
        Self {
            t: uniform_grid(horizon, steps),
            f,
            g,
            h,
            kind,
            delta: pref.delta(),
            epsilon: pref.epsilon,
        }
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }
    pub fn f(&self) -> &[f64] {
        &self.f
    }
    pub fn g(&self) -> &[f64] {
        &self.g
    }
    pub fn h(&self) -> &[f64] {
        &self.h
    }
    pub fn kind(&self) -> SystemKind {
        self.kind
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn steps(&self) -> usize {
        self.t.len() - 1
    }
    pub fn horizon(&self) -> f64 {
        *self.t.last().unwrap()
    }
    pub fn step(&self) -> f64 {
        self.horizon() / self.steps() as f64
    }

    /// Linearly interpolated `(f, g, h)` at `t`.
    pub fn at(&self, t: f64) -> Result<(f64, f64, f64)> {
        let (i, w) = locate(self.horizon(), self.steps(), t)?;
        let lerp = |v: &[f64]| if w == 0.0 { v[i] } else { v[i] + w * (v[i + 1] - v[i]) };
        Ok((lerp(&self.f), lerp(&self.g), lerp(&self.h)))
    }

    /// Largest absolute difference of all three coefficients at common nodes.
    ///
    /// The grids may differ in resolution as long as one refines the other.
    pub fn sup_distance(&self, other: &OdeGrid) -> Result<f64> {
        let (coarse, fine) = if self.steps() <= other.steps() {
            (self, other)
        } else {
            (other, self)
        };
        let stride = stride_between(coarse.steps(), fine.steps())?;
        if (coarse.horizon() - fine.horizon()).abs() > GRID_SLACK {
            return Err(Error::GridMismatch("different horizons".into()));
        }
        let mut d = 0.0f64;
        for i in 0..=coarse.steps() {
            let j = i * stride;
            d = d
                .max((coarse.f[i] - fine.f[j]).abs())
                .max((coarse.g[i] - fine.g[j]).abs())
                .max((coarse.h[i] - fine.h[j]).abs());
        }
        Ok(d)
    }

    /// CSV dump with header `t,f,g,h`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,f,g,h")?;
        for i in 0..self.t.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.t[i], self.f[i], self.g[i], self.h[i]
            )?;
        }
        Ok(())
    }
}

pub(crate) fn uniform_grid(horizon: f64, steps: usize) -> Vec<f64> {
    let h = horizon / steps as f64;
    (0..=steps)
        .map(|i| if i == steps { horizon } else { i as f64 * h })
        .collect()
}

/// Index of the interval containing `t` and the interpolation weight.
fn locate(horizon: f64, steps: usize, t: f64) -> Result<(usize, f64)> {
    if !(t >= -GRID_SLACK && t <= horizon + GRID_SLACK) {
        return Err(Error::OutOfGrid { t, horizon });
    }
    let x = (t.clamp(0.0, horizon) / horizon) * steps as f64;
    let i = (x.floor() as usize).min(steps);
    if i == steps {
        return Ok((steps, 0.0));
    }
    Ok((i, x - i as f64))
}

fn stride_between(coarse: usize, fine: usize) -> Result<usize> {
    if coarse == 0 || !fine.is_multiple_of(coarse) {
        return Err(Error::GridMismatch(format!(
            "{fine} steps do not refine {coarse} steps"
        )));
    }
    Ok(fine / coarse)
}

/// `out[i] = int_{t_i}^T v` by the composite trapezoid rule.
pub(crate) fn tail_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for i in (0..values.len().saturating_sub(1)).rev() {
        out[i] = out[i + 1] + 0.5 * h * (values[i] + values[i + 1]);
    }
    out
}

/// `int_t^T v` from node values and their tail integrals, exact for the
/// piecewise-linear interpolant.
fn tail_at(horizon: f64, values: &[f64], tails: &[f64], t: f64) -> Result<f64> {
    let steps = values.len() - 1;
    let (i, w) = locate(horizon, steps, t)?;
    if w == 0.0 {
        return Ok(tails[i]);
    }
    let h = horizon / steps as f64;
    let vt = values[i] + w * (values[i + 1] - values[i]);
    Ok(tails[i + 1] + 0.5 * (1.0 - w) * h * (vt + values[i + 1]))
}

/// Conditional variance `P(t)` of the factor given the observed prices,
/// and the derived gain quantities, on a uniform grid.
#[derive(Debug, Clone)]
pub struct FilterVarianceCurve {
    t: Vec<f64>,
    p: Vec<f64>,
    /// `P~(t) = Sigma~_Y Sigma~_S^T + P(t) a^T` per node.
    pbar: Vec<DVector<f64>>,
    /// `P~ (Sigma~_S Sigma~_S^T)^{-1} P~^T`, the quadratic variation rate of the filter.
    q: Vec<f64>,
    p_tail: Vec<f64>,
}

impl FilterVarianceCurve {
    pub fn t(&self) -> &[f64] {
        &self.t
    }
    pub fn p(&self) -> &[f64] {
        &self.p
    }
    pub fn pbar(&self) -> &[DVector<f64>] {
        &self.pbar
    }
    pub fn q(&self) -> &[f64] {
        &self.q
    }
    pub fn steps(&self) -> usize {
        self.t.len() - 1
    }
    pub fn horizon(&self) -> f64 {
        *self.t.last().unwrap()
    }

    pub fn p_at(&self, t: f64) -> Result<f64> {
        let (i, w) = locate(self.horizon(), self.steps(), t)?;
        Ok(if w == 0.0 {
            self.p[i]
        } else {
            self.p[i] + w * (self.p[i + 1] - self.p[i])
        })
    }

    pub fn q_at(&self, t: f64) -> Result<f64> {
        let (i, w) = locate(self.horizon(), self.steps(), t)?;
        Ok(if w == 0.0 {
            self.q[i]
        } else {
            self.q[i] + w * (self.q[i + 1] - self.q[i])
        })
    }

    pub fn pbar_at(&self, t: f64) -> Result<DVector<f64>> {
        let (i, w) = locate(self.horizon(), self.steps(), t)?;
        Ok(if w == 0.0 {
            self.pbar[i].clone()
        } else {
            &self.pbar[i] + (&self.pbar[i + 1] - &self.pbar[i]) * w
        })
    }

    /// `int_t^T P(s) ds`.
    pub fn integral_from(&self, t: f64) -> Result<f64> {
        tail_at(self.horizon(), &self.p, &self.p_tail, t)
    }

    /// Same curve with every value forced to zero: a perfectly observed factor.
    pub fn zero_like(&self, model: &MarketModel) -> Self {
        let n = self.p.len();
        let kappa = model.transformed().cross.clone();
        let q = model.transformed().cov_s_inv.quadratic_form(&kappa);
        Self {
            t: self.t.clone(),
            p: vec![0.0; n],
            pbar: vec![kappa; n],
            q: vec![q; n],
            p_tail: vec![0.0; n],
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "t,P")?;
        for k in 0..self.pbar[0].len() {
            write!(out, ",Pbar{}", k + 1)?;
        }
        writeln!(out)?;
        for i in 0..self.t.len() {
            write!(out, "{:.16e},{:.16e}", self.t[i], self.p[i])?;
            for v in self.pbar[i].iter() {
                write!(out, ",{v:.16e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

trait QuadraticForm {
    fn quadratic_form(&self, v: &DVector<f64>) -> f64;
}

impl QuadraticForm for nalgebra::DMatrix<f64> {
    fn quadratic_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(self * v))
    }
}

/// Filter-variance quadratic variation `q(P)`.
fn filter_q(c: &RiskForms, p: f64) -> f64 {
    c.kk + 2.0 * p * c.ka + p * p * c.aa
}

/// Forward RK4 for `dP/dt = 2 lambda P + sigma_Y^2 - q(P)`, `P(0) = P0`.
pub fn solve_filter_variance(model: &MarketModel, horizon: f64, steps: usize) -> Result<FilterVarianceCurve> {
    check_horizon(horizon, steps)?;
    let tr = model.transformed();
    let cov = RiskForms::new(
        &tr.cov_s_inv,
        model.a(),
        &model.excess_intercept(),
        &tr.cross,
    );
    let (lambda, s2) = (model.lambda(), model.sigma_y().powi(2));
    let rhs = |p: f64| 2.0 * lambda * p + s2 - filter_q(&cov, p);

    let h = horizon / steps as f64;
    let t = uniform_grid(horizon, steps);
    let mut p = Vec::with_capacity(steps + 1);
    let mut x = model.p0();
    p.push(x);
    for i in 0..steps {
        let k1 = rhs(x);
        let k2 = rhs(x + 0.5 * h * k1);
        let k3 = rhs(x + 0.5 * h * k2);
        let k4 = rhs(x + h * k3);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !x.is_finite() || x < NEGATIVE_VARIANCE {
            return Err(Error::NegativeVariance { t: t[i + 1], value: x });
        }
        x = x.max(0.0);
        p.push(x);
    }
    let pbar = p.iter().map(|&pi| &tr.cross + model.a() * pi).collect();
    let q = p.iter().map(|&pi| filter_q(&cov, pi)).collect();
    let p_tail = tail_trapezoid(&p, h);
    Ok(FilterVarianceCurve { t, p, pbar, q, p_tail })
}

fn check_horizon(horizon: f64, steps: usize) -> Result<()> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    if steps < MIN_STEPS {
        return Err(Error::InvalidParameter(format!(
            "at least {MIN_STEPS} steps are required, got {steps}"
        )));
    }
    Ok(())
}

/// Constant and `P`-dependent parts of the backward system.
///
/// In `s = T - t`:
///
/// ```text
/// f_s = A2 f^2 + 2 A1 f + A0
/// g_s = A1 g + Gf f + A2 f g + G0
/// h_s = H0 + Gf g + V/2 f + A2/2 g^2
/// ```
#[derive(Debug, Clone, Copy)]
struct Coefficients {
    a2: f64,
    a1: f64,
    a0: f64,
    gf: f64,
    g0: f64,
    h0: f64,
    var: f64,
}

impl Coefficients {
    fn rhs(&self, [f, g, _]: [f64; 3]) -> [f64; 3] {
        [
            self.a2 * f * f + 2.0 * self.a1 * f + self.a0,
            self.a1 * g + self.gf * f + self.a2 * f * g + self.g0,
            self.h0 + self.gf * g + 0.5 * self.var * f + 0.5 * self.a2 * g * g,
        ]
    }
}

/// Builds the coefficients for a given filter variance. With `p = None`
/// the full-information system is returned.
struct SystemBuilder {
    u: f64,
    forms: RiskForms,
    cov: RiskForms,
    lambda: f64,
    beta: f64,
    r: f64,
    sigma_y2: f64,
}

impl SystemBuilder {
    fn new(model: &MarketModel, delta: f64, risk: &EffectiveRisk) -> Self {
        Self {
            u: 1.0 - delta,
            forms: risk.forms,
            cov: risk.cov_forms,
            lambda: model.lambda(),
            beta: model.beta(),
            r: model.r(),
            sigma_y2: model.sigma_y().powi(2),
        }
    }

    fn at(&self, p: Option<f64>) -> Coefficients {
        let c = &self.forms;
        let u = self.u;
        let (kk, ka, kb, var) = match p {
            None => (c.kk, c.ka, c.kb, self.sigma_y2),
            Some(p) => (
                c.kk + 2.0 * p * c.ka + p * p * c.aa,
                c.ka + p * c.aa,
                c.kb + p * c.ab,
                filter_q(&self.cov, p),
            ),
        };
        Coefficients {
            a2: u * kk + var,
            a1: u * ka + self.lambda,
            a0: u * c.aa,
            gf: u * kb + self.beta,
            g0: u * c.ab,
            h0: u * self.r + 0.5 * u * c.bb,
            var,
        }
    }
}

fn axpy(y: [f64; 3], a: f64, k: [f64; 3]) -> [f64; 3] {
    [y[0] + a * k[0], y[1] + a * k[1], y[2] + a * k[2]]
}

/// RK4 in `s` with coefficients supplied at `(s, s + h/2, s + h)` for each step.
fn integrate_backward(
    horizon: f64,
    steps: usize,
    coeffs: impl Fn(usize) -> [Coefficients; 3],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let h = horizon / steps as f64;
    let mut f = Vec::with_capacity(steps + 1);
    let mut g = Vec::with_capacity(steps + 1);
    let mut hh = Vec::with_capacity(steps + 1);
    let mut y = [0.0; 3];
    f.push(0.0);
    g.push(0.0);
    hh.push(0.0);
    for j in 0..steps {
        let [c0, cm, c1] = coeffs(j);
        let k1 = c0.rhs(y);
        let k2 = cm.rhs(axpy(y, 0.5 * h, k1));
        let k3 = cm.rhs(axpy(y, 0.5 * h, k2));
        let k4 = c1.rhs(axpy(y, h, k3));
        for m in 0..3 {
            y[m] += h / 6.0 * (k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m]);
        }
        let t = horizon - (j + 1) as f64 * h;
        if !y.iter().all(|v| v.is_finite()) || y[0].abs() > BLOW_UP {
            return Err(Error::RiccatiBlowUp { t, value: y[0].abs() });
        }
        f.push(y[0]);
        g.push(y[1]);
        hh.push(y[2]);
    }
    Ok((f, g, hh))
}

fn crra_delta(pref: &Preference) -> Result<f64> {
    match pref.utility {
        Utility::Crra { delta } => Ok(delta),
        Utility::Log => Err(Error::InvalidParameter(
            "logarithmic utility has closed-form coefficients, use log_closed_forms".into(),
        )),
    }
}

fn check_admissible(model: &MarketModel, delta: f64, risk: &EffectiveRisk) -> Result<()> {
    if discriminant_from_forms(&risk.forms, delta, model.lambda(), model.sigma_y()) <= 0.0 {
        return Err(Error::InadmissibleDelta(delta));
    }
    Ok(())
}

/// Full-information coefficients `(f^, g^, h^)` for CRRA utility.
pub fn solve_full_info(model: &MarketModel, pref: &Preference, horizon: f64, steps: usize) -> Result<OdeGrid> {
    let delta = crra_delta(pref)?;
    check_horizon(horizon, steps)?;
    let risk = effective_risk(model, pref)?;
    check_admissible(model, delta, &risk)?;
    let c = SystemBuilder::new(model, delta, &risk).at(None);
    let (f, g, h) = integrate_backward(horizon, steps, |_| [c; 3])?;
    Ok(OdeGrid::from_backward(horizon, f, g, h, SystemKind::FullInfo, pref))
}

/// Partial-information coefficients `(f-, g-, h-)` for CRRA utility.
///
/// `curve` must refine the `steps` grid by an even factor so that every RK4
/// stage reads `P` at a node.
pub fn solve_partial_info(
    model: &MarketModel,
    pref: &Preference,
    curve: &FilterVarianceCurve,
    steps: usize,
) -> Result<OdeGrid> {
    let delta = crra_delta(pref)?;
    let horizon = curve.horizon();
    check_horizon(horizon, steps)?;
    let stride = stride_between(2 * steps, curve.steps())?;
    let risk = effective_risk(model, pref)?;
    check_admissible(model, delta, &risk)?;
    let builder = SystemBuilder::new(model, delta, &risk);
    let top = curve.steps();
    let p = curve.p();
    let (f, g, h) = integrate_backward(horizon, steps, |j| {
        let base = top - 2 * j * stride;
        [
            builder.at(Some(p[base])),
            builder.at(Some(p[base - stride])),
            builder.at(Some(p[base - 2 * stride])),
        ]
    })?;
    Ok(OdeGrid::from_backward(horizon, f, g, h, SystemKind::PartialInfo, pref))
}

/// Node values of
/// `P / (1 - P f^) [kappa f^ + a]^T Theta^-1 [kappa f^ + a]`
/// on the grid of `full`. Its tail integral is the information integral
/// behind the partial-information constant term, the loss of utility and
/// the efficiency.
pub fn information_integrand(
    full: &OdeGrid,
    curve: &FilterVarianceCurve,
    model: &MarketModel,
    pref: &Preference,
) -> Result<Vec<f64>> {
    let stride = stride_between(full.steps(), curve.steps())?;
    let forms = effective_risk(model, pref)?.forms;
    let mut integrand = Vec::with_capacity(full.t.len());
    for (i, &f) in full.f.iter().enumerate() {
        let p = curve.p[i * stride];
        let barrier = 1.0 - p * f;
        if !(barrier > BARRIER_TOLERANCE) {
            return Err(Error::SingularTransform { t: full.t[i], value: barrier });
        }
        let quad = f * f * forms.kk + 2.0 * f * forms.ka + forms.aa;
        integrand.push(p / barrier * quad);
    }
    Ok(integrand)
}

/// Tail integrals `int_{t_i}^T` of [`information_integrand`].
pub fn information_integral(
    full: &OdeGrid,
    curve: &FilterVarianceCurve,
    model: &MarketModel,
    pref: &Preference,
) -> Result<Vec<f64>> {
    let integrand = information_integrand(full, curve, model, pref)?;
    Ok(tail_trapezoid(&integrand, full.step()))
}

/// Partial-information coefficients obtained algebraically from the
/// full-information ones.
pub fn partial_from_full(
    full: &OdeGrid,
    curve: &FilterVarianceCurve,
    model: &MarketModel,
    pref: &Preference,
) -> Result<OdeGrid> {
    let delta = crra_delta(pref)?;
    if (full.horizon() - curve.horizon()).abs() > GRID_SLACK {
        return Err(Error::GridMismatch("filter curve and grid have different horizons".into()));
    }
    let stride = stride_between(full.steps(), curve.steps())?;
    let tail = information_integral(full, curve, model, pref)?;
    let n = full.t.len();
    let (mut f, mut g, mut h) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let p = curve.p[i * stride];
        let d = 1.0 - p * full.f[i];
        f.push(full.f[i] / d);
        g.push(full.g[i] / d);
        h.push(
            full.h[i] - 0.5 * d.ln() + 0.5 * full.g[i] * full.g[i] * p / d
                - 0.5 * (1.0 - delta) * tail[i],
        );
    }
    Ok(OdeGrid {
        t: full.t.clone(),
        f,
        g,
        h,
        kind: SystemKind::PartialInfo,
        delta,
        epsilon: pref.epsilon,
    })
}

/// Which form of the partial-information constant for log utility to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HTildeVariant {
    /// `h + (A/2)(int_t^T P - P(t)(e^{2 lambda (T-t)} - 1)/2)`.
    Printed,
    /// `h + (A/2)(P(t)(e^{2 lambda (T-t)} - 1)/(2 lambda) - int_t^T P)`,
    /// which agrees with the filtered moment formulas.
    #[default]
    Consistent,
}

/// Closed-form coefficients for logarithmic utility.
///
/// With `A = a^T Theta^-1 a`, `B = a^T Theta^-1 (b - r)`,
/// `C = (b - r)^T Theta^-1 (b - r)` the expected log of the terminal
/// penalised cushion is `log c + f/2 y^2 + g y + h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogCoefficients {
    pub aa: f64,
    pub ab: f64,
    pub bb: f64,
    pub lambda: f64,
    pub beta: f64,
    pub r: f64,
    pub sigma_y: f64,
    pub horizon: f64,
}

pub fn log_closed_forms(model: &MarketModel, pref: &Preference, horizon: f64) -> Result<LogCoefficients> {
    if !pref.is_log() {
        return Err(Error::InvalidParameter("closed forms exist for logarithmic utility only".into()));
    }
    if model.lambda().abs() < LAMBDA_TOLERANCE {
        return Err(Error::LambdaZero);
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    let forms = effective_risk(model, pref)?.forms;
    Ok(LogCoefficients {
        aa: forms.aa,
        ab: forms.ab,
        bb: forms.bb,
        lambda: model.lambda(),
        beta: model.beta(),
        r: model.r(),
        sigma_y: model.sigma_y(),
        horizon,
    })
}

impl LogCoefficients {
    fn tau(&self, t: f64) -> f64 {
        self.horizon - t
    }

    pub fn f(&self, t: f64) -> f64 {
        let l = self.lambda;
        self.aa / (2.0 * l) * (2.0 * l * self.tau(t)).exp_m1()
    }

    pub fn g(&self, t: f64) -> f64 {
        let l = self.lambda;
        let e1 = (l * self.tau(t)).exp_m1();
        self.ab / l * e1 + self.beta * self.aa / (2.0 * l * l) * e1 * e1
    }

    /// Constant term, including the risk-free growth `r (T - t)`.
    pub fn h(&self, t: f64) -> f64 {
        let (l, b) = (self.lambda, self.beta);
        let tau = self.tau(t);
        let phi1 = (l * tau).exp_m1() / l;
        let phi2 = (2.0 * l * tau).exp_m1() / (2.0 * l);
        (self.r + 0.5 * self.bb) * tau
            + b * self.ab / l * (phi1 - tau)
            + b * b * self.aa / (2.0 * l * l) * (phi2 - 2.0 * phi1 + tau)
            + self.sigma_y.powi(2) * self.aa / (4.0 * l) * (phi2 - tau)
    }

    /// Partial-information constant term.
    pub fn h_tilde(&self, t: f64, curve: &FilterVarianceCurve, variant: HTildeVariant) -> Result<f64> {
        let int_p = curve.integral_from(t)?;
        let p = curve.p_at(t)?;
        let phi = (2.0 * self.lambda * self.tau(t)).exp_m1();
        let half_a = 0.5 * self.aa;
        Ok(match variant {
            HTildeVariant::Printed => self.h(t) + half_a * (int_p - p * phi / 2.0),
            HTildeVariant::Consistent => {
                self.h(t) + half_a * (p * phi / (2.0 * self.lambda) - int_p)
            }
        })
    }

    /// Full-information coefficients sampled on a uniform grid.
    pub fn full_grid(&self, steps: usize, pref: &Preference) -> OdeGrid {
        let t = uniform_grid(self.horizon, steps);
        OdeGrid {
            f: t.iter().map(|&s| self.f(s)).collect(),
            g: t.iter().map(|&s| self.g(s)).collect(),
            h: t.iter().map(|&s| self.h(s)).collect(),
            t,
            kind: SystemKind::LogFull,
            delta: 1.0,
            epsilon: pref.epsilon,
        }
    }

    /// Partial-information coefficients `(f, g, h~)` sampled on the curve's
    /// grid coarsened to `steps`.
    pub fn partial_grid(
        &self,
        steps: usize,
        pref: &Preference,
        curve: &FilterVarianceCurve,
        variant: HTildeVariant,
    ) -> Result<OdeGrid> {
        let t = uniform_grid(self.horizon, steps);
        let h = t
            .iter()
            .map(|&s| self.h_tilde(s, curve, variant))
            .collect::<Result<Vec<_>>>()?;
        Ok(OdeGrid {
            f: t.iter().map(|&s| self.f(s)).collect(),
            g: t.iter().map(|&s| self.g(s)).collect(),
            h,
            t,
            kind: SystemKind::LogPartial,
            delta: 1.0,
            epsilon: pref.epsilon,
        })
    }
}

/// Which process the integrated moments refer to.
#[derive(Debug, Clone, Copy)]
pub enum MomentMode<'a> {
    /// The factor `Y` itself, started at a known value.
    Latent,
    /// The filter `Gamma`, whose diffusion rate is `q(t)` from the curve.
    Filtered(&'a FilterVarianceCurve),
}

/// `(int_t^T E[X_s] ds, int_t^T E[X_s^2] ds)` for `X = Y` or `X = Gamma`
/// started at `x` at time `t`.
pub fn ou_moments(
    model: &MarketModel,
    t: f64,
    horizon: f64,
    x: f64,
    mode: MomentMode<'_>,
) -> Result<(f64, f64)> {
    let (l, b) = (model.lambda(), model.beta());
    if l.abs() < LAMBDA_TOLERANCE {
        return Err(Error::LambdaZero);
    }
    if !(t >= 0.0 && t <= horizon) {
        return Err(Error::OutOfGrid { t, horizon });
    }
    let tau = horizon - t;
    let phi1 = (l * tau).exp_m1() / l;
    let phi2 = (2.0 * l * tau).exp_m1() / (2.0 * l);
    let shift = x + b / l;
    let m1 = x * phi1 + b / l * (phi1 - tau);
    let noise = match mode {
        MomentMode::Latent => model.sigma_y().powi(2) / (2.0 * l) * (phi2 - tau),
        MomentMode::Filtered(curve) => {
            if (curve.horizon() - horizon).abs() > GRID_SLACK {
                return Err(Error::GridMismatch("filter curve covers a different horizon".into()));
            }
            let weights: Vec<f64> = curve
                .t
                .iter()
                .zip(&curve.q)
                .map(|(&u, &q)| q * (2.0 * l * (horizon - u)).exp_m1() / (2.0 * l))
                .collect();
            let h = horizon / curve.steps() as f64;
            let tails = tail_trapezoid(&weights, h);
            tail_at(horizon, &weights, &tails, t)?
        }
    };
    let m2 = shift * shift * phi2 - 2.0 * b / l * shift * phi1 + b * b / (l * l) * tau + noise;
    Ok((m1, m2))
}

/// Everything the policy, simulator and analysis modules need for one
/// preference: risk matrices, filter variance and value-function grids.
#[derive(Debug, Clone)]
pub struct Solution {
    pub model: MarketModel,
    pub pref: Preference,
    pub risk: EffectiveRisk,
    pub horizon: f64,
    pub steps: usize,
    /// Filter variance on a grid with `2 * steps` intervals.
    pub curve: FilterVarianceCurve,
    pub full: OdeGrid,
    pub partial: OdeGrid,
    /// Tail information integral on the `steps` grid. For log utility the
    /// integrand reduces to `a^T Theta^-1 a P`.
    pub info_tail: Vec<f64>,
    pub info_integrand: Vec<f64>,
    pub log: Option<LogCoefficients>,
}

impl Solution {
    pub fn solve(model: &MarketModel, pref: &Preference, horizon: f64, steps: usize) -> Result<Self> {
        let risk = effective_risk(model, pref)?;
        let curve = solve_filter_variance(model, horizon, 2 * steps)?;
        let (full, partial, info_integrand, log) = match pref.utility {
            Utility::Crra { .. } => {
                let full = solve_full_info(model, pref, horizon, steps)?;
                let partial = solve_partial_info(model, pref, &curve, steps)?;
                let integrand = information_integrand(&full, &curve, model, pref)?;
                (full, partial, integrand, None)
            }
            Utility::Log => {
                let log = log_closed_forms(model, pref, horizon)?;
                let full = log.full_grid(steps, pref);
                let partial = log.partial_grid(steps, pref, &curve, HTildeVariant::Consistent)?;
                let stride = curve.steps() / steps;
                let integrand: Vec<f64> = (0..=steps)
                    .map(|i| log.aa * curve.p[i * stride])
                    .collect();
                (full, partial, integrand, Some(log))
            }
        };
        let info_tail = tail_trapezoid(&info_integrand, horizon / steps as f64);
        Ok(Self {
            model: model.clone(),
            pref: *pref,
            risk,
            horizon,
            steps,
            curve,
            full,
            partial,
            info_tail,
            info_integrand,
            log,
        })
    }

    /// Information integral `int_t^T ...` at any `t` on `[0, T]`.
    pub fn info_integral_from(&self, t: f64) -> Result<f64> {
        tail_at(self.horizon, &self.info_integrand, &self.info_tail, t)
    }
}
