//! Value functions, loss of utility, efficiency, admissibility reports and
//! sample statistics.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{InfoMode, Utility};
use crate::riccati::{HTildeVariant, Solution};

/// Form of the logarithmic value function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogValueForm {
    /// `log c + f/2 x^2 + g x + h`, with `h` already carrying `r (T - t)`.
    #[default]
    Consistent,
    /// `log c + r (T - t) + f y^2 + g y + h` (full information) and
    /// `log c + r (T - t) + f/2 gamma^2 + g gamma + h~` (partial information).
    Printed,
}

/// Utility of a terminal penalised cushion.
pub fn utility(u: Utility, c: f64) -> f64 {
    match u {
        Utility::Crra { delta } => c.powf(1.0 - delta) / (1.0 - delta),
        Utility::Log => c.ln(),
    }
}

pub fn value_function(t: f64, c: f64, state: f64, sol: &Solution, mode: InfoMode) -> Result<f64> {
    value_function_with(t, c, state, sol, mode, LogValueForm::Consistent)
}

pub fn value_function_with(
    t: f64,
    c: f64,
    state: f64,
    sol: &Solution,
    mode: InfoMode,
    form: LogValueForm,
) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::NonPositiveCushion(c));
    }
    match (sol.pref.utility, sol.log) {
        (Utility::Log, Some(log)) => {
            if !(t >= 0.0 && t <= sol.horizon) {
                return Err(Error::OutOfGrid { t, horizon: sol.horizon });
            }
            let (f, g) = (log.f(t), log.g(t));
            let tau = sol.horizon - t;
            let x = state;
            Ok(match (mode, form) {
                (InfoMode::Full, LogValueForm::Consistent) => c.ln() + 0.5 * f * x * x + g * x + log.h(t),
                (InfoMode::Full, LogValueForm::Printed) => c.ln() + log.r * tau + f * x * x + g * x + log.h(t),
                (InfoMode::Partial, LogValueForm::Consistent) => {
                    c.ln() + 0.5 * f * x * x + g * x + log.h_tilde(t, &sol.curve, HTildeVariant::Consistent)?
                }
                (InfoMode::Partial, LogValueForm::Printed) => {
                    c.ln() + log.r * tau + 0.5 * f * x * x + g * x
                        + log.h_tilde(t, &sol.curve, HTildeVariant::Printed)?
                }
            })
        }
        (Utility::Crra { delta }, _) => {
            let grid = match mode {
                InfoMode::Full => &sol.full,
                InfoMode::Partial => &sol.partial,
            };
            let (f, g, h) = grid.at(t)?;
            Ok(c.powf(1.0 - delta) / (1.0 - delta) * (0.5 * f * state * state + g * state + h).exp())
        }
        (Utility::Log, None) => Err(Error::InvalidParameter("log solution without closed forms".into())),
    }
}

/// Expected utility gap between a fully and a partially informed insurer
/// at time `t`, cushion `c` and filter estimate `gamma`.
pub fn loss_of_utility(t: f64, c: f64, gamma: f64, sol: &Solution) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::NonPositiveCushion(c));
    }
    match sol.pref.utility {
        Utility::Log => {
            let log = sol.log.ok_or_else(|| Error::InvalidParameter("missing closed forms".into()))?;
            Ok(0.5 * log.aa * sol.curve.integral_from(t)?)
        }
        Utility::Crra { delta } => {
            let u = 1.0 - delta;
            let info = sol.info_integral_from(t)?;
            let (f, g, h) = sol.partial.at(t)?;
            Ok(c.powf(u) / u * (0.5 * u * info).exp_m1() * (0.5 * f * gamma * gamma + g * gamma + h).exp())
        }
    }
}

/// Fraction of the initial cushion that leaves the fully informed insurer
/// indifferent to the partially informed outcome.
pub fn efficiency(sol: &Solution) -> Result<f64> {
    match sol.pref.utility {
        Utility::Log => {
            let log = sol.log.ok_or_else(|| Error::InvalidParameter("missing closed forms".into()))?;
            Ok((-0.5 * log.aa * sol.curve.integral_from(0.0)?).exp())
        }
        Utility::Crra { .. } => Ok((-0.5 * sol.info_integral_from(0.0)?).exp()),
    }
}

/// Free constants of the sufficient conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmissibilityParams {
    pub alpha: f64,
    pub d: f64,
    pub q: f64,
}

impl Default for AdmissibilityParams {
    fn default() -> Self {
        Self { alpha: 0.1, d: 1.1, q: 1.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityConstants {
    pub a_m: f64,
    pub b_m: f64,
    pub w: f64,
    pub w_tilde: f64,
    pub c1: f64,
    pub c2: f64,
    pub c1_tilde: f64,
    /// `sigma_Y^2 / (-2 lambda)`; infinite when `lambda >= 0`.
    pub stationary_variance: f64,
    pub var_y_t: f64,
    /// `max{P0, Var[Y_T]}`.
    pub var_y_max: f64,
}

/// One inequality `value > 0`. `value` is `None` when the regime makes the
/// check pass automatically.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: Option<f64>,
    pub passed: bool,
}

impl Check {
    fn positive(name: &'static str, value: f64) -> Self {
        Self { name, value: Some(value), passed: value > 0.0 }
    }

    fn automatic(name: &'static str) -> Self {
        Self { name, value: None, passed: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub delta: f64,
    pub epsilon: f64,
    pub params: AdmissibilityParams,
    pub in_admissible_set: bool,
    pub constants: AdmissibilityConstants,
    pub full_info: Vec<Check>,
    pub partial_info: Vec<Check>,
    pub full_overall: bool,
    pub partial_overall: bool,
    pub notes: Vec<String>,
}

fn max_abs<'a>(v: impl IntoIterator<Item = &'a f64>) -> f64 {
    v.into_iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn sup(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Evaluates the sufficient uniform-integrability and admissibility
/// conditions for CRRA utility.
pub fn admissibility_report(sol: &Solution, params: AdmissibilityParams) -> Result<AdmissibilityReport> {
    let delta = match sol.pref.utility {
        Utility::Crra { delta } => delta,
        Utility::Log => {
            return Err(Error::InvalidParameter(
                "admissibility conditions are stated for CRRA utility".into(),
            ))
        }
    };
    let AdmissibilityParams { alpha, d, q } = params;
    if !(alpha > 0.0 && d > 1.0 && q > 1.0) {
        return Err(Error::InvalidParameter("need alpha > 0, d > 1 and q > 1".into()));
    }
    let m = &sol.model;
    let tr = m.transformed();
    let inv = &sol.risk.theta_hat_inv;
    let kappa = &tr.cross;
    let excess = m.excess_intercept();

    let a_m = max_abs(m.a().iter());
    let b_m = max_abs(excess.iter());
    let w = max_abs(tr.cov_s.iter());
    let w_tilde = max_abs(sol.risk.theta_hat.iter());
    let sup_f = sup(sol.full.f());
    let sup_g = sup(sol.full.g());
    let c1 = max_abs((inv * (m.a() + kappa * sup_f)).iter());
    let c2 = max_abs((inv * (&excess + kappa * sup_g)).iter());

    let stride = sol.curve.steps() / sol.partial.steps();
    let pf: Vec<f64> = sol
        .partial
        .f()
        .iter()
        .enumerate()
        .map(|(i, f)| sol.curve.p()[i * stride] * f)
        .collect();
    let sup_fbar = sup(sol.partial.f());
    let s_inv = tr
        .sigma_tilde_s
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("Sigma~_S is singular".into()))?;
    let inner: DVector<f64> = m.a() * sup(&pf) + kappa * sup_fbar;
    let c1_tilde = max_abs((inv * (m.a() + &tr.sigma_tilde_s * s_inv.transpose() * inner)).iter());

    let (l, s2, p0, big_t) = (m.lambda(), m.sigma_y().powi(2), m.p0(), sol.horizon);
    let stationary_variance = if l < 0.0 { s2 / (-2.0 * l) } else { f64::INFINITY };
    let var_y_t = if l.abs() < 1e-12 {
        p0 + s2 * big_t
    } else {
        p0 * (2.0 * l * big_t).exp() + s2 * (2.0 * l * big_t).exp_m1() / (2.0 * l)
    };
    let var_y_max = p0.max(var_y_t);

    let u = 1.0 - delta;
    let n = m.n() as f64;
    let scale = 8.0 * d * u * (1.0 + alpha) * n * big_t;
    let bracket = |c: f64| {
        if delta < 1.0 {
            (1.0f64).max(d * u * (1.0 + alpha) * w) * c * c + a_m * a_m
        } else {
            (-(1.0 + w)).min(d * u * (1.0 + alpha) * w_tilde) * c * c - a_m * a_m
        }
    };
    let f0 = sol.full.f()[0];
    let p_0 = sol.curve.p()[0];

    let full_info = vec![
        if delta > 1.0 {
            Check::automatic("uniform_integrability")
        } else {
            Check::positive("uniform_integrability", 1.0 - q * (1.0 + alpha) * f0 * var_y_max)
        },
        Check::positive("admissibility", 1.0 - scale * bracket(c1) * var_y_max),
    ];
    let partial_info = vec![
        if delta > 1.0 {
            Check::automatic("uniform_integrability")
        } else {
            Check::positive(
                "uniform_integrability",
                1.0 - q * (1.0 + alpha) * f0 / (1.0 - p_0 * f0) * var_y_max,
            )
        },
        Check::positive("admissibility", 1.0 - scale * bracket(c1_tilde) * var_y_max),
    ];
    let in_set = crate::model::is_admissible_delta(m, delta, sol.pref.epsilon);
    let full_overall = in_set && full_info.iter().all(|c| c.passed);
    let partial_overall = in_set && partial_info.iter().all(|c| c.passed);
    Ok(AdmissibilityReport {
        delta,
        epsilon: sol.pref.epsilon,
        params,
        in_admissible_set: in_set,
        constants: AdmissibilityConstants {
            a_m,
            b_m,
            w,
            w_tilde,
            c1,
            c2,
            c1_tilde,
            stationary_variance,
            var_y_t,
            var_y_max,
        },
        full_info,
        partial_info,
        full_overall,
        partial_overall,
        notes: vec![
            "Var[Y_t] = P0 e^{2 lambda t} + sigma_Y^2 (e^{2 lambda t} - 1) / (2 lambda), i.e. V_inf = sigma_Y^2 / (-2 lambda)".into(),
        ],
    })
}

/// Mean, unbiased variance and 5/50/90 % quantiles of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStats {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub q05: f64,
    pub q50: f64,
    pub q90: f64,
}

impl SummaryStats {
    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        (self.variance / self.count as f64).sqrt()
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Quantile of sorted data by linear interpolation between order
/// statistics at position `(n - 1) p`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean and standard error of the mean.
pub fn mean_and_se(samples: &[f64]) -> Result<(f64, f64)> {
    let s = moments(samples)?;
    Ok((s.0, (s.1 / samples.len() as f64).sqrt()))
}

fn moments(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = samples.len() as f64;
    let mean = compensated_sum(samples.iter().copied()) / n;
    let variance = if samples.len() < 2 {
        0.0
    } else {
        compensated_sum(samples.iter().map(|x| (x - mean) * (x - mean))) / (n - 1.0)
    };
    Ok((mean, variance))
}

pub fn summary_stats(samples: &[f64]) -> Result<SummaryStats> {
    let (mean, variance) = moments(samples)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(SummaryStats {
        count: samples.len(),
        mean,
        variance,
        q05: quantile_sorted(&sorted, 0.05),
        q50: quantile_sorted(&sorted, 0.50),
        q90: quantile_sorted(&sorted, 0.90),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MarketModel, Preference};
    use crate::presets::{self, HORIZON};
    use crate::riccati::{solve_filter_variance, FilterVarianceCurve};
    use approx::assert_relative_eq;
    use rand::{Rng as _, SeedableRng};

    fn solve(delta: f64, eps: f64) -> Solution {
        Solution::solve(
            &presets::reference_market(),
            &Preference::from_delta(delta, eps).unwrap(),
            HORIZON,
            1000,
        )
        .unwrap()
    }

    fn blind() -> MarketModel {
        let mut p = presets::reference_params();
        p.a = vec![0.0; 4];
        for i in 0..4 {
            p.correlation[i][4] = 0.0;
            p.correlation[4][i] = 0.0;
        }
        MarketModel::new(p).unwrap()
    }

    fn without_uncertainty(mut sol: Solution) -> Solution {
        let zero: FilterVarianceCurve = sol.curve.zero_like(&sol.model);
        sol.curve = zero;
        sol.info_tail.iter_mut().for_each(|v| *v = 0.0);
        sol.info_integrand.iter_mut().for_each(|v| *v = 0.0);
        sol
    }

    #[test]
    fn terminal_values() {
        for delta in [0.7, 3.0] {
            let sol = solve(delta, 1.0);
            for mode in [InfoMode::Full, InfoMode::Partial] {
                let v = value_function(HORIZON, 2.0, 1.3, &sol, mode).unwrap();
                assert_relative_eq!(v, 2f64.powf(1.0 - delta) / (1.0 - delta), epsilon = 1e-15);
            }
        }
        let sol = solve(1.0, 1.0);
        for mode in [InfoMode::Full, InfoMode::Partial] {
            assert_relative_eq!(value_function(HORIZON, 2.0, 0.4, &sol, mode).unwrap(), 2f64.ln(), epsilon = 1e-15);
        }
        assert_eq!(
            value_function(0.0, 0.0, 1.0, &sol, InfoMode::Full),
            Err(Error::NonPositiveCushion(0.0))
        );
    }

    #[test]
    fn zero_loading_value() {
        let m = blind();
        let pref = Preference::crra(3.0, 1.0).unwrap();
        let sol = Solution::solve(&m, &pref, HORIZON, 200).unwrap();
        let (_, _, h) = sol.full.at(0.0).unwrap();
        let v = value_function(0.0, 1.5, 0.7, &sol, InfoMode::Full).unwrap();
        assert_relative_eq!(v, 1.5f64.powf(-2.0) / -2.0 * h.exp(), epsilon = 1e-15);
    }

    #[test]
    fn printed_log_form_differs_by_rate_and_quadratic_term() {
        let sol = solve(1.0, 1.0);
        let log = sol.log.unwrap();
        let (t, y) = (1.0, 0.9);
        let a = value_function_with(t, 1.0, y, &sol, InfoMode::Full, LogValueForm::Printed).unwrap();
        let b = value_function_with(t, 1.0, y, &sol, InfoMode::Full, LogValueForm::Consistent).unwrap();
        assert_relative_eq!(a - b, log.r * (HORIZON - t) + 0.5 * log.f(t) * y * y, epsilon = 1e-14);
    }

    #[test]
    fn loss_vanishes_without_uncertainty() {
        for delta in [0.7, 1.0, 3.0] {
            let sol = without_uncertainty(solve(delta, 1.0));
            assert_eq!(loss_of_utility(0.0, 1.0, 1.0, &sol).unwrap(), 0.0);
            assert_eq!(efficiency(&sol).unwrap(), 1.0);
        }
    }

    #[test]
    fn loss_properties() {
        for delta in [0.7, 1.0, 3.0] {
            let sol = solve(delta, 1.0);
            assert_eq!(loss_of_utility(HORIZON, 1.0, 1.0, &sol).unwrap(), 0.0);
            for t in [0.0, 1.0, 2.5, 4.0] {
                for g in [-1.0, 0.0, 1.0, 2.0] {
                    assert!(loss_of_utility(t, 0.7, g, &sol).unwrap() > 0.0);
                }
            }
            let z = efficiency(&sol).unwrap();
            assert!(z > 0.0 && z < 1.0);
        }
    }

    #[test]
    fn log_loss_equals_expected_gap() {
        let sol = solve(1.0, 1.0);
        let p0 = sol.curve.p()[0];
        let gamma = sol.model.gamma0();
        let full = |y: f64| value_function(0.0, 1.0, y, &sol, InfoMode::Full).unwrap();
        // the full value is quadratic in y, so three-point Gauss-Hermite is exact
        let s = p0.sqrt() * 3f64.sqrt();
        let expected_full = (full(gamma - s) + 4.0 * full(gamma) + full(gamma + s)) / 6.0;
        let partial = value_function(0.0, 1.0, gamma, &sol, InfoMode::Partial).unwrap();
        let loss = loss_of_utility(0.0, 1.0, gamma, &sol).unwrap();
        assert_relative_eq!(expected_full - partial, loss, epsilon = 1e-10);
        let log = sol.log.unwrap();
        assert_relative_eq!(loss, 0.5 * log.aa * sol.curve.integral_from(0.0).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn crra_loss_equals_expected_gap() {
        for delta in [0.7, 3.0] {
            let sol = solve(delta, 1.0);
            let (p, gamma, c) = (sol.curve.p()[0], 1.0, 1.0);
            let (f, g, h) = sol.full.at(0.0).unwrap();
            let u = 1.0 - delta;
            let d = 1.0 - p * f;
            // Gaussian expectation of the full-information value over Y ~ N(gamma, P)
            let e = (h + 0.5 * g * g * p / d + g * gamma / d + 0.5 * f * gamma * gamma / d).exp() / d.sqrt();
            let gap = c / u * e - value_function(0.0, c, gamma, &sol, InfoMode::Partial).unwrap();
            let loss = loss_of_utility(0.0, c, gamma, &sol).unwrap();
            assert_relative_eq!(gap, loss, max_relative = 1e-5);
        }
    }

    #[test]
    fn efficiency_monotone() {
        let mut last_by_delta: Option<Vec<f64>> = None;
        for delta in [0.7, 1.0, 3.0] {
            let zs: Vec<f64> = [0.0, 0.5, 1.0, 2.0]
                .iter()
                .map(|&e| efficiency(&solve(delta, e)).unwrap())
                .collect();
            assert!(zs.windows(2).all(|w| w[1] > w[0]), "{zs:?}");
            if let Some(prev) = &last_by_delta {
                assert!(prev.iter().zip(&zs).all(|(a, b)| b > a));
            }
            last_by_delta = Some(zs);
        }
    }

    #[test]
    fn admissibility_branches() {
        let sol = solve(3.0, 1.0);
        let rep = admissibility_report(&sol, AdmissibilityParams::default()).unwrap();
        assert_eq!(rep.full_info[0].value, None);
        assert!(rep.full_info[0].passed);

        let sol = solve(0.7, 1.0);
        let rep = admissibility_report(&sol, AdmissibilityParams::default()).unwrap();
        let c = &rep.constants;
        let (alpha, d, q) = (0.1, 1.1, 1.1);
        let f0 = sol.full.f()[0];
        let ui = 1.0 - q * (1.0 + alpha) * f0 * c.var_y_max;
        assert_relative_eq!(rep.full_info[0].value.unwrap(), ui, epsilon = 1e-15);
        let lhs = 1.0
            - 8.0 * d * 0.3 * (1.0 + alpha) * 4.0 * HORIZON
                * ((1.0f64).max(d * 0.3 * (1.0 + alpha) * c.w) * c.c1 * c.c1 + c.a_m * c.a_m)
                * c.var_y_max;
        assert_relative_eq!(rep.full_info[1].value.unwrap(), lhs, epsilon = 1e-15);
        assert_eq!(c.a_m, 0.08);
        assert_relative_eq!(c.stationary_variance, 0.0025, epsilon = 1e-15);
        assert!(c.var_y_max >= 0.0025);
    }

    #[test]
    fn admissibility_without_factor() {
        let mut p = presets::reference_params();
        p.a = vec![0.0; 4];
        for i in 0..4 {
            p.correlation[i][4] = 0.0;
            p.correlation[4][i] = 0.0;
        }
        let m = MarketModel::new(p).unwrap();
        let sol = Solution::solve(&m, &Preference::crra(0.7, 1.0).unwrap(), HORIZON, 200).unwrap();
        let rep = admissibility_report(&sol, AdmissibilityParams::default()).unwrap();
        assert_eq!(rep.constants.c1, 0.0);
        assert_eq!(rep.constants.c1_tilde, 0.0);
        for c in rep.full_info.iter().chain(&rep.partial_info) {
            assert_eq!(c.value, Some(1.0));
        }
    }

    #[test]
    fn stats_examples() {
        let s = summary_stats(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!((s.mean, s.variance, s.q05, s.q50, s.q90), (1.0, 0.0, 1.0, 1.0, 1.0));
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(summary_stats(&v).unwrap().q50, 50.5);
        assert_eq!(summary_stats(&[]), Err(Error::EmptySample));
    }

    #[test]
    fn uniform_quantile() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let v: Vec<f64> = (0..1_000_000).map(|_| rng.random::<f64>()).collect();
        let s = summary_stats(&v).unwrap();
        assert!((s.q05 - 0.05).abs() < 0.003);
    }

    #[test]
    fn compensated_sum_is_accurate() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn log_identity_against_quadrature() {
        let m = presets::reference_market();
        let curve = solve_filter_variance(&m, HORIZON, 4000).unwrap();
        let sol = solve(1.0, 0.0);
        let a = sol.log.unwrap().aa;
        let direct: f64 = curve.p().windows(2).map(|w| 0.5 * (w[0] + w[1]) * HORIZON / 4000.0).sum();
        assert_relative_eq!(loss_of_utility(0.0, 1.0, 1.0, &sol).unwrap(), 0.5 * a * direct, max_relative = 1e-7);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn quantiles_ordered(v in prop::collection::vec(-1e6f64..1e6, 1..300)) {
                let s = summary_stats(&v).unwrap();
                prop_assert!(s.q05 <= s.q50 && s.q50 <= s.q90);
                prop_assert!(s.variance >= 0.0);
            }

            #[test]
            fn stats_ignore_order(mut v in prop::collection::vec(-10f64..10.0, 2..200), seed in any::<u64>()) {
                let a = summary_stats(&v).unwrap();
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                for i in (1..v.len()).rev() {
                    let j = rng.random_range(0..=i);
                    v.swap(i, j);
                }
                let b = summary_stats(&v).unwrap();
                prop_assert_eq!(a.q05, b.q05);
                prop_assert_eq!(a.q90, b.q90);
                prop_assert!((a.mean - b.mean).abs() <= 1e-15 * a.mean.abs().max(1.0));
            }
        }
    }
}
