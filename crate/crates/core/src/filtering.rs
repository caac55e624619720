//! Discretised Kalman-Bucy filter for the latent factor.
//!
//! Observations are log-price increments. With `P~(t)` from the variance
//! curve the conditional mean moves as
//!
//! ```text
//! Gamma' = Gamma + (lambda Gamma + beta) dt
//!        + P~(t) (Sigma~_S Sigma~_S^T)^{-1} [dlog S - (a Gamma + b - sigma^2/2) dt]
//! ```
//!
//! which is the Euler step of `dGamma = (lambda Gamma + beta) dt + P~ (Sigma~_S^T)^{-1} dI`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::MarketModel;
use crate::riccati::FilterVarianceCurve;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    pub t: f64,
    pub gamma: f64,
}

pub fn filter_init(model: &MarketModel) -> FilterState {
    FilterState {
        t: 0.0,
        gamma: model.gamma0(),
    }
}

/// Observation drift at `gamma`, per unit time: `a gamma + b - sigma^2 / 2`.
fn predicted_log_drift(model: &MarketModel, gamma: f64, i: usize) -> f64 {
    let s = model.sigma()[i];
    model.a()[i] * gamma + model.b()[i] - 0.5 * s * s
}

/// Gain row `P~(t) (Sigma~_S Sigma~_S^T)^{-1}`.
pub fn gain(model: &MarketModel, curve: &FilterVarianceCurve, t: f64) -> Result<DVector<f64>> {
    let pbar = curve.pbar_at(t)?;
    Ok(model.transformed().cov_s_inv.tr_mul(&pbar))
}

/// One filter step over `[t, t + dt]`.
pub fn filter_step(
    state: FilterState,
    log_returns: &[f64],
    dt: f64,
    model: &MarketModel,
    curve: &FilterVarianceCurve,
) -> Result<FilterState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if log_returns.len() != model.n() {
        return Err(Error::WrongShape(format!(
            "{} log returns for {} assets",
            log_returns.len(),
            model.n()
        )));
    }
    let k = gain(model, curve, state.t)?;
    Ok(FilterState {
        t: state.t + dt,
        gamma: advance(state.gamma, log_returns, dt, model, k.as_slice(), 0)?,
    })
}

fn advance(gamma: f64, dlog: &[f64], dt: f64, model: &MarketModel, k: &[f64], step: usize) -> Result<f64> {
    if !dlog.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFiniteObservation(step));
    }
    Ok(advance_with_gain(gamma, dlog, dt, model, k))
}

/// Filter gains precomputed on a uniform simulation grid.
#[derive(Debug, Clone)]
pub struct GainTable {
    dt: f64,
    n: usize,
    /// Row `k` holds the gain at `t_k = k dt`, flattened.
    gains: Vec<f64>,
}

impl GainTable {
    pub fn new(model: &MarketModel, curve: &FilterVarianceCurve, dt: f64, steps: usize) -> Result<Self> {
        let n = model.n();
        let mut gains = Vec::with_capacity(steps * n);
        for k in 0..steps {
            let t = (k as f64 * dt).min(curve.horizon());
            gains.extend_from_slice(gain(model, curve, t)?.as_slice());
        }
        Ok(Self { dt, n, gains })
    }

    pub fn steps(&self) -> usize {
        self.gains.len() / self.n.max(1)
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.gains[k * self.n..(k + 1) * self.n]
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

/// Runs the filter along a path of log-return increments (one `n`-vector per
/// step, flattened row by row) on a uniform grid with step `dt`.
///
/// Returns `Gamma` at every node, starting with `Gamma_0`.
pub fn filter_run(
    log_returns: &[f64],
    dt: f64,
    model: &MarketModel,
    curve: &FilterVarianceCurve,
) -> Result<Vec<f64>> {
    let n = model.n();
    if !log_returns.len().is_multiple_of(n) {
        return Err(Error::WrongShape(format!(
            "{} values do not split into rows of {n}",
            log_returns.len()
        )));
    }
    let steps = log_returns.len() / n;
    let mut out = Vec::with_capacity(steps + 1);
    let mut gamma = model.gamma0();
    out.push(gamma);
    if steps == 0 {
        return Ok(out);
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let table = GainTable::new(model, curve, dt, steps)?;
    for (k, row) in log_returns.chunks_exact(n).enumerate() {
        gamma = advance(gamma, row, dt, model, table.row(k), k)?;
        out.push(gamma);
    }
    Ok(out)
}

pub(crate) fn advance_with_gain(gamma: f64, dlog: &[f64], dt: f64, model: &MarketModel, k: &[f64]) -> f64 {
    let mut correction = 0.0;
    for (i, &x) in dlog.iter().enumerate() {
        correction += k[i] * (x - predicted_log_drift(model, gamma, i) * dt);
    }
    gamma + (model.lambda() * gamma + model.beta()) * dt + correction
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MarketParams;
    use crate::presets::{self, HORIZON};
    use crate::riccati::solve_filter_variance;
    use approx::assert_relative_eq;

    fn blind_model() -> MarketModel {
        let mut p: MarketParams = presets::reference_params();
        p.a = vec![0.0; 4];
        for i in 0..4 {
            p.correlation[i][4] = 0.0;
            p.correlation[4][i] = 0.0;
        }
        MarketModel::new(p).unwrap()
    }

    #[test]
    fn init_uses_prior_mean() {
        let m = presets::reference_market();
        assert_eq!(filter_init(&m), FilterState { t: 0.0, gamma: 1.0 });
        let mut p = presets::reference_params();
        p.gamma0 = 0.0;
        assert_eq!(filter_init(&MarketModel::new(p).unwrap()).gamma, 0.0);
    }

    #[test]
    fn zero_innovation_step_is_drift_only() {
        let m = presets::reference_market();
        let curve = solve_filter_variance(&m, HORIZON, 400).unwrap();
        let dt = 1.0 / 250.0;
        let s = FilterState { t: 0.3, gamma: 0.8 };
        let obs: Vec<f64> = (0..4).map(|i| predicted_log_drift(&m, s.gamma, i) * dt).collect();
        let next = filter_step(s, &obs, dt, &m, &curve).unwrap();
        assert_relative_eq!(next.gamma, 0.8 + (-0.5 * 0.8 + 0.5) * dt, epsilon = 1e-15);
        assert_relative_eq!(next.t, 0.3 + dt);
    }

    #[test]
    fn blind_filter_ignores_observations() {
        let m = blind_model();
        let curve = solve_filter_variance(&m, HORIZON, 400).unwrap();
        let dt = 0.01;
        let a: Vec<f64> = (0..400).map(|i| ((i * 7 % 13) as f64 - 6.0) * 0.01).collect();
        let b: Vec<f64> = (0..400).map(|i| ((i * 3 % 11) as f64 - 5.0) * 0.02).collect();
        let ga = filter_run(&a, dt, &m, &curve).unwrap();
        let gb = filter_run(&b, dt, &m, &curve).unwrap();
        assert_eq!(ga, gb);
        let mut g = m.gamma0();
        for k in 0..100 {
            assert_eq!(ga[k], g);
            g += (m.lambda() * g + m.beta()) * dt;
        }
    }

    #[test]
    fn empty_path() {
        let m = presets::reference_market();
        let curve = solve_filter_variance(&m, HORIZON, 400).unwrap();
        assert_eq!(filter_run(&[], 0.01, &m, &curve).unwrap(), vec![1.0]);
    }

    #[test]
    fn non_finite_observation() {
        let m = presets::reference_market();
        let curve = solve_filter_variance(&m, HORIZON, 400).unwrap();
        let mut path = vec![0.0; 40];
        path[21] = f64::NAN;
        assert_eq!(filter_run(&path, 0.01, &m, &curve), Err(Error::NonFiniteObservation(5)));
    }

    #[test]
    fn constant_prices_pull_gamma_down() {
        // zero returns look like a low factor, so Gamma drops below its
        // unconditional drift path
        let m = presets::reference_market();
        let curve = solve_filter_variance(&m, HORIZON, 1000).unwrap();
        let dt = 1.0 / 250.0;
        let flat = filter_run(&vec![0.0; 4 * 1250], dt, &m, &curve).unwrap();
        let mut drift_only = m.gamma0();
        for k in 0..1250 {
            drift_only += (m.lambda() * drift_only + m.beta()) * dt;
            assert!(flat[k + 1] < drift_only);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn filter_is_affine(
                x in prop::collection::vec(-0.05f64..0.05, 4 * 50),
                y in prop::collection::vec(-0.05f64..0.05, 4 * 50),
                w in 0.0f64..1.0,
            ) {
                let m = presets::reference_market();
                let curve = solve_filter_variance(&m, 1.0, 200).unwrap();
                let dt = 0.02;
                let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| w * a + (1.0 - w) * b).collect();
                let gx = filter_run(&x, dt, &m, &curve).unwrap();
                let gy = filter_run(&y, dt, &m, &curve).unwrap();
                let gm = filter_run(&mix, dt, &m, &curve).unwrap();
                for k in 0..gm.len() {
                    prop_assert!((gm[k] - (w * gx[k] + (1.0 - w) * gy[k])).abs() < 1e-12);
                }
            }
        }
    }
}
