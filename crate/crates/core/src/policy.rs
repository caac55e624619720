//! Optimal feedback controls, the multiplier/weights representation and the
//! two-asset demand decomposition.
//!
//! The control `theta = m pi` is the exposure of the cushion to each asset.
//! Under both information regimes it is affine in the observed state
//! (`y` or `gamma`): `theta(t, x) = c0(t) + c1(t) x`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::InfoMode;
use crate::riccati::Solution;

pub const MULTIPLIER_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ControlVector {
    pub theta: DVector<f64>,
    pub t: f64,
    /// `y` under full information, `gamma` under partial information.
    pub state: f64,
}

/// Intercept and slope of the optimal control at time `t`.
pub fn affine_coefficients(sol: &Solution, mode: InfoMode, t: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    let model = &sol.model;
    let excess = model.excess_intercept();
    if sol.pref.is_log() {
        if !(t >= 0.0 && t <= sol.horizon) {
            return Err(Error::OutOfGrid { t, horizon: sol.horizon });
        }
        let inv = &sol.risk.theta_log_inv;
        return Ok((inv * excess, inv * model.a()));
    }
    let inv = &sol.risk.theta_hat_inv;
    let inv_a = inv * model.a();
    let inv_b = inv * excess;
    let inv_k = inv * &model.transformed().cross;
    match mode {
        InfoMode::Full => {
            let (f, g, _) = sol.full.at(t)?;
            Ok((inv_b + &inv_k * g, inv_a + inv_k * f))
        }
        InfoMode::Partial => {
            let (f, g, _) = sol.partial.at(t)?;
            let p = sol.curve.p_at(t)?;
            // Theta^-1 Pbar^T = Theta^-1 kappa + P Theta^-1 a
            let inv_pbar = &inv_k + &inv_a * p;
            Ok((inv_b + &inv_pbar * g, inv_a + inv_pbar * f))
        }
    }
}

fn evaluate(sol: &Solution, mode: InfoMode, t: f64, x: f64) -> Result<ControlVector> {
    if !x.is_finite() {
        return Err(Error::InvalidParameter(format!("state must be finite, got {x}")));
    }
    let (c0, c1) = affine_coefficients(sol, mode, t)?;
    Ok(ControlVector {
        theta: c0 + c1 * x,
        t,
        state: x,
    })
}

/// Optimal control when the factor value `y` is observed.
pub fn theta_full(t: f64, y: f64, sol: &Solution) -> Result<ControlVector> {
    evaluate(sol, InfoMode::Full, t, y)
}

/// Optimal control when only the filter estimate `gamma` is available.
pub fn theta_partial(t: f64, gamma: f64, sol: &Solution) -> Result<ControlVector> {
    evaluate(sol, InfoMode::Partial, t, gamma)
}

pub fn theta(mode: InfoMode, t: f64, x: f64, sol: &Solution) -> Result<ControlVector> {
    evaluate(sol, mode, t, x)
}

/// The concave quadratic that the control maximises pointwise in the
/// dynamic programming equation, up to terms free of `theta`:
/// `theta^T (drift + hedge) - theta^T M theta / 2`.
pub fn hamiltonian(sol: &Solution, mode: InfoMode, t: f64, x: f64, theta: &DVector<f64>) -> Result<f64> {
    let (lin, m) = hamiltonian_parts(sol, mode, t, x)?;
    Ok(theta.dot(&lin) - 0.5 * theta.dot(&(m * theta)))
}

/// Gradient of [`hamiltonian`] in `theta`.
pub fn hamiltonian_gradient(
    sol: &Solution,
    mode: InfoMode,
    t: f64,
    x: f64,
    theta: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (lin, m) = hamiltonian_parts(sol, mode, t, x)?;
    Ok(lin - m * theta)
}

fn hamiltonian_parts(
    sol: &Solution,
    mode: InfoMode,
    t: f64,
    x: f64,
) -> Result<(DVector<f64>, &nalgebra::DMatrix<f64>)> {
    let model = &sol.model;
    let drift = model.a() * x + model.excess_intercept();
    if sol.pref.is_log() {
        if !(t >= 0.0 && t <= sol.horizon) {
            return Err(Error::OutOfGrid { t, horizon: sol.horizon });
        }
        return Ok((drift, &sol.risk.theta_log));
    }
    let kappa = &model.transformed().cross;
    let hedge = match mode {
        InfoMode::Full => {
            let (f, g, _) = sol.full.at(t)?;
            kappa * (f * x + g)
        }
        InfoMode::Partial => {
            let (f, g, _) = sol.partial.at(t)?;
            sol.curve.pbar_at(t)? * (f * x + g)
        }
    };
    Ok((drift + hedge, &sol.risk.theta_hat))
}

/// Multiplier `m = theta^T 1` and weights `pi = theta / m`.
pub fn multiplier_and_weights(theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    let m = theta.sum();
    if !(m.abs() > MULTIPLIER_TOLERANCE) {
        return Err(Error::DegenerateMultiplier(m));
    }
    let mut pi = theta / m;
    let n = pi.len();
    let rest: f64 = pi.iter().take(n - 1).sum();
    pi[n - 1] = 1.0 - rest;
    Ok((m, pi))
}

/// Fraction of wealth in each risky asset and in the bond.
pub fn exposures(m: f64, pi: &DVector<f64>, v: f64, floor: f64) -> Result<(DVector<f64>, f64)> {
    if !(v > 0.0) {
        return Err(Error::InvalidParameter(format!("wealth must be positive, got {v}")));
    }
    let cushion = (v - floor).max(0.0);
    let risky = pi * (m * cushion / v);
    let bond = 1.0 - risky.sum();
    Ok((risky, bond))
}

/// Myopic, intertemporal hedging and partial-information components of the
/// control in the two-asset case.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandDecomposition {
    pub myopic: DVector<f64>,
    pub intertemporal: DVector<f64>,
    /// Zero under full information.
    pub partial_correction: DVector<f64>,
}

impl DemandDecomposition {
    pub fn total(&self) -> DVector<f64> {
        &self.myopic + &self.intertemporal + &self.partial_correction
    }
}

/// Componentwise demand for two assets uncorrelated with each other
/// (each may still be correlated with the factor).
pub fn two_asset_decomposition(
    t: f64,
    state: f64,
    sol: &Solution,
    mode: InfoMode,
) -> Result<DemandDecomposition> {
    let model = &sol.model;
    if model.n() != 2 {
        return Err(Error::WrongShape(format!("two assets required, got {}", model.n())));
    }
    if model.correlation()[(0, 1)] != 0.0 {
        return Err(Error::WrongShape("the two assets must be uncorrelated".into()));
    }
    let delta = sol.pref.delta();
    let (a, b, s) = (model.a(), model.b(), model.sigma());
    let r = model.r();
    let scale = DVector::from_fn(2, |i, _| {
        let e = if i < model.green() { 0.0 } else { sol.pref.epsilon };
        1.0 / (delta + e)
    });
    let myopic = DVector::from_fn(2, |i, _| scale[i] * (a[i] * state + b[i] - r) / (s[i] * s[i]));
    let zero = DVector::zeros(2);
    if sol.pref.is_log() {
        if !(t >= 0.0 && t <= sol.horizon) {
            return Err(Error::OutOfGrid { t, horizon: sol.horizon });
        }
        return Ok(DemandDecomposition {
            myopic,
            intertemporal: zero.clone(),
            partial_correction: zero,
        });
    }
    let corr = model.correlation();
    let sy = model.sigma_y();
    let hedge_loading = |fg: f64| {
        DVector::from_fn(2, |i, _| scale[i] * sy * corr[(i, 2)] / s[i] * fg)
    };
    match mode {
        InfoMode::Full => {
            let (f, g, _) = sol.full.at(t)?;
            Ok(DemandDecomposition {
                myopic,
                intertemporal: hedge_loading(f * state + g),
                partial_correction: zero,
            })
        }
        InfoMode::Partial => {
            let (f, g, _) = sol.partial.at(t)?;
            let p = sol.curve.p_at(t)?;
            let fg = f * state + g;
            Ok(DemandDecomposition {
                myopic,
                intertemporal: hedge_loading(fg),
                partial_correction: DVector::from_fn(2, |i, _| scale[i] * a[i] * p / (s[i] * s[i]) * fg),
            })
        }
    }
}
