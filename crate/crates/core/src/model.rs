//! Market parameters, the uncorrelated-driver representation and the
//! carbon-penalised risk matrices.
//!
//! The market has `n` stocks whose drifts load on a single latent
//! Ornstein-Uhlenbeck factor `Y`:
//!
//! ```text
//! dS_i / S_i = (a_i Y + b_i) dt + sigma_i dW^S_i
//! dY         = (lambda Y + beta) dt + sigma_Y dW^Y
//! ```
//!
//! with `(W^S, W^Y)` correlated through `R`. Writing `R = L L^T` turns the
//! drivers into independent Brownian motions `Z`, which is the form every
//! other module works with.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest Cholesky pivot accepted for a correlation matrix.
pub const PIVOT_TOLERANCE: f64 = 1e-10;
/// Largest asymmetry `|R_ij - R_ji|` tolerated before rejecting `R`.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Raw market description, as read from a configuration file.
///
/// Rates and volatilities are annualised. The first `green` assets are the
/// low-carbon ones, the rest are penalised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub green: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub sigma: Vec<f64>,
    /// `(n+1) x (n+1)` correlation of `(W^S, W^Y)`, factor last.
    pub correlation: Vec<Vec<f64>>,
    #[serde(default = "default_rate")]
    pub r: f64,
    pub lambda: f64,
    pub beta: f64,
    pub sigma_y: f64,
    pub gamma0: f64,
    pub p0: f64,
}

pub(crate) fn default_rate() -> f64 {
    0.01
}

/// Cholesky factor of `R` and the loadings derived from it.
#[derive(Debug, Clone)]
pub struct TransformedModel {
    /// Lower-triangular `L` with `L L^T = R`.
    pub chol: DMatrix<f64>,
    /// `Sigma_S L_S`, the loading of the asset returns on `Z^S`.
    pub sigma_tilde_s: DMatrix<f64>,
    /// `sigma_Y L_Y`, the loading of `dY` on `Z^S` (stored as a column).
    pub sigma_tilde_y: DVector<f64>,
    /// `sigma_Y l_{n+1,n+1}`, the loading of `dY` on `Z^Y`.
    pub sigma_tilde_y_scalar: f64,
    /// `Sigma~_S Sigma~_Y^T`: instantaneous covariance of returns with `dY`.
    pub cross: DVector<f64>,
    /// `Sigma~_S Sigma~_S^T`: return covariance.
    pub cov_s: DMatrix<f64>,
    pub cov_s_inv: DMatrix<f64>,
}

/// Validated market model.
#[derive(Debug, Clone)]
pub struct MarketModel {
    params: MarketParams,
    a: DVector<f64>,
    b: DVector<f64>,
    sigma: DVector<f64>,
    corr: DMatrix<f64>,
    transformed: TransformedModel,
}

impl MarketModel {
    pub fn new(params: MarketParams) -> Result<Self> {
        let n = params.a.len();
        if n == 0 {
            return Err(Error::InvalidParameter("at least one asset is required".into()));
        }
        if params.b.len() != n || params.sigma.len() != n {
            return Err(Error::WrongShape(format!(
                "a, b and sigma must have equal length (got {}, {}, {})",
                n,
                params.b.len(),
                params.sigma.len()
            )));
        }
        if params.green > n {
            return Err(Error::InvalidParameter(format!(
                "green asset count {} exceeds asset count {}",
                params.green, n
            )));
        }
        let finite = params
            .a
            .iter()
            .chain(&params.b)
            .chain(&params.sigma)
            .chain([
                &params.r,
                &params.lambda,
                &params.beta,
                &params.sigma_y,
                &params.gamma0,
                &params.p0,
            ])
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("all parameters must be finite".into()));
        }
        if params.sigma.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
        if params.sigma_y <= 0.0 {
            return Err(Error::InvalidParameter("sigma_y must be positive".into()));
        }
        if params.p0 < 0.0 {
            return Err(Error::InvalidParameter("p0 must be non-negative".into()));
        }
        if params.correlation.len() != n + 1
            || params.correlation.iter().any(|row| row.len() != n + 1)
        {
            return Err(Error::WrongShape(format!(
                "correlation must be {0} x {0}",
                n + 1
            )));
        }

        let corr = DMatrix::from_fn(n + 1, n + 1, |i, j| params.correlation[i][j]);
        let chol = decompose_correlation(&corr)?;

        let a = DVector::from_column_slice(&params.a);
        let b = DVector::from_column_slice(&params.b);
        let sigma = DVector::from_column_slice(&params.sigma);
        let transformed = TransformedModel::build(&chol, &sigma, params.sigma_y)?;

        Ok(Self {
            params,
            a,
            b,
            sigma,
            corr,
            transformed,
        })
    }

    /// Same market with the factor loadings `a` replaced.
    pub fn with_drift(&self, a: &[f64]) -> Result<Self> {
        let mut params = self.params.clone();
        params.a = a.to_vec();
        Self::new(params)
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }
    pub fn n(&self) -> usize {
        self.a.len()
    }
    pub fn green(&self) -> usize {
        self.params.green
    }
    pub fn a(&self) -> &DVector<f64> {
        &self.a
    }
    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }
    pub fn sigma(&self) -> &DVector<f64> {
        &self.sigma
    }
    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.corr
    }
    pub fn r(&self) -> f64 {
        self.params.r
    }
    pub fn lambda(&self) -> f64 {
        self.params.lambda
    }
    pub fn beta(&self) -> f64 {
        self.params.beta
    }
    pub fn sigma_y(&self) -> f64 {
        self.params.sigma_y
    }
    pub fn gamma0(&self) -> f64 {
        self.params.gamma0
    }
    pub fn p0(&self) -> f64 {
        self.params.p0
    }
    pub fn transformed(&self) -> &TransformedModel {
        &self.transformed
    }

    /// `b - r 1`.
    pub fn excess_intercept(&self) -> DVector<f64> {
        self.b.add_scalar(-self.params.r)
    }
}

impl TransformedModel {
    fn build(chol: &DMatrix<f64>, sigma: &DVector<f64>, sigma_y: f64) -> Result<Self> {
        let n = sigma.len();
        let l_s = chol.view((0, 0), (n, n));
        let sigma_tilde_s = DMatrix::from_fn(n, n, |i, j| sigma[i] * l_s[(i, j)]);
        let sigma_tilde_y = DVector::from_fn(n, |j, _| sigma_y * chol[(n, j)]);
        let sigma_tilde_y_scalar = sigma_y * chol[(n, n)];
        let cross = &sigma_tilde_s * &sigma_tilde_y;
        let cov_s = &sigma_tilde_s * sigma_tilde_s.transpose();
        let cov_s_inv = cov_s
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidParameter("return covariance is singular".into()))?
            .inverse();
        Ok(Self {
            chol: chol.clone(),
            sigma_tilde_s,
            sigma_tilde_y,
            sigma_tilde_y_scalar,
            cross,
            cov_s,
            cov_s_inv,
        })
    }
}

/// Cholesky factor of a correlation matrix.
///
/// Rejects asymmetric input, pivots below [`PIVOT_TOLERANCE`], and matrices
/// that are positive definite but not correlation matrices (non-unit
/// diagonal, entries outside `[-1, 1]`).
pub fn decompose_correlation(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !r.is_square() {
        return Err(Error::WrongShape("correlation matrix must be square".into()));
    }
    let asym = (r - r.transpose()).amax();
    if !(asym <= SYMMETRY_TOLERANCE) {
        return Err(Error::AsymmetricInput(asym));
    }
    let m = r.nrows();
    let mut l = DMatrix::<f64>::zeros(m, m);
    for j in 0..m {
        let mut pivot = r[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > PIVOT_TOLERANCE) {
            return Err(Error::NotPositiveDefinite { row: j, pivot });
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..m {
            let mut s = r[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    for i in 0..m {
        if (r[(i, i)] - 1.0).abs() > SYMMETRY_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "correlation diagonal entry {i} is {} instead of 1",
                r[(i, i)]
            )));
        }
    }
    if r.iter().any(|v| v.abs() > 1.0) {
        return Err(Error::InvalidParameter(
            "correlation entries must lie in [-1, 1]".into(),
        ));
    }
    Ok(l)
}

/// What the insurer observes: the factor itself or only the asset prices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoMode {
    Full,
    Partial,
}

impl std::fmt::Display for InfoMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InfoMode::Full => "full",
            InfoMode::Partial => "partial",
        })
    }
}

/// Utility of the terminal penalised cushion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Utility {
    /// `c^(1-delta) / (1-delta)`, `delta` in `(0,1) U (1,inf)`.
    Crra { delta: f64 },
    Log,
}

/// Risk aversion and carbon aversion of the insurer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preference {
    pub utility: Utility,
    pub epsilon: f64,
}

impl Preference {
    pub fn crra(delta: f64, epsilon: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
        }
        if delta == 1.0 {
            return Err(Error::InvalidParameter(
                "delta = 1 is the logarithmic case, use Preference::log".into(),
            ));
        }
        Self::check_epsilon(epsilon)?;
        Ok(Self {
            utility: Utility::Crra { delta },
            epsilon,
        })
    }

    pub fn log(epsilon: f64) -> Result<Self> {
        Self::check_epsilon(epsilon)?;
        Ok(Self {
            utility: Utility::Log,
            epsilon,
        })
    }

    /// CRRA for `delta != 1`, logarithmic for `delta == 1`.
    pub fn from_delta(delta: f64, epsilon: f64) -> Result<Self> {
        if delta == 1.0 {
            Self::log(epsilon)
        } else {
            Self::crra(delta, epsilon)
        }
    }

    fn check_epsilon(epsilon: f64) -> Result<()> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be non-negative, got {epsilon}"
            )));
        }
        Ok(())
    }

    /// Risk aversion, `1` for log utility.
    pub fn delta(&self) -> f64 {
        match self.utility {
            Utility::Crra { delta } => delta,
            Utility::Log => 1.0,
        }
    }

    pub fn is_log(&self) -> bool {
        matches!(self.utility, Utility::Log)
    }

    /// `(0, .., 0, eps, .., eps)` with `green` leading zeros.
    pub fn carbon_mask(&self, n: usize, green: usize) -> DVector<f64> {
        DVector::from_fn(n, |i, _| if i < green { 0.0 } else { self.epsilon })
    }
}

/// Quadratic forms of the inverse effective risk matrix that appear in
/// every coefficient of the Riccati systems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskForms {
    /// `a^T M a`
    pub aa: f64,
    /// `a^T M (b - r)`
    pub ab: f64,
    /// `(b - r)^T M (b - r)`
    pub bb: f64,
    /// `kappa^T M a`, `kappa = Sigma~_S Sigma~_Y^T`
    pub ka: f64,
    /// `kappa^T M (b - r)`
    pub kb: f64,
    /// `kappa^T M kappa`
    pub kk: f64,
}

impl RiskForms {
    pub fn new(m: &DMatrix<f64>, a: &DVector<f64>, excess: &DVector<f64>, kappa: &DVector<f64>) -> Self {
        let ma = m * a;
        let mb = m * excess;
        let mk = m * kappa;
        Self {
            aa: a.dot(&ma),
            ab: a.dot(&mb),
            bb: excess.dot(&mb),
            ka: kappa.dot(&ma),
            kb: kappa.dot(&mb),
            kk: kappa.dot(&mk),
        }
    }
}

/// Carbon penalty and effective risk matrices for one preference.
#[derive(Debug, Clone)]
pub struct EffectiveRisk {
    /// Diagonal of the penalty matrix, `e_i sigma_i^2`.
    pub penalty: DVector<f64>,
    /// `diag(penalty) + delta Sigma~_S Sigma~_S^T` (equals `theta_log` for log utility).
    pub theta_hat: DMatrix<f64>,
    pub theta_hat_inv: DMatrix<f64>,
    /// `diag(penalty) + Sigma~_S Sigma~_S^T`.
    pub theta_log: DMatrix<f64>,
    pub theta_log_inv: DMatrix<f64>,
    /// Forms of `theta_hat_inv`.
    pub forms: RiskForms,
    /// Forms of `(Sigma~_S Sigma~_S^T)^{-1}`, used by the filter quadratic variation.
    pub cov_forms: RiskForms,
}

impl EffectiveRisk {
    /// Matrix that enters the optimal control: `theta_hat` for CRRA, `theta_log` for log.
    pub fn control_matrix_inv(&self) -> &DMatrix<f64> {
        &self.theta_hat_inv
    }
}

fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::InvalidParameter(format!("{what} is not positive definite")))
}

pub fn effective_risk(model: &MarketModel, pref: &Preference) -> Result<EffectiveRisk> {
    effective_risk_at(model, pref.delta(), pref.epsilon)
}

/// Effective risk matrices at an arbitrary `delta > 0`.
pub fn effective_risk_at(model: &MarketModel, delta: f64, epsilon: f64) -> Result<EffectiveRisk> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be non-negative, got {epsilon}")));
    }
    let n = model.n();
    let sigma = model.sigma();
    let penalty = DVector::from_fn(n, |i, _| {
        let e = if i < model.green() { 0.0 } else { epsilon };
        e * sigma[i] * sigma[i]
    });
    let cov = &model.transformed().cov_s;
    let diag = DMatrix::from_diagonal(&penalty);
    let theta_hat = &diag + cov * delta;
    let theta_log = &diag + cov;
    let theta_hat_inv = spd_inverse(&theta_hat, "theta_hat")?;
    let theta_log_inv = spd_inverse(&theta_log, "theta_log")?;
    let excess = model.excess_intercept();
    let kappa = &model.transformed().cross;
    let forms = RiskForms::new(&theta_hat_inv, model.a(), &excess, kappa);
    let cov_forms = RiskForms::new(&model.transformed().cov_s_inv, model.a(), &excess, kappa);
    Ok(EffectiveRisk {
        penalty,
        theta_hat,
        theta_hat_inv,
        theta_log,
        theta_log_inv,
        forms,
        cov_forms,
    })
}

/// Discriminant of the scalar Riccati equation for the full-information
/// quadratic coefficient, evaluated at risk aversion `delta`.
///
/// `Delta(1) = lambda^2`; `delta` is admissible iff `Delta(delta) > 0`.
pub fn discriminant(model: &MarketModel, delta: f64, epsilon: f64) -> Result<f64> {
    let risk = effective_risk_at(model, delta, epsilon)?;
    Ok(discriminant_from_forms(&risk.forms, delta, model.lambda(), model.sigma_y()))
}

pub(crate) fn discriminant_from_forms(forms: &RiskForms, delta: f64, lambda: f64, sigma_y: f64) -> f64 {
    let u = 1.0 - delta;
    let linear = u * forms.ka + lambda;
    linear * linear - (u * u * forms.kk + u * sigma_y * sigma_y) * forms.aa
}

pub fn is_admissible_delta(model: &MarketModel, delta: f64, epsilon: f64) -> bool {
    delta > 0.0
        && delta != 1.0
        && discriminant(model, delta, epsilon).is_ok_and(|d| d > 0.0)
}

/// Lower end `delta*` of the admissible risk aversions for two independent
/// assets (green first, brown second) that are also independent of the
/// factor. `Delta(delta) > 0` for every `delta > delta*`.
pub fn two_asset_delta_star(
    a1: f64,
    a2: f64,
    sigma1: f64,
    sigma2: f64,
    lambda: f64,
    sigma_y: f64,
    epsilon: f64,
) -> Result<f64> {
    if !(sigma1 > 0.0 && sigma2 > 0.0 && sigma_y > 0.0) {
        return Err(Error::InvalidParameter("volatilities must be positive".into()));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParameter("epsilon must be non-negative".into()));
    }
    let (l2, s1, s2, sy) = (lambda * lambda, sigma1 * sigma1, sigma2 * sigma2, sigma_y * sigma_y);
    if a1 == 0.0 && a2 == 0.0 {
        return Ok(0.0);
    }
    if a1 == 0.0 {
        let a22 = a2 * a2;
        let bar = (a22 * sy - epsilon * l2 * s2) / (l2 * s2 + a22 * sy);
        return Ok(bar.max(0.0));
    }
    let a11 = a1 * a1;
    let a22 = a2 * a2;
    let qa = l2 * s1 * s2 + (a11 * s2 + a22 * s1) * sy;
    let qb = epsilon * l2 * s1 * s2 - ((1.0 - epsilon) * a11 * s2 + a22 * s1) * sy;
    let qc = -epsilon * a11 * s2 * sy;
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
    // qa > 0 and qc <= 0, so the larger root is the non-negative one.
    let root = if qb >= 0.0 {
        -2.0 * qc / (qb + disc)
    } else {
        (-qb + disc) / (2.0 * qa)
    };
    Ok(root.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use approx::assert_relative_eq;

    fn uncorrelated(n: usize) -> Vec<Vec<f64>> {
        (0..=n)
            .map(|i| (0..=n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    fn two_asset(a1: f64, a2: f64) -> MarketModel {
        MarketModel::new(MarketParams {
            green: 1,
            a: vec![a1, a2],
            b: vec![-0.03, 0.01],
            sigma: vec![0.19, 0.21],
            correlation: uncorrelated(2),
            r: 0.01,
            lambda: -0.5,
            beta: 0.5,
            sigma_y: 0.05,
            gamma0: 1.0,
            p0: 0.0025,
        })
        .unwrap()
    }

    #[test]
    fn identity_correlation_leaves_loadings_unchanged() {
        let m = two_asset(0.08, 0.055);
        let tr = m.transformed();
        assert_eq!(tr.chol, DMatrix::identity(3, 3));
        assert_relative_eq!(tr.sigma_tilde_s, DMatrix::from_diagonal(m.sigma()));
        assert!(tr.sigma_tilde_y.iter().all(|&v| v == 0.0));
        assert_eq!(tr.sigma_tilde_y_scalar, m.sigma_y());
    }

    #[test]
    fn reference_correlation_is_reconstructed() {
        let m = presets::reference_market();
        let l = &m.transformed().chol;
        let err = (l * l.transpose() - m.correlation()).amax();
        assert!(err < 1e-12, "reconstruction error {err}");
        for i in 0..5 {
            assert_relative_eq!(l[(i, 0)], m.correlation()[(i, 0)], epsilon = 1e-15);
        }
    }

    #[test]
    fn transformed_loadings_reproduce_covariances() {
        let m = presets::reference_market();
        let tr = m.transformed();
        let (s, r, sy) = (m.sigma(), m.correlation(), m.sigma_y());
        for i in 0..4 {
            for j in 0..4 {
                assert_relative_eq!(tr.cov_s[(i, j)], s[i] * s[j] * r[(i, j)], epsilon = 1e-15);
            }
            assert_relative_eq!(tr.cross[i], s[i] * sy * r[(i, 4)], epsilon = 1e-15);
        }
        let var_y = tr.sigma_tilde_y.norm_squared() + tr.sigma_tilde_y_scalar.powi(2);
        assert_relative_eq!(var_y, sy * sy, epsilon = 1e-15);
    }

    #[test]
    fn invalid_correlation_rejected() {
        let mut r = DMatrix::identity(3, 3);
        r[(0, 1)] = 1.2;
        r[(1, 0)] = 1.2;
        assert!(matches!(
            decompose_correlation(&r),
            Err(Error::NotPositiveDefinite { .. })
        ));
        r[(1, 0)] = 0.3;
        assert!(matches!(decompose_correlation(&r), Err(Error::AsymmetricInput(_))));
    }

    #[test]
    fn negative_sigma_rejected() {
        let mut p = presets::reference_params();
        p.sigma[1] = -0.1;
        match MarketModel::new(p) {
            Err(Error::InvalidParameter(msg)) => assert_eq!(msg, "sigma must be positive"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn no_carbon_aversion_means_no_penalty() {
        let m = presets::reference_market();
        let risk = effective_risk_at(&m, 0.7, 0.0).unwrap();
        assert!(risk.penalty.iter().all(|&p| p == 0.0));
        assert_relative_eq!(risk.theta_hat, &m.transformed().cov_s * 0.7, epsilon = 1e-15);
    }

    #[test]
    fn two_asset_penalty_hits_brown_diagonal() {
        let m = two_asset(0.08, 0.055);
        let (d, e) = (0.7, 1.3);
        let risk = effective_risk_at(&m, d, e).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![
            d * 0.19 * 0.19,
            (e + d) * 0.21 * 0.21,
        ]));
        assert_relative_eq!(risk.theta_hat, expected, epsilon = 1e-15);
    }

    #[test]
    fn reference_theta_hat_is_spd() {
        let m = presets::reference_market();
        let risk = effective_risk_at(&m, 1.0, 1.0).unwrap();
        let eig = risk.theta_hat.clone().symmetric_eigen();
        assert!(eig.eigenvalues.min() > 0.0);
    }

    #[test]
    fn discriminant_limits() {
        let m = presets::reference_market();
        let l2 = m.lambda().powi(2);
        for h in [1e-1, 1e-2, 1e-3, 1e-4] {
            let lo = (discriminant(&m, 1.0 - h, 1.0).unwrap() - l2).abs();
            let hi = (discriminant(&m, 1.0 + h, 1.0).unwrap() - l2).abs();
            assert!(lo < 10.0 * h && hi < 10.0 * h, "h={h}: {lo} {hi}");
        }
        assert_relative_eq!(discriminant(&m, 1.0, 1.0).unwrap(), l2, epsilon = 1e-15);

        let flat = m.with_drift(&[0.0; 4]).unwrap();
        for d in [0.1, 0.7, 3.0, 20.0] {
            assert_relative_eq!(discriminant(&flat, d, 0.5).unwrap(), l2, epsilon = 1e-15);
        }
    }

    #[test]
    fn discriminant_matches_two_asset_closed_form() {
        let m = two_asset(0.08, 0.055);
        let (s1, s2, sy, l) = (0.19f64, 0.21f64, 0.05f64, -0.5f64);
        let eps = 0.8;
        for x in [0.05, 0.3, 0.7, 1.5, 4.0] {
            let expected = l * l
                - (1.0 - x) * (0.08f64.powi(2) / (x * s1 * s1) + 0.055f64.powi(2) / ((x + eps) * s2 * s2)) * sy * sy;
            assert_relative_eq!(discriminant(&m, x, eps).unwrap(), expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn admissible_near_one() {
        let m = presets::reference_market();
        assert!(is_admissible_delta(&m, 1.0 - 1e-3, 1.0));
        assert!(is_admissible_delta(&m, 1.0 + 1e-3, 1.0));
        assert!(!is_admissible_delta(&m, 1.0, 1.0));
    }

    #[test]
    fn appendix_two_asset_region() {
        // a1 = 0 and lambda^2 < sigma_Y^2 a2^2 / (eps sigma2^2): delta below delta_bar is excluded.
        let (a2, s2, sy, l, eps) = (0.5, 0.2, 0.5, 0.1, 0.5);
        assert!(l * l < sy * sy * a2 * a2 / (eps * s2 * s2));
        let m = MarketModel::new(MarketParams {
            green: 1,
            a: vec![0.0, a2],
            b: vec![0.0, 0.0],
            sigma: vec![0.15, s2],
            correlation: uncorrelated(2),
            r: 0.01,
            lambda: l,
            beta: 0.0,
            sigma_y: sy,
            gamma0: 0.0,
            p0: 0.0,
        })
        .unwrap();
        let star = two_asset_delta_star(0.0, a2, 0.15, s2, l, sy, eps).unwrap();
        assert!(star > 0.0 && star < 1.0);
        assert!(!is_admissible_delta(&m, 0.5 * star, eps));
        assert!(is_admissible_delta(&m, 0.5 * (star + 1.0), eps));
        assert!(discriminant(&m, star + 1e-6, eps).unwrap() > 0.0);
        assert!(discriminant(&m, star - 1e-6, eps).unwrap() < 0.0);
    }

    #[test]
    fn delta_star_trivial_cases() {
        assert_eq!(two_asset_delta_star(0.0, 0.0, 0.2, 0.2, -0.5, 0.05, 1.0).unwrap(), 0.0);
        // lambda^2 >= sigma_Y^2 a2^2 / (eps sigma2^2)
        assert_eq!(two_asset_delta_star(0.0, 0.055, 0.19, 0.21, -0.5, 0.05, 1.0).unwrap(), 0.0);
    }

    fn bisect_sign_change(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn delta_star_generic_matches_bisection() {
        let cases = [
            (0.08, 0.055, 0.19, 0.21, -0.5, 0.05, 1.0),
            (0.6, 0.4, 0.2, 0.25, 0.1, 0.6, 0.3),
            (0.9, 0.1, 0.3, 0.15, -0.2, 0.8, 0.0),
            (0.3, 1.2, 0.1, 0.4, 0.05, 0.5, 2.5),
        ];
        for (a1, a2, s1, s2, l, sy, eps) in cases {
            let delta_fn = |x: f64| {
                l * l - (1.0 - x) * (a1 * a1 / (x * s1 * s1) + a2 * a2 / ((x + eps) * s2 * s2)) * sy * sy
            };
            let oracle = bisect_sign_change(delta_fn, 1e-12, 1.0);
            let star = two_asset_delta_star(a1, a2, s1, s2, l, sy, eps).unwrap();
            assert_relative_eq!(star, oracle, epsilon = 1e-10);
            assert!(delta_fn(star + 1e-6) > 0.0);
            if star > 1e-6 {
                assert!(delta_fn(star - 1e-6) < 0.0);
            }
        }
    }

    #[test]
    fn preference_routing() {
        assert!(Preference::from_delta(1.0, 0.5).unwrap().is_log());
        assert!(Preference::crra(1.0, 0.0).is_err());
        assert!(Preference::crra(0.7, -0.1).is_err());
        let p = Preference::crra(3.0, 2.0).unwrap();
        assert_eq!(
            p.carbon_mask(4, 2).as_slice(),
            &[0.0, 0.0, 2.0, 2.0]
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// Random valid correlation matrix: normalised Gram matrix of random vectors.
        fn corr_strategy(m: usize) -> impl Strategy<Value = DMatrix<f64>> {
            prop::collection::vec(-1.0f64..1.0, m * (m + 2)).prop_map(move |v| {
                let x = DMatrix::from_vec(m, m + 2, v) + DMatrix::identity(m, m + 2) * 0.5;
                let g = &x * x.transpose();
                let d = DVector::from_fn(m, |i, _| 1.0 / g[(i, i)].sqrt());
                let mut c = DMatrix::from_fn(m, m, |i, j| g[(i, j)] * d[i] * d[j]);
                for i in 0..m {
                    c[(i, i)] = 1.0;
                }
                let sym = (&c + c.transpose()) * 0.5;
                sym
            })
        }

        proptest! {
            #[test]
            fn cholesky_reconstructs(r in corr_strategy(5)) {
                if let Ok(l) = decompose_correlation(&r) {
                    prop_assert!((&l * l.transpose() - &r).amax() < 1e-12);
                }
            }

            #[test]
            fn theta_hat_spd(
                r in corr_strategy(4),
                sig in prop::collection::vec(0.05f64..0.6, 3),
                delta in 0.05f64..10.0,
                eps in 0.0f64..5.0,
                green in 0usize..=3,
            ) {
                let params = MarketParams {
                    green,
                    a: vec![0.05, 0.02, -0.03],
                    b: vec![0.0; 3],
                    sigma: sig,
                    correlation: (0..4).map(|i| (0..4).map(|j| r[(i, j)]).collect()).collect(),
                    r: 0.01,
                    lambda: -0.5,
                    beta: 0.1,
                    sigma_y: 0.1,
                    gamma0: 0.0,
                    p0: 0.0,
                };
                if let Ok(m) = MarketModel::new(params) {
                    let risk = effective_risk_at(&m, delta, eps).unwrap();
                    prop_assert!(risk.theta_hat.clone().cholesky().is_some());
                }
            }

            #[test]
            fn carbon_aversion_raises_brown_diagonal(e1 in 0.0f64..3.0, de in 1e-3f64..3.0) {
                let m = presets::reference_market();
                let lo = effective_risk_at(&m, 0.7, e1).unwrap();
                let hi = effective_risk_at(&m, 0.7, e1 + de).unwrap();
                for i in 0..4 {
                    if i < m.green() {
                        prop_assert_eq!(lo.penalty[i], 0.0);
                        prop_assert_eq!(hi.penalty[i], 0.0);
                        prop_assert_eq!(lo.theta_hat[(i, i)], hi.theta_hat[(i, i)]);
                    } else {
                        prop_assert!(hi.theta_hat[(i, i)] > lo.theta_hat[(i, i)]);
                    }
                }
            }
        }
    }
}
