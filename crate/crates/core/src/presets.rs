//! Benchmark market used in the numerical study and its three drift scenarios.

use crate::model::{MarketModel, MarketParams};

/// Green assets come first: assets 1 and 2 are green, 3 and 4 brown.
pub fn reference_params() -> MarketParams {
    MarketParams {
        green: 2,
        a: vec![0.08, 0.055, 0.045, 0.075],
        b: vec![-0.03, 0.01, 0.01, -0.03],
        sigma: vec![0.19, 0.21, 0.22, 0.15],
        correlation: vec![
            vec![1.0, 0.32, 0.25, 0.10, 0.35],
            vec![0.32, 1.0, 0.30, 0.12, -0.25],
            vec![0.25, 0.30, 1.0, 0.20, -0.15],
            vec![0.10, 0.12, 0.20, 1.0, 0.325],
            vec![0.35, -0.25, -0.15, 0.325, 1.0],
        ],
        r: 0.01,
        lambda: -0.5,
        beta: 0.5,
        sigma_y: 0.05,
        gamma0: 1.0,
        p0: 0.0025,
    }
}

pub fn reference_market() -> MarketModel {
    MarketModel::new(reference_params()).expect("reference parameters are valid")
}

/// Investment horizon of the study, in years.
pub const HORIZON: f64 = 5.0;

/// Drift scenarios. Scenario 2 is the reference drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Green assets carry the stronger factor loading.
    GreenTilt,
    Reference,
    /// Brown assets carry the stronger factor loading.
    BrownTilt,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::GreenTilt, Scenario::Reference, Scenario::BrownTilt];

    pub fn drift(self) -> [f64; 4] {
        match self {
            Scenario::GreenTilt => [0.09, 0.08, 0.045, 0.045],
            Scenario::Reference => [0.08, 0.055, 0.045, 0.075],
            Scenario::BrownTilt => [0.045, 0.045, 0.08, 0.09],
        }
    }

    /// 1-based number used in tables.
    pub fn number(self) -> usize {
        match self {
            Scenario::GreenTilt => 1,
            Scenario::Reference => 2,
            Scenario::BrownTilt => 3,
        }
    }

    pub fn from_number(k: usize) -> Option<Self> {
        Self::ALL.get(k.wrapping_sub(1)).copied()
    }

    pub fn market(self) -> MarketModel {
        reference_market()
            .with_drift(&self.drift())
            .expect("scenario drifts are valid")
    }
}
