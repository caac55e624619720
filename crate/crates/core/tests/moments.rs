//! Closed-form integrated factor moments against simulated paths.

use carbon_ppi::analysis::mean_and_se;
use carbon_ppi::filtering::filter_run;
use carbon_ppi::presets;
use carbon_ppi::riccati::{ou_moments, solve_filter_variance, MomentMode};
use carbon_ppi::simulator::{simulate_drivers, InitialFactor};
use carbon_ppi::MarketModel;

const T: f64 = 3.0;
const DT: f64 = 0.005;
const PATHS: usize = 4000;

fn noisy_market() -> MarketModel {
    let mut p = presets::reference_params();
    p.sigma_y = 0.4;
    p.p0 = 0.09;
    MarketModel::new(p).unwrap()
}

fn trapezoid(x: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    x.windows(2).map(|w| 0.5 * DT * (f(w[0]) + f(w[1]))).sum()
}

fn check(label: &str, samples: &[f64], exact: f64) {
    let (mean, se) = mean_and_se(samples).unwrap();
    // trapezoid bias on the grid is far below the sampling error here
    assert!((mean - exact).abs() < 4.0 * se, "{label}: mc {mean} +- {se}, exact {exact}");
}

#[test]
fn latent_moments() {
    let m = noisy_market();
    let x0 = 0.3;
    let (e1, e2) = ou_moments(&m, 0.0, T, x0, MomentMode::Latent).unwrap();
    let (mut s1, mut s2) = (Vec::new(), Vec::new());
    for i in 0..PATHS {
        let d = simulate_drivers(&m, T, DT, 5, i, InitialFactor::Fixed(x0)).unwrap();
        s1.push(trapezoid(&d.y, |y| y));
        s2.push(trapezoid(&d.y, |y| y * y));
    }
    check("first moment", &s1, e1);
    check("second moment", &s2, e2);
}

#[test]
fn filtered_moments() {
    let m = noisy_market();
    let curve = solve_filter_variance(&m, T, 1200).unwrap();
    let (e1, e2) = ou_moments(&m, 0.0, T, m.gamma0(), MomentMode::Filtered(&curve)).unwrap();
    let (mut s1, mut s2) = (Vec::new(), Vec::new());
    for i in 0..PATHS {
        let d = simulate_drivers(&m, T, DT, 8, i, InitialFactor::Prior).unwrap();
        let g = filter_run(&d.dlog_s, DT, &m, &curve).unwrap();
        s1.push(trapezoid(&g, |x| x));
        s2.push(trapezoid(&g, |x| x * x));
    }
    check("filtered first moment", &s1, e1);
    check("filtered second moment", &s2, e2);
}
