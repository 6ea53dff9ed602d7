use std::sync::Arc;

use sos_core::exact::{boundary_pinning, HeightWindow};
use sos_core::free_energy::{
    boundary_flip_exact, flip_plan, log_positivity, log_positivity_exact, log_positivity_on, tau_zero_mc, McParams,
    StageEstimator,
};
use sos_core::mc::RandomSeed;
use sos_core::{BoundaryCondition, InverseTemperature, Region, Site};

fn beta(b: f64) -> InverseTemperature {
    InverseTemperature::new(b).unwrap()
}

fn zero() -> Arc<BoundaryCondition> {
    Arc::new(BoundaryCondition::Zero)
}

fn params(seed: u64, sweeps: u64) -> McParams {
    McParams { sweeps, burnin: 100, max_sweeps: sweeps * 4, seed: RandomSeed::new(seed, 0), ..McParams::default() }
}

#[test]
fn single_site_positivity_matches_closed_form() {
    let region = Arc::new(Region::square(0).unwrap());
    let est = log_positivity(&region, &zero(), beta(1.0), &params(1, 50_000)).unwrap();
    let tail: f64 = (1..200).map(|h| (-4.0 * f64::from(h)).exp()).sum();
    let exact = ((1.0 + tail) / (1.0 + 2.0 * tail)).ln();
    assert!((est.value - exact).abs() <= 3.0 * est.std_error, "{} vs {exact}", est.value);
}

#[test]
fn conditional_estimator_agrees_with_exact() {
    let region = Arc::new(Region::square(1).unwrap());
    let p = McParams { estimator: StageEstimator::Conditional, ..params(2, 5000) };
    let est = log_positivity(&region, &zero(), beta(1.0), &p).unwrap();
    let w = HeightWindow::new(-4, 4).unwrap();
    let exact = log_positivity_exact(&region, &zero(), beta(1.0), w, region.sites()).unwrap();
    assert!((est.value - exact.value).abs() <= 3.0 * est.std_error);
}

#[test]
fn stage_orders_agree_within_errors() {
    let region = Arc::new(Region::square(1).unwrap());
    let rev: Vec<Site> = region.sites().iter().rev().copied().collect();
    let a = log_positivity_on(&region, &zero(), region.sites(), beta(1.0), &params(3, 5000)).unwrap();
    let b = log_positivity_on(&region, &zero(), &rev, beta(1.0), &params(4, 5000)).unwrap();
    let s = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
    assert!((a.value - b.value).abs() <= 3.0 * s);
}

#[test]
fn positivity_shrinks_with_the_target_set() {
    let outer = Arc::new(Region::square(2).unwrap());
    let inner: Vec<Site> = Region::square(1).unwrap().sites().to_vec();
    let small = log_positivity_on(&outer, &zero(), &inner, beta(1.0), &params(5, 3000)).unwrap();
    let large = log_positivity(&outer, &zero(), beta(1.0), &params(6, 3000)).unwrap();
    let s = (small.std_error.powi(2) + large.std_error.powi(2)).sqrt();
    assert!(large.value <= small.value + 3.0 * s);
}

#[test]
fn flip_mc_matches_exact_at_moderate_beta() {
    let w = HeightWindow::new(-2, 3).unwrap();
    let exact = boundary_flip_exact(2, beta(1.0), w, &flip_plan(2)).unwrap();
    let mc = tau_zero_mc(2, beta(1.0), &params(7, 4000)).unwrap();
    let z = (mc.log_ratio.value - exact.value).abs() / mc.log_ratio.std_error;
    assert!(z <= 3.0, "{} vs {} ({z}σ)", mc.log_ratio.value, exact.value);
    assert!(mc.per_length > 0.0);
    assert_eq!(mc.log_ratio.components.len(), 11);
}

#[test]
fn pinning_rate_stays_bounded() {
    let w = HeightWindow::new(-1, 1).unwrap();
    let rates: Vec<f64> = (1..=3).map(|l| boundary_pinning(l, beta(3.0), w).unwrap().rate).collect();
    assert!(rates.iter().all(|r| r.is_finite() && *r > 0.0 && *r < 1.0), "{rates:?}");
}
