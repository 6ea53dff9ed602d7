//! Exhaustive check of the FKG lattice condition and its positivity consequence.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{BoundaryCondition, InverseTemperature, Region};

use super::{enumerate_states, event_probability, Constraints, Event, HeightWindow, FKG_PAIR_LIMIT};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FkgViolation {
    pub eta: Vec<i32>,
    pub eta_prime: Vec<i32>,
    /// `ℋ(η∨η′) + ℋ(η∧η′) − ℋ(η) − ℋ(η′)`, positive for a violation.
    pub excess: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FkgReport {
    pub states: usize,
    pub pairs_checked: u64,
    pub violations: Vec<FkgViolation>,
    /// `max β·(ℋ(η∨η′) + ℋ(η∧η′) − ℋ(η) − ℋ(η′))` over checked pairs; `≤ 0` when the condition holds.
    pub max_slack: f64,
}

/// Compare every pair of configurations differing at two or more sites.
///
/// Pairs differing at fewer sites are comparable, so `∨`/`∧` reproduce the pair
/// and the inequality is an equality.
pub fn verify_fkg(
    region: &Arc<Region>,
    bc: &Arc<BoundaryCondition>,
    beta: InverseTemperature,
    window: HeightWindow,
) -> Result<FkgReport> {
    let n = window.size();
    let sites = region.len();
    let states = (n as f64).powi(sites as i32);
    let pairs = states * (states - 1.0) / 2.0;
    if pairs > FKG_PAIR_LIMIT {
        return Err(Error::Guard { what: "FKG configuration pairs", requested: pairs, limit: FKG_PAIR_LIMIT });
    }
    let all = enumerate_states(region, bc, window)?;
    let digits: Vec<Vec<usize>> =
        all.iter().map(|(h, _)| h.iter().map(|&x| (x - window.hmin) as usize).collect()).collect();
    let index = |d: &dyn Fn(usize) -> usize| -> usize {
        (0..sites).rev().fold(0, |acc, k| acc * n + d(k))
    };

    let mut checked = 0u64;
    let mut worst = i64::MIN;
    let mut violations = Vec::new();
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            let (a, b) = (&digits[i], &digits[j]);
            if a.iter().zip(b).filter(|(x, y)| x != y).count() < 2 {
                continue;
            }
            let join = index(&|k| a[k].max(b[k]));
            let meet = index(&|k| a[k].min(b[k]));
            let excess = all[join].1 + all[meet].1 - all[i].1 - all[j].1;
            checked += 1;
            worst = worst.max(excess);
            if excess > 0 {
                violations.push(FkgViolation { eta: all[i].0.clone(), eta_prime: all[j].0.clone(), excess });
            }
        }
    }
    let max_slack = if checked == 0 { 0.0 } else { beta.value() * worst as f64 };
    Ok(FkgReport { states: all.len(), pairs_checked: checked, violations, max_slack })
}

/// `log ℙ(η ≥ 0 on Λ)` next to `Σ_x log ℙ(η(x) ≥ 0)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PositivityCheck {
    pub log_joint: f64,
    pub log_marginals: Vec<f64>,
    pub log_product: f64,
}

impl PositivityCheck {
    /// The FKG consequence `ℙ(∩ {η(x) ≥ 0}) ≥ ∏ ℙ(η(x) ≥ 0)`.
    pub fn holds(&self, tol: f64) -> bool {
        self.log_joint >= self.log_product - tol
    }
}

pub fn positivity_vs_marginals(
    region: &Arc<Region>,
    bc: &Arc<BoundaryCondition>,
    beta: InverseTemperature,
    window: HeightWindow,
) -> Result<PositivityCheck> {
    let all = Constraints::none().u_plus(region.sites().iter().copied());
    let log_joint = event_probability(region, bc, beta, window, &Event::Constraints(all))?.log_p;
    let log_marginals = region
        .sites()
        .iter()
        .map(|&s| {
            let c = Constraints::none().floor(s, 0);
            event_probability(region, bc, beta, window, &Event::Constraints(c)).map(|p| p.log_p)
        })
        .collect::<Result<Vec<f64>>>()?;
    let log_product = log_marginals.iter().sum();
    Ok(PositivityCheck { log_joint, log_marginals, log_product })
}
