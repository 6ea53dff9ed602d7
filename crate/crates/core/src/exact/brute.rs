//! Exhaustive enumeration with an odometer and incremental integer energy.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::{BoundaryCondition, InverseTemperature, NeighborTable, Neighbor, Region};
use crate::numerics::log_partition_from_histogram;

use super::{template, Constraints, HeightWindow, Method, PartitionResult, BRUTE_STATE_LIMIT};

fn energy_of(table: &NeighborTable, heights: &[i32]) -> i64 {
    let mut e = 0i64;
    for (i, &h) in heights.iter().enumerate() {
        for n in table.get(i) {
            match *n {
                Neighbor::Site(j) if (j as usize) > i => e += i64::from((h - heights[j as usize]).abs()),
                Neighbor::Site(_) => {}
                Neighbor::Fixed(b) => e += i64::from((h - b).abs()),
            }
        }
    }
    e
}

fn delta(table: &NeighborTable, heights: &[i32], i: usize, new: i32) -> i64 {
    let old = heights[i];
    table
        .heights_around(i, heights)
        .iter()
        .map(|&n| i64::from((new - n).abs() - (old - n).abs()))
        .sum()
}

/// Visit every configuration whose raster-ordered heights lie in `ranges`,
/// with its exact energy. Site 0 varies fastest.
pub(crate) fn walk(table: &NeighborTable, ranges: &[(i32, i32)], mut visit: impl FnMut(&[i32], i64)) {
    let mut heights: Vec<i32> = ranges.iter().map(|r| r.0).collect();
    let mut e = energy_of(table, &heights);
    loop {
        visit(&heights, e);
        let Some(i) = (0..heights.len()).find(|&i| heights[i] < ranges[i].1) else {
            return;
        };
        for j in 0..i {
            e += delta(table, &heights, j, ranges[j].0);
            heights[j] = ranges[j].0;
        }
        e += delta(table, &heights, i, heights[i] + 1);
        heights[i] += 1;
    }
}

pub(crate) fn state_count(ranges: &[(i32, i32)]) -> f64 {
    ranges.iter().map(|(lo, hi)| f64::from(hi - lo + 1)).product()
}

fn guard(states: f64) -> Result<()> {
    if states > BRUTE_STATE_LIMIT {
        return Err(Error::Guard { what: "brute-force states", requested: states, limit: BRUTE_STATE_LIMIT });
    }
    Ok(())
}

/// Energy histogram: `hist[e]` counts configurations of energy `e`.
fn histogram(table: &NeighborTable, ranges: &[(i32, i32)], mut keep: impl FnMut(&[i32]) -> bool) -> Vec<u64> {
    let mut hist: Vec<u64> = Vec::new();
    walk(table, ranges, |h, e| {
        if keep(h) {
            let e = e as usize;
            if e >= hist.len() {
                hist.resize(e + 1, 0);
            }
            hist[e] += 1;
        }
    });
    hist
}

fn log_z(hist: &[u64], beta: f64) -> f64 {
    log_partition_from_histogram(hist.iter().enumerate().map(|(e, &c)| (e as i64, c)), beta)
}

/// `log Σ_η exp(−βℋ(η))` over every admissible configuration in the window.
pub fn partition_brute(
    region: &Arc<Region>,
    bc: &Arc<BoundaryCondition>,
    beta: InverseTemperature,
    window: HeightWindow,
    constraints: &Constraints,
) -> Result<PartitionResult> {
    let config = template(region, bc);
    let Some(ranges) = constraints.site_ranges(&config, window) else {
        return Ok(PartitionResult::infeasible(window, beta.value(), constraints, Method::Brute));
    };
    guard(state_count(&ranges))?;
    let table = NeighborTable::new(&config);
    let hist = histogram(&table, &ranges, |_| true);
    Ok(PartitionResult {
        log_z: log_z(&hist, beta.value()),
        window,
        beta: beta.value(),
        constraint_digest: constraints.digest(),
        method: Method::Brute,
        infeasible: false,
    })
}

/// `(log Σ_{η ∈ A} e^{−βℋ}, log Z)` for a predicate `A` on raster-ordered heights.
pub(crate) fn predicate_partition(
    region: &Arc<Region>,
    bc: &Arc<BoundaryCondition>,
    beta: InverseTemperature,
    window: HeightWindow,
    pred: &dyn Fn(&[i32]) -> bool,
) -> Result<(f64, f64)> {
    let config = template(region, bc);
    let ranges = vec![(window.hmin, window.hmax); region.len()];
    guard(state_count(&ranges))?;
    let table = NeighborTable::new(&config);
    let mut all: Vec<u64> = Vec::new();
    let mut hit: Vec<u64> = Vec::new();
    walk(&table, &ranges, |h, e| {
        let e = e as usize;
        if e >= all.len() {
            all.resize(e + 1, 0);
            hit.resize(e + 1, 0);
        }
        all[e] += 1;
        if pred(h) {
            hit[e] += 1;
        }
    });
    Ok((log_z(&hit, beta.value()), log_z(&all, beta.value())))
}

/// Every configuration of the window with its energy, site 0 varying fastest.
pub fn enumerate_states(
    region: &Arc<Region>,
    bc: &Arc<BoundaryCondition>,
    window: HeightWindow,
) -> Result<Vec<(Vec<i32>, i64)>> {
    let config = template(region, bc);
    let ranges = vec![(window.hmin, window.hmax); region.len()];
    guard(state_count(&ranges))?;
    let table = NeighborTable::new(&config);
    let mut out = Vec::new();
    walk(&table, &ranges, |h, e| out.push((h.to_vec(), e)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::HeightConfig;

    #[test]
    fn walk_energies_match_full_evaluation() {
        let region = Arc::new(Region::rectangle(1, 0).unwrap());
        let bc = Arc::new(BoundaryCondition::XiStep);
        let states = enumerate_states(&region, &bc, HeightWindow::new(-1, 2).unwrap()).unwrap();
        assert_eq!(states.len(), 64);
        for (h, e) in states {
            let c = HeightConfig::from_heights(region.clone(), bc.clone(), h).unwrap();
            assert_eq!(c.energy(), e);
        }
    }

    #[test]
    fn single_site_geometric_sum() {
        let region = Arc::new(Region::square(0).unwrap());
        let bc = Arc::new(BoundaryCondition::Zero);
        let beta = InverseTemperature::new(1.0).unwrap();
        let r = partition_brute(&region, &bc, beta, HeightWindow::new(-5, 5).unwrap(), &Constraints::none()).unwrap();
        let oracle = (1.0 + 2.0 * (1..=5).map(|h| (-4.0 * h as f64).exp()).sum::<f64>()).ln();
        assert!((r.log_z - oracle).abs() < 1e-12);
        assert!((r.log_z.exp() - 1.03731).abs() < 1e-5);
    }

    #[test]
    fn single_state_window() {
        let region = Arc::new(Region::rectangle(2, 1).unwrap());
        let beta = InverseTemperature::new(1.7).unwrap();
        let zero = Arc::new(BoundaryCondition::Zero);
        let r = partition_brute(&region, &zero, beta, HeightWindow::new(0, 0).unwrap(), &Constraints::none()).unwrap();
        assert_eq!(r.log_z, 0.0);
        let xi = Arc::new(BoundaryCondition::XiStep);
        let r = partition_brute(&region, &xi, beta, HeightWindow::new(0, 0).unwrap(), &Constraints::none()).unwrap();
        let e = HeightConfig::flat(region.clone(), xi.clone(), 0).energy();
        assert!((r.log_z + 1.7 * e as f64).abs() < 1e-12);
    }

    #[test]
    fn infeasible_constraints_flagged() {
        let region = Arc::new(Region::square(0).unwrap());
        let bc = Arc::new(BoundaryCondition::Zero);
        let beta = InverseTemperature::new(1.0).unwrap();
        let s = region.sites()[0];
        let c = Constraints::none().floor(s, 2).ceil(s, 1);
        let r = partition_brute(&region, &bc, beta, HeightWindow::new(-3, 3).unwrap(), &c).unwrap();
        assert!(r.infeasible);
        assert_eq!(r.log_z, f64::NEG_INFINITY);
        // a constraint on a boundary site that the bc violates
        let c = Constraints::none().floor(s.offset(1, 0), 1);
        assert!(partition_brute(&region, &bc, beta, HeightWindow::new(-3, 3).unwrap(), &c).unwrap().infeasible);
    }

    #[test]
    fn guard_trips() {
        let region = Arc::new(Region::square(2).unwrap());
        let bc = Arc::new(BoundaryCondition::Zero);
        let beta = InverseTemperature::new(1.0).unwrap();
        let err = partition_brute(&region, &bc, beta, HeightWindow::new(-2, 2).unwrap(), &Constraints::none());
        assert!(matches!(err, Err(Error::Guard { .. })));
    }
}
