//! Exact finite-volume computations over a truncated height window.
//!
//! Everything here is deterministic. Partition functions are returned as
//! natural logarithms; an infeasible constraint set yields `-inf` together
//! with an explicit flag rather than an error.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::contours::Contour;
use crate::error::{Error, Result};
use crate::lattice::{BoundaryCondition, HeightConfig, InverseTemperature, Region, Site};

mod brute;
mod fkg;
mod potentials;
mod staircase;
mod transfer;

pub use brute::{enumerate_states, partition_brute};
pub use fkg::{positivity_vs_marginals, verify_fkg, FkgReport, FkgViolation, PositivityCheck};
pub use potentials::{
    canonical_shape, extract_potentials, fixed_polyominoes, PotentialEngine, PotentialEntry, PotentialTable,
};
pub use staircase::{
    boundary_pinning, check_monotonicity, staircase_log_z, staircase_ratio, tau_zero_exact, MonotonicityReport,
    MonotonicityRow, PinningResult, TauExact,
};
pub use transfer::partition_transfer;

/// Whether `partition_transfer` accepts this region and window.
pub fn transfer_feasible(region: &Region, window: HeightWindow) -> bool {
    transfer::frontier_states(region, window) <= TRANSFER_STATE_LIMIT
}

/// Largest state space `partition_brute` will walk.
pub const BRUTE_STATE_LIMIT: f64 = 1e8;
/// Largest frontier state count `partition_transfer` will hold.
pub const TRANSFER_STATE_LIMIT: f64 = 1e6;
/// Largest number of configuration pairs `verify_fkg` will compare.
pub const FKG_PAIR_LIMIT: f64 = 1e9;

/// Finite range of heights standing in for ℤ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeightWindow {
    pub hmin: i32,
    pub hmax: i32,
}

impl HeightWindow {
    pub fn new(hmin: i32, hmax: i32) -> Result<HeightWindow> {
        if hmin > hmax {
            return Err(Error::InvalidParameter(format!("empty window [{hmin}, {hmax}]")));
        }
        Ok(HeightWindow { hmin, hmax })
    }

    /// `[min bc − w, max bc + w]` over the boundary heights of a region.
    pub fn around(region: &Region, bc: &BoundaryCondition, margin: i32) -> Result<HeightWindow> {
        if margin < 0 {
            return Err(Error::InvalidParameter(format!("negative window margin {margin}")));
        }
        let vals = bc.values_on(region);
        let lo = vals.values().copied().min().unwrap_or(0);
        let hi = vals.values().copied().max().unwrap_or(0);
        HeightWindow::new(lo - margin, hi + margin)
    }

    pub fn size(&self) -> usize {
        (self.hmax - self.hmin + 1) as usize
    }

    pub fn contains(&self, h: i32) -> bool {
        (self.hmin..=self.hmax).contains(&h)
    }
}

/// `max(2, ⌈4/β⌉)`
pub fn default_margin(beta: f64) -> i32 {
    ((4.0 / beta).ceil() as i32).max(2)
}

/// Per-site floors and ceilings, including the `U₊`/`U₋` sign constraints.
///
/// Constraints on sites outside the region are checked against the boundary
/// condition: a violated one makes the ensemble empty.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraints {
    bounds: BTreeMap<Site, (i32, i32)>,
}

impl Constraints {
    pub fn none() -> Constraints {
        Constraints::default()
    }

    pub fn floor(mut self, s: Site, h: i32) -> Constraints {
        let e = self.bounds.entry(s).or_insert((i32::MIN, i32::MAX));
        e.0 = e.0.max(h);
        self
    }

    pub fn ceil(mut self, s: Site, h: i32) -> Constraints {
        let e = self.bounds.entry(s).or_insert((i32::MIN, i32::MAX));
        e.1 = e.1.min(h);
        self
    }

    pub fn fix(self, s: Site, h: i32) -> Constraints {
        self.floor(s, h).ceil(s, h)
    }

    pub fn floor_on<I: IntoIterator<Item = Site>>(self, sites: I, h: i32) -> Constraints {
        sites.into_iter().fold(self, |c, s| c.floor(s, h))
    }

    pub fn ceil_on<I: IntoIterator<Item = Site>>(self, sites: I, h: i32) -> Constraints {
        sites.into_iter().fold(self, |c, s| c.ceil(s, h))
    }

    /// `η ≥ 0` on `U₊`.
    pub fn u_plus<I: IntoIterator<Item = Site>>(self, sites: I) -> Constraints {
        self.floor_on(sites, 0)
    }

    /// `η ≤ 0` on `U₋`.
    pub fn u_minus<I: IntoIterator<Item = Site>>(self, sites: I) -> Constraints {
        self.ceil_on(sites, 0)
    }

    /// The event that `γ` is an h-contour: `η ≥ h` on `Δ⁺`, `η ≤ h − 1` on `Δ⁻`.
    pub fn contour_event(self, contour: &Contour, h: i32) -> Constraints {
        self.floor_on(contour.delta_plus().iter().copied(), h)
            .ceil_on(contour.delta_minus().iter().copied(), h - 1)
    }

    /// `(floor, ceiling)` at a site, unbounded sides as `i32::MIN` / `i32::MAX`.
    pub fn bounds(&self, s: Site) -> (i32, i32) {
        self.bounds.get(&s).copied().unwrap_or((i32::MIN, i32::MAX))
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    /// A short deterministic description.
    pub fn digest(&self) -> String {
        if self.bounds.is_empty() {
            return "none".into();
        }
        let show = |v: i32| match v {
            i32::MIN => "-inf".to_string(),
            i32::MAX => "inf".to_string(),
            v => v.to_string(),
        };
        let items: Vec<String> = self
            .bounds
            .iter()
            .map(|(s, (lo, hi))| format!("{},{}:[{},{}]", s.x1, s.x2, show(*lo), show(*hi)))
            .collect();
        if items.len() <= 8 {
            return items.join(";");
        }
        // FNV-1a over the full listing keeps long digests short but distinct
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for b in items.join(";").bytes() {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{} sites;fnv={hash:016x}", items.len())
    }

    /// Allowed heights at each region site (raster order) intersected with the
    /// window, or `None` if some site has none or an outside constraint fails.
    pub(crate) fn site_ranges(&self, config: &HeightConfig, window: HeightWindow) -> Option<Vec<(i32, i32)>> {
        let region = config.region();
        for (s, (lo, hi)) in &self.bounds {
            if !region.contains(*s) {
                let h = config.get(*s);
                if h < *lo || h > *hi {
                    return None;
                }
            }
        }
        region
            .sites()
            .iter()
            .map(|&s| {
                let (lo, hi) = self.bounds(s);
                let (lo, hi) = (lo.max(window.hmin), hi.min(window.hmax));
                (lo <= hi).then_some((lo, hi))
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Brute,
    Transfer,
}

/// A log partition function together with everything needed to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionResult {
    pub log_z: f64,
    pub window: HeightWindow,
    pub beta: f64,
    pub constraint_digest: String,
    pub method: Method,
    /// True when no configuration satisfies the constraints; `log_z` is then `-inf`.
    pub infeasible: bool,
}

impl PartitionResult {
    fn infeasible(window: HeightWindow, beta: f64, constraints: &Constraints, method: Method) -> PartitionResult {
        PartitionResult {
            log_z: f64::NEG_INFINITY,
            window,
            beta,
            constraint_digest: constraints.digest(),
            method,
            infeasible: true,
        }
    }
}

/// An event whose probability is computed exactly.
pub enum Event<'a> {
    /// Per-site floors and ceilings; computed by transfer matrix on rectangles.
    Constraints(Constraints),
    /// Arbitrary predicate on the raster-ordered heights; brute force only.
    Predicate(&'a dyn Fn(&[i32]) -> bool),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventProbability {
    pub log_p: f64,
    pub p: f64,
    pub method: Method,
}

/// `ℙ(event)` under the window-truncated Gibbs measure.
pub fn event_probability(
    region: &Arc<Region>,
    bc: &Arc<BoundaryCondition>,
    beta: InverseTemperature,
    window: HeightWindow,
    event: &Event<'_>,
) -> Result<EventProbability> {
    let (log_num, log_den, method) = match event {
        Event::Constraints(c) => {
            let transfer_ok = region.as_rectangle().is_some()
                && transfer::frontier_states(region, window) <= TRANSFER_STATE_LIMIT;
            if transfer_ok {
                let num = partition_transfer(region, bc, beta, window, c)?;
                let den = partition_transfer(region, bc, beta, window, &Constraints::none())?;
                (num.log_z, den.log_z, Method::Transfer)
            } else {
                let num = partition_brute(region, bc, beta, window, c)?;
                let den = partition_brute(region, bc, beta, window, &Constraints::none())?;
                (num.log_z, den.log_z, Method::Brute)
            }
        }
        Event::Predicate(pred) => {
            let (num, den) = brute::predicate_partition(region, bc, beta, window, *pred)?;
            (num, den, Method::Brute)
        }
    };
    let log_p = log_num - log_den;
    Ok(EventProbability { log_p, p: log_p.exp(), method })
}

pub(crate) fn template(region: &Arc<Region>, bc: &Arc<BoundaryCondition>) -> HeightConfig {
    HeightConfig::flat(region.clone(), bc.clone(), 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_margins() {
        assert_eq!(default_margin(1.0), 4);
        assert_eq!(default_margin(2.0), 2);
        assert_eq!(default_margin(6.0), 2);
        assert_eq!(default_margin(0.5), 8);
    }

    #[test]
    fn window_around_bc() {
        let r = Region::square(1).unwrap();
        let w = HeightWindow::around(&r, &BoundaryCondition::XiStep, 2).unwrap();
        assert_eq!(w, HeightWindow { hmin: -2, hmax: 3 });
        assert!(HeightWindow::new(1, 0).is_err());
        assert!(HeightWindow::around(&r, &BoundaryCondition::Zero, -1).is_err());
    }

    #[test]
    fn constraint_combination() {
        let s = Site::new(0, 0);
        let c = Constraints::none().floor(s, 0).floor(s, 2).ceil(s, 5).ceil(s, 3);
        assert_eq!(c.bounds(s), (2, 3));
        assert_eq!(Constraints::none().digest(), "none");
        assert_eq!(Constraints::none().fix(s, 1).digest(), "0,0:[1,1]");
    }

    #[test]
    fn contour_event_bounds() {
        let g = Contour::unit_square(Site::new(0, 0));
        let c = Constraints::none().contour_event(&g, 1);
        assert_eq!(c.bounds(Site::new(0, 0)), (1, i32::MAX));
        assert_eq!(c.bounds(Site::new(1, 1)), (i32::MIN, 0));
        assert_eq!(c.bounds(Site::new(1, -1)), (i32::MIN, i32::MAX));
    }
}
