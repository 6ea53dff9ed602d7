//! Site-by-site transfer matrix on rectangles.
//!
//! The state is the frontier of the last `nc` processed heights (one per
//! column); adding a site replaces one frontier digit. The shorter side of the
//! rectangle is used as the frontier.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::{BoundaryCondition, InverseTemperature, Region, Site};

use super::{template, Constraints, HeightWindow, Method, PartitionResult, TRANSFER_STATE_LIMIT};

struct Grid {
    nc: usize,
    nr: usize,
    lo: Site,
    transposed: bool,
}

impl Grid {
    fn new(region: &Region) -> Result<Grid> {
        let (lo, hi) = region.as_rectangle().ok_or(Error::NotRectangle)?;
        let w = (hi.x1 - lo.x1 + 1) as usize;
        let h = (hi.x2 - lo.x2 + 1) as usize;
        Ok(if h < w {
            Grid { nc: h, nr: w, lo, transposed: true }
        } else {
            Grid { nc: w, nr: h, lo, transposed: false }
        })
    }

    fn site(&self, c: i32, r: i32) -> Site {
        if self.transposed {
            Site::new(self.lo.x1 + r, self.lo.x2 + c)
        } else {
            Site::new(self.lo.x1 + c, self.lo.x2 + r)
        }
    }
}

pub(crate) fn frontier_states(region: &Region, window: HeightWindow) -> f64 {
    match Grid::new(region) {
        Ok(g) => (window.size() as f64).powi(g.nc as i32),
        Err(_) => f64::INFINITY,
    }
}

/// Same contract as [`super::partition_brute`], restricted to rectangles.
pub fn partition_transfer(
    region: &Arc<Region>,
    bc: &Arc<BoundaryCondition>,
    beta: InverseTemperature,
    window: HeightWindow,
    constraints: &Constraints,
) -> Result<PartitionResult> {
    let grid = Grid::new(region)?;
    let n = window.size();
    let states = (n as f64).powi(grid.nc as i32);
    if states > TRANSFER_STATE_LIMIT {
        return Err(Error::Guard { what: "transfer frontier states", requested: states, limit: TRANSFER_STATE_LIMIT });
    }
    let config = template(region, bc);
    let infeasible = || PartitionResult::infeasible(window, beta.value(), constraints, Method::Transfer);
    let Some(ranges) = constraints.site_ranges(&config, window) else {
        return Ok(infeasible());
    };
    let b = beta.value();
    let s_count = states as usize;

    let max_bc_gap = config
        .boundary_heights()
        .values()
        .map(|&v| (v - window.hmin).abs().max((v - window.hmax).abs()))
        .max()
        .unwrap_or(0) as usize;
    let table_len = (n - 1).max(max_bc_gap) + 1;
    let boltz: Vec<f64> = (0..table_len).map(|k| (-b * k as f64).exp()).collect();
    let bw = |h: i32, other: i32| boltz[(h - other).unsigned_abs() as usize];

    let mut v = vec![0.0f64; s_count];
    v[0] = 1.0;
    let mut next = vec![0.0f64; s_count];
    let mut log_scale = 0.0f64;
    let mut gathered = vec![0.0f64; n];

    for r in 0..grid.nr as i32 {
        for c in 0..grid.nc as i32 {
            let site = grid.site(c, r);
            let idx = region.index_of(site).expect("grid site in region");
            let (lo, hi) = ranges[idx];
            // weights of the bonds to frozen boundary sites, per candidate height
            let mut fixed_neighbors = Vec::with_capacity(4);
            if r == 0 {
                fixed_neighbors.push(config.get(grid.site(c, -1)));
            }
            if c == 0 {
                fixed_neighbors.push(config.get(grid.site(-1, r)));
            }
            if c == grid.nc as i32 - 1 {
                fixed_neighbors.push(config.get(grid.site(c + 1, r)));
            }
            if r == grid.nr as i32 - 1 {
                fixed_neighbors.push(config.get(grid.site(c, r + 1)));
            }
            let site_w: Vec<f64> = (0..n as i32)
                .map(|d| {
                    let h = window.hmin + d;
                    if h < lo || h > hi {
                        0.0
                    } else {
                        fixed_neighbors.iter().map(|&f| bw(h, f)).product()
                    }
                })
                .collect();

            let stride = n.pow(c as u32);
            let left_stride = if c > 0 { n.pow(c as u32 - 1) } else { 0 };
            next.iter_mut().for_each(|x| *x = 0.0);
            for base in 0..s_count {
                if !(base / stride).is_multiple_of(n) {
                    continue;
                }
                for (d, g) in gathered.iter_mut().enumerate() {
                    *g = v[base + d * stride];
                }
                let total: f64 = if r == 0 { gathered.iter().sum() } else { 0.0 };
                if r == 0 && total == 0.0 {
                    continue;
                }
                let left = (c > 0).then(|| ((base / left_stride) % n) as i32);
                for d in 0..n {
                    if site_w[d] == 0.0 {
                        continue;
                    }
                    let mut w = site_w[d];
                    if let Some(l) = left {
                        w *= boltz[(d as i32 - l).unsigned_abs() as usize];
                    }
                    let incoming = if r == 0 {
                        total
                    } else {
                        gathered
                            .iter()
                            .enumerate()
                            .map(|(o, g)| g * boltz[(d as i32 - o as i32).unsigned_abs() as usize])
                            .sum()
                    };
                    next[base + d * stride] = w * incoming;
                }
            }
            let max = next.iter().copied().fold(0.0, f64::max);
            if max == 0.0 {
                return Ok(infeasible());
            }
            next.iter_mut().for_each(|x| *x /= max);
            log_scale += max.ln();
            std::mem::swap(&mut v, &mut next);
        }
    }
    let total: f64 = v.iter().sum();
    Ok(PartitionResult {
        log_z: log_scale + total.ln(),
        window,
        beta: b,
        constraint_digest: constraints.digest(),
        method: Method::Transfer,
        infeasible: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::partition_brute;
    use crate::numerics::log_sum_exp;

    /// Direct recursion along a single column with zero side walls.
    fn column_oracle(rows: i32, beta: f64, window: HeightWindow, bottom: i32, top: i32) -> f64 {
        let hs: Vec<i32> = (window.hmin..=window.hmax).collect();
        // side walls at 0 contribute 2|h| per site
        let mut f: Vec<f64> = hs.iter().map(|&h| -beta * ((h - bottom).abs() + 2 * h.abs()) as f64).collect();
        for _ in 1..rows {
            f = hs
                .iter()
                .map(|&h| {
                    let terms: Vec<f64> =
                        hs.iter().zip(&f).map(|(&p, &fp)| fp - beta * ((h - p).abs() + 2 * h.abs()) as f64).collect();
                    log_sum_exp(&terms)
                })
                .collect();
        }
        let terms: Vec<f64> = hs.iter().zip(&f).map(|(&h, &fh)| fh - beta * (h - top).abs() as f64).collect();
        log_sum_exp(&terms)
    }

    #[test]
    fn column_matches_recursion() {
        let window = HeightWindow::new(-2, 3).unwrap();
        for rows in [1, 2, 5] {
            let m = rows / 2;
            let region = Arc::new(Region::block(0, -m, 1, rows).unwrap());
            let mut bc = std::collections::BTreeMap::new();
            for s in region.external_boundary() {
                let v = if s.x1 != 0 { 0 } else if s.x2 < 0 { -1 } else { 2 };
                bc.insert(s, v);
            }
            let bc = Arc::new(BoundaryCondition::Custom(bc));
            let beta = InverseTemperature::new(0.8).unwrap();
            let t = partition_transfer(&region, &bc, beta, window, &Constraints::none()).unwrap();
            assert!((t.log_z - column_oracle(rows, 0.8, window, -1, 2)).abs() < 1e-11, "rows {rows}");
        }
    }

    #[test]
    fn transposition_is_invisible() {
        let window = HeightWindow::new(-1, 2).unwrap();
        let beta = InverseTemperature::new(1.3).unwrap();
        let bc = Arc::new(BoundaryCondition::XiStep);
        let wide = Arc::new(Region::block(-1, 0, 4, 2).unwrap());
        let t = partition_transfer(&wide, &bc, beta, window, &Constraints::none()).unwrap();
        let b = partition_brute(&wide, &bc, beta, window, &Constraints::none()).unwrap();
        assert!((t.log_z - b.log_z).abs() < 1e-10);
    }

    #[test]
    fn rejects_non_rectangles() {
        let region = Arc::new(Region::custom([Site::new(0, 0), Site::new(1, 1)]).unwrap());
        let bc = Arc::new(BoundaryCondition::Zero);
        let beta = InverseTemperature::new(1.0).unwrap();
        let r = partition_transfer(&region, &bc, beta, HeightWindow::new(0, 1).unwrap(), &Constraints::none());
        assert!(matches!(r, Err(Error::NotRectangle)));
    }

    #[test]
    fn guard_trips() {
        let region = Arc::new(Region::square(6).unwrap());
        let bc = Arc::new(BoundaryCondition::Zero);
        let beta = InverseTemperature::new(1.0).unwrap();
        let r = partition_transfer(&region, &bc, beta, HeightWindow::new(-2, 2).unwrap(), &Constraints::none());
        assert!(matches!(r, Err(Error::Guard { .. })));
    }
}
