//! Möbius extraction of the zero-boundary cluster potentials
//! `φ(V) = Σ_{W ⊆ V} (−1)^{|V∖W|} log Z_W`.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{BoundaryCondition, InverseTemperature, Region, Site};
use crate::numerics::slope;

use super::{partition_brute, Constraints, HeightWindow};

/// Largest shape size for which potentials are tabulated.
pub const MAX_SHAPE_SITES: usize = 6;
/// Largest set on which the engine will run a Möbius sum.
const MAX_MOBIUS_SITES: usize = 12;

/// Translate so the minimum coordinates are zero; sorted in raster order.
pub fn canonical_shape(sites: &[Site]) -> Vec<Site> {
    let mx = sites.iter().map(|s| s.x1).min().unwrap_or(0);
    let my = sites.iter().map(|s| s.x2).min().unwrap_or(0);
    let mut out: Vec<Site> = sites.iter().map(|s| s.offset(-mx, -my)).collect();
    out.sort();
    out.dedup();
    out
}

/// Fixed polyominoes by size: `out[k]` holds the canonical shapes with `k + 1` sites.
pub fn fixed_polyominoes(max_sites: usize) -> Vec<Vec<Vec<Site>>> {
    let mut out: Vec<Vec<Vec<Site>>> = Vec::new();
    if max_sites == 0 {
        return out;
    }
    out.push(vec![vec![Site::new(0, 0)]]);
    for _ in 1..max_sites {
        let mut next: BTreeSet<Vec<Site>> = BTreeSet::new();
        for shape in out.last().expect("nonempty") {
            for s in shape {
                for n in s.neighbors() {
                    if !shape.contains(&n) {
                        let mut grown = shape.clone();
                        grown.push(n);
                        next.insert(canonical_shape(&grown));
                    }
                }
            }
        }
        out.push(next.into_iter().collect());
    }
    out
}

fn bond_connected(sites: &[Site]) -> bool {
    if sites.is_empty() {
        return true;
    }
    let set: BTreeSet<Site> = sites.iter().copied().collect();
    let mut seen = BTreeSet::from([sites[0]]);
    let mut stack = vec![sites[0]];
    while let Some(s) = stack.pop() {
        for n in s.neighbors() {
            if set.contains(&n) && seen.insert(n) {
                stack.push(n);
            }
        }
    }
    seen.len() == set.len()
}

/// Cached `log Z_W` (zero boundary condition) and Möbius potentials.
pub struct PotentialEngine {
    beta: InverseTemperature,
    window: HeightWindow,
    log_z: HashMap<Vec<Site>, f64>,
}

impl PotentialEngine {
    pub fn new(beta: InverseTemperature, window: HeightWindow) -> PotentialEngine {
        PotentialEngine { beta, window, log_z: HashMap::new() }
    }

    /// `log Z_W` computed directly, bypassing the translation cache.
    pub fn log_z_uncached(&self, sites: &[Site]) -> Result<f64> {
        if sites.is_empty() {
            return Ok(0.0);
        }
        let region = Arc::new(Region::custom(sites.iter().copied())?);
        let bc = Arc::new(BoundaryCondition::Zero);
        Ok(partition_brute(&region, &bc, self.beta, self.window, &Constraints::none())?.log_z)
    }

    pub fn log_z(&mut self, sites: &[Site]) -> Result<f64> {
        let key = canonical_shape(sites);
        if let Some(v) = self.log_z.get(&key) {
            return Ok(*v);
        }
        let v = self.log_z_uncached(&key)?;
        self.log_z.insert(key, v);
        Ok(v)
    }

    fn check_size(sites: &[Site]) -> Result<()> {
        if sites.len() > MAX_MOBIUS_SITES {
            return Err(Error::Guard {
                what: "Möbius set size",
                requested: sites.len() as f64,
                limit: MAX_MOBIUS_SITES as f64,
            });
        }
        Ok(())
    }

    fn subset(sites: &[Site], mask: u32) -> Vec<Site> {
        sites.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, s)| *s).collect()
    }

    /// `φ(V)`
    pub fn phi(&mut self, sites: &[Site]) -> Result<f64> {
        let v = canonical_shape(sites);
        Self::check_size(&v)?;
        let full = (1u32 << v.len()) - 1;
        let mut acc = 0.0;
        for mask in 0..=full {
            let sign = if (full & !mask).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
            acc += sign * self.log_z(&Self::subset(&v, mask))?;
        }
        Ok(acc)
    }

    /// `|Σ_{∅ ≠ V ⊆ Λ} φ(V) − log Z_Λ|`
    pub fn reconstruction_gap(&mut self, sites: &[Site]) -> Result<f64> {
        let l = canonical_shape(sites);
        Self::check_size(&l)?;
        let full = (1u32 << l.len()) - 1;
        let mut sum = 0.0;
        for mask in 1..=full {
            sum += self.phi(&Self::subset(&l, mask))?;
        }
        Ok((sum - self.log_z(&l)?).abs())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PotentialEntry {
    pub shape: Vec<Site>,
    pub size: usize,
    /// Largest ℓ¹ distance between two sites of the shape.
    pub diameter: i32,
    /// Perimeter of the bounding rectangle, standing in for the separating size `d(V)`.
    pub d_proxy: i32,
    pub connected: bool,
    pub phi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PotentialTable {
    pub beta: f64,
    pub window: HeightWindow,
    pub max_sites: usize,
    pub entries: Vec<PotentialEntry>,
    /// Largest `|log Z_V − log Z_{V+t}|` between a shape and a translate.
    pub shift_invariance_error: f64,
    /// Largest `|φ(V)|` over bond-disconnected shapes.
    pub max_disconnected_phi: f64,
    /// Least-squares slope of `log|φ|` against `d_proxy` over connected shapes of two or more sites.
    pub decay_slope: f64,
}

impl PotentialTable {
    pub fn get(&self, sites: &[Site]) -> Option<&PotentialEntry> {
        let key = canonical_shape(sites);
        self.entries.iter().find(|e| e.shape == key)
    }

    /// Largest `|φ|` over connected shapes of the given size.
    pub fn max_abs_phi(&self, size: usize) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.connected && e.size == size)
            .map(|e| e.phi.abs())
            .fold(0.0, f64::max)
    }

    /// `shape_id,size,d_proxy,phi,beta,window`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("shape_id,size,d_proxy,phi,beta,window\n");
        for e in &self.entries {
            let id: Vec<String> = e.shape.iter().map(|s| format!("{}:{}", s.x1, s.x2)).collect();
            out.push_str(&format!(
                "{},{},{},{},{},{}:{}\n",
                id.join(" "),
                e.size,
                e.d_proxy,
                crate::numerics::fmt_f64(e.phi),
                crate::numerics::fmt_f64(self.beta),
                self.window.hmin,
                self.window.hmax
            ));
        }
        out
    }
}

fn entry(shape: Vec<Site>, phi: f64) -> PotentialEntry {
    let w = shape.iter().map(|s| s.x1).max().unwrap_or(0) + 1;
    let h = shape.iter().map(|s| s.x2).max().unwrap_or(0) + 1;
    let diameter = shape
        .iter()
        .flat_map(|a| shape.iter().map(move |b| a.l1_distance(*b)))
        .max()
        .unwrap_or(0);
    PotentialEntry { size: shape.len(), diameter, d_proxy: 2 * (w + h), connected: bond_connected(&shape), phi, shape }
}

/// Potentials of every connected shape up to `max_sites`, plus the
/// bond-disconnected subsets of a 3×3 block with up to four sites.
pub fn extract_potentials(max_sites: usize, window: HeightWindow, beta: InverseTemperature) -> Result<PotentialTable> {
    if max_sites == 0 || max_sites > MAX_SHAPE_SITES {
        return Err(Error::Guard {
            what: "potential shape size",
            requested: max_sites as f64,
            limit: MAX_SHAPE_SITES as f64,
        });
    }
    let mut engine = PotentialEngine::new(beta, window);
    let mut shapes: Vec<Vec<Site>> = fixed_polyominoes(max_sites).into_iter().flatten().collect();
    let block: Vec<Site> = (0..3).flat_map(|y| (0..3).map(move |x| Site::new(x, y))).collect();
    let mut disconnected: BTreeSet<Vec<Site>> = BTreeSet::new();
    for mask in 1u32..(1 << 9) {
        let k = mask.count_ones() as usize;
        if k < 2 || k > max_sites.min(4) {
            continue;
        }
        let sub = PotentialEngine::subset(&block, mask);
        if !bond_connected(&sub) {
            disconnected.insert(canonical_shape(&sub));
        }
    }
    shapes.extend(disconnected);

    let mut entries = Vec::with_capacity(shapes.len());
    let mut shift_err: f64 = 0.0;
    for shape in shapes {
        let phi = engine.phi(&shape)?;
        let moved: Vec<Site> = shape.iter().map(|s| s.offset(7, -3)).collect();
        shift_err = shift_err.max((engine.log_z_uncached(&moved)? - engine.log_z(&shape)?).abs());
        entries.push(entry(shape, phi));
    }
    let max_disconnected_phi = entries.iter().filter(|e| !e.connected).map(|e| e.phi.abs()).fold(0.0, f64::max);
    let (xs, ys): (Vec<f64>, Vec<f64>) = entries
        .iter()
        .filter(|e| e.connected && e.size >= 2 && e.phi != 0.0)
        .map(|e| (f64::from(e.d_proxy), e.phi.abs().ln()))
        .unzip();
    let decay_slope = if xs.len() >= 2 { slope(&xs, &ys) } else { f64::NAN };
    Ok(PotentialTable {
        beta: beta.value(),
        window,
        max_sites,
        entries,
        shift_invariance_error: shift_err,
        max_disconnected_phi,
        decay_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polyomino_counts() {
        let counts: Vec<usize> = fixed_polyominoes(6).iter().map(|v| v.len()).collect();
        assert_eq!(counts, vec![1, 2, 6, 19, 63, 216]);
    }

    #[test]
    fn single_site_potential_is_log_z() {
        let beta = InverseTemperature::new(1.0).unwrap();
        let w = HeightWindow::new(-3, 3).unwrap();
        let mut eng = PotentialEngine::new(beta, w);
        let z: f64 = (-3..=3).map(|h: i32| (-4.0 * f64::from(h.abs())).exp()).sum();
        assert!((eng.phi(&[Site::new(4, 4)]).unwrap() - z.ln()).abs() < 1e-12);
    }

    #[test]
    fn separated_pair_vanishes() {
        let beta = InverseTemperature::new(1.0).unwrap();
        let mut eng = PotentialEngine::new(beta, HeightWindow::new(-2, 2).unwrap());
        let phi = eng.phi(&[Site::new(0, 0), Site::new(2, 0)]).unwrap();
        assert!(phi.abs() < 1e-10);
        // diagonal neighbours share no bond either
        let phi = eng.phi(&[Site::new(0, 0), Site::new(1, 1)]).unwrap();
        assert!(phi.abs() < 1e-10);
        // adjacent sites interact
        assert!(eng.phi(&[Site::new(0, 0), Site::new(1, 0)]).unwrap().abs() > 1e-6);
    }

    #[test]
    fn reconstruction_on_small_sets() {
        let beta = InverseTemperature::new(2.0).unwrap();
        let mut eng = PotentialEngine::new(beta, HeightWindow::new(-2, 2).unwrap());
        let l = [Site::new(0, 0), Site::new(1, 0), Site::new(1, 1), Site::new(3, 3)];
        assert!(eng.reconstruction_gap(&l).unwrap() < 1e-10);
    }

    #[test]
    fn guard_on_shape_size() {
        let beta = InverseTemperature::new(2.0).unwrap();
        assert!(matches!(
            extract_potentials(7, HeightWindow::new(-1, 1).unwrap(), beta),
            Err(Error::Guard { .. })
        ));
    }
}
