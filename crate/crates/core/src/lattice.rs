//! Lattice geometry: sites, regions, boundary conditions and height fields.
//!
//! Heights are `i32` and energies are accumulated exactly in `i64`; the
//! inverse temperature only enters when a Boltzmann weight is formed.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A site of ℤ².
///
/// Sites order in raster order: by row `x2` first, then column `x1`, so that
/// ordered collections iterate row-major from the bottom-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Site {
    pub x1: i32,
    pub x2: i32,
}

impl Site {
    pub const fn new(x1: i32, x2: i32) -> Self {
        Site { x1, x2 }
    }

    pub const fn offset(self, d1: i32, d2: i32) -> Self {
        Site::new(self.x1 + d1, self.x2 + d2)
    }

    /// The four nearest neighbours in the order E, N, W, S.
    pub fn neighbors(self) -> [Site; 4] {
        [
            self.offset(1, 0),
            self.offset(0, 1),
            self.offset(-1, 0),
            self.offset(0, -1),
        ]
    }

    pub fn l1_distance(self, other: Site) -> i32 {
        (self.x1 - other.x1).abs() + (self.x2 - other.x2).abs()
    }
}

impl Ord for Site {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.x2, self.x1).cmp(&(other.x2, other.x1))
    }
}

impl PartialOrd for Site {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x1, self.x2)
    }
}

/// An unordered nearest-neighbour pair, stored with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bond {
    pub a: Site,
    pub b: Site,
}

impl Bond {
    pub fn new(x: Site, y: Site) -> Self {
        debug_assert_eq!(x.l1_distance(y), 1);
        if x <= y {
            Bond { a: x, b: y }
        } else {
            Bond { a: y, b: x }
        }
    }
}

/// Inverse temperature, strictly positive.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct InverseTemperature(f64);

impl InverseTemperature {
    pub fn new(beta: f64) -> Result<Self> {
        if beta.is_finite() && beta > 0.0 {
            Ok(InverseTemperature(beta))
        } else {
            Err(Error::InvalidParameter(format!("beta must be positive and finite, got {beta}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// How a region was built.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionKind {
    /// `[-L, L]²`
    Box(i32),
    /// `[-L, L] × [-M, M]`
    Rectangle(i32, i32),
    /// `[-L, L] × ℤ`; infinite, so it cannot be materialised.
    Strip(i32),
    Custom(BTreeSet<Site>),
}

/// A finite set of sites with a raster-ordered index.
#[derive(Clone, Debug)]
pub struct Region {
    kind: RegionKind,
    sites: Vec<Site>,
    index: HashMap<Site, usize>,
}

impl PartialEq for Region {
    fn eq(&self, other: &Self) -> bool {
        self.sites == other.sites
    }
}

impl Region {
    pub fn build(kind: RegionKind) -> Result<Region> {
        let sites: Vec<Site> = match &kind {
            RegionKind::Box(l) => rect_sites(*l, *l)?,
            RegionKind::Rectangle(l, m) => rect_sites(*l, *m)?,
            RegionKind::Strip(_) => {
                return Err(Error::InvalidRegion(
                    "a strip is infinite; use a rectangle as its finite proxy".into(),
                ))
            }
            RegionKind::Custom(set) => {
                if set.is_empty() {
                    return Err(Error::InvalidRegion("custom region must be nonempty".into()));
                }
                set.iter().copied().collect()
            }
        };
        let index = sites.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        Ok(Region { kind, sites, index })
    }

    pub fn square(l: i32) -> Result<Region> {
        Region::build(RegionKind::Box(l))
    }

    pub fn rectangle(l: i32, m: i32) -> Result<Region> {
        Region::build(RegionKind::Rectangle(l, m))
    }

    pub fn custom<I: IntoIterator<Item = Site>>(sites: I) -> Result<Region> {
        Region::build(RegionKind::Custom(sites.into_iter().collect()))
    }

    /// The axis-aligned block `[x0, x0+w) × [y0, y0+h)`.
    pub fn block(x0: i32, y0: i32, w: i32, h: i32) -> Result<Region> {
        if w <= 0 || h <= 0 {
            return Err(Error::InvalidRegion(format!("block of size {w}x{h}")));
        }
        Region::custom((y0..y0 + h).flat_map(|y| (x0..x0 + w).map(move |x| Site::new(x, y))))
    }

    pub fn kind(&self) -> &RegionKind {
        &self.kind
    }

    /// Sites in raster order.
    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, s: Site) -> bool {
        self.index.contains_key(&s)
    }

    pub fn index_of(&self, s: Site) -> Option<usize> {
        self.index.get(&s).copied()
    }

    /// `(min corner, max corner)` of the bounding box.
    pub fn bounding_box(&self) -> (Site, Site) {
        let mut lo = self.sites[0];
        let mut hi = self.sites[0];
        for s in &self.sites {
            lo.x1 = lo.x1.min(s.x1);
            lo.x2 = lo.x2.min(s.x2);
            hi.x1 = hi.x1.max(s.x1);
            hi.x2 = hi.x2.max(s.x2);
        }
        (lo, hi)
    }

    /// Returns the bounding box if the region fills it completely.
    pub fn as_rectangle(&self) -> Option<(Site, Site)> {
        let (lo, hi) = self.bounding_box();
        let area = (hi.x1 - lo.x1 + 1) as usize * (hi.x2 - lo.x2 + 1) as usize;
        (area == self.sites.len()).then_some((lo, hi))
    }

    /// The region site closest to the centroid of the bounding box (the origin for boxes).
    pub fn center_site(&self) -> Site {
        let (lo, hi) = self.bounding_box();
        let c = Site::new((lo.x1 + hi.x1).div_euclid(2), (lo.x2 + hi.x2).div_euclid(2));
        if self.contains(c) {
            return c;
        }
        *self
            .sites
            .iter()
            .min_by_key(|s| (s.l1_distance(c), **s))
            .expect("region is nonempty")
    }

    /// Every unordered nearest-neighbour pair with at least one endpoint in the region.
    pub fn bonds(&self) -> BTreeSet<Bond> {
        let mut out = BTreeSet::new();
        for &s in &self.sites {
            for n in s.neighbors() {
                out.insert(Bond::new(s, n));
            }
        }
        out
    }

    /// Sites of the complement adjacent to the region.
    pub fn external_boundary(&self) -> BTreeSet<Site> {
        self.sites
            .iter()
            .flat_map(|s| s.neighbors())
            .filter(|n| !self.contains(*n))
            .collect()
    }

    /// Region sites at distance 1 from the external boundary, or at distance √2
    /// from it in the south-west or north-east direction.
    pub fn inner_boundary(&self) -> BTreeSet<Site> {
        let ext = self.external_boundary();
        self.sites
            .iter()
            .copied()
            .filter(|s| {
                s.neighbors().iter().any(|n| ext.contains(n))
                    || ext.contains(&s.offset(1, 1))
                    || ext.contains(&s.offset(-1, -1))
            })
            .collect()
    }

    /// `(∂Λ, ∂_*Λ)`
    pub fn boundaries(&self) -> (BTreeSet<Site>, BTreeSet<Site>) {
        (self.external_boundary(), self.inner_boundary())
    }

    /// True when the sites form a single nearest-neighbour connected component.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for n in self.sites[i].neighbors() {
                if let Some(j) = self.index_of(n) {
                    if !seen[j] {
                        seen[j] = true;
                        count += 1;
                        stack.push(j);
                    }
                }
            }
        }
        count == self.len()
    }
}

fn rect_sites(l: i32, m: i32) -> Result<Vec<Site>> {
    if l < 0 || m < 0 {
        return Err(Error::InvalidRegion(format!("negative size L={l}, M={m}")));
    }
    Ok((-m..=m).flat_map(|x2| (-l..=l).map(move |x1| Site::new(x1, x2))).collect())
}

/// Staircase boundary data on the rectangle `[-L, L] × [-M, M]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Staircase {
    pub a: Vec<i32>,
    pub b: Vec<i32>,
    pub l: i32,
    pub m: i32,
}

impl Staircase {
    pub fn new(a: Vec<i32>, b: Vec<i32>, l: i32, m: i32) -> Result<Staircase> {
        if l < 0 || m < 0 {
            return Err(Error::InvalidStaircase(format!("negative size L={l}, M={m}")));
        }
        if a.len() != b.len() {
            return Err(Error::InvalidStaircase(format!(
                "a has {} entries but b has {}",
                a.len(),
                b.len()
            )));
        }
        for (name, seq) in [("a", &a), ("b", &b)] {
            if seq.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::InvalidStaircase(format!("{name} is not sorted: {seq:?}")));
            }
            if seq.iter().any(|&v| v < -m || v > m) {
                return Err(Error::InvalidStaircase(format!("{name} leaves [-{m}, {m}]: {seq:?}")));
            }
        }
        Ok(Staircase { a, b, l, m })
    }

    pub fn steps(&self) -> i32 {
        self.a.len() as i32
    }

    /// Height on a wall with jump locations `jumps` at row `v`: the number of jumps `≤ v`.
    fn wall_height(jumps: &[i32], v: i32) -> i32 {
        jumps.iter().filter(|&&j| j <= v).count() as i32
    }

    fn height(&self, s: Site) -> Option<i32> {
        let (l, m) = (self.l, self.m);
        if s.x1 == -l - 1 && (-m..=m).contains(&s.x2) {
            Some(Self::wall_height(&self.a, s.x2))
        } else if s.x1 == l + 1 && (-m..=m).contains(&s.x2) {
            Some(Self::wall_height(&self.b, s.x2))
        } else if (-l..=l).contains(&s.x1) && s.x2 == -m - 1 {
            Some(0)
        } else if (-l..=l).contains(&s.x1) && s.x2 == m + 1 {
            Some(self.steps())
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundaryCondition {
    Zero,
    Constant(i32),
    Staircase(Staircase),
    /// 1 on sites with `x2 ≥ 0`, 0 elsewhere.
    XiStep,
    Custom(BTreeMap<Site, i32>),
}

impl BoundaryCondition {
    /// Height at a site outside the region. Reads outside the declared support
    /// resolve to 0 with a warning.
    pub fn height(&self, s: Site) -> i32 {
        match self {
            BoundaryCondition::Zero => 0,
            BoundaryCondition::Constant(h) => *h,
            BoundaryCondition::XiStep => i32::from(s.x2 >= 0),
            BoundaryCondition::Staircase(st) => st.height(s).unwrap_or_else(|| {
                log::warn!("staircase boundary read at {s} outside its support; using 0");
                0
            }),
            BoundaryCondition::Custom(map) => map.get(&s).copied().unwrap_or_else(|| {
                log::warn!("custom boundary read at {s} outside its support; using 0");
                0
            }),
        }
    }

    pub fn label(&self) -> String {
        match self {
            BoundaryCondition::Zero => "zero".into(),
            BoundaryCondition::Constant(h) => format!("constant({h})"),
            BoundaryCondition::XiStep => "xi_step".into(),
            BoundaryCondition::Staircase(st) => format!("staircase(a={:?};b={:?})", st.a, st.b),
            BoundaryCondition::Custom(map) => format!("custom({} sites)", map.len()),
        }
    }

    /// Materialise the heights on `∂Λ`.
    pub fn values_on(&self, region: &Region) -> BTreeMap<Site, i32> {
        region
            .external_boundary()
            .into_iter()
            .map(|s| (s, self.height(s)))
            .collect()
    }
}

/// A height field on a region together with its boundary condition.
#[derive(Clone, Debug)]
pub struct HeightConfig {
    region: Arc<Region>,
    bc: Arc<BoundaryCondition>,
    boundary: Arc<BTreeMap<Site, i32>>,
    heights: Vec<i32>,
}

impl PartialEq for HeightConfig {
    fn eq(&self, other: &Self) -> bool {
        self.region == other.region && self.boundary == other.boundary && self.heights == other.heights
    }
}

impl HeightConfig {
    pub fn flat(region: Arc<Region>, bc: Arc<BoundaryCondition>, h: i32) -> HeightConfig {
        let boundary = Arc::new(bc.values_on(&region));
        let heights = vec![h; region.len()];
        HeightConfig { region, bc, boundary, heights }
    }

    /// Heights given in raster order.
    pub fn from_heights(
        region: Arc<Region>,
        bc: Arc<BoundaryCondition>,
        heights: Vec<i32>,
    ) -> Result<HeightConfig> {
        if heights.len() != region.len() {
            return Err(Error::InvalidParameter(format!(
                "{} heights for a region of {} sites",
                heights.len(),
                region.len()
            )));
        }
        let boundary = Arc::new(bc.values_on(&region));
        Ok(HeightConfig { region, bc, boundary, heights })
    }

    pub fn region(&self) -> &Arc<Region> {
        &self.region
    }

    pub fn bc(&self) -> &Arc<BoundaryCondition> {
        &self.bc
    }

    /// Heights on `∂Λ`.
    pub fn boundary_heights(&self) -> &BTreeMap<Site, i32> {
        &self.boundary
    }

    /// Heights in raster order.
    pub fn heights(&self) -> &[i32] {
        &self.heights
    }

    pub fn heights_mut(&mut self) -> &mut [i32] {
        &mut self.heights
    }

    /// Height anywhere in ℤ²: region sites read the field, the rest the boundary condition.
    pub fn get(&self, s: Site) -> i32 {
        match self.region.index_of(s) {
            Some(i) => self.heights[i],
            None => match self.boundary.get(&s) {
                Some(h) => *h,
                None => self.bc.height(s),
            },
        }
    }

    pub fn set(&mut self, s: Site, h: i32) -> Result<()> {
        let i = self.region.index_of(s).ok_or(Error::OutsideRegion(s))?;
        self.heights[i] = h;
        Ok(())
    }

    pub fn min_height(&self) -> i32 {
        self.heights.iter().copied().min().unwrap_or(0)
    }

    pub fn max_height(&self) -> i32 {
        self.heights.iter().copied().max().unwrap_or(0)
    }

    pub fn mean_height(&self) -> f64 {
        self.heights.iter().map(|&h| h as f64).sum::<f64>() / self.heights.len() as f64
    }

    /// `Σ_{xy ∈ ℬ_Λ} |η(x) − η(y)|`
    pub fn energy(&self) -> i64 {
        let mut e = 0i64;
        for (i, &s) in self.region.sites().iter().enumerate() {
            let h = self.heights[i];
            for (k, n) in s.neighbors().into_iter().enumerate() {
                let inside = self.region.contains(n);
                // internal bonds are counted from their lower-left end only
                if inside && k >= 2 {
                    continue;
                }
                e += (h - self.get(n)).abs() as i64;
            }
        }
        e
    }

    /// `energy(η with η(site) = new_height) − energy(η)`, touching only the incident bonds.
    pub fn energy_delta(&self, s: Site, new_height: i32) -> Result<i64> {
        let i = self.region.index_of(s).ok_or(Error::OutsideRegion(s))?;
        let old = self.heights[i];
        Ok(s.neighbors()
            .iter()
            .map(|&n| {
                let hn = self.get(n);
                ((new_height - hn).abs() - (old - hn).abs()) as i64
            })
            .sum())
    }
}

/// A neighbour of a region site as seen by a local update: either another
/// region site (by raster index) or a frozen boundary height.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Neighbor {
    Site(u32),
    Fixed(i32),
}

/// Precomputed neighbour lookups for all region sites, E, N, W, S order.
#[derive(Clone, Debug)]
pub struct NeighborTable {
    entries: Vec<[Neighbor; 4]>,
}

impl NeighborTable {
    pub fn new(config: &HeightConfig) -> NeighborTable {
        let region = config.region();
        let entries = region
            .sites()
            .iter()
            .map(|s| {
                s.neighbors().map(|n| match region.index_of(n) {
                    Some(j) => Neighbor::Site(j as u32),
                    None => Neighbor::Fixed(config.get(n)),
                })
            })
            .collect();
        NeighborTable { entries }
    }

    pub fn get(&self, i: usize) -> &[Neighbor; 4] {
        &self.entries[i]
    }

    #[inline]
    pub fn heights_around(&self, i: usize, heights: &[i32]) -> [i32; 4] {
        self.entries[i].map(|n| match n {
            Neighbor::Site(j) => heights[j as usize],
            Neighbor::Fixed(h) => h,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Serialise a height field on a rectangular region.
///
/// Line 1 is `W H hoff`; then `H` rows of `W` integers, top row first. Stored
/// values are `height − hoff` with `hoff` the minimum height.
pub fn to_text(config: &HeightConfig) -> Result<String> {
    let (lo, hi) = config.region().as_rectangle().ok_or(Error::NotRectangle)?;
    let w = hi.x1 - lo.x1 + 1;
    let h = hi.x2 - lo.x2 + 1;
    let hoff = config.min_height();
    let mut out = format!("{w} {h} {hoff}\n");
    for x2 in (lo.x2..=hi.x2).rev() {
        let row: Vec<String> = (lo.x1..=hi.x1)
            .map(|x1| (config.get(Site::new(x1, x2)) - hoff).to_string())
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    Ok(out)
}

/// Parse the text height-field format onto a centred block with zero boundary condition.
///
/// The block spans `x1 ∈ [-(W-1)/2, …]`, `x2 ∈ [-(H-1)/2, …]` (floor division), which
/// is exactly `Λ_{L,M}` when both sides are odd.
pub fn from_text(text: &str) -> Result<HeightConfig> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty height file".into()))?;
    let nums = parse_ints(header)?;
    let [w, h, hoff] = nums[..] else {
        return Err(Error::Parse(format!("header must be 'W H hoff', got {header:?}")));
    };
    if w <= 0 || h <= 0 {
        return Err(Error::Parse(format!("non-positive dimensions {w}x{h}")));
    }
    let x0 = -(w - 1).div_euclid(2);
    let y0 = -(h - 1).div_euclid(2);
    let region = Arc::new(Region::block(x0, y0, w, h)?);
    let mut config = HeightConfig::flat(region, Arc::new(BoundaryCondition::Zero), 0);
    let mut rows = 0;
    for (r, line) in lines.enumerate() {
        if r as i32 >= h {
            return Err(Error::Parse(format!("more than {h} rows")));
        }
        let vals = parse_ints(line)?;
        if vals.len() != w as usize {
            return Err(Error::Parse(format!("row {} has {} entries, expected {w}", r + 1, vals.len())));
        }
        let x2 = y0 + h - 1 - r as i32;
        for (c, v) in vals.into_iter().enumerate() {
            config.set(Site::new(x0 + c as i32, x2), v + hoff)?;
        }
        rows += 1;
    }
    if rows != h {
        return Err(Error::Parse(format!("expected {h} rows, found {rows}")));
    }
    Ok(config)
}

fn parse_ints(line: &str) -> Result<Vec<i32>> {
    line.split_whitespace()
        .map(|t| t.parse::<i32>().map_err(|e| Error::Parse(format!("{t:?}: {e}"))))
        .collect()
}

/// `H(L) = ⌊ln L / (4β)⌋`, natural logarithm; 0 for `L ≤ 1`.
pub fn typical_height(l: i32, beta: f64) -> i32 {
    if l <= 1 {
        return 0;
    }
    ((l as f64).ln() / (4.0 * beta)).floor() as i32
}
