//! Dual-lattice geometry: level-line extraction, contour interiors and their
//! Δ± neighbourhoods, nesting, and the high-circuit event.
//!
//! Dual vertices are indexed by the site to their south-west: vertex `(i, j)`
//! is the point `(i + ½, j + ½)`. A dual bond is indexed by the primal bond
//! it crosses.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{typical_height, HeightConfig, Site};

/// Which primal bond a dual bond crosses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Crossing {
    /// Crosses `site — site + e₁`; the dual bond is vertical.
    East,
    /// Crosses `site — site + e₂`; the dual bond is horizontal.
    North,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DualVertex {
    pub i: i32,
    pub j: i32,
}

impl DualVertex {
    pub const fn new(i: i32, j: i32) -> Self {
        DualVertex { i, j }
    }

    /// The four sites at distance 1/√2.
    pub fn corners(self) -> [Site; 4] {
        [
            Site::new(self.i, self.j),
            Site::new(self.i + 1, self.j),
            Site::new(self.i, self.j + 1),
            Site::new(self.i + 1, self.j + 1),
        ]
    }

    fn arm(self, arm: Arm) -> DualBond {
        let (i, j) = (self.i, self.j);
        match arm {
            Arm::N => DualBond::new(Site::new(i, j + 1), Crossing::East),
            Arm::S => DualBond::new(Site::new(i, j), Crossing::East),
            Arm::E => DualBond::new(Site::new(i + 1, j), Crossing::North),
            Arm::W => DualBond::new(Site::new(i, j), Crossing::North),
        }
    }
}

/// Direction of a dual bond leaving a dual vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Arm {
    N,
    E,
    S,
    W,
}

impl Arm {
    const ALL: [Arm; 4] = [Arm::N, Arm::E, Arm::S, Arm::W];

    fn bit(self) -> u8 {
        match self {
            Arm::N => 1,
            Arm::E => 2,
            Arm::S => 4,
            Arm::W => 8,
        }
    }

    /// N and W lie above the 45° line through the vertex, S and E below it.
    fn above_diagonal(self) -> bool {
        matches!(self, Arm::N | Arm::W)
    }
}

/// Two orthogonal arms at a vertex are linked iff they lie on the same side of the 45° line.
fn linked(a: Arm, b: Arm) -> bool {
    let orthogonal = !matches!((a, b), (Arm::N, Arm::S) | (Arm::S, Arm::N) | (Arm::E, Arm::W) | (Arm::W, Arm::E));
    orthogonal && a != b && a.above_diagonal() == b.above_diagonal()
}

fn non_linked_corner(a: Arm, b: Arm) -> bool {
    let orthogonal = !matches!((a, b), (Arm::N, Arm::S) | (Arm::S, Arm::N) | (Arm::E, Arm::W) | (Arm::W, Arm::E));
    orthogonal && a != b && a.above_diagonal() != b.above_diagonal()
}

/// A dual bond, identified by the primal bond it crosses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DualBond {
    pub site: Site,
    pub crossing: Crossing,
}

impl DualBond {
    pub const fn new(site: Site, crossing: Crossing) -> Self {
        DualBond { site, crossing }
    }

    /// The dual bond separating two adjacent sites.
    pub fn between(x: Site, y: Site) -> Result<DualBond> {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        match (hi.x1 - lo.x1, hi.x2 - lo.x2) {
            (1, 0) => Ok(DualBond::new(lo, Crossing::East)),
            (0, 1) => Ok(DualBond::new(lo, Crossing::North)),
            _ => Err(Error::MalformedContour(format!("{x} and {y} are not adjacent"))),
        }
    }

    /// The two sites at distance ½.
    pub fn separated(self) -> (Site, Site) {
        match self.crossing {
            Crossing::East => (self.site, self.site.offset(1, 0)),
            Crossing::North => (self.site, self.site.offset(0, 1)),
        }
    }

    pub fn endpoints(self) -> (DualVertex, DualVertex) {
        let s = self.site;
        match self.crossing {
            Crossing::East => (DualVertex::new(s.x1, s.x2 - 1), DualVertex::new(s.x1, s.x2)),
            Crossing::North => (DualVertex::new(s.x1 - 1, s.x2), DualVertex::new(s.x1, s.x2)),
        }
    }

    /// The arm this bond occupies at one of its endpoints.
    fn arm_at(self, v: DualVertex) -> Arm {
        let (p, _) = self.endpoints();
        match (self.crossing, v == p) {
            (Crossing::East, true) => Arm::N,
            (Crossing::East, false) => Arm::S,
            (Crossing::North, true) => Arm::E,
            (Crossing::North, false) => Arm::W,
        }
    }

    fn other_end(self, v: DualVertex) -> DualVertex {
        let (p, q) = self.endpoints();
        if v == p {
            q
        } else {
            p
        }
    }

    fn shared_vertex(self, other: DualBond) -> Option<DualVertex> {
        let (p, q) = self.endpoints();
        let (r, s) = other.endpoints();
        if p == r || p == s {
            Some(p)
        } else if q == r || q == s {
            Some(q)
        } else {
            None
        }
    }
}

/// A closed or open dual-lattice circuit with its interior and Δ neighbourhoods.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Contour {
    bonds: Vec<DualBond>,
    closed: bool,
    interior: Vec<Site>,
    delta: BTreeSet<Site>,
    delta_plus: BTreeSet<Site>,
    delta_minus: BTreeSet<Site>,
}

impl Contour {
    /// Validate a cyclic bond sequence (the closing bond is not repeated).
    pub fn closed(bonds: Vec<DualBond>) -> Result<Contour> {
        if bonds.len() < 4 {
            return Err(Error::MalformedContour(format!("closed contour of length {}", bonds.len())));
        }
        let (vertices, pairs) = Self::check_chain(&bonds, true)?;
        Self::check_fourfold(&vertices, &pairs)?;
        let interior = ray_cast_interior(&bonds);
        let delta = delta_set(&bonds, &pairs);
        let inside: BTreeSet<Site> = interior.iter().copied().collect();
        let (delta_plus, delta_minus) = delta.iter().partition(|s| inside.contains(s));
        Ok(Contour { bonds, closed: true, interior, delta, delta_plus, delta_minus })
    }

    /// An open path of dual bonds; it has no interior and no Δ± split.
    pub fn open(bonds: Vec<DualBond>) -> Result<Contour> {
        if bonds.is_empty() {
            return Err(Error::MalformedContour("empty open contour".into()));
        }
        let (vertices, pairs) = Self::check_chain(&bonds, false)?;
        Self::check_fourfold(&vertices, &pairs)?;
        let delta = delta_set(&bonds, &pairs);
        Ok(Contour {
            bonds,
            closed: false,
            interior: Vec::new(),
            delta,
            delta_plus: BTreeSet::new(),
            delta_minus: BTreeSet::new(),
        })
    }

    /// The elementary contour: the unit square around a site.
    pub fn unit_square(x: Site) -> Contour {
        let bonds = vec![
            DualBond::new(x.offset(0, -1), Crossing::North),
            DualBond::new(x, Crossing::East),
            DualBond::new(x, Crossing::North),
            DualBond::new(x.offset(-1, 0), Crossing::East),
        ];
        Contour::closed(bonds).expect("unit square is a valid contour")
    }

    /// Consecutive-bond checks; returns the vertex sequence and arm pairs used at each.
    #[allow(clippy::type_complexity)]
    fn check_chain(bonds: &[DualBond], closed: bool) -> Result<(Vec<DualVertex>, Vec<(DualVertex, Arm, Arm)>)> {
        let distinct: BTreeSet<_> = bonds.iter().collect();
        if distinct.len() != bonds.len() {
            return Err(Error::MalformedContour("repeated dual bond".into()));
        }
        let n = bonds.len();
        let steps = if closed { n } else { n - 1 };
        let mut vertices = Vec::with_capacity(steps);
        let mut pairs = Vec::with_capacity(steps);
        let mut prev_vertex: Option<DualVertex> = None;
        for k in 0..steps {
            let (a, b) = (bonds[k], bonds[(k + 1) % n]);
            let v = match (a.shared_vertex(b), prev_vertex) {
                (None, _) => {
                    return Err(Error::MalformedContour(format!("bonds {k} and {} do not meet", (k + 1) % n)))
                }
                // a bond shares both endpoints with its successor only in degenerate 2-cycles
                (Some(v), Some(pv)) if v == pv => a.other_end(pv),
                (Some(v), _) => v,
            };
            if b.endpoints().0 != v && b.endpoints().1 != v {
                return Err(Error::MalformedContour(format!("bonds {k} and {} do not meet", (k + 1) % n)));
            }
            if let Some(pv) = prev_vertex {
                if v == pv {
                    return Err(Error::MalformedContour("path reverses on itself".into()));
                }
            }
            vertices.push(v);
            pairs.push((v, a.arm_at(v), b.arm_at(v)));
            prev_vertex = Some(v);
        }
        Ok((vertices, pairs))
    }

    /// Where four bonds of the contour meet, both consecutive pairs must be linked.
    fn check_fourfold(vertices: &[DualVertex], pairs: &[(DualVertex, Arm, Arm)]) -> Result<()> {
        let mut count: HashMap<DualVertex, usize> = HashMap::new();
        for v in vertices {
            *count.entry(*v).or_default() += 1;
        }
        for &(v, a, b) in pairs {
            if count[&v] >= 2 && !linked(a, b) {
                return Err(Error::MalformedContour(format!(
                    "non-linked pair at four-fold vertex ({}, {})",
                    v.i, v.j
                )));
            }
        }
        Ok(())
    }

    pub fn bonds(&self) -> &[DualBond] {
        &self.bonds
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// `|γ|`
    pub fn len(&self) -> usize {
        self.bonds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bonds.is_empty()
    }

    /// `Λ_γ` in raster order; empty for open contours.
    pub fn interior(&self) -> &[Site] {
        &self.interior
    }

    pub fn area(&self) -> usize {
        self.interior.len()
    }

    pub fn delta(&self) -> &BTreeSet<Site> {
        &self.delta
    }

    pub fn delta_plus(&self) -> &BTreeSet<Site> {
        &self.delta_plus
    }

    pub fn delta_minus(&self) -> &BTreeSet<Site> {
        &self.delta_minus
    }

    pub fn contains_bond(&self, b: DualBond) -> bool {
        self.bonds.contains(&b)
    }

    /// True iff `Λ_self ⊆ Λ_other`.
    pub fn inside(&self, other: &Contour) -> bool {
        self.interior.len() <= other.interior.len() && sorted_subset(&self.interior, &other.interior)
    }

    /// Nested or disjoint interiors.
    pub fn nested_or_disjoint(&self, other: &Contour) -> bool {
        let common = sorted_intersection_len(&self.interior, &other.interior);
        common == 0 || common == self.interior.len() || common == other.interior.len()
    }
}

fn sorted_subset(a: &[Site], b: &[Site]) -> bool {
    sorted_intersection_len(a, b) == a.len()
}

fn sorted_intersection_len(a: &[Site], b: &[Site]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Even–odd rule along rows: the ray from a site towards +x crosses the vertical
/// dual bonds of its own row to the right of it.
fn ray_cast_interior(bonds: &[DualBond]) -> Vec<Site> {
    let mut rows: BTreeMap<i32, Vec<i32>> = BTreeMap::new();
    for b in bonds {
        if b.crossing == Crossing::East {
            rows.entry(b.site.x2).or_default().push(b.site.x1);
        }
    }
    let mut out = Vec::new();
    for (y, mut xs) in rows {
        xs.sort_unstable();
        for pair in xs.chunks(2) {
            if let [lo, hi] = pair {
                out.extend((lo + 1..=*hi).map(|x| Site::new(x, y)));
            }
        }
    }
    out
}

fn delta_set(bonds: &[DualBond], pairs: &[(DualVertex, Arm, Arm)]) -> BTreeSet<Site> {
    let mut delta = BTreeSet::new();
    for b in bonds {
        let (x, y) = b.separated();
        delta.insert(x);
        delta.insert(y);
    }
    for &(v, a, b) in pairs {
        if non_linked_corner(a, b) {
            delta.extend(v.corners());
        }
    }
    delta
}

/// Whether the interior of a traced level line is the high or the low side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    /// `η ≥ h` inside: an h-contour.
    Up,
    /// `η ≤ h − 1` inside: the boundary of a hole or of a downward excursion.
    Down,
}

/// A contour traced at a given level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelLine {
    pub level: i32,
    pub sign: Sign,
    pub contour: Contour,
}

/// Closed level lines of `{η ≥ h}`.
///
/// Four-fold vertices are resolved into linked pairs. Every dual bond whose two
/// sites straddle `h` lies in exactly one returned line. Lines with [`Sign::Up`]
/// are h-contours; [`Sign::Down`] lines satisfy the mirrored Δ± test.
pub fn trace_level(config: &HeightConfig, h: i32) -> Result<Vec<LevelLine>> {
    let high = |s: Site| config.get(s) >= h;
    let bc_high: BTreeSet<bool> = config.boundary_heights().values().map(|&v| v >= h).collect();
    if bc_high.len() > 1 {
        return Err(Error::UnboundedLevelSet { level: h });
    }

    let region = config.region();
    let mut level_bonds: BTreeSet<DualBond> = BTreeSet::new();
    for &s in region.sites() {
        for n in s.neighbors() {
            if high(s) != high(n) {
                level_bonds.insert(DualBond::between(s, n)?);
            }
        }
    }

    let mut arms: HashMap<DualVertex, u8> = HashMap::new();
    for b in &level_bonds {
        let (p, q) = b.endpoints();
        *arms.entry(p).or_default() |= b.arm_at(p).bit();
        *arms.entry(q).or_default() |= b.arm_at(q).bit();
    }

    let partner = |v: DualVertex, a: Arm| -> Result<Arm> {
        let mask = arms[&v];
        match mask.count_ones() {
            2 => Ok(*Arm::ALL.iter().find(|x| x.bit() & mask != 0 && **x != a).expect("two arms")),
            4 => Ok(match a {
                Arm::N => Arm::W,
                Arm::W => Arm::N,
                Arm::S => Arm::E,
                Arm::E => Arm::S,
            }),
            k => Err(Error::MalformedContour(format!("{k} level bonds meet at ({}, {})", v.i, v.j))),
        }
    };

    let mut used: BTreeSet<DualBond> = BTreeSet::new();
    let mut out = Vec::new();
    for &start in &level_bonds {
        if used.contains(&start) {
            continue;
        }
        let mut seq = vec![start];
        used.insert(start);
        let mut cur = start;
        let mut v = start.endpoints().1;
        loop {
            let next = v.arm(partner(v, cur.arm_at(v))?);
            if next == start {
                break;
            }
            if !used.insert(next) {
                return Err(Error::MalformedContour("level bonds do not close up".into()));
            }
            seq.push(next);
            v = next.other_end(v);
            cur = next;
        }
        let contour = Contour::closed(seq)?;
        let sign = orientation(&contour, &high);
        out.push(LevelLine { level: h, sign, contour });
    }
    Ok(out)
}

fn orientation(contour: &Contour, high: &impl Fn(Site) -> bool) -> Sign {
    let b = contour.bonds()[0];
    let (x, y) = b.separated();
    let inner = if contour.interior.binary_search(&x).is_ok() { x } else { y };
    if high(inner) {
        Sign::Up
    } else {
        Sign::Down
    }
}

/// True iff `η ≤ h − 1` on `Δ⁻_γ` and `η ≥ h` on `Δ⁺_γ`.
pub fn is_h_contour(config: &HeightConfig, contour: &Contour, h: i32) -> Result<bool> {
    if !contour.is_closed() {
        return Err(Error::MalformedContour("h-contour test needs a closed contour".into()));
    }
    if let Some(s) = contour.interior().iter().find(|s| !config.region().contains(**s)) {
        return Err(Error::OutsideRegion(*s));
    }
    Ok(contour.delta_minus().iter().all(|&s| config.get(s) < h)
        && contour.delta_plus().iter().all(|&s| config.get(s) >= h))
}

/// `|η(x) − η(y)|` for the two sites separated by a dual bond.
pub fn crossing_count(config: &HeightConfig, bond: DualBond) -> u32 {
    let (x, y) = bond.separated();
    (config.get(x) - config.get(y)).unsigned_abs()
}

/// All level lines of a configuration with their nesting forest.
#[derive(Clone, Debug)]
pub struct LevelLineReport {
    pub lines: Vec<LevelLine>,
    /// `parent[i]` is the innermost line strictly enclosing line `i` (ties in
    /// interior broken by level, lower levels outside).
    pub parent: Vec<Option<usize>>,
}

pub fn all_contours(config: &HeightConfig) -> Result<LevelLineReport> {
    let bvals = config.boundary_heights().values().copied();
    let lo = bvals.clone().chain([config.min_height()]).min().unwrap_or(0);
    let hi = bvals.chain([config.max_height()]).max().unwrap_or(0);
    let mut lines = Vec::new();
    for h in lo + 1..=hi {
        lines.extend(trace_level(config, h)?);
    }
    let parent = nesting_forest(&lines);
    Ok(LevelLineReport { lines, parent })
}

fn nesting_forest(lines: &[LevelLine]) -> Vec<Option<usize>> {
    // a line is "outside" another when it has larger area, or equal area and lower level
    let outer_key = |i: usize| (std::cmp::Reverse(lines[i].contour.area()), lines[i].level, i);
    (0..lines.len())
        .map(|i| {
            (0..lines.len())
                .filter(|&j| j != i && outer_key(j) < outer_key(i))
                .filter(|&j| lines[i].contour.inside(&lines[j].contour))
                .max_by_key(|&j| outer_key(j))
        })
        .collect()
}

#[derive(Serialize)]
struct LineJson {
    length: usize,
    interior_area: usize,
    sign: Sign,
    #[serde(skip_serializing_if = "Option::is_none")]
    bonds: Option<Vec<DualBond>>,
}

impl LevelLineReport {
    pub fn levels(&self) -> BTreeMap<i32, Vec<&LevelLine>> {
        let mut out: BTreeMap<i32, Vec<&LevelLine>> = BTreeMap::new();
        for l in &self.lines {
            out.entry(l.level).or_default().push(l);
        }
        out
    }

    /// Number of lines containing each dual bond.
    pub fn multiplicity(&self) -> HashMap<DualBond, u32> {
        let mut m = HashMap::new();
        for l in &self.lines {
            for b in l.contour.bonds() {
                *m.entry(*b).or_default() += 1;
            }
        }
        m
    }

    pub fn total_length(&self) -> usize {
        self.lines.iter().map(|l| l.contour.len()).sum()
    }

    /// First pair of lines whose interiors overlap without nesting.
    pub fn nesting_violation(&self) -> Option<(usize, usize)> {
        let n = self.lines.len();
        let boxes: Vec<Option<(Site, Site)>> = self.lines.iter().map(|l| bbox(l.contour.interior())).collect();
        for i in 0..n {
            for j in i + 1..n {
                let (Some(a), Some(b)) = (boxes[i], boxes[j]) else { continue };
                let apart = a.1.x1 < b.0.x1 || b.1.x1 < a.0.x1 || a.1.x2 < b.0.x2 || b.1.x2 < a.0.x2;
                if !apart && !self.lines[i].contour.nested_or_disjoint(&self.lines[j].contour) {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// `{level → [{length, interior_area, sign, bonds?}]}`
    pub fn to_json(&self, with_bonds: bool) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (level, lines) in self.levels() {
            let entries: Vec<LineJson> = lines
                .iter()
                .map(|l| LineJson {
                    length: l.contour.len(),
                    interior_area: l.contour.area(),
                    sign: l.sign,
                    bonds: with_bonds.then(|| l.contour.bonds().to_vec()),
                })
                .collect();
            map.insert(level.to_string(), serde_json::to_value(entries).expect("serialisable"));
        }
        serde_json::Value::Object(map)
    }

    /// `level,count,total_length,max_length`
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("level,count,total_length,max_length\n");
        for (level, lines) in self.levels() {
            let total: usize = lines.iter().map(|l| l.contour.len()).sum();
            let max = lines.iter().map(|l| l.contour.len()).max().unwrap_or(0);
            out.push_str(&format!("{level},{},{total},{max}\n", lines.len()));
        }
        out
    }
}

fn bbox(sites: &[Site]) -> Option<(Site, Site)> {
    let first = *sites.first()?;
    Some(sites.iter().fold((first, first), |(lo, hi), s| {
        (
            Site::new(lo.x1.min(s.x1), lo.x2.min(s.x2)),
            Site::new(hi.x1.max(s.x1), hi.x2.max(s.x2)),
        )
    }))
}

/// Whether a nearest-neighbour circuit of sites with `η ≥ H(L) − K` surrounds
/// `Λ_{⌊(1−δ)L⌋}` inside `Λ_L`.
///
/// Decided by duality: such a circuit exists iff no *-connected (8-neighbour)
/// path of sites below the threshold joins the inner and outer rims of the annulus.
pub fn detect_high_circuit(config: &HeightConfig, delta: f64, k: i32, beta: f64, l: i32) -> Result<bool> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    if k < 0 {
        return Err(Error::InvalidParameter(format!("K must be nonnegative, got {k}")));
    }
    let r = ((1.0 - delta) * l as f64).floor() as i32;
    if l < 1 || r + 1 > l {
        return Err(Error::InvalidParameter(format!("annulus between radii {r} and {l} is empty")));
    }
    let region = config.region();
    for x2 in -l..=l {
        for x1 in -l..=l {
            if !region.contains(Site::new(x1, x2)) {
                return Err(Error::InvalidRegion(format!("region does not contain the box of radius {l}")));
            }
        }
    }
    let threshold = typical_height(l, beta) - k;
    let radius = |s: Site| s.x1.abs().max(s.x2.abs());
    let low = |s: Site| config.get(s) < threshold;

    let mut seen: BTreeSet<Site> = BTreeSet::new();
    let mut queue: VecDeque<Site> = VecDeque::new();
    for x2 in -(r + 1)..=(r + 1) {
        for x1 in -(r + 1)..=(r + 1) {
            let s = Site::new(x1, x2);
            if radius(s) == r + 1 && low(s) {
                seen.insert(s);
                queue.push_back(s);
            }
        }
    }
    while let Some(s) = queue.pop_front() {
        if radius(s) == l {
            return Ok(false);
        }
        for d1 in -1..=1 {
            for d2 in -1..=1 {
                let n = s.offset(d1, d2);
                let rn = radius(n);
                if rn > r && rn <= l && low(n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::lattice::{BoundaryCondition, Region};

    fn config_with(l: i32, raised: &[(i32, i32, i32)]) -> HeightConfig {
        let region = Arc::new(Region::square(l).unwrap());
        let mut c = HeightConfig::flat(region, Arc::new(BoundaryCondition::Zero), 0);
        for &(x, y, h) in raised {
            c.set(Site::new(x, y), h).unwrap();
        }
        c
    }

    #[test]
    fn linked_pairs_follow_the_diagonal() {
        assert!(linked(Arm::N, Arm::W));
        assert!(linked(Arm::S, Arm::E));
        assert!(!linked(Arm::N, Arm::E));
        assert!(!linked(Arm::N, Arm::S));
        assert!(non_linked_corner(Arm::S, Arm::W));
        assert!(!non_linked_corner(Arm::E, Arm::W));
    }

    #[test]
    fn elementary_square() {
        let g = Contour::unit_square(Site::new(0, 0));
        assert_eq!(g.len(), 4);
        assert_eq!(g.interior(), &[Site::new(0, 0)]);
        let expected: BTreeSet<Site> = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1)]
            .map(|(a, b)| Site::new(a, b))
            .into();
        assert_eq!(g.delta_minus(), &expected);
        assert_eq!(g.delta_plus().len(), 1);
    }

    #[test]
    fn spike_gives_one_unit_contour() {
        let c = config_with(2, &[(0, 0, 1)]);
        let lines = trace_level(&c, 1).unwrap();
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].contour.len(), 4);
        assert_eq!(lines[0].sign, Sign::Up);
        assert_eq!(lines[0].contour, Contour::unit_square(Site::new(0, 0)));
        assert!(trace_level(&c, 2).unwrap().is_empty());
    }

    #[test]
    fn flat_has_no_contours() {
        let c = config_with(3, &[]);
        for h in 1..4 {
            assert!(trace_level(&c, h).unwrap().is_empty());
        }
        assert!(all_contours(&c).unwrap().lines.is_empty());
    }

    #[test]
    fn block_contour() {
        let c = config_with(3, &[(0, 0, 1), (1, 0, 1), (0, 1, 1), (1, 1, 1)]);
        let lines = trace_level(&c, 1).unwrap();
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].contour.len(), 8);
        assert_eq!(lines[0].contour.area(), 4);
    }

    #[test]
    fn is_h_contour_examples() {
        let c = config_with(2, &[(0, 0, 1)]);
        let g = Contour::unit_square(Site::new(0, 0));
        assert!(is_h_contour(&c, &g, 1).unwrap());
        assert!(!is_h_contour(&c, &g, 2).unwrap());

        let c2 = config_with(2, &[(0, 0, 2)]);
        assert!(is_h_contour(&c2, &g, 1).unwrap());
        assert!(is_h_contour(&c2, &g, 2).unwrap());

        // a raised diagonal neighbour on the SW–NE axis breaks the contour
        let c3 = config_with(2, &[(0, 0, 1), (1, 1, 1)]);
        assert!(!is_h_contour(&c3, &g, 1).unwrap());
        // on the other diagonal it does not
        let c4 = config_with(2, &[(0, 0, 1), (1, -1, 1)]);
        assert!(is_h_contour(&c4, &g, 1).unwrap());

        let outside = Contour::unit_square(Site::new(5, 5));
        assert!(is_h_contour(&c, &outside, 1).is_err());
    }

    #[test]
    fn saddle_joins_the_sw_ne_diagonal() {
        // high sites on the SW–NE diagonal meet at a four-fold vertex: one contour
        let c = config_with(2, &[(0, 0, 1), (1, 1, 1)]);
        let lines = trace_level(&c, 1).unwrap();
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].contour.len(), 8);
        assert_eq!(lines[0].contour.area(), 2);
        assert!(is_h_contour(&c, &lines[0].contour, 1).unwrap());

        // on the NW–SE diagonal the high sites are split
        let c = config_with(2, &[(0, 0, 1), (1, -1, 1)]);
        let lines = trace_level(&c, 1).unwrap();
        assert_eq!(lines.len(), 2);
        assert!(lines.iter().all(|l| l.contour.len() == 4));
    }

    #[test]
    fn spike_of_two_has_coinciding_levels() {
        let c = config_with(2, &[(0, 0, 2)]);
        let rep = all_contours(&c).unwrap();
        assert_eq!(rep.lines.len(), 2);
        assert_eq!(rep.lines[0].contour, rep.lines[1].contour);
        assert_eq!(rep.parent, vec![None, Some(0)]);
    }

    #[test]
    fn plateau_nesting() {
        let mut raised = Vec::new();
        for x in -2i32..=2 {
            for y in -2i32..=2 {
                raised.push((x, y, if x.abs() <= 1 && y.abs() <= 1 { 2 } else { 1 }));
            }
        }
        let c = config_with(4, &raised);
        let rep = all_contours(&c).unwrap();
        assert_eq!(rep.lines.len(), 2);
        let outer = rep.lines.iter().position(|l| l.level == 1).unwrap();
        let inner = rep.lines.iter().position(|l| l.level == 2).unwrap();
        assert!(rep.lines[inner].contour.inside(&rep.lines[outer].contour));
        assert_eq!(rep.parent[inner], Some(outer));
        assert_eq!(rep.lines[outer].contour.len(), 20);
        assert_eq!(rep.lines[inner].contour.len(), 12);
    }

    #[test]
    fn holes_and_negative_excursions_are_down_lines() {
        let mut raised: Vec<(i32, i32, i32)> = Vec::new();
        for x in -2..=2 {
            for y in -2..=2 {
                if (x, y) != (0, 0) {
                    raised.push((x, y, 1));
                }
            }
        }
        raised.push((3, 3, -1));
        let c = config_with(4, &raised);
        let up = trace_level(&c, 1).unwrap();
        assert_eq!(up.len(), 2);
        let hole = up.iter().find(|l| l.sign == Sign::Down).unwrap();
        assert_eq!(hole.contour.interior(), &[Site::new(0, 0)]);
        let down = trace_level(&c, 0).unwrap();
        assert_eq!(down.len(), 1);
        assert_eq!(down[0].sign, Sign::Down);
    }

    #[test]
    fn straddling_boundary_is_rejected() {
        let region = Arc::new(Region::square(2).unwrap());
        let c = HeightConfig::flat(region, Arc::new(BoundaryCondition::XiStep), 0);
        assert!(matches!(trace_level(&c, 1), Err(Error::UnboundedLevelSet { level: 1 })));
        assert!(trace_level(&c, 2).unwrap().is_empty());
    }

    #[test]
    fn malformed_contours_are_rejected() {
        let s = Site::new(0, 0);
        let b = DualBond::new(s, Crossing::East);
        assert!(Contour::closed(vec![b, b, b, b]).is_err());
        let far = DualBond::new(Site::new(5, 5), Crossing::North);
        let mut bonds = Contour::unit_square(s).bonds().to_vec();
        bonds[2] = far;
        assert!(Contour::closed(bonds).is_err());
        // figure eight through the SW–NE saddle: linked pairs, accepted
        let eight = vec![
            DualBond::new(Site::new(0, -1), Crossing::North),
            DualBond::new(Site::new(0, 0), Crossing::East),
            DualBond::new(Site::new(1, 0), Crossing::North),
            DualBond::new(Site::new(1, 1), Crossing::East),
            DualBond::new(Site::new(1, 1), Crossing::North),
            DualBond::new(Site::new(0, 1), Crossing::East),
            DualBond::new(Site::new(0, 0), Crossing::North),
            DualBond::new(Site::new(-1, 0), Crossing::East),
        ];
        assert_eq!(Contour::closed(eight).unwrap().area(), 2);
        // the same through the NW–SE saddle pairs N with E: rejected
        let crossed = vec![
            DualBond::new(Site::new(1, -1), Crossing::North),
            DualBond::new(Site::new(1, 0), Crossing::East),
            DualBond::new(Site::new(1, 0), Crossing::North),
            DualBond::new(Site::new(0, 1), Crossing::East),
            DualBond::new(Site::new(0, 1), Crossing::North),
            DualBond::new(Site::new(-1, 1), Crossing::East),
            DualBond::new(Site::new(0, 0), Crossing::North),
            DualBond::new(Site::new(0, 0), Crossing::East),
        ];
        assert!(matches!(Contour::closed(crossed), Err(Error::MalformedContour(_))));
    }

    #[test]
    fn crossing_counts() {
        let c = config_with(1, &[(0, 0, 3)]);
        let b = DualBond::between(Site::new(0, 0), Site::new(1, 0)).unwrap();
        assert_eq!(crossing_count(&c, b), 3);
        let flat = config_with(1, &[]);
        assert_eq!(crossing_count(&flat, b), 0);
    }

    #[test]
    fn high_circuit_examples() {
        let beta = 0.25;
        let l = 8;
        let hl = typical_height(l, beta);
        assert_eq!(hl, 2);
        let k = 1;
        let region = Arc::new(Region::square(l).unwrap());
        let flat_high = HeightConfig::flat(region.clone(), Arc::new(BoundaryCondition::Zero), hl - k);
        assert!(detect_high_circuit(&flat_high, 0.5, k, beta, l).unwrap());
        let flat_zero = HeightConfig::flat(region.clone(), Arc::new(BoundaryCondition::Zero), 0);
        assert!(!detect_high_circuit(&flat_zero, 0.5, k, beta, l).unwrap());

        let delta = 0.5;
        let ring = ((1.0 - delta / 2.0) * l as f64).floor() as i32;
        let mut c = flat_zero.clone();
        for &s in region.sites() {
            if s.x1.abs().max(s.x2.abs()) == ring {
                c.set(s, hl - k).unwrap();
            }
        }
        assert!(detect_high_circuit(&c, delta, k, beta, l).unwrap());
        // a single gap breaks the ring
        c.set(Site::new(ring, 0), 0).unwrap();
        assert!(!detect_high_circuit(&c, delta, k, beta, l).unwrap());

        assert!(detect_high_circuit(&flat_zero, 0.0, k, beta, l).is_err());
        assert!(detect_high_circuit(&flat_zero, 0.5, -1, beta, l).is_err());
        assert!(detect_high_circuit(&flat_zero, 1.5, k, beta, l).is_err());
    }

    /// Enumerate simple nearest-neighbour cycles of high sites in the annulus of
    /// `Λ_2 ∖ {0}` and test whether one winds around the origin.
    fn circuit_oracle(c: &HeightConfig, threshold: i32) -> bool {
        let nodes: Vec<Site> = c
            .region()
            .sites()
            .iter()
            .copied()
            .filter(|s| *s != Site::new(0, 0) && c.get(*s) >= threshold)
            .collect();
        let idx: HashMap<Site, usize> = nodes.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        fn surrounds(path: &[Site]) -> bool {
            let mut crossings = 0;
            for k in 0..path.len() {
                let (a, b) = (path[k], path[(k + 1) % path.len()]);
                if a.x1 == b.x1 && a.x1 > 0 && a.x2.min(b.x2) == 0 {
                    crossings += 1;
                }
            }
            crossings % 2 == 1
        }
        fn dfs(start: usize, cur: usize, nodes: &[Site], idx: &HashMap<Site, usize>, path: &mut Vec<usize>, on: &mut Vec<bool>) -> bool {
            for n in nodes[cur].neighbors() {
                let Some(&j) = idx.get(&n) else { continue };
                if j == start && path.len() >= 4 {
                    let sites: Vec<Site> = path.iter().map(|&p| nodes[p]).collect();
                    if surrounds(&sites) {
                        return true;
                    }
                }
                if j > start && !on[j] {
                    on[j] = true;
                    path.push(j);
                    if dfs(start, j, nodes, idx, path, on) {
                        return true;
                    }
                    path.pop();
                    on[j] = false;
                }
            }
            false
        }
        (0..nodes.len()).any(|s| {
            let mut on = vec![false; nodes.len()];
            on[s] = true;
            dfs(s, s, &nodes, &idx, &mut vec![s], &mut on)
        })
    }

    #[test]
    fn high_circuit_matches_cycle_enumeration() {
        use rand_chacha::rand_core::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let region = Arc::new(Region::square(2).unwrap());
        // H(2) = 0 at beta = 1, so threshold = -K = 0
        for _ in 0..400 {
            let heights: Vec<i32> = (0..25).map(|_| if rng.next_u32() % 10 < 7 { 1 } else { -1 }).collect();
            let c = HeightConfig::from_heights(region.clone(), Arc::new(BoundaryCondition::Zero), heights).unwrap();
            assert_eq!(detect_high_circuit(&c, 0.6, 0, 1.0, 2).unwrap(), circuit_oracle(&c, 0));
        }
    }
}
