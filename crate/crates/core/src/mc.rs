//! Heat-bath Monte Carlo for the SOS Gibbs measure.
//!
//! Single-site updates sample the exact conditional law over all of ℤ (or
//! over `h ≥ floor`), using closed-form geometric tails outside the range of
//! the neighbour heights, so no height window is involved.
//!
//! Uniforms are a pure function of `(seed, stream, sweep, site)`: sweep `t`
//! of a chain on `N` sites reads the ChaCha8 keystream of `(seed, stream)`
//! from word `2·N·t` onward, one `u64` per site in raster order.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contours::{all_contours, detect_high_circuit};
use crate::error::{Error, Result};
use crate::lattice::{typical_height, BoundaryCondition, HeightConfig, InverseTemperature, NeighborTable, Region};

/// Number of bonds at every site of ℤ².
const Q: i32 = 4;

/// Exact single-site conditional `∝ exp(−β Σ_k |h − n_k|)`.
#[derive(Clone, Copy, Debug)]
pub struct HeatBathKernel {
    beta: f64,
    /// `e^{−qβ}`, the tail ratio.
    r: f64,
}

/// The conditional law at one site for fixed neighbours.
#[derive(Clone, Copy, Debug)]
pub struct SiteLaw {
    n: [i32; 4],
    beta: f64,
    r: f64,
    lo: i32,
    hi: i32,
    floor: Option<i32>,
    /// Energy at the lowest enumerated height, used as the reference weight 1.
    f_ref: i32,
    lower: f64,
    middle: f64,
    upper: f64,
}

impl HeatBathKernel {
    pub fn new(beta: InverseTemperature) -> HeatBathKernel {
        let b = beta.value();
        HeatBathKernel { beta: b, r: (-f64::from(Q) * b).exp() }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn law(&self, neighbors: [i32; 4], floor: Option<i32>) -> SiteLaw {
        let mut n = neighbors;
        n.sort_unstable();
        let (m, big_m) = (n[0], n[3]);
        let lo = floor.map_or(m, |f| f.max(m));
        let hi = big_m.max(lo);
        let f = |h: i32| n.iter().map(|&x| (h - x).abs()).sum::<i32>();
        let f_ref = f(lo);
        let w = |h: i32| (-self.beta * f64::from(f(h) - f_ref)).exp();
        let r = self.r;

        let middle: f64 = (lo..=hi).map(w).sum();
        let lower = match floor {
            None => r / (1.0 - r),
            Some(fl) if fl < m => r * (1.0 - r.powi(m - fl)) / (1.0 - r),
            Some(_) => 0.0,
        };
        let upper = w(hi) * r / (1.0 - r);
        SiteLaw { n, beta: self.beta, r, lo, hi, floor, f_ref, lower, middle, upper }
    }

    /// Inverse-CDF draw; nondecreasing in `u` and in every neighbour height.
    pub fn sample(&self, neighbors: [i32; 4], floor: Option<i32>, u: f64) -> i32 {
        self.law(neighbors, floor).quantile(u)
    }
}

impl SiteLaw {
    fn weight(&self, h: i32) -> f64 {
        let f: i32 = self.n.iter().map(|&x| (h - x).abs()).sum();
        (-self.beta * f64::from(f - self.f_ref)).exp()
    }

    fn total(&self) -> f64 {
        self.lower + self.middle + self.upper
    }

    /// `ℙ(h)`
    pub fn pmf(&self, h: i32) -> f64 {
        if self.floor.is_some_and(|f| h < f) {
            return 0.0;
        }
        self.weight(h) / self.total()
    }

    /// `ℙ(η ≤ h)`
    pub fn cdf(&self, h: i32) -> f64 {
        let r = self.r;
        let t = self.total();
        if self.floor.is_some_and(|f| h < f) {
            return 0.0;
        }
        if h < self.lo {
            // lower tail below lo = min neighbour: Σ_{k ≥ lo−h} r^k, cut at the floor
            let k = self.lo - h;
            let tail = match self.floor {
                None => r.powi(k) / (1.0 - r),
                Some(f) => (r.powi(k) - r.powi(self.lo - f + 1)) / (1.0 - r),
            };
            return tail / t;
        }
        let mid: f64 = (self.lo..=h.min(self.hi)).map(|x| self.weight(x)).sum();
        let up = if h > self.hi {
            self.weight(self.hi) * r * (1.0 - r.powi(h - self.hi)) / (1.0 - r)
        } else {
            0.0
        };
        ((self.lower + mid + up) / t).min(1.0)
    }

    /// Smallest `h` with `cdf(h) > u`.
    pub fn quantile(&self, u: f64) -> i32 {
        let r = self.r;
        let ln_r = r.ln();
        let t = u * self.total();
        if t < self.lower {
            // below lo: cumulative weight up to lo − k is (r^k − r^{K+1})/(1 − r), K = lo − floor
            let cut = match self.floor {
                None => 0.0,
                Some(f) => r.powi(self.lo - f + 1),
            };
            let max_k = self.floor.map_or(i32::MAX, |f| self.lo - f);
            let cum = |k: i32| (r.powi(k) - cut) / (1.0 - r);
            let x = (t.max(f64::MIN_POSITIVE) * (1.0 - r) + cut).max(f64::MIN_POSITIVE);
            let guess = ((x.ln() / ln_r).ceil() - 1.0).clamp(1.0, f64::from(max_k.min(1 << 20)));
            let mut k = guess as i32;
            while k < max_k && cum(k + 1) > t {
                k += 1;
            }
            while k > 1 && cum(k) <= t {
                k -= 1;
            }
            return self.lo - k;
        }
        let mut acc = self.lower;
        for h in self.lo..=self.hi {
            acc += self.weight(h);
            if acc > t {
                return h;
            }
        }
        // above hi: cumulative tail weight through hi + k is w_hi·r(1 − r^k)/(1 − r)
        let w_hi = self.weight(self.hi);
        let rest = t - acc;
        let cum = |k: i32| w_hi * r * (1.0 - r.powi(k)) / (1.0 - r);
        let y = (rest * (1.0 - r) / (w_hi * r)).min(1.0 - f64::EPSILON);
        let guess = ((1.0 - y).ln() / ln_r).floor() + 1.0;
        let mut k = guess.clamp(1.0, f64::from(1 << 20)) as i32;
        while k > 1 && cum(k - 1) > rest {
            k -= 1;
        }
        while cum(k) <= rest && k < (1 << 20) {
            k += 1;
        }
        self.hi + k
    }
}

/// Seed and stream index of a chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RandomSeed {
    pub fn new(seed: u64, stream: u64) -> RandomSeed {
        RandomSeed { seed, stream }
    }

    fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn to_unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A single heat-bath chain with optional per-site floors.
#[derive(Clone, Debug)]
pub struct ChainState {
    config: HeightConfig,
    table: NeighborTable,
    kernel: HeatBathKernel,
    floors: Vec<Option<i32>>,
    sweep_count: u64,
    seed: RandomSeed,
    rng: ChaCha8Rng,
}

impl ChainState {
    /// A chain with the same floor (or none) at every site.
    pub fn new(config: HeightConfig, beta: InverseTemperature, floor: Option<i32>, seed: RandomSeed) -> Result<Self> {
        let floors = vec![floor; config.region().len()];
        Self::with_floors(config, beta, floors, seed)
    }

    /// A chain with floors given per site in raster order.
    pub fn with_floors(
        config: HeightConfig,
        beta: InverseTemperature,
        floors: Vec<Option<i32>>,
        seed: RandomSeed,
    ) -> Result<Self> {
        if floors.len() != config.region().len() {
            return Err(Error::InvalidParameter("one floor entry per site required".into()));
        }
        for (i, f) in floors.iter().enumerate() {
            if let Some(f) = f {
                if config.heights()[i] < *f {
                    return Err(Error::InvalidParameter(format!(
                        "initial height {} at {} is below its floor {f}",
                        config.heights()[i],
                        config.region().sites()[i]
                    )));
                }
            }
        }
        let table = NeighborTable::new(&config);
        Ok(ChainState {
            config,
            table,
            kernel: HeatBathKernel::new(beta),
            floors,
            sweep_count: 0,
            seed,
            rng: seed.rng(),
        })
    }

    pub fn config(&self) -> &HeightConfig {
        &self.config
    }

    pub fn heights(&self) -> &[i32] {
        self.config.heights()
    }

    pub fn sweep_count(&self) -> u64 {
        self.sweep_count
    }

    pub fn seed(&self) -> RandomSeed {
        self.seed
    }

    pub fn kernel(&self) -> &HeatBathKernel {
        &self.kernel
    }

    pub fn floors(&self) -> &[Option<i32>] {
        &self.floors
    }

    pub fn neighbor_heights(&self, i: usize) -> [i32; 4] {
        self.table.heights_around(i, self.config.heights())
    }

    /// Conditional law at site `i` given the current neighbours.
    pub fn site_law(&self, i: usize) -> SiteLaw {
        self.kernel.law(self.neighbor_heights(i), self.floors[i])
    }

    fn start_sweep(&mut self) {
        let n = self.config.region().len() as u128;
        self.rng.set_word_pos(2 * n * u128::from(self.sweep_count));
    }

    fn next_uniform(&mut self) -> f64 {
        to_unit(self.rng.next_u64())
    }

    /// Resample site `i` from `u`.
    pub fn update_site(&mut self, i: usize, u: f64) {
        let h = self.kernel.sample(self.neighbor_heights(i), self.floors[i], u);
        self.config.heights_mut()[i] = h;
    }

    /// One raster-order sweep.
    pub fn sweep(&mut self) {
        self.start_sweep();
        for i in 0..self.config.region().len() {
            let u = self.next_uniform();
            self.update_site(i, u);
        }
        self.sweep_count += 1;
    }

    /// One sweep that also calls `visit(i, self)` just before each update.
    pub fn sweep_visiting(&mut self, mut visit: impl FnMut(usize, &ChainState)) {
        self.start_sweep();
        for i in 0..self.config.region().len() {
            visit(i, self);
            let u = self.next_uniform();
            self.update_site(i, u);
        }
        self.sweep_count += 1;
    }
}

/// Default burn-in: `10·L` sweeps, doubled under a floor.
pub fn default_burnin(l: i32, floor: bool) -> u64 {
    let base = 10 * l.max(1) as u64;
    if floor {
        2 * base
    } else {
        base
    }
}

/// Half-width of a region's bounding box, the `L` of `Λ_L`.
pub fn region_half_width(region: &Region) -> i32 {
    let (lo, hi) = region.bounding_box();
    ((hi.x1 - lo.x1).max(hi.x2 - lo.x2)) / 2
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Observables {
    pub sweep: u64,
    pub mean_height: f64,
    pub center_height: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level_line_counts: Option<BTreeMap<i32, usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub high_circuit: Option<bool>,
    pub l: i32,
    pub beta: f64,
}

impl Observables {
    /// `H(L) = ⌊ln L/(4β)⌋`, recomputed on every call.
    pub fn h_of_l(&self) -> i32 {
        typical_height(self.l, self.beta)
    }
}

/// Which optional observables to measure.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservableOptions {
    pub level_lines: bool,
    /// `(δ, K)` for the high-circuit event.
    pub high_circuit: Option<(f64, i32)>,
}

pub fn measure(config: &HeightConfig, sweep: u64, beta: f64, opts: &ObservableOptions) -> Result<Observables> {
    let region = config.region();
    let l = region_half_width(region);
    let level_line_counts = if opts.level_lines {
        let rep = all_contours(config)?;
        let mut counts = BTreeMap::new();
        for line in &rep.lines {
            *counts.entry(line.level).or_insert(0) += 1;
        }
        Some(counts)
    } else {
        None
    };
    let high_circuit = match opts.high_circuit {
        Some((delta, k)) => Some(detect_high_circuit(config, delta, k, beta, l)?),
        None => None,
    };
    Ok(Observables {
        sweep,
        mean_height: config.mean_height(),
        center_height: config.get(region.center_site()),
        level_line_counts,
        high_circuit,
        l,
        beta,
    })
}

/// Parameters of [`run_chain`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub beta: f64,
    pub floor: Option<i32>,
    /// Total sweeps including burn-in.
    pub sweeps: u64,
    /// `None` selects [`default_burnin`].
    pub burnin: Option<u64>,
    pub seed: RandomSeed,
    pub every: u64,
    pub initial_height: i32,
    pub observables: ObservableOptions,
}

#[derive(Clone, Debug)]
pub struct ChainRun {
    /// The burn-in actually used.
    pub burnin: u64,
    pub observables: Vec<Observables>,
    pub final_config: HeightConfig,
}

/// Sweep a chain from a flat start and record observables after burn-in.
pub fn run_chain(region: &Arc<Region>, bc: &Arc<BoundaryCondition>, params: &ChainParams) -> Result<ChainRun> {
    let beta = InverseTemperature::new(params.beta)?;
    let burnin = params
        .burnin
        .unwrap_or_else(|| default_burnin(region_half_width(region), params.floor.is_some()));
    if params.sweeps <= burnin {
        return Err(Error::InvalidParameter(format!(
            "sweeps ({}) must exceed burn-in ({burnin})",
            params.sweeps
        )));
    }
    if params.every == 0 {
        return Err(Error::InvalidParameter("observation interval must be positive".into()));
    }
    let start = params.floor.map_or(params.initial_height, |f| params.initial_height.max(f));
    let config = HeightConfig::flat(region.clone(), bc.clone(), start);
    let mut chain = ChainState::new(config, beta, params.floor, params.seed)?;
    let mut out = Vec::new();
    for t in 1..=params.sweeps {
        chain.sweep();
        if t > burnin && (t - burnin).is_multiple_of(params.every) {
            out.push(measure(chain.config(), t, params.beta, &params.observables)?);
        }
    }
    Ok(ChainRun { burnin, observables: out, final_config: chain.config })
}

/// Observable stream as CSV; level counts flattened over the levels present.
pub fn observables_csv(obs: &[Observables]) -> String {
    let levels: std::collections::BTreeSet<i32> =
        obs.iter().filter_map(|o| o.level_line_counts.as_ref()).flat_map(|m| m.keys().copied()).collect();
    let mut out = String::from("sweep,mean_height,center_height,circuit_flag");
    for l in &levels {
        out.push_str(&format!(",level_{l}"));
    }
    out.push('\n');
    for o in obs {
        let flag = o.high_circuit.map_or(String::new(), |b| u8::from(b).to_string());
        out.push_str(&format!(
            "{},{},{},{}",
            o.sweep,
            crate::numerics::fmt_f64(o.mean_height),
            o.center_height,
            flag
        ));
        for l in &levels {
            let c = o.level_line_counts.as_ref().and_then(|m| m.get(l)).copied().unwrap_or(0);
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderViolation {
    pub sweep: u64,
    pub site: usize,
    pub low: i32,
    pub high: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingReport {
    pub sweeps: u64,
    pub violations: Vec<OrderViolation>,
    /// `max_x (high(x) − low(x))` after each sweep.
    pub sup_distance: Vec<i32>,
}

/// Drive two chains with identical uniforms and record any breach of `low ≤ high`.
pub fn coupled_run(
    low: HeightConfig,
    high: HeightConfig,
    beta: InverseTemperature,
    floor: Option<i32>,
    sweeps: u64,
    seed: RandomSeed,
) -> Result<CouplingReport> {
    if low.region() != high.region() {
        return Err(Error::InvalidParameter("coupled chains need the same region".into()));
    }
    let ordered = low.heights().iter().zip(high.heights()).all(|(a, b)| a <= b)
        && low
            .boundary_heights()
            .iter()
            .all(|(s, v)| *v <= high.boundary_heights().get(s).copied().unwrap_or(i32::MAX));
    if !ordered {
        return Err(Error::InvalidParameter("initial configurations or boundary conditions are not ordered".into()));
    }
    let mut a = ChainState::new(low, beta, floor, seed)?;
    let mut b = ChainState::new(high, beta, floor, seed)?;
    let n = a.config().region().len();
    let mut violations = Vec::new();
    let mut sup = Vec::with_capacity(sweeps as usize);
    for t in 0..sweeps {
        a.start_sweep();
        b.start_sweep();
        for i in 0..n {
            let u = a.next_uniform();
            let ub = b.next_uniform();
            debug_assert_eq!(u, ub);
            a.update_site(i, u);
            b.update_site(i, u);
            let (x, y) = (a.heights()[i], b.heights()[i]);
            if x > y {
                violations.push(OrderViolation { sweep: t, site: i, low: x, high: y });
            }
        }
        a.sweep_count += 1;
        b.sweep_count += 1;
        sup.push(a.heights().iter().zip(b.heights()).map(|(x, y)| y - x).max().unwrap_or(0));
    }
    Ok(CouplingReport { sweeps, violations, sup_distance: sup })
}
