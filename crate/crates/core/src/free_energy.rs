//! Rare-event and free-energy estimators built on the heat-bath sampler.
//!
//! `log ℙ(η ≥ 0 on A)` is telescoped over the sites of `A` in raster order;
//! `log(Z^ξ/Z)` is telescoped over single boundary flips, each stage combining
//! samples from both neighbouring ensembles with Bennett's acceptance ratio.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{partition_brute, partition_transfer, transfer_feasible, Constraints, HeightWindow};
use crate::lattice::{typical_height, BoundaryCondition, HeightConfig, InverseTemperature, Region, Site};
use crate::mc::{ChainState, RandomSeed};
use crate::numerics::{batch_means, effective_sample_size, fmt_f64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    TelescopingSites,
    BoundaryFlip,
    Exact,
}

/// One factor of a telescoped estimate, in the log domain.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stage {
    pub label: String,
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
    /// Effective sample sizes of the forward and reverse weights, for boundary flips.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ess: Option<(f64, f64)>,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateWithError {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub method: EstimateMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<RandomSeed>,
    pub components: Vec<Stage>,
}

impl EstimateWithError {
    fn from_stages(stages: Vec<Stage>, method: EstimateMethod, seed: Option<RandomSeed>) -> EstimateWithError {
        EstimateWithError {
            value: stages.iter().map(|s| s.value).sum(),
            std_error: stages.iter().map(|s| s.std_error * s.std_error).sum::<f64>().sqrt(),
            n_samples: stages.iter().map(|s| s.n_samples).sum(),
            method,
            seed,
            components: stages,
        }
    }

    pub fn flagged_stages(&self) -> Vec<&Stage> {
        self.components.iter().filter(|s| s.flagged).collect()
    }
}

/// How each positivity stage turns samples into a probability.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageEstimator {
    /// Time average of `1{η(xᵢ) ≥ 0}` after each sweep.
    #[default]
    Indicator,
    /// Time average of the conditional `ℙ(η(xᵢ) ≥ 0 | neighbours)` just before each update of `xᵢ`.
    Conditional,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McParams {
    /// Initial measured sweeps per stage (after burn-in).
    pub sweeps: u64,
    pub burnin: u64,
    /// Measured sweeps are doubled until the target is met or this cap is reached.
    pub max_sweeps: u64,
    /// Target `se(p)/p` per stage.
    pub target_rel_error: f64,
    pub batches: usize,
    pub seed: RandomSeed,
    pub estimator: StageEstimator,
}

impl Default for McParams {
    fn default() -> Self {
        McParams {
            sweeps: 1000,
            burnin: 100,
            max_sweeps: 64_000,
            target_rel_error: 0.02,
            batches: 20,
            seed: RandomSeed::new(1, 0),
            estimator: StageEstimator::Indicator,
        }
    }
}

impl McParams {
    fn validate(&self) -> Result<()> {
        if self.sweeps == 0 || self.max_sweeps < self.sweeps || self.batches < 2 {
            return Err(Error::InvalidParameter(format!(
                "need 0 < sweeps ≤ max_sweeps and at least 2 batches, got {} / {} / {}",
                self.sweeps, self.max_sweeps, self.batches
            )));
        }
        if !(self.target_rel_error > 0.0) {
            return Err(Error::InvalidParameter("target relative error must be positive".into()));
        }
        Ok(())
    }

    /// Stream for stage `i`, disjoint from every other stage and base stream.
    fn stage_seed(&self, i: usize) -> RandomSeed {
        RandomSeed::new(self.seed.seed, (self.seed.stream << 24) | i as u64)
    }
}

fn require_rect_or_small(region: &Region, window: HeightWindow) -> bool {
    region.as_rectangle().is_some() && transfer_feasible(region, window)
}

fn exact_log_z(
    region: &Arc<Region>,
    bc: &Arc<BoundaryCondition>,
    beta: InverseTemperature,
    window: HeightWindow,
    c: &Constraints,
) -> Result<f64> {
    if require_rect_or_small(region, window) {
        Ok(partition_transfer(region, bc, beta, window, c)?.log_z)
    } else {
        Ok(partition_brute(region, bc, beta, window, c)?.log_z)
    }
}

/// Telescoped `log ℙ(η ≥ 0 on order)` with every stage computed exactly.
pub fn log_positivity_exact(
    region: &Arc<Region>,
    bc: &Arc<BoundaryCondition>,
    beta: InverseTemperature,
    window: HeightWindow,
    order: &[Site],
) -> Result<EstimateWithError> {
    let mut c = Constraints::none();
    let mut prev = exact_log_z(region, bc, beta, window, &c)?;
    let mut stages = Vec::with_capacity(order.len());
    for &s in order {
        if !region.contains(s) {
            return Err(Error::OutsideRegion(s));
        }
        c = c.floor(s, 0);
        let next = exact_log_z(region, bc, beta, window, &c)?;
        stages.push(Stage {
            label: s.to_string(),
            value: next - prev,
            std_error: 0.0,
            n_samples: 0,
            ess: None,
            flagged: false,
        });
        prev = next;
    }
    Ok(EstimateWithError::from_stages(stages, EstimateMethod::Exact, None))
}

/// `log ℙ(η ≥ 0 on Λ)` by telescoping over all region sites in raster order.
pub fn log_positivity(
    region: &Arc<Region>,
    bc: &Arc<BoundaryCondition>,
    beta: InverseTemperature,
    params: &McParams,
) -> Result<EstimateWithError> {
    log_positivity_on(region, bc, region.sites(), beta, params)
}

/// `log ℙ(η ≥ 0 on A)` for `A ⊆ Λ`, stages in the given order.
///
/// Stage `i` runs a chain with floor 0 on `x₁ … x_{i−1}` and estimates
/// `ℙ(η(xᵢ) ≥ 0 | …)`. Stages are independent and run in parallel.
pub fn log_positivity_on(
    region: &Arc<Region>,
    bc: &Arc<BoundaryCondition>,
    targets: &[Site],
    beta: InverseTemperature,
    params: &McParams,
) -> Result<EstimateWithError> {
    params.validate()?;
    let idx: Vec<usize> = targets
        .iter()
        .map(|&s| region.index_of(s).ok_or(Error::OutsideRegion(s)))
        .collect::<Result<_>>()?;
    let stages: Vec<Stage> = (0..idx.len())
        .into_par_iter()
        .map(|i| positivity_stage(region, bc, &idx, i, beta, params))
        .collect::<Result<_>>()?;
    Ok(EstimateWithError::from_stages(stages, EstimateMethod::TelescopingSites, Some(params.seed)))
}

fn positivity_stage(
    region: &Arc<Region>,
    bc: &Arc<BoundaryCondition>,
    idx: &[usize],
    i: usize,
    beta: InverseTemperature,
    params: &McParams,
) -> Result<Stage> {
    let mut floors = vec![None; region.len()];
    for &j in &idx[..i] {
        floors[j] = Some(0);
    }
    let target = idx[i];
    let config = HeightConfig::flat(region.clone(), bc.clone(), 0);
    let mut chain = ChainState::with_floors(config, beta, floors, params.stage_seed(i))?;
    for _ in 0..params.burnin {
        chain.sweep();
    }
    let mut samples: Vec<f64> = Vec::new();
    let mut want = params.sweeps;
    loop {
        while (samples.len() as u64) < want {
            match params.estimator {
                StageEstimator::Indicator => {
                    chain.sweep();
                    samples.push(if chain.heights()[target] >= 0 { 1.0 } else { 0.0 });
                }
                StageEstimator::Conditional => {
                    let mut p = 0.0;
                    chain.sweep_visiting(|k, c| {
                        if k == target {
                            p = 1.0 - c.site_law(k).cdf(-1);
                        }
                    });
                    samples.push(p);
                }
            }
        }
        let (mean, se) = batch_means(&samples, params.batches);
        let met = mean > 0.0 && se / mean <= params.target_rel_error;
        if met || want >= params.max_sweeps {
            if mean <= 0.0 {
                return Err(Error::Numerical(format!(
                    "positivity stage {i} at {} saw no nonnegative samples in {want} sweeps",
                    region.sites()[target]
                )));
            }
            return Ok(Stage {
                label: region.sites()[target].to_string(),
                value: mean.ln(),
                std_error: se / mean,
                n_samples: samples.len() as u64,
                ess: None,
                flagged: !met,
            });
        }
        want = (want * 2).min(params.max_sweeps);
    }
}

/// `Σ_x log ℙ(η(x) ≥ 0)` from one unconstrained chain: the FKG lower bound on
/// `log ℙ(η ≥ 0 on Λ)`.
pub fn log_marginal_positivity(
    region: &Arc<Region>,
    bc: &Arc<BoundaryCondition>,
    beta: InverseTemperature,
    params: &McParams,
) -> Result<EstimateWithError> {
    params.validate()?;
    let n = region.len();
    let config = HeightConfig::flat(region.clone(), bc.clone(), 0);
    let mut chain = ChainState::new(config, beta, None, params.stage_seed(0))?;
    for _ in 0..params.burnin {
        chain.sweep();
    }
    let b = params.batches as u64;
    let per_batch = params.sweeps.div_ceil(b);
    let mut counts = vec![0u64; n * params.batches];
    for batch in 0..params.batches {
        for _ in 0..per_batch {
            chain.sweep();
            for (i, &h) in chain.heights().iter().enumerate() {
                if h >= 0 {
                    counts[i * params.batches + batch] += 1;
                }
            }
        }
    }
    let stages = (0..n)
        .map(|i| {
            let series: Vec<f64> = counts[i * params.batches..(i + 1) * params.batches]
                .iter()
                .map(|&c| c as f64 / per_batch as f64)
                .collect();
            let (mean, se) = batch_means(&series, params.batches);
            if mean <= 0.0 {
                return Err(Error::Numerical(format!("site {} never nonnegative", region.sites()[i])));
            }
            Ok(Stage {
                label: region.sites()[i].to_string(),
                value: mean.ln(),
                std_error: se / mean,
                n_samples: per_batch * b,
                ess: None,
                flagged: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EstimateWithError::from_stages(stages, EstimateMethod::TelescopingSites, Some(params.seed)))
}

/// The `ξ` boundary sites of `Λ_L` (value 1) in flip order: wall rows from
/// `v = 0` upward, left before right, then the top row from left to right.
pub fn flip_plan(l: i32) -> Vec<Site> {
    let mut plan = Vec::with_capacity((4 * l + 3) as usize);
    for v in 0..=l {
        plan.push(Site::new(-l - 1, v));
        plan.push(Site::new(l + 1, v));
    }
    for x in -l..=l {
        plan.push(Site::new(x, l + 1));
    }
    plan
}

fn xi_values(region: &Region) -> BTreeMap<Site, i32> {
    BoundaryCondition::XiStep.values_on(region)
}

/// Boundary values after flipping the first `k` sites of `plan` from 1 to 0.
fn flipped(base: &BTreeMap<Site, i32>, plan: &[Site], k: usize) -> BTreeMap<Site, i32> {
    let mut m = base.clone();
    for s in &plan[..k] {
        m.insert(*s, 0);
    }
    m
}

fn check_plan(region: &Region, plan: &[Site]) -> Result<()> {
    let xi = xi_values(region);
    let ones: Vec<Site> = xi.iter().filter(|(_, v)| **v == 1).map(|(s, _)| *s).collect();
    let mut sorted = plan.to_vec();
    sorted.sort();
    if sorted != ones {
        return Err(Error::InvalidParameter("flip plan must list every ξ site of value 1 exactly once".into()));
    }
    Ok(())
}

/// `log(Z^ξ/Z)` telescoped exactly over the flips of `plan`.
pub fn boundary_flip_exact(
    l: i32,
    beta: InverseTemperature,
    window: HeightWindow,
    plan: &[Site],
) -> Result<EstimateWithError> {
    let region = Arc::new(Region::square(l)?);
    check_plan(&region, plan)?;
    let xi = xi_values(&region);
    let log_z = |k: usize| {
        let bc = Arc::new(BoundaryCondition::Custom(flipped(&xi, plan, k)));
        exact_log_z(&region, &bc, beta, window, &Constraints::none())
    };
    let mut prev = log_z(0)?;
    let mut stages = Vec::with_capacity(plan.len());
    for (k, s) in plan.iter().enumerate() {
        let next = log_z(k + 1)?;
        stages.push(Stage {
            label: s.to_string(),
            value: prev - next,
            std_error: 0.0,
            n_samples: 0,
            ess: None,
            flagged: false,
        });
        prev = next;
    }
    Ok(EstimateWithError::from_stages(stages, EstimateMethod::Exact, None))
}

fn fermi(x: f64) -> f64 {
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Bennett's acceptance ratio: `Δf = −log(Z₁/Z₀)` from forward work values
/// `β(U₁ − U₀)` sampled in ensemble 0 and reverse work values `β(U₀ − U₁)`
/// sampled in ensemble 1.
pub fn bennett(forward: &[f64], reverse: &[f64]) -> f64 {
    let m = (forward.len() as f64 / reverse.len() as f64).ln();
    let g = |df: f64| {
        let a: f64 = forward.iter().map(|w| fermi(m + w - df)).sum();
        let b: f64 = reverse.iter().map(|w| fermi(-m + w + df)).sum();
        a - b
    };
    let (mut lo, mut hi) = (-1.0, 1.0);
    while g(lo) > 0.0 {
        lo = 2.0 * lo - 1.0;
    }
    while g(hi) < 0.0 {
        hi = 2.0 * hi + 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Step free energy estimate at zero tilt.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TauEstimate {
    pub l: i32,
    pub beta: f64,
    /// `log(Z^ξ/Z)` with its per-flip components.
    pub log_ratio: EstimateWithError,
    /// `−log_ratio / (β(2L+1))`
    pub per_length: f64,
    pub per_length_se: f64,
    /// `−log_ratio / (2βL)`
    pub per_half_width: f64,
    pub per_half_width_se: f64,
}

/// `log(Z^ξ/Z)` by boundary-flip free-energy perturbation on `Λ_L`.
///
/// Each of the `4L + 4` intermediate ensembles is sampled once, starting from
/// the configuration `1{x₂ ≥ v}` with `v` the number of wall rows already
/// flipped. Stage `k` combines forward work from ensemble `k − 1` and reverse
/// work from ensemble `k` by Bennett's acceptance ratio; its error is the batch
/// spread of per-batch ratios. A stage whose forward and reverse weights both
/// have effective sample size below 100 is flagged.
pub fn tau_zero_mc(l: i32, beta: InverseTemperature, params: &McParams) -> Result<TauEstimate> {
    params.validate()?;
    if l < 1 {
        return Err(Error::InvalidParameter(format!("L must be at least 1, got {l}")));
    }
    let region = Arc::new(Region::square(l)?);
    let plan = flip_plan(l);
    let xi = xi_values(&region);
    let b = beta.value();
    let sweeps = params.sweeps as usize;

    // samples[k] = (η at the site flipped by stage k, η at the site flipped by stage k + 1)
    type Record = (Vec<i32>, Vec<i32>);
    let records: Vec<Record> = (0..=plan.len())
        .into_par_iter()
        .map(|k| -> Result<Record> {
            let bc = Arc::new(BoundaryCondition::Custom(flipped(&xi, &plan, k)));
            let rows_done = (k / 2).min(l as usize + 1) as i32;
            let heights: Vec<i32> = region.sites().iter().map(|s| i32::from(s.x2 >= rows_done)).collect();
            let config = HeightConfig::from_heights(region.clone(), bc, heights)?;
            let mut chain = ChainState::new(config, beta, None, params.stage_seed(k))?;
            let inner = |s: Site| -> usize {
                let n = s.neighbors().into_iter().find(|n| region.contains(*n)).expect("boundary site touches region");
                region.index_of(n).expect("in region")
            };
            let back = (k > 0).then(|| inner(plan[k - 1]));
            let ahead = (k < plan.len()).then(|| inner(plan[k]));
            for _ in 0..params.burnin {
                chain.sweep();
            }
            let (mut rb, mut ra) = (Vec::with_capacity(sweeps), Vec::with_capacity(sweeps));
            for _ in 0..sweeps {
                chain.sweep();
                if let Some(i) = back {
                    rb.push(chain.heights()[i]);
                }
                if let Some(i) = ahead {
                    ra.push(chain.heights()[i]);
                }
            }
            Ok((rb, ra))
        })
        .collect::<Result<_>>()?;

    let mut stages = Vec::with_capacity(plan.len());
    for (k, s) in plan.iter().enumerate() {
        // flipping s from 1 to 0 changes the energy by |η − 0| − |η − 1| at its inner neighbour
        let du = |h: i32| f64::from(h.abs() - (h - 1).abs());
        let forward: Vec<f64> = records[k].1.iter().map(|&h| b * du(h)).collect();
        let reverse: Vec<f64> = records[k + 1].0.iter().map(|&h| -b * du(h)).collect();
        let df = bennett(&forward, &reverse);
        let nb = params.batches.min(forward.len()).max(2);
        let size = forward.len() / nb;
        let per_batch: Vec<f64> = (0..nb)
            .map(|j| bennett(&forward[j * size..(j + 1) * size], &reverse[j * size..(j + 1) * size]))
            .collect();
        let mean_b = per_batch.iter().sum::<f64>() / nb as f64;
        let var_b = per_batch.iter().map(|x| (x - mean_b).powi(2)).sum::<f64>() / (nb - 1) as f64;
        let ess_f = effective_sample_size(&forward.iter().map(|w| (-w).exp()).collect::<Vec<_>>());
        let ess_r = effective_sample_size(&reverse.iter().map(|w| (-w).exp()).collect::<Vec<_>>());
        stages.push(Stage {
            label: s.to_string(),
            value: df,
            std_error: (var_b / nb as f64).sqrt(),
            n_samples: (forward.len() + reverse.len()) as u64,
            ess: Some((ess_f, ess_r)),
            flagged: ess_f < 100.0 && ess_r < 100.0,
        });
    }
    let log_ratio = EstimateWithError::from_stages(stages, EstimateMethod::BoundaryFlip, Some(params.seed));
    let (v, se) = (log_ratio.value, log_ratio.std_error);
    let len = b * f64::from(2 * l + 1);
    let half = 2.0 * b * f64::from(l);
    Ok(TauEstimate {
        l,
        beta: b,
        per_length: -v / len,
        per_length_se: se / len,
        per_half_width: -v / half,
        per_half_width_se: se / half,
        log_ratio,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub positivity: McParams,
    pub tau: McParams,
    pub marginals: McParams,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub l: i32,
    pub beta: f64,
    pub log_p: f64,
    pub se: f64,
    /// `−log_p / (L ln L)`
    pub rate: f64,
    pub tau_hat: f64,
    pub se_tau: f64,
    #[serde(rename = "H_L")]
    pub h_l: i32,
    pub fkg_lower_bound: f64,
    pub fkg_se: f64,
    pub flagged_stages: usize,
}

/// Per-L positivity rate, step free energy, `H(L)` and the FKG bound on `Λ_L`.
pub fn scaling_experiment(l_list: &[i32], beta: InverseTemperature, params: &ScalingParams) -> Result<Vec<ScalingRow>> {
    if l_list.windows(2).any(|w| w[0] >= w[1]) || l_list.first().is_some_and(|&l| l < 2) {
        return Err(Error::InvalidParameter(format!("L list must be ascending and ≥ 2, got {l_list:?}")));
    }
    let bc = Arc::new(BoundaryCondition::Zero);
    l_list
        .iter()
        .map(|&l| {
            let region = Arc::new(Region::square(l)?);
            let pos = log_positivity(&region, &bc, beta, &params.positivity)?;
            let tau = tau_zero_mc(l, beta, &params.tau)?;
            let fkg = log_marginal_positivity(&region, &bc, beta, &params.marginals)?;
            let lf = f64::from(l);
            Ok(ScalingRow {
                l,
                beta: beta.value(),
                log_p: pos.value,
                se: pos.std_error,
                rate: -pos.value / (lf * lf.ln()),
                tau_hat: tau.per_length,
                se_tau: tau.per_length_se,
                h_l: typical_height(l, beta.value()),
                fkg_lower_bound: fkg.value,
                fkg_se: fkg.std_error,
                flagged_stages: pos.flagged_stages().len() + tau.log_ratio.flagged_stages().len(),
            })
        })
        .collect()
}

/// `L,beta,log_p,se,rate,tau_hat,se_tau,H_L,fkg_lower_bound`
pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut out = String::from("L,beta,log_p,se,rate,tau_hat,se_tau,H_L,fkg_lower_bound\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.l,
            fmt_f64(r.beta),
            fmt_f64(r.log_p),
            fmt_f64(r.se),
            fmt_f64(r.rate),
            fmt_f64(r.tau_hat),
            fmt_f64(r.se_tau),
            r.h_l,
            fmt_f64(r.fkg_lower_bound)
        ));
    }
    out
}
