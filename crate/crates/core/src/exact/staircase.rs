//! Staircase ensembles: ratios `Z(a; b; L, M) / Z_Λ`, the finite-M
//! monotonicity proxies, the zero-tilt step free energy and boundary pinning.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{BoundaryCondition, InverseTemperature, Region, Staircase};

use super::{partition_transfer, Constraints, HeightWindow, PartitionResult};

/// `log Z(a; b; L, M)` on the window `[−w, n + w]`.
pub fn staircase_log_z(st: &Staircase, beta: InverseTemperature, margin: i32) -> Result<PartitionResult> {
    let region = Arc::new(Region::rectangle(st.l, st.m)?);
    let window = staircase_window(st.steps(), margin)?;
    let bc = Arc::new(BoundaryCondition::Staircase(st.clone()));
    partition_transfer(&region, &bc, beta, window, &Constraints::none())
}

fn staircase_window(n: i32, margin: i32) -> Result<HeightWindow> {
    if margin < 0 {
        return Err(Error::InvalidParameter(format!("negative window margin {margin}")));
    }
    HeightWindow::new(-margin, n + margin)
}

/// `log Z(a; b; L, M) − log Z_{Λ_{L,M}}`, both on the window `[−w, n + w]`.
pub fn staircase_ratio(
    a: &[i32],
    b: &[i32],
    l: i32,
    m: i32,
    beta: InverseTemperature,
    margin: i32,
) -> Result<f64> {
    let st = Staircase::new(a.to_vec(), b.to_vec(), l, m)?;
    if st.steps() == 0 {
        return Ok(0.0);
    }
    let region = Arc::new(Region::rectangle(l, m)?);
    let window = staircase_window(st.steps(), margin)?;
    let stair = staircase_log_z(&st, beta, margin)?;
    let flat = partition_transfer(&region, &Arc::new(BoundaryCondition::Zero), beta, window, &Constraints::none())?;
    Ok(stair.log_z - flat.log_z)
}

/// Finite-L step free energy from `log(Z^ξ_{Λ_L} / Z_{Λ_L})`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TauExact {
    pub l: i32,
    pub beta: f64,
    pub window: HeightWindow,
    pub log_ratio: f64,
    /// `−log_ratio / (β(2L+1))`: cost per unit length of the interface crossing the box.
    pub per_length: f64,
    /// `−log_ratio / (2βL)`.
    pub per_half_width: f64,
}

pub fn tau_zero_exact(l: i32, beta: InverseTemperature, margin: i32) -> Result<TauExact> {
    if l < 1 {
        return Err(Error::InvalidParameter(format!("L must be at least 1, got {l}")));
    }
    let log_ratio = staircase_ratio(&[0], &[0], l, l, beta, margin)?;
    let b = beta.value();
    Ok(TauExact {
        l,
        beta: b,
        window: staircase_window(1, margin)?,
        log_ratio,
        per_length: -log_ratio / (b * f64::from(2 * l + 1)),
        per_half_width: -log_ratio / (2.0 * b * f64::from(l)),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityRow {
    pub m: i32,
    /// `log Z(a; b; L, M)/Z_Λ`
    pub joint: f64,
    /// `log Z(aᵢ; bᵢ; L, M)/Z_Λ` for each step.
    pub singles: Vec<f64>,
    /// `joint − Σ singles`; the product inequality says this is `≤ 0` as `M → ∞`.
    pub delta: f64,
    /// Ratio with the top step moved up by one, minus `joint`; `≥ 0` as `M → ∞`.
    /// Absent when the shifted step would leave `[−M, M]`.
    pub shift: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub a: Vec<i32>,
    pub b: Vec<i32>,
    pub l: i32,
    pub beta: f64,
    pub margin: i32,
    pub rows: Vec<MonotonicityRow>,
    pub delta_at_largest: f64,
    /// Whether `Δ(M)` never increases along the sorted `M` list.
    pub delta_nonincreasing: bool,
}

pub fn check_monotonicity(
    a: &[i32],
    b: &[i32],
    l: i32,
    m_list: &[i32],
    beta: InverseTemperature,
    margin: i32,
) -> Result<MonotonicityReport> {
    if m_list.is_empty() {
        return Err(Error::InvalidParameter("empty M list".into()));
    }
    let mut ms = m_list.to_vec();
    ms.sort_unstable();
    ms.dedup();
    let mut rows = Vec::new();
    for &m in &ms {
        let joint = staircase_ratio(a, b, l, m, beta, margin)?;
        let singles = a
            .iter()
            .zip(b)
            .map(|(&ai, &bi)| staircase_ratio(&[ai], &[bi], l, m, beta, margin))
            .collect::<Result<Vec<f64>>>()?;
        let delta = joint - singles.iter().sum::<f64>();
        let shift = match (a.last(), b.last()) {
            (Some(&an), Some(&bn)) if an < m && bn < m => {
                let mut a2 = a.to_vec();
                let mut b2 = b.to_vec();
                *a2.last_mut().expect("nonempty") += 1;
                *b2.last_mut().expect("nonempty") += 1;
                Some(staircase_ratio(&a2, &b2, l, m, beta, margin)? - joint)
            }
            _ => None,
        };
        rows.push(MonotonicityRow { m, joint, singles, delta, shift });
    }
    let delta_nonincreasing = rows.windows(2).all(|w| w[1].delta <= w[0].delta);
    Ok(MonotonicityReport {
        a: a.to_vec(),
        b: b.to_vec(),
        l,
        beta: beta.value(),
        margin,
        delta_at_largest: rows.last().expect("nonempty").delta,
        rows,
        delta_nonincreasing,
    })
}

/// `log ℙ(η = 0 on ∂_*Λ_L)` under the zero-boundary measure on `Λ_{L+1}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PinningResult {
    pub l: i32,
    pub beta: f64,
    pub window: HeightWindow,
    pub log_p: f64,
    /// `−log_p / L`
    pub rate: f64,
}

pub fn boundary_pinning(l: i32, beta: InverseTemperature, window: HeightWindow) -> Result<PinningResult> {
    if l < 1 {
        return Err(Error::InvalidParameter(format!("L must be at least 1, got {l}")));
    }
    let outer = Arc::new(Region::square(l + 1)?);
    let ring = Region::square(l)?.inner_boundary();
    let bc = Arc::new(BoundaryCondition::Zero);
    let pinned = ring.into_iter().fold(Constraints::none(), |c, s| c.fix(s, 0));
    let num = partition_transfer(&outer, &bc, beta, window, &pinned)?;
    let den = partition_transfer(&outer, &bc, beta, window, &Constraints::none())?;
    let log_p = num.log_z - den.log_z;
    Ok(PinningResult { l, beta: beta.value(), window, log_p, rate: -log_p / f64::from(l) })
}
