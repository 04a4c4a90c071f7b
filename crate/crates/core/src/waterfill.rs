//! Water-filling: maximize `sum_f ln(1 + p_f / sigma_f)` subject to `sum_f p_f <= budget`.
//!
//! The optimum is `p_f = (level - sigma_f)^+` with the level chosen so the budget
//! is spent. The level is located by bisection on `[min sigma, min sigma + budget]`
//! and then polished on the resulting active set so the sum matches the budget
//! to roundoff.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BUDGET_EPS;

/// Absolute bisection tolerance on the water level.
pub const LEVEL_TOL: f64 = 1e-12;

/// Bisection iteration cap.
pub const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfillResult {
    pub powers: Vec<f64>,
    pub level: f64,
    pub active_set: Vec<usize>,
    /// `budget - sum(powers)`.
    pub residual: f64,
}

fn check_sigma(sigma: &[f64]) -> Result<()> {
    if let Some((f, s)) = sigma.iter().enumerate().find(|(_, s)| !(**s > 0.0)) {
        return Err(Error::Domain(format!(
            "effective noise sigma[{f}] must be positive, got {s}"
        )));
    }
    Ok(())
}

fn check_budget(budget: f64) -> Result<()> {
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(Error::Domain(format!(
            "budget must be finite and nonnegative, got {budget}"
        )));
    }
    Ok(())
}

#[inline]
fn filled(sigma: &[f64], level: f64) -> f64 {
    sigma.iter().map(|s| (level - s).max(0.0)).sum()
}

/// Water level spending exactly `budget` over `sigma`. `sigma` must be positive
/// (entries may be `+inf`, meaning the sub-channel is unusable) and `budget > 0`.
fn water_level(sigma: &[f64], budget: f64) -> f64 {
    let floor = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    let mut lo = floor;
    let mut hi = floor + budget;
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= LEVEL_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if filled(sigma, mid) > budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let level = 0.5 * (lo + hi);

    // Polish: on the active set the level has a closed form.
    let (count, sum) = sigma
        .iter()
        .filter(|&&s| s < level)
        .fold((0usize, 0.0), |(c, t), &s| (c + 1, t + s));
    if count == 0 {
        return level;
    }
    let polished = (budget + sum) / count as f64;
    if (polished - level).abs() <= 1e3 * LEVEL_TOL.max(level.abs() * f64::EPSILON) {
        polished
    } else {
        level
    }
}

fn assemble(sigma: &[f64], level: f64, budget: f64, floors: Option<&[f64]>) -> WaterfillResult {
    let mut powers: Vec<f64> = sigma.iter().map(|s| (level - s).max(0.0)).collect();
    if let Some(fl) = floors {
        for (p, x) in powers.iter_mut().zip(fl) {
            *p += x;
        }
    }
    let active_set = powers
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(f, _)| f)
        .collect();
    let residual = budget - powers.iter().sum::<f64>();
    WaterfillResult {
        powers,
        level,
        active_set,
        residual,
    }
}

/// Water-fill `budget` over effective noise levels `sigma` (noise-plus-interference over gain).
pub fn waterfill(sigma: &[f64], budget: f64) -> Result<WaterfillResult> {
    check_sigma(sigma)?;
    check_budget(budget)?;
    let floor = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    if budget == 0.0 || !floor.is_finite() {
        return Ok(assemble(sigma, floor, budget, None));
    }
    let level = water_level(sigma, budget);
    Ok(assemble(sigma, level, budget, None))
}

/// Allocate `floors` first, then water-fill what is left of `budget` over the
/// unadjusted `sigma`: `p_f = floors_f + (level - sigma_f)^+`.
///
/// Fails with [`Error::InfeasibleIsr`] when the floors alone exceed the budget.
pub fn waterfill_with_floors(sigma: &[f64], budget: f64, floors: &[f64]) -> Result<WaterfillResult> {
    check_sigma(sigma)?;
    check_budget(budget)?;
    if floors.len() != sigma.len() {
        return Err(Error::Usage(format!(
            "{} floors for {} sub-channels",
            floors.len(),
            sigma.len()
        )));
    }
    if let Some((f, x)) = floors.iter().enumerate().find(|(_, x)| !(**x >= 0.0)) {
        return Err(Error::Domain(format!("floor[{f}] must be nonnegative, got {x}")));
    }
    let floor_sum: f64 = floors.iter().sum();
    if floor_sum > budget + BUDGET_EPS || !floor_sum.is_finite() {
        return Err(Error::InfeasibleIsr {
            pu: None,
            round: None,
            deficit: floor_sum - budget,
        });
    }
    let remaining = (budget - floor_sum).max(0.0);
    let min_sigma = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    let level = if remaining == 0.0 || !min_sigma.is_finite() {
        min_sigma
    } else {
        water_level(sigma, remaining)
    };
    Ok(assemble(sigma, level, budget, Some(floors)))
}
