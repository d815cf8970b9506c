//! Deterministic search for the split of the security budget between the
//! smoothing parameter ε̄ and the privacy-amplification failure ε_PA.
//!
//! A log-spaced grid over both parameters is followed by rounds of zoomed
//! grids centered on the incumbent. Ties resolve to the smallest ε̄, then the
//! smallest ε_PA, so the result does not depend on evaluation order.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Total failure probability `ε = ε̄ + ε_PA + ε_EC`, with ε_EC fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBudget {
    pub eps_total: f64,
    pub eps_ec: f64,
}

impl Default for EpsilonBudget {
    fn default() -> Self {
        Self {
            eps_total: 1e-9,
            eps_ec: 1e-10,
        }
    }
}

impl EpsilonBudget {
    /// Budget left for ε̄ + ε_PA.
    pub fn free(&self) -> f64 {
        self.eps_total - self.eps_ec
    }

    /// Whether `(eps_bar, eps_pa)` satisfies `1 − ε_EC > ε̄ > ε_PA ≥ 0` and
    /// stays within the budget.
    pub fn admits(&self, eps_bar: f64, eps_pa: f64) -> bool {
        eps_pa >= 0.0
            && eps_bar > eps_pa
            && eps_bar < 1.0 - self.eps_ec
            && eps_bar + eps_pa <= self.free() * (1.0 + 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub points: usize,
    pub lower: f64,
    pub refinements: usize,
    pub zoom: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 60,
            lower: 1e-15,
            refinements: 3,
            zoom: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizedSplit {
    pub eps_bar: f64,
    pub eps_pa: f64,
    /// Best objective value found (may be negative).
    pub objective: f64,
    /// `max(0, objective)`.
    pub key_bits: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    eps_bar: f64,
    eps_pa: f64,
    value: f64,
}

impl Candidate {
    /// Total order: larger value wins, then smaller ε̄, then smaller ε_PA.
    fn better_than(&self, other: &Candidate) -> bool {
        match self.value.total_cmp(&other.value) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => (self.eps_bar, self.eps_pa)
                .partial_cmp(&(other.eps_bar, other.eps_pa))
                .is_some_and(|o| o == Ordering::Less),
        }
    }
}

fn best_of(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.better_than(&x) { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 || hi <= lo {
        return vec![10f64.powf(hi)];
    }
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| 10f64.powf(lo + step * i as f64)).collect()
}

/// Maximizes `objective(eps_bar, eps_pa)` over the feasible region of `budget`.
///
/// The objective should return the unclamped key length so that an all-zero
/// region still ranks points by how far below zero they fall. NaN counts as
/// `-inf`.
pub fn optimize_epsilons<F>(objective: F, budget: &EpsilonBudget, grid: &GridSpec) -> Result<OptimizedSplit>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    if !(budget.eps_ec > 0.0 && budget.eps_ec < 1.0) {
        return Err(Error::Parameter(format!("eps_ec = {:e} must lie in (0, 1)", budget.eps_ec)));
    }
    if !(budget.eps_total > budget.eps_ec) {
        return Err(Error::Parameter(format!(
            "eps_total = {:e} leaves no budget beyond eps_ec = {:e}",
            budget.eps_total, budget.eps_ec
        )));
    }
    if grid.points < 2 || !(grid.zoom > 1.0) || !(grid.lower > 0.0) {
        return Err(Error::Parameter(format!("invalid optimizer grid {grid:?}")));
    }
    let hi = budget.free().min(1.0 - budget.eps_ec).log10();
    let lo = grid.lower.log10();
    if !(hi > lo) {
        return Err(Error::Parameter(format!(
            "budget {:e} does not exceed grid floor {:e}",
            budget.free(),
            grid.lower
        )));
    }

    let evaluate = |bars: &[f64], pas: &[f64]| -> Option<Candidate> {
        bars.par_iter()
            .flat_map_iter(|&eps_bar| pas.iter().map(move |&eps_pa| (eps_bar, eps_pa)))
            .filter(|&(b, p)| budget.admits(b, p))
            .map(|(eps_bar, eps_pa)| {
                let value = objective(eps_bar, eps_pa);
                Candidate {
                    eps_bar,
                    eps_pa,
                    value: if value.is_nan() { f64::NEG_INFINITY } else { value },
                }
            })
            .map(Some)
            .reduce(|| None, best_of)
    };

    let axis = log_grid(lo, hi, grid.points);
    let mut incumbent = evaluate(&axis, &axis).ok_or_else(|| {
        Error::Parameter(format!("no feasible grid point within budget {:e}", budget.free()))
    })?;

    let mut span = hi - lo;
    for _ in 0..grid.refinements {
        span /= grid.zoom;
        let window = |center: f64| {
            let c = center.log10();
            log_grid((c - span / 2.0).max(lo), (c + span / 2.0).min(hi), grid.points)
        };
        let bars = window(incumbent.eps_bar);
        let pas = window(incumbent.eps_pa);
        incumbent = best_of(Some(incumbent), evaluate(&bars, &pas)).expect("incumbent present");
    }

    Ok(OptimizedSplit {
        eps_bar: incumbent.eps_bar,
        eps_pa: incumbent.eps_pa,
        objective: incumbent.value,
        key_bits: incumbent.value.max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite::{check_epsilon_chain, finite_size_delta};

    #[test]
    fn constant_objective_returns_feasible_point() {
        let budget = EpsilonBudget::default();
        let split = optimize_epsilons(|_, _| 42.0, &budget, &GridSpec::default()).unwrap();
        assert_eq!(split.key_bits, 42.0);
        assert!(budget.admits(split.eps_bar, split.eps_pa));
        check_epsilon_chain(split.eps_bar, split.eps_pa, budget.eps_ec).unwrap();
        // Tie-break picks the smallest feasible eps_bar.
        assert!(split.eps_bar < 1e-14);
    }

    #[test]
    fn negative_delta_pushes_toward_budget_edge() {
        let budget = EpsilonBudget::default();
        let neg_delta = |b: f64, p: f64| -finite_size_delta(1e6, b, p, budget.eps_ec).unwrap();
        let split = optimize_epsilons(neg_delta, &budget, &GridSpec::default()).unwrap();
        let equal = budget.free() / 2.0;
        let at_equal = finite_size_delta(1e6, equal, equal * (1.0 - 1e-9), budget.eps_ec).unwrap();
        assert!(-split.objective <= at_equal);
        assert!(split.eps_bar + split.eps_pa > 0.5 * budget.free());
    }

    #[test]
    fn infeasible_budget_rejected() {
        let budget = EpsilonBudget {
            eps_total: 1e-10,
            eps_ec: 1e-10,
        };
        assert!(matches!(
            optimize_epsilons(|_, _| 0.0, &budget, &GridSpec::default()),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn all_negative_objective_reports_zero_key() {
        let budget = EpsilonBudget::default();
        let split = optimize_epsilons(|b, p| -1e3 - 1.0 / b - 1.0 / p, &budget, &GridSpec::default()).unwrap();
        assert_eq!(split.key_bits, 0.0);
        assert!(split.objective < 0.0);
    }

    #[test]
    fn deterministic_and_never_below_grid() {
        let budget = EpsilonBudget::default();
        let f = |b: f64, p: f64| (b.log10() + 12.0).sin() + (p.log10() + 11.0).cos();
        let a = optimize_epsilons(f, &budget, &GridSpec::default()).unwrap();
        let b = optimize_epsilons(f, &budget, &GridSpec::default()).unwrap();
        assert_eq!(a, b);
        let coarse = optimize_epsilons(
            f,
            &budget,
            &GridSpec {
                refinements: 0,
                ..GridSpec::default()
            },
        )
        .unwrap();
        assert!(a.objective >= coarse.objective);
    }
}
