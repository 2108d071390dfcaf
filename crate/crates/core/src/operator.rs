//! Operator revenue, (p, delta) sweeps and per-AP price assignments.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::access::{ApId, EquilibriumCache};
use crate::expectation::{sample_parallel, Estimate, ExpectationMode};
use crate::membership::{MembershipError, MembershipGame};
use crate::scenario::Scenario;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error(transparent)]
    Membership(#[from] MembershipError),
    #[error("invalid pricing: {0}")]
    InvalidPricing(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// Per-AP prices, the Bill revenue share and the admissible price cap.
#[derive(Debug, Clone, PartialEq)]
pub struct PricingScheme {
    prices: Vec<f64>,
    delta: f64,
    p_max: f64,
}

impl PricingScheme {
    pub fn per_ap(prices: Vec<f64>, delta: f64, p_max: f64) -> Result<Self, OperatorError> {
        if prices.is_empty() {
            return Err(OperatorError::InvalidPricing("no prices given".into()));
        }
        if !(p_max > 0.0) {
            return Err(OperatorError::InvalidPricing(format!("p_max must be positive, got {p_max}")));
        }
        if let Some(p) = prices.iter().find(|p| !(**p > 0.0 && **p <= p_max && p.is_finite())) {
            return Err(OperatorError::InvalidPricing(format!("price {p} outside (0, {p_max}]")));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(OperatorError::InvalidPricing(format!("delta {delta} outside [0, 1]")));
        }
        Ok(Self { prices, delta, p_max })
    }

    pub fn uniform(price: f64, aps: usize, delta: f64, p_max: f64) -> Result<Self, OperatorError> {
        Self::per_ap(vec![price; aps], delta, p_max)
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    /// The common price when every AP charges the same.
    pub fn uniform_price(&self) -> Option<f64> {
        let first = self.prices[0];
        self.prices.iter().all(|p| *p == first).then_some(first)
    }
}

/// Where the per-slot payments go.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RevenueBreakdown {
    /// All Bill and Alien payments, over every AP.
    pub total_payments: Estimate,
    /// Payments minus the shares passed to Bill owners.
    pub operator_revenue: Estimate,
    /// Shares passed to Bill owners.
    pub bill_shares: Estimate,
}

const TAG_OPERATOR: u64 = 4;

/// Expected per-slot operator revenue when subscriber `j` is a Bill with
/// probability `alpha[j]` (0/1 entries give a pure profile).
pub fn operator_revenue(game: &MembershipGame, alpha: &[f64]) -> Result<RevenueBreakdown, OperatorError> {
    let k = game.subscriber_count();
    if alpha.len() != k {
        return Err(MembershipError::ProfileLength { expected: k, got: alpha.len() }.into());
    }
    if let Some((index, &value)) = alpha.iter().enumerate().find(|(_, a)| !(0.0..=1.0).contains(*a)) {
        return Err(MembershipError::InvalidProbability { index, value }.into());
    }
    let delta = game.delta();
    match game.expectation().mode {
        ExpectationMode::Exact => {
            let payments = (0..k)
                .into_par_iter()
                .map(|ap| game.expected_payments_exact(ApId(ap), alpha))
                .collect::<Result<Vec<f64>, _>>()?;
            let total: f64 = payments.iter().sum();
            let shares: f64 = payments.iter().zip(alpha).map(|(p, a)| delta * a * p).sum();
            let revenue: f64 = payments.iter().zip(alpha).map(|(p, a)| (1.0 - delta * a) * p).sum();
            Ok(RevenueBreakdown {
                total_payments: Estimate::exact(total),
                operator_revenue: Estimate::exact(revenue),
                bill_shares: Estimate::exact(shares),
            })
        }
        ExpectationMode::MonteCarlo => {
            let cfg = game.expectation();
            let [total, revenue, shares] =
                sample_parallel(cfg.sample_count, cfg.rng_seed, &[TAG_OPERATOR], |rng| {
                    let bills = MembershipGame::draw_bills(rng, alpha);
                    let mut total = 0.0;
                    let mut shares = 0.0;
                    let mut revenue = 0.0;
                    for (ap, &bill) in bills.iter().enumerate() {
                        let pay = game.draw_payments(rng, ApId(ap), &bills)?;
                        let share = if bill { delta * pay } else { 0.0 };
                        total += pay;
                        shares += share;
                        revenue += pay - share;
                    }
                    Ok::<_, MembershipError>([total, revenue, shares])
                })?;
            Ok(RevenueBreakdown {
                total_payments: total.estimate(),
                operator_revenue: revenue.estimate(),
                bill_shares: shares.estimate(),
            })
        }
    }
}

/// One evaluated pricing: the mixed equilibrium and the revenue it yields.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub prices: Vec<f64>,
    pub delta: f64,
    /// `None` when the cell failed; see `error`.
    pub revenue: Option<RevenueBreakdown>,
    pub alpha: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub error: Option<String>,
}

impl CellResult {
    pub fn is_valid(&self) -> bool {
        self.revenue.is_some()
    }

    pub fn revenue_mean(&self) -> Option<f64> {
        self.revenue.map(|r| r.operator_revenue.mean)
    }
}

fn solve_cell(
    scenario: &Scenario,
    cache: &Arc<EquilibriumCache>,
    prices: &[f64],
    delta: f64,
) -> Result<(crate::membership::MixedEquilibrium, RevenueBreakdown), OperatorError> {
    let game = scenario.game(prices.to_vec(), delta, cache.clone())?;
    let config = scenario.mixed_config(&game);
    let eq = game.solve_mixed_equilibrium(&scenario.initial_alpha(), &config)?;
    let revenue = operator_revenue(&game, &eq.alpha)?;
    Ok((eq, revenue))
}

fn evaluate(scenario: &Scenario, cache: &Arc<EquilibriumCache>, prices: Vec<f64>, delta: f64) -> CellResult {
    match solve_cell(scenario, cache, &prices, delta) {
        Ok((eq, revenue)) => CellResult {
            prices,
            delta,
            revenue: Some(revenue),
            alpha: eq.alpha,
            converged: eq.converged,
            iterations: eq.iterations,
            error: None,
        },
        Err(e) => CellResult {
            prices,
            delta,
            revenue: None,
            alpha: Vec::new(),
            converged: false,
            iterations: 0,
            error: Some(e.to_string()),
        },
    }
}

/// Revenue under a per-AP price vector; the membership equilibrium is
/// recomputed for these prices. Solver failures are returned as errors.
pub fn evaluate_location_pricing(
    scenario: &Scenario,
    prices: &[f64],
    delta: f64,
    cache: &Arc<EquilibriumCache>,
) -> Result<CellResult, OperatorError> {
    let k = scenario.population.subscriber_count();
    if prices.len() != k {
        return Err(OperatorError::InvalidPricing(format!("{} prices given for {} APs", prices.len(), k)));
    }
    PricingScheme::per_ap(prices.to_vec(), delta, scenario.pricing.p_max())?;
    let cell = evaluate(scenario, cache, prices.to_vec(), delta);
    match &cell.error {
        Some(e) => Err(OperatorError::InvalidPricing(e.clone())),
        None => Ok(cell),
    }
}

/// Revenue over a `p_grid` x `delta_grid` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RevenueSurface {
    pub p_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    /// Row-major: `cells[i * delta_grid.len() + j]` is `(p_grid[i], delta_grid[j])`.
    pub cells: Vec<CellResult>,
    /// `(i, j)` of the best valid cell; ties go to the first in row-major order.
    pub argmax: Option<(usize, usize)>,
}

impl RevenueSurface {
    pub fn cell(&self, i: usize, j: usize) -> &CellResult {
        &self.cells[i * self.delta_grid.len() + j]
    }
}

fn check_grid(name: &str, grid: &[f64], lo_open: bool, lo: f64, hi: f64) -> Result<(), OperatorError> {
    if grid.is_empty() {
        return Err(OperatorError::InvalidGrid(format!("{name} is empty")));
    }
    for &v in grid {
        let above = if lo_open { v > lo } else { v >= lo };
        if !(above && v <= hi) {
            return Err(OperatorError::InvalidGrid(format!("{name} value {v} outside the admissible range")));
        }
    }
    Ok(())
}

/// Solves the mixed membership equilibrium and operator revenue in every
/// (p, delta) cell. Cells run in parallel and share only the Stage-II cache.
pub fn sweep(
    scenario: &Scenario,
    p_grid: &[f64],
    delta_grid: &[f64],
    cache: &Arc<EquilibriumCache>,
) -> Result<RevenueSurface, OperatorError> {
    check_grid("p grid", p_grid, true, 0.0, scenario.pricing.p_max())?;
    check_grid("delta grid", delta_grid, false, 0.0, 1.0)?;
    let k = scenario.population.subscriber_count();
    let cells: Vec<CellResult> = (0..p_grid.len() * delta_grid.len())
        .into_par_iter()
        .map(|c| {
            let p = p_grid[c / delta_grid.len()];
            let delta = delta_grid[c % delta_grid.len()];
            evaluate(scenario, cache, vec![p; k], delta)
        })
        .collect();
    let mut argmax: Option<(usize, f64)> = None;
    for (c, cell) in cells.iter().enumerate() {
        if let Some(r) = cell.revenue_mean() {
            if argmax.is_none_or(|(_, best)| r > best) {
                argmax = Some((c, r));
            }
        }
    }
    let n = delta_grid.len();
    Ok(RevenueSurface {
        p_grid: p_grid.to_vec(),
        delta_grid: delta_grid.to_vec(),
        cells,
        argmax: argmax.map(|(c, _)| (c / n, c % n)),
    })
}

/// Largest AP count and price-level count accepted by [`best_location_assignment`].
pub const MAX_ASSIGNMENT_APS: usize = 6;
pub const MAX_ASSIGNMENT_LEVELS: usize = 6;

/// Tries every assignment of `levels` to APs and returns the best valid one.
pub fn best_location_assignment(
    scenario: &Scenario,
    levels: &[f64],
    delta: f64,
    cache: &Arc<EquilibriumCache>,
) -> Result<CellResult, OperatorError> {
    let k = scenario.population.subscriber_count();
    if k > MAX_ASSIGNMENT_APS || levels.len() > MAX_ASSIGNMENT_LEVELS {
        return Err(OperatorError::InvalidGrid(format!(
            "exhaustive assignment supports at most {MAX_ASSIGNMENT_APS} APs and {MAX_ASSIGNMENT_LEVELS} price levels"
        )));
    }
    check_grid("price levels", levels, true, 0.0, scenario.pricing.p_max())?;
    let total = levels.len().pow(k as u32);
    let cells: Vec<CellResult> = (0..total)
        .into_par_iter()
        .map(|mut code| {
            let prices = (0..k)
                .map(|_| {
                    let p = levels[code % levels.len()];
                    code /= levels.len();
                    p
                })
                .collect();
            evaluate(scenario, cache, prices, delta)
        })
        .collect();
    let mut best: Option<CellResult> = None;
    for cell in cells {
        if let Some(r) = cell.revenue_mean() {
            if best.as_ref().is_none_or(|b| r > b.revenue_mean().unwrap_or(f64::NEG_INFINITY)) {
                best = Some(cell);
            }
        }
    }
    best.ok_or_else(|| OperatorError::InvalidGrid("no assignment could be evaluated".into()))
}
