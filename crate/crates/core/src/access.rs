//! Network access game played by the visitors of one AP during one slot.
//!
//! Each visitor picks a connection-time fraction in `[0, 1]`. Free visitors
//! (Linus subscribers) maximise `rho * ln(1 + r * s)`; paying visitors (Bills
//! and Aliens) additionally pay `price * s`. The expected rate `r` depends on
//! everyone else's fraction through [`crate::rate::expected_rate`].

use std::collections::HashSet;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use dashmap::DashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rate::{expected_rate, per_user_rate, RateError, RateModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UserId(pub usize);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "user#{}", self.0)
    }
}

/// Index of an AP, equal to the position of its owner among the subscribers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ApId(pub usize);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccessError {
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error("{0} is not a player of this access game")]
    NotInRoster(UserId),
    #[error("{0} appears more than once in the roster")]
    DuplicatePlayer(UserId),
    #[error("the owner {0} of the AP cannot play on its public channel")]
    OwnerInRoster(UserId),
    #[error("price must be positive and finite, got {0}")]
    InvalidPrice(f64),
    #[error("access valuation of {user} must be non-negative and finite, got {rho}")]
    InvalidValuation { user: UserId, rho: f64 },
    #[error("profile has {got} entries but the roster has {expected}")]
    ProfileLength { expected: usize, got: usize },
    #[error("two-player solver called on a game with {0} players")]
    NotTwoPlayers(usize),
    #[error("solver configuration invalid: {0}")]
    InvalidConfig(String),
    #[error("grid step must lie in (0, 1], got {0}")]
    InvalidGridStep(f64),
}

/// Whether a visitor pays for connection time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PaymentType {
    /// Linus subscriber.
    Free,
    /// Bill subscriber or Alien.
    Paying,
}

impl PaymentType {
    /// Payment type of a subscriber with membership `bill`.
    pub fn for_subscriber(bill: bool) -> Self {
        if bill {
            PaymentType::Paying
        } else {
            PaymentType::Free
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Player {
    pub user: UserId,
    pub payment: PaymentType,
    pub rho: f64,
}

/// One AP's game in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessGameInstance {
    ap: ApId,
    owner: UserId,
    players: Vec<Player>,
    price: f64,
    rate_params: RateModelParams,
}

impl AccessGameInstance {
    pub fn new(
        ap: ApId,
        owner: UserId,
        players: Vec<Player>,
        price: f64,
        rate_params: RateModelParams,
    ) -> Result<Self, AccessError> {
        rate_params.validate()?;
        if !(price > 0.0 && price.is_finite()) {
            return Err(AccessError::InvalidPrice(price));
        }
        let mut seen = HashSet::with_capacity(players.len());
        for p in &players {
            if p.user == owner {
                return Err(AccessError::OwnerInRoster(owner));
            }
            if !seen.insert(p.user) {
                return Err(AccessError::DuplicatePlayer(p.user));
            }
            if !(p.rho >= 0.0 && p.rho.is_finite()) {
                return Err(AccessError::InvalidValuation { user: p.user, rho: p.rho });
            }
        }
        Ok(Self { ap, owner, players, price, rate_params })
    }

    pub fn ap(&self) -> ApId {
        self.ap
    }

    pub fn owner(&self) -> UserId {
        self.owner
    }

    pub fn players(&self) -> &[Player] {
        &self.players
    }

    pub fn price(&self) -> f64 {
        self.price
    }

    pub fn rate_params(&self) -> &RateModelParams {
        &self.rate_params
    }

    pub fn len(&self) -> usize {
        self.players.len()
    }

    pub fn is_empty(&self) -> bool {
        self.players.is_empty()
    }

    pub fn position(&self, user: UserId) -> Result<usize, AccessError> {
        self.players
            .iter()
            .position(|p| p.user == user)
            .ok_or(AccessError::NotInRoster(user))
    }

    fn check_profile(&self, profile: &AccessProfile) -> Result<(), AccessError> {
        if profile.sigma.len() != self.players.len() {
            return Err(AccessError::ProfileLength {
                expected: self.players.len(),
                got: profile.sigma.len(),
            });
        }
        Ok(())
    }

    /// Expected rate of the player at `pos` given everyone else's fraction.
    fn rate_against(&self, pos: usize, sigma: &[f64]) -> Result<f64, AccessError> {
        let others: Vec<f64> = sigma
            .iter()
            .enumerate()
            .filter_map(|(j, &s)| (j != pos).then_some(s))
            .collect();
        Ok(expected_rate(&others, &self.rate_params)?)
    }

    fn payoff_at(&self, pos: usize, own: f64, sigma: &[f64]) -> Result<f64, AccessError> {
        let rate = self.rate_against(pos, sigma)?;
        Ok(payoff_with_rate(&self.players[pos], self.price, rate, own))
    }

    fn best_response_at(&self, pos: usize, sigma: &[f64]) -> Result<f64, AccessError> {
        let player = &self.players[pos];
        match player.payment {
            PaymentType::Free => Ok(1.0),
            PaymentType::Paying => {
                let rate = self.rate_against(pos, sigma)?;
                Ok(paying_best_response(player.rho, self.price, rate))
            }
        }
    }

    /// Payoff of `focal` when it connects for `sigma_focal` and the others
    /// follow `profile` (the focal entry of `profile` is ignored).
    pub fn payoff(&self, focal: UserId, sigma_focal: f64, profile: &AccessProfile) -> Result<f64, AccessError> {
        let pos = self.position(focal)?;
        self.check_profile(profile)?;
        if !(0.0..=1.0).contains(&sigma_focal) {
            return Err(RateError::AccessTimeOutOfRange { index: pos, value: sigma_focal }.into());
        }
        self.payoff_at(pos, sigma_focal, &profile.sigma)
    }

    /// Payoff-maximising fraction of `focal` against the others in `profile`.
    pub fn best_response(&self, focal: UserId, profile: &AccessProfile) -> Result<f64, AccessError> {
        let pos = self.position(focal)?;
        self.check_profile(profile)?;
        self.best_response_at(pos, &profile.sigma)
    }

    /// One synchronous best-response sweep `T(sigma)`.
    fn sweep(&self, sigma: &[f64]) -> Result<Vec<f64>, AccessError> {
        (0..self.players.len()).map(|i| self.best_response_at(i, sigma)).collect()
    }

    /// Every player's best response to an empty channel.
    pub fn empty_channel_profile(&self) -> AccessProfile {
        let r1 = per_user_rate(1, &self.rate_params).expect("validated params");
        AccessProfile {
            sigma: self
                .players
                .iter()
                .map(|p| match p.payment {
                    PaymentType::Free => 1.0,
                    PaymentType::Paying => paying_best_response(p.rho, self.price, r1),
                })
                .collect(),
        }
    }
}

/// `rho * ln(1 + rate * s)` minus `price * s` for paying players.
pub fn payoff_with_rate(player: &Player, price: f64, rate: f64, s: f64) -> f64 {
    let utility = player.rho * (rate * s).ln_1p();
    match player.payment {
        PaymentType::Free => utility,
        PaymentType::Paying => utility - price * s,
    }
}

/// `min(1, max(rho / price - 1 / rate, 0))`.
pub fn paying_best_response(rho: f64, price: f64, rate: f64) -> f64 {
    (rho / price - 1.0 / rate).clamp(0.0, 1.0)
}

/// Connection-time fractions, aligned with the roster order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessProfile {
    pub sigma: Vec<f64>,
}

impl AccessProfile {
    pub fn new(sigma: Vec<f64>) -> Result<Self, AccessError> {
        for (index, &value) in sigma.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(RateError::AccessTimeOutOfRange { index, value }.into());
            }
        }
        Ok(Self { sigma })
    }

    pub fn get(&self, instance: &AccessGameInstance, user: UserId) -> Result<f64, AccessError> {
        Ok(self.sigma[instance.position(user)?])
    }

    pub fn max_distance(&self, other: &AccessProfile) -> f64 {
        max_abs_diff(&self.sigma, &other.sigma)
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub max_iters: usize,
    /// Weight of the new best response in `(1 - d) * old + d * T(old)`.
    pub damping: f64,
    /// Starting point; `None` starts from the empty-channel best responses.
    pub initial_profile: Option<AccessProfile>,
    pub record_trajectory: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-9,
            max_iters: 10_000,
            damping: 1.0,
            initial_profile: None,
            record_trajectory: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), AccessError> {
        if !(self.epsilon > 0.0) {
            return Err(AccessError::InvalidConfig(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if self.max_iters == 0 {
            return Err(AccessError::InvalidConfig("max_iters must be >= 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(AccessError::InvalidConfig(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub profile: AccessProfile,
    pub converged: bool,
    pub iterations: usize,
    /// Largest coordinate change in the final sweep.
    pub residual: f64,
    /// Ratio of the last two residuals, when at least two non-zero residuals exist.
    pub contraction_estimate: Option<f64>,
    /// Profiles `sigma^0, sigma^1, ...` when requested in the config.
    pub trajectory: Vec<AccessProfile>,
}

/// Best-response dynamics `sigma^{t+1} = (1 - d) sigma^t + d T(sigma^t)` until
/// the largest coordinate change drops to `epsilon`.
pub fn solve_equilibrium(instance: &AccessGameInstance, config: &SolverConfig) -> Result<EquilibriumResult, AccessError> {
    config.validate()?;
    let mut sigma = match &config.initial_profile {
        Some(p) => {
            instance.check_profile(p)?;
            p.sigma.clone()
        }
        None => instance.empty_channel_profile().sigma,
    };
    let mut trajectory = Vec::new();
    if config.record_trajectory {
        trajectory.push(AccessProfile { sigma: sigma.clone() });
    }
    let d = config.damping;
    let mut residual = f64::INFINITY;
    let mut prev_residual = None;
    let mut contraction_estimate = None;
    let mut iterations = 0;
    while iterations < config.max_iters {
        let target = instance.sweep(&sigma)?;
        let next: Vec<f64> = if d == 1.0 {
            target
        } else {
            sigma.iter().zip(&target).map(|(s, t)| (1.0 - d) * s + d * t).collect()
        };
        iterations += 1;
        let step = max_abs_diff(&next, &sigma);
        if let Some(prev) = prev_residual {
            if prev > 0.0 && step > 0.0 {
                contraction_estimate = Some(step / prev);
            }
        }
        prev_residual = Some(step);
        residual = step;
        sigma = next;
        if config.record_trajectory {
            trajectory.push(AccessProfile { sigma: sigma.clone() });
        }
        if residual <= config.epsilon {
            break;
        }
    }
    if instance.is_empty() {
        residual = 0.0;
    }
    Ok(EquilibriumResult {
        profile: AccessProfile { sigma },
        converged: residual <= config.epsilon,
        iterations,
        residual,
        contraction_estimate,
        trajectory,
    })
}

/// `(R(1) - R(2)) / R(2)^2`; two-player dynamics contract when this is below one.
pub fn contraction_constant(params: &RateModelParams) -> Result<f64, RateError> {
    let r1 = per_user_rate(1, params)?;
    let r2 = per_user_rate(2, params)?;
    Ok((r1 - r2) / (r2 * r2))
}

/// Closed-form equilibrium of a two-player game.
///
/// A player whose response is pinned regardless of the opponent (Free, or
/// paying with `rho/p - 1/R(1) < 0`, or `rho/p - 1/R(2) > 1`) is fixed first
/// and the opponent best-responds. Otherwise both responses are interior and
/// the fixed point of the composed response map is found by bisection.
pub fn solve_two_player(instance: &AccessGameInstance) -> Result<AccessProfile, AccessError> {
    if instance.len() != 2 {
        return Err(AccessError::NotTwoPlayers(instance.len()));
    }
    let params = instance.rate_params();
    let r1 = per_user_rate(1, params)?;
    let r2 = per_user_rate(2, params)?;
    let p = instance.price();
    let players = instance.players();
    let rate_vs = |s: f64| r1 - s * (r1 - r2);

    let pinned = |pl: &Player| -> Option<f64> {
        match pl.payment {
            PaymentType::Free => Some(1.0),
            PaymentType::Paying => {
                let a = pl.rho / p;
                if a - 1.0 / r1 < 0.0 {
                    Some(0.0)
                } else if a - 1.0 / r2 > 1.0 {
                    Some(1.0)
                } else {
                    None
                }
            }
        }
    };
    let respond = |pl: &Player, other: f64| -> f64 {
        match pl.payment {
            PaymentType::Free => 1.0,
            PaymentType::Paying => paying_best_response(pl.rho, p, rate_vs(other)),
        }
    };

    let sigma = match (pinned(&players[0]), pinned(&players[1])) {
        (Some(s0), _) => [s0, respond(&players[1], s0)],
        (None, Some(s1)) => [respond(&players[0], s1), s1],
        (None, None) => {
            // g(s) = BR_1(BR_0(s)) - s is continuous, g(0) >= 0 and g(1) <= 0.
            let g = |s: f64| respond(&players[1], respond(&players[0], s)) - s;
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            if g(lo) <= 0.0 {
                hi = lo;
            } else if g(hi) >= 0.0 {
                lo = hi;
            }
            while hi - lo > 0.0 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if g(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let s1 = if g(lo).abs() <= g(hi).abs() { lo } else { hi };
            [respond(&players[0], s1), s1]
        }
    };
    Ok(AccessProfile { sigma: sigma.to_vec() })
}

/// Largest payoff gain any single player obtains by deviating to a point of
/// the grid `{0, step, 2 step, ..., 1}`.
pub fn verify_equilibrium(
    instance: &AccessGameInstance,
    profile: &AccessProfile,
    grid_step: f64,
) -> Result<f64, AccessError> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(AccessError::InvalidGridStep(grid_step));
    }
    instance.check_profile(profile)?;
    let points = (1.0 / grid_step).round() as usize;
    let mut worst: f64 = 0.0;
    for (pos, player) in instance.players().iter().enumerate() {
        let rate = instance.rate_against(pos, &profile.sigma)?;
        let current = payoff_with_rate(player, instance.price(), rate, profile.sigma[pos]);
        for k in 0..=points {
            let s = (k as f64 * grid_step).min(1.0);
            let gain = payoff_with_rate(player, instance.price(), rate, s) - current;
            worst = worst.max(gain);
        }
    }
    Ok(worst)
}

/// Outcome of a cached solve, in the roster order of the queried instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvedGame {
    pub sigma: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    roster: Vec<(PaymentType, u64)>,
    price: u64,
    rate: [u64; 5],
}

#[derive(Debug, Clone)]
struct CachedProfile {
    sigma: Arc<[f64]>,
    converged: bool,
}

/// Memoised access-game solver.
///
/// Equilibria depend only on the multiset of `(payment type, rho)`, the price
/// and the rate parameters, so games are always solved in a canonical roster
/// order. Results are therefore identical whether or not the cache is hit.
#[derive(Debug)]
pub struct EquilibriumCache {
    config: SolverConfig,
    entries: DashMap<CacheKey, CachedProfile>,
    solves: AtomicU64,
    non_converged: AtomicU64,
}

impl EquilibriumCache {
    pub fn new(config: SolverConfig) -> Result<Self, AccessError> {
        config.validate()?;
        if config.initial_profile.is_some() {
            return Err(AccessError::InvalidConfig(
                "a cached solver cannot use a fixed initial profile".into(),
            ));
        }
        Ok(Self {
            config: SolverConfig { record_trajectory: false, ..config },
            entries: DashMap::new(),
            solves: AtomicU64::new(0),
            non_converged: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Number of distinct games solved so far.
    pub fn solves(&self) -> u64 {
        self.solves.load(Ordering::Relaxed)
    }

    /// Number of distinct games whose dynamics hit `max_iters`.
    pub fn non_converged(&self) -> u64 {
        self.non_converged.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn solve(&self, instance: &AccessGameInstance) -> Result<SolvedGame, AccessError> {
        let players = instance.players();
        let mut order: Vec<usize> = (0..players.len()).collect();
        order.sort_by_key(|&i| (players[i].payment, players[i].rho.to_bits()));
        let key = CacheKey {
            roster: order.iter().map(|&i| (players[i].payment, players[i].rho.to_bits())).collect(),
            price: instance.price().to_bits(),
            rate: instance.rate_params().key_bits(),
        };
        let cached = match self.entries.get(&key) {
            Some(hit) => hit.clone(),
            None => {
                let canonical_players = order
                    .iter()
                    .enumerate()
                    .map(|(slot, &i)| Player { user: UserId(slot + 1), ..players[i] })
                    .collect();
                let canonical = AccessGameInstance::new(
                    instance.ap(),
                    UserId(0),
                    canonical_players,
                    instance.price(),
                    *instance.rate_params(),
                )?;
                let result = solve_equilibrium(&canonical, &self.config)?;
                let value = CachedProfile { sigma: result.profile.sigma.into(), converged: result.converged };
                // identical keys always produce identical values, so a racing insert is harmless
                self.entries.entry(key).or_insert_with(|| {
                    self.solves.fetch_add(1, Ordering::Relaxed);
                    if !value.converged {
                        self.non_converged.fetch_add(1, Ordering::Relaxed);
                    }
                    value.clone()
                });
                value
            }
        };
        let mut sigma = vec![0.0; players.len()];
        for (slot, &i) in order.iter().enumerate() {
            sigma[i] = cached.sigma[slot];
        }
        Ok(SolvedGame { sigma, converged: cached.converged })
    }

    /// Equilibrium payoff of the player at roster position `pos`.
    pub fn equilibrium_payoff(&self, instance: &AccessGameInstance, solved: &SolvedGame, pos: usize) -> Result<f64, AccessError> {
        instance.payoff_at(pos, solved.sigma[pos], &solved.sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> RateModelParams {
        RateModelParams::default()
    }

    fn game(players: &[(PaymentType, f64)], price: f64) -> AccessGameInstance {
        let players = players
            .iter()
            .enumerate()
            .map(|(i, &(payment, rho))| Player { user: UserId(i + 1), payment, rho })
            .collect();
        AccessGameInstance::new(ApId(0), UserId(0), players, price, params()).unwrap()
    }

    fn r(n: usize) -> f64 {
        per_user_rate(n, &params()).unwrap()
    }

    #[test]
    fn roster_validation() {
        let p = |u| Player { user: UserId(u), payment: PaymentType::Paying, rho: 1.0 };
        assert_eq!(
            AccessGameInstance::new(ApId(0), UserId(0), vec![p(1), p(1)], 1.0, params()),
            Err(AccessError::DuplicatePlayer(UserId(1)))
        );
        assert_eq!(
            AccessGameInstance::new(ApId(0), UserId(1), vec![p(1)], 1.0, params()),
            Err(AccessError::OwnerInRoster(UserId(1)))
        );
        assert!(matches!(
            AccessGameInstance::new(ApId(0), UserId(0), vec![p(1)], 0.0, params()),
            Err(AccessError::InvalidPrice(_))
        ));
    }

    #[test]
    fn payoff_examples() {
        let g = game(&[(PaymentType::Free, 0.7), (PaymentType::Paying, 0.0)], 2.0);
        let prof = AccessProfile::new(vec![0.0, 0.4]).unwrap();
        assert_eq!(g.payoff(UserId(1), 0.0, &prof).unwrap(), 0.0);
        assert!((g.payoff(UserId(2), 0.4, &prof).unwrap() + 0.8).abs() < 1e-15);

        let solo = game(&[(PaymentType::Free, 0.7)], 1.0);
        let prof = AccessProfile::new(vec![1.0]).unwrap();
        let v = solo.payoff(UserId(1), 1.0, &prof).unwrap();
        assert!((v - 0.7 * (1.0 + r(1)).ln()).abs() < 1e-12);

        assert_eq!(g.payoff(UserId(9), 0.5, &prof), Err(AccessError::NotInRoster(UserId(9))));
    }

    #[test]
    fn best_response_cases() {
        let g = game(&[(PaymentType::Free, 0.3), (PaymentType::Paying, 0.0), (PaymentType::Paying, 5.0)], 1.0);
        let prof = AccessProfile::new(vec![0.5, 0.5, 0.5]).unwrap();
        assert_eq!(g.best_response(UserId(1), &prof).unwrap(), 1.0);
        assert_eq!(g.best_response(UserId(2), &prof).unwrap(), 0.0);
        assert_eq!(g.best_response(UserId(3), &prof).unwrap(), 1.0);
    }

    #[test]
    fn interior_best_response_beats_grid() {
        let g = game(&[(PaymentType::Paying, 0.6), (PaymentType::Paying, 0.5)], 1.0);
        let prof = AccessProfile::new(vec![0.3, 0.7]).unwrap();
        let br = g.best_response(UserId(1), &prof).unwrap();
        assert!(br > 0.0 && br < 1.0);
        let at_br = g.payoff(UserId(1), br, &prof).unwrap();
        let (mut best_s, mut best_v) = (0.0, f64::NEG_INFINITY);
        for k in 0..=10_000 {
            let s = k as f64 / 10_000.0;
            let v = g.payoff(UserId(1), s, &prof).unwrap();
            if v > best_v {
                best_v = v;
                best_s = s;
            }
        }
        assert!((best_s - br).abs() <= 1e-4, "{best_s} vs {br}");
        assert!(at_br >= best_v - 1e-12);
    }

    #[test]
    fn contraction_constant_examples() {
        let c = contraction_constant(&params()).unwrap();
        assert!(c < 1.0);
        let hand = (r(1) - r(2)) / (r(2) * r(2));
        assert_eq!(c, hand);
        // a huge collision slot makes R(2) tiny while leaving R(1) untouched
        let mut bad = params();
        bad.collision_slot_us = 1.0e6;
        assert!(contraction_constant(&bad).unwrap() >= 1.0);
    }

    #[test]
    fn all_free_converges_in_one_sweep() {
        let g = game(&[(PaymentType::Free, 0.1), (PaymentType::Free, 0.9), (PaymentType::Free, 0.0)], 1.0);
        let res = solve_equilibrium(&g, &SolverConfig::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
        assert_eq!(res.profile.sigma, vec![1.0; 3]);
        assert_eq!(verify_equilibrium(&g, &res.profile, 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn single_paying_player_is_one_shot() {
        let g = game(&[(PaymentType::Paying, 0.8)], 1.0);
        let res = solve_equilibrium(&g, &SolverConfig::default()).unwrap();
        assert_eq!(res.iterations, 1);
        assert_eq!(res.profile.sigma[0], (0.8 - 1.0 / r(1)).clamp(0.0, 1.0));
    }

    #[test]
    fn empty_game_is_trivially_solved() {
        let g = game(&[], 1.0);
        let res = solve_equilibrium(&g, &SolverConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.profile.sigma.is_empty());
    }

    #[test]
    fn non_convergence_is_reported() {
        let g = game(&[(PaymentType::Paying, 0.6), (PaymentType::Paying, 0.5)], 1.0);
        let cfg = SolverConfig {
            max_iters: 1,
            initial_profile: Some(AccessProfile::new(vec![1.0, 1.0]).unwrap()),
            ..SolverConfig::default()
        };
        let res = solve_equilibrium(&g, &cfg).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 1);
        assert!(res.residual > cfg.epsilon);
    }

    #[test]
    fn two_player_closed_form_cases() {
        // Free + Paying: Free pinned at one, the payer faces R(2)
        let g = game(&[(PaymentType::Free, 0.2), (PaymentType::Paying, 0.6)], 1.0);
        let prof = solve_two_player(&g).unwrap();
        assert_eq!(prof.sigma, vec![1.0, (0.6 - 1.0 / r(2)).clamp(0.0, 1.0)]);
        // both priced out
        let g = game(&[(PaymentType::Paying, 0.01), (PaymentType::Paying, 0.02)], 1.0);
        assert_eq!(solve_two_player(&g).unwrap().sigma, vec![0.0, 0.0]);
        // wrong size
        let g = game(&[(PaymentType::Paying, 0.5)], 1.0);
        assert_eq!(solve_two_player(&g), Err(AccessError::NotTwoPlayers(1)));
    }

    #[test]
    fn perturbed_equilibrium_is_detected() {
        let g = game(&[(PaymentType::Paying, 0.6), (PaymentType::Paying, 0.5)], 1.0);
        let mut prof = solve_two_player(&g).unwrap();
        assert!(verify_equilibrium(&g, &prof, 1e-3).unwrap() <= 1e-6);
        prof.sigma[0] -= 0.2;
        assert!(verify_equilibrium(&g, &prof, 1e-3).unwrap() > 0.0);
    }

    #[test]
    fn cache_is_order_invariant() {
        let cache = EquilibriumCache::new(SolverConfig::default()).unwrap();
        let a = game(&[(PaymentType::Paying, 0.6), (PaymentType::Free, 0.5), (PaymentType::Paying, 0.9)], 1.0);
        let b = game(&[(PaymentType::Paying, 0.9), (PaymentType::Paying, 0.6), (PaymentType::Free, 0.5)], 1.0);
        let sa = cache.solve(&a).unwrap();
        let sb = cache.solve(&b).unwrap();
        assert_eq!(cache.solves(), 1);
        assert_eq!(sa.sigma[0], sb.sigma[1]);
        assert_eq!(sa.sigma[1], sb.sigma[2]);
        assert_eq!(sa.sigma[2], sb.sigma[0]);
        assert!(sa.converged);
    }
}
