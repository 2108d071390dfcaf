//! Membership selection among subscribers.
//!
//! Every subscriber owns one AP and picks Linus (free roaming, no revenue) or
//! Bill (paid roaming, a `delta` share of what visitors pay at home). Its
//! per-slot payoff averages the access-game equilibria it meets while
//! roaming, over who else happens to be at the same AP.
//!
//! Expectations are either exact, by enumerating every visitor state, or
//! Monte-Carlo, by jointly drawing memberships and presence sets.

use std::collections::HashSet;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::access::{AccessError, AccessGameInstance, ApId, EquilibriumCache, PaymentType, Player, UserId};
use crate::expectation::{sample_parallel, Accumulator, Estimate, ExpectationConfig, ExpectationMode};
use crate::rate::{RateError, RateModelParams};

/// Tolerance on mobility rows summing to one.
pub const MOBILITY_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MembershipError {
    #[error(transparent)]
    Access(#[from] AccessError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error("invalid population: {0}")]
    InvalidPopulation(String),
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("{0} is not a subscriber")]
    NotSubscriber(UserId),
    #[error("AP {0} does not exist")]
    UnknownAp(usize),
    #[error("{user} owns AP {ap}; its home slot is not an access game")]
    FocalIsOwner { user: UserId, ap: usize },
    #[error("user sets overlap or contain the AP owner")]
    OverlappingSets,
    #[error("membership profile has {got} entries, expected {expected}")]
    ProfileLength { expected: usize, got: usize },
    #[error("membership probability {value} of subscriber {index} is outside [0, 1]")]
    InvalidProbability { index: usize, value: f64 },
    #[error("exact enumeration over {size} uncertain users exceeds the limit of {limit}")]
    PopulationTooLarge { size: usize, limit: usize },
    #[error("threshold undefined: Bill comparison degenerate (denominator {0})")]
    ThresholdUndefined(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Subscriber,
    Alien,
}

/// A user and where it spends its slots: `mobility[0]` is the uncovered area,
/// `mobility[k]` is AP `k` (the `k`-th subscriber's home).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: String,
    pub role: Role,
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home_rate: Option<f64>,
    pub mobility: Vec<f64>,
}

/// Validated set of users. Subscribers own APs in the order they appear.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    users: Vec<UserProfile>,
    home_rates: Vec<Option<f64>>,
    subscribers: Vec<usize>,
    ap_of: Vec<Option<usize>>,
}

impl Population {
    /// Validates `users`; subscribers without a `home_rate` get `default_home_rate`.
    pub fn new(users: Vec<UserProfile>, default_home_rate: f64) -> Result<Self, MembershipError> {
        let invalid = |msg: String| Err(MembershipError::InvalidPopulation(msg));
        let subscribers: Vec<usize> = users
            .iter()
            .enumerate()
            .filter_map(|(i, u)| (u.role == Role::Subscriber).then_some(i))
            .collect();
        let k = subscribers.len();
        if k == 0 {
            return invalid("at least one subscriber is required".into());
        }
        let mut ids = HashSet::new();
        let mut home_rates = Vec::with_capacity(users.len());
        for u in &users {
            if !ids.insert(u.id.as_str()) {
                return invalid(format!("duplicate user id '{}'", u.id));
            }
            if !(u.rho >= 0.0 && u.rho.is_finite()) {
                return invalid(format!("user '{}' has invalid access valuation {}", u.id, u.rho));
            }
            if u.mobility.len() != k + 1 {
                return invalid(format!(
                    "user '{}' has a mobility row of length {}, expected {} (uncovered + {} APs)",
                    u.id,
                    u.mobility.len(),
                    k + 1,
                    k
                ));
            }
            if let Some(bad) = u.mobility.iter().find(|e| !(**e >= 0.0 && **e <= 1.0)) {
                return invalid(format!("user '{}' has mobility entry {} outside [0, 1]", u.id, bad));
            }
            let sum: f64 = u.mobility.iter().sum();
            if (sum - 1.0).abs() > MOBILITY_SUM_TOLERANCE {
                return invalid(format!("mobility row of user '{}' sums to {}, not 1", u.id, sum));
            }
            match u.role {
                Role::Subscriber => {
                    let rate = u.home_rate.unwrap_or(default_home_rate);
                    if !(rate > 0.0 && rate.is_finite()) {
                        return invalid(format!("subscriber '{}' has invalid home rate {}", u.id, rate));
                    }
                    home_rates.push(Some(rate));
                }
                Role::Alien => {
                    if u.home_rate.is_some() {
                        return invalid(format!("alien '{}' cannot have a home rate", u.id));
                    }
                    home_rates.push(None);
                }
            }
        }
        let mut ap_of = vec![None; users.len()];
        for (ap, &u) in subscribers.iter().enumerate() {
            ap_of[u] = Some(ap);
        }
        Ok(Self { users, home_rates, subscribers, ap_of })
    }

    pub fn users(&self) -> &[UserProfile] {
        &self.users
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Number of subscribers, which is also the number of APs.
    pub fn subscriber_count(&self) -> usize {
        self.subscribers.len()
    }

    pub fn user(&self, id: UserId) -> Result<&UserProfile, MembershipError> {
        self.users.get(id.0).ok_or(MembershipError::UnknownUser(id))
    }

    pub fn find(&self, id: &str) -> Option<UserId> {
        self.users.iter().position(|u| u.id == id).map(UserId)
    }

    pub fn owner(&self, ap: ApId) -> Result<UserId, MembershipError> {
        self.subscribers.get(ap.0).map(|&u| UserId(u)).ok_or(MembershipError::UnknownAp(ap.0))
    }

    /// AP owned by `user`, if it is a subscriber.
    pub fn ap_of(&self, user: UserId) -> Result<Option<ApId>, MembershipError> {
        self.user(user)?;
        Ok(self.ap_of[user.0].map(ApId))
    }

    pub fn home_rate(&self, user: UserId) -> Result<f64, MembershipError> {
        self.user(user)?;
        self.home_rates[user.0].ok_or(MembershipError::NotSubscriber(user))
    }

    /// Probability that `user` is at AP `ap` in a slot.
    pub fn eta(&self, user: UserId, ap: ApId) -> f64 {
        self.users[user.0].mobility[ap.0 + 1]
    }

    pub fn subscriber_ids(&self) -> impl Iterator<Item = UserId> + '_ {
        self.subscribers.iter().map(|&u| UserId(u))
    }
}

/// `prod_{j in present} eta_j * prod_{j not present, not excluded, not owner} (1 - eta_j)`.
pub fn presence_probability(
    population: &Population,
    present: &[UserId],
    ap: ApId,
    excluded: &[UserId],
) -> Result<f64, MembershipError> {
    let owner = population.owner(ap)?;
    let present_set: HashSet<UserId> = present.iter().copied().collect();
    let excluded_set: HashSet<UserId> = excluded.iter().copied().collect();
    for &u in present.iter().chain(excluded) {
        population.user(u)?;
    }
    if present_set.contains(&owner) || excluded_set.contains(&owner) || !present_set.is_disjoint(&excluded_set) {
        return Err(MembershipError::OverlappingSets);
    }
    let mut prob = 1.0;
    for j in 0..population.len() {
        let u = UserId(j);
        if u == owner || excluded_set.contains(&u) {
            continue;
        }
        let eta = population.eta(u, ap);
        prob *= if present_set.contains(&u) { eta } else { 1.0 - eta };
    }
    Ok(prob)
}

/// A visitor's possible states at one AP: absent, or present with a payment
/// type, each with its probability.
#[derive(Debug, Clone)]
struct Candidate {
    user: UserId,
    rho: f64,
    states: Vec<(Option<PaymentType>, f64)>,
}

/// What to average at the leaves of an access-game enumeration.
#[derive(Debug, Clone, Copy)]
enum Quantity {
    /// Equilibrium payoff of roster position 0.
    FocalPayoff,
    /// Total payments of paying visitors.
    Payments,
}

/// Result of checking a pure membership profile.
#[derive(Debug, Clone, PartialEq)]
pub struct PureCheck {
    pub is_equilibrium: bool,
    /// `f_i = V_i(Bill) - V_i(Linus)` per subscriber, in AP order.
    pub gaps: Vec<Estimate>,
    /// Subscribers with `(2 x_i - 1) f_i < 0`.
    pub violations: Vec<UserId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedConfig {
    pub gamma: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Geometric annealing factor: `gamma_t = gamma * beta^t`.
    pub annealing: Option<f64>,
}

impl Default for MixedConfig {
    fn default() -> Self {
        Self { gamma: 0.01, tol: 1e-6, max_iters: 10_000, annealing: None }
    }
}

impl MixedConfig {
    pub fn validate(&self) -> Result<(), MembershipError> {
        let bad = |m: String| Err(MembershipError::InvalidConfig(m));
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1".into());
        }
        if let Some(beta) = self.annealing {
            if !(beta > 0.0 && beta < 1.0) {
                return bad(format!("annealing factor must lie in (0, 1), got {beta}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedEquilibrium {
    /// Probability of choosing Bill, per subscriber in AP order.
    pub alpha: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    /// `alpha^0, alpha^1, ...`
    pub trajectory: Vec<Vec<f64>>,
    /// Expected Bill payoff against the last profile iterated on.
    pub bill_payoff: Vec<Estimate>,
    /// Expected Linus payoff against the last profile iterated on.
    pub linus_payoff: Vec<Estimate>,
}

/// Logistic choice probability of Bill, computed without overflow.
pub fn smoothed_choice(bill: f64, linus: f64, gamma: f64) -> f64 {
    let d = (bill - linus) / gamma;
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

const TAG_AWAY: u64 = 1;
const TAG_REVENUE: u64 = 2;
const TAG_PAYOFF: u64 = 3;

/// Stage-I game: population, prices and the shared access-game cache.
#[derive(Debug, Clone)]
pub struct MembershipGame {
    population: Arc<Population>,
    rate_params: RateModelParams,
    prices: Vec<f64>,
    delta: f64,
    time_slots: f64,
    expectation: ExpectationConfig,
    cache: Arc<EquilibriumCache>,
}

impl MembershipGame {
    /// `prices[k]` is the price at AP `k`; `delta` is the Bill revenue share.
    pub fn new(
        population: Arc<Population>,
        rate_params: RateModelParams,
        prices: Vec<f64>,
        delta: f64,
        time_slots: f64,
        expectation: ExpectationConfig,
        cache: Arc<EquilibriumCache>,
    ) -> Result<Self, MembershipError> {
        rate_params.validate()?;
        let k = population.subscriber_count();
        if prices.len() != k {
            return Err(MembershipError::InvalidConfig(format!("{} prices given for {} APs", prices.len(), k)));
        }
        if let Some(p) = prices.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return Err(MembershipError::InvalidConfig(format!("price {p} is not positive")));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(MembershipError::InvalidConfig(format!("delta {delta} outside [0, 1]")));
        }
        if !(time_slots > 0.0 && time_slots.is_finite()) {
            return Err(MembershipError::InvalidConfig(format!("time_slots {time_slots} must be positive")));
        }
        expectation.validate().map_err(MembershipError::InvalidConfig)?;
        Ok(Self { population, rate_params, prices, delta, time_slots, expectation, cache })
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn time_slots(&self) -> f64 {
        self.time_slots
    }

    pub fn expectation(&self) -> &ExpectationConfig {
        &self.expectation
    }

    pub fn cache(&self) -> &EquilibriumCache {
        &self.cache
    }

    pub fn subscriber_count(&self) -> usize {
        self.population.subscriber_count()
    }

    /// Largest `T * rho_i * ln(1 + home rate)` over subscribers, or `T` when all are zero.
    pub fn typical_payoff_scale(&self) -> f64 {
        let scale = self
            .population
            .subscriber_ids()
            .map(|u| self.home_slot_payoff(u).unwrap_or(0.0))
            .fold(0.0, f64::max);
        if scale > 0.0 {
            self.time_slots * scale
        } else {
            self.time_slots
        }
    }

    fn check_profile_len(&self, len: usize) -> Result<(), MembershipError> {
        let expected = self.subscriber_count();
        if len != expected {
            return Err(MembershipError::ProfileLength { expected, got: len });
        }
        Ok(())
    }

    fn check_alpha(&self, alpha: &[f64]) -> Result<(), MembershipError> {
        self.check_profile_len(alpha.len())?;
        for (index, &value) in alpha.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(MembershipError::InvalidProbability { index, value });
            }
        }
        Ok(())
    }

    fn subscriber_ap(&self, user: UserId) -> Result<ApId, MembershipError> {
        self.population.ap_of(user)?.ok_or(MembershipError::NotSubscriber(user))
    }

    fn focal_type(&self, user: UserId, alpha: &[f64]) -> Result<PaymentType, MembershipError> {
        Ok(match self.population.ap_of(user)? {
            Some(ap) => PaymentType::for_subscriber(alpha[ap.0] >= 0.5),
            None => PaymentType::Paying,
        })
    }

    /// Per-slot payoff at home on the private channel: `rho * ln(1 + home rate)`.
    pub fn home_slot_payoff(&self, user: UserId) -> Result<f64, MembershipError> {
        let rate = self.population.home_rate(user)?;
        Ok(self.population.user(user)?.rho * rate.ln_1p())
    }

    fn solve_roster(&self, ap: ApId, roster: Vec<Player>, quantity: Quantity) -> Result<f64, MembershipError> {
        let owner = self.population.owner(ap)?;
        let instance = AccessGameInstance::new(ap, owner, roster, self.prices[ap.0], self.rate_params)?;
        let solved = self.cache.solve(&instance)?;
        Ok(match quantity {
            Quantity::FocalPayoff => self.cache.equilibrium_payoff(&instance, &solved, 0)?,
            Quantity::Payments => instance
                .players()
                .iter()
                .zip(&solved.sigma)
                .filter(|(p, _)| p.payment == PaymentType::Paying)
                .map(|(_, s)| instance.price() * s)
                .sum(),
        })
    }

    /// Visitor states at `ap` for everyone but the owner and `focal`, with
    /// subscriber `j` paying with probability `alpha[j]`.
    fn candidates(&self, ap: ApId, focal: Option<UserId>, alpha: &[f64]) -> Result<Vec<Candidate>, MembershipError> {
        let owner = self.population.owner(ap)?;
        let mut out = Vec::new();
        for (j, profile) in self.population.users().iter().enumerate() {
            let u = UserId(j);
            if u == owner || Some(u) == focal {
                continue;
            }
            let eta = self.population.eta(u, ap);
            let states: Vec<(Option<PaymentType>, f64)> = match self.population.ap_of[j] {
                Some(sub) => vec![
                    (None, 1.0 - eta),
                    (Some(PaymentType::Free), eta * (1.0 - alpha[sub])),
                    (Some(PaymentType::Paying), eta * alpha[sub]),
                ],
                None => vec![(None, 1.0 - eta), (Some(PaymentType::Paying), eta)],
            }
            .into_iter()
            .filter(|(_, p)| *p > 0.0)
            .collect();
            out.push(Candidate { user: u, rho: profile.rho, states });
        }
        Ok(out)
    }

    /// Exact expectation of `quantity` over every visitor configuration at `ap`.
    fn enumerate_exact(
        &self,
        ap: ApId,
        focal: Option<Player>,
        alpha: &[f64],
        quantity: Quantity,
    ) -> Result<f64, MembershipError> {
        let candidates = self.candidates(ap, focal.map(|p| p.user), alpha)?;
        let uncertain = candidates.iter().filter(|c| c.states.len() > 1).count();
        let limit = self.expectation.exact_population_limit;
        if uncertain > limit {
            return Err(MembershipError::PopulationTooLarge { size: uncertain, limit });
        }
        let mut roster: Vec<Player> = focal.into_iter().collect();
        let mut total = 0.0;
        self.enumerate_rec(ap, &candidates, 0, 1.0, &mut roster, quantity, &mut total)?;
        Ok(total)
    }

    #[allow(clippy::too_many_arguments)]
    fn enumerate_rec(
        &self,
        ap: ApId,
        candidates: &[Candidate],
        idx: usize,
        weight: f64,
        roster: &mut Vec<Player>,
        quantity: Quantity,
        total: &mut f64,
    ) -> Result<(), MembershipError> {
        if idx == candidates.len() {
            *total += weight * self.solve_roster(ap, roster.clone(), quantity)?;
            return Ok(());
        }
        let c = &candidates[idx];
        for &(state, p) in &c.states {
            match state {
                None => self.enumerate_rec(ap, candidates, idx + 1, weight * p, roster, quantity, total)?,
                Some(payment) => {
                    roster.push(Player { user: c.user, payment, rho: c.rho });
                    self.enumerate_rec(ap, candidates, idx + 1, weight * p, roster, quantity, total)?;
                    roster.pop();
                }
            }
        }
        Ok(())
    }

    /// `focal` (if any) followed by the users other than the owner and
    /// `exclude` drawn present at `ap`.
    fn draw_roster(
        &self,
        rng: &mut ChaCha8Rng,
        ap: ApId,
        focal: Option<Player>,
        exclude: Option<UserId>,
        bills: &[bool],
    ) -> Result<Vec<Player>, MembershipError> {
        let owner = self.population.owner(ap)?;
        let mut roster: Vec<Player> = focal.into_iter().collect();
        for (j, profile) in self.population.users().iter().enumerate() {
            let u = UserId(j);
            if u == owner || Some(u) == exclude {
                continue;
            }
            let here = rng.random::<f64>() < self.population.eta(u, ap);
            if here {
                let payment = match self.population.ap_of[j] {
                    Some(sub) => PaymentType::for_subscriber(bills[sub]),
                    None => PaymentType::Paying,
                };
                roster.push(Player { user: u, payment, rho: profile.rho });
            }
        }
        Ok(roster)
    }

    fn draw_memberships(rng: &mut ChaCha8Rng, alpha: &[f64]) -> Vec<bool> {
        alpha.iter().map(|&a| rng.random::<f64>() < a).collect()
    }

    fn alpha_of(x: &[bool]) -> Vec<f64> {
        x.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Expected per-slot payoff of `focal` while visiting AP `ap`, averaged
    /// over which other users are there, under pure memberships `x`.
    pub fn away_slot_payoff(&self, focal: UserId, ap: ApId, x: &[bool]) -> Result<Estimate, MembershipError> {
        self.check_profile_len(x.len())?;
        let owner = self.population.owner(ap)?;
        if owner == focal {
            return Err(MembershipError::FocalIsOwner { user: focal, ap: ap.0 });
        }
        let alpha = Self::alpha_of(x);
        let focal_player = Player {
            user: focal,
            payment: self.focal_type(focal, &alpha)?,
            rho: self.population.user(focal)?.rho,
        };
        match self.expectation.mode {
            ExpectationMode::Exact => Ok(Estimate::exact(self.enumerate_exact(
                ap,
                Some(focal_player),
                &alpha,
                Quantity::FocalPayoff,
            )?)),
            ExpectationMode::MonteCarlo => {
                let [acc] = sample_parallel(
                    self.expectation.sample_count,
                    self.expectation.rng_seed,
                    &[TAG_AWAY, focal.0 as u64, ap.0 as u64],
                    |rng| {
                        let roster = self.draw_roster(rng, ap, Some(focal_player), Some(focal), x)?;
                        Ok::<_, MembershipError>([self.solve_roster(ap, roster, Quantity::FocalPayoff)?])
                    },
                )?;
                Ok(acc.estimate())
            }
        }
    }

    /// Expected per-slot payments collected at `owner`'s AP from Bills and
    /// Aliens, under the memberships `x` of the other subscribers.
    pub fn expected_ap_revenue(&self, owner: UserId, x: &[bool]) -> Result<Estimate, MembershipError> {
        self.check_profile_len(x.len())?;
        let ap = self.subscriber_ap(owner)?;
        match self.expectation.mode {
            ExpectationMode::Exact => Ok(Estimate::exact(self.expected_payments_exact(ap, &Self::alpha_of(x))?)),
            ExpectationMode::MonteCarlo => {
                let [acc] = sample_parallel(
                    self.expectation.sample_count,
                    self.expectation.rng_seed,
                    &[TAG_REVENUE, ap.0 as u64],
                    |rng| {
                        let roster = self.draw_roster(rng, ap, None, None, x)?;
                        Ok::<_, MembershipError>([self.solve_roster(ap, roster, Quantity::Payments)?])
                    },
                )?;
                Ok(acc.estimate())
            }
        }
    }

    /// Exact expected payments at `ap` when subscriber `j` is a Bill with
    /// probability `alpha[j]`.
    pub(crate) fn expected_payments_exact(&self, ap: ApId, alpha: &[f64]) -> Result<f64, MembershipError> {
        self.enumerate_exact(ap, None, alpha, Quantity::Payments)
    }

    /// Payments at `ap` for one drawn presence set under memberships `bills`.
    pub(crate) fn draw_payments(&self, rng: &mut ChaCha8Rng, ap: ApId, bills: &[bool]) -> Result<f64, MembershipError> {
        let roster = self.draw_roster(rng, ap, None, None, bills)?;
        self.solve_roster(ap, roster, Quantity::Payments)
    }

    pub(crate) fn draw_bills(rng: &mut ChaCha8Rng, alpha: &[f64]) -> Vec<bool> {
        Self::draw_memberships(rng, alpha)
    }

    /// `(Linus, Bill)` expected overall payoffs of subscriber `ap` with the
    /// others mixing according to `alpha` (entry `ap` is ignored).
    fn payoff_pair_exact(&self, ap: ApId, alpha: &[f64]) -> Result<(f64, f64), MembershipError> {
        let user = self.population.owner(ap)?;
        let rho = self.population.user(user)?.rho;
        let revenue = self.expected_payments_exact(ap, alpha)?;
        let home = self.population.eta(user, ap) * self.home_slot_payoff(user)?;
        let mut roam = [0.0, 0.0];
        for k in 0..self.subscriber_count() {
            let other = ApId(k);
            let eta = self.population.eta(user, other);
            if other == ap || eta == 0.0 {
                continue;
            }
            for (slot, payment) in [PaymentType::Free, PaymentType::Paying].into_iter().enumerate() {
                let focal = Player { user, payment, rho };
                roam[slot] += eta * self.enumerate_exact(other, Some(focal), alpha, Quantity::FocalPayoff)?;
            }
        }
        let t = self.time_slots;
        Ok((t * (home + roam[0]), t * (self.delta * revenue + home + roam[1])))
    }

    /// Jointly sampled `(Linus, Bill, Bill - Linus)` accumulators.
    fn payoff_pair_mc(&self, ap: ApId, alpha: &[f64]) -> Result<[Accumulator; 3], MembershipError> {
        let user = self.population.owner(ap)?;
        let rho = self.population.user(user)?.rho;
        let home = self.population.eta(user, ap) * self.home_slot_payoff(user)?;
        let t = self.time_slots;
        sample_parallel(
            self.expectation.sample_count,
            self.expectation.rng_seed,
            &[TAG_PAYOFF, ap.0 as u64],
            |rng| {
                let bills = Self::draw_memberships(rng, alpha);
                let revenue = self.draw_payments(rng, ap, &bills)?;
                let mut roam = [0.0, 0.0];
                for k in 0..self.subscriber_count() {
                    let other = ApId(k);
                    let eta = self.population.eta(user, other);
                    if other == ap || eta == 0.0 {
                        continue;
                    }
                    let roster = self.draw_roster(rng, other, None, Some(user), &bills)?;
                    for (slot, payment) in [PaymentType::Free, PaymentType::Paying].into_iter().enumerate() {
                        let mut with_focal = Vec::with_capacity(roster.len() + 1);
                        with_focal.push(Player { user, payment, rho });
                        with_focal.extend_from_slice(&roster);
                        roam[slot] += eta * self.solve_roster(other, with_focal, Quantity::FocalPayoff)?;
                    }
                }
                let linus = t * (home + roam[0]);
                let bill = t * (self.delta * revenue + home + roam[1]);
                Ok::<_, MembershipError>([linus, bill, bill - linus])
            },
        )
    }

    /// `[Linus, Bill, gap]` estimates against mixing profile `alpha`.
    fn payoff_estimates(&self, ap: ApId, alpha: &[f64]) -> Result<[Estimate; 3], MembershipError> {
        match self.expectation.mode {
            ExpectationMode::Exact => {
                let (linus, bill) = self.payoff_pair_exact(ap, alpha)?;
                Ok([Estimate::exact(linus), Estimate::exact(bill), Estimate::exact(bill - linus)])
            }
            ExpectationMode::MonteCarlo => {
                let acc = self.payoff_pair_mc(ap, alpha)?;
                Ok(acc.map(|a| a.estimate()))
            }
        }
    }

    /// Overall payoff `V_i(bill, x_{-i})` of a subscriber over the whole horizon.
    pub fn overall_payoff(&self, subscriber: UserId, bill: bool, x: &[bool]) -> Result<Estimate, MembershipError> {
        self.check_profile_len(x.len())?;
        let ap = self.subscriber_ap(subscriber)?;
        let [linus, bill_v, _] = self.payoff_estimates(ap, &Self::alpha_of(x))?;
        Ok(if bill { bill_v } else { linus })
    }

    /// `f_i = V_i(Bill, x_{-i}) - V_i(Linus, x_{-i})`; Bill is chosen when `f_i >= 0`.
    pub fn payoff_gap(&self, subscriber: UserId, x: &[bool]) -> Result<Estimate, MembershipError> {
        self.check_profile_len(x.len())?;
        let ap = self.subscriber_ap(subscriber)?;
        Ok(self.payoff_estimates(ap, &Self::alpha_of(x))?[2])
    }

    /// Checks `(2 x_i - 1) f_i(x_{-i}) >= 0` for every subscriber.
    pub fn is_pure_equilibrium(&self, x: &[bool]) -> Result<PureCheck, MembershipError> {
        self.check_profile_len(x.len())?;
        let subs: Vec<UserId> = self.population.subscriber_ids().collect();
        let gaps = subs
            .par_iter()
            .map(|&u| self.payoff_gap(u, x))
            .collect::<Result<Vec<_>, _>>()?;
        let violations: Vec<UserId> = subs
            .iter()
            .zip(&gaps)
            .zip(x)
            .filter(|((_, f), &bill)| {
                let sign = if bill { 1.0 } else { -1.0 };
                sign * f.mean < 0.0
            })
            .map(|((u, _), _)| *u)
            .collect();
        Ok(PureCheck { is_equilibrium: violations.is_empty(), gaps, violations })
    }

    /// Every pure equilibrium, by exhaustive scan over `2^K` profiles.
    pub fn pure_equilibria(&self) -> Result<Vec<Vec<bool>>, MembershipError> {
        let k = self.subscriber_count();
        let limit = self.expectation.exact_population_limit;
        if k > limit {
            return Err(MembershipError::PopulationTooLarge { size: k, limit });
        }
        let mut found = Vec::new();
        for mask in 0u64..(1u64 << k) {
            let x: Vec<bool> = (0..k).map(|j| mask >> j & 1 == 1).collect();
            if self.is_pure_equilibrium(&x)?.is_equilibrium {
                found.push(x);
            }
        }
        Ok(found)
    }

    /// Home-probability threshold above which Bill is a best response:
    /// `1 - delta * revenue / sum_{k != i} (V_ik(Linus) - V_ik(Bill))`.
    pub fn bill_threshold(&self, subscriber: UserId, x: &[bool]) -> Result<f64, MembershipError> {
        self.check_profile_len(x.len())?;
        let ap = self.subscriber_ap(subscriber)?;
        let revenue = self.expected_ap_revenue(subscriber, x)?.mean;
        let mut as_linus = x.to_vec();
        as_linus[ap.0] = false;
        let mut as_bill = x.to_vec();
        as_bill[ap.0] = true;
        let mut denom = 0.0;
        for k in 0..self.subscriber_count() {
            if k == ap.0 {
                continue;
            }
            let linus = self.away_slot_payoff(subscriber, ApId(k), &as_linus)?.mean;
            let bill = self.away_slot_payoff(subscriber, ApId(k), &as_bill)?.mean;
            denom += linus - bill;
        }
        if !(denom > 0.0) {
            return Err(MembershipError::ThresholdUndefined(denom));
        }
        Ok(1.0 - self.delta * revenue / denom)
    }

    /// `V~_i(bill, alpha_{-i})`: overall payoff averaged over the other
    /// subscribers' random memberships.
    pub fn mixed_expected_payoff(&self, subscriber: UserId, bill: bool, alpha: &[f64]) -> Result<Estimate, MembershipError> {
        self.check_alpha(alpha)?;
        let ap = self.subscriber_ap(subscriber)?;
        let [linus, bill_v, _] = self.payoff_estimates(ap, alpha)?;
        Ok(if bill { bill_v } else { linus })
    }

    /// `omega_i = a V~_i(Bill) + (1 - a) V~_i(Linus)`.
    pub fn mixed_payoff(&self, subscriber: UserId, own_alpha: f64, alpha: &[f64]) -> Result<Estimate, MembershipError> {
        self.check_alpha(alpha)?;
        if !(0.0..=1.0).contains(&own_alpha) {
            return Err(MembershipError::InvalidProbability { index: usize::MAX, value: own_alpha });
        }
        let ap = self.subscriber_ap(subscriber)?;
        let [linus, bill, _] = self.payoff_estimates(ap, alpha)?;
        Ok(Estimate {
            mean: own_alpha * bill.mean + (1.0 - own_alpha) * linus.mean,
            std_err: own_alpha * bill.std_err + (1.0 - own_alpha) * linus.std_err,
            samples: bill.samples,
        })
    }

    /// `(Linus, Bill)` estimates for every subscriber against `alpha`.
    pub fn mixed_payoffs(&self, alpha: &[f64]) -> Result<Vec<[Estimate; 2]>, MembershipError> {
        self.check_alpha(alpha)?;
        (0..self.subscriber_count())
            .into_par_iter()
            .map(|k| {
                let [linus, bill, _] = self.payoff_estimates(ApId(k), alpha)?;
                Ok([linus, bill])
            })
            .collect()
    }

    /// One synchronous smoothed best response step against `alpha`.
    pub fn smoothed_best_response_step(&self, alpha: &[f64], gamma: f64) -> Result<Vec<f64>, MembershipError> {
        if !(gamma > 0.0) {
            return Err(MembershipError::InvalidConfig(format!("gamma must be positive, got {gamma}")));
        }
        Ok(self
            .mixed_payoffs(alpha)?
            .iter()
            .map(|[linus, bill]| smoothed_choice(bill.mean, linus.mean, gamma))
            .collect())
    }

    /// Iterates smoothed best responses from `alpha0` until the largest
    /// change is at most `config.tol`.
    pub fn solve_mixed_equilibrium(&self, alpha0: &[f64], config: &MixedConfig) -> Result<MixedEquilibrium, MembershipError> {
        config.validate()?;
        self.check_alpha(alpha0)?;
        let mut alpha = alpha0.to_vec();
        let mut trajectory = vec![alpha.clone()];
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        let mut payoffs = Vec::new();
        let mut gamma = config.gamma;
        while iterations < config.max_iters {
            payoffs = self.mixed_payoffs(&alpha)?;
            let next: Vec<f64> = payoffs
                .iter()
                .map(|[linus, bill]| smoothed_choice(bill.mean, linus.mean, gamma))
                .collect();
            residual = next.iter().zip(&alpha).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            alpha = next;
            trajectory.push(alpha.clone());
            iterations += 1;
            if residual <= config.tol {
                break;
            }
            if let Some(beta) = config.annealing {
                gamma *= beta;
            }
        }
        let (linus_payoff, bill_payoff) = payoffs.iter().map(|[l, b]| (*l, *b)).unzip();
        Ok(MixedEquilibrium {
            alpha,
            converged: residual <= config.tol,
            iterations,
            residual,
            trajectory,
            bill_payoff,
            linus_payoff,
        })
    }
}
