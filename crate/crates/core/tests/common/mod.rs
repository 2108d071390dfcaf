//! Shared helpers for integration tests: random instances and brute-force
//! reference implementations that avoid the library's cache and factorized
//! enumeration.

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wcn::access::{
    solve_equilibrium, AccessGameInstance, AccessProfile, ApId, EquilibriumCache, PaymentType, Player, SolverConfig,
    UserId,
};
use wcn::expectation::ExpectationConfig;
use wcn::membership::{presence_probability, MembershipGame, Population, Role, UserProfile};
use wcn::rate::{per_user_rate, RateModelParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

pub fn r1() -> f64 {
    per_user_rate(1, &RateModelParams::default()).unwrap()
}

/// Probability row of length `len`; each entry is zeroed with probability `sparsity`.
pub fn random_row(rng: &mut ChaCha8Rng, len: usize, sparsity: f64) -> Vec<f64> {
    let mut w: Vec<f64> = (0..len)
        .map(|_| if rng.random::<f64>() < sparsity { 0.0 } else { rng.random::<f64>() })
        .collect();
    if w.iter().all(|v| *v == 0.0) {
        let j = rng.random_range(0..len);
        w[j] = 1.0;
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

pub fn random_users(rng: &mut ChaCha8Rng, subscribers: usize, aliens: usize) -> Vec<UserProfile> {
    let mut users = Vec::new();
    for i in 0..subscribers {
        users.push(UserProfile {
            id: format!("s{}", i + 1),
            role: Role::Subscriber,
            rho: rng.random_range(0.0..1.2),
            home_rate: None,
            mobility: random_row(rng, subscribers + 1, 0.2),
        });
    }
    for j in 0..aliens {
        users.push(UserProfile {
            id: format!("a{}", j + 1),
            role: Role::Alien,
            rho: rng.random_range(0.0..1.2),
            home_rate: None,
            mobility: random_row(rng, subscribers + 1, 0.2),
        });
    }
    users
}

pub fn make_game(users: Vec<UserProfile>, prices: Vec<f64>, delta: f64, time_slots: f64, expectation: ExpectationConfig) -> MembershipGame {
    let pop = Population::new(users, r1()).unwrap();
    MembershipGame::new(
        Arc::new(pop),
        RateModelParams::default(),
        prices,
        delta,
        time_slots,
        expectation,
        Arc::new(EquilibriumCache::new(SolverConfig::default()).unwrap()),
    )
    .unwrap()
}

pub fn random_game(rng: &mut ChaCha8Rng, subscribers: usize, aliens: usize) -> MembershipGame {
    let users = random_users(rng, subscribers, aliens);
    let price = rng.random_range(0.3..1.5);
    let delta = rng.random_range(0.0..1.0);
    make_game(users, vec![price; subscribers], delta, 1.0, ExpectationConfig::exact())
}

pub fn random_bits(rng: &mut ChaCha8Rng, k: usize) -> Vec<bool> {
    (0..k).map(|_| rng.random::<bool>()).collect()
}

/// Every subset of `items`, by bitmask.
pub fn subsets<T: Copy>(items: &[T]) -> Vec<Vec<T>> {
    (0u32..(1 << items.len()))
        .map(|mask| items.iter().enumerate().filter(|(j, _)| mask >> j & 1 == 1).map(|(_, v)| *v).collect())
        .collect()
}

/// Brute-force Poisson-binomial: sum over all subsets of connected users.
pub fn brute_occupancy(s: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; s.len() + 1];
    let idx: Vec<usize> = (0..s.len()).collect();
    for set in subsets(&idx) {
        let p: f64 = (0..s.len()).map(|j| if set.contains(&j) { s[j] } else { 1.0 - s[j] }).product();
        out[set.len()] += p;
    }
    out
}

fn payment_of(pop: &Population, user: UserId, x: &[bool]) -> PaymentType {
    match pop.ap_of(user).unwrap() {
        Some(ap) => PaymentType::for_subscriber(x[ap.0]),
        None => PaymentType::Paying,
    }
}

fn solve_fresh(game: &MembershipGame, ap: ApId, roster: Vec<Player>) -> (AccessGameInstance, AccessProfile) {
    let owner = game.population().owner(ap).unwrap();
    let instance = AccessGameInstance::new(ap, owner, roster, game.prices()[ap.0], RateModelParams::default()).unwrap();
    let eq = solve_equilibrium(&instance, &SolverConfig::default()).unwrap();
    (instance, eq.profile)
}

/// Focal payoff at AP `ap`, enumerating presence sets with `presence_probability`.
pub fn literal_away_payoff(game: &MembershipGame, focal: UserId, ap: ApId, x: &[bool]) -> f64 {
    let pop = game.population();
    let owner = pop.owner(ap).unwrap();
    let others: Vec<UserId> = (0..pop.len()).map(UserId).filter(|u| *u != owner && *u != focal).collect();
    let mut total = 0.0;
    for present in subsets(&others) {
        let w = presence_probability(pop, &present, ap, &[focal]).unwrap();
        if w == 0.0 {
            continue;
        }
        let mut roster = vec![Player { user: focal, payment: payment_of(pop, focal, x), rho: pop.users()[focal.0].rho }];
        roster.extend(present.iter().map(|&u| Player { user: u, payment: payment_of(pop, u, x), rho: pop.users()[u.0].rho }));
        let (instance, profile) = solve_fresh(game, ap, roster);
        total += w * instance.payoff(focal, profile.sigma[0], &profile).unwrap();
    }
    total
}

/// Expected Bill/Alien payments at AP `ap` by subset enumeration.
pub fn literal_payments(game: &MembershipGame, ap: ApId, x: &[bool]) -> f64 {
    let pop = game.population();
    let owner = pop.owner(ap).unwrap();
    let others: Vec<UserId> = (0..pop.len()).map(UserId).filter(|u| *u != owner).collect();
    let mut total = 0.0;
    for present in subsets(&others) {
        let w = presence_probability(pop, &present, ap, &[]).unwrap();
        if w == 0.0 || present.is_empty() {
            continue;
        }
        let roster: Vec<Player> = present
            .iter()
            .map(|&u| Player { user: u, payment: payment_of(pop, u, x), rho: pop.users()[u.0].rho })
            .collect();
        let (instance, profile) = solve_fresh(game, ap, roster);
        let pay: f64 = instance
            .players()
            .iter()
            .zip(&profile.sigma)
            .filter(|(p, _)| p.payment == PaymentType::Paying)
            .map(|(_, s)| instance.price() * s)
            .sum();
        total += w * pay;
    }
    total
}

/// `T (x_i delta Pi_i + sum_k eta_ik V_ik)` built from the literal pieces.
pub fn literal_overall(game: &MembershipGame, sub: UserId, bill: bool, x: &[bool]) -> f64 {
    let pop = game.population();
    let home = pop.ap_of(sub).unwrap().unwrap();
    let mut x = x.to_vec();
    x[home.0] = bill;
    let mut v = pop.eta(sub, home) * pop.users()[sub.0].rho * pop.home_rate(sub).unwrap().ln_1p();
    if bill {
        v += game.delta() * literal_payments(game, home, &x);
    }
    for k in 0..game.subscriber_count() {
        let eta = pop.eta(sub, ApId(k));
        if k != home.0 && eta > 0.0 {
            v += eta * literal_away_payoff(game, sub, ApId(k), &x);
        }
    }
    game.time_slots() * v
}

/// `sum_{x_-i} psi(x_-i) V_i(bill, x_-i)` over every profile of the others.
pub fn literal_mixed(game: &MembershipGame, sub: UserId, bill: bool, alpha: &[f64]) -> f64 {
    let k = game.subscriber_count();
    let home = game.population().ap_of(sub).unwrap().unwrap().0;
    let others: Vec<usize> = (0..k).filter(|j| *j != home).collect();
    let mut total = 0.0;
    for bills in subsets(&others) {
        let x: Vec<bool> = (0..k).map(|j| bills.contains(&j)).collect();
        let psi: f64 = others.iter().map(|&j| if x[j] { alpha[j] } else { 1.0 - alpha[j] }).product();
        if psi > 0.0 {
            total += psi * literal_overall(game, sub, bill, &x);
        }
    }
    total
}

/// Copy of `game` with subscriber `sub`'s home probability set to `eta_home`
/// and the rest of its row rescaled.
pub fn with_home_probability(game: &MembershipGame, sub: UserId, eta_home: f64) -> MembershipGame {
    let pop = game.population();
    let home = pop.ap_of(sub).unwrap().unwrap().0 + 1;
    let mut users = pop.users().to_vec();
    let row = &mut users[sub.0].mobility;
    let others: f64 = row.iter().enumerate().filter(|(i, _)| *i != home).map(|(_, v)| v).sum();
    let n = (row.len() - 1) as f64;
    for (i, v) in row.iter_mut().enumerate() {
        *v = if i == home {
            eta_home
        } else if others > 0.0 {
            (1.0 - eta_home) * *v / others
        } else {
            (1.0 - eta_home) / n
        };
    }
    make_game(users, game.prices().to_vec(), game.delta(), game.time_slots(), game.expectation().clone())
}
