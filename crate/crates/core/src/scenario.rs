//! Scenario files (TOML), validation with defaults, grid specs and the
//! phase-plot experiment.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::access::{EquilibriumCache, SolverConfig, UserId};
use crate::expectation::{ExpectationConfig, ExpectationMode};
use crate::membership::{MembershipError, MembershipGame, MixedConfig, Population, UserProfile};
use crate::operator::{OperatorError, PricingScheme};
use crate::rate::{default_slot_us, per_user_rate, RateModelParams, DEFAULT_BACKOFF_SLOT_US, DEFAULT_PAYLOAD_BITS, DEFAULT_TAU};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

impl From<MembershipError> for ScenarioError {
    fn from(e: MembershipError) -> Self {
        ScenarioError::Invalid(e.to_string())
    }
}

impl From<OperatorError> for ScenarioError {
    fn from(e: OperatorError) -> Self {
        ScenarioError::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RateParamsFile {
    tau: Option<f64>,
    payload_bits: Option<f64>,
    backoff_slot_us: Option<f64>,
    collision_slot_us: Option<f64>,
    success_slot_us: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PricingFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    price: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prices: Option<Vec<f64>>,
    delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_max: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    damping: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mixed_max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    annealing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpectationFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<ExpectationMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sample_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact_population_limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    seed: u64,
    #[serde(default = "one")]
    time_slots: f64,
    #[serde(default)]
    rate_params: RateParamsFile,
    pricing: PricingFile,
    #[serde(default)]
    solver: SolverFile,
    #[serde(default)]
    expectation: ExpectationFile,
    users: Vec<UserProfile>,
}

fn one() -> f64 {
    1.0
}

/// Solver knobs for both stages.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub epsilon: f64,
    pub max_iters: usize,
    pub damping: f64,
    /// Smoothing temperature; `None` means 1% of the typical payoff scale.
    pub gamma: Option<f64>,
    pub tol: f64,
    pub mixed_max_iters: usize,
    pub annealing: Option<f64>,
    /// Starting mixed profile; `None` means 0.5 everywhere.
    pub alpha0: Option<Vec<f64>>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let access = SolverConfig::default();
        let mixed = MixedConfig::default();
        Self {
            epsilon: access.epsilon,
            max_iters: access.max_iters,
            damping: access.damping,
            gamma: None,
            tol: mixed.tol,
            mixed_max_iters: mixed.max_iters,
            annealing: None,
            alpha0: None,
        }
    }
}

/// Relative size of the default smoothing temperature.
pub const DEFAULT_GAMMA_FRACTION: f64 = 0.01;

/// A validated scenario with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub time_slots: f64,
    pub rate_params: RateModelParams,
    pub pricing: PricingScheme,
    pub solver: SolverSettings,
    pub expectation: ExpectationConfig,
    pub population: Arc<Population>,
}

impl Scenario {
    pub fn access_config(&self) -> SolverConfig {
        SolverConfig {
            epsilon: self.solver.epsilon,
            max_iters: self.solver.max_iters,
            damping: self.solver.damping,
            ..SolverConfig::default()
        }
    }

    pub fn new_cache(&self) -> Arc<EquilibriumCache> {
        Arc::new(EquilibriumCache::new(self.access_config()).expect("validated solver settings"))
    }

    /// Membership game under `prices` and `delta`, sharing `cache`.
    pub fn game(&self, prices: Vec<f64>, delta: f64, cache: Arc<EquilibriumCache>) -> Result<MembershipGame, MembershipError> {
        MembershipGame::new(
            self.population.clone(),
            self.rate_params,
            prices,
            delta,
            self.time_slots,
            self.expectation.clone(),
            cache,
        )
    }

    /// Membership game under the scenario's own pricing.
    pub fn base_game(&self, cache: Arc<EquilibriumCache>) -> Result<MembershipGame, MembershipError> {
        self.game(self.pricing.prices().to_vec(), self.pricing.delta(), cache)
    }

    pub fn gamma_for(&self, game: &MembershipGame) -> f64 {
        self.solver.gamma.unwrap_or_else(|| DEFAULT_GAMMA_FRACTION * game.typical_payoff_scale())
    }

    pub fn mixed_config(&self, game: &MembershipGame) -> MixedConfig {
        MixedConfig {
            gamma: self.gamma_for(game),
            tol: self.solver.tol,
            max_iters: self.solver.mixed_max_iters,
            annealing: self.solver.annealing,
        }
    }

    pub fn initial_alpha(&self) -> Vec<f64> {
        self.solver
            .alpha0
            .clone()
            .unwrap_or_else(|| vec![0.5; self.population.subscriber_count()])
    }

    fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        let r = file.rate_params;
        let payload_bits = r.payload_bits.unwrap_or(DEFAULT_PAYLOAD_BITS);
        let rate_params = RateModelParams {
            tau: r.tau.unwrap_or(DEFAULT_TAU),
            payload_bits,
            backoff_slot_us: r.backoff_slot_us.unwrap_or(DEFAULT_BACKOFF_SLOT_US),
            collision_slot_us: r.collision_slot_us.unwrap_or(default_slot_us(payload_bits)),
            success_slot_us: r.success_slot_us.unwrap_or(default_slot_us(payload_bits)),
        };
        let r1 = per_user_rate(1, &rate_params).map_err(|e| ScenarioError::Invalid(format!("rate_params: {e}")))?;
        let population = Population::new(file.users, r1)?;
        let k = population.subscriber_count();

        if !(file.time_slots > 0.0 && file.time_slots.is_finite()) {
            return invalid(format!("time_slots must be positive, got {}", file.time_slots));
        }
        let prices = match (file.pricing.price, file.pricing.prices) {
            (Some(p), None) => vec![p; k],
            (None, Some(v)) if v.len() == k => v,
            (None, Some(v)) => return invalid(format!("pricing.prices has {} entries, expected one per AP ({k})", v.len())),
            _ => return invalid("pricing needs exactly one of `price` or `prices`".into()),
        };
        let pricing = PricingScheme::per_ap(prices, file.pricing.delta, file.pricing.p_max.unwrap_or(f64::INFINITY))?;

        let defaults = SolverSettings::default();
        let s = file.solver;
        let solver = SolverSettings {
            epsilon: s.epsilon.unwrap_or(defaults.epsilon),
            max_iters: s.max_iters.unwrap_or(defaults.max_iters),
            damping: s.damping.unwrap_or(defaults.damping),
            gamma: s.gamma,
            tol: s.tol.unwrap_or(defaults.tol),
            mixed_max_iters: s.mixed_max_iters.unwrap_or(defaults.mixed_max_iters),
            annealing: s.annealing,
            alpha0: s.alpha0,
        };
        let access = SolverConfig {
            epsilon: solver.epsilon,
            max_iters: solver.max_iters,
            damping: solver.damping,
            ..SolverConfig::default()
        };
        access.validate().map_err(|e| ScenarioError::Invalid(format!("solver: {e}")))?;
        MixedConfig {
            gamma: solver.gamma.unwrap_or(1.0),
            tol: solver.tol,
            max_iters: solver.mixed_max_iters,
            annealing: solver.annealing,
        }
        .validate()
        .map_err(|e| ScenarioError::Invalid(format!("solver: {e}")))?;
        if let Some(a) = &solver.alpha0 {
            if a.len() != k || a.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return invalid(format!("solver.alpha0 must have {k} entries in [0, 1]"));
            }
        }

        let base = ExpectationConfig::default();
        let e = file.expectation;
        let expectation = ExpectationConfig {
            mode: e.mode.unwrap_or(base.mode),
            sample_count: e.sample_count.unwrap_or(base.sample_count),
            rng_seed: file.seed,
            exact_population_limit: e.exact_population_limit.unwrap_or(base.exact_population_limit),
        };
        expectation.validate().map_err(|m| ScenarioError::Invalid(format!("expectation: {m}")))?;

        Ok(Self {
            seed: file.seed,
            time_slots: file.time_slots,
            rate_params,
            pricing,
            solver,
            expectation,
            population: Arc::new(population),
        })
    }

    fn to_file(&self) -> ScenarioFile {
        let p = &self.pricing;
        let (price, prices) = match p.uniform_price() {
            Some(u) => (Some(u), None),
            None => (None, Some(p.prices().to_vec())),
        };
        let s = &self.solver;
        let r = &self.rate_params;
        ScenarioFile {
            seed: self.seed,
            time_slots: self.time_slots,
            rate_params: RateParamsFile {
                tau: Some(r.tau),
                payload_bits: Some(r.payload_bits),
                backoff_slot_us: Some(r.backoff_slot_us),
                collision_slot_us: Some(r.collision_slot_us),
                success_slot_us: Some(r.success_slot_us),
            },
            pricing: PricingFile { price, prices, delta: p.delta(), p_max: p.p_max().is_finite().then_some(p.p_max()) },
            solver: SolverFile {
                epsilon: Some(s.epsilon),
                max_iters: Some(s.max_iters),
                damping: Some(s.damping),
                gamma: s.gamma,
                tol: Some(s.tol),
                mixed_max_iters: Some(s.mixed_max_iters),
                annealing: s.annealing,
                alpha0: s.alpha0.clone(),
            },
            expectation: ExpectationFile {
                mode: Some(self.expectation.mode),
                sample_count: Some(self.expectation.sample_count),
                exact_population_limit: Some(self.expectation.exact_population_limit),
            },
            users: self.population.users().to_vec(),
        }
    }

    /// Parses and validates scenario text. `origin` labels error messages.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| ScenarioError::Parse { path: origin.into(), message: e.to_string() })?;
        Self::from_file(file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_file()).expect("scenario serializes")
    }

    /// Copy of the scenario with the expectation settings replaced.
    pub fn with_expectation(&self, mode: ExpectationMode, samples: usize, seed: u64) -> Self {
        let mut s = self.clone();
        s.seed = seed;
        s.expectation.mode = mode;
        s.expectation.sample_count = samples;
        s.expectation.rng_seed = seed;
        s
    }

    /// Copy of the scenario with one user's valuation and home probability
    /// replaced. The rest of the mobility mass is spread over the user's other
    /// entries in proportion to their original values (evenly if all zero).
    pub fn with_user_override(&self, user: UserId, rho: f64, eta_home: f64) -> Result<Self, ScenarioError> {
        let pop = &self.population;
        let ap = pop.ap_of(user)?.ok_or(MembershipError::NotSubscriber(user))?;
        if !(0.0..=1.0).contains(&eta_home) {
            return Err(ScenarioError::Invalid(format!("home probability {eta_home} outside [0, 1]")));
        }
        let mut users = pop.users().to_vec();
        let u = &mut users[user.0];
        u.rho = rho;
        let home = ap.0 + 1;
        let others: f64 = u.mobility.iter().enumerate().filter(|(i, _)| *i != home).map(|(_, v)| v).sum();
        let n_others = (u.mobility.len() - 1) as f64;
        let rest = 1.0 - eta_home;
        for (i, v) in u.mobility.iter_mut().enumerate() {
            *v = if i == home {
                eta_home
            } else if others > 0.0 {
                rest * *v / others
            } else {
                rest / n_others
            };
        }
        let r1 = per_user_rate(1, &self.rate_params).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        let mut s = self.clone();
        s.population = Arc::new(Population::new(users, r1)?);
        Ok(s)
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: shown.clone(), source })?;
    Scenario::from_toml(&text, &shown)
}

pub fn write_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    fs::write(path, scenario.to_toml()).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })
}

/// Parses `a:b:step` into `a, a + step, ...` up to `b` (inclusive within 1e-9 steps).
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("grid '{spec}': '{p}' is not a number")))
        .collect::<Result<Vec<f64>, _>>()?;
    let (a, b, step) = match nums.as_slice() {
        [a] => (*a, *a, 1.0),
        [a, b, step] => (*a, *b, *step),
        _ => return Err(format!("grid '{spec}' must be a:b:step")),
    };
    if !(a.is_finite() && b.is_finite() && b >= a) {
        return Err(format!("grid '{spec}' needs finite a <= b"));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(format!("grid '{spec}' needs a positive step"));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| if i == n && ((b - a) / step - n as f64).abs() < 1e-9 { b } else { a + i as f64 * step }).collect())
}

/// One cell of a phase plot.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCell {
    pub rho: f64,
    pub eta_home: f64,
    pub alpha: f64,
    pub converged: bool,
}

/// Mixed-equilibrium Bill probability of `subscriber` over a grid of its
/// valuation and home probability. `gamma` is fixed from the base scenario.
pub fn phase_plot(
    scenario: &Scenario,
    subscriber: UserId,
    rho_grid: &[f64],
    eta_grid: &[f64],
) -> Result<Vec<PhaseCell>, ScenarioError> {
    let pop = &scenario.population;
    let ap = pop.ap_of(subscriber)?.ok_or(MembershipError::NotSubscriber(subscriber))?;
    let cache = scenario.new_cache();
    let base = scenario.base_game(cache.clone())?;
    let config = scenario.mixed_config(&base);
    let cells: Vec<(f64, f64)> = eta_grid.iter().flat_map(|&e| rho_grid.iter().map(move |&r| (r, e))).collect();
    cells
        .into_par_iter()
        .map(|(rho, eta_home)| {
            let s = scenario.with_user_override(subscriber, rho, eta_home)?;
            let game = s.base_game(cache.clone())?;
            let eq = game.solve_mixed_equilibrium(&s.initial_alpha(), &config)?;
            Ok(PhaseCell { rho, eta_home, alpha: eq.alpha[ap.0], converged: eq.converged })
        })
        .collect()
}
