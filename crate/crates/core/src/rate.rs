//! Closed-form 802.11g per-user throughput and the expected data rate seen by
//! a user contending with others whose presence on the channel is random.
//!
//! Rates are carried in bits per microsecond, which is numerically Mbit/s.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("per-user rate is undefined for an empty channel (n = 0)")]
    EmptyChannel,
    #[error("contention probability tau must lie in (0, 1), got {0}")]
    InvalidTau(f64),
    #[error("{field} must be strictly positive and finite, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("access time of user {index} is {value}, outside [0, 1]")]
    AccessTimeOutOfRange { index: usize, value: f64 },
}

/// Backoff slot length in microseconds for 802.11g.
pub const DEFAULT_BACKOFF_SLOT_US: f64 = 28.0;
/// Average successful contention probability.
pub const DEFAULT_TAU: f64 = 0.0765;
/// Average payload length in bits.
pub const DEFAULT_PAYLOAD_BITS: f64 = 8192.0;

/// Collision/success slot length for a payload of `payload_bits` at 54 Mbit/s
/// plus 85.7 µs of fixed overhead.
pub fn default_slot_us(payload_bits: f64) -> f64 {
    85.7 + payload_bits / 54.0
}

/// Constants of the 802.11 throughput closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateModelParams {
    pub tau: f64,
    pub payload_bits: f64,
    pub backoff_slot_us: f64,
    pub collision_slot_us: f64,
    pub success_slot_us: f64,
}

impl Default for RateModelParams {
    fn default() -> Self {
        let slot = default_slot_us(DEFAULT_PAYLOAD_BITS);
        Self {
            tau: DEFAULT_TAU,
            payload_bits: DEFAULT_PAYLOAD_BITS,
            backoff_slot_us: DEFAULT_BACKOFF_SLOT_US,
            collision_slot_us: slot,
            success_slot_us: slot,
        }
    }
}

impl RateModelParams {
    pub fn validate(&self) -> Result<(), RateError> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(RateError::InvalidTau(self.tau));
        }
        for (field, value) in [
            ("payload_bits", self.payload_bits),
            ("backoff_slot_us", self.backoff_slot_us),
            ("collision_slot_us", self.collision_slot_us),
            ("success_slot_us", self.success_slot_us),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(RateError::NonPositive { field, value });
            }
        }
        Ok(())
    }

    /// Bit patterns of every field, used as part of cache keys.
    pub fn key_bits(&self) -> [u64; 5] {
        [
            self.tau.to_bits(),
            self.payload_bits.to_bits(),
            self.backoff_slot_us.to_bits(),
            self.collision_slot_us.to_bits(),
            self.success_slot_us.to_bits(),
        ]
    }
}

/// Average data rate of one user when `n` users share the channel.
///
/// `tau * tbar^(n-1) * L / (tbar^n Tb + [(1 - tbar^n) - n tau tbar^(n-1)] Tc + n tau tbar^(n-1) Ts)`
pub fn per_user_rate(n: usize, params: &RateModelParams) -> Result<f64, RateError> {
    if n == 0 {
        return Err(RateError::EmptyChannel);
    }
    params.validate()?;
    Ok(rate_unchecked(n, params))
}

fn rate_unchecked(n: usize, params: &RateModelParams) -> f64 {
    let tau = params.tau;
    let idle = 1.0 - tau;
    let nf = n as f64;
    let idle_n1 = idle.powi(n as i32 - 1);
    let idle_n = idle_n1 * idle;
    // probability that exactly one station transmits
    let success = nf * tau * idle_n1;
    let collision = (1.0 - idle_n) - success;
    let denom = idle_n * params.backoff_slot_us
        + collision * params.collision_slot_us
        + success * params.success_slot_us;
    tau * idle_n1 * params.payload_bits / denom
}

/// Distribution of the number of other users simultaneously on the channel.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyDistribution {
    probs: Vec<f64>,
}

impl OccupancyDistribution {
    /// `probs()[n]` is the probability that exactly `n` other users are connected.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

fn check_access_times(access_times: &[f64]) -> Result<(), RateError> {
    for (index, &value) in access_times.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(RateError::AccessTimeOutOfRange { index, value });
        }
    }
    Ok(())
}

/// Poisson-binomial distribution of the number of connected users, built by
/// convolving one Bernoulli factor per user.
pub fn occupancy_distribution(access_times: &[f64]) -> Result<OccupancyDistribution, RateError> {
    check_access_times(access_times)?;
    let mut probs = Vec::with_capacity(access_times.len() + 1);
    probs.push(1.0);
    for &s in access_times {
        probs.push(0.0);
        for n in (1..probs.len()).rev() {
            probs[n] = probs[n] * (1.0 - s) + probs[n - 1] * s;
        }
        probs[0] *= 1.0 - s;
    }
    Ok(OccupancyDistribution { probs })
}

/// Expected rate of a focal user that is always on the channel, given the
/// access times of the other users: `sum_n P(n) * R(n + 1)`.
pub fn expected_rate(others_access_times: &[f64], params: &RateModelParams) -> Result<f64, RateError> {
    params.validate()?;
    let dist = occupancy_distribution(others_access_times)?;
    Ok(dist
        .probs
        .iter()
        .enumerate()
        .map(|(n, p)| p * rate_unchecked(n + 1, params))
        .sum())
}
