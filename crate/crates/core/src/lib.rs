//! Economics of wireless community networks: access-rate model, per-AP
//! network access game, subscriber membership game, operator pricing,
//! and scenario I/O.

pub mod access;
pub mod expectation;
pub mod membership;
pub mod rate;
pub mod operator;
pub mod report;
pub mod scenario;
