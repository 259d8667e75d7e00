//! Prediction market engine for intermittently participating forecast sellers.
//!
//! Sellers submit quantile forecasts each round; the operator combines them
//! with an online (robust) quantile regression, delivers the combined forecast,
//! and once the realization and the client's utility are known, pays sellers
//! from a blend of Shapley-based in-sample and score-based out-of-sample shares.

pub mod allocation;
pub mod combination;
pub mod io;
pub mod market;
pub mod rng;
pub mod scenario;
