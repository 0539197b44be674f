//! Mediational g-formula for a time-varying mediator, a competing death
//! process treated as a nested mediator, and a time-to-event outcome under
//! an additive hazards model.

pub mod bootstrap;
pub mod cohort;
pub mod config;
pub mod engine;
pub mod estimators;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod runner;
