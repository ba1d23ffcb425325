//! Batch experiment runner for reward-model selection on LQR tasks:
//! configuration, expert training and demonstration persistence, the
//! estimation-error sweep, selection runs with per-class risk tables,
//! multi-trial selection statistics, and bound diagnostics.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod reports;
