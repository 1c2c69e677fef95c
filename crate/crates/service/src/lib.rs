//! Operational wrapper around the frequency stability engine: polls fleet
//! snapshots, runs the worst-case calculation on a fixed cadence, keeps
//! the alarm state and serves results over HTTP.

pub mod api;
pub mod commands;
pub mod config;
pub mod engine;
pub mod scheduler;
pub mod view;

pub use config::ServiceConfig;
pub use engine::{RtfsService, WhatIfRequest};
