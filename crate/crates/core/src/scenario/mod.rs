//! System setup, the simulation loop, the experimental scenarios and reports.

pub mod config;
pub mod report;
pub mod runner;
pub mod setup;
pub mod sim;
