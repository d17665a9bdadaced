//! Scenario runner for the photon-extraction library: configuration
//! ingestion, sweep orchestration, and artifact persistence (CSV, SVG,
//! JSON manifest). The binary in `main.rs` is a thin wrapper over
//! [`cli::run`]; everything else is library code so the integration tests
//! can drive scenarios directly.

pub mod cli;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;
pub mod pool;
pub mod scenario;
