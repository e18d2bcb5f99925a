//! Simulator and optimization library for downlink power control of a
//! modular extra-large antenna array serving information-decoding and
//! energy-harvesting users in its radiative near field.
//!
//! The pipeline: build the array geometry and sample users into visibility
//! regions ([`geometry`]), compute spherical-wavefront channels and scalar
//! coupling tables ([`channel`]), evaluate rates, harvested power, and
//! consumed power ([`metrics`]), minimize consumption over the power split
//! with a splitting-based primal-dual solver ([`pa_solver`]), decide which
//! subarrays stay on ([`sa_selector`]), and alternate the two in a two-tier
//! loop compared against equal-allocation and full-activation baselines
//! ([`orchestrator`]). Brute-force verifiers live in [`oracle`]; scenario
//! configuration and Monte Carlo aggregation in [`scenario`] and [`report`].

pub mod channel;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod oracle;
pub mod orchestrator;
pub mod pa_solver;
pub mod report;
pub mod sa_selector;
pub mod scenario;

pub use error::{Error, Result};
