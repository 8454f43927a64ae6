//! Deterministic desk-scale simulator for robust, privacy-preserving
//! federated learning.
//!
//! Clients upload their model delta split into a unit direction, an
//! amplitude, and a unit last-layer direction, all as two-party additive
//! secret shares. Each round the server filters the uploads with a
//! density-based clustering pass over pairwise direction distances, clips
//! amplitudes with an adaptive bound, aggregates, adds calibrated Gaussian
//! noise, and broadcasts the result. A personalization term keeps every
//! client's local model anchored to its own data.

pub mod attacks;
pub mod client;
pub mod data;
pub mod dbscan;
pub mod error;
pub mod harness;
pub mod model;
pub mod mpc;
pub mod par;
pub mod privacy;
pub mod server;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
