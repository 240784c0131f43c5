//! Risk profiles for stock portfolios with known marginal return
//! distributions but unknown joint distribution.
//!
//! Each stock's return is a discrete distribution over a percentage grid.
//! The joint distribution is unconstrained beyond its marginals, so the
//! probability that a portfolio's return falls below (or above) a target
//! has a best case, a worst case, and an average case over the set of
//! feasible joint tables. This crate computes all of these:
//!
//! - [`return_model`] — grids, marginals, portfolios, joint tables, the
//!   twelve investor objectives and their reduction to canonical tasks.
//! - [`greedy_flow`] — O(m) evaluation of two-stock extremal probabilities
//!   via a greedy maximum flow on an implicit bipartite network.
//! - [`portfolio_sweep`] — O(m² log m) optimal two-stock portfolio search
//!   with a rotating-line sweep over a dynamically updated flow tree.
//! - [`contingency_sampler`] — hit-and-run sampling of the transportation
//!   polytope and the Monte Carlo estimator for average-case objectives.
//! - [`k_stock`] — exact LP evaluation for k stocks, the striping
//!   approximation, exact evaluation on the cent lattice, and fixed-k
//!   portfolio search.
//! - [`oracle`] — independent brute-force references used by the tests.
//! - [`io`] — instance JSON, prices CSV, and ingestion of historical data.

pub mod contingency_sampler;
mod error;
pub mod greedy_flow;
pub mod io;
pub mod k_stock;
mod numeric;
pub mod oracle;
pub mod portfolio_sweep;
pub mod return_model;

pub use error::{Error, Result};
