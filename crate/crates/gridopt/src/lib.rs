//! Distributed stochastic AC optimal power flow toolkit.
//!
//! The crate solves the AC optimal power flow problem in four flavors —
//! deterministic or load-uncertain, centralized or split across grid regions
//! coordinated by consensus ADMM — and evaluates the reliability of the
//! resulting dispatch against Monte Carlo load scenarios.
//!
//! The pieces compose as a pipeline:
//!
//! 1. [`case`] parses a network description and builds its admittance matrix
//!    and an optional region partition.
//! 2. [`scenarios`] samples Gaussian load scenarios and reduces them with
//!    K-means clustering plus simultaneous backward reduction.
//! 3. [`acopf`] formulates the deterministic, stochastic, and per-region
//!    optimization problems, which [`nlp`] solves with a primal-dual
//!    interior-point method.
//! 4. [`admm`] orchestrates the distributed solve over a message-passing
//!    boundary; [`powerflow`] and [`reliability`] audit any dispatch by
//!    replaying scenarios through a conventional power flow.
//!
//! The `gridopt` binary wires the pipeline behind a command line; see the
//! repository README for usage.

pub mod acopf;
pub mod admm;
pub mod case;
pub mod nlp;
pub mod powerflow;
pub mod reliability;
pub mod scenarios;
