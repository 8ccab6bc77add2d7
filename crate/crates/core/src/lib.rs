//! Quality-of-service modeling for aggregated quantum networks.
//!
//! A sender and a receiver are joined by several parallel paths of different
//! delay. Users split packets of qudits (plain or quantum Reed-Solomon encoded)
//! across the paths; early arrivals wait in receiver memories of finite
//! coherence time. The crate computes end-to-end fidelities, enumerates the
//! channel assignments a router can hand out, picks among them under the
//! greedy / restricted / balanced regimes and replays a time-slotted router.
//!
//! Module map:
//! - [`netmodel`]: paths, links, channels and the bandwidth/delay/jitter/loss metrics.
//! - [`fidelity`]: analytic fidelities for unencoded and encoded configurations.
//! - [`oracle`]: seeded Monte Carlo cross-check of [`fidelity`].
//! - [`enumerate`]: feasible assignment rows under a channel capacity model.
//! - [`policy`]: regime selection, crossing points and coherence thresholds.
//! - [`routersim`]: the slotted request / processing / assignment loop.
//! - [`cli`]: scenario files and the command-line front end.

// range checks are written negated so that NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod enumerate;
pub mod error;
pub mod fidelity;
pub mod netmodel;
pub mod oracle;
pub mod policy;
pub mod routersim;

pub use error::{Error, Result};
pub use fidelity::{Coding, Configuration, FidelityParams};
