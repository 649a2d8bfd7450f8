//! Two-dimensional dynamic score fusion for continuous authentication.
//!
//! The crate combines three pieces that run together in an authentication
//! loop:
//!
//! * [`scheduler`] picks the cheapest set of classifiers whose combined a
//!   priori acceptance probability clears a threshold in the current context,
//!   force-activating any classifier that would otherwise not finish before
//!   the device locks.
//! * [`fusion`] averages normalized scores per classifier inside a
//!   context-dependent authentication window (multi-sample), then across
//!   classifiers (multi-classifier), and computes the critical time until
//!   the fused score falls below the lock threshold.
//! * [`authloop`] drives both against a simulated environment.
//!
//! Around that core sit the comparison fusion rules ([`baselines`]),
//! calibrated synthetic score models ([`synthdata`]), FAR/FRR/EER evaluation
//! ([`eval`]), and the experiment runner behind the `dynfuse` binary
//! ([`config`], [`experiment`], [`trace`]).

pub mod authloop;
pub mod baselines;
pub mod config;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fusion;
pub mod history;
pub mod scheduler;
pub mod synthdata;
pub mod trace;
pub mod types;

pub use error::{Error, Result};
pub use fusion::FusedScore;
pub use history::History;
pub use types::{ClassifierId, ContextLabel, ScoreRecord, TimeInstant, TimeSpan};
