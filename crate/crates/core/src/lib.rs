//! Deterministic discrete-time simulator of a sharded-blockchain economy,
//! together with an exact security-probability library for committee-based
//! sharding.
//!
//! - **security**: exact hypergeometric tail and jury-model adversary
//!   probabilities, plus shard-count sizing under a failure budget
//! - **ledger**: the three account kinds, the funding pool, and every legal
//!   transfer edge, with exact integer conservation
//! - **policy**: monetary aggregates, the per-interval price rule, reward
//!   splitting, and the regression controller for GPL and I
//! - **agents**: demand random walks, fear-line participation, duty behavior
//! - **sim**: the per-interval orchestration loop and its metrics history
//! - **config** / **output**: flat key=value configs, CSV and manifest emission
//!
//! All randomness is drawn from counter-based streams keyed by
//! `(seed, domain, entity, height)`, so results are independent of agent
//! iteration order and worker-thread count.

pub mod agents;
pub mod config;
pub mod ledger;
pub mod money;
pub mod output;
pub mod policy;
pub mod rng;
pub mod security;
pub mod sim;

pub use config::SimConfig;
pub use ledger::LedgerState;
pub use money::Amount;
pub use security::{Probability, ShardConfig};
pub use sim::{IntervalRecord, Simulator};
