//! Bandits with post-action contexts: environments, the UCB family, phased
//! elimination with optimal designs, Dynamic Balancing, and a seeded
//! simulation harness with brute-force oracles.

pub mod balancing;
pub mod design;
pub mod env;
pub mod harness;
pub mod instances;
pub mod oracle;
pub mod phased_elim;
pub mod policy;
pub mod stats;
pub mod ucb;

pub use env::{ActionId, ContextId, Environment, RewardModel};
pub use policy::Policy;
