//! Self-play skill synthesis for context learning.
//!
//! A Challenger probes a context with rubric-bearing tasks, a Reasoner
//! answers under an evolving skill set, a Judge issues all-or-nothing
//! verdicts that route skill updates to each side, and a cross-time
//! replay pass picks the most generalizable Reasoner skill version. A
//! held-out evaluation harness and trace analytics round out the
//! pipeline.

pub mod agents;
pub mod analytics;
pub mod config;
pub mod corpus;
pub mod engine;
pub mod eval;
pub mod model;
pub mod provider;
pub mod replay;
pub mod skills;
