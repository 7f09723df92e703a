//! Cooperative multi-agent Q-learning with discriminative experience replay.
//!
//! The crate trains a parameter-shared per-agent Q-network under a value
//! factorization mixer (additive or monotonic), then *divides* each stored
//! joint transition into per-agent transitions whose rewards are derived
//! from the mixer's sensitivity to that agent's utility. Divided
//! transitions are prioritized by temporal-difference error and replayed
//! individually, which lets the shared network take extra, discriminative
//! updates on the timesteps where a given agent actually mattered.
//!
//! Layering, bottom-up:
//!
//! * [`tensor`], [`graph`] — dense rank-2 tensors and a small reverse-mode
//!   differentiation engine with gradient probes.
//! * [`nets`] — the shared agent network, both mixers, and target-network
//!   machinery built as reusable graph templates.
//! * [`replay`] — episode storage, the reward-division step, priorities,
//!   and ratio-scheduled selection.
//! * [`envs`] — two small cooperative environments used by the tests and
//!   the command-line harness.
//! * [`optim`], [`schedule`] — Adam and the linear schedules (exploration,
//!   importance correction, selection ratio).
//! * [`trainer`] — the full training loop and its evaluation hooks.
//! * [`config`], [`metrics`], [`runner`], [`plot`], [`checkpoint`] — run
//!   configuration, CSV metrics, multi-seed orchestration, SVG plotting,
//!   and checkpoint serialization for the CLI.

pub mod check;
pub mod checkpoint;
pub mod config;
pub mod envs;
pub mod graph;
pub mod metrics;
pub mod nets;
pub mod optim;
pub mod plot;
pub mod replay;
pub mod runner;
pub mod schedule;
pub mod tensor;
pub mod trainer;
