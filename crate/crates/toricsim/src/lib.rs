//! Monte-Carlo simulation of the toric code under circuit-level depolarizing
//! noise with leakage, together with minimum-weight perfect-matching decoders.
//!
//! The crate is organized bottom-up:
//!
//! * [`lattice`] — toric-code geometry: qubit/check indexing, stabilizer
//!   supports, logical operators, homology classification of error chains.
//! * [`noise`] — the leakage-extended Pauli-frame label, noise parameters and
//!   the stochastic channels applied at each circuit location.
//! * [`circuits`] — syndrome-extraction schedules for the four gate schemes
//!   (standard, Partial-LRU, Full-LRU, Quick) and the frame-propagation
//!   executors that run them.
//! * [`graph`] — decoding-graph construction: closed-form edge weights,
//!   an independent single-fault enumeration oracle, heralded-leakage
//!   conditional reweighting, and shortest-path machinery.
//! * [`matching`] — exact minimum-weight perfect matching (Edmonds blossom).
//! * [`decoder`] — syndrome-record → defect extraction, matching, correction
//!   assembly and logical-failure judgment.
//! * [`montecarlo`] — trial orchestration: equilibrium initialization,
//!   deterministic per-trial RNG streams, parallel batch running.
//! * [`analysis`] — threshold crossings, bootstrap confidence intervals,
//!   threshold-vs-leakage-rate fits, effective code-distance estimates.
//! * [`plot`] — minimal deterministic SVG rendering of sweep results.

pub mod analysis;
pub mod circuits;
pub mod decoder;
pub mod graph;
pub mod lattice;
pub mod matching;
pub mod montecarlo;
pub mod noise;
pub mod plot;
