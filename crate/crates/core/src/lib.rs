//! Deterministic discrete-event simulator for mobile ad-hoc networks.
//!
//! Measures control-packet energy consumption (routing layer vs. MAC layer)
//! of the AODV, DSR and DSDV routing protocols under Random Waypoint,
//! Reference Point Group and Manhattan Grid mobility with CBR, Exponential
//! and Pareto ON/OFF traffic.
//!
//! The building blocks are library modules: [`kernel`] (event engine),
//! [`mobility`], [`traffic`], [`routing`], [`mac`], [`energy`], and the
//! scenario/sweep harness in [`scenario`], [`sim`], [`metrics`] and
//! [`sweep`]. The `manet-sim` CLI wraps them.

pub mod energy;
pub mod kernel;
pub mod mobility;
pub mod mac;
pub mod metrics;
pub mod routing;
pub mod scenario;
pub mod sim;
pub mod sweep;
pub mod rng;
pub mod traffic;

/// Node identifier: dense indices `0..node_count`.
pub type NodeId = usize;

pub use kernel::SimTime;
