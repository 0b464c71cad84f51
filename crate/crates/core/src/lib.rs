//! Discrete-event simulator of a single UE moving through an LTE + mmWave
//! deployment, comparing two mobility schemes:
//!
//! * **dual connectivity (DC)**: the PDCP anchor stays at the LTE eNB, which
//!   routes traffic either over its own air link or over X2 to a remote mmWave
//!   RLC, and switches between the two with a single RRC message;
//! * **hard handover (HH)**: the UE is served by exactly one cell and every
//!   change of cell runs X2 preparation, RRC reconfiguration, non-contention
//!   random access and an MME path switch.
//!
//! Both schemes see the same channel for the same seed, so their metrics can
//! be compared run by run.

pub mod channel;
pub mod config;
pub mod control;
pub mod dataplane;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod network;
pub mod output;
pub mod phy;
pub mod sim;

pub use config::{Mode, SimulationParams, SweepSpec};
pub use error::{Result, SimError};
pub use metrics::{AggregateMetrics, RunMetrics};
pub use network::{RunOutput, Simulation};
pub use sim::SimTime;
