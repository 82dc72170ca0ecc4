//! Simulation and statistical analysis of a random copolymer at a selective
//! interface.
//!
//! A directed walk carries random charges and is rewarded for matching each
//! charge with its preferred side of the interface. The crate computes the
//! disordered partition functions by a transfer-matrix recurrence
//! ([`engine`]), generates reproducible charge environments and locates
//! atypical stretches ([`disorder`]), runs a rigorous concentration-based
//! test for the localized phase ([`stats`]), measures endpoint profiles
//! against the Brownian-meander prediction and estimates the critical curve
//! ([`analysis`]).
//!
//! See the crate examples for runnable entry points into each capability,
//! or the `copoly` binary for the batch command-line interface.

pub mod analysis;
pub mod cli;
pub mod disorder;
pub mod engine;
pub mod model;
pub mod stats;

pub use disorder::{EnvView, Environment, StretchRecord};
pub use engine::{PartitionProfile, SweepOptions, SweepResult, Window};
pub use model::{ChargeLaw, PolymerParams};
