//! Relationship-proposal handling for visual relationship detection.
//!
//! The crate covers the proposal taxonomy and balanced negative sampling,
//! a one-layer heterogeneous graph-attention block, a spatial mask decoder,
//! a toy end-to-end model with training and inference, and VRD/HOI
//! evaluation metrics. Synthetic scenes stand in for a real detector.

pub mod geometry;
pub mod numeric;
pub mod proposal;
pub mod sampling;
pub mod mhgat;
pub mod smd;
pub mod pipeline;
pub mod evaluation;
pub mod data_io;
pub mod cli;
