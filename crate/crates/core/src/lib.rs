//! Peer-assisted robotic learning at desk scale.
//!
//! Robots with visually distinct worlds share semantic layouts, style models
//! and local driving policies with a cloud node. The cloud augments the
//! layouts with new instances ([`dat`]), re-renders them in every robot's
//! style ([`style`]), labels them by polling the local policies, trains a
//! shared policy ([`policy`]) and sends it back for local fine-tuning
//! ([`protocol`]). [`harness`] runs the comparison against local and
//! centralized imitation learning.

pub mod codec;
pub mod dat;
pub mod error;
pub mod harness;
pub mod policy;
pub mod protocol;
pub mod rng;
pub mod style;
pub mod world;

pub use error::{Error, Result};
