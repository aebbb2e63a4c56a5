//! Underwater ROV simulation and episodic dataset factory.
//!
//! The crate covers the full data path: randomized scenes and sensors
//! ([`world`]), vehicle dynamics ([`vehicle`]), the scripted control stack
//! ([`control`], [`tasks`]), the on-disk episode format ([`dataset`]) and the
//! convolution-attention target head with its training loop ([`learner`]).

pub mod control;
pub mod geometry;
pub mod vehicle;
pub mod world;
pub mod dataset;
pub mod tasks;
pub mod learner;
