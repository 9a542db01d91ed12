//! Low-speed ship maneuvering system identification.
//!
//! The crate covers the full loop: a surge-sway-yaw reference dynamics model
//! that plays the role of the plant, synthetic free-running-test generation
//! (turning, zigzag, random, berthing), two recurrent network architectures
//! trained either on measured accelerations or on simulated state rollouts,
//! and trajectory-level evaluation with a standardized MSE metric.

pub mod datagen;
pub mod error;
pub mod evaluate;
pub mod kinematics;
pub mod mat;
pub mod netmodel;
pub mod refmodel;
pub mod rng;
pub mod tape;
pub mod training;
pub mod trajectory;

pub use error::Error;
