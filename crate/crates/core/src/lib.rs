//! Core library for vision-based tactile contour following.
//!
//! The crate models a tactile sensor that images a raised contour through a
//! compliant gel: point features on the image plane, a four-component contour
//! feature vector (line offset, line angle, surface pitch, contact depth),
//! the interaction matrices relating end-effector twists to feature rates,
//! a synthetic tactile world, classical contour extractors over depth images,
//! an extended Kalman filter for feature up-sampling, reactive servo laws,
//! and a real-time-iteration nonlinear MPC over the feature dynamics.
//!
//! The crate is `no_std`-compatible (with `alloc`); the default `std` feature
//! only adds wall-clock timing to solver and benchmark diagnostics. File IO,
//! scenario configuration, and the CLI live in the companion `tacservo-sim`
//! crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod control;
pub mod estimator;
pub mod extraction;
pub mod features;
pub mod geometry;
pub mod image;
pub mod nmpc;
pub mod plant;

pub use features::{ContourFeatures, DecoupledJacobians, TactileState};
pub use geometry::{CameraIntrinsics, PointFeature, Pose, Twist};
pub use image::DepthImage;
