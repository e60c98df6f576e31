//! Self-supervised point cloud registration.
//!
//! A robust RANSAC + Horn + ICP teacher produces transform pseudo-labels, a
//! verifier filters them by overlap ratio, and a small perceptron student is
//! trained on the surviving labels with a contrastive + triplet objective.
//! The two alternate for a fixed number of rounds, starting from FPFH.

pub mod datagen;
pub mod descriptors;
pub mod error;
pub mod fpfh;
pub mod geometry;
pub mod io;
pub mod kdtree;
pub mod matching;
pub mod seed;
pub mod sgp;
pub mod student;
pub mod teacher;
pub mod truth;
pub mod verifier;

pub use error::{Result, SgpError};
