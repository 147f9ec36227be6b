//! Clustering of radar detections into moving objects.
//!
//! The pipeline runs a Doppler and density prefilter, sliding-window DBSCAN
//! over position, radial velocity and time, and an optional second stage that
//! merges clusters belonging to the same object. Results are scored against
//! ground truth with a V-measure variant, and parameters can be tuned with a
//! budgeted optimizer. A synthetic scene generator provides labeled data.

pub mod coords;
pub mod dbscan;
pub mod error;
pub mod experiments;
pub mod filter;
pub mod grid;
pub mod io;
pub mod optimize;
pub mod pipeline;
pub mod score;
pub mod simgen;
pub mod spline;
pub mod stage1;
pub mod stage2;
pub mod types;

pub use error::{Error, Result};
pub use types::*;
