//! Planning and control for tracked mobile manipulators.

pub mod avoidance;
pub mod control;
pub mod costs;
pub mod error;
pub mod esdf;
pub mod interpolation;
pub mod kinematics;
pub mod optimizer;
pub mod output;
pub mod pipeline;
pub mod scenario;
pub mod sim;
pub mod svg;

pub use error::{Error, Result};
