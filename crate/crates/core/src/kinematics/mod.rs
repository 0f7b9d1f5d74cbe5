//! Geometry primitives, the arm model and its kinematics.

pub mod arm;
pub mod ik;
pub mod manipulability;
pub mod pose;

pub use arm::{ArmModel, ChainFrames, Jacobian, JointLimit, DOF};
pub use ik::{branch_of, elbow_up, ik_enumerate, ik_local, IkSolution, LocalIk};
pub use manipulability::{manipulability_exact, manipulability_simplified, SimplifiedManipulability};
pub use pose::{layout, wrap_angle, BasePose, EePose, JointConfig, PathState, StateVector};
