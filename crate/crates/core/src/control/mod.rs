//! Base path tracking and arm stabilization.

pub mod f3b;
pub mod ihc;
pub mod mpc;

pub use f3b::{feedforward_term, induced_ee_velocity, DerivativeMode, F3bGains, F3bState, Feedforward};
pub use ihc::{ControlCommand, ControlInput, HoldController, IhcConfig, IhcController};
pub use mpc::{BaseCommand, BasePath, Mpc, MpcConfig};

/// A per-tick controller driven by the simulator.
pub trait Controller {
    fn command(&mut self, input: &ControlInput) -> ControlCommand;

    /// Fractional reference waypoint index.
    fn progress(&self) -> f64 {
        0.0
    }

    fn finished(&self) -> bool {
        false
    }

    fn ik_failures(&self) -> usize {
        0
    }
}

impl Controller for IhcController {
    fn command(&mut self, input: &ControlInput) -> ControlCommand {
        self.step(input)
    }
    fn progress(&self) -> f64 {
        IhcController::progress(self)
    }
    fn finished(&self) -> bool {
        IhcController::finished(self)
    }
    fn ik_failures(&self) -> usize {
        IhcController::ik_failures(self)
    }
}

impl Controller for HoldController {
    fn command(&mut self, input: &ControlInput) -> ControlCommand {
        self.step(input)
    }
    fn ik_failures(&self) -> usize {
        HoldController::ik_failures(self)
    }
}
