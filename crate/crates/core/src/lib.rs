//! Flat-input based tracking control for smooth SISO nonlinear systems.
//!
//! The crate is organized around the stages of the design procedure:
//!
//! - [`system`] — smooth SISO plant descriptions, observability analysis and
//!   construction of the flat input vector field `γ(x) = α(x) Q⁻¹(x) eₙ`.
//! - [`control`] — reference trajectories, Hurwitz-validated tracking gains,
//!   feedback linearization and flatness-based feedforward on the flat input.
//! - [`pendulum`] — the variable-length pendulum: the concrete plant, its
//!   canonical forms, the time-discretized dynamic compensator that turns the
//!   flat input `u_f` into the physical rod-speed input `u`.
//! - [`sim`] — fixed-step multi-rate closed-loop simulation (RK4 plant
//!   integration, zero-order-hold discrete controller) with trace recording.

pub mod control;
pub mod error;
pub mod pendulum;
pub mod sim;
pub mod system;

pub use control::{
    feedback_linearize, feedforward_flat_input, is_hurwitz, reference_jet, Compensator,
    CompensatorState, CompensatorStep, ControllerGains, ReferenceJet, ReferenceTrajectory,
    Segment, SegmentKind,
};
pub use error::Error;
pub use pendulum::{PendulumJet, PendulumState};
pub use sim::{
    io_equivalence_run, run_closed_loop, ControlMode, IoEquivalenceRun, SimConfig, SimFault,
    SimulationTrace, TraceRow,
};
pub use system::{
    construct_flat_input, lie_derivatives, observability_matrix, verify_flat_input,
    FlatInputSystem, ObservabilityData, SmoothSisoSystem, VerificationReport,
};
