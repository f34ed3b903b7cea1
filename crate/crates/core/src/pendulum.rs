//! The variable-length pendulum: a ball sliding on a rotating rod, with the
//! rod's angular velocity as control input.
//!
//! ```text
//! ẋ₁ = x₂
//! ẋ₂ = −cos x₃ + x₁ u²
//! ẋ₃ = u
//! ```
//!
//! `y = x₁` is the ball's distance from the pivot, `x₂` its speed, `x₃` the
//! rod angle from the vertical; units are normed with gravity 1. The output
//! has relative degree 2 away from `x₁ = 0` and 3 on it, so a single
//! feedback-linearizing controller for the plant itself cannot cover both
//! regions. The flat-input companion system
//!
//! ```text
//! ẋ₁ = x₂,  ẋ₂ = −cos x₃,  ẋ₃ = sin x₃ · u_f
//! ```
//!
//! has full relative degree 3 on `0 < x₃ < π`, and a first-order discrete
//! prefilter reproduces its input-output behavior through the physical input.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::control::{Compensator, CompensatorState, CompensatorStep, PF_THRESHOLD};
use crate::error::Error;
use crate::system::{FlatInputSystem, SmoothSisoSystem};

/// Guard on the discrete compensator denominator.
pub const DENOMINATOR_THRESHOLD: f64 = 1e-8;

/// Plant state. The observable domain requires `0 < x₃ < π`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumState {
    /// Ball distance from the pivot.
    pub x1: f64,
    /// Ball speed along the rod.
    pub x2: f64,
    /// Rod angle from the vertical (rad).
    pub x3: f64,
}

impl PendulumState {
    pub fn new(x1: f64, x2: f64, x3: f64) -> Self {
        Self { x1, x2, x3 }
    }

    pub fn in_observable_domain(&self) -> bool {
        self.x1.is_finite()
            && self.x2.is_finite()
            && self.x3.is_finite()
            && self.x3 > 0.0
            && self.x3 < PI
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_row_slice(&[self.x1, self.x2, self.x3])
    }

    pub fn from_vector(x: &DVector<f64>) -> Self {
        Self::new(x[0], x[1], x[2])
    }
}

/// Output and its first two derivatives, reconstructed from state feedback —
/// the output itself is never differentiated numerically.
///
/// The controller and compensator expect `|ddy| < 1`; a violation is flagged
/// by the simulator rather than rejected here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumJet {
    pub y: f64,
    pub dy: f64,
    pub ddy: f64,
}

impl PendulumJet {
    pub fn new(y: f64, dy: f64, ddy: f64) -> Self {
        Self { y, dy, ddy }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.y, self.dy, self.ddy]
    }
}

/// Plant dynamics `(ẋ₁, ẋ₂, ẋ₃) = (x₂, −cos x₃ + x₁u², u)`.
pub fn dynamics(x: &PendulumState, u: f64) -> [f64; 3] {
    [x.x2, -x.x3.cos() + x.x1 * u * u, u]
}

/// Diffeomorphism into observer canonical coordinates:
/// `ξ = (x₁, x₂, −cos x₃)`.
pub fn to_canonical(x: &PendulumState) -> [f64; 3] {
    [x.x1, x.x2, -x.x3.cos()]
}

/// Inverse of [`to_canonical`], with the arccos branch in `(0, π)`.
pub fn from_canonical(xi: &[f64; 3]) -> Result<PendulumState, Error> {
    if !xi[2].is_finite() || xi[2].abs() >= 1.0 {
        return Err(Error::Domain(xi.to_vec()));
    }
    Ok(PendulumState::new(xi[0], xi[1], (-xi[2]).acos()))
}

/// Output jet from state feedback: `ẏ = x₂`, `ÿ = −cos x₃ + y u²`.
///
/// `u_applied` is the control sample held over the elapsed interval — at a
/// controller tick the new sample is not known yet.
pub fn output_jet(x: &PendulumState, u_applied: f64) -> PendulumJet {
    PendulumJet::new(
        x.x1,
        x.x2,
        -x.x3.cos() + x.x1 * u_applied * u_applied,
    )
}

/// One step of the time-discretized dynamic compensator:
///
/// ```text
///        (1 − ÿ²) u_f + 2y u²[k−1]/Δt
/// u[k] = ─────────────────────────────────────────────────
///        ẏ u[k−1] + 2y u[k−1]/Δt + √(1 − (ÿ − y u²[k−1])²)
/// ```
///
/// obtained from the continuous compensator equation with backward
/// differentiation `ů ≈ (u[k] − u[k−1])/Δt` and the product rule
/// `u² ≈ u[k] u[k−1]`, which keeps the equation linear in `u[k]`.
///
/// Analytically `ÿ − y u²[k−1] = −cos x₃ ∈ [−1, 1]`, so a negative root
/// argument is numerical drift; it is clamped to zero and flagged.
pub fn compensator_step(
    jet: &PendulumJet,
    u_f: f64,
    state: &CompensatorState,
) -> Result<CompensatorStep, Error> {
    let u1 = state.u_prev;
    let dt = state.dt;
    let mut arg = 1.0 - (jet.ddy - jet.y * u1 * u1).powi(2);
    let clamped = arg < 0.0;
    if clamped {
        arg = 0.0;
    }
    let denominator = jet.dy * u1 + 2.0 * jet.y * u1 / dt + arg.sqrt();
    if denominator.abs() <= DENOMINATOR_THRESHOLD {
        return Err(Error::CompensatorSingular {
            denominator,
            threshold: DENOMINATOR_THRESHOLD,
        });
    }
    let numerator = (1.0 - jet.ddy * jet.ddy) * u_f + 2.0 * jet.y * u1 * u1 / dt;
    let u = numerator / denominator;
    if !u.is_finite() {
        return Err(Error::Numerics {
            context: "discrete compensator step".into(),
        });
    }
    Ok(CompensatorStep {
        u,
        next: state.advanced(u),
        clamped,
    })
}

/// Residual of the continuous compensator equation
/// `ẏu² + 2yuů + √(1 − (ÿ − yu²)²) u − (1 − ÿ²) u_f`,
/// used as a diagnostic for the discretization. Returns the residual and
/// whether the root argument had to be clamped.
pub fn continuous_compensator_residual(
    jet: &PendulumJet,
    u: f64,
    du: f64,
    u_f: f64,
) -> (f64, bool) {
    let mut arg = 1.0 - (jet.ddy - jet.y * u * u).powi(2);
    let clamped = arg < 0.0;
    if clamped {
        arg = 0.0;
    }
    let lhs = jet.dy * u * u + 2.0 * jet.y * u * du + arg.sqrt() * u;
    (lhs - (1.0 - jet.ddy * jet.ddy) * u_f, clamped)
}

/// Differential parameterization of the flat-input system: state and flat
/// input from the output jet `(y, ẏ, ÿ, y⁽³⁾)`,
/// `x̄ = (y, ẏ, arccos(−ÿ))` and `u_f = y⁽³⁾/(1 − ÿ²)`.
pub fn flat_parameterization(jet4: &[f64; 4]) -> Result<(PendulumState, f64), Error> {
    let ddy = jet4[2];
    if !ddy.is_finite() || ddy.abs() >= 1.0 {
        return Err(Error::Domain(jet4.to_vec()));
    }
    let p_f = 1.0 - ddy * ddy;
    if p_f.abs() <= PF_THRESHOLD {
        return Err(Error::PfSingular {
            p_f,
            threshold: PF_THRESHOLD,
        });
    }
    let state = PendulumState::new(jet4[0], jet4[1], (-ddy).acos());
    Ok((state, jet4[3] / p_f))
}

/// The pendulum as a smooth SISO system, with analytic Lie derivatives and
/// an analytic observability Jacobian.
#[derive(Debug, Clone, Copy, Default)]
pub struct Pendulum;

impl SmoothSisoSystem for Pendulum {
    fn dim(&self) -> usize {
        3
    }

    /// Relative degree 2 away from `x₁ = 0`, so one unit of internal
    /// dynamics.
    fn internal_order(&self) -> usize {
        1
    }

    fn dynamics(&self, x: &DVector<f64>, u: f64) -> DVector<f64> {
        let s = PendulumState::from_vector(x);
        DVector::from_row_slice(&dynamics(&s, u))
    }

    fn output(&self, x: &DVector<f64>) -> f64 {
        x[0]
    }

    fn analytic_jet(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::from_row_slice(&[x[0], x[1], -x[2].cos()]))
    }

    fn analytic_jet_jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, x[2].sin()],
        ))
    }

    fn in_observable_domain(&self, x: &DVector<f64>) -> bool {
        PendulumState::from_vector(x).in_observable_domain()
    }
}

/// The flat-input companion system with `γ = (0, 0, sin x₃)ᵀ` and
/// `α = sin² x₃`, whose I/O representation is `y⁽³⁾ = (1 − ÿ²) u_f`.
pub fn flat_input_system() -> FlatInputSystem {
    FlatInputSystem::new(
        Arc::new(Pendulum),
        |x| DVector::from_row_slice(&[0.0, 0.0, x[2].sin()]),
        |x| {
            let s = x[2].sin();
            s * s
        },
        |_jet| 0.0,
        |jet| 1.0 - jet[2] * jet[2],
    )
}

/// The discrete prefilter `u_f → u` for the pendulum.
#[derive(Debug, Clone, Copy, Default)]
pub struct DiscreteCompensator;

impl Compensator for DiscreteCompensator {
    fn step(
        &self,
        jet: &[f64],
        u_f: f64,
        state: &CompensatorState,
    ) -> Result<CompensatorStep, Error> {
        compensator_step(&PendulumJet::new(jet[0], jet[1], jet[2]), u_f, state)
    }
}
