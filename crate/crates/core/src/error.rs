//! Error type shared by the analysis, control and simulation layers.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Evaluation point lies outside the observable domain of the system.
    #[error("state {0:?} is outside the observable domain")]
    Domain(Vec<f64>),

    /// A computation produced a non-finite intermediate value.
    #[error("non-finite value encountered in {context}")]
    Numerics { context: String },

    /// The observability matrix is singular (or below the regularity
    /// threshold) at the evaluation point.
    #[error("observability matrix is singular: |det Q| = {det_q:.3e}")]
    SingularObservability { det_q: f64 },

    /// The free factor α(x) vanishes at the evaluation point.
    #[error("free factor alpha(x) vanishes at the evaluation point")]
    InvalidFactor,

    /// A flat-input verification residual exceeded the tolerance.
    #[error(
        "flat-input property violated at {point:?}: row {row} residual {residual:.3e} > {tol:.3e}"
    )]
    VerificationFailure {
        point: Vec<f64>,
        row: usize,
        residual: f64,
        tol: f64,
    },

    /// The input coefficient p_f of the I/O representation is too close to
    /// zero for the linearizing division.
    #[error("input coefficient p_f = {p_f:.3e} is within {threshold:.0e} of zero")]
    PfSingular { p_f: f64, threshold: f64 },

    /// The discrete compensator denominator is too close to zero.
    #[error("compensator denominator {denominator:.3e} is within {threshold:.0e} of zero")]
    CompensatorSingular { denominator: f64, threshold: f64 },

    /// The characteristic polynomial for the requested gains is not Hurwitz.
    #[error("error-dynamics polynomial for gains {0:?} is not Hurwitz")]
    NotHurwitz(Vec<f64>),

    /// A configuration value violates its invariants.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
