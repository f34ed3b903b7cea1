//! Smooth SISO system descriptions, observability analysis and flat-input
//! construction.
//!
//! A system `ẋ = f(x,u), y = h(x)` is observable on a domain where the
//! observability matrix `Q(x)` — the Jacobian of the stacked Lie derivatives
//! `(h, L_f h, …, L_f^{n−1} h)` taken along `f(x,0)` — is regular. On that
//! domain a flat input vector field is obtained from
//! `γ(x) = α(x) Q⁻¹(x) (0,…,0,1)ᵀ` for any nonvanishing factor `α`, and the
//! companion system `ẋ = f(x,0) + γ(x) u_f` is differentially flat with the
//! given output as its flat output.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::Error;

/// Default threshold on `|det Q|` below which the observability matrix is
/// reported as irregular. Systems may override per instance.
pub const DEFAULT_REGULARITY_THRESHOLD: f64 = 1e-9;

/// A smooth single-input single-output plant `ẋ = f(x,u), y = h(x)`.
///
/// Implementations are immutable values; every method is a pure function of
/// its arguments, so a system may be shared freely across threads.
pub trait SmoothSisoSystem: Send + Sync {
    /// State dimension `n`.
    fn dim(&self) -> usize;

    /// Order of the internal dynamics, `m = n − r`.
    fn internal_order(&self) -> usize;

    /// Dynamics map `f(x, u)`.
    fn dynamics(&self, x: &DVector<f64>, u: f64) -> DVector<f64>;

    /// Output map `h(x)`.
    fn output(&self, x: &DVector<f64>) -> f64;

    /// Analytic Lie-derivative stack `(h, L_f h, …, L_f^{n−1} h)` evaluated
    /// with `u = 0`, when the system provides one. Numeric fallbacks use
    /// nested central differences, which lose roughly one digit per nesting
    /// level, so analytic jets are first-class.
    fn analytic_jet(&self, _x: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    /// Analytic Jacobian of the Lie-derivative stack (row `k` is the gradient
    /// of `L_f^k h`), when available. This is the observability matrix itself.
    fn analytic_jet_jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// Membership in the observable domain `D_o`.
    fn in_observable_domain(&self, x: &DVector<f64>) -> bool {
        x.iter().all(|v| v.is_finite())
    }

    /// Membership in the controllable domain `D_c`.
    fn in_controllable_domain(&self, x: &DVector<f64>) -> bool {
        x.iter().all(|v| v.is_finite())
    }

    /// Threshold on `|det Q|` for the regularity flag.
    fn regularity_threshold(&self) -> f64 {
        DEFAULT_REGULARITY_THRESHOLD
    }
}

/// Observability matrix, its determinant and the regularity flag at one
/// evaluation point.
#[derive(Debug, Clone)]
pub struct ObservabilityData {
    /// Row `k` is the gradient of `L_f^k h` at the evaluation point.
    pub q: DMatrix<f64>,
    pub det_q: f64,
    /// `|det_q|` exceeds the system's regularity threshold.
    pub regular: bool,
}

/// Central-difference step scaled to the magnitude of the coordinate.
fn fd_step(coord: f64) -> f64 {
    f64::EPSILON.cbrt() * coord.abs().max(1.0)
}

/// `L_f^k h` at `x` with `u = 0`, by nested central differences.
fn lie_value_fd(sys: &dyn SmoothSisoSystem, k: usize, x: &DVector<f64>) -> f64 {
    if k == 0 {
        return sys.output(x);
    }
    let drift = sys.dynamics(x, 0.0);
    let mut value = 0.0;
    for i in 0..sys.dim() {
        let h = fd_step(x[i]);
        let mut fwd = x.clone();
        let mut bwd = x.clone();
        fwd[i] += h;
        bwd[i] -= h;
        let grad_i = (lie_value_fd(sys, k - 1, &fwd) - lie_value_fd(sys, k - 1, &bwd)) / (2.0 * h);
        value += grad_i * drift[i];
    }
    value
}

/// `L_f^k h` at `x`, preferring the system's analytic jet.
fn lie_value(sys: &dyn SmoothSisoSystem, k: usize, x: &DVector<f64>) -> f64 {
    match sys.analytic_jet(x) {
        Some(jet) => jet[k],
        None => lie_value_fd(sys, k, x),
    }
}

/// The stacked Lie derivatives `(h, L_f h, …, L_f^{n−1} h)` at `x` with
/// `u = 0`.
///
/// Uses the system's analytic jet when provided, nested central differences
/// otherwise.
pub fn lie_derivatives(sys: &dyn SmoothSisoSystem, x: &DVector<f64>) -> Result<DVector<f64>, Error> {
    if !sys.in_observable_domain(x) {
        return Err(Error::Domain(x.as_slice().to_vec()));
    }
    let jet = match sys.analytic_jet(x) {
        Some(jet) => jet,
        None => DVector::from_fn(sys.dim(), |k, _| lie_value_fd(sys, k, x)),
    };
    if jet.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerics {
            context: format!("Lie derivatives at {:?}", x.as_slice()),
        });
    }
    Ok(jet)
}

/// The observability matrix `Q(x)`, its determinant (via LU factorization)
/// and the regularity flag.
///
/// The point is evaluated as given; regularity at domain boundaries is
/// reported through the flag rather than rejected, so callers can probe where
/// `D_o` ends.
pub fn observability_matrix(
    sys: &dyn SmoothSisoSystem,
    x: &DVector<f64>,
) -> Result<ObservabilityData, Error> {
    let n = sys.dim();
    let q = match sys.analytic_jet_jacobian(x) {
        Some(q) => q,
        None => {
            let mut q = DMatrix::zeros(n, n);
            for i in 0..n {
                let h = fd_step(x[i]);
                let mut fwd = x.clone();
                let mut bwd = x.clone();
                fwd[i] += h;
                bwd[i] -= h;
                for k in 0..n {
                    q[(k, i)] = (lie_value(sys, k, &fwd) - lie_value(sys, k, &bwd)) / (2.0 * h);
                }
            }
            q
        }
    };
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerics {
            context: format!("observability matrix at {:?}", x.as_slice()),
        });
    }
    let det_q = q.clone().lu().determinant();
    let regular = det_q.abs() > sys.regularity_threshold();
    Ok(ObservabilityData { q, det_q, regular })
}

/// The flat input vector field `γ(x) = α(x) Q⁻¹(x) (0,…,0,1)ᵀ`.
///
/// Solves `Q γ = α eₙ` by LU factorization; `Q⁻¹` is never formed.
pub fn construct_flat_input(
    sys: &dyn SmoothSisoSystem,
    x: &DVector<f64>,
    alpha: &dyn Fn(&DVector<f64>) -> f64,
) -> Result<DVector<f64>, Error> {
    let obs = observability_matrix(sys, x)?;
    solve_gamma(sys, &obs, alpha(x))
}

/// [`construct_flat_input`] with the typical choice `α(x) = det Q(x)`.
pub fn construct_flat_input_default(
    sys: &dyn SmoothSisoSystem,
    x: &DVector<f64>,
) -> Result<DVector<f64>, Error> {
    let obs = observability_matrix(sys, x)?;
    let alpha = obs.det_q;
    solve_gamma(sys, &obs, alpha)
}

fn solve_gamma(
    sys: &dyn SmoothSisoSystem,
    obs: &ObservabilityData,
    alpha: f64,
) -> Result<DVector<f64>, Error> {
    if !obs.regular {
        return Err(Error::SingularObservability { det_q: obs.det_q });
    }
    if alpha == 0.0 || !alpha.is_finite() {
        return Err(Error::InvalidFactor);
    }
    let n = sys.dim();
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = alpha;
    obs.q
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularObservability { det_q: obs.det_q })
}

/// Worst-case residuals of the flat-input defining property over a grid.
#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub points: usize,
    /// max over the grid and `k < n−1` of `|⟨∇L_f^k h, γ⟩|`.
    pub worst_annihilation: f64,
    /// max over the grid of `|⟨∇L_f^{n−1} h, γ⟩ − α|`.
    pub worst_scaling: f64,
}

/// Checks the defining property of a flat input vector field on a grid:
/// `γ` annihilates the first `n−1` observability rows and reproduces `α`
/// against the last one.
pub fn verify_flat_input(
    sys: &dyn SmoothSisoSystem,
    gamma: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    alpha: &dyn Fn(&DVector<f64>) -> f64,
    grid: &[DVector<f64>],
    tol: f64,
) -> Result<VerificationReport, Error> {
    let n = sys.dim();
    let mut report = VerificationReport {
        points: grid.len(),
        worst_annihilation: 0.0,
        worst_scaling: 0.0,
    };
    for x in grid {
        if !sys.in_observable_domain(x) {
            return Err(Error::Domain(x.as_slice().to_vec()));
        }
        let obs = observability_matrix(sys, x)?;
        let g = gamma(x);
        for k in 0..n {
            let projection = obs.q.row(k).transpose().dot(&g);
            let residual = if k < n - 1 {
                let r = projection.abs();
                report.worst_annihilation = report.worst_annihilation.max(r);
                r
            } else {
                let r = (projection - alpha(x)).abs();
                report.worst_scaling = report.worst_scaling.max(r);
                r
            };
            if residual > tol {
                return Err(Error::VerificationFailure {
                    point: x.as_slice().to_vec(),
                    row: k,
                    residual,
                    tol,
                });
            }
        }
    }
    Ok(report)
}

type VectorField = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type ScalarField = Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type JetMap = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// The companion system `ẋ = f(x,0) + γ(x) u_f` carrying the flat input,
/// together with the maps of its input-output representation
/// `y⁽ⁿ⁾ = q(y,…,y⁽ⁿ⁻¹⁾) + p_f(y,…,y⁽ⁿ⁻¹⁾) u_f`.
///
/// `q` and `p_f` take the output jet `(y, ẏ, …, y⁽ⁿ⁻¹⁾)` as a slice of
/// length `n`. Deriving them symbolically is out of scope; each concrete
/// plant supplies its own closures.
pub struct FlatInputSystem {
    base: Arc<dyn SmoothSisoSystem>,
    gamma: VectorField,
    alpha: ScalarField,
    drift: JetMap,
    input_coeff: JetMap,
}

impl FlatInputSystem {
    pub fn new(
        base: Arc<dyn SmoothSisoSystem>,
        gamma: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        alpha: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        drift: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        input_coeff: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            base,
            gamma: Box::new(gamma),
            alpha: Box::new(alpha),
            drift: Box::new(drift),
            input_coeff: Box::new(input_coeff),
        }
    }

    /// System order `n`; the flat-input system has full relative degree `n`.
    pub fn order(&self) -> usize {
        self.base.dim()
    }

    pub fn base(&self) -> &dyn SmoothSisoSystem {
        self.base.as_ref()
    }

    /// Flat input vector field `γ(x)`.
    pub fn gamma(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.gamma)(x)
    }

    /// Free factor `α(x)`.
    pub fn alpha(&self, x: &DVector<f64>) -> f64 {
        (self.alpha)(x)
    }

    /// Drift term `q(y, …, y⁽ⁿ⁻¹⁾)` of the I/O representation.
    pub fn q(&self, jet: &[f64]) -> f64 {
        (self.drift)(jet)
    }

    /// Input coefficient `p_f(y, …, y⁽ⁿ⁻¹⁾)` of the I/O representation.
    pub fn p_f(&self, jet: &[f64]) -> f64 {
        (self.input_coeff)(jet)
    }

    /// Dynamics of the companion system, `f(x,0) + γ(x) u_f`.
    pub fn dynamics(&self, x: &DVector<f64>, u_f: f64) -> DVector<f64> {
        self.base.dynamics(x, 0.0) + self.gamma(x) * u_f
    }

    /// Runs [`verify_flat_input`] with this system's own `γ` and `α`.
    pub fn verify_on_grid(
        &self,
        grid: &[DVector<f64>],
        tol: f64,
    ) -> Result<VerificationReport, Error> {
        verify_flat_input(
            self.base.as_ref(),
            self.gamma.as_ref(),
            self.alpha.as_ref(),
            grid,
            tol,
        )
    }
}
