//! System-agnostic control layer: reference trajectories, Hurwitz-validated
//! tracking gains, the feedback-linearizing tracking law and the
//! flatness-based feedforward on the flat input, plus the discrete
//! compensator contract.

use crate::error::Error;
use crate::system::FlatInputSystem;

/// Threshold on `|p_f|` below which the linearizing division is refused.
///
/// For the pendulum `p_f = 1 − ÿ²` stays positive inside the working band
/// `|ÿ| < 1`; the guard only catches numerical excursions.
pub const PF_THRESHOLD: f64 = 1e-6;

/// The reference output and its time derivatives at one instant:
/// `(y*, ẏ*, …, y*⁽ⁿ⁾)`, `n + 1` entries for a plant of order `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceJet {
    pub t: f64,
    derivs: Vec<f64>,
}

impl ReferenceJet {
    pub fn new(t: f64, derivs: Vec<f64>) -> Self {
        debug_assert!(derivs.iter().all(|d| d.is_finite()));
        Self { t, derivs }
    }

    /// Plant order `n` (the jet holds `n + 1` derivatives).
    pub fn order(&self) -> usize {
        self.derivs.len() - 1
    }

    /// `k`-th time derivative of the reference output.
    pub fn deriv(&self, k: usize) -> f64 {
        self.derivs[k]
    }

    /// Reference value `y*`.
    pub fn value(&self) -> f64 {
        self.derivs[0]
    }

    /// Highest derivative `y*⁽ⁿ⁾`.
    pub fn highest(&self) -> f64 {
        self.derivs[self.derivs.len() - 1]
    }

    pub fn derivs(&self) -> &[f64] {
        &self.derivs
    }

    /// The output jet `(y*, …, y*⁽ⁿ⁻¹⁾)` that enters `q` and `p_f`.
    pub fn lower(&self) -> &[f64] {
        &self.derivs[..self.derivs.len() - 1]
    }
}

/// Gains `(λ₀, …, λ_{n−1})` of the prescribed error dynamics
/// `e⁽ⁿ⁾ + λ_{n−1} e⁽ⁿ⁻¹⁾ + … + λ₀ e = 0`.
///
/// Construction fails unless the characteristic polynomial is Hurwitz.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    lambdas: Vec<f64>,
}

impl ControllerGains {
    pub fn new(lambdas: Vec<f64>) -> Result<Self, Error> {
        if !is_hurwitz(&lambdas) {
            return Err(Error::NotHurwitz(lambdas));
        }
        Ok(Self { lambdas })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn order(&self) -> usize {
        self.lambdas.len()
    }
}

/// Routh test on `sⁿ + λ_{n−1} s^{n−1} + … + λ₀`: true iff every root has
/// negative real part. Marginal polynomials (zero first-column entries) are
/// rejected.
pub fn is_hurwitz(lambdas: &[f64]) -> bool {
    let n = lambdas.len();
    if n == 0 || lambdas.iter().any(|l| !l.is_finite()) {
        return false;
    }
    // Descending coefficients; positivity is necessary.
    let mut coeffs = Vec::with_capacity(n + 1);
    coeffs.push(1.0);
    coeffs.extend(lambdas.iter().rev());
    if coeffs.iter().any(|&c| c <= 0.0) {
        return false;
    }
    let cols = n / 2 + 1;
    let pad = |row: Vec<f64>| {
        let mut row = row;
        row.resize(cols + 1, 0.0);
        row
    };
    let mut prev = pad(coeffs.iter().step_by(2).copied().collect());
    let mut curr = pad(coeffs.iter().skip(1).step_by(2).copied().collect());
    for _ in 0..n.saturating_sub(1) {
        if curr[0] == 0.0 {
            return false;
        }
        let mut next = vec![0.0; cols + 1];
        for j in 0..cols {
            next[j] = (curr[0] * prev[j + 1] - prev[0] * curr[j + 1]) / curr[0];
        }
        if next[0] <= 0.0 {
            return false;
        }
        prev = curr;
        curr = next;
    }
    true
}

/// Discrete compensator memory: the previously issued control sample, the
/// sampling interval and the sample index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompensatorState {
    pub u_prev: f64,
    pub dt: f64,
    pub k: u64,
}

impl CompensatorState {
    /// Fresh state with `u[−1] = 0`.
    pub fn new(dt: f64) -> Result<Self, Error> {
        Self::with_previous(dt, 0.0)
    }

    pub fn with_previous(dt: f64, u_prev: f64) -> Result<Self, Error> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "compensator interval must be positive, got {dt}"
            )));
        }
        if !u_prev.is_finite() {
            return Err(Error::InvalidConfig(
                "previous control sample must be finite".into(),
            ));
        }
        Ok(Self { u_prev, dt, k: 0 })
    }

    /// Functionally advanced state after issuing `u`.
    pub fn advanced(&self, u: f64) -> Self {
        Self {
            u_prev: u,
            dt: self.dt,
            k: self.k + 1,
        }
    }
}

/// One output of a compensator step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompensatorStep {
    /// Control sample `u[k]` to hold until the next tick.
    pub u: f64,
    pub next: CompensatorState,
    /// A guard clamped an intermediate quantity while solving for `u[k]`.
    pub clamped: bool,
}

/// A discrete prefilter turning the flat input `u_f` into the physical
/// input `u`, realizing `p(y,…,u,…,u⁽ᵐ⁾) = p_f(y,…) u_f` one sample at a
/// time. Implementations are deterministic and advance their state
/// functionally.
pub trait Compensator {
    /// `jet` is the output jet `(y, ẏ, …, y⁽ⁿ⁻¹⁾)` the compensator feeds back.
    fn step(
        &self,
        jet: &[f64],
        u_f: f64,
        state: &CompensatorState,
    ) -> Result<CompensatorStep, Error>;
}

/// Segment shapes a reference trajectory is assembled from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentKind {
    /// Constant value with all derivatives zero.
    Hold(f64),
    /// Degree-7 polynomial transition with vanishing first, second and third
    /// derivatives at both ends, so the assembled trajectory is C³.
    Poly7 { from: f64, to: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub kind: SegmentKind,
}

impl Segment {
    pub fn hold(t_start: f64, t_end: f64, value: f64) -> Self {
        Self {
            t_start,
            t_end,
            kind: SegmentKind::Hold(value),
        }
    }

    pub fn poly7(t_start: f64, t_end: f64, from: f64, to: f64) -> Self {
        Self {
            t_start,
            t_end,
            kind: SegmentKind::Poly7 { from, to },
        }
    }

    fn value_at_start(&self) -> f64 {
        match self.kind {
            SegmentKind::Hold(v) => v,
            SegmentKind::Poly7 { from, .. } => from,
        }
    }

    fn value_at_end(&self) -> f64 {
        match self.kind {
            SegmentKind::Hold(v) => v,
            SegmentKind::Poly7 { to, .. } => to,
        }
    }

    /// Exact derivatives `(y*, …, y*⁽ᵒʳᵈᵉʳ⁾)` of the segment at `t`, which
    /// must lie within `[t_start, t_end]`.
    pub(crate) fn jet_at(&self, t: f64, order: usize) -> Vec<f64> {
        let mut derivs = vec![0.0; order + 1];
        match self.kind {
            SegmentKind::Hold(v) => derivs[0] = v,
            SegmentKind::Poly7 { from, to } => {
                let width = self.t_end - self.t_start;
                let tau = (t - self.t_start) / width;
                // Blending keeps the endpoint values bit-exact: s(0) = 0 and
                // s(1) = 1 evaluate without rounding.
                let s = smoothstep7(tau, 0);
                derivs[0] = from * (1.0 - s) + to * s;
                let delta = to - from;
                let mut scale = 1.0;
                for (d, slot) in derivs.iter_mut().enumerate().skip(1) {
                    scale *= width;
                    *slot = delta * smoothstep7(tau, d) / scale;
                }
            }
        }
        derivs
    }
}

/// `d`-th derivative of s(τ) = 35τ⁴ − 84τ⁵ + 70τ⁶ − 20τ⁷ with respect to τ.
///
/// Coefficients stay integral, so the boundary values s(0)=0, s(1)=1 and the
/// vanishing of the first three derivatives at τ ∈ {0, 1} are exact in f64.
fn smoothstep7(tau: f64, d: usize) -> f64 {
    const COEFFS: [f64; 4] = [35.0, -84.0, 70.0, -20.0];
    if d > 7 {
        return 0.0;
    }
    let mut value = 0.0;
    for (idx, &c) in COEFFS.iter().enumerate() {
        let p = idx + 4;
        if p < d {
            continue;
        }
        let mut factor = c;
        for j in 0..d {
            factor *= (p - j) as f64;
        }
        value += factor * tau.powi((p - d) as i32);
    }
    value
}

/// Piecewise reference: contiguous, non-overlapping segments whose assembled
/// output is C³ everywhere, joints included.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    segments: Vec<Segment>,
}

impl ReferenceTrajectory {
    pub fn new(segments: Vec<Segment>) -> Result<Self, Error> {
        if segments.is_empty() {
            return Err(Error::InvalidConfig(
                "reference trajectory needs at least one segment".into(),
            ));
        }
        for seg in &segments {
            let vals = [seg.t_start, seg.t_end, seg.value_at_start(), seg.value_at_end()];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "segment contains non-finite values: {seg:?}"
                )));
            }
            if seg.t_end <= seg.t_start {
                return Err(Error::InvalidConfig(format!(
                    "segment must have t_end > t_start: {seg:?}"
                )));
            }
        }
        for pair in segments.windows(2) {
            if pair[0].t_end != pair[1].t_start {
                return Err(Error::InvalidConfig(format!(
                    "segments are not contiguous at t = {} / {}",
                    pair[0].t_end, pair[1].t_start
                )));
            }
            if pair[0].value_at_end() != pair[1].value_at_start() {
                return Err(Error::InvalidConfig(format!(
                    "reference is discontinuous at t = {}: {} vs {}",
                    pair[0].t_end,
                    pair[0].value_at_end(),
                    pair[1].value_at_start()
                )));
            }
        }
        Ok(Self { segments })
    }

    /// Single hold segment over `[0, horizon]`.
    pub fn constant(value: f64, horizon: f64) -> Result<Self, Error> {
        Self::new(vec![Segment::hold(0.0, horizon, value)])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn horizon(&self) -> (f64, f64) {
        (
            self.segments[0].t_start,
            self.segments[self.segments.len() - 1].t_end,
        )
    }
}

/// Exact analytic derivatives of the reference up to order `n` at time `t`.
///
/// Times outside the horizon are clamped to the nearest endpoint, so the
/// reference extends as a hold beyond its last segment.
pub fn reference_jet(traj: &ReferenceTrajectory, t: f64, n: usize) -> ReferenceJet {
    let (t0, t1) = traj.horizon();
    let tc = t.clamp(t0, t1);
    let seg = traj
        .segments()
        .iter()
        .find(|s| tc < s.t_end)
        .unwrap_or(&traj.segments()[traj.segments().len() - 1]);
    ReferenceJet::new(t, seg.jet_at(tc, n))
}

/// Feedback-linearizing tracking law on the flat input:
/// `u_f = (v − q(jet)) / p_f(jet)` with
/// `v = y*⁽ⁿ⁾ + Σ λᵢ (y*⁽ⁱ⁾ − y⁽ⁱ⁾)`.
///
/// `measured` is the plant's output jet `(y, ẏ, …, y⁽ⁿ⁻¹⁾)` obtained from
/// state feedback — this layer never differentiates measurements.
pub fn feedback_linearize(
    flat: &FlatInputSystem,
    measured: &[f64],
    reference: &ReferenceJet,
    gains: &ControllerGains,
) -> Result<f64, Error> {
    let n = flat.order();
    assert_eq!(measured.len(), n, "measured jet must have length n");
    assert_eq!(reference.order(), n, "reference jet must have order n");
    assert_eq!(gains.order(), n, "gain vector must have length n");
    let mut v = reference.highest();
    for (i, lambda) in gains.lambdas().iter().enumerate() {
        v += lambda * (reference.deriv(i) - measured[i]);
    }
    let p_f = flat.p_f(measured);
    if p_f.abs() <= PF_THRESHOLD {
        return Err(Error::PfSingular {
            p_f,
            threshold: PF_THRESHOLD,
        });
    }
    Ok((v - flat.q(measured)) / p_f)
}

/// Flatness-based feedforward: the open-loop specialization of the
/// linearizing law driven by reference derivatives alone,
/// `u_f* = (y*⁽ⁿ⁾ − q(ref)) / p_f(ref)`.
pub fn feedforward_flat_input(
    flat: &FlatInputSystem,
    reference: &ReferenceJet,
) -> Result<f64, Error> {
    assert_eq!(reference.order(), flat.order());
    let jet = reference.lower();
    let p_f = flat.p_f(jet);
    if p_f.abs() <= PF_THRESHOLD {
        return Err(Error::PfSingular {
            p_f,
            threshold: PF_THRESHOLD,
        });
    }
    Ok((reference.highest() - flat.q(jet)) / p_f)
}
