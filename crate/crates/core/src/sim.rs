//! Fixed-step multi-rate closed-loop simulation of the pendulum.
//!
//! The plant is integrated with classical RK4 at the fine step `sim_dt`; the
//! controller and discrete compensator run at the coarse interval `ctrl_dt`
//! and the control is held constant in between (zero order hold). Every fine
//! step is recorded, so traces expose the staircase control directly.

use nalgebra::DVector;

use crate::control::{
    feedback_linearize, feedforward_flat_input, reference_jet, CompensatorState, ControllerGains,
    ReferenceTrajectory,
};
use crate::error::Error;
use crate::pendulum::{self, PendulumState};

/// Trace flag bits. A bit is set on the row of the controller tick (or
/// integration step) in which the corresponding guard fired.
pub mod flags {
    /// Compensator root argument fell below zero and was clamped.
    pub const SQRT_CLAMP: u32 = 1 << 0;
    /// Compensator denominator guard fired; the previous sample was held.
    pub const DEN_GUARD: u32 = 1 << 1;
    /// `|p_f|` guard fired; the previous flat input was held.
    pub const PF_GUARD: u32 = 1 << 2;
    /// Measured `|ÿ| ≥ 1`, outside the controller's working band.
    pub const DDY_RANGE: u32 = 1 << 3;
    /// State left the observable domain; the run halted on this row.
    pub const DOMAIN_FAULT: u32 = 1 << 4;
    /// Integration produced a non-finite state; the run halted on this row.
    pub const NONFINITE_FAULT: u32 = 1 << 5;
}

/// Controller operating mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlMode {
    /// Feedback linearization from measured output jets.
    Feedback,
    /// Flatness-based feedforward driven by reference jets only.
    Feedforward,
}

/// Closed-loop scenario description.
#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Fine integration step (s).
    pub sim_dt: f64,
    /// Controller sampling interval Δt (s); must be an integer multiple of
    /// `sim_dt`.
    pub ctrl_dt: f64,
    /// Horizon (s).
    pub duration: f64,
    pub x0: PendulumState,
    pub gains: ControllerGains,
    pub mode: ControlMode,
    pub trajectory: ReferenceTrajectory,
}

impl SimConfig {
    /// Default steps from the reference scenario set: 10 ms integration,
    /// 100 ms control.
    pub const DEFAULT_SIM_DT: f64 = 0.01;
    pub const DEFAULT_CTRL_DT: f64 = 0.1;

    /// Checks the step invariants and returns `(ratio, fine_steps)`.
    pub fn validate(&self) -> Result<(usize, usize), Error> {
        if !self.sim_dt.is_finite() || self.sim_dt <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "sim_dt must be positive, got {}",
                self.sim_dt
            )));
        }
        if !self.duration.is_finite() || self.duration <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if !self.ctrl_dt.is_finite() || self.ctrl_dt <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "ctrl_dt must be positive, got {}",
                self.ctrl_dt
            )));
        }
        let ratio = self.ctrl_dt / self.sim_dt;
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * rounded {
            return Err(Error::InvalidConfig(format!(
                "ctrl_dt = {} is not an integer multiple of sim_dt = {}",
                self.ctrl_dt, self.sim_dt
            )));
        }
        let steps = (self.duration / self.sim_dt).round();
        if steps < 1.0 {
            return Err(Error::InvalidConfig(
                "duration is shorter than one integration step".into(),
            ));
        }
        Ok((rounded as usize, steps as usize))
    }
}

/// One recorded fine step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub y: f64,
    pub yref: f64,
    pub dy: f64,
    pub ddy: f64,
    /// Control held over `[t, t + sim_dt)`.
    pub u: f64,
    /// Flat input issued at the most recent controller tick.
    pub uf: f64,
    /// Tracking error `y* − y`.
    pub e: f64,
    pub flags: u32,
}

/// Why a run stopped before its horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    /// `x₃` left `(0, π)`.
    DomainExit,
    /// The integrator produced a non-finite state.
    NonFinite,
}

impl std::fmt::Display for FaultKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FaultKind::DomainExit => write!(f, "state left the observable domain"),
            FaultKind::NonFinite => write!(f, "integration produced a non-finite state"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimFault {
    pub t: f64,
    pub kind: FaultKind,
}

/// Time-indexed record of a closed-loop run. Rows are spaced `sim_dt` apart;
/// a faulted run ends with a flagged row and carries the fault record.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub rows: Vec<TraceRow>,
    pub fault: Option<SimFault>,
}

impl SimulationTrace {
    pub fn max_abs_error(&self) -> f64 {
        self.rows.iter().map(|r| r.e.abs()).fold(0.0, f64::max)
    }

    pub fn final_error(&self) -> f64 {
        self.rows.last().map(|r| r.e).unwrap_or(0.0)
    }
}

/// One classical fourth-order Runge-Kutta step with the input held constant
/// across the step.
pub fn rk4_step(
    deriv: &dyn Fn(&DVector<f64>, f64) -> DVector<f64>,
    x: &DVector<f64>,
    u: f64,
    h: f64,
) -> Result<DVector<f64>, Error> {
    debug_assert!(h > 0.0);
    let k1 = deriv(x, u);
    let k2 = deriv(&(x + &k1 * (h / 2.0)), u);
    let k3 = deriv(&(x + &k2 * (h / 2.0)), u);
    let k4 = deriv(&(x + &k3 * h), u);
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerics {
            context: format!("RK4 step from {:?}", x.as_slice()),
        });
    }
    Ok(next)
}

/// Runs the closed loop: at each controller tick the output jet is rebuilt
/// from state feedback with the held control sample, the flat input is
/// computed (feedback linearization or feedforward), the discrete compensator
/// issues the physical control, and the plant is integrated at the fine step
/// under zero-order hold until the next tick.
///
/// Guard events are flagged on the tick row; leaving the observable domain
/// halts the run and returns the partial trace with a fault record.
pub fn run_closed_loop(cfg: &SimConfig) -> Result<SimulationTrace, Error> {
    let (ratio, steps) = cfg.validate()?;
    if !cfg.x0.in_observable_domain() {
        return Err(Error::Domain(cfg.x0.to_vector().as_slice().to_vec()));
    }
    let flat = pendulum::flat_input_system();
    let deriv = |x: &DVector<f64>, u: f64| {
        DVector::from_row_slice(&pendulum::dynamics(&PendulumState::from_vector(x), u))
    };

    let mut x = cfg.x0.to_vector();
    let mut comp = CompensatorState::new(cfg.ctrl_dt)?;
    let mut u_held = 0.0;
    let mut uf_held = 0.0;
    let mut rows = Vec::with_capacity(steps + 1);
    let mut fault = None;

    for i in 0..=steps {
        let t = i as f64 * cfg.sim_dt;
        let state = PendulumState::from_vector(&x);
        let r = reference_jet(&cfg.trajectory, t, 3);

        if !state.in_observable_domain() {
            let kind = if x.iter().all(|v| v.is_finite()) {
                FaultKind::DomainExit
            } else {
                FaultKind::NonFinite
            };
            rows.push(fault_row(t, &state, &r, u_held, uf_held, kind));
            fault = Some(SimFault { t, kind });
            break;
        }

        // The jet is measured with the sample that was active over the
        // elapsed interval; at a tick the new u[k] is not known yet.
        let jet = pendulum::output_jet(&state, u_held);
        let mut row_flags = 0u32;
        let mut u_row = u_held;

        if i % ratio == 0 && i < steps {
            if jet.ddy.abs() >= 1.0 {
                row_flags |= flags::DDY_RANGE;
            }
            let uf_result = match cfg.mode {
                ControlMode::Feedback => {
                    feedback_linearize(&flat, &jet.as_array(), &r, &cfg.gains)
                }
                ControlMode::Feedforward => feedforward_flat_input(&flat, &r),
            };
            let u_f = match uf_result {
                Ok(v) => v,
                Err(Error::PfSingular { .. }) => {
                    row_flags |= flags::PF_GUARD;
                    uf_held
                }
                Err(e) => return Err(e),
            };
            // The compensator feeds back the output jet; in pure feedforward
            // operation the prefilter runs on reference jets instead.
            let comp_jet = match cfg.mode {
                ControlMode::Feedback => jet,
                ControlMode::Feedforward => {
                    pendulum::PendulumJet::new(r.deriv(0), r.deriv(1), r.deriv(2))
                }
            };
            match pendulum::compensator_step(&comp_jet, u_f, &comp) {
                Ok(step) => {
                    if step.clamped {
                        row_flags |= flags::SQRT_CLAMP;
                    }
                    u_row = step.u;
                    comp = step.next;
                }
                Err(Error::CompensatorSingular { .. }) => {
                    row_flags |= flags::DEN_GUARD;
                    u_row = comp.u_prev;
                    comp = comp.advanced(comp.u_prev);
                }
                Err(e) => return Err(e),
            }
            uf_held = u_f;
        }

        rows.push(TraceRow {
            t,
            x1: state.x1,
            x2: state.x2,
            x3: state.x3,
            y: jet.y,
            yref: r.value(),
            dy: jet.dy,
            ddy: jet.ddy,
            u: u_row,
            uf: uf_held,
            e: r.value() - jet.y,
            flags: row_flags,
        });
        u_held = u_row;

        if i < steps {
            match rk4_step(&deriv, &x, u_held, cfg.sim_dt) {
                Ok(next) => x = next,
                Err(Error::Numerics { .. }) => {
                    let t_next = (i + 1) as f64 * cfg.sim_dt;
                    let state = PendulumState::from_vector(&x);
                    let r = reference_jet(&cfg.trajectory, t_next, 3);
                    rows.push(fault_row(t_next, &state, &r, u_held, uf_held, FaultKind::NonFinite));
                    fault = Some(SimFault {
                        t: t_next,
                        kind: FaultKind::NonFinite,
                    });
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }

    Ok(SimulationTrace { rows, fault })
}

fn fault_row(
    t: f64,
    state: &PendulumState,
    r: &crate::control::ReferenceJet,
    u: f64,
    uf: f64,
    kind: FaultKind,
) -> TraceRow {
    let jet = pendulum::output_jet(state, u);
    TraceRow {
        t,
        x1: state.x1,
        x2: state.x2,
        x3: state.x3,
        y: jet.y,
        yref: r.value(),
        dy: jet.dy,
        ddy: jet.ddy,
        u,
        uf,
        e: r.value() - jet.y,
        flags: match kind {
            FaultKind::DomainExit => flags::DOMAIN_FAULT,
            FaultKind::NonFinite => flags::NONFINITE_FAULT,
        },
    }
}

/// Outputs of a side-by-side input-output equivalence run.
#[derive(Debug, Clone)]
pub struct IoEquivalenceRun {
    pub times: Vec<f64>,
    /// Output of the flat-input companion system driven by `u_f` directly.
    pub y_flat: Vec<f64>,
    /// Output of the original plant driven through the discrete compensator.
    pub y_compensated: Vec<f64>,
    pub max_deviation: f64,
    pub fault: Option<SimFault>,
}

/// Integrates the flat-input pendulum under a zero-order-held `u_f` signal
/// and, in parallel, the original pendulum whose input is produced from the
/// same `u_f` samples by the discrete compensator. Both start from `cfg.x0`;
/// the gap between the two outputs is the discretization cost of the
/// compensator.
pub fn io_equivalence_run(
    cfg: &SimConfig,
    u_f_signal: &dyn Fn(f64) -> f64,
) -> Result<IoEquivalenceRun, Error> {
    let (ratio, steps) = cfg.validate()?;
    if !cfg.x0.in_observable_domain() {
        return Err(Error::Domain(cfg.x0.to_vector().as_slice().to_vec()));
    }
    let flat = pendulum::flat_input_system();
    let flat_deriv = |x: &DVector<f64>, u_f: f64| flat.dynamics(x, u_f);
    let plant_deriv = |x: &DVector<f64>, u: f64| {
        DVector::from_row_slice(&pendulum::dynamics(&PendulumState::from_vector(x), u))
    };

    let mut x_flat = cfg.x0.to_vector();
    let mut x_comp = cfg.x0.to_vector();
    let mut comp = CompensatorState::new(cfg.ctrl_dt)?;
    let mut u_held = 0.0;
    let mut uf_held = 0.0;

    let mut run = IoEquivalenceRun {
        times: Vec::with_capacity(steps + 1),
        y_flat: Vec::with_capacity(steps + 1),
        y_compensated: Vec::with_capacity(steps + 1),
        max_deviation: 0.0,
        fault: None,
    };

    for i in 0..=steps {
        let t = i as f64 * cfg.sim_dt;
        let flat_ok = x_flat.iter().all(|v| v.is_finite())
            && PendulumState::from_vector(&x_flat).in_observable_domain();
        let comp_ok = x_comp.iter().all(|v| v.is_finite())
            && PendulumState::from_vector(&x_comp).in_observable_domain();
        if !flat_ok || !comp_ok {
            run.fault = Some(SimFault {
                t,
                kind: FaultKind::DomainExit,
            });
            break;
        }

        if i % ratio == 0 && i < steps {
            uf_held = u_f_signal(t);
            let jet = pendulum::output_jet(&PendulumState::from_vector(&x_comp), u_held);
            match pendulum::compensator_step(&jet, uf_held, &comp) {
                Ok(step) => {
                    u_held = step.u;
                    comp = step.next;
                }
                Err(Error::CompensatorSingular { .. }) => {
                    u_held = comp.u_prev;
                    comp = comp.advanced(comp.u_prev);
                }
                Err(e) => return Err(e),
            }
        }

        run.times.push(t);
        run.y_flat.push(x_flat[0]);
        run.y_compensated.push(x_comp[0]);
        run.max_deviation = run.max_deviation.max((x_flat[0] - x_comp[0]).abs());

        if i < steps {
            x_flat = rk4_step(&flat_deriv, &x_flat, uf_held, cfg.sim_dt)?;
            x_comp = rk4_step(&plant_deriv, &x_comp, u_held, cfg.sim_dt)?;
        }
    }

    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn gains() -> ControllerGains {
        ControllerGains::new(vec![2.0, 6.0, 4.0]).unwrap()
    }

    fn hold_config(x0: PendulumState, setpoint: f64, duration: f64) -> SimConfig {
        SimConfig {
            sim_dt: 0.01,
            ctrl_dt: 0.1,
            duration,
            x0,
            gains: gains(),
            mode: ControlMode::Feedback,
            trajectory: ReferenceTrajectory::constant(setpoint, duration).unwrap(),
        }
    }

    #[test]
    fn rk4_matches_the_exponential() {
        let deriv = |x: &DVector<f64>, _: f64| -x.clone();
        let mut x = DVector::from_row_slice(&[1.0]);
        for _ in 0..100 {
            x = rk4_step(&deriv, &x, 0.0, 0.01).unwrap();
        }
        assert_abs_diff_eq!(x[0], (-1.0f64).exp(), epsilon = 1e-9);
    }

    #[test]
    fn rk4_keeps_constants_constant() {
        let deriv = |x: &DVector<f64>, _: f64| DVector::zeros(x.len());
        let x = DVector::from_row_slice(&[3.0, -1.5]);
        let next = rk4_step(&deriv, &x, 0.0, 0.37).unwrap();
        assert_eq!(next, x);
    }

    #[test]
    fn rk4_converges_at_fourth_order() {
        let deriv = |x: &DVector<f64>, _: f64| -x.clone();
        let run = |h: f64| {
            let n = (1.0 / h).round() as usize;
            let mut x = DVector::from_row_slice(&[1.0]);
            for _ in 0..n {
                x = rk4_step(&deriv, &x, 0.0, h).unwrap();
            }
            (x[0] - (-1.0f64).exp()).abs()
        };
        let coarse = run(0.02);
        let fine = run(0.01);
        let factor = coarse / fine;
        assert!((14.0..=18.0).contains(&factor), "order factor {factor}");
    }

    #[test]
    fn rk4_reports_nonfinite_states() {
        let deriv = |x: &DVector<f64>, _: f64| x.map(|v| v * v);
        let x = DVector::from_row_slice(&[1e200]);
        assert!(matches!(
            rk4_step(&deriv, &x, 0.0, 1.0),
            Err(Error::Numerics { .. })
        ));
    }

    #[test]
    fn equilibrium_hold_is_a_fixed_point() {
        let cfg = hold_config(PendulumState::new(1.0, 0.0, PI / 2.0), 1.0, 20.0);
        let trace = run_closed_loop(&cfg).unwrap();
        assert!(trace.fault.is_none());
        assert_eq!(trace.rows.len(), 2001);
        assert!(trace.max_abs_error() < 1e-6);
        // cos(π/2) is ~6e-17 rather than zero in f64, so "u ≡ 0" holds to
        // machine precision, not exactly.
        let max_u = trace.rows.iter().map(|r| r.u.abs()).fold(0.0, f64::max);
        assert!(max_u < 1e-12, "max |u| = {max_u}");
        // no guard fired anywhere, so no row may carry a flag
        assert!(trace.rows.iter().all(|r| r.flags == 0));
    }

    #[test]
    fn control_is_held_between_ticks() {
        let cfg = SimConfig {
            sim_dt: 0.01,
            ctrl_dt: 0.1,
            duration: 5.0,
            x0: PendulumState::new(1.2, 0.0, PI / 2.0),
            gains: gains(),
            mode: ControlMode::Feedback,
            trajectory: ReferenceTrajectory::constant(1.0, 5.0).unwrap(),
        };
        let trace = run_closed_loop(&cfg).unwrap();
        for (i, row) in trace.rows.iter().enumerate() {
            if i % 10 != 0 && i < trace.rows.len() - 1 {
                assert_eq!(row.u, trace.rows[i - 1].u, "row {i} broke the hold");
            }
        }
    }

    #[test]
    fn identical_configs_give_identical_traces() {
        let cfg = hold_config(PendulumState::new(1.1, 0.0, PI / 2.0), 1.0, 3.0);
        let a = run_closed_loop(&cfg).unwrap();
        let b = run_closed_loop(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn guard_flags_fire_near_the_domain_boundary() {
        // x₃ ≈ 0 puts ÿ on the edge of the working band: p_f = sin²x₃ is at
        // the guard threshold and the compensator root term vanishes.
        let cfg = hold_config(PendulumState::new(1.0, 0.0, 1e-9), 1.0, 0.5);
        let trace = run_closed_loop(&cfg).unwrap();
        let first = &trace.rows[0];
        assert_ne!(first.flags & flags::PF_GUARD, 0);
        assert_ne!(first.flags & flags::DEN_GUARD, 0);
        assert_ne!(first.flags & flags::DDY_RANGE, 0);
        assert_eq!(first.u, 0.0);
    }

    #[test]
    fn leaving_the_domain_halts_with_a_fault() {
        // Near x₃ = 0 the linearizing gain 1/p_f explodes and the commanded
        // rod speed sweeps x₃ across π within a tick.
        let cfg = hold_config(PendulumState::new(1.0, 0.0, 0.05), 1.0, 5.0);
        let trace = run_closed_loop(&cfg).unwrap();
        let fault = trace.fault.expect("run must fault");
        assert_eq!(fault.kind, FaultKind::DomainExit);
        let last = trace.rows.last().unwrap();
        assert_ne!(last.flags & flags::DOMAIN_FAULT, 0);
        assert!(last.t < 5.0);
        assert_abs_diff_eq!(last.t, fault.t);
    }

    #[test]
    fn io_equivalence_is_exact_for_zero_input() {
        let cfg = hold_config(PendulumState::new(1.0, 0.0, PI / 2.0), 1.0, 5.0);
        let run = io_equivalence_run(&cfg, &|_| 0.0).unwrap();
        assert!(run.fault.is_none());
        assert_eq!(run.max_deviation, 0.0);
    }

    #[test]
    fn io_equivalence_outputs_move_together_under_a_step() {
        let cfg = hold_config(PendulumState::new(1.0, 0.0, PI / 2.0), 1.0, 2.0);
        let run = io_equivalence_run(&cfg, &|_| 0.05).unwrap();
        // From the first tick on, both outputs leave the start value in the
        // same direction.
        let y0 = run.y_flat[0];
        for i in 15..run.times.len() {
            let d_flat = run.y_flat[i] - y0;
            let d_comp = run.y_compensated[i] - y0;
            assert!(
                d_flat * d_comp > 0.0,
                "outputs diverged in sign at t = {}",
                run.times[i]
            );
        }
    }

}
