//! Plain-text `key = value` scenario files.
//!
//! ```text
//! name     = tracking
//! mode     = feedback
//! sim_dt   = 0.01
//! ctrl_dt  = 0.1
//! duration = 10
//! gains    = 2, 6, 4
//! x0       = 1, 0, 1.5707963267948966
//! segment  = poly7 0 5 1 2
//! segment  = hold 5 10 2
//! out      = tracking.csv
//! ```
//!
//! Lines starting with `#` and blank lines are ignored. Unknown and duplicate
//! keys are rejected; every numeric field is parsed strictly and must be
//! finite. `duration` is the only required key; the remaining defaults are
//! 10 ms integration, 100 ms control, gains (2, 6, 4) and the equilibrium
//! start (1, 0, π/2). Without `segment` lines the reference holds the initial
//! output for the whole horizon.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use flatin_core::control::{ControllerGains, ReferenceTrajectory, Segment};
use flatin_core::pendulum::PendulumState;
use flatin_core::sim::{ControlMode, SimConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub mode: ControlMode,
    pub sim_dt: f64,
    pub ctrl_dt: f64,
    pub duration: f64,
    pub gains: Vec<f64>,
    pub x0: [f64; 3],
    pub segments: Vec<Segment>,
    pub out: Option<PathBuf>,
}

/// Parse failure with the 1-based line it occurred on (0 for file-level
/// problems such as a missing required key).
#[derive(Debug, Clone)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            write!(f, "{}", self.message)
        }
    }
}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        message: message.into(),
    }
}

fn parse_number(line: usize, key: &str, raw: &str) -> Result<f64, ParseError> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(err(line, format!("empty value for '{key}'")));
    }
    let value: f64 = raw
        .parse()
        .map_err(|_| err(line, format!("invalid number '{raw}' for '{key}'")))?;
    if !value.is_finite() {
        return Err(err(line, format!("non-finite value for '{key}'")));
    }
    Ok(value)
}

fn parse_number_list(line: usize, key: &str, raw: &str) -> Result<Vec<f64>, ParseError> {
    raw.split(',')
        .map(|tok| parse_number(line, key, tok))
        .collect()
}

fn parse_segment(line: usize, raw: &str) -> Result<Segment, ParseError> {
    let tokens: Vec<&str> = raw.split_whitespace().collect();
    match tokens.as_slice() {
        [kind @ "hold", rest @ ..] if rest.len() == 3 => {
            let vals: Vec<f64> = rest
                .iter()
                .map(|t| parse_number(line, kind, t))
                .collect::<Result<_, _>>()?;
            Ok(Segment::hold(vals[0], vals[1], vals[2]))
        }
        [kind @ "poly7", rest @ ..] if rest.len() == 4 => {
            let vals: Vec<f64> = rest
                .iter()
                .map(|t| parse_number(line, kind, t))
                .collect::<Result<_, _>>()?;
            Ok(Segment::poly7(vals[0], vals[1], vals[2], vals[3]))
        }
        [kind, ..] if *kind == "hold" => Err(err(
            line,
            "'segment = hold' takes exactly <t_start> <t_end> <value>",
        )),
        [kind, ..] if *kind == "poly7" => Err(err(
            line,
            "'segment = poly7' takes exactly <t_start> <t_end> <from> <to>",
        )),
        [kind, ..] => Err(err(line, format!("unknown segment kind '{kind}'"))),
        [] => Err(err(line, "empty segment specification")),
    }
}

pub fn parse(text: &str, default_name: &str) -> Result<Scenario, ParseError> {
    let mut scenario = Scenario {
        name: default_name.to_string(),
        mode: ControlMode::Feedback,
        sim_dt: SimConfig::DEFAULT_SIM_DT,
        ctrl_dt: SimConfig::DEFAULT_CTRL_DT,
        duration: f64::NAN,
        gains: vec![2.0, 6.0, 4.0],
        x0: [1.0, 0.0, PI / 2.0],
        segments: Vec::new(),
        out: None,
    };
    let mut seen: Vec<&str> = Vec::new();
    let mut saw_duration = false;

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected 'key = value', got '{trimmed}'")))?;
        let key = key.trim();
        let value = value.trim();
        if key != "segment" && seen.contains(&key) {
            return Err(err(line, format!("duplicate key '{key}'")));
        }
        match key {
            "name" => {
                if value.is_empty() {
                    return Err(err(line, "empty scenario name"));
                }
                scenario.name = value.to_string();
                seen.push("name");
            }
            "mode" => {
                scenario.mode = match value {
                    "feedback" => ControlMode::Feedback,
                    "feedforward" => ControlMode::Feedforward,
                    other => {
                        return Err(err(
                            line,
                            format!("mode must be 'feedback' or 'feedforward', got '{other}'"),
                        ))
                    }
                };
                seen.push("mode");
            }
            "sim_dt" => {
                scenario.sim_dt = parse_number(line, key, value)?;
                seen.push("sim_dt");
            }
            "ctrl_dt" => {
                scenario.ctrl_dt = parse_number(line, key, value)?;
                seen.push("ctrl_dt");
            }
            "duration" => {
                scenario.duration = parse_number(line, key, value)?;
                saw_duration = true;
                seen.push("duration");
            }
            "gains" => {
                scenario.gains = parse_number_list(line, key, value)?;
                seen.push("gains");
            }
            "x0" => {
                let vals = parse_number_list(line, key, value)?;
                if vals.len() != 3 {
                    return Err(err(line, format!("x0 needs 3 components, got {}", vals.len())));
                }
                scenario.x0 = [vals[0], vals[1], vals[2]];
                seen.push("x0");
            }
            "segment" => scenario.segments.push(parse_segment(line, value)?),
            "out" => {
                if value.is_empty() {
                    return Err(err(line, "empty output path"));
                }
                scenario.out = Some(PathBuf::from(value));
                seen.push("out");
            }
            other => return Err(err(line, format!("unknown key '{other}'"))),
        }
    }

    if !saw_duration {
        return Err(err(0, "missing required key 'duration'"));
    }
    Ok(scenario)
}

impl Scenario {
    /// Assembles the simulator configuration, validating gains, trajectory
    /// and initial state.
    pub fn build_config(&self) -> Result<SimConfig, String> {
        if self.gains.len() != 3 {
            return Err(format!(
                "the pendulum needs 3 gains (λ0, λ1, λ2), got {}",
                self.gains.len()
            ));
        }
        let gains = ControllerGains::new(self.gains.clone()).map_err(|e| e.to_string())?;
        let trajectory = if self.segments.is_empty() {
            ReferenceTrajectory::constant(self.x0[0], self.duration)
        } else {
            ReferenceTrajectory::new(self.segments.clone())
        }
        .map_err(|e| e.to_string())?;
        let cfg = SimConfig {
            sim_dt: self.sim_dt,
            ctrl_dt: self.ctrl_dt,
            duration: self.duration,
            x0: PendulumState::new(self.x0[0], self.x0[1], self.x0[2]),
            gains,
            mode: self.mode,
            trajectory,
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = "\
# tracking scenario
name = tracking
mode = feedback
sim_dt = 0.01
ctrl_dt = 0.1
duration = 10
gains = 2, 6, 4
x0 = 1, 0, 1.5707963267948966
segment = poly7 0 5 1 2
segment = hold 5 10 2
out = tracking.csv
";

    #[test]
    fn full_scenario_parses() {
        let s = parse(FULL, "fallback").unwrap();
        assert_eq!(s.name, "tracking");
        assert_eq!(s.mode, ControlMode::Feedback);
        assert_eq!(s.duration, 10.0);
        assert_eq!(s.segments.len(), 2);
        assert_eq!(s.out.as_deref().unwrap().to_str().unwrap(), "tracking.csv");
        s.build_config().unwrap();
    }

    #[test]
    fn defaults_match_the_reference_setup() {
        let s = parse("duration = 20\n", "equilibrium").unwrap();
        assert_eq!(s.name, "equilibrium");
        assert_eq!(s.sim_dt, 0.01);
        assert_eq!(s.ctrl_dt, 0.1);
        assert_eq!(s.gains, vec![2.0, 6.0, 4.0]);
        assert_eq!(s.x0, [1.0, 0.0, PI / 2.0]);
        let cfg = s.build_config().unwrap();
        // no segments: hold the initial output
        assert_eq!(cfg.trajectory.segments().len(), 1);
    }

    #[test]
    fn unknown_key_is_rejected_with_line_number() {
        let e = parse("duration = 5\ngians = 2,6,4\n", "x").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(e.message.contains("gians"));
    }

    #[test]
    fn malformed_number_is_rejected() {
        let e = parse("duration = ten\n", "x").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(parse("duration = inf\n", "x").is_err());
        assert!(parse("duration = NaN\n", "x").is_err());
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let e = parse("duration = 5\nduration = 6\n", "x").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(e.message.contains("duplicate"));
    }

    #[test]
    fn missing_duration_is_rejected() {
        let e = parse("name = a\n", "x").unwrap_err();
        assert_eq!(e.line, 0);
        assert!(e.message.contains("duration"));
    }

    #[test]
    fn wrong_segment_arity_is_rejected() {
        assert!(parse("duration = 5\nsegment = hold 0 5\n", "x").is_err());
        assert!(parse("duration = 5\nsegment = poly7 0 5 1\n", "x").is_err());
        assert!(parse("duration = 5\nsegment = ramp 0 5 1 2\n", "x").is_err());
    }

    #[test]
    fn non_hurwitz_gains_fail_config_build() {
        let s = parse("duration = 5\ngains = -2, 6, 4\n", "x").unwrap();
        let e = s.build_config().unwrap_err();
        assert!(e.contains("Hurwitz"));
    }

    #[test]
    fn mismatched_step_ratio_fails_config_build() {
        let s = parse("duration = 5\nsim_dt = 0.01\nctrl_dt = 0.015\n", "x").unwrap();
        assert!(s.build_config().is_err());
    }
}
