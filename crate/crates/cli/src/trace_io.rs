//! CSV serialization of simulation traces.
//!
//! Floating-point fields are written with 17 significant digits, which is
//! lossless for f64, and lines end with LF regardless of platform.

use std::fmt;

use flatin_core::sim::{SimulationTrace, TraceRow};

pub const CSV_HEADER: &str = "t,x1,x2,x3,y,yref,dy,ddy,u,uf,e,flags";

const COLUMNS: [&str; 12] = [
    "t", "x1", "x2", "x3", "y", "yref", "dy", "ddy", "u", "uf", "e", "flags",
];

fn format_field(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_csv(trace: &SimulationTrace) -> String {
    let mut out = String::with_capacity(32 + trace.rows.len() * 240);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &trace.rows {
        let fields = [
            r.t, r.x1, r.x2, r.x3, r.y, r.yref, r.dy, r.ddy, r.u, r.uf, r.e,
        ];
        for f in fields {
            out.push_str(&format_field(f));
            out.push(',');
        }
        out.push_str(&r.flags.to_string());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub enum CsvError {
    MissingColumns(Vec<String>),
    NoDataRows,
    Malformed { line: usize, message: String },
}

impl fmt::Display for CsvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CsvError::MissingColumns(cols) => {
                write!(f, "header mismatch, missing columns: {}", cols.join(", "))
            }
            CsvError::NoDataRows => write!(f, "no data rows"),
            CsvError::Malformed { line, message } => write!(f, "line {line}: {message}"),
        }
    }
}

/// Parses a trace CSV back into rows. The header must carry exactly the
/// canonical columns; the error names whichever are missing.
pub fn parse_csv(text: &str) -> Result<Vec<TraceRow>, CsvError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(CsvError::NoDataRows)?;
    let present: Vec<&str> = header.trim().split(',').collect();
    let missing: Vec<String> = COLUMNS
        .iter()
        .filter(|c| !present.contains(*c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CsvError::MissingColumns(missing));
    }
    if present.len() != COLUMNS.len() || present != COLUMNS {
        return Err(CsvError::Malformed {
            line: 1,
            message: format!("unexpected header '{header}'"),
        });
    }

    let mut rows = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != COLUMNS.len() {
            return Err(CsvError::Malformed {
                line,
                message: format!("expected {} fields, got {}", COLUMNS.len(), fields.len()),
            });
        }
        let num = |i: usize| -> Result<f64, CsvError> {
            fields[i].parse().map_err(|_| CsvError::Malformed {
                line,
                message: format!("invalid number '{}' in column {}", fields[i], COLUMNS[i]),
            })
        };
        rows.push(TraceRow {
            t: num(0)?,
            x1: num(1)?,
            x2: num(2)?,
            x3: num(3)?,
            y: num(4)?,
            yref: num(5)?,
            dy: num(6)?,
            ddy: num(7)?,
            u: num(8)?,
            uf: num(9)?,
            e: num(10)?,
            flags: fields[11].parse().map_err(|_| CsvError::Malformed {
                line,
                message: format!("invalid flags '{}'", fields[11]),
            })?,
        });
    }
    if rows.is_empty() {
        return Err(CsvError::NoDataRows);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn row(t: f64, seed: f64) -> TraceRow {
        TraceRow {
            t,
            x1: seed,
            x2: -seed / 3.0,
            x3: PI / 2.0 + seed / 10.0,
            y: seed,
            yref: 1.0,
            dy: 0.1 * seed,
            ddy: -0.2 * seed,
            u: seed * seed,
            uf: -seed,
            e: 1.0 - seed,
            flags: 0,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let trace = SimulationTrace {
            rows: vec![row(0.0, 1.0 / 3.0), row(0.01, 0.1), row(0.02, PI)],
            fault: None,
        };
        let text = to_csv(&trace);
        let parsed = parse_csv(&text).unwrap();
        assert_eq!(parsed, trace.rows);
    }

    proptest! {
        #[test]
        fn round_trip_survives_arbitrary_doubles(a in -1e9f64..1e9, b in -1.0f64..1.0) {
            let trace = SimulationTrace { rows: vec![row(a.abs() * 1e-9, a * b)], fault: None };
            let parsed = parse_csv(&to_csv(&trace)).unwrap();
            prop_assert_eq!(parsed, trace.rows);
        }
    }

    #[test]
    fn missing_columns_are_named() {
        let text = "t,x1,x2,x3,y,dy,ddy,u,uf,e,flags\n0,0,0,0,0,0,0,0,0,0,0\n";
        match parse_csv(text) {
            Err(CsvError::MissingColumns(cols)) => assert_eq!(cols, vec!["yref".to_string()]),
            other => panic!("expected missing-column error, got {other:?}"),
        }
    }

    #[test]
    fn empty_csv_reports_no_data() {
        let text = format!("{CSV_HEADER}\n");
        assert!(matches!(parse_csv(&text), Err(CsvError::NoDataRows)));
    }

    #[test]
    fn lines_end_with_lf_only() {
        let trace = SimulationTrace {
            rows: vec![row(0.0, 1.0)],
            fault: None,
        };
        let text = to_csv(&trace);
        assert!(!text.contains('\r'));
        assert!(text.ends_with('\n'));
    }
}
