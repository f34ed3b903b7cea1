//! Gnuplot script generation for trace CSVs: stacked panels with (y, y*),
//! the control input and the rod angle, annotated with the fault instant
//! when the run halted early.

use std::path::Path;

use flatin_core::sim::{flags, TraceRow};

/// Builds a self-contained gnuplot script referencing `csv_path`.
pub fn script(csv_path: &Path, rows: &[TraceRow]) -> String {
    let csv = csv_path.display();
    let png = csv_path.with_extension("png");
    let mut out = String::new();
    out.push_str("# gnuplot script generated by flatin plot\n");
    out.push_str(&format!("# source: {csv}\n"));
    out.push_str("set datafile separator ','\n");
    out.push_str("set terminal pngcairo size 1000,800\n");
    out.push_str(&format!("set output '{}'\n", png.display()));
    out.push_str("set grid\n");
    out.push_str("set xlabel 't [s]'\n");

    if let Some(fault_row) = rows
        .iter()
        .find(|r| r.flags & (flags::DOMAIN_FAULT | flags::NONFINITE_FAULT) != 0)
    {
        let t = fault_row.t;
        out.push_str(&format!(
            "set arrow from {t}, graph 0 to {t}, graph 1 nohead dashtype 2 lc rgb 'red'\n"
        ));
        out.push_str(&format!(
            "set label 'fault at t = {t}' at {t}, graph 0.92 right offset -1,0 tc rgb 'red'\n"
        ));
    }

    out.push_str("set multiplot layout 3,1\n");
    out.push_str(&format!(
        "plot '{csv}' every ::1 using 1:5 with lines title 'y', \\\n     '' every ::1 using 1:6 with lines title 'y*'\n"
    ));
    out.push_str(&format!(
        "plot '{csv}' every ::1 using 1:9 with lines title 'u'\n"
    ));
    out.push_str(&format!(
        "plot '{csv}' every ::1 using 1:4 with lines title 'x3'\n"
    ));
    out.push_str("unset multiplot\n");
    out
}
