//! CSV persistence and the SVG regret plot.
//!
//! All CSV files are comma separated with a header row and `\n` line
//! endings. Reals are written as `{:.11e}` (12 significant digits, e.g.
//! `1.23456789012e-3`); missing values are empty fields.

use std::fmt::Write as _;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::diagnostics::TheoryReport;
use crate::error::Result;
use crate::harness::{CvOutcome, RegretCurve, RegretTrace};

pub const RUN_HEADER: [&str; 9] = [
    "run_id",
    "t",
    "arm",
    "greedy_arm",
    "epsilon",
    "propensity",
    "reward",
    "inst_regret",
    "cum_regret",
];

pub const SUMMARY_HEADER: [&str; 3] = ["t", "mean", "stderr"];

pub const REPORT_HEADER: [&str; 8] = [
    "name",
    "statistic",
    "tolerance",
    "pass",
    "n_samples",
    "seeds",
    "config_hash",
    "detail",
];

pub fn real(v: f64) -> String {
    format!("{v:.11e}")
}

fn opt_real(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

pub fn write_run_csv(path: &Path, run_id: usize, trace: &RegretTrace) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(RUN_HEADER)?;
    let id = run_id.to_string();
    for s in &trace.steps {
        w.write_record([
            id.clone(),
            s.t.to_string(),
            s.chosen_arm.to_string(),
            s.greedy_arm.map(|g| g.to_string()).unwrap_or_default(),
            opt_real(s.epsilon),
            real(s.propensity),
            real(s.reward),
            real(s.inst_regret),
            real(s.cum_regret),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, curve: &RegretCurve) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for (i, (m, s)) in curve.mean.iter().zip(&curve.stderr).enumerate() {
        w.write_record([(i + 1).to_string(), real(*m), real(*s)])?;
    }
    w.flush()?;
    Ok(())
}

/// `key,value` rows describing a run set.
pub fn write_meta_csv(path: &Path, rows: &[(String, String)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["key", "value"])?;
    for (k, v) in rows {
        w.write_record([k, v])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per grid tuple; `winner` marks the selected one.
pub fn write_cv_table(path: &Path, outcome: &CvOutcome) -> Result<()> {
    let mut w = writer(path)?;
    let k = outcome.rows.first().map_or(0, |r| r.fold_regret.len());
    let mut header = vec![
        "index".to_string(),
        "lambda".to_string(),
        "gamma".to_string(),
        "tau".to_string(),
        "mean_regret".to_string(),
        "winner".to_string(),
    ];
    header.extend((0..k).map(|f| format!("fold{f}")));
    w.write_record(&header)?;
    for (i, row) in outcome.rows.iter().enumerate() {
        let mut rec = vec![
            i.to_string(),
            row.tuple
                .lambda
                .map(|l| crate::harness::describe_lambda(&l))
                .unwrap_or_default(),
            opt_real(row.tuple.gamma),
            opt_real(row.tuple.tau),
            real(row.mean_regret),
            (i == outcome.best_index).to_string(),
        ];
        rec.extend(row.fold_regret.iter().map(|v| real(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_reports_csv(path: &Path, reports: &[TheoryReport]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(REPORT_HEADER)?;
    for r in reports {
        w.write_record([
            r.name.clone(),
            real(r.statistic),
            real(r.tolerance),
            r.passed.to_string(),
            r.n_samples.to_string(),
            r.seeds.clone(),
            r.config_hash.clone(),
            r.detail.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `t` followed by `<label>_mean,<label>_stderr` per series.
pub fn write_plotdata_csv(path: &Path, series: &[(String, RegretCurve)]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["t".to_string()];
    for (label, _) in series {
        header.push(format!("{label}_mean"));
        header.push(format!("{label}_stderr"));
    }
    w.write_record(&header)?;
    let horizon = series.iter().map(|(_, c)| c.mean.len()).max().unwrap_or(0);
    for i in 0..horizon {
        let mut rec = vec![(i + 1).to_string()];
        for (_, c) in series {
            rec.push(c.mean.get(i).map(|v| real(*v)).unwrap_or_default());
            rec.push(c.stderr.get(i).map(|v| real(*v)).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;

fn ticks(lo: f64, hi: f64, log: bool) -> Vec<f64> {
    if log {
        let a = lo.log10().floor() as i32;
        let b = hi.log10().ceil() as i32;
        (a..=b).map(|e| 10f64.powi(e)).filter(|v| *v >= lo && *v <= hi).collect()
    } else {
        (0..=4).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect()
    }
}

/// Cumulative-regret curves as a standalone SVG document. With `loglog`,
/// nonpositive points are skipped.
pub fn render_svg(series: &[(String, RegretCurve)], loglog: bool) -> String {
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|(_, c)| {
            c.mean
                .iter()
                .enumerate()
                .map(|(i, &m)| ((i + 1) as f64, m))
                .filter(|&(_, m)| m.is_finite() && (!loglog || m > 0.0))
                .collect()
        })
        .collect();
    let all = pts.iter().flatten();
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    if !x_lo.is_finite() {
        (x_lo, x_hi, y_lo, y_hi) = (1.0, 10.0, 1.0, 10.0);
    }
    if !loglog {
        y_lo = y_lo.min(0.0);
    }
    if x_hi <= x_lo {
        x_hi = x_lo + 1.0;
    }
    if y_hi <= y_lo {
        y_hi = y_lo + 1.0;
    }
    let tr = |v: f64| if loglog { v.log10() } else { v };
    let sx = |x: f64| MARGIN + (tr(x) - tr(x_lo)) / (tr(x_hi) - tr(x_lo)) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (tr(y) - tr(y_lo)) / (tr(y_hi) - tr(y_lo)) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, y0) = (MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{x0} {MARGIN} L{x0} {y0} L{} {y0}" stroke="black" fill="none"/>"#,
        WIDTH - MARGIN
    );
    for t in ticks(x_lo, x_hi, loglog) {
        let x = sx(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" font-size="11" text-anchor="middle">{}</text>"#,
            y0 + 5.0,
            y0 + 18.0,
            fmt_tick(t)
        );
    }
    for t in ticks(y_lo, y_hi, loglog) {
        let y = sy(t);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">t</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 15 {})">cumulative regret</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (k, ((label, _), p)) in series.iter().zip(&pts).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="1.5"/>"#,
            coords.join(" ")
        );
        let ly = MARGIN + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-size="11">{}</text>"#,
            MARGIN + 10.0,
            MARGIN + 30.0,
            MARGIN + 35.0,
            ly + 4.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{v:.0e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_svg(path: &Path, series: &[(String, RegretCurve)], loglog: bool) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(render_svg(series, loglog).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_has_twelve_significant_digits() {
        assert_eq!(real(1.0), "1.00000000000e0");
        assert_eq!(real(-0.00123456789012345), "-1.23456789012e-3");
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let c = RegretCurve {
            mean: vec![1.0, 2.0, 4.0],
            stderr: vec![0.0; 3],
            n_runs: 1,
        };
        let svg = render_svg(&[("a".into(), c.clone()), ("b<c".into(), c)], true);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b&lt;c"));
    }
}
