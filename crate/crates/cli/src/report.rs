//! Text tables and JSON-lines records for test results and simulation reports.

use std::io::{self, Write};

use serde::Serialize;
use vamzls_core::{SimReport, ZlsResult};

#[derive(Serialize)]
struct TestLine<'a> {
    record: &'static str,
    #[serde(flatten)]
    result: &'a ZlsResult,
    reject: bool,
}

#[derive(Serialize)]
struct SimLine<'a> {
    record: &'static str,
    label: String,
    #[serde(flatten)]
    report: &'a SimReport,
}

fn json_line<T: Serialize>(out: &mut dyn Write, v: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *out, v)?;
    writeln!(out)
}

pub fn write_tests_json(out: &mut dyn Write, results: &[ZlsResult], alpha: f64) -> io::Result<()> {
    for r in results {
        json_line(out, &TestLine { record: "test", result: r, reject: r.reject(alpha) })?;
    }
    Ok(())
}

/// Small p-values are shown as `<0.001`.
fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".into()
    } else {
        format!("{p:.3}")
    }
}

pub fn write_tests_text(out: &mut dyn Write, results: &[ZlsResult], alpha: f64) -> io::Result<()> {
    let width = results.iter().map(|r| r.term.len()).max().unwrap_or(4).max(4);
    writeln!(out, "{:<width$}  {:>10}  {:>8}  {:>8}  {:>8}", "term", "statistic", "nu", "p_value", "reject")?;
    for r in results {
        writeln!(
            out,
            "{:<width$}  {:>10.4}  {:>8.3}  {:>8}  {:>8}",
            r.term,
            r.statistic,
            r.nu,
            fmt_p(r.p_value),
            if r.reject(alpha) { "yes" } else { "no" }
        )?;
    }
    Ok(())
}

pub fn write_sim_json(out: &mut dyn Write, reports: &[SimReport]) -> io::Result<()> {
    for r in reports {
        json_line(out, &SimLine { record: "simulation", label: r.scenario.label(), report: r })?;
    }
    Ok(())
}

pub fn write_sim_text(out: &mut dyn Write, reports: &[SimReport]) -> io::Result<()> {
    let labels: Vec<String> = reports.iter().map(|r| r.scenario.label()).collect();
    let width = labels.iter().map(String::len).max().unwrap_or(8).max(8);
    writeln!(
        out,
        "{:<width$}  {:>5}  {:>6}  {:>8}  {:>9}  {:>8}  {:>7}",
        "scenario", "alpha", "rate", "mc_se", "completed", "failures", "flagged"
    )?;
    for (r, label) in reports.iter().zip(&labels) {
        writeln!(
            out,
            "{:<width$}  {:>5}  {:>6.3}  {:>8.4}  {:>9}  {:>8}  {:>7}",
            label,
            r.scenario.alpha_level,
            r.rejection_rate,
            r.mc_stderr,
            r.completed,
            r.failures,
            if r.flagged { "yes" } else { "no" }
        )?;
    }
    Ok(())
}
