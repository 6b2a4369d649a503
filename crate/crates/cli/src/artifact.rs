//! Fit artifacts: one JSON object per line, tagged by `record`.
//!
//! The first line is the fit summary, then one `curve` line per smooth or
//! functional term. Floats are written in shortest round-trip form, so a
//! re-loaded artifact reproduces every stored value bit for bit.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use vamzls_core::simulate::linspace;
use vamzls_core::{extract_curve, BlockKind, DesignBundle, Family, ModelSpec, VariationalFit};

use crate::error::{CliError, CliResult};

/// Points on which stored curves are evaluated.
pub const CURVE_POINTS: usize = 201;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub family: Family,
    pub n: usize,
    pub converged: bool,
    pub iterations: usize,
    pub elbo_trace: Vec<f64>,
    /// Labels of the design columns, e.g. `z[3]`.
    pub columns: Vec<String>,
    pub mu: Vec<f64>,
    pub sigma_diag: Vec<f64>,
    pub b_sigma2: Option<f64>,
    pub b_omega: Vec<f64>,
    pub b_eta: Vec<f64>,
    pub warnings: Vec<String>,
    pub model: ModelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub term: String,
    pub grid: Vec<f64>,
    pub estimate: Vec<f64>,
    pub sd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Fit(Box<FitSummary>),
    Curve(CurveRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitArtifact {
    pub summary: FitSummary,
    pub curves: Vec<CurveRecord>,
}

fn column_labels(bundle: &DesignBundle) -> Vec<String> {
    let mut labels = Vec::with_capacity(bundle.ncols());
    for block in &bundle.blocks {
        match block.kind {
            BlockKind::Intercept | BlockKind::Scalar => labels.push(block.name.clone()),
            _ => labels.extend((1..=block.width()).map(|k| format!("{}[{k}]", block.name))),
        }
    }
    labels
}

/// Evaluation grid of a stored curve: `CURVE_POINTS` points spanning the
/// observed covariate range (smooths) or the functional grid.
fn curve_grid(bundle: &DesignBundle, term: &str) -> CliResult<Vec<f64>> {
    let block = bundle.block(term)?;
    let span = match &block.kind {
        BlockKind::Functional { grid, .. } => grid.first().copied().zip(grid.last().copied()),
        _ => block.covariate_range,
    };
    let (lo, hi) = span.ok_or_else(|| CliError::Usage(format!("term `{term}` has no curve")))?;
    Ok(linspace(lo, hi, CURVE_POINTS))
}

impl FitArtifact {
    pub fn new(fit: &VariationalFit, bundle: &DesignBundle, model: &ModelSpec) -> CliResult<Self> {
        let mut curves = Vec::new();
        for block in bundle.penalized_blocks() {
            let grid = curve_grid(bundle, &block.name)?;
            let (estimate, sd) = extract_curve(fit, bundle, &block.name, &grid)?;
            curves.push(CurveRecord { term: block.name.clone(), grid, estimate, sd });
        }
        let summary = FitSummary {
            family: fit.family,
            n: bundle.nrows(),
            converged: fit.converged,
            iterations: fit.iterations,
            elbo_trace: fit.elbo_trace.clone(),
            columns: column_labels(bundle),
            mu: fit.mu_theta.iter().copied().collect(),
            sigma_diag: fit.sigma_theta.diagonal().iter().copied().collect(),
            b_sigma2: fit.b_sigma2,
            b_omega: fit.b_omega.clone(),
            b_eta: fit.b_eta.clone(),
            warnings: fit.warnings.clone(),
            model: model.clone(),
        };
        Ok(Self { summary, curves })
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut line = |r: &Record| -> std::io::Result<()> {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")
        };
        line(&Record::Fit(Box::new(self.summary.clone())))?;
        for c in &self.curves {
            line(&Record::Curve(c.clone()))?;
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_to(&mut out).and_then(|_| out.flush()).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut summary = None;
        let mut curves = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| CliError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&line).map_err(|e| CliError::Parse {
                path: path.to_path_buf(),
                line: i as u64 + 1,
                column: e.column(),
                message: e.to_string(),
            })?;
            match record {
                Record::Fit(s) if summary.is_none() => summary = Some(*s),
                Record::Fit(_) => {
                    return Err(CliError::Parse {
                        path: path.to_path_buf(),
                        line: i as u64 + 1,
                        column: 1,
                        message: "second fit record".into(),
                    })
                }
                Record::Curve(c) => curves.push(c),
            }
        }
        let summary = summary.ok_or_else(|| CliError::Config { path: path.to_path_buf(), message: "no fit record".into() })?;
        Ok(Self { summary, curves })
    }

    pub fn curve(&self, term: &str) -> Option<&CurveRecord> {
        self.curves.iter().find(|c| c.term == term)
    }
}
