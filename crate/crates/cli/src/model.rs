//! Model description read from a TOML file or assembled from flags.
//!
//! ```toml
//! family = "gaussian"
//! response = "logratio"
//! scalar_terms = ["age"]
//!
//! [[smooth_terms]]
//! name = "range"
//! knots = 8
//!
//! [[functional_terms]]
//! name = "spectrum"
//! knots = 9
//! # grid = [...]  defaults to T equally spaced points on [0, 1]
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use vamzls_core::simulate::linspace;
use vamzls_core::{DesignData, Family, FunctionalTerm, HyperParams, InvGammaPrior, ModelSpec, SmoothTerm};

use crate::error::{CliError, CliResult};
use crate::table::Table;

pub const DEFAULT_KNOTS: usize = 8;

fn default_knots() -> usize {
    DEFAULT_KNOTS
}

fn default_diff_order() -> usize {
    2
}

fn default_degree() -> usize {
    3
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothEntry {
    pub name: String,
    #[serde(default = "default_knots")]
    pub knots: usize,
    #[serde(default = "default_diff_order")]
    pub diff_order: usize,
    #[serde(default)]
    pub prior: InvGammaPrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalEntry {
    pub name: String,
    #[serde(default = "default_knots")]
    pub knots: usize,
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default)]
    pub prior: InvGammaPrior,
}

/// [`ModelSpec`] plus the response column; functional grids may be omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub family: Family,
    pub response: String,
    #[serde(default)]
    pub scalar_terms: Vec<String>,
    #[serde(default)]
    pub smooth_terms: Vec<SmoothEntry>,
    #[serde(default)]
    pub functional_terms: Vec<FunctionalEntry>,
    #[serde(default)]
    pub hyper: HyperParams,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_true")]
    pub center: bool,
}

/// Everything a fit needs, resolved against a data table.
#[derive(Debug, Clone)]
pub struct ModelInputs {
    pub spec: ModelSpec,
    pub data: DesignData,
    pub y: DVector<f64>,
}

impl ModelFile {
    pub fn new(family: Family, response: impl Into<String>) -> Self {
        Self {
            family,
            response: response.into(),
            scalar_terms: Vec::new(),
            smooth_terms: Vec::new(),
            functional_terms: Vec::new(),
            hyper: HyperParams::default(),
            degree: default_degree(),
            center: true,
        }
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn resolve(&self, table: &Table) -> CliResult<ModelInputs> {
        let n = table.nrows();
        let y = DVector::from_column_slice(table.column(&self.response)?);

        let mut scalar = DMatrix::zeros(n, self.scalar_terms.len());
        for (j, name) in self.scalar_terms.iter().enumerate() {
            scalar.set_column(j, &DVector::from_column_slice(table.column(name)?));
        }
        let mut smooth = Vec::with_capacity(self.smooth_terms.len());
        for term in &self.smooth_terms {
            smooth.push(table.column(&term.name)?.to_vec());
        }
        let mut functional = Vec::with_capacity(self.functional_terms.len());
        let mut functional_specs = Vec::with_capacity(self.functional_terms.len());
        for term in &self.functional_terms {
            let w = table.functional(&term.name)?;
            let grid = match &term.grid {
                Some(g) if g.len() != w.ncols() => {
                    return Err(CliError::Usage(format!(
                        "functional term `{}` has {} columns but a grid of {} points",
                        term.name,
                        w.ncols(),
                        g.len()
                    )))
                }
                Some(g) => g.clone(),
                None => linspace(0.0, 1.0, w.ncols()),
            };
            functional_specs.push(FunctionalTerm { name: term.name.clone(), knots: term.knots, grid, prior: term.prior });
            functional.push(w);
        }

        let spec = ModelSpec {
            family: self.family,
            scalar_terms: self.scalar_terms.clone(),
            smooth_terms: self
                .smooth_terms
                .iter()
                .map(|t| SmoothTerm { name: t.name.clone(), knots: t.knots, diff_order: t.diff_order, prior: t.prior })
                .collect(),
            functional_terms: functional_specs,
            hyper: self.hyper,
            degree: self.degree,
            center: self.center,
        };
        spec.validate()?;
        Ok(ModelInputs { spec, data: DesignData { scalar, smooth, functional }, y })
    }
}

/// Parse a `name` or `name:knots` flag value.
pub fn parse_term(arg: &str, default_knots: usize) -> CliResult<(String, usize)> {
    match arg.split_once(':') {
        None if !arg.is_empty() => Ok((arg.to_owned(), default_knots)),
        Some((name, k)) if !name.is_empty() => k
            .parse()
            .map(|k| (name.to_owned(), k))
            .map_err(|_| CliError::Usage(format!("bad knot count in `{arg}`"))),
        _ => Err(CliError::Usage(format!("bad term `{arg}`"))),
    }
}
