//! Model specification and assembly of the stacked design matrix
//! `C = [1 | X | Xi_1 ... Xi_M | W_1 Theta_1 ... W_F Theta_F]`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::basis::{self, BSplineBasis, PenaltyMatrix, DEFAULT_DEGREE};
use crate::error::{Error, Result};

pub const INTERCEPT: &str = "(Intercept)";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Family {
    Gaussian,
    Probit,
}

/// Inverse-gamma prior `IG(a, b)` on a variance or smoothing parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InvGammaPrior {
    pub a: f64,
    pub b: f64,
}

impl Default for InvGammaPrior {
    fn default() -> Self {
        Self { a: 0.01, b: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SmoothTerm {
    pub name: String,
    /// Number of basis functions `K`.
    pub knots: usize,
    #[cfg_attr(feature = "serde", serde(default = "default_diff_order"))]
    pub diff_order: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub prior: InvGammaPrior,
}

#[cfg(feature = "serde")]
fn default_diff_order() -> usize {
    2
}

impl SmoothTerm {
    pub fn new(name: impl Into<String>, knots: usize) -> Self {
        Self { name: name.into(), knots, diff_order: 2, prior: InvGammaPrior::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FunctionalTerm {
    pub name: String,
    /// Number of basis functions `L`.
    pub knots: usize,
    /// Sorted grid `t_1 < ... < t_T` on which the covariate is observed.
    pub grid: Vec<f64>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub prior: InvGammaPrior,
}

impl FunctionalTerm {
    pub fn new(name: impl Into<String>, knots: usize, grid: Vec<f64>) -> Self {
        Self { name: name.into(), knots, grid, prior: InvGammaPrior::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct HyperParams {
    /// Prior variance of the intercept.
    pub sigma_a2: f64,
    /// Prior variance of each scalar coefficient.
    pub sigma_b2: f64,
    /// Prior on the error variance (Gaussian family only).
    pub error: InvGammaPrior,
    /// Weight on the zeroth-derivative Gram in functional penalties.
    pub xi_pen: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self { sigma_a2: 1e6, sigma_b2: 1e6, error: InvGammaPrior::default(), xi_pen: 0.5 }
    }
}

impl HyperParams {
    fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("sigma_a2 must be positive", self.sigma_a2),
            ("sigma_b2 must be positive", self.sigma_b2),
            ("a_e must be positive", self.error.a),
            ("b_e must be positive", self.error.b),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain { what, value: v });
            }
        }
        if !(0.0..=1.0).contains(&self.xi_pen) {
            return Err(Error::Domain { what: "xi_pen must lie in [0, 1]", value: self.xi_pen });
        }
        Ok(())
    }
}

/// Declarative description of an additive model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    pub family: Family,
    #[cfg_attr(feature = "serde", serde(default))]
    pub scalar_terms: Vec<String>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub smooth_terms: Vec<SmoothTerm>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub functional_terms: Vec<FunctionalTerm>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub hyper: HyperParams,
    #[cfg_attr(feature = "serde", serde(default = "default_degree"))]
    pub degree: usize,
    /// Mean-center smooth and functional blocks after assembly.
    #[cfg_attr(feature = "serde", serde(default = "default_true"))]
    pub center: bool,
}

#[cfg(feature = "serde")]
fn default_degree() -> usize {
    DEFAULT_DEGREE
}

#[cfg(feature = "serde")]
fn default_true() -> bool {
    true
}

impl ModelSpec {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            scalar_terms: Vec::new(),
            smooth_terms: Vec::new(),
            functional_terms: Vec::new(),
            hyper: HyperParams::default(),
            degree: DEFAULT_DEGREE,
            center: true,
        }
    }

    pub fn with_scalar(mut self, name: impl Into<String>) -> Self {
        self.scalar_terms.push(name.into());
        self
    }

    pub fn with_smooth(mut self, name: impl Into<String>, knots: usize) -> Self {
        self.smooth_terms.push(SmoothTerm::new(name, knots));
        self
    }

    pub fn with_functional(mut self, name: impl Into<String>, knots: usize, grid: Vec<f64>) -> Self {
        self.functional_terms.push(FunctionalTerm::new(name, knots, grid));
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        let mut names: Vec<&str> = vec![INTERCEPT];
        names.extend(self.scalar_terms.iter().map(String::as_str));
        names.extend(self.smooth_terms.iter().map(|t| t.name.as_str()));
        names.extend(self.functional_terms.iter().map(|t| t.name.as_str()));
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(Error::InvalidArgument(format!("term `{a}` appears more than once")));
            }
        }
        for t in &self.smooth_terms {
            if t.knots <= self.degree {
                return Err(Error::InvalidArgument(format!(
                    "smooth `{}` needs more than {} basis functions, got {}",
                    t.name, self.degree, t.knots
                )));
            }
            if t.diff_order == 0 || t.diff_order >= t.knots {
                return Err(Error::InvalidArgument(format!(
                    "smooth `{}` has difference order {} incompatible with {} basis functions",
                    t.name, t.diff_order, t.knots
                )));
            }
            check_prior(&t.name, t.prior)?;
        }
        for t in &self.functional_terms {
            if t.knots <= self.degree {
                return Err(Error::InvalidArgument(format!(
                    "functional `{}` needs more than {} basis functions, got {}",
                    t.name, self.degree, t.knots
                )));
            }
            if t.grid.len() < 2 || t.grid.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidArgument(format!(
                    "functional `{}` grid must be strictly increasing with at least two points",
                    t.name
                )));
            }
            check_prior(&t.name, t.prior)?;
        }
        Ok(())
    }
}

fn check_prior(name: &str, p: InvGammaPrior) -> Result<()> {
    if !(p.a > 0.0 && p.b > 0.0) || !p.a.is_finite() || !p.b.is_finite() {
        return Err(Error::InvalidArgument(format!("prior of `{name}` must have positive parameters")));
    }
    Ok(())
}

/// Raw covariate data, ordered as in the [`ModelSpec`] term lists.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignData {
    /// `n x p` scalar covariates.
    pub scalar: DMatrix<f64>,
    /// One `n`-vector per smooth term.
    pub smooth: Vec<Vec<f64>>,
    /// One `n x T` matrix per functional term.
    pub functional: Vec<DMatrix<f64>>,
}

impl DesignData {
    pub fn empty(n: usize) -> Self {
        Self { scalar: DMatrix::zeros(n, 0), smooth: Vec::new(), functional: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockKind {
    Intercept,
    Scalar,
    Smooth {
        basis: BSplineBasis,
        penalty: PenaltyMatrix,
        prior: InvGammaPrior,
    },
    Functional {
        basis: BSplineBasis,
        penalty: PenaltyMatrix,
        prior: InvGammaPrior,
        grid: Vec<f64>,
        quad_weights: Vec<f64>,
    },
}

impl BlockKind {
    pub fn label(&self) -> &'static str {
        match self {
            BlockKind::Intercept => "intercept",
            BlockKind::Scalar => "scalar",
            BlockKind::Smooth { .. } => "smooth",
            BlockKind::Functional { .. } => "functional",
        }
    }
}

/// A named group of consecutive columns of the design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub range: Range<usize>,
    pub kind: BlockKind,
    /// Column means removed by [`center_smooth_blocks`]; zeros otherwise.
    pub offsets: Vec<f64>,
    /// Observed covariate range (smooth terms only).
    pub covariate_range: Option<(f64, f64)>,
}

impl Block {
    pub fn width(&self) -> usize {
        self.range.len()
    }

    pub fn penalty(&self) -> Option<(&PenaltyMatrix, InvGammaPrior)> {
        match &self.kind {
            BlockKind::Smooth { penalty, prior, .. } | BlockKind::Functional { penalty, prior, .. } => {
                Some((penalty, *prior))
            }
            _ => None,
        }
    }

    pub fn is_penalized(&self) -> bool {
        self.penalty().is_some()
    }

    /// Rows `phi(x)` such that the estimated curve at `x` is `phi(x)' mu_block`.
    ///
    /// Smooth curves are reported as deviations (the centering offsets are
    /// subtracted); functional coefficient curves are the plain basis rows.
    pub fn curve_rows(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        match &self.kind {
            BlockKind::Smooth { basis, .. } => {
                let mut m = basis.evaluate(points);
                for mut row in m.row_iter_mut() {
                    for (v, o) in row.iter_mut().zip(&self.offsets) {
                        *v -= o;
                    }
                }
                Ok(m)
            }
            BlockKind::Functional { basis, .. } => Ok(basis.evaluate(points)),
            other => Err(Error::WrongTermKind {
                term: self.name.clone(),
                expected: "smooth or functional",
                found: other.label(),
            }),
        }
    }

    /// Default integration grid for the global test: 201 equally spaced
    /// points over the observed covariate range for smooths, the functional
    /// grid itself for functional terms.
    pub fn default_eval_grid(&self) -> Option<Vec<f64>> {
        match &self.kind {
            BlockKind::Smooth { .. } => {
                let (lo, hi) = self.covariate_range?;
                Some((0..201).map(|i| lo + (hi - lo) * i as f64 / 200.0).collect())
            }
            BlockKind::Functional { grid, .. } => Some(grid.clone()),
            _ => None,
        }
    }
}

/// Assembled design matrix with its block map.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignBundle {
    pub c: DMatrix<f64>,
    pub blocks: Vec<Block>,
    pub family: Family,
    pub hyper: HyperParams,
    pub centered: bool,
}

impl DesignBundle {
    pub fn nrows(&self) -> usize {
        self.c.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.c.ncols()
    }

    pub fn block(&self, name: &str) -> Result<&Block> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::UnknownTerm(String::from(name)))
    }

    pub fn block_index(&self, name: &str) -> Result<usize> {
        self.blocks
            .iter()
            .position(|b| b.name == name)
            .ok_or_else(|| Error::UnknownTerm(String::from(name)))
    }

    pub fn penalized_blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(|b| b.is_penalized())
    }

    pub fn block_of_column(&self, col: usize) -> Option<&Block> {
        self.blocks.iter().find(|b| b.range.contains(&col))
    }

    /// Number of columns belonging to the intercept and scalar terms.
    pub fn unpenalized_width(&self) -> usize {
        self.blocks.iter().filter(|b| !b.is_penalized()).map(Block::width).sum()
    }
}

fn check_finite_slice(what: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(String::from(what)))
    }
}

/// Stack the design matrix. Functional blocks are `W diag(w) Theta` with
/// trapezoid weights `w`, so that each entry approximates `∫ w_i(t) θ_l(t) dt`.
pub fn assemble(spec: &ModelSpec, data: &DesignData) -> Result<DesignBundle> {
    spec.validate()?;
    let n = data.scalar.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument(String::from("no observations")));
    }
    let p = spec.scalar_terms.len();
    if data.scalar.ncols() != p {
        return Err(Error::DimensionMismatch { what: String::from("scalar covariate columns"), expected: p, found: data.scalar.ncols() });
    }
    if data.smooth.len() != spec.smooth_terms.len() {
        return Err(Error::DimensionMismatch {
            what: String::from("smooth covariates"),
            expected: spec.smooth_terms.len(),
            found: data.smooth.len(),
        });
    }
    if data.functional.len() != spec.functional_terms.len() {
        return Err(Error::DimensionMismatch {
            what: String::from("functional covariates"),
            expected: spec.functional_terms.len(),
            found: data.functional.len(),
        });
    }
    check_finite_slice("scalar covariates", data.scalar.as_slice())?;

    let mut columns: Vec<DMatrix<f64>> = Vec::new();
    let mut blocks = Vec::new();
    let mut next = 0usize;
    let mut push = |name: &str, kind: BlockKind, cols: DMatrix<f64>, cov: Option<(f64, f64)>, columns: &mut Vec<DMatrix<f64>>| {
        let w = cols.ncols();
        blocks.push(Block { name: String::from(name), range: next..next + w, kind, offsets: vec![0.0; w], covariate_range: cov });
        next += w;
        columns.push(cols);
    };

    push(INTERCEPT, BlockKind::Intercept, DMatrix::from_element(n, 1, 1.0), None, &mut columns);
    for (j, name) in spec.scalar_terms.iter().enumerate() {
        push(name, BlockKind::Scalar, data.scalar.columns(j, 1).into_owned(), None, &mut columns);
    }
    for (term, z) in spec.smooth_terms.iter().zip(&data.smooth) {
        if z.len() != n {
            return Err(Error::DimensionMismatch { what: format!("rows of smooth covariate `{}`", term.name), expected: n, found: z.len() });
        }
        check_finite_slice(&term.name, z)?;
        let basis = basis::make_basis(z, term.knots, spec.degree).map_err(|e| match e {
            Error::DegenerateCovariate(_) => Error::DegenerateCovariate(term.name.clone()),
            other => other,
        })?;
        let penalty = basis::difference_penalty(term.knots, term.diff_order)?;
        let cols = basis.evaluate(z);
        let range = basis.boundary();
        push(&term.name, BlockKind::Smooth { basis, penalty, prior: term.prior }, cols, Some(range), &mut columns);
    }
    for (term, w) in spec.functional_terms.iter().zip(&data.functional) {
        let t = term.grid.len();
        if w.nrows() != n || w.ncols() != t {
            return Err(Error::DimensionMismatch {
                what: format!("functional covariate `{}` (rows x grid)", term.name),
                expected: n * t,
                found: w.nrows() * w.ncols(),
            });
        }
        check_finite_slice(&term.name, w.as_slice())?;
        let (lo, hi) = (term.grid[0], term.grid[t - 1]);
        let basis = BSplineBasis::uniform(lo, hi, term.knots, spec.degree)?;
        let delta0 = basis::derivative_penalty(&basis, &term.grid, 0)?;
        let delta2 = basis::derivative_penalty(&basis, &term.grid, 2.min(spec.degree))?;
        let penalty = basis::functional_penalty(&delta0, &delta2, spec.hyper.xi_pen)?;
        let quad_weights = basis::trapezoid_weights(&term.grid);
        let theta = basis.evaluate(&term.grid);
        let weighted = DMatrix::from_fn(t, theta.ncols(), |i, j| theta[(i, j)] * quad_weights[i]);
        let cols = w * weighted;
        push(
            &term.name,
            BlockKind::Functional { basis, penalty, prior: term.prior, grid: term.grid.clone(), quad_weights },
            cols,
            None,
            &mut columns,
        );
    }

    let mut c = DMatrix::zeros(n, next);
    for (block, cols) in blocks.iter().zip(&columns) {
        c.columns_mut(block.range.start, block.width()).copy_from(cols);
    }
    Ok(DesignBundle { c, blocks, family: spec.family, hyper: spec.hyper, centered: false })
}

/// Mean-center every smooth and functional block; the removed column means
/// are stored in [`Block::offsets`].
pub fn center_smooth_blocks(mut bundle: DesignBundle) -> DesignBundle {
    let n = bundle.c.nrows() as f64;
    for block in bundle.blocks.iter_mut().filter(|b| b.is_penalized()) {
        for (k, col) in block.range.clone().enumerate() {
            let mean = bundle.c.column(col).sum() / n;
            bundle.c.column_mut(col).add_scalar_mut(-mean);
            block.offsets[k] += mean;
        }
    }
    bundle.centered = true;
    bundle
}

/// [`assemble`] followed by [`center_smooth_blocks`] when `spec.center` is set.
pub fn build_design(spec: &ModelSpec, data: &DesignData) -> Result<DesignBundle> {
    let bundle = assemble(spec, data)?;
    Ok(if spec.center { center_smooth_blocks(bundle) } else { bundle })
}

/// Design rows for new data, using the bases and centering offsets of `bundle`.
pub fn design_rows(bundle: &DesignBundle, data: &DesignData) -> Result<DMatrix<f64>> {
    let n = data.scalar.nrows();
    let mut c = DMatrix::zeros(n, bundle.ncols());
    let (mut si, mut fi, mut xi) = (0usize, 0usize, 0usize);
    for block in &bundle.blocks {
        let start = block.range.start;
        match &block.kind {
            BlockKind::Intercept => c.column_mut(start).fill(1.0),
            BlockKind::Scalar => {
                c.column_mut(start).copy_from(&data.scalar.column(xi));
                xi += 1;
            }
            BlockKind::Smooth { basis, .. } => {
                let z = data.smooth.get(si).ok_or_else(|| Error::UnknownTerm(block.name.clone()))?;
                c.columns_mut(start, block.width()).copy_from(&basis.evaluate(z));
                si += 1;
            }
            BlockKind::Functional { basis, grid, quad_weights, .. } => {
                let w = data.functional.get(fi).ok_or_else(|| Error::UnknownTerm(block.name.clone()))?;
                let theta = basis.evaluate(grid);
                let weighted = DMatrix::from_fn(grid.len(), theta.ncols(), |i, j| theta[(i, j)] * quad_weights[i]);
                c.columns_mut(start, block.width()).copy_from(&(w * weighted));
                fi += 1;
            }
        }
        for (k, o) in block.offsets.iter().enumerate() {
            c.column_mut(start + k).add_scalar_mut(-o);
        }
    }
    Ok(c)
}

pub(crate) fn block_vector(v: &DVector<f64>, block: &Block) -> DVector<f64> {
    v.rows(block.range.start, block.width()).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        // small LCG; only used to scatter covariate values
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect()
    }

    #[test]
    fn scalar_only_design() {
        let x = pseudo(12, 3);
        let spec = ModelSpec::new(Family::Gaussian).with_scalar("x");
        let data = DesignData { scalar: DMatrix::from_column_slice(12, 1, &x), smooth: vec![], functional: vec![] };
        let b = build_design(&spec, &data).unwrap();
        assert_eq!(b.c.shape(), (12, 2));
        assert!(b.c.column(0).iter().all(|&v| v == 1.0));
        assert_eq!(b.c.column(1).as_slice(), &x[..]);
    }

    #[test]
    fn smooth_block_has_k_columns_and_centered_means() {
        let z = pseudo(80, 9);
        let spec = ModelSpec::new(Family::Gaussian).with_smooth("z", 8);
        let data = DesignData { scalar: DMatrix::zeros(80, 0), smooth: vec![z.clone()], functional: vec![] };
        let raw = assemble(&spec, &data).unwrap();
        assert_eq!(raw.block("z").unwrap().width(), 8);
        let b = center_smooth_blocks(raw.clone());
        for col in b.block("z").unwrap().range.clone() {
            assert!(b.c.column(col).mean().abs() < 1e-12);
        }
        assert_eq!(b.c.column(0), raw.c.column(0));
        // centered rows equal curve rows at the observed points
        let rows = b.block("z").unwrap().curve_rows(&z).unwrap();
        let block = b.c.columns(1, 8);
        assert!((rows - block).abs().max() < 1e-15);
        // new-data rows reproduce the training design
        assert!((design_rows(&b, &data).unwrap() - &b.c).abs().max() < 1e-15);
    }

    #[test]
    fn blocks_partition_columns() {
        let n = 30;
        let grid = linspace(0.0, 1.0, 20);
        let spec = ModelSpec::new(Family::Gaussian)
            .with_scalar("x1")
            .with_scalar("x2")
            .with_smooth("z", 6)
            .with_functional("w", 7, grid.clone());
        let w = DMatrix::from_fn(n, 20, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0);
        let data = DesignData {
            scalar: DMatrix::from_fn(n, 2, |i, j| (i + j) as f64),
            smooth: vec![pseudo(n, 1)],
            functional: vec![w],
        };
        let b = build_design(&spec, &data).unwrap();
        let mut next = 0;
        for block in &b.blocks {
            assert_eq!(block.range.start, next);
            next = block.range.end;
            if let Some((p, _)) = block.penalty() {
                assert_eq!(p.dim(), block.width());
            }
        }
        assert_eq!(next, b.ncols());
        assert_eq!(b.ncols(), 1 + 2 + 6 + 7);
    }

    #[test]
    fn functional_entries_integrate_basis_functions() {
        let n = 5;
        let grid = linspace(0.0, 1.0, 401);
        let spec = ModelSpec { center: false, ..ModelSpec::new(Family::Gaussian).with_functional("w", 6, grid.clone()) };
        let data = DesignData { scalar: DMatrix::zeros(n, 0), smooth: vec![], functional: vec![DMatrix::from_element(n, 401, 1.0)] };
        let b = build_design(&spec, &data).unwrap();
        let block = b.block("w").unwrap();
        let basis = match &block.kind {
            BlockKind::Functional { basis, .. } => basis.clone(),
            _ => unreachable!(),
        };
        // fine midpoint rule as an independent quadrature
        let m = 20_000;
        for l in 0..6 {
            let integral: f64 = (0..m).map(|i| basis.row((i as f64 + 0.5) / m as f64, 0)[l]).sum::<f64>() / m as f64;
            assert!((b.c[(0, 1 + l)] - integral).abs() < 1e-5);
        }
        // row sums of the block approximate ∫ 1 dt
        let total: f64 = b.c.row(0).columns(1, 6).sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_functional_covariate_gives_zero_block() {
        let grid = linspace(0.0, 1.0, 30);
        let spec = ModelSpec::new(Family::Gaussian).with_functional("w", 6, grid);
        let data = DesignData { scalar: DMatrix::zeros(10, 0), smooth: vec![], functional: vec![DMatrix::zeros(10, 30)] };
        let b = build_design(&spec, &data).unwrap();
        assert!(b.c.columns(1, 6).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn permuting_rows_permutes_design() {
        let n = 25;
        let z = pseudo(n, 5);
        let x = pseudo(n, 6);
        let spec = ModelSpec::new(Family::Gaussian).with_scalar("x").with_smooth("z", 6);
        let data = DesignData { scalar: DMatrix::from_column_slice(n, 1, &x), smooth: vec![z.clone()], functional: vec![] };
        let perm: Vec<usize> = (0..n).map(|i| (i * 7) % n).collect();
        let data_p = DesignData {
            scalar: DMatrix::from_fn(n, 1, |i, _| x[perm[i]]),
            smooth: vec![perm.iter().map(|&i| z[i]).collect()],
            functional: vec![],
        };
        let a = build_design(&spec, &data).unwrap();
        let b = build_design(&spec, &data_p).unwrap();
        for (i, &pi) in perm.iter().enumerate() {
            let diff = (a.c.row(pi) - b.c.row(i)).abs().max();
            assert!(diff < 1e-12);
        }
    }

    #[test]
    fn input_errors() {
        let spec = ModelSpec::new(Family::Gaussian).with_smooth("z", 6);
        let constant = DesignData { scalar: DMatrix::zeros(10, 0), smooth: vec![vec![1.0; 10]], functional: vec![] };
        assert_eq!(assemble(&spec, &constant).unwrap_err(), Error::DegenerateCovariate(String::from("z")));
        let short = DesignData { scalar: DMatrix::zeros(10, 0), smooth: vec![vec![1.0; 9]], functional: vec![] };
        assert!(matches!(assemble(&spec, &short), Err(Error::DimensionMismatch { .. })));
        let mut nan = pseudo(10, 2);
        nan[3] = f64::NAN;
        let with_nan = DesignData { scalar: DMatrix::zeros(10, 0), smooth: vec![nan], functional: vec![] };
        assert!(matches!(assemble(&spec, &with_nan), Err(Error::NonFinite(_))));
        let dup = ModelSpec::new(Family::Gaussian).with_scalar("z").with_smooth("z", 6);
        assert!(dup.validate().is_err());
        let few = ModelSpec::new(Family::Gaussian).with_smooth("z", 3);
        assert!(few.validate().is_err());
    }

    #[test]
    fn trapezoid_integral_of_unit_curve() {
        for t in [50usize, 100] {
            let grid = linspace(0.0, 1.0, t);
            let w = basis::trapezoid_weights(&grid);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}
