//! Coordinate-ascent variational inference for the Gaussian and the probit
//! (latent-variable) additive model.
//!
//! Both engines share one mean-field factorization: a joint Gaussian
//! `q(theta)` over all mean parameters, inverse-gamma factors for every
//! smoothing parameter, and either an inverse-gamma `q(sigma^2)` (Gaussian)
//! or independent truncated-normal latent factors (probit).
//!
//! The lower bound is evaluated in its general form, valid at any state and
//! not only right after the scale updates, so it can be checked for
//! monotonicity sweep by sweep.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::design::{Block, BlockKind, DesignBundle, Family, InvGammaPrior};
use crate::error::{Error, Result};
use crate::numerics::{inverse_mills, log_gamma, log_std_normal_cdf, Tail};

/// Ridge added to penalties that are not otherwise completed to full rank.
pub const PENALTY_RIDGE: f64 = 1e-8;

/// Prior precision matrix (up to the `1/omega` scale) of a penalized block.
///
/// A centered smooth block cannot see the constant coefficient direction:
/// the basis sums to one, so centering maps that direction to the zero
/// column, and difference penalties do not penalize it either. That
/// direction gets unit prior precision (`P + J/K`), which leaves every
/// identified direction untouched and keeps the posterior precision well
/// conditioned. Other blocks get a negligible ridge.
pub fn prior_precision(block: &Block, centered: bool) -> Option<DMatrix<f64>> {
    let (penalty, _) = block.penalty()?;
    let w = block.width();
    let completed = match block.kind {
        BlockKind::Smooth { .. } if centered => &penalty.matrix + DMatrix::from_element(w, w, 1.0 / w as f64),
        _ => &penalty.matrix + DMatrix::<f64>::identity(w, w) * PENALTY_RIDGE,
    };
    Some(completed)
}

const CHOLESKY_JITTER: f64 = 1e-10;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct FitControl {
    /// Absolute change in the lower bound below which the fit is converged.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting value for every inverse-gamma scale `B_q(.)`.
    pub b_init: f64,
    pub scale_update: ScaleUpdate,
    pub probit_mean: ProbitMean,
}

/// Response vector driving the probit mean update `mu = Sigma C' r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ProbitMean {
    /// `r = E[Y*]`, the latent means from the previous sweep.
    #[default]
    LatentMean,
    /// `r = Y`, the observed 0/1 response.
    Observed,
}

/// Quadratic form used in the smoothing-scale updates `B_q(omega)`, `B_q(eta)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScaleUpdate {
    /// `mu' P mu + tr(P Sigma)`: the exact coordinate update for the prior.
    #[default]
    Penalized,
    /// `mu' mu + tr(P Sigma)`.
    MeanNorm,
}

impl Default for FitControl {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 500, b_init: 1.0, scale_update: ScaleUpdate::Penalized, probit_mean: ProbitMean::LatentMean }
    }
}

impl FitControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Domain { what: "tolerance must be positive", value: self.tol });
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument(String::from("max_iter must be at least 1")));
        }
        if !(self.b_init > 0.0) || !self.b_init.is_finite() {
            return Err(Error::Domain { what: "b_init must be positive", value: self.b_init });
        }
        Ok(())
    }
}

/// Converged (or last) variational parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalFit {
    pub family: Family,
    pub mu_theta: DVector<f64>,
    pub sigma_theta: DMatrix<f64>,
    /// `B_q(sigma^2)`; `None` for the probit model, whose latent variance is 1.
    pub b_sigma2: Option<f64>,
    /// `B_q(omega_m)`, one per smooth term in model order.
    pub b_omega: Vec<f64>,
    /// `B_q(eta_f)`, one per functional term in model order.
    pub b_eta: Vec<f64>,
    /// `E_q[Y*]` (probit only).
    pub mu_ystar: Option<DVector<f64>>,
    pub elbo_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl VariationalFit {
    /// Scale multiplying `C'Y` in the mean update: `(a_e + N/2) / B_q(sigma^2)`
    /// for the Gaussian model and 1 for the probit model.
    pub fn data_precision(&self, bundle: &DesignBundle) -> f64 {
        match self.b_sigma2 {
            Some(b) => error_shape(bundle) / b,
            None => 1.0,
        }
    }

    /// Variational posterior mean of the error precision inverted:
    /// `B_q(sigma^2) / (a_e + N/2)`; 1 for the probit model.
    pub fn sigma2_hat(&self, bundle: &DesignBundle) -> f64 {
        1.0 / self.data_precision(bundle)
    }

    /// Response the fitted mean is linear in: `Y` or `E_q[Y*]`.
    pub fn working_response<'a>(&'a self, y: &'a DVector<f64>) -> &'a DVector<f64> {
        self.mu_ystar.as_ref().unwrap_or(y)
    }

    pub fn block_mean(&self, block: &Block) -> DVector<f64> {
        crate::design::block_vector(&self.mu_theta, block)
    }

    pub fn block_cov(&self, block: &Block) -> DMatrix<f64> {
        let (s, w) = (block.range.start, block.width());
        self.sigma_theta.view((s, s), (w, w)).into_owned()
    }

    pub fn final_elbo(&self) -> Option<f64> {
        self.elbo_trace.last().copied()
    }

    /// Scales of the penalized blocks in design order (smooths, then functionals).
    pub fn penalty_scales(&self) -> Vec<f64> {
        self.b_omega.iter().chain(&self.b_eta).copied().collect()
    }
}

fn error_shape(bundle: &DesignBundle) -> f64 {
    bundle.hyper.error.a + 0.5 * bundle.nrows() as f64
}

/// Variational state of the Gaussian engine.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub b_sigma2: f64,
    /// Penalized-block scales in design order.
    pub b_pen: Vec<f64>,
}

/// Variational state of the probit engine.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbitState {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    /// Location of each truncated-normal latent factor.
    pub latent_location: DVector<f64>,
    pub b_pen: Vec<f64>,
}

struct PenBlock {
    start: usize,
    width: usize,
    matrix: DMatrix<f64>,
    prior: InvGammaPrior,
    shape: f64,
}

impl PenBlock {
    /// `mu_b' P mu_b + tr(P Sigma_bb)`.
    fn expected_quadratic(&self, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
        let m = mu.rows(self.start, self.width);
        let s = sigma.view((self.start, self.start), (self.width, self.width));
        let quad = (m.transpose() * &self.matrix * m)[(0, 0)];
        quad + self.matrix.component_mul(&s).sum()
    }

    /// Inverse-gamma terms of the bound; the last summand vanishes right after
    /// the optimal scale update.
    fn bound_terms(&self, b_q: f64, quad: f64) -> Result<f64> {
        let InvGammaPrior { a, b } = self.prior;
        Ok(a * libm::log(b) - self.shape * libm::log(b_q) + log_gamma(self.shape)? - log_gamma(a)?
            + self.shape / b_q * (b_q - b - 0.5 * quad))
    }
}

/// Quantities shared by every sweep and by bound evaluation.
struct Context<'a> {
    bundle: &'a DesignBundle,
    ctc: DMatrix<f64>,
    pen: Vec<PenBlock>,
    /// Prior precision of the unpenalized columns (0 on penalized ones).
    fixed_precision: DVector<f64>,
}

impl<'a> Context<'a> {
    fn new(bundle: &'a DesignBundle) -> Self {
        let p = bundle.ncols();
        let mut fixed_precision = DVector::zeros(p);
        let mut pen = Vec::new();
        for block in &bundle.blocks {
            match &block.kind {
                BlockKind::Intercept => fixed_precision[block.range.start] = 1.0 / bundle.hyper.sigma_a2,
                BlockKind::Scalar => fixed_precision[block.range.start] = 1.0 / bundle.hyper.sigma_b2,
                BlockKind::Smooth { prior, .. } | BlockKind::Functional { prior, .. } => {
                    let w = block.width();
                    let matrix = prior_precision(block, bundle.centered).expect("penalized block");
                    pen.push(PenBlock {
                        start: block.range.start,
                        width: w,
                        matrix,
                        prior: *prior,
                        shape: prior.a + 0.5 * w as f64,
                    });
                }
            }
        }
        Self { bundle, ctc: bundle.c.tr_mul(&bundle.c), pen, fixed_precision }
    }

    /// `data_scale * C'C + D`.
    fn precision(&self, data_scale: f64, b_pen: &[f64]) -> DMatrix<f64> {
        let mut prec = &self.ctc * data_scale;
        for (j, v) in self.fixed_precision.iter().enumerate() {
            prec[(j, j)] += v;
        }
        for (blk, &b_q) in self.pen.iter().zip(b_pen) {
            let scale = blk.shape / b_q;
            let mut view = prec.view_mut((blk.start, blk.start), (blk.width, blk.width));
            view += &blk.matrix * scale;
        }
        prec
    }

    /// Invert a posterior precision; returns `(Sigma, ln|Sigma|)`.
    fn invert(&self, prec: DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
        let chol = match prec.clone().cholesky() {
            Some(c) => c,
            None => {
                let p = prec.nrows();
                let jitter = CHOLESKY_JITTER * prec.diagonal().mean().abs().max(1.0);
                let jittered = &prec + DMatrix::<f64>::identity(p, p) * jitter;
                jittered.cholesky().ok_or_else(|| Error::SingularPrecision(self.failing_term(&prec)))?
            }
        };
        let log_det_prec: f64 = chol.l_dirty().diagonal().iter().map(|v| 2.0 * libm::log(*v)).sum();
        Ok((chol.inverse(), -log_det_prec))
    }

    /// Name of the block holding the first column whose leading principal
    /// submatrix stops being positive definite.
    fn failing_term(&self, prec: &DMatrix<f64>) -> String {
        let p = prec.nrows();
        let k = (1..=p)
            .find(|&k| prec.view((0, 0), (k, k)).into_owned().cholesky().is_none())
            .unwrap_or(p);
        self.bundle
            .block_of_column(k - 1)
            .map(|b| b.name.clone())
            .unwrap_or_else(|| String::from("?"))
    }

    fn fixed_effect_terms(&self, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
        let h = &self.bundle.hyper;
        let mut out = 0.0;
        for block in &self.bundle.blocks {
            let var = match block.kind {
                BlockKind::Intercept => h.sigma_a2,
                BlockKind::Scalar => h.sigma_b2,
                _ => continue,
            };
            let j = block.range.start;
            out += -0.5 * libm::log(var) - (mu[j] * mu[j] + sigma[(j, j)]) / (2.0 * var);
        }
        out
    }

    fn penalty_terms(&self, mu: &DVector<f64>, sigma: &DMatrix<f64>, b_pen: &[f64]) -> Result<f64> {
        let mut out = 0.0;
        for (blk, &b_q) in self.pen.iter().zip(b_pen) {
            out += blk.bound_terms(b_q, blk.expected_quadratic(mu, sigma))?;
        }
        Ok(out)
    }

    fn update_scales(&self, mu: &DVector<f64>, sigma: &DMatrix<f64>, rule: ScaleUpdate) -> Vec<f64> {
        self.pen
            .iter()
            .map(|blk| {
                let q = match rule {
                    ScaleUpdate::Penalized => blk.expected_quadratic(mu, sigma),
                    ScaleUpdate::MeanNorm => {
                        let s = sigma.view((blk.start, blk.start), (blk.width, blk.width));
                        mu.rows(blk.start, blk.width).norm_squared() + blk.matrix.component_mul(&s).sum()
                    }
                };
                blk.prior.b + 0.5 * q
            })
            .collect()
    }

    fn check_state(&self, mu: &DVector<f64>, sigma: &DMatrix<f64>, b_pen: &[f64]) -> Result<()> {
        let p = self.bundle.ncols();
        if mu.len() != p || sigma.shape() != (p, p) {
            return Err(Error::DimensionMismatch { what: String::from("variational state"), expected: p, found: mu.len() });
        }
        if b_pen.len() != self.pen.len() {
            return Err(Error::DimensionMismatch {
                what: String::from("penalty scales"),
                expected: self.pen.len(),
                found: b_pen.len(),
            });
        }
        if b_pen.iter().any(|&b| !(b > 0.0)) {
            return Err(Error::InvalidArgument(String::from("penalty scales must be positive")));
        }
        Ok(())
    }

    fn trace_ctc_sigma(&self, sigma: &DMatrix<f64>) -> f64 {
        self.ctc.component_mul(sigma).sum()
    }

    fn gaussian_elbo(&self, y: &DVector<f64>, state: &GaussianState, log_det_sigma: f64) -> Result<f64> {
        let n = y.len() as f64;
        let d = self.bundle.ncols() as f64;
        let prior = self.bundle.hyper.error;
        let shape = error_shape(self.bundle);
        let b_e = state.b_sigma2;
        let resid = y - &self.bundle.c * &state.mu;
        let expected_sq = resid.norm_squared() + self.trace_ctc_sigma(&state.sigma);
        let noise = prior.a * libm::log(prior.b) - shape * libm::log(b_e) + log_gamma(shape)? - log_gamma(prior.a)?
            + shape / b_e * (b_e - prior.b - 0.5 * expected_sq);
        Ok(0.5 * d - 0.5 * n * LN_2PI
            + 0.5 * log_det_sigma
            + self.fixed_effect_terms(&state.mu, &state.sigma)
            + noise
            + self.penalty_terms(&state.mu, &state.sigma, &state.b_pen)?)
    }

    fn probit_elbo(&self, y: &DVector<f64>, state: &ProbitState, log_det_sigma: f64) -> Result<f64> {
        let d = self.bundle.ncols() as f64;
        let fitted = &self.bundle.c * &state.mu;
        let mut lik = 0.0;
        for i in 0..y.len() {
            let m = state.latent_location[i];
            let gap = m - fitted[i];
            let (log_z, shift) = if y[i] > 0.5 {
                (log_std_normal_cdf(m), inverse_mills(m, Tail::Upper))
            } else {
                (log_std_normal_cdf(-m), -inverse_mills(m, Tail::Lower))
            };
            lik += log_z - shift * gap - 0.5 * gap * gap;
        }
        lik -= 0.5 * self.trace_ctc_sigma(&state.sigma);
        Ok(lik + 0.5 * d + 0.5 * log_det_sigma
            + self.fixed_effect_terms(&state.mu, &state.sigma)
            + self.penalty_terms(&state.mu, &state.sigma, &state.b_pen)?)
    }
}

fn log_det_spd(sigma: &DMatrix<f64>) -> Result<f64> {
    let chol = sigma.clone().cholesky().ok_or(Error::NotPositiveDefinite("Sigma_q(theta)"))?;
    Ok(chol.l_dirty().diagonal().iter().map(|v| 2.0 * libm::log(*v)).sum())
}

/// Lower bound `log p(Y; q)` of the Gaussian model at an arbitrary state.
pub fn elbo_gaussian(bundle: &DesignBundle, y: &DVector<f64>, state: &GaussianState) -> Result<f64> {
    let ctx = Context::new(bundle);
    ctx.check_state(&state.mu, &state.sigma, &state.b_pen)?;
    if !(state.b_sigma2 > 0.0) {
        return Err(Error::Domain { what: "B_q(sigma^2) must be positive", value: state.b_sigma2 });
    }
    let log_det = log_det_spd(&state.sigma)?;
    ctx.gaussian_elbo(y, state, log_det)
}

/// Lower bound of the probit model at an arbitrary state.
pub fn elbo_probit(bundle: &DesignBundle, y: &DVector<f64>, state: &ProbitState) -> Result<f64> {
    let ctx = Context::new(bundle);
    ctx.check_state(&state.mu, &state.sigma, &state.b_pen)?;
    let log_det = log_det_spd(&state.sigma)?;
    ctx.probit_elbo(y, state, log_det)
}

/// `E_q[Y*]` for latent locations `eta`: `eta + phi/Phi` where `y = 1` and
/// `eta - phi/(1 - Phi)` where `y = 0`.
pub fn latent_means(eta: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(eta.len(), |i, _| {
        if y[i] > 0.5 {
            eta[i] + inverse_mills(eta[i], Tail::Upper)
        } else {
            eta[i] - inverse_mills(eta[i], Tail::Lower)
        }
    })
}

fn check_response(bundle: &DesignBundle, y: &DVector<f64>) -> Result<()> {
    if y.len() != bundle.nrows() {
        return Err(Error::DimensionMismatch { what: String::from("response"), expected: bundle.nrows(), found: y.len() });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(String::from("response")));
    }
    for block in &bundle.blocks {
        let cols = bundle.c.columns(block.range.start, block.width());
        if cols.iter().all(|&v| v == 0.0) {
            return Err(Error::SingularPrecision(block.name.clone()));
        }
    }
    Ok(())
}

fn split_scales(bundle: &DesignBundle, b_pen: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut omega = Vec::new();
    let mut eta = Vec::new();
    for (block, &b) in bundle.penalized_blocks().zip(b_pen) {
        match block.kind {
            BlockKind::Smooth { .. } => omega.push(b),
            _ => eta.push(b),
        }
    }
    (omega, eta)
}

fn size_warnings(bundle: &DesignBundle) -> Vec<String> {
    let mut w = Vec::new();
    if bundle.nrows() <= bundle.ncols() {
        w.push(format!(
            "only {} observations for {} coefficients",
            bundle.nrows(),
            bundle.ncols()
        ));
    }
    w
}

/// Fit with the engine matching `bundle.family`.
pub fn fit(bundle: &DesignBundle, y: &DVector<f64>, control: &FitControl) -> Result<VariationalFit> {
    match bundle.family {
        Family::Gaussian => fit_gaussian(bundle, y, control),
        Family::Probit => fit_probit(bundle, y, control),
    }
}

/// Coordinate ascent for the Gaussian additive model.
///
/// Each sweep updates `q(theta)`, then `B_q(sigma^2)`, then the penalty
/// scales, and records the bound. After the last sweep `q(theta)` is
/// recomputed once from the final scales so that the returned mean is
/// exactly `tau * Sigma * C'Y` for the returned `B_q(sigma^2)`.
pub fn fit_gaussian(bundle: &DesignBundle, y: &DVector<f64>, control: &FitControl) -> Result<VariationalFit> {
    control.validate()?;
    check_response(bundle, y)?;
    let ctx = Context::new(bundle);
    let prior = bundle.hyper.error;
    let shape = error_shape(bundle);
    let cty = bundle.c.tr_mul(y);

    let mut b_sigma2 = control.b_init;
    let mut b_pen = vec![control.b_init; ctx.pen.len()];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..control.max_iter {
        iterations += 1;
        let tau = shape / b_sigma2;
        let (sigma, log_det) = ctx.invert(ctx.precision(tau, &b_pen))?;
        let mu = &sigma * &cty * tau;

        let resid = y - &bundle.c * &mu;
        b_sigma2 = prior.b + 0.5 * (resid.norm_squared() + ctx.trace_ctc_sigma(&sigma));
        b_pen = ctx.update_scales(&mu, &sigma, control.scale_update);

        let state = GaussianState { mu, sigma, b_sigma2, b_pen: b_pen.clone() };
        let elbo = ctx.gaussian_elbo(y, &state, log_det)?;
        if !elbo.is_finite() {
            return Err(Error::NonFinite(String::from("lower bound")));
        }
        let done = trace.last().is_some_and(|prev: &f64| (elbo - prev).abs() < control.tol);
        trace.push(elbo);
        if done {
            converged = true;
            break;
        }
    }

    let tau = shape / b_sigma2;
    let (sigma, _) = ctx.invert(ctx.precision(tau, &b_pen))?;
    let mu = &sigma * &cty * tau;
    let (b_omega, b_eta) = split_scales(bundle, &b_pen);
    Ok(VariationalFit {
        family: Family::Gaussian,
        mu_theta: mu,
        sigma_theta: sigma,
        b_sigma2: Some(b_sigma2),
        b_omega,
        b_eta,
        mu_ystar: None,
        elbo_trace: trace,
        iterations,
        converged,
        warnings: size_warnings(bundle),
    })
}

/// Coordinate ascent for the probit model with truncated-normal latent factors.
///
/// Each sweep updates `q(theta)` from the current latent means, then the
/// latent factors from `eta = C mu`, then the penalty scales. The returned
/// mean is recomputed from the final latent means and scales, so that it is
/// exactly `Sigma * C' E[Y*]`.
pub fn fit_probit(bundle: &DesignBundle, y: &DVector<f64>, control: &FitControl) -> Result<VariationalFit> {
    control.validate()?;
    check_response(bundle, y)?;
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument(String::from("probit response must be coded 0/1")));
    }
    let ctx = Context::new(bundle);
    let mut warnings = size_warnings(bundle);
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == y.len() {
        warnings.push(String::from("response has a single class"));
    }

    let mut mu_ystar = DVector::zeros(y.len());
    let mut b_pen = vec![control.b_init; ctx.pen.len()];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut eta = DVector::zeros(y.len());

    for _ in 0..control.max_iter {
        iterations += 1;
        let (sigma, log_det) = ctx.invert(ctx.precision(1.0, &b_pen))?;
        let driver = match control.probit_mean {
            ProbitMean::LatentMean => &mu_ystar,
            ProbitMean::Observed => y,
        };
        let mu = &sigma * bundle.c.tr_mul(driver);
        eta = &bundle.c * &mu;
        mu_ystar = latent_means(&eta, y);
        b_pen = ctx.update_scales(&mu, &sigma, control.scale_update);

        let state = ProbitState { mu, sigma, latent_location: eta.clone(), b_pen: b_pen.clone() };
        let elbo = ctx.probit_elbo(y, &state, log_det)?;
        if !elbo.is_finite() {
            return Err(Error::NonFinite(String::from("lower bound")));
        }
        let done = trace.last().is_some_and(|prev: &f64| (elbo - prev).abs() < control.tol);
        trace.push(elbo);
        if done {
            converged = true;
            break;
        }
    }

    if !converged && y.iter().zip(eta.iter()).all(|(&yi, &e)| (yi == 1.0) == (e >= 0.0)) {
        warnings.push(String::from("linear predictor separates the classes; complete separation suspected"));
    }

    let (sigma, _) = ctx.invert(ctx.precision(1.0, &b_pen))?;
    let driver = match control.probit_mean {
        ProbitMean::LatentMean => &mu_ystar,
        ProbitMean::Observed => y,
    };
    let mu = &sigma * bundle.c.tr_mul(driver);
    let (b_omega, b_eta) = split_scales(bundle, &b_pen);
    Ok(VariationalFit {
        family: Family::Probit,
        mu_theta: mu,
        sigma_theta: sigma,
        b_sigma2: None,
        b_omega,
        b_eta,
        mu_ystar: Some(mu_ystar),
        elbo_trace: trace,
        iterations,
        converged,
        warnings,
    })
}

/// Estimated curve of a smooth or functional term on `grid` with pointwise
/// posterior standard deviations.
pub fn extract_curve(fit: &VariationalFit, bundle: &DesignBundle, term: &str, grid: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let block = bundle.block(term)?;
    let rows = block.curve_rows(grid)?;
    let estimate = &rows * fit.block_mean(block);
    let cov = fit.block_cov(block);
    let rc = &rows * cov;
    let sd = (0..grid.len())
        .map(|i| libm::sqrt(rc.row(i).dot(&rows.row(i)).max(0.0)))
        .collect();
    Ok((estimate.iter().copied().collect(), sd))
}
