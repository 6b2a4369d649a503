//! Variational global test of `H0: f = 0` for a single smooth or functional
//! term.
//!
//! The fitted curve is linear in the working response `r` (`Y` or `E[Y*]`):
//! `f_hat(x) = c(x)' r`. The statistic `G = ∫ f_hat(x)^2 dx = r' U r` with
//! `U = ∫ c(x) c(x)' dx` is a quadratic form whose null distribution is
//! approximated by a scaled chi-square `kappa * chi2(nu)` matched on the
//! first two moments under `r ~ (0, V)`.
//!
//! `U` is never formed in the main route: with `c(x) = A' phi(x)` the
//! statistic, mean and variance reduce to `w x w` products where `w` is the
//! block width. [`build_u`] forms the `n x n` matrix explicitly for checking.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::basis::trapezoid_weights;
use crate::cavi::VariationalFit;
use crate::design::{Block, DesignBundle, Family};
use crate::error::{Error, Result};
use crate::numerics::{chisq_sf, std_normal_cdf, std_normal_pdf, ChiSqParams};

/// Which rows of `Sigma_q(theta)` enter the linear map from the response to
/// the block coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CForm {
    /// `Sigma[block, :] C'`: the exact map to the fitted block mean.
    #[default]
    FullRow,
    /// `Sigma[block, block] C_block'`: ignores cross-covariances.
    PrincipalSubmatrix,
}

/// Covariance of the working response under the null.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum CovarianceChoice {
    /// `sigma2_hat * I` for the Gaussian model, `I` for the probit latent scale.
    #[default]
    Auto,
    /// Probit working variance `Phi(eta)(1 - Phi(eta)) / phi(eta)^2` at the
    /// fitted linear predictor; `sigma2_hat * I` for the Gaussian model.
    Working,
    /// Explicit `n x n` covariance.
    Supplied(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ZlsOptions {
    pub c_form: CForm,
    pub covariance: CovarianceChoice,
    /// Integration grid; defaults to the block's evaluation grid.
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ZlsResult {
    pub term: String,
    pub statistic: f64,
    pub kappa: f64,
    pub nu: f64,
    pub p_value: f64,
    /// `tr(U V)`.
    pub e_mean: f64,
    /// `2 tr(U V U V)`.
    pub psi_var: f64,
    pub grid_size: usize,
}

impl ZlsResult {
    pub fn reject(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Moment-matched scaled chi-square: `kappa * nu = e`, `2 kappa^2 nu = psi`.
pub fn satterthwaite(e_mean: f64, psi_var: f64) -> Result<ChiSqParams> {
    if !(e_mean > 0.0) || !(psi_var > 0.0) || !e_mean.is_finite() || !psi_var.is_finite() {
        return Err(Error::DegenerateTest(alloc::format!(
            "null moments must be positive (mean {e_mean}, variance {psi_var})"
        )));
    }
    ChiSqParams::new(psi_var / (2.0 * e_mean), 2.0 * e_mean * e_mean / psi_var)
}

struct TestMap<'a> {
    block: &'a Block,
    /// `w x n`: block coefficient mean as a linear map of the working response.
    a: DMatrix<f64>,
    grid: Vec<f64>,
    /// `Phi' diag(weights) Phi`, `w x w`.
    gram: DMatrix<f64>,
}

fn penalized_block<'a>(fit: &VariationalFit, bundle: &'a DesignBundle, term: &str) -> Result<&'a Block> {
    let block = bundle.block(term)?;
    if !block.is_penalized() {
        return Err(Error::WrongTermKind {
            term: String::from(term),
            expected: "smooth or functional",
            found: block.kind.label(),
        });
    }
    if fit.mu_theta.len() != bundle.ncols() {
        return Err(Error::DimensionMismatch { what: String::from("fit"), expected: bundle.ncols(), found: fit.mu_theta.len() });
    }
    Ok(block)
}

/// `w x n` map from the working response to the block coefficient mean.
fn response_map(fit: &VariationalFit, bundle: &DesignBundle, block: &Block, c_form: CForm) -> DMatrix<f64> {
    let (s, w) = (block.range.start, block.width());
    let scale = fit.data_precision(bundle);
    match c_form {
        CForm::FullRow => fit.sigma_theta.rows(s, w) * bundle.c.transpose() * scale,
        CForm::PrincipalSubmatrix => fit.sigma_theta.view((s, s), (w, w)) * bundle.c.columns(s, w).transpose() * scale,
    }
}

impl<'a> TestMap<'a> {
    fn new(fit: &VariationalFit, bundle: &'a DesignBundle, term: &str, c_form: CForm, grid: Option<&[f64]>) -> Result<Self> {
        let block = penalized_block(fit, bundle, term)?;
        let grid = match grid {
            Some(g) => g.to_vec(),
            None => block.default_eval_grid().ok_or_else(|| Error::DegenerateTest(String::from("no evaluation grid")))?,
        };
        if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(String::from("test grid must be strictly increasing with at least 2 points")));
        }
        let a = response_map(fit, bundle, block, c_form);
        let rows = block.curve_rows(&grid)?;
        let weights = trapezoid_weights(&grid);
        let mut weighted = rows.clone();
        for (mut r, wt) in weighted.row_iter_mut().zip(&weights) {
            r *= *wt;
        }
        let gram = rows.tr_mul(&weighted);
        Ok(Self { block, a, grid, gram })
    }

    fn null_covariance(&self, fit: &VariationalFit, bundle: &DesignBundle, choice: &CovarianceChoice) -> Result<DMatrix<f64>> {
        match choice {
            CovarianceChoice::Auto => {
                let v = match bundle.family {
                    Family::Gaussian => fit.sigma2_hat(bundle),
                    Family::Probit => 1.0,
                };
                Ok(&self.a * self.a.transpose() * v)
            }
            CovarianceChoice::Working => {
                if bundle.family == Family::Gaussian {
                    return Ok(&self.a * self.a.transpose() * fit.sigma2_hat(bundle));
                }
                let eta = &bundle.c * &fit.mu_theta;
                let mut scaled = self.a.clone();
                for (mut col, &e) in scaled.column_iter_mut().zip(eta.iter()) {
                    let p = std_normal_cdf(e);
                    let d = std_normal_pdf(e);
                    col *= (p * (1.0 - p)).max(f64::MIN_POSITIVE) / (d * d).max(f64::MIN_POSITIVE);
                }
                Ok(scaled * self.a.transpose())
            }
            CovarianceChoice::Supplied(v) => {
                let n = bundle.nrows();
                if v.shape() != (n, n) {
                    return Err(Error::DimensionMismatch { what: String::from("response covariance"), expected: n, found: v.nrows() });
                }
                Ok(&self.a * v * self.a.transpose())
            }
        }
    }
}

/// Global test for one penalized term of a fitted model.
pub fn zls_test(
    fit: &VariationalFit,
    bundle: &DesignBundle,
    y: &DVector<f64>,
    term: &str,
    options: &ZlsOptions,
) -> Result<ZlsResult> {
    if y.len() != bundle.nrows() {
        return Err(Error::DimensionMismatch { what: String::from("response"), expected: bundle.nrows(), found: y.len() });
    }
    let map = TestMap::new(fit, bundle, term, options.c_form, options.grid.as_deref())?;
    let r = fit.working_response(y);
    let coef = &map.a * r;
    let statistic = (coef.transpose() * &map.gram * &coef)[(0, 0)];

    let s = map.null_covariance(fit, bundle, &options.covariance)?;
    let ms = &map.gram * s;
    let e_mean = ms.trace();
    // tr(MS MS) = sum_ij (MS)_ij (MS)_ji
    let psi_var = 2.0 * ms.component_mul(&ms.transpose()).sum();
    let params = satterthwaite(e_mean, psi_var)?;
    let p_value = chisq_sf(statistic.max(0.0) / params.kappa, params.nu)?;
    Ok(ZlsResult {
        term: map.block.name.clone(),
        statistic,
        kappa: params.kappa,
        nu: params.nu,
        p_value,
        e_mean,
        psi_var,
        grid_size: map.grid.len(),
    })
}

/// Test every smooth and functional term of the model in design order.
pub fn zls_test_all(fit: &VariationalFit, bundle: &DesignBundle, y: &DVector<f64>, options: &ZlsOptions) -> Result<Vec<ZlsResult>> {
    bundle
        .penalized_blocks()
        .map(|b| zls_test(fit, bundle, y, &b.name, options))
        .collect()
}

/// Weight vector `c(x)` with `f_hat(x) = c(x)' r`, one column per point.
pub fn c_vectors(fit: &VariationalFit, bundle: &DesignBundle, term: &str, points: &[f64], c_form: CForm) -> Result<DMatrix<f64>> {
    let block = penalized_block(fit, bundle, term)?;
    let rows = block.curve_rows(points)?;
    Ok(response_map(fit, bundle, block, c_form).tr_mul(&rows.transpose()))
}

/// Explicit `n x n` matrix `U = sum_g w_g c(x_g) c(x_g)'`.
pub fn build_u(fit: &VariationalFit, bundle: &DesignBundle, term: &str, options: &ZlsOptions) -> Result<DMatrix<f64>> {
    let map = TestMap::new(fit, bundle, term, options.c_form, options.grid.as_deref())?;
    let cs = c_vectors(fit, bundle, term, &map.grid, options.c_form)?;
    let weights = trapezoid_weights(&map.grid);
    let mut weighted = cs.clone();
    for (mut col, wt) in weighted.column_iter_mut().zip(&weights) {
        col *= *wt;
    }
    Ok(weighted * cs.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavi::{extract_curve, fit, FitControl};
    use crate::design::{build_design, DesignData, ModelSpec};
    use alloc::vec;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn fixture(n: usize, seed: u64, signal: f64, shift: (f64, f64)) -> (DesignBundle, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y = DVector::from_fn(n, |i, _| {
            let e: f64 = StandardNormal.sample(&mut rng);
            0.5 * x[i] + signal * libm::sin(2.0 * z[i]) + e
        });
        let z: Vec<f64> = z.iter().map(|v| shift.0 * v + shift.1).collect();
        let spec = ModelSpec::new(Family::Gaussian).with_scalar("x").with_smooth("z", 8);
        let data = DesignData { scalar: DMatrix::from_column_slice(n, 1, &x), smooth: vec![z], functional: vec![] };
        (build_design(&spec, &data).unwrap(), y)
    }

    fn functional_fixture(n: usize, seed: u64) -> (DesignBundle, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = 30;
        let grid: Vec<f64> = (0..t).map(|j| j as f64 / (t - 1) as f64).collect();
        let w = DMatrix::from_fn(n, t, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(n, |i, _| {
            let e: f64 = StandardNormal.sample(&mut rng);
            (0..t).map(|j| w[(i, j)] * libm::sin(6.0 * grid[j])).sum::<f64>() / t as f64 + e
        });
        let spec = ModelSpec::new(Family::Probit).with_functional("w", 7, grid);
        let data = DesignData { scalar: DMatrix::zeros(n, 0), smooth: vec![], functional: vec![w] };
        let yb = y.map(|v| if v >= 0.0 { 1.0 } else { 0.0 });
        (build_design(&spec, &data).unwrap(), yb)
    }

    #[test]
    fn linear_reconstruction_matches_fitted_curve() {
        let (bundle, y) = fixture(120, 1, 1.0, (1.0, 0.0));
        let f = fit(&bundle, &y, &FitControl::default()).unwrap();
        let grid = bundle.block("z").unwrap().default_eval_grid().unwrap();
        let (est, _) = extract_curve(&f, &bundle, "z", &grid).unwrap();
        let cs = c_vectors(&f, &bundle, "z", &grid, CForm::FullRow).unwrap();
        let recon = cs.transpose() * &y;
        for (a, b) in recon.iter().zip(&est) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn probit_reconstruction_uses_latent_means() {
        let (bundle, y) = functional_fixture(100, 3);
        let f = fit(&bundle, &y, &FitControl::default()).unwrap();
        let grid = bundle.block("w").unwrap().default_eval_grid().unwrap();
        let (est, _) = extract_curve(&f, &bundle, "w", &grid).unwrap();
        let cs = c_vectors(&f, &bundle, "w", &grid, CForm::FullRow).unwrap();
        let recon = cs.transpose() * f.mu_ystar.as_ref().unwrap();
        for (a, b) in recon.iter().zip(&est) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn explicit_u_route_agrees() {
        let (bundle, y) = fixture(80, 2, 0.7, (1.0, 0.0));
        let f = fit(&bundle, &y, &FitControl::default()).unwrap();
        let opts = ZlsOptions::default();
        let res = zls_test(&f, &bundle, &y, "z", &opts).unwrap();
        let u = build_u(&f, &bundle, "z", &opts).unwrap();
        let g = (y.transpose() * &u * &y)[(0, 0)];
        assert!((g - res.statistic).abs() < 1e-9 * res.statistic.max(1.0));
        let v = f.sigma2_hat(&bundle);
        let uv = &u * v;
        assert!((uv.trace() - res.e_mean).abs() < 1e-9 * res.e_mean);
        assert!(((&uv * &uv).trace() * 2.0 - res.psi_var).abs() < 1e-9 * res.psi_var);

        let eig = nalgebra::SymmetricEigen::new(u.clone()).eigenvalues;
        let top = eig.amax();
        assert!(eig.iter().all(|&l| l >= -1e-10 * top));
        assert!((u.clone() - u.transpose()).amax() < 1e-12 * top);
    }

    #[test]
    fn supplied_scaled_identity_matches_auto() {
        let (bundle, y) = fixture(60, 9, 0.5, (1.0, 0.0));
        let f = fit(&bundle, &y, &FitControl::default()).unwrap();
        let auto = zls_test(&f, &bundle, &y, "z", &ZlsOptions::default()).unwrap();
        let v = DMatrix::<f64>::identity(60, 60) * f.sigma2_hat(&bundle);
        let opts = ZlsOptions { covariance: CovarianceChoice::Supplied(v), ..ZlsOptions::default() };
        let sup = zls_test(&f, &bundle, &y, "z", &opts).unwrap();
        assert!((auto.p_value - sup.p_value).abs() < 1e-10);
    }

    #[test]
    fn zero_response_gives_zero_statistic() {
        let (bundle, _) = fixture(50, 3, 0.0, (1.0, 0.0));
        let y = DVector::zeros(50);
        let f = fit(&bundle, &y, &FitControl::default()).unwrap();
        let res = zls_test(&f, &bundle, &y, "z", &ZlsOptions::default()).unwrap();
        assert_eq!(res.statistic, 0.0);
        assert_eq!(res.p_value, 1.0);
    }

    #[test]
    fn moment_identities() {
        let (bundle, y) = fixture(90, 4, 0.3, (1.0, 0.0));
        let f = fit(&bundle, &y, &FitControl::default()).unwrap();
        let r = zls_test(&f, &bundle, &y, "z", &ZlsOptions::default()).unwrap();
        assert!((r.kappa * r.nu - r.e_mean).abs() < 1e-12 * r.e_mean);
        assert!((2.0 * r.kappa * r.kappa * r.nu - r.psi_var).abs() < 1e-12 * r.psi_var);
        assert!((0.0..=1.0).contains(&r.p_value));
    }

    #[test]
    fn grid_refinement_is_stable() {
        let (bundle, y) = fixture(100, 6, 0.5, (1.0, 0.0));
        let f = fit(&bundle, &y, &FitControl::default()).unwrap();
        let (lo, hi) = bundle.block("z").unwrap().covariate_range.unwrap();
        let grid = |m: usize| (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect::<Vec<_>>();
        let coarse = zls_test(&f, &bundle, &y, "z", &ZlsOptions { grid: Some(grid(201)), ..Default::default() }).unwrap();
        let fine = zls_test(&f, &bundle, &y, "z", &ZlsOptions { grid: Some(grid(401)), ..Default::default() }).unwrap();
        assert!((coarse.statistic - fine.statistic).abs() < 1e-3 * fine.statistic);
        assert!((coarse.p_value - fine.p_value).abs() < 1e-3 * fine.p_value.max(1e-12));
    }

    #[test]
    fn affine_covariate_change_leaves_p_value() {
        let (b1, y) = fixture(100, 12, 0.4, (1.0, 0.0));
        let (b2, _) = fixture(100, 12, 0.4, (2.0, 1.0));
        let f1 = fit(&b1, &y, &FitControl::default()).unwrap();
        let f2 = fit(&b2, &y, &FitControl::default()).unwrap();
        let r1 = zls_test(&f1, &b1, &y, "z", &ZlsOptions::default()).unwrap();
        let r2 = zls_test(&f2, &b2, &y, "z", &ZlsOptions::default()).unwrap();
        assert!((r1.p_value - r2.p_value).abs() < 1e-6, "{} vs {}", r1.p_value, r2.p_value);
        assert!((r2.statistic / r1.statistic - 2.0).abs() < 1e-5);
    }

    #[test]
    fn principal_submatrix_form_runs() {
        let (bundle, y) = fixture(70, 7, 1.0, (1.0, 0.0));
        let f = fit(&bundle, &y, &FitControl::default()).unwrap();
        let opts = ZlsOptions { c_form: CForm::PrincipalSubmatrix, ..Default::default() };
        let r = zls_test(&f, &bundle, &y, "z", &opts).unwrap();
        assert!(r.p_value < 0.05);
    }

    #[test]
    fn unpenalized_terms_are_rejected() {
        let (bundle, y) = fixture(40, 1, 0.0, (1.0, 0.0));
        let f = fit(&bundle, &y, &FitControl::default()).unwrap();
        assert!(matches!(zls_test(&f, &bundle, &y, "x", &ZlsOptions::default()), Err(Error::WrongTermKind { .. })));
        assert!(matches!(zls_test(&f, &bundle, &y, "q", &ZlsOptions::default()), Err(Error::UnknownTerm(_))));
        assert!(satterthwaite(0.0, 1.0).is_err());
    }
}
