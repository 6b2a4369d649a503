//! Data-generating processes of the simulation study and a sequential
//! Monte-Carlo runner.
//!
//! Every replication draws from its own ChaCha stream (`seed`, stream =
//! replication index), so a replication's data does not depend on which
//! worker runs it or in what order. Parallel drivers call
//! [`run_replication`] and [`aggregate`] directly.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cavi::{fit, FitControl};
use crate::design::{build_design, DesignBundle, DesignData, Family, ModelSpec};
use crate::error::{Error, Result};
use crate::numerics::std_normal_cdf;
use crate::zls::{zls_test, ZlsOptions};

/// Correlation of neighbouring grid points in the functional covariates.
pub const AR1_RHO: f64 = 0.5;
/// Iteration budget for simulation fits. Probit fits with strong functional
/// signals creep towards a weakly penalized optimum and can need several
/// thousand sweeps to meet the tolerance.
pub const SIM_MAX_ITER: usize = 10_000;
/// Fraction of failed replications above which a report is flagged.
pub const FAILURE_FLAG_FRACTION: f64 = 0.05;

pub const SMOOTH_TERM: &str = "z";
pub const FUNCTIONAL_TERM: &str = "w";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Effect {
    /// `-Phi((z - 0.5) / 0.5)`, `z ~ N(0, 1)`.
    SmoothPhi,
    /// Gamma(2, 2) density `4 z exp(-2z)`, `z ~ chi2(1)`.
    SmoothGamma,
    /// Sum of two Gaussian bumps at 1/4 and 3/4.
    FuncTwopeak,
    /// Damped sine curve.
    FuncSeasonal,
}

impl Effect {
    pub const ALL: [Effect; 4] = [Effect::SmoothPhi, Effect::SmoothGamma, Effect::FuncTwopeak, Effect::FuncSeasonal];

    pub fn is_functional(self) -> bool {
        matches!(self, Effect::FuncTwopeak | Effect::FuncSeasonal)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Effect::SmoothPhi => "smooth_phi",
            Effect::SmoothGamma => "smooth_gamma",
            Effect::FuncTwopeak => "func_twopeak",
            Effect::FuncSeasonal => "func_seasonal",
        }
    }

    /// Term tested by the study.
    pub fn term(self) -> &'static str {
        if self.is_functional() {
            FUNCTIONAL_TERM
        } else {
            SMOOTH_TERM
        }
    }
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Effect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Effect::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown effect '{s}'")))
    }
}

/// `s(z) = -Phi((z - 0.5) / 0.5)`.
pub fn gen_smooth_phi(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| -std_normal_cdf((v - 0.5) / 0.5)).collect()
}

/// `s(z) = 4 z exp(-2 z)`, the Gamma(shape 2, rate 2) density.
pub fn gen_smooth_gamma(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| 4.0 * v * libm::exp(-2.0 * v)).collect()
}

pub fn gen_func_twopeak(grid: &[f64]) -> Vec<f64> {
    let c = libm::sqrt(100.0 / (2.0 * core::f64::consts::PI));
    grid.iter()
        .map(|&t| {
            0.25 * c * libm::exp(-50.0 * (t - 0.25) * (t - 0.25)) + 0.125 * c * libm::exp(-50.0 * (t - 0.75) * (t - 0.75))
        })
        .collect()
}

pub fn gen_func_seasonal(grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .map(|&t| libm::sin(core::f64::consts::PI * (4.0 * t - 1.0)) * (t + 1222.0 / 10000.0))
        .collect()
}

/// `n` independent curves on `grid` with mean `center` and stationary AR(1)
/// covariance `rho^|j-k|` across grid indices.
pub fn gen_gp_ar1<R: Rng + ?Sized>(n: usize, center: &[f64], rho: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Domain { what: "AR(1) correlation must lie in (-1, 1)", value: rho });
    }
    let t = center.len();
    let innov = libm::sqrt(1.0 - rho * rho);
    let mut out = DMatrix::zeros(n, t);
    for i in 0..n {
        let mut prev = 0.0;
        for j in 0..t {
            let e: f64 = StandardNormal.sample(rng);
            prev = if j == 0 { e } else { rho * prev + innov * e };
            out[(i, j)] = center[j] + prev;
        }
    }
    Ok(out)
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Knot counts that worked well for each regime of the study.
pub fn knot_default(family: Family, effect: Effect, n: usize, t: usize) -> usize {
    match (family, effect.is_functional()) {
        (Family::Gaussian, false) => 8,
        (Family::Gaussian, true) => 12,
        (Family::Probit, false) => {
            if n >= 100 {
                6
            } else {
                4
            }
        }
        (Family::Probit, true) => match (n >= 100, t) {
            (true, _) => 9,
            (false, t) if t >= 100 => 7,
            _ => 6,
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimScenario {
    pub family: Family,
    pub effect: Effect,
    pub n: usize,
    /// Functional grid length; ignored for smooth effects.
    pub t: usize,
    /// Multiplier on the true curve; 0 is the null.
    pub xi_scale: f64,
    pub knots: usize,
    pub replications: usize,
    pub seed: u64,
    pub alpha_level: f64,
}

impl SimScenario {
    /// Scenario with the default knots, `T = 50`, 1000 replications, seed 1
    /// and level 0.05.
    pub fn new(family: Family, effect: Effect, n: usize, xi_scale: f64) -> Self {
        let t = 50;
        Self {
            family,
            effect,
            n,
            t,
            xi_scale,
            knots: knot_default(family, effect, n, t),
            replications: 1000,
            seed: 1,
            alpha_level: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::InvalidArgument(format!("sample size {} too small", self.n)));
        }
        if self.effect.is_functional() && self.t < 4 {
            return Err(Error::InvalidArgument(format!("functional grid length {} too small", self.t)));
        }
        if self.knots < 4 {
            return Err(Error::InvalidArgument(format!("need at least 4 basis functions, got {}", self.knots)));
        }
        if self.replications == 0 {
            return Err(Error::InvalidArgument(String::from("replications must be positive")));
        }
        if !(self.xi_scale >= 0.0) || !self.xi_scale.is_finite() {
            return Err(Error::Domain { what: "effect scale must be non-negative", value: self.xi_scale });
        }
        if !(self.alpha_level > 0.0 && self.alpha_level < 1.0) {
            return Err(Error::Domain { what: "alpha level must lie in (0, 1)", value: self.alpha_level });
        }
        Ok(())
    }

    /// Short label such as `probit/func_twopeak/N=200/T=50/xi=1/knots=9`.
    pub fn label(&self) -> String {
        let mut s = format!("{}/{}/N={}", family_str(self.family), self.effect, self.n);
        if self.effect.is_functional() {
            s.push_str(&format!("/T={}", self.t));
        }
        s.push_str(&format!("/xi={}/knots={}", self.xi_scale, self.knots));
        s
    }

    pub fn model_spec(&self) -> ModelSpec {
        let spec = ModelSpec::new(self.family);
        if self.effect.is_functional() {
            spec.with_functional(FUNCTIONAL_TERM, self.knots, linspace(0.0, 1.0, self.t))
        } else {
            spec.with_smooth(SMOOTH_TERM, self.knots)
        }
    }

    /// Random stream of replication `rep`.
    pub fn rng_for(&self, rep: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(rep);
        rng
    }
}

fn family_str(f: Family) -> &'static str {
    match f {
        Family::Gaussian => "gaussian",
        Family::Probit => "probit",
    }
}

/// One simulated data set: covariates, the noiseless signal and the response.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub data: DesignData,
    pub signal: DVector<f64>,
    pub y: DVector<f64>,
}

/// Draw covariates and a response for `sc` from `rng`.
///
/// Smooth effects add `xi * s(z)`. Functional effects add
/// `xi * sum_j w(t_j) gamma(t_j)`, the integral taken as a plain sum over the
/// grid (unit spacing); the covariate curves are centered at the unscaled
/// `gamma`. Gaussian responses get `N(0, 1)` noise; probit responses
/// threshold the noisy latent value at 0.
pub fn simulate_dataset<R: Rng + ?Sized>(sc: &SimScenario, rng: &mut R) -> Result<SimDataset> {
    let n = sc.n;
    let (data, signal) = match sc.effect {
        Effect::SmoothPhi | Effect::SmoothGamma => {
            let z: Vec<f64> = (0..n)
                .map(|_| {
                    let u: f64 = StandardNormal.sample(rng);
                    if sc.effect == Effect::SmoothGamma {
                        u * u
                    } else {
                        u
                    }
                })
                .collect();
            let curve = if sc.effect == Effect::SmoothGamma { gen_smooth_gamma(&z) } else { gen_smooth_phi(&z) };
            let signal = DVector::from_iterator(n, curve.into_iter().map(|v| sc.xi_scale * v));
            let data = DesignData { scalar: DMatrix::zeros(n, 0), smooth: alloc::vec![z], functional: Vec::new() };
            (data, signal)
        }
        Effect::FuncTwopeak | Effect::FuncSeasonal => {
            let grid = linspace(0.0, 1.0, sc.t);
            let gamma = if sc.effect == Effect::FuncTwopeak { gen_func_twopeak(&grid) } else { gen_func_seasonal(&grid) };
            let w = gen_gp_ar1(n, &gamma, AR1_RHO, rng)?;
            let coef: Vec<f64> = gamma.iter().map(|g| sc.xi_scale * g).collect();
            let signal = DVector::from_fn(n, |i, _| w.row(i).iter().zip(&coef).map(|(a, b)| a * b).sum());
            let data = DesignData { scalar: DMatrix::zeros(n, 0), smooth: Vec::new(), functional: alloc::vec![w] };
            (data, signal)
        }
    };
    let y = DVector::from_fn(n, |i, _| {
        let e: f64 = StandardNormal.sample(rng);
        let latent = signal[i] + e;
        match sc.family {
            Family::Gaussian => latent,
            Family::Probit => {
                if latent >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    });
    Ok(SimDataset { data, signal, y })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RepOutcome {
    Tested { p_value: f64 },
    NotConverged,
    Failed(String),
}

impl RepOutcome {
    pub fn p_value(&self) -> Option<f64> {
        match self {
            RepOutcome::Tested { p_value } => Some(*p_value),
            _ => None,
        }
    }
}

/// Fit settings used by the simulation study.
pub fn simulation_control() -> FitControl {
    FitControl { max_iter: SIM_MAX_ITER, ..FitControl::default() }
}

/// Fit and test one replication.
pub fn run_replication(sc: &SimScenario, rep: u64, control: &FitControl, zls: &ZlsOptions) -> RepOutcome {
    let attempt = || -> Result<RepOutcome> {
        let mut rng = sc.rng_for(rep);
        let ds = simulate_dataset(sc, &mut rng)?;
        let bundle: DesignBundle = build_design(&sc.model_spec(), &ds.data)?;
        let f = fit(&bundle, &ds.y, control)?;
        if !f.converged {
            return Ok(RepOutcome::NotConverged);
        }
        let res = zls_test(&f, &bundle, &ds.y, sc.effect.term(), zls)?;
        Ok(RepOutcome::Tested { p_value: res.p_value })
    };
    attempt().unwrap_or_else(|e| RepOutcome::Failed(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimReport {
    pub scenario: SimScenario,
    /// Rejections over completed replications.
    pub rejection_rate: f64,
    /// Binomial standard error of the rate.
    pub mc_stderr: f64,
    pub completed: usize,
    /// Non-converged or errored replications, excluded from the rate.
    pub failures: usize,
    /// Failure fraction above [`FAILURE_FLAG_FRACTION`].
    pub flagged: bool,
    pub per_rep_pvalues: Option<Vec<f64>>,
}

/// Summarize replication outcomes given in replication order.
pub fn aggregate(sc: &SimScenario, outcomes: &[RepOutcome], keep_pvalues: bool) -> SimReport {
    let pvals: Vec<f64> = outcomes.iter().filter_map(RepOutcome::p_value).collect();
    let completed = pvals.len();
    let failures = outcomes.len() - completed;
    let rejections = pvals.iter().filter(|&&p| p < sc.alpha_level).count();
    let (rate, se) = if completed == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let r = rejections as f64 / completed as f64;
        (r, libm::sqrt(r * (1.0 - r) / completed as f64))
    };
    SimReport {
        scenario: sc.clone(),
        rejection_rate: rate,
        mc_stderr: se,
        completed,
        failures,
        flagged: !outcomes.is_empty() && failures as f64 > FAILURE_FLAG_FRACTION * outcomes.len() as f64,
        per_rep_pvalues: keep_pvalues.then_some(pvals),
    }
}

/// Run every replication of `sc` in order on the calling thread.
pub fn run_scenario(sc: &SimScenario, control: &FitControl, zls: &ZlsOptions, keep_pvalues: bool) -> Result<SimReport> {
    sc.validate()?;
    let outcomes: Vec<RepOutcome> = (0..sc.replications as u64).map(|r| run_replication(sc, r, control, zls)).collect();
    Ok(aggregate(sc, &outcomes, keep_pvalues))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_values() {
        let phi = gen_smooth_phi(&[0.5, 1.5, 40.0]);
        assert!((phi[0] + 0.5).abs() < 1e-15);
        assert!((phi[1] + 0.977_249_868_051_820_8).abs() < 1e-12);
        assert!((phi[2] + 1.0).abs() < 1e-15);

        let g = gen_smooth_gamma(&[0.0, 0.5, 0.49, 0.51]);
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 2.0 * libm::exp(-1.0)).abs() < 1e-15);
        assert!(g[1] > g[2] && g[1] > g[3]);

        let tp = gen_func_twopeak(&[0.25]);
        assert!((tp[0] - 0.997_357_559_402_975_1).abs() < 1e-10, "{}", tp[0]);
        let s = gen_func_seasonal(&[0.0, 0.25]);
        assert!(s[0].abs() < 1e-15 && s[1].abs() < 1e-15);
    }

    #[test]
    fn ar1_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let center = linspace(-1.0, 1.0, 8);
        let w = gen_gp_ar1(10_000, &center, 0.5, &mut rng).unwrap();
        for (j, c) in center.iter().enumerate() {
            let m = w.column(j).mean();
            assert!((m - c).abs() < 0.05);
        }
        let dev = DMatrix::from_fn(10_000, 8, |i, j| w[(i, j)] - center[j]);
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..10_000 {
            for j in 0..7 {
                num += dev[(i, j)] * dev[(i, j + 1)];
                den += dev[(i, j)] * dev[(i, j)];
            }
        }
        assert!((num / den - 0.5).abs() < 0.02);
        assert!(gen_gp_ar1(2, &center, 1.0, &mut rng).is_err());
    }

    #[test]
    fn regime_table() {
        use Effect::*;
        assert_eq!(knot_default(Family::Gaussian, SmoothPhi, 50, 0), 8);
        assert_eq!(knot_default(Family::Probit, SmoothPhi, 50, 0), 4);
        assert_eq!(knot_default(Family::Probit, SmoothGamma, 100, 0), 6);
        assert_eq!(knot_default(Family::Gaussian, FuncSeasonal, 50, 100), 12);
        assert_eq!(knot_default(Family::Probit, FuncTwopeak, 200, 50), 9);
        assert_eq!(knot_default(Family::Probit, FuncTwopeak, 50, 50), 6);
        assert_eq!(knot_default(Family::Probit, FuncTwopeak, 50, 100), 7);
    }

    #[test]
    fn streams_are_per_replication() {
        let sc = SimScenario::new(Family::Gaussian, Effect::SmoothPhi, 30, 1.0);
        let a = simulate_dataset(&sc, &mut sc.rng_for(4)).unwrap();
        let b = simulate_dataset(&sc, &mut sc.rng_for(4)).unwrap();
        let c = simulate_dataset(&sc, &mut sc.rng_for(5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn null_has_no_signal_and_probit_is_binary() {
        let sc = SimScenario::new(Family::Probit, Effect::FuncSeasonal, 40, 0.0);
        let ds = simulate_dataset(&sc, &mut sc.rng_for(0)).unwrap();
        assert!(ds.signal.iter().all(|&v| v == 0.0));
        assert!(ds.y.iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(ds.data.functional[0].shape(), (40, 50));
    }

    #[test]
    fn aggregate_counts() {
        let sc = SimScenario { replications: 5, ..SimScenario::new(Family::Gaussian, Effect::SmoothPhi, 50, 0.0) };
        let outs = [
            RepOutcome::Tested { p_value: 0.01 },
            RepOutcome::Tested { p_value: 0.5 },
            RepOutcome::NotConverged,
            RepOutcome::Tested { p_value: 0.04 },
            RepOutcome::Failed(String::from("x")),
        ];
        let r = aggregate(&sc, &outs, true);
        assert_eq!((r.completed, r.failures), (3, 2));
        assert!((r.rejection_rate - 2.0 / 3.0).abs() < 1e-15);
        assert!(r.flagged);
        assert_eq!(r.per_rep_pvalues.unwrap().len(), 3);
    }

    #[test]
    fn scenario_validation_and_parsing() {
        let mut sc = SimScenario::new(Family::Gaussian, Effect::SmoothPhi, 50, 0.0);
        sc.alpha_level = 1.5;
        assert!(sc.validate().is_err());
        assert_eq!("func_twopeak".parse::<Effect>().unwrap(), Effect::FuncTwopeak);
        assert!("bogus".parse::<Effect>().is_err());
        assert_eq!(
            SimScenario::new(Family::Probit, Effect::FuncTwopeak, 200, 1.0).label(),
            "probit/func_twopeak/N=200/T=50/xi=1/knots=9"
        );
    }
}
