//! Scenario lists and the parallel replication runner.
//!
//! A scenario is given either as a compact string
//! `family/effect/N=200/xi=1[/T=50][/knots=9][/reps=1000][/seed=1][/alpha=0.05]`
//! or as a `[[scenario]]` table in a TOML file with the same keys.

use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;
use vamzls_core::simulate::{aggregate, knot_default, run_replication};
use vamzls_core::{Effect, Family, FitControl, RepOutcome, SimReport, SimScenario, ZlsOptions};

use crate::error::{CliError, CliResult};

/// Environment variable holding the worker count of the simulation pool.
pub const THREADS_ENV: &str = "VAMZLS_THREADS";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub family: Family,
    pub effect: Effect,
    #[serde(alias = "N")]
    pub n: usize,
    #[serde(alias = "xi_scale")]
    pub xi: f64,
    #[serde(default, alias = "T")]
    pub t: Option<usize>,
    #[serde(default)]
    pub knots: Option<usize>,
    #[serde(default)]
    pub reps: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    scenario: Vec<ScenarioEntry>,
}

impl ScenarioEntry {
    pub fn to_scenario(&self) -> SimScenario {
        let mut sc = SimScenario::new(self.family, self.effect, self.n, self.xi);
        if let Some(t) = self.t {
            sc.t = t;
        }
        sc.knots = self.knots.unwrap_or_else(|| knot_default(sc.family, sc.effect, sc.n, sc.t));
        if let Some(r) = self.reps {
            sc.replications = r;
        }
        if let Some(s) = self.seed {
            sc.seed = s;
        }
        if let Some(a) = self.alpha {
            sc.alpha_level = a;
        }
        sc
    }
}

fn bad(spec: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("scenario `{spec}`: {why}"))
}

pub fn parse_scenario(spec: &str) -> CliResult<ScenarioEntry> {
    let mut parts = spec.split('/').map(str::trim);
    let family = match parts.next() {
        Some("gaussian") => Family::Gaussian,
        Some("probit") | Some("binary") => Family::Probit,
        other => return Err(bad(spec, format!("unknown family `{}`", other.unwrap_or("")))),
    };
    let effect: Effect = parts
        .next()
        .ok_or_else(|| bad(spec, "missing effect"))?
        .parse()
        .map_err(|e| bad(spec, e))?;
    let mut entry = ScenarioEntry { family, effect, n: 0, xi: f64::NAN, t: None, knots: None, reps: None, seed: None, alpha: None };
    for part in parts {
        let (key, value) = part.split_once('=').ok_or_else(|| bad(spec, format!("expected key=value, got `{part}`")))?;
        let num_err = |_: std::num::ParseIntError| bad(spec, format!("bad value for `{key}`"));
        let float_err = |_: std::num::ParseFloatError| bad(spec, format!("bad value for `{key}`"));
        match key {
            "N" | "n" => entry.n = value.parse().map_err(num_err)?,
            "xi" => entry.xi = value.parse().map_err(float_err)?,
            "T" | "t" => entry.t = Some(value.parse().map_err(num_err)?),
            "knots" | "K" | "L" => entry.knots = Some(value.parse().map_err(num_err)?),
            "reps" => entry.reps = Some(value.parse().map_err(num_err)?),
            "seed" => entry.seed = Some(value.parse().map_err(num_err)?),
            "alpha" => entry.alpha = Some(value.parse().map_err(float_err)?),
            _ => return Err(bad(spec, format!("unknown key `{key}`"))),
        }
    }
    if entry.n == 0 {
        return Err(bad(spec, "missing N"));
    }
    if entry.xi.is_nan() {
        return Err(bad(spec, "missing xi"));
    }
    Ok(entry)
}

pub fn read_scenario_file(path: &Path) -> CliResult<Vec<ScenarioEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: ScenarioFile =
        toml::from_str(&text).map_err(|e| CliError::Config { path: path.to_path_buf(), message: e.to_string() })?;
    Ok(file.scenario)
}

/// Worker count from [`THREADS_ENV`]; `None` lets rayon decide.
pub fn thread_count() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) => Ok(None),
            Ok(k) => Ok(Some(k)),
            Err(_) => Err(CliError::Usage(format!("{THREADS_ENV} must be a non-negative integer, got `{v}`"))),
        },
    }
}

/// Run all replications of all scenarios on a pool of `threads` workers.
///
/// Work is spread over (scenario, replication) pairs. Each replication draws
/// from its own random stream, so the reports do not depend on the pool size.
pub fn run_all(
    scenarios: &[SimScenario],
    control: &FitControl,
    zls: &ZlsOptions,
    threads: Option<usize>,
    keep_pvalues: bool,
) -> CliResult<Vec<SimReport>> {
    if scenarios.is_empty() {
        return Err(CliError::Usage("no scenarios given".into()));
    }
    for sc in scenarios {
        sc.validate()?;
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        builder = builder.num_threads(k);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let jobs: Vec<(usize, u64)> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(s, sc)| (0..sc.replications as u64).map(move |r| (s, r)))
        .collect();
    let outcomes: Vec<RepOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|&(s, r)| run_replication(&scenarios[s], r, control, zls))
            .collect()
    });
    let mut reports = Vec::with_capacity(scenarios.len());
    let mut offset = 0;
    for sc in scenarios {
        let chunk = &outcomes[offset..offset + sc.replications];
        reports.push(aggregate(sc, chunk, keep_pvalues));
        offset += sc.replications;
    }
    Ok(reports)
}
