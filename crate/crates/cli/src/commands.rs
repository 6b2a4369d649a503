use std::io::Write;
use std::path::Path;

use vamzls_core::simulate::simulation_control;
use vamzls_core::zls::zls_test_all;
use vamzls_core::{
    build_design, fit as fit_model, zls_test, CForm, CovarianceChoice, DesignBundle, Family, FitControl, ModelSpec,
    VariationalFit, ZlsOptions, ZlsResult,
};

use crate::artifact::FitArtifact;
use crate::error::{CliError, CliResult};
use crate::model::{parse_term, FunctionalEntry, ModelFile, SmoothEntry, DEFAULT_KNOTS};
use crate::report;
use crate::runner::{self, parse_scenario, read_scenario_file};
use crate::table::Table;
use crate::{CFormArg, ControlArgs, CovarianceArg, FamilyArg, FitArgs, ModelArgs, OutputFormat, SimulateArgs, TestArgs, TestOptionArgs};

fn io_err(path: &str) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::io(path, e)
}

fn model_file(args: &ModelArgs) -> CliResult<ModelFile> {
    if let Some(path) = &args.model {
        let mut m = ModelFile::read(path)?;
        if let Some(k) = args.knots {
            m.smooth_terms.iter_mut().for_each(|t| t.knots = k);
            m.functional_terms.iter_mut().for_each(|t| t.knots = k);
        }
        return Ok(m);
    }
    let response = args
        .response
        .clone()
        .ok_or_else(|| CliError::Usage("either --model or --response is required".into()))?;
    let family = match args.family {
        FamilyArg::Gaussian => Family::Gaussian,
        FamilyArg::Probit => Family::Probit,
    };
    let knots = args.knots.unwrap_or(DEFAULT_KNOTS);
    let mut m = ModelFile::new(family, response);
    m.scalar_terms = args.scalar.clone();
    for s in &args.smooth {
        let (name, knots) = parse_term(s, knots)?;
        m.smooth_terms.push(SmoothEntry { name, knots, diff_order: 2, prior: Default::default() });
    }
    for f in &args.functional {
        let (name, knots) = parse_term(f, knots)?;
        m.functional_terms.push(FunctionalEntry { name, knots, grid: None, prior: Default::default() });
    }
    Ok(m)
}

fn control(args: &ControlArgs, base: FitControl) -> CliResult<FitControl> {
    let mut c = base;
    if let Some(t) = args.tol {
        c.tol = t;
    }
    if let Some(m) = args.max_iter {
        c.max_iter = m;
    }
    c.validate()?;
    Ok(c)
}

fn zls_options(args: &TestOptionArgs) -> ZlsOptions {
    ZlsOptions {
        c_form: match args.c_form {
            CFormArg::FullRow => CForm::FullRow,
            CFormArg::PrincipalSubmatrix => CForm::PrincipalSubmatrix,
        },
        covariance: match args.covariance {
            CovarianceArg::Auto => CovarianceChoice::Auto,
            CovarianceArg::Working => CovarianceChoice::Working,
        },
        grid: None,
    }
}

struct Fitted {
    spec: ModelSpec,
    bundle: DesignBundle,
    y: nalgebra::DVector<f64>,
    fit: VariationalFit,
}

fn load_and_fit(model: &ModelArgs, ctl: &ControlArgs, stderr: &mut dyn Write) -> CliResult<Fitted> {
    let m = model_file(model)?;
    let table = Table::read(&model.data)?;
    let inputs = m.resolve(&table)?;
    let bundle = build_design(&inputs.spec, &inputs.data)?;
    let fit = fit_model(&bundle, &inputs.y, &control(ctl, FitControl::default())?)?;
    for w in &fit.warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
    Ok(Fitted { spec: inputs.spec, bundle, y: inputs.y, fit })
}

pub fn fit(args: &FitArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let f = load_and_fit(&args.model, &args.control, stderr)?;
    let artifact = FitArtifact::new(&f.fit, &f.bundle, &f.spec)?;
    artifact.write(&args.out)?;
    let elbo = f.fit.final_elbo().unwrap_or(f64::NAN);
    let out_path = args.out.display().to_string();
    match args.format {
        OutputFormat::Json => {
            let line = serde_json::json!({
                "record": "fit_summary",
                "converged": f.fit.converged,
                "iterations": f.fit.iterations,
                "elbo": elbo,
                "sigma2_hat": f.fit.b_sigma2.map(|_| f.fit.sigma2_hat(&f.bundle)),
                "artifact": out_path,
            });
            writeln!(stdout, "{line}").map_err(io_err("stdout"))?;
        }
        OutputFormat::Text => {
            let status = if f.fit.converged { "converged" } else { "NOT converged" };
            let mut text = format!(
                "n = {}, {} columns, {} iterations ({status}), final bound {elbo:.6}\n",
                f.bundle.nrows(),
                f.bundle.ncols(),
                f.fit.iterations
            );
            text.push_str(&format!("intercept {:.6}\n", f.fit.mu_theta[0]));
            if f.fit.b_sigma2.is_some() {
                text.push_str(&format!("error variance {:.6}\n", f.fit.sigma2_hat(&f.bundle)));
            }
            text.push_str(&format!("artifact written to {out_path}\n"));
            stdout.write_all(text.as_bytes()).map_err(io_err("stdout"))?;
        }
    }
    if !f.fit.converged {
        return Err(CliError::NotConverged(f.fit.iterations));
    }
    Ok(())
}

fn write_output(path: Option<&Path>, stdout: &mut dyn Write, body: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, body).map_err(|e| CliError::io(p, e)),
        None => stdout.write_all(body).map_err(io_err("stdout")),
    }
}

pub fn test(args: &TestArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Usage(format!("--alpha must lie in (0, 1), got {}", args.alpha)));
    }
    let f = load_and_fit(&args.model, &args.control, stderr)?;
    let opts = zls_options(&args.options);
    let results: Vec<ZlsResult> = if args.term.is_empty() {
        zls_test_all(&f.fit, &f.bundle, &f.y, &opts)?
    } else {
        args.term
            .iter()
            .map(|t| zls_test(&f.fit, &f.bundle, &f.y, t, &opts))
            .collect::<Result<_, _>>()?
    };
    if results.is_empty() {
        return Err(CliError::Usage("model has no smooth or functional term to test".into()));
    }
    let mut body = Vec::new();
    match args.format {
        OutputFormat::Text => report::write_tests_text(&mut body, &results, args.alpha),
        OutputFormat::Json => report::write_tests_json(&mut body, &results, args.alpha),
    }
    .map_err(io_err("output"))?;
    write_output(args.out.as_deref(), stdout, &body)?;
    if !f.fit.converged {
        return Err(CliError::NotConverged(f.fit.iterations));
    }
    Ok(())
}

pub fn simulate(args: &SimulateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let mut entries = Vec::new();
    if let Some(path) = &args.scenarios {
        entries.extend(read_scenario_file(path)?);
    }
    for s in &args.scenario {
        entries.push(parse_scenario(s)?);
    }
    if entries.is_empty() {
        return Err(CliError::Usage("empty scenario list; give --scenario or --scenarios".into()));
    }
    let scenarios: Vec<_> = entries
        .iter()
        .map(|e| {
            let mut sc = e.to_scenario();
            if let Some(r) = args.reps {
                sc.replications = r;
            }
            if let Some(s) = args.seed {
                sc.seed = s;
            }
            if let Some(a) = args.alpha {
                sc.alpha_level = a;
            }
            sc
        })
        .collect();
    let ctl = control(&args.control, simulation_control())?;
    let reports = runner::run_all(&scenarios, &ctl, &zls_options(&args.options), runner::thread_count()?, args.keep_pvalues)?;
    for r in reports.iter().filter(|r| r.flagged) {
        let _ = writeln!(
            stderr,
            "warning: {}: {} of {} replications failed",
            r.scenario.label(),
            r.failures,
            r.scenario.replications
        );
    }
    let mut body = Vec::new();
    match args.format {
        OutputFormat::Text => report::write_sim_text(&mut body, &reports),
        OutputFormat::Json => report::write_sim_json(&mut body, &reports),
    }
    .map_err(io_err("output"))?;
    write_output(args.out.as_deref(), stdout, &body)
}
