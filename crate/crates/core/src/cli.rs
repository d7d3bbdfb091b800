//! Command-line front end: config ingestion, subcommand dispatch and file emission.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{load_config, ScenarioConfig};
use crate::dsl::{
    check_monotonicity_conditions, check_unimodality_hypotheses, DEFAULT_FD_STEP,
    DEFAULT_HYPOTHESIS_SAMPLES,
};
use crate::error::{Error, Result};
use crate::integrator::{integrate, limit_equilibrium, write_csv, Terminal, Trajectory};
use crate::presets::preset;
use crate::stability::{
    classify_equilibrium, downward_closure_violations, jacobian_at_equilibrium,
    midpoint_convexity_violations, render_svg, scan_region, Classification,
};
use crate::transient::{
    analyze_transient, search_multimodal_ic, verify_unimodality, write_curve_csv, AggregateCurve,
};

/// Largest grid used by `check` for the monotonicity conditions.
const MAX_CHECK_POINTS: usize = 1_000_000;

#[derive(Debug, Parser)]
#[command(
    name = "nbfsir",
    version,
    about = "SIR epidemics on networks with behavioral feedback"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the model from the configured initial state.
    Simulate(RunArgs),
    /// Classify a disease-free equilibrium.
    Stability(RunArgs),
    /// Scan the stability region over the unit cube.
    Region(RunArgs),
    /// Analyse the aggregate infection curve.
    Transient(RunArgs),
    /// Check the monotonicity conditions and the unimodality hypotheses.
    Check(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Scenario file (JSON).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in scenario, e.g. example3.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Also write an SVG rendering of the region scan.
    #[arg(long)]
    pub svg: bool,
    /// Override the grid resolution per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Override the random seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Stability(_) => "stability",
            Command::Region(_) => "region",
            Command::Transient(_) => "transient",
            Command::Check(_) => "check",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Simulate(a)
            | Command::Stability(a)
            | Command::Region(a)
            | Command::Transient(a)
            | Command::Check(a) => a,
        }
    }
}

/// Runs one subcommand and returns the process exit status. Errors are reported on
/// stderr and, when the output directory is usable, in `diagnostics.json`.
pub fn run(cli: &Cli) -> i32 {
    let args = cli.command.args();
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("nbfsir {}: {e}", cli.command.name());
            if fs::create_dir_all(&args.out).is_ok() {
                let _ = write_json(&args.out.join("diagnostics.json"), &diagnostics(&e));
            }
            e.exit_code()
        }
    }
}

fn diagnostics(e: &Error) -> Value {
    let mut d = json!({
        "error": e.kind(),
        "message": e.to_string(),
        "exit_code": e.exit_code(),
    });
    match e {
        Error::Parse(p) => {
            d["offset"] = json!(p.offset);
        }
        Error::ModelValidity { entry, witness, .. } => {
            d["entry"] = json!(entry);
            d["witness"] = json!(witness);
        }
        Error::StepSizeUnderflow { t, state } | Error::IntegrationFailure { t, state, .. } => {
            d["t"] = json!(t);
            d["state"] = json!(state);
        }
        Error::Numerical { best_estimate, .. } => {
            d["best_estimate"] = json!(best_estimate);
        }
        _ => {}
    }
    d
}

fn resolve_config(args: &RunArgs) -> Result<ScenarioConfig> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), None) => load_config(path)?,
        (None, Some(name)) => preset(name)?,
        _ => {
            return Err(Error::Usage(
                "exactly one of --config and --preset is required".into(),
            ))
        }
    };
    if let Some(g) = args.grid {
        config.analysis.grid_resolution = Some(g);
    }
    if let Some(s) = args.seed {
        config.analysis.seed = Some(s);
    }
    Ok(config)
}

fn execute(command: &Command) -> Result<()> {
    let args = command.args();
    let config = resolve_config(args)?;
    fs::create_dir_all(&args.out)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", args.out.display())))?;
    let _ = fs::remove_file(args.out.join("diagnostics.json"));
    write_text(
        &args.out.join("resolved_config.json"),
        &config.to_json_pretty(),
    )?;
    write_json(
        &args.out.join("metadata.json"),
        &json!({
            "tool": "nbfsir",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": command.name(),
            "config": args.config.as_ref().map(|p| p.display().to_string()),
            "preset": args.preset,
            "format": args.format,
            "svg": args.svg,
            "threads": rayon::current_num_threads(),
            "started_at": chrono::Utc::now().to_rfc3339(),
        }),
    )?;
    let out = args.out.as_path();
    match command {
        Command::Simulate(_) => simulate(&config, out, args.format),
        Command::Stability(_) => stability(&config, out),
        Command::Region(_) => region(&config, out, args.svg),
        Command::Transient(_) => transient(&config, out, args.format),
        Command::Check(_) => check(&config, out),
    }
}

fn required_initial(config: &ScenarioConfig, command: &str) -> Result<crate::state::EpidemicState> {
    config
        .initial_state()?
        .ok_or_else(|| Error::Config(format!("`{command}` needs the `initial` section")))
}

fn simulate(config: &ScenarioConfig, out: &Path, format: Format) -> Result<()> {
    let params = config.params()?;
    let initial = required_initial(config, "simulate")?;
    let traj = integrate(&params, &initial, &config.integrator_options())?;
    match format {
        Format::Csv => {
            let mut w = create(&out.join("trajectory.csv"))?;
            write_csv(&traj, None, &mut w)?;
            w.flush()?;
        }
        Format::Json => write_json(
            &out.join("trajectory.json"),
            &serde_json::to_value(&traj).expect("serializable"),
        )?,
    }
    write_json(&out.join("summary.json"), &trajectory_summary(&traj))
}

fn trajectory_summary(traj: &Trajectory) -> Value {
    let status = if traj.len() == 1 {
        "at equilibrium"
    } else {
        match traj.terminal {
            Terminal::ConvergedToEquilibrium => "converged",
            Terminal::ReachedTMax => "reached t_max",
        }
    };
    let last = traj.last();
    json!({
        "status": status,
        "terminal": traj.terminal,
        "samples": traj.len(),
        "final_time": traj.times.last(),
        "final_state": last,
        "limit_equilibrium": limit_equilibrium(traj).ok().map(|s| s.x),
    })
}

fn stability(config: &ScenarioConfig, out: &Path) -> Result<()> {
    let params = config.params()?;
    let (x_star, source) = match &config.analysis.x_star {
        Some(x) => (x.clone(), "configured"),
        None => {
            let initial = required_initial(config, "stability")?;
            let traj = integrate(&params, &initial, &config.integrator_options())?;
            (limit_equilibrium(&traj)?.x, "simulated")
        }
    };
    let band = config.region_options().marginal_band;
    let report = classify_equilibrium(&params, &x_star, band)?;
    let jac = jacobian_at_equilibrium(&params, &x_star)?;
    let rows: Vec<Vec<f64>> = jac
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    let mut v = serde_json::to_value(&report).expect("serializable");
    v["x_star_source"] = json!(source);
    v["jacobian"] = json!(rows);
    write_json(&out.join("stability.json"), &v)
}

fn region(config: &ScenarioConfig, out: &Path, svg: bool) -> Result<()> {
    let params = config.params()?;
    let scan = scan_region(&params, &config.region_options())?;
    let mut v = scan.to_json();
    if scan.n == 2 {
        let stable = midpoint_convexity_violations(&scan, |c| c == Classification::Stable)?;
        let unstable = midpoint_convexity_violations(&scan, |c| c != Classification::Stable)?;
        v["checks"] = json!({
            "stable_set_midpoint_violations": stable,
            "complement_midpoint_violations": unstable,
            "downward_closure_violations": downward_closure_violations(&scan),
        });
    } else {
        v["checks"] = json!({ "downward_closure_violations": downward_closure_violations(&scan) });
    }
    write_json(&out.join("region.json"), &v)?;
    if svg {
        write_text(&out.join("region.svg"), &render_svg(&scan)?)?;
    }
    Ok(())
}

fn write_curve(curve: &AggregateCurve, out: &Path, stem: &str, format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = create(&out.join(format!("{stem}.csv")))?;
            write_curve_csv(curve, &mut w)?;
            w.flush()?;
            Ok(())
        }
        Format::Json => write_json(
            &out.join(format!("{stem}.json")),
            &json!({"t": curve.times, "ybar": curve.values}),
        ),
    }
}

fn transient(config: &ScenarioConfig, out: &Path, format: Format) -> Result<()> {
    let params = config.params()?;
    let opts = config.transient_options();
    let seed = config.seed();
    let a = &config.analysis;
    if config.initial.is_none() && a.trials.is_none() && a.budget.is_none() {
        return Err(Error::Config(
            "`transient` needs `initial`, `analysis.trials` or `analysis.budget`".into(),
        ));
    }
    let mut report = json!({});
    if let Some(initial) = config.initial_state()? {
        let t = analyze_transient(&params, &initial, &opts)?;
        write_curve(&t.curve, out, "aggregate_curve", format)?;
        report["curve"] = json!({
            "shape": t.curve.analysis.shape,
            "peak_time": t.curve.analysis.peak_time,
            "peak_index": t.curve.analysis.peak_index,
            "reversals": t.curve.analysis.reversals,
            "maxima": t.curve.analysis.maxima(),
            "extrema": t.curve.analysis.extrema,
            "reintegrated": t.reintegrated,
        });
    }
    if let Some(trials) = a.trials {
        let v = verify_unimodality(&params, trials, seed, &opts)?;
        report["verification"] = serde_json::to_value(&v).expect("serializable");
    }
    if let Some(budget) = a.budget {
        let s = search_multimodal_ic(&params, budget, seed, &opts)?;
        let best = analyze_transient(&params, &s.initial, &opts)?;
        write_curve(&best.curve, out, "search_best_curve", format)?;
        report["search"] = serde_json::to_value(&s).expect("serializable");
    }
    write_json(&out.join("transient.json"), &report)
}

fn check(config: &ScenarioConfig, out: &Path) -> Result<()> {
    let params = config.params()?;
    let n = params.n() as i32;
    let requested = config.region_options().grid_resolution;
    let cap = (MAX_CHECK_POINTS as f64).powf(1.0 / n as f64).floor() as usize;
    let res = requested.min(cap).max(2);
    let mono = check_monotonicity_conditions(params.interaction(), res, DEFAULT_FD_STEP)?;
    let hyp = match params.interaction().rank1_factors() {
        Some(_) => serde_json::to_value(check_unimodality_hypotheses(
            params.interaction(),
            DEFAULT_HYPOTHESIS_SAMPLES,
        )?)
        .expect("serializable"),
        None => json!({"applicable": false, "kind": params.interaction().kind_name()}),
    };
    write_json(
        &out.join("check.json"),
        &json!({
            "monotonicity_resolution": res,
            "monotonicity": mono,
            "unimodality_hypotheses": hyp,
        }),
    )
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("json value serializes");
    s.push('\n');
    write_text(path, &s)
}
