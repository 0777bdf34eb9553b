//! `ftrack`: command-line driver for the front-tracking scenarios.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use front_tracking::error::Error;
use front_tracking::interaction::{
    cross_shock_exact, eta_prime_exact, eta_prime_near_vacuum, eta_prime_small_shock, shock_from_strength,
};
use front_tracking::output::{write_snapshots, write_svg, write_tv_file};
use front_tracking::riemann::{solve_riemann, GasState};
use front_tracking::roots::Tolerances;
use front_tracking::scenarios::{self, Overrides, Run};
use front_tracking::tracking::Mode;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "ftrack", version, about = "Front tracking for the p-system with p(v) = 1/(3v³)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one Riemann problem and print both waves.
    Riemann {
        /// Left state as `u,rho`.
        #[arg(long, allow_hyphen_values = true)]
        left: String,
        /// Right state as `u,rho`.
        #[arg(long, allow_hyphen_values = true)]
        right: String,
        #[arg(long)]
        json: bool,
    },
    /// Cross a small 2-wave through a 1-shock and compare with the asymptotics.
    Interact {
        #[arg(long)]
        sigma1: f64,
        #[arg(long)]
        rho_minus: f64,
        #[arg(long, allow_hyphen_values = true)]
        epsilon: f64,
        #[arg(long)]
        json: bool,
    },
    /// Run a named scenario and write manifest, TV series, snapshots and diagram.
    Scenario(ScenarioArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ScenarioName {
    Example1,
    Example2,
    Example3Periodic,
    Example3Amplify,
    PairTrain,
    Blowup,
    ExponentCheck,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Exact,
    Paper,
}

#[derive(clap::Args, Debug, Clone)]
struct ScenarioArgs {
    name: ScenarioName,
    /// Parameter file (TOML `key = value`, or a manifest.json from an earlier
    /// run). Repeat with `--jobs` to sweep.
    #[arg(long)]
    params: Vec<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    delta_r: Option<f64>,
    #[arg(long)]
    rho_floor: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    tv_max: Option<f64>,
    #[arg(long)]
    max_events: Option<u64>,
    /// Omit the generation-time comment from the SVG.
    #[arg(long)]
    no_timestamp: bool,
    /// Worker threads for sweeps over several parameter files.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Engine(#[from] Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Engine(e) => match e.root_cause() {
                Error::Vacuum { .. } => 3,
                Error::NonConvergence { .. } => 4,
                Error::ScheduleInfeasible(_) => 5,
                _ => 2,
            },
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn parse_state(s: &str) -> CliResult<GasState> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(usage(format!("expected `u,rho`, got `{s}`")));
    }
    let u: f64 = parts[0].parse().map_err(|e| usage(format!("bad u in `{s}`: {e}")))?;
    let rho: f64 = parts[1].parse().map_err(|e| usage(format!("bad rho in `{s}`: {e}")))?;
    Ok(GasState::new(u, rho))
}

fn cmd_riemann(left: &str, right: &str, as_json: bool) -> CliResult<()> {
    let (l, r) = (parse_state(left)?, parse_state(right)?);
    let sol = solve_riemann(l, r, &Tolerances::default())?;
    if as_json {
        println!("{}", serde_json::to_string_pretty(&sol.waves()).map_err(usage)?);
        println!("{}", serde_json::to_string_pretty(&sol.middle).map_err(usage)?);
        return Ok(());
    }
    println!("middle  u = {:.15e}  rho = {:.15e}", sol.middle.u, sol.middle.rho);
    for w in sol.waves() {
        println!(
            "{}-{:<11} strength {:.15e}  speed {:+.15e}  ({:.6e}, {:.6e}) -> ({:.6e}, {:.6e})",
            w.family.index(),
            format!("{:?}", w.kind).to_lowercase(),
            w.strength,
            w.speed_exact,
            w.left.u,
            w.left.rho,
            w.right.u,
            w.right.rho
        );
    }
    Ok(())
}

fn cmd_interact(sigma1: f64, rho_minus: f64, epsilon: f64, as_json: bool) -> CliResult<()> {
    let tol = Tolerances::default();
    let res = cross_shock_exact(sigma1, rho_minus, epsilon, &tol)?;
    let (theta, s) = shock_from_strength(sigma1, rho_minus, &tol)?;
    let exact = eta_prime_exact(sigma1, rho_minus, &tol)?;
    let small = eta_prime_small_shock(s, rho_minus)?;
    let vacuum = eta_prime_near_vacuum(sigma1, rho_minus)?;
    let ratio = if epsilon != 0.0 { res.eta / epsilon } else { exact };
    if as_json {
        let v = json!({
            "sigma1": sigma1, "rho_minus": rho_minus, "epsilon": epsilon,
            "theta": theta, "s": s, "eta": res.eta, "eta_over_epsilon": ratio,
            "eta_prime_exact": exact, "weak_shock_prediction": small,
            "near_vacuum_prediction": vacuum, "rho_minus_pow": rho_minus.powf(-2.0 / 3.0),
        });
        println!("{}", serde_json::to_string_pretty(&v).map_err(usage)?);
        return Ok(());
    }
    println!("shock     theta = {theta:.12e}  s = {s:.12e}");
    println!("eta       {:.15e}", res.eta);
    println!("eta/eps   {ratio:.15e}");
    println!("eta'      {exact:.15e}   (exact derivative)");
    println!("weak      {small:.15e}   1 + (s/rho)^3/3");
    println!("vacuum    {vacuum:.15e}   3^(-2/3) (sigma1/rho)^(2/3)");
    println!("rho^-2/3  {:.15e}", rho_minus.powf(-2.0 / 3.0));
    Ok(())
}

const ENGINE_KEYS: [&str; 6] = ["mode", "delta_r", "rho_floor", "t_max", "tv_max", "max_events"];

/// Splits a parameter file into scenario parameters and engine overrides.
fn load_params(path: Option<&Path>) -> CliResult<(Value, Overrides)> {
    let Some(path) = path else {
        return Ok((json!({}), Overrides::default()));
    };
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let v: Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let params = v.get("params").cloned().unwrap_or_else(|| json!({}));
        let ov = match v.get("overrides") {
            Some(o) => serde_json::from_value(o.clone()).map_err(usage)?,
            None => Overrides::default(),
        };
        return Ok((params, ov));
    }
    let table: toml::Table = text.parse().map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let mut v = serde_json::to_value(table).map_err(usage)?;
    let obj = v.as_object_mut().expect("a TOML document is a table");
    let mut ov = Overrides::default();
    for key in ENGINE_KEYS {
        if let Some(x) = obj.remove(key) {
            match key {
                "mode" => {
                    ov.mode = Some(match x.as_str() {
                        Some("exact") => Mode::RiemannExact,
                        Some("paper") => Mode::PaperBookkeeping,
                        _ => return Err(usage("mode must be \"exact\" or \"paper\"")),
                    })
                }
                "max_events" => ov.max_events = Some(x.as_u64().ok_or_else(|| usage("max_events must be an integer"))?),
                _ => {
                    let f = x.as_f64().ok_or_else(|| usage(format!("{key} must be a number")))?;
                    match key {
                        "delta_r" => ov.delta_r = Some(f),
                        "rho_floor" => ov.rho_floor = Some(f),
                        "t_max" => ov.t_max = Some(f),
                        _ => ov.tv_max = Some(f),
                    }
                }
            }
        }
    }
    Ok((v, ov))
}

fn merge_flags(mut ov: Overrides, a: &ScenarioArgs) -> Overrides {
    if let Some(m) = a.mode {
        ov.mode = Some(match m {
            ModeArg::Exact => Mode::RiemannExact,
            ModeArg::Paper => Mode::PaperBookkeeping,
        });
    }
    ov.delta_r = a.delta_r.or(ov.delta_r);
    ov.rho_floor = a.rho_floor.or(ov.rho_floor);
    ov.t_max = a.t_max.or(ov.t_max);
    ov.tv_max = a.tv_max.or(ov.tv_max);
    ov.max_events = a.max_events.or(ov.max_events);
    ov
}

/// Deserializes scenario parameters, rejecting keys the scenario does not know.
fn typed<P: DeserializeOwned + Serialize>(raw: &Value) -> CliResult<P> {
    let p: P = serde_json::from_value(raw.clone()).map_err(|e| usage(format!("parameters: {e}")))?;
    let known = serde_json::to_value(&p).map_err(usage)?;
    check_keys(raw, &known, "")?;
    Ok(p)
}

fn check_keys(raw: &Value, known: &Value, prefix: &str) -> CliResult<()> {
    if let (Some(r), Some(k)) = (raw.as_object(), known.as_object()) {
        for (key, val) in r {
            match k.get(key) {
                None => return Err(usage(format!("unknown parameter `{prefix}{key}`"))),
                Some(kv) => check_keys(val, kv, &format!("{prefix}{key}."))?,
            }
        }
    }
    Ok(())
}

/// What a scenario leaves behind: its resolved parameters and report, and
/// the run data when the scenario simulates.
struct Outcome {
    params: Value,
    report: Value,
    run: Option<RunData>,
}

struct RunData {
    termination: String,
    events: u64,
    series: front_tracking::tracking::TvSeries,
    snapshots: Vec<front_tracking::tracking::Snapshot>,
}

fn outcome<P: Serialize, R: Serialize>(p: &P, run: Run<R>) -> CliResult<Outcome> {
    Ok(Outcome {
        params: serde_json::to_value(p).map_err(usage)?,
        report: serde_json::to_value(&run.report).map_err(usage)?,
        run: Some(RunData {
            termination: format!("{:?}", run.termination),
            events: run.events,
            series: run.series,
            snapshots: run.snapshots,
        }),
    })
}

fn run_scenario(name: ScenarioName, raw: &Value, ov: &Overrides) -> CliResult<Outcome> {
    use scenarios::*;
    match name {
        ScenarioName::Example1 => {
            let p: Example1Params = typed(raw)?;
            outcome(&p, example1_run(&p, ov)?)
        }
        ScenarioName::Example2 => {
            let p: Example2Params = typed(raw)?;
            outcome(&p, example2_run(&p, ov)?)
        }
        ScenarioName::Example3Periodic => {
            let p: PeriodicParams = typed(raw)?;
            let st = example3_states(p.rho_c, p.theta_mid)?;
            outcome(&p, periodic_run(&st, p.periods, &p.layout, ov)?)
        }
        ScenarioName::Example3Amplify => {
            let p: AmplifierParams = typed(raw)?;
            outcome(&p, amplifier_run(&p.states()?, p.eps0, p.periods, &p.layout, ov)?)
        }
        ScenarioName::PairTrain => {
            let p: PairTrainParams = typed(raw)?;
            outcome(&p, pair_train_run(&p, ov)?)
        }
        ScenarioName::Blowup => {
            let p: FiniteTimeParams = typed(raw)?;
            let schedule = StageSchedule::new(&p)?;
            outcome(&p, finite_time_run(&schedule, ov)?)
        }
        ScenarioName::ExponentCheck => {
            let p: ExponentParams = typed(raw)?;
            let grid = exponent_grid(p.n);
            Ok(Outcome {
                params: serde_json::to_value(&p).map_err(usage)?,
                report: serde_json::to_value(&grid).map_err(usage)?,
                run: None,
            })
        }
    }
}

fn timestamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix {secs}")
}

fn scenario_label(name: ScenarioName) -> String {
    name.to_possible_value().map(|v| v.get_name().to_owned()).unwrap_or_default()
}

/// Runs one parameter set into `out` and returns the summary line.
fn scenario_into(a: &ScenarioArgs, params: Option<&Path>, out: &Path) -> CliResult<String> {
    let (raw, file_ov) = load_params(params)?;
    let ov = merge_flags(file_ov, a);
    let oc = run_scenario(a.name, &raw, &ov)?;
    fs::create_dir_all(out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    let label = scenario_label(a.name);
    let mut files = vec!["manifest.json"];
    if let Some(run) = &oc.run {
        write_tv_file(&out.join("tv.csv"), &run.series)?;
        write_snapshots(&out.join("snapshots.json"), &run.snapshots)?;
        let ts = (!a.no_timestamp).then(timestamp);
        write_svg(&out.join("diagram.svg"), &run.snapshots, ts.as_deref())?;
        files.extend(["tv.csv", "snapshots.json", "diagram.svg"]);
    }
    let manifest = json!({
        "scenario": label,
        "version": env!("CARGO_PKG_VERSION"),
        "command": format!("ftrack scenario {label} --params {}/manifest.json --out <dir>", out.display()),
        "params": oc.params,
        "overrides": ov,
        "termination": oc.run.as_ref().map(|r| r.termination.clone()),
        "events": oc.run.as_ref().map(|r| r.events),
        "files": files,
        "report": oc.report,
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(usage)?;
    fs::write(out.join("manifest.json"), text + "\n").map_err(|e| usage(format!("{}: {e}", out.display())))?;
    Ok(summary(a.name, &oc.report, out))
}

fn summary(name: ScenarioName, r: &Value, out: &Path) -> String {
    let g = |k: &str| r.get(k).cloned().unwrap_or(Value::Null);
    let body = match name {
        ScenarioName::Example1 => format!(
            "fronts {} tv_final {} crossings checked {} below bound {}",
            g("fronts"),
            g("tv_final"),
            g("bound_checked"),
            g("bound_violations")
        ),
        ScenarioName::Example2 => format!("gain {} rho_min on interval {}", g("gain"), g("rho_min_interval")),
        ScenarioName::Example3Periodic => format!("periods {} max residual {}", g("periods"), g("max_residual")),
        ScenarioName::Example3Amplify => format!("lambda {} predicted {}", g("lambda"), g("predicted")),
        ScenarioName::PairTrain => format!(
            "lambda {} predicted periods {} growth {} residual {} (free {})",
            g("lambda"),
            g("predicted_periods"),
            g("growth"),
            g("max_residual"),
            g("max_residual_free")
        ),
        ScenarioName::Blowup => format!(
            "total gain {} elapsed {} horizon {} rho_min {}",
            g("total_gain"),
            g("elapsed"),
            g("horizon"),
            g("rho_min")
        ),
        ScenarioName::ExponentCheck => {
            let table = ["points", "r1", "r2", "r3", "r4", "all_true"]
                .iter()
                .map(|k| format!("{k:>9} {}", g(k)))
                .collect::<Vec<_>>()
                .join("\n");
            format!("\n{table}")
        }
    };
    format!("{}: {body}  [{}]", scenario_label(name), out.display())
}

fn cmd_scenario(a: &ScenarioArgs) -> CliResult<()> {
    if a.params.len() <= 1 {
        println!("{}", scenario_into(a, a.params.first().map(PathBuf::as_path), &a.out)?);
        return Ok(());
    }
    // A sweep: one output directory per parameter file, named by its stem.
    let mut dirs = std::collections::BTreeSet::new();
    let jobs: Vec<(PathBuf, PathBuf)> = a
        .params
        .iter()
        .map(|p| {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            (p.clone(), a.out.join(stem))
        })
        .collect();
    for (_, d) in &jobs {
        if !dirs.insert(d.clone()) {
            return Err(usage(format!("two parameter files map to {}", d.display())));
        }
    }
    let workers = a.jobs.max(1).min(jobs.len());
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<std::sync::Mutex<Option<CliResult<String>>>> =
        jobs.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some((p, d)) = jobs.get(i) else { break };
                let r = scenario_into(a, Some(p), d);
                *results[i].lock().expect("worker panicked") = Some(r);
            });
        }
    });
    let mut first_err = None;
    for r in results {
        match r.into_inner().expect("worker panicked").expect("every job runs") {
            Ok(line) => println!("{line}"),
            Err(e) => {
                eprintln!("error: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match &cli.command {
        Command::Riemann { left, right, json } => cmd_riemann(left, right, *json),
        Command::Interact { sigma1, rho_minus, epsilon, json } => cmd_interact(*sigma1, *rho_minus, *epsilon, *json),
        Command::Scenario(a) => cmd_scenario(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Engine(err) = &e {
                if let Error::Vacuum { rho, .. } = err.root_cause() {
                    eprintln!("limiting density: {rho:e}");
                }
            }
            ExitCode::from(e.code())
        }
    }
}
