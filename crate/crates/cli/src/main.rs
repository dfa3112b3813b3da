//! Command-line front end: generate scenarios, run one strategy, or compare
//! all three, writing CSV reports to an output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{Context, Result};
use chargecoord::engine::{run_simulation, EngineError, RunOptions, RunResult, Strategy};
use chargecoord::report;
use chargecoord::scenario::{
    generate_scenario, validate_scenario, GenerationConfig, Scenario, ScenarioError,
};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

const EXIT_RUNTIME: u8 = 1;
const EXIT_VALIDATION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "chargecoord",
    version,
    about = "Charging coordination simulator for electric trucks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated scenario file.
    Generate(GenerateArgs),
    /// Check a scenario file and list every problem found.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Simulate one strategy and write its reports.
    Run(RunArgs),
    /// Simulate several strategies on the same scenario and disturbances.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Template {
    PaperSv,
}

#[derive(Args)]
struct GenerateArgs {
    /// Generation config file (TOML); defaults to the paper-sv template.
    #[arg(long, conflicts_with = "template")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    template: Option<Template>,
    #[command(flatten)]
    overrides: GenOverrides,
    /// Scenario file to write.
    #[arg(long)]
    out: PathBuf,
}

/// Exactly one scenario source.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Generation config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in generation template.
    #[arg(long, value_enum)]
    template: Option<Template>,
}

#[derive(Args)]
struct GenOverrides {
    /// Generator seed, or disturbance seed when loading a scenario file.
    #[arg(long)]
    seed: Option<u64>,
    /// Truck count (generated scenarios only).
    #[arg(long)]
    trucks: Option<u32>,
    /// Station count (generated scenarios only).
    #[arg(long)]
    stations: Option<u32>,
    /// Charging ports per truck whose route passes a station.
    #[arg(long)]
    ports_per_truck: Option<f64>,
    /// Relative travel-time and energy uncertainty applied to every leg.
    #[arg(long)]
    uncertainty: Option<f64>,
    /// Collection and evaluation days, e.g. `2+8`.
    #[arg(long)]
    days: Option<DaySplit>,
}

#[derive(Args)]
struct Outputs {
    /// Directory for the CSV reports (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write the full event log.
    #[arg(long)]
    export_events: bool,
    /// Also write each station's forecast bins.
    #[arg(long)]
    export_forecast: bool,
    /// Keep updating forecasts after the collection days.
    #[arg(long)]
    keep_learning: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    overrides: GenOverrides,
    #[arg(long, default_value = "proposed")]
    strategy: Strategy,
    #[command(flatten)]
    outputs: Outputs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    overrides: GenOverrides,
    /// Strategies to compare, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "proposed,dynamic,offline"
    )]
    strategies: Vec<Strategy>,
    #[command(flatten)]
    outputs: Outputs,
}

#[derive(Clone, Copy, Debug)]
struct DaySplit {
    collection: u32,
    evaluation: u32,
}

impl FromStr for DaySplit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (c, e) = s
            .split_once('+')
            .ok_or_else(|| format!("expected COLLECTION+EVALUATION, got `{s}`"))?;
        let parse = |x: &str| x.trim().parse::<u32>().map_err(|e| format!("`{x}`: {e}"));
        Ok(DaySplit {
            collection: parse(c)?,
            evaluation: parse(e)?,
        })
    }
}

fn load_config(config: Option<&Path>) -> Result<GenerationConfig> {
    match config {
        Some(path) => Ok(GenerationConfig::load(path)?),
        None => Ok(GenerationConfig::paper_sv()),
    }
}

fn generate(mut cfg: GenerationConfig, o: &GenOverrides) -> Result<Scenario> {
    if let Some(n) = o.trucks {
        cfg.truck_count = n;
    }
    if let Some(n) = o.stations {
        cfg.station_count = n;
        cfg.corridor_count = cfg.corridor_count.min(n.max(1));
        cfg.stops_per_route.0 = cfg.stops_per_route.0.min(n);
        cfg.stops_per_route.1 = cfg.stops_per_route.1.min(n);
    }
    if let Some(x) = o.ports_per_truck {
        cfg.ports_per_truck = x;
    }
    if let Some(level) = o.uncertainty {
        cfg.uncertainty = level;
        cfg.feasibility_uncertainty = cfg.feasibility_uncertainty.max(level);
    }
    if let Some(d) = o.days {
        cfg.collection_days = d.collection;
        cfg.evaluation_days = d.evaluation;
    }
    Ok(generate_scenario(&cfg, o.seed.unwrap_or(1))?)
}

fn resolve(source: &Source, o: &GenOverrides) -> Result<Scenario> {
    let Some(path) = &source.scenario else {
        let cfg = match source.template {
            Some(Template::PaperSv) => GenerationConfig::paper_sv(),
            None => load_config(source.config.as_deref())?,
        };
        return generate(cfg, o);
    };
    if o.trucks.is_some() || o.stations.is_some() || o.ports_per_truck.is_some() {
        Cli::command()
            .error(
                ErrorKind::ArgumentConflict,
                "--trucks, --stations and --ports-per-truck only apply to generated scenarios",
            )
            .exit();
    }
    let mut s = Scenario::load(path)?;
    if let Some(seed) = o.seed {
        s.seed = seed;
    }
    if let Some(level) = o.uncertainty {
        s = s.with_uncertainty(level);
    }
    if let Some(d) = o.days {
        s.collection_days = d.collection;
        s.evaluation_days = d.evaluation;
    }
    Ok(s)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn simulate(
    scenario: &Scenario,
    strategies: &[Strategy],
    outputs: &Outputs,
) -> Result<Vec<RunResult>> {
    let options = |strategy| RunOptions {
        strategy,
        keep_learning: outputs.keep_learning,
        record_events: outputs.export_events,
    };
    let runs: Vec<Result<RunResult, EngineError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = strategies
            .iter()
            .map(|&st| scope.spawn(move || run_simulation(scenario, &options(st))))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    Ok(runs.into_iter().collect::<Result<_, _>>()?)
}

fn write_reports(scenario: &Scenario, results: &[RunResult], outputs: &Outputs) -> Result<()> {
    let dir = &outputs.out;
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write(dir, "scenario.toml", &scenario.to_toml())?;
    write(dir, "trips.csv", &report::trips_csv(results))?;
    write(dir, "daily.csv", &report::daily_csv(results))?;
    write(dir, "trucks.csv", &report::trucks_csv(results))?;
    write(dir, "stations.csv", &report::stations_csv(results))?;
    write(
        dir,
        "station_quantiles.csv",
        &report::station_quantiles_csv(results),
    )?;
    write(dir, "summary.csv", &report::summary_csv(results))?;
    let suffix = |r: &RunResult| {
        if results.len() == 1 {
            String::new()
        } else {
            format!("_{}", r.strategy)
        }
    };
    for r in results {
        if outputs.export_events {
            write(
                dir,
                &format!("events{}.csv", suffix(r)),
                &report::events_csv(&r.events),
            )?;
        }
        if outputs.export_forecast {
            write(
                dir,
                &format!("forecast{}.csv", suffix(r)),
                &report::forecast_csv(r),
            )?;
        }
    }
    Ok(())
}

/// Headline numbers; each is recomputable from trips.csv and summary.csv.
fn print_summary(results: &[RunResult]) {
    let baseline = results
        .iter()
        .find(|r| r.strategy == Strategy::Offline)
        .map(RunResult::mean_wait);
    for r in results {
        let s = report::summarize(r);
        let total_wait: f64 = r.evaluation_trips().map(|t| t.total_wait).sum();
        let total_delay: f64 = r.evaluation_trips().map(|t| t.delay()).sum();
        print!(
            "{}: {} evaluation trips, total wait {} min, mean wait {} min, total delay {} min, mean cost {} EUR",
            r.strategy, s.trips, total_wait, s.mean_wait, total_delay, s.mean_cost
        );
        if s.energy_violations > 0 {
            print!(", {} energy reserve breaches", s.energy_violations);
        }
        match baseline {
            Some(b) if r.strategy != Strategy::Offline => {
                println!(
                    ", wait reduction vs offline {}%",
                    report::reduction_percent(b, s.mean_wait)
                )
            }
            _ => println!(),
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => {
            let cfg = match (&args.config, args.template) {
                (Some(path), _) => GenerationConfig::load(path)?,
                (None, Some(Template::PaperSv) | None) => GenerationConfig::paper_sv(),
            };
            let scenario = generate(cfg, &args.overrides)?;
            scenario.save(&args.out)?;
            println!(
                "wrote {} ({} trucks, {} stations)",
                args.out.display(),
                scenario.trucks.len(),
                scenario.stations.len()
            );
        }
        Command::Validate { scenario } => {
            let s = Scenario::load(&scenario)?;
            let violations = validate_scenario(&s);
            if !violations.is_empty() {
                return Err(EngineError::Invalid(violations).into());
            }
            println!("{}: valid", scenario.display());
        }
        Command::Run(args) => {
            let scenario = resolve(&args.source, &args.overrides)?;
            let results = simulate(&scenario, &[args.strategy], &args.outputs)?;
            write_reports(&scenario, &results, &args.outputs)?;
            print_summary(&results);
        }
        Command::Compare(mut args) => {
            args.strategies.sort();
            args.strategies.dedup();
            let scenario = resolve(&args.source, &args.overrides)?;
            let results = simulate(&scenario, &args.strategies, &args.outputs)?;
            write_reports(&scenario, &results, &args.outputs)?;
            print_summary(&results);
        }
    }
    Ok(())
}

fn is_validation(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        matches!(
            cause.downcast_ref::<EngineError>(),
            Some(EngineError::Invalid(_))
        ) || matches!(
            cause.downcast_ref::<ScenarioError>(),
            Some(
                ScenarioError::Parse(_)
                    | ScenarioError::SchemaVersion(_)
                    | ScenarioError::InvalidField { .. }
            )
        )
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if let Some(EngineError::Invalid(violations)) = err.downcast_ref::<EngineError>() {
                eprintln!("error: scenario is invalid");
                for v in violations {
                    eprintln!("  {} {}: {}", v.entity, v.field, v.message);
                }
            } else {
                eprintln!("error: {err:#}");
            }
            ExitCode::from(if is_validation(&err) {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            })
        }
    }
}
