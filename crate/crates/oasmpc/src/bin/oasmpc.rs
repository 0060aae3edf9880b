//! Batch driver for the adaptive-relaxation dispatch study.
//!
//! Exit codes: 0 success, 1 generic/verify failure, 2 infeasible nominal
//! problem, 3 bad input, 4 I/O failure.

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use oasmpc::microgrid::REFERENCE_SEED;
use oasmpc::selfcheck;
use oasmpc::sim::{
    parse_config_file, run_simulation, sweep, write_outputs, RunConfig, ScenarioSource, SimError,
    TestCase,
};
use oasmpc::theory::{run_ideal_oracle, to_f64, Rational};

#[derive(Parser)]
#[command(name = "oasmpc", version, about = "Adaptive-relaxation battery dispatch simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one test case over a scenario and write the output CSVs.
    Run(RunArgs),
    /// Run seeds x cases concurrently and write per-combination outputs.
    Sweep(SweepArgs),
    /// Simulate the ideal-control policy and export the trace.
    Oracle(OracleArgs),
    /// Run the built-in invariant suites.
    Verify,
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value configuration file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    test_case: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    days: Option<usize>,
    /// Scenario CSV (timestamp_iso8601, pv_forecast_kw, load_forecast_kw,
    /// pv_actual_kw, load_actual_kw).
    #[arg(long)]
    scenario_csv: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write the first step's LP in plain text.
    #[arg(long)]
    dump_lp: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seed list.
    #[arg(long, default_value = "1,2,3,4,5")]
    seeds: String,
    /// Comma-separated case list, or `all`.
    #[arg(long, default_value = "all")]
    cases: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    days: Option<usize>,
}

#[derive(Args)]
struct OracleArgs {
    /// Target violation probability as `num/den`.
    #[arg(long, default_value = "1/10")]
    alpha: String,
    /// Initial time-average as `num/den`.
    #[arg(long, default_value = "0/1")]
    y0: String,
    #[arg(long, default_value_t = 9)]
    t0: u64,
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Verify => cmd_verify(),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

fn classify(err: &anyhow::Error) -> u8 {
    if let Some(sim) = err.downcast_ref::<SimError>() {
        return match sim {
            SimError::Infeasible { .. } => 2,
            SimError::BadInput(_) | SimError::Adapt(_) | SimError::Lti(_) => 3,
            SimError::Scenario(m) => match m {
                oasmpc::microgrid::MgError::Io(_) => 4,
                _ => 3,
            },
            SimError::Io(_) => 4,
            _ => 1,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 4;
    }
    1
}

fn base_config(config: &Option<PathBuf>) -> anyhow::Result<RunConfig> {
    match config {
        Some(path) => {
            parse_config_file(path).with_context(|| format!("loading {}", path.display()))
        }
        None => Ok(RunConfig::reference(TestCase::OaSmpc1)),
    }
}

fn cmd_run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = base_config(&args.config)?;
    if let Some(case) = &args.test_case {
        cfg.test_case = TestCase::parse(case)?;
        if cfg.test_case == TestCase::OaSmpc2 && cfg.restart_step.is_none() {
            cfg.restart_step = RunConfig::reference(TestCase::OaSmpc2).restart_step;
        }
        if cfg.test_case != TestCase::OaSmpc2 {
            cfg.restart_step = None;
        }
    }
    if let Some(path) = args.scenario_csv {
        cfg.scenario = ScenarioSource::Csv(path);
    } else if args.seed.is_some() || args.days.is_some() {
        let (mut seed, mut days, params) = match &cfg.scenario {
            ScenarioSource::Synthetic { seed, days, params } => (*seed, *days, params.clone()),
            _ => (REFERENCE_SEED, 365, Default::default()),
        };
        if let Some(s) = args.seed {
            seed = s;
        }
        if let Some(d) = args.days {
            days = d;
        }
        cfg.scenario = ScenarioSource::Synthetic { seed, days, params };
    }
    cfg.out_dir = Some(args.out.clone());
    cfg.dump_lp = args.dump_lp;

    let trace = run_simulation(&cfg)?;
    let files = write_outputs(&trace, &cfg)?;
    let summary = trace.year_summary(&cfg.tariff, &cfg.bess)?;
    print!(
        "{}",
        summary.render_table(&format!("{} results", cfg.test_case), trace.final_y())
    );
    println!(
        "wrote {}, {}, {}, {}",
        files.trace_csv.display(),
        files.monthly_bills_csv.display(),
        files.yearly_summary_csv.display(),
        files.fig_data_csv.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<ExitCode> {
    let mut base = base_config(&args.config)?;
    base.out_dir = Some(args.out.clone());
    if let Some(days) = args.days {
        if let ScenarioSource::Synthetic { seed, params, .. } = &base.scenario {
            base.scenario = ScenarioSource::Synthetic {
                seed: *seed,
                days,
                params: params.clone(),
            };
        }
    }
    let seeds: Vec<u64> = args
        .seeds
        .split(',')
        .map(|s| s.trim().parse::<u64>().context("bad seed list"))
        .collect::<anyhow::Result<_>>()?;
    let cases: Vec<TestCase> = if args.cases == "all" {
        TestCase::ALL.to_vec()
    } else {
        args.cases
            .split(',')
            .map(|s| TestCase::parse(s.trim()).map_err(Into::into))
            .collect::<anyhow::Result<_>>()?
    };
    let runs = sweep(&base, &seeds, &cases)?;
    println!("case          seed   total_cost   cycles   y_end");
    let mut sorted = runs;
    sorted.sort_by_key(|(s, c, _)| (*s, c.as_str()));
    for (seed, case, trace) in &sorted {
        let summary = trace.year_summary(&base.tariff, &base.bess)?;
        println!(
            "{:<13} {:>4}   {:>10.2}   {:>6.1}   {:.3}",
            case.as_str(),
            seed,
            summary.total,
            summary.bess_cycles,
            trace.final_y()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_ratio(text: &str) -> anyhow::Result<Rational> {
    let (num, den) = text
        .split_once('/')
        .ok_or_else(|| anyhow::anyhow!("expected num/den, got `{text}`"))?;
    Ok(Rational::new(
        num.trim().parse::<i128>().context("bad numerator")?,
        den.trim().parse::<i128>().context("bad denominator")?,
    ))
}

fn cmd_oracle(args: OracleArgs) -> anyhow::Result<ExitCode> {
    let alpha = parse_ratio(&args.alpha)?;
    let y0 = parse_ratio(&args.y0)?;
    let trace = run_ideal_oracle(alpha, y0, args.t0, args.steps)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path)?;
            trace
                .write_csv(std::io::BufWriter::new(file))
                .map_err(|e| anyhow::anyhow!(e.to_string()))?;
            println!(
                "t0={} steps={} final |Y - alpha| = {:.3e}; trace written to {}",
                args.t0,
                args.steps,
                to_f64(trace.final_z()),
                path.display()
            );
        }
        None => {
            trace
                .write_csv(std::io::stdout().lock())
                .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify() -> anyhow::Result<ExitCode> {
    let mut failed = false;
    for check in selfcheck::run_all() {
        match check.outcome {
            Ok(()) => println!("PASS {}", check.name),
            Err(detail) => {
                failed = true;
                println!("FAIL {} - {detail}", check.name);
            }
        }
    }
    Ok(if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}
