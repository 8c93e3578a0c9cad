//! Command-line front end.
//!
//! Exit status: 0 when every threshold passes, 1 on configuration or run
//! errors, 2 when a run completes but misses a threshold, 3 when a sweep
//! contains a failing run.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracwave::harness::{compare_report_files, run_scenario, sweep, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "fracwave",
    version,
    about = "Nonlocal viscous wave experiments"
)]
struct Cli {
    /// Output directory; overrides `output` in the scenario file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the scenario file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel forward solves.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Run { config: PathBuf },
    /// Tabulate metric differences between two report.json files.
    Compare { a: PathBuf, b: PathBuf },
    /// Run a scenario once per value of one parameter.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, num_args = 1.., required = true)]
        values: Vec<f64>,
    },
}

fn load(cli: &Cli, path: &Path) -> fracwave::Result<(ScenarioConfig, PathBuf)> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    cfg.output = Some(out.display().to_string());
    Ok((cfg, out))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Run { config } => load(&cli, config).and_then(|(cfg, out)| {
            let bundle = run_scenario(&cfg, &out)?;
            let r = &bundle.report;
            for (k, v) in &r.metrics {
                println!("{k:<40} {v:e}");
            }
            if let Some(e) = &r.error {
                eprintln!("error: {e}");
                return Ok(1);
            }
            println!("{} {}", r.experiment, if r.pass { "PASS" } else { "FAIL" });
            Ok(if r.pass { 0 } else { 2 })
        }),
        Command::Compare { a, b } => compare_report_files(a, b).map(|diff| {
            print!("{}", diff.table());
            0
        }),
        Command::Sweep {
            config,
            param,
            values,
        } => load(&cli, config).and_then(|(cfg, out)| {
            let summary = sweep(&cfg, param, values, &out)?;
            print!("{}", summary.csv());
            for (n, orders) in &summary.orders {
                let row: Vec<String> = orders
                    .iter()
                    .map(|o| o.map_or("-".into(), |x| format!("{x:.3}")))
                    .collect();
                println!("order {n}: {}", row.join(" "));
            }
            let all_ok = summary.reports.iter().all(|r| r.pass && r.error.is_none());
            Ok(if all_ok { 0 } else { 3 })
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
