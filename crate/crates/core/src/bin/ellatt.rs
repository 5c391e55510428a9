use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ellipsoidal_attitude::scenario::{
    emit_trace, load_config, median, paper_sec5, run_scenario, run_seeds, seeded_path, summarize, ScenarioConfig,
    ScenarioError, TraceFormat,
};
use ellipsoidal_attitude::selftest;

#[derive(Parser)]
#[command(name = "ellatt", version, about = "Set-membership attitude estimation from single direction measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a config file and write its trace.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = TraceFormat::Csv)]
        format: TraceFormat,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of consecutive seeds to run; traces go to `<out>_seed<N>.<ext>`.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
    },
    /// Run the bundled spacecraft scenario and print the terminal-error summary.
    ReplicatePaper {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = TraceFormat::Csv)]
        format: TraceFormat,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

fn fail(err: &ScenarioError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.exit_code() as u8)
}

/// Runs the requested seeds and writes one trace per seed. A single seed
/// writes to `out` as given.
fn run_and_write(cfg: &ScenarioConfig, out: &Path, format: TraceFormat, seeds: usize) -> Result<Vec<(u64, f64, f64, f64)>, ScenarioError> {
    if seeds == 0 {
        return Err(ScenarioError::Invalid {
            field: "seeds".into(),
            message: "must be at least 1".into(),
        });
    }
    let runs = if seeds == 1 {
        vec![(cfg.seed, run_scenario(cfg))]
    } else {
        run_seeds(cfg, seeds)
    };
    let mut rows = Vec::with_capacity(runs.len());
    for (seed, result) in runs {
        let records = result?;
        let path = if seeds == 1 { out.to_path_buf() } else { seeded_path(out, seed) };
        emit_trace(&records, &path, format)?;
        if let Some(s) = summarize(&records) {
            rows.push((seed, s.final_att_err_deg, s.final_rate_err, s.membership_rate));
        }
    }
    Ok(rows)
}

fn print_rows(rows: &[(u64, f64, f64, f64)]) {
    for (seed, att, rate, mem) in rows {
        println!("seed {seed}: terminal attitude error {att:.3} deg, angular velocity error {rate:.4} rad/s, membership {:.0}%", mem * 100.0);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            config,
            out,
            format,
            seed,
            seeds,
        } => {
            let mut cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            match run_and_write(&cfg, &out, format, seeds) {
                Ok(rows) => {
                    print_rows(&rows);
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::ReplicatePaper { out, format, seeds } => match run_and_write(&paper_sec5(), &out, format, seeds) {
            Ok(rows) => {
                print_rows(&rows);
                let att: Vec<f64> = rows.iter().map(|r| r.1).collect();
                let rate: Vec<f64> = rows.iter().map(|r| r.2).collect();
                if let (Some(a), Some(w)) = (median(&att), median(&rate)) {
                    println!("median terminal attitude error {a:.3} deg, angular velocity error {w:.4} rad/s over {} seeds", rows.len());
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Selftest => {
            let checks = selftest::run_all();
            for c in &checks {
                println!("{c}");
            }
            if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
    }
}
