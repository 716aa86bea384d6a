use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use sentinel_cli::demo::{run_demo, DemoKind, DemoSettings};
use sentinel_cli::{commands, exit_code, RunConfig, EXIT_MATH, EXIT_OK, EXIT_USAGE};

#[derive(Parser, Debug)]
#[command(name = "sentinel", version, about = "Data-driven identification of attack-free sensors")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Plant order n (depth of the history state)
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Number of sensors N
    #[arg(long, global = true)]
    sensors: Option<usize>,
    /// Maximum number of attacked sensors M
    #[arg(long, global = true, default_value_t = 1)]
    max_attacked: usize,
    /// Training horizon T
    #[arg(long, global = true)]
    horizon: Option<usize>,
    /// Test window T1
    #[arg(long, global = true)]
    test_len: Option<usize>,
    #[arg(long, global = true, env = "SENTINEL_SEED", default_value_t = 7)]
    seed: u64,
    /// Relative singular-value cutoff for rank decisions
    #[arg(long, global = true)]
    rank_tol: Option<f64>,
    /// Absolute and relative residual tolerance
    #[arg(long, global = true)]
    res_tol: Option<f64>,
    /// Output file, or directory for `demo`
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reproduce one attack scenario on the three-mass benchmark
    Demo {
        #[arg(value_enum)]
        attack: Attack,
    },
    /// Learn subset predictors from an attack-free trajectory CSV
    Learn { trajectory: PathBuf },
    /// Run an identification algorithm on a stream CSV
    Identify {
        #[arg(value_enum)]
        mode: Attack,
        stream: PathBuf,
        /// Learned model (injection)
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated relative degrees (delay)
        #[arg(long, value_delimiter = ',')]
        relative_degrees: Option<Vec<usize>>,
        /// Plant model used for relative degrees when none are given (delay)
        #[arg(long)]
        plant: Option<PathBuf>,
    },
    /// Check persistency of excitation of the inputs in a CSV
    CheckPe {
        input: PathBuf,
        #[arg(long)]
        order: usize,
    },
    /// Simulate a plant (the benchmark by default), optionally under attack
    Simulate {
        #[arg(long)]
        plant: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        len: Option<usize>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Attack {
    Injection,
    Delay,
    Replay,
}

impl From<Attack> for DemoKind {
    fn from(a: Attack) -> Self {
        match a {
            Attack::Injection => DemoKind::Injection,
            Attack::Delay => DemoKind::Delay,
            Attack::Replay => DemoKind::Replay,
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    let text = if text.ends_with('\n') { text.to_string() } else { format!("{text}\n") };
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    let c = &cli.common;
    let cfg = RunConfig {
        n: c.n,
        sensors: c.sensors,
        max_attacked: c.max_attacked,
        horizon: c.horizon,
        test_len: c.test_len,
        seed: c.seed,
        ..RunConfig::default()
    }
    .with_tolerances(c.rank_tol, c.res_tol);
    cfg.validate()?;
    let out = c.out.as_deref();
    match cli.command {
        Command::Demo { attack } => {
            cfg.check_order(6)?;
            cfg.check_sensors(3)?;
            let defaults = DemoSettings::default();
            let settings = DemoSettings {
                seed: cfg.seed,
                max_attacked: cfg.max_attacked,
                horizon: cfg.horizon.unwrap_or(defaults.horizon),
                test_len: cfg.test_len.unwrap_or(defaults.test_len),
                tol: cfg.tol,
                ..defaults
            };
            let report = run_demo(attack.into(), &settings, out)?;
            eprintln!("{}", report.summary);
            if out.is_none() {
                println!("{}", report.verdict.to_json()?);
            }
            if report.expected {
                Ok(EXIT_OK)
            } else {
                eprintln!("verdict does not match the expected outcome");
                Ok(EXIT_MATH)
            }
        }
        Command::Learn { trajectory } => match commands::learn(&trajectory, &cfg) {
            Ok(model) => {
                emit(out, &model.to_json()?)?;
                Ok(EXIT_OK)
            }
            Err(e) if e.is_mathematical() => {
                eprintln!("error: {e}");
                if let Ok(report) = commands::rank_failures(&trajectory, &cfg) {
                    eprintln!("failing subsets: {report}");
                }
                Ok(EXIT_MATH)
            }
            Err(e) => Err(e.into()),
        },
        Command::Identify { mode, stream, model, relative_degrees, plant } => {
            let verdict = match mode {
                Attack::Injection => {
                    let model = model.context("injection identification needs --model")?;
                    commands::identify_injection(&model, &stream, &cfg)?
                }
                Attack::Replay => commands::identify_replay_file(&stream, &cfg)?,
                Attack::Delay => commands::identify_delay_file(&stream, relative_degrees.as_deref(), plant.as_deref(), &cfg)?,
            };
            emit(out, &verdict.to_json()?)?;
            Ok(EXIT_OK)
        }
        Command::CheckPe { input, order } => {
            let (pass, report) = commands::check_pe(&input, order, &cfg)?;
            emit(out, &serde_json::to_string_pretty(&report)?)?;
            Ok(if pass { EXIT_OK } else { EXIT_MATH })
        }
        Command::Simulate { plant, scenario, input, len } => {
            let traj = commands::simulate_cmd(plant.as_deref(), scenario.as_deref(), input.as_deref(), len, &cfg)?;
            emit(out, &traj.to_csv_string())?;
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            err.downcast_ref::<sentinel_core::Error>().map_or(EXIT_USAGE, exit_code)
        }
    };
    ExitCode::from(code as u8)
}
