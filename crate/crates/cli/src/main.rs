use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use satqkd_core::montecarlo::simulate_hbt;
use satqkd_core::scenario::{
    builtin_names, builtin_scenario, emit_csv, last_positive_loss, resolve_scenario, run_sweep, write_csv, Method,
    Mode,
};
use satqkd_core::source::{kappa_from_counts, multiphoton_bound, PhotonNumberDistribution, SourceModel};
use satqkd_core::Error;

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "satqkd", version, about = "Finite-size key lengths for satellite BB84 passes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep channel loss for a scenario and write the key-length table as CSV.
    Run {
        /// Built-in scenario name or path to a scenario file.
        #[arg(long)]
        scenario: String,
        /// analytic, mc or both; overrides the scenario's mode.
        #[arg(long)]
        mode: Option<Mode>,
        /// Master seed for Monte Carlo runs; overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV. Defaults to stdout, or `<name>.csv` and `<name>_mc.csv`
        /// in mode `both`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in scenarios.
    ListScenarios,
    /// Simulate an HBT measurement and evaluate the multi-photon bound.
    Hbt {
        #[arg(long)]
        p1: f64,
        #[arg(long)]
        p2: f64,
        /// Bench detection efficiency.
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        slots: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Dark-count probability per APD per slot.
        #[arg(long, default_value_t = 0.0)]
        dark: f64,
    },
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

fn mc_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}_mc.{}", ext.to_string_lossy()),
        None => format!("{stem}_mc"),
    };
    out.with_file_name(name)
}

fn run(scenario: &str, mode: Option<Mode>, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Failure> {
    let mut scenario = resolve_scenario(scenario).map_err(Failure::Config)?;
    if let Some(mode) = mode {
        scenario.mode = mode;
        scenario.validate().map_err(Failure::Config)?;
    }
    if let Some(seed) = seed {
        scenario.seed = seed;
    }

    let methods: &[Method] = match scenario.mode {
        Mode::Analytic => &[Method::Analytic],
        Mode::Mc => &[Method::MonteCarlo],
        Mode::Both => &[Method::Analytic, Method::MonteCarlo],
    };
    let out = match (&out, scenario.mode) {
        (None, Mode::Both) => Some(PathBuf::from(format!("{}.csv", scenario.name))),
        _ => out,
    };

    for &method in methods {
        let rows = run_sweep(&scenario, method);
        let label = match method {
            Method::Analytic => "analytic",
            Method::MonteCarlo => "mc",
        };
        match last_positive_loss(&rows) {
            Some(loss) => eprintln!("{} ({label}): last positive key at {loss} dB", scenario.name),
            None => eprintln!("{} ({label}): no positive key in sweep", scenario.name),
        }
        match &out {
            Some(path) => {
                let path = match (scenario.mode, method) {
                    (Mode::Both, Method::MonteCarlo) => mc_path(path),
                    _ => path.clone(),
                };
                emit_csv(&rows, &path).map_err(Failure::Runtime)?;
                eprintln!("wrote {}", path.display());
            }
            None => {
                let stdout = std::io::stdout();
                write_csv(&rows, stdout.lock()).map_err(|e| {
                    Failure::Runtime(Error::Io {
                        path: "<stdout>".into(),
                        message: e.to_string(),
                    })
                })?;
            }
        }
    }
    Ok(())
}

fn list_scenarios() {
    let mut stdout = std::io::stdout().lock();
    for name in builtin_names() {
        let s = builtin_scenario(name).expect("listed scenario exists");
        let description = match s.source {
            SourceModel::Qd(qd) => format!(
                "QD {} MHz, internal loss {} dB, P_m {:e}",
                qd.rep_rate_hz / 1e6,
                qd.internal_loss_db,
                qd.multiphoton
            ),
            SourceModel::Wcp(w) => format!(
                "WCP {} MHz, mu {}, nu {}, K_mu {}",
                w.rep_rate_hz / 1e6,
                w.mu,
                w.nu,
                w.signal_fraction
            ),
        };
        let _ = writeln!(stdout, "{name:<16} {description}");
    }
}

fn hbt(p1: f64, p2: f64, eta: f64, slots: u64, seed: u64, dark: f64) -> Result<(), Failure> {
    let dist = PhotonNumberDistribution::truncated(1.0 - p1 - p2, p1, p2).map_err(Failure::Config)?;
    let m = simulate_hbt(&dist, eta, slots, dark, seed).map_err(Failure::Config)?;
    println!("slots: {}", m.slots);
    println!("coincidences: {}", m.coincidences);
    println!("solitary: {}", m.solitary);
    let kappa = kappa_from_counts(&m).map_err(Failure::Runtime)?;
    println!("kappa: {kappa:e}");
    let bound = multiphoton_bound(kappa, eta, p1 + p2).map_err(Failure::Runtime)?;
    println!("multiphoton_bound: {bound:e}");
    println!("p2: {p2:e}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            mode,
            seed,
            out,
        } => run(&scenario, mode, seed, out),
        Command::ListScenarios => {
            list_scenarios();
            Ok(())
        }
        Command::Hbt {
            p1,
            p2,
            eta,
            slots,
            seed,
            dark,
        } => hbt(p1, p2, eta, slots, seed, dark),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
