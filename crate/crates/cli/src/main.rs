use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use transport_cli::report::{Report, EXIT_CONFIG};
use transport_cli::run::run_scenario;
use transport_cli::scenario::{Format, Overrides, Scenario};
use transport_core::geometries;

/// Parallel transport, torsion, curvature and flat frames from declarative
/// JSON scenarios.
#[derive(Parser)]
#[command(name = "ptransport", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario and write its report.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Check a scenario against the schema without running it.
    Validate {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// List the built-in geometries.
    ListGeometries {
        #[arg(long, value_name = "json|csv")]
        format: Option<Format>,
    },
}

#[derive(Args)]
struct Flags {
    /// Write the report here instead of the config's output path or stdout.
    #[arg(long, value_name = "PATH")]
    output: Option<String>,
    #[arg(long, value_name = "json|csv")]
    format: Option<Format>,
    /// Seed for randomized checks.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Use fixed-step RK4 with this step; reports become byte-reproducible.
    #[arg(long, value_name = "H")]
    fixed_step: Option<f64>,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, fixed_step: self.fixed_step, format: self.format, output: self.output.clone() }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("PATH_TRANSPORT_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("PATH_TRANSPORT_THREADS must be a non-negative integer, got '{v}'"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn emit(text: &str, path: Option<&str>) -> Result<(), String> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("cannot write {p}: {e}")),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn config_failure(flags: &Flags, kind: &str, message: String) -> ExitCode {
    eprintln!("error: {message}");
    let report = Report::new("", "", "").failed(kind, message, EXIT_CONFIG);
    let _ = emit(&report.render(flags.format.unwrap_or_default()), flags.output.as_deref());
    ExitCode::from(EXIT_CONFIG as u8)
}

fn load(config: &PathBuf, flags: &Flags) -> Result<Scenario, ExitCode> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| config_failure(flags, "io", format!("cannot read {}: {e}", config.display())))?;
    Scenario::from_json(&text, &flags.overrides()).map_err(|e| config_failure(flags, e.kind(), e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG as u8);
    }
    match cli.command {
        Command::Run { config, flags } => {
            let scenario = match load(&config, &flags) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let start = Instant::now();
            let report = run_scenario(&scenario);
            eprintln!("{} on {}: {:.3} s", scenario.kind.name(), scenario.geometry.label, start.elapsed().as_secs_f64());
            if let Some(e) = &report.error {
                eprintln!("error ({}): {}", e.kind, e.message);
            }
            if let Err(e) = emit(&report.render(scenario.output.format), scenario.output.path.as_deref()) {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_CONFIG as u8);
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Command::Validate { config, flags } => match load(&config, &flags) {
            Ok(s) => {
                println!("valid: task {} on {} (config hash {})", s.kind.name(), s.geometry.label, s.hash);
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::ListGeometries { format } => {
            let entries: Vec<_> = geometries::BUILTIN_NAMES.iter().map(|n| geometries::builtin(n).expect("listed names resolve")).collect();
            match format {
                Some(Format::Json) => {
                    let v: Vec<_> = entries
                        .iter()
                        .map(|g| {
                            serde_json::json!({
                                "name": g.name,
                                "description": g.description,
                                "n": g.connection.chart().base_dim,
                                "m": g.connection.chart().fiber_dim,
                            })
                        })
                        .collect();
                    println!("{}", serde_json::to_string_pretty(&v).expect("serializable"));
                }
                Some(Format::Csv) => {
                    println!("name,n,m,description");
                    for g in &entries {
                        let c = g.connection.chart();
                        println!("{},{},{},\"{}\"", g.name, c.base_dim, c.fiber_dim, g.description.replace('"', "\"\""));
                    }
                }
                None => {
                    for g in &entries {
                        println!("{:<22}{}", g.name, g.description);
                    }
                }
            }
            ExitCode::SUCCESS
        }
    }
}
