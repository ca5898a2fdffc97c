//! Command-line front end: scenarios, sweeps, config checks and oracle dumps.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pqsim::runner::config::{read_config_text, SimConfig};
use pqsim::runner::scenario::Scenario;
use pqsim::runner::sweep::sweep;
use pqsim::spin::oracle_constants;
use pqsim::SimError;

const EXIT_ACCEPTANCE: u8 = 3;

#[derive(Parser)]
#[command(name = "pqsim", version, about = "Planar squeezing by QND probing of spin-1 ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a figure-reproduction scenario and check its thresholds.
    Run {
        /// fig3, fig4a, fig4b, fig5 or fig6.
        scenario: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run the Cartesian product of the config's sweep axes.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Parse and validate a config, then print it with derived quantities.
    ValidateConfig {
        #[command(flatten)]
        common: Common,
    },
    /// Print constants regenerated from the spin-1 operator matrices.
    Oracle,
}

#[derive(Args)]
struct Common {
    /// TOML config file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for sampled outcomes.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// `section.key=value`, applied after the config file. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, value_enum)]
    outcome_mode: Option<OutcomeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutcomeArg {
    Mean,
    Sampled,
}

impl Common {
    fn overrides(&self) -> Vec<String> {
        let mut all = self.overrides.clone();
        if let Some(seed) = self.seed {
            all.push(format!("outcome.seed={seed}"));
        }
        if let Some(mode) = self.outcome_mode {
            let name = match mode {
                OutcomeArg::Mean => "mean",
                OutcomeArg::Sampled => "sampled",
            };
            all.push(format!("outcome.mode=\"{name}\""));
        }
        all
    }

    fn config(&self, preset: &[&str]) -> pqsim::Result<SimConfig> {
        let text = read_config_text(self.config.as_deref())?;
        SimConfig::layered(preset, &text, &self.overrides())
    }
}

fn execute(cli: Cli) -> pqsim::Result<ExitCode> {
    match cli.command {
        Command::Run { scenario, common } => {
            let scenario: Scenario = scenario.parse()?;
            let config = common.config(scenario.preset())?;
            let out = scenario.run(&config)?;
            out.write(&common.out)?;
            for c in &out.checks {
                println!("{}", c.line());
            }
            println!("checks written to {}", out.checks_path(&common.out).display());
            Ok(if out.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_ACCEPTANCE)
            })
        }
        Command::Sweep { common } => {
            let config = common.config(&[])?;
            let out = sweep(&config)?;
            out.write(&common.out)?;
            for row in out.rows() {
                match row.min_xi_par2 {
                    Some(v) => println!(
                        "{} alpha0={} x={} mode={:?}: min xi_par2 = {v:.4}",
                        row.cell_id, row.alpha0, row.x, row.mode
                    ),
                    None => println!("{} failed: {}", row.cell_id, row.error),
                }
            }
            println!(
                "{} cells, {} failed; table written to {}",
                out.cells.len(),
                out.failures(),
                out.table_path(&common.out).display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateConfig { common } => {
            let config = common.config(&[])?;
            let resolved = config.resolve()?;
            print!("{}", config.to_toml_string()?);
            println!("\n# derived");
            let derived = toml::to_string(&resolved).map_err(|e| SimError::Io(e.to_string()))?;
            for line in derived.lines() {
                println!("# {line}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle => {
            let text = serde_json::to_string_pretty(&oracle_constants()?)
                .map_err(|e| SimError::Io(e.to_string()))?;
            println!("{text}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
