use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use levycal::config::RunConfig;
use levycal::error::{CliError, Result};
use levycal::{
    config_from_report, ingest_samples, preprocess_financial, run_experiment, simulate_values, write_samples,
    OutOfBand, PreprocessSpec,
};
use levycal_core::TorusGrid;

#[derive(Parser)]
#[command(
    name = "levycal",
    version,
    about = "Calibrate Lévy jump measures on the torus from terminal samples"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration; defaults are used for missing keys.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set n_space=210`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        match &self.config {
            Some(path) => RunConfig::load(path, &self.overrides),
            None => RunConfig::from_toml_str("", &self.overrides),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit the configured data and write report.json plus CSV files.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Re-run the configuration echoed in an earlier report.
        #[arg(long, conflicts_with_all = ["config", "overrides"])]
        from_report: Option<PathBuf>,
        /// Output directory (overrides `output_dir`).
        #[arg(long, short)]
        output_dir: Option<PathBuf>,
    },
    /// Write simulated terminal values, one per line.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Map raw log-returns onto the torus and report drift and diffusion.
    Preprocess {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, default_value_t = -0.03, allow_negative_numbers = true)]
        band_lo: f64,
        #[arg(long, default_value_t = 0.03)]
        band_hi: f64,
        /// Share of the empirical variance attributed to diffusion.
        #[arg(long, default_value_t = 0.25)]
        fraction: f64,
        #[arg(long, default_value = "wrap", value_parser = parse_out_of_band)]
        out_of_band: OutOfBand,
        #[arg(long, default_value_t = -std::f64::consts::PI, allow_negative_numbers = true)]
        omega_a: f64,
        #[arg(long, default_value_t = std::f64::consts::PI, allow_negative_numbers = true)]
        omega_b: f64,
    },
}

fn parse_out_of_band(s: &str) -> std::result::Result<OutOfBand, String> {
    match s {
        "wrap" => Ok(OutOfBand::Wrap),
        "discard" => Ok(OutOfBand::Discard),
        _ => Err(format!("expected `wrap` or `discard`, got `{s}`")),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            from_report,
            output_dir,
        } => {
            let cfg = match from_report {
                Some(path) => config_from_report(&path)?,
                None => config.load()?,
            };
            let dir = output_dir
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("levycal-out"));
            let exp = run_experiment(&cfg)?;
            let written = exp.write_artifacts(&dir)?;
            for path in &written {
                info!("wrote {}", path.display());
            }
            if let Some(err) = exp.failure {
                return Err(err.into());
            }
            let r = &exp.report;
            if let Some(sel) = &r.selected {
                println!("selected n_theta = {}", sel.n_theta);
                println!("alpha_star = {:?}", sel.alpha_star);
                println!(
                    "j_eps = {}  aic = {}  converged = {}",
                    sel.j_eps, sel.aic, sel.converged
                );
            }
            println!("report: {}", dir.join("report.json").display());
            Ok(())
        }
        Command::Simulate { config, output } => {
            let cfg = config.load()?;
            cfg.validate()?;
            let grid = cfg.grid()?;
            let values = simulate_values(&cfg, &grid)?;
            let header = [
                format!(
                    "simulate = {:?}, seed = {}, samples = {}",
                    cfg.simulate,
                    cfg.seed,
                    values.len()
                ),
                format!(
                    "drift_b = {}, sigma2 = {}, t_final = {}",
                    cfg.drift_b, cfg.sigma2, cfg.t_final
                ),
                "unwrapped terminal values".to_string(),
            ];
            write_samples(&output, &values, &header)?;
            println!("wrote {} samples to {}", values.len(), output.display());
            Ok(())
        }
        Command::Preprocess {
            input,
            output,
            band_lo,
            band_hi,
            fraction,
            out_of_band,
            omega_a,
            omega_b,
        } => {
            let spec = PreprocessSpec {
                band_lo,
                band_hi,
                diffusion_fraction: fraction,
                out_of_band,
            };
            // Only the period and origin matter for the mapping.
            let grid = TorusGrid::new(omega_a, omega_b, 64)?;
            let raw = ingest_samples(&input)?;
            let pre = preprocess_financial(&raw, &spec, &grid)?;
            let header = [
                format!("torus values from {}", input.display()),
                format!(
                    "b_torus = {}, sigma2_torus = {}",
                    pre.moments.b_torus, pre.moments.sigma2_torus
                ),
            ];
            write_samples(&output, &pre.values, &header)?;
            println!("{}", serde_json::to_string_pretty(&pre)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Core(levycal_core::Error::StepTooLarge { .. }) = e {
                eprintln!("hint: raise `n_time`, set `n_time = 0` to derive it, or set `force = true`");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &CliError) -> u8 {
    e.exit_code() as u8
}
