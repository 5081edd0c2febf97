use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use si_nonlinear::config::RunConfig;
use si_nonlinear::pipeline::{self, FomInput, PowerSpec, SimulateOptions};
use si_nonlinear::{Error, Result};

/// Nonlinear pulse propagation and coefficient extraction for silicon waveguides.
#[derive(Parser)]
#[command(name = "sinl", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration. Without it, `--set` must supply waveguide.a_eff_um2.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set grid.samples=1024`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory; defaults to paths.output_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate one pulse and sweep the transmission; optionally synthesize scans and spectra.
    Simulate {
        /// Average waveguide input power (mW).
        #[arg(long, conflicts_with = "peak_w")]
        avg_mw: Option<f64>,
        /// Peak waveguide input power (W).
        #[arg(long)]
        peak_w: Option<f64>,
        #[arg(long)]
        temperature: Option<f64>,
        /// Write fiber-to-fiber on/off scans to scans.csv.
        #[arg(long)]
        synth_scans: bool,
        /// Write output spectra to spectra/.
        #[arg(long)]
        synth_spectra: bool,
    },
    /// Fit bidirectional power scans and report β per temperature.
    FitTransmission {
        #[arg(required = true)]
        scans: Vec<PathBuf>,
    },
    /// Retrieve the nonlinear phase from output spectra.
    RetrievePhase {
        #[arg(long)]
        spectra: PathBuf,
        /// fit_transmission.json from `fit-transmission`.
        #[arg(long)]
        fit: PathBuf,
    },
    /// Fit retrieved phases for γ and n₂.
    FitPhase {
        /// Output directory of `retrieve-phase`.
        #[arg(long)]
        phases: PathBuf,
    },
    /// Tabulate β, n₂, σ and FOM over temperature.
    Material {
        #[arg(long, value_delimiter = ',', default_value = "5.5,50,150,300")]
        temperatures: Vec<f64>,
        /// Use this β (cm/GW) instead of the TPA model.
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Heralding metrics of a pair source.
    Herald {
        #[arg(long)]
        p_pair: f64,
        /// Spectral purity, below 1.
        #[arg(long)]
        purity: f64,
        #[arg(long, conflicts_with = "temperature", required_unless_present = "temperature")]
        fom: Option<f64>,
        /// Take the FOM from the configured coefficients at this temperature (K).
        #[arg(long)]
        temperature: Option<f64>,
    },
}

fn load_config(c: &Common) -> Result<RunConfig> {
    match &c.config {
        Some(p) => RunConfig::load(p, &c.overrides),
        None => RunConfig::from_json("{}", &c.overrides),
    }
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let cfg = load_config(&cli.common)?;
    let out = cli.common.out.clone().unwrap_or_else(|| cfg.paths.output_dir.clone());
    let out: &Path = &out;
    match cli.command {
        Command::Simulate {
            avg_mw,
            peak_w,
            temperature,
            synth_scans,
            synth_spectra,
        } => {
            let opts = SimulateOptions {
                power: avg_mw.map(PowerSpec::AverageMw).or(peak_w.map(PowerSpec::PeakW)),
                temperature_k: temperature,
                synthesize_scans: synth_scans,
                synthesize_spectra: synth_spectra,
            };
            let s = pipeline::cmd_simulate(&cfg, &opts, out)?;
            println!(
                "peak {:.4} W, transmission {:.6}, peak phase {:.4} rad -> {}",
                s.peak_power_w,
                s.transmission,
                s.peak_phase_rad,
                out.display()
            );
        }
        Command::FitTransmission { scans } => {
            let r = pipeline::cmd_fit_transmission(&cfg, &scans, out)?;
            for row in &r.series {
                println!(
                    "T = {} K: beta = {:.4} cm/GW over {} pair(s)",
                    row.temperature_k, row.beta_mean_cm_per_gw, row.pairs
                );
            }
        }
        Command::RetrievePhase { spectra, fit } => {
            let r = pipeline::cmd_retrieve_phase(&cfg, &spectra, &fit, out)?;
            for e in &r.entries {
                println!(
                    "{} mW: error {:.3e} after {} iterations{}",
                    e.power_mw,
                    e.final_error,
                    e.iterations,
                    if e.reference { " (reference)" } else { "" }
                );
            }
        }
        Command::FitPhase { phases } => {
            let r = pipeline::cmd_fit_phase(&cfg, &phases, out)?;
            println!("n2 = {:.4e} m^2/W at {} K", r.n2_m2_per_w, r.temperature_k);
        }
        Command::Material { temperatures, beta } => {
            print_json(&pipeline::cmd_material(&cfg, &temperatures, beta, out)?)?;
        }
        Command::Herald {
            p_pair,
            purity,
            fom,
            temperature,
        } => {
            let input = match (fom, temperature) {
                (Some(f), _) => FomInput::Given(f),
                (None, Some(t)) => FomInput::Temperature(t),
                (None, None) => unreachable!("clap requires one of --fom and --temperature"),
            };
            let out_dir = cli.common.out.as_deref();
            print_json(&pipeline::cmd_herald(&cfg, p_pair, purity, input, out_dir)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
