use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cfmc::association::Scenario;
use cfmc::config::{parse_config, SimConfig};
use cfmc::fronthaul::ProcessingMode;
use cfmc::geometry::ApMode;
use cfmc::precoding::{precoder_complexity, Precoder};
use cfmc::propagation::FadingMode;
use cfmc::run::{run_command, sweep_command};
use cfmc::{Result, SimError};

#[derive(Parser)]
#[command(name = "cfmc", version, about = "Downlink simulator for co-existing multicell and cell-free massive MIMO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo simulation and write CSV results.
    Run(RunArgs),
    /// Repeat a run for several power-control exponents.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated alpha values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-0.5,0,0.5")]
        alphas: Vec<f64>,
    },
    /// Print fronthaul loads, per-node user caps and precoder complexity.
    FhReport(Overrides),
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct Overrides {
    /// TOML configuration file; absent keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
    #[arg(long, value_parser = parse_precoder)]
    precoder: Option<Precoder>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long, value_parser = parse_ap_mode)]
    ap_mode: Option<ApMode>,
    #[arg(long, value_parser = parse_fading)]
    fading: Option<FadingMode>,
    /// Fronthaul capacity per node in bit/s, or `off`.
    #[arg(long, value_parser = parse_fh_limit)]
    fh_limit: Option<FhLimit>,
}

#[derive(Clone, Copy)]
enum FhLimit {
    Off,
    Bps(f64),
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    T::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(s)).map_err(|e| e.to_string())
}

fn parse_scenario(s: &str) -> std::result::Result<Scenario, String> {
    parse_enum(s)
}

fn parse_precoder(s: &str) -> std::result::Result<Precoder, String> {
    parse_enum(s)
}

fn parse_ap_mode(s: &str) -> std::result::Result<ApMode, String> {
    parse_enum(s)
}

fn parse_fading(s: &str) -> std::result::Result<FadingMode, String> {
    parse_enum(s)
}

fn parse_fh_limit(s: &str) -> std::result::Result<FhLimit, String> {
    if s.eq_ignore_ascii_case("off") {
        return Ok(FhLimit::Off);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 => Ok(FhLimit::Bps(v)),
        _ => Err(format!("expected a positive bit rate or `off`, got `{s}`")),
    }
}

impl Overrides {
    fn resolve(&self) -> Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(p) => parse_config(p)?,
            None => SimConfig::default(),
        };
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.seed {
            cfg.master_seed = v;
        }
        if let Some(v) = self.scenario {
            cfg.scenario = v;
        }
        if let Some(v) = self.precoder {
            cfg.precoder = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.ap_mode {
            cfg.ap_mode = v;
        }
        if let Some(v) = self.fading {
            cfg.fading = v;
        }
        match self.fh_limit {
            Some(FhLimit::Off) => cfg.fronthaul_enforce = false,
            Some(FhLimit::Bps(v)) => {
                cfg.fronthaul_enforce = true;
                cfg.fh_limit_bps = v;
            }
            None => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn fh_report(cfg: &SimConfig) {
    let mut fh = cfg.fronthaul();
    println!("data load per user: {:.0} bit/s", fh.data_per_user());
    for mode in [ProcessingMode::Local, ProcessingMode::Joint] {
        fh.mode = mode;
        println!(
            "{mode:?}: weight load per user AP {:.0} bit/s, BS {:.0} bit/s; max users AP {}, BS {} at {:.3e} bit/s",
            fh.weight_per_user(cfg.n_ant_ap),
            fh.weight_per_user(cfg.n_ant_bs),
            fh.max_users(cfg.n_ant_ap),
            fh.max_users(cfg.n_ant_bs),
            fh.f_limit
        );
    }
    let c = precoder_complexity(
        cfg.n_serving_ap as u64,
        cfg.n_serving_bs as u64,
        cfg.n_ant_ap as u64,
        cfg.n_ant_bs as u64,
        cfg.n_pzf_ap as u64,
        cfg.n_pzf_bs as u64,
        cfg.r_jpzf as u64,
    );
    println!("precoder multiplications: central {}, local {}", c.central_mults, c.local_mults);
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.overrides.resolve()?;
            let summary = run_command(&cfg, &args.out)?;
            for f in &summary.files {
                println!("{}", f.display());
            }
        }
        Command::Sweep { run, alphas } => {
            if alphas.is_empty() {
                return Err(SimError::invalid("no alpha values given"));
            }
            let cfg = run.overrides.resolve()?;
            for s in sweep_command(&cfg, &alphas, &run.out)? {
                println!("{}", s.out_dir.display());
            }
        }
        Command::FhReport(o) => fh_report(&o.resolve()?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
