mod render;
mod sweep;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use harq_delay::config::RunConfig;
use harq_delay::feedback::FeedbackParams;
use harq_delay::harq_analytics::delay_report;
use harq_delay::optimizer::optimize;
use harq_delay::simulator::{run as sim_run, run_traced, SimConfig};
use harq_delay::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Debug, Args)]
struct CommonOpts {
    /// Key-value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. --set channel.snr_d_db=5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Simulation seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for the optimizer and sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Parser)]
#[command(name = "harq-delay", about = "Delay analysis and optimization of IR-HARQ with asymmetric feedback detection", version)]
struct Cli {
    #[command(flatten)]
    common: CommonOpts,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the analytic delay report for an explicit policy.
    Analyze {
        /// Policy file written by `optimize` (merged over --config).
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Search for the delay-minimizing policy and write it to a policy file.
    Optimize {
        /// Where to store the best policy (loadable by analyze/simulate).
        #[arg(long)]
        policy_out: Option<PathBuf>,
    },
    /// Run the Monte Carlo oracle and compare against the analytics.
    Simulate {
        /// Policy file written by `optimize` (merged over --config).
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Write one tab-separated record per HARQ round to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Optimize across a swept variable for AFD, SFD and perfect feedback,
    /// emitting one CSV row per (point, scheme).
    Sweep,
}

fn load_config(common: &CommonOpts, policy: Option<&PathBuf>) -> anyhow::Result<RunConfig> {
    let mut text = String::new();
    if let Some(path) = &common.config {
        text = fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    }
    if let Some(path) = policy {
        let policy_text = fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        text.push('\n');
        text.push_str(&policy_text);
    }
    let mut overrides = Vec::new();
    for s in &common.sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| anyhow::anyhow!("--set expects KEY=VALUE, got {s:?}"))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    let mut cfg = RunConfig::parse(&text, &overrides)?;
    if let Some(seed) = common.seed {
        cfg.sim_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(common: &CommonOpts, body: &str) -> anyhow::Result<()> {
    match &common.out {
        Some(path) => fs::write(path, body)
            .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))?,
        None => print!("{body}"),
    }
    Ok(())
}

fn run() -> anyhow::Result<u8> {
    let cli = Cli::parse();
    if let Some(threads) = cli.common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().ok();
    }

    match &cli.command {
        Command::Analyze { policy } => {
            let cfg = load_config(&cli.common, policy.as_ref())?;
            let pol = cfg
                .policy()?
                .ok_or_else(|| anyhow::anyhow!("analyze needs policy.n (config or --policy)"))?;
            let fb = FeedbackParams::new(cfg.snr_f, pol.alphas.clone());
            match delay_report(&pol, &cfg.channel, &fb, &cfg.queue) {
                Ok(report) => {
                    let body = match cli.common.format {
                        Format::Text => render::report_text(&report),
                        Format::Csv => render::report_csv(&report),
                    };
                    emit(&cli.common, &body)?;
                    Ok(0)
                }
                Err(Error::UnstableQueue { rho }) => {
                    eprintln!("unstable queue: utilization {rho:.6} >= 1");
                    Ok(EXIT_INFEASIBLE)
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Optimize { policy_out } => {
            let cfg = load_config(&cli.common, None)?;
            let result = optimize(&cfg.problem())?;
            let body = match cli.common.format {
                Format::Text => render::optimize_text(&result),
                Format::Csv => render::optimize_csv(&result),
            };
            emit(&cli.common, &body)?;
            if let Some(path) = policy_out {
                fs::write(path, RunConfig::render_policy_file(&result.best_policy, result.objective))
                    .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))?;
            }
            Ok(if result.feasible { 0 } else { EXIT_INFEASIBLE })
        }
        Command::Simulate { policy, trace } => {
            let cfg = load_config(&cli.common, policy.as_ref())?;
            let pol = cfg
                .policy()?
                .ok_or_else(|| anyhow::anyhow!("simulate needs policy.n (config or --policy)"))?;
            let sim_cfg = SimConfig {
                policy: pol.clone(),
                channel: cfg.channel,
                feedback: FeedbackParams::new(cfg.snr_f, pol.alphas.clone()),
                queue: cfg.queue,
                num_packets: cfg.sim_num_packets,
                warmup_packets: cfg.sim_warmup_packets,
                seed: cfg.sim_seed,
                use_gaussian_mi: cfg.sim_use_gaussian_mi,
                occupy_during_feedback: cfg.sim_occupy_during_feedback,
            };
            let sim_report = match trace {
                Some(path) => {
                    let mut f = fs::File::create(path)
                        .map_err(|e| anyhow::anyhow!("cannot create {}: {e}", path.display()))?;
                    run_traced(&sim_cfg, &mut f)?
                }
                None => sim_run(&sim_cfg)?,
            };
            let analytic = delay_report(&pol, &cfg.channel, &sim_cfg.feedback, &cfg.queue).ok();
            let body = match cli.common.format {
                Format::Text => render::simulate_text(&sim_report, analytic.as_ref()),
                Format::Csv => render::simulate_csv(&sim_report, analytic.as_ref()),
            };
            emit(&cli.common, &body)?;
            Ok(0)
        }
        Command::Sweep => {
            let cfg = load_config(&cli.common, None)?;
            let spec = cfg
                .sweep
                .clone()
                .ok_or_else(|| anyhow::anyhow!("sweep needs sweep.var and sweep.values/range"))?;
            let csv = sweep::run_sweep(&cfg, &spec)?;
            emit(&cli.common, &csv)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}
