use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dnr_core::carver::SeamPlanDoc;
use dnr_core::config::{Axis, RetargetConfig};
use dnr_core::evaluate::{semantic_score, ScoreReport};
use dnr_core::image_io::{read_image, write_image};
use dnr_core::network::{weights::save_weights, Network};
use dnr_core::pipeline::{inspect, retarget, with_thread_pool, write_snapshots, RetargetOptions};
use dnr_core::reconstruct::InitMode;
use dnr_core::{Error, Result};

#[derive(Parser)]
#[command(name = "dnr", version, about = "Content-aware image narrowing by reconstruction from deep features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Target size as a fraction of the input along the axis.
    #[arg(long, conflicts_with = "width")]
    width_frac: Option<f64>,
    /// Absolute target size along the axis.
    #[arg(long)]
    width: Option<usize>,
    #[arg(long, value_parser = parse_axis)]
    axis: Option<Axis>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_init)]
    init: Option<InitMode>,
    /// DNRW weight file (defaults to seeded tinyvgg weights).
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Narrow an image.
    Retarget {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Directory for optimization snapshots and loss traces.
        #[arg(long)]
        snapshots: Option<PathBuf>,
        /// Replay a seam plan written by `inspect`.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Include wall-clock timings in the report.
        #[arg(long)]
        timings: bool,
        input: PathBuf,
    },
    /// Write importance maps, seam overlays and plans without synthesis.
    Inspect {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        input: PathBuf,
    },
    /// Semantic score of a candidate against the original.
    Score {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long)]
        tap: Option<usize>,
        #[arg(long, default_value = "candidate")]
        method: String,
    },
    /// Write seeded tinyvgg weights as a DNRW file.
    InitWeights {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_axis(s: &str) -> std::result::Result<Axis, String> {
    match s {
        "horizontal" => Ok(Axis::Horizontal),
        "vertical" => Ok(Axis::Vertical),
        _ => Err(format!("expected horizontal or vertical, got {s:?}")),
    }
}

fn parse_init(s: &str) -> std::result::Result<InitMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn resolve(args: &ConfigArgs) -> Result<RetargetConfig> {
    let mut cfg = match &args.config {
        Some(path) => RetargetConfig::load(path)?,
        None => RetargetConfig::default(),
    };
    if let Some(f) = args.width_frac {
        cfg.width_frac = Some(f);
        cfg.width = None;
    }
    if let Some(w) = args.width {
        cfg.width = Some(w);
    }
    if let Some(a) = args.axis {
        cfg.axis = a;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = args.init {
        cfg.init = m;
    }
    if let Some(w) = &args.weights {
        cfg.network = w.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Retarget {
            cfg,
            out,
            report,
            snapshots,
            plan,
            timings,
            input,
        } => {
            let config = resolve(&cfg)?;
            if cfg.print_config {
                println!("{}", config.to_json());
                return Ok(());
            }
            let net = config.load_network()?;
            let image = read_image(&input)?;
            let plan = plan
                .map(|p| -> Result<SeamPlanDoc> {
                    let text = std::fs::read_to_string(&p)?;
                    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
                })
                .transpose()?;
            let opts = RetargetOptions { plan, timings };
            let result = with_thread_pool(|| retarget(&net, &config, &image, &opts))??;
            for w in &result.report.warnings {
                log::warn!("{w}");
            }
            write_image(&out, &result.image)?;
            if let Some(dir) = snapshots {
                write_snapshots(&dir, &result, config.axis)?;
            }
            write_json(report.as_deref(), &result.report)
        }
        Command::Inspect { cfg, out, input } => {
            let config = resolve(&cfg)?;
            if cfg.print_config {
                println!("{}", config.to_json());
                return Ok(());
            }
            let net = config.load_network()?;
            let image = read_image(&input)?;
            let inspection = with_thread_pool(|| inspect(&net, &config, &image, &out))??;
            log::info!(
                "seam counts {:?}, intermediate width {}",
                inspection.plan.counts(),
                inspection.plan.intermediate_width
            );
            Ok(())
        }
        Command::Score {
            cfg,
            original,
            candidate,
            tap,
            method,
        } => {
            let mut config = resolve(&cfg)?;
            if tap.is_some() {
                config.score_tap = tap;
                config.validate()?;
            }
            if cfg.print_config {
                println!("{}", config.to_json());
                return Ok(());
            }
            let net = config.load_network()?;
            let a = read_image(&original)?;
            let b = read_image(&candidate)?;
            let tap = config.score_tap();
            let ss = with_thread_pool(|| semantic_score(&net, &a, &b, tap))??;
            write_json(
                None,
                &ScoreReport {
                    image: candidate.display().to_string(),
                    method,
                    tap,
                    ss,
                },
            )
        }
        Command::InitWeights { out, seed } => {
            save_weights(&Network::tinyvgg(seed), &out)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
