use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use choreo::commands::{self, WarpTarget};
use choreo::config::RunConfig;
use choreo::exec::Pool;
use choreo::Result;

#[derive(Parser)]
#[command(name = "choreo", version, about = "Repertoire-based dance choreography")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set graph.lambda_t=1.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Repertoire caches.
    Dataset {
        #[command(subcommand)]
        action: DatasetCommand,
    },
    /// Generate a dance for a piece of music.
    Choreograph {
        #[arg(long)]
        music: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `<out stem>.trace.json`.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// dynamic | motiongraph
        #[arg(long)]
        mode: Option<String>,
        /// on | off
        #[arg(long)]
        retempo: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score a generated dance against its music.
    Eval {
        #[arg(long)]
        motion: PathBuf,
        #[arg(long)]
        music: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-window label pairs.
        #[arg(long)]
        windows_csv: Option<PathBuf>,
        /// Reference motion for FPD/FMD (defaults to the repertoire). Repeatable.
        #[arg(long)]
        reference: Vec<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Align a clip's tempo density to a target and export the path.
    Warp {
        /// Source motion clip.
        #[arg(long)]
        motion: PathBuf,
        #[arg(long)]
        descriptor: Option<PathBuf>,
        /// JSON array with the target density.
        #[arg(long, group = "target")]
        target_density: Option<PathBuf>,
        /// Music whose window at `--start` gives the target.
        #[arg(long, group = "target")]
        music: Option<PathBuf>,
        /// Motion clip whose beats give the target.
        #[arg(long, group = "target")]
        target_motion: Option<PathBuf>,
        /// Target from a seeded random time warp of the source.
        #[arg(long, group = "target")]
        random_warp: bool,
        /// Window start: seconds for `--music`, frames for `--random-warp`.
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// CSV of `i, j_hat`.
        #[arg(long)]
        out: PathBuf,
        /// CSV of both densities.
        #[arg(long)]
        densities: Option<PathBuf>,
        /// Retimed 80-frame motion.
        #[arg(long)]
        out_motion: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Export detected beats as CSV.
    Beats {
        #[arg(long, conflicts_with = "music")]
        motion: Option<PathBuf>,
        #[arg(long)]
        descriptor: Option<PathBuf>,
        #[arg(long)]
        music: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Music beat frames; defaults to `<out stem>.beats.csv`.
        #[arg(long)]
        beats_out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Write a synthetic repertoire, descriptor and click-track music.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        clips: usize,
        #[arg(long, default_value_t = 20.0)]
        seconds: f64,
        #[arg(long, default_value_t = 100.0)]
        bpm: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Ingest a directory of clips and write the repertoire cache.
    Build {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        descriptor: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn load(cfg: &ConfigArgs, extra: &[(&str, Option<String>)]) -> Result<RunConfig> {
    let mut overrides = cfg.set.clone();
    if let Some(s) = cfg.seed {
        overrides.push(format!("seed={s}"));
    }
    for (k, v) in extra {
        if let Some(v) = v {
            overrides.push(format!("{k}={v}"));
        }
    }
    RunConfig::load(cfg.config.as_deref(), &overrides)
}

/// Prints lines to stdout, stopping quietly if the reader goes away.
fn emit(lines: &[String]) {
    let mut out = std::io::stdout().lock();
    for l in lines {
        if writeln!(out, "{l}").is_err() {
            return;
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Dataset {
            action:
                DatasetCommand::Build {
                    dir,
                    descriptor,
                    out,
                    embeddings,
                    cfg,
                },
        } => {
            let cfg = load(&cfg, &[])?;
            let args = commands::DatasetArgs {
                dir: &dir,
                descriptor: descriptor.as_deref(),
                out: &out,
                embeddings: embeddings.as_deref(),
            };
            let summary = commands::dataset_build(&args, &cfg, &Pool::from_env())?;
            let mut lines = vec!["id\tbeats\tmiddle_beats\tmusic".to_string()];
            lines.extend(summary.iter().map(|s| {
                format!(
                    "{}\t{}\t{}\t{}",
                    s.id,
                    s.beats,
                    s.middle_beats,
                    s.music.as_deref().unwrap_or("-")
                )
            }));
            emit(&lines);
            eprintln!("wrote {} clips to {}", summary.len(), out.display());
        }
        Command::Choreograph {
            music,
            cache,
            out,
            trace,
            embeddings,
            mode,
            retempo,
            k,
            cfg,
        } => {
            let cfg = load(
                &cfg,
                &[("mode", mode), ("retempo", retempo), ("k", k.map(|k| k.to_string()))],
            )?;
            let args = commands::ChoreographArgs {
                music: &music,
                cache: &cache,
                out: &out,
                trace: trace.as_deref(),
                embeddings: embeddings.as_deref(),
            };
            let result = commands::choreograph(&args, &cfg, Pool::from_env())?;
            eprintln!(
                "wrote {} frames ({} s) to {}",
                result.motion.len(),
                result.trace.steps.len(),
                out.display()
            );
        }
        Command::Eval {
            motion,
            music,
            cache,
            out,
            windows_csv,
            reference,
            cfg,
        } => {
            let cfg = load(&cfg, &[])?;
            let args = commands::EvalArgs {
                motion: &motion,
                music: &music,
                cache: &cache,
                out: &out,
                windows_csv: windows_csv.as_deref(),
                reference: &reference,
            };
            let report = commands::evaluate(&args, &cfg)?;
            emit(&[serde_json::to_string_pretty(&report).expect("report serializes")]);
        }
        Command::Warp {
            motion,
            descriptor,
            target_density,
            music,
            target_motion,
            random_warp,
            start,
            out,
            densities,
            out_motion,
            cfg,
        } => {
            let cfg = load(&cfg, &[])?;
            let target = match (&target_density, &music, &target_motion, random_warp) {
                (Some(p), None, None, false) => WarpTarget::Density(p),
                (None, Some(p), None, false) => WarpTarget::Music {
                    path: p,
                    start_s: start,
                },
                (None, None, Some(p), false) => WarpTarget::Motion(p),
                (None, None, None, true) => WarpTarget::RandomWarp { start },
                _ => {
                    return Err(choreo::CliError::Config(
                        "warp needs one of --target-density, --music, --target-motion, --random-warp".into(),
                    ))
                }
            };
            let args = commands::WarpArgs {
                source: &motion,
                descriptor: descriptor.as_deref(),
                target,
                out: &out,
                densities: densities.as_deref(),
                out_motion: out_motion.as_deref(),
            };
            let r = commands::warp(&args, &cfg)?;
            eprintln!(
                "cost {:.6}, source frames {}..={}",
                r.path.cost,
                r.path.source_start(),
                r.path.source_end()
            );
        }
        Command::Beats {
            motion,
            descriptor,
            music,
            out,
            beats_out,
            cfg,
        } => {
            let cfg = load(&cfg, &[])?;
            let args = commands::BeatsArgs {
                motion: motion.as_deref(),
                descriptor: descriptor.as_deref(),
                music: music.as_deref(),
                out: &out,
                beats_out: beats_out.as_deref(),
            };
            let found = commands::beats(&args, &cfg)?;
            eprintln!("{} beats", found.len());
        }
        Command::Synth {
            out,
            clips,
            seconds,
            bpm,
            seed,
        } => {
            commands::synth(&commands::SynthArgs {
                out: &out,
                clips,
                seconds,
                bpm,
                seed,
            })?;
            eprintln!("wrote synthetic data to {}", out.display());
        }
    }
    Ok(())
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
