use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chimney::config::Config;
use chimney::experiments::{self, Manifest};
use chimney::trainer::IterationMetrics;
use chimney::Error;

#[derive(Parser, Debug)]
#[command(name = "chimney", version, about = "Chimney-climbing quadruped experiments")]
struct Cli {
    /// TOML configuration file; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: `out/<command>`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs single-threaded.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bracing torque atlas, curve C and motor report.
    Atlas,
    /// Export a terrain profile.
    Terrain {
        /// Curriculum level to export instead of the configured spec.
        #[arg(long)]
        level: Option<u32>,
    },
    /// Train a policy.
    Train {
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Evaluate a checkpoint over seeded episodes.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Log one full episode of a checkpoint.
    Rollout {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and evaluate one policy per fixed junction radius.
    Rsweep,
    /// Compare waist-free and waist-locked policies.
    Ablate {
        #[arg(long)]
        free: Option<PathBuf>,
        #[arg(long)]
        locked: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Atlas => "atlas",
            Command::Terrain { .. } => "terrain",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Rollout { .. } => "rollout",
            Command::Rsweep => "rsweep",
            Command::Ablate { .. } => "ablate",
        }
    }
}

fn log_iter(prefix: &str, m: &IterationMetrics) {
    if m.iter == 1 || m.iter % 10 == 0 {
        eprintln!(
            "{prefix}iter {:>5}  reward {:>9.3}  tracking {:.3}  success {:.2}  level {:.2}",
            m.iter, m.mean_reward, m.tracking_score, m.success_rate, m.mean_level
        );
    }
}

fn run(cli: Cli) -> Result<Manifest, Error> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(threads) = cli.threads {
        config.threads = threads;
    }
    match &cli.command {
        Command::Terrain { level: Some(l) } => config.terrain.level = Some(*l),
        Command::Train { iterations: Some(n) } => config.train.max_iterations = *n,
        Command::Eval { checkpoint, episodes } => {
            if checkpoint.is_some() {
                config.eval.checkpoint = checkpoint.clone();
            }
            if let Some(n) = episodes {
                config.eval.episodes = *n;
            }
        }
        Command::Rollout { checkpoint: Some(c) } => config.rollout.checkpoint = Some(c.clone()),
        Command::Ablate { free, locked } => {
            if free.is_some() {
                config.ablate.free_checkpoint = free.clone();
            }
            if locked.is_some() {
                config.ablate.locked_checkpoint = locked.clone();
            }
        }
        _ => {}
    }
    config.validate()?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out").join(cli.command.name()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Atlas => experiments::cmd_atlas(&config, &out),
        Command::Terrain { .. } => experiments::cmd_terrain(&config, &out),
        Command::Train { .. } => experiments::cmd_train(&config, &out, |m| log_iter("", m)),
        Command::Eval { .. } => experiments::cmd_eval(&config, &out).map(|(m, rep)| {
            println!(
                "success_rate {:.3}  tracking_score {:.4}  success_climb_speed {:.4}",
                rep.success_rate, rep.tracking_score, rep.success_climb_speed
            );
            m
        }),
        Command::Rollout { .. } => experiments::cmd_rollout(&config, &out),
        Command::Rsweep => experiments::cmd_rsweep(&config, &out, |r, m| log_iter(&format!("r={r:.2} "), m)).map(|(m, arms)| {
            for arm in arms {
                match arm.report {
                    Ok(rep) => println!("r {:.3}  success_rate {:.3}", arm.r, rep.success_rate),
                    Err(e) => println!("r {:.3}  failed: {e}", arm.r),
                }
            }
            m
        }),
        Command::Ablate { .. } => experiments::cmd_ablate(&config, &out, |arm, m| log_iter(&format!("{arm} "), m)).map(|(m, cells)| {
            for c in cells {
                println!("{:<6} width {:.2}  v_ref {:.2}  score {:.4} ± {:.4}", c.arm, c.width, c.v_ref, c.mean, c.ci95);
            }
            m
        }),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(manifest) => {
            for f in &manifest.outputs {
                println!("wrote {f}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::ConfigParse { .. } | Error::InvalidConfig(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
