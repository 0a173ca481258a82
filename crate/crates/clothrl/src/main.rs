use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use clothrl::checkpoint::Checkpoint;
use clothrl::harness::{self, Trainer};
use clothrl::rollout::{self, Greedy, Policy, Scripted};
use clothrl::{demos, HarnessError, Preset, Result, RunConfig};
use clothrl_core::agent::Agent;
use clothrl_core::envs::{ClothEnv, RandomizationSpec, Task};

#[derive(Parser)]
#[command(name = "clothrl", version, about = "Cloth manipulation from demonstrations: record, train, evaluate, render")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record successful scripted episodes with snapshots for reset-to-demo.
    RecordDemos {
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Take the environment settings from a run config instead of the task defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_randomization)]
        randomization: Option<RandomizationSpec>,
    },
    /// Train from a config file, or from flags (the effective config is written to the output directory).
    Train {
        #[arg(long, conflicts_with_all = ["task", "preset"])]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_task, required_unless_present = "config")]
        task: Option<Task>,
        #[arg(long, value_parser = parse_preset)]
        preset: Option<Preset>,
        #[arg(long)]
        demos: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from a checkpoint of the same configuration.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint's noiseless policy; prints one JSON line per episode.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the configuration stored in the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = parse_randomization)]
        randomization: Option<RandomizationSpec>,
    },
    /// Dump one episode as PNG frames, driven by a checkpoint or the scripted controller.
    RenderEpisode {
        #[arg(long, required_unless_present = "task")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_parser = parse_task, conflicts_with = "checkpoint")]
        task: Option<Task>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Frame side length in pixels.
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    let names: Vec<_> = Task::ALL.iter().map(|t| t.name()).collect();
    Task::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| format!("expected one of {}", names.join(", ")))
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
    Preset::from_name(s).ok_or_else(|| format!("expected one of {}", names.join(", ")))
}

fn parse_randomization(s: &str) -> std::result::Result<RandomizationSpec, String> {
    match s {
        "nominal" => Ok(RandomizationSpec::nominal()),
        "mild" => Ok(RandomizationSpec::mild()),
        "full" => Ok(RandomizationSpec::full()),
        _ => Err("expected nominal, mild or full".into()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::RecordDemos {
            task,
            count,
            seed,
            out,
            config,
            randomization,
        } => {
            let mut env = match config {
                Some(p) => RunConfig::load(&p)?.env,
                None => RunConfig::new(task, "").env,
            };
            if env.task != task {
                return Err(HarnessError::Config(format!("config is for {}, not {}", env.task.name(), task.name())));
            }
            if let Some(r) = randomization {
                env.randomization = r;
            }
            let set = rollout::record_demos(&env, count, seed)?;
            demos::save(&set, &out)?;
            println!("recorded {} episodes ({} transitions) to {}", set.episodes.len(), set.transition_count(), out.display());
        }
        Command::Train {
            config,
            task,
            preset,
            demos,
            out,
            seed,
            epochs,
            resume,
        } => {
            let mut cfg = match (config, task) {
                (Some(p), _) => RunConfig::load(&p)?,
                (None, Some(task)) => {
                    let out = out.clone().ok_or_else(|| HarnessError::Config("--out is required without --config".into()))?;
                    let mut cfg = RunConfig::new(task, out);
                    cfg.demo_path = demos.clone();
                    preset.unwrap_or(Preset::Ours).apply(&mut cfg);
                    cfg
                }
                (None, None) => return Err(HarnessError::Config("either --config or --task is required".into())),
            };
            if let Some(d) = demos {
                if cfg.preset != Preset::Ddpg.name() {
                    cfg.demo_path = Some(d);
                }
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            let t: Trainer = match resume {
                Some(ck) => harness::resume_training(cfg, &ck)?,
                None => harness::run_training(cfg)?,
            };
            println!("finished epoch {} after {} env steps; metrics in {}", t.counters().epoch, t.counters().env_steps, t.config().output_dir.join(harness::METRICS_FILE).display());
        }
        Command::Eval {
            checkpoint,
            config,
            episodes,
            seed,
            randomization,
        } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => Checkpoint::load(&checkpoint)?.config,
            };
            if let Some(r) = randomization {
                cfg.env.randomization = r;
            }
            let report = harness::run_eval(&cfg, &checkpoint, episodes, seed)?;
            for e in &report.episodes {
                println!("{}", serde_json::to_string(e).map_err(|e| HarnessError::Format(e.to_string()))?);
            }
            match report.success_rate() {
                Some(r) => println!("success_rate {r} over {} episodes", report.episodes.len()),
                None => println!("success_rate no data (0 episodes)"),
            }
        }
        Command::RenderEpisode {
            checkpoint,
            task,
            seed,
            size,
            out,
        } => {
            let (mut env_cfg, agent) = match (checkpoint, task) {
                (Some(p), _) => {
                    let ck = Checkpoint::load(&p)?;
                    let mut agent = Agent::new(ck.config.agent.clone(), ck.config.agent_spec(), ck.config.seed)?;
                    ck.restore_networks(&mut agent)?;
                    (ck.config.env.clone(), Some(agent))
                }
                (None, Some(task)) => (RunConfig::new(task, "").env, None),
                (None, None) => return Err(HarnessError::Config("either --checkpoint or --task is required".into())),
            };
            // Observations stay at the trained resolution; only a scripted
            // rollout can render at an arbitrary size.
            if agent.is_none() || !env_cfg.obs_mode.has_image() {
                env_cfg.image_size = size;
            }
            let mut env = ClothEnv::new(env_cfg)?;
            let mut scripted = Scripted::default();
            let mut agent = agent;
            let mut greedy;
            let policy: &mut dyn Policy = match agent.as_mut() {
                Some(a) => {
                    greedy = Greedy(a);
                    &mut greedy
                }
                None => &mut scripted,
            };
            let log = rollout::render_episode(&mut env, policy, seed, &out)?;
            println!("wrote {} frames to {} (success {}, return {})", log.steps + 1, out.display(), log.success, log.ret);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
