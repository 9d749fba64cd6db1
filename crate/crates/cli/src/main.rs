mod error;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use playtest_core::agent::{ApfFileConfig, RewardStack};
use playtest_core::apf::{train_apf, ApfConfig, TrajectoryMask};
use playtest_core::harness::{
    discover_alternatives, eval_episodes, interaction_table, load_trajectories, render_paths, return_matrix,
    save_trajectories, STOCHASTIC_EVAL_EPISODES,
};
use playtest_core::persona::{builtin_persona, personas_from_toml, BUILTIN_PERSONA_NAMES};
use playtest_core::sim::render::DEFAULT_BLOCK;
use playtest_core::sim::{levels, load_level, LevelSpec};
use playtest_core::trajectory::path_frames;
use playtest_core::{evaluate, train, write_atomic, AgentConfig, ApfModulator, DevelopingPersona, EvalOptions, Policy};

use error::{categorize, UsageError};

const DEFAULT_OUT_DIR: &str = "playtest-out";

#[derive(Parser)]
#[command(name = "playtest", version, about = "Persona-driven playtesting of grid dungeon levels")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Built-in level name or path to a level file.
    #[arg(long, global = true, default_value = "dungeon")]
    level: String,
    /// Built-in persona name or path to a persona TOML file (first entry is used).
    #[arg(long, global = true, default_value = "Exit")]
    persona: String,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// TOML file with optional `[agent]` and `[apf]` tables and `gamma`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "PLAYTEST_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write `policy.json` and `train_log.jsonl`.
    Train {
        #[arg(long)]
        timesteps: Option<u64>,
        /// Modulate training with a saved APF bundle.
        #[arg(long)]
        apf: Option<PathBuf>,
    },
    /// Evaluate a saved policy; writes `evaluation.json` and `trajectories.traj`.
    Evaluate {
        #[arg(long)]
        policy: PathBuf,
        /// Defaults to 1 on deterministic levels and 1000 otherwise.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        apf: Option<PathBuf>,
        #[arg(long)]
        observations: bool,
    },
    /// Train an APF bundle on stored trajectories; writes `apf.json`.
    ApfTrain {
        #[arg(long)]
        paths: PathBuf,
        /// Only train on the trajectory at this index.
        #[arg(long)]
        index: Option<usize>,
    },
    /// Find alternative paths round by round; writes the distinct paths to `discovery.traj`
    /// and a summary of every round to `discovery.json`.
    Discover {
        #[arg(long, default_value_t = 4)]
        rounds: usize,
        #[arg(long)]
        timesteps: Option<u64>,
    },
    /// Discounted return of every stored path under each path's APF; writes `matrix.json`.
    Matrix {
        #[arg(long)]
        paths: PathBuf,
    },
    /// Train and evaluate several personas; writes `interactions.json`.
    Interactions {
        /// Comma-separated persona names.
        #[arg(long, value_delimiter = ',', default_values_t = ["Exit", "Dev. Killer", "Dev. Collector", "Dev. Raider", "Dev. Completionist"].map(String::from))]
        personas: Vec<String>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        timesteps: Option<u64>,
    },
    /// Overlay stored paths on the level; writes `paths.ppm` and `paths.txt`.
    Render {
        #[arg(long)]
        paths: PathBuf,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    agent: Option<AgentConfig>,
    apf: Option<ApfFileConfig>,
    gamma: Option<f64>,
}

struct Session {
    level: LevelSpec,
    level_name: String,
    persona: DevelopingPersona,
    seed: u64,
    config: RunConfig,
    out: PathBuf,
}

impl Session {
    fn agent(&self, timesteps: Option<u64>) -> Result<AgentConfig> {
        let mut cfg = self.config.agent.clone().unwrap_or_else(|| AgentConfig::tabular(300_000));
        if let Some(t) = timesteps {
            cfg.timesteps = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apf(&self) -> ApfConfig {
        self.config.apf.as_ref().map(ApfFileConfig::to_config).unwrap_or_else(ApfConfig::cts)
    }

    fn gamma(&self) -> f64 {
        self.config.gamma.unwrap_or(playtest_core::agent::DEFAULT_DISCOUNT)
    }

    fn out(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(self.out.join(name))
    }

    fn write(&self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.out(name)?;
        write_atomic(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn load_level_arg(arg: &str) -> Result<(LevelSpec, String)> {
    if let Some(level) = levels::builtin(arg) {
        return Ok((level, arg.to_string()));
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(UsageError(format!(
            "unknown level {arg:?}; use a file path or one of {}",
            levels::BUILTIN_NAMES.join(", ")
        ))
        .into());
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
    let level = load_level(&text).with_context(|| format!("parsing level {arg}"))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| arg.to_string());
    Ok((level, name))
}

fn load_persona_arg(arg: &str) -> Result<DevelopingPersona> {
    if let Some(p) = builtin_persona(arg) {
        return Ok(p);
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(UsageError(format!(
            "unknown persona {arg:?}; use a TOML file or one of {}",
            BUILTIN_PERSONA_NAMES.join(", ")
        ))
        .into());
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
    let personas = personas_from_toml(&text).with_context(|| format!("parsing personas in {arg}"))?;
    personas
        .into_iter()
        .next()
        .ok_or_else(|| UsageError(format!("{arg} defines no personas")).into())
}

fn load_apf(path: Option<&Path>) -> Result<Option<ApfModulator>> {
    path.map(|p| ApfModulator::load(p).with_context(|| format!("loading APF bundle {}", p.display())))
        .transpose()
}

fn load_paths(path: &Path) -> Result<Vec<playtest_core::Trajectory>> {
    load_trajectories(path).with_context(|| format!("loading trajectories {}", path.display()))
}

#[derive(Serialize)]
struct TrainSummary {
    policy: PathBuf,
    log: PathBuf,
    episodes: usize,
    last_episode_env_return: Option<f64>,
}

fn run(cli: Cli) -> Result<()> {
    let (level, level_name) = load_level_arg(&cli.common.level)?;
    let persona = load_persona_arg(&cli.common.persona)?;
    let config = match &cli.common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    let ctx = Session {
        level,
        level_name,
        persona,
        seed: cli.common.seed,
        config,
        out: cli.common.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
    };

    match cli.command {
        Command::Train { timesteps, apf } => {
            let cfg = ctx.agent(timesteps)?;
            let apf = load_apf(apf.as_deref())?;
            let stack = RewardStack {
                apf: apf.as_ref(),
                ..RewardStack::from_config(&cfg)
            };
            let trained = train(&cfg, &ctx.level, &ctx.level_name, &ctx.persona, &stack, ctx.seed)?;
            let policy = ctx.out("policy.json")?;
            trained.policy.save(&policy)?;
            let log = ctx.write("train_log.jsonl", trained.log.to_jsonl().as_bytes())?;
            let summary = TrainSummary {
                policy,
                log,
                episodes: trained.log.len(),
                last_episode_env_return: trained.log.env_returns().last().copied(),
            };
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Evaluate {
            policy,
            episodes,
            apf,
            observations,
        } => {
            let policy = Policy::load(&policy).with_context(|| format!("loading policy {}", policy.display()))?;
            let apf = load_apf(apf.as_deref())?;
            let opts = EvalOptions {
                episodes: episodes.unwrap_or_else(|| eval_episodes(&ctx.level, STOCHASTIC_EVAL_EPISODES)),
                gamma: ctx.gamma(),
                record_observations: observations,
            };
            let eval = evaluate(&policy, &ctx.level, &ctx.level_name, &ctx.persona, apf.as_ref(), ctx.seed, &opts)?;
            save_trajectories(&ctx.out("trajectories.traj")?, &eval.trajectories)?;
            ctx.write("evaluation.json", serde_json::to_string_pretty(&eval.summary)?.as_bytes())?;
            println!("{}", serde_json::to_string_pretty(&eval.summary)?);
        }
        Command::ApfTrain { paths, index } => {
            let mut trajs = load_paths(&paths)?;
            if let Some(i) = index {
                if i >= trajs.len() {
                    return Err(UsageError(format!("index {i} out of range for {} trajectories", trajs.len())).into());
                }
                trajs = vec![trajs.swap_remove(i)];
            }
            let frames = trajs
                .iter()
                .map(|t| path_frames(&ctx.level, t, DEFAULT_BLOCK))
                .collect::<Result<Vec<_>, _>>()?;
            let masks = vec![TrajectoryMask::none(); frames.len()];
            let apf = train_apf(&ctx.apf(), &frames, &masks)?;
            let path = ctx.out("apf.json")?;
            apf.save(&path)?;
            println!(
                "{}",
                serde_json::json!({ "bundle": path, "paths": trajs.len(), "boundary": apf.boundary() })
            );
        }
        Command::Discover { rounds, timesteps } => {
            let cfg = ctx.agent(timesteps)?;
            let d = discover_alternatives(&ctx.level, &ctx.level_name, &ctx.persona, &cfg, &ctx.apf(), rounds, ctx.seed)?;
            let distinct: Vec<_> = d.distinct_paths().into_iter().cloned().collect();
            save_trajectories(&ctx.out("discovery.traj")?, &distinct)?;
            let rounds: Vec<_> = d
                .rounds
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "round": r.round,
                        "steps": r.trajectory.len(),
                        "termination": r.trajectory.termination,
                        "repeat_of": r.repeat_of,
                        "degenerate": r.degenerate,
                    })
                })
                .collect();
            ctx.write("discovery.json", serde_json::to_string_pretty(&rounds)?.as_bytes())?;
            println!("{}", serde_json::to_string_pretty(&rounds)?);
            print!("{}", render_paths(&ctx.level, &distinct)?.ascii);
        }
        Command::Matrix { paths } => {
            let trajs = load_paths(&paths)?;
            let m = return_matrix(&ctx.level, &ctx.persona, &trajs, &ctx.apf(), ctx.gamma())?;
            ctx.write("matrix.json", serde_json::to_string_pretty(&m)?.as_bytes())?;
            print!("{m}");
        }
        Command::Interactions {
            personas,
            episodes,
            timesteps,
        } => {
            let cfg = ctx.agent(timesteps)?;
            let opts = EvalOptions {
                episodes: episodes.unwrap_or_else(|| eval_episodes(&ctx.level, STOCHASTIC_EVAL_EPISODES)),
                gamma: ctx.gamma(),
                record_observations: false,
            };
            let mut evals = Vec::new();
            for name in &personas {
                let persona = load_persona_arg(name.trim())?;
                let trained = train(&cfg, &ctx.level, &ctx.level_name, &persona, &RewardStack::from_config(&cfg), ctx.seed)?;
                let eval = evaluate(&trained.policy, &ctx.level, &ctx.level_name, &persona, None, ctx.seed, &opts)?;
                evals.push((persona.name.clone(), eval));
            }
            let table = interaction_table(&evals)?;
            ctx.write("interactions.json", serde_json::to_string_pretty(&table)?.as_bytes())?;
            print!("{table}");
        }
        Command::Render { paths } => {
            let trajs = load_paths(&paths)?;
            let overlay = render_paths(&ctx.level, &trajs)?;
            ctx.write("paths.ppm", &overlay.ppm)?;
            ctx.write("paths.txt", overlay.ascii.as_bytes())?;
            print!("{}", overlay.ascii);
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        let category = categorize(&err);
        let report = serde_json::json!({
            "error": { "category": category.name(), "message": format!("{err:#}") }
        });
        eprintln!("{report}");
        std::process::exit(category.exit_code());
    }
}
