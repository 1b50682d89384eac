//! `trrgr` - command-line client for the evaluation service.
//!
//! All subcommands (except `serve`) talk to a service instance: a remote one
//! via `--server URL`, or an embedded instance spawned on a loopback port for
//! the duration of the command. Paths are resolved by the service process, so
//! with a remote server they must exist on that machine.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use std::path::PathBuf;
use trrgr_client::Client;
use trrgr_core::api::*;
use trrgr_core::config::{ModelBackend, ProtocolKind, ToolBackend};
use trrgr_core::{MetricsConfig, RewardConfig};

#[derive(Parser)]
#[command(
    name = "trrgr",
    version,
    about = "Tool-refined referring grounding harness"
)]
struct Cli {
    /// Base URL of a running service; when omitted an embedded instance is
    /// spawned for this invocation.
    #[arg(long, global = true)]
    server: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the service in the foreground.
    Serve {
        /// Address to bind.
        #[arg(long, default_value = "127.0.0.1:8471")]
        addr: std::net::SocketAddr,
    },
    /// Run an evaluation over a dataset.
    Eval(EvalArgs),
    /// Compute a metrics report from a persisted results file.
    Metrics {
        /// Results JSONL produced by `eval`.
        #[arg(long)]
        results: PathBuf,
        /// Acc/CCR threshold.
        #[arg(long)]
        tau: Option<f64>,
        /// FCR follow tolerance.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Print the one-line CSV instead of JSON.
        #[arg(long)]
        csv: bool,
    },
    /// Generate a synthetic tool cache for a dataset.
    SimulateTool {
        #[arg(long)]
        dataset: PathBuf,
        /// Tool preset: weak_gdt or strong_evfsam.
        #[arg(long)]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score trajectory groups and emit per-group advantages.
    Rewards {
        /// Trajectory groups JSONL.
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the single-stage prompt for each sample (debugging aid).
    RenderPrompt {
        #[arg(long)]
        dataset: PathBuf,
        /// Tool cache JSONL supplying the injected boxes.
        #[arg(long)]
        tool: PathBuf,
        /// Restrict to one sample.
        #[arg(long)]
        sample_id: Option<String>,
    },
}

#[derive(Args)]
struct EvalArgs {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Protocol: piter or trrgr.
    #[arg(long, value_parser = clap_parse_protocol)]
    protocol: Option<ProtocolKind>,
    /// Dataset JSONL.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Tool backend: cache:PATH or sim:PRESET.
    #[arg(long)]
    tool: Option<String>,
    /// Model backend: http:URL or scripted:PATH.
    #[arg(long)]
    model: Option<String>,
    /// Output directory for results and reports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for a sim tool backend.
    #[arg(long)]
    seed: Option<u64>,
    /// Max in-flight samples.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Acc/CCR threshold.
    #[arg(long)]
    tau: Option<f64>,
    /// FCR follow tolerance.
    #[arg(long)]
    epsilon: Option<f64>,
}

/// File-based defaults for `eval`; every field can be overridden by a flag.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct EvalFileConfig {
    protocol: Option<ProtocolKind>,
    dataset: Option<PathBuf>,
    tool: Option<String>,
    model: Option<String>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    parallelism: Option<usize>,
    system_prompt: Option<String>,
    piter_template: Option<String>,
    metrics: Option<MetricsConfig>,
    rewards: Option<RewardConfig>,
}

fn clap_parse_protocol(s: &str) -> Result<ProtocolKind, String> {
    s.parse()
}

fn build_eval_request(args: EvalArgs) -> Result<EvalRequest> {
    let file: EvalFileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => EvalFileConfig::default(),
    };

    let protocol = args
        .protocol
        .or(file.protocol)
        .context("missing --protocol (piter|trrgr)")?;
    let dataset = args.dataset.or(file.dataset).context("missing --dataset")?;
    let tool_text = args.tool.or(file.tool).context("missing --tool")?;
    let model_text = args.model.or(file.model).context("missing --model")?;
    let output_dir = args.out.or(file.out).context("missing --out")?;

    let mut tool: ToolBackend = tool_text.parse()?;
    if let (ToolBackend::Sim { seed, .. }, Some(chosen)) = (&mut tool, args.seed.or(file.seed)) {
        *seed = chosen;
    }
    let model: ModelBackend = model_text.parse()?;

    let mut metrics = file.metrics.unwrap_or_default();
    if let Some(tau) = args.tau {
        metrics.tau = tau;
    }
    if let Some(epsilon) = args.epsilon {
        metrics.epsilon = epsilon;
    }
    let mut rewards = file.rewards.unwrap_or_default();
    if let Some(tau) = args.tau {
        rewards.threshold = tau;
    }

    Ok(EvalRequest {
        protocol,
        dataset,
        tool,
        model,
        output_dir,
        system_prompt: file.system_prompt,
        piter_template: file.piter_template,
        metrics: Some(metrics),
        rewards: Some(rewards),
        parallelism: args.parallelism.or(file.parallelism),
    })
}

async fn connect(server: Option<String>) -> Result<Client> {
    match server {
        Some(url) => Ok(Client::new(url)),
        None => {
            let (url, _handle) = trrgr_service::spawn_local()
                .await
                .context("spawning embedded service")?;
            Ok(Client::new(url))
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

async fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve { addr } => {
            trrgr_service::serve(addr, |bound| println!("listening on http://{bound}"))
                .await
                .context("service failed")?;
            Ok(())
        }
        Command::Eval(args) => {
            let request = build_eval_request(args)?;
            let client = connect(cli.server).await?;
            let response = client.eval(&request).await?;
            print_json(&response)
        }
        Command::Metrics {
            results,
            tau,
            epsilon,
            csv,
        } => {
            let mut config = MetricsConfig::default();
            if let Some(tau) = tau {
                config.tau = tau;
            }
            if let Some(epsilon) = epsilon {
                config.epsilon = epsilon;
            }
            let client = connect(cli.server).await?;
            let response = client
                .metrics(&MetricsRequest {
                    results: Some(results),
                    outcomes: None,
                    config: Some(config),
                })
                .await?;
            if csv {
                println!("{}", response.csv);
                Ok(())
            } else {
                print_json(&response.report)
            }
        }
        Command::SimulateTool {
            dataset,
            preset,
            seed,
            out,
        } => {
            let client = connect(cli.server).await?;
            let response = client
                .simulate_tool(&SimulateRequest {
                    dataset,
                    preset,
                    seed,
                    out,
                })
                .await?;
            print_json(&response)
        }
        Command::Rewards {
            trajectories,
            dataset,
            out,
        } => {
            let client = connect(cli.server).await?;
            let response = client
                .rewards(&RewardsRequest {
                    trajectories,
                    dataset,
                    out,
                    rewards: None,
                })
                .await?;
            print_json(&response)
        }
        Command::RenderPrompt {
            dataset,
            tool,
            sample_id,
        } => {
            let client = connect(cli.server).await?;
            let response = client
                .render_prompt(&RenderPromptRequest {
                    dataset,
                    tool,
                    sample_id,
                    template: None,
                })
                .await?;
            for rendered in response.prompts {
                println!("--- {}", rendered.sample_id);
                println!("{}", rendered.prompt);
            }
            Ok(())
        }
    }
}

#[tokio::main]
async fn main() -> Result<()> {
    let level = std::env::var("RUST_LOG")
        .ok()
        .and_then(|s| s.parse::<tracing_subscriber::filter::LevelFilter>().ok())
        .unwrap_or(tracing_subscriber::filter::LevelFilter::WARN);
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    if matches!(cli.command, Command::Serve { .. }) && cli.server.is_some() {
        bail!("--server cannot be combined with `serve`");
    }
    run(cli).await
}
