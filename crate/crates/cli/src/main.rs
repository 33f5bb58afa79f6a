//! `revex`: train, roll out, score, and evaluate the rational evidence
//! extractor.

mod svg;

use std::io::BufRead;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use revex_core::backend::{toy_instances, toy_noise_pool, GenerationBackend, ToyPolicy};
use revex_core::config::{BackendKind, RunConfig};
use revex_core::corpus::{load_dataset, QAInstance, Split};
use revex_core::eval::{evaluate, latency_bench, noise_sweep, EvalSummary, MetricsReport};
use revex_core::train::{read_dynamics_log, score_raw_response, train};
use revex_core::InferenceClient;

#[derive(Parser)]
#[command(
    name = "revex",
    about = "Rational evidence extraction pipeline",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Run configuration file (TOML); defaults to the built-in toy config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the inference endpoint URL (implies the http backend).
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Backend to use: toy or http.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Toy policy checkpoint to load instead of a uniform-initialized one.
    #[arg(long, global = true)]
    policy: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct DatasetOpts {
    /// Dataset file (line-delimited records); synthesized for the toy
    /// backend when omitted.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Split label for the dataset file.
    #[arg(long, default_value = "test")]
    split: String,
    /// Evaluate at most this many instances.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the toy policy with GRPO and write the dynamics log.
    TrainToy {
        #[command(flatten)]
        common: CommonOpts,
        /// Optimizer steps (overrides the config).
        #[arg(long)]
        steps: Option<usize>,
        /// Output directory for logs, checkpoints, and dataset dumps.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Override the advantage std clip floor (0 disables clipping).
        #[arg(long)]
        eps_std: Option<f64>,
    },
    /// Sample rollout groups with rewards and advantages, one JSON line
    /// per group.
    Rollout {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        data: DatasetOpts,
        /// Responses per group (overrides the config).
        #[arg(long)]
        group_size: Option<usize>,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute reward breakdowns for a file of responses.
    Score {
        #[command(flatten)]
        common: CommonOpts,
        /// Dataset file the response ids refer to.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Split label for the dataset file.
        #[arg(long, default_value = "test")]
        split: String,
        /// JSONL file of {"id": ..., "response": ...} records.
        #[arg(long)]
        responses: PathBuf,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate extraction EM/F1/AR/CR over a dataset.
    Eval {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        data: DatasetOpts,
        /// Write the full report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate under injected retrieval noise.
    NoiseEval {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        data: DatasetOpts,
        /// Passage pool file for noise; synthesized for the toy backend
        /// when omitted.
        #[arg(long)]
        noise_pool: Option<PathBuf>,
        /// Comma-separated noise levels.
        #[arg(long, default_value = "0,2,4,6,8")]
        levels: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Wall-clock seconds per query over batched extraction.
    Latency {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        data: DatasetOpts,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, default_value_t = 768)]
        max_new_tokens: usize,
    },
    /// Render training-dynamics curves from a dynamics log.
    PlotDynamics {
        /// Dynamics log (JSONL) produced by train-toy.
        #[arg(long)]
        log: PathBuf,
        /// Output SVG path.
        #[arg(long, default_value = "dynamics.svg")]
        out: PathBuf,
    },
}

fn load_config(common: &CommonOpts) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => RunConfig::toy_default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(endpoint) = &common.endpoint {
        cfg.backend.http.endpoint = endpoint.clone();
        cfg.backend.kind = BackendKind::Http;
    }
    if let Some(kind) = &common.backend {
        cfg.backend.kind = match kind.as_str() {
            "toy" => BackendKind::Toy,
            "http" => BackendKind::Http,
            other => bail!("unknown backend {other:?} (expected toy or http)"),
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn make_backend(cfg: &RunConfig, common: &CommonOpts) -> Result<Box<dyn GenerationBackend>> {
    Ok(match cfg.backend.kind {
        BackendKind::Toy => match &common.policy {
            Some(path) => Box::new(
                ToyPolicy::load(path, cfg.seed)
                    .with_context(|| format!("loading policy {}", path.display()))?,
            ),
            None => Box::new(ToyPolicy::new(cfg.seed)),
        },
        BackendKind::Http => Box::new(InferenceClient::new(cfg.backend.http.clone())?),
    })
}

fn parse_split(name: &str) -> Result<Split> {
    Ok(match name {
        "train" => Split::Train,
        "dev" => Split::Dev,
        "test" => Split::Test,
        other => bail!("unknown split {other:?}"),
    })
}

fn load_instances(cfg: &RunConfig, data: &DatasetOpts) -> Result<Vec<QAInstance>> {
    let split = parse_split(&data.split)?;
    let mut instances = match &data.dataset {
        Some(path) => {
            load_dataset(path, split).with_context(|| format!("loading {}", path.display()))?
        }
        None => {
            if cfg.backend.kind != BackendKind::Toy {
                bail!("--dataset is required for the http backend");
            }
            let n = match split {
                Split::Train => cfg.dataset.synthetic_train.max(1),
                Split::Dev => cfg.dataset.synthetic_dev.max(1),
                Split::Test => cfg.dataset.synthetic_test.max(64),
            };
            toy_instances(n, split, cfg.seed ^ 0x6461_7461)
        }
    };
    if let Some(limit) = data.limit {
        instances.truncate(limit);
    }
    Ok(instances)
}

fn write_or_print(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => println!("{content}"),
    }
    Ok(())
}

fn print_summary_table(rows: &[(&str, &EvalSummary)]) {
    println!(
        "{:<18} {:>6} {:>6} {:>7} {:>7} {:>7} {:>9}",
        "dataset", "n", "failed", "EM", "F1", "AR", "CR"
    );
    for (label, s) in rows {
        println!(
            "{:<18} {:>6} {:>6} {:>7.4} {:>7.4} {:>7.4} {:>9}",
            label,
            s.n_evaluated,
            s.n_failed,
            s.em,
            s.f1,
            s.answer_recall,
            s.compression_ratio
                .map(|c| format!("{c:.2}x"))
                .unwrap_or_else(|| format!("n/a ({})", s.n_undefined_cr)),
        );
    }
}

#[derive(Serialize)]
struct RolloutDumpResponse<'a> {
    text: &'a str,
    well_formed: bool,
    reward: &'a revex_core::reward::RewardBreakdown,
    advantage: f64,
    o_r: &'a str,
    o_e: &'a str,
}

#[derive(Serialize)]
struct RolloutDump<'a> {
    instance_id: &'a str,
    responses: Vec<RolloutDumpResponse<'a>>,
}

#[derive(Deserialize)]
struct ResponseRecord {
    id: String,
    response: String,
}

#[derive(Serialize)]
struct ScoreRecord<'a> {
    id: &'a str,
    well_formed: bool,
    final_reward: f64,
    breakdown: revex_core::reward::RewardBreakdown,
}

fn cmd_train_toy(
    common: CommonOpts,
    steps: Option<usize>,
    out_dir: Option<PathBuf>,
    eps_std: Option<f64>,
) -> Result<()> {
    let mut cfg = load_config(&common)?;
    if let Some(steps) = steps {
        cfg.train.max_steps = Some(steps);
    }
    if let Some(dir) = out_dir {
        cfg.paths.log_dir = dir;
    }
    if let Some(eps) = eps_std {
        cfg.set_eps_std(eps);
    }
    cfg.validate()?;

    let t0 = std::time::Instant::now();
    let outcome = train(&cfg)?;
    let elapsed = t0.elapsed().as_secs_f64();
    let last = outcome.records.last().context("empty dynamics log")?;
    println!("trained {} steps in {elapsed:.1}s", outcome.steps);
    println!(
        "final step: mean R^final {:.4}, format rate {:.4}, mean KL {:.2e}",
        last.mean_final, last.format_rate, last.mean_kl
    );
    if let Some(dev) = outcome.best_dev_reward {
        println!(
            "best dev reward {dev:.4} (checkpoint {})",
            outcome.checkpoint_path.display()
        );
    }
    println!("dynamics log: {}", outcome.dynamics_path.display());
    println!("final policy: {}", outcome.final_policy_path.display());
    Ok(())
}

fn cmd_rollout(
    common: CommonOpts,
    data: DatasetOpts,
    group_size: Option<usize>,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = load_config(&common)?;
    if let Some(g) = group_size {
        cfg.grpo.group_size = g;
    }
    let backend = make_backend(&cfg, &common)?;
    let templates = cfg.template_set()?;
    let instances = load_instances(&cfg, &data)?;

    let mut lines = Vec::new();
    for inst in &instances {
        let collected = revex_core::rollout::collect_rollout_group(
            inst,
            backend.as_ref(),
            &templates,
            &cfg.decoding,
            &cfg.reward,
            &cfg.grpo,
        )?;
        let advantages = collected
            .group
            .advantages
            .as_ref()
            .expect("advantages populated");
        let dump = RolloutDump {
            instance_id: &collected.group.instance_id,
            responses: collected
                .group
                .responses
                .iter()
                .zip(&collected.breakdowns)
                .zip(advantages)
                .zip(&collected.regenerated)
                .map(
                    |(((resp, reward), &advantage), regen)| RolloutDumpResponse {
                        text: &resp.parsed.raw,
                        well_formed: resp.parsed.well_formed,
                        reward,
                        advantage,
                        o_r: &regen.o_r,
                        o_e: &regen.o_e,
                    },
                )
                .collect(),
        };
        lines.push(serde_json::to_string(&dump)?);
    }
    write_or_print(&out, &lines.join("\n"))?;
    eprintln!(
        "dumped {} groups of {}",
        instances.len(),
        cfg.grpo.group_size
    );
    Ok(())
}

fn cmd_score(
    common: CommonOpts,
    dataset: Option<PathBuf>,
    split: String,
    responses: PathBuf,
    out: Option<PathBuf>,
) -> Result<()> {
    let cfg = load_config(&common)?;
    let backend = make_backend(&cfg, &common)?;
    let templates = cfg.template_set()?;
    let data = DatasetOpts {
        dataset,
        split,
        limit: None,
    };
    let instances = load_instances(&cfg, &data)?;

    let file = std::fs::File::open(&responses)
        .with_context(|| format!("opening {}", responses.display()))?;
    let mut lines = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ResponseRecord =
            serde_json::from_str(&line).with_context(|| format!("response line {}", idx + 1))?;
        let inst = instances.iter().find(|i| i.id == rec.id).with_context(|| {
            format!("response line {}: unknown instance id {}", idx + 1, rec.id)
        })?;
        let breakdown =
            score_raw_response(inst, &rec.response, backend.as_ref(), &templates, &cfg)?;
        lines.push(serde_json::to_string(&ScoreRecord {
            id: &rec.id,
            well_formed: breakdown.fmt > 0.5,
            final_reward: breakdown.final_reward,
            breakdown,
        })?);
    }
    write_or_print(&out, &lines.join("\n"))
}

fn cmd_eval(common: CommonOpts, data: DatasetOpts, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(&common)?;
    let backend = make_backend(&cfg, &common)?;
    let templates = cfg.template_set()?;
    let instances = load_instances(&cfg, &data)?;
    let name = data
        .dataset
        .as_ref()
        .and_then(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "toy-synthetic".to_string());

    let summary = evaluate(
        &name,
        &instances,
        backend.as_ref(),
        backend.as_ref(),
        &templates,
        &cfg.decoding,
    )?;
    print_summary_table(&[(name.as_str(), &summary)]);
    if out.is_some() {
        let report = MetricsReport::from_summary(summary);
        write_or_print(&out, &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn cmd_noise_eval(
    common: CommonOpts,
    data: DatasetOpts,
    noise_pool: Option<PathBuf>,
    levels: String,
    out: Option<PathBuf>,
) -> Result<()> {
    let cfg = load_config(&common)?;
    let backend = make_backend(&cfg, &common)?;
    let templates = cfg.template_set()?;
    let instances = load_instances(&cfg, &data)?;
    let levels: Vec<usize> = levels
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .with_context(|| format!("bad noise level {s:?}"))
        })
        .collect::<Result<_>>()?;

    let pool = match &noise_pool {
        Some(path) => {
            let pool_data = load_dataset(path, Split::Test)
                .with_context(|| format!("loading noise pool {}", path.display()))?;
            pool_data.into_iter().flat_map(|i| i.passages).collect()
        }
        None => {
            if cfg.backend.kind != BackendKind::Toy {
                bail!("--noise-pool is required for the http backend");
            }
            toy_noise_pool(256, cfg.seed ^ 0x6e6f_6973)
        }
    };

    let name = data
        .dataset
        .as_ref()
        .and_then(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "toy-synthetic".to_string());
    let rows = noise_sweep(
        &name,
        &instances,
        backend.as_ref(),
        backend.as_ref(),
        &templates,
        &cfg.decoding,
        &pool,
        &levels,
        cfg.seed,
    )?;

    let labels: Vec<String> = rows
        .iter()
        .map(|r| format!("{name}+{}", r.n_noise))
        .collect();
    let table: Vec<(&str, &EvalSummary)> = labels
        .iter()
        .map(|l| l.as_str())
        .zip(rows.iter().map(|r| &r.summary))
        .collect();
    print_summary_table(&table);
    if out.is_some() {
        let report = MetricsReport {
            datasets: Vec::new(),
            latency: None,
            noise_table: rows,
        };
        write_or_print(&out, &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn cmd_latency(
    common: CommonOpts,
    data: DatasetOpts,
    batch_size: usize,
    max_new_tokens: usize,
) -> Result<()> {
    let cfg = load_config(&common)?;
    let backend = make_backend(&cfg, &common)?;
    let templates = cfg.template_set()?;
    let instances = load_instances(&cfg, &data)?;
    let stats = latency_bench(
        &instances,
        backend.as_ref(),
        &templates,
        batch_size,
        max_new_tokens,
    )?;
    println!(
        "latency over {} queries (batch {}, max_new_tokens {}):",
        stats.n_queries, stats.batch_size, stats.max_new_tokens
    );
    println!(
        "  {:.6} s/query mean, {:.6} s/query std, output length std {:.2} words",
        stats.mean_secs_per_query, stats.std_secs_per_query, stats.output_len_std_words
    );
    Ok(())
}

fn cmd_plot_dynamics(log: &Path, out: &Path) -> Result<()> {
    let records = read_dynamics_log(log)?;
    if records.is_empty() {
        bail!("dynamics log {} is empty", log.display());
    }
    let xy = |f: fn(&revex_core::train::DynamicsRecord) -> f64| -> Vec<(f64, f64)> {
        records.iter().map(|r| (r.step as f64, f(r))).collect()
    };
    let panels = vec![
        (
            "answer rewards",
            vec![
                svg::Series {
                    label: "full (o_f)",
                    color: "#1f77b4",
                    points: xy(|r| r.mean_ans_f),
                },
                svg::Series {
                    label: "rationale (o_r)",
                    color: "#2ca02c",
                    points: xy(|r| r.mean_ans_r),
                },
                svg::Series {
                    label: "evidence (o_e)",
                    color: "#d62728",
                    points: xy(|r| r.mean_ans_e),
                },
            ],
        ),
        (
            "segment lengths (words)",
            vec![
                svg::Series {
                    label: "reason",
                    color: "#2ca02c",
                    points: xy(|r| r.mean_len_reason),
                },
                svg::Series {
                    label: "extract",
                    color: "#d62728",
                    points: xy(|r| r.mean_len_evidence),
                },
                svg::Series {
                    label: "answer",
                    color: "#9467bd",
                    points: xy(|r| r.mean_len_answer),
                },
            ],
        ),
        (
            "final reward and format",
            vec![
                svg::Series {
                    label: "mean R final",
                    color: "#1f77b4",
                    points: xy(|r| r.mean_final),
                },
                svg::Series {
                    label: "format rate",
                    color: "#ff7f0e",
                    points: xy(|r| r.format_rate),
                },
            ],
        ),
    ];
    let doc = svg::chart(&panels, 380.0, 260.0);
    std::fs::write(out, &doc).with_context(|| format!("writing {}", out.display()))?;

    let last = records.last().expect("non-empty");
    println!("plotted {} steps to {}", records.len(), out.display());
    println!(
        "final: R {:.4}, ans r/e/f {:.3}/{:.3}/{:.3}, lengths r/e/a {:.1}/{:.1}/{:.1} words",
        last.mean_final,
        last.mean_ans_r,
        last.mean_ans_e,
        last.mean_ans_f,
        last.mean_len_reason,
        last.mean_len_evidence,
        last.mean_len_answer
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::TrainToy {
            common,
            steps,
            out_dir,
            eps_std,
        } => cmd_train_toy(common, steps, out_dir, eps_std),
        Command::Rollout {
            common,
            data,
            group_size,
            out,
        } => cmd_rollout(common, data, group_size, out),
        Command::Score {
            common,
            dataset,
            split,
            responses,
            out,
        } => cmd_score(common, dataset, split, responses, out),
        Command::Eval { common, data, out } => cmd_eval(common, data, out),
        Command::NoiseEval {
            common,
            data,
            noise_pool,
            levels,
            out,
        } => cmd_noise_eval(common, data, noise_pool, levels, out),
        Command::Latency {
            common,
            data,
            batch_size,
            max_new_tokens,
        } => cmd_latency(common, data, batch_size, max_new_tokens),
        Command::PlotDynamics { log, out } => cmd_plot_dynamics(&log, &out),
    }
}
