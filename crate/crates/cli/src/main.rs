mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use graphdial::dataset::{build_dataset, er_corpus, walk_corpus, ws_corpus, Dataset};
use graphdial::error::{Error, Result};
use graphdial::eval::{
    batch_sets, eval_features, feature_values, generate_sets, latent_analysis, pairwise_emit, rmse_vs_condition,
    run_ablation, AblationPlan, LatentPlan,
};
use graphdial::features::Feature;
use graphdial::generate::{ConnectivityPolicy, GenerationRequest};
use graphdial::graph::Graph;
use graphdial::model::{ConditionSpots, HyperParams};
use graphdial::train::{self, Checkpoint, TrainConfig, Trainer};
use serde_json::json;

use config::Settings;

#[derive(Parser)]
#[command(name = "graphdial", version, about = "Conditional graph generation with a tunable structural feature")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Flat `key = value` settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Ws,
    Er,
    Walk,
}

#[derive(Subcommand)]
enum Command {
    /// Build a corpus and its manifest.
    Dataset {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "ws")]
        kind: Kind,
        /// Conditioned feature: aspl, avg_degree, modularity, clustering,
        /// plaw or density.
        #[arg(long, default_value = "aspl")]
        feature: Feature,
        /// Edge list of the large graph to sample (walk only).
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Train a model on a manifest.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated condition spots out of e,d,h.
        #[arg(long)]
        spots: Option<String>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Sample graphs at one or more condition values.
    Generate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        gen: GenArgs,
        /// Resample disconnected graphs up to this many times.
        #[arg(long, default_value_t = 0)]
        retries: usize,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Generate and tabulate features, with a pairwise plot.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        gen: GenArgs,
        /// Dataset for the reference percentile row.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Train the four condition-spot variants and compare RMSE.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long = "condition", required = true)]
        conditions: Vec<f64>,
        #[arg(long, default_value_t = 300)]
        count: usize,
    },
    /// Latent-space correlation report for an edge-density model.
    Latent {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Defaults to 0, 0.25, 0.5, 0.75, 1.
        #[arg(long = "condition")]
        conditions: Vec<f64>,
        #[arg(long, default_value_t = 300)]
        count: usize,
        #[arg(long, default_value_t = 4)]
        latent_dim: usize,
    },
}

#[derive(Args, Clone)]
struct GenArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long = "condition", required = true)]
    conditions: Vec<f64>,
    #[arg(long, default_value_t = 300)]
    count: usize,
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Dataset {
            common,
            kind,
            feature,
            source,
        } => dataset(&common, kind, feature, source.as_deref()),
        Command::Train {
            common,
            manifest,
            spots,
            resume,
        } => train_cmd(&common, &manifest, spots.as_deref(), resume.as_deref()),
        Command::Generate {
            common,
            gen,
            retries,
            max_steps,
        } => generate(&common, &gen, retries, max_steps),
        Command::Eval { common, gen, manifest } => eval(&common, &gen, manifest.as_deref()),
        Command::Ablate {
            common,
            manifest,
            conditions,
            count,
        } => ablate(&common, &manifest, conditions, count),
        Command::Latent {
            common,
            checkpoint,
            manifest,
            conditions,
            count,
            latent_dim,
        } => latent(&common, &checkpoint, &manifest, conditions, count, latent_dim),
    }
}

fn dataset(c: &Common, kind: Kind, feature: Feature, source: Option<&Path>) -> Result<()> {
    let s = Settings::load(c.config.as_deref())?;
    let count = s.get_or("count", 2000)?;
    let graphs = match kind {
        Kind::Ws => ws_corpus(
            count,
            s.get_or("nodes", 50)?,
            s.get_or("k", 3)?,
            (s.get_or("p_min", 0.1)?, s.get_or("p_max", 0.6)?),
            c.seed,
        )?,
        Kind::Er => er_corpus(
            count,
            s.get_or("nodes", 20)?,
            (s.get_or("p_min", 0.15)?, s.get_or("p_max", 0.6)?),
            c.seed,
        )?,
        Kind::Walk => {
            let path = source.ok_or_else(|| Error::Config("--source is required for walk corpora".into()))?;
            let big = Graph::from_edge_list(&std::fs::read_to_string(path)?)?;
            walk_corpus(&big, count, s.get_or("walk_nodes", 50)?, c.seed)?
        }
    };
    let default_places = if feature == Feature::Density { 2 } else { 1 };
    let ds = build_dataset(
        &graphs,
        feature,
        s.get_or("dim", 10)?,
        s.get_or("round_places", default_places)?,
        c.seed,
    )?;
    let path = ds.write(&c.out)?;
    println!(
        "wrote {} graphs ({} excluded) to {}",
        ds.graphs.len(),
        ds.excluded.len(),
        path.display()
    );
    Ok(())
}

fn train_cmd(c: &Common, manifest: &Path, spots: Option<&str>, resume: Option<&Path>) -> Result<()> {
    let s = Settings::load(c.config.as_deref())?;
    let ds = Dataset::load(manifest)?;
    let data = ds.training_data()?;
    let mut cfg = TrainConfig {
        seed: c.seed,
        ..TrainConfig::default()
    };
    s.apply_train(&mut cfg)?;
    if let Some(sp) = spots {
        cfg.spots = ConditionSpots::parse(sp)?;
    }
    let trainer = match resume {
        Some(p) => Trainer::resume(&data, Checkpoint::load(p)?, cfg)?,
        None => {
            let mut hp = HyperParams::full(data.vocab);
            hp.condition_dim = ds.manifest.dim;
            s.apply_model(&mut hp)?;
            Trainer::new(&data, hp, cfg)?
        }
    };
    std::fs::create_dir_all(&c.out)?;
    let outcome = train::run(trainer, Some(&c.out))?;
    if let Some(l) = outcome.log.last() {
        println!(
            "stopped after epoch {} ({:?}): train {:.4}, val {:.4}",
            l.epoch, outcome.stop, l.train_loss, l.val_loss
        );
    }
    Ok(())
}

fn generate(c: &Common, g: &GenArgs, retries: usize, max_steps: Option<usize>) -> Result<()> {
    let ckpt = Checkpoint::load(&g.checkpoint)?;
    let policy = if retries > 0 {
        ConnectivityPolicy::RetryUntilConnected { budget: retries }
    } else {
        ConnectivityPolicy::AcceptAll
    };
    let mut summary = Vec::new();
    for (i, &cond) in g.conditions.iter().enumerate() {
        let req = GenerationRequest {
            max_steps,
            policy,
            ..GenerationRequest::new(cond, g.count, graphdial::rng::derive_seed(c.seed, i as u64))
        };
        let batch = graphdial::generate::generate_from_checkpoint(&ckpt, &req)?;
        let dir = c.out.join(format!("condition_{}", batch.condition.value));
        batch.write(&dir)?;
        println!(
            "condition {}: {} graphs, connectivity {:.3}",
            batch.condition.value,
            batch.graphs().len(),
            batch.connectivity_rate()
        );
        summary.push(json!({
            "condition": batch.condition.value,
            "dir": dir.file_name().map(|d| d.to_string_lossy().into_owned()),
            "connectivity_rate": batch.connectivity_rate(),
        }));
    }
    write_json(
        &c.out.join("metadata.json"),
        &json!({"checkpoint": g.checkpoint, "seed": c.seed, "count": g.count, "conditions": summary}),
    )
}

fn eval(c: &Common, g: &GenArgs, manifest: Option<&Path>) -> Result<()> {
    let ckpt = Checkpoint::load(&g.checkpoint)?;
    let ds = manifest.map(Dataset::load).transpose()?;
    let batches = generate_sets(&ckpt, &g.conditions, g.count, c.seed, ConnectivityPolicy::AcceptAll)?;
    let (sets, empty): (Vec<_>, Vec<_>) = batch_sets(&batches).into_iter().partition(|(_, gs)| !gs.is_empty());
    if sets.is_empty() {
        return Err(Error::EmptyGeneration);
    }
    let report = eval_features(&sets, ds.as_ref().map(|d| d.graphs.as_slice()))?;
    std::fs::create_dir_all(&c.out)?;
    let mut text = report.text();
    for (cond, _) in &empty {
        text.push_str(&format!("condition {cond}: no graph generated\n"));
    }
    let feature = ckpt.feature.as_deref().map(str::parse::<Feature>).transpose()?;
    let mut rmse = Vec::new();
    if let Some(f) = feature {
        text.push_str(&format!("\nRMSE of {f} against the condition\n"));
        for (cond, graphs) in &sets {
            let r = rmse_vs_condition(&feature_values(graphs, f), *cond).ok();
            text.push_str(&format!(
                "  {cond}: {}\n",
                r.map(|x| format!("{x:.4}")).unwrap_or_else(|| "--".into())
            ));
            rmse.push(json!({"condition": cond, "rmse": r}));
        }
    }
    std::fs::write(c.out.join("report.txt"), &text)?;
    let (csv, svg) = pairwise_emit(&report.rows)?;
    std::fs::write(c.out.join("features.csv"), csv)?;
    std::fs::write(c.out.join("pairplot.svg"), svg)?;
    write_json(
        &c.out.join("metadata.json"),
        &json!({
            "checkpoint": g.checkpoint,
            "seed": c.seed,
            "count": g.count,
            "summaries": report.summaries,
            "dataset_percentiles": report.dataset_percentiles,
            "rmse": rmse,
            "batches": batches.iter().map(|b| b.metadata()).collect::<Vec<_>>(),
        }),
    )?;
    print!("{text}");
    Ok(())
}

fn ablate(c: &Common, manifest: &Path, conditions: Vec<f64>, count: usize) -> Result<()> {
    let s = Settings::load(c.config.as_deref())?;
    let ds = Dataset::load(manifest)?;
    let mut cfg = TrainConfig {
        seed: c.seed,
        ..TrainConfig::default()
    };
    s.apply_train(&mut cfg)?;
    let mut hp = HyperParams::full(ds.manifest.vocab);
    hp.condition_dim = ds.manifest.dim;
    s.apply_model(&mut hp)?;
    let plan = AblationPlan {
        conditions,
        count,
        seed: c.seed,
        policy: ConnectivityPolicy::AcceptAll,
        pretrained: Vec::new(),
    };
    let report = run_ablation(&ds, &hp, &cfg, &plan)?;
    std::fs::create_dir_all(&c.out)?;
    let text = report.text();
    std::fs::write(c.out.join("report.txt"), &text)?;
    let rows: Vec<_> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "variant": r.label(),
                "spots": r.spots.label(),
                "rmse": r.rmse,
                "mean_rmse": r.mean_rmse(),
                "failed": r.failed,
            })
        })
        .collect();
    write_json(
        &c.out.join("metadata.json"),
        &json!({"feature": report.feature, "conditions": report.conditions, "seed": c.seed, "count": count, "rows": rows}),
    )?;
    print!("{text}");
    Ok(())
}

fn latent(
    c: &Common,
    checkpoint: &Path,
    manifest: &Path,
    conditions: Vec<f64>,
    count: usize,
    latent_dim: usize,
) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let ds = Dataset::load(manifest)?;
    let mut plan = LatentPlan::new(count, c.seed);
    plan.expected_latent_dim = latent_dim;
    if !conditions.is_empty() {
        plan.conditions = conditions;
    }
    let report = latent_analysis(&ckpt, &ds, &plan)?;
    std::fs::create_dir_all(&c.out)?;
    let text = report.text();
    std::fs::write(c.out.join("report.txt"), &text)?;
    write_json(&c.out.join("metadata.json"), &serde_json::to_value(&report)?)?;
    print!("{text}");
    Ok(())
}
