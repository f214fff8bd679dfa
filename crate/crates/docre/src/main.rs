//! Batch pipeline entry point: corpus generation, training, evaluation,
//! importance scoring, the beta sweep, and the method comparison. Every
//! command resolves a key=value config (file plus flag overrides), writes
//! its artifacts under an output directory, and records a run manifest.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use docre::config::KvConfig;
use docre::corpus::{
    emit_docred_json, generate_synthetic, load_docred_json, to_raw, CorpusSplit, SynthConfig,
};
use docre::eval::{
    beta_sweep, compare_methods, evidence_metrics_auto, relation_metrics, robustness_probe,
    tune_threshold, write_beta_sweep_csv, write_compare_csv, write_scatter_csv,
    write_scatter_svg, Method,
};
use docre::manifest::RunManifest;
use docre::model::{ModelConfig, ModelState};
use docre::sief::{build_importance_table, export_importance_csv};
use docre::train::{train, TrainConfig, TrainReport};
use docre::{Error, Result};

#[derive(Parser)]
#[command(
    name = "docre",
    about = "Document-level relation extraction with sentence importance \
             estimation and a focusing loss",
    after_help = "Config keys (key=value file or --set overrides):\n\
        generation: seed=1 train_docs=200 dev_docs=50 test_docs=50 \
        sentences_min=4 sentences_max=8 entities_min=3 entities_max=6 \
        relation_count=6 distractor_ratio=0.4 two_sentence_fraction=0.3 \
        entity_pool=40\n\
        model: embedding_dim=32 hidden_dim=32 encoder_kind=mean_pool \
        init_scale=0.1\n\
        training: epochs=20 learning_rate=0.001 optimizer=adam seed=0 \
        sief_enabled=true shuffle=true checkpoint_every=0\n\
        focusing loss: beta=0.8 loss_variant=monte_carlo \
        target_gradient=both nonevidence_source=score\n\
        Set DOCRE_VERBOSE=1 for progress output on stderr."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// key=value config file; flags and --set entries override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a single config key (repeatable), e.g. --set beta=0.4.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Master seed override (shorthand for --set seed=N).
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<KvConfig> {
        let mut cfg = match &self.config {
            Some(path) => KvConfig::load(path)?,
            None => KvConfig::default(),
        };
        for entry in &self.sets {
            let (key, value) = entry.split_once('=').ok_or_else(|| {
                Error::Config(format!("--set expects key=value, got {entry:?}"))
            })?;
            cfg.set(key.trim(), value.trim());
        }
        if let Some(seed) = self.seed {
            cfg.set("seed", &seed.to_string());
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainOverrides {
    /// Enable or disable the focusing loss (shorthand for sief_enabled).
    #[arg(long, value_name = "on|off")]
    sief: Option<String>,
    /// Focusing-loss variant: exact_subsets | linearized | monte_carlo.
    #[arg(long)]
    loss_variant: Option<String>,
    /// Importance threshold for non-evidence sets.
    #[arg(long)]
    beta: Option<f64>,
}

impl TrainOverrides {
    fn apply(&self, cfg: &mut KvConfig) {
        if let Some(sief) = &self.sief {
            cfg.set("sief_enabled", sief);
        }
        if let Some(variant) = &self.loss_variant {
            cfg.set("loss_variant", variant);
        }
        if let Some(beta) = self.beta {
            cfg.set("beta", &beta.to_string());
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted evidence.
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory receiving train.json / dev.json / test.json.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train a model on a generated corpus.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        overrides: TrainOverrides,
        /// Directory holding train.json / dev.json / test.json.
        #[arg(long)]
        corpus_dir: PathBuf,
        /// Directory receiving the checkpoint, report, and manifest.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluate a checkpoint: relation metrics, evidence prediction, and
    /// robustness (dev-tuned threshold, reused on test).
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also export the robustness scatter as CSV and SVG.
        #[arg(long)]
        scatter: bool,
    },
    /// Dump the importance table of every document in a split as CSV.
    ScoreImportance {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus_dir: PathBuf,
        /// Split to score: train | dev | test.
        #[arg(long, default_value = "dev")]
        split: String,
        #[arg(long)]
        out_dir: PathBuf,
        /// Threshold used for the below-beta column.
        #[arg(long, default_value_t = 0.8)]
        beta: f64,
    },
    /// Train one model per beta and emit the dev-F1 sweep CSV.
    SweepBeta {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        overrides: TrainOverrides,
        #[arg(long)]
        corpus_dir: PathBuf,
        /// Comma-separated beta grid.
        #[arg(long, default_value = "0,0.2,0.4,0.6,0.8,1.0,1.2,1.4,1.6,1.8")]
        betas: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train and evaluate methods across seeds and emit the comparison CSV.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        overrides: TrainOverrides,
        #[arg(long)]
        corpus_dir: PathBuf,
        /// Comma-separated subset of: base,sief,rand,nomention,gtruth.
        #[arg(long, default_value = "base,sief,rand,nomention,gtruth")]
        methods: String,
        /// Comma-separated seeds.
        #[arg(long, default_value = "1,2,3,4,5")]
        seeds: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn verbose() -> bool {
    std::env::var("DOCRE_VERBOSE").is_ok_and(|v| v != "0" && !v.is_empty())
}

fn progress(msg: &str) {
    if verbose() {
        eprintln!("docre: {msg}");
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn load_corpus(dir: &Path) -> Result<CorpusSplit> {
    let read = |name: &str| load_docred_json(&dir.join(name));
    CorpusSplit::assemble(read("train.json")?, read("dev.json")?, read("test.json")?)
}

fn corpus_inputs(manifest: &mut RunManifest, dir: &Path) -> Result<()> {
    for name in ["train.json", "dev.json", "test.json"] {
        manifest.add_input(&dir.join(name))?;
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Consumes model + train keys from the config; relation and vocab sizes
/// come from the corpus.
fn resolve_training(
    mut cfg: KvConfig,
    corpus: &CorpusSplit,
) -> Result<(ModelConfig, TrainConfig)> {
    let train_cfg = TrainConfig::from_kv(&mut cfg)?;
    let model_cfg = ModelConfig::from_kv(
        &mut cfg,
        corpus.relation_set.len(),
        corpus.vocabulary.size(),
        train_cfg.seed,
    )?;
    cfg.finish()?;
    Ok((model_cfg, train_cfg))
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("cannot parse {what} entry {s:?}")))
        })
        .collect()
}

fn cmd_generate(config: ConfigArgs, out_dir: PathBuf) -> Result<()> {
    let mut cfg = config.resolve()?;
    let raw_config = cfg.raw_entries().clone();
    let synth = SynthConfig::from_kv(&mut cfg)?;
    cfg.finish()?;
    ensure_dir(&out_dir)?;
    progress("generating synthetic corpus");
    let corpus = generate_synthetic(&synth)?;
    let mut manifest = RunManifest::new("generate", synth.seed, raw_config);
    for (name, docs) in [
        ("train.json", &corpus.train),
        ("dev.json", &corpus.dev),
        ("test.json", &corpus.test),
    ] {
        let raws: Vec<_> = docs.iter().map(|d| to_raw(d, &corpus.relation_set)).collect();
        let path = out_dir.join(name);
        emit_docred_json(&path, &raws)?;
        manifest.add_artifact(&path);
    }
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(())
}

fn cmd_train(
    config: ConfigArgs,
    overrides: TrainOverrides,
    corpus_dir: PathBuf,
    out_dir: PathBuf,
) -> Result<()> {
    let mut cfg = config.resolve()?;
    overrides.apply(&mut cfg);
    let raw_config = cfg.raw_entries().clone();
    let corpus = load_corpus(&corpus_dir)?;
    let (model_cfg, train_cfg) = resolve_training(cfg, &corpus)?;
    ensure_dir(&out_dir)?;
    progress("training");
    let (_, report) = train(&corpus, &model_cfg, &train_cfg, Some(&out_dir))?;
    let report_path = out_dir.join("train.jsonl");
    report.write_jsonl(&report_path)?;
    let mut manifest = RunManifest::new("train", train_cfg.seed, raw_config);
    corpus_inputs(&mut manifest, &corpus_dir)?;
    manifest.add_artifact(&report_path);
    if let Some(ckpt) = &report.final_checkpoint {
        manifest.add_artifact(ckpt);
    }
    manifest.save(&out_dir.join("manifest.json"))?;
    print_final_epoch(&report);
    Ok(())
}

fn print_final_epoch(report: &TrainReport) {
    if let Some(epoch) = report.epochs.last() {
        println!(
            "epoch {}: l_rel {:.4} l_sf {:.4} dev micro-F1 {:.4}",
            epoch.epoch, epoch.l_rel, epoch.l_sf, epoch.dev_micro_f1
        );
    }
}

fn cmd_eval(
    config: ConfigArgs,
    checkpoint: PathBuf,
    corpus_dir: PathBuf,
    out_dir: PathBuf,
    scatter: bool,
) -> Result<()> {
    let cfg = config.resolve()?;
    let raw_config = cfg.raw_entries().clone();
    cfg.finish()?;
    let corpus = load_corpus(&corpus_dir)?;
    let state = ModelState::load(&checkpoint)?;
    ensure_dir(&out_dir)?;
    progress("tuning the decision threshold on dev");
    let threshold = tune_threshold(&state, &corpus.dev)?;
    let train_facts = corpus.train_fact_names();
    let mut manifest = RunManifest::new("eval", state.config.seed, raw_config);
    manifest.add_input(&checkpoint)?;
    corpus_inputs(&mut manifest, &corpus_dir)?;
    for (split, docs) in [("dev", &corpus.dev), ("test", &corpus.test)] {
        progress(&format!("scoring the {split} split"));
        let metrics = relation_metrics(&state, docs, threshold.value, &train_facts)?;
        let evidence = evidence_metrics_auto(&state, docs)?;
        let robustness = robustness_probe(&state, docs)?;
        let path = out_dir.join(format!("metrics-{split}.json"));
        write_json(
            &path,
            &serde_json::json!({
                "split": split,
                "threshold": threshold,
                "relation": metrics,
                "evidence": evidence,
                "robustness_mean_abs_deviation": robustness.mean_abs_deviation,
                "robustness_violation_rate": robustness.violation_rate,
            }),
        )?;
        manifest.add_artifact(&path);
        if scatter {
            let csv_path = out_dir.join(format!("scatter-{split}.csv"));
            let svg_path = out_dir.join(format!("scatter-{split}.svg"));
            let mut csv = Vec::new();
            write_scatter_csv(&robustness.samples, &mut csv)
                .map_err(|e| Error::io(csv_path.display().to_string(), e))?;
            std::fs::write(&csv_path, csv)
                .map_err(|e| Error::io(csv_path.display().to_string(), e))?;
            let mut svg = Vec::new();
            write_scatter_svg(&robustness.samples, &mut svg)
                .map_err(|e| Error::io(svg_path.display().to_string(), e))?;
            std::fs::write(&svg_path, svg)
                .map_err(|e| Error::io(svg_path.display().to_string(), e))?;
            manifest.add_artifact(&csv_path);
            manifest.add_artifact(&svg_path);
        }
        println!(
            "{split}: micro-F1 {:.4} Ign-F1 {:.4} evidence-F1 {:.4} (threshold {:.4})",
            metrics.micro_f1, metrics.ign_f1, evidence.f1, threshold.value
        );
    }
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(())
}

fn cmd_score_importance(
    config: ConfigArgs,
    checkpoint: PathBuf,
    corpus_dir: PathBuf,
    split: String,
    out_dir: PathBuf,
    beta: f64,
) -> Result<()> {
    let cfg = config.resolve()?;
    let raw_config = cfg.raw_entries().clone();
    cfg.finish()?;
    let corpus = load_corpus(&corpus_dir)?;
    let docs = match split.as_str() {
        "train" => &corpus.train,
        "dev" => &corpus.dev,
        "test" => &corpus.test,
        other => return Err(Error::Config(format!("unknown split {other:?}"))),
    };
    let state = ModelState::load(&checkpoint)?;
    ensure_dir(&out_dir)?;
    let path = out_dir.join(format!("importance-{split}.csv"));
    let mut out = Vec::new();
    for (i, doc) in docs.iter().enumerate() {
        progress(&format!("scoring document {}/{}", i + 1, docs.len()));
        let table = build_importance_table(&state, doc, &doc.ordered_pairs())?;
        let mut chunk = Vec::new();
        export_importance_csv(&table, doc, &corpus.relation_set, beta, &mut chunk)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        if i > 0 {
            // Drop the repeated header; the file carries exactly one.
            let body = chunk.splitn(2, |&b| b == b'\n').nth(1).unwrap_or(&[]).to_vec();
            out.extend_from_slice(&body);
        } else {
            out.extend_from_slice(&chunk);
        }
    }
    std::fs::write(&path, out).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut manifest = RunManifest::new("score-importance", state.config.seed, raw_config);
    manifest.add_input(&checkpoint)?;
    corpus_inputs(&mut manifest, &corpus_dir)?;
    manifest.add_artifact(&path);
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(())
}

fn cmd_sweep_beta(
    config: ConfigArgs,
    overrides: TrainOverrides,
    corpus_dir: PathBuf,
    betas: String,
    out_dir: PathBuf,
) -> Result<()> {
    let mut cfg = config.resolve()?;
    overrides.apply(&mut cfg);
    let raw_config = cfg.raw_entries().clone();
    let corpus = load_corpus(&corpus_dir)?;
    let (model_cfg, train_cfg) = resolve_training(cfg, &corpus)?;
    let betas: Vec<f64> = parse_list(&betas, "beta")?;
    ensure_dir(&out_dir)?;
    progress("running the beta sweep");
    let rows = beta_sweep(&corpus, &model_cfg, &train_cfg, &betas)?;
    let path = out_dir.join("beta-sweep.csv");
    let mut out = Vec::new();
    write_beta_sweep_csv(&rows, &mut out)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    std::fs::write(&path, out).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut manifest = RunManifest::new("sweep-beta", train_cfg.seed, raw_config);
    corpus_inputs(&mut manifest, &corpus_dir)?;
    manifest.add_artifact(&path);
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(())
}

fn cmd_compare(
    config: ConfigArgs,
    overrides: TrainOverrides,
    corpus_dir: PathBuf,
    methods: String,
    seeds: String,
    out_dir: PathBuf,
) -> Result<()> {
    let mut cfg = config.resolve()?;
    overrides.apply(&mut cfg);
    let raw_config = cfg.raw_entries().clone();
    let corpus = load_corpus(&corpus_dir)?;
    let (model_cfg, train_cfg) = resolve_training(cfg, &corpus)?;
    let methods: Vec<Method> = parse_list(&methods, "method")?;
    let seeds: Vec<u64> = parse_list(&seeds, "seed")?;
    ensure_dir(&out_dir)?;
    progress(&format!(
        "comparing {} methods across {} seeds",
        methods.len(),
        seeds.len()
    ));
    let table = compare_methods(&corpus, &model_cfg, &train_cfg, &methods, &seeds)?;
    let csv_path = out_dir.join("compare.csv");
    let mut out = Vec::new();
    write_compare_csv(&table, &mut out)
        .map_err(|e| Error::io(csv_path.display().to_string(), e))?;
    std::fs::write(&csv_path, out)
        .map_err(|e| Error::io(csv_path.display().to_string(), e))?;
    let json_path = out_dir.join("compare.json");
    write_json(&json_path, &table)?;
    let mut manifest = RunManifest::new("compare", train_cfg.seed, raw_config);
    corpus_inputs(&mut manifest, &corpus_dir)?;
    manifest.add_artifact(&csv_path);
    manifest.add_artifact(&json_path);
    manifest.save(&out_dir.join("manifest.json"))?;
    for summary in &table.summaries {
        println!(
            "{}: dev micro-F1 {:.4} +/- {:.4}",
            summary.method, summary.dev_micro_f1.mean, summary.dev_micro_f1.std
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, out_dir } => cmd_generate(config, out_dir),
        Command::Train {
            config,
            overrides,
            corpus_dir,
            out_dir,
        } => cmd_train(config, overrides, corpus_dir, out_dir),
        Command::Eval {
            config,
            checkpoint,
            corpus_dir,
            out_dir,
            scatter,
        } => cmd_eval(config, checkpoint, corpus_dir, out_dir, scatter),
        Command::ScoreImportance {
            config,
            checkpoint,
            corpus_dir,
            split,
            out_dir,
            beta,
        } => cmd_score_importance(config, checkpoint, corpus_dir, split, out_dir, beta),
        Command::SweepBeta {
            config,
            overrides,
            corpus_dir,
            betas,
            out_dir,
        } => cmd_sweep_beta(config, overrides, corpus_dir, betas, out_dir),
        Command::Compare {
            config,
            overrides,
            corpus_dir,
            methods,
            seeds,
            out_dir,
        } => cmd_compare(config, overrides, corpus_dir, methods, seeds, out_dir),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("docre: error: {err}");
        std::process::exit(1);
    }
}
