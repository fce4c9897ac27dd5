//! The `edim` command-line front end.
//!
//! Every subcommand loads an optional JSON experiment configuration
//! (`--config`), applies the global overrides, does its work and records the
//! results as one run under `<out>/runs/<run_id>/`. Reports are rebuilt from
//! those records alone.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical or
//! training failure.

mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::baselines::{pca_apply, pca_fit, reduce, Baseline};
use crate::checkpoint::load_checkpoint;
use crate::data::{
    load_embeddings, save_cls_tsv, save_corpus, save_embeddings, save_nli_tsv, save_sts_tsv, Vocab,
};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_classification, evaluate_sts, evaluate_sts_embeddings, grid_mix_and_match, Embedder,
    EncoderOutput, EvalResult, PoolerOutput, SourceTag, StsSet,
};
use crate::model::Model;
use crate::numeric::Matrix;
use crate::report::{emit_report, Layout, ReportOptions};
use crate::store::{validate_id, EvalRecord, GridRecord, RunStore, RunWriter};
use crate::training::{
    default_candidates, train_sweep, two_step_train_many, Objective, TrainedBundle,
};

pub use config::{DataConfig, DataFiles, Dataset, ExperimentConfig};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "EDIM_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "edim",
    version,
    about = "Train small sentence encoders, study embedding dimension, and report results"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Experiment configuration (JSON with optional model/train/data/manifold sections).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every random choice, including synthetic data generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Root of the run store.
    #[arg(long, global = true, value_name = "DIR", default_value = "edim-out")]
    out: PathBuf,
    /// Name of the run directory (a default is derived from the command).
    #[arg(long, global = true)]
    run_id: Option<String>,
    /// Replace an existing run with the same id.
    #[arg(long, global = true)]
    force: bool,
    /// Override train.epochs.
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Override train.objective.
    #[arg(long, global = true, value_enum)]
    objective: Option<ObjectiveArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Contrastive,
    Nli,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Contrastive => Objective::Contrastive,
            ObjectiveArg::Nli => Objective::Nli,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SourceArg {
    Encoder,
    Pooler,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Pca,
    Isomap,
    Lle,
}

impl From<MethodArg> for Baseline {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Pca => Baseline::Pca,
            MethodArg::Isomap => Baseline::Isomap,
            MethodArg::Lle => Baseline::Lle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Sts,
    Cls,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic dataset as plain files plus a matching config.
    Synth {
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        dir: PathBuf,
    },
    /// Train one model end to end at pooler dimension --dim.
    Train {
        #[arg(long)]
        dim: usize,
    },
    /// Train one end-to-end model per dimension.
    Sweep {
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
    },
    /// Two-step training: swap in the best candidate encoder, then fine-tune the pooler.
    TwoStep {
        /// Target pooler dimension(s).
        #[arg(long, value_delimiter = ',', required = true)]
        target_dim: Vec<usize>,
        /// Candidate dimensions (default: D, D/2, ... down to 4).
        #[arg(long, value_delimiter = ',')]
        candidates: Option<Vec<usize>>,
    },
    /// Evaluate every encoder x pooler combination of an end-to-end sweep.
    Grid {
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
    },
    /// Reduce embeddings with PCA, Isomap or LLE and evaluate the result on STS.
    Baseline {
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Output dimension.
        #[arg(long)]
        dim: usize,
        /// Embed with this checkpoint.
        #[arg(
            long,
            value_name = "FILE",
            conflicts_with = "embeddings",
            required_unless_present = "embeddings"
        )]
        ckpt: Option<PathBuf>,
        /// Precomputed embeddings of --dataset's pairs (interleaved a, b rows).
        #[arg(long, value_name = "FILE")]
        embeddings: Option<PathBuf>,
        /// Precomputed embeddings to fit on (default: the --embeddings rows).
        #[arg(long, value_name = "FILE", requires = "embeddings")]
        fit_embeddings: Option<PathBuf>,
        /// Which checkpoint output to reduce.
        #[arg(long, value_enum, default_value = "pooler")]
        source: SourceArg,
        /// Number of corpus sentences to fit on (overrides baseline_fit_size).
        #[arg(long)]
        fit_size: Option<usize>,
        /// Evaluation set(s): validation, test or all.
        #[arg(long, default_value = "all")]
        dataset: String,
    },
    /// Evaluate a checkpoint or an embedding file.
    Eval {
        #[arg(
            long,
            value_name = "FILE",
            conflicts_with = "embeddings",
            required_unless_present = "embeddings"
        )]
        ckpt: Option<PathBuf>,
        /// Embeddings of --dataset's pairs (interleaved a, b rows).
        #[arg(long, value_name = "FILE")]
        embeddings: Option<PathBuf>,
        /// Checkpoint output (encoder, pooler, both) or, with --embeddings,
        /// a source tag such as baseline-pca.
        #[arg(long)]
        source: Option<String>,
        /// Evaluation set(s): validation, test or all.
        #[arg(long, default_value = "all")]
        dataset: String,
        #[arg(long, value_enum, default_value = "sts")]
        task: TaskArg,
    },
    /// Build a report from the run store.
    Report {
        #[arg(long)]
        layout: String,
        #[arg(long, default_value = "test")]
        dataset: String,
        /// Comma-separated run ids (default: every run).
        #[arg(long, value_delimiter = ',')]
        runs: Option<Vec<String>>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Train { .. } => "train",
            Command::Sweep { .. } => "sweep",
            Command::TwoStep { .. } => "two-step",
            Command::Grid { .. } => "grid",
            Command::Baseline { .. } => "baseline",
            Command::Eval { .. } => "eval",
            Command::Report { .. } => "report",
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize =
        raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Error::Usage(format!("{THREADS_ENV}={raw:?} is not a positive integer"))
        })?;
    // A pool may already exist when dispatch runs more than once in a process.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

struct Context {
    global: GlobalArgs,
    config: ExperimentConfig,
    seed: u64,
    store: RunStore,
}

impl Context {
    fn new(global: GlobalArgs, seed_fallback: Option<u64>) -> Result<Self> {
        let mut config = match &global.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(e) = global.epochs {
            config.train.epochs = e;
        }
        if let Some(o) = global.objective {
            config.train.objective = o.into();
        }
        if let Some(seed) = global.seed.or(seed_fallback) {
            config = config.with_seed(seed);
        }
        config.validate()?;
        Ok(Self {
            seed: config.train.seed,
            store: RunStore::new(&global.out),
            global,
            config,
        })
    }

    fn run_id(&self, default: String) -> Result<String> {
        let id = self.global.run_id.clone().unwrap_or(default);
        validate_id("run id", &id)?;
        Ok(id)
    }

    fn create_run(&self, default_id: String, command: &str, args: Value) -> Result<RunWriter> {
        let writer = self
            .store
            .create_run(&self.run_id(default_id)?, self.global.force)?;
        let mut snapshot = serde_json::to_value(&self.config)
            .map_err(|e| Error::Config(format!("cannot serialise the configuration: {e}")))?;
        let obj = snapshot
            .as_object_mut()
            .expect("configuration serialises to an object");
        obj.insert("command".into(), json!(command));
        obj.insert("args".into(), args);
        obj.insert("seed".into(), json!(self.seed));
        writer.write_config(&snapshot)?;
        Ok(writer)
    }
}

fn run(cli: Cli) -> Result<()> {
    let name = cli.command.name();
    match cli.command {
        Command::Report {
            layout,
            dataset,
            runs,
        } => {
            let layout: Layout = layout.parse()?;
            let store = RunStore::new(&cli.global.out);
            let opts = ReportOptions { dataset, runs };
            for path in emit_report(&store, layout, &opts)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Synth { dir } => {
            let ctx = Context::new(cli.global, None)?;
            synth(&ctx, &dir)
        }
        Command::Train { dim } => {
            let ctx = Context::new(cli.global, None)?;
            sweep(&ctx, name, format!("train-d{dim}-s{}", ctx.seed), &[dim])
        }
        Command::Sweep { dims } => {
            let ctx = Context::new(cli.global, None)?;
            sweep(&ctx, name, format!("sweep-s{}", ctx.seed), &dims)
        }
        Command::TwoStep {
            target_dim,
            candidates,
        } => {
            let ctx = Context::new(cli.global, None)?;
            two_step(&ctx, &target_dim, candidates)
        }
        Command::Grid { dims } => {
            let ctx = Context::new(cli.global, None)?;
            grid(&ctx, &dims)
        }
        Command::Baseline {
            method,
            dim,
            ckpt,
            embeddings,
            fit_embeddings,
            source,
            fit_size,
            dataset,
        } => {
            let bundle = ckpt.as_deref().map(load_checkpoint).transpose()?;
            let fallback = match &bundle {
                Some(b) => Some(b.provenance.seed),
                None => embeddings.as_deref().and_then(run_seed),
            };
            let ctx = Context::new(cli.global, fallback)?;
            let input = match (&bundle, embeddings) {
                (Some(b), _) => BaselineInput::Model {
                    model: &b.model,
                    vocab: run_vocab(ckpt.as_deref())?,
                    source,
                },
                (None, Some(path)) => BaselineInput::Files {
                    fit: fit_embeddings,
                    eval: path,
                },
                (None, None) => unreachable!("clap requires --ckpt or --embeddings"),
            };
            baseline(&ctx, method.into(), dim, input, fit_size, &dataset)
        }
        Command::Eval {
            ckpt,
            embeddings,
            source,
            dataset,
            task,
        } => {
            let bundle = ckpt.as_deref().map(load_checkpoint).transpose()?;
            let fallback = match &bundle {
                Some(b) => Some(b.provenance.seed),
                None => embeddings.as_deref().and_then(run_seed),
            };
            let ctx = Context::new(cli.global, fallback)?;
            match (&bundle, embeddings) {
                (Some(b), _) => {
                    let source = match source.as_deref() {
                        None | Some("both") => SourceArg::Both,
                        Some("encoder") | Some("encoder-output") => SourceArg::Encoder,
                        Some("pooler") | Some("pooler-output") => SourceArg::Pooler,
                        Some(other) => {
                            return Err(Error::Usage(format!(
                                "--source {other:?} does not apply to a checkpoint (use encoder, pooler or both)"
                            )))
                        }
                    };
                    let path = ckpt.as_deref().expect("bundle came from --ckpt");
                    eval_checkpoint(&ctx, b, path, source, &dataset, task)
                }
                (None, Some(path)) => {
                    if task == TaskArg::Cls {
                        return Err(Error::Usage("--task cls needs --ckpt".into()));
                    }
                    let source: SourceTag = source.as_deref().unwrap_or("pooler-output").parse()?;
                    eval_embeddings(&ctx, &path, source, &dataset)
                }
                (None, None) => unreachable!("clap requires --ckpt or --embeddings"),
            }
        }
    }
}

fn io_write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn synth(ctx: &Context, dir: &Path) -> Result<()> {
    let DataConfig::Synthetic(spec) = &ctx.config.data else {
        return Err(Error::Config("synth needs a synthetic data section".into()));
    };
    let data = crate::data::gen_synthetic(spec)?;
    let ds = Dataset::from_synthetic(&data);
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_corpus(&dir.join("corpus.txt"), &ds.corpus)?;
    ds.vocab.save(&dir.join("vocab.txt"))?;
    save_sts_tsv(&dir.join("validation.tsv"), &ds.validation)?;
    save_sts_tsv(&dir.join("test.tsv"), &ds.test)?;
    save_nli_tsv(&dir.join("nli.tsv"), &ds.nli)?;
    save_cls_tsv(&dir.join("cls_train.tsv"), &ds.cls_train)?;
    save_cls_tsv(&dir.join("cls_test.tsv"), &ds.cls_test)?;

    let mut cfg = ctx.config.clone();
    cfg.data = DataConfig::Files(DataFiles {
        corpus: "corpus.txt".into(),
        vocab: Some("vocab.txt".into()),
        validation: "validation.tsv".into(),
        test: Some("test.tsv".into()),
        nli: Some("nli.tsv".into()),
        cls_train: Some("cls_train.tsv".into()),
        cls_test: Some("cls_test.tsv".into()),
    });
    let text = serde_json::to_string_pretty(&cfg)
        .map_err(|e| Error::Config(format!("cannot serialise the configuration: {e}")))?;
    let cfg_path = dir.join("config.json");
    io_write(&cfg_path, &(text + "\n"))?;
    println!(
        "wrote {} sentences, {} validation and {} test pairs to {}",
        ds.corpus.len(),
        ds.validation.len(),
        ds.test.len(),
        dir.display()
    );
    println!("config: {}", cfg_path.display());
    Ok(())
}

/// Records are keyed by the model's pooler dimension, also for encoder-output
/// scores, so both series of one model line up.
fn model_record(run_id: &str, stage: &str, model: &Model, r: &EvalResult) -> EvalRecord {
    EvalRecord {
        dimension: model.pooler_dim(),
        ..EvalRecord::from_result(run_id, stage, r)
    }
}

/// Encoder-output and pooler-output STS scores of `model` on every set.
fn sts_records(
    run_id: &str,
    stage: &str,
    model: &Model,
    sets: &[StsSet],
) -> Result<Vec<EvalRecord>> {
    let mut out = Vec::new();
    for set in sets {
        for e in [&EncoderOutput(model) as &dyn Embedder, &PoolerOutput(model)] {
            out.push(model_record(run_id, stage, model, &evaluate_sts(e, set)?));
        }
    }
    Ok(out)
}

fn print_records(records: &[EvalRecord]) {
    for r in records {
        println!(
            "{:<10} d={:<3} {:<15} {:<10} {:<8} {:.4}",
            r.stage, r.dimension, r.source, r.dataset, r.metric, r.value
        );
    }
}

fn finish(writer: &RunWriter, records: &[EvalRecord]) -> Result<()> {
    writer.write_evals(records)?;
    print_records(records);
    println!("run: {}", writer.path().display());
    Ok(())
}

fn sweep(ctx: &Context, command: &str, default_id: String, dims: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::Input("dimensions must be at least 1".into()));
    }
    let ds = Dataset::load(&ctx.config)?;
    let max_len = ctx.config.model.max_len;
    let corpus = ds.training_corpus(max_len);
    let bundles = train_sweep(&ctx.config.model, &ctx.config.train, &corpus, dims)?;

    let writer = ctx.create_run(default_id, command, json!({ "dims": dims }))?;
    ds.vocab.save(&writer.path().join("vocab.txt"))?;
    let sets = ds.sts_sets(max_len);
    let mut records = Vec::new();
    for b in &bundles {
        writer.save_checkpoint(&format!("e2e-d{}", b.pooler_dim()), b)?;
        records.extend(sts_records(writer.id(), "end-to-end", &b.model, &sets)?);
    }
    let losses: Vec<(String, usize, &[f64])> = bundles
        .iter()
        .map(|b| {
            (
                "end-to-end".to_string(),
                b.pooler_dim(),
                b.loss_trace.as_slice(),
            )
        })
        .collect();
    writer.write_loss(&losses)?;
    finish(&writer, &records)
}

fn two_step(ctx: &Context, targets: &[usize], candidates: Option<Vec<usize>>) -> Result<()> {
    let candidates = candidates.unwrap_or_else(|| default_candidates(ctx.config.model.hidden_dim));
    let ds = Dataset::load(&ctx.config)?;
    let max_len = ctx.config.model.max_len;
    let corpus = ds.training_corpus(max_len);
    let sets = ds.sts_sets(max_len);
    let outcomes = two_step_train_many(
        &ctx.config.model,
        &ctx.config.train,
        &corpus,
        &sets[0],
        targets,
        &candidates,
    )?;

    let writer = ctx.create_run(
        format!("two-step-s{}", ctx.seed),
        "two-step",
        json!({ "target_dim": targets, "candidates": candidates }),
    )?;
    ds.vocab.save(&writer.path().join("vocab.txt"))?;

    let mut records = Vec::new();
    let mut losses: Vec<(String, usize, &[f64])> = Vec::new();
    let mut selections = Vec::new();
    // Candidate runs are shared between targets; record them once.
    for c in &outcomes[0].candidates {
        writer.save_checkpoint(&format!("cand-d{}", c.pooler_dim()), c)?;
        records.extend(sts_records(writer.id(), "candidate", &c.model, &sets)?);
        losses.push(("candidate".into(), c.pooler_dim(), &c.loss_trace));
    }
    for (o, &t) in outcomes.iter().zip(targets) {
        let stages: [(&str, &str, &TrainedBundle); 3] = [
            ("e2e", "end-to-end", &o.end_to_end),
            ("step1", "step1", &o.step1),
            ("step2", "step2", &o.step2),
        ];
        for (prefix, stage, bundle) in stages {
            writer.save_checkpoint(&format!("{prefix}-d{t}"), bundle)?;
            records.extend(sts_records(writer.id(), stage, &bundle.model, &sets)?);
        }
        losses.push(("end-to-end".into(), t, &o.end_to_end.loss_trace));
        losses.push(("step2".into(), t, &o.step2.loss_trace));
        selections.push(json!({
            "target_dim": t,
            "selected_dim": o.selection.dim,
            "scores": o.selection.scores.iter()
                .map(|(d, s)| json!({ "dim": d, "validation_spearman": s }))
                .collect::<Vec<_>>(),
        }));
        println!("d={t}: selected encoder d'={}", o.selection.dim);
    }
    writer.write_loss(&losses)?;
    let sel_path = writer.path().join("selection.json");
    let text = serde_json::to_string_pretty(&selections).expect("selection serialises");
    io_write(&sel_path, &(text + "\n"))?;
    finish(&writer, &records)
}

fn grid(ctx: &Context, dims: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::Input("dimensions must be at least 1".into()));
    }
    let ds = Dataset::load(&ctx.config)?;
    let max_len = ctx.config.model.max_len;
    let corpus = ds.training_corpus(max_len);
    let bundles = train_sweep(&ctx.config.model, &ctx.config.train, &corpus, dims)?;
    let models: Vec<&Model> = bundles.iter().map(|b| &b.model).collect();
    let sets = ds.sts_sets(max_len);

    let writer = ctx.create_run(
        format!("grid-s{}", ctx.seed),
        "grid",
        json!({ "dims": dims }),
    )?;
    ds.vocab.save(&writer.path().join("vocab.txt"))?;
    let mut grid_records = Vec::new();
    for set in &sets {
        let report = grid_mix_and_match(&models, set)?;
        grid_records.extend(GridRecord::from_report(writer.id(), &set.id, &report));
    }
    writer.write_grid(&grid_records)?;
    let mut records = Vec::new();
    for b in &bundles {
        writer.save_checkpoint(&format!("e2e-d{}", b.pooler_dim()), b)?;
        records.extend(sts_records(writer.id(), "end-to-end", &b.model, &sets)?);
    }
    finish(&writer, &records)
}

/// Seed recorded by the run that wrote `file`, so embeddings are scored
/// against the same generated data without repeating `--seed`.
fn run_seed(file: &Path) -> Option<u64> {
    let text = std::fs::read_to_string(file.parent()?.join("config.json")).ok()?;
    serde_json::from_str::<Value>(&text)
        .ok()?
        .get("seed")?
        .as_u64()
}

/// The vocabulary stored next to a checkpoint, if any.
fn run_vocab(ckpt: Option<&Path>) -> Result<Option<Vocab>> {
    let Some(dir) = ckpt.and_then(Path::parent) else {
        return Ok(None);
    };
    let path = dir.join("vocab.txt");
    if path.is_file() {
        Ok(Some(Vocab::load(&path)?))
    } else {
        Ok(None)
    }
}

fn selected_sets<'a>(
    ds: &'a Dataset,
    name: &str,
) -> Result<Vec<(&'static str, &'a [crate::data::StsPair])>> {
    match name {
        "all" => {
            let mut out = vec![("validation", ds.validation.as_slice())];
            if !ds.test.is_empty() {
                out.push(("test", ds.test.as_slice()));
            }
            Ok(out)
        }
        "validation" => Ok(vec![("validation", ds.sts_pairs("validation")?)]),
        "test" => Ok(vec![("test", ds.sts_pairs("test")?)]),
        other => Err(Error::Usage(format!(
            "unknown dataset {other:?} (expected validation, test or all)"
        ))),
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into())
}

enum BaselineInput<'a> {
    Model {
        model: &'a Model,
        vocab: Option<Vocab>,
        source: SourceArg,
    },
    Files {
        fit: Option<PathBuf>,
        eval: PathBuf,
    },
}

fn baseline(
    ctx: &Context,
    method: Baseline,
    dim: usize,
    input: BaselineInput<'_>,
    fit_size: Option<usize>,
    dataset: &str,
) -> Result<()> {
    let ds = Dataset::load(&ctx.config)?;
    let fit_size = fit_size.unwrap_or(ctx.config.baseline_fit_size);
    let sets = selected_sets(&ds, dataset)?;

    // (dataset name, interleaved embeddings, gold) per evaluation set, plus the fit sample.
    let (fit, evals): (Matrix, Vec<(&str, Matrix, Vec<f64>)>) = match &input {
        BaselineInput::Model {
            model,
            vocab,
            source,
        } => {
            let vocab = vocab.as_ref().unwrap_or(&ds.vocab);
            let max_len = model.config.max_len;
            let embed = |batch: &[Vec<u32>]| match source {
                SourceArg::Encoder => model.encode(batch, None),
                SourceArg::Pooler => model.embed(batch),
                SourceArg::Both => Err(Error::Usage(
                    "--source both does not apply to baselines".into(),
                )),
            };
            let take = fit_size.min(ds.corpus.len());
            let fit = embed(&vocab.tokenize_all(&ds.corpus[..take], max_len))?;
            let mut evals = Vec::new();
            for (name, pairs) in &sets {
                let set = StsSet::new(*name, pairs, vocab, max_len);
                evals.push((*name, embed(&set.interleaved())?, set.gold));
            }
            (fit, evals)
        }
        BaselineInput::Files { fit, eval } => {
            if sets.len() != 1 {
                return Err(Error::Usage(
                    "--embeddings covers one dataset; pass --dataset validation or test".into(),
                ));
            }
            let (name, pairs) = sets[0];
            let eval_m = load_embeddings(eval)?;
            let fit_m = match fit {
                Some(p) => load_embeddings(p)?,
                None => eval_m.clone(),
            };
            let gold = pairs.iter().map(|p| p.gold).collect();
            (fit_m, vec![(name, eval_m, gold)])
        }
    };

    let input_desc = match &input {
        BaselineInput::Model { source, .. } => {
            json!({ "source": format!("{source:?}").to_lowercase() })
        }
        BaselineInput::Files { fit, eval } => json!({
            "embeddings": file_stem(eval),
            "fit_embeddings": fit.as_deref().map(file_stem),
        }),
    };
    let writer = ctx.create_run(
        format!("baseline-{method}-d{dim}-s{}", ctx.seed),
        "baseline",
        json!({ "method": method.as_str(), "dim": dim, "fit_size": fit_size, "dataset": dataset, "input": input_desc }),
    )?;

    let projection = match method {
        Baseline::Pca => Some(pca_fit(&fit, dim)?),
        _ => None,
    };
    let mut manifold = ctx.config.manifold;
    manifold.target_dim = dim;
    let mut records = Vec::new();
    for (name, x, gold) in &evals {
        let reduced = match &projection {
            Some(p) => pca_apply(p, x)?,
            // Graph methods embed the fit sample and the evaluation rows together.
            None => {
                let mut rows = fit.to_rows();
                rows.extend(x.to_rows());
                let joint = reduce(method, &Matrix::from_rows(&rows)?, &manifold)?;
                let idx: Vec<usize> = (fit.rows()..joint.rows()).collect();
                joint.select_rows(&idx)
            }
        };
        save_embeddings(&writer.path().join(format!("{name}.csv")), &reduced)?;
        let source = SourceTag::Baseline(method.as_str().to_string());
        let r = evaluate_sts_embeddings(&reduced, gold, source, name)?;
        records.push(EvalRecord::from_result(writer.id(), "baseline", &r));
    }
    finish(&writer, &records)
}

fn eval_checkpoint(
    ctx: &Context,
    bundle: &TrainedBundle,
    ckpt: &Path,
    source: SourceArg,
    dataset: &str,
    task: TaskArg,
) -> Result<()> {
    let ds = Dataset::load(&ctx.config)?;
    let vocab = run_vocab(Some(ckpt))?.unwrap_or_else(|| ds.vocab.clone());
    let model = &bundle.model;
    let max_len = model.config.max_len;
    let embedders: Vec<Box<dyn Embedder + '_>> = match source {
        SourceArg::Encoder => vec![Box::new(EncoderOutput(model))],
        SourceArg::Pooler => vec![Box::new(PoolerOutput(model))],
        SourceArg::Both => vec![
            Box::new(EncoderOutput(model)),
            Box::new(PoolerOutput(model)),
        ],
    };
    let stage = bundle.provenance.stage.as_str();
    let run_default = format!(
        "eval-{}-{}-s{}",
        file_stem(ckpt),
        match task {
            TaskArg::Sts => "sts",
            TaskArg::Cls => "cls",
        },
        ctx.seed
    );
    let mut results = Vec::new();
    match task {
        TaskArg::Sts => {
            for (name, pairs) in selected_sets(&ds, dataset)? {
                let set = StsSet::new(name, pairs, &vocab, max_len);
                for e in &embedders {
                    results.push(evaluate_sts(e.as_ref(), &set)?);
                }
            }
        }
        TaskArg::Cls => {
            if ds.cls_train.is_empty() || ds.cls_test.is_empty() {
                return Err(Error::Config(
                    "the data section has no classification sets".into(),
                ));
            }
            for e in &embedders {
                results.push(evaluate_classification(
                    e.as_ref(),
                    &vocab,
                    max_len,
                    &ds.cls_train,
                    &ds.cls_test,
                    "cls",
                )?);
            }
        }
    }
    let writer = ctx.create_run(
        run_default,
        "eval",
        json!({ "ckpt": file_stem(ckpt), "dataset": dataset, "task": format!("{task:?}").to_lowercase() }),
    )?;
    let records: Vec<EvalRecord> = results
        .iter()
        .map(|r| model_record(writer.id(), stage, model, r))
        .collect();
    finish(&writer, &records)
}

fn eval_embeddings(ctx: &Context, path: &Path, source: SourceTag, dataset: &str) -> Result<()> {
    let ds = Dataset::load(&ctx.config)?;
    let sets = selected_sets(&ds, dataset)?;
    if sets.len() != 1 {
        return Err(Error::Usage(
            "--embeddings covers one dataset; pass --dataset validation or test".into(),
        ));
    }
    let (name, pairs) = sets[0];
    let x = load_embeddings(path)?;
    let gold: Vec<f64> = pairs.iter().map(|p| p.gold).collect();
    let result = evaluate_sts_embeddings(&x, &gold, source.clone(), name)?;
    let stage = match source {
        SourceTag::Baseline(_) => "baseline",
        _ => "external",
    };
    let writer = ctx.create_run(
        format!("eval-{}-{name}-s{}", file_stem(path), ctx.seed),
        "eval",
        json!({ "embeddings": file_stem(path), "dataset": name, "source": source.to_string() }),
    )?;
    finish(
        &writer,
        &[EvalRecord::from_result(writer.id(), stage, &result)],
    )
}
