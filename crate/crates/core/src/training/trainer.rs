use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{NliTriple, Vocab};
use crate::error::{Error, Result};
use crate::eval::{evaluate_sts, EncoderOutput, StsSet};
use crate::model::{GradScope, Model, ModelConfig, ModelGrads, PoolerParams, Upstream};
use crate::numeric::{Matrix, Rng};
use crate::objectives::{contrastive_loss, nli_loss, NliClassifier, DEFAULT_TEMPERATURE};
use crate::training::Adam;

/// PRNG streams of one job; every job seeds them from its own `(seed, stream)`.
const INIT_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const FINETUNE_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Contrastive,
    Nli,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Contrastive => "contrastive",
            Objective::Nli => "nli",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub objective: Objective,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub temperature: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 5,
            seed: 0,
            objective: Objective::Contrastive,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            temperature: DEFAULT_TEMPERATURE,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0) {
            return fail(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return fail("Adam betas must lie strictly between 0 and 1".into());
        }
        if !(self.epsilon > 0.0) {
            return fail("Adam epsilon must be positive".into());
        }
        if !(self.temperature > 0.0) {
            return fail("temperature must be positive".into());
        }
        Ok(())
    }
}

/// Tokenised training data for both objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCorpus {
    pub id: String,
    pub sentences: Vec<Vec<u32>>,
    /// `(premise, hypothesis, label)`.
    pub nli: Vec<(Vec<u32>, Vec<u32>, usize)>,
}

impl TrainingCorpus {
    pub fn new<S: AsRef<str>>(
        id: impl Into<String>,
        vocab: &Vocab,
        texts: &[S],
        max_len: usize,
    ) -> Self {
        Self {
            id: id.into(),
            sentences: vocab.tokenize_all(texts, max_len),
            nli: Vec::new(),
        }
    }

    pub fn with_nli(mut self, vocab: &Vocab, triples: &[NliTriple], max_len: usize) -> Self {
        self.nli = triples
            .iter()
            .map(|t| {
                (
                    vocab.tokenize(&t.premise, max_len),
                    vocab.tokenize(&t.hypothesis, max_len),
                    t.label,
                )
            })
            .collect();
        self
    }

    fn examples(&self, objective: Objective) -> usize {
        match objective {
            Objective::Contrastive => self.sentences.len(),
            Objective::Nli => self.nli.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    EndToEnd,
    Step1,
    Step2,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::EndToEnd => "end-to-end",
            Stage::Step1 => "step1",
            Stage::Step2 => "step2",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "end-to-end" => Ok(Stage::EndToEnd),
            "step1" => Ok(Stage::Step1),
            "step2" => Ok(Stage::Step2),
            other => Err(Error::Input(format!("unknown stage {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub objective: Objective,
    pub pooler_dim: usize,
    /// Pooler dimension of the end-to-end run that produced the encoder.
    pub encoder_dim: usize,
    pub corpus_id: String,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedBundle {
    pub model: Model,
    /// Softmax head, present for the NLI objective.
    pub head: Option<NliClassifier>,
    pub train_config: TrainConfig,
    pub provenance: Provenance,
    /// Mean batch loss per optimizer step.
    pub loss_trace: Vec<f64>,
}

impl TrainedBundle {
    pub fn pooler_dim(&self) -> usize {
        self.model.pooler_dim()
    }
}

struct Batch {
    first: Vec<Vec<u32>>,
    second: Vec<Vec<u32>>,
    labels: Vec<usize>,
}

fn make_batch(corpus: &TrainingCorpus, objective: Objective, idx: &[usize]) -> Batch {
    match objective {
        Objective::Contrastive => {
            let s: Vec<Vec<u32>> = idx.iter().map(|&i| corpus.sentences[i].clone()).collect();
            Batch {
                second: s.clone(),
                first: s,
                labels: Vec::new(),
            }
        }
        Objective::Nli => Batch {
            first: idx.iter().map(|&i| corpus.nli[i].0.clone()).collect(),
            second: idx.iter().map(|&i| corpus.nli[i].1.clone()).collect(),
            labels: idx.iter().map(|&i| corpus.nli[i].2).collect(),
        },
    }
}

fn add_grads(a: &mut ModelGrads, b: &ModelGrads) {
    if let (Some(x), Some(y)) = (a.encoder.as_mut(), b.encoder.as_ref()) {
        for ((_, p), (_, q)) in x.tensors_mut().into_iter().zip(y.tensors()) {
            p.add_scaled(1.0, q).expect("same layout");
        }
    }
    for ((_, p), (_, q)) in a.pooler.tensors_mut().into_iter().zip(b.pooler.tensors()) {
        p.add_scaled(1.0, q).expect("same layout");
    }
}

/// Loss and gradients of one batch. Both views use independent dropout masks.
fn batch_gradients(
    model: &Model,
    head: Option<&NliClassifier>,
    tcfg: &TrainConfig,
    batch: &Batch,
    scope: GradScope,
    rng: &mut Rng,
) -> Result<(f64, ModelGrads, Option<NliClassifier>)> {
    let f1 = model.forward(&batch.first, Some(rng), scope)?;
    let f2 = model.forward(&batch.second, Some(rng), scope)?;
    let (loss, g1, g2, head_grad) = match tcfg.objective {
        Objective::Contrastive => {
            let out = contrastive_loss(&f1.pooled, &f2.pooled, tcfg.temperature)?;
            (out.loss, out.grad_a, out.grad_b, None)
        }
        Objective::Nli => {
            let head =
                head.ok_or_else(|| Error::Usage("NLI objective without a classifier".into()))?;
            let out = nli_loss(&f1.pooled, &f2.pooled, &batch.labels, head)?;
            (out.loss, out.grad_u, out.grad_v, Some(out.grad_classifier))
        }
    };
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("training loss became {loss}")));
    }
    let mut grads = model.backward(&f1, Upstream::Pooled(&g1))?;
    add_grads(&mut grads, &model.backward(&f2, Upstream::Pooled(&g2))?);
    Ok((loss, grads, head_grad))
}

/// Runs `tcfg.epochs` passes of mini-batch Adam. Under [`GradScope::PoolerOnly`]
/// the encoder is read but never written.
fn run_training(
    model: &mut Model,
    head: &mut Option<NliClassifier>,
    tcfg: &TrainConfig,
    corpus: &TrainingCorpus,
    scope: GradScope,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let n = corpus.examples(tcfg.objective);
    if n == 0 {
        return Err(Error::Input(format!(
            "corpus {:?} has no examples for the {} objective",
            corpus.id, tcfg.objective
        )));
    }
    let mut adam = Adam::new(tcfg.learning_rate, tcfg.beta1, tcfg.beta2, tcfg.epsilon);
    let mut trace = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..tcfg.epochs {
        rng.shuffle(&mut order);
        for idx in order.chunks(tcfg.batch_size) {
            let batch = make_batch(corpus, tcfg.objective, idx);
            let (loss, grads, head_grad) =
                batch_gradients(model, head.as_ref(), tcfg, &batch, scope, rng)?;
            trace.push(loss);

            let mut params: Vec<&mut Matrix> = Vec::new();
            let mut gs: Vec<&Matrix> = Vec::new();
            if let Some(enc) = grads.encoder.as_ref() {
                params.extend(model.encoder.tensors_mut().into_iter().map(|(_, t)| t));
                gs.extend(enc.tensors().into_iter().map(|(_, t)| t));
            }
            params.extend(model.pooler.tensors_mut().into_iter().map(|(_, t)| t));
            gs.extend(grads.pooler.tensors().into_iter().map(|(_, t)| t));
            if let (Some(h), Some(hg)) = (head.as_mut(), head_grad.as_ref()) {
                params.extend(h.tensors_mut().into_iter().map(|(_, t)| t));
                gs.extend(hg.tensors().into_iter().map(|(_, t)| t));
            }
            adam.step(params, gs)?;
        }
    }
    Ok(trace)
}

/// Trains encoder and pooler jointly at `config.pooler_dim`.
///
/// The result is a pure function of `(config, tcfg, corpus)`: initialisation
/// draws from stream 0 of `tcfg.seed` and shuffling/dropout from stream 1.
pub fn train_end_to_end(
    config: &ModelConfig,
    tcfg: &TrainConfig,
    corpus: &TrainingCorpus,
) -> Result<TrainedBundle> {
    tcfg.validate()?;
    if corpus.examples(tcfg.objective) == 0 {
        return Err(Error::Input(format!("corpus {:?} is empty", corpus.id)));
    }
    let mut init = Rng::new(tcfg.seed, INIT_STREAM);
    let mut model = Model::new(config.clone(), &mut init)?;
    let mut head = match tcfg.objective {
        Objective::Nli => Some(NliClassifier::init(config.pooler_dim, &mut init)),
        Objective::Contrastive => None,
    };
    let mut rng = Rng::new(tcfg.seed, TRAIN_STREAM);
    let loss_trace = run_training(
        &mut model,
        &mut head,
        tcfg,
        corpus,
        GradScope::Full,
        &mut rng,
    )?;
    Ok(TrainedBundle {
        provenance: Provenance {
            seed: tcfg.seed,
            objective: tcfg.objective,
            pooler_dim: config.pooler_dim,
            encoder_dim: config.pooler_dim,
            corpus_id: corpus.id.clone(),
            stage: Stage::EndToEnd,
        },
        model,
        head,
        train_config: tcfg.clone(),
        loss_trace,
    })
}

/// End-to-end runs at each dimension, executed as independent parallel jobs.
pub fn train_sweep(
    config: &ModelConfig,
    tcfg: &TrainConfig,
    corpus: &TrainingCorpus,
    dims: &[usize],
) -> Result<Vec<TrainedBundle>> {
    dims.par_iter()
        .map(|&d| train_end_to_end(&config.with_pooler_dim(d), tcfg, corpus))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineTuned {
    pub pooler: PoolerParams,
    pub head: Option<NliClassifier>,
    pub loss_trace: Vec<f64>,
}

/// Fine-tunes `pooler` (from its current values) on top of the frozen encoder of `encoder_opt`.
pub fn finetune_pooler(
    encoder_opt: &Model,
    pooler: &PoolerParams,
    head: Option<&NliClassifier>,
    tcfg: &TrainConfig,
    corpus: &TrainingCorpus,
) -> Result<FineTuned> {
    tcfg.validate()?;
    if pooler.input_dim() != encoder_opt.hidden_dim() {
        return Err(Error::Shape(format!(
            "pooler takes {}-dim input, encoder produces {}",
            pooler.input_dim(),
            encoder_opt.hidden_dim()
        )));
    }
    let mut head = head.cloned();
    if tcfg.objective == Objective::Nli && head.is_none() {
        return Err(Error::Usage(
            "NLI fine-tuning needs the trained classifier".into(),
        ));
    }
    if let Some(h) = &head {
        if h.embedding_dim() != pooler.output_dim() {
            return Err(Error::Shape(
                "classifier width does not match the pooler".into(),
            ));
        }
    }
    let mut model = encoder_opt.with_pooler(pooler.clone())?;
    let mut rng = Rng::new(tcfg.seed, FINETUNE_STREAM);
    let loss_trace = run_training(
        &mut model,
        &mut head,
        tcfg,
        corpus,
        GradScope::PoolerOnly,
        &mut rng,
    )?;
    Ok(FineTuned {
        pooler: model.pooler,
        head,
        loss_trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub dim: usize,
    pub index: usize,
    /// `(d′, encoder-output validation ρ)` in candidate order.
    pub scores: Vec<(usize, f64)>,
}

/// Picks the candidate whose encoder output scores best on `validation`;
/// ties go to the larger dimension.
pub fn select_optimal_encoder(
    bundles: &[&TrainedBundle],
    validation: &StsSet,
) -> Result<Selection> {
    if bundles.is_empty() {
        return Err(Error::Input("no candidate encoders to select from".into()));
    }
    if validation.is_empty() {
        return Err(Error::Input("validation set is empty".into()));
    }
    let scores = bundles
        .par_iter()
        .map(|b| {
            Ok((
                b.pooler_dim(),
                evaluate_sts(&EncoderOutput(&b.model), validation)?.value,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, &(dim, score)) in scores.iter().enumerate() {
        let (bdim, bscore) = scores[best];
        if score > bscore || (score == bscore && dim > bdim) {
            best = i;
        }
    }
    Ok(Selection {
        dim: scores[best].0,
        index: best,
        scores,
    })
}

/// Everything produced by [`two_step_train`].
#[derive(Debug, Clone)]
pub struct TwoStepOutcome {
    /// End-to-end run at the target dimension (source of `pooler_d`).
    pub end_to_end: TrainedBundle,
    /// End-to-end runs over the candidate set, in candidate order.
    pub candidates: Vec<TrainedBundle>,
    pub selection: Selection,
    /// `encoder_opt + pooler_d`, before fine-tuning.
    pub step1: TrainedBundle,
    /// `encoder_opt + new pooler_d`.
    pub step2: TrainedBundle,
}

impl TwoStepOutcome {
    pub fn result(&self) -> &TrainedBundle {
        &self.step2
    }
}

pub fn default_candidates(hidden_dim: usize) -> Vec<usize> {
    let mut dims = Vec::new();
    let mut d = hidden_dim;
    while d >= 4 {
        dims.push(d);
        d /= 2;
    }
    if dims.is_empty() {
        dims.push(hidden_dim);
    }
    dims
}

fn check_two_step_args(
    config: &ModelConfig,
    targets: &[usize],
    candidates: &[usize],
) -> Result<Vec<usize>> {
    if targets.is_empty() || targets.contains(&0) {
        return Err(Error::Input("target dimension must be at least 1".into()));
    }
    if candidates.is_empty() {
        return Err(Error::Input("candidate dimension set is empty".into()));
    }
    if let Some(&bad) = candidates
        .iter()
        .find(|&&c| c == 0 || c > config.hidden_dim)
    {
        return Err(Error::Input(format!(
            "candidate dimension {bad} is outside 1..={}",
            config.hidden_dim
        )));
    }
    let mut dims: Vec<usize> = Vec::new();
    for &c in candidates {
        if !dims.contains(&c) {
            dims.push(c);
        }
    }
    Ok(dims)
}

/// Steps 1 and 2 given already-trained end-to-end runs: `end_to_end` at the
/// target dimension and one run per candidate dimension.
pub fn two_step_from_runs(
    end_to_end: &TrainedBundle,
    candidates: &[TrainedBundle],
    tcfg: &TrainConfig,
    corpus: &TrainingCorpus,
    validation: &StsSet,
) -> Result<TwoStepOutcome> {
    let refs: Vec<&TrainedBundle> = candidates.iter().collect();
    let selection = select_optimal_encoder(&refs, validation)?;
    let encoder_opt = &candidates[selection.index];

    let step1 = TrainedBundle {
        model: encoder_opt
            .model
            .with_pooler(end_to_end.model.pooler.clone())?,
        head: end_to_end.head.clone(),
        train_config: tcfg.clone(),
        provenance: Provenance {
            stage: Stage::Step1,
            encoder_dim: selection.dim,
            ..end_to_end.provenance.clone()
        },
        loss_trace: Vec::new(),
    };

    let tuned = finetune_pooler(
        &step1.model,
        &step1.model.pooler,
        step1.head.as_ref(),
        tcfg,
        corpus,
    )?;
    let step2 = TrainedBundle {
        model: step1.model.with_pooler(tuned.pooler)?,
        head: tuned.head,
        train_config: tcfg.clone(),
        provenance: Provenance {
            stage: Stage::Step2,
            ..step1.provenance.clone()
        },
        loss_trace: tuned.loss_trace,
    };

    Ok(TwoStepOutcome {
        end_to_end: end_to_end.clone(),
        candidates: candidates.to_vec(),
        selection,
        step1,
        step2,
    })
}

pub fn two_step_train(
    config: &ModelConfig,
    tcfg: &TrainConfig,
    corpus: &TrainingCorpus,
    validation: &StsSet,
    target_dim: usize,
    candidates: &[usize],
) -> Result<TwoStepOutcome> {
    let mut out = two_step_train_many(config, tcfg, corpus, validation, &[target_dim], candidates)?;
    Ok(out.remove(0))
}

/// [`two_step_train`] for several targets over one shared candidate sweep.
///
/// Training is deterministic in `(config, tcfg, corpus)`, so a target that is
/// also a candidate reuses that candidate's run.
pub fn two_step_train_many(
    config: &ModelConfig,
    tcfg: &TrainConfig,
    corpus: &TrainingCorpus,
    validation: &StsSet,
    targets: &[usize],
    candidates: &[usize],
) -> Result<Vec<TwoStepOutcome>> {
    let dims = check_two_step_args(config, targets, candidates)?;
    let mut jobs = dims.clone();
    for &t in targets {
        if !jobs.contains(&t) {
            jobs.push(t);
        }
    }
    let trained = train_sweep(config, tcfg, corpus, &jobs)?;
    let cand = &trained[..dims.len()];
    targets
        .iter()
        .map(|&t| {
            let pos = jobs
                .iter()
                .position(|&d| d == t)
                .expect("target was scheduled");
            two_step_from_runs(&trained[pos], cand, tcfg, corpus, validation)
        })
        .collect()
}
