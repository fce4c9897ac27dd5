//! STS and classification evaluation of sentence embeddings, plus the
//! encoder/pooler diagnostics: decomposition curves and the mix-and-match grid.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{LabeledSentence, StsPair, Vocab};
use crate::error::{Error, Result};
use crate::model::{pool_with, Model};
use crate::numeric::{axpy, Matrix};
use crate::objectives::cosine;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceTag {
    EncoderOutput,
    PoolerOutput,
    Baseline(String),
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceTag::EncoderOutput => f.write_str("encoder-output"),
            SourceTag::PoolerOutput => f.write_str("pooler-output"),
            SourceTag::Baseline(name) => write!(f, "baseline-{name}"),
        }
    }
}

impl std::str::FromStr for SourceTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encoder-output" | "encoder" => Ok(SourceTag::EncoderOutput),
            "pooler-output" | "pooler" => Ok(SourceTag::PoolerOutput),
            other => other
                .strip_prefix("baseline-")
                .map(|n| SourceTag::Baseline(n.to_string()))
                .ok_or_else(|| Error::Input(format!("unknown embedding source {other:?}"))),
        }
    }
}

/// Maps token sequences to fixed-width vectors.
pub trait Embedder: Sync {
    fn embed(&self, batch: &[Vec<u32>]) -> Result<Matrix>;
    fn dim(&self) -> usize;
    fn source(&self) -> SourceTag;
}

/// The final `[CLS]` hidden state, always `D` wide.
pub struct EncoderOutput<'a>(pub &'a Model);

/// The pooler output, `d` wide.
pub struct PoolerOutput<'a>(pub &'a Model);

impl Embedder for EncoderOutput<'_> {
    fn embed(&self, batch: &[Vec<u32>]) -> Result<Matrix> {
        self.0.encode(batch, None)
    }

    fn dim(&self) -> usize {
        self.0.hidden_dim()
    }

    fn source(&self) -> SourceTag {
        SourceTag::EncoderOutput
    }
}

impl Embedder for PoolerOutput<'_> {
    fn embed(&self, batch: &[Vec<u32>]) -> Result<Matrix> {
        self.0.embed(batch)
    }

    fn dim(&self) -> usize {
        self.0.pooler_dim()
    }

    fn source(&self) -> SourceTag {
        SourceTag::PoolerOutput
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Spearman,
    Accuracy,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Spearman => "spearman",
            Metric::Accuracy => "accuracy",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub metric: Metric,
    pub value: f64,
    pub dimension: usize,
    pub source: SourceTag,
    pub dataset: String,
}

/// Tokenised STS pairs with gold scores.
#[derive(Debug, Clone, PartialEq)]
pub struct StsSet {
    pub id: String,
    pub first: Vec<Vec<u32>>,
    pub second: Vec<Vec<u32>>,
    pub gold: Vec<f64>,
}

impl StsSet {
    pub fn new(id: impl Into<String>, pairs: &[StsPair], vocab: &Vocab, max_len: usize) -> Self {
        Self {
            id: id.into(),
            first: pairs
                .iter()
                .map(|p| vocab.tokenize(&p.sentence_a, max_len))
                .collect(),
            second: pairs
                .iter()
                .map(|p| vocab.tokenize(&p.sentence_b, max_len))
                .collect(),
            gold: pairs.iter().map(|p| p.gold).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }

    /// Sentences in file order: `a₀, b₀, a₁, b₁, …`.
    pub fn interleaved(&self) -> Vec<Vec<u32>> {
        self.first
            .iter()
            .zip(&self.second)
            .flat_map(|(a, b)| [a.clone(), b.clone()])
            .collect()
    }
}

/// Ranks starting at 1; tied values share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Input(format!(
            "correlation needs two equal-length series of at least 2 values, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's ρ: Pearson correlation of average-tie ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return pearson(x, y);
    }
    if x.iter().any(|v| v.is_nan()) || y.iter().any(|v| v.is_nan()) {
        return Err(Error::Numerical("NaN in correlation input".into()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

fn pair_cosines(a: &Matrix, b: &Matrix) -> Result<Vec<f64>> {
    (0..a.rows()).map(|i| cosine(a.row(i), b.row(i))).collect()
}

/// Spearman correlation between cosine similarities and gold scores.
pub fn evaluate_sts(embedder: &dyn Embedder, set: &StsSet) -> Result<EvalResult> {
    if set.is_empty() {
        return Err(Error::Input(format!("STS set {:?} is empty", set.id)));
    }
    let a = embedder.embed(&set.first)?;
    let b = embedder.embed(&set.second)?;
    let sims = pair_cosines(&a, &b)?;
    Ok(EvalResult {
        metric: Metric::Spearman,
        value: spearman(&sims, &set.gold)?,
        dimension: embedder.dim(),
        source: embedder.source(),
        dataset: set.id.clone(),
    })
}

/// Same as [`evaluate_sts`] for embeddings already computed in interleaved order.
pub fn evaluate_sts_embeddings(
    embeddings: &Matrix,
    gold: &[f64],
    source: SourceTag,
    dataset: &str,
) -> Result<EvalResult> {
    if embeddings.rows() != 2 * gold.len() {
        return Err(Error::Input(format!(
            "{} embedding rows for {} pairs; expected two rows per pair",
            embeddings.rows(),
            gold.len()
        )));
    }
    let a = embeddings.select_rows(&(0..gold.len()).map(|i| 2 * i).collect::<Vec<_>>());
    let b = embeddings.select_rows(&(0..gold.len()).map(|i| 2 * i + 1).collect::<Vec<_>>());
    let sims = pair_cosines(&a, &b)?;
    Ok(EvalResult {
        metric: Metric::Spearman,
        value: spearman(&sims, gold)?,
        dimension: embeddings.cols(),
        source,
        dataset: dataset.to_string(),
    })
}

/// Settings of the logistic-regression probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub l2: f64,
    pub step: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            step: 0.1,
            tolerance: 1e-6,
            max_iterations: 5000,
        }
    }
}

/// Multinomial logistic regression fit by full-batch gradient descent.
#[derive(Debug, Clone)]
pub struct LogisticProbe {
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// `classes × (features + 1)`, bias in the last column.
    weights: Matrix,
}

impl LogisticProbe {
    pub fn fit(x: &Matrix, labels: &[usize], cfg: ProbeConfig) -> Result<Self> {
        if x.rows() != labels.len() || x.rows() == 0 {
            return Err(Error::Input(format!(
                "{} feature rows for {} labels",
                x.rows(),
                labels.len()
            )));
        }
        let classes = labels.iter().max().unwrap() + 1;
        let mut present = vec![false; classes];
        labels.iter().for_each(|&l| present[l] = true);
        if present.iter().filter(|&&p| p).count() < 2 {
            return Err(Error::Input(
                "classification probe needs at least two classes in the training set".into(),
            ));
        }
        // Standardised features keep the fixed step size stable.
        let mean = x.column_means();
        let mut scale = vec![0.0; x.cols()];
        for r in x.row_iter() {
            for (s, (v, m)) in scale.iter_mut().zip(r.iter().zip(&mean)) {
                *s += (v - m) * (v - m);
            }
        }
        let n = x.rows() as f64;
        scale.iter_mut().for_each(|s| {
            let sd = (*s / n).sqrt();
            *s = if sd > 0.0 { 1.0 / sd } else { 1.0 };
        });
        let mut probe = Self {
            mean,
            scale,
            weights: Matrix::zeros(classes, x.cols() + 1),
        };
        let features = probe.features(x);
        let width = features.cols();
        for _ in 0..cfg.max_iterations {
            let probs = probe.probabilities(&features);
            let mut grad = probe.weights.scaled(cfg.l2);
            // no penalty on the bias column
            for c in 0..classes {
                grad[(c, width - 1)] = 0.0;
            }
            for (i, f) in features.row_iter().enumerate() {
                for c in 0..classes {
                    let g = (probs[(i, c)] - if labels[i] == c { 1.0 } else { 0.0 }) / n;
                    axpy(g, f, grad.row_mut(c));
                }
            }
            if grad.frobenius_norm() <= cfg.tolerance {
                break;
            }
            probe.weights.add_scaled(-cfg.step, &grad)?;
        }
        Ok(probe)
    }

    fn features(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), x.cols() + 1);
        for (i, r) in x.row_iter().enumerate() {
            let o = out.row_mut(i);
            for j in 0..r.len() {
                o[j] = (r[j] - self.mean[j]) * self.scale[j];
            }
            o[r.len()] = 1.0;
        }
        out
    }

    fn probabilities(&self, features: &Matrix) -> Matrix {
        let mut logits = features.matmul_t(&self.weights).expect("feature width");
        for i in 0..logits.rows() {
            let r = logits.row_mut(i);
            let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in r.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            r.iter_mut().for_each(|v| *v /= sum);
        }
        logits
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        if x.cols() != self.mean.len() {
            return Err(Error::Shape(format!(
                "probe was fit on {} features, got {}",
                self.mean.len(),
                x.cols()
            )));
        }
        let probs = self.probabilities(&self.features(x));
        Ok(probs
            .row_iter()
            .map(|r| {
                let mut best = 0;
                for (c, p) in r.iter().enumerate() {
                    if *p > r[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }
}

/// Test accuracy of a logistic-regression probe fit on frozen training embeddings.
pub fn classification_probe(
    train: &Matrix,
    train_labels: &[usize],
    test: &Matrix,
    test_labels: &[usize],
) -> Result<f64> {
    if test.rows() != test_labels.len() || test.rows() == 0 {
        return Err(Error::Input(
            "test set must be nonempty and fully labeled".into(),
        ));
    }
    let probe = LogisticProbe::fit(train, train_labels, ProbeConfig::default())?;
    let predicted = probe.predict(test)?;
    let correct = predicted
        .iter()
        .zip(test_labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / test_labels.len() as f64)
}

/// Embeds labeled sentences and runs [`classification_probe`].
pub fn evaluate_classification(
    embedder: &dyn Embedder,
    vocab: &Vocab,
    max_len: usize,
    train: &[LabeledSentence],
    test: &[LabeledSentence],
    dataset: &str,
) -> Result<EvalResult> {
    let tok = |items: &[LabeledSentence]| -> Vec<Vec<u32>> {
        items
            .iter()
            .map(|s| vocab.tokenize(&s.text, max_len))
            .collect()
    };
    let labels =
        |items: &[LabeledSentence]| -> Vec<usize> { items.iter().map(|s| s.label).collect() };
    let xtr = embedder.embed(&tok(train))?;
    let xte = embedder.embed(&tok(test))?;
    Ok(EvalResult {
        metric: Metric::Accuracy,
        value: classification_probe(&xtr, &labels(train), &xte, &labels(test))?,
        dimension: embedder.dim(),
        source: embedder.source(),
        dataset: dataset.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionPoint {
    pub dim: usize,
    pub encoder_score: f64,
    pub pooler_score: f64,
}

/// Encoder-output and pooler-output scores of each end-to-end model.
pub fn decomposition_curves(models: &[&Model], set: &StsSet) -> Result<Vec<DecompositionPoint>> {
    models
        .iter()
        .map(|m| {
            Ok(DecompositionPoint {
                dim: m.pooler_dim(),
                encoder_score: evaluate_sts(&EncoderOutput(m), set)?.value,
                pooler_score: evaluate_sts(&PoolerOutput(m), set)?.value,
            })
        })
        .collect()
}

/// Scores of every encoderᵢ + poolerⱼ combination.
#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub dims: Vec<usize>,
    /// Row `i` uses encoder `dims[i]`, column `j` uses pooler `dims[j]`.
    pub scores: Matrix,
}

impl GridReport {
    pub fn cell(&self, encoder_dim: usize, pooler_dim: usize) -> Option<f64> {
        let i = self.dims.iter().position(|&d| d == encoder_dim)?;
        let j = self.dims.iter().position(|&d| d == pooler_dim)?;
        Some(self.scores[(i, j)])
    }
}

pub fn grid_mix_and_match(models: &[&Model], set: &StsSet) -> Result<GridReport> {
    let first = models
        .first()
        .ok_or_else(|| Error::Input("grid needs at least one model".into()))?;
    for m in models {
        if !m.config.same_encoder(&first.config)
            || m.config.pooler_activation != first.config.pooler_activation
            || m.config.dropout_p != first.config.dropout_p
        {
            return Err(Error::Input(
                "grid models must share one configuration apart from the pooler dimension".into(),
            ));
        }
    }
    let n = models.len();
    let mut scores = Matrix::zeros(n, n);
    for (i, enc) in models.iter().enumerate() {
        let ha = enc.encode(&set.first, None)?;
        let hb = enc.encode(&set.second, None)?;
        for (j, pooled_by) in models.iter().enumerate() {
            let act = pooled_by.config.pooler_activation;
            let a = pool_with(&pooled_by.pooler, act, &ha)?;
            let b = pool_with(&pooled_by.pooler, act, &hb)?;
            scores[(i, j)] = spearman(&pair_cosines(&a, &b)?, &set.gold)?;
        }
    }
    Ok(GridReport {
        dims: models.iter().map(|m| m.pooler_dim()).collect(),
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;

    /// Independent ρ: O(n²) rank counting then textbook Pearson.
    fn brute_force_spearman(x: &[f64], y: &[f64]) -> f64 {
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .map(|a| {
                    let less = v.iter().filter(|b| *b < a).count() as f64;
                    let equal = v.iter().filter(|b| *b == a).count() as f64;
                    less + (equal + 1.0) / 2.0
                })
                .collect()
        };
        let (rx, ry) = (rank(x), rank(y));
        let n = x.len() as f64;
        let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn spearman_identity_and_reversal() {
        let x = [3.0, 1.0, 4.0, 1.5, 9.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((spearman(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn spearman_with_ties() {
        let x = [1.0, 2.0, 2.0, 3.0];
        let y = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(average_ranks(&x), vec![1.0, 2.5, 2.5, 4.0]);
        // Pearson of (1, 2.5, 2.5, 4) against (1, 2, 3, 4): cov 4.5 / sqrt(4.5 · 5)
        let expected = 4.5 / (4.5f64 * 5.0).sqrt();
        assert!((spearman(&x, &y).unwrap() - expected).abs() < 1e-15);
        assert!((brute_force_spearman(&x, &y) - expected).abs() < 1e-15);
    }

    #[test]
    fn spearman_matches_brute_force_on_permutations() {
        let mut rng = Rng::new(21, 0);
        for _ in 0..50 {
            let mut x: Vec<f64> = (0..100).map(f64::from).collect();
            let mut y = x.clone();
            rng.shuffle(&mut x);
            rng.shuffle(&mut y);
            let a = spearman(&x, &y).unwrap();
            assert!((a - brute_force_spearman(&x, &y)).abs() <= 1e-12);
        }
    }

    #[test]
    fn spearman_errors() {
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation)
        ));
        assert!(matches!(spearman(&[1.0], &[1.0]), Err(Error::Input(_))));
        assert!(matches!(
            spearman(&[1.0, 2.0], &[1.0]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn spearman_is_invariant_to_monotone_transforms() {
        let mut rng = Rng::new(4, 0);
        let x: Vec<f64> = (0..60).map(|_| rng.normal()).collect();
        let y: Vec<f64> = x.iter().map(|v| v + rng.normal()).collect();
        let base = spearman(&x, &y).unwrap();
        let tx: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let ty: Vec<f64> = y.iter().map(|v| 3.0 * v.powi(3) + 1.0).collect();
        assert!((spearman(&tx, &ty).unwrap() - base).abs() < 1e-12);
    }

    struct Lookup {
        table: Vec<Vec<f64>>,
        scale: f64,
    }

    impl Embedder for Lookup {
        fn embed(&self, batch: &[Vec<u32>]) -> Result<Matrix> {
            let rows: Vec<Vec<f64>> = batch
                .iter()
                .map(|s| {
                    self.table[s[1] as usize]
                        .iter()
                        .map(|v| v * self.scale)
                        .collect()
                })
                .collect();
            Matrix::from_rows(&rows)
        }
        fn dim(&self) -> usize {
            self.table[0].len()
        }
        fn source(&self) -> SourceTag {
            SourceTag::Baseline("lookup".into())
        }
    }

    fn latent_set() -> (StsSet, Vec<Vec<f64>>) {
        let mut rng = Rng::new(2, 0);
        let table: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..4).map(|_| rng.unit() + 0.01).collect())
            .collect();
        let mut set = StsSet {
            id: "latent".into(),
            first: vec![],
            second: vec![],
            gold: vec![],
        };
        for i in 0..20u32 {
            let (a, b) = (i, 39 - i);
            set.first.push(vec![1, a]);
            set.second.push(vec![1, b]);
            set.gold
                .push(cosine(&table[a as usize], &table[b as usize]).unwrap());
        }
        (set, table)
    }

    #[test]
    fn oracle_embedder_scores_one_and_is_scale_invariant() {
        let (set, table) = latent_set();
        let r = evaluate_sts(
            &Lookup {
                table: table.clone(),
                scale: 1.0,
            },
            &set,
        )
        .unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        assert_eq!(r.metric, Metric::Spearman);
        let scaled = evaluate_sts(&Lookup { table, scale: 7.5 }, &set).unwrap();
        assert_eq!(scaled.value, r.value);
    }

    #[test]
    fn constant_embedder_is_undefined() {
        let (set, _) = latent_set();
        let constant = Lookup {
            table: vec![vec![1.0, 2.0]; 40],
            scale: 1.0,
        };
        assert!(matches!(
            evaluate_sts(&constant, &set),
            Err(Error::UndefinedCorrelation)
        ));
    }

    fn blobs(
        centers: &[Vec<f64>],
        sigma: f64,
        per_class: usize,
        rng: &mut Rng,
    ) -> (Matrix, Vec<usize>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..per_class {
            for (c, center) in centers.iter().enumerate() {
                let _ = i;
                rows.push(
                    center
                        .iter()
                        .map(|m| m + sigma * rng.normal())
                        .collect::<Vec<_>>(),
                );
                labels.push(c);
            }
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn separable_blobs() {
        let mut rng = Rng::new(1, 0);
        let centers = vec![vec![0.0, 0.0], vec![6.0, 8.0]];
        let (xtr, ytr) = blobs(&centers, 0.01, 50, &mut rng);
        let (xte, yte) = blobs(&centers, 0.01, 50, &mut rng);
        assert_eq!(classification_probe(&xtr, &ytr, &xte, &yte).unwrap(), 1.0);
    }

    #[test]
    fn shuffled_labels_are_chance() {
        let mut rng = Rng::new(3, 0);
        let x = |rng: &mut Rng, n: usize| {
            Matrix::from_vec(n, 3, (0..n * 3).map(|_| rng.normal()).collect()).unwrap()
        };
        let xtr = x(&mut rng, 400);
        let ytr: Vec<usize> = (0..400).map(|i| i % 2).collect();
        let xte = x(&mut rng, 1000);
        let yte: Vec<usize> = (0..1000).map(|i| i % 2).collect();
        let acc = classification_probe(&xtr, &ytr, &xte, &yte).unwrap();
        assert!((acc - 0.5).abs() <= 0.05, "accuracy {acc}");
    }

    #[test]
    fn overlapping_blobs_approach_bayes_rule() {
        let mut rng = Rng::new(8, 0);
        let centers = vec![vec![0.0, 0.0], vec![1.5, 0.0], vec![0.75, 1.3]];
        let (xtr, ytr) = blobs(&centers, 0.8, 300, &mut rng);
        let (xte, yte) = blobs(&centers, 0.8, 500, &mut rng);
        let acc = classification_probe(&xtr, &ytr, &xte, &yte).unwrap();
        // equal priors and isotropic equal covariances: Bayes rule = nearest centre
        let bayes = xte
            .row_iter()
            .zip(&yte)
            .filter(|(r, &l)| {
                let best = (0..3)
                    .min_by(|&a, &b| {
                        crate::numeric::squared_distance(r, &centers[a])
                            .total_cmp(&crate::numeric::squared_distance(r, &centers[b]))
                    })
                    .unwrap();
                best == l
            })
            .count() as f64
            / yte.len() as f64;
        assert!((acc - bayes).abs() <= 0.03, "probe {acc} vs Bayes {bayes}");
    }

    #[test]
    fn probe_rejects_single_class_and_is_deterministic() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        assert!(matches!(
            classification_probe(&x, &[1, 1, 1], &x, &[1, 1, 1]),
            Err(Error::Input(_))
        ));
        let a = classification_probe(&x, &[0, 0, 1], &x, &[0, 1, 1]).unwrap();
        let b = classification_probe(&x, &[0, 0, 1], &x, &[0, 1, 1]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn source_tags_round_trip() {
        for tag in [
            SourceTag::EncoderOutput,
            SourceTag::PoolerOutput,
            SourceTag::Baseline("pca".into()),
        ] {
            assert_eq!(tag.to_string().parse::<SourceTag>().unwrap(), tag);
        }
    }
}
