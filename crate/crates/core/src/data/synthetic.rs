//! Topic-mixture corpus generator with analytic similarity labels.
//!
//! Every sentence is drawn from a latent mixture over `K` topics: each word
//! either comes from a shared background list or, with probability
//! `topic_mass`, from the word list of a topic sampled from the mixture.
//! Gold STS similarity is the cosine of the two latent mixtures.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::{LabeledSentence, StsPair, Vocab, RESERVED};
use crate::error::{Error, Result};
use crate::numeric::{dot, norm, Rng};

const MAX_RESAMPLE: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub topics: usize,
    pub vocab_size: usize,
    pub background_words: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Probability that a word is drawn from a topic rather than the background.
    pub topic_mass: f64,
    pub dirichlet_alpha: f64,
    pub corpus_size: usize,
    pub validation_pairs: usize,
    pub test_pairs: usize,
    pub nli_pairs: usize,
    pub labeled_train: usize,
    pub labeled_test: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            topics: 4,
            vocab_size: 32,
            background_words: 8,
            min_words: 16,
            max_words: 30,
            topic_mass: 0.85,
            dirichlet_alpha: 0.3,
            corpus_size: 2000,
            validation_pairs: 400,
            test_pairs: 400,
            nli_pairs: 2000,
            labeled_train: 400,
            labeled_test: 400,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.topics < 2 {
            return fail(format!("need at least 2 topics, got {}", self.topics));
        }
        if self.vocab_size <= RESERVED.len() {
            return fail(format!(
                "vocab_size {} leaves no room beyond the reserved tokens",
                self.vocab_size
            ));
        }
        let content = self.vocab_size - RESERVED.len();
        if self.topics > content {
            return fail(format!(
                "{} topics do not fit in {content} content words",
                self.topics
            ));
        }
        if self.background_words + self.topics > content {
            return fail(format!(
                "{} background words leave fewer than one word per topic",
                self.background_words
            ));
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return fail(format!(
                "sentence length range {}..={} is empty",
                self.min_words, self.max_words
            ));
        }
        if !(0.0..=1.0).contains(&self.topic_mass) {
            return fail("topic_mass must lie in [0, 1]".into());
        }
        if !(self.dirichlet_alpha > 0.0) {
            return fail("dirichlet_alpha must be positive".into());
        }
        Ok(())
    }

    fn words_per_topic(&self) -> usize {
        (self.vocab_size - RESERVED.len() - self.background_words) / self.topics
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSentence {
    pub text: String,
    pub mixture: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPair {
    pub a: SynthSentence,
    pub b: SynthSentence,
    pub gold: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliTriple {
    pub premise: String,
    pub hypothesis: String,
    /// 0 entailment, 1 neutral, 2 contradiction.
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub spec: SyntheticSpec,
    pub vocab: Vocab,
    /// Topic word lists (token strings), one per topic.
    pub topic_words: Vec<Vec<String>>,
    pub train: Vec<SynthSentence>,
    pub validation: Vec<SynthPair>,
    pub test: Vec<SynthPair>,
    pub nli: Vec<NliTriple>,
    pub labeled_train: Vec<(SynthSentence, usize)>,
    pub labeled_test: Vec<(SynthSentence, usize)>,
}

pub fn nli_label(similarity: f64) -> usize {
    if similarity >= 0.8 {
        0
    } else if similarity <= 0.2 {
        2
    } else {
        1
    }
}

pub fn cosine_of_mixtures(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b))
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

struct Generator<'a> {
    spec: &'a SyntheticSpec,
    rng: Rng,
    background: Vec<String>,
    topic_words: Vec<Vec<String>>,
    /// Zipf-like background weights; topic words are uniform.
    background_weights: Vec<f64>,
    topic_weights: Vec<f64>,
    seen: HashSet<String>,
}

impl Generator<'_> {
    fn dirichlet(&mut self) -> Vec<f64> {
        let k = self.spec.topics;
        loop {
            let draws: Vec<f64> = (0..k)
                .map(|_| self.rng.gamma(self.spec.dirichlet_alpha))
                .collect();
            let total: f64 = draws.iter().sum();
            if total > 0.0 && total.is_finite() {
                return draws.into_iter().map(|g| g / total).collect();
            }
        }
    }

    fn words(&mut self, mixture: &[f64]) -> String {
        let len = self.spec.min_words
            + self
                .rng
                .below(self.spec.max_words - self.spec.min_words + 1);
        let mut words = Vec::with_capacity(len);
        for _ in 0..len {
            let from_topic = self.background.is_empty() || self.rng.unit() < self.spec.topic_mass;
            let w = if from_topic {
                let z = self.rng.categorical(mixture);
                let i = self.rng.categorical(&self.topic_weights);
                &self.topic_words[z][i]
            } else {
                let i = self.rng.categorical(&self.background_weights);
                &self.background[i]
            };
            words.push(w.as_str());
        }
        words.join(" ")
    }

    /// A sentence whose text has not been produced before.
    fn sentence(&mut self, mixture: Vec<f64>) -> Result<SynthSentence> {
        for _ in 0..MAX_RESAMPLE {
            let text = self.words(&mixture);
            if self.seen.insert(text.clone()) {
                return Ok(SynthSentence { text, mixture });
            }
        }
        Err(Error::Config(
            "synthetic vocabulary too small to produce distinct sentences".into(),
        ))
    }

    fn pair(&mut self) -> Result<SynthPair> {
        let ma = self.dirichlet();
        let fresh = self.dirichlet();
        let lambda = self.rng.unit();
        let mb: Vec<f64> = ma
            .iter()
            .zip(&fresh)
            .map(|(a, f)| lambda * a + (1.0 - lambda) * f)
            .collect();
        let gold = cosine_of_mixtures(&ma, &mb);
        let a = self.sentence(ma)?;
        let b = self.sentence(mb)?;
        Ok(SynthPair { a, b, gold })
    }

    /// Mixture dominated by `label` (weight at least 0.85).
    fn labeled(&mut self, label: usize) -> Result<SynthSentence> {
        let noise = self.dirichlet();
        let mixture = noise
            .iter()
            .enumerate()
            .map(|(k, n)| 0.15 * n + if k == label { 0.85 } else { 0.0 })
            .collect();
        self.sentence(mixture)
    }
}

/// Deterministic given the spec (including its seed).
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let background: Vec<String> = (0..spec.background_words)
        .map(|j| format!("bg{j}"))
        .collect();
    let per_topic = spec.words_per_topic();
    let topic_words: Vec<Vec<String>> = (0..spec.topics)
        .map(|k| (0..per_topic).map(|j| format!("t{k}w{j}")).collect())
        .collect();
    let vocab = Vocab::from_words(background.iter().chain(topic_words.iter().flatten()));
    let zipf = |n: usize| (0..n).map(|r| 1.0 / (r as f64 + 1.0)).collect::<Vec<f64>>();

    let mut g = Generator {
        spec,
        rng: Rng::new(spec.seed, 0),
        background_weights: zipf(background.len()),
        topic_weights: vec![1.0; per_topic],
        background,
        topic_words: topic_words.clone(),
        seen: HashSet::new(),
    };

    let mut train = Vec::with_capacity(spec.corpus_size);
    for _ in 0..spec.corpus_size {
        let m = g.dirichlet();
        train.push(g.sentence(m)?);
    }
    let validation = (0..spec.validation_pairs)
        .map(|_| g.pair())
        .collect::<Result<Vec<_>>>()?;
    let test = (0..spec.test_pairs)
        .map(|_| g.pair())
        .collect::<Result<Vec<_>>>()?;
    let nli = (0..spec.nli_pairs)
        .map(|_| {
            g.pair().map(|p| NliTriple {
                label: nli_label(p.gold),
                premise: p.a.text,
                hypothesis: p.b.text,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut labeled = |n: usize| -> Result<Vec<(SynthSentence, usize)>> {
        (0..n)
            .map(|i| {
                let label = i % spec.topics;
                let s = g.labeled(label)?;
                debug_assert_eq!(argmax(&s.mixture), label);
                Ok((s, label))
            })
            .collect()
    };
    let labeled_train = labeled(spec.labeled_train)?;
    let labeled_test = labeled(spec.labeled_test)?;

    Ok(SyntheticData {
        spec: spec.clone(),
        vocab,
        topic_words,
        train,
        validation,
        test,
        nli,
        labeled_train,
        labeled_test,
    })
}

impl SyntheticData {
    pub fn corpus_texts(&self) -> Vec<String> {
        self.train.iter().map(|s| s.text.clone()).collect()
    }

    pub fn sts(pairs: &[SynthPair]) -> Vec<StsPair> {
        pairs
            .iter()
            .map(|p| StsPair {
                sentence_a: p.a.text.clone(),
                sentence_b: p.b.text.clone(),
                gold: p.gold,
            })
            .collect()
    }

    pub fn validation_sts(&self) -> Vec<StsPair> {
        Self::sts(&self.validation)
    }

    pub fn test_sts(&self) -> Vec<StsPair> {
        Self::sts(&self.test)
    }

    pub fn labeled(items: &[(SynthSentence, usize)]) -> Vec<LabeledSentence> {
        items
            .iter()
            .map(|(s, l)| LabeledSentence {
                text: s.text.clone(),
                label: *l,
            })
            .collect()
    }

    /// Stable identifier of the generating spec.
    pub fn corpus_id(&self) -> String {
        format!(
            "synthetic-k{}-v{}-n{}-seed{}",
            self.spec.topics, self.spec.vocab_size, self.spec.corpus_size, self.spec.seed
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            corpus_size: 300,
            validation_pairs: 60,
            test_pairs: 60,
            nli_pairs: 60,
            labeled_train: 400,
            labeled_test: 200,
            seed: 11,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(
            gen_synthetic(&small()).unwrap(),
            gen_synthetic(&small()).unwrap()
        );
        let other = SyntheticSpec {
            seed: 12,
            ..small()
        };
        assert_ne!(
            gen_synthetic(&small()).unwrap().train,
            gen_synthetic(&other).unwrap().train
        );
    }

    #[test]
    fn gold_in_cosine_range() {
        let data = gen_synthetic(&small()).unwrap();
        for p in data.validation.iter().chain(&data.test) {
            assert!((-1.0..=1.0).contains(&p.gold));
        }
        assert!(data.nli.iter().all(|t| t.label < 3));
    }

    #[test]
    fn splits_are_disjoint() {
        let data = gen_synthetic(&small()).unwrap();
        let mut seen = HashSet::new();
        let all = data
            .train
            .iter()
            .chain(data.validation.iter().flat_map(|p| [&p.a, &p.b]))
            .chain(data.test.iter().flat_map(|p| [&p.a, &p.b]))
            .chain(data.labeled_train.iter().map(|(s, _)| s))
            .chain(data.labeled_test.iter().map(|(s, _)| s));
        for s in all {
            assert!(seen.insert(&s.text), "duplicate sentence {}", s.text);
        }
    }

    #[test]
    fn too_many_topics_is_a_spec_error() {
        let spec = SyntheticSpec {
            topics: 10,
            vocab_size: 12,
            background_words: 0,
            ..small()
        };
        assert!(matches!(gen_synthetic(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn nli_thresholds() {
        assert_eq!(nli_label(0.95), 0);
        assert_eq!(nli_label(0.8), 0);
        assert_eq!(nli_label(0.5), 1);
        assert_eq!(nli_label(0.2), 2);
    }

    /// Bag-of-words nearest-centroid (cosine) classifier fit on the labeled train split.
    #[test]
    fn nearest_centroid_oracle_recovers_labels() {
        let data = gen_synthetic(&small()).unwrap();
        let v = data.vocab.len();
        let bow = |text: &str| {
            let mut x = vec![0.0; v];
            for w in text.split_whitespace() {
                x[data.vocab.id(w) as usize] += 1.0;
            }
            x
        };
        let k = data.spec.topics;
        let mut centroids = vec![vec![0.0; v]; k];
        let mut counts = vec![0.0; k];
        for (s, l) in &data.labeled_train {
            for (c, x) in centroids[*l].iter_mut().zip(bow(&s.text)) {
                *c += x;
            }
            counts[*l] += 1.0;
        }
        for (c, n) in centroids.iter_mut().zip(&counts) {
            c.iter_mut().for_each(|x| *x /= n);
        }
        let cos = |x: &[f64], c: &[f64]| {
            let dot: f64 = x.iter().zip(c).map(|(p, q)| p * q).sum();
            let nx: f64 = x.iter().map(|p| p * p).sum::<f64>().sqrt();
            let nc: f64 = c.iter().map(|q| q * q).sum::<f64>().sqrt();
            dot / (nx * nc)
        };
        let correct = data
            .labeled_test
            .iter()
            .filter(|(s, l)| {
                let x = bow(&s.text);
                let best = (0..k)
                    .max_by(|&a, &b| cos(&x, &centroids[a]).total_cmp(&cos(&x, &centroids[b])))
                    .unwrap();
                best == *l
            })
            .count();
        let acc = correct as f64 / data.labeled_test.len() as f64;
        assert!(acc >= 0.95, "nearest-centroid accuracy {acc}");
    }
}
