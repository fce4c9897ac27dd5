//! Sentence encoder with a `D × d` compressing pooler.
//!
//! The encoder is a small pre-layer-norm transformer; its final `[CLS]` state
//! (always `D` wide) is the *encoder output*. The pooler maps it to the
//! `d`-dimensional sentence embedding through `activation(h·Wᵀ + b)`.

mod config;
mod encoder;
mod params;

use rayon::prelude::*;

pub use config::{ModelConfig, PoolerActivation};
pub use params::{encoder_digest, EncoderParams, LayerParams, PoolerParams};

use crate::data::{CLS_ID, PAD_ID};
use crate::error::{Error, Result};
use crate::numeric::{axpy, Matrix, Rng};
use encoder::SequenceTape;

/// Sequences per gradient-reduction chunk. Fixed so that the summation order,
/// and therefore every bit of the result, does not depend on the thread count.
const REDUCE_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub encoder: EncoderParams,
    pub pooler: PoolerParams,
}

/// Which parameters a recorded forward pass will be differentiated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradScope {
    Full,
    /// Encoder treated as a constant; its activations are not recorded.
    PoolerOnly,
}

/// Where the upstream gradient enters.
#[derive(Debug, Clone, Copy)]
pub enum Upstream<'a> {
    /// Gradient with respect to the `B × d` pooler output.
    Pooled(&'a Matrix),
    /// Gradient with respect to the `B × D` encoder output.
    Hidden(&'a Matrix),
}

/// Outputs of a recorded forward pass plus everything `backward` needs.
#[derive(Debug, Clone)]
pub struct Forward {
    pub hidden: Matrix,
    pub pooled: Matrix,
    scope: GradScope,
    tapes: Vec<SequenceTape>,
    config: ModelConfig,
}

impl Forward {
    pub fn scope(&self) -> GradScope {
        self.scope
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    /// `None` when the forward pass was recorded with [`GradScope::PoolerOnly`].
    pub encoder: Option<EncoderParams>,
    pub pooler: PoolerParams,
}

impl Model {
    /// Fresh model; the encoder is drawn first so its initial values do not depend on `d`.
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let encoder = EncoderParams::init(&config, rng);
        let pooler = PoolerParams::init(config.hidden_dim, config.pooler_dim, rng);
        Ok(Self {
            config,
            encoder,
            pooler,
        })
    }

    pub fn from_parts(
        config: ModelConfig,
        encoder: EncoderParams,
        pooler: PoolerParams,
    ) -> Result<Self> {
        config.validate()?;
        let expected = EncoderParams::zeros(&config).shapes();
        if encoder.shapes() != expected {
            return Err(Error::Shape(
                "encoder tensors do not match the configuration".into(),
            ));
        }
        if pooler.input_dim() != config.hidden_dim || pooler.output_dim() != config.pooler_dim {
            return Err(Error::Shape(format!(
                "pooler is {}x{}, configuration needs {}x{}",
                pooler.output_dim(),
                pooler.input_dim(),
                config.pooler_dim,
                config.hidden_dim
            )));
        }
        if pooler.bias.shape() != (1, config.pooler_dim) {
            return Err(Error::Shape("pooler bias has the wrong length".into()));
        }
        Ok(Self {
            config,
            encoder,
            pooler,
        })
    }

    /// This model's encoder joined to another pooler.
    pub fn with_pooler(&self, pooler: PoolerParams) -> Result<Model> {
        let config = self.config.with_pooler_dim(pooler.output_dim());
        Model::from_parts(config, self.encoder.clone(), pooler)
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    pub fn pooler_dim(&self) -> usize {
        self.config.pooler_dim
    }

    /// Checks a batch and strips trailing padding from each sequence.
    fn effective<'a>(&self, batch: &'a [Vec<u32>]) -> Result<Vec<&'a [u32]>> {
        if batch.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let vocab = self.config.vocab_size;
        batch
            .iter()
            .enumerate()
            .map(|(i, seq)| {
                if seq.first() != Some(&CLS_ID) {
                    return Err(Error::Input(format!(
                        "sequence {i} does not begin with [CLS]"
                    )));
                }
                if seq.len() > self.config.max_len {
                    return Err(Error::Input(format!(
                        "sequence {i} has {} tokens, max_len is {}",
                        seq.len(),
                        self.config.max_len
                    )));
                }
                if let Some(&id) = seq.iter().find(|&&id| id as usize >= vocab) {
                    return Err(Error::Vocabulary {
                        id,
                        vocab_size: vocab,
                    });
                }
                let len = seq.iter().position(|&t| t == PAD_ID).unwrap_or(seq.len());
                Ok(&seq[..len])
            })
            .collect()
    }

    fn run_encoder(
        &self,
        batch: &[Vec<u32>],
        dropout: Option<&mut Rng>,
    ) -> Result<(Matrix, Vec<SequenceTape>)> {
        let seqs = self.effective(batch)?;
        // One seed per sequence, drawn in order, keeps masks independent of scheduling.
        let seeds: Option<Vec<u64>> =
            dropout.map(|rng| seqs.iter().map(|_| rng.next_u64()).collect());
        let results: Vec<(Vec<f64>, SequenceTape)> = seqs
            .par_iter()
            .enumerate()
            .map(|(i, seq)| {
                let mut local = seeds.as_ref().map(|s| Rng::new(s[i], 0));
                encoder::forward_sequence(&self.encoder, &self.config, seq, local.as_mut())
            })
            .collect();
        let d = self.config.hidden_dim;
        let mut hidden = Matrix::zeros(results.len(), d);
        let mut tapes = Vec::with_capacity(results.len());
        for (i, (h, tape)) in results.into_iter().enumerate() {
            hidden.row_mut(i).copy_from_slice(&h);
            tapes.push(tape);
        }
        Ok((hidden, tapes))
    }

    /// `B × D` matrix of final `[CLS]` hidden states. Pass a generator to enable dropout.
    pub fn encode(&self, batch: &[Vec<u32>], dropout: Option<&mut Rng>) -> Result<Matrix> {
        self.run_encoder(batch, dropout).map(|(h, _)| h)
    }

    /// `activation(H·Wᵀ + b)`, shape `B × d`.
    pub fn pool(&self, hidden: &Matrix) -> Result<Matrix> {
        pool_with(&self.pooler, self.config.pooler_activation, hidden)
    }

    /// Deterministic sentence embeddings (no dropout).
    pub fn embed(&self, batch: &[Vec<u32>]) -> Result<Matrix> {
        self.pool(&self.encode(batch, None)?)
    }

    pub fn forward(
        &self,
        batch: &[Vec<u32>],
        dropout: Option<&mut Rng>,
        scope: GradScope,
    ) -> Result<Forward> {
        let (hidden, mut tapes) = self.run_encoder(batch, dropout)?;
        if scope == GradScope::PoolerOnly {
            tapes = Vec::new();
        }
        let pooled = self.pool(&hidden)?;
        Ok(Forward {
            hidden,
            pooled,
            scope,
            tapes,
            config: self.config.clone(),
        })
    }

    /// Exact reverse-mode gradients for a pass recorded by [`Model::forward`].
    pub fn backward(&self, fwd: &Forward, upstream: Upstream<'_>) -> Result<ModelGrads> {
        if fwd.config != self.config {
            return Err(Error::Usage(
                "backward called with a forward pass recorded on a different model".into(),
            ));
        }
        let batch = fwd.hidden.rows();
        let d = self.config.hidden_dim;
        let (pooler, d_hidden) = match upstream {
            Upstream::Pooled(g) => {
                if g.shape() != fwd.pooled.shape() {
                    return Err(Error::Shape(format!(
                        "upstream gradient is {}x{}, pooled output is {}x{}",
                        g.rows(),
                        g.cols(),
                        batch,
                        self.config.pooler_dim
                    )));
                }
                let (pg, dh) = self.pool_backward(&fwd.hidden, &fwd.pooled, g);
                (pg, dh)
            }
            Upstream::Hidden(g) => {
                if g.shape() != (batch, d) {
                    return Err(Error::Shape(format!(
                        "upstream gradient is {}x{}, encoder output is {batch}x{d}",
                        g.rows(),
                        g.cols()
                    )));
                }
                (PoolerParams::zeros(d, self.config.pooler_dim), g.clone())
            }
        };

        let encoder = match fwd.scope {
            GradScope::PoolerOnly => {
                if matches!(upstream, Upstream::Hidden(_)) {
                    return Err(Error::Usage(
                        "encoder-output gradient given for a frozen-encoder pass".into(),
                    ));
                }
                None
            }
            GradScope::Full => Some(self.encoder_backward(&fwd.tapes, &d_hidden)),
        };
        Ok(ModelGrads { encoder, pooler })
    }

    fn encoder_backward(&self, tapes: &[SequenceTape], d_hidden: &Matrix) -> EncoderParams {
        let partials: Vec<EncoderParams> = tapes
            .par_chunks(REDUCE_CHUNK)
            .enumerate()
            .map(|(c, chunk)| {
                let mut g = EncoderParams::zeros(&self.config);
                for (k, tape) in chunk.iter().enumerate() {
                    let row = d_hidden.row(c * REDUCE_CHUNK + k);
                    if row.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    encoder::backward_sequence(&self.encoder, &self.config, tape, row, &mut g);
                }
                g
            })
            .collect();
        let mut iter = partials.into_iter();
        let mut total = iter
            .next()
            .unwrap_or_else(|| EncoderParams::zeros(&self.config));
        for g in iter {
            total.accumulate(&g);
        }
        total
    }

    fn pool_backward(
        &self,
        hidden: &Matrix,
        pooled: &Matrix,
        d_out: &Matrix,
    ) -> (PoolerParams, Matrix) {
        let mut dz = d_out.clone();
        if self.config.pooler_activation == PoolerActivation::Tanh {
            for (g, &y) in dz.as_mut_slice().iter_mut().zip(pooled.as_slice()) {
                *g *= 1.0 - y * y;
            }
        }
        let weight = dz.t_matmul(hidden).expect("shapes checked");
        let mut bias = Matrix::zeros(1, dz.cols());
        for r in dz.row_iter() {
            axpy(1.0, r, bias.as_mut_slice());
        }
        let d_hidden = dz.matmul(&self.pooler.weight).expect("shapes checked");
        (PoolerParams { weight, bias }, d_hidden)
    }
}

pub fn pool_with(
    pooler: &PoolerParams,
    activation: PoolerActivation,
    hidden: &Matrix,
) -> Result<Matrix> {
    if hidden.cols() != pooler.input_dim() {
        return Err(Error::Shape(format!(
            "pooler expects {} input columns, got {}",
            pooler.input_dim(),
            hidden.cols()
        )));
    }
    let mut out = hidden.matmul_t(&pooler.weight)?;
    let b = pooler.bias.as_slice();
    for i in 0..out.rows() {
        for (v, bj) in out.row_mut(i).iter_mut().zip(b) {
            *v += bj;
            if activation == PoolerActivation::Tanh {
                *v = v.tanh();
            }
        }
    }
    Ok(out)
}
