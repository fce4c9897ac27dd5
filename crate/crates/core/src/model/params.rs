use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::numeric::{Matrix, Rng};

const INIT_RANGE: f64 = 0.05;

fn uniform(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.uniform(-INIT_RANGE, INIT_RANGE))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("length matches shape")
}

/// One pre-layer-norm transformer block. Projections map row vectors: `y = x · W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_scale: Matrix,
    pub ln1_offset: Matrix,
    pub query: Matrix,
    pub key: Matrix,
    pub value: Matrix,
    pub output: Matrix,
    pub ln2_scale: Matrix,
    pub ln2_offset: Matrix,
    pub ff_in: Matrix,
    pub ff_out: Matrix,
}

impl LayerParams {
    fn zeros(d: usize, f: usize) -> Self {
        Self {
            ln1_scale: Matrix::zeros(1, d),
            ln1_offset: Matrix::zeros(1, d),
            query: Matrix::zeros(d, d),
            key: Matrix::zeros(d, d),
            value: Matrix::zeros(d, d),
            output: Matrix::zeros(d, d),
            ln2_scale: Matrix::zeros(1, d),
            ln2_offset: Matrix::zeros(1, d),
            ff_in: Matrix::zeros(d, f),
            ff_out: Matrix::zeros(f, d),
        }
    }

    fn init(d: usize, f: usize, rng: &mut Rng) -> Self {
        Self {
            ln1_scale: Matrix::filled(1, d, 1.0),
            ln1_offset: Matrix::zeros(1, d),
            query: uniform(d, d, rng),
            key: uniform(d, d, rng),
            value: uniform(d, d, rng),
            output: uniform(d, d, rng),
            ln2_scale: Matrix::filled(1, d, 1.0),
            ln2_offset: Matrix::zeros(1, d),
            ff_in: uniform(d, f, rng),
            ff_out: uniform(f, d, rng),
        }
    }

    fn tensors(&self) -> [(&'static str, &Matrix); 10] {
        [
            ("ln1_scale", &self.ln1_scale),
            ("ln1_offset", &self.ln1_offset),
            ("query", &self.query),
            ("key", &self.key),
            ("value", &self.value),
            ("output", &self.output),
            ("ln2_scale", &self.ln2_scale),
            ("ln2_offset", &self.ln2_offset),
            ("ff_in", &self.ff_in),
            ("ff_out", &self.ff_out),
        ]
    }

    fn tensors_mut(&mut self) -> [(&'static str, &mut Matrix); 10] {
        [
            ("ln1_scale", &mut self.ln1_scale),
            ("ln1_offset", &mut self.ln1_offset),
            ("query", &mut self.query),
            ("key", &mut self.key),
            ("value", &mut self.value),
            ("output", &mut self.output),
            ("ln2_scale", &mut self.ln2_scale),
            ("ln2_offset", &mut self.ln2_offset),
            ("ff_in", &mut self.ff_in),
            ("ff_out", &mut self.ff_out),
        ]
    }
}

/// Everything below the pooler. Shapes depend only on the encoder part of the config.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub token_embedding: Matrix,
    pub position_embedding: Matrix,
    pub layers: Vec<LayerParams>,
    pub final_scale: Matrix,
    pub final_offset: Matrix,
}

impl EncoderParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.hidden_dim;
        Self {
            token_embedding: Matrix::zeros(config.vocab_size, d),
            position_embedding: Matrix::zeros(config.max_len, d),
            layers: (0..config.layers)
                .map(|_| LayerParams::zeros(d, config.ff_dim))
                .collect(),
            final_scale: Matrix::zeros(1, d),
            final_offset: Matrix::zeros(1, d),
        }
    }

    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Self {
        let d = config.hidden_dim;
        let token_embedding = uniform(config.vocab_size, d, rng);
        let position_embedding = uniform(config.max_len, d, rng);
        let layers = (0..config.layers)
            .map(|_| LayerParams::init(d, config.ff_dim, rng))
            .collect();
        Self {
            token_embedding,
            position_embedding,
            layers,
            final_scale: Matrix::filled(1, d, 1.0),
            final_offset: Matrix::zeros(1, d),
        }
    }

    /// Named tensors in a fixed canonical order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![
            ("token_embedding".to_string(), &self.token_embedding),
            ("position_embedding".to_string(), &self.position_embedding),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, t) in layer.tensors() {
                out.push((format!("layers.{l}.{name}"), t));
            }
        }
        out.push(("final_scale".to_string(), &self.final_scale));
        out.push(("final_offset".to_string(), &self.final_offset));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = vec![
            ("token_embedding".to_string(), &mut self.token_embedding),
            (
                "position_embedding".to_string(),
                &mut self.position_embedding,
            ),
        ];
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (name, t) in layer.tensors_mut() {
                out.push((format!("layers.{l}.{name}"), t));
            }
        }
        out.push(("final_scale".to_string(), &mut self.final_scale));
        out.push(("final_offset".to_string(), &mut self.final_offset));
        out
    }

    pub fn shapes(&self) -> Vec<(String, (usize, usize))> {
        self.tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape()))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors()
            .iter()
            .map(|(_, t)| t.rows() * t.cols())
            .sum()
    }

    pub(crate) fn accumulate(&mut self, other: &EncoderParams) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_scaled(1.0, b).expect("identical layouts");
        }
    }

    /// Little-endian bytes of every tensor in canonical order.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.as_slice().iter().flat_map(|v| v.to_le_bytes()))
            .collect()
    }
}

/// The compressing head: `W` is `d × D`, `b` has length `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolerParams {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl PoolerParams {
    pub fn zeros(input_dim: usize, output_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(output_dim, input_dim),
            bias: Matrix::zeros(1, output_dim),
        }
    }

    pub fn init(input_dim: usize, output_dim: usize, rng: &mut Rng) -> Self {
        Self {
            weight: uniform(output_dim, input_dim, rng),
            bias: Matrix::zeros(1, output_dim),
        }
    }

    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::Shape(format!(
                "pooler bias has {} entries for {} outputs",
                bias.len(),
                weight.rows()
            )));
        }
        let bias = Matrix::from_vec(1, weight.rows(), bias)?;
        Ok(Self { weight, bias })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn parameter_count(&self) -> usize {
        self.output_dim() * (self.input_dim() + 1)
    }

    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        vec![
            ("weight".to_string(), &self.weight),
            ("bias".to_string(), &self.bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        vec![
            ("weight".to_string(), &mut self.weight),
            ("bias".to_string(), &mut self.bias),
        ]
    }
}

/// SHA-256 of the encoder's canonical little-endian bytes, hex encoded.
pub fn encoder_digest(encoder: &EncoderParams) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(encoder.to_bytes()))
}
