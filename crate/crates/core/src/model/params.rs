use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;

/// Weights of one attention + feed-forward block. Vectors are stored as
/// `1 × n` matrices so every tensor has the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Array2<f64>,
    pub ln1_bias: Array2<f64>,
    pub w_query: Array2<f64>,
    pub w_key: Array2<f64>,
    pub w_value: Array2<f64>,
    pub w_rel: Array2<f64>,
    /// Content bias added to queries for the key term, all heads.
    pub content_bias: Array2<f64>,
    /// Position bias added to queries for the distance term, all heads.
    pub position_bias: Array2<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array2<f64>,
    pub ln2_gain: Array2<f64>,
    pub ln2_bias: Array2<f64>,
    pub w_ff1: Array2<f64>,
    pub b_ff1: Array2<f64>,
    pub w_ff2: Array2<f64>,
    pub b_ff2: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub embedding: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub final_gain: Array2<f64>,
    pub final_bias: Array2<f64>,
    pub w_logits: Array2<f64>,
    pub b_logits: Array2<f64>,
}

const INIT_STD: f64 = 0.02;

impl LayerParams {
    fn zeros(d: usize, f: usize) -> LayerParams {
        let z = |r, c| Array2::zeros((r, c));
        LayerParams {
            ln1_gain: z(1, d),
            ln1_bias: z(1, d),
            w_query: z(d, d),
            w_key: z(d, d),
            w_value: z(d, d),
            w_rel: z(d, d),
            content_bias: z(1, d),
            position_bias: z(1, d),
            w_out: z(d, d),
            b_out: z(1, d),
            ln2_gain: z(1, d),
            ln2_bias: z(1, d),
            w_ff1: z(d, f),
            b_ff1: z(1, f),
            w_ff2: z(f, d),
            b_ff2: z(1, d),
        }
    }

    fn tensors(&self) -> [(&'static str, &Array2<f64>); 16] {
        [
            ("ln1_gain", &self.ln1_gain),
            ("ln1_bias", &self.ln1_bias),
            ("w_query", &self.w_query),
            ("w_key", &self.w_key),
            ("w_value", &self.w_value),
            ("w_rel", &self.w_rel),
            ("content_bias", &self.content_bias),
            ("position_bias", &self.position_bias),
            ("w_out", &self.w_out),
            ("b_out", &self.b_out),
            ("ln2_gain", &self.ln2_gain),
            ("ln2_bias", &self.ln2_bias),
            ("w_ff1", &self.w_ff1),
            ("b_ff1", &self.b_ff1),
            ("w_ff2", &self.w_ff2),
            ("b_ff2", &self.b_ff2),
        ]
    }

    fn tensors_mut(&mut self) -> [(&'static str, &mut Array2<f64>); 16] {
        [
            ("ln1_gain", &mut self.ln1_gain),
            ("ln1_bias", &mut self.ln1_bias),
            ("w_query", &mut self.w_query),
            ("w_key", &mut self.w_key),
            ("w_value", &mut self.w_value),
            ("w_rel", &mut self.w_rel),
            ("content_bias", &mut self.content_bias),
            ("position_bias", &mut self.position_bias),
            ("w_out", &mut self.w_out),
            ("b_out", &mut self.b_out),
            ("ln2_gain", &mut self.ln2_gain),
            ("ln2_bias", &mut self.ln2_bias),
            ("w_ff1", &mut self.w_ff1),
            ("b_ff1", &mut self.b_ff1),
            ("w_ff2", &mut self.w_ff2),
            ("b_ff2", &mut self.b_ff2),
        ]
    }
}

impl Params {
    pub fn zeros(config: &ModelConfig) -> Params {
        let (d, f, v) = (config.d_model, config.d_ff, config.vocab_size);
        Params {
            embedding: Array2::zeros((v, d)),
            layers: (0..config.n_layers).map(|_| LayerParams::zeros(d, f)).collect(),
            final_gain: Array2::zeros((1, d)),
            final_bias: Array2::zeros((1, d)),
            w_logits: Array2::zeros((d, v)),
            b_logits: Array2::zeros((1, v)),
        }
    }

    /// Matrices ~ N(0, 0.02²), layer-norm gains 1, other vectors 0.
    pub fn init<R: Rng>(config: &ModelConfig, rng: &mut R) -> Params {
        let mut params = Params::zeros(config);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        for (name, tensor) in params.tensors_mut() {
            let leaf = name.rsplit('.').next().unwrap_or(&name);
            if leaf.ends_with("gain") {
                tensor.fill(1.0);
            } else if tensor.nrows() > 1 || leaf == "content_bias" || leaf == "position_bias" {
                tensor.mapv_inplace(|_| normal.sample(rng));
            }
        }
        params
    }

    pub fn zeros_like(&self) -> Params {
        let mut out = self.clone();
        for (_, t) in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    /// Every tensor with a stable dotted name, in serialization order.
    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        for (i, layer) in self.layers.iter().enumerate() {
            out.extend(
                layer
                    .tensors()
                    .into_iter()
                    .map(|(n, t)| (format!("layers.{i}.{n}"), t)),
            );
        }
        out.push(("final_gain".into(), &self.final_gain));
        out.push(("final_bias".into(), &self.final_bias));
        out.push(("w_logits".into(), &self.w_logits));
        out.push(("b_logits".into(), &self.b_logits));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out = vec![("embedding".to_string(), &mut self.embedding)];
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.extend(
                layer
                    .tensors_mut()
                    .into_iter()
                    .map(|(n, t)| (format!("layers.{i}.{n}"), t)),
            );
        }
        out.push(("final_gain".into(), &mut self.final_gain));
        out.push(("final_bias".into(), &mut self.final_bias));
        out.push(("w_logits".into(), &mut self.w_logits));
        out.push(("b_logits".into(), &mut self.b_logits));
        out
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for ((_, mine), (_, theirs)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            mine.scaled_add(scale, theirs);
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|(_, t)| t.iter().map(|x| x * x).sum::<f64>())
            .sum()
    }

    pub fn round_to_f32(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.mapv_inplace(|x| f64::from(x as f32));
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }
}
