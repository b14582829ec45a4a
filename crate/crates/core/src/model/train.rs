use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{cross_entropy, Memory, Model};
use super::params::Params;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub lr: f64,
    pub warmup_steps: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    /// Consecutive segments per sampled window; memory is carried between
    /// them.
    pub segments_per_sample: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Wall-clock cap on training; `None` runs all `steps`.
    pub max_seconds: Option<f64>,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            lr: 2e-4,
            warmup_steps: 200,
            batch_size: 8,
            steps: 1000,
            seed: 0,
            segments_per_sample: 2,
            grad_clip: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_seconds: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean next-token loss (nats/token) of every step.
    pub losses: Vec<f64>,
    pub seconds: f64,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

/// Adam optimizer with linear warmup, driving one model.
pub struct Trainer {
    pub model: Model,
    pub params: TrainParams,
    first_moment: Params,
    second_moment: Params,
    step: usize,
    rng: ChaCha8Rng,
}

/// Loss and parameter gradient summed over every predicted token of one
/// window, processed segment by segment with detached memory.
pub(crate) fn window_gradient(
    model: &Model,
    window: &[u32],
    dropout_seed: Option<u64>,
) -> (f64, usize, Params) {
    let mut grads = model.params.zeros_like();
    let mut memory = Memory::empty(&model.config);
    let mut loss = 0.0;
    let mut count = 0;
    let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
    let inputs = &window[..window.len() - 1];
    let targets = &window[1..];
    for (seg_in, seg_tgt) in inputs
        .chunks(model.config.seq_len)
        .zip(targets.chunks(model.config.seq_len))
    {
        let (logits, next, cache) = model.forward_cached(seg_in, &memory, rng.as_mut());
        let (seg_loss, d_logits) = cross_entropy(&logits, seg_tgt);
        model.backward(&cache, &d_logits, &mut grads);
        loss += seg_loss;
        count += seg_tgt.len();
        memory = next;
    }
    (loss, count, grads)
}

/// Mean next-token loss of one window and its gradient, without dropout.
pub fn loss_and_gradient(model: &Model, window: &[u32]) -> Result<(f64, Params)> {
    if window.len() < 2 {
        return Err(Error::domain("a window needs two or more tokens"));
    }
    if let Some(bad) = window.iter().find(|&&t| t as usize >= model.config.vocab_size) {
        return Err(Error::domain(format!("token id {bad} outside vocabulary")));
    }
    let (loss, count, mut grads) = window_gradient(model, window, None);
    let scale = 1.0 / count as f64;
    for (_, t) in grads.tensors_mut() {
        t.mapv_inplace(|g| g * scale);
    }
    Ok((loss * scale, grads))
}

/// Mean next-token loss over whole sequences, segment by segment with
/// memory, no dropout.
pub fn mean_loss(model: &Model, sequences: &[Vec<u32>]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for seq in sequences {
        if seq.len() < 2 {
            continue;
        }
        let mut memory = Memory::empty(&model.config);
        let inputs = &seq[..seq.len() - 1];
        let targets = &seq[1..];
        for (seg_in, seg_tgt) in inputs
            .chunks(model.config.seq_len)
            .zip(targets.chunks(model.config.seq_len))
        {
            let (logits, next) = model.forward(seg_in, &memory)?;
            total += cross_entropy(&logits, seg_tgt).0;
            count += seg_tgt.len();
            memory = next;
        }
    }
    if count == 0 {
        return Err(Error::domain("no sequence has two or more tokens"));
    }
    Ok(total / count as f64)
}

impl Trainer {
    pub fn new(model: Model, params: TrainParams) -> Result<Trainer> {
        if params.batch_size == 0 || params.segments_per_sample == 0 {
            return Err(Error::domain("batch_size and segments_per_sample must be positive"));
        }
        if !(params.lr > 0.0) {
            return Err(Error::domain("learning rate must be positive"));
        }
        let zeros = model.params.zeros_like();
        Ok(Trainer {
            first_moment: zeros.clone(),
            second_moment: zeros,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            model,
            params,
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        let warm = self.params.warmup_steps;
        if warm == 0 || self.step >= warm {
            self.params.lr
        } else {
            self.params.lr * (self.step + 1) as f64 / warm as f64
        }
    }

    fn check_corpus(&self, corpus: &[Vec<u32>]) -> Result<()> {
        if !corpus.iter().any(|s| s.len() >= 2) {
            return Err(Error::domain("corpus has no sequence of two or more tokens"));
        }
        let vocab = self.model.config.vocab_size;
        if let Some(bad) = corpus.iter().flatten().find(|&&t| t as usize >= vocab) {
            return Err(Error::domain(format!("token id {bad} outside vocabulary of {vocab}")));
        }
        Ok(())
    }

    fn sample_window<'c>(&mut self, corpus: &'c [Vec<u32>]) -> &'c [u32] {
        let usable: Vec<&Vec<u32>> = corpus.iter().filter(|s| s.len() >= 2).collect();
        let seq = usable[self.rng.gen_range(0..usable.len())];
        let span = self.model.config.seq_len * self.params.segments_per_sample + 1;
        let len = span.min(seq.len());
        let start = self.rng.gen_range(0..=seq.len() - len);
        &seq[start..start + len]
    }

    /// One optimizer step on a freshly sampled batch. Returns the batch's
    /// mean loss per predicted token.
    pub fn step(&mut self, corpus: &[Vec<u32>]) -> Result<f64> {
        self.check_corpus(corpus)?;
        let jobs: Vec<(&[u32], u64)> = (0..self.params.batch_size)
            .map(|_| {
                let window = self.sample_window(corpus);
                (window, self.rng.gen())
            })
            .collect();
        let dropout = self.model.config.dropout > 0.0;
        let model = &self.model;
        let results: Vec<(f64, usize, Params)> = jobs
            .par_iter()
            .map(|&(window, seed)| window_gradient(model, window, dropout.then_some(seed)))
            .collect();

        let mut grads = self.model.params.zeros_like();
        let (mut loss, mut count) = (0.0, 0usize);
        for (l, n, g) in &results {
            loss += l;
            count += n;
            grads.add_scaled(g, 1.0);
        }
        let scale = 1.0 / count as f64;
        for (_, t) in grads.tensors_mut() {
            t.mapv_inplace(|g| g * scale);
        }
        self.apply(&grads);
        Ok(loss / count as f64)
    }

    /// Adam update with the current learning rate and gradient clipping.
    pub fn apply(&mut self, grads: &Params) {
        let norm = grads.squared_norm().sqrt();
        let clip = if self.params.grad_clip > 0.0 && norm > self.params.grad_clip {
            self.params.grad_clip / norm
        } else {
            1.0
        };
        let lr = self.learning_rate();
        self.step += 1;
        let (b1, b2, eps) = (self.params.beta1, self.params.beta2, self.params.eps);
        let bias1 = 1.0 - b1.powi(self.step as i32);
        let bias2 = 1.0 - b2.powi(self.step as i32);
        for (((_, w), (_, m)), ((_, v), (_, g))) in self
            .model
            .params
            .tensors_mut()
            .into_iter()
            .zip(self.first_moment.tensors_mut())
            .zip(self.second_moment.tensors_mut().into_iter().zip(grads.tensors()))
        {
            ndarray::Zip::from(w).and(m).and(v).and(g).for_each(|w, m, v, &g| {
                let g = g * clip;
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= lr * (*m / bias1) / ((*v / bias2).sqrt() + eps);
            });
        }
    }

    /// Runs until `steps` are done or the time cap is hit.
    pub fn run(&mut self, corpus: &[Vec<u32>], mut on_step: impl FnMut(usize, f64)) -> Result<TrainReport> {
        let start = Instant::now();
        let cap = self.params.max_seconds.map(Duration::from_secs_f64);
        let mut report = TrainReport::default();
        while self.step < self.params.steps {
            if cap.is_some_and(|c| start.elapsed() >= c) {
                break;
            }
            let loss = self.step(corpus)?;
            report.losses.push(loss);
            on_step(self.step, loss);
        }
        report.seconds = start.elapsed().as_secs_f64();
        Ok(report)
    }

    pub fn into_model(self) -> Model {
        self.model
    }
}
