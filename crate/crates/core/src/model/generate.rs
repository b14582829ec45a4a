use ndarray::ArrayView1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::Model;
use crate::codec::{accept_sequence, Constraint, Token, Vocabulary};
use crate::{Error, Result};

pub const DEFAULT_TOKEN_BUDGET: usize = 8192;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    /// Softmax temperature; 0 selects greedy argmax decoding.
    pub temperature: f64,
    /// Keep only the `top_k` most likely ids; 0 disables.
    pub top_k: usize,
    pub nucleus_p: f64,
    pub seed: u64,
    /// Restrict every step to tokens that keep the stream well formed.
    pub grammar_masked: bool,
    pub max_tokens: usize,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: 1.0,
            top_k: 0,
            nucleus_p: 0.9,
            seed: 0,
            grammar_masked: false,
            max_tokens: DEFAULT_TOKEN_BUDGET,
        }
    }
}

impl SamplingParams {
    pub fn greedy() -> SamplingParams {
        SamplingParams {
            temperature: 0.0,
            nucleus_p: 1.0,
            ..SamplingParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(Error::domain("temperature must be finite and non-negative"));
        }
        if !(self.nucleus_p > 0.0 && self.nucleus_p <= 1.0) {
            return Err(Error::domain("nucleus_p must lie in (0, 1]"));
        }
        Ok(())
    }

    fn is_greedy(&self) -> bool {
        self.temperature < 1e-8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The requested number of bars was completed.
    Bars,
    /// The token budget ran out first.
    Budget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    /// Continuation tokens only, without the prompt.
    pub tokens: Vec<Token>,
    pub stop: StopReason,
}

/// Sampling distribution after temperature, mask, top-k and nucleus
/// filtering. Masked-out ids get probability 0.
pub fn sampling_distribution(
    logits: ArrayView1<'_, f64>,
    mask: Option<&[bool]>,
    params: &SamplingParams,
) -> Vec<f64> {
    let allowed = |i: usize| mask.is_none_or(|m| m[i]);
    let temperature = if params.is_greedy() { 1.0 } else { params.temperature };
    let scaled: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(i, &l)| if allowed(i) { l / temperature } else { f64::NEG_INFINITY })
        .collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = scaled.iter().map(|&s| (s - max).exp()).collect();
    normalize(&mut probs);

    let mut order: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut keep = order.len();
    if params.top_k > 0 {
        keep = keep.min(params.top_k);
    }
    if params.nucleus_p < 1.0 {
        let mut mass = 0.0;
        for (n, &i) in order.iter().enumerate().take(keep) {
            mass += probs[i];
            if mass >= params.nucleus_p {
                keep = n + 1;
                break;
            }
        }
    }
    for &i in &order[keep.max(1)..] {
        probs[i] = 0.0;
    }
    normalize(&mut probs);
    probs
}

fn normalize(probs: &mut [f64]) {
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
}

fn argmax(logits: ArrayView1<'_, f64>, mask: Option<&[bool]>) -> usize {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (i, &l) in logits.iter().enumerate() {
        if mask.is_none_or(|m| m[i]) && (best.0 == usize::MAX || l > best.1) {
            best = (i, l);
        }
    }
    best.0
}

fn draw(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let mut target = rng.gen::<f64>();
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            if target < p {
                return i;
            }
            target -= p;
            last = i;
        }
    }
    last
}

/// Continues `prompt` until `target_bars` new bars are complete (the `BAR`
/// that would open the next one is not emitted) or the budget runs out.
pub fn generate(
    model: &Model,
    prompt: &[Token],
    target_bars: usize,
    sampling: &SamplingParams,
) -> Result<Generation> {
    sampling.validate()?;
    if target_bars == 0 {
        return Err(Error::domain("target_bars must be at least 1"));
    }
    if prompt.is_empty() {
        return Err(Error::domain("prompt must hold at least one token"));
    }
    let mode = model.config.mode;
    let vocab = Vocabulary::new(mode);
    accept_sequence(prompt, mode)
        .map_err(|i| Error::domain(format!("prompt rejected by the grammar at token {i} ({})", prompt[i])))?;
    let prompt_ids = vocab.encode_ids(prompt)?;

    let mut constraint = Constraint::new(mode);
    if sampling.grammar_masked {
        for (i, &t) in prompt.iter().enumerate() {
            if !constraint.advance(t) {
                return Err(Error::domain(format!(
                    "prompt token {i} ({t}) breaks bar structure; cannot constrain"
                )));
            }
        }
    }

    let mut stream = model.stream();
    let mut logits = None;
    for &id in &prompt_ids {
        logits = Some(stream.push(id)?);
    }
    let mut logits = logits.expect("prompt is non-empty");

    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let mut out = Vec::new();
    let mut bars = 0;
    let bar_id = vocab.id(Token::Bar).expect("BAR in every vocabulary") as usize;
    while out.len() < sampling.max_tokens {
        let mask = sampling.grammar_masked.then(|| constraint.mask(&vocab));
        let id = if sampling.is_greedy() {
            argmax(logits.view(), mask.as_deref())
        } else {
            draw(
                &sampling_distribution(logits.view(), mask.as_deref(), sampling),
                &mut rng,
            )
        };
        if id == bar_id {
            if bars == target_bars {
                return Ok(Generation {
                    tokens: out,
                    stop: StopReason::Bars,
                });
            }
            bars += 1;
        }
        let token = vocab.token(id as u32).expect("id from vocabulary-sized logits");
        if sampling.grammar_masked {
            let ok = constraint.advance(token);
            debug_assert!(ok, "masked sampling produced a disallowed token");
        }
        out.push(token);
        logits = stream.push(id as u32)?;
    }
    Ok(Generation {
        tokens: out,
        stop: StopReason::Budget,
    })
}
