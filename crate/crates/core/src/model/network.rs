use std::collections::VecDeque;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::layers::{
    distance_embedding, gelu, gelu_grad, layer_norm, layer_norm_backward, softmax_rows,
    LayerNormCache,
};
use super::params::Params;
use crate::{Error, Result};

/// Cached layer inputs from earlier segments, one `rows × d_model` matrix
/// per layer. Never receives gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Memory {
    pub layers: Vec<Array2<f64>>,
}

impl Memory {
    pub fn empty(config: &ModelConfig) -> Memory {
        Memory {
            layers: (0..config.n_layers)
                .map(|_| Array2::zeros((0, config.d_model)))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.layers.first().map_or(0, Array2::nrows)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Params,
}

pub(crate) struct LayerCache {
    mem_len: usize,
    ln1: LayerNormCache,
    normed: Array2<f64>,
    query: Array2<f64>,
    key: Array2<f64>,
    value: Array2<f64>,
    rel: Array2<f64>,
    probs: Vec<Array2<f64>>,
    attn: Array2<f64>,
    drop_attn: Option<Array2<f64>>,
    ln2: LayerNormCache,
    normed2: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
    drop_ff: Option<Array2<f64>>,
}

pub(crate) struct ForwardCache {
    tokens: Vec<u32>,
    dist: Array2<f64>,
    layers: Vec<LayerCache>,
    final_ln: LayerNormCache,
    final_out: Array2<f64>,
}

fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn((rows, cols), || if rng.gen::<f64>() < p { 0.0 } else { keep })
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let params = Params::init(&config, &mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Model { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: Params) -> Result<Model> {
        config.validate()?;
        let expected = Params::zeros(&config);
        for ((name, want), (_, got)) in expected.tensors().iter().zip(params.tensors()) {
            if want.dim() != got.dim() {
                return Err(Error::domain(format!(
                    "tensor {name} has shape {:?}, config implies {:?}",
                    got.dim(),
                    want.dim()
                )));
            }
        }
        if expected.tensors().len() != params.tensors().len() {
            return Err(Error::domain("layer count does not match config"));
        }
        Ok(Model { config, params })
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::domain("empty segment"));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::domain(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    fn check_memory(&self, memory: &Memory) -> Result<()> {
        if memory.layers.len() != self.config.n_layers {
            return Err(Error::domain(format!(
                "memory has {} layers, model has {}",
                memory.layers.len(),
                self.config.n_layers
            )));
        }
        let rows = memory.len();
        for m in &memory.layers {
            if m.nrows() != rows || m.ncols() != self.config.d_model {
                return Err(Error::domain("inconsistent memory shapes"));
            }
        }
        if rows > self.config.mem_len {
            return Err(Error::domain(format!(
                "memory of {rows} exceeds mem_len {}",
                self.config.mem_len
            )));
        }
        Ok(())
    }

    /// Next-token logits for every segment position, plus the memory to
    /// carry into the next segment.
    pub fn forward(&self, tokens: &[u32], memory: &Memory) -> Result<(Array2<f64>, Memory)> {
        if tokens.len() > self.config.seq_len {
            return Err(Error::domain(format!(
                "segment of {} exceeds seq_len {}",
                tokens.len(),
                self.config.seq_len
            )));
        }
        self.check_tokens(tokens)?;
        self.check_memory(memory)?;
        let (logits, next, _) = self.forward_cached(tokens, memory, None);
        Ok((logits, next))
    }

    /// Single pass over the whole sequence with no memory and no segment
    /// length bound.
    pub fn full_context_logits(&self, tokens: &[u32]) -> Result<Array2<f64>> {
        self.check_tokens(tokens)?;
        let (logits, _, _) = self.forward_cached(tokens, &Memory::empty(&self.config), None);
        Ok(logits)
    }

    pub(crate) fn forward_cached(
        &self,
        tokens: &[u32],
        memory: &Memory,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> (Array2<f64>, Memory, ForwardCache) {
        let cfg = &self.config;
        let p = &self.params;
        let (seg, mem) = (tokens.len(), memory.len());
        let keys = seg + mem;
        let (heads, hd) = (cfg.n_heads, cfg.head_dim());
        let scale = 1.0 / (hd as f64).sqrt();
        let dist = distance_embedding(keys, cfg.d_model);
        let drop_p = if dropout_rng.is_some() { cfg.dropout } else { 0.0 };

        let mut h = Array2::zeros((seg, cfg.d_model));
        for (mut row, &t) in h.rows_mut().into_iter().zip(tokens) {
            row.assign(&p.embedding.row(t as usize));
        }

        let mut caches = Vec::with_capacity(cfg.n_layers);
        let mut next_memory = Vec::with_capacity(cfg.n_layers);
        for (layer, mem_rows) in p.layers.iter().zip(&memory.layers) {
            let cat = concatenate![Axis(0), mem_rows.view(), h.view()];
            let keep_from = keys.saturating_sub(cfg.mem_len);
            next_memory.push(cat.slice(s![keep_from.., ..]).to_owned());

            let (normed, ln1) = layer_norm(cat.view(), &layer.ln1_gain, &layer.ln1_bias);
            let query = normed.slice(s![mem.., ..]).dot(&layer.w_query);
            let key = normed.dot(&layer.w_key);
            let value = normed.dot(&layer.w_value);
            let rel = dist.dot(&layer.w_rel);

            let mut attn = Array2::zeros((seg, cfg.d_model));
            let mut probs = Vec::with_capacity(heads);
            for head in 0..heads {
                let cols = s![.., head * hd..(head + 1) * hd];
                let q = query.slice(cols);
                let with_content = &q + &layer.content_bias.slice(cols);
                let with_position = &q + &layer.position_bias.slice(cols);
                let content = with_content.dot(&key.slice(cols).t());
                let by_distance = with_position.dot(&rel.slice(cols).t());
                let mut scores = Array2::from_elem((seg, keys), f64::NEG_INFINITY);
                for i in 0..seg {
                    for j in 0..=mem + i {
                        scores[[i, j]] = (content[[i, j]] + by_distance[[i, mem + i - j]]) * scale;
                    }
                }
                softmax_rows(&mut scores);
                attn.slice_mut(cols).assign(&scores.dot(&value.slice(cols)));
                probs.push(scores);
            }

            let mut projected = attn.dot(&layer.w_out) + &layer.b_out;
            let drop_attn = dropout_rng.as_deref_mut().filter(|_| drop_p > 0.0).map(|rng| {
                let mask = dropout_mask(seg, cfg.d_model, drop_p, rng);
                projected *= &mask;
                mask
            });
            let h2 = &h + &projected;

            let (normed2, ln2) = layer_norm(h2.view(), &layer.ln2_gain, &layer.ln2_bias);
            let pre = normed2.dot(&layer.w_ff1) + &layer.b_ff1;
            let act = pre.mapv(gelu);
            let mut ff = act.dot(&layer.w_ff2) + &layer.b_ff2;
            let drop_ff = dropout_rng.as_deref_mut().filter(|_| drop_p > 0.0).map(|rng| {
                let mask = dropout_mask(seg, cfg.d_model, drop_p, rng);
                ff *= &mask;
                mask
            });
            h = h2 + ff;

            caches.push(LayerCache {
                mem_len: mem,
                ln1,
                normed,
                query,
                key,
                value,
                rel,
                probs,
                attn,
                drop_attn,
                ln2,
                normed2,
                pre,
                act,
                drop_ff,
            });
        }

        let (final_out, final_ln) = layer_norm(h.view(), &p.final_gain, &p.final_bias);
        let logits = final_out.dot(&p.w_logits) + &p.b_logits;
        (
            logits,
            Memory {
                layers: next_memory,
            },
            ForwardCache {
                tokens: tokens.to_vec(),
                dist,
                layers: caches,
                final_ln,
                final_out,
            },
        )
    }

    /// Accumulates parameter gradients for `d_logits` into `grads`.
    pub(crate) fn backward(&self, cache: &ForwardCache, d_logits: &Array2<f64>, grads: &mut Params) {
        let cfg = &self.config;
        let p = &self.params;
        let (heads, hd) = (cfg.n_heads, cfg.head_dim());
        let scale = 1.0 / (hd as f64).sqrt();

        grads.w_logits += &cache.final_out.t().dot(d_logits);
        grads.b_logits += &d_logits.sum_axis(Axis(0)).insert_axis(Axis(0));
        let d_final = d_logits.dot(&p.w_logits.t());
        let mut dh = layer_norm_backward(
            &d_final,
            &cache.final_ln,
            &p.final_gain,
            &mut grads.final_gain,
            &mut grads.final_bias,
        );

        for ((layer, c), g) in p
            .layers
            .iter()
            .zip(&cache.layers)
            .zip(grads.layers.iter_mut())
            .rev()
        {
            let mem = c.mem_len;
            let (seg, keys) = (dh.nrows(), c.key.nrows());

            // Feed-forward block.
            let d_ff = match &c.drop_ff {
                Some(mask) => &dh * mask,
                None => dh.clone(),
            };
            g.w_ff2 += &c.act.t().dot(&d_ff);
            g.b_ff2 += &d_ff.sum_axis(Axis(0)).insert_axis(Axis(0));
            let d_act = d_ff.dot(&layer.w_ff2.t());
            let d_pre = d_act * c.pre.mapv(gelu_grad);
            g.w_ff1 += &c.normed2.t().dot(&d_pre);
            g.b_ff1 += &d_pre.sum_axis(Axis(0)).insert_axis(Axis(0));
            let d_normed2 = d_pre.dot(&layer.w_ff1.t());
            let dh2 = dh
                + layer_norm_backward(
                    &d_normed2,
                    &c.ln2,
                    &layer.ln2_gain,
                    &mut g.ln2_gain,
                    &mut g.ln2_bias,
                );

            // Attention block.
            let d_proj = match &c.drop_attn {
                Some(mask) => &dh2 * mask,
                None => dh2.clone(),
            };
            g.w_out += &c.attn.t().dot(&d_proj);
            g.b_out += &d_proj.sum_axis(Axis(0)).insert_axis(Axis(0));
            let d_attn = d_proj.dot(&layer.w_out.t());

            let mut dq = Array2::zeros((seg, cfg.d_model));
            let mut dk = Array2::zeros((keys, cfg.d_model));
            let mut dv = Array2::zeros((keys, cfg.d_model));
            let mut d_rel = Array2::zeros((keys, cfg.d_model));
            for head in 0..heads {
                let cols = s![.., head * hd..(head + 1) * hd];
                let probs = &c.probs[head];
                let d_out = d_attn.slice(cols);
                let d_probs = d_out.dot(&c.value.slice(cols).t());
                dv.slice_mut(cols).assign(&probs.t().dot(&d_out));

                let mut d_scores = probs * &d_probs;
                for (mut row, pr) in d_scores.rows_mut().into_iter().zip(probs.rows()) {
                    let total = row.sum();
                    row.zip_mut_with(&pr, |v, &pv| *v = (*v - pv * total) * scale);
                }
                let mut d_by_distance = Array2::zeros((seg, keys));
                for i in 0..seg {
                    for j in 0..=mem + i {
                        d_by_distance[[i, mem + i - j]] = d_scores[[i, j]];
                    }
                }

                let q = c.query.slice(cols);
                let with_content = &q + &layer.content_bias.slice(cols);
                let with_position = &q + &layer.position_bias.slice(cols);
                let d_content_q = d_scores.dot(&c.key.slice(cols));
                dk.slice_mut(cols).assign(&d_scores.t().dot(&with_content));
                let d_position_q = d_by_distance.dot(&c.rel.slice(cols));
                d_rel.slice_mut(cols).assign(&d_by_distance.t().dot(&with_position));

                g.content_bias
                    .slice_mut(cols)
                    .scaled_add(1.0, &d_content_q.sum_axis(Axis(0)).insert_axis(Axis(0)));
                g.position_bias
                    .slice_mut(cols)
                    .scaled_add(1.0, &d_position_q.sum_axis(Axis(0)).insert_axis(Axis(0)));
                dq.slice_mut(cols).assign(&(d_content_q + d_position_q));
            }

            g.w_rel += &cache.dist.t().dot(&d_rel);
            let normed_seg = c.normed.slice(s![mem.., ..]);
            g.w_query += &normed_seg.t().dot(&dq);
            g.w_key += &c.normed.t().dot(&dk);
            g.w_value += &c.normed.t().dot(&dv);

            let mut d_normed = dk.dot(&layer.w_key.t()) + dv.dot(&layer.w_value.t());
            d_normed
                .slice_mut(s![mem.., ..])
                .scaled_add(1.0, &dq.dot(&layer.w_query.t()));
            let d_cat = layer_norm_backward(
                &d_normed,
                &c.ln1,
                &layer.ln1_gain,
                &mut g.ln1_gain,
                &mut g.ln1_bias,
            );
            dh = dh2 + d_cat.slice(s![mem.., ..]);
        }

        for (row, &t) in dh.rows().into_iter().zip(&cache.tokens) {
            let mut target = grads.embedding.row_mut(t as usize);
            target += &row;
        }
    }

    /// Starts token-by-token inference with per-layer key/value caches.
    pub fn stream(&self) -> Stream<'_> {
        let cfg = &self.config;
        let dist = distance_embedding(cfg.mem_len + cfg.seq_len, cfg.d_model);
        Stream {
            model: self,
            rel: self.params.layers.iter().map(|l| dist.dot(&l.w_rel)).collect(),
            keys: vec![VecDeque::new(); cfg.n_layers],
            values: vec![VecDeque::new(); cfg.n_layers],
        }
    }
}

/// Softmax cross-entropy. Returns the summed loss and `softmax − onehot`.
pub(crate) fn cross_entropy(logits: &Array2<f64>, targets: &[u32]) -> (f64, Array2<f64>) {
    let mut probs = logits.clone();
    softmax_rows(&mut probs);
    let mut loss = 0.0;
    for (mut row, &t) in probs.rows_mut().into_iter().zip(targets) {
        let pt = row[t as usize];
        loss -= pt.max(f64::MIN_POSITIVE).ln();
        row[t as usize] -= 1.0;
    }
    (loss, probs)
}

/// Incremental decoding state. Each pushed token attends over at most
/// `mem_len + seq_len - 1` cached positions per layer, the widest context
/// a token sees during segment-wise training.
pub struct Stream<'m> {
    model: &'m Model,
    rel: Vec<Array2<f64>>,
    keys: Vec<VecDeque<Array1<f64>>>,
    values: Vec<VecDeque<Array1<f64>>>,
}

impl Stream<'_> {
    pub fn len(&self) -> usize {
        self.keys.first().map_or(0, VecDeque::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Feeds one token and returns the logits for the next one.
    pub fn push(&mut self, token: u32) -> Result<Array1<f64>> {
        let cfg = &self.model.config;
        if token as usize >= cfg.vocab_size {
            return Err(Error::domain(format!("token id {token} outside vocabulary")));
        }
        let p = &self.model.params;
        let (heads, hd) = (cfg.n_heads, cfg.head_dim());
        let scale = 1.0 / (hd as f64).sqrt();
        let mut h = p.embedding.slice(s![token as usize..token as usize + 1, ..]).to_owned();

        for (l, layer) in p.layers.iter().enumerate() {
            let (normed, _) = layer_norm(h.view(), &layer.ln1_gain, &layer.ln1_bias);
            let q = normed.dot(&layer.w_query).row(0).to_owned();
            let k_new = normed.dot(&layer.w_key).row(0).to_owned();
            let v_new = normed.dot(&layer.w_value).row(0).to_owned();
            let (keys, values) = (&mut self.keys[l], &mut self.values[l]);
            keys.push_back(k_new);
            values.push_back(v_new);
            let n = keys.len();
            let rel = &self.rel[l];

            let mut attn = Array1::zeros(cfg.d_model);
            let mut scores = vec![0.0; n];
            for head in 0..heads {
                let r = head * hd..(head + 1) * hd;
                let qh = q.slice(s![r.clone()]);
                let qc: Array1<f64> = &qh + &layer.content_bias.slice(s![0, r.clone()]);
                let qp: Array1<f64> = &qh + &layer.position_bias.slice(s![0, r.clone()]);
                for (j, score) in scores.iter_mut().enumerate() {
                    let content = qc.dot(&keys[j].slice(s![r.clone()]));
                    let by_distance = qp.dot(&rel.slice(s![n - 1 - j, r.clone()]));
                    *score = (content + by_distance) * scale;
                }
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for s in scores.iter_mut() {
                    *s = (*s - max).exp();
                    total += *s;
                }
                let mut out = attn.slice_mut(s![r.clone()]);
                for (j, &w) in scores.iter().enumerate() {
                    out.scaled_add(w / total, &values[j].slice(s![r.clone()]));
                }
            }
            if keys.len() >= cfg.mem_len + cfg.seq_len {
                keys.pop_front();
                values.pop_front();
            }

            let attn = attn.insert_axis(Axis(0));
            let h2 = &h + &(attn.dot(&layer.w_out) + &layer.b_out);
            let (normed2, _) = layer_norm(h2.view(), &layer.ln2_gain, &layer.ln2_bias);
            let act = (normed2.dot(&layer.w_ff1) + &layer.b_ff1).mapv(gelu);
            h = h2 + (act.dot(&layer.w_ff2) + &layer.b_ff2);
        }
        let (out, _) = layer_norm(h.view(), &p.final_gain, &p.final_bias);
        Ok((out.dot(&p.w_logits) + &p.b_logits).row(0).to_owned())
    }
}

/// Log-softmax of one logit row.
pub fn log_softmax(logits: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    logits.mapv(|v| v - lse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Mode;

    fn tiny() -> Model {
        Model::new(ModelConfig::tiny(Mode::NoGrooving), 5).unwrap()
    }

    #[test]
    fn shapes() {
        let m = tiny();
        let (logits, mem) = m.forward(&[0, 1, 2, 3, 4], &Memory::empty(&m.config)).unwrap();
        assert_eq!(logits.dim(), (5, m.config.vocab_size));
        assert_eq!(mem.len(), 5);
        let (_, mem) = m.forward(&[5; 16], &mem).unwrap();
        assert_eq!(mem.len(), 16);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = tiny();
        let empty = Memory::empty(&m.config);
        assert!(m.forward(&[], &empty).is_err());
        assert!(m.forward(&[0; 17], &empty).is_err());
        assert!(m.forward(&[9999], &empty).is_err());
        let big = Memory {
            layers: vec![Array2::zeros((17, 16)); 2],
        };
        assert!(m.forward(&[0], &big).is_err());
        let wrong_width = Memory {
            layers: vec![Array2::zeros((2, 8)); 2],
        };
        assert!(m.forward(&[0], &wrong_width).is_err());
    }

    #[test]
    fn stream_matches_full_pass() {
        let m = tiny();
        let tokens: Vec<u32> = (0..12).map(|i| (i * 13 % 190) as u32).collect();
        let full = m.full_context_logits(&tokens).unwrap();
        let mut stream = m.stream();
        for (i, &t) in tokens.iter().enumerate() {
            let row = stream.push(t).unwrap();
            for (a, b) in row.iter().zip(full.row(i)) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn causal() {
        let m = tiny();
        let a: Vec<u32> = vec![1, 2, 3, 4, 5, 6, 7, 8];
        let mut b = a.clone();
        b[5] = 100;
        b[7] = 3;
        let la = m.full_context_logits(&a).unwrap();
        let lb = m.full_context_logits(&b).unwrap();
        for i in 0..5 {
            for (x, y) in la.row(i).iter().zip(lb.row(i)) {
                assert_eq!(x, y);
            }
        }
        assert_ne!(la.row(5), lb.row(5));
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let logits = Array2::zeros((2, 4));
        let (loss, grad) = cross_entropy(&logits, &[1, 3]);
        assert!((loss - 2.0 * 4f64.ln()).abs() < 1e-12);
        assert!((grad[[0, 1]] + 0.75).abs() < 1e-12);
        assert!((grad.sum()).abs() < 1e-12);
    }
}
