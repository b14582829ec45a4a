//! Prompt-continuation experiment: each validation tab's first bars are
//! given to every model, and the generated bars are scored against the
//! prompt next to two reference continuations.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::codec::{decode, encode, Diagnostic, EncodeMode, Mode, Token};
use crate::metrics::{
    continuation_eval, format_groove_table, format_kv, string_association, string_association_tokens,
    GrooveCoherenceReport, StringAssociationReport,
};
use crate::model::{generate, Checkpoint, Model, SamplingParams};
use crate::quantizer::Codebook;
use crate::tab::Tab;
use crate::{Error, Result};

pub const REAL: &str = "real";
pub const RANDOM: &str = "random";

/// Generated material following a prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct Continuation {
    /// Tokens emitted after the prompt. They may first extend the prompt's
    /// last bar before opening new ones.
    pub tokens: Vec<Token>,
    /// The new bars only.
    pub tab: Tab,
    /// Decoder diagnostics over prompt plus continuation.
    pub diagnostics: Vec<Diagnostic>,
}

/// Anything that can continue a prompt by a number of bars.
pub trait ContinuationModel: Sync {
    fn continue_prompt(&self, prompt: &Tab, n_bars: usize, seed: u64) -> Result<Continuation>;
}

/// Decodes `prompt_tokens` followed by `generated` and keeps the bars past
/// the prompt.
pub fn split_continuation(prompt_tokens: &[Token], generated: Vec<Token>, prompt_bars: usize) -> Continuation {
    let mut all = prompt_tokens.to_vec();
    all.extend(&generated);
    let decoded = decode(&all);
    let extra = decoded.tab.len().saturating_sub(prompt_bars);
    let tab = Tab::new(decoded.tab.bars[decoded.tab.len() - extra..].to_vec());
    Continuation {
        tokens: generated,
        tab,
        diagnostics: decoded.diagnostics,
    }
}

/// A trained network plus whatever it needs to encode prompts.
pub struct CheckpointModel {
    pub model: Model,
    pub codebook: Option<Codebook>,
    pub sampling: SamplingParams,
}

impl CheckpointModel {
    pub fn new(checkpoint: &Checkpoint, sampling: SamplingParams) -> Result<CheckpointModel> {
        if checkpoint.config.mode == Mode::GrooveAware && checkpoint.codebook.is_none() {
            return Err(Error::Checkpoint("groove-aware checkpoint carries no codebook".into()));
        }
        Ok(CheckpointModel {
            model: checkpoint.model()?,
            codebook: checkpoint.codebook.clone(),
            sampling,
        })
    }
}

impl ContinuationModel for CheckpointModel {
    fn continue_prompt(&self, prompt: &Tab, n_bars: usize, seed: u64) -> Result<Continuation> {
        let mode = match (self.model.config.mode, &self.codebook) {
            (Mode::GrooveAware, Some(cb)) => EncodeMode::GrooveAware(cb),
            (Mode::GrooveAware, None) => return Err(Error::domain("groove-aware model needs a codebook")),
            (Mode::NoGrooving, _) => EncodeMode::NoGrooving,
        };
        let tokens = encode(prompt, mode)?;
        let sampling = SamplingParams {
            seed,
            ..self.sampling.clone()
        };
        let generated = generate(&self.model, &tokens, n_bars, &sampling)?.tokens;
        Ok(split_continuation(&tokens, generated, prompt.len()))
    }
}

/// Repeats the prompt until `n_bars` bars are produced.
pub struct EchoModel;

impl ContinuationModel for EchoModel {
    fn continue_prompt(&self, prompt: &Tab, n_bars: usize, _seed: u64) -> Result<Continuation> {
        if prompt.is_empty() {
            return Err(Error::domain("cannot echo an empty prompt"));
        }
        let bars = (0..n_bars).map(|i| prompt.bars[i % prompt.len()].clone()).collect();
        let tab = Tab::new(bars);
        Ok(Continuation {
            tokens: encode(&tab, EncodeMode::NoGrooving)?,
            tab,
            diagnostics: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExperimentParams {
    pub prompt_bars: usize,
    pub continuation_bars: usize,
    pub seed: u64,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        ExperimentParams {
            prompt_bars: 4,
            continuation_bars: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub name: String,
    /// `None` when no continuation could be scored.
    pub groove: Option<GrooveCoherenceReport>,
    pub strings: Option<StringAssociationReport>,
    /// Tabs that contributed a groove score.
    pub evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ExperimentRow>,
    pub warnings: Vec<String>,
}

impl ExperimentReport {
    pub fn row(&self, name: &str) -> Option<&ExperimentRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Human-readable table, one line per model or baseline.
    pub fn table(&self) -> String {
        let rows: Vec<(String, GrooveCoherenceReport)> = self
            .rows
            .iter()
            .filter_map(|r| r.groove.map(|g| (r.name.clone(), g)))
            .collect();
        let mut out = format_groove_table(&rows);
        for r in &self.rows {
            if let Some(acc) = r.strings.as_ref().and_then(StringAssociationReport::accuracy) {
                let _ = writeln!(out, "string association {}: {:.1}%", r.name, acc * 100.0);
            }
        }
        out
    }

    /// Machine-readable `key=value` lines.
    pub fn to_kv(&self) -> String {
        let mut pairs = Vec::new();
        for r in &self.rows {
            pairs.push((format!("{}.evaluated", r.name), r.evaluated.to_string()));
            if let Some(g) = &r.groove {
                pairs.extend(g.to_kv(&r.name));
            }
            if let Some(s) = &r.strings {
                pairs.extend(s.to_kv(&format!("{}.strings", r.name)));
            }
        }
        format_kv(&pairs)
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b);
    rng.gen()
}

struct Scored {
    groove: Option<GrooveCoherenceReport>,
    strings: Option<StringAssociationReport>,
    warning: Option<String>,
}

fn aggregate(name: &str, scored: Vec<Scored>, warnings: &mut Vec<String>) -> ExperimentRow {
    let mut grooves = Vec::new();
    let mut strings: Option<StringAssociationReport> = None;
    for s in scored {
        grooves.extend(s.groove);
        if let Some(r) = s.strings {
            match &mut strings {
                Some(acc) => acc.merge(&r),
                None => strings = Some(r),
            }
        }
        warnings.extend(s.warning);
    }
    ExperimentRow {
        name: name.to_string(),
        groove: GrooveCoherenceReport::average(&grooves),
        strings,
        evaluated: grooves.len(),
    }
}

fn title(tab: &Tab, index: usize) -> String {
    if tab.metadata.source_id.is_empty() {
        format!("validation tab {index}")
    } else {
        tab.metadata.source_id.clone()
    }
}

/// Runs every model and both baselines over `validation`. Rows come out in
/// the order of `models`, followed by the real and random baselines.
pub fn run_continuation_experiment(
    models: &[(String, &dyn ContinuationModel)],
    validation: &[Tab],
    params: ExperimentParams,
) -> Result<ExperimentReport> {
    let (n, m) = (params.prompt_bars, params.continuation_bars);
    if n == 0 || m == 0 {
        return Err(Error::domain("prompt and continuation lengths must be positive"));
    }
    if validation.is_empty() {
        return Err(Error::domain("validation set is empty"));
    }
    if let Some((i, tab)) = validation.iter().enumerate().find(|(_, t)| t.len() < n + 1) {
        return Err(Error::domain(format!(
            "{} has {} bars; every validation tab needs at least {}",
            title(tab, i),
            tab.len(),
            n + 1
        )));
    }
    for (name, _) in models {
        if name == REAL || name == RANDOM {
            return Err(Error::domain(format!("model name `{name}` is reserved for a baseline")));
        }
    }

    let mut report = ExperimentReport::default();
    let prompts: Vec<Tab> = validation.iter().map(|t| t.slice(0, n)).collect::<Result<_>>()?;

    for (mi, (name, model)) in models.iter().enumerate() {
        let scored: Vec<Scored> = prompts
            .par_iter()
            .enumerate()
            .map(|(ti, prompt)| {
                let seed = mix(params.seed, mi as u64 + 1, ti as u64);
                let continuation = match model.continue_prompt(prompt, m, seed) {
                    Ok(t) => t,
                    Err(e) => {
                        return Scored {
                            groove: None,
                            strings: None,
                            warning: Some(format!("{name}: {}: generation failed: {e}", title(&validation[ti], ti))),
                        }
                    }
                };
                let groove = continuation_eval(prompt, &continuation.tab).ok();
                let warning = groove
                    .is_none()
                    .then(|| format!("{name}: {}: continuation holds no bars", title(&validation[ti], ti)));
                Scored {
                    groove,
                    strings: string_association_tokens(&continuation.tokens).ok(),
                    warning,
                }
            })
            .collect();
        let row = aggregate(name, scored, &mut report.warnings);
        report.rows.push(row);
    }

    let real: Vec<Scored> = validation
        .par_iter()
        .zip(&prompts)
        .enumerate()
        .map(|(ti, (tab, prompt))| {
            if tab.len() < n + m {
                return Scored {
                    groove: None,
                    strings: None,
                    warning: Some(format!(
                        "{}: {} bars is shorter than {}; excluded from the real baseline",
                        title(tab, ti),
                        tab.len(),
                        n + m
                    )),
                };
            }
            let continuation = tab.slice(n, m).expect("length checked");
            Scored {
                groove: continuation_eval(prompt, &continuation).ok(),
                strings: string_association(&continuation).ok(),
                warning: None,
            }
        })
        .collect();
    let row = aggregate(REAL, real, &mut report.warnings);
    report.rows.push(row);

    let random: Vec<Scored> = prompts
        .par_iter()
        .enumerate()
        .map(|(ti, prompt)| {
            let others: Vec<usize> = (0..validation.len())
                .filter(|&j| j != ti && validation[j].len() >= m)
                .collect();
            if others.is_empty() {
                return Scored {
                    groove: None,
                    strings: None,
                    warning: Some(format!(
                        "{}: no other validation tab has {m} bars; excluded from the random baseline",
                        title(&validation[ti], ti)
                    )),
                };
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix(params.seed, 0, ti as u64));
            let other = &validation[others[rng.gen_range(0..others.len())]];
            let start = rng.gen_range(0..=other.len() - m);
            let continuation = other.slice(start, m).expect("window checked");
            Scored {
                groove: continuation_eval(prompt, &continuation).ok(),
                strings: string_association(&continuation).ok(),
                warning: None,
            }
        })
        .collect();
    let row = aggregate(RANDOM, random, &mut report.warnings);
    report.rows.push(row);

    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(report)
}
