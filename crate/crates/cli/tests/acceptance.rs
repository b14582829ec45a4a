//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! `TABWEAVE_E2E_SECONDS` sets the per-model training time of the
//! end-to-end run (default 60; the full-length run uses 1800).

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tabweave::codec::{
    decode, decode_ids, decode_with_mode, encode, Category, DiagnosticKind, EncodeMode, Mode, Token, Vocabulary,
};
use tabweave::corpus::{synth_corpus, token_sequences, SynthStyle};
use tabweave::fretboard::{fret_for, pitch_for, valid_strings};
use tabweave::metrics::{hard_accuracy, soft_distance, HardAggregate, SoftAggregate};
use tabweave::model::{
    generate, loss_and_gradient, mean_loss, Checkpoint, Memory, Model, ModelConfig, SamplingParams, StopReason,
    TrainParams, Trainer,
};
use tabweave::quantizer::{fit_traced, lloyd, squared_distance, Codebook};
use tabweave::groove::{GrooveKind, GrooveVector};
use tabweave::tab::{Bar, NoteEvent, Tab, Technique, TechniqueEvent};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

// ---------------------------------------------------------------- 1

fn vocabulary_audit() -> Outcome {
    let expected = [
        (Category::Bar, 1),
        (Category::Grooving, 32),
        (Category::Position, 16),
        (Category::NoteVelocity, 32),
        (Category::NoteOn, 45),
        (Category::NoteDuration, 64),
        (Category::String, 6),
        (Category::Fret, 21),
        (Category::Technique, 5),
    ];
    let groove = Vocabulary::new(Mode::GrooveAware);
    let plain = Vocabulary::new(Mode::NoGrooving);
    for (category, n) in expected {
        let got = groove.category_ids(category).len();
        ensure!(got == n, "{category:?}: {got} ids, expected {n}");
        if category != Category::Grooving {
            ensure!(plain.category_ids(category).len() == n, "{category:?} differs without grooving");
        }
    }
    ensure!(plain.category_ids(Category::Grooving).is_empty(), "no-grooving vocabulary has GROOVING ids");
    ensure!(groove.len() == 222, "groove-aware size {}", groove.len());
    ensure!(plain.len() == 190, "no-grooving size {}", plain.len());
    for vocab in [&groove, &plain] {
        for id in 0..vocab.len() as u32 {
            let token = vocab.token(id).ok_or(format!("id {id} has no token"))?;
            ensure!(vocab.id(token) == Some(id), "id {id} does not round-trip");
            ensure!(token.to_string().parse::<Token>().ok() == Some(token), "{token} does not parse back");
        }
    }
    Ok("222 groove-aware / 190 no-grooving".into())
}

// ---------------------------------------------------------------- 2

fn bar_strategy() -> impl Strategy<Value = Bar> {
    let note = (0u8..16, 1u8..=6, 0u8..=20, 1u8..=64, 1u8..=32);
    let technique = (0u8..16, 0u8..5);
    (
        prop::collection::vec(note, 0..24),
        prop::collection::vec(technique, 0..4),
    )
        .prop_map(|(notes, techniques)| {
            let mut bar = Bar::new();
            for (position, string, fret, duration, velocity) in notes {
                if !bar.notes.iter().any(|n| n.position == position && n.string == string) {
                    bar.notes
                        .push(NoteEvent::fingered(position, string, fret, duration, velocity).unwrap());
                }
            }
            for (position, kind) in techniques {
                if bar.technique_at(position).is_none() {
                    bar.techniques.push(TechniqueEvent {
                        position,
                        kind: Technique::from_index(kind).unwrap(),
                    });
                }
            }
            bar.normalize();
            bar
        })
}

fn tab_strategy() -> impl Strategy<Value = Tab> {
    prop::collection::vec(bar_strategy(), 0..6).prop_map(Tab::new)
}

fn reference_codebook() -> Codebook {
    let tabs = synth_corpus(30, 8, 11, &SynthStyle::default()).unwrap();
    tabweave::corpus::fit_codebook(&tabs, GrooveKind::Hard, 32, 3).unwrap()
}

fn codec_roundtrip() -> Outcome {
    let codebook = reference_codebook();
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&tab_strategy(), |tab| {
            for mode in [EncodeMode::NoGrooving, EncodeMode::GrooveAware(&codebook)] {
                let tokens = encode(&tab, mode).unwrap();
                let decoded = decode_with_mode(&tokens, mode.mode());
                prop_assert!(decoded.diagnostics.is_empty(), "{:?}", decoded.diagnostics);
                prop_assert_eq!(&decoded.tab, &tab);
                prop_assert_eq!(&decode(&tokens).tab, &tab);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let vocabs = [Vocabulary::new(Mode::GrooveAware), Vocabulary::new(Mode::NoGrooving)];
    for i in 0..10_000 {
        let vocab = &vocabs[i % 2];
        let len = rng.gen_range(0..300);
        let ids: Vec<u32> = (0..len).map(|_| rng.gen_range(0..vocab.len() as u32 + 8)).collect();
        let decoded = decode_ids(&ids, vocab);
        ensure!(
            decoded.tab.validate().iter().all(|v| v.rule.contains("fingering")),
            "decoded tab breaks structure: {:?}",
            decoded.tab.validate()
        );
    }
    Ok("1000 tabs x 2 modes exact; 10000 fuzzed id streams".into())
}

// ---------------------------------------------------------------- 3

fn fretboard_oracle() -> Outcome {
    const OPEN: [u8; 6] = [64, 59, 55, 50, 45, 40];
    let mut pairs: BTreeMap<u8, Vec<(u8, u8)>> = BTreeMap::new();
    for (i, open) in OPEN.iter().enumerate() {
        for fret in 0..=20u8 {
            pairs.entry(open + fret).or_default().push((i as u8 + 1, fret));
        }
    }
    let pitches: Vec<u8> = pairs.keys().copied().collect();
    ensure!(pitches == (40..=84).collect::<Vec<_>>(), "pitch set is not 40..=84");
    for string in 1..=6u8 {
        for fret in 0..=20u8 {
            ensure!(
                pitch_for(string, fret).ok() == Some(OPEN[string as usize - 1] + fret),
                "pitch_for({string},{fret})"
            );
        }
        ensure!(pitch_for(string, 21).is_err(), "fret 21 accepted");
    }
    for pitch in 40..=84u8 {
        let expected = &pairs[&pitch];
        for string in 1..=6u8 {
            let want = expected.iter().find(|(s, _)| *s == string).map(|&(_, f)| f);
            ensure!(fret_for(pitch, string).ok() == Some(want), "fret_for({pitch},{string})");
        }
        let set: Vec<u8> = valid_strings(pitch).map_err(|e| e.to_string())?.iter().collect();
        let want: Vec<u8> = expected.iter().map(|&(s, _)| s).collect();
        ensure!(set == want, "valid_strings({pitch}) = {set:?}, expected {want:?}");
    }
    ensure!(valid_strings(39).is_err() && valid_strings(85).is_err(), "out-of-range pitch accepted");
    Ok("45 pitches x 6 strings agree".into())
}

// ---------------------------------------------------------------- 4

fn brute_hard(x: &[Vec<f64>], y: &[Vec<f64>]) -> (f64, f64) {
    let mut scores = Vec::new();
    for xi in x {
        let mut hits = 0.0;
        for yj in y {
            for k in 0..xi.len() {
                if xi[k] == yj[k] {
                    hits += 1.0;
                }
            }
        }
        scores.push(hits / (y.len() * xi.len()) as f64);
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let max = scores.iter().cloned().fold(f64::MIN, f64::max);
    (mean, max)
}

fn brute_soft(x: &[Vec<f64>], y: &[Vec<f64>]) -> (f64, f64) {
    let mut scores = Vec::new();
    for xi in x {
        let mut total = 0.0;
        for yj in y {
            let mut d = 0.0;
            for k in 0..xi.len() {
                d += (xi[k] - yj[k]).powi(2);
            }
            total += d;
        }
        scores.push(total / y.len() as f64);
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let min = scores.iter().cloned().fold(f64::MAX, f64::min);
    (mean, min)
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let e = |a: f64, b: f64| (a - b).abs();
    for _ in 0..500 {
        let binary = |rng: &mut ChaCha8Rng| (0..16).map(|_| f64::from(rng.gen_range(0..2u8))).collect::<Vec<f64>>();
        let soft = |rng: &mut ChaCha8Rng| (0..16).map(|_| rng.gen::<f64>()).collect::<Vec<f64>>();
        let x: Vec<_> = (0..4).map(|_| binary(&mut rng)).collect();
        let y: Vec<_> = (0..16).map(|_| binary(&mut rng)).collect();
        let (mean, max) = brute_hard(&x, &y);
        let got_mean = hard_accuracy(&x, &y, HardAggregate::Mean).map_err(|e| e.to_string())?;
        let got_max = hard_accuracy(&x, &y, HardAggregate::Max).map_err(|e| e.to_string())?;
        ensure!(e(mean, got_mean) < 1e-12 && e(max, got_max) < 1e-12, "hard accuracy disagrees");
        let xs: Vec<_> = (0..4).map(|_| soft(&mut rng)).collect();
        let ys: Vec<_> = (0..16).map(|_| soft(&mut rng)).collect();
        let (mean, min) = brute_soft(&xs, &ys);
        let got_mean = soft_distance(&xs, &ys, SoftAggregate::Mean).map_err(|e| e.to_string())?;
        let got_min = soft_distance(&xs, &ys, SoftAggregate::Min).map_err(|e| e.to_string())?;
        ensure!(e(mean, got_mean) < 1e-12 && e(min, got_min) < 1e-12, "soft distance disagrees");
    }
    let ones = vec![vec![1.0; 16]];
    let zeros = vec![vec![0.0; 16]];
    let mut one_off = vec![1.0; 16];
    one_off[3] = 0.0;
    ensure!(hard_accuracy(&ones, &ones, HardAggregate::Mean).unwrap() == 1.0, "identical != 1.0");
    ensure!(
        hard_accuracy(&ones, &[one_off], HardAggregate::Mean).unwrap() == 0.9375,
        "one flipped bit != 0.9375"
    );
    ensure!(soft_distance(&ones, &zeros, SoftAggregate::Mean).unwrap() == 16.0, "ones vs zeros != 16");
    Ok("500 random sets match brute force; 1.0 / 0.9375 / 16.0 exact".into())
}

// ---------------------------------------------------------------- 5

fn kmeans_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..100 {
        let n = rng.gen_range(10..80);
        let dim = [16, 28][trial % 2];
        let k = rng.gen_range(1..=8.min(n));
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| f64::from(rng.gen_range(0..4u8)) / 3.0).collect())
            .collect();
        let refs: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
        let seed = rng.gen();
        let (centroids, trace) = lloyd(&refs, k, seed).map_err(|e| e.to_string())?;
        for w in trace.costs.windows(2) {
            ensure!(w[1] <= w[0], "trial {trial}: cost rose {} -> {}", w[0], w[1]);
        }
        let codebook = Codebook {
            kind: if dim == 16 { GrooveKind::Soft } else { GrooveKind::MultiSoft },
            k,
            seed,
            centroids: centroids.clone(),
        };
        for p in &points {
            let got = codebook.assign(p).map_err(|e| e.to_string())?;
            let mut best = 0;
            for c in 1..k {
                if squared_distance(p, &centroids[c]) < squared_distance(p, &centroids[best]) {
                    best = c;
                }
            }
            ensure!(got == best, "trial {trial}: assign picked {got}, argmin is {best}");
        }
        let (again, _) = lloyd(&refs, k, seed).map_err(|e| e.to_string())?;
        let bits = |c: &Vec<Vec<f64>>| c.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>();
        ensure!(bits(&again) == bits(&centroids), "trial {trial}: refit differs");
    }

    let mut distinct: Vec<Vec<f64>> = (0..6)
        .map(|i| (0..16).map(|j| f64::from(u8::from((i >> (j % 3)) & 1 == 1))).collect())
        .collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    let mut vectors = Vec::new();
    for (i, v) in distinct.iter().enumerate() {
        for _ in 0..=i {
            vectors.push(GrooveVector {
                kind: GrooveKind::Hard,
                values: v.clone(),
            });
        }
    }
    let (codebook, trace) = fit_traced(&vectors, distinct.len(), 1).map_err(|e| e.to_string())?;
    ensure!(trace.final_cost() == 0.0, "k = #distinct gives cost {}", trace.final_cost());
    let reloaded = Codebook::from_json(&codebook.to_json()).map_err(|e| e.to_string())?;
    ensure!(reloaded == codebook, "JSON reload is not bit-exact");
    Ok("100 datasets monotone, argmin, reproducible; zero-cost case holds".into())
}

// ---------------------------------------------------------------- 6

fn segment_recurrence() -> Outcome {
    let config = ModelConfig::desk(Mode::GrooveAware);
    let model = Model::new(config.clone(), 6).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let tokens: Vec<u32> = (0..256).map(|_| rng.gen_range(0..config.vocab_size as u32)).collect();
    let (_, memory) = model.forward(&tokens[..128], &Memory::empty(&config)).map_err(|e| e.to_string())?;
    let (second, _) = model.forward(&tokens[128..], &memory).map_err(|e| e.to_string())?;
    let full = model.full_context_logits(&tokens).map_err(|e| e.to_string())?;
    let last_seg = second.row(127);
    let last_full = full.row(255);
    let diff = last_seg
        .iter()
        .zip(last_full.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure!(diff < 1e-4, "final logits differ by {diff:e}");
    Ok(format!("max |diff| = {diff:.2e}"))
}

// ---------------------------------------------------------------- 7

fn gradient_check() -> Outcome {
    let config = ModelConfig::tiny(Mode::GrooveAware);
    let mut model = Model::new(config.clone(), 7).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let window: Vec<u32> = (0..=config.seq_len).map(|_| rng.gen_range(0..config.vocab_size as u32)).collect();
    let (_, grads) = loss_and_gradient(&model, &window).map_err(|e| e.to_string())?;
    let analytic: Vec<(String, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.iter().copied().collect()))
        .collect();

    let h = 1e-5;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut attempts = 0;
    while checked < 120 {
        attempts += 1;
        ensure!(attempts < 2000, "too few parameters with measurable gradient");
        let t = rng.gen_range(0..analytic.len());
        let i = rng.gen_range(0..analytic[t].1.len());
        let mut loss_at = |delta: f64| {
            let mut slots = model.params.tensors_mut();
            let slot = slots[t].1.as_slice_mut().expect("contiguous");
            let original = slot[i];
            slot[i] = original + delta;
            let loss = loss_and_gradient(&model, &window).unwrap().0;
            let mut slots = model.params.tensors_mut();
            slots[t].1.as_slice_mut().expect("contiguous")[i] = original;
            loss
        };
        let numeric = (loss_at(h) - loss_at(-h)) / (2.0 * h);
        let a = analytic[t].1[i];
        let scale = a.abs().max(numeric.abs());
        if scale < 1e-6 {
            continue;
        }
        let rel = (a - numeric).abs() / scale;
        worst = worst.max(rel);
        ensure!(rel < 1e-3, "{}[{i}]: analytic {a:e}, numeric {numeric:e}, rel {rel:e}", analytic[t].0);
        checked += 1;
    }
    Ok(format!("{checked} parameters, worst relative error {worst:.2e}"))
}

// ---------------------------------------------------------------- 8, 9

struct Overfit {
    model: Model,
    sequence: Vec<u32>,
    steps: usize,
    loss: f64,
}

fn overfit() -> &'static Result<Overfit, String> {
    static CELL: OnceLock<Result<Overfit, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        let tabs = synth_corpus(1, 4, 8, &SynthStyle::default()).map_err(|e| e.to_string())?;
        let ids = token_sequences(&tabs, EncodeMode::NoGrooving).map_err(|e| e.to_string())?;
        let sequence = ids[0][..64].to_vec();
        let model = Model::new(ModelConfig::desk(Mode::NoGrooving), 8).map_err(|e| e.to_string())?;
        let mut trainer = Trainer::new(
            model,
            TrainParams {
                lr: 1e-3,
                warmup_steps: 20,
                batch_size: 1,
                steps: 2000,
                segments_per_sample: 1,
                ..TrainParams::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let corpus = vec![sequence.clone()];
        let mut loss = f64::INFINITY;
        while trainer.steps_taken() < 2000 {
            for _ in 0..25 {
                trainer.step(&corpus).map_err(|e| e.to_string())?;
            }
            loss = mean_loss(&trainer.model, &corpus).map_err(|e| e.to_string())?;
            if loss < 0.05 {
                break;
            }
        }
        let steps = trainer.steps_taken();
        Ok(Overfit {
            model: trainer.into_model(),
            sequence,
            steps,
            loss,
        })
    })
}

fn learning_sanity() -> Outcome {
    let fit = overfit().as_ref().map_err(Clone::clone)?;
    ensure!(fit.loss < 0.05, "64-token sequence at {:.4} nats/token after {} steps", fit.loss, fit.steps);

    let config = ModelConfig {
        dropout: 0.0,
        ..ModelConfig::desk(Mode::GrooveAware)
    };
    let vocab = config.vocab_size as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut random_corpus = |n: usize| -> Vec<Vec<u32>> {
        (0..n).map(|_| (0..257).map(|_| rng.gen_range(0..vocab)).collect()).collect()
    };
    let train = random_corpus(64);
    let held_out = random_corpus(8);
    let model = Model::new(config, 9).map_err(|e| e.to_string())?;
    let mut trainer = Trainer::new(
        model,
        TrainParams {
            lr: 1e-3,
            warmup_steps: 10,
            batch_size: 4,
            steps: 80,
            segments_per_sample: 1,
            ..TrainParams::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let report = trainer.run(&train, |_, _| {}).map_err(|e| e.to_string())?;
    let uniform = f64::from(vocab).ln();
    let held = mean_loss(&trainer.model, &held_out).map_err(|e| e.to_string())?;
    let tail = &report.losses[report.losses.len() - 20..];
    let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;
    for (name, value) in [("held-out", held), ("training tail", tail_mean)] {
        ensure!(
            (value - uniform).abs() / uniform < 0.05,
            "{name} loss {value:.4} vs ln V {uniform:.4}"
        );
    }
    Ok(format!(
        "overfit {:.4} nats/token in {} steps; random corpus {held:.4} vs ln V {uniform:.4}",
        fit.loss, fit.steps
    ))
}

fn masked_generation() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("tiny.ckpt");
    let codebook = reference_codebook();
    let mut model = Model::new(ModelConfig::tiny(Mode::GrooveAware), 10).map_err(|e| e.to_string())?;
    Checkpoint::from_model(&mut model, Some(codebook.clone()), 0)
        .save(&path)
        .map_err(|e| e.to_string())?;
    let ckpt = Checkpoint::load(&path).map_err(|e| e.to_string())?;
    let model = ckpt.model().map_err(|e| e.to_string())?;
    let prompts = synth_corpus(100, 4, 10, &SynthStyle::default()).map_err(|e| e.to_string())?;
    for (i, prompt) in prompts.iter().enumerate() {
        let tokens = encode(prompt, EncodeMode::GrooveAware(&codebook)).map_err(|e| e.to_string())?;
        let sampling = SamplingParams {
            grammar_masked: true,
            seed: i as u64,
            ..SamplingParams::default()
        };
        let out = generate(&model, &tokens, 16, &sampling).map_err(|e| e.to_string())?;
        ensure!(out.stop == StopReason::Bars, "sample {i} ran out of budget");
        let mut stream = tokens.clone();
        stream.extend(&out.tokens);
        let decoded = decode_with_mode(&stream, Mode::GrooveAware);
        ensure!(decoded.diagnostics.is_empty(), "sample {i}: {:?}", decoded.diagnostics);
        ensure!(decoded.tab.len() == 4 + 16, "sample {i} has {} bars", decoded.tab.len());
        for kind in [DiagnosticKind::Grammar, DiagnosticKind::Fingering] {
            ensure!(decoded.count(kind) == 0, "sample {i}: {kind:?}");
        }
    }

    let fit = overfit().as_ref().map_err(Clone::clone)?;
    let prefix = 16;
    let vocab = Vocabulary::new(Mode::NoGrooving);
    let prompt: Vec<Token> = fit.sequence[..prefix].iter().map(|&id| vocab.token(id).unwrap()).collect();
    let greedy = SamplingParams {
        max_tokens: fit.sequence.len() - prefix,
        ..SamplingParams::greedy()
    };
    let out = generate(&fit.model, &prompt, 1000, &greedy).map_err(|e| e.to_string())?;
    let ids = vocab.encode_ids(&out.tokens).map_err(|e| e.to_string())?;
    ensure!(ids == fit.sequence[prefix..], "greedy output diverges from the memorized suffix");
    Ok(format!("100 masked samples clean; {}-token suffix reproduced", ids.len()))
}

// ---------------------------------------------------------------- 10

fn parameter_count() -> Outcome {
    let config = ModelConfig::large(Mode::GrooveAware);
    let model = Model::new(config.clone(), 0).map_err(|e| e.to_string())?;
    let count = model.params.count();
    ensure!(count == config.parameter_count(), "instantiated {count}, formula {}", config.parameter_count());
    let ratio = count as f64 / 41e6;
    ensure!((0.9..=1.1).contains(&ratio), "{count} parameters is {ratio:.3} of 41M");
    Ok(format!("{count} parameters ({:.1}% of 41M)", ratio * 100.0))
}

// ---------------------------------------------------------------- 11

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tabweave"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "tabweave {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn end_to_end() -> Outcome {
    let seconds = std::env::var("TABWEAVE_E2E_SECONDS").unwrap_or_else(|_| "60".into());
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let corpus = p("corpus");
    let split = format!("{corpus}/split.txt");
    let fraction = (30.0f64 / 333.0).to_string();
    run_cli(&["--quiet", "--seed", "11", "synth", "--n", "200", "--bars", "20", "--validation-fraction", &fraction, "--out", &corpus])?;
    for (mode, out) in [("plain", p("plain.ckpt")), ("groove", p("groove.ckpt"))] {
        run_cli(&[
            "--quiet", "--seed", "11", "train", "--corpus", &corpus, "--split", &split, "--config", "desk",
            "--mode", mode, "--groove", "hard", "--steps", "100000", "--lr", "5e-4", "--warmup", "20",
            "--max-seconds", &seconds, "--out", &out,
        ])?;
    }
    let report = p("report.txt");
    let table = run_cli(&[
        "--quiet", "--seed", "11", "eval", "--ckpt", &format!("no_grooving={}", p("plain.ckpt")), "--ckpt",
        &format!("hard_grooving={}", p("groove.ckpt")), "--validation", &corpus, "--split", &split, "--N", "4",
        "--M", "16", "--grammar", "--report", &report,
    ])?;
    let kv: BTreeMap<String, f64> = std::fs::read_to_string(Path::new(&report))
        .map_err(|e| e.to_string())?
        .lines()
        .filter_map(|l| l.split_once('='))
        .filter_map(|(k, v)| v.parse().ok().map(|v| (k.to_string(), v)))
        .collect();
    let get = |k: &str| kv.get(k).copied().ok_or(format!("report lacks {k}"));
    for row in ["no_grooving", "hard_grooving", "real", "random"] {
        ensure!(table.lines().any(|l| l.starts_with(row)), "table lacks a {row} row:\n{table}");
    }
    for metric in ["hard_accuracy_mean", "hard_accuracy_max"] {
        let (real, random) = (get(&format!("real.{metric}"))?, get(&format!("random.{metric}"))?);
        ensure!(real > random, "{metric}: real {real} not above random {random}");
    }
    for metric in ["soft_distance_mean", "soft_distance_min"] {
        let (real, random) = (get(&format!("real.{metric}"))?, get(&format!("random.{metric}"))?);
        ensure!(real < random, "{metric}: real {real} not below random {random}");
    }
    eprintln!("{table}");
    Ok(format!(
        "real {:.1}% vs random {:.1}% hard accuracy ({seconds}s training per model)",
        get("real.hard_accuracy_mean")? * 100.0,
        get("random.hard_accuracy_mean")? * 100.0
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("vocabulary audit", vocabulary_audit),
        ("codec roundtrip and fuzz", codec_roundtrip),
        ("fretboard oracle", fretboard_oracle),
        ("hard accuracy / soft distance oracle", metric_oracle),
        ("k-means contract", kmeans_contract),
        ("segment-recurrence equivalence", segment_recurrence),
        ("gradient check", gradient_check),
        ("learning sanity", learning_sanity),
        ("grammar-masked generation", masked_generation),
        ("parameter count", parameter_count),
        ("end-to-end desk experiment", end_to_end),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let number = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| f == &number.to_string() || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            Err(panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {number:>2} PASS  {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {number:>2} FAIL  {name} ({secs:.1}s): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
