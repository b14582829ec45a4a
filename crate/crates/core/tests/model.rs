use tabweave::codec::{encode, EncodeMode, Mode};
use tabweave::corpus::{synth_corpus, SynthStyle};
use tabweave::model::{generate, Checkpoint, Memory, Model, ModelConfig, SamplingParams};

fn tokens(n: usize, vocab: usize) -> Vec<u32> {
    (0..n).map(|i| ((i * 37 + 11) % vocab) as u32).collect()
}

#[test]
fn stream_matches_segmented_forward() {
    let config = ModelConfig::tiny(Mode::NoGrooving);
    let model = Model::new(config.clone(), 21).unwrap();
    let ids = tokens(2 * config.seq_len, config.vocab_size);
    let (first, memory) = model.forward(&ids[..config.seq_len], &Memory::empty(&config)).unwrap();
    let (second, _) = model.forward(&ids[config.seq_len..], &memory).unwrap();
    let mut stream = model.stream();
    for (i, &id) in ids.iter().enumerate() {
        let logits = stream.push(id).unwrap();
        let reference = if i < config.seq_len {
            first.row(i).to_owned()
        } else {
            second.row(i - config.seq_len).to_owned()
        };
        let diff = (&logits - &reference).iter().fold(0.0f64, |m, d| m.max(d.abs()));
        assert!(diff < 1e-9, "position {i}: {diff}");
    }
}

#[test]
fn reloaded_checkpoint_generates_identically() {
    let mut model = Model::new(ModelConfig::tiny(Mode::NoGrooving), 22).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    Checkpoint::from_model(&mut model, None, 3).save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded.step, 3);
    let reloaded = loaded.model().unwrap();
    let tab = &synth_corpus(1, 2, 0, &SynthStyle::default()).unwrap()[0];
    let prompt = encode(tab, EncodeMode::NoGrooving).unwrap();
    let sampling = SamplingParams {
        seed: 5,
        grammar_masked: true,
        ..SamplingParams::default()
    };
    assert_eq!(
        generate(&model, &prompt, 2, &sampling).unwrap(),
        generate(&reloaded, &prompt, 2, &sampling).unwrap()
    );
}

#[test]
fn presets_report_their_size() {
    for name in ["tiny", "desk"] {
        let config = ModelConfig::preset(name, Mode::GrooveAware).unwrap();
        let model = Model::new(config.clone(), 0).unwrap();
        assert_eq!(model.params.count(), config.parameter_count());
    }
    assert!(ModelConfig::preset("huge", Mode::GrooveAware).is_err());
}
