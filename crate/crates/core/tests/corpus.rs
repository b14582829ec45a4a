use tabweave::codec::{decode, encode, EncodeMode};
use tabweave::corpus::{
    ingest, parse_tab_json, run_continuation_experiment, synth_corpus, to_tab_json, ContinuationModel, EchoModel,
    ExperimentParams, SplitManifest, SynthStyle, RANDOM, REAL,
};
use tabweave::tab::Tab;

#[test]
fn ingest_encode_decode_is_identity() {
    let text = r#"{
      "title": "loose timing",
      "bars": [
        {"notes": [
          {"pos": 0.4, "pitch": 45, "dur_32nds": 7.6, "vel": 40, "string": 5, "fret": 0},
          {"pos": 3.5, "pitch": 64, "dur_32nds": 2, "string": 1, "fret": 0, "technique": "press"},
          {"pos": 15.9, "pitch": 67, "dur_32nds": 0.2, "string": 1, "fret": 3}
        ]}
      ]
    }"#;
    let (tab, report) = parse_tab_json(text, true, "inline").unwrap();
    assert_eq!(report.quantization.len(), 6);
    let tokens = encode(&tab, EncodeMode::NoGrooving).unwrap();
    let mut back = decode(&tokens).tab;
    back.metadata = tab.metadata.clone();
    assert_eq!(back, tab);
    let notes = &tab.bars[0].notes;
    assert_eq!((notes[0].position, notes[0].duration, notes[0].velocity), (0, 8, 32));
    assert_eq!((notes[1].position, notes[2].position, notes[2].duration), (3, 15, 1));
}

#[test]
fn duration_clamp_is_reported() {
    let text = r#"{"bars": [{"notes": [{"pos": 0, "pitch": 40, "dur_32nds": 70, "vel": 20, "string": 6, "fret": 0}]}]}"#;
    let (tab, report) = parse_tab_json(text, true, "inline").unwrap();
    assert_eq!(tab.bars[0].notes[0].duration, 64);
    assert_eq!(report.quantization.len(), 1);
    assert_eq!(report.quantization[0].field, "dur_32nds");
}

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    for (i, t) in synth_corpus(5, 6, 9, &SynthStyle::default()).unwrap().iter().enumerate() {
        let path = dir.path().join(format!("{i}.json"));
        std::fs::write(&path, to_tab_json(t)).unwrap();
        let (back, report) = ingest(&path, true).unwrap();
        assert_eq!(&back, t);
        assert!(report.quantization.is_empty());
    }
}

#[test]
fn synthetic_corpus_contract() {
    let style = SynthStyle::default();
    let a = synth_corpus(10, 16, 42, &style).unwrap();
    assert_eq!(a, synth_corpus(10, 16, 42, &style).unwrap());
    assert!(a.iter().all(|t| t.validate().is_empty()));
    let tabs = synth_corpus(100, 16, 42, &style).unwrap();
    let tokens: usize = tabs.iter().map(|t| encode(t, EncodeMode::NoGrooving).unwrap().len()).sum();
    let per_bar = tokens as f64 / (100.0 * 16.0);
    assert!((60.0..=70.0).contains(&per_bar), "{per_bar} events per bar");
    for t in &tabs {
        for bar in &t.bars {
            assert!(bar.notes.iter().all(|n| n.string <= 3 || n.string >= 5 || n.position == 0));
        }
    }
}

#[test]
fn split_is_a_reproducible_partition() {
    let ids: Vec<String> = (0..50).map(|i| format!("t{i}")).collect();
    let a = SplitManifest::new(&ids, 0.2, 4).unwrap();
    assert_eq!(a, SplitManifest::new(&ids, 0.2, 4).unwrap());
    let mut all: Vec<String> = a.train.iter().chain(&a.validation).cloned().collect();
    all.sort();
    let mut expected = ids.clone();
    expected.sort();
    assert_eq!(all, expected);
    assert_eq!(a.validation.len(), 10);
}

#[test]
fn experiment_baselines_order_on_synthetic_data() {
    let tabs = synth_corpus(24, 20, 5, &SynthStyle::default()).unwrap();
    let echo = EchoModel;
    let models: Vec<(String, &dyn ContinuationModel)> = vec![("echo".into(), &echo)];
    let report = run_continuation_experiment(&models, &tabs, ExperimentParams::default()).unwrap();
    let real = report.row(REAL).unwrap().groove.unwrap();
    let random = report.row(RANDOM).unwrap().groove.unwrap();
    assert!(real.hard_accuracy_mean > random.hard_accuracy_mean);
    assert!(real.soft_distance_mean < random.soft_distance_mean);
    assert_eq!(report.row(REAL).unwrap().evaluated, 24);
    let names: Vec<&str> = report.rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["echo", REAL, RANDOM]);
    assert!(report.table().lines().count() >= 6);
    assert_eq!(
        report,
        run_continuation_experiment(&models, &tabs, ExperimentParams::default()).unwrap()
    );
}

#[test]
fn random_baseline_needs_another_tab() {
    let tabs: Vec<Tab> = synth_corpus(1, 20, 1, &SynthStyle::default()).unwrap();
    let report = run_continuation_experiment(&[], &tabs, ExperimentParams::default()).unwrap();
    assert!(report.row(RANDOM).unwrap().groove.is_none());
    assert!(report.warnings.iter().any(|w| w.contains("random baseline")));
}
