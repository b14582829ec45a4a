use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use tabweave::codec::{self, parse_token_text, write_token_text, EncodeMode, Mode, TokenDocument};
use tabweave::corpus::{
    self, ingest, run_continuation_experiment, synth_corpus, to_tab_json, CheckpointModel, ContinuationModel,
    Entry, ExperimentParams, SplitManifest, SynthStyle,
};
use tabweave::groove::{GrooveKind, GrooveVector};
use tabweave::model::{Checkpoint, Model, ModelConfig, SamplingParams, TrainParams, Trainer};
use tabweave::quantizer::{self, Codebook, DEFAULT_K};
use tabweave::render::render_ascii;
use tabweave::tab::Tab;

#[derive(Parser, Debug)]
#[command(name = "tabweave", version, about = "Guitar-tab tokenization, groove analysis, and continuation models")]
struct Cli {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Reject unknown TabJSON fields instead of warning.
    #[arg(long, global = true)]
    strict: bool,
    /// Suppress the resolved-config banner and progress logs.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// TabJSON to token text.
    Encode(EncodeArgs),
    /// Token text back to TabJSON.
    Decode(DecodeArgs),
    /// Per-bar groove vectors as CSV.
    Groove(GrooveArgs),
    /// Fit a groove codebook with k-means.
    Cluster(ClusterArgs),
    /// Train a model on a directory of TabJSON files.
    Train(TrainArgs),
    /// Continue a prompt tab with a trained model.
    Generate(GenerateArgs),
    /// Continuation experiment with real and random baselines.
    Eval(EvalArgs),
    /// Write a synthetic corpus.
    Synth(SynthArgs),
    /// Print a tab as ASCII tablature.
    Render(RenderArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Plain,
    Groove,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Plain => Mode::NoGrooving,
            ModeArg::Groove => Mode::GrooveAware,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Hard,
    Soft,
    MultiHard,
    MultiSoft,
}

impl From<KindArg> for GrooveKind {
    fn from(k: KindArg) -> GrooveKind {
        match k {
            KindArg::Hard => GrooveKind::Hard,
            KindArg::Soft => GrooveKind::Soft,
            KindArg::MultiHard => GrooveKind::MultiHard,
            KindArg::MultiSoft => GrooveKind::MultiSoft,
        }
    }
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Plain)]
    mode: ModeArg,
    /// Groove kind expected in the codebook (groove mode only).
    #[arg(long, value_enum)]
    groove: Option<KindArg>,
    #[arg(long)]
    codebook: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write one diagnostic per line.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GrooveArgs {
    /// A TabJSON file or a directory of them.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = KindArg::Hard)]
    kind: KindArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Directory of TabJSON files.
    #[arg(long)]
    corpus: PathBuf,
    /// Restrict training to the `train` ids of this split manifest.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Preset name (tiny, desk, large) or a JSON model config file.
    #[arg(long, default_value = "desk")]
    config: String,
    #[arg(long, value_enum, default_value_t = ModeArg::Plain)]
    mode: ModeArg,
    /// Existing codebook for groove mode; fitted on the corpus when absent.
    #[arg(long)]
    codebook: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = KindArg::Hard)]
    groove: KindArg,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 2e-4)]
    lr: f64,
    #[arg(long, default_value_t = 200)]
    warmup: usize,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 2)]
    segments: usize,
    /// Stop after this much wall-clock time.
    #[arg(long)]
    max_seconds: Option<f64>,
    #[arg(long, default_value_t = 50)]
    log_every: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct SamplingArgs {
    #[arg(long, default_value_t = 1.0)]
    temp: f64,
    #[arg(long, default_value_t = 0.9)]
    nucleus: f64,
    #[arg(long, default_value_t = 0)]
    top_k: usize,
    /// Mask every step to tokens that keep the stream well formed.
    #[arg(long)]
    grammar: bool,
    #[arg(long, default_value_t = tabweave::model::DEFAULT_TOKEN_BUDGET)]
    max_tokens: usize,
}

impl SamplingArgs {
    fn params(&self, seed: u64) -> SamplingParams {
        SamplingParams {
            temperature: self.temp,
            top_k: self.top_k,
            nucleus_p: self.nucleus,
            seed,
            grammar_masked: self.grammar,
            max_tokens: self.max_tokens,
        }
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    prompt: PathBuf,
    #[arg(long, default_value_t = 16)]
    bars: usize,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// TabJSON of the continuation; token text goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the raw continuation tokens here.
    #[arg(long)]
    tokens: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Checkpoint to evaluate, as `name=path` or `path`; repeatable.
    #[arg(long)]
    ckpt: Vec<String>,
    /// Directory of validation TabJSON files.
    #[arg(long)]
    validation: PathBuf,
    /// Use only the `validation` ids of this split manifest.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long = "N", default_value_t = 4)]
    prompt_bars: usize,
    #[arg(long = "M", default_value_t = 16)]
    continuation_bars: usize,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Also write the key=value report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 16)]
    bars: usize,
    /// When set, also write `split.txt` holding out this share of the tabs.
    #[arg(long)]
    validation_fraction: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 4)]
    bars_per_line: usize,
}

/// Errors in how the command was invoked, as opposed to what it was given.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("TABWEAVE_THREADS") {
        let n: usize = value
            .parse()
            .map_err(|_| usage(format!("TABWEAVE_THREADS must be a positive integer, got `{value}`")))?;
        if n == 0 {
            return Err(usage("TABWEAVE_THREADS must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn banner(cli: &Cli) {
    if !cli.quiet {
        eprintln!(
            "# tabweave {} seed={} strict={} threads={} {:?}",
            env!("CARGO_PKG_VERSION"),
            cli.seed,
            cli.strict,
            rayon::current_num_threads(),
            cli.command
        );
    }
}

fn run(cli: &Cli) -> Result<()> {
    banner(cli);
    match &cli.command {
        Command::Encode(a) => encode_cmd(cli, a),
        Command::Decode(a) => decode_cmd(a),
        Command::Groove(a) => groove_cmd(cli, a),
        Command::Cluster(a) => cluster_cmd(cli, a),
        Command::Train(a) => train_cmd(cli, a),
        Command::Generate(a) => generate_cmd(cli, a),
        Command::Eval(a) => eval_cmd(cli, a),
        Command::Synth(a) => synth_cmd(cli, a),
        Command::Render(a) => render_cmd(cli, a),
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_tab(path: &Path, strict: bool) -> Result<Tab> {
    let (tab, report) = ingest(path, strict)?;
    for q in &report.quantization {
        info!("{}: quantized {q}", path.display());
    }
    Ok(tab)
}

/// One tab for a file, every tab in sorted order for a directory.
fn load_tabs(path: &Path, strict: bool) -> Result<Vec<Entry>> {
    if path.is_dir() {
        let loaded = corpus::load_dir(path, strict)?;
        let quantized: usize = loaded.iter().map(|(_, r)| r.quantization.len()).sum();
        if quantized > 0 {
            info!("{}: {quantized} quantization adjustments", path.display());
        }
        Ok(loaded.into_iter().map(|(e, _)| e).collect())
    } else {
        let tab = load_tab(path, strict)?;
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(vec![Entry { id, tab }])
    }
}

fn select(entries: Vec<Entry>, split: Option<&Path>, validation: bool) -> Result<Vec<Entry>> {
    let Some(split) = split else {
        return Ok(entries);
    };
    let manifest = SplitManifest::load(split)?;
    let ids = if validation { &manifest.validation } else { &manifest.train };
    let chosen: Vec<Entry> = entries.into_iter().filter(|e| ids.contains(&e.id)).collect();
    if chosen.len() != ids.len() {
        bail!(
            "split lists {} ids but only {} were found in the corpus",
            ids.len(),
            chosen.len()
        );
    }
    Ok(chosen)
}

fn encode_cmd(cli: &Cli, a: &EncodeArgs) -> Result<()> {
    let tab = load_tab(&a.input, cli.strict)?;
    let codebook = match (a.mode, &a.codebook) {
        (ModeArg::Groove, Some(path)) => Some(Codebook::load(path)?),
        (ModeArg::Groove, None) => return Err(usage("--mode groove needs --codebook")),
        (ModeArg::Plain, Some(_)) => return Err(usage("--codebook only applies to --mode groove")),
        (ModeArg::Plain, None) => None,
    };
    if let (Some(cb), Some(kind)) = (&codebook, a.groove) {
        if cb.kind != GrooveKind::from(kind) {
            bail!("codebook holds {} grooves, --groove asked for {}", cb.kind, GrooveKind::from(kind));
        }
    }
    let mode = codebook.as_ref().map_or(EncodeMode::NoGrooving, EncodeMode::GrooveAware);
    let tokens = codec::encode(&tab, mode)?;
    let mut metadata = Vec::new();
    if !tab.metadata.title.is_empty() {
        metadata.push(("title".to_string(), tab.metadata.title.clone()));
    }
    if !tab.metadata.source_id.is_empty() {
        metadata.push(("source_id".to_string(), tab.metadata.source_id.clone()));
    }
    write_output(a.out.as_deref(), &write_token_text(&TokenDocument { tokens, metadata }))
}

fn decode_cmd(a: &DecodeArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let doc = parse_token_text(&text)?;
    let mut decoded = codec::decode(&doc.tokens);
    decoded.tab.metadata.title = doc.meta("title").unwrap_or_default().to_string();
    decoded.tab.metadata.source_id = doc.meta("source_id").unwrap_or_default().to_string();
    let mut report = String::new();
    for d in &decoded.diagnostics {
        let _ = writeln!(report, "{d}");
    }
    match &a.report {
        Some(path) => std::fs::write(path, &report).with_context(|| format!("writing {}", path.display()))?,
        None => eprint!("{report}"),
    }
    if !decoded.diagnostics.is_empty() {
        log::warn!("{} diagnostics while decoding", decoded.diagnostics.len());
    }
    write_output(a.out.as_deref(), &to_tab_json(&decoded.tab))
}

fn groove_csv(kind: GrooveKind, vectors: &[GrooveVector]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record((0..kind.dim()).map(|i| format!("{kind}_{i}")))?;
    for v in vectors {
        w.write_record(v.values.iter().map(|x| x.to_string()))?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn read_groove_csv(path: &Path) -> Result<Vec<GrooveVector>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let first = headers.get(0).context("empty CSV header")?;
    let kind: GrooveKind = first
        .rsplit_once('_')
        .map(|(k, _)| k)
        .context("header columns must look like `<kind>_<index>`")?
        .parse()?;
    if headers.len() != kind.dim() {
        bail!("{kind} vectors have {} components, header has {}", kind.dim(), headers.len());
    }
    let mut out = Vec::new();
    for (row, record) in r.records().enumerate() {
        let record = record?;
        let values = record
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{} row {}", path.display(), row + 2))?;
        out.push(GrooveVector { kind, values });
    }
    Ok(out)
}

fn groove_cmd(cli: &Cli, a: &GrooveArgs) -> Result<()> {
    let kind = GrooveKind::from(a.kind);
    let vectors: Vec<GrooveVector> = load_tabs(&a.input, cli.strict)?
        .iter()
        .flat_map(|e| &e.tab.bars)
        .map(|b| GrooveVector::of(b, kind))
        .collect();
    write_output(a.out.as_deref(), &groove_csv(kind, &vectors)?)
}

fn cluster_cmd(cli: &Cli, a: &ClusterArgs) -> Result<()> {
    let vectors = read_groove_csv(&a.input)?;
    let (codebook, trace) = quantizer::fit_traced(&vectors, a.k, cli.seed)?;
    info!(
        "fitted {} centroids on {} vectors in {} iterations, cost {:.4}",
        codebook.k,
        vectors.len(),
        trace.costs.len(),
        trace.final_cost()
    );
    codebook.save(&a.out)?;
    Ok(())
}

fn model_config(name: &str, mode: Mode) -> Result<ModelConfig> {
    if let Ok(config) = ModelConfig::preset(name, mode) {
        return Ok(config);
    }
    let path = Path::new(name);
    if !path.exists() {
        return Err(usage(format!("--config `{name}` is neither a preset (tiny, desk, large) nor a file")));
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {name}"))?;
    let mut config: ModelConfig = serde_json::from_str(&text).with_context(|| format!("parsing {name}"))?;
    config.mode = mode;
    config.vocab_size = codec::Vocabulary::new(mode).len();
    config.validate()?;
    Ok(config)
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let mode = Mode::from(a.mode);
    let config = model_config(&a.config, mode)?;
    let entries = select(load_tabs(&a.corpus, cli.strict)?, a.split.as_deref(), false)?;
    if entries.is_empty() {
        bail!("no tabs found in {}", a.corpus.display());
    }
    let tabs: Vec<Tab> = entries.into_iter().map(|e| e.tab).collect();
    let codebook = match (mode, &a.codebook) {
        (Mode::NoGrooving, Some(_)) => return Err(usage("--codebook only applies to --mode groove")),
        (Mode::NoGrooving, None) => None,
        (Mode::GrooveAware, Some(path)) => Some(Codebook::load(path)?),
        (Mode::GrooveAware, None) => {
            let cb = corpus::fit_codebook(&tabs, a.groove.into(), a.k, cli.seed)?;
            info!("fitted a {}-centroid {} codebook on the training bars", cb.k, cb.kind);
            Some(cb)
        }
    };
    let encode_mode = codebook.as_ref().map_or(EncodeMode::NoGrooving, EncodeMode::GrooveAware);
    let sequences = corpus::token_sequences(&tabs, encode_mode)?;
    info!(
        "{} tabs, {} tokens, {} parameters",
        tabs.len(),
        sequences.iter().map(Vec::len).sum::<usize>(),
        config.parameter_count()
    );
    let model = Model::new(config, cli.seed)?;
    let params = TrainParams {
        lr: a.lr,
        warmup_steps: a.warmup,
        batch_size: a.batch,
        steps: a.steps,
        seed: cli.seed,
        segments_per_sample: a.segments,
        max_seconds: a.max_seconds,
        ..TrainParams::default()
    };
    let mut trainer = Trainer::new(model, params)?;
    let log_every = a.log_every.max(1);
    let report = trainer.run(&sequences, |step, loss| {
        if step % log_every == 0 {
            info!("step {step} loss {loss:.4}");
        }
    })?;
    info!(
        "trained {} steps in {:.1}s, final loss {:.4}",
        trainer.steps_taken(),
        report.seconds,
        report.final_loss().unwrap_or(f64::NAN)
    );
    let steps = trainer.steps_taken();
    let mut model = trainer.into_model();
    Checkpoint::from_model(&mut model, codebook, steps).save(&a.out)?;
    Ok(())
}

fn generate_cmd(cli: &Cli, a: &GenerateArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let prompt = load_tab(&a.prompt, cli.strict)?;
    let model = CheckpointModel::new(&ckpt, a.sampling.params(cli.seed))?;
    let continuation = model.continue_prompt(&prompt, a.bars, cli.seed)?;
    for d in &continuation.diagnostics {
        log::warn!("{d}");
    }
    info!("{} tokens, {} new bars", continuation.tokens.len(), continuation.tab.len());
    let doc = TokenDocument {
        tokens: continuation.tokens,
        metadata: Vec::new(),
    };
    if let Some(path) = &a.tokens {
        std::fs::write(path, write_token_text(&doc)).with_context(|| format!("writing {}", path.display()))?;
    }
    match &a.out {
        Some(path) => corpus::write_tab_json(&continuation.tab, path)?,
        None if a.tokens.is_none() => print!("{}", write_token_text(&doc)),
        None => {}
    }
    Ok(())
}

fn eval_cmd(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let mut models: Vec<(String, CheckpointModel)> = Vec::new();
    for arg in &a.ckpt {
        let (name, path) = match arg.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(arg);
                let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                (name, p)
            }
        };
        let ckpt = Checkpoint::load(&path)?;
        models.push((name, CheckpointModel::new(&ckpt, a.sampling.params(cli.seed))?));
    }
    let entries = select(load_tabs(&a.validation, cli.strict)?, a.split.as_deref(), true)?;
    let tabs: Vec<Tab> = entries.into_iter().map(|e| e.tab).collect();
    let refs: Vec<(String, &dyn ContinuationModel)> = models
        .iter()
        .map(|(n, m)| (n.clone(), m as &dyn ContinuationModel))
        .collect();
    let report = run_continuation_experiment(
        &refs,
        &tabs,
        ExperimentParams {
            prompt_bars: a.prompt_bars,
            continuation_bars: a.continuation_bars,
            seed: cli.seed,
        },
    )?;
    print!("{}", report.table());
    if let Some(path) = &a.report {
        std::fs::write(path, report.to_kv()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn synth_cmd(cli: &Cli, a: &SynthArgs) -> Result<()> {
    if a.n == 0 || a.bars == 0 {
        return Err(usage("--n and --bars must be at least 1"));
    }
    let tabs = synth_corpus(a.n, a.bars, cli.seed, &SynthStyle::default())?;
    let entries: Vec<Entry> = tabs
        .into_iter()
        .map(|tab| Entry {
            id: tab.metadata.source_id.clone(),
            tab,
        })
        .collect();
    corpus::save_dir(&a.out, &entries)?;
    if let Some(fraction) = a.validation_fraction {
        let ids: Vec<String> = entries.iter().map(|e| e.id.clone()).collect();
        SplitManifest::new(&ids, fraction, cli.seed)?.save(&a.out.join("split.txt"))?;
    }
    info!("wrote {} tabs to {}", entries.len(), a.out.display());
    Ok(())
}

fn render_cmd(cli: &Cli, a: &RenderArgs) -> Result<()> {
    let tab = load_tab(&a.input, cli.strict)?;
    print!("{}", render_ascii(&tab, a.bars_per_line));
    Ok(())
}
