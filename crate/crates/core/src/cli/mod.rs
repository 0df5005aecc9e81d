//! The `sprp` command line.
//!
//! Every subcommand writes into its `--out` directory only and finishes by
//! writing a [`RunManifest`]. Settings resolve as flags, then the `--config`
//! JSON file (a bare settings object or an earlier manifest), then built-in
//! defaults. The seed falls back further to `SPRP_SEED` before 0.
//!
//! Exit codes: 0 success, 1 usage error (nothing written), 2 data error.

mod manifest;

use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{audit_predictions, heatmap_svg, heatmap_tsv, make_probe, simple_sentence_set, EntityLexicon};
use crate::corpus::{detokenize, parse_corpus, write_corpus_string, Corpus, ExtensionMap, Tokens};
use crate::evalkit::EvalReport;
use crate::par::Exec;
use crate::seq2seq::{Checkpoint, DecodeResult, ModelConfig, Translator};
use crate::splitkit::{allocate_splits, naive_split, split_stats, verify_split, Ratios, Split, SplitAssignment};
use crate::synth::{generate, SynthConfig, MAX_RELATIONS};
use crate::trainer::{new_model, train_from, Resume, TrainConfig, TrainError};

pub use manifest::{OutputFile, RunManifest, MANIFEST_FILE};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const SEED_ENV: &str = "SPRP_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

fn usage(e: impl Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn data(e: impl Display) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "sprp", version, about = "Split-and-rephrase workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Output directory; nothing is written outside it.
    #[arg(long)]
    out: PathBuf,
    /// Random seed [default: config file, then $SPRP_SEED, then 0].
    #[arg(long)]
    seed: Option<u64>,
    /// JSON settings file, or the manifest.json of an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split a corpus into train/dev/test.
    Split(SplitArgs),
    /// Check an assignment against the split constraints.
    Audit(AuditArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Decode one tokenized sentence per input line.
    Decode(DecodeArgs),
    /// Score predictions against a reference corpus.
    Eval(EvalArgs),
    /// Decode repeated-entity probes.
    Probe(ProbeArgs),
    /// Heuristic fact audit of predictions.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// train,dev,test fractions [default: 0.8,0.1,0.1]
    #[arg(long)]
    ratios: Option<Ratios>,
    /// Shuffle complex sentences, ignoring the constraints.
    #[arg(long)]
    naive: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SplitOptions {
    corpus: Option<PathBuf>,
    ratios: Ratios,
    naive: bool,
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    assignment: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AuditOptions {
    corpus: Option<PathBuf>,
    assignment: Option<PathBuf>,
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Pin the copy switch to 0.
    #[arg(long)]
    no_copy: bool,
    #[arg(long)]
    min_count: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    clip: Option<f64>,
    /// Stop once dev BLEU reaches this value.
    #[arg(long)]
    stop_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainOptions {
    train: Option<PathBuf>,
    dev: Option<PathBuf>,
    resume: Option<PathBuf>,
    hidden_size: usize,
    dropout: f64,
    copy: bool,
    min_count: usize,
    /// The seed field here is overwritten by the run seed.
    trainer: TrainConfig,
    seed: Option<u64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            train: None,
            dev: None,
            resume: None,
            hidden_size: 128,
            dropout: 0.3,
            copy: true,
            min_count: 1,
            trainer: TrainConfig::default(),
            seed: None,
        }
    }
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Beam width; 1 decodes greedily [default: 12]
    #[arg(long)]
    beam: Option<usize>,
    /// Write `<PREFIX><line>.tsv` and `.svg` attention heatmaps.
    #[arg(long, value_name = "PREFIX")]
    attn_dump: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DecodeOptions {
    ckpt: Option<PathBuf>,
    input: Option<PathBuf>,
    beam: usize,
    attn_dump: Option<String>,
    seed: Option<u64>,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            ckpt: None,
            input: None,
            beam: 12,
            attn_dump: None,
            seed: None,
        }
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// One tokenized prediction per line.
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Reference corpus, aligned with the predictions.
    #[arg(long)]
    refs: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalOptions {
    pred: Option<PathBuf>,
    refs: Option<PathBuf>,
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct ProbeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// One entity per line.
    #[arg(long)]
    entities: Option<PathBuf>,
    /// Repetitions per probe [default: 3]
    #[arg(long)]
    k: Option<usize>,
    /// [default: 12]
    #[arg(long)]
    beam: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ProbeOptions {
    ckpt: Option<PathBuf>,
    entities: Option<PathBuf>,
    k: usize,
    beam: usize,
    seed: Option<u64>,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            ckpt: None,
            entities: None,
            k: 3,
            beam: 12,
            seed: None,
        }
    }
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Corpus the predictions were made for, aligned line by line.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Training split.
    #[arg(long)]
    train: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AnalyzeOptions {
    pred: Option<PathBuf>,
    corpus: Option<PathBuf>,
    train: Option<PathBuf>,
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Minimum number of subject entities.
    #[arg(long)]
    entities: Option<usize>,
    #[arg(long)]
    relations: Option<usize>,
    /// Minimum number of components per relation.
    #[arg(long)]
    per_relation: Option<usize>,
    /// References per entry (1 to 6).
    #[arg(long)]
    references: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthOptions {
    entities: usize,
    relations: usize,
    per_relation: usize,
    references: usize,
    fact_counts: Vec<usize>,
    subject_tokens: usize,
    seed: Option<u64>,
}

impl Default for SynthOptions {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self {
            entities: d.entities,
            relations: d.relations,
            per_relation: d.per_relation,
            references: d.references,
            fact_counts: d.fact_counts,
            subject_tokens: d.subject_tokens,
            seed: None,
        }
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Split(a) => cmd_split(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Train(a) => cmd_train(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Probe(a) => cmd_probe(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn load_options<C: DeserializeOwned + Default>(path: Option<&Path>, subcommand: &str) -> Result<C, CliError> {
    let Some(p) = path else {
        return Ok(C::default());
    };
    let text = std::fs::read_to_string(p).map_err(|e| usage(format!("--config {}: {e}", p.display())))?;
    let mut v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| usage(format!("--config {}: {e}", p.display())))?;
    if let Some(sc) = v.get("subcommand").and_then(|s| s.as_str()) {
        if sc != subcommand {
            return Err(usage(format!("--config {} is a `{sc}` manifest, not `{subcommand}`", p.display())));
        }
        v = v.get("config").cloned().unwrap_or_default();
    }
    serde_json::from_value(v).map_err(|e| usage(format!("--config {}: {e}", p.display())))
}

fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    p.as_deref().ok_or_else(|| usage(format!("missing required {flag}")))
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn read_lines(p: &Path) -> Result<Vec<Tokens>, CliError> {
    let text = std::fs::read_to_string(p).map_err(|e| data(format!("{}: {e}", p.display())))?;
    Ok(text.lines().map(|l| l.split_whitespace().map(String::from).collect()).collect())
}

fn load_corpus(p: &Path) -> Result<Corpus, CliError> {
    parse_corpus(p).map_err(|e| data(format!("{}: {e}", p.display())))
}

fn load_model(p: &Path) -> Result<Translator, CliError> {
    let ck = Checkpoint::load(p).map_err(|e| data(format!("{}: {e}", p.display())))?;
    Translator::from_checkpoint(ck).map_err(|e| data(format!("{}: {e}", p.display())))
}

fn lines_of(seqs: &[Tokens]) -> String {
    seqs.iter().map(|s| s.join(" ") + "\n").collect()
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

/// Output directory plus the files written to it so far.
struct Run {
    manifest: RunManifest,
    written: Vec<String>,
}

impl Run {
    fn start<C: Serialize>(subcommand: &str, seed: u64, options: &C, out: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(out).map_err(|e| data(format!("{}: {e}", out.display())))?;
        let config = serde_json::to_value(options).expect("options serialize");
        Ok(Self {
            manifest: RunManifest::new(subcommand, seed, config, out),
            written: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.manifest.out.join(name)
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let p = self.path(name);
        std::fs::write(&p, contents).map_err(|e| data(format!("{}: {e}", p.display())))?;
        self.track(name);
        Ok(())
    }

    fn track(&mut self, name: &str) {
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
    }

    fn finish(self) -> Result<(), CliError> {
        let p = self.manifest.finish(&self.written).map_err(data)?;
        log::info!("wrote {}", p.display());
        Ok(())
    }
}

fn cmd_split(a: SplitArgs) -> Result<(), CliError> {
    let mut o: SplitOptions = load_options(a.common.config.as_deref(), "split")?;
    if a.corpus.is_some() {
        o.corpus = a.corpus;
    }
    set(&mut o.ratios, a.ratios);
    o.naive |= a.naive;
    let seed = resolve_seed(a.common.seed, o.seed)?;
    o.seed = Some(seed);
    o.ratios.validate().map_err(usage)?;
    let corpus = load_corpus(required(&o.corpus, "--corpus")?)?;

    let assignment = if o.naive {
        naive_split(&corpus, o.ratios, seed)
    } else {
        allocate_splits(&corpus, o.ratios, seed)
    }
    .map_err(data)?;
    let stats = split_stats(&corpus, &assignment);

    let mut run = Run::start("split", seed, &o, &a.common.out)?;
    run.write("assignment.jsonl", assignment.to_jsonl(&corpus))?;
    run.write("stats.json", to_json(&stats))?;
    run.write("stats.txt", stats.to_text())?;
    for sp in Split::ALL {
        run.write(&format!("{sp}.jsonl"), write_corpus_string(&assignment.subcorpus(&corpus, sp)))?;
    }
    eprint!("{}", stats.to_text());
    run.finish()
}

fn cmd_audit(a: AuditArgs) -> Result<(), CliError> {
    let mut o: AuditOptions = load_options(a.common.config.as_deref(), "audit")?;
    if a.corpus.is_some() {
        o.corpus = a.corpus;
    }
    if a.assignment.is_some() {
        o.assignment = a.assignment;
    }
    let seed = resolve_seed(a.common.seed, o.seed)?;
    o.seed = Some(seed);
    let corpus_p = required(&o.corpus, "--corpus")?;
    let assign_p = required(&o.assignment, "--assignment")?;
    let corpus = load_corpus(corpus_p)?;
    let text = std::fs::read_to_string(assign_p).map_err(|e| data(format!("{}: {e}", assign_p.display())))?;
    let assignment = SplitAssignment::from_jsonl(&text, &corpus).map_err(data)?;
    let report = verify_split(&corpus, &assignment);
    let stats = split_stats(&corpus, &assignment);

    let mut run = Run::start("audit", seed, &o, &a.common.out)?;
    run.write("audit.json", to_json(&report))?;
    run.write("audit.txt", report.to_text())?;
    run.write("stats.json", to_json(&stats))?;
    run.write("stats.txt", stats.to_text())?;
    print!("{}", report.to_text());
    run.finish()?;
    if report.passed() {
        Ok(())
    } else {
        Err(data("assignment violates the split constraints"))
    }
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::InvalidConfig(_) => usage(e),
        _ => data(e),
    }
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let mut o: TrainOptions = load_options(a.common.config.as_deref(), "train")?;
    for (slot, flag) in [(&mut o.train, a.train), (&mut o.dev, a.dev), (&mut o.resume, a.resume)] {
        if flag.is_some() {
            *slot = flag;
        }
    }
    set(&mut o.hidden_size, a.hidden);
    set(&mut o.dropout, a.dropout);
    if a.no_copy {
        o.copy = false;
    }
    set(&mut o.min_count, a.min_count);
    let t = &mut o.trainer;
    set(&mut t.initial_lr, a.lr);
    set(&mut t.decay_factor, a.decay);
    set(&mut t.batch_size, a.batch_size);
    set(&mut t.max_epochs, a.epochs);
    set(&mut t.patience, a.patience);
    set(&mut t.clip_norm, a.clip);
    if a.stop_at.is_some() {
        t.stop_at = a.stop_at;
    }
    let seed = resolve_seed(a.common.seed, o.seed)?;
    o.seed = Some(seed);
    o.trainer.seed = seed;
    o.trainer.validate().map_err(usage)?;
    if o.min_count == 0 {
        return Err(usage("min_count must be at least 1"));
    }
    let mut mc = ModelConfig::new(o.hidden_size, 4);
    mc.dropout = o.dropout;
    mc.copy = o.copy;
    mc.validate().map_err(usage)?;

    let train = load_corpus(required(&o.train, "--train")?)?;
    let dev = load_corpus(required(&o.dev, "--dev")?)?;
    let (model, resume) = match &o.resume {
        Some(p) => {
            let ck = Checkpoint::load(p).map_err(|e| data(format!("{}: {e}", p.display())))?;
            let r = Resume {
                epoch: ck.header.epoch,
                lr: ck.header.learning_rate,
                best_dev: ck.header.dev_score,
            };
            if r.epoch >= o.trainer.max_epochs {
                return Err(usage(format!(
                    "checkpoint is at epoch {} but max_epochs is {}",
                    r.epoch, o.trainer.max_epochs
                )));
            }
            (Translator::from_checkpoint(ck).map_err(data)?, Some(r))
        }
        None => (new_model(&train, mc, o.min_count, seed).map_err(train_error)?, None),
    };

    let mut run = Run::start("train", seed, &o, &a.common.out)?;
    let last_path = run.path("last.ckpt");
    let decay = o.trainer.decay_factor;
    let mut best = resume.and_then(|r| r.best_dev);
    let mut save_err = None;
    let outcome = train_from(model, &train, &dev, &o.trainer, resume, &mut |rec, m| {
        best = Some(best.map_or(rec.dev_bleu, |b: f64| b.max(rec.dev_bleu)));
        let ck = Checkpoint::new(m.config.clone(), &m.vocab, m.params.clone(), seed, rec.epoch, best, rec.next_lr(decay));
        if let Err(e) = ck.save(&last_path) {
            save_err.get_or_insert(e);
        }
    })
    .map_err(train_error)?;
    if let Some(e) = save_err {
        return Err(data(e));
    }
    run.track("last.ckpt");

    let log = &outcome.log;
    let best_lr = log
        .epochs
        .iter()
        .find(|r| r.epoch == log.best_epoch)
        .map(|r| r.next_lr(decay))
        .or(resume.map(|r| r.lr))
        .unwrap_or(o.trainer.initial_lr);
    let m = &outcome.model;
    let ck = Checkpoint::new(
        m.config.clone(),
        &m.vocab,
        m.params.clone(),
        seed,
        log.best_epoch,
        Some(log.best_dev_bleu),
        best_lr,
    );
    run.write("best.ckpt", ck.to_bytes())?;
    run.write("train_log.jsonl", log.to_jsonl())?;
    eprint!("{}", log.to_table());
    eprintln!("stopped: {:?}; best dev BLEU {:.2} at epoch {}", log.stop, log.best_dev_bleu, log.best_epoch);
    run.finish()
}

fn check_beam(beam: usize) -> Result<(), CliError> {
    if beam == 0 {
        return Err(usage("--beam must be at least 1"));
    }
    Ok(())
}

/// Decodes every line in parallel; empty lines give empty predictions.
fn decode_all(model: &Translator, inputs: &[Tokens], beam: usize) -> Result<Vec<Option<(Tokens, DecodeResult)>>, CliError> {
    Exec::default()
        .map(inputs, |src| {
            if src.is_empty() {
                return Ok(None);
            }
            model.decode(src, beam).map(Some)
        })
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(data)
}

fn predictions(decoded: &[Option<(Tokens, DecodeResult)>]) -> Vec<Tokens> {
    decoded.iter().map(|d| d.as_ref().map(|(w, _)| w.clone()).unwrap_or_default()).collect()
}

fn cmd_decode(a: DecodeArgs) -> Result<(), CliError> {
    let mut o: DecodeOptions = load_options(a.common.config.as_deref(), "decode")?;
    if a.ckpt.is_some() {
        o.ckpt = a.ckpt;
    }
    if a.input.is_some() {
        o.input = a.input;
    }
    set(&mut o.beam, a.beam);
    if a.attn_dump.is_some() {
        o.attn_dump = a.attn_dump;
    }
    let seed = resolve_seed(a.common.seed, o.seed)?;
    o.seed = Some(seed);
    check_beam(o.beam)?;
    if let Some(p) = &o.attn_dump {
        if p.is_empty() || p.contains(['/', '\\']) || p.starts_with('.') {
            return Err(usage(format!("--attn-dump {p:?} must be a plain file-name prefix")));
        }
    }
    let model = load_model(required(&o.ckpt, "--ckpt")?)?;
    let inputs = read_lines(required(&o.input, "--input")?)?;
    let decoded = decode_all(&model, &inputs, o.beam)?;

    let mut run = Run::start("decode", seed, &o, &a.common.out)?;
    run.write("predictions.txt", lines_of(&predictions(&decoded)))?;
    if let Some(prefix) = &o.attn_dump {
        for (i, (src, d)) in inputs.iter().zip(&decoded).enumerate() {
            let Some((_, res)) = d else { continue };
            let ext = ExtensionMap::new(&model.vocab, src);
            let labels = detokenize(&res.tokens, &model.vocab, &ext);
            run.write(&format!("{prefix}{i}.tsv"), heatmap_tsv(&res.attention, src, &labels).map_err(data)?)?;
            run.write(&format!("{prefix}{i}.svg"), heatmap_svg(&res.attention, src, &labels).map_err(data)?)?;
        }
    }
    run.finish()
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    let mut o: EvalOptions = load_options(a.common.config.as_deref(), "eval")?;
    if a.pred.is_some() {
        o.pred = a.pred;
    }
    if a.refs.is_some() {
        o.refs = a.refs;
    }
    let seed = resolve_seed(a.common.seed, o.seed)?;
    o.seed = Some(seed);
    let preds = read_lines(required(&o.pred, "--pred")?)?;
    let corpus = load_corpus(required(&o.refs, "--refs")?)?;
    if preds.len() != corpus.len() {
        return Err(data(format!("{} predictions for {} reference entries", preds.len(), corpus.len())));
    }
    let refs: Vec<Vec<Tokens>> = corpus.entries.iter().map(|e| e.joined_references()).collect();
    let report = EvalReport::compute(Exec::default(), &preds, &refs).map_err(data)?;

    let mut run = Run::start("eval", seed, &o, &a.common.out)?;
    run.write("eval.txt", report.to_table())?;
    run.write("eval.json", to_json(&report))?;
    print!("{}", report.to_table());
    run.finish()
}

fn cmd_probe(a: ProbeArgs) -> Result<(), CliError> {
    let mut o: ProbeOptions = load_options(a.common.config.as_deref(), "probe")?;
    if a.ckpt.is_some() {
        o.ckpt = a.ckpt;
    }
    if a.entities.is_some() {
        o.entities = a.entities;
    }
    set(&mut o.k, a.k);
    set(&mut o.beam, a.beam);
    let seed = resolve_seed(a.common.seed, o.seed)?;
    o.seed = Some(seed);
    check_beam(o.beam)?;
    if o.k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    let model = load_model(required(&o.ckpt, "--ckpt")?)?;
    let probes: Vec<Tokens> = read_lines(required(&o.entities, "--entities")?)?
        .into_iter()
        .filter(|e| !e.is_empty())
        .map(|e| make_probe(&e, o.k))
        .collect();
    let decoded = decode_all(&model, &probes, o.beam)?;

    let mut run = Run::start("probe", seed, &o, &a.common.out)?;
    run.write("probes.txt", lines_of(&probes))?;
    run.write("predictions.txt", lines_of(&predictions(&decoded)))?;
    run.finish()
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let mut o: AnalyzeOptions = load_options(a.common.config.as_deref(), "analyze")?;
    for (slot, flag) in [(&mut o.pred, a.pred), (&mut o.corpus, a.corpus), (&mut o.train, a.train)] {
        if flag.is_some() {
            *slot = flag;
        }
    }
    let seed = resolve_seed(a.common.seed, o.seed)?;
    o.seed = Some(seed);
    let preds = read_lines(required(&o.pred, "--pred")?)?;
    let corpus = load_corpus(required(&o.corpus, "--corpus")?)?;
    let train = load_corpus(required(&o.train, "--train")?)?;
    if preds.len() != corpus.len() {
        return Err(data(format!("{} predictions for {} corpus entries", preds.len(), corpus.len())));
    }
    let lexicon = EntityLexicon::from_corpora([&corpus, &train]);
    let (audits, summary) =
        audit_predictions(Exec::default(), &preds, &corpus.entries, &simple_sentence_set(&train), &lexicon);

    let mut run = Run::start("analyze", seed, &o, &a.common.out)?;
    let jsonl: String = audits
        .iter()
        .map(|x| serde_json::to_string(x).expect("audit serializes") + "\n")
        .collect();
    run.write("audit.jsonl", jsonl)?;
    run.write("summary.json", to_json(&summary))?;
    run.write("summary.txt", summary.to_table())?;
    print!("{}", summary.to_table());
    run.finish()
}

fn cmd_synth(a: SynthArgs) -> Result<(), CliError> {
    let mut o: SynthOptions = load_options(a.common.config.as_deref(), "synth")?;
    set(&mut o.entities, a.entities);
    set(&mut o.relations, a.relations);
    set(&mut o.per_relation, a.per_relation);
    set(&mut o.references, a.references);
    let seed = resolve_seed(a.common.seed, o.seed)?;
    o.seed = Some(seed);
    if o.relations == 0 || o.per_relation == 0 {
        return Err(usage("--relations and --per-relation must be positive"));
    }
    if !(1..=6).contains(&o.references) {
        return Err(usage("--references must lie in 1..=6"));
    }
    if o.relations > MAX_RELATIONS {
        return Err(usage(format!("--relations is at most {MAX_RELATIONS}")));
    }
    if !o.fact_counts.iter().any(|k| (2..=3).contains(k)) {
        return Err(usage("fact_counts needs 2 or 3"));
    }
    let cfg = SynthConfig {
        entities: o.entities,
        relations: o.relations,
        per_relation: o.per_relation,
        references: o.references,
        fact_counts: o.fact_counts.clone(),
        subject_tokens: o.subject_tokens,
        seed,
    };
    let corpus = generate(&cfg);

    let mut run = Run::start("synth", seed, &o, &a.common.out)?;
    run.write("corpus.jsonl", write_corpus_string(&corpus))?;
    eprintln!(
        "{} entries, {} entities, {} relations",
        corpus.len(),
        cfg.num_entities(),
        cfg.relations
    );
    run.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parser_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn options_round_trip_through_json() {
        let o = TrainOptions {
            seed: Some(4),
            ..TrainOptions::default()
        };
        let back: TrainOptions = serde_json::from_value(serde_json::to_value(&o).unwrap()).unwrap();
        assert_eq!(back, o);
        assert!(serde_json::from_str::<SplitOptions>(r#"{"ratoins": [0.8, 0.1, 0.1]}"#).is_err());
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(1), Some(2)).unwrap(), 1);
        assert_eq!(resolve_seed(None, Some(2)).unwrap(), 2);
    }
}
