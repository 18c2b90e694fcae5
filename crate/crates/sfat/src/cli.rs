//! Command-line surface: one JSON config, six subcommands, a fixed
//! output layout (`corpus/`, `checkpoints/`, `reports/`, `logs/`).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    anonymize, collect_emotes, densest_window, load_comments, load_corpus, pseudo_embed,
    save_comments, segment_clips, synth_corpus, write_index, write_sfeb, CommentRecord, Corpus,
    FrameTrack, SynthConfig, Vocabulary,
};
use crate::eval::{evaluate, EvalOptions};
use crate::model::{encode_window, generate, GenStrategy, Mode, ModelConfig, SfatModel};
use crate::training::{
    load_checkpoint, pretrain_with_log, save_checkpoint, train, write_loss_csv, TrainingConfig,
};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation or configuration: exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Failure while doing the work: exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

macro_rules! runtime_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}
runtime_from!(
    crate::corpus::CorpusError,
    crate::model::ModelError,
    crate::training::TrainingError,
    crate::eval::EvalError,
    std::io::Error
);

type Result<T> = std::result::Result<T, CliError>;

/// Everything a run needs, archived next to its reports. Unknown keys
/// are rejected; absent keys take the defaults below.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub synth: SynthConfig,
    /// Clip length in seconds (T2); the context length T1 lives in `model`.
    pub t2: usize,
    /// Corpus to read for pretrain/train/evaluate/generate; defaults to
    /// `<out>/corpus`.
    pub corpus_dir: Option<PathBuf>,
    /// Input directory for `preprocess` (raw comments + frame tracks).
    pub raw_dir: Option<PathBuf>,
    /// Checkpoint for `evaluate`/`generate`; defaults to
    /// `<out>/checkpoints/train` when that exists.
    pub checkpoint: Option<PathBuf>,
    /// Densest-window span for preprocessing; omit to keep full streams.
    pub densest_span_s: Option<usize>,
    /// Minimum token frequency for the vocabulary.
    pub min_token_freq: usize,
    /// Length-normalize candidate log-likelihoods during evaluation.
    pub normalize_ll: bool,
    /// Uniform frame-aggregation ablation switch.
    pub uniform_aggregation: bool,
    /// Generation length cap; defaults to the model's response length.
    pub gen_max_len: Option<usize>,
    /// Sample from the top-k tokens instead of greedy decoding.
    pub gen_top_k: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
            synth: SynthConfig::default(),
            t2: 30,
            corpus_dir: None,
            raw_dir: None,
            checkpoint: None,
            densest_span_s: None,
            min_token_freq: 1,
            normalize_ll: true,
            uniform_aggregation: false,
            gen_max_len: None,
            gen_top_k: None,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sfat", about = "Live-video comment generation pipeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the training and synthesis seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory root.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker-thread cap. Every stage is deterministic at any setting.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Config override as a dotted path, e.g. training.train_epochs=5.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Length-normalize candidate log-likelihoods.
    #[arg(long = "normalize-ll", global = true, value_name = "BOOL")]
    normalize_ll: Option<bool>,
    /// Replace learned frame weights with uniform ones (ablation).
    #[arg(long = "uniform-aggregation", global = true, value_name = "BOOL")]
    uniform_aggregation: Option<bool>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus into <out>/corpus.
    Synth,
    /// Trim, segment, anonymize, and index a raw corpus into <out>/corpus.
    Preprocess,
    /// Masked-language-model pretraining of the comment encoder.
    Pretrain,
    /// End-to-end training; resumes from <out>/checkpoints/train if present.
    Train,
    /// Rank candidate sets and write a retrieval report.
    Evaluate,
    /// Decode one comment per query window.
    Generate,
}

/// Parse argv, run the subcommand, and return the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    if cli.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let config = load_config(cli)?;
    match cli.command {
        Command::Synth => cmd_synth(cli, &config),
        Command::Preprocess => cmd_preprocess(cli, &config),
        Command::Pretrain => cmd_pretrain(cli, &config),
        Command::Train => cmd_train(cli, &config),
        Command::Evaluate => cmd_evaluate(cli, &config),
        Command::Generate => cmd_generate(cli, &config),
    }
}

/// Defaults ← config file ← --set overrides ← dedicated flags.
fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut value = serde_json::to_value(RunConfig::default())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        let file: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        merge(&mut value, file);
    }
    for entry in &cli.overrides {
        apply_override(&mut value, entry)?;
    }
    let mut config: RunConfig = serde_json::from_value(value)
        .map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))?;
    if let Some(seed) = cli.seed {
        config.training.seed = seed;
        config.synth.seed = seed;
    }
    if let Some(n) = cli.normalize_ll {
        config.normalize_ll = n;
    }
    if let Some(u) = cli.uniform_aggregation {
        config.uniform_aggregation = u;
    }
    config.model.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    config.training.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if config.model.t1 >= config.t2 {
        return Err(CliError::Usage(format!(
            "context length model.t1={} must be below the clip length t2={}",
            config.model.t1, config.t2
        )));
    }
    Ok(config)
}

fn merge(base: &mut serde_json::Value, incoming: serde_json::Value) {
    match (base, incoming) {
        (serde_json::Value::Object(b), serde_json::Value::Object(i)) => {
            for (k, v) in i {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn apply_override(value: &mut serde_json::Value, entry: &str) -> Result<()> {
    let (path, raw) = entry
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set {entry}: expected KEY=VALUE")))?;
    let parsed: serde_json::Value =
        serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut slot = value;
    for key in path.split('.') {
        slot = slot
            .as_object_mut()
            .and_then(|o| o.get_mut(key))
            .ok_or_else(|| CliError::Usage(format!("--set {entry}: unknown key {key}")))?;
    }
    *slot = parsed;
    Ok(())
}

fn out_dir(cli: &Cli, sub: &str) -> Result<PathBuf> {
    let dir = cli.out.join(sub);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn corpus_dir(cli: &Cli, config: &RunConfig) -> PathBuf {
    config.corpus_dir.clone().unwrap_or_else(|| cli.out.join("corpus"))
}

fn load_run_corpus(cli: &Cli, config: &RunConfig) -> Result<(Corpus, Vocabulary)> {
    let dir = corpus_dir(cli, config);
    let corpus = load_corpus(&dir, config.model.t1, config.t2)?;
    let vocab_path = dir.join("vocab.json");
    let vocab = if vocab_path.exists() {
        Vocabulary::load(&vocab_path)?
    } else {
        Vocabulary::build(
            corpus.comments.iter().map(|c| c.text.as_str()),
            config.min_token_freq,
            config.model.vocab_size,
        )?
    };
    if corpus.embed_dim != config.model.input_embed_dim {
        return Err(CliError::Usage(format!(
            "corpus embedding dim {} does not match model.input_embed_dim {}",
            corpus.embed_dim, config.model.input_embed_dim
        )));
    }
    Ok((corpus, vocab))
}

/// Model sized to the actual vocabulary, seeded from the training seed.
fn fresh_model(config: &RunConfig, vocab: &Vocabulary) -> Result<SfatModel<f32>> {
    let mut mc = config.model.clone();
    mc.vocab_size = vocab.size();
    Ok(SfatModel::init(mc, config.training.seed)?)
}

fn cmd_synth(cli: &Cli, config: &RunConfig) -> Result<()> {
    let dir = out_dir(cli, "corpus")?;
    let summary = synth_corpus(&config.synth, &dir)?;
    println!(
        "synth: {} comments, {} windows, {} files in {}",
        summary.comments,
        summary.windows,
        summary.files.len(),
        dir.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct VideoSummary {
    video_id: String,
    densest_start_s: usize,
    kept_seconds: usize,
    kept_comments: usize,
    windows: usize,
    trainable_windows: usize,
}

fn cmd_preprocess(cli: &Cli, config: &RunConfig) -> Result<()> {
    let raw = config.raw_dir.as_ref().ok_or_else(|| {
        CliError::Usage("preprocess requires the `raw_dir` config field".into())
    })?;
    let out = out_dir(cli, "corpus")?;
    let logs = out_dir(cli, "logs")?;
    let seed = config.training.seed;

    let (mut comments, stats) = load_comments(&raw.join("comments.jsonl"))?;
    anonymize(&mut comments, seed);
    let emotes = collect_emotes(&comments);

    // Per video: trim to the densest span, shift times to zero, keep the
    // matching frame rows, then re-segment to count windows.
    let mut kept: Vec<CommentRecord> = Vec::new();
    let mut tracks: BTreeMap<String, FrameTrack> = BTreeMap::new();
    let mut summaries: Vec<VideoSummary> = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(raw)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for path in entries {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let Some(vid) = name.strip_suffix(".frames.sfeb") else { continue };
        let track_comments: Vec<&CommentRecord> =
            comments.iter().filter(|c| c.video_id == vid).collect();
        let track = {
            let (rows, cols, data) = crate::corpus::read_sfeb(&path)?;
            FrameTrack::new(vid.to_string(), cols as usize, data).map(|t| (t, rows as usize))?
        };
        let (track, duration) = track;
        let span = config.densest_span_s.unwrap_or(duration).min(duration);
        let owned: Vec<CommentRecord> = track_comments.iter().map(|c| (*c).clone()).collect();
        let dw = densest_window(&owned, span, duration)?;
        let start = dw.start_s;
        let mut video_kept: Vec<CommentRecord> = owned
            .into_iter()
            .filter(|c| c.time_s >= start as f64 && c.time_s < (start + span) as f64)
            .map(|mut c| {
                c.time_s -= start as f64;
                c
            })
            .collect();
        video_kept.sort_by(|a, b| a.time_s.partial_cmp(&b.time_s).unwrap());
        let dim = track.embed_dim;
        let rows = track.frames[start * dim..(start + span) * dim].to_vec();
        let trimmed = FrameTrack::new(vid.to_string(), dim, rows)?;
        let windows = segment_clips(&trimmed, &video_kept, config.model.t1, config.t2)?;
        summaries.push(VideoSummary {
            video_id: vid.to_string(),
            densest_start_s: start,
            kept_seconds: span,
            kept_comments: video_kept.len(),
            windows: windows.len(),
            trainable_windows: windows
                .iter()
                .filter(|w| w.has_context() && !w.response_comments.is_empty())
                .count(),
        });
        kept.extend(video_kept);
        tracks.insert(vid.to_string(), trimmed);
    }
    if tracks.is_empty() {
        return Err(CliError::Usage(format!(
            "no *.frames.sfeb files in {}",
            raw.display()
        )));
    }

    kept.sort_by(|a, b| {
        a.video_id.cmp(&b.video_id).then(a.time_s.partial_cmp(&b.time_s).unwrap())
    });
    save_comments(&out.join("comments.jsonl"), &kept)?;
    for (vid, track) in &tracks {
        let dim = track.embed_dim;
        write_sfeb(
            &out.join(format!("{vid}.frames.sfeb")),
            (track.frames.len() / dim) as u32,
            dim as u32,
            &track.frames,
        )?;
        // Joint text embeddings from the deterministic pseudo-embedder,
        // indexed by 1-based line number in the written comments file.
        let mut data: Vec<f32> = Vec::new();
        let mut lines: Vec<usize> = Vec::new();
        for (i, c) in kept.iter().enumerate() {
            if c.video_id == *vid {
                data.extend(pseudo_embed(&c.text, dim, seed)?);
                lines.push(i + 1);
            }
        }
        write_sfeb(
            &out.join(format!("{vid}.text.sfeb")),
            lines.len() as u32,
            dim as u32,
            &data,
        )?;
        write_index(&out.join(format!("{vid}.text.idx.json")), &lines)?;
    }

    let vocab = Vocabulary::build(
        kept.iter().map(|c| c.text.as_str()),
        config.min_token_freq,
        config.model.vocab_size,
    )?;
    vocab.save(&out.join("vocab.json"))?;
    let emotes_json =
        serde_json::to_string_pretty(&emotes).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(out.join("emotes.json"), emotes_json)?;
    let summary_json =
        serde_json::to_string_pretty(&summaries).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(logs.join("preprocess.json"), summary_json)?;
    println!(
        "preprocess: {} videos, {} comments kept ({} lines skipped), vocabulary {} in {}",
        summaries.len(),
        kept.len(),
        stats.dropped_empty + stats.rejected_negative_time,
        vocab.size(),
        out.display()
    );
    Ok(())
}

fn cmd_pretrain(cli: &Cli, config: &RunConfig) -> Result<()> {
    let (corpus, vocab) = load_run_corpus(cli, config)?;
    let logs = out_dir(cli, "logs")?;
    let ckpt = out_dir(cli, "checkpoints")?.join("pretrain");
    let mut model = fresh_model(config, &vocab)?;
    let mut adam = crate::training::Adam::new(config.training.adam())?;
    let texts: Vec<String> = corpus.comments.iter().map(|c| c.text.clone()).collect();
    let outcome = pretrain_with_log(
        &mut model,
        &mut adam,
        &texts,
        &vocab,
        &config.training,
        &logs.join("pretrain.csv"),
    )?;
    save_checkpoint(&ckpt, &model, Some(&adam), config.training.pretrain_epochs, &config.training)?;
    let last = outcome.loss_curve.last().map(|p| p.loss).unwrap_or(f64::NAN);
    println!(
        "pretrain: {} epochs, final loss {last:.4}, masked accuracy {:.3}, checkpoint {}",
        config.training.pretrain_epochs,
        outcome.final_accuracy,
        ckpt.display()
    );
    Ok(())
}

fn cmd_train(cli: &Cli, config: &RunConfig) -> Result<()> {
    let (corpus, vocab) = load_run_corpus(cli, config)?;
    let logs = out_dir(cli, "logs")?;
    let ckpt_root = out_dir(cli, "checkpoints")?;
    let train_dir = ckpt_root.join("train");
    let pretrain_dir = ckpt_root.join("pretrain");

    let mut training = config.training.clone();
    training.checkpoint_dir = Some(train_dir.clone());
    let (mut model, mut adam, start_epoch) = if train_dir.join("manifest.json").exists() {
        let ck = load_checkpoint(&train_dir)?;
        let adam = ck
            .adam
            .ok_or_else(|| CliError::Runtime("train checkpoint lacks optimizer state".into()))?;
        println!("train: resuming from epoch {}", ck.epoch);
        (ck.model, adam, ck.epoch)
    } else if pretrain_dir.join("manifest.json").exists() {
        // Warm-start from pretraining with a fresh optimizer.
        let ck = load_checkpoint(&pretrain_dir)?;
        println!("train: starting from the pretrained encoder");
        (ck.model, crate::training::Adam::new(training.adam())?, 0)
    } else {
        (fresh_model(config, &vocab)?, crate::training::Adam::new(training.adam())?, 0)
    };
    let outcome = train(
        &mut model,
        &mut adam,
        &corpus,
        &vocab,
        &training,
        config.uniform_aggregation,
        start_epoch,
    )?;
    write_loss_csv(&logs.join("train.csv"), &outcome.loss_curve)?;
    let last = outcome.loss_curve.last().map(|p| p.loss).unwrap_or(f64::NAN);
    println!(
        "train: epoch {} done, final loss {last:.4}, {} windows skipped, checkpoint {}",
        outcome.final_epoch,
        outcome.skipped_windows,
        train_dir.display()
    );
    Ok(())
}

fn resolve_checkpoint(cli: &Cli, config: &RunConfig) -> Result<PathBuf> {
    if let Some(path) = &config.checkpoint {
        return Ok(path.clone());
    }
    let default = cli.out.join("checkpoints").join("train");
    if default.join("manifest.json").exists() {
        return Ok(default);
    }
    Err(CliError::Usage(format!(
        "missing `checkpoint` config field, and no trained checkpoint at {}",
        default.display()
    )))
}

fn cmd_evaluate(cli: &Cli, config: &RunConfig) -> Result<()> {
    let ckpt = resolve_checkpoint(cli, config)?;
    let model = load_checkpoint(&ckpt)?.model;
    let run = RunConfig { model: model.config.clone(), ..config.clone() };
    let (corpus, vocab) = load_run_corpus(cli, &run)?;
    let reports = out_dir(cli, "reports")?;
    let options = EvalOptions {
        seed: config.training.seed,
        normalize: config.normalize_ll,
        uniform_aggregation: config.uniform_aggregation,
        checkpoint: Some(ckpt.display().to_string()),
    };
    let report = evaluate(&model, &corpus, &vocab, &options)?;
    let json =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(reports.join("eval.json"), json)?;
    println!("{report}");
    println!("report: {}", reports.join("eval.json").display());
    Ok(())
}

fn cmd_generate(cli: &Cli, config: &RunConfig) -> Result<()> {
    let ckpt = resolve_checkpoint(cli, config)?;
    let model = load_checkpoint(&ckpt)?.model.frozen();
    let run = RunConfig { model: model.config.clone(), ..config.clone() };
    let (corpus, vocab) = load_run_corpus(cli, &run)?;
    let reports = out_dir(cli, "reports")?;
    let seed = config.training.seed;
    let strategy = match config.gen_top_k {
        Some(k) => GenStrategy::TopK { k, seed },
        None => GenStrategy::Greedy,
    };
    let max_len = config.gen_max_len.unwrap_or(model.config.p_r);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let path = reports.join("generated.jsonl");
    let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
    let mut count = 0usize;
    for window in corpus.trainable_windows() {
        let enc = encode_window(
            window,
            &corpus,
            &vocab,
            model.config.n_c_eval,
            &model,
            Mode::Eval,
            &mut rng,
            config.uniform_aggregation,
        )?;
        let comment = generate(
            &enc.context,
            &enc.aggregation.video,
            &model,
            &vocab,
            strategy.clone(),
            max_len,
        )?;
        let line = serde_json::json!({
            "window_id": window.id(),
            "generated_text": comment.text,
            "logprob": comment.total_logprob,
        });
        writeln!(file, "{line}")?;
        count += 1;
    }
    file.flush()?;
    println!("generate: {count} comments in {}", path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn args(out: &Path, rest: &[&str]) -> Vec<String> {
        let mut v = vec!["sfat".to_string()];
        v.extend(rest.iter().map(|s| s.to_string()));
        v.push("--out".into());
        v.push(out.display().to_string());
        v
    }

    #[test]
    fn synth_is_byte_identical_across_runs() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for dir in [a.path(), b.path()] {
            let code = run(args(dir, &["synth", "--seed", "7", "--set", "synth.duration_s=90"]));
            assert_eq!(code, 0);
        }
        let ca = std::fs::read(a.path().join("corpus/comments.jsonl")).unwrap();
        let cb = std::fs::read(b.path().join("corpus/comments.jsonl")).unwrap();
        assert_eq!(ca, cb);
        let fa = std::fs::read(a.path().join("corpus/synth000.frames.sfeb")).unwrap();
        let fb = std::fs::read(b.path().join("corpus/synth000.frames.sfeb")).unwrap();
        assert_eq!(fa, fb);
    }

    #[test]
    fn evaluate_without_checkpoint_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(run(args(dir.path(), &["evaluate"])), 2);
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"no_such_key": 1}"#).unwrap();
        let code = run(args(dir.path(), &["synth", "--config", cfg.to_str().unwrap()]));
        assert_eq!(code, 2);
        // --set with a bogus path fails the same way.
        assert_eq!(run(args(dir.path(), &["synth", "--set", "nope.nope=1"])), 2);
    }

    #[test]
    fn set_overrides_reach_the_typed_config() {
        let dir = tempfile::tempdir().unwrap();
        let code = run(args(
            dir.path(),
            &["synth", "--seed", "3", "--set", "synth.n_videos=1", "--set", "synth.duration_s=60"],
        ));
        assert_eq!(code, 0);
        assert!(dir.path().join("corpus/synth000.frames.sfeb").exists());
        assert!(!dir.path().join("corpus/synth001.frames.sfeb").exists());
    }

    #[test]
    fn preprocess_trims_to_the_densest_span_and_writes_artifacts() {
        let raw = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        // 120 s of frames; comments clustered in [60, 90).
        let dim = 16usize;
        let frames: Vec<f32> = (0..120 * dim).map(|i| (i % 7) as f32).collect();
        write_sfeb(&raw.path().join("v.frames.sfeb"), 120, dim as u32, &frames).unwrap();
        // Raw input carries usernames in the `user` field.
        let lines: String = (0..30)
            .map(|i| {
                format!(
                    r#"{{"video_id":"v","time_s":{},"user":"user{i}","text":"hello there <emote:Kappa> {i}"}}"#,
                    60.0 + i as f64
                ) + "\n"
            })
            .collect();
        std::fs::write(raw.path().join("comments.jsonl"), lines).unwrap();
        let cfg = out.path().join("c.json");
        std::fs::write(
            &cfg,
            format!(
                r#"{{"raw_dir": "{}", "densest_span_s": 30,
                     "model": {{"t1": 10, "input_embed_dim": {dim}}}, "t2": 15}}"#,
                raw.path().display()
            ),
        )
        .unwrap();
        let code = run(args(out.path(), &["preprocess", "--config", cfg.to_str().unwrap()]));
        assert_eq!(code, 0);
        let (kept, _) = load_comments(&out.path().join("corpus/comments.jsonl")).unwrap();
        assert_eq!(kept.len(), 30);
        assert!(kept.iter().all(|c| c.time_s < 30.0 && !c.user_hash.is_empty()));
        assert!(kept.iter().all(|c| c.raw_user.is_none()));
        let emotes: Vec<crate::corpus::EmoteCount> = serde_json::from_str(
            &std::fs::read_to_string(out.path().join("corpus/emotes.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(emotes[0].name, "Kappa");
        assert_eq!(emotes[0].count, 30);
        assert!(out.path().join("corpus/vocab.json").exists());
        assert!(out.path().join("corpus/v.text.sfeb").exists());
        // The trimmed corpus loads end to end.
        let corpus = load_corpus(&out.path().join("corpus"), 10, 15).unwrap();
        assert_eq!(corpus.tracks["v"].frames.len(), 30 * dim);
        assert_eq!(corpus.comments.len(), 30);
        assert_eq!(corpus.text_embeds.len(), 30);
    }
}
