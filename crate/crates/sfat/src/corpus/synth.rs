//! Synthetic planted-key-frame corpus generator and the on-disk corpus
//! loader for the layout it emits.
//!
//! Each context window mentions three topics in chat but only one is
//! true, and every frame of the window carries one of the three topics
//! plus a sync tag; only the key frame's tag matches the tag in the
//! window's comments. The frames alone are structurally identical, so a
//! frame-only encoder cannot find the key, and a uniform frame average
//! superimposes the three topics symmetrically, losing the topic-tag
//! binding. Only per-frame comparison against the chat — exactly the
//! aggregation mechanism under test — binds the matching tag to its
//! topic and resolves the response.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::jsonl::save_comments;
use super::pseudo::pseudo_embed;
use super::record::{unit_normalize, CommentRecord, Corpus, FrameTrack};
use super::sfeb::{read_index, read_sfeb, write_index, write_sfeb};
use super::window::segment_clips;
use super::{CorpusError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_videos: usize,
    pub duration_s: usize,
    pub vocab_size: usize,
    pub dim: usize,
    pub t1: usize,
    pub t2: usize,
    pub n_topics: usize,
    pub context_per_window: usize,
    pub response_per_window: usize,
    /// When false, no key frame is planted: all frames are noise.
    pub planted_rule: bool,
    /// Index of the first video; video content is a pure function of
    /// (seed, video index), so disjoint index ranges with one seed give
    /// disjoint train/held-out corpora in a shared embedding space.
    pub first_video: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_videos: 2,
            duration_s: 300,
            vocab_size: 256,
            dim: 32,
            t1: 20,
            t2: 30,
            n_topics: 24,
            context_per_window: 4,
            response_per_window: 3,
            planted_rule: true,
            first_video: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedKey {
    pub video_id: String,
    pub t: usize,
    /// Absolute second of the key frame within the video.
    pub key_second: usize,
    pub topic_token: String,
}

#[derive(Debug, Clone)]
pub struct SynthSummary {
    pub windows: usize,
    pub comments: usize,
    pub files: Vec<PathBuf>,
}

fn topic_token(i: usize) -> String {
    format!("topic{i:02}")
}

fn video_id(v: usize) -> String {
    format!("synth{v:03}")
}

/// Generate a synthetic corpus on disk. Byte-identical for identical
/// configs.
pub fn synth_corpus(config: &SynthConfig, out_dir: &Path) -> Result<SynthSummary> {
    if config.n_videos == 0
        || config.t1 == 0
        || config.t1 >= config.t2
        || config.t2 > config.duration_s
        || config.n_topics < 4
        || config.context_per_window == 0
        || config.response_per_window == 0
    {
        return Err(CorpusError::Parameter("invalid synthetic corpus config".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut all_comments: Vec<CommentRecord> = Vec::new();
    let mut planted: Vec<PlantedKey> = Vec::new();
    let mut files = Vec::new();
    let mut windows = 0usize;

    for v in config.first_video..config.first_video + config.n_videos {
        let vid = video_id(v);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1).wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(v as u64));
        // Noise frames everywhere first.
        let mut frames = Vec::with_capacity(config.duration_s * config.dim);
        for sec in 0..config.duration_s {
            frames.extend(pseudo_embed(&format!("noise {vid} {sec}"), config.dim, config.seed)?);
        }
        let mut video_comments = Vec::new();
        let mut t = 0usize;
        while t + config.t2 <= config.duration_s {
            windows += 1;
            // Topics come in fixed disjoint triples and chat always names
            // the whole (sorted) triple, so identical context texts recur
            // across windows whose true topics differ: the text-to-reply
            // mapping cannot be memorized and only the key frame resolves
            // which member of the triple is true.
            let triple = 3 * rng.gen_range(0..config.n_topics / 3);
            let topic = triple + rng.gen_range(0..3);
            let decoys: Vec<usize> = (triple..triple + 3).filter(|&c| c != topic).collect();
            // Per-window sync tags: chat carries tag 0, and each planted
            // frame carries its own tag; only the key frame's matches.
            let mut tags: Vec<usize> = Vec::with_capacity(3);
            while tags.len() < 3 {
                let cand = rng.gen_range(0..8);
                if !tags.contains(&cand) {
                    tags.push(cand);
                }
            }
            if config.planted_rule {
                let key_second = t + rng.gen_range(0..config.t1);
                // Key frame: true topic bound to the chat's sync tag.
                let key_vec = pseudo_embed(
                    &format!("{} sync{}", topic_token(topic), tags[0]),
                    config.dim,
                    config.seed,
                )?;
                frames[key_second * config.dim..(key_second + 1) * config.dim]
                    .copy_from_slice(&key_vec);
                // Decoy frames: the mentioned decoy topics bound to
                // non-matching tags. Structurally identical to the key,
                // so frames alone cannot reveal which one is true.
                let mut rest: Vec<usize> =
                    (t..t + config.t1).filter(|&s| s != key_second).collect();
                rest.shuffle(&mut rng);
                for ((d, tag), &sec) in decoys.iter().zip(&tags[1..]).zip(&rest) {
                    let decoy_vec = pseudo_embed(
                        &format!("{} sync{tag}", topic_token(*d)),
                        config.dim,
                        config.seed,
                    )?;
                    frames[sec * config.dim..(sec + 1) * config.dim].copy_from_slice(&decoy_vec);
                }
                planted.push(PlantedKey {
                    video_id: vid.clone(),
                    t,
                    key_second,
                    topic_token: topic_token(topic),
                });
            }
            // Context comments name the sorted triple plus the window's
            // sync tag: chat alone is symmetric in the three topics, so
            // nothing but the key frame identifies the true one. All
            // comments of a window share one text so the corpus-wide
            // distractor pool is not swamped by unique context strings.
            let mention: Vec<String> = (triple..triple + 3).map(topic_token).collect();
            let context_text = format!("{} sync{}", mention.join(" "), tags[0]);
            for i in 0..config.context_per_window {
                let time = t as f64 + (i as f64 + 0.5) * config.t1 as f64 / config.context_per_window as f64;
                video_comments.push(CommentRecord {
                    video_id: vid.clone(),
                    time_s: time,
                    user_hash: format!("u{:03}", rng.gen_range(0..40)),
                    raw_user: None,
                    text: context_text.clone(),
                });
            }
            // Response comments name the true topic token (plus a small
            // noise token), so generated output is directly checkable
            // against the planted key.
            let span = config.t2 - config.t1;
            for j in 0..config.response_per_window {
                let time = (t + config.t1) as f64
                    + (j as f64 + 0.5) * span as f64 / config.response_per_window as f64;
                video_comments.push(CommentRecord {
                    video_id: vid.clone(),
                    time_s: time,
                    user_hash: format!("u{:03}", rng.gen_range(0..40)),
                    raw_user: None,
                    text: format!("{} nice{}", topic_token(topic), rng.gen_range(0..7)),
                });
            }
            t += config.t2;
        }

        let frames_path = out_dir.join(format!("{vid}.frames.sfeb"));
        write_sfeb(&frames_path, config.duration_s as u32, config.dim as u32, &frames)?;
        files.push(frames_path);
        all_comments.extend(video_comments);
    }

    // One global JSONL, grouped by video and sorted by time within it.
    all_comments.sort_by(|a, b| {
        a.video_id
            .cmp(&b.video_id)
            .then(a.time_s.partial_cmp(&b.time_s).unwrap())
    });
    let comments_path = out_dir.join("comments.jsonl");
    save_comments(&comments_path, &all_comments)?;
    files.push(comments_path);

    // Per-video joint text embeddings, row order = JSONL order, with a
    // sidecar index of 1-based line numbers.
    for v in config.first_video..config.first_video + config.n_videos {
        let vid = video_id(v);
        let mut rows = Vec::new();
        let mut lines = Vec::new();
        for (i, c) in all_comments.iter().enumerate() {
            if c.video_id == vid {
                rows.extend(pseudo_embed(&c.text, config.dim, config.seed)?);
                lines.push(i + 1);
            }
        }
        let text_path = out_dir.join(format!("{vid}.text.sfeb"));
        write_sfeb(&text_path, lines.len() as u32, config.dim as u32, &rows)?;
        let idx_path = out_dir.join(format!("{vid}.text.idx.json"));
        write_index(&idx_path, &lines)?;
        files.push(text_path);
        files.push(idx_path);
    }

    if config.planted_rule {
        let planted_path = out_dir.join("planted.json");
        let w = std::io::BufWriter::new(std::fs::File::create(&planted_path)?);
        serde_json::to_writer_pretty(w, &planted)
            .map_err(|e| CorpusError::Format(e.to_string()))?;
        files.push(planted_path);
    }

    Ok(SynthSummary { windows, comments: all_comments.len(), files })
}

pub fn load_planted(dir: &Path) -> Result<Vec<PlantedKey>> {
    let r = std::io::BufReader::new(std::fs::File::open(dir.join("planted.json"))?);
    serde_json::from_reader(r).map_err(|e| CorpusError::Format(e.to_string()))
}

/// Load a corpus directory (frames + text SFEB files + comments JSONL)
/// and segment it into clip windows.
pub fn load_corpus(dir: &Path, t1: usize, t2: usize) -> Result<Corpus> {
    let comments_path = dir.join("comments.jsonl");
    let content = std::fs::read_to_string(&comments_path)?;
    let mut by_line: BTreeMap<usize, CommentRecord> = BTreeMap::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: CommentRecord = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if record.time_s.is_finite() && record.time_s >= 0.0 && !record.text.is_empty() {
            by_line.insert(i + 1, record);
        }
    }

    let mut corpus = Corpus::default();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for path in entries {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let Some(vid) = name.strip_suffix(".frames.sfeb") else { continue };
        let (_, cols, data) = read_sfeb(&path)?;
        let track = FrameTrack::new(vid.to_string(), cols as usize, data)?;
        if corpus.embed_dim == 0 {
            corpus.embed_dim = track.embed_dim;
        } else if corpus.embed_dim != track.embed_dim {
            return Err(CorpusError::Format(format!(
                "frame dim {} for {vid} differs from corpus dim {}",
                track.embed_dim, corpus.embed_dim
            )));
        }

        let text_path = dir.join(format!("{vid}.text.sfeb"));
        if text_path.exists() {
            let (rows, tcols, tdata) = read_sfeb(&text_path)?;
            let lines = read_index(&dir.join(format!("{vid}.text.idx.json")))?;
            if lines.len() != rows as usize {
                return Err(CorpusError::Length(format!(
                    "index for {vid} has {} entries for {rows} embedding rows",
                    lines.len()
                )));
            }
            if tcols as usize != track.embed_dim {
                return Err(CorpusError::Format(format!(
                    "text embedding dim {tcols} for {vid} differs from frame dim {}",
                    track.embed_dim
                )));
            }
            for (row, line) in lines.iter().enumerate() {
                let record = by_line.get(line).ok_or_else(|| {
                    CorpusError::Missing(format!("index for {vid} points at missing line {line}"))
                })?;
                let mut embed =
                    tdata[row * track.embed_dim..(row + 1) * track.embed_dim].to_vec();
                unit_normalize(&mut embed)?;
                corpus.text_embeds.insert(record.key(), embed);
            }
        }
        corpus.tracks.insert(vid.to_string(), track);
    }
    if corpus.tracks.is_empty() {
        return Err(CorpusError::Missing(format!("no *.frames.sfeb files in {}", dir.display())));
    }

    corpus.comments = by_line.into_values().collect();
    corpus
        .comments
        .sort_by(|a, b| a.video_id.cmp(&b.video_id).then(a.time_s.partial_cmp(&b.time_s).unwrap()));
    for track in corpus.tracks.values() {
        corpus.windows.extend(segment_clips(track, &corpus.comments, t1, t2)?);
    }
    Ok(corpus)
}
