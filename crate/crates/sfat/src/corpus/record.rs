//! Core corpus data types.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Result};

/// One chat comment, anchored to a second offset from video start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub video_id: String,
    pub time_s: f64,
    #[serde(default)]
    pub user_hash: String,
    /// Raw username pending anonymization; never written back out.
    #[serde(skip_serializing, default, rename = "user")]
    pub raw_user: Option<String>,
    pub text: String,
}

impl CommentRecord {
    pub fn key(&self) -> CommentKey {
        CommentKey {
            video_id: self.video_id.clone(),
            time_bits: self.time_s.to_bits(),
            text_hash: fnv1a(self.text.as_bytes()),
        }
    }
}

/// Stable lookup key for a comment's joint text embedding.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CommentKey {
    pub video_id: String,
    pub time_bits: u64,
    pub text_hash: u64,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Per-video sequence of precomputed joint frame embeddings, one row
/// per whole second.
#[derive(Debug, Clone)]
pub struct FrameTrack {
    pub video_id: String,
    pub embed_dim: usize,
    pub duration_s: usize,
    /// Row-major `[duration_s, embed_dim]`.
    pub frames: Vec<f32>,
}

impl FrameTrack {
    pub fn new(video_id: String, embed_dim: usize, frames: Vec<f32>) -> Result<Self> {
        if embed_dim == 0 || frames.len() % embed_dim != 0 {
            return Err(CorpusError::Length(format!(
                "frame payload of {} floats is not a multiple of dim {}",
                frames.len(),
                embed_dim
            )));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(CorpusError::Format(format!(
                "frame track for {video_id} contains non-finite values"
            )));
        }
        let duration_s = frames.len() / embed_dim;
        Ok(FrameTrack { video_id, embed_dim, duration_s, frames })
    }

    pub fn row(&self, second: usize) -> &[f32] {
        &self.frames[second * self.embed_dim..(second + 1) * self.embed_dim]
    }
}

/// One training/evaluation unit: a context window `[t, t+T1)` and a
/// response window `[t+T1, t+T2)` with the frames and comments inside.
#[derive(Debug, Clone)]
pub struct ClipWindow {
    pub video_id: String,
    pub t: usize,
    pub t1: usize,
    pub t2: usize,
    pub context_comments: Vec<CommentRecord>,
    pub response_comments: Vec<CommentRecord>,
    pub embed_dim: usize,
    /// Row-major `[t1, embed_dim]`.
    pub frame_rows: Vec<f32>,
}

impl ClipWindow {
    pub fn validate(&self) -> Result<()> {
        if self.t1 == 0 || self.t1 >= self.t2 {
            return Err(CorpusError::Parameter(format!(
                "window requires 0 < T1 < T2, got T1={} T2={}",
                self.t1, self.t2
            )));
        }
        if self.frame_rows.len() != self.t1 * self.embed_dim {
            return Err(CorpusError::Length(format!(
                "window at t={} has {} frame floats, expected {}",
                self.t,
                self.frame_rows.len(),
                self.t1 * self.embed_dim
            )));
        }
        let (a, b, c) =
            (self.t as f64, (self.t + self.t1) as f64, (self.t + self.t2) as f64);
        for cr in &self.context_comments {
            if !(cr.time_s >= a && cr.time_s < b) {
                return Err(CorpusError::Format(format!(
                    "context comment at {} outside [{a}, {b})",
                    cr.time_s
                )));
            }
        }
        for cr in &self.response_comments {
            if !(cr.time_s >= b && cr.time_s < c) {
                return Err(CorpusError::Format(format!(
                    "response comment at {} outside [{b}, {c})",
                    cr.time_s
                )));
            }
        }
        Ok(())
    }

    pub fn has_context(&self) -> bool {
        !self.context_comments.is_empty()
    }

    pub fn id(&self) -> String {
        format!("{}@{}", self.video_id, self.t)
    }
}

/// A loaded corpus: frame tracks, comments, derived clip windows and the
/// joint text-embedding table.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub tracks: BTreeMap<String, FrameTrack>,
    pub comments: Vec<CommentRecord>,
    pub windows: Vec<ClipWindow>,
    pub text_embeds: BTreeMap<CommentKey, Vec<f32>>,
    pub embed_dim: usize,
}

impl Corpus {
    /// Joint text embedding for a comment; unit norm is enforced when
    /// the table is populated.
    pub fn embedding(&self, comment: &CommentRecord) -> Result<&[f32]> {
        self.text_embeds
            .get(&comment.key())
            .map(|v| v.as_slice())
            .ok_or_else(|| {
                CorpusError::Missing(format!(
                    "no joint text embedding for comment at {}s in {}",
                    comment.time_s, comment.video_id
                ))
            })
    }

    /// Windows usable for training: non-empty context and response.
    pub fn trainable_windows(&self) -> Vec<&ClipWindow> {
        self.windows
            .iter()
            .filter(|w| w.has_context() && !w.response_comments.is_empty())
            .collect()
    }
}

/// Normalize an embedding row to unit L2 norm.
pub(crate) fn unit_normalize(v: &mut [f32]) -> Result<()> {
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if !norm.is_finite() || norm < 1e-12 {
        return Err(CorpusError::Format("zero or non-finite embedding row".into()));
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    Ok(())
}
