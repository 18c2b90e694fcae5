//! Densest-window selection, clip segmentation and context sampling.

use super::record::{ClipWindow, CommentRecord, FrameTrack};
use super::vocab::{tokenize, TokenSequence, Vocabulary};
use super::{CorpusError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DensestWindow {
    pub start_s: usize,
    /// Set when the comment list was empty and the start defaulted to 0.
    pub empty_input: bool,
}

/// Integer start second in `[0, duration - span]` maximizing the count
/// of comments in `[start, start + span)`; ties break to the smallest
/// start.
pub fn densest_window(
    comments: &[CommentRecord],
    span_s: usize,
    video_duration_s: usize,
) -> Result<DensestWindow> {
    if span_s == 0 || span_s > video_duration_s {
        return Err(CorpusError::Parameter(format!(
            "span {span_s}s does not fit a {video_duration_s}s video"
        )));
    }
    if comments.is_empty() {
        return Ok(DensestWindow { start_s: 0, empty_input: true });
    }
    let mut times: Vec<f64> = comments.iter().map(|c| c.time_s).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best_start = 0usize;
    let mut best_count = 0usize;
    let mut lo = 0usize;
    let mut hi = 0usize;
    for start in 0..=(video_duration_s - span_s) {
        let (a, b) = (start as f64, (start + span_s) as f64);
        while lo < times.len() && times[lo] < a {
            lo += 1;
        }
        while hi < times.len() && times[hi] < b {
            hi += 1;
        }
        let count = hi - lo;
        if count > best_count {
            best_count = count;
            best_start = start;
        }
    }
    Ok(DensestWindow { start_s: best_start, empty_input: false })
}

/// Cut a frame track into non-overlapping clips at t = 0, T2, 2·T2, …
/// with half-open context/response windows; a trailing remainder is
/// dropped. Windows without context comments are kept here and filtered
/// by the trainer.
pub fn segment_clips(
    track: &FrameTrack,
    comments: &[CommentRecord],
    t1: usize,
    t2: usize,
) -> Result<Vec<ClipWindow>> {
    if t1 == 0 || t1 >= t2 {
        return Err(CorpusError::Parameter(format!(
            "segmentation requires 0 < T1 < T2, got T1={t1} T2={t2}"
        )));
    }
    let mut windows = Vec::new();
    let mut t = 0usize;
    while t + t2 <= track.duration_s {
        let (a, b, c) = (t as f64, (t + t1) as f64, (t + t2) as f64);
        let context: Vec<CommentRecord> = comments
            .iter()
            .filter(|cr| cr.video_id == track.video_id && cr.time_s >= a && cr.time_s < b)
            .cloned()
            .collect();
        let response: Vec<CommentRecord> = comments
            .iter()
            .filter(|cr| cr.video_id == track.video_id && cr.time_s >= b && cr.time_s < c)
            .cloned()
            .collect();
        let frame_rows =
            track.frames[t * track.embed_dim..(t + t1) * track.embed_dim].to_vec();
        let window = ClipWindow {
            video_id: track.video_id.clone(),
            t,
            t1,
            t2,
            context_comments: context,
            response_comments: response,
            embed_dim: track.embed_dim,
            frame_rows,
        };
        window.validate()?;
        windows.push(window);
        t += t2;
    }
    Ok(windows)
}

/// Context sample for one window: the `n_c` latest comments (original
/// order preserved), padded with PAD-only sequences, zero embeddings and
/// a validity mask when fewer exist.
#[derive(Debug, Clone)]
pub struct SampledContext {
    pub sequences: Vec<TokenSequence>,
    /// Joint text embedding rows aligned with `sequences`.
    pub embeds: Vec<Vec<f32>>,
    pub mask: Vec<bool>,
}

pub fn sample_context(
    window: &ClipWindow,
    n_c: usize,
    vocab: &Vocabulary,
    p_c: usize,
    embed_of: &mut dyn FnMut(&CommentRecord) -> Result<Vec<f32>>,
) -> Result<SampledContext> {
    if n_c == 0 {
        return Err(CorpusError::Parameter("n_c must be at least 1".into()));
    }
    // Indices of the n_c latest by time; comments are kept in their
    // original order afterwards.
    let mut order: Vec<usize> = (0..window.context_comments.len()).collect();
    order.sort_by(|&a, &b| {
        window.context_comments[a]
            .time_s
            .partial_cmp(&window.context_comments[b].time_s)
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut chosen: Vec<usize> = order.into_iter().rev().take(n_c).collect();
    chosen.sort_unstable();

    let mut sequences = Vec::with_capacity(n_c);
    let mut embeds = Vec::with_capacity(n_c);
    let mut mask = Vec::with_capacity(n_c);
    for &idx in &chosen {
        let comment = &window.context_comments[idx];
        sequences.push(tokenize(&comment.text, vocab, p_c));
        embeds.push(embed_of(comment)?);
        mask.push(true);
    }
    while sequences.len() < n_c {
        sequences.push(TokenSequence::padding_only(p_c));
        embeds.push(vec![0.0; window.embed_dim]);
        mask.push(false);
    }
    Ok(SampledContext { sequences, embeds, mask })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn comment(t: f64, text: &str) -> CommentRecord {
        CommentRecord {
            video_id: "v".into(),
            time_s: t,
            user_hash: "u".into(),
            raw_user: None,
            text: text.into(),
        }
    }

    fn brute_force_densest(times: &[f64], span: usize, duration: usize) -> usize {
        let mut best = (0usize, 0usize);
        for start in 0..=(duration - span) {
            let count = times
                .iter()
                .filter(|t| **t >= start as f64 && **t < (start + span) as f64)
                .count();
            if count > best.1 {
                best = (start, count);
            }
        }
        best.0
    }

    #[test]
    fn densest_finds_unique_cluster() {
        // Cluster spans [100, 199.9]; only the window starting at 100
        // covers every comment.
        let comments: Vec<CommentRecord> =
            (0..50).map(|i| comment(100.0 + i as f64 * 99.9 / 49.0, "x")).collect();
        let w = densest_window(&comments, 100, 600).unwrap();
        assert_eq!(w.start_s, 100);
    }

    #[test]
    fn densest_ties_break_to_earliest() {
        let comments: Vec<CommentRecord> =
            (0..10).map(|i| comment(i as f64 * 60.0, "x")).collect();
        let w = densest_window(&comments, 600, 600).unwrap();
        assert_eq!(w.start_s, 0);
    }

    #[test]
    fn densest_empty_input_warns() {
        let w = densest_window(&[], 10, 100).unwrap();
        assert!(w.empty_input);
        assert_eq!(w.start_s, 0);
    }

    #[test]
    fn densest_matches_brute_force_on_random_streams() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let times: Vec<f64> = (0..500).map(|_| rng.gen::<f64>() * 600.0).collect();
        let comments: Vec<CommentRecord> = times.iter().map(|t| comment(*t, "x")).collect();
        let w = densest_window(&comments, 60, 600).unwrap();
        assert_eq!(w.start_s, brute_force_densest(&times, 60, 600));
    }

    fn track(duration: usize) -> FrameTrack {
        FrameTrack::new("v".into(), 4, vec![0.5; duration * 4]).unwrap()
    }

    #[test]
    fn ninety_seconds_gives_three_clips() {
        let clips = segment_clips(&track(90), &[], 20, 30).unwrap();
        let starts: Vec<usize> = clips.iter().map(|c| c.t).collect();
        assert_eq!(starts, [0, 30, 60]);
        assert!(clips.iter().all(|c| c.frame_rows.len() == 20 * 4));
    }

    #[test]
    fn boundary_comment_lands_in_response_window() {
        let comments = [comment(20.0, "boundary")];
        let clips = segment_clips(&track(30), &comments, 20, 30).unwrap();
        assert!(clips[0].context_comments.is_empty());
        assert_eq!(clips[0].response_comments.len(), 1);
    }

    #[test]
    fn t1_not_less_than_t2_is_rejected() {
        assert!(matches!(
            segment_clips(&track(90), &[], 30, 30),
            Err(CorpusError::Parameter(_))
        ));
    }

    #[test]
    fn segmentation_preserves_comment_multiset() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let comments: Vec<CommentRecord> = (0..200)
            .map(|i| comment(rng.gen::<f64>() * 90.0, &format!("c{i}")))
            .collect();
        let clips = segment_clips(&track(90), &comments, 20, 30).unwrap();
        let mut collected: Vec<String> = clips
            .iter()
            .flat_map(|c| c.context_comments.iter().chain(&c.response_comments))
            .map(|c| c.text.clone())
            .collect();
        let mut expected: Vec<String> = comments
            .iter()
            .filter(|c| c.time_s < 90.0)
            .map(|c| c.text.clone())
            .collect();
        collected.sort();
        expected.sort();
        assert_eq!(collected, expected);
    }

    fn sample_vocab() -> Vocabulary {
        Vocabulary::build(["a a b b c c d d e e f f g g h h"], 2, 64).unwrap()
    }

    fn window_with_context(n: usize) -> ClipWindow {
        let texts = ["a", "b", "c", "d", "e", "f", "g", "h"];
        ClipWindow {
            video_id: "v".into(),
            t: 0,
            t1: 20,
            t2: 30,
            context_comments: (0..n).map(|i| comment(i as f64 * 2.0, texts[i])).collect(),
            response_comments: vec![],
            embed_dim: 4,
            frame_rows: vec![0.1; 20 * 4],
        }
    }

    #[test]
    fn oversupply_takes_latest_in_original_order() {
        let w = window_with_context(8);
        let v = sample_vocab();
        let mut embed = |c: &CommentRecord| Ok(vec![c.time_s as f32; 4]);
        let s = sample_context(&w, 5, &v, 4, &mut embed).unwrap();
        // 5 largest times, chronological order preserved: d e f g h.
        let got: Vec<usize> = s.sequences.iter().map(|q| q.ids[0]).collect();
        let want: Vec<usize> = ["d", "e", "f", "g", "h"].iter().map(|t| v.id(t)).collect();
        assert_eq!(got, want);
        assert!(s.mask.iter().all(|m| *m));
    }

    #[test]
    fn scarcity_pads_with_mask() {
        let w = window_with_context(2);
        let v = sample_vocab();
        let mut embed = |_: &CommentRecord| Ok(vec![1.0; 4]);
        let s = sample_context(&w, 5, &v, 4, &mut embed).unwrap();
        assert_eq!(s.mask, [true, true, false, false, false]);
        assert!(s.sequences[2].is_padding_only());
        assert!(s.embeds[4].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn single_comment_single_slot() {
        let w = window_with_context(1);
        let v = sample_vocab();
        let mut embed = |_: &CommentRecord| Ok(vec![1.0; 4]);
        let s = sample_context(&w, 1, &v, 4, &mut embed).unwrap();
        assert_eq!(s.sequences[0].ids[0], v.id("a"));
    }

    proptest! {
        // densest_window equals exhaustive search on random streams.
        #[test]
        fn densest_equals_exhaustive(
            seed in 0u64..60,
            n in 1usize..120,
            span in 5usize..80,
        ) {
            let duration = 200usize;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let times: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * duration as f64).collect();
            let comments: Vec<CommentRecord> = times.iter().map(|t| comment(*t, "x")).collect();
            let w = densest_window(&comments, span, duration).unwrap();
            prop_assert_eq!(w.start_s, brute_force_densest(&times, span, duration));
        }

        // Context and response comment sets are disjoint with half-open
        // boundaries for any stream.
        #[test]
        fn windows_partition_halfopen(seed in 0u64..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let comments: Vec<CommentRecord> = (0..80)
                .map(|i| comment((rng.gen::<f64>() * 90.0 * 2.0).round() / 2.0, &format!("c{i}")))
                .collect();
            let clips = segment_clips(&track(90), &comments, 20, 30).unwrap();
            for c in &clips {
                let b = (c.t + c.t1) as f64;
                prop_assert!(c.context_comments.iter().all(|x| x.time_s < b));
                prop_assert!(c.response_comments.iter().all(|x| x.time_s >= b));
            }
        }
    }
}
