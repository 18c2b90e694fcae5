//! Generate a small synthetic chat corpus and inspect what the
//! preprocessing pipeline makes of it.
//!
//! Run with: cargo run --example synth_corpus

use sfat::corpus::{densest_window, load_corpus, load_planted, synth_corpus, SynthConfig};

fn main() {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = SynthConfig {
        n_videos: 2,
        duration_s: 180,
        dim: 32,
        t1: 10,
        t2: 15,
        seed: 7,
        ..Default::default()
    };
    let summary = synth_corpus(&config, dir.path()).expect("synthesis failed");
    println!(
        "wrote {} comments across {} windows into {} files",
        summary.comments,
        summary.windows,
        summary.files.len()
    );

    let corpus = load_corpus(dir.path(), config.t1, config.t2).expect("load failed");
    println!(
        "loaded {} comments, {} frame tracks, {} windows ({} trainable)",
        corpus.comments.len(),
        corpus.tracks.len(),
        corpus.windows.len(),
        corpus.trainable_windows().len()
    );

    for (vid, track) in &corpus.tracks {
        let video_comments: Vec<_> =
            corpus.comments.iter().filter(|c| &c.video_id == vid).cloned().collect();
        let dw = densest_window(&video_comments, 30, track.frames.len() / track.embed_dim)
            .expect("densest window");
        println!("{vid}: densest 30 s span starts at {} s", dw.start_s);
    }

    // Each window hides one "key" frame whose embedding matches the true
    // topic; a trained aggregator should learn to up-weight it.
    let planted = load_planted(dir.path()).expect("planted sidecar");
    println!("{} planted key frames, e.g. {:?}", planted.len(), planted.first().unwrap());

    let w = corpus.trainable_windows()[0];
    println!(
        "first window {}: {} context / {} response comments",
        w.id(),
        w.context_comments.len(),
        w.response_comments.len()
    );
    for c in w.context_comments.iter().take(3) {
        println!("  [{:6.1}s] {}", c.time_s, c.text);
    }
}
