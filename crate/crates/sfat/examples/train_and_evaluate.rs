//! End-to-end: synthesize a corpus, train the full model, rank candidate
//! sets under all three strategies, and decode a few comments.
//!
//! Run with: cargo run --release --example train_and_evaluate

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sfat::corpus::{load_corpus, synth_corpus, SynthConfig, Vocabulary};
use sfat::eval::{evaluate, EvalOptions};
use sfat::model::{encode_window, generate, GenStrategy, Mode, ModelConfig, SfatModel};
use sfat::training::{train, Adam, TrainingConfig};

fn main() {
    let dir = tempfile::tempdir().expect("tempdir");
    let sc = SynthConfig {
        n_videos: 2,
        duration_s: 150,
        dim: 32,
        t1: 4,
        t2: 6,
        seed: 3,
        ..Default::default()
    };
    synth_corpus(&sc, dir.path()).expect("synthesis failed");
    let corpus = load_corpus(dir.path(), sc.t1, sc.t2).expect("load failed");
    let texts: Vec<String> = corpus.comments.iter().map(|c| c.text.clone()).collect();
    let vocab = Vocabulary::build(texts.iter().map(|s| s.as_str()), 1, 512).expect("vocab");

    let mc = ModelConfig {
        l_e: 1,
        l_d: 1,
        d_t: 32,
        d_v: 32,
        heads: 2,
        input_embed_dim: 32,
        t1: 4,
        n_c_train: 2,
        n_c_eval: 3,
        p_c: 12,
        p_r: 12,
        vocab_size: vocab.size(),
        ..Default::default()
    };
    let tc = TrainingConfig {
        train_epochs: 40,
        batch_size: 16,
        learning_rate: 1e-3,
        seed: 3,
        ..Default::default()
    };
    let mut model = SfatModel::init(mc, tc.seed).expect("model init");
    let mut adam = Adam::new(tc.adam()).expect("adam");

    let options = EvalOptions { seed: tc.seed, ..Default::default() };
    let before = evaluate(&model, &corpus, &vocab, &options).expect("eval before");
    println!("before training:\n{before}\n");

    let outcome =
        train(&mut model, &mut adam, &corpus, &vocab, &tc, false, 0).expect("training failed");
    let first = outcome.loss_curve.first().unwrap().loss;
    let last = outcome.loss_curve.last().unwrap().loss;
    println!("training loss {first:.3} -> {last:.3} over {} epochs\n", outcome.final_epoch);

    let after = evaluate(&model, &corpus, &vocab, &options).expect("eval after");
    println!("after training:\n{after}\n");

    let frozen = model.frozen();
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    for window in corpus.trainable_windows().into_iter().take(3) {
        let enc = encode_window(
            window,
            &corpus,
            &vocab,
            frozen.config.n_c_eval,
            &frozen,
            Mode::Eval,
            &mut rng,
            false,
        )
        .expect("encoding failed");
        let comment = generate(
            &enc.context,
            &enc.aggregation.video,
            &frozen,
            &vocab,
            GenStrategy::Greedy,
            frozen.config.p_r,
        )
        .expect("generation failed");
        println!(
            "{}: \"{}\" (logprob {:.2})",
            window.id(),
            comment.text,
            comment.total_logprob
        );
    }
}
