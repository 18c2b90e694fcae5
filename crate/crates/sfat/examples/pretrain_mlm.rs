//! Masked-language-model pretraining of the comment encoder on a tiny
//! synthetic corpus. Loss should fall from about ln(vocab) and masked
//! accuracy should rise well above chance.
//!
//! Run with: cargo run --release --example pretrain_mlm

use sfat::corpus::{load_corpus, synth_corpus, SynthConfig, Vocabulary};
use sfat::model::{ModelConfig, SfatModel};
use sfat::training::{pretrain, Adam, TrainingConfig};

fn main() {
    let dir = tempfile::tempdir().expect("tempdir");
    let sc = SynthConfig { n_videos: 2, duration_s: 120, dim: 32, t1: 4, t2: 6, seed: 1, ..Default::default() };
    synth_corpus(&sc, dir.path()).expect("synthesis failed");
    let corpus = load_corpus(dir.path(), sc.t1, sc.t2).expect("load failed");
    let texts: Vec<String> = corpus.comments.iter().map(|c| c.text.clone()).collect();
    let vocab = Vocabulary::build(texts.iter().map(|s| s.as_str()), 1, 512).expect("vocab");

    let mc = ModelConfig {
        l_e: 2,
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
        pretrain_epochs: 40,
        batch_size: 16,
        learning_rate: 1e-3,
        seed: 1,
        ..Default::default()
    };
    let mut model = SfatModel::init(mc, tc.seed).expect("model init");
    let mut adam = Adam::new(tc.adam()).expect("adam");

    println!(
        "pretraining on {} comments, vocabulary {} (chance accuracy {:.3})",
        texts.len(),
        vocab.size(),
        1.0 / vocab.size() as f64
    );
    let outcome = pretrain(&mut model, &mut adam, &texts, &vocab, &tc).expect("pretrain failed");
    for p in outcome.loss_curve.iter().filter(|p| p.step == 0 && p.epoch % 5 == 0) {
        println!("  epoch {:>2}: loss {:.4}", p.epoch, p.loss);
    }
    println!("masked-token accuracy after training: {:.3}", outcome.final_accuracy);
}
