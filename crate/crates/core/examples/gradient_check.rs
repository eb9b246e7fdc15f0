//! Compare analytic gradients against central finite differences.

use ciai::corpus::{LabelRegistry, TaskLabel};
use ciai::demo::demo_corpus;
use ciai::encoder::{gradient_check, AttentionClassifier, EncoderConfig, GradientCheckOptions, HeadInit, Vocabulary};

fn main() -> anyhow::Result<()> {
    let corpus = demo_corpus();
    let vocab = Vocabulary::build(corpus.iter().map(|u| u.text.as_str()), 1);
    let config = EncoderConfig {
        d_model: 8,
        n_heads: 2,
        d_k: 4,
        d_v: 4,
        n_layers: 1,
        d_ff: 16,
        max_len: 12,
        dropout_rate: 0.1,
        head_init: HeadInit::Uniform,
        seed: 9,
    };
    let model = AttentionClassifier::new(config, vocab, LabelRegistry::standard())?;
    let seq = model.encode("what am i looking at right now")?;
    let opts = GradientCheckOptions {
        epsilon: 1e-4,
        ..GradientCheckOptions::default()
    };
    let report = gradient_check(&model, &seq, &TaskLabel::new("SCENE-CLASSIFICATION")?, &opts)?;
    for (family, err) in &report.per_family {
        println!("{family:<16} {err:.2e}");
    }
    println!("{} parameters, max relative error {:.2e}", report.checked, report.max_relative_error);
    Ok(())
}
