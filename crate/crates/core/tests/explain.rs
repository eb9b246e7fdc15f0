mod common;

use ciai::classifier::TextClassifier;
use ciai::corpus::{LabelRegistry, TaskLabel};
use ciai::demo::demo_corpus;
use ciai::encoder::{AttentionClassifier, EncoderConfig, HeadInit, Vocabulary};
use ciai::eval::{occlusion_attribution, occlusion_attribution_with};
use ciai::text::tokenize;

fn untrained() -> AttentionClassifier {
    let corpus = demo_corpus();
    let vocab = Vocabulary::build(corpus.iter().map(|u| u.text.as_str()), 1);
    let cfg = EncoderConfig {
        d_model: 16,
        n_heads: 2,
        d_k: 8,
        d_v: 8,
        n_layers: 2,
        d_ff: 32,
        max_len: 24,
        dropout_rate: 0.1,
        head_init: HeadInit::Uniform,
        seed: 17,
    };
    AttentionClassifier::new(cfg, vocab, LabelRegistry::standard()).unwrap()
}

#[test]
fn occlusion_matches_direct_forward_passes() {
    let model = untrained();
    let text = "please tell me how i am feeling today";
    let a = occlusion_attribution(&model, text).unwrap();
    let tokens = tokenize(text);
    assert_eq!(a.tokens, tokens);
    let full = model.forward(&model.vocab().encode_tokens(&tokens, 24).unwrap()).unwrap();
    let y = full.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(a.predicted, model.labels().label(y).as_str());
    for i in 0..tokens.len() {
        let mut occluded = tokens.clone();
        // Any out-of-vocabulary token maps to the unknown index.
        occluded[i] = "qqqzzzunseen".into();
        let p = model.forward(&model.vocab().encode_tokens(&occluded, 24).unwrap()).unwrap();
        let want = full[y].ln() - p[y].ln();
        assert!((a.scores[i] - want).abs() < 1e-12, "token {i}: {} vs {want}", a.scores[i]);
    }
}

#[test]
fn strong_negatives_are_isolated() {
    let model = common::naive_bayes();
    let text = "tell me a joke about how sad i feel";
    let none = occlusion_attribution_with(&model, text, f64::INFINITY).unwrap();
    let some = occlusion_attribution_with(&model, text, 0.0).unwrap();
    assert!(none.isolated.is_empty());
    let negatives = some.scores.iter().filter(|&&s| s <= 0.0).count();
    assert_eq!(some.isolated.len(), negatives);
    for iso in &some.isolated {
        let p = model.predict_tokens(&[iso.token.clone()]).unwrap();
        let label = model.labels().index_of(&TaskLabel::new(&iso.label).unwrap()).unwrap();
        assert_eq!(p[label], iso.probability);
    }
}
