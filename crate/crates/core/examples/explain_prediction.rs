//! Occlusion attribution: how much each token supports the prediction.

use ciai::classifier::BowClassifier;
use ciai::demo::demo_corpus;
use ciai::eval::occlusion_attribution;
use ciai::statml::{StatKind, StatParams};

fn main() -> anyhow::Result<()> {
    let model = BowClassifier::fit(&demo_corpus(), StatKind::MultinomialNb, &StatParams::default(), 1)?;
    for text in ["tell me a joke about my mood", "what is in front of me", "hello"] {
        let a = occlusion_attribution(&model, text)?;
        println!("{text:?} -> {} ({:.3})", a.predicted, a.baseline_probability);
        for (t, s) in a.tokens.iter().zip(&a.scores) {
            println!("  {t:<10} {s:+.3}");
        }
        for iso in &a.isolated {
            println!("  {:?} alone favors {} ({:.3})", iso.token, iso.label, iso.probability);
        }
    }
    Ok(())
}
