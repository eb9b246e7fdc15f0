//! Train the attention classifier, report validation metrics and
//! round-trip it through a checkpoint.

use ciai::classifier::{load_classifier, TextClassifier};
use ciai::config::Config;
use ciai::corpus::stratified_split;
use ciai::demo::demo_corpus;
use ciai::encoder::{train, AttentionClassifier, Vocabulary};
use ciai::eval::evaluate;

fn main() -> anyhow::Result<()> {
    let mut config = Config::default().with_seed(1);
    // The default two epochs are sized for an augmented training set.
    config.training.epochs = 30;
    let split = stratified_split(&demo_corpus(), config.split.train_fraction, 1)?;

    let vocab = Vocabulary::build(split.train.iter().map(|u| u.text.as_str()), 1);
    let model = AttentionClassifier::new(config.encoder.clone(), vocab, split.train.registry().clone())?;
    let outcome = train(model, &split.train, &config.training)?;
    for e in outcome.history.iter().step_by(5) {
        println!("epoch {:>3}  loss {:.4}  train acc {:.3}", e.epoch, e.mean_loss, e.accuracy);
    }

    let report = evaluate(&outcome.model, &split.validation)?;
    println!("validation accuracy {:.3}, macro F1 {:.3}", report.accuracy, report.macro_f1);

    let path = std::env::temp_dir().join("ciai-example-encoder.ckpt");
    outcome.model.to_checkpoint()?.save(&path)?;
    let restored = load_classifier(&path)?;
    assert_eq!(restored.fingerprint()?, outcome.model.fingerprint()?);
    println!("checkpoint {} ({})", path.display(), &restored.fingerprint()?[..16]);
    Ok(())
}
