//! Route commands to task handlers, asking for clarification when the
//! top two classes are close. Scripted input stands in for a terminal.

use std::io::Cursor;
use std::sync::Arc;

use ciai::classifier::BowClassifier;
use ciai::demo::demo_corpus;
use ciai::router::{run_terminal, Router, RouterConfig};
use ciai::statml::{StatKind, StatParams};

fn main() -> anyhow::Result<()> {
    let model = BowClassifier::fit(&demo_corpus(), StatKind::MultinomialNb, &StatParams::default(), 1)?;
    let router = Router::with_stub_handlers(Arc::new(model), RouterConfig::default());

    for text in ["tell me a joke", "how do i feel", "read my brain waves"] {
        let d = router.route(text)?;
        println!("{text:?}: {}", serde_json::to_string(&d)?);
    }

    let script = "tell me a joke\nread my brain waves\n1\n:quit\n";
    let mut out = Vec::new();
    let session = run_terminal(&router, Cursor::new(script), &mut out)?;
    print!("{}", String::from_utf8(out)?);
    println!("{} executed turns", session.transcript().len());
    Ok(())
}
