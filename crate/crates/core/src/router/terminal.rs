//! Line-oriented chat loop with the same decision logic as the service.

use std::io::{BufRead, Write};

use super::{ChatSession, Choice, Router, RouterError, RoutingDecision};
use crate::eval::occlusion_attribution;

const HELP: &str = "type a command; answer clarifications with 1 or 2; :explain toggles attributions; :quit exits";

/// Runs until end of input or `:quit`; returns the finished session.
pub fn run_terminal(router: &Router, input: impl BufRead, mut output: impl Write) -> std::io::Result<ChatSession> {
    let mut session = ChatSession::new("terminal");
    let mut explain = false;
    writeln!(output, "{HELP}")?;
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        match line {
            "" => continue,
            ":quit" | ":q" => break,
            ":explain" => {
                explain = !explain;
                writeln!(output, "explain {}", if explain { "on" } else { "off" })?;
                continue;
            }
            _ => {}
        }
        let turn = if session.pending().is_some() {
            line.parse::<Choice>().and_then(|c| session.resolve_clarification(router, c))
        } else {
            session.submit(router, line)
        };
        match turn {
            Ok(turn) => {
                match &turn.decision {
                    RoutingDecision::Execute { label, probability, .. } => {
                        writeln!(output, "{label} ({probability:.3})")?;
                        writeln!(output, "{}", turn.reply)?;
                    }
                    RoutingDecision::Clarify { candidates, question, .. } => {
                        writeln!(output, "{question}")?;
                        for (i, c) in candidates.iter().enumerate() {
                            writeln!(output, "  {}) {} ({:.3})", i + 1, c.label, c.probability)?;
                        }
                    }
                }
                if explain && session.pending().is_none() {
                    if let Ok(a) = occlusion_attribution(router.classifier(), line) {
                        let parts: Vec<String> = a.tokens.iter().zip(&a.scores).map(|(t, s)| format!("{t}:{s:+.3}")).collect();
                        writeln!(output, "  {}", parts.join(" "))?;
                    }
                }
            }
            Err(e @ RouterError::InvalidChoice(_)) => writeln!(output, "{e}; answer 1 or 2")?,
            Err(e) => writeln!(output, "error: {e}")?,
        }
    }
    Ok(session)
}
