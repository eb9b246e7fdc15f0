//! Leave-one-out occlusion attribution with UNK substitution.

use serde::{Deserialize, Serialize};

use super::Result;
use crate::classifier::{ClassifierError, TextClassifier};
use crate::encoder::tensor::argmax;
use crate::text::{tokenize, UNK_TOKEN};

/// Scores at or below `-STRONG_NEGATIVE` count as strongly negative.
pub const STRONG_NEGATIVE: f64 = 0.1;

/// The class a single token is assigned when classified alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolatedToken {
    pub position: usize,
    pub token: String,
    pub label: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub tokens: Vec<String>,
    /// `ln p(ŷ | text) − ln p(ŷ | text with token t → UNK)`; positive values
    /// support the prediction.
    pub scores: Vec<f64>,
    pub predicted: String,
    pub baseline_probability: f64,
    pub probabilities: Vec<f64>,
    /// Strongly negative tokens with the class each favors alone. For a
    /// single-token text this holds the token itself and `scores` is `[0]`.
    pub isolated: Vec<IsolatedToken>,
    pub single_token: bool,
}

pub fn occlusion_attribution(model: &dyn TextClassifier, text: &str) -> Result<Attribution> {
    occlusion_attribution_with(model, text, STRONG_NEGATIVE)
}

pub fn occlusion_attribution_with(model: &dyn TextClassifier, text: &str, strong_negative: f64) -> Result<Attribution> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(ClassifierError::EmptyInput.into());
    }
    let labels = model.labels();
    let probabilities = model.predict_tokens(&tokens)?;
    let predicted = argmax(&probabilities);
    let base = probabilities[predicted];
    let alone = |position: usize| -> Result<IsolatedToken> {
        let row = model.predict_tokens(&tokens[position..=position])?;
        let k = argmax(&row);
        Ok(IsolatedToken {
            position,
            token: tokens[position].clone(),
            label: labels.label(k).to_string(),
            probability: row[k],
        })
    };
    if tokens.len() == 1 {
        return Ok(Attribution {
            isolated: vec![alone(0)?],
            scores: vec![0.0],
            predicted: labels.label(predicted).to_string(),
            baseline_probability: base,
            probabilities,
            tokens,
            single_token: true,
        });
    }
    let mut scores = Vec::with_capacity(tokens.len());
    for t in 0..tokens.len() {
        let mut occluded = tokens.clone();
        occluded[t] = UNK_TOKEN.to_string();
        let row = model.predict_tokens(&occluded)?;
        scores.push(base.ln() - row[predicted].ln());
    }
    let isolated = (0..tokens.len())
        .filter(|&t| scores[t] <= -strong_negative)
        .map(alone)
        .collect::<Result<_>>()?;
    Ok(Attribution {
        tokens,
        scores,
        predicted: labels.label(predicted).to_string(),
        baseline_probability: base,
        probabilities,
        isolated,
        single_token: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::BowClassifier;
    use crate::demo::demo_corpus;
    use crate::statml::{StatKind, StatParams};

    #[test]
    fn out_of_vocabulary_token_scores_zero_for_bow() {
        let m = BowClassifier::fit(&demo_corpus(), StatKind::MultinomialNb, &StatParams::default(), 1).unwrap();
        let a = occlusion_attribution(&m, "tell me a joke zzzqqq").unwrap();
        assert_eq!(a.scores.len(), 5);
        assert_eq!(a.scores[4], 0.0);
        assert_eq!(a.predicted, "JOKE");
        let best = argmax(&a.scores);
        assert_eq!(a.tokens[best], "joke");
    }

    #[test]
    fn single_token_falls_back_to_token_alone() {
        let m = BowClassifier::fit(&demo_corpus(), StatKind::MultinomialNb, &StatParams::default(), 1).unwrap();
        let a = occlusion_attribution(&m, "joke").unwrap();
        assert!(a.single_token);
        assert_eq!(a.scores, vec![0.0]);
        assert_eq!(a.isolated[0].label, a.predicted);
    }
}
