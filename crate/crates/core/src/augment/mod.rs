//! Paraphrase augmentation of the training split and least-common-class
//! balancing of the combined human + synthetic data.
//!
//! Only the training corpus ever enters this module; validation data stays
//! untouched so augmented and non-augmented runs remain comparable.

mod lexicon;
mod remote;
mod rules;

use std::collections::{BTreeMap, HashSet};
use std::num::NonZeroUsize;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, Provenance, TaskLabel, Utterance};
use crate::text::{has_content, normalize};

pub use lexicon::Lexicon;
pub use remote::RemoteParaphraser;
pub use rules::{RuleBasedParaphraser, RuleSet};

/// Per-statement paraphrase cap used when none is configured.
pub const DEFAULT_CAP: usize = 50;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider unreachable: {0}")]
    Unreachable(String),
    #[error("provider returned HTTP {0}")]
    Status(u16),
    #[error("provider protocol violation: {0}")]
    Protocol(String),
}

impl ProviderError {
    /// Every provider failure is transient from the caller's point of view;
    /// an empty candidate list is not an error at all.
    pub fn is_retryable(&self) -> bool {
        true
    }
}

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("paraphrasing {source_id:?} failed: {error}")]
    Provider {
        source_id: String,
        #[source]
        error: ProviderError,
    },
    #[error(transparent)]
    Backend(#[from] ProviderError),
    #[error("lexicon line {line}: {reason}")]
    Lexicon { line: usize, reason: String },
    #[error("cannot paraphrase empty text")]
    EmptyText,
    #[error("class {label} has {human} human utterances, above the balance target {target}; human data is never dropped")]
    Unbalanceable {
        label: TaskLabel,
        human: usize,
        target: usize,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    RuleBased,
    Remote,
}

/// Source of raw paraphrase candidates. Implementations need not filter;
/// [`ParaphraseProvider::paraphrase`] applies dedup and the cap.
pub trait ParaphraseBackend: Send + Sync {
    fn kind(&self) -> ProviderKind;
    fn candidates(&self, text: &str, max_candidates: usize, seed: u64) -> Result<Vec<String>, ProviderError>;
}

pub struct ParaphraseProvider {
    backend: Box<dyn ParaphraseBackend>,
    cap_per_statement: NonZeroUsize,
    seed: u64,
}

impl std::fmt::Debug for ParaphraseProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParaphraseProvider")
            .field("kind", &self.backend.kind())
            .field("cap_per_statement", &self.cap_per_statement)
            .field("seed", &self.seed)
            .finish()
    }
}

impl ParaphraseProvider {
    pub fn new(backend: Box<dyn ParaphraseBackend>, cap_per_statement: NonZeroUsize, seed: u64) -> Self {
        Self {
            backend,
            cap_per_statement,
            seed,
        }
    }

    pub fn rule_based(paraphraser: RuleBasedParaphraser, cap_per_statement: NonZeroUsize, seed: u64) -> Self {
        Self::new(Box::new(paraphraser), cap_per_statement, seed)
    }

    pub fn kind(&self) -> ProviderKind {
        self.backend.kind()
    }

    pub fn cap(&self) -> usize {
        self.cap_per_statement.get()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Up to `cap_per_statement` distinct paraphrases, none equal to the input
    /// under normalization. Generation stops early when the backend runs out.
    pub fn paraphrase(&self, text: &str) -> Result<Vec<String>, AugmentError> {
        if !has_content(text) {
            return Err(AugmentError::EmptyText);
        }
        let cap = self.cap();
        let raw = self.backend.candidates(text, cap, self.seed)?;
        let mut seen = HashSet::from([normalize(text)]);
        let mut out = Vec::new();
        for candidate in raw {
            if out.len() == cap {
                break;
            }
            let candidate = candidate.trim().to_string();
            if has_content(&candidate) && seen.insert(normalize(&candidate)) {
                out.push(candidate);
            }
        }
        Ok(out)
    }
}

/// Synthetic utterances produced from a training corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ParaphrasePool {
    pub corpus: Corpus,
    /// synthetic id -> originating human id
    pub source_map: BTreeMap<String, String>,
}

/// Paraphrases every human utterance of `train`. Sources are processed in
/// parallel and merged in (source order, candidate index) order, then
/// deduplicated against all human texts and earlier candidates.
pub fn augment_training_set(train: &Corpus, provider: &ParaphraseProvider) -> Result<ParaphrasePool, AugmentError> {
    let sources: Vec<&Utterance> = train.iter().filter(|u| u.provenance == Provenance::Human).collect();
    let generated: Vec<Result<Vec<String>, AugmentError>> = sources
        .par_iter()
        .map(|u| {
            provider.paraphrase(&u.text).map_err(|e| match e {
                AugmentError::Backend(error) => AugmentError::Provider {
                    source_id: u.id.clone(),
                    error,
                },
                other => other,
            })
        })
        .collect();
    let mut known: HashSet<String> = train.iter().map(|u| normalize(&u.text)).collect();
    let mut utterances = Vec::new();
    let mut source_map = BTreeMap::new();
    for (source, candidates) in sources.iter().zip(generated) {
        for (k, text) in candidates?.into_iter().enumerate() {
            if !known.insert(normalize(&text)) {
                continue;
            }
            let id = format!("{}~p{:02}", source.id, k);
            source_map.insert(id.clone(), source.id.clone());
            utterances.push(Utterance {
                id,
                text,
                label: source.label.clone(),
                provenance: Provenance::Synthetic,
            });
        }
    }
    Ok(ParaphrasePool {
        corpus: Corpus::new(utterances, train.registry().clone())?,
        source_map,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedCorpus {
    pub corpus: Corpus,
    /// synthetic id -> originating human id, for the synthetic items kept
    pub source_map: BTreeMap<String, String>,
    pub balance_target: usize,
}

impl AugmentedCorpus {
    pub fn manifest(&self, provider: &ParaphraseProvider) -> AugmentationManifest {
        let registry = self.corpus.registry();
        let mut classes: BTreeMap<String, ClassAugmentation> = registry
            .labels()
            .iter()
            .map(|l| (l.to_string(), ClassAugmentation::default()))
            .collect();
        for u in &self.corpus {
            let entry = classes.get_mut(u.label.as_str()).expect("registered label");
            match u.provenance {
                Provenance::Human => entry.human += 1,
                Provenance::Synthetic => entry.synthetic += 1,
            }
        }
        AugmentationManifest {
            provider_kind: provider.kind(),
            seed: provider.seed(),
            cap_per_statement: provider.cap(),
            balance_target: self.balance_target,
            total: self.corpus.len(),
            classes,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassAugmentation {
    pub human: usize,
    pub synthetic: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationManifest {
    pub provider_kind: ProviderKind,
    pub seed: u64,
    pub cap_per_statement: usize,
    pub balance_target: usize,
    pub total: usize,
    pub classes: BTreeMap<String, ClassAugmentation>,
}

/// Largest per-class total every class can reach: min over classes of
/// (human count + available synthetic count).
pub fn balance_target(human: &[usize], synthetic: &[usize]) -> usize {
    human
        .iter()
        .zip(synthetic)
        .map(|(h, s)| h + s)
        .min()
        .unwrap_or(0)
}

/// Equalizes per-class totals at [`balance_target`], keeping all human
/// utterances and a seeded random subset of each class's synthetic pool.
/// Output order: human utterances in training order, then the kept synthetic
/// utterances in pool order.
pub fn balance_per_class(train: &Corpus, pool: &ParaphrasePool, seed: u64) -> Result<AugmentedCorpus, AugmentError> {
    let registry = train.registry();
    let humans: Vec<&Utterance> = train.iter().filter(|u| u.provenance == Provenance::Human).collect();
    let n = registry.len();
    let mut human_counts = vec![0; n];
    for u in &humans {
        human_counts[registry.index_of(&u.label).ok_or_else(|| unregistered(u))?] += 1;
    }
    let mut by_class: Vec<Vec<&Utterance>> = vec![Vec::new(); n];
    for u in &pool.corpus {
        by_class[registry.index_of(&u.label).ok_or_else(|| unregistered(u))?].push(u);
    }
    let pool_counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let target = balance_target(&human_counts, &pool_counts);
    for (c, &h) in human_counts.iter().enumerate() {
        if h > target {
            return Err(AugmentError::Unbalanceable {
                label: registry.label(c).clone(),
                human: h,
                target,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: HashSet<&str> = HashSet::new();
    for (c, members) in by_class.iter().enumerate() {
        let need = target - human_counts[c];
        for i in rand::seq::index::sample(&mut rng, members.len(), need) {
            keep.insert(&members[i].id);
        }
    }
    let mut utterances: Vec<Utterance> = humans.into_iter().cloned().collect();
    let mut source_map = BTreeMap::new();
    for u in &pool.corpus {
        if keep.contains(u.id.as_str()) {
            if let Some(src) = pool.source_map.get(&u.id) {
                source_map.insert(u.id.clone(), src.clone());
            }
            utterances.push(u.clone());
        }
    }
    Ok(AugmentedCorpus {
        corpus: Corpus::new(utterances, registry.clone())?,
        source_map,
        balance_target: target,
    })
}

fn unregistered(u: &Utterance) -> AugmentError {
    AugmentError::Corpus(CorpusError::UnregisteredLabel {
        id: u.id.clone(),
        label: u.label.clone(),
    })
}

/// Paraphrase then balance.
pub fn augment(train: &Corpus, provider: &ParaphraseProvider) -> Result<AugmentedCorpus, AugmentError> {
    let pool = augment_training_set(train, provider)?;
    balance_per_class(train, &pool, provider.seed())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelRegistry;

    struct Fixed(Vec<Vec<String>>);

    impl ParaphraseBackend for Fixed {
        fn kind(&self) -> ProviderKind {
            ProviderKind::Remote
        }
        fn candidates(&self, text: &str, max: usize, _seed: u64) -> Result<Vec<String>, ProviderError> {
            let idx: usize = text.rsplit(' ').next().unwrap().parse().unwrap();
            Ok(self.0[idx].iter().take(max).cloned().collect())
        }
    }

    struct Broken;

    impl ParaphraseBackend for Broken {
        fn kind(&self) -> ProviderKind {
            ProviderKind::Remote
        }
        fn candidates(&self, _: &str, _: usize, _: u64) -> Result<Vec<String>, ProviderError> {
            Err(ProviderError::Unreachable("connection refused".into()))
        }
    }

    fn label(s: &str) -> TaskLabel {
        TaskLabel::new(s).unwrap()
    }

    fn cap(n: usize) -> NonZeroUsize {
        NonZeroUsize::new(n).unwrap()
    }

    fn two_sources() -> Corpus {
        Corpus::new(
            vec![
                Utterance::human("a", "source 0", label("JOKE")),
                Utterance::human("b", "source 1", label("CHAT")),
            ],
            LabelRegistry::from_names(&["JOKE", "CHAT"]).unwrap(),
        )
        .unwrap()
    }

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn paraphrase_filters_input_duplicates_and_cap() {
        // the backend is asked for `cap` candidates; rejects consume the budget
        let backend = Fixed(vec![strings(&["source 0", "x y", "X  Y", "z", "w"])]);
        let provider = ParaphraseProvider::new(Box::new(backend), cap(4), 0);
        assert_eq!(provider.paraphrase("source 0").unwrap(), strings(&["x y", "z"]));
        let backend = Fixed(vec![strings(&["a", "b", "c"])]);
        let provider = ParaphraseProvider::new(Box::new(backend), cap(2), 0);
        assert_eq!(provider.paraphrase("source 0").unwrap(), strings(&["a", "b"]));
        assert!(matches!(provider.paraphrase("  ?"), Err(AugmentError::EmptyText)));
    }

    #[test]
    fn cap_of_one_yields_at_most_one() {
        let p = RuleBasedParaphraser::new(Lexicon::builtin(), RuleSet::default());
        let provider = ParaphraseProvider::rule_based(p, cap(1), 3);
        assert!(provider.paraphrase("Tell me a joke").unwrap().len() <= 1);
    }

    #[test]
    fn no_matching_rule_gives_empty_result() {
        let p = RuleBasedParaphraser::new(Lexicon::parse("joke = gag").unwrap(), RuleSet {
            synonyms: true,
            ..RuleSet::none()
        });
        let provider = ParaphraseProvider::rule_based(p, cap(50), 1);
        assert!(provider.paraphrase("hello there").unwrap().is_empty());
    }

    #[test]
    fn pool_is_additive_and_labeled() {
        let backend = Fixed(vec![strings(&["a1", "a2", "a3"]), strings(&["b1", "b2", "b3"])]);
        let provider = ParaphraseProvider::new(Box::new(backend), cap(50), 0);
        let pool = augment_training_set(&two_sources(), &provider).unwrap();
        assert_eq!(pool.corpus.len(), 6);
        for u in &pool.corpus {
            assert_eq!(u.provenance, Provenance::Synthetic);
            let src = &pool.source_map[&u.id];
            let src_label = if src == "a" { "JOKE" } else { "CHAT" };
            assert_eq!(u.label.as_str(), src_label);
        }
    }

    #[test]
    fn shared_paraphrase_kept_once_for_first_source() {
        let backend = Fixed(vec![strings(&["same text", "a2"]), strings(&["Same  text", "source 0"])]);
        let provider = ParaphraseProvider::new(Box::new(backend), cap(50), 0);
        let pool = augment_training_set(&two_sources(), &provider).unwrap();
        let texts: Vec<_> = pool.corpus.iter().map(|u| u.text.as_str()).collect();
        assert_eq!(texts, ["same text", "a2"]);
        assert_eq!(pool.source_map["a~p00"], "a");
    }

    #[test]
    fn provider_error_names_the_source() {
        let provider = ParaphraseProvider::new(Box::new(Broken), cap(5), 0);
        match augment_training_set(&two_sources(), &provider) {
            Err(AugmentError::Provider { source_id, error }) => {
                assert_eq!(source_id, "a");
                assert!(error.is_retryable());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn mock(human: &[usize], pool: &[usize]) -> (Corpus, ParaphrasePool) {
        let names: Vec<String> = (0..human.len()).map(|c| format!("C{c}")).collect();
        let registry = LabelRegistry::from_names(&names).unwrap();
        let mut train = Vec::new();
        let mut synth = Vec::new();
        let mut source_map = BTreeMap::new();
        for (c, name) in names.iter().enumerate() {
            for i in 0..human[c] {
                train.push(Utterance::human(format!("{name}-h{i}"), format!("{name} human {i}"), label(name)));
            }
            for i in 0..pool[c] {
                let id = format!("{name}-h0~p{i:02}");
                source_map.insert(id.clone(), format!("{name}-h0"));
                synth.push(Utterance {
                    id,
                    text: format!("{name} synthetic {i}"),
                    label: label(name),
                    provenance: Provenance::Synthetic,
                });
            }
        }
        (
            Corpus::new(train, registry.clone()).unwrap(),
            ParaphrasePool {
                corpus: Corpus::new(synth, registry).unwrap(),
                source_map,
            },
        )
    }

    #[test]
    fn balance_two_classes() {
        let (train, pool) = mock(&[5, 5], &[20, 10]);
        let out = balance_per_class(&train, &pool, 9).unwrap();
        assert_eq!(out.balance_target, 15);
        assert_eq!(out.corpus.class_counts(), vec![15, 15]);
        let humans = out.corpus.iter().filter(|u| u.provenance == Provenance::Human).count();
        assert_eq!(humans, 10);
        assert_eq!(out.source_map.len(), 20);
    }

    #[test]
    fn empty_pool_needs_balanced_train() {
        let (train, pool) = mock(&[4, 4], &[0, 0]);
        let out = balance_per_class(&train, &pool, 1).unwrap();
        assert_eq!(out.corpus, train);
        let (train, pool) = mock(&[4, 6], &[0, 0]);
        assert!(matches!(
            balance_per_class(&train, &pool, 1),
            Err(AugmentError::Unbalanceable { human: 6, target: 4, .. })
        ));
    }

    #[test]
    fn balancing_is_seeded() {
        let (train, pool) = mock(&[3, 3, 3], &[30, 12, 40]);
        let a = balance_per_class(&train, &pool, 4).unwrap();
        let b = balance_per_class(&train, &pool, 4).unwrap();
        assert_eq!(a, b);
        let c = balance_per_class(&train, &pool, 5).unwrap();
        assert_eq!(c.corpus.class_counts(), a.corpus.class_counts());
    }
}
