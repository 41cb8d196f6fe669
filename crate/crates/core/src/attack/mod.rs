//! Black-box word-substitution attacks. Two greedy attackers (one
//! saliency-weighted, one deletion-importance-ranked) and an exhaustive
//! brute-force oracle, all driven through a query-counted prediction
//! interface with no gradient access.

mod brute;
mod pwws;
mod textfooler;

pub use brute::brute_force_attack;
pub use pwws::pwws_attack;
pub use textfooler::textfooler_attack;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::artifacts::{read_jsonl, write_jsonl, ArtifactHeader, ArtifactMeta};
use crate::corpus::{candidates, Dataset, EmbeddingTable, Example, SynonymLexicon, Vocabulary, UNK_WORD};
use crate::error::{Error, Result};
use crate::model::{forward, ModelParams, Prediction};
use crate::scalar::Scalar;

/// Anything the attacker may query: tokens in, class distribution out.
/// `Sync` so one victim can serve attacks on many examples concurrently.
pub trait Predictor<F: Scalar>: Sync {
    fn predict(&self, tokens: &[String]) -> Result<Prediction<F>>;
}

/// The trained classifier behind the prediction interface. Out-of-
/// vocabulary probe words fall back to the unknown token.
pub struct ModelVictim<'a, F: Scalar> {
    params: &'a ModelParams<F>,
    vocab: &'a Vocabulary,
}

impl<'a, F: Scalar> ModelVictim<'a, F> {
    pub fn new(params: &'a ModelParams<F>, vocab: &'a Vocabulary) -> Self {
        ModelVictim { params, vocab }
    }
}

impl<F: Scalar> Predictor<F> for ModelVictim<'_, F> {
    fn predict(&self, tokens: &[String]) -> Result<Prediction<F>> {
        let ids = self.vocab.encode(tokens);
        let (_, pred) = forward(self.params, &ids)?;
        Ok(pred)
    }
}

/// Budgeted, counted access to a predictor. Each attack owns one handle;
/// the final count lands in the `AttackRecord`.
pub struct VictimHandle<'a, F: Scalar> {
    predictor: &'a dyn Predictor<F>,
    budget: u64,
    used: u64,
}

impl<'a, F: Scalar> VictimHandle<'a, F> {
    pub fn new(predictor: &'a dyn Predictor<F>, budget: u64) -> Self {
        VictimHandle {
            predictor,
            budget,
            used: 0,
        }
    }

    pub fn predict(&mut self, tokens: &[String]) -> Result<Prediction<F>> {
        if self.used >= self.budget {
            return Err(Error::BudgetExhausted {
                budget: self.budget,
            });
        }
        self.used += 1;
        self.predictor.predict(tokens)
    }

    pub fn queries(&self) -> u64 {
        self.used
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Pwws,
    Textfooler,
    Brute,
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttackKind::Pwws => write!(f, "pwws"),
            AttackKind::Textfooler => write!(f, "textfooler"),
            AttackKind::Brute => write!(f, "brute"),
        }
    }
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pwws" => Ok(AttackKind::Pwws),
            "textfooler" => Ok(AttackKind::Textfooler),
            "brute" => Ok(AttackKind::Brute),
            other => Err(Error::Config(format!(
                "unknown attacker {other:?}, expected pwws, textfooler or brute"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Cosine similarity floor for substitution candidates; any value at
    /// or below -1.0 disables the filter.
    pub sim_threshold: f64,
    /// Candidates kept per position after ranking.
    pub top_k: usize,
    /// Cap on substituted positions as a fraction of the token count,
    /// rounded up.
    pub max_modify_fraction: f64,
    /// Victim queries allowed per attacked example.
    pub query_budget: u64,
    /// Refusal threshold for the brute-force search space.
    pub search_space_cap: u64,
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.query_budget == 0 {
            return Err(Error::Config("attack.query_budget must be positive".to_string()));
        }
        if !(self.max_modify_fraction > 0.0 && self.max_modify_fraction <= 1.0) {
            return Err(Error::Config(
                "attack.max_modify_fraction must be in (0, 1]".to_string(),
            ));
        }
        if self.top_k == 0 {
            return Err(Error::Config("attack.top_k must be at least 1".to_string()));
        }
        if self.sim_threshold.is_nan() {
            return Err(Error::Config("attack.sim_threshold must be a number".to_string()));
        }
        if self.search_space_cap == 0 {
            return Err(Error::Config(
                "attack.search_space_cap must be positive".to_string(),
            ));
        }
        Ok(())
    }

    /// Stable fingerprint of the attacker settings, stored in fixed
    /// adversarial sets to prevent silent reuse under different knobs.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        crate::seeds::fingerprint_hex(&bytes)
    }
}

/// `(position, old word, new word)`.
pub type Substitution = (usize, String, String);

/// Outcome of one attack. Serialized field order is part of the artifact
/// format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub id: usize,
    pub orig_tokens: Vec<String>,
    pub adv_tokens: Vec<String>,
    pub subs: Vec<Substitution>,
    pub success: bool,
    pub queries: u64,
    pub mod_rate: f64,
}

/// Fraction of tokens substituted.
pub fn modification_rate(record: &AttackRecord) -> f64 {
    record.subs.len() as f64 / record.orig_tokens.len() as f64
}

/// Mean modification rate over successful attacks that actually changed
/// something; trivial successes on already-misclassified inputs and failed
/// attacks are excluded. Zero when nothing qualifies.
pub fn average_modification_rate<'a, I>(records: I) -> f64
where
    I: IntoIterator<Item = &'a AttackRecord>,
{
    let mut total = 0.0;
    let mut count = 0usize;
    for r in records {
        if r.success && !r.subs.is_empty() {
            total += r.mod_rate;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Gold-probability drop when one position is blanked to the unknown
/// token: `P(gold | x) - P(gold | x with position -> UNK)`. Two victim
/// queries; the greedy attackers use a cached-base variant internally.
pub fn word_saliency<F: Scalar>(
    victim: &mut VictimHandle<'_, F>,
    example: &Example,
    position: usize,
) -> Result<F> {
    if position >= example.tokens.len() {
        return Err(Error::Input(format!(
            "position {position} outside {} tokens",
            example.tokens.len()
        )));
    }
    let base = victim.predict(&example.tokens)?;
    if example.label >= base.class_count() {
        return Err(Error::Input("label outside the victim's classes".to_string()));
    }
    let mut probed = example.tokens.clone();
    probed[position] = UNK_WORD.to_string();
    let after = victim.predict(&probed)?;
    Ok(base.prob(example.label) - after.prob(example.label))
}

/// Shared attack state after the common prologue: the base query is spent,
/// the example is known to be correctly classified, candidate lists and
/// the substitution limit are resolved.
pub(crate) struct Session<'a, F: Scalar> {
    handle: VictimHandle<'a, F>,
    pub id: usize,
    pub tokens: Vec<String>,
    pub gold: usize,
    pub base_gold_prob: F,
    /// Max positions that may be substituted: `ceil(fraction * T)`.
    pub limit: usize,
    pub candidate_lists: Vec<Vec<String>>,
}

pub(crate) enum SessionStart<'a, F: Scalar> {
    /// The victim already misclassifies the input; by convention that is
    /// an immediate success with zero substitutions.
    Trivial(AttackRecord),
    Ready(Session<'a, F>),
}

pub(crate) fn open_session<'a, F: Scalar>(
    predictor: &'a dyn Predictor<F>,
    example: &Example,
    lexicon: &SynonymLexicon,
    embeddings: &EmbeddingTable,
    config: &AttackConfig,
) -> Result<SessionStart<'a, F>> {
    config.validate()?;
    if example.tokens.is_empty() {
        return Err(Error::Input("cannot attack an empty example".to_string()));
    }
    let mut handle = VictimHandle::new(predictor, config.query_budget);
    let base = handle.predict(&example.tokens)?;
    if example.label >= base.class_count() {
        return Err(Error::Input(format!(
            "label {} outside the victim's {} classes",
            example.label,
            base.class_count()
        )));
    }
    if base.argmax() != example.label {
        return Ok(SessionStart::Trivial(AttackRecord {
            id: example.id,
            orig_tokens: example.tokens.clone(),
            adv_tokens: example.tokens.clone(),
            subs: Vec::new(),
            success: true,
            queries: handle.queries(),
            mod_rate: 0.0,
        }));
    }
    let t = example.tokens.len();
    let limit = ((config.max_modify_fraction * t as f64).ceil() as usize).clamp(1, t);
    let candidate_lists = example
        .tokens
        .iter()
        .map(|w| candidates(lexicon, embeddings, w, config.sim_threshold, config.top_k).words)
        .collect();
    Ok(SessionStart::Ready(Session {
        handle,
        id: example.id,
        tokens: example.tokens.clone(),
        gold: example.label,
        base_gold_prob: base.prob(example.label),
        limit,
        candidate_lists,
    }))
}

impl<F: Scalar> Session<'_, F> {
    /// Query the victim; `None` means the budget ran out and the attacker
    /// should finalize a failure with whatever it committed so far.
    pub fn probe(&mut self, tokens: &[String]) -> Result<Option<Prediction<F>>> {
        match self.handle.predict(tokens) {
            Ok(p) => Ok(Some(p)),
            Err(Error::BudgetExhausted { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn finish(
        self,
        adv_tokens: Vec<String>,
        subs: Vec<Substitution>,
        success: bool,
    ) -> AttackRecord {
        let rate = subs.len() as f64 / self.tokens.len() as f64;
        AttackRecord {
            id: self.id,
            orig_tokens: self.tokens,
            adv_tokens,
            subs,
            success,
            queries: self.handle.queries(),
            mod_rate: rate,
        }
    }
}

/// Run the configured attacker on one example.
pub fn attack_example<F: Scalar>(
    predictor: &dyn Predictor<F>,
    example: &Example,
    lexicon: &SynonymLexicon,
    embeddings: &EmbeddingTable,
    config: &AttackConfig,
) -> Result<AttackRecord> {
    match config.kind {
        AttackKind::Pwws => pwws_attack(predictor, example, lexicon, embeddings, config),
        AttackKind::Textfooler => {
            textfooler_attack(predictor, example, lexicon, embeddings, config)
        }
        AttackKind::Brute => brute_force_attack(predictor, example, lexicon, embeddings, config),
    }
}

/// Results of attacking a whole dataset: records in dataset order plus
/// per-example errors that never abort the batch.
#[derive(Clone, Debug, Default)]
pub struct AttackRun {
    pub records: Vec<AttackRecord>,
    pub errors: Vec<(usize, String)>,
}

impl AttackRun {
    pub fn successes(&self) -> usize {
        self.records.iter().filter(|r| r.success).count()
    }
}

/// Attack every example, in parallel, against an immutable victim. The
/// attackers are deterministic, so the record stream depends only on the
/// dataset, victim and config.
pub fn attack_dataset<F: Scalar>(
    predictor: &dyn Predictor<F>,
    dataset: &Dataset,
    lexicon: &SynonymLexicon,
    embeddings: &EmbeddingTable,
    config: &AttackConfig,
) -> AttackRun {
    let results: Vec<(usize, Result<AttackRecord>)> = dataset
        .examples
        .par_iter()
        .map(|ex| {
            (
                ex.id,
                attack_example(predictor, ex, lexicon, embeddings, config),
            )
        })
        .collect();
    let mut run = AttackRun::default();
    for (id, result) in results {
        match result {
            Ok(record) => run.records.push(record),
            Err(e) => run.errors.push((id, e.to_string())),
        }
    }
    run
}

pub const ATTACK_RECORDS_SCHEMA: &str = "attack_records";
pub const ATTACK_RECORDS_VERSION: u32 = 1;

pub fn save_attack_records(
    path: &Path,
    records: &[AttackRecord],
    attacker: AttackKind,
    meta: &ArtifactMeta,
) -> Result<()> {
    write_jsonl(
        path,
        ATTACK_RECORDS_SCHEMA,
        ATTACK_RECORDS_VERSION,
        meta,
        &[("attacker", Value::from(attacker.to_string()))],
        records,
    )
}

pub fn load_attack_records(path: &Path) -> Result<(ArtifactHeader, Vec<AttackRecord>)> {
    read_jsonl(path, ATTACK_RECORDS_SCHEMA, ATTACK_RECORDS_VERSION)
}


#[cfg(test)]
mod tests {
    use super::test_victims::*;
    use super::*;
    use crate::corpus::Split;

    #[test]
    fn constant_victim_has_zero_saliency_everywhere() {
        let victim = ConstantVictim(vec![0.3, 0.7]);
        let ex = example(0, &["a", "b", "c"], 1);
        let mut handle = VictimHandle::new(&victim, 100);
        for pos in 0..3 {
            let s = word_saliency(&mut handle, &ex, pos).unwrap();
            assert_eq!(s, 0.0);
        }
        assert_eq!(handle.queries(), 6);
    }

    #[test]
    fn saliency_is_bounded_by_probability_range() {
        let victim = LinearVictim::new(vec![("hot", 4.0), ("cold", -4.0)], 0.0);
        let ex = example(0, &["hot", "cold", "mild"], 1);
        let mut handle = VictimHandle::new(&victim, 100);
        for pos in 0..3 {
            let s = word_saliency(&mut handle, &ex, pos).unwrap();
            assert!((-1.0..=1.0).contains(&s), "saliency {s}");
        }
    }

    #[test]
    fn loaded_word_has_strictly_max_saliency() {
        // One word carries weight 3.0, the rest 0.1: blanking it must
        // drop the gold probability more than blanking anything else.
        let victim = LinearVictim::new(
            vec![("meh", 0.1), ("fine", 0.1), ("superb", 3.0)],
            0.0,
        );
        let ex = example(0, &["meh", "superb", "fine"], 1);
        let mut handle = VictimHandle::new(&victim, 100);
        let s: Vec<f64> = (0..3)
            .map(|p| word_saliency(&mut handle, &ex, p).unwrap())
            .collect();
        assert!(s[1] > s[0] && s[1] > s[2], "{s:?}");
    }

    #[test]
    fn budget_exhaustion_surfaces_from_the_handle() {
        let victim = ConstantVictim(vec![0.5, 0.5]);
        let mut handle = VictimHandle::new(&victim, 1);
        let tokens = vec!["a".to_string()];
        handle.predict(&tokens).unwrap();
        let err = handle.predict(&tokens).unwrap_err();
        assert!(matches!(err, Error::BudgetExhausted { budget: 1 }));
        assert_eq!(handle.queries(), 1);
    }

    #[test]
    fn modification_rate_hand_values() {
        let rec = AttackRecord {
            id: 0,
            orig_tokens: vec!["x".to_string(); 10],
            adv_tokens: vec!["x".to_string(); 10],
            subs: vec![],
            success: false,
            queries: 1,
            mod_rate: 0.0,
        };
        assert_eq!(modification_rate(&rec), 0.0);
        let mut rec8 = rec.clone();
        rec8.orig_tokens.truncate(8);
        rec8.subs = vec![
            (0, "a".into(), "b".into()),
            (3, "c".into(), "d".into()),
            (7, "e".into(), "f".into()),
        ];
        assert_eq!(modification_rate(&rec8), 0.375);
    }

    #[test]
    fn average_rate_counts_only_genuine_successes() {
        let base = AttackRecord {
            id: 0,
            orig_tokens: vec!["x".to_string(); 4],
            adv_tokens: vec!["x".to_string(); 4],
            subs: vec![],
            success: false,
            queries: 1,
            mod_rate: 0.0,
        };
        let mut genuine = base.clone();
        genuine.success = true;
        genuine.subs = vec![(0, "x".into(), "y".into())];
        genuine.mod_rate = 0.25;
        let mut genuine2 = base.clone();
        genuine2.success = true;
        genuine2.subs = vec![(0, "x".into(), "y".into()), (1, "x".into(), "y".into())];
        genuine2.mod_rate = 0.5;
        let mut trivial = base.clone();
        trivial.success = true; // zero substitutions: excluded
        let failed = base.clone();
        let avg = average_modification_rate([&genuine, &genuine2, &trivial, &failed]);
        assert!((avg - 0.375).abs() < 1e-15);
        assert_eq!(average_modification_rate([&trivial, &failed]), 0.0);
    }

    #[test]
    fn attack_dataset_preserves_order_and_marks_misclassified_trivial() {
        let victim = LinearVictim::new(vec![("good", 2.0), ("bad", -2.0)], 0.0);
        let lexicon = SynonymLexicon::from_pairs(vec![("good", vec!["bad"])]);
        let embeddings = EmbeddingTable::empty();
        let examples = vec![
            example(0, &["good", "day"], 1),
            example(1, &["good", "day"], 0), // victim says 1: trivial win
            example(2, &["bad", "day"], 0),
        ];
        let dataset = Dataset {
            split: Split::Test,
            examples,
            label_count: 2,
        };
        let run = attack_dataset(
            &victim,
            &dataset,
            &lexicon,
            &embeddings,
            &config(AttackKind::Pwws),
        );
        assert!(run.errors.is_empty());
        let ids: Vec<usize> = run.records.iter().map(|r| r.id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        let trivial = &run.records[1];
        assert!(trivial.success);
        assert!(trivial.subs.is_empty());
        assert_eq!(trivial.queries, 1);
        assert_eq!(trivial.mod_rate, 0.0);
        // Example 0 is genuinely attackable: good -> bad flips the sign.
        assert!(run.records[0].success);
        assert_eq!(run.records[0].subs.len(), 1);
        // Example 2 has no candidates (zero weight words aside, "bad" has
        // no lexicon entry), so the attack fails.
        assert!(!run.records[2].success);
    }

    #[test]
    fn attack_records_round_trip_through_jsonl() {
        let victim = LinearVictim::new(vec![("good", 2.0)], 0.0);
        let lexicon = SynonymLexicon::from_pairs(vec![("good", vec!["bad"])]);
        let dataset = Dataset {
            split: Split::Test,
            examples: vec![example(0, &["good", "day"], 1)],
            label_count: 2,
        };
        let run = attack_dataset(
            &victim,
            &dataset,
            &lexicon,
            &EmbeddingTable::empty(),
            &config(AttackKind::Pwws),
        );
        let meta = ArtifactMeta {
            config_hash: "cafe".to_string(),
            seed: 5,
        };
        let f = tempfile::NamedTempFile::new().unwrap();
        save_attack_records(f.path(), &run.records, AttackKind::Pwws, &meta).unwrap();
        let (header, loaded) = load_attack_records(f.path()).unwrap();
        assert_eq!(loaded, run.records);
        assert_eq!(header.extra_str("attacker").unwrap(), "pwws");
    }
}
