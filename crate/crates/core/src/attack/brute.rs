//! Exhaustive substitution search, used as ground truth for the greedy
//! attackers on tiny instances. Enumerates substitution sets by ascending
//! size, positions in lexicographic order, candidates in list order, so
//! the first success has minimal substitution count with pinned ties.

use super::{open_session, AttackConfig, AttackRecord, Predictor, SessionStart, Substitution};
use crate::corpus::{EmbeddingTable, Example, SynonymLexicon};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Iterate k-subsets of `0..n` in lexicographic order.
struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let current = self.idx.clone();
        let k = self.idx.len();
        // Advance: rightmost index that can still move up.
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(current)
    }
}

pub fn brute_force_attack<F: Scalar>(
    predictor: &dyn Predictor<F>,
    example: &Example,
    lexicon: &SynonymLexicon,
    embeddings: &EmbeddingTable,
    config: &AttackConfig,
) -> Result<AttackRecord> {
    let mut s = match open_session(predictor, example, lexicon, embeddings, config)? {
        SessionStart::Trivial(record) => return Ok(record),
        SessionStart::Ready(s) => s,
    };

    // Refuse oversized search spaces instead of truncating them. The size
    // counts every combination including the empty one.
    let mut size: u128 = 1;
    for cands in &s.candidate_lists {
        size = size
            .checked_mul(1 + cands.len() as u128)
            .unwrap_or(u128::MAX);
    }
    if size > u128::from(config.search_space_cap) {
        return Err(Error::SearchSpaceExceeded {
            size,
            cap: config.search_space_cap,
        });
    }

    // Positions that have anything to try, in ascending order.
    let positions: Vec<usize> = (0..s.tokens.len())
        .filter(|&t| !s.candidate_lists[t].is_empty())
        .collect();

    let max_k = s.limit.min(positions.len());
    for k in 1..=max_k {
        for combo in Combinations::new(positions.len(), k) {
            let chosen: Vec<usize> = combo.iter().map(|&i| positions[i]).collect();
            // Odometer over candidate choices, rightmost fastest.
            let radix: Vec<usize> = chosen.iter().map(|&t| s.candidate_lists[t].len()).collect();
            let mut counter = vec![0usize; k];
            'assignments: loop {
                let mut adv = s.tokens.clone();
                let mut subs: Vec<Substitution> = Vec::with_capacity(k);
                for (slot, &t) in chosen.iter().enumerate() {
                    let cand = s.candidate_lists[t][counter[slot]].clone();
                    subs.push((t, adv[t].clone(), cand.clone()));
                    adv[t] = cand;
                }
                match s.probe(&adv)? {
                    Some(pred) => {
                        if pred.argmax() != s.gold {
                            return Ok(s.finish(adv, subs, true));
                        }
                    }
                    None => return Ok(s.finish(adv, subs, false)),
                }
                // Advance the odometer.
                let mut slot = k;
                loop {
                    if slot == 0 {
                        break 'assignments;
                    }
                    slot -= 1;
                    counter[slot] += 1;
                    if counter[slot] < radix[slot] {
                        break;
                    }
                    counter[slot] = 0;
                }
            }
        }
    }
    let orig = s.tokens.clone();
    Ok(s.finish(orig, Vec::new(), false))
}

#[cfg(test)]
mod tests {
    use super::super::test_victims::*;
    use super::super::AttackKind;
    use super::*;
    use crate::corpus::SynonymLexicon;

    #[test]
    fn combinations_are_lexicographic() {
        let combos: Vec<Vec<usize>> = Combinations::new(4, 2).collect();
        assert_eq!(
            combos,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert_eq!(Combinations::new(2, 3).count(), 0);
        assert_eq!(Combinations::new(3, 3).count(), 1);
    }

    #[test]
    fn zero_candidates_means_search_space_of_one() {
        let victim = LinearVictim::new(vec![("good", 2.0)], 0.0);
        let ex = example(0, &["good", "day"], 1);
        let rec = brute_force_attack(
            &victim,
            &ex,
            &SynonymLexicon::new(),
            &EmbeddingTable::empty(),
            &config(AttackKind::Brute),
        )
        .unwrap();
        assert!(!rec.success);
        assert_eq!(rec.queries, 1); // just the base query
    }

    #[test]
    fn two_positions_one_candidate_each_enumerates_four_combinations() {
        // Search space (1+1)(1+1) = 4: the empty combination is the base
        // query, then two singles and one pair. A victim that never flips
        // sees exactly 4 queries.
        let victim = ConstantVictim(vec![0.4, 0.6]);
        let ex = example(0, &["a", "b"], 1);
        let lexicon = SynonymLexicon::from_pairs(vec![("a", vec!["x"]), ("b", vec!["y"])]);
        let rec = brute_force_attack(
            &victim,
            &ex,
            &lexicon,
            &EmbeddingTable::empty(),
            &config(AttackKind::Brute),
        )
        .unwrap();
        assert!(!rec.success);
        assert_eq!(rec.queries, 4);
    }

    #[test]
    fn finds_the_minimal_substitution_set() {
        // Single substitutions shave 1.2 off the logit, not enough to
        // cross zero from 2.1; two are needed and two must be reported.
        let victim = LinearVictim::new(
            vec![("p", 0.7), ("q", 0.7), ("r", 0.7), ("dull", -0.5)],
            0.0,
        );
        let ex = example(0, &["p", "q", "r"], 1);
        let lexicon = SynonymLexicon::from_pairs(vec![
            ("p", vec!["dull"]),
            ("q", vec!["dull"]),
            ("r", vec!["dull"]),
        ]);
        let rec = brute_force_attack(
            &victim,
            &ex,
            &lexicon,
            &EmbeddingTable::empty(),
            &config(AttackKind::Brute),
        )
        .unwrap();
        assert!(rec.success);
        assert_eq!(rec.subs.len(), 2);
        // Lexicographic tie-break: positions {0, 1} come first.
        let positions: Vec<usize> = rec.subs.iter().map(|s| s.0).collect();
        assert_eq!(positions, vec![0, 1]);
    }

    #[test]
    fn cap_refusal_is_an_explicit_error() {
        let victim = ConstantVictim(vec![0.4, 0.6]);
        let ex = example(0, &["a", "b"], 1);
        let lexicon = SynonymLexicon::from_pairs(vec![
            ("a", vec!["x1", "x2", "x3"]),
            ("b", vec!["y1", "y2", "y3"]),
        ]);
        let mut cfg = config(AttackKind::Brute);
        cfg.search_space_cap = 15; // space is 16
        let err = brute_force_attack(&victim, &ex, &lexicon, &EmbeddingTable::empty(), &cfg)
            .unwrap_err();
        match err {
            Error::SearchSpaceExceeded { size, cap } => {
                assert_eq!(size, 16);
                assert_eq!(cap, 15);
            }
            other => panic!("expected cap refusal, got {other}"),
        }
    }

    #[test]
    fn respects_the_modification_limit() {
        // Flip requires 2 substitutions but the fraction caps at 1.
        let victim = LinearVictim::new(
            vec![("p", 0.7), ("q", 0.7), ("dull", -0.5)],
            0.0,
        );
        let ex = example(0, &["p", "q"], 1);
        let lexicon =
            SynonymLexicon::from_pairs(vec![("p", vec!["dull"]), ("q", vec!["dull"])]);
        let mut cfg = config(AttackKind::Brute);
        cfg.max_modify_fraction = 0.5;
        let rec =
            brute_force_attack(&victim, &ex, &lexicon, &EmbeddingTable::empty(), &cfg).unwrap();
        assert!(!rec.success);
        assert_eq!(rec.queries, 3); // base + two single substitutions
    }
}
