//! Importance-ranked greedy substitution. Positions are ranked by the
//! gold-probability drop when the word is deleted; each is then attacked
//! in rank order, committing a flipping candidate outright or otherwise
//! the candidate that lowers the gold probability most.

use super::{open_session, AttackConfig, AttackRecord, Predictor, SessionStart, Substitution};
use crate::corpus::{EmbeddingTable, Example, SynonymLexicon, UNK_WORD};
use crate::error::Result;
use crate::scalar::Scalar;

/// Rank positions by importance, descending, ties toward the lower index.
pub(crate) fn rank_positions<F: Scalar>(importance: &[F]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..importance.len()).collect();
    order.sort_by(|&a, &b| {
        importance[b]
            .partial_cmp(&importance[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

pub fn textfooler_attack<F: Scalar>(
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
    let t_count = s.tokens.len();

    // Deletion importance. A single-token input cannot be emptied, so
    // blanking to UNK stands in for deletion there.
    let mut importance = vec![F::zero(); t_count];
    for t in 0..t_count {
        let probed: Vec<String> = if t_count == 1 {
            vec![UNK_WORD.to_string()]
        } else {
            let mut v = s.tokens.clone();
            v.remove(t);
            v
        };
        match s.probe(&probed)? {
            Some(pred) => importance[t] = s.base_gold_prob - pred.prob(s.gold),
            None => {
                let orig = s.tokens.clone();
                return Ok(s.finish(orig, Vec::new(), false));
            }
        }
    }

    let order = rank_positions(&importance);
    let mut adv = s.tokens.clone();
    let mut subs: Vec<Substitution> = Vec::new();
    for t in order {
        if subs.len() >= s.limit {
            break;
        }
        let cands = s.candidate_lists[t].clone();
        if cands.is_empty() {
            continue;
        }
        // Score every candidate in the current context.
        let mut flip: Option<usize> = None;
        let mut best_drop: Option<(F, usize)> = None;
        for (ci, cand) in cands.iter().enumerate() {
            let mut probed = adv.clone();
            probed[t] = cand.clone();
            match s.probe(&probed)? {
                Some(pred) => {
                    if pred.argmax() != s.gold {
                        flip = Some(ci);
                        break;
                    }
                    let gold_prob = pred.prob(s.gold);
                    let better = match best_drop {
                        Some((cur, _)) => gold_prob < cur,
                        None => true,
                    };
                    if better {
                        best_drop = Some((gold_prob, ci));
                    }
                }
                None => return Ok(s.finish(adv, subs, false)),
            }
        }
        if let Some(ci) = flip {
            let old = adv[t].clone();
            adv[t] = cands[ci].clone();
            subs.push((t, old, cands[ci].clone()));
            return Ok(s.finish(adv, subs, true));
        }
        if let Some((_, ci)) = best_drop {
            let old = adv[t].clone();
            adv[t] = cands[ci].clone();
            subs.push((t, old, cands[ci].clone()));
        }
    }
    Ok(s.finish(adv, subs, false))
}
