//! Saliency-weighted greedy substitution. For every position the best
//! candidate is the one dropping the gold probability most against the
//! original input; positions are then attacked in order of
//! candidate-drop times softmax(saliency), until the prediction flips or
//! a limit is hit.

use super::{open_session, AttackConfig, AttackRecord, Predictor, SessionStart, Substitution};
use crate::corpus::{EmbeddingTable, Example, SynonymLexicon, UNK_WORD};
use crate::error::Result;
use crate::model::softmax;
use crate::scalar::Scalar;

pub fn pwws_attack<F: Scalar>(
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

    // Saliency of each position: gold-probability drop when the word is
    // blanked to UNK. The base query is already cached in the session.
    let mut saliency = vec![F::zero(); t_count];
    for t in 0..t_count {
        let mut probed = s.tokens.clone();
        probed[t] = UNK_WORD.to_string();
        match s.probe(&probed)? {
            Some(pred) => saliency[t] = s.base_gold_prob - pred.prob(s.gold),
            None => {
                let orig = s.tokens.clone();
                return Ok(s.finish(orig, Vec::new(), false));
            }
        }
    }

    // Best candidate per position, judged against the original input:
    // maximal gold-probability drop, first candidate winning ties.
    let mut best: Vec<Option<(String, F)>> = vec![None; t_count];
    for t in 0..t_count {
        let cands = s.candidate_lists[t].clone();
        for cand in &cands {
            let mut probed = s.tokens.clone();
            probed[t] = cand.clone();
            match s.probe(&probed)? {
                Some(pred) => {
                    let drop = s.base_gold_prob - pred.prob(s.gold);
                    let better = match &best[t] {
                        Some((_, cur)) => drop > *cur,
                        None => true,
                    };
                    if better {
                        best[t] = Some((cand.clone(), drop));
                    }
                }
                None => {
                    let orig = s.tokens.clone();
                    return Ok(s.finish(orig, Vec::new(), false));
                }
            }
        }
    }

    // Attack order: candidate drop weighted by the softmax of saliencies,
    // ties resolved toward the lower position.
    let weights = softmax(&saliency).probs;
    let mut order: Vec<(F, usize)> = best
        .iter()
        .enumerate()
        .filter_map(|(t, b)| b.as_ref().map(|(_, drop)| (*drop * weights[t], t)))
        .collect();
    order.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });

    let mut adv = s.tokens.clone();
    let mut subs: Vec<Substitution> = Vec::new();
    for (_, t) in order {
        if subs.len() >= s.limit {
            break;
        }
        let (cand, _) = best[t].as_ref().expect("ordered positions have a best");
        let old = adv[t].clone();
        adv[t] = cand.clone();
        subs.push((t, old, cand.clone()));
        match s.probe(&adv)? {
            Some(pred) => {
                if pred.argmax() != s.gold {
                    return Ok(s.finish(adv, subs, true));
                }
            }
            None => return Ok(s.finish(adv, subs, false)),
        }
    }
    Ok(s.finish(adv, subs, false))
}
