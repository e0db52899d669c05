//! Similarity-based answer selection.
//!
//! Candidate answers and the reference are embedded, pairwise cosine
//! similarities are computed, and the candidate with the maximum similarity
//! wins. Exact ties break by canonical channel order (Web, Gpt, NoRetrieval)
//! and zero-norm embeddings score 0 and are flagged degenerate.
//!
//! The reference-based `oracle` selector needs gold answers and is therefore
//! an evaluation-time device; the reference-free `consensus` selector (pick
//! the candidate most similar on average to the other candidates) exists for
//! deployment-style use such as one-shot queries.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::{EmbeddingProvider, EmbeddingVector, ProviderError};
use crate::types::{CandidateAnswer, Channel, SelectionResult};

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("no candidates to select from")]
    NoCandidates,
    #[error("oracle selection needs at least one reference answer")]
    NoReference,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Cosine similarity u.v / (|u||v|), clamped into [-1, 1].
///
/// Either vector having zero norm yields 0; callers flag that case as
/// degenerate rather than treating it as a real score.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, SelectError> {
    if u.dim() != v.dim() {
        return Err(SelectError::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    let dot: f64 = u.values.iter().zip(&v.values).map(|(a, b)| a * b).sum();
    let norm_u = u.norm();
    let norm_v = v.norm();
    if norm_u == 0.0 || norm_v == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (norm_u * norm_v)).clamp(-1.0, 1.0))
}

/// A candidate answer in vector form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedCandidate {
    pub channel: Channel,
    pub vector: EmbeddingVector,
    pub zero_norm: bool,
}

pub fn embed_candidate(
    candidate: &CandidateAnswer,
    embedder: &dyn EmbeddingProvider,
) -> Result<EmbeddedCandidate, SelectError> {
    let vector = embedder.embed(&candidate.text)?;
    let zero_norm = vector.is_zero();
    Ok(EmbeddedCandidate {
        channel: candidate.channel,
        vector,
        zero_norm,
    })
}

/// Which selection rule a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    /// Max cosine similarity to the gold answer embedding (evaluation only).
    Oracle,
    /// Max mean cosine similarity to the other candidates (reference-free).
    Consensus,
}

impl Selector {
    pub fn label(&self) -> &'static str {
        match self {
            Selector::Oracle => "oracle",
            Selector::Consensus => "consensus",
        }
    }

    pub fn parse(s: &str) -> Option<Selector> {
        match s {
            "oracle" => Some(Selector::Oracle),
            "consensus" => Some(Selector::Consensus),
            _ => None,
        }
    }
}

/// Canonical ordering plus argmax with deterministic tie-breaking.
fn pick(
    ordered: &[(usize, &CandidateAnswer)],
    scores: &BTreeMap<Channel, f64>,
    degenerate: BTreeSet<Channel>,
) -> SelectionResult {
    let (best_channel, best_score) = scores
        .iter()
        .fold(
            None::<(Channel, f64)>,
            |best, (&channel, &score)| match best {
                // BTreeMap iterates channels in canonical order, so strict
                // inequality keeps the earliest channel on exact ties.
                Some((_, bs)) if score <= bs => best,
                _ => Some((channel, score)),
            },
        )
        .expect("at least one candidate");
    let tie_broken = scores.values().filter(|s| **s == best_score).count() >= 2;
    let selected_text = ordered
        .iter()
        .find(|(_, c)| c.channel == best_channel)
        .map(|(_, c)| c.text.clone())
        .expect("selected channel has a candidate");

    SelectionResult {
        similarities: scores.clone(),
        selected_channel: best_channel,
        selected_text,
        tie_broken,
        degenerate_flags: degenerate,
    }
}

fn canonical(candidates: &[CandidateAnswer]) -> Vec<(usize, &CandidateAnswer)> {
    let mut ordered: Vec<(usize, &CandidateAnswer)> = candidates.iter().enumerate().collect();
    ordered.sort_by_key(|(i, c)| (c.channel, *i));
    ordered
}

/// Oracle selection: each candidate scores the maximum cosine similarity of
/// its embedding against every gold alias embedding; the argmax candidate is
/// selected.
pub fn select_answer(
    candidates: &[CandidateAnswer],
    reference: &[String],
    embedder: &dyn EmbeddingProvider,
) -> Result<SelectionResult, SelectError> {
    if candidates.is_empty() {
        return Err(SelectError::NoCandidates);
    }
    if reference.is_empty() {
        return Err(SelectError::NoReference);
    }

    let ordered = canonical(candidates);
    let gold_vectors: Vec<EmbeddingVector> = reference
        .iter()
        .map(|g| embedder.embed(g).map_err(SelectError::from))
        .collect::<Result<_, _>>()?;

    let mut scores = BTreeMap::new();
    let mut degenerate = BTreeSet::new();
    for (_, candidate) in &ordered {
        let embedded = embed_candidate(candidate, embedder)?;
        let score = if embedded.zero_norm {
            degenerate.insert(embedded.channel);
            0.0
        } else {
            let mut best = f64::NEG_INFINITY;
            for gold in &gold_vectors {
                best = best.max(cosine(&embedded.vector, gold)?);
            }
            best
        };
        scores.insert(embedded.channel, score);
    }

    Ok(pick(&ordered, &scores, degenerate))
}

/// Consensus selection: each candidate scores its mean cosine similarity to
/// the other candidates. A lone candidate scores 0 by convention.
pub fn consensus_select(
    candidates: &[CandidateAnswer],
    embedder: &dyn EmbeddingProvider,
) -> Result<SelectionResult, SelectError> {
    if candidates.is_empty() {
        return Err(SelectError::NoCandidates);
    }

    let ordered = canonical(candidates);
    let embedded: Vec<EmbeddedCandidate> = ordered
        .iter()
        .map(|(_, c)| embed_candidate(c, embedder))
        .collect::<Result<_, _>>()?;

    let mut scores = BTreeMap::new();
    let mut degenerate = BTreeSet::new();
    for (i, cand) in embedded.iter().enumerate() {
        if cand.zero_norm {
            degenerate.insert(cand.channel);
            scores.insert(cand.channel, 0.0);
            continue;
        }
        let mut sum = 0.0;
        let mut n = 0usize;
        for (j, other) in embedded.iter().enumerate() {
            if i == j {
                continue;
            }
            sum += cosine(&cand.vector, &other.vector)?;
            n += 1;
        }
        scores.insert(cand.channel, if n == 0 { 0.0 } else { sum / n as f64 });
    }

    Ok(pick(&ordered, &scores, degenerate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::mock::{BagOfWordsEmbedder, HashEmbedder, TableEmbedder};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vector(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector {
            values: values.to_vec(),
            model_id: "t".into(),
        }
    }

    fn candidate(channel: Channel, text: &str) -> CandidateAnswer {
        CandidateAnswer {
            channel,
            text: text.into(),
            prompt_digest: "d".into(),
        }
    }

    /// Brute-force reference implementation used as the oracle for `cosine`.
    fn naive_cosine(u: &[f64], v: &[f64]) -> f64 {
        let mut dot = 0.0;
        let mut nu = 0.0;
        let mut nv = 0.0;
        for i in 0..u.len() {
            dot += u[i] * v[i];
            nu += u[i] * u[i];
            nv += v[i] * v[i];
        }
        if nu == 0.0 || nv == 0.0 {
            return 0.0;
        }
        dot / (nu.sqrt() * nv.sqrt())
    }

    #[test]
    fn cosine_identity_orthogonal_and_worked_example() {
        let x = vector(&[0.3, -1.2, 4.5]);
        assert!((cosine(&x, &x).unwrap() - 1.0).abs() <= 1e-12);

        let e1 = vector(&[1.0, 0.0]);
        let e2 = vector(&[0.0, 1.0]);
        assert_eq!(cosine(&e1, &e2).unwrap(), 0.0);

        // (1,2,2).(2,1,2) = 8, both norms 3, so 8/9.
        let u = vector(&[1.0, 2.0, 2.0]);
        let v = vector(&[2.0, 1.0, 2.0]);
        assert!((cosine(&u, &v).unwrap() - 8.0 / 9.0).abs() <= 1e-12);
    }

    #[test]
    fn cosine_zero_norm_is_zero_and_dims_must_match() {
        let z = vector(&[0.0, 0.0]);
        let x = vector(&[1.0, 2.0]);
        assert_eq!(cosine(&z, &x).unwrap(), 0.0);

        let short = vector(&[1.0]);
        assert!(matches!(
            cosine(&short, &x).unwrap_err(),
            SelectError::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn cosine_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let dim = rng.random_range(2..=512);
            let u: Vec<f64> = (0..dim)
                .map(|_| rng.random::<f64>() * 20.0 - 10.0)
                .collect();
            let v: Vec<f64> = (0..dim)
                .map(|_| rng.random::<f64>() * 20.0 - 10.0)
                .collect();
            let got = cosine(&vector(&u), &vector(&v)).unwrap();
            let want = naive_cosine(&u, &v);
            assert!((got - want).abs() <= 1e-9, "dim {dim}: {got} vs {want}");
            assert!((-1.0..=1.0).contains(&got));
        }
    }

    #[test]
    fn argmax_picks_highest_similarity() {
        // Table-driven embedder giving Web 0.2, Gpt 0.9, NoRetrieval 0.5
        // against the gold vector (1, 0).
        let table = TableEmbedder {
            table: [
                ("gold".to_string(), vec![1.0, 0.0]),
                ("w".to_string(), vec![0.2, (1.0f64 - 0.04).sqrt()]),
                ("g".to_string(), vec![0.9, (1.0f64 - 0.81).sqrt()]),
                ("n".to_string(), vec![0.5, (1.0f64 - 0.25).sqrt()]),
            ]
            .into_iter()
            .collect(),
            dim: 2,
        };
        let candidates = [
            candidate(Channel::Web, "w"),
            candidate(Channel::Gpt, "g"),
            candidate(Channel::NoRetrieval, "n"),
        ];
        let result = select_answer(&candidates, &["gold".to_string()], &table).unwrap();
        assert_eq!(result.selected_channel, Channel::Gpt);
        assert!(!result.tie_broken);
        assert!((result.similarities[&Channel::Web] - 0.2).abs() < 1e-12);
        assert!((result.similarities[&Channel::Gpt] - 0.9).abs() < 1e-12);
        assert!((result.similarities[&Channel::NoRetrieval] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exact_ties_break_by_canonical_channel_order() {
        let table = TableEmbedder {
            table: [
                ("gold".to_string(), vec![1.0, 0.0]),
                ("same".to_string(), vec![0.7, (1.0f64 - 0.49).sqrt()]),
                ("low".to_string(), vec![0.1, (1.0f64 - 0.01).sqrt()]),
            ]
            .into_iter()
            .collect(),
            dim: 2,
        };
        let candidates = [
            candidate(Channel::Gpt, "same"),
            candidate(Channel::Web, "same"),
            candidate(Channel::NoRetrieval, "low"),
        ];
        let result = select_answer(&candidates, &["gold".to_string()], &table).unwrap();
        assert_eq!(result.selected_channel, Channel::Web, "Web wins exact ties");
        assert!(result.tie_broken);
    }

    #[test]
    fn bag_of_words_worked_example() {
        // Vocabulary [shirley, temple, the, actress]; hand-computed vectors:
        //   "Shirley Temple" -> [1,1,0,0], gold "Shirley Temple" -> [1,1,0,0]  cos = 1
        //   "the actress"    -> [0,0,1,1]                                      cos = 0
        //   ""               -> zero vector, degenerate                        cos = 0
        let embedder = BagOfWordsEmbedder::new(["shirley", "temple", "the", "actress"]);
        let candidates = [
            candidate(Channel::Web, "Shirley Temple"),
            candidate(Channel::Gpt, "the actress"),
            candidate(Channel::NoRetrieval, ""),
        ];
        let result =
            select_answer(&candidates, &["Shirley Temple".to_string()], &embedder).unwrap();
        assert_eq!(result.selected_channel, Channel::Web);
        assert!((result.similarities[&Channel::Web] - 1.0).abs() <= 1e-12);
        assert_eq!(result.similarities[&Channel::NoRetrieval], 0.0);
        assert!(result.degenerate_flags.contains(&Channel::NoRetrieval));
        assert!(!result.degenerate_flags.contains(&Channel::Web));
    }

    #[test]
    fn multiple_aliases_score_by_max() {
        let embedder = BagOfWordsEmbedder::new(["alpha", "beta", "gamma"]);
        let candidates = [candidate(Channel::Web, "beta")];
        let result = select_answer(
            &candidates,
            &["alpha".to_string(), "beta".to_string()],
            &embedder,
        )
        .unwrap();
        assert!((result.similarities[&Channel::Web] - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn single_candidate_selects_trivially() {
        let embedder = HashEmbedder::default();
        let candidates = [candidate(Channel::Gpt, "only answer")];
        let result = select_answer(&candidates, &["gold".to_string()], &embedder).unwrap();
        assert_eq!(result.selected_channel, Channel::Gpt);
        assert_eq!(result.similarities.len(), 1);
    }

    #[test]
    fn selection_is_stable_under_candidate_permutation() {
        let embedder = HashEmbedder::default();
        let golds = ["the right answer".to_string()];
        let mut candidates = vec![
            candidate(Channel::Web, "some web answer"),
            candidate(Channel::Gpt, "the right answer"),
            candidate(Channel::NoRetrieval, "a direct answer"),
        ];
        let baseline = select_answer(&candidates, &golds, &embedder).unwrap();
        for _ in 0..6 {
            candidates.rotate_left(1);
            let shuffled = select_answer(&candidates, &golds, &embedder).unwrap();
            assert_eq!(shuffled, baseline);
        }
    }

    #[test]
    fn oracle_dominance_with_exact_match_embedder() {
        // If some candidate matches a gold alias after normalization, the
        // selected answer must match gold too.
        let embedder = HashEmbedder::default();
        let golds = ["Shirley Temple".to_string()];
        let candidates = [
            candidate(Channel::Web, "a completely different answer"),
            candidate(Channel::Gpt, "shirley temple!"),
            candidate(Channel::NoRetrieval, "someone else"),
        ];
        let result = select_answer(&candidates, &golds, &embedder).unwrap();
        assert_eq!(result.selected_channel, Channel::Gpt);
        assert!((result.similarities[&Channel::Gpt] - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn consensus_prefers_the_agreeing_majority() {
        // Two near-identical answers and one outlier: the pair scores higher.
        let embedder = BagOfWordsEmbedder::new(["paris", "france", "london"]);
        let candidates = [
            candidate(Channel::Web, "paris france"),
            candidate(Channel::Gpt, "paris"),
            candidate(Channel::NoRetrieval, "london"),
        ];
        let result = consensus_select(&candidates, &embedder).unwrap();
        assert_ne!(result.selected_channel, Channel::NoRetrieval);
    }

    #[test]
    fn consensus_single_candidate_scores_zero() {
        let embedder = HashEmbedder::default();
        let result = consensus_select(&[candidate(Channel::Web, "x")], &embedder).unwrap();
        assert_eq!(result.selected_channel, Channel::Web);
        assert_eq!(result.similarities[&Channel::Web], 0.0);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let embedder = HashEmbedder::default();
        assert!(matches!(
            select_answer(&[], &["g".to_string()], &embedder).unwrap_err(),
            SelectError::NoCandidates
        ));
        assert!(matches!(
            select_answer(&[candidate(Channel::Web, "x")], &[], &embedder).unwrap_err(),
            SelectError::NoReference
        ));
    }

    #[test]
    fn scale_invariance_of_argmax() {
        // Scaling any candidate embedding by a > 0 leaves selection unchanged.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..100 {
            let dim = rng.random_range(2..=16);
            let mk = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
            };
            let mut table: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            table.insert("gold".into(), mk(&mut rng));
            table.insert("w".into(), mk(&mut rng));
            table.insert("g".into(), mk(&mut rng));
            table.insert("n".into(), mk(&mut rng));

            let candidates = [
                candidate(Channel::Web, "w"),
                candidate(Channel::Gpt, "g"),
                candidate(Channel::NoRetrieval, "n"),
            ];
            let golds = ["gold".to_string()];

            let base = select_answer(
                &candidates,
                &golds,
                &TableEmbedder {
                    table: table.clone(),
                    dim,
                },
            )
            .unwrap();

            let scale = rng.random::<f64>() * 9.9 + 0.1;
            let victim = ["w", "g", "n"][trial % 3];
            let mut scaled = table.clone();
            scaled
                .get_mut(victim)
                .unwrap()
                .iter_mut()
                .for_each(|v| *v *= scale);

            let after =
                select_answer(&candidates, &golds, &TableEmbedder { table: scaled, dim }).unwrap();
            assert_eq!(
                after.selected_channel, base.selected_channel,
                "trial {trial}"
            );
        }
    }
}
