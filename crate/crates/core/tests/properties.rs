//! Property tests for the module-level invariants.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use sucea::corpus::Passage;
use sucea::dataset::GoldEvidenceRef;
use sucea::eval::{
    judge_claim, match_passage_to_gold, recall_at_k, retrieval_accuracy, MatchParams,
    RetrievalJudgment,
};
use sucea::pipeline::{parse, pool_evidence, SubClaim};
use sucea::retrieval::{tokenize, EvidenceHit, IndexOptions, InvertedIndex, RetrieverKind};

fn word(i: u8) -> String {
    format!("w{i}")
}

fn doc_text(tokens: &[u8]) -> String {
    tokens.iter().map(|&t| word(t)).collect::<Vec<_>>().join(" ")
}

fn docs_strategy() -> impl Strategy<Value = Vec<(String, String)>> {
    prop::collection::vec(prop::collection::vec(0u8..30, 1..20), 1..40).prop_map(|texts| {
        texts
            .into_iter()
            .enumerate()
            .map(|(i, tokens)| (format!("d{i:02}"), doc_text(&tokens)))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Top-k lists nest: retrieve(k) is a prefix of retrieve(k+1).
    #[test]
    fn topk_is_prefix_of_topk_plus_one(
        docs in docs_strategy(),
        query_tokens in prop::collection::vec(0u8..30, 0..6),
        k in 1usize..8,
    ) {
        let index: InvertedIndex<f64> =
            InvertedIndex::from_documents(docs, IndexOptions::default()).unwrap();
        let query = doc_text(&query_tokens);
        let smaller = index.search(&query, k);
        let larger = index.search(&query, k + 1);
        prop_assert!(larger.len() >= smaller.len());
        prop_assert_eq!(&larger[..smaller.len()], &smaller[..]);
    }

    /// Scores and ranking are invariant to corpus ingestion order.
    #[test]
    fn scores_are_ingestion_order_invariant(
        (docs, shuffled) in docs_strategy().prop_flat_map(|docs| {
            let shuffled = Just(docs.clone()).prop_shuffle();
            (Just(docs), shuffled)
        }),
        query_tokens in prop::collection::vec(0u8..30, 1..6),
    ) {
        let query = doc_text(&query_tokens);
        let a: InvertedIndex<f64> =
            InvertedIndex::from_documents(docs, IndexOptions::default()).unwrap();
        let b: InvertedIndex<f64> =
            InvertedIndex::from_documents(shuffled, IndexOptions::default()).unwrap();
        let resolve = |index: &InvertedIndex<f64>| -> Vec<(String, f64)> {
            index
                .search(&query, 10)
                .into_iter()
                .map(|(ord, score)| (index.passage_ids()[ord as usize].clone(), score))
                .collect()
        };
        prop_assert_eq!(resolve(&a), resolve(&b));
    }

    /// Tokens are lowercase, alphanumeric, and never empty.
    #[test]
    fn tokenize_output_is_clean(text in ".*") {
        for token in tokenize(&text) {
            prop_assert!(!token.is_empty());
            prop_assert!(token.chars().all(|c| c.is_alphanumeric()));
            prop_assert_eq!(token.to_lowercase(), token.clone());
        }
    }

    /// Rerank parsing returns unique, in-range, 0-based indices.
    #[test]
    fn rerank_parse_is_safe(text in ".*", n in 0usize..20) {
        let order = parse::parse_rerank(&text, n);
        let mut seen = BTreeSet::new();
        for i in order {
            prop_assert!(i < n);
            prop_assert!(seen.insert(i));
        }
    }

    /// The evidence pool is duplicate-free, keeps the best score per passage,
    /// and is sorted by descending score then ascending id.
    #[test]
    fn pool_is_deduped_and_sorted(
        raw in prop::collection::vec((0u8..12, 0u32..1000u32), 0..40),
    ) {
        let hits: Vec<EvidenceHit> = raw
            .iter()
            .map(|(id, score)| EvidenceHit {
                passage_id: format!("p{id:02}"),
                score: *score as f64 / 1000.0,
                retriever: RetrieverKind::Tfidf,
                query_text: "q".into(),
                subclaim_index: Some(0),
                round: Some(0),
            })
            .collect();
        let mut sub = SubClaim {
            index: 0,
            segment_text: "s".into(),
            decontextualized_text: "s".into(),
            edits: Vec::new(),
            evidence_by_round: Vec::new(),
        };
        sub.evidence_by_round.push(hits.clone());
        let pool = pool_evidence(std::slice::from_ref(&sub), true);

        let ids: BTreeSet<&str> = pool.iter().map(|h| h.passage_id.as_str()).collect();
        prop_assert_eq!(ids.len(), pool.len(), "duplicate ids in pool");
        let mut best: BTreeMap<&str, f64> = BTreeMap::new();
        for h in &hits {
            let entry = best.entry(h.passage_id.as_str()).or_insert(f64::MIN);
            *entry = entry.max(h.score);
        }
        for h in &pool {
            prop_assert_eq!(h.score, best[h.passage_id.as_str()]);
        }
        for pair in pool.windows(2) {
            prop_assert!(
                pair[0].score > pair[1].score
                    || (pair[0].score == pair[1].score
                        && pair[0].passage_id < pair[1].passage_id)
            );
        }
    }
}

// ---------------------------------------------------------------------------
// Brute-force matcher oracle: an independent implementation of the match
// predicate and both retrieval metrics. On small fixtures the eval module
// must agree exactly.
// ---------------------------------------------------------------------------

mod matcher_oracle {
    use super::*;

    fn norm(text: &str) -> String {
        let mut out = String::new();
        let mut in_word = false;
        for c in text.chars() {
            let lower = c.to_lowercase().collect::<String>();
            if lower.chars().all(|l| l.is_alphanumeric()) && !lower.is_empty() {
                if !in_word && !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(&lower);
                in_word = true;
            } else {
                in_word = false;
            }
        }
        out
    }

    pub fn matches(passage: &Passage, gold: &GoldEvidenceRef, threshold: f64) -> bool {
        if gold.passage_id.as_deref() == Some(passage.id.as_str()) {
            return true;
        }
        let Some(sentence) = gold.sentence.as_deref() else {
            return false;
        };
        if norm(&gold.page_title) != norm(&passage.page_title) {
            return false;
        }
        let s = norm(sentence);
        if s.is_empty() {
            return false;
        }
        let p = norm(&passage.text);
        if p.contains(&s) {
            return true;
        }
        let sa: BTreeSet<&str> = s.split(' ').collect();
        let pa: BTreeSet<&str> = p.split(' ').filter(|t| !t.is_empty()).collect();
        if pa.is_empty() {
            return false;
        }
        let inter = sa.intersection(&pa).count() as f64;
        let union = sa.union(&pa).count() as f64;
        inter / union >= threshold
    }

    /// Direct metric computation: no judgment struct, just counting.
    pub fn metrics(
        claims: &[(Vec<Passage>, Vec<GoldEvidenceRef>)],
        k: usize,
        threshold: f64,
    ) -> (f64, f64) {
        let mut hits = 0usize;
        let mut recall_sum = 0f64;
        for (passages, golds) in claims {
            let mut matched = 0usize;
            let mut any = false;
            for gold in golds {
                let found = passages.iter().take(k).any(|p| matches(p, gold, threshold));
                if found {
                    matched += 1;
                    any = true;
                }
            }
            if any {
                hits += 1;
            }
            recall_sum += matched as f64 / golds.len() as f64;
        }
        (
            hits as f64 / claims.len() as f64,
            recall_sum / claims.len() as f64,
        )
    }
}

#[derive(Debug, Clone)]
enum GoldKind {
    PassageId(usize),
    SentenceFromPassage(usize, usize, usize),
    RandomSentence(Vec<u8>),
}

fn gold_kind_strategy(n_passages: usize) -> impl Strategy<Value = GoldKind> {
    prop_oneof![
        (0..n_passages).prop_map(GoldKind::PassageId),
        ((0..n_passages), 0usize..6, 1usize..6)
            .prop_map(|(p, start, len)| GoldKind::SentenceFromPassage(p, start, len)),
        prop::collection::vec(0u8..20, 1..6).prop_map(GoldKind::RandomSentence),
    ]
}

fn eval_fixture_strategy() -> impl Strategy<Value = Vec<(Vec<Passage>, Vec<GoldEvidenceRef>)>> {
    let claim = (1usize..8).prop_flat_map(|n_passages| {
        let passages = prop::collection::vec(
            (prop::bool::ANY, prop::collection::vec(0u8..20, 3..10)),
            n_passages..=n_passages,
        );
        let golds = prop::collection::vec(
            (prop::bool::ANY, gold_kind_strategy(n_passages)),
            1..4,
        );
        (passages, golds)
    });
    prop::collection::vec(claim, 1..6).prop_map(|claims| {
        claims
            .into_iter()
            .enumerate()
            .map(|(c, (raw_passages, raw_golds))| {
                let passages: Vec<Passage> = raw_passages
                    .iter()
                    .enumerate()
                    .map(|(i, (page_q, tokens))| Passage {
                        id: format!("c{c}p{i}"),
                        page_title: if *page_q { "Q".into() } else { "P".into() },
                        seq: i as u32,
                        text: doc_text(tokens),
                    })
                    .collect();
                let golds: Vec<GoldEvidenceRef> = raw_golds
                    .into_iter()
                    .map(|(page_q, kind)| {
                        let page_title = if page_q { "Q".to_string() } else { "P".to_string() };
                        match kind {
                            GoldKind::PassageId(p) => GoldEvidenceRef {
                                page_title,
                                sentence: None,
                                passage_id: Some(passages[p % passages.len()].id.clone()),
                            },
                            GoldKind::SentenceFromPassage(p, start, len) => {
                                let words: Vec<&str> = passages[p % passages.len()]
                                    .text
                                    .split(' ')
                                    .collect();
                                let start = start % words.len();
                                let end = (start + len).min(words.len());
                                GoldEvidenceRef {
                                    page_title,
                                    sentence: Some(words[start..end].join(" ")),
                                    passage_id: None,
                                }
                            }
                            GoldKind::RandomSentence(tokens) => GoldEvidenceRef {
                                page_title,
                                sentence: Some(doc_text(&tokens)),
                                passage_id: None,
                            },
                        }
                    })
                    .collect();
                (passages, golds)
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    /// The eval module agrees exactly with the independent brute-force
    /// matcher on both the predicate and the aggregated metrics.
    #[test]
    fn eval_equals_bruteforce_matcher(
        claims in eval_fixture_strategy(),
        k in 1usize..8,
    ) {
        let params = MatchParams::default();

        // Predicate-level agreement on every (passage, gold) pair.
        for (passages, golds) in &claims {
            for p in passages {
                for g in golds {
                    prop_assert_eq!(
                        match_passage_to_gold(p, g, &params),
                        matcher_oracle::matches(p, g, params.jaccard_threshold),
                        "predicate diverged on passage {} vs gold {:?}", p.id, g
                    );
                }
            }
        }

        // Metric-level agreement.
        let judgments: Vec<RetrievalJudgment> = claims
            .iter()
            .enumerate()
            .map(|(c, (passages, golds))| {
                judge_claim(&format!("c{c}"), passages, golds, k, &params)
            })
            .collect();
        let racc: f64 = retrieval_accuracy(&judgments).unwrap();
        let recall: f64 = recall_at_k(&judgments).unwrap();
        let (oracle_racc, oracle_recall) =
            matcher_oracle::metrics(&claims, k, params.jaccard_threshold);
        prop_assert_eq!(racc, oracle_racc);
        prop_assert_eq!(recall, oracle_recall);
    }
}
