mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use smartreply::codeswitch::{synthesize_pair, MRPair, PhraseTable};
use smartreply::encoder::{Dims, EncoderParams, Side};
use smartreply::eval::mrr;
use smartreply::linalg::Matrix;
use smartreply::ranker::{score_all, suggest_for_embedding, top_n1, RankConfig};
use smartreply::responseset::{kmeans, ResponseSet, ResponseSetConfig};
use smartreply::textproc::{join, segment_clauses, tokenize, ClauseSplitter, Vocab};
use smartreply::trainer::{loss, symmetric_loss, Batch, TrainConfig};

fn text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-zA-Z0-9 ,.;:!?—]{0,60}",
        "(chai|पसंद|है|and|but|so|,|\\.|!| |  |É|ß){0,20}",
        any::<String>(),
    ]
}

fn ids(vocab: u32) -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0..vocab, 1..10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn tokenize_is_idempotent_on_joined_output(s in text()) {
        let once = tokenize(&s);
        prop_assert_eq!(tokenize(&join(&once)), once);
    }

    #[test]
    fn clauses_partition_the_tokens(s in text()) {
        let tokens = tokenize(&s);
        prop_assume!(!tokens.is_empty());
        let clauses = segment_clauses(&tokens).unwrap();
        let mut cursor = 0;
        let mut rebuilt = Vec::new();
        for c in &clauses {
            prop_assert!(!c.tokens.is_empty());
            prop_assert_eq!(c.source_span.0, cursor);
            prop_assert_eq!(&tokens[c.source_span.0..c.source_span.1], c.tokens.as_slice());
            cursor = c.source_span.1;
            rebuilt.extend(c.tokens.iter().cloned());
        }
        prop_assert_eq!(rebuilt, tokens);
    }

    #[test]
    fn encode_ids_stays_in_range(corpus in prop::collection::vec(text(), 0..8), query in text()) {
        let seqs: Vec<_> = corpus.iter().map(|s| tokenize(s)).collect();
        let vocab = Vocab::build(seqs.iter().map(Vec::as_slice), 1);
        prop_assert!(vocab.encode_ids(&tokenize(&query)).iter().all(|&id| (id as usize) < vocab.len()));
        for seq in &seqs {
            prop_assert!(vocab.encode_ids(seq).iter().all(|&id| id != smartreply::textproc::UNK_ID));
        }
        let again = Vocab::build(seqs.iter().map(Vec::as_slice), 1);
        prop_assert_eq!(vocab.tokens(), again.tokens());
    }

    #[test]
    fn encodings_are_unit_finite_and_order_free(seed in 0u64..1000, ids in ids(20), scale in 0.01f64..50.0) {
        let mut p = common::tiny_model(seed);
        for x in p.embeddings.as_mut_slice() {
            *x *= scale;
        }
        for side in [Side::Message, Side::Reply] {
            let e = p.encode(&ids, side).unwrap();
            prop_assert!(e.as_slice().iter().all(|x| x.is_finite()));
            prop_assert!((e.dot(&e).sqrt() - 1.0).abs() <= 1e-6);

            let mut shuffled = ids.clone();
            shuffled.reverse();
            shuffled.rotate_left(ids.len() / 2);
            prop_assert_eq!(&p.encode(&shuffled, side).unwrap(), &e);
            let doubled: Vec<u32> = ids.iter().flat_map(|&i| [i, i]).collect();
            prop_assert_eq!(&p.encode(&doubled, side).unwrap(), &e);
        }
        let m = p.encode(&ids, Side::Message).unwrap();
        let r = p.encode(&ids, Side::Reply).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&m.dot(&r)));
    }

    #[test]
    fn symmetric_loss_is_nonnegative_with_valid_probabilities(
        b in 1usize..6,
        cells in prop::collection::vec(-1.0f64..1.0, 36),
    ) {
        let s = Matrix::from_vec(b, b, cells[..b * b].iter().map(|x| x.exp()).collect()).unwrap();
        let l = symmetric_loss(&s).unwrap();
        prop_assert!(l >= 0.0 && l.is_finite());
        for i in 0..b {
            let den: f64 = (0..b).map(|j| s.get(i, j) + s.get(j, i)).sum::<f64>() - s.get(i, i);
            let p = s.get(i, i) / den;
            prop_assert!(p > 0.0 && p <= 1.0);
        }
    }

    #[test]
    fn loss_ignores_batch_order(seed in 0u64..1000, perm in Just([2usize, 0, 1]).prop_shuffle()) {
        let p = common::tiny_model(seed);
        let batch = common::tiny_batch(seed + 1);
        let pick = |v: &Vec<Vec<u32>>| perm.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
        let permuted = Batch {
            message_ids: pick(&batch.message_ids),
            reply_ids: pick(&batch.reply_ids),
            translation_ids: batch.translation_ids.as_ref().map(pick),
        };
        let cfg = TrainConfig::default();
        let a = loss(&p, &batch, &cfg).unwrap();
        let b = loss(&p, &permuted, &cfg).unwrap();
        prop_assert!((a.total - b.total).abs() <= 1e-12);
        prop_assert!((a.total - (a.mr_loss + cfg.lambda_tr * a.tr_loss)).abs() <= 1e-12);
    }

    #[test]
    fn lm_scores_follow_counts(counts in prop::collection::vec(1usize..6, 1..12), seed in 0u64..100) {
        let mut corpus = Vec::new();
        for (i, &c) in counts.iter().enumerate() {
            for j in 0..c {
                corpus.push(MRPair::en(format!("{i}-{j}"), "hey", format!("r{i}")));
            }
        }
        let words: Vec<String> = (0..counts.len()).map(|i| format!("r{i}")).chain(["hey".to_string()]).collect();
        let vocab = Vocab::build(std::iter::once(words.as_slice()), 1);
        let params = EncoderParams::init(vocab.len(), Dims { d_emb: 4, d_hid: 4, d_out: 4 }, seed);
        let cfg = ResponseSetConfig { k_intents: 1, seed, ..Default::default() };
        let set = ResponseSet::build(&corpus, &params, &vocab, &cfg).unwrap();
        let mass: f64 = set.entries.iter().map(|e| e.lm_score.exp()).sum();
        prop_assert!((mass - 1.0).abs() <= 1e-9);
        for a in &set.entries {
            for b in &set.entries {
                if a.count > b.count {
                    prop_assert!(a.lm_score > b.lm_score);
                }
            }
        }
        prop_assert_eq!(ResponseSet::build(&corpus, &params, &vocab, &cfg).unwrap(), set);
    }

    #[test]
    fn kmeans_objective_never_increases(seed in 0u64..500, n in 2usize..60, k in 1usize..6, d in 1usize..6) {
        prop_assume!(k <= n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<_> = (0..n).map(|_| common::random_unit(&mut rng, d)).collect();
        let km = kmeans(&points, k, seed).unwrap();
        for w in km.objective.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "{:?}", km.objective);
        }
        prop_assert!(km.assignments.iter().all(|&a| a < k));
        prop_assert_eq!(kmeans(&points, k, seed).unwrap(), km);
    }

    #[test]
    fn ranker_output_is_consistent(
        seed in 0u64..10_000,
        n in 1usize..60,
        n2 in 1usize..6,
        extra in 0usize..30,
        alpha in 0.0f64..2.0,
        threshold in 0.05f64..1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rset = common::random_response_set(&mut rng, n, 6, 3, 10, false);
        let cfg = RankConfig { alpha, n1: n2 + extra, n2, jaccard_threshold: threshold };
        let m = common::random_unit(&mut rng, 6);
        let out = suggest_for_embedding(&m, &rset, &cfg);
        prop_assert!(!out.is_empty() && out.len() <= n2);
        prop_assert_eq!(&suggest_for_embedding(&m, &rset, &cfg), &out);
        let scores = score_all(&m, &rset, alpha);
        let top: BTreeSet<usize> = top_n1(&scores, cfg.n1).into_iter().collect();
        let mut seen = BTreeSet::new();
        for w in out.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
        for s in &out {
            prop_assert!(top.contains(&s.entry_index));
            prop_assert!(seen.insert(s.entry_index));
            prop_assert_eq!(s.score, scores[s.entry_index]);
            prop_assert_eq!(&s.text, &rset.entries[s.entry_index].text);
        }
        // the best-scoring candidate always survives
        prop_assert_eq!(out.iter().map(|s| s.entry_index).min_by(|a, b| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b))),
            Some(top_n1(&scores, 1)[0]));
    }

    #[test]
    fn zero_alpha_ranks_by_dot_product(seed in 0u64..10_000, n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rset = common::random_response_set(&mut rng, n, 5, 2, 1000, true);
        let m = common::random_unit(&mut rng, 5);
        let scores = score_all(&m, &rset, 0.0);
        for (s, e) in scores.iter().zip(&rset.entries) {
            prop_assert_eq!(*s, m.dot(&e.vector));
        }
    }

    #[test]
    fn zero_switch_probability_is_identity(
        message in text(),
        reply in text(),
        rows in prop::collection::vec(("[a-z]{1,4}( [a-z]{1,4})?", "[a-z]{1,5}( [a-z]{1,5})?"), 0..20),
        seed in any::<u64>(),
    ) {
        let mut table = PhraseTable::default();
        for (k, v) in &rows {
            table.insert(k, v);
        }
        let pair = MRPair::en("x", message.clone(), reply.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cs, counts) = synthesize_pair(&pair, &table, &ClauseSplitter::default(), 0.0, &mut rng);
        prop_assert_eq!(cs.message, message);
        prop_assert_eq!(cs.reply, reply);
        prop_assert_eq!(counts.switched, 0);
    }

    #[test]
    fn mrr_properties(ranks in prop::collection::vec(1usize..1000, 1..50)) {
        let v = mrr(&ranks).unwrap();
        prop_assert!(v > 0.0 && v <= 1.0);
        let mut rev = ranks.clone();
        rev.reverse();
        prop_assert!((mrr(&rev).unwrap() - v).abs() <= 1e-15);
        prop_assert_eq!(mrr(&ranks[..1]).unwrap(), 1.0 / ranks[0] as f64);
    }
}
