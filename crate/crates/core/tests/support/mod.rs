#![allow(dead_code)]

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use refgame::corpus::{
    build_noun_lexicon, estimate_word_category_table, parse_corpus, write_corpus, zero_shot_split,
    CategoryId, RefExCorpus, Utterance, WordCategoryTable, WordId,
};
use refgame::evaluation::{
    build_ts_distractors, eval_listener_resolve, noun_metrics, SimilarCategoryMap,
};
use refgame::pragmatics::{
    listener_scores, s1_decode, s1_next_word_scores, standard_rsa_listener, word_listener_score,
    CategoryBelief, DecodeParams,
};
use refgame::speakers::{
    decode_greedy, train_literal_speaker, utterance_log_prob, FeatureRule, LiteralSpeaker, NextWordModel,
};
use refgame::worldgen::{generate_world, CategorySpec, Template, WorldConfig};

pub const TOY_ZERO_SHOT: &str = "cat";

/// Four categories in two groups, two visual attributes, nine words.
pub fn toy_world(seed: u64) -> WorldConfig {
    WorldConfig {
        categories: vec![
            CategorySpec::new("cat", "animal"),
            CategorySpec::new("dog", "animal"),
            CategorySpec::new("cup", "container"),
            CategorySpec::new("bowl", "container"),
        ],
        attributes: BTreeMap::from([
            ("color".into(), vec!["red".into(), "blue".into(), "green".into()]),
            ("x_pos".into(), vec!["left".into(), "right".into()]),
        ]),
        group_attribute: "shape".into(),
        scenes_per_category: 40,
        referents_per_scene: [2, 3],
        templates: vec![
            Template::new("{x_pos} {color} {name}", 3),
            Template::new("{color} {name}", 2),
            Template::new("{x_pos} {name}", 2),
            Template::new("{x_pos} {color}", 1),
        ],
        noise: 0.05,
        seed,
    }
}

pub fn tiny_world(seed: u64, scenes: usize) -> WorldConfig {
    let mut w = toy_world(seed);
    w.scenes_per_category = scenes;
    w
}

/// Noise-free variant: one attribute word followed by the head noun.
pub fn regular_toy_world(seed: u64) -> WorldConfig {
    WorldConfig {
        templates: vec![
            Template::new("{x_pos} {name}", 2),
            Template::new("{color} {name}", 2),
        ],
        noise: 0.0,
        ..toy_world(seed)
    }
}

pub fn toy_features() -> FeatureRule {
    FeatureRule::attributes(["shape", "color", "x_pos"])
}

pub struct ToySplit {
    pub corpus: RefExCorpus,
    pub train: RefExCorpus,
    pub test: RefExCorpus,
    pub speaker: LiteralSpeaker,
    pub table: WordCategoryTable,
    pub zero_shot: CategoryId,
}

pub fn toy_split(seed: u64, scenes: usize, speaker_k: f64, table_k: f64) -> ToySplit {
    split_world(&tiny_world(seed, scenes), speaker_k, table_k)
}

pub fn split_world(world: &WorldConfig, speaker_k: f64, table_k: f64) -> ToySplit {
    let corpus = generate_world(world).expect("toy world");
    let (train, test) = zero_shot_split(&corpus, [TOY_ZERO_SHOT]).expect("split");
    let speaker = train_literal_speaker(&train, speaker_k, &toy_features()).expect("speaker");
    let table = estimate_word_category_table(&train, table_k).expect("table");
    let zero_shot = corpus.categories.require(TOY_ZERO_SHOT).unwrap();
    ToySplit {
        corpus,
        train,
        test,
        speaker,
        table,
        zero_shot,
    }
}

/// Σ_c b(c)·P(w|c), recomputed straight from the table rows.
pub fn oracle_listener(table: &WordCategoryTable, belief: &[f64], slot: usize) -> f64 {
    if slot == table.n_words() {
        return 1.0;
    }
    belief
        .iter()
        .enumerate()
        .map(|(c, &b)| {
            let row = table.row(CategoryId(c as u32));
            let p = if slot < row.len() {
                row[slot]
            } else {
                table.oov_prob(CategoryId(c as u32))
            };
            b * p
        })
        .sum()
}

/// Exhaustive per-step S₁ choice: every output slot except OOV scored as
/// s0 · max(L, floor)^(α + β[repeat]), EOS at L = 1, ties to the lowest slot.
pub fn oracle_step_choice(
    s0: &[f64],
    table: &WordCategoryTable,
    belief: &[f64],
    prefix: &[WordId],
    params: &DecodeParams,
) -> usize {
    let n_words = table.n_words();
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for slot in 0..=n_words {
        let score = if slot == n_words {
            s0[slot]
        } else {
            let repeated = prefix.contains(&WordId(slot as u32));
            let exponent = if params.alpha == 0.0 {
                0.0
            } else {
                params.alpha + if repeated { params.beta_repeat } else { 0.0 }
            };
            s0[slot] * oracle_listener(table, belief, slot).max(params.listener_floor).powf(exponent)
        };
        if score > best_score {
            best = slot;
            best_score = score;
        }
    }
    best
}

/// Every nonempty utterance greedy decoding can return: terminated ones
/// shorter than `max_len`, plus unterminated ones of exactly `max_len` words.
pub fn enumerate_utterances(n_words: usize, max_len: usize) -> Vec<Utterance> {
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<WordId>> = vec![Vec::new()];
    for len in 0..=max_len {
        let mut next = Vec::new();
        for toks in &frontier {
            if len < max_len {
                if len > 0 {
                    out.push(Utterance::new(toks.clone(), true));
                }
                for w in 0..n_words as u32 {
                    let mut t = toks.clone();
                    t.push(WordId(w));
                    next.push(t);
                }
            } else {
                out.push(Utterance::new(toks.clone(), false));
            }
        }
        frontier = next;
    }
    out
}

/// log S₀(u|r) + α Σ_w log L(w), with S₀ read off step distributions.
pub fn oracle_utterance_log_score<M: NextWordModel>(
    speaker: &M,
    table: &WordCategoryTable,
    belief: &[f64],
    referent: &refgame::Referent,
    u: &Utterance,
    alpha: f64,
) -> f64 {
    let mut prefix = Utterance::empty();
    let mut total = 0.0;
    for &w in &u.tokens {
        let d = speaker.next_word_dist(referent, &prefix).unwrap();
        total += d.slots()[w.0 as usize].ln();
        total += alpha * oracle_listener(table, belief, w.0 as usize).ln();
        prefix.tokens.push(w);
    }
    if u.terminated {
        let d = speaker.next_word_dist(referent, &prefix).unwrap();
        total += d.slots()[d.eos_slot()].ln();
    }
    total
}

pub const INVARIANT_CASES: u32 = 1000;

pub struct InvariantOutcome {
    pub name: &'static str,
    pub cases: u32,
    pub result: Result<(), String>,
}

fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: INVARIANT_CASES,
        failure_persistence: None,
        ..Config::default()
    })
}

fn check<S, F>(name: &'static str, strategy: S, test: F) -> InvariantOutcome
where
    S: Strategy,
    S::Value: std::fmt::Debug,
    F: Fn(S::Value) -> Result<(), TestCaseError>,
{
    let cases = Cell::new(0u32);
    let result = runner()
        .run(&strategy, |v| {
            cases.set(cases.get() + 1);
            test(v)
        })
        .map_err(|e| e.to_string());
    InvariantOutcome {
        name,
        cases: cases.get(),
        result,
    }
}

fn close(a: f64, b: f64, tol: f64) -> Result<(), TestCaseError> {
    prop_assert!((a - b).abs() <= tol, "{a} vs {b}");
    Ok(())
}

fn tiny(seed: u64) -> RefExCorpus {
    generate_world(&tiny_world(seed, 3)).unwrap()
}

pub fn table_rows_are_stochastic() -> InvariantOutcome {
    check("table rows sum to 1", (any::<u64>(), 0.0f64..3.0), |(seed, k)| {
        let corpus = tiny(seed);
        let (train, _) = zero_shot_split(&corpus, [TOY_ZERO_SHOT]).unwrap();
        let t = estimate_word_category_table(&train, k).unwrap();
        for c in corpus.categories.ids() {
            let row = t.row(c);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            close(row.iter().sum(), 1.0, 1e-9)?;
            prop_assert!(t.oov_prob(c) <= row.iter().cloned().fold(f64::INFINITY, f64::min) + 1e-12);
        }
        Ok(())
    })
}

pub fn next_word_dists_are_stochastic() -> InvariantOutcome {
    let strategy = (any::<u64>(), 1e-4f64..2.0, prop::collection::vec(0u32..16, 0..4), 0usize..64);
    check("next-word distributions sum to 1", strategy, |(seed, k, prefix, r)| {
        let corpus = tiny(seed);
        let s = train_literal_speaker(&corpus, k, &toy_features()).unwrap();
        let refs: Vec<_> = corpus.records.iter().flat_map(|r| r.scene.referents()).collect();
        let referent = refs[r % refs.len()];
        let n = corpus.vocabulary.len() as u32;
        let prefix = Utterance::new(prefix.into_iter().map(|w| WordId(w % n)).collect(), false);
        let d = s.next_word_dist(referent, &prefix).unwrap();
        prop_assert_eq!(d.slots().len(), corpus.vocabulary.n_slots());
        prop_assert!(d.slots().iter().all(|&p| p > 0.0 && p <= 1.0));
        close(d.total(), 1.0, 1e-9)
    })
}

fn weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..10.0, 4).prop_filter("nonzero mass", |w| w.iter().sum::<f64>() > 1e-6)
}

pub fn belief_simplex_and_listener_bounds() -> InvariantOutcome {
    let strategy = (any::<u64>(), weights(), 0.0f64..2.0);
    check("beliefs are simplex points and listener scores are convex mixtures", strategy, |(seed, w, k)| {
        let corpus = tiny(seed);
        let table = estimate_word_category_table(&corpus, k).unwrap();
        let total: f64 = w.iter().sum();
        let belief = CategoryBelief::new(w.iter().map(|x| x / total).collect()).unwrap();
        close(belief.probs().iter().sum(), 1.0, 1e-9)?;
        let scores = listener_scores(&table, &belief).unwrap();
        prop_assert_eq!(scores.len(), corpus.vocabulary.n_slots());
        prop_assert_eq!(scores[corpus.vocabulary.eos_slot()], 1.0);
        for word in corpus.vocabulary.ids() {
            let l = word_listener_score(&table, &belief, word).unwrap();
            let col: Vec<f64> = corpus.categories.ids().map(|c| table.prob(word, c)).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(0.0, f64::max);
            prop_assert!(l >= lo - 1e-12 && l <= hi + 1e-12);
            close(l, scores[word.0 as usize], 1e-15)?;
        }
        let words: f64 = corpus.vocabulary.ids().map(|w| scores[w.0 as usize]).sum();
        close(words, 1.0, 1e-9)
    })
}

pub fn step_scores_are_monotone_rescorings() -> InvariantOutcome {
    let strategy = (any::<u64>(), 0.0f64..4.0, 0.0f64..4.0, 0usize..32);
    check("S1 step scores are nonnegative and bounded by S0", strategy, |(seed, alpha, beta, r)| {
        let corpus = tiny(seed);
        let s = train_literal_speaker(&corpus, 0.01, &toy_features()).unwrap();
        let table = estimate_word_category_table(&corpus, 0.1).unwrap();
        let belief = CategoryBelief::uniform(corpus.categories.len());
        let listener = listener_scores(&table, &belief).unwrap();
        let referent = corpus.records[r % corpus.len()].target();
        let prefix = Utterance::new(vec![WordId(0)], false);
        let params = DecodeParams {
            alpha,
            beta_repeat: beta,
            ..DecodeParams::default()
        };
        let d = s.next_word_dist(referent, &prefix).unwrap();
        let scores = s1_next_word_scores(&d, &listener, &prefix, &params).unwrap();
        for (slot, (&sc, &p)) in scores.iter().zip(d.slots()).enumerate() {
            prop_assert!(sc >= 0.0);
            prop_assert!(sc <= p + 1e-15, "slot {slot}");
        }
        prop_assert_eq!(scores[d.eos_slot()], d.eos());
        Ok(())
    })
}

pub fn decoding_is_deterministic_and_bounded() -> InvariantOutcome {
    let strategy = (any::<u64>(), 0.0f64..4.0, 1usize..6, 0usize..32);
    check("decoders are deterministic, bounded and never emit OOV", strategy, |(seed, alpha, max_len, r)| {
        let corpus = tiny(seed);
        let s = train_literal_speaker(&corpus, 0.01, &toy_features()).unwrap();
        let table = estimate_word_category_table(&corpus, 0.1).unwrap();
        let belief = CategoryBelief::uniform(corpus.categories.len());
        let referent = corpus.records[r % corpus.len()].target();
        let params = DecodeParams::default().with_alpha(alpha).with_max_len(max_len);
        let a = s1_decode(&s, &table, &belief, referent, &params).unwrap();
        let b = s1_decode(&s, &table, &belief, referent, &params).unwrap();
        prop_assert_eq!(&a, &b);
        let g = decode_greedy(&s, referent, max_len);
        prop_assert_eq!(&g, &decode_greedy(&s, referent, max_len));
        for u in [&a, &g] {
            prop_assert!(u.len() <= max_len);
            prop_assert!(u.terminated || u.len() == max_len);
            prop_assert!(u.tokens.iter().all(|w| corpus.vocabulary.contains(*w)));
            prop_assert!(utterance_log_prob(&s, referent, u).is_finite());
        }
        Ok(())
    })
}

pub fn worlds_are_deterministic_and_distinguishable() -> InvariantOutcome {
    check("world generation is seed-deterministic with distinguishable referents", any::<u64>(), |seed| {
        let a = tiny(seed);
        prop_assert_eq!(&a, &tiny(seed));
        for rec in &a.records {
            let refs = rec.scene.referents();
            prop_assert!(refs.len() >= 2 && refs.len() <= 3);
            for (i, x) in refs.iter().enumerate() {
                for y in &refs[..i] {
                    prop_assert!(x.category != y.category || x.attributes != y.attributes);
                }
            }
            prop_assert!(!rec.expression.tokens.is_empty());
            prop_assert!(rec.expression.len() <= 3);
        }
        Ok(())
    })
}

pub fn corpus_round_trips() -> InvariantOutcome {
    check("JSONL write then parse is the identity", any::<u64>(), |seed| {
        let a = tiny(seed);
        let mut buf = Vec::new();
        write_corpus(&a, &mut buf).unwrap();
        let b = parse_corpus(&buf[..], None).unwrap();
        prop_assert_eq!(a, b);
        Ok(())
    })
}

pub fn split_partitions_scenes() -> InvariantOutcome {
    let strategy = (any::<u64>(), prop::sample::subsequence(vec!["cat", "dog", "cup", "bowl"], 0..=4));
    check("zero-shot split is a partition with no held-out category in train", strategy, |(seed, held)| {
        let corpus = tiny(seed);
        let (train, test) = zero_shot_split(&corpus, held.iter().copied()).unwrap();
        prop_assert_eq!(train.len() + test.len(), corpus.len());
        prop_assert_eq!(&train.vocabulary, &corpus.vocabulary);
        prop_assert_eq!(&test.categories, &corpus.categories);
        let ids: BTreeSet<CategoryId> = held.iter().map(|h| corpus.categories.require(h).unwrap()).collect();
        for r in &train.records {
            prop_assert!(ids.iter().all(|&c| !r.scene.contains_category(c)));
        }
        for r in &test.records {
            prop_assert!(ids.iter().any(|&c| r.scene.contains_category(c)));
        }
        Ok(())
    })
}

pub fn noun_metrics_are_bounded() -> InvariantOutcome {
    let strategy = (any::<u64>(), prop::collection::vec(prop::collection::vec(0u32..16, 0..4), 1..20));
    check("noun rates lie in [0,1] and sum to at most 1", strategy, |(seed, utts)| {
        let corpus = tiny(seed);
        let lexicon = build_noun_lexicon(&corpus.categories, &BTreeMap::new()).unwrap();
        let n = corpus.vocabulary.len() as u32;
        let utts: Vec<Utterance> = utts
            .into_iter()
            .map(|t| Utterance::complete(t.into_iter().map(|w| WordId(w % n)).collect()))
            .collect();
        let m = noun_metrics(&utts, &lexicon, &corpus.vocabulary, CategoryId(0)).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.distr_noun_rate));
        prop_assert!((0.0..=1.0).contains(&m.no_noun_rate));
        prop_assert!(m.distr_noun_rate + m.no_noun_rate <= 1.0 + 1e-12);
        prop_assert_eq!(m.n, utts.len());
        Ok(())
    })
}

pub fn rsa_listener_normalizes() -> InvariantOutcome {
    let strategy = (any::<u64>(), 0usize..64, prop::collection::vec(0u32..16, 0..3), any::<bool>());
    check("referent listener is a distribution", strategy, |(seed, r, toks, term)| {
        let corpus = tiny(seed);
        let s = train_literal_speaker(&corpus, 0.01, &toy_features()).unwrap();
        let n = corpus.vocabulary.len() as u32;
        let u = Utterance::new(toks.into_iter().map(|w| WordId(w % n)).collect(), term);
        let scene = &corpus.records[r % corpus.len()].scene;
        let p = standard_rsa_listener(&s, scene, &u);
        prop_assert_eq!(p.len(), scene.referents().len());
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        close(p.iter().sum(), 1.0, 1e-9)
    })
}

pub fn ts_distractor_scenes_are_well_formed() -> InvariantOutcome {
    let strategy = (any::<u64>(), any::<u64>(), 1usize..4);
    check("TS-distractor scenes hold the target plus k similar-category referents", strategy, |(seed, draw, k)| {
        let corpus = generate_world(&tiny_world(seed, 6)).unwrap();
        let (_, test) = zero_shot_split(&corpus, [TOY_ZERO_SHOT]).unwrap();
        let similar = SimilarCategoryMap::new(
            &corpus.categories,
            &BTreeMap::from([(TOY_ZERO_SHOT.to_string(), vec!["dog".to_string(), "cup".to_string()])]),
        )
        .unwrap();
        let Ok(scenes) = build_ts_distractors(&test, &similar, k, draw) else {
            return Ok(());
        };
        prop_assert_eq!(&scenes, &build_ts_distractors(&test, &similar, k, draw).unwrap());
        let cat = corpus.categories.require(TOY_ZERO_SHOT).unwrap();
        let ok = [corpus.categories.require("dog").unwrap(), corpus.categories.require("cup").unwrap()];
        for s in &scenes {
            prop_assert_eq!(s.referents().len(), k + 1);
            prop_assert_eq!(s.target().category, cat);
            for (i, r) in s.referents().iter().enumerate() {
                if i != s.target_index() {
                    prop_assert!(ok.contains(&r.category));
                }
            }
        }
        Ok(())
    })
}

pub fn eval_listener_picks_an_argmax() -> InvariantOutcome {
    let strategy = (any::<u64>(), 0usize..64, prop::collection::vec(0u32..16, 0..4));
    check("evaluation listener returns the first maximal referent", strategy, |(seed, r, toks)| {
        let corpus = tiny(seed);
        let s = train_literal_speaker(&corpus, 0.01, &toy_features()).unwrap();
        let table = estimate_word_category_table(&corpus, 0.1).unwrap();
        let lexicon = build_noun_lexicon(&corpus.categories, &BTreeMap::new()).unwrap();
        let n = corpus.vocabulary.len() as u32;
        let u = Utterance::complete(toks.into_iter().map(|w| WordId(w % n)).collect());
        let scene = &corpus.records[r % corpus.len()].scene;
        let res = eval_listener_resolve(&s, &table, scene, &u, &lexicon);
        let max = res.log_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(res.log_scores[res.winner], max);
        prop_assert!(res.log_scores[..res.winner].iter().all(|&x| x < max));
        prop_assert_eq!(&res.winner_id, &scene.referents()[res.winner].id);
        Ok(())
    })
}

pub fn all_invariants() -> Vec<fn() -> InvariantOutcome> {
    vec![
        table_rows_are_stochastic,
        next_word_dists_are_stochastic,
        belief_simplex_and_listener_bounds,
        step_scores_are_monotone_rescorings,
        decoding_is_deterministic_and_bounded,
        worlds_are_deterministic_and_distinguishable,
        corpus_round_trips,
        split_partitions_scenes,
        noun_metrics_are_bounded,
        rsa_listener_normalizes,
        ts_distractor_scenes_are_well_formed,
        eval_listener_picks_an_argmax,
    ]
}
