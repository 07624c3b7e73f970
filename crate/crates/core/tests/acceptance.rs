mod support;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use refgame::corpus::{
    build_noun_lexicon, estimate_word_category_table, parse_corpus, zero_shot_split, Utterance,
    WordCategoryTable, WordId,
};
use refgame::evaluation::eval_listener_resolve;
use refgame::experiment::{acquire_corpus, run_experiment_on, ExperimentConfig};
use refgame::pragmatics::{s1_decode, s1_utterance_log_score, word_listener_score, CategoryBelief, DecodeParams};
use refgame::speakers::{decode_greedy, train_literal_speaker, utterance_log_prob, FeatureRule, NextWordModel};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn worked_example() -> Verdict {
    let start = Instant::now();
    // words: left, bus; categories c1..c3
    let table = WordCategoryTable::from_rows(&[vec![0.5, 0.9], vec![0.5, 0.1], vec![0.5, 0.1]]);
    let (left, bus) = (WordId(0), WordId(1));
    let uniform = CategoryBelief::uniform(3);
    let raw = CategoryBelief::raw_weights(vec![0.9, 0.1, 0.1]).unwrap();
    let got = [
        word_listener_score(&table, &uniform, left).unwrap(),
        word_listener_score(&table, &uniform, bus).unwrap(),
        word_listener_score(&table, &raw, bus).unwrap(),
        word_listener_score(&table, &raw, left).unwrap(),
    ];
    let elapsed = start.elapsed();
    let want = [0.5, 11.0 / 30.0, 0.83, 0.55];
    let exact = got.iter().zip(want).all(|(g, w)| (g - w).abs() <= 1e-9);
    verdict(
        exact && elapsed < Duration::from_millis(1),
        format!(
            "L(left)={:.10} L(bus)={:.10} raw L(bus)={:.10} raw L(left)={:.10} in {elapsed:?}",
            got[0], got[1], got[2], got[3]
        ),
    )
}

fn demo_report() -> (refgame::ExperimentReport, Duration) {
    let config = ExperimentConfig::demo();
    let start = Instant::now();
    let corpus = acquire_corpus(&config).expect("demo corpus");
    let report = run_experiment_on(&config, &corpus).expect("demo experiment");
    (report, start.elapsed())
}

fn noun_direction(report: &refgame::ExperimentReport, elapsed: Duration) -> Verdict {
    let mut wins = 0;
    let mut cells = Vec::new();
    let mut enough = true;
    for c in &report.categories {
        let (a, b) = (&c.s0.noun_metrics, &c.s1.noun_metrics);
        if b.distr_noun_rate < a.distr_noun_rate && b.no_noun_rate > a.no_noun_rate {
            wins += 1;
        }
        enough &= c.n_targets >= 100;
        cells.push(format!(
            "{} distr {:.2}->{:.2} none {:.2}->{:.2} (n={})",
            c.category, a.distr_noun_rate, b.distr_noun_rate, a.no_noun_rate, b.no_noun_rate, c.n_targets
        ));
    }
    verdict(
        report.categories.len() == 6 && enough && wins >= 5 && elapsed < Duration::from_secs(30),
        format!("{wins}/6 categories in {elapsed:.2?}; {}", cells.join("; ")),
    )
}

fn resolution_direction(report: &refgame::ExperimentReport, elapsed: Duration) -> Verdict {
    let mut wins = 0;
    let mut cells = Vec::new();
    for c in &report.categories {
        if c.s1.acc_ts_distractors >= c.s0.acc_ts_distractors {
            wins += 1;
        }
        cells.push(format!(
            "{} {:.3}->{:.3}",
            c.category, c.s0.acc_ts_distractors, c.s1.acc_ts_distractors
        ));
    }
    verdict(
        report.config.ts_distractors_k == 4 && wins >= 4 && elapsed < Duration::from_secs(30),
        format!("{wins}/6 categories with S1 >= S0 on TS-distractors; {}", cells.join("; ")),
    )
}

struct OracleTally {
    steps: usize,
    step_hits: usize,
    targets: usize,
    global_hits: usize,
    score_mismatch: usize,
    max_vocab: usize,
}

fn oracle_tally(worlds: impl Iterator<Item = refgame::WorldConfig>, params: &DecodeParams) -> OracleTally {
    let mut t = OracleTally {
        steps: 0,
        step_hits: 0,
        targets: 0,
        global_hits: 0,
        score_mismatch: 0,
        max_vocab: 0,
    };
    for world in worlds {
        let toy = support::split_world(&world, 0.01, 0.1);
        let n_words = toy.corpus.vocabulary.len();
        t.max_vocab = t.max_vocab.max(n_words);
        let belief = CategoryBelief::uniform(toy.train.categories.len());
        let space = support::enumerate_utterances(n_words, params.max_len);
        for rec in toy.test.records.iter().filter(|r| r.target().category == toy.zero_shot) {
            let target = rec.target();
            let greedy = s1_decode(&toy.speaker, &toy.table, &belief, target, params).unwrap();

            let mut prefix = Utterance::empty();
            let mut choices = greedy.tokens.iter().map(|w| w.0 as usize).collect::<Vec<_>>();
            if greedy.terminated {
                choices.push(n_words);
            }
            for choice in choices {
                let s0 = toy.speaker.next_word_dist(target, &prefix).unwrap();
                let oracle =
                    support::oracle_step_choice(s0.slots(), &toy.table, belief.probs(), &prefix.tokens, params);
                t.steps += 1;
                if oracle == choice {
                    t.step_hits += 1;
                }
                if choice < n_words {
                    prefix.tokens.push(WordId(choice as u32));
                }
            }

            let mut best = (f64::NEG_INFINITY, 0);
            for (i, u) in space.iter().enumerate() {
                let oracle = support::oracle_utterance_log_score(
                    &toy.speaker,
                    &toy.table,
                    belief.probs(),
                    target,
                    u,
                    params.alpha,
                );
                let lib = s1_utterance_log_score(&toy.speaker, &toy.table, &belief, target, u, params.alpha).unwrap();
                if (oracle - lib).abs() > 1e-9 * oracle.abs().max(1.0) {
                    t.score_mismatch += 1;
                }
                if oracle > best.0 {
                    best = (oracle, i);
                }
            }
            t.targets += 1;
            if space[best.1] == greedy {
                t.global_hits += 1;
            }
        }
    }
    t
}

fn oracle_equivalence() -> Verdict {
    let params = DecodeParams::default().with_max_len(2);
    let regular = oracle_tally((0..5).map(support::regular_toy_world), &params);
    let noisy = oracle_tally((0..5).map(|s| support::tiny_world(s, 40)), &params);
    let rate = |t: &OracleTally| 100.0 * t.global_hits as f64 / t.targets as f64;
    let steps_ok = [&regular, &noisy]
        .iter()
        .all(|t| t.step_hits == t.steps && t.score_mismatch == 0 && t.max_vocab <= 20);
    verdict(
        steps_ok && regular.global_hits as f64 >= 0.8 * regular.targets as f64,
        format!(
            "per-step {}/{} steps match; utterance-level argmax agrees on {}/{} targets ({:.1}%) \
             [noisy world with one-word endings: {}/{} ({:.1}%)], vocab <= {}, max_len 2",
            regular.step_hits + noisy.step_hits,
            regular.steps + noisy.steps,
            regular.global_hits,
            regular.targets,
            rate(&regular),
            noisy.global_hits,
            noisy.targets,
            rate(&noisy),
            regular.max_vocab.max(noisy.max_vocab),
        ),
    )
}

fn alpha_zero_identity() -> Verdict {
    let config = ExperimentConfig::demo();
    let corpus = acquire_corpus(&config).unwrap();
    let (train, _) = zero_shot_split(&corpus, ["cat"]).unwrap();
    let speaker = train_literal_speaker(&train, config.speaker_smoothing_k, &config.speaker_features).unwrap();
    let table = estimate_word_category_table(&train, config.smoothing_k).unwrap();
    let belief = CategoryBelief::uniform(corpus.categories.len());
    let params = config.decode.with_alpha(0.0);
    let referents: Vec<_> = corpus.records.iter().flat_map(|r| r.scene.referents()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut same = 0;
    let n = 1000;
    for _ in 0..n {
        let r = referents[rng.gen_range(0..referents.len())];
        let a = s1_decode(&speaker, &table, &belief, r, &params).unwrap();
        if a == decode_greedy(&speaker, r, params.max_len) {
            same += 1;
        }
    }
    verdict(same == n, format!("{same}/{n} random targets identical token-for-token"))
}

fn invariant_suite() -> Verdict {
    let mut failures = Vec::new();
    let mut min_cases = u32::MAX;
    let outcomes: Vec<_> = support::all_invariants().into_iter().map(|f| f()).collect();
    for o in &outcomes {
        min_cases = min_cases.min(o.cases);
        if let Err(e) = &o.result {
            failures.push(format!("{}: {e}", o.name));
        }
    }
    verdict(
        failures.is_empty() && min_cases >= 1000,
        if failures.is_empty() {
            format!("{} properties, at least {min_cases} cases each", outcomes.len())
        } else {
            failures.join("; ")
        },
    )
}

const STRICT_FIXTURE: &str = r#"{"scene_id":"t1","referents":[{"id":"r0","category":"cat","attributes":{"color":"brown"}},{"id":"r1","category":"dog","attributes":{"color":"white"}}],"target_id":"r0","expression":["brown","cat"]}
{"scene_id":"t2","referents":[{"id":"r0","category":"dog","attributes":{"color":"brown"}},{"id":"r1","category":"cat","attributes":{"color":"white"}}],"target_id":"r0","expression":["brown","dog"]}
{"scene_id":"t3","referents":[{"id":"r0","category":"dog","attributes":{"color":"brown"}}],"target_id":"r0","expression":["brown","dog"]}
{"scene_id":"t4","referents":[{"id":"r0","category":"cat","attributes":{"color":"white"}}],"target_id":"r0","expression":["white","cat"]}
{"scene_id":"q1","referents":[{"id":"d","category":"dog","attributes":{"color":"brown"}},{"id":"c","category":"cat","attributes":{"color":"brown"}}],"target_id":"c","expression":["brown","cat"]}
{"scene_id":"q2","referents":[{"id":"d","category":"dog","attributes":{"color":"brown"}},{"id":"c","category":"cat","attributes":{"color":"white"}}],"target_id":"c","expression":["cat"]}
"#;

fn strict_listener() -> Verdict {
    let corpus = parse_corpus(STRICT_FIXTURE.as_bytes(), None).unwrap();
    let k = 0.1;
    let table = estimate_word_category_table(&corpus, k).unwrap();
    let s_eval = train_literal_speaker(&corpus, 0.1, &FeatureRule::attributes(["color"])).unwrap();
    let lexicon = build_noun_lexicon(&corpus.categories, &Default::default()).unwrap();
    let vocab = &corpus.vocabulary;
    let cat = vocab.get("cat").unwrap();
    let dog_id = corpus.categories.require("dog").unwrap();
    let n_dog: f64 = corpus
        .records
        .iter()
        .filter(|r| r.target().category == dog_id)
        .map(|r| r.expression.len() as f64)
        .sum();
    let floor = k / (n_dog + k * vocab.len() as f64);
    let mut ok = (table.prob(cat, dog_id) - floor).abs() < 1e-12;
    let mut checked = 0;
    for id in ["q1", "q2"] {
        let rec = corpus.records.iter().find(|r| r.scene.id == id).unwrap();
        for words in [vec!["brown", "cat"], vec!["cat"], vec!["white", "cat"]] {
            let u = Utterance::from_words(vocab, &words, true);
            let res = eval_listener_resolve(&s_eval, &table, &rec.scene, &u, &lexicon);
            for (i, r) in rec.scene.referents().iter().enumerate() {
                if r.category == dog_id {
                    let bound = utterance_log_prob(&s_eval, r, &u).exp() * floor;
                    ok &= res.scores[i] <= bound * (1.0 + 1e-12);
                    checked += 1;
                }
            }
            ok &= rec.scene.referents()[res.winner].category != dog_id;
        }
    }
    verdict(
        ok,
        format!("{checked} dog referents bounded by S_eval * {floor:.5}; no cat utterance resolved to a dog"),
    )
}

fn main() -> ExitCode {
    let (report, elapsed) = demo_report();
    let results = [
        ("1", "worked listener example", worked_example()),
        ("2", "fewer distractor nouns, more noun-less output", noun_direction(&report, elapsed)),
        ("3", "TS-distractors resolution accuracy", resolution_direction(&report, elapsed)),
        ("4", "oracle equivalence on a toy world", oracle_equivalence()),
        ("5", "alpha = 0 reduces to greedy S0", alpha_zero_identity()),
        ("6", "property-based invariant suite", invariant_suite()),
        ("7", "strict evaluation listener", strict_listener()),
    ];
    let mut all = true;
    for (id, name, v) in &results {
        all &= v.pass;
        println!(
            "criterion {id} {}: {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
