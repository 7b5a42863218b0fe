//! Property tests over the public API.

use std::collections::{BTreeMap, BTreeSet};

use finbench_core::corpus::{Gold, LabelSpace, Sample};
use finbench_core::gold::{normalize_label, render_entities, render_relations, EntityMention, RelationTriple};
use finbench_core::instruct::{build_records, parse_rendered, render, PromptPool};
use finbench_core::report::{grid_from_csv, performance_gain, rank_models, render_tables, Arrow, ResultGrid};
use finbench_core::runner::{estimate_cost, select_checkpoint, CheckpointRecord};
use finbench_core::scorer::{parse_classification, parse_entities, parse_relations, ParsedPrediction};
use finbench_core::task::{Mode, Phase, Split, TaskKind};
use proptest::prelude::*;
use proptest::sample::subsequence;

fn word() -> impl Strategy<Value = String> {
    "[A-Za-z0-9&.]{1,6}"
}

fn phrase() -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..4).prop_map(|w| w.join(" "))
}

fn mention() -> impl Strategy<Value = EntityMention> {
    (phrase(), "[A-Za-z]{2,5}").prop_map(|(s, t)| EntityMention::new(s, t))
}

fn triple() -> impl Strategy<Value = RelationTriple> {
    ("[a-z][a-z_]{2,12}", phrase(), phrase()).prop_map(|(r, s, o)| RelationTriple::new(r, s, o))
}

fn sentiment_sample(i: usize, label: &str) -> Sample {
    Sample {
        id: format!("S-{i:04}"),
        dataset: "FPB".into(),
        task: TaskKind::Sa,
        input_text: format!("text {i}"),
        gold: Gold::Label(label.into()),
        meta: BTreeMap::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn entity_render_parse_inverse(ents in prop::collection::vec(mention(), 0..5)) {
        let rendered = render_entities(&ents);
        let parsed = parse_entities(&rendered);
        let want: BTreeSet<EntityMention> = ents.iter().map(EntityMention::normalized).collect();
        prop_assert_eq!(parsed.dropped, 0);
        prop_assert_eq!(parsed.prediction, ParsedPrediction::Entities(want));
    }

    #[test]
    fn relation_render_parse_inverse(triples in prop::collection::vec(triple(), 0..5)) {
        let rendered = render_relations(&triples);
        let parsed = parse_relations(&rendered);
        let want: Vec<RelationTriple> = triples.iter().map(RelationTriple::normalized).collect();
        prop_assert_eq!(parsed.dropped, 0);
        match parsed.prediction {
            ParsedPrediction::Relations(got) => {
                let got: Vec<RelationTriple> = got.iter().map(RelationTriple::normalized).collect();
                prop_assert_eq!(got, want);
            }
            other => prop_assert!(false, "unexpected {:?}", other),
        }
    }

    #[test]
    fn classification_decision_ignores_option_order(
        completion in "[a-z ]{0,30}",
        options in Just(vec!["negative", "neutral", "positive", "neg", "pos"]).prop_shuffle(),
        extra in prop::sample::select(vec!["positive", "negative", "neutral", ""]),
    ) {
        let text = format!("{completion}{extra}");
        let opts: Vec<String> = options.iter().map(|s| s.to_string()).collect();
        let mut reversed = opts.clone();
        reversed.reverse();
        let a = parse_classification(&text, &opts);
        prop_assert_eq!(&a, &parse_classification(&text, &reversed));
        if let ParsedPrediction::Label(l) = &a {
            prop_assert!(opts.contains(l));
        }
    }

    #[test]
    fn rendered_record_round_trips(
        labels in prop::collection::vec(prop::sample::select(vec!["negative", "neutral", "positive"]), 1..20),
        seed in any::<u64>(),
        mode in prop::sample::select(vec![Mode::Standard, Mode::ZeroShot]),
        split in prop::sample::select(vec![Split::Train, Split::Test]),
    ) {
        let samples: Vec<Sample> = labels.iter().enumerate().map(|(i, l)| sentiment_sample(i, l)).collect();
        let pool = PromptPool::new(TaskKind::Sa, vec!["Classify.".into(), "What is the sentiment?".into()]).unwrap();
        let space: LabelSpace = BTreeMap::from([(
            "FPB".to_string(),
            vec!["negative".to_string(), "neutral".to_string(), "positive".to_string()],
        )]);
        let records = build_records(&samples, &pool, mode, split, seed, &space).unwrap();
        for r in &records {
            let parts = parse_rendered(&render(r, true)).expect("parses");
            prop_assert_eq!(&parts.instruction, &r.instruction);
            prop_assert_eq!(&parts.options, &r.options);
            prop_assert_eq!(&parts.input, &r.input);
            prop_assert_eq!(parts.answer.as_deref(), Some(r.answer.as_str()));
            if let Some(opts) = &r.options {
                let mut sorted = opts.clone();
                sorted.sort();
                prop_assert_eq!(sorted, space["FPB"].clone());
                if split == Split::Test {
                    prop_assert_eq!(opts, &space["FPB"]);
                }
            }
        }
        // Per-record seeding: a sub-sequence of samples yields the same records.
        let sub = build_records(&samples[samples.len() / 2..], &pool, mode, split, seed, &space).unwrap();
        prop_assert_eq!(&sub[..], &records[samples.len() / 2..]);
    }

    #[test]
    fn ranks_invariant_under_monotone_transform(
        scores in prop::collection::vec(0u32..1000, 2..8),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let base: BTreeMap<String, f64> =
            scores.iter().enumerate().map(|(i, s)| (format!("m{i}"), f64::from(*s) / 1000.0)).collect();
        let cubed: BTreeMap<String, f64> = base.iter().map(|(k, v)| (k.clone(), v.powi(3) * scale + shift)).collect();
        prop_assert_eq!(rank_models(&base), rank_models(&cubed));
        let ranks = rank_models(&base);
        for (m, r) in &ranks {
            let better = base.values().filter(|v| **v > base[m]).count();
            prop_assert_eq!(*r, better + 1);
        }
    }

    #[test]
    fn gain_is_antisymmetric(a in 0u32..1000, b in 0u32..1000) {
        let (a, b) = (f64::from(a) / 1000.0, f64::from(b) / 1000.0);
        let up = performance_gain(a, b);
        let down = performance_gain(b, a);
        prop_assert!((up.points + down.points).abs() < 1e-9);
        let flipped = match up.arrow {
            Arrow::Up => Arrow::Down,
            Arrow::Down => Arrow::Up,
            Arrow::Flat => Arrow::Flat,
        };
        prop_assert_eq!(down.arrow, flipped);
    }

    #[test]
    fn checkpoint_choice_ignores_order(
        losses in prop::collection::vec(0u32..20, 1..12),
        perm_seed in any::<u64>(),
    ) {
        let records: Vec<CheckpointRecord> = losses
            .iter()
            .enumerate()
            .map(|(i, l)| CheckpointRecord { step: 100 * (i as u64 + 1), eval_loss: f64::from(*l) / 10.0, path: format!("c{i}") })
            .collect();
        let mut shuffled = records.clone();
        let mut rng = finbench_core::seed::rng_for(perm_seed, &["perm"]);
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut rng);
        let a = select_checkpoint(&records).unwrap();
        let b = select_checkpoint(&shuffled).unwrap();
        prop_assert_eq!(a, b);
        let min = records.iter().map(|r| r.eval_loss).fold(f64::INFINITY, f64::min);
        let first = records.iter().find(|r| r.eval_loss == min).unwrap();
        prop_assert_eq!(a.step, first.step);
    }

    #[test]
    fn cost_is_linear(h in 0u32..10_000, r_cents in 0u32..10_000, k in 1u32..20) {
        let hours = f64::from(h) / 10.0;
        let rate = f64::from(r_cents) / 100.0;
        let base = estimate_cost(hours, rate).unwrap().cents;
        let scaled_h = estimate_cost(hours * f64::from(k), rate).unwrap().cents;
        let scaled_r = estimate_cost(hours, rate * f64::from(k)).unwrap().cents;
        // Each side rounds to the cent once, so scaling can move the result by at most k/2 cents.
        let bound = i64::from(k) / 2 + 1;
        prop_assert!((scaled_h - base * i64::from(k)).abs() <= bound);
        prop_assert!((scaled_r - base * i64::from(k)).abs() <= bound);
        let sum = estimate_cost(hours + hours, rate).unwrap().cents;
        prop_assert!((sum - 2 * base).abs() <= 1);
    }

    #[test]
    fn report_csv_round_trips(
        cells in prop::collection::vec(
            (
                prop::sample::select(Phase::ALL.to_vec()),
                prop::sample::select(TaskKind::PRIMARY.to_vec()),
                prop::sample::select(vec!["FPB", "FiQA-SA", "Headline", "NER", "FinRED"]),
                prop::sample::select(vec!["Llama2-7B", "Falcon-7B", "Qwen-7B", "my,model"]),
                0u32..=1000,
            ),
            1..30,
        ),
    ) {
        let mut grid = ResultGrid::new();
        for (phase, task, ds, model, v) in &cells {
            grid.insert(*phase, *task, ds, model, f64::from(*v) / 1000.0);
        }
        let rendered = render_tables(&grid);
        let back = grid_from_csv(&rendered.csv).unwrap();
        prop_assert_eq!(render_tables(&back), rendered);
    }

    #[test]
    fn option_permutation_is_a_permutation(seed in any::<u64>(), picks in subsequence(vec!["a", "b", "c", "d", "e"], 2..=5)) {
        let vocab: Vec<String> = picks.iter().map(|s| s.to_string()).collect();
        let space: LabelSpace = BTreeMap::from([("FPB".to_string(), vocab.clone())]);
        let samples: Vec<Sample> = (0..8).map(|i| sentiment_sample(i, &vocab[i % vocab.len()])).collect();
        let pool = PromptPool::new(TaskKind::Sa, vec!["p".into()]).unwrap();
        for r in build_records(&samples, &pool, Mode::ZeroShot, Split::Train, seed, &space).unwrap() {
            let opts = r.options.unwrap();
            let a: BTreeSet<&String> = opts.iter().collect();
            prop_assert_eq!(a.len(), vocab.len());
            prop_assert!(vocab.iter().all(|v| a.contains(v)));
            prop_assert!(opts.iter().any(|o| normalize_label(o) == normalize_label(&r.answer)));
        }
    }
}
