mod common;

use kapg::dpg::{apply_ema, batch_distribution, increment, run_dpg, schedule_tier, update_store, CrackEvent, DpgRun, UpdatePolicy};
use kapg::{Alphabet, FusionPolicy, GuessConfig, KnowledgeStore, MarkovModel};
use proptest::prelude::*;

fn setup() -> (MarkovModel, KnowledgeStore, Vec<String>) {
    let a = Alphabet::printable();
    let train = kapg::corpus::synthesize_corpus(&common::spec_a(), 3_000, 2).unwrap();
    let model = MarkovModel::train(&a, &train).unwrap();
    let store = KnowledgeStore::build(&a, &[("purple".into(), 1.0), ("orange".into(), 1.0)], 10).unwrap();
    let test = common::strings(&kapg::corpus::synthesize_corpus(&common::spec_b(), 300, 3).unwrap());
    (model, store, test)
}

fn run(update: Option<UpdatePolicy>) -> DpgRun {
    DpgRun {
        policy: FusionPolicy::default(),
        guess: GuessConfig::default(),
        update,
        max_guesses: 3_000,
        seed: 11,
    }
}

#[test]
fn inert_update_matches_baseline() {
    let (model, store, test) = setup();
    let base = run_dpg(&model, &store, &test, &run(None)).unwrap();
    let inert = run_dpg(&model, &store, &test, &run(Some(UpdatePolicy { alpha: 1.0, beta: 1.0 }))).unwrap();
    assert_eq!(base.tiers, inert.tiers);
    assert_eq!(base.updates, 0);
    assert_eq!(
        base.tiers.iter().map(|t| t.budget).collect::<Vec<_>>(),
        vec![10, 100, 1_000, 3_000]
    );
}

#[test]
fn schedule_and_weights() {
    assert_eq!(schedule_tier(1).unwrap(), 1);
    assert_eq!(schedule_tier(9).unwrap(), 1);
    assert_eq!(schedule_tier(10).unwrap(), 2);
    assert_eq!(schedule_tier(99_999).unwrap(), 5);
    assert!(schedule_tier(0).is_err());
    assert_eq!(increment(0), 1.0);
    assert_eq!(increment(1), 0.5);
    assert!((1..1000).all(|g| increment(g) > increment(g + 1)));
}

#[test]
fn earlier_cracks_weigh_more() {
    let a = Alphabet::printable();
    let policy = UpdatePolicy { alpha: 1e-9, beta: 0.0 };
    let ev = |p: &str, g| CrackEvent { password: p.into(), guesses: g };
    let rows = batch_distribution(&[ev("ab", 1), ev("ac", 100)], &a, 4, &policy).unwrap().unwrap();
    let key = vec![a.encode('a').unwrap()];
    let row = &rows[&key];
    let (b, c) = (row[a.encode('b').unwrap() as usize], row[a.encode('c').unwrap() as usize]);
    assert!((b / c - 101.0 / 2.0).abs() < 1e-3, "{b} {c}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn updated_rows_are_distributions(
        words in prop::collection::vec("[a-e]{1,7}", 1..12),
        guesses in prop::collection::vec(0u64..1_000_000, 12),
        alpha in 1e-6f64..4.0,
        beta in 0.0f64..1.0,
    ) {
        let a = Alphabet::printable();
        let store = KnowledgeStore::build(&a, &[("abc".into(), 1.0), ("dd".into(), 2.0)], 5).unwrap();
        let batch: Vec<CrackEvent> = words.iter().zip(&guesses).map(|(w, &g)| CrackEvent { password: w.clone(), guesses: g }).collect();
        let policy = UpdatePolicy { alpha, beta };
        let updated = update_store(&store, &batch, &policy).unwrap().unwrap();
        prop_assert!(updated.len() >= store.len());
        for e in updated.entries() {
            prop_assert_eq!(e.next_dist.len(), a.row_width());
            prop_assert!(e.next_dist.iter().all(|p| *p >= 0.0 && p.is_finite()));
            prop_assert!((e.next_dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        for e in store.entries() {
            prop_assert_eq!(&updated.entry(e.id).unwrap().key, &e.key);
        }
        let rows = batch_distribution(&batch, &a, store.max_len(), &policy).unwrap().unwrap();
        let same = apply_ema(&store, &rows, 1.0);
        prop_assert_eq!(same.len(), store.len());
        for (x, y) in same.entries().iter().zip(store.entries()) {
            prop_assert_eq!(&x.next_dist, &y.next_dist);
        }
    }
}
