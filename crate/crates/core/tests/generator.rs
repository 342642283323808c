mod common;

use kapg::guesser::{generate_parallel, generate_stream, Guesser};
use kapg::{Alphabet, FusedModel, FusionPolicy, GuessConfig, KnowledgeStore, MarkovModel};
use proptest::prelude::*;

const CHARS: [char; 3] = ['a', 'b', 'c'];

fn small() -> (MarkovModel, KnowledgeStore) {
    let a = Alphabet::new("abc").unwrap();
    let corpus = common::random_corpus(&mut common::rng(5), &CHARS, 200, 1..=6);
    let model = MarkovModel::train(&a, &corpus).unwrap();
    let store = KnowledgeStore::build(&a, &[("abca".into(), 2.0), ("cc".into(), 1.0)], 3).unwrap();
    (model, store)
}

#[test]
fn sampler_probability_sums_to_one_over_all_strings() {
    let (model, store) = small();
    for policy in [FusionPolicy::default(), FusionPolicy::fixed(0.7), FusionPolicy::internal_only()] {
        for (lo, hi) in [(1, 3), (2, 4), (4, 4)] {
            let mut g = Guesser::new(FusedModel::new(&model, &store, policy), GuessConfig::with_lengths(lo, hi));
            let total: f64 = common::enumerate(&CHARS, lo..=hi)
                .iter()
                .map(|s| g.sample_probability(s).unwrap())
                .sum();
            assert!((total - 1.0).abs() < 1e-9, "{policy:?} {lo}..={hi}: {total}");
            assert_eq!(g.sample_probability("ab").unwrap() == 0.0, lo > 2);
        }
    }
}

#[test]
fn model_probability_is_bounded_by_one() {
    let (model, store) = small();
    let scorer = FusedModel::new(&model, &store, FusionPolicy::default());
    let total: f64 = common::enumerate(&CHARS, 1..=7)
        .iter()
        .map(|s| scorer.password_probability(s).unwrap().total)
        .sum();
    assert!(total <= 1.0 + 1e-9 && total > 0.5, "{total}");
}

#[test]
fn seeds_and_parallel_blocks_are_deterministic() {
    let (model, store) = small();
    let scorer = FusedModel::new(&model, &store, FusionPolicy::default());
    let cfg = GuessConfig::with_lengths(3, 8);
    let one = generate_stream(scorer, cfg, 300, 1).guesses;
    assert_eq!(one, generate_stream(scorer, cfg, 300, 1).guesses);
    assert_ne!(one, generate_stream(scorer, cfg, 300, 2).guesses);

    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = serial.install(|| generate_parallel(scorer, cfg, 301, 9, 25).guesses);
    let b = wide.install(|| generate_parallel(scorer, cfg, 301, 9, 25).guesses);
    assert_eq!(a.len(), 301);
    assert_eq!(a, b);
}

#[test]
fn sessions_slide_the_window() {
    let (model, store) = small();
    let mut g = Guesser::new(FusedModel::new(&model, &store, FusionPolicy::default()), GuessConfig::with_lengths(1, 6));
    let mut session = g.session(3);
    let a = model.alphabet().clone();
    for _ in 0..50 {
        let guess = g.next_guess(&mut session);
        let mut tail = vec![a.start(); 4];
        tail.extend(a.encode_str(&guess).unwrap());
        assert_eq!(session.window().symbols().as_slice(), &tail[tail.len() - 4..], "{guess}");
        assert_eq!(a.decode_symbols(session.emitted()).unwrap(), guess);
    }
    let a = &a;
    let mut w = kapg::Window::start(a);
    for c in "abcab".chars() {
        w.push(a.encode(c).unwrap());
    }
    let want: Vec<_> = "bcab".chars().map(|c| a.encode(c).unwrap()).collect();
    assert_eq!(w.symbols().as_slice(), want.as_slice());
    let s = a.start();
    assert_eq!(kapg::Window::start(a).pushed(0).symbols(), &[s, s, s, 0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn guesses_respect_length_bounds(min in 1usize..6, extra in 0usize..5, seed in any::<u64>()) {
        let (model, store) = small();
        let cfg = GuessConfig::with_lengths(min, min + extra);
        let scorer = FusedModel::new(&model, &store, FusionPolicy::default());
        let mut g = Guesser::new(scorer, cfg);
        let mut session = g.session(seed);
        for _ in 0..100 {
            let s = g.next_scored(&mut session);
            prop_assert!((min..=min + extra).contains(&s.password.len()), "{}", s.password.len());
            prop_assert!(s.sample_prob > 0.0 && s.sample_prob <= 1.0);
            let p = scorer.password_probability(&s.password).unwrap().total;
            prop_assert!((p - s.prob).abs() <= 1e-12 * p.max(1e-300));
        }
    }
}
