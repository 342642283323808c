mod common;

use kapg::strength::build_rank;
use kapg::{Alphabet, FusedModel, FusionPolicy, GuessConfig, KnowledgeStore, MarkovModel, MonteCarloRank};

#[test]
fn artifacts_roundtrip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = Alphabet::printable();
    let train = kapg::corpus::synthesize_corpus(&common::spec_a(), 1_000, 8).unwrap();
    let model = MarkovModel::train(&a, &train).unwrap();
    let store = KnowledgeStore::build(&a, &[("orange".into(), 1.5), ("kiwi".into(), 1.0)], 7).unwrap();
    let rank = build_rank(FusedModel::new(&model, &store, FusionPolicy::default()), GuessConfig::default(), 500, 3).unwrap();

    let (m, k, r) = (dir.path().join("m"), dir.path().join("k"), dir.path().join("r"));
    model.save(&m).unwrap();
    store.save(&k).unwrap();
    rank.save(&r).unwrap();
    let model2 = MarkovModel::load(&m).unwrap();
    let store2 = KnowledgeStore::load(&k).unwrap();
    assert_eq!(model2, model);
    assert_eq!(MonteCarloRank::load(&r).unwrap(), rank);
    assert_eq!(store2.k(), 7);
    assert_eq!(store2.entries(), store.entries());

    let s1 = FusedModel::new(&model, &store, FusionPolicy::default());
    let s2 = FusedModel::new(&model2, &store2, FusionPolicy::default());
    for p in train.iter().take(50) {
        assert_eq!(s1.password_probability(p.as_str()).unwrap().total, s2.password_probability(p.as_str()).unwrap().total);
    }
}

#[test]
fn wrong_or_corrupt_files_are_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let a = Alphabet::printable();
    let model = MarkovModel::train(&a, &["password", "letmein1"]).unwrap();
    let m = dir.path().join("m");
    model.save(&m).unwrap();
    assert_eq!(KnowledgeStore::load(&m).unwrap_err().kind(), "format");
    let bytes = std::fs::read(&m).unwrap();
    std::fs::write(&m, &bytes[..bytes.len() / 2]).unwrap();
    assert_eq!(MarkovModel::load(&m).unwrap_err().kind(), "format");
    assert_eq!(MarkovModel::load(&dir.path().join("absent")).unwrap_err().kind(), "io");
}
