//! Synthesize a corpus, clean and split it, train the Markov model and
//! sample guesses from it.
//!
//! cargo run --example train_and_generate

use kapg::corpus::{clean_corpus, split, synthesize_corpus, SynthSpec};
use kapg::guesser::{generate_parallel, Guesser};
use kapg::{Alphabet, FusedModel, FusionPolicy, GuessConfig, KnowledgeStore, MarkovModel};

fn main() -> kapg::Result<()> {
    let spec = SynthSpec::parse("word+2digits = 0.5\nword = 0.2\nkeyboard = 0.2\nrandom = 0.1\n")?;
    let raw: Vec<String> = synthesize_corpus(&spec, 20_000, 7)?
        .into_iter()
        .map(|p| p.into_string())
        .chain(["abc".to_string(), "caf\u{e9}123".to_string()])
        .collect();

    let cleaned = clean_corpus(raw.iter());
    println!("kept {} rejected {}", cleaned.kept.len(), cleaned.rejected());
    let parts = split(&cleaned.kept, 15_000, 2_000, 1)?;

    let alphabet = Alphabet::printable();
    let model = MarkovModel::train(&alphabet, &parts.train)?;
    for order in 1..=4 {
        println!("order {order}: {} contexts", model.table(order).len());
    }

    let store = KnowledgeStore::empty(&alphabet, 10);
    let scorer = FusedModel::new(&model, &store, FusionPolicy::internal_only());
    let mut guesser = Guesser::new(scorer, GuessConfig::default());
    let mut session = guesser.session(42);
    for _ in 0..10 {
        let g = guesser.next_scored(&mut session);
        println!("{:<20} p={:.3e}", g.password, g.prob);
    }

    let batch = generate_parallel(scorer, GuessConfig::default(), 100_000, 42, 10_000);
    let test: std::collections::HashSet<&str> = parts.test.iter().map(|p| p.as_str()).collect();
    let hits = batch.guesses.iter().filter(|g| test.contains(g.as_str())).count();
    println!(
        "{} guesses at {:.0}/s, {} hit the held-out set",
        batch.guesses.len(),
        batch.stats.per_second(),
        hits
    );
    Ok(())
}
