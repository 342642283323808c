//! Cracking curve, set overlap, term prevalence and meter accuracy on
//! synthetic data.
//!
//! cargo run --release --example evaluation

use kapg::corpus::{synthesize_corpus, SynthSpec};
use kapg::eval::{cracking_curve, estimate_guess_numbers, overlap, prevalence, weighted_spearman};
use kapg::guesser::generate_stream;
use kapg::strength::build_rank;
use kapg::{Alphabet, FusedModel, FusionPolicy, GuessConfig, KnowledgeStore, MarkovModel};

fn main() -> kapg::Result<()> {
    let alphabet = Alphabet::printable();
    let spec = SynthSpec::parse("word+2digits = 0.6\nword = 0.2\nkeyboard = 0.2\n")?;
    let corpus: Vec<String> = synthesize_corpus(&spec, 24_000, 4)?.into_iter().map(|p| p.into_string()).collect();
    let (train, test) = corpus.split_at(20_000);
    let model = MarkovModel::train(&alphabet, train)?;
    let terms = ["monkey", "dragon", "qwerty", "purple"];
    let store = KnowledgeStore::build(&alphabet, &terms.map(|t| (t.to_string(), 1.0)), 10)?;
    let scorer = FusedModel::new(&model, &store, FusionPolicy::default());

    let rank = build_rank(scorer, GuessConfig::default(), 10_000, 1)?;
    let guess_numbers = estimate_guess_numbers(&scorer, &rank, test);
    let budgets: Vec<f64> = (0..=12).step_by(2).map(|e| 10f64.powi(e)).collect();
    print!("{}", cracking_curve(&guess_numbers, &budgets)?.to_csv());

    let markov_only = FusedModel::new(&model, &store, FusionPolicy::internal_only());
    let a = generate_stream(markov_only, GuessConfig::default(), 20_000, 2).guesses;
    let b = generate_stream(scorer, GuessConfig::default(), 20_000, 2).guesses;
    let report = overlap(&[("markov".into(), a), ("fused".into(), b), ("test".into(), test.to_vec())])?;
    print!("{}", report.to_csv());

    print!("{}", prevalence(&terms, test, 3)?.to_csv());

    let mut freq = std::collections::HashMap::<&str, f64>::new();
    for p in test {
        *freq.entry(p.as_str()).or_default() += 1.0;
    }
    let uniq: Vec<&str> = freq.keys().copied().collect();
    let est = estimate_guess_numbers(&scorer, &rank, &uniq);
    let f: Vec<f64> = uniq.iter().map(|p| freq[p]).collect();
    let neg: Vec<f64> = f.iter().map(|x| -x).collect();
    println!("weighted_spearman,{:.4}", weighted_spearman(&est, &neg, &f)?);
    Ok(())
}
