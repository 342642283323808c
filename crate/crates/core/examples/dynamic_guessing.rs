//! Guess against a test set that drifts away from the training data, with
//! and without feeding cracked passwords back into the knowledge store.
//!
//! cargo run --release --example dynamic_guessing

use kapg::corpus::{synthesize_corpus, SynthSpec};
use kapg::dpg::{run_dpg, DpgRun, UpdatePolicy};
use kapg::{Alphabet, FusionPolicy, GuessConfig, KnowledgeStore, MarkovModel};

const OLD: [&str; 10] = ["love", "monkey", "dragon", "sunshine", "princess", "shadow", "master", "football", "baseball", "soccer"];
const NEW: [&str; 10] = ["purple", "orange", "silver", "golden", "cheese", "banana", "chicken", "maggie", "snoopy", "matrix"];

fn main() -> kapg::Result<()> {
    let alphabet = Alphabet::printable();
    let old = SynthSpec::parse("word+2digits = 0.7\nkeyboard = 0.3\n")?.with_words(OLD);
    let new = SynthSpec::parse("word+2digits = 1\n")?.with_words(NEW);
    let model = MarkovModel::train(&alphabet, &synthesize_corpus(&old, 20_000, 1)?)?;
    let vocab: Vec<(String, f64)> = NEW.iter().map(|w| (w.to_string(), 1.0)).collect();
    let store = KnowledgeStore::build(&alphabet, &vocab, 10)?;
    let test: Vec<String> = synthesize_corpus(&old, 1_000, 2)?
        .into_iter()
        .chain(synthesize_corpus(&new, 1_000, 3)?)
        .map(|p| p.into_string())
        .collect();

    let runs = [
        ("static", None),
        ("dynamic", Some(UpdatePolicy { alpha: 1.0, beta: 0.8 })),
        ("dynamic", Some(UpdatePolicy { alpha: 1e-6, beta: 0.8 })),
    ];
    for (name, update) in runs {
        let run = DpgRun {
            policy: FusionPolicy::default(),
            guess: GuessConfig::default(),
            update,
            max_guesses: 100_000,
            seed: 5,
        };
        let report = run_dpg(&model, &store, &test, &run)?;
        let tiers: Vec<String> = report.tiers.iter().map(|t| format!("{}:{}", t.budget, t.cracked)).collect();
        let alpha = update.map_or("-".into(), |u| format!("{:e}", u.alpha));
        println!("{name:<8} alpha={alpha:<6} updates={} {}", report.updates, tiers.join(" "));
    }
    Ok(())
}
