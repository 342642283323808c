//! Build a Monte Carlo rank table and meter a few passwords.
//!
//! cargo run --example strength_meter

use kapg::corpus::{synthesize_corpus, SynthSpec};
use kapg::strength::{build_rank, evaluate_password};
use kapg::{Alphabet, FusedModel, FusionPolicy, GuessConfig, KnowledgeStore, MarkovModel};

fn main() -> kapg::Result<()> {
    let alphabet = Alphabet::printable();
    let spec = SynthSpec::parse("word+2digits = 0.6\nword = 0.2\nkeyboard = 0.2\n")?;
    let model = MarkovModel::train(&alphabet, &synthesize_corpus(&spec, 20_000, 3)?)?;
    let store = KnowledgeStore::build(&alphabet, &[("starwars".to_string(), 1.0), ("pikachu".to_string(), 1.0)], 10)?;
    let scorer = FusedModel::new(&model, &store, FusionPolicy::default());
    let rank = build_rank(scorer, GuessConfig::default(), 20_000, 9)?;

    for pwd in ["monkey12", "qwerty", "starwars", "pikachu", "asdfgh99", "Tr0ub4dor&3"] {
        let r = evaluate_password(&scorer, &rank, pwd)?;
        let bar: String = r
            .color_scalars
            .iter()
            .map(|c| match (c * 4.0) as u8 {
                0 => '.',
                1 => ':',
                2 => '+',
                3 => '*',
                _ => '#',
            })
            .collect();
        println!("{pwd:<14} {bar:<14} guesses={:<10.3e} {}", r.guess_number, r.bucket);
    }
    Ok(())
}
