//! Score one password step by step under three fusion policies and show
//! how the gate opens when the knowledge store recognises the context.
//!
//! cargo run --example fusion_walkthrough

use kapg::corpus::{synthesize_corpus, SynthSpec};
use kapg::{Alphabet, FusedModel, FusionPolicy, KnowledgeStore, MarkovModel};

fn main() -> kapg::Result<()> {
    let alphabet = Alphabet::printable();
    let spec = SynthSpec::parse("word+2digits = 0.7\nkeyboard = 0.3\n")?;
    let train = synthesize_corpus(&spec, 10_000, 1)?;
    let model = MarkovModel::train(&alphabet, &train)?;
    let store = KnowledgeStore::build(&alphabet, &[("zeppelin".to_string(), 1.0)], 10)?;

    let pwd = "zeppelin";
    for (name, policy) in [
        ("markov only", FusionPolicy::internal_only()),
        ("fixed 0.5", FusionPolicy::fixed(0.5)),
        ("adaptive", FusionPolicy::default()),
    ] {
        let trace = FusedModel::new(&model, &store, policy).password_probability(pwd)?;
        println!("{name}: P = {:.3e}", trace.total);
        for (c, step) in pwd.chars().map(|c| c.to_string()).chain(["<end>".into()]).zip(&trace.steps) {
            println!("  {c:<6} p={:.4} lambda={:.3} order={}", step.prob, step.lambda, step.order);
        }
    }
    Ok(())
}
