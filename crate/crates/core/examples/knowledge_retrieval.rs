//! Build a knowledge store from weighted terms and inspect what a window
//! retrieves.
//!
//! cargo run --example knowledge_retrieval

use kapg::{Alphabet, KnowledgeStore};

fn main() -> kapg::Result<()> {
    let alphabet = Alphabet::printable();
    let terms: Vec<(String, f64)> = [("dragon", 3.0), ("dragonfly", 1.0), ("drake", 1.0), ("wagon", 2.0)]
        .iter()
        .map(|(t, w)| (t.to_string(), *w))
        .collect();
    let store = KnowledgeStore::build(&alphabet, &terms, 5)?;
    println!("{} entries, k = {}", store.len(), store.k());

    for query in ["drag", "rago", "xyzq", "on"] {
        let symbols = alphabet.encode_str(query)?;
        let result = store.retrieve(&symbols)?;
        println!("query {query:?}: similarity sum {:.3}", result.similarity_sum());
        for hit in &result.items {
            let entry = store.entry(hit.id).expect("retrieved ids exist");
            println!(
                "  {:>4} {:<6} d={:.0} sim={:.3}",
                hit.id,
                alphabet.decode_symbols(&entry.key)?,
                hit.distance,
                hit.similarity
            );
        }
        if let Some(ext) = store.external_distribution(&result) {
            let mut top: Vec<(usize, f64)> = ext.row.iter().copied().enumerate().filter(|(_, p)| *p > 0.0).collect();
            top.sort_by(|a, b| b.1.total_cmp(&a.1));
            let shown: Vec<String> = top
                .iter()
                .take(4)
                .map(|(s, p)| format!("{}={p:.2}", alphabet.display_symbol(*s as u8)))
                .collect();
            println!("  next: {}", shown.join(" "));
        }
    }
    Ok(())
}
