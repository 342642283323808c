#![allow(dead_code)]

use kapg::corpus::{synthesize_corpus, Pattern, SynthSpec};
use kapg::{Alphabet, KnowledgeStore, MarkovModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const A_WORDS: [&str; 10] = [
    "love", "monkey", "dragon", "sunshine", "princess", "shadow", "master", "football", "baseball", "soccer",
];
pub const B_WORDS: [&str; 10] = [
    "purple", "orange", "silver", "golden", "cheese", "banana", "chicken", "maggie", "snoopy", "matrix",
];

pub fn strings<P: AsRef<str>>(ps: &[P]) -> Vec<String> {
    ps.iter().map(|p| p.as_ref().to_string()).collect()
}

pub fn spec_a() -> SynthSpec {
    SynthSpec::new(vec![(Pattern::WordDigits { digits: 2 }, 0.7), (Pattern::KeyboardWalk, 0.3)]).with_words(A_WORDS)
}

pub fn spec_b() -> SynthSpec {
    SynthSpec::new(vec![(Pattern::WordDigits { digits: 2 }, 1.0)]).with_words(B_WORDS)
}

/// Train on pattern A, test on A ∪ B, knowledge seeded with the B words.
pub struct Drift {
    pub alphabet: Alphabet,
    pub model: MarkovModel,
    pub store: KnowledgeStore,
    pub test: Vec<String>,
    pub test_b: Vec<String>,
    /// Held-out B passwords for knowledge injection.
    pub pool_b: Vec<String>,
}

pub fn drift() -> Drift {
    let alphabet = Alphabet::printable();
    let train = synthesize_corpus(&spec_a(), 20_000, 1).unwrap();
    let test_a = strings(&synthesize_corpus(&spec_a(), 1_000, 2).unwrap());
    let test_b = strings(&synthesize_corpus(&spec_b(), 1_000, 3).unwrap());
    let pool_b = strings(&synthesize_corpus(&spec_b(), 2_000, 4).unwrap());
    let model = MarkovModel::train(&alphabet, &train).unwrap();
    let terms: Vec<(String, f64)> = B_WORDS.iter().map(|w| (w.to_string(), 1.0)).collect();
    let store = KnowledgeStore::build(&alphabet, &terms, 10).unwrap();
    let mut test = test_a;
    test.extend(test_b.iter().cloned());
    Drift {
        alphabet,
        model,
        store,
        test,
        test_b,
        pool_b,
    }
}

/// `count` random strings over `chars` with lengths in `lens`.
pub fn random_corpus(rng: &mut ChaCha8Rng, chars: &[char], count: usize, lens: std::ops::RangeInclusive<usize>) -> Vec<String> {
    (0..count)
        .map(|_| {
            let len = rng.random_range(lens.clone());
            (0..len).map(|_| chars[rng.random_range(0..chars.len())]).collect()
        })
        .collect()
}

/// Every string over `chars` with length in `lens`.
pub fn enumerate(chars: &[char], lens: std::ops::RangeInclusive<usize>) -> Vec<String> {
    let mut out = Vec::new();
    let mut layer = vec![String::new()];
    for len in 1..=*lens.end() {
        layer = layer
            .iter()
            .flat_map(|s| chars.iter().map(move |c| format!("{s}{c}")))
            .collect();
        if len >= *lens.start() {
            out.extend(layer.iter().cloned());
        }
    }
    out
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
