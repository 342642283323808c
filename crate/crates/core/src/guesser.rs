//! Candidate generation by iterative sampling from fused distributions.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`; sequential sessions use stream 0 and block `b` of
//! a parallel run uses stream `b + 1`. Each step draws one `f64` in `[0, 1)`
//! and inverts the cumulative row in symbol-index order, so a given seed
//! produces the same guesses on every platform.
//!
//! Before `min_len` characters the end symbol is masked out and the row
//! renormalized; a row whose only mass is on the end symbol falls back to
//! uniform over password characters. At `max_len` characters generation
//! stops without sampling.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::{Symbol, Window};
use crate::corpus::LengthBounds;
use crate::error::{Error, Result};
use crate::fusion::FusedModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuessConfig {
    pub min_len: usize,
    pub max_len: usize,
    /// Fused rows kept per guesser before the cache is flushed.
    pub cache_capacity: usize,
}

impl Default for GuessConfig {
    fn default() -> Self {
        let b = LengthBounds::default();
        Self {
            min_len: b.min,
            max_len: b.max,
            cache_capacity: 1 << 15,
        }
    }
}

impl GuessConfig {
    pub fn with_lengths(min_len: usize, max_len: usize) -> Self {
        Self {
            min_len,
            max_len,
            ..Self::default()
        }
    }

    pub fn bounds(&self) -> LengthBounds {
        LengthBounds {
            min: self.min_len,
            max: self.max_len,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config(format!(
                "invalid length bounds {}..={}",
                self.min_len, self.max_len
            )));
        }
        Ok(())
    }
}

/// Generation state for one guess at a time.
#[derive(Clone, Debug)]
pub struct GuessSession {
    window: Window,
    emitted: Vec<Symbol>,
    rng: ChaCha8Rng,
    seed: u64,
}

impl GuessSession {
    pub fn new(scorer: &FusedModel<'_>, seed: u64) -> Self {
        Self::with_stream(scorer, seed, 0)
    }

    pub fn with_stream(scorer: &FusedModel<'_>, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            window: Window::start(scorer.model().alphabet()),
            emitted: Vec::new(),
            rng,
            seed,
        }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn emitted(&self) -> &[Symbol] {
        &self.emitted
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn reset(&mut self, start: Window) {
        self.window = start;
        self.emitted.clear();
    }
}

struct CachedRow {
    row: Box<[f64]>,
    cdf: Box<[f64]>,
}

/// A guess with its model probability (end step included) and the
/// probability that the sampler produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredGuess {
    pub password: String,
    pub prob: f64,
    pub sample_prob: f64,
}

/// Samples guesses from a [`FusedModel`], caching fused rows per window.
pub struct Guesser<'a> {
    scorer: FusedModel<'a>,
    config: GuessConfig,
    cache: HashMap<u32, CachedRow>,
}

impl<'a> Guesser<'a> {
    /// # Panics
    ///
    /// On invalid length bounds.
    pub fn new(scorer: FusedModel<'a>, config: GuessConfig) -> Self {
        config.validate().expect("invalid guess config");
        Self {
            scorer,
            config,
            cache: HashMap::new(),
        }
    }

    pub fn scorer(&self) -> &FusedModel<'a> {
        &self.scorer
    }

    pub fn config(&self) -> &GuessConfig {
        &self.config
    }

    pub fn session(&self, seed: u64) -> GuessSession {
        GuessSession::new(&self.scorer, seed)
    }

    fn cached(&mut self, window: &Window) -> &CachedRow {
        if self.cache.len() >= self.config.cache_capacity && !self.cache.contains_key(&window.key()) {
            self.cache.clear();
        }
        let scorer = &self.scorer;
        self.cache.entry(window.key()).or_insert_with(|| {
            let mut row = vec![0.0; scorer.row_width()];
            scorer.step_into(window, &mut row);
            let mut acc = 0.0;
            let cdf = row
                .iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect();
            CachedRow {
                row: row.into_boxed_slice(),
                cdf,
            }
        })
    }

    pub fn next_guess(&mut self, session: &mut GuessSession) -> String {
        self.next_scored(session).password
    }

    pub fn next_scored(&mut self, session: &mut GuessSession) -> ScoredGuess {
        let alphabet = self.scorer.model().alphabet();
        let n = alphabet.len();
        let end = alphabet.end() as usize;
        let (min_len, max_len) = (self.config.min_len, self.config.max_len);
        session.reset(Window::start(alphabet));
        let mut prob = 1.0;
        let mut sample_prob = 1.0;
        loop {
            let window = session.window;
            if session.emitted.len() == max_len {
                prob *= self.cached(&window).row[end];
                break;
            }
            let u: f64 = session.rng.random();
            let short = session.emitted.len() < min_len;
            let cached = self.cached(&window);
            let symbol = if short {
                let mass = cached.cdf[n - 1];
                if mass > 0.0 {
                    let s = invert(&cached.cdf[..n], &cached.row[..n], u * mass);
                    sample_prob *= cached.row[s] / mass;
                    s
                } else {
                    sample_prob /= n as f64;
                    ((u * n as f64) as usize).min(n - 1)
                }
            } else {
                let s = invert(&cached.cdf, &cached.row, u * cached.cdf[end]);
                sample_prob *= cached.row[s];
                s
            };
            prob *= cached.row[symbol];
            if symbol == end {
                break;
            }
            session.emitted.push(symbol as Symbol);
            session.window.push(symbol as Symbol);
        }
        let password = alphabet
            .decode_symbols(&session.emitted)
            .expect("sampled symbols are password characters");
        ScoredGuess {
            password,
            prob,
            sample_prob,
        }
    }

    /// Probability that the sampler emits exactly `pwd`, accounting for the
    /// minimum-length renormalization and the maximum-length stop. Zero for
    /// lengths outside the bounds.
    pub fn sample_probability(&mut self, pwd: &str) -> Result<f64> {
        let alphabet = self.scorer.model().alphabet().clone();
        let symbols = alphabet.encode_str(pwd)?;
        if !self.config.bounds().contains(symbols.len()) {
            return Ok(0.0);
        }
        let n = alphabet.len();
        let end = alphabet.end() as usize;
        let min_len = self.config.min_len;
        let mut window = Window::start(&alphabet);
        let mut q = 1.0;
        for (i, &s) in symbols.iter().enumerate() {
            let cached = self.cached(&window);
            if i < min_len {
                let mass = cached.cdf[n - 1];
                q *= if mass > 0.0 { cached.row[s as usize] / mass } else { 1.0 / n as f64 };
            } else {
                q *= cached.row[s as usize];
            }
            window.push(s);
        }
        if symbols.len() < self.config.max_len {
            q *= self.cached(&window).row[end];
        }
        Ok(q)
    }

    /// Same value as [`FusedModel::password_probability`], served from the
    /// row cache.
    pub fn probability(&mut self, pwd: &str) -> Result<f64> {
        let alphabet = self.scorer.model().alphabet().clone();
        let symbols = alphabet.encode_str(pwd)?;
        let mut window = Window::start(&alphabet);
        let mut p = 1.0;
        for s in symbols.into_iter().chain(std::iter::once(alphabet.end())) {
            p *= self.cached(&window).row[s as usize];
            window.push(s);
        }
        Ok(p)
    }

    /// Unbounded stream of guesses from a fresh session.
    pub fn stream(&mut self, seed: u64) -> GuessStream<'_, 'a> {
        let session = self.session(seed);
        GuessStream {
            guesser: self,
            session,
            produced: 0,
            started: Instant::now(),
        }
    }
}

/// Inverse CDF lookup: the first index whose cumulative mass exceeds `u`,
/// never landing on a zero-probability symbol.
fn invert(cdf: &[f64], row: &[f64], u: f64) -> usize {
    let i = cdf.partition_point(|&c| c <= u);
    if i < cdf.len() {
        return i;
    }
    row.iter().rposition(|&p| p > 0.0).unwrap_or(cdf.len() - 1)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ThroughputStats {
    pub guesses: u64,
    pub elapsed: Duration,
}

impl ThroughputStats {
    pub fn per_second(&self) -> f64 {
        let secs = self.elapsed.as_secs_f64();
        if secs > 0.0 {
            self.guesses as f64 / secs
        } else {
            f64::INFINITY
        }
    }

    pub fn merge(self, other: ThroughputStats) -> ThroughputStats {
        ThroughputStats {
            guesses: self.guesses + other.guesses,
            elapsed: self.elapsed.max(other.elapsed),
        }
    }
}

pub struct GuessStream<'g, 'a> {
    guesser: &'g mut Guesser<'a>,
    session: GuessSession,
    produced: u64,
    started: Instant,
}

impl GuessStream<'_, '_> {
    pub fn stats(&self) -> ThroughputStats {
        ThroughputStats {
            guesses: self.produced,
            elapsed: self.started.elapsed(),
        }
    }

    pub fn session(&self) -> &GuessSession {
        &self.session
    }
}

impl Iterator for GuessStream<'_, '_> {
    type Item = String;

    fn next(&mut self) -> Option<String> {
        self.produced += 1;
        Some(self.guesser.next_guess(&mut self.session))
    }
}

#[derive(Clone, Debug)]
pub struct GeneratedGuesses {
    pub guesses: Vec<String>,
    pub stats: ThroughputStats,
}

/// Exactly `n` guesses from one sequential session.
pub fn generate_stream(scorer: FusedModel<'_>, config: GuessConfig, n: usize, seed: u64) -> GeneratedGuesses {
    let mut guesser = Guesser::new(scorer, config);
    let mut stream = guesser.stream(seed);
    let guesses: Vec<String> = stream.by_ref().take(n).collect();
    let stats = stream.stats();
    GeneratedGuesses { guesses, stats }
}

/// Exactly `n` guesses from independent sessions of `block` guesses each,
/// run on the rayon pool. Output order is fixed by block index.
pub fn generate_parallel(
    scorer: FusedModel<'_>,
    config: GuessConfig,
    n: usize,
    seed: u64,
    block: usize,
) -> GeneratedGuesses {
    let block = block.max(1);
    let started = Instant::now();
    let blocks = n.div_ceil(block);
    let parts: Vec<Vec<String>> = (0..blocks)
        .into_par_iter()
        .map_init(
            || Guesser::new(scorer, config),
            |g, b| {
                let mut session = GuessSession::with_stream(&scorer, seed, b as u64 + 1);
                let len = block.min(n - b * block);
                (0..len).map(|_| g.next_guess(&mut session)).collect()
            },
        )
        .collect();
    let guesses: Vec<String> = parts.into_iter().flatten().collect();
    GeneratedGuesses {
        stats: ThroughputStats {
            guesses: guesses.len() as u64,
            elapsed: started.elapsed(),
        },
        guesses,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Alphabet;
    use crate::fusion::FusionPolicy;
    use crate::knowledge::KnowledgeStore;
    use crate::markov::MarkovModel;

    #[test]
    fn single_password_chain_is_deterministic() {
        let a = Alphabet::printable();
        let m = MarkovModel::train(&a, &["abcde"]).unwrap();
        let s = KnowledgeStore::empty(&a, 10);
        let f = FusedModel::new(&m, &s, FusionPolicy::default());
        let mut g = Guesser::new(f, GuessConfig::default());
        for seed in 0..20 {
            let mut session = g.session(seed);
            let scored = g.next_scored(&mut session);
            assert_eq!(scored.password, "abcde");
            assert_eq!(scored.prob, 1.0);
            assert_eq!(scored.sample_prob, 1.0);
        }
    }

    #[test]
    fn same_seed_same_guesses() {
        let a = Alphabet::printable();
        let m = MarkovModel::train(&a, &["password", "passw0rd", "dragon12", "monkey99"]).unwrap();
        let s = KnowledgeStore::build(&a, &[("dragonfly".into(), 1.0)], 10).unwrap();
        let f = FusedModel::new(&m, &s, FusionPolicy::default());
        let a1 = generate_stream(f, GuessConfig::default(), 50, 9).guesses;
        let a2 = generate_stream(f, GuessConfig::default(), 50, 9).guesses;
        assert_eq!(a1, a2);
        assert!(generate_stream(f, GuessConfig::default(), 0, 9).guesses.is_empty());
        let p1 = generate_parallel(f, GuessConfig::default(), 50, 9, 7).guesses;
        let p2 = generate_parallel(f, GuessConfig::default(), 50, 9, 7).guesses;
        assert_eq!(p1.len(), 50);
        assert_eq!(p1, p2);
    }

    #[test]
    fn min_length_is_enforced_when_end_dominates() {
        // After one character the model always ends.
        let a = Alphabet::new("xy").unwrap();
        let m = MarkovModel::train(&a, &["x", "y"]).unwrap();
        let s = KnowledgeStore::empty(&a, 10);
        let f = FusedModel::new(&m, &s, FusionPolicy::default());
        let (row, _) = m.internal_distribution_with_order(&[0]).unwrap();
        assert_eq!(row[a.end() as usize], 1.0);
        let mut g = Guesser::new(f, GuessConfig::default());
        let mut session = g.session(3);
        for _ in 0..50 {
            let guess = g.next_guess(&mut session);
            assert!((5..=20).contains(&guess.len()), "{guess}");
        }
    }

    #[test]
    fn window_tracks_last_four() {
        let a = Alphabet::printable();
        let m = MarkovModel::train(&a, &["abcdefgh"]).unwrap();
        let s = KnowledgeStore::empty(&a, 10);
        let f = FusedModel::new(&m, &s, FusionPolicy::default());
        let mut g = Guesser::new(f, GuessConfig::default());
        let mut session = g.session(1);
        assert_eq!(g.next_guess(&mut session), "abcdefgh");
        assert_eq!(session.window().symbols(), &a.encode_str("efgh").unwrap()[..]);
        assert_eq!(session.emitted(), &a.encode_str("abcdefgh").unwrap()[..]);
    }

    #[test]
    fn cached_probability_matches_direct() {
        let a = Alphabet::printable();
        let m = MarkovModel::train(&a, &["password1", "pass1234", "sunshine", "iloveyou"]).unwrap();
        let s = KnowledgeStore::build(&a, &[("passion".into(), 1.0), ("sunny".into(), 1.0)], 10).unwrap();
        let f = FusedModel::new(&m, &s, FusionPolicy::default());
        let mut g = Guesser::new(f, GuessConfig { cache_capacity: 3, ..GuessConfig::default() });
        for pwd in ["password1", "sunshine", "passion1", "qqqqqqq"] {
            let direct = f.password_probability(pwd).unwrap().total;
            assert_eq!(g.probability(pwd).unwrap().to_bits(), direct.to_bits());
        }
    }

    #[test]
    fn scored_guess_probabilities_agree() {
        let a = Alphabet::printable();
        let m = MarkovModel::train(&a, &["password1", "pass1234", "sunshine", "iloveyou"]).unwrap();
        let s = KnowledgeStore::build(&a, &[("passion".into(), 1.0)], 10).unwrap();
        let f = FusedModel::new(&m, &s, FusionPolicy::default());
        let mut g = Guesser::new(f, GuessConfig::default());
        let mut session = g.session(5);
        for _ in 0..100 {
            let sg = g.next_scored(&mut session);
            let p = f.password_probability(&sg.password).unwrap().total;
            assert!((sg.prob - p).abs() <= 1e-12 * p.max(1e-300));
            let q = g.sample_probability(&sg.password).unwrap();
            assert!((sg.sample_prob - q).abs() <= 1e-12 * q);
        }
    }
}
