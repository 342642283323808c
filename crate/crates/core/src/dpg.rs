//! Dynamic guessing: cracked passwords are folded back into the knowledge
//! store at every power-of-ten guess count.
//!
//! A password cracked at guess `g` contributes `1 / (g + 1)` per occurrence
//! of each `(key, next)` window. Each key's row is Laplace-smoothed over the
//! full row width:
//!
//! ```text
//! P(c | key) = (Σ_i w_i · n_i(key, c) + α) / (Σ_i w_i · n_i(key) + α · |row|)
//! ```
//!
//! and blended into the store as `β · old + (1 − β) · new`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::alphabet::{Alphabet, Symbol};
use crate::error::{Error, Result};
use crate::fusion::{FusedModel, FusionPolicy};
use crate::guesser::{GuessConfig, GuessSession, Guesser};
use crate::knowledge::{KnowledgeStore, SharedStore, WindowCounts};
use crate::markov::MarkovModel;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrackEvent {
    pub password: String,
    /// Cumulative guess count at which the password fell; at least 1 for
    /// cracks, 0 for passwords submitted directly (registrations).
    pub guesses: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UpdatePolicy {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for UpdatePolicy {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 0.8 }
    }
}

impl UpdatePolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha {} must be positive", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta {} outside [0, 1]", self.beta)));
        }
        Ok(())
    }
}

/// `⌊log10 n⌋ + 1`, i.e. the number of decimal digits of `n`.
pub fn schedule_tier(n: u64) -> Result<u32> {
    if n < 1 {
        return Err(Error::domain("cumulative guess count must be at least 1"));
    }
    Ok(n.ilog10() + 1)
}

pub fn increment(guesses: u64) -> f64 {
    1.0 / (guesses as f64 + 1.0)
}

/// Smoothed next-character rows for every key window in the batch. `None`
/// for an empty batch.
pub fn batch_distribution(
    batch: &[CrackEvent],
    alphabet: &Alphabet,
    max_len: usize,
    policy: &UpdatePolicy,
) -> Result<Option<BTreeMap<Vec<Symbol>, Vec<f64>>>> {
    policy.validate()?;
    if batch.is_empty() {
        return Ok(None);
    }
    let mut counts = WindowCounts::default();
    for event in batch {
        let symbols = alphabet.encode_str(&event.password)?;
        counts.add(&symbols, alphabet.end(), max_len, increment(event.guesses));
    }
    let width = alphabet.row_width();
    let smoothing = policy.alpha * width as f64;
    let rows = counts
        .rows
        .into_iter()
        .map(|(key, next)| {
            let denom = next.values().sum::<f64>() + smoothing;
            let mut row = vec![policy.alpha / denom; width];
            for (s, c) in next {
                row[s as usize] = (c + policy.alpha) / denom;
            }
            (key, row)
        })
        .collect();
    Ok(Some(rows))
}

/// Blends `rows` into a copy of `store`. Existing keys keep their ids;
/// new keys are appended in key order. With `beta == 1` the store is
/// returned unchanged.
pub fn apply_ema(store: &KnowledgeStore, rows: &BTreeMap<Vec<Symbol>, Vec<f64>>, beta: f64) -> KnowledgeStore {
    if beta >= 1.0 {
        return store.clone();
    }
    let mut out: Vec<(Vec<Symbol>, Vec<f64>)> = store
        .entries()
        .iter()
        .map(|e| {
            let row = match rows.get(&e.key) {
                Some(new) => {
                    let mut blended: Vec<f64> = e
                        .next_dist
                        .iter()
                        .zip(new)
                        .map(|(&old, &inp)| beta * old + (1.0 - beta) * inp)
                        .collect();
                    let sum: f64 = blended.iter().sum();
                    blended.iter_mut().for_each(|p| *p /= sum);
                    blended
                }
                None => e.next_dist.clone(),
            };
            (e.key.clone(), row)
        })
        .collect();
    for (key, row) in rows {
        if store.entry_by_key(key).is_none() {
            out.push((key.clone(), row.clone()));
        }
    }
    KnowledgeStore::from_rows(store.alphabet().clone(), store.max_len(), store.k(), out)
}

/// Batch update of a store: `batch_distribution` then `apply_ema`.
pub fn update_store(store: &KnowledgeStore, batch: &[CrackEvent], policy: &UpdatePolicy) -> Result<Option<KnowledgeStore>> {
    Ok(batch_distribution(batch, store.alphabet(), store.max_len(), policy)?
        .map(|rows| apply_ema(store, &rows, policy.beta)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TierCount {
    pub budget: u64,
    pub cracked: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DpgReport {
    pub tiers: Vec<TierCount>,
    pub updates: usize,
    pub final_epoch: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct DpgRun {
    pub policy: FusionPolicy,
    pub guess: GuessConfig,
    /// `None` runs the static baseline.
    pub update: Option<UpdatePolicy>,
    pub max_guesses: u64,
    pub seed: u64,
}

/// Generates up to `max_guesses` guesses against the multiset `test_set`,
/// reporting cumulative cracks at 10, 100, ... and at `max_guesses`.
pub fn run_dpg<S: AsRef<str>>(model: &MarkovModel, store: &KnowledgeStore, test_set: &[S], run: &DpgRun) -> Result<DpgReport> {
    run_dpg_observed(model, store, test_set, run, |_, _| {})
}

/// As [`run_dpg`], calling `observer(n, epoch)` for every guess with the
/// epoch of the snapshot that produced it.
pub fn run_dpg_observed<S, F>(
    model: &MarkovModel,
    store: &KnowledgeStore,
    test_set: &[S],
    run: &DpgRun,
    mut observer: F,
) -> Result<DpgReport>
where
    S: AsRef<str>,
    F: FnMut(u64, u64),
{
    if let Some(u) = &run.update {
        u.validate()?;
    }
    run.policy.validate()?;
    let mut remaining: HashMap<&str, usize> = HashMap::new();
    for p in test_set {
        *remaining.entry(p.as_ref()).or_default() += 1;
    }
    let shared = SharedStore::new(store.clone());
    let mut snapshot = shared.load();
    let mut session = GuessSession::new(&FusedModel::try_new(model, store, run.policy)?, run.seed);
    let mut report = DpgReport {
        tiers: Vec::new(),
        updates: 0,
        final_epoch: 0,
    };
    let mut cracked = 0usize;
    let mut batch = Vec::new();
    let mut n = 0u64;
    let mut boundary = 10u64;
    while n < run.max_guesses {
        let stop = boundary.min(run.max_guesses);
        {
            let scorer = FusedModel::try_new(model, &snapshot.store, run.policy)?;
            let mut guesser = Guesser::new(scorer, run.guess);
            while n < stop {
                n += 1;
                let guess = guesser.next_guess(&mut session);
                observer(n, snapshot.epoch);
                if let Some(count) = remaining.remove(guess.as_str()) {
                    cracked += count;
                    batch.push(CrackEvent {
                        password: guess,
                        guesses: n,
                    });
                }
            }
        }
        report.tiers.push(TierCount { budget: stop, cracked });
        if stop == boundary {
            if let Some(policy) = &run.update {
                if !batch.is_empty() {
                    let updated = update_store(&snapshot.store, &batch, policy)?;
                    snapshot = shared.update(|_| updated);
                    report.updates += 1;
                }
            }
            batch.clear();
        }
        boundary = boundary.saturating_mul(10);
    }
    report.final_epoch = snapshot.epoch;
    Ok(report)
}
