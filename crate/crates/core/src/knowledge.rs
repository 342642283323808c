//! External knowledge store and its exact nearest-neighbour index.
//!
//! Entries map a short key (1 to `max_len` password characters) to the
//! distribution of the character that follows it in the term corpus. Keys
//! are embedded one-hot, right-aligned in `max_len` blocks of
//! `|alphabet|` coordinates, and retrieved by L2 distance.
//!
//! Because embeddings are one-hot, the squared distance between two keys
//! only depends on their slot-by-slot agreement: a slot occupied in both
//! with different characters contributes 2, a slot occupied in exactly one
//! contributes 1. The index works on packed slot codes instead of dense
//! vectors; [`embed`] gives the dense form for anyone who wants to check.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::alphabet::{Alphabet, Symbol};
use crate::error::{Error, Result};
use crate::persist;

pub const DEFAULT_K: usize = 10;
pub const MAX_KEY_LEN: usize = 4;

const EMPTY_SLOT: u8 = u8::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeEntry {
    /// Position in the store; stable across updates.
    pub id: u32,
    pub key: Vec<Symbol>,
    /// Distribution over password characters plus end.
    pub next_dist: Vec<f64>,
}

/// Packs a right-aligned key into four byte slots, unused slots empty.
pub fn slot_code(key: &[Symbol], max_len: usize) -> u32 {
    debug_assert!(key.len() <= max_len && max_len <= MAX_KEY_LEN);
    let mut slots = [EMPTY_SLOT; MAX_KEY_LEN];
    let offset = max_len - key.len();
    for (j, &s) in key.iter().enumerate() {
        slots[offset + j] = s;
    }
    u32::from_le_bytes(slots)
}

/// Squared L2 distance between the one-hot embeddings of two slot codes.
#[inline]
pub fn onehot_sq_distance(a: u32, b: u32) -> u32 {
    let (a, b) = (a.to_le_bytes(), b.to_le_bytes());
    let mut d = 0;
    for i in 0..MAX_KEY_LEN {
        if a[i] != b[i] {
            d += if a[i] == EMPTY_SLOT || b[i] == EMPTY_SLOT { 1 } else { 2 };
        }
    }
    d
}

/// Dense one-hot embedding of `prefix`, right-aligned in `max_len` blocks.
pub fn embed(alphabet: &Alphabet, max_len: usize, prefix: &[Symbol]) -> Result<Vec<f64>> {
    if prefix.len() > max_len {
        return Err(Error::domain(format!(
            "prefix of length {} exceeds max_len {max_len}",
            prefix.len()
        )));
    }
    let n = alphabet.len();
    let mut v = vec![0.0; max_len * n];
    let offset = max_len - prefix.len();
    for (j, &s) in prefix.iter().enumerate() {
        if !alphabet.is_password_symbol(s) {
            return Err(Error::domain(format!("symbol {s} is not a password character")));
        }
        v[(offset + j) * n + s as usize] = 1.0;
    }
    Ok(v)
}

/// Nearest-neighbour search over slot codes. Results are `(id, squared
/// distance)` ordered by distance, then ascending id.
pub trait NearestIndex: Send + Sync {
    fn search(&self, query: u32, k: usize) -> Vec<(u32, u32)>;
}

/// Exact linear scan.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlatL2Index {
    codes: Vec<u32>,
}

impl FlatL2Index {
    pub fn new(codes: Vec<u32>) -> Self {
        Self { codes }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

impl NearestIndex for FlatL2Index {
    fn search(&self, query: u32, k: usize) -> Vec<(u32, u32)> {
        // Squared distances are small integers, so a histogram finds the
        // cut-off distance without sorting the whole store.
        const BUCKETS: usize = 2 * MAX_KEY_LEN + 1;
        let mut hist = [0usize; BUCKETS];
        for &c in &self.codes {
            hist[onehot_sq_distance(query, c) as usize] += 1;
        }
        let k = k.min(self.codes.len());
        let mut cut = 0;
        let mut below = 0;
        while cut < BUCKETS && below + hist[cut] < k {
            below += hist[cut];
            cut += 1;
        }
        let mut at_cut = k - below;
        let mut out = Vec::with_capacity(k);
        for (id, &c) in self.codes.iter().enumerate() {
            let d = onehot_sq_distance(query, c);
            if (d as usize) < cut {
                out.push((id as u32, d));
            } else if d as usize == cut && at_cut > 0 {
                out.push((id as u32, d));
                at_cut -= 1;
            }
        }
        out.sort_unstable_by_key(|&(id, d)| (d, id));
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Retrieved {
    pub id: u32,
    pub distance: f64,
    pub similarity: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RetrievalResult {
    pub items: Vec<Retrieved>,
}

impl RetrievalResult {
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    /// Sum of raw (unnormalized) similarities.
    pub fn similarity_sum(&self) -> f64 {
        self.items.iter().map(|r| r.similarity).sum()
    }
}

/// Maps an L2 distance to a score in (0, 1]; exact matches score 1.
pub fn similarity(distance: f64) -> f64 {
    1.0 / (1.0 + distance)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExternalDistribution {
    pub row: Vec<f64>,
    /// Normalized retrieval weights, parallel to the result items.
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct KnowledgeStore {
    alphabet: Alphabet,
    max_len: usize,
    k: usize,
    entries: Vec<KnowledgeEntry>,
    index: FlatL2Index,
    by_key: HashMap<Vec<Symbol>, u32>,
}

impl PartialEq for KnowledgeStore {
    fn eq(&self, other: &Self) -> bool {
        self.alphabet == other.alphabet
            && self.max_len == other.max_len
            && self.k == other.k
            && self.entries == other.entries
    }
}

/// Accumulates weighted next-character counts for every key window.
#[derive(Default)]
pub(crate) struct WindowCounts {
    pub(crate) rows: BTreeMap<Vec<Symbol>, BTreeMap<Symbol, f64>>,
}

impl WindowCounts {
    /// Adds `weight` for every (key, next) pair in `symbols`, keys of length
    /// 1..=max_len, with the end symbol following the last character.
    pub(crate) fn add(&mut self, symbols: &[Symbol], end: Symbol, max_len: usize, weight: f64) {
        for j in 1..=symbols.len() {
            let next = symbols.get(j).copied().unwrap_or(end);
            for len in 1..=max_len.min(j) {
                *self
                    .rows
                    .entry(symbols[j - len..j].to_vec())
                    .or_default()
                    .entry(next)
                    .or_default() += weight;
            }
        }
    }
}

impl KnowledgeStore {
    /// A store with no entries; retrieval always comes back empty.
    pub fn empty(alphabet: &Alphabet, k: usize) -> Self {
        Self::from_rows(alphabet.clone(), MAX_KEY_LEN, k.max(1), Vec::new())
    }

    /// Builds the store from weighted terms with the default key length.
    pub fn build(alphabet: &Alphabet, terms: &[(String, f64)], k: usize) -> Result<Self> {
        Self::build_with(alphabet, terms, k, MAX_KEY_LEN)
    }

    pub fn build_with(
        alphabet: &Alphabet,
        terms: &[(String, f64)],
        k: usize,
        max_len: usize,
    ) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Build("empty term list".into()));
        }
        if k == 0 {
            return Err(Error::Build("retrieval count k must be at least 1".into()));
        }
        if !(1..=MAX_KEY_LEN).contains(&max_len) {
            return Err(Error::Build(format!("max_len must be in 1..={MAX_KEY_LEN}")));
        }
        let mut counts = WindowCounts::default();
        for (term, weight) in terms {
            if !(weight.is_finite() && *weight > 0.0) {
                return Err(Error::Build(format!("term weight {weight} must be positive")));
            }
            let symbols = alphabet.encode_str(term)?;
            counts.add(&symbols, alphabet.end(), max_len, *weight);
        }
        let width = alphabet.row_width();
        let rows = counts
            .rows
            .into_iter()
            .map(|(key, next)| {
                let total: f64 = next.values().sum();
                let mut row = vec![0.0; width];
                for (s, c) in next {
                    row[s as usize] = c / total;
                }
                (key, row)
            })
            .collect();
        Ok(Self::from_rows(alphabet.clone(), max_len, k, rows))
    }

    /// Assembles a store whose entry ids are the positions in `rows`.
    pub fn from_rows(
        alphabet: Alphabet,
        max_len: usize,
        k: usize,
        rows: Vec<(Vec<Symbol>, Vec<f64>)>,
    ) -> Self {
        let entries: Vec<KnowledgeEntry> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (key, next_dist))| KnowledgeEntry {
                id: i as u32,
                key,
                next_dist,
            })
            .collect();
        let index = FlatL2Index::new(entries.iter().map(|e| slot_code(&e.key, max_len)).collect());
        let by_key = entries.iter().map(|e| (e.key.clone(), e.id)).collect();
        Self {
            alphabet,
            max_len,
            k,
            entries,
            index,
            by_key,
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k.max(1);
        self
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[KnowledgeEntry] {
        &self.entries
    }

    pub fn entry(&self, id: u32) -> Option<&KnowledgeEntry> {
        self.entries.get(id as usize)
    }

    pub fn entry_by_key(&self, key: &[Symbol]) -> Option<&KnowledgeEntry> {
        self.by_key.get(key).map(|&id| &self.entries[id as usize])
    }

    pub fn embed(&self, prefix: &[Symbol]) -> Result<Vec<f64>> {
        embed(&self.alphabet, self.max_len, prefix)
    }

    /// The `k` entries nearest to `query` (at most `max_len` password
    /// characters), ties broken by ascending id.
    pub fn retrieve(&self, query: &[Symbol]) -> Result<RetrievalResult> {
        if query.len() > self.max_len {
            return Err(Error::domain(format!(
                "query of length {} exceeds max_len {}",
                query.len(),
                self.max_len
            )));
        }
        if let Some(&bad) = query.iter().find(|&&s| !self.alphabet.is_password_symbol(s)) {
            return Err(Error::domain(format!("symbol {bad} is not a password character")));
        }
        Ok(self.retrieve_unchecked(query))
    }

    pub(crate) fn retrieve_unchecked(&self, query: &[Symbol]) -> RetrievalResult {
        let code = slot_code(query, self.max_len);
        let items = self
            .index
            .search(code, self.k)
            .into_iter()
            .map(|(id, d2)| {
                let distance = (d2 as f64).sqrt();
                Retrieved {
                    id,
                    distance,
                    similarity: similarity(distance),
                }
            })
            .collect();
        RetrievalResult { items }
    }

    /// Similarity-weighted mixture of the retrieved entries' rows; `None`
    /// when nothing was retrieved.
    pub fn external_distribution(&self, result: &RetrievalResult) -> Option<ExternalDistribution> {
        let mut row = vec![0.0; self.alphabet.row_width()];
        let weights = self.external_into(result, &mut row)?;
        Some(ExternalDistribution { row, weights })
    }

    pub(crate) fn external_into(&self, result: &RetrievalResult, out: &mut [f64]) -> Option<Vec<f64>> {
        let total = result.similarity_sum();
        if result.is_empty() || total <= 0.0 {
            return None;
        }
        out.fill(0.0);
        let weights: Vec<f64> = result.items.iter().map(|r| r.similarity / total).collect();
        for (item, &w) in result.items.iter().zip(&weights) {
            let entry = &self.entries[item.id as usize];
            for (o, &p) in out.iter_mut().zip(&entry.next_dist) {
                *o += w * p;
            }
        }
        Some(weights)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        persist::save(path, persist::STORE_MAGIC, &StoreFile::from(self))
    }

    pub fn load(path: &Path) -> Result<Self> {
        persist::load::<StoreFile>(path, persist::STORE_MAGIC)?.try_into()
    }

    pub fn write_to<W: std::io::Write>(&self, w: W) -> Result<()> {
        persist::write_to(w, persist::STORE_MAGIC, &StoreFile::from(self))
    }

    pub fn read_from<R: std::io::Read>(r: R) -> Result<Self> {
        persist::read_from::<_, StoreFile>(r, persist::STORE_MAGIC)?.try_into()
    }
}

/// Terms read from a knowledge source file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TermsReport {
    pub terms: Vec<(String, f64)>,
    /// Lines dropped because they contain characters outside the alphabet.
    pub skipped: usize,
}

/// Reads `term[\tweight]` lines; the weight defaults to 1 and blank lines
/// are ignored.
pub fn read_terms<R: BufRead>(reader: R, alphabet: &Alphabet) -> Result<TermsReport> {
    let mut report = TermsReport::default();
    for (n, line) in reader.split(b'\n').enumerate() {
        let line = line?;
        let Ok(line) = String::from_utf8(line) else {
            report.skipped += 1;
            continue;
        };
        if line.is_empty() {
            continue;
        }
        let (term, weight) = match line.split_once('\t') {
            Some((term, w)) => {
                let weight: f64 = w.trim().parse().map_err(|_| {
                    Error::Format(format!("line {}: bad weight {:?}", n + 1, w.trim()))
                })?;
                if !(weight.is_finite() && weight > 0.0) {
                    return Err(Error::Format(format!("line {}: weight must be positive", n + 1)));
                }
                (term, weight)
            }
            None => (line.as_str(), 1.0),
        };
        if term.is_empty() || alphabet.encode_str(term).is_err() {
            report.skipped += 1;
            continue;
        }
        report.terms.push((term.to_string(), weight));
    }
    Ok(report)
}

pub fn read_terms_file(path: &Path, alphabet: &Alphabet) -> Result<TermsReport> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_terms(std::io::BufReader::new(file), alphabet).map_err(|e| match e {
        Error::Stream(source) => Error::io(path, source),
        other => other,
    })
}

#[derive(Serialize, Deserialize)]
struct StoreFile {
    alphabet: Alphabet,
    max_len: usize,
    k: usize,
    entries: Vec<EntryRecord>,
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    key: String,
    next: Vec<(Symbol, f64)>,
}

impl From<&KnowledgeStore> for StoreFile {
    fn from(s: &KnowledgeStore) -> Self {
        StoreFile {
            alphabet: s.alphabet.clone(),
            max_len: s.max_len,
            k: s.k,
            entries: s
                .entries
                .iter()
                .map(|e| EntryRecord {
                    key: s.alphabet.decode_symbols(&e.key).expect("keys hold password symbols"),
                    next: e
                        .next_dist
                        .iter()
                        .enumerate()
                        .filter(|(_, &p)| p != 0.0)
                        .map(|(i, &p)| (i as Symbol, p))
                        .collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<StoreFile> for KnowledgeStore {
    type Error = Error;

    fn try_from(f: StoreFile) -> Result<Self> {
        if f.k == 0 || !(1..=MAX_KEY_LEN).contains(&f.max_len) {
            return Err(Error::Format("bad k or max_len".into()));
        }
        let width = f.alphabet.row_width();
        let mut rows = Vec::with_capacity(f.entries.len());
        for e in f.entries {
            let key = f.alphabet.encode_str(&e.key)?;
            if key.is_empty() || key.len() > f.max_len {
                return Err(Error::Format(format!("bad key {:?}", e.key)));
            }
            let mut row = vec![0.0; width];
            for (s, p) in e.next {
                if s as usize >= width || !(p >= 0.0) {
                    return Err(Error::Format(format!("bad row for key {:?}", e.key)));
                }
                row[s as usize] = p;
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::Format(format!("row for key {:?} does not sum to 1", e.key)));
            }
            rows.push((key, row));
        }
        Ok(KnowledgeStore::from_rows(f.alphabet, f.max_len, f.k, rows))
    }
}

/// A store version together with the epoch it was published at.
#[derive(Debug)]
pub struct Snapshot {
    pub epoch: u64,
    pub store: KnowledgeStore,
}

/// Publishes immutable store snapshots. Readers clone the current `Arc`;
/// writers are serialized and swap in a whole new snapshot.
#[derive(Debug)]
pub struct SharedStore {
    current: RwLock<Arc<Snapshot>>,
    writer: Mutex<()>,
}

impl SharedStore {
    pub fn new(store: KnowledgeStore) -> Self {
        Self {
            current: RwLock::new(Arc::new(Snapshot { epoch: 0, store })),
            writer: Mutex::new(()),
        }
    }

    pub fn load(&self) -> Arc<Snapshot> {
        self.current.read().expect("snapshot lock poisoned").clone()
    }

    /// Runs `f` on the current store; a returned store is published under
    /// the next epoch. Returns the snapshot current after the call.
    pub fn update<F>(&self, f: F) -> Arc<Snapshot>
    where
        F: FnOnce(&KnowledgeStore) -> Option<KnowledgeStore>,
    {
        let _guard = self.writer.lock().expect("writer lock poisoned");
        let base = self.load();
        match f(&base.store) {
            Some(store) => {
                let next = Arc::new(Snapshot {
                    epoch: base.epoch + 1,
                    store,
                });
                *self.current.write().expect("snapshot lock poisoned") = next.clone();
                next
            }
            None => base,
        }
    }
}
