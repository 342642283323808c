//! Order 1..=4 character transition tables with backoff.
//!
//! Every training password is framed as four start sentinels, its
//! characters, then the end symbol. Each position contributes one
//! `(context, next)` observation to every order, so the tables carry raw
//! counts and probabilities are `count / total` per context.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::{pack, unpack, Alphabet, Symbol, WINDOW};
use crate::error::{Error, Result};
use crate::persist;

pub const MAX_ORDER: usize = WINDOW;

/// Next-symbol counts observed after one context, sorted by symbol.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CountRow {
    counts: Vec<(Symbol, u64)>,
    total: u64,
}

impl CountRow {
    fn from_counts(mut counts: Vec<(Symbol, u64)>) -> Self {
        counts.sort_unstable_by_key(|&(s, _)| s);
        let total = counts.iter().map(|&(_, c)| c).sum();
        Self { counts, total }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &[(Symbol, u64)] {
        &self.counts
    }

    pub fn count(&self, s: Symbol) -> u64 {
        self.counts
            .binary_search_by_key(&s, |&(sym, _)| sym)
            .map(|i| self.counts[i].1)
            .unwrap_or(0)
    }

    /// Writes `count / total` into a zeroed dense row.
    fn fill(&self, out: &mut [f64]) {
        out.fill(0.0);
        let total = self.total as f64;
        for &(s, c) in &self.counts {
            out[s as usize] = c as f64 / total;
        }
    }
}

/// Contexts of one fixed order mapped to their count rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionTable {
    order: usize,
    rows: HashMap<u32, CountRow>,
}

impl TransitionTable {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row for a context of exactly `order` symbols.
    pub fn row(&self, context: &[Symbol]) -> Option<&CountRow> {
        if context.len() != self.order {
            return None;
        }
        self.rows.get(&pack(context))
    }

    pub fn contexts(&self) -> impl Iterator<Item = (Vec<Symbol>, &CountRow)> + '_ {
        self.rows.iter().map(|(&k, row)| (unpack(k, self.order), row))
    }
}

/// The internal generator: one transition table per order.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovModel {
    alphabet: Alphabet,
    tables: Vec<TransitionTable>,
    epsilon_floor: f64,
}

type Counts = Vec<HashMap<u64, u64>>;

fn count_password(symbols: &[Symbol], alphabet: &Alphabet, counts: &mut Counts) {
    let mut stream = Vec::with_capacity(symbols.len() + WINDOW + 1);
    stream.extend(std::iter::repeat_n(alphabet.start(), WINDOW));
    stream.extend_from_slice(symbols);
    stream.push(alphabet.end());
    for j in WINDOW..stream.len() {
        let next = stream[j] as u64;
        for k in 1..=MAX_ORDER {
            let ctx = pack(&stream[j - k..j]) as u64;
            *counts[k - 1].entry((ctx << 8) | next).or_default() += 1;
        }
    }
}

fn merge(mut a: Counts, b: Counts) -> Counts {
    for (ma, mb) in a.iter_mut().zip(b) {
        if ma.len() < mb.len() {
            let small = std::mem::replace(ma, mb);
            for (k, v) in small {
                *ma.entry(k).or_default() += v;
            }
        } else {
            for (k, v) in mb {
                *ma.entry(k).or_default() += v;
            }
        }
    }
    a
}

impl MarkovModel {
    /// Counts transitions over `passwords`. Shards are counted in parallel
    /// and merged by addition, so the result does not depend on scheduling.
    pub fn train<S: AsRef<str> + Sync>(alphabet: &Alphabet, passwords: &[S]) -> Result<Self> {
        if passwords.is_empty() {
            return Err(Error::Training("empty training corpus".into()));
        }
        let encoded = passwords
            .iter()
            .map(|p| alphabet.encode_str(p.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let empty = || vec![HashMap::new(); MAX_ORDER];
        let counts = encoded
            .par_chunks(4096)
            .map(|chunk| {
                let mut c = empty();
                for symbols in chunk {
                    count_password(symbols, alphabet, &mut c);
                }
                c
            })
            .reduce(empty, merge);

        let tables = counts
            .into_iter()
            .enumerate()
            .map(|(i, pairs)| {
                let mut grouped: HashMap<u32, Vec<(Symbol, u64)>> = HashMap::new();
                for (key, c) in pairs {
                    grouped
                        .entry((key >> 8) as u32)
                        .or_default()
                        .push(((key & 0xff) as Symbol, c));
                }
                TransitionTable {
                    order: i + 1,
                    rows: grouped
                        .into_iter()
                        .map(|(ctx, row)| (ctx, CountRow::from_counts(row)))
                        .collect(),
                }
            })
            .collect();
        Ok(Self::from_tables(alphabet.clone(), tables))
    }

    fn from_tables(alphabet: Alphabet, tables: Vec<TransitionTable>) -> Self {
        let epsilon_floor = 1.0 / alphabet.row_width() as f64;
        Self {
            alphabet,
            tables,
            epsilon_floor,
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// Table for `order` in `1..=4`.
    pub fn table(&self, order: usize) -> &TransitionTable {
        &self.tables[order - 1]
    }

    /// Per-symbol probability of the all-orders-miss fallback row.
    pub fn epsilon_floor(&self) -> f64 {
        self.epsilon_floor
    }

    /// The highest order whose context (the matching suffix of `prefix`)
    /// has observations, or 0 when every order misses.
    pub fn backoff_order(&self, prefix: &[Symbol]) -> usize {
        self.lookup(prefix).map_or(0, |(order, _)| order)
    }

    fn lookup(&self, prefix: &[Symbol]) -> Option<(usize, &CountRow)> {
        let n = prefix.len().min(MAX_ORDER);
        (1..=n).rev().find_map(|k| {
            self.tables[k - 1]
                .rows
                .get(&pack(&prefix[prefix.len() - k..]))
                .filter(|row| row.total > 0)
                .map(|row| (k, row))
        })
    }

    /// Backoff distribution written into `out` (width `row_width`); returns
    /// the order used. No validation: callers pass alphabet symbols.
    pub fn internal_into(&self, prefix: &[Symbol], out: &mut [f64]) -> usize {
        match self.lookup(prefix) {
            Some((order, row)) => {
                row.fill(out);
                order
            }
            None => {
                out.fill(self.epsilon_floor);
                0
            }
        }
    }

    /// Next-symbol distribution over password characters plus end, for the
    /// last (at most four) symbols of `prefix`.
    pub fn internal_distribution(&self, prefix: &[Symbol]) -> Result<Vec<f64>> {
        self.internal_distribution_with_order(prefix).map(|(row, _)| row)
    }

    pub fn internal_distribution_with_order(&self, prefix: &[Symbol]) -> Result<(Vec<f64>, usize)> {
        if let Some(&bad) = prefix.iter().find(|&&s| s > self.alphabet.start()) {
            return Err(Error::domain(format!("symbol {bad} outside the alphabet")));
        }
        let prefix = &prefix[prefix.len().saturating_sub(MAX_ORDER)..];
        let mut row = vec![0.0; self.alphabet.row_width()];
        let order = self.internal_into(prefix, &mut row);
        Ok((row, order))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        persist::save(path, persist::MODEL_MAGIC, &ModelFile::from(self))
    }

    pub fn load(path: &Path) -> Result<Self> {
        persist::load::<ModelFile>(path, persist::MODEL_MAGIC)?.try_into()
    }

    pub fn write_to<W: std::io::Write>(&self, w: W) -> Result<()> {
        persist::write_to(w, persist::MODEL_MAGIC, &ModelFile::from(self))
    }

    pub fn read_from<R: std::io::Read>(r: R) -> Result<Self> {
        persist::read_from::<_, ModelFile>(r, persist::MODEL_MAGIC)?.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    alphabet: Alphabet,
    tables: Vec<TableFile>,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    order: usize,
    rows: Vec<RowRecord>,
}

#[derive(Serialize, Deserialize)]
struct RowRecord {
    context: Vec<Symbol>,
    counts: Vec<(Symbol, u64)>,
}

impl From<&MarkovModel> for ModelFile {
    fn from(m: &MarkovModel) -> Self {
        let tables = m
            .tables
            .iter()
            .map(|t| {
                let mut rows: Vec<RowRecord> = t
                    .contexts()
                    .map(|(context, row)| RowRecord {
                        context,
                        counts: row.counts.clone(),
                    })
                    .collect();
                rows.sort_unstable_by(|a, b| a.context.cmp(&b.context));
                TableFile {
                    order: t.order,
                    rows,
                }
            })
            .collect();
        ModelFile {
            alphabet: m.alphabet.clone(),
            tables,
        }
    }
}

impl TryFrom<ModelFile> for MarkovModel {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        if file.tables.len() != MAX_ORDER {
            return Err(Error::Format(format!("expected {MAX_ORDER} tables")));
        }
        let start = file.alphabet.start();
        let mut tables = Vec::with_capacity(MAX_ORDER);
        for (i, t) in file.tables.into_iter().enumerate() {
            if t.order != i + 1 {
                return Err(Error::Format(format!("table {i} has order {}", t.order)));
            }
            let mut rows = HashMap::with_capacity(t.rows.len());
            for r in t.rows {
                if r.context.len() != t.order
                    || r.context.iter().any(|&s| s > start)
                    || r.counts.iter().any(|&(s, _)| s > file.alphabet.end())
                {
                    return Err(Error::Format(format!("malformed order-{} row", t.order)));
                }
                rows.insert(pack(&r.context), CountRow::from_counts(r.counts));
            }
            tables.push(TransitionTable {
                order: t.order,
                rows,
            });
        }
        Ok(MarkovModel::from_tables(file.alphabet, tables))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn syms(a: &Alphabet, s: &str) -> Vec<Symbol> {
        a.encode_str(s).unwrap()
    }

    #[test]
    fn two_password_counts() {
        let a = Alphabet::printable();
        let m = MarkovModel::train(&a, &["abc", "abd"]).unwrap();
        let row = m.table(2).row(&syms(&a, "ab")).unwrap();
        assert_eq!(row.total(), 2);
        let (dist, order) = m.internal_distribution_with_order(&syms(&a, "ab")).unwrap();
        assert_eq!(order, 2);
        assert_eq!(dist[a.encode('c').unwrap() as usize], 0.5);
        assert_eq!(dist[a.encode('d').unwrap() as usize], 0.5);
    }

    #[test]
    fn repeated_char_counts() {
        let a = Alphabet::printable();
        let m = MarkovModel::train(&a, &["aaaaa"]).unwrap();
        let (dist, order) = m.internal_distribution_with_order(&syms(&a, "a")).unwrap();
        assert_eq!(order, 1);
        assert!((dist[a.encode('a').unwrap() as usize] - 0.8).abs() < 1e-15);
        assert!((dist[a.end() as usize] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn empty_corpus_fails() {
        let a = Alphabet::printable();
        let err = MarkovModel::train::<&str>(&a, &[]).unwrap_err();
        assert!(matches!(err, Error::Training(_)));
    }

    #[test]
    fn start_padded_context() {
        let a = Alphabet::printable();
        let m = MarkovModel::train(&a, &["abc", "abd"]).unwrap();
        let s = a.start();
        let prefix = [s, s, a.encode('a').unwrap(), a.encode('b').unwrap()];
        let (dist, order) = m.internal_distribution_with_order(&prefix).unwrap();
        assert_eq!(order, 4);
        assert_eq!(dist[a.encode('c').unwrap() as usize], 0.5);
        assert_eq!(dist[a.encode('d').unwrap() as usize], 0.5);
    }

    #[test]
    fn backs_off_to_order_two() {
        let a = Alphabet::printable();
        let m = MarkovModel::train(&a, &["abc", "abd"]).unwrap();
        let prefix = syms(&a, "xxab");
        let (dist, order) = m.internal_distribution_with_order(&prefix).unwrap();
        assert_eq!(order, 2);
        let (direct, _) = m.internal_distribution_with_order(&syms(&a, "ab")).unwrap();
        assert_eq!(dist, direct);
    }

    #[test]
    fn total_miss_is_uniform() {
        let a = Alphabet::printable();
        let m = MarkovModel::train(&a, &["abc", "abd"]).unwrap();
        let (dist, order) = m.internal_distribution_with_order(&syms(&a, "wxyz")).unwrap();
        assert_eq!(order, 0);
        assert!(dist.iter().all(|&p| p == m.epsilon_floor()));
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_foreign_symbols() {
        let a = Alphabet::new("ab").unwrap();
        let m = MarkovModel::train(&a, &["abab"]).unwrap();
        assert!(m.internal_distribution(&[0, 9]).is_err());
        assert!(MarkovModel::train(&a, &["abc"]).is_err());
    }

    #[test]
    fn save_load_reproduces_rows_bitwise() {
        let a = Alphabet::printable();
        let m = MarkovModel::train(&a, &["password1", "passw0rd", "letmein!", "iloveyou"]).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert!(buf.starts_with(b"KAPG-M1\n"));
        let back = MarkovModel::read_from(&buf[..]).unwrap();
        assert_eq!(back, m);
        for order in 1..=MAX_ORDER {
            for (ctx, _) in m.table(order).contexts() {
                let x = m.internal_distribution(&ctx).unwrap();
                let y = back.internal_distribution(&ctx).unwrap();
                assert!(x.iter().zip(&y).all(|(p, q)| p.to_bits() == q.to_bits()));
            }
        }
    }
}
