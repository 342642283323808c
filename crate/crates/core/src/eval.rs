//! Experiment harness: cracking curves, overlap of cracked sets, term
//! prevalence, weighted rank correlation and efficiency measurement.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use aho_corasick::AhoCorasick;
use rayon::prelude::*;
use serde::Serialize;

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::fusion::{FusedModel, FusionPolicy};
use crate::guesser::{generate_stream, GuessConfig};
use crate::knowledge::KnowledgeStore;
use crate::markov::MarkovModel;
use crate::strength::MonteCarloRank;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub budget: f64,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrackingCurve {
    pub points: Vec<CurvePoint>,
}

impl CrackingCurve {
    pub const CSV_HEADER: &'static str = "budget,fraction";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for p in &self.points {
            let _ = writeln!(out, "{},{}", p.budget, p.fraction);
        }
        out
    }
}

/// Fraction of `guess_numbers` at or below each budget. Budgets must be
/// strictly increasing; infinite guess numbers never count.
pub fn cracking_curve(guess_numbers: &[f64], budgets: &[f64]) -> Result<CrackingCurve> {
    if guess_numbers.is_empty() {
        return Err(Error::domain("empty test set"));
    }
    if budgets.windows(2).any(|w| w[0] >= w[1]) || budgets.iter().any(|b| b.is_nan()) {
        return Err(Error::domain("budgets must be strictly increasing"));
    }
    let mut sorted: Vec<f64> = guess_numbers.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let finite = sorted.partition_point(|g| g.is_finite());
    let points = budgets
        .iter()
        .map(|&budget| CurvePoint {
            budget,
            fraction: sorted.partition_point(|&g| g <= budget).min(finite) as f64 / n,
        })
        .collect();
    Ok(CrackingCurve { points })
}

/// Estimated guess number of every test password; passwords outside the
/// alphabet or with zero probability get infinity.
pub fn estimate_guess_numbers<S: AsRef<str> + Sync>(
    scorer: &FusedModel<'_>,
    rank: &MonteCarloRank,
    test_set: &[S],
) -> Vec<f64> {
    test_set
        .par_iter()
        .map(|pwd| match scorer.password_probability(pwd.as_ref()) {
            Ok(t) if t.total > 0.0 => rank.guess_number(t.total.min(1.0)).unwrap_or(f64::INFINITY),
            _ => f64::INFINITY,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverlapRegion {
    /// Bit `i` set when the region lies inside set `i`.
    pub mask: u32,
    pub members: Vec<String>,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverlapReport {
    pub names: Vec<String>,
    pub set_sizes: Vec<usize>,
    pub union: usize,
    /// Non-empty Venn regions, by mask.
    pub regions: Vec<OverlapRegion>,
}

impl OverlapReport {
    pub const CSV_HEADER: &'static str = "region,size";

    pub fn region(&self, mask: u32) -> usize {
        self.regions.iter().find(|r| r.mask == mask).map_or(0, |r| r.size)
    }

    /// Size of the intersection of the sets in `mask`, ignoring the others.
    pub fn intersection(&self, mask: u32) -> usize {
        self.regions.iter().filter(|r| r.mask & mask == mask).map(|r| r.size).sum()
    }

    /// One row per non-empty region, labelled `a&b`, then the union.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.regions {
            let _ = writeln!(out, "{},{}", r.members.join("&"), r.size);
        }
        let _ = writeln!(out, "union,{}", self.union);
        out
    }
}

const MAX_OVERLAP_SETS: usize = 16;

/// Exact Venn decomposition of named sets.
pub fn overlap<S: AsRef<str>>(sets: &[(String, Vec<S>)]) -> Result<OverlapReport> {
    if sets.len() < 2 {
        return Err(Error::domain("overlap needs at least two sets"));
    }
    if sets.len() > MAX_OVERLAP_SETS {
        return Err(Error::domain(format!("at most {MAX_OVERLAP_SETS} sets")));
    }
    let mut membership: HashMap<&str, u32> = HashMap::new();
    let mut set_sizes = Vec::with_capacity(sets.len());
    for (i, (_, items)) in sets.iter().enumerate() {
        let distinct: HashSet<&str> = items.iter().map(AsRef::as_ref).collect();
        set_sizes.push(distinct.len());
        for item in distinct {
            *membership.entry(item).or_default() |= 1 << i;
        }
    }
    let mut by_mask: BTreeMap<u32, usize> = BTreeMap::new();
    for mask in membership.values() {
        *by_mask.entry(*mask).or_default() += 1;
    }
    let names: Vec<String> = sets.iter().map(|(n, _)| n.clone()).collect();
    let regions = by_mask
        .into_iter()
        .map(|(mask, size)| OverlapRegion {
            mask,
            members: (0..names.len())
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| names[i].clone())
                .collect(),
            size,
        })
        .collect();
    Ok(OverlapReport {
        names,
        set_sizes,
        union: membership.len(),
        regions,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prevalence {
    /// Fraction of passwords equal to some term.
    pub full: f64,
    /// Fraction of passwords containing some term.
    pub substring: f64,
    /// Passwords containing each term, descending, ties by term.
    pub top: Vec<(String, usize)>,
}

impl Prevalence {
    pub const CSV_HEADER: &'static str = "metric,value";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\nfull,{}\nsubstring,{}\n", Self::CSV_HEADER, self.full, self.substring);
        for (term, count) in &self.top {
            let _ = writeln!(out, "term:{},{}", term.replace([',', '\n'], "_"), count);
        }
        out
    }
}

/// Case-sensitive term prevalence. `top_m` bounds the term list.
pub fn prevalence<T: AsRef<str>, P: AsRef<str>>(terms: &[T], corpus: &[P], top_m: usize) -> Result<Prevalence> {
    let mut unique: Vec<&str> = terms.iter().map(AsRef::as_ref).filter(|t| !t.is_empty()).collect();
    unique.sort_unstable();
    unique.dedup();
    if unique.is_empty() {
        return Err(Error::domain("no terms"));
    }
    let ac = AhoCorasick::new(&unique).map_err(|e| Error::domain(format!("term automaton: {e}")))?;
    let exact: HashSet<&str> = unique.iter().copied().collect();
    let mut hits = vec![0usize; unique.len()];
    let (mut full, mut sub) = (0usize, 0usize);
    let mut seen = Vec::new();
    for pwd in corpus {
        let pwd = pwd.as_ref();
        if exact.contains(pwd) {
            full += 1;
        }
        seen.clear();
        seen.extend(ac.find_overlapping_iter(pwd).map(|m| m.pattern().as_usize()));
        seen.sort_unstable();
        seen.dedup();
        if !seen.is_empty() {
            sub += 1;
        }
        for &id in &seen {
            hits[id] += 1;
        }
    }
    let n = corpus.len().max(1) as f64;
    let mut top: Vec<(String, usize)> = unique.iter().map(|t| t.to_string()).zip(hits).collect();
    top.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    top.truncate(top_m);
    Ok(Prevalence {
        full: full as f64 / n,
        substring: sub as f64 / n,
        top,
    })
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Weighted Pearson correlation of two equal-length vectors.
pub fn weighted_pearson(x: &[f64], y: &[f64], w: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() != w.len() {
        return Err(Error::domain("length mismatch"));
    }
    if x.len() < 2 {
        return Err(Error::domain("need at least two items"));
    }
    if w.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(Error::domain("weights must be positive"));
    }
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mut cov, mut vx, mut vy) = (0.0, 0.0, 0.0);
    for ((&a, &b), &wi) in x.iter().zip(y).zip(w) {
        cov += wi * (a - mx) * (b - my);
        vx += wi * (a - mx) * (a - mx);
        vy += wi * (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::domain("constant ranking has no correlation"));
    }
    Ok((cov / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

/// Weighted Pearson correlation of the average ranks of `a` and `b`.
pub fn weighted_spearman(a: &[f64], b: &[f64], weights: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() != weights.len() {
        return Err(Error::domain("length mismatch"));
    }
    weighted_pearson(&average_ranks(a), &average_ranks(b), weights)
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub model_bytes: usize,
    pub store_bytes: usize,
    pub store_entries: usize,
    pub train_runs: usize,
    pub train_secs_min: f64,
    pub train_secs_median: f64,
    pub guesses: u64,
    pub guesses_per_sec: f64,
    pub threads: usize,
    pub os: &'static str,
    pub arch: &'static str,
}

impl BenchReport {
    pub const CSV_HEADER: &'static str =
        "model_bytes,store_bytes,store_entries,train_runs,train_secs_min,train_secs_median,guesses,guesses_per_sec,threads,os,arch";

    pub fn to_csv(&self) -> String {
        format!(
            "{}\n{},{},{},{},{:.6},{:.6},{},{:.1},{},{},{}\n",
            Self::CSV_HEADER,
            self.model_bytes,
            self.store_bytes,
            self.store_entries,
            self.train_runs,
            self.train_secs_min,
            self.train_secs_median,
            self.guesses,
            self.guesses_per_sec,
            self.threads,
            self.os,
            self.arch
        )
    }
}

/// Trains `runs` times on `corpus`, then times `guesses` generations
/// against `store`. Sizes are serialized byte counts.
pub fn bench<S: AsRef<str> + Sync>(
    alphabet: &Alphabet,
    corpus: &[S],
    store: &KnowledgeStore,
    policy: FusionPolicy,
    runs: usize,
    guesses: usize,
    seed: u64,
) -> Result<BenchReport> {
    let runs = runs.max(1);
    let mut times: Vec<Duration> = Vec::with_capacity(runs);
    let mut model: Option<MarkovModel> = None;
    for _ in 0..runs {
        let t = Instant::now();
        let m = MarkovModel::train(alphabet, corpus)?;
        times.push(t.elapsed());
        model = Some(m);
    }
    let model = model.expect("at least one run");
    times.sort();
    let mut buf = Vec::new();
    model.write_to(&mut buf)?;
    let model_bytes = buf.len();
    buf.clear();
    store.write_to(&mut buf)?;
    let store_bytes = if store.is_empty() { 0 } else { buf.len() };
    let scorer = FusedModel::try_new(&model, store, policy)?;
    let generated = generate_stream(scorer, GuessConfig::default(), guesses, seed);
    Ok(BenchReport {
        model_bytes,
        store_bytes,
        store_entries: store.len(),
        train_runs: runs,
        train_secs_min: times[0].as_secs_f64(),
        train_secs_median: times[runs / 2].as_secs_f64(),
        guesses: generated.stats.guesses,
        guesses_per_sec: generated.stats.per_second(),
        threads: rayon::current_num_threads(),
        os: std::env::consts::OS,
        arch: std::env::consts::ARCH,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn curve_basics() {
        let g = [1.0, 5.0, 5.0, f64::INFINITY];
        let c = cracking_curve(&g, &[0.0, 1.0, 5.0, f64::INFINITY]).unwrap();
        let f: Vec<f64> = c.points.iter().map(|p| p.fraction).collect();
        assert_eq!(f, [0.0, 0.25, 0.75, 0.75]);
        assert!(cracking_curve(&[], &[1.0]).is_err());
        assert!(cracking_curve(&g, &[2.0, 1.0]).is_err());
        assert!(c.to_csv().starts_with("budget,fraction\n0,0\n"));
    }

    #[test]
    fn overlap_two_sets() {
        let r = overlap(&[("A".into(), vec!["p1", "p2"]), ("B".into(), vec!["p2", "p3"])]).unwrap();
        assert_eq!(r.union, 3);
        assert_eq!(r.region(0b11), 1);
        assert_eq!(r.region(0b01), 1);
        assert_eq!(r.region(0b10), 1);
        assert_eq!(r.intersection(0b11), 1);
        assert!(overlap(&[("A".to_string(), vec!["x"])]).is_err());
    }

    #[test]
    fn overlap_identical() {
        let r = overlap(&[("A".into(), vec!["x", "y"]), ("B".into(), vec!["y", "x"])]).unwrap();
        assert_eq!(r.regions.len(), 1);
        assert_eq!(r.region(0b11), 2);
    }

    #[test]
    fn prevalence_examples() {
        let p = prevalence(&["love"], &["love", "ilove123", "abc"], 5).unwrap();
        assert!((p.full - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.substring - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.top, [("love".to_string(), 2)]);

        let p = prevalence(&["zzz"], &["love", "abc"], 5).unwrap();
        assert_eq!((p.full, p.substring), (0.0, 0.0));
        assert_eq!(p.top[0].1, 0);

        let p = prevalence(&["same"], &["same", "same", "same"], 5).unwrap();
        assert_eq!((p.full, p.substring, p.top[0].1), (1.0, 1.0, 3));

        let p = prevalence(&["Love"], &["love"], 5).unwrap();
        assert_eq!(p.substring, 0.0);
    }

    #[test]
    fn overlapping_terms_count_once_per_password() {
        let p = prevalence(&["aa", "a"], &["aaa", "b"], 5).unwrap();
        assert_eq!(p.top, [("a".to_string(), 1), ("aa".to_string(), 1)]);
        assert_eq!(p.substring, 0.5);
    }

    #[test]
    fn average_ranks_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), [2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn spearman_extremes() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let rev = [5.0, 4.0, 3.0, 2.0, 1.0];
        let w = [1.0; 5];
        assert!((weighted_spearman(&a, &a, &w).unwrap() - 1.0).abs() < 1e-12);
        assert!((weighted_spearman(&a, &rev, &w).unwrap() + 1.0).abs() < 1e-12);
        assert!(weighted_spearman(&a, &rev[..4], &w).is_err());
    }

    proptest! {
        #[test]
        fn overlap_partitions_union(sets in prop::collection::vec(prop::collection::vec(0u16..200, 0..60), 2..7)) {
            let named: Vec<(String, Vec<String>)> = sets
                .iter()
                .enumerate()
                .map(|(i, s)| (format!("s{i}"), s.iter().map(|v| v.to_string()).collect()))
                .collect();
            let r = overlap(&named).unwrap();
            let union: HashSet<u16> = sets.iter().flatten().copied().collect();
            prop_assert_eq!(r.union, union.len());
            prop_assert_eq!(r.regions.iter().map(|x| x.size).sum::<usize>(), union.len());
        }

        #[test]
        fn spearman_monotone_invariant(
            xs in prop::collection::vec(-100.0f64..100.0, 3..20),
            seed in 0u64..1000,
        ) {
            let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| (x * 7.0 + (i as u64 ^ seed) as f64).sin()).collect();
            let w: Vec<f64> = (0..xs.len()).map(|i| 1.0 + (i % 3) as f64).collect();
            let base = weighted_spearman(&xs, &ys, &w);
            let tx: Vec<f64> = xs.iter().map(|x| x.exp() * 3.0).collect();
            match base {
                Ok(v) => prop_assert!((weighted_spearman(&tx, &ys, &w).unwrap() - v).abs() < 1e-12),
                Err(_) => prop_assert!(weighted_spearman(&tx, &ys, &w).is_err()),
            }
        }

        #[test]
        fn curve_monotone(g in prop::collection::vec(1.0f64..1e9, 1..50)) {
            let budgets: Vec<f64> = (0..10).map(|i| 10f64.powi(i)).collect();
            let c = cracking_curve(&g, &budgets).unwrap();
            prop_assert!(c.points.windows(2).all(|w| w[0].fraction <= w[1].fraction));
        }
    }
}
