//! Monte Carlo guess-number estimation and password strength reports.
//!
//! The rank of a password with probability `p` is estimated from `n`
//! samples drawn from the generator:
//!
//! ```text
//! guess_number(p) = 1 + (1/n) · Σ_{i : p_i > p} 1 / q_i
//! ```
//!
//! where `p_i` is the model probability of sample `i` and `q_i` the
//! probability that the sampler emitted it. The two coincide except for the
//! length-bound adjustments the sampler makes; using `q_i` keeps the
//! estimator unbiased for the number of in-bounds passwords more probable
//! than `p`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusedModel;
use crate::guesser::{GuessConfig, Guesser};
use crate::persist;

pub const WEAK_BELOW: f64 = 1e7;
pub const STRONG_ABOVE: f64 = 1e14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSample {
    pub prob: f64,
    /// `1 / (n · q_i)`.
    pub weight: f64,
    /// Total weight of samples with strictly higher probability.
    pub above: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloRank {
    n: usize,
    seed: u64,
    samples: Vec<RankSample>,
    /// `tail[i]` = Σ weight over `samples[i..]`.
    tail: Vec<f64>,
}

impl MonteCarloRank {
    /// Builds the table from `(p_i, q_i)` pairs.
    pub fn from_samples(pairs: &[(f64, f64)], seed: u64) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::domain("a rank table needs at least one sample"));
        }
        if let Some(&(p, q)) = pairs
            .iter()
            .find(|(p, q)| !(p.is_finite() && *p >= 0.0 && q.is_finite() && *q > 0.0))
        {
            return Err(Error::domain(format!("invalid sample (p={p}, q={q})")));
        }
        let n = pairs.len() as f64;
        let mut samples: Vec<RankSample> = pairs
            .iter()
            .map(|&(prob, q)| RankSample {
                prob,
                weight: 1.0 / (n * q),
                above: 0.0,
            })
            .collect();
        samples.sort_by(|a, b| a.prob.total_cmp(&b.prob));
        Ok(Self::assemble(pairs.len(), seed, samples))
    }

    fn assemble(n: usize, seed: u64, mut samples: Vec<RankSample>) -> Self {
        let mut tail = vec![0.0; samples.len() + 1];
        for i in (0..samples.len()).rev() {
            tail[i] = tail[i + 1] + samples[i].weight;
        }
        let mut i = samples.len();
        while i > 0 {
            // Group equal probabilities; all share the weight strictly above.
            let hi = i;
            let p = samples[i - 1].prob;
            while i > 0 && samples[i - 1].prob == p {
                i -= 1;
            }
            for s in &mut samples[i..hi] {
                s.above = tail[hi];
            }
        }
        Self {
            n,
            seed,
            samples,
            tail,
        }
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Samples in ascending probability order.
    pub fn samples(&self) -> &[RankSample] {
        &self.samples
    }

    /// Estimated number of guesses before a password of probability `p`.
    pub fn guess_number(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::domain(format!("probability {p} outside (0, 1]")));
        }
        let idx = self.samples.partition_point(|s| s.prob <= p);
        Ok(1.0 + self.tail[idx])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        persist::save(path, persist::RANK_MAGIC, &RankFile::from(self))
    }

    pub fn load(path: &Path) -> Result<Self> {
        persist::load::<RankFile>(path, persist::RANK_MAGIC)?.try_into()
    }

    pub fn write_to<W: std::io::Write>(&self, w: W) -> Result<()> {
        persist::write_to(w, persist::RANK_MAGIC, &RankFile::from(self))
    }

    pub fn read_from<R: std::io::Read>(r: R) -> Result<Self> {
        persist::read_from::<_, RankFile>(r, persist::RANK_MAGIC)?.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct RankFile {
    n: usize,
    seed: u64,
    samples: Vec<RankSample>,
}

impl From<&MonteCarloRank> for RankFile {
    fn from(r: &MonteCarloRank) -> Self {
        RankFile {
            n: r.n,
            seed: r.seed,
            samples: r.samples.clone(),
        }
    }
}

impl TryFrom<RankFile> for MonteCarloRank {
    type Error = Error;

    fn try_from(f: RankFile) -> Result<Self> {
        if f.samples.len() != f.n || f.n == 0 {
            return Err(Error::Format("rank sample count does not match n".into()));
        }
        if f.samples.windows(2).any(|w| w[0].prob > w[1].prob) {
            return Err(Error::Format("rank samples are not sorted".into()));
        }
        Ok(MonteCarloRank::assemble(f.n, f.seed, f.samples))
    }
}

/// Draws `n` guesses and records each one's model and sampling probability.
pub fn build_rank(scorer: FusedModel<'_>, config: GuessConfig, n: usize, seed: u64) -> Result<MonteCarloRank> {
    if n == 0 {
        return Err(Error::domain("sample count must be at least 1"));
    }
    let mut guesser = Guesser::new(scorer, config);
    let mut session = guesser.session(seed);
    let pairs: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let g = guesser.next_scored(&mut session);
            (g.prob, g.sample_prob)
        })
        .collect();
    MonteCarloRank::from_samples(&pairs, seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Weak,
    Medium,
    Strong,
}

impl std::fmt::Display for Bucket {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Bucket::Weak => "weak",
            Bucket::Medium => "medium",
            Bucket::Strong => "strong",
        })
    }
}

/// Weak below 10^7 guesses, strong above 10^14, medium in between
/// (both boundaries inclusive).
pub fn bucket(guess_number: f64) -> Bucket {
    if guess_number < WEAK_BELOW {
        Bucket::Weak
    } else if guess_number <= STRONG_ABOVE {
        Bucket::Medium
    } else {
        Bucket::Strong
    }
}

/// Min-max scaling of per-character probabilities: 1 for the most probable
/// character, 0 for the least, 0.5 everywhere when they are all equal.
pub fn color_scalars(probs: &[f64]) -> Vec<f64> {
    let (lo, hi) = probs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    if probs.is_empty() {
        return Vec::new();
    }
    if hi <= lo {
        return vec![0.5; probs.len()];
    }
    probs.iter().map(|&p| (p - lo) / (hi - lo)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrengthReport {
    /// One fused probability per character, then the end step.
    pub per_char_probs: Vec<f64>,
    pub total_prob: f64,
    /// Infinite when the model gives the password zero probability.
    pub guess_number: f64,
    pub bucket: Bucket,
    /// One scalar per character (end step excluded).
    pub color_scalars: Vec<f64>,
}

pub fn evaluate_password(scorer: &FusedModel<'_>, rank: &MonteCarloRank, pwd: &str) -> Result<StrengthReport> {
    let trace = scorer.password_probability(pwd)?;
    let per_char_probs = trace.step_probs();
    let guess_number = if trace.total > 0.0 {
        rank.guess_number(trace.total)?
    } else {
        f64::INFINITY
    };
    let chars = &per_char_probs[..per_char_probs.len() - 1];
    Ok(StrengthReport {
        color_scalars: color_scalars(chars),
        total_prob: trace.total,
        guess_number,
        bucket: bucket(guess_number),
        per_char_probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Alphabet;
    use crate::fusion::FusionPolicy;
    use crate::knowledge::KnowledgeStore;
    use crate::markov::MarkovModel;

    #[test]
    fn bucket_thresholds() {
        assert_eq!(bucket(1e6), Bucket::Weak);
        assert_eq!(bucket(1e10), Bucket::Medium);
        assert_eq!(bucket(1e15), Bucket::Strong);
        assert_eq!(bucket(1e7), Bucket::Medium);
        assert_eq!(bucket(1e14), Bucket::Medium);
        assert_eq!(bucket(9_999_999.0), Bucket::Weak);
        assert_eq!(bucket(f64::INFINITY), Bucket::Strong);
    }

    #[test]
    fn color_endpoints_and_linearity() {
        let c = color_scalars(&[0.9, 0.1, 0.5, 0.3]);
        assert_eq!(c[0], 1.0);
        assert_eq!(c[1], 0.0);
        assert!((c[2] - 0.5).abs() < 1e-12);
        assert!((c[3] - 0.25).abs() < 1e-12);
        assert_eq!(color_scalars(&[0.2, 0.2]), [0.5, 0.5]);
        assert!(color_scalars(&[]).is_empty());
    }

    #[test]
    fn color_scale_invariant() {
        let probs = [0.3, 0.05, 0.12, 0.6];
        let scaled: Vec<f64> = probs.iter().map(|p| p * 0.125).collect();
        let (a, b) = (color_scalars(&probs), color_scalars(&scaled));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn guess_number_offsets_and_monotone() {
        let r = MonteCarloRank::from_samples(&[(0.5, 0.5), (0.25, 0.25), (0.25, 0.25), (0.1, 0.1)], 0).unwrap();
        // weights: 1/(4·q)
        assert_eq!(r.guess_number(0.9).unwrap(), 1.0);
        assert_eq!(r.guess_number(0.5).unwrap(), 1.0);
        assert!((r.guess_number(0.3).unwrap() - 1.5).abs() < 1e-12);
        assert!((r.guess_number(0.2).unwrap() - 3.5).abs() < 1e-12);
        assert!((r.guess_number(0.01).unwrap() - 6.0).abs() < 1e-12);
        assert!(r.guess_number(0.0).is_err());
        assert!(r.guess_number(1.5).is_err());
        let s = r.samples();
        assert_eq!(s[1].above, s[2].above);
        assert!((s[0].above - 2.5).abs() < 1e-12);
        assert!(MonteCarloRank::from_samples(&[], 0).is_err());
    }

    #[test]
    fn single_password_model_rank() {
        let a = Alphabet::printable();
        let m = MarkovModel::train(&a, &["abcde"]).unwrap();
        let s = KnowledgeStore::empty(&a, 10);
        let f = FusedModel::new(&m, &s, FusionPolicy::default());
        let r = build_rank(f, GuessConfig::default(), 1, 3).unwrap();
        assert_eq!(r.samples().len(), 1);
        assert_eq!(r.samples()[0].prob, 1.0);
        assert!(build_rank(f, GuessConfig::default(), 0, 3).is_err());
        let report = evaluate_password(&f, &r, "abcde").unwrap();
        assert_eq!(report.guess_number, 1.0);
        assert_eq!(report.bucket, Bucket::Weak);
        assert_eq!(report.per_char_probs.len(), 6);
        assert_eq!(report.color_scalars, [0.5; 5]);
        let zero = evaluate_password(&f, &r, "edcba").unwrap();
        assert_eq!(zero.total_prob, 0.0);
        assert_eq!(zero.bucket, Bucket::Strong);
    }

    #[test]
    fn rank_is_deterministic_and_round_trips() {
        let a = Alphabet::printable();
        let m = MarkovModel::train(&a, &["password", "pass1234", "iloveyou", "sunshine1"]).unwrap();
        let s = KnowledgeStore::empty(&a, 10);
        let f = FusedModel::new(&m, &s, FusionPolicy::default());
        let r1 = build_rank(f, GuessConfig::default(), 200, 11).unwrap();
        let r2 = build_rank(f, GuessConfig::default(), 200, 11).unwrap();
        assert_eq!(r1, r2);
        let mut buf = Vec::new();
        r1.write_to(&mut buf).unwrap();
        assert!(buf.starts_with(b"KAPG-R1\n"));
        assert_eq!(MonteCarloRank::read_from(&buf[..]).unwrap(), r1);
    }

    #[test]
    fn total_is_product_of_steps() {
        let a = Alphabet::printable();
        let m = MarkovModel::train(&a, &["password", "pass1234", "iloveyou"]).unwrap();
        let s = KnowledgeStore::build(&a, &[("passion".into(), 1.0)], 10).unwrap();
        let f = FusedModel::new(&m, &s, FusionPolicy::default());
        let r = build_rank(f, GuessConfig::default(), 100, 1).unwrap();
        let rep = evaluate_password(&f, &r, "passion1").unwrap();
        let product: f64 = rep.per_char_probs.iter().product();
        assert!((rep.total_prob - product).abs() <= 1e-9 * product);
        assert_eq!(rep.color_scalars.len(), 8);
    }
}
