//! Corpus ingestion: cleaning, deterministic train/test splits and synthetic
//! corpora for desk-scale experiments.

use std::fmt;
use std::io::BufRead;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive password length bounds, in characters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthBounds {
    pub min: usize,
    pub max: usize,
}

impl Default for LengthBounds {
    fn default() -> Self {
        Self { min: 5, max: 20 }
    }
}

impl LengthBounds {
    pub fn contains(&self, len: usize) -> bool {
        (self.min..=self.max).contains(&len)
    }
}

/// Why a raw line was not accepted as a password.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rejection {
    Length,
    Charset,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::Length => f.write_str("length outside 5..=20"),
            Rejection::Charset => f.write_str("character outside printable ascii 32..=126"),
        }
    }
}

/// A cleaned password: 5 to 20 characters, each in printable ASCII.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Password(String);

impl Password {
    /// Validates `raw`. Length is checked before the character set.
    pub fn parse(raw: &str) -> Result<Self, Rejection> {
        if !LengthBounds::default().contains(raw.chars().count()) {
            return Err(Rejection::Length);
        }
        if !raw.chars().all(|c| (' '..='~').contains(&c)) {
            return Err(Rejection::Charset);
        }
        Ok(Password(raw.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl AsRef<str> for Password {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Password {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CleanReport {
    pub kept: Vec<Password>,
    pub rejected_length: usize,
    pub rejected_charset: usize,
}

impl CleanReport {
    pub fn rejected(&self) -> usize {
        self.rejected_length + self.rejected_charset
    }
}

/// Keeps valid lines in input order and multiplicity, counting rejects by
/// their first failing rule.
pub fn clean_corpus<I, S>(lines: I) -> CleanReport
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut report = CleanReport::default();
    for line in lines {
        match Password::parse(line.as_ref()) {
            Ok(p) => report.kept.push(p),
            Err(Rejection::Length) => report.rejected_length += 1,
            Err(Rejection::Charset) => report.rejected_charset += 1,
        }
    }
    report
}

/// Cleans an LF-delimited stream. Lines are taken verbatim apart from the
/// terminator; lines that are not UTF-8 count as charset rejects.
pub fn clean_reader<R: BufRead>(mut reader: R) -> Result<CleanReport> {
    let mut report = CleanReport::default();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        if buf.last() == Some(&b'\n') {
            buf.pop();
        }
        match std::str::from_utf8(&buf) {
            Ok(line) => match Password::parse(line) {
                Ok(p) => report.kept.push(p),
                Err(Rejection::Length) => report.rejected_length += 1,
                Err(Rejection::Charset) => report.rejected_charset += 1,
            },
            Err(_) => {
                // Undecodable bytes are outside 32..=126 whatever the length.
                let chars = String::from_utf8_lossy(&buf).chars().count();
                if LengthBounds::default().contains(chars) {
                    report.rejected_charset += 1;
                } else {
                    report.rejected_length += 1;
                }
            }
        }
    }
    Ok(report)
}

pub fn clean_file(path: &Path) -> Result<CleanReport> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    clean_reader(std::io::BufReader::new(file)).map_err(|e| match e {
        Error::Stream(source) => Error::io(path, source),
        other => other,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<Password>,
    pub test: Vec<Password>,
    /// Positions in the input corpus, parallel to `train` and `test`.
    pub train_index: Vec<usize>,
    pub test_index: Vec<usize>,
    pub seed: u64,
}

/// Samples disjoint train and test index sets without replacement.
pub fn split(
    passwords: &[Password],
    train_size: usize,
    test_size: usize,
    seed: u64,
) -> Result<CorpusSplit> {
    let wanted = train_size
        .checked_add(test_size)
        .ok_or_else(|| Error::Size("split sizes overflow".into()))?;
    if wanted > passwords.len() {
        return Err(Error::Size(format!(
            "train {train_size} + test {test_size} exceeds corpus size {}",
            passwords.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, passwords.len(), wanted).into_vec();
    let (train_index, test_index) = picked.split_at(train_size);
    Ok(CorpusSplit {
        train: train_index.iter().map(|&i| passwords[i].clone()).collect(),
        test: test_index.iter().map(|&i| passwords[i].clone()).collect(),
        train_index: train_index.to_vec(),
        test_index: test_index.to_vec(),
        seed,
    })
}

/// Generators available to [`synthesize_corpus`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Pattern {
    /// A vocabulary word followed by exactly `digits` digits.
    WordDigits { digits: usize },
    /// A vocabulary word of at least five characters.
    Word,
    /// A run of 5 or more adjacent keys along one keyboard row.
    KeyboardWalk,
    /// 6 to 12 characters drawn uniformly from lowercase letters and digits.
    Random,
}

impl Pattern {
    fn parse(name: &str) -> Result<Self> {
        match name {
            "word" => Ok(Pattern::Word),
            "keyboard" | "keyboard-walk" => Ok(Pattern::KeyboardWalk),
            "random" => Ok(Pattern::Random),
            _ => {
                let digits = name
                    .strip_prefix("word+")
                    .and_then(|rest| rest.strip_suffix("digits"))
                    .and_then(|n| n.parse::<usize>().ok())
                    .filter(|&n| (1..=8).contains(&n))
                    .ok_or_else(|| Error::Config(format!("unknown pattern {name:?}")))?;
                Ok(Pattern::WordDigits { digits })
            }
        }
    }
}

const DEFAULT_WORDS: &[&str] = &[
    "love", "monkey", "dragon", "sunshine", "princess", "shadow", "master", "football",
    "baseball", "soccer", "hunter", "ranger", "buster", "tigger", "charlie", "pepper",
    "ginger", "summer", "winter", "flower", "cookie", "angel", "jordan", "michael",
    "jessica", "daniel", "hello", "freedom", "whatever", "secret", "purple", "orange",
    "silver", "golden", "cheese", "banana", "chicken", "maggie", "snoopy", "matrix",
];

const KEYBOARD_ROWS: &[&str] = &["1234567890", "qwertyuiop", "asdfghjkl", "zxcvbnm"];

/// A weighted mix of pattern generators plus the vocabulary they draw from.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub patterns: Vec<(Pattern, f64)>,
    pub words: Vec<String>,
}

impl SynthSpec {
    pub fn new(patterns: Vec<(Pattern, f64)>) -> Self {
        Self {
            patterns,
            words: DEFAULT_WORDS.iter().map(|w| w.to_string()).collect(),
        }
    }

    pub fn with_words<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.words = words.into_iter().map(Into::into).collect();
        self
    }

    /// Parses the key/value format:
    ///
    /// ```text
    /// # comment
    /// word+2digits = 0.6
    /// keyboard     = 0.2
    /// random       = 0.2
    /// words        = love, dragon, sunshine
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut patterns = Vec::new();
        let mut words = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "words" {
                words = Some(
                    value
                        .split(',')
                        .map(|w| w.trim().to_string())
                        .filter(|w| !w.is_empty())
                        .collect::<Vec<_>>(),
                );
                continue;
            }
            let weight: f64 = value
                .parse()
                .map_err(|_| Error::Config(format!("line {}: bad weight {value:?}", n + 1)))?;
            patterns.push((Pattern::parse(key)?, weight));
        }
        let spec = SynthSpec::new(patterns);
        Ok(match words {
            Some(w) => spec.with_words(w),
            None => spec,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.patterns.is_empty() {
            return Err(Error::Config("empty pattern mix".into()));
        }
        if self.patterns.iter().any(|(_, w)| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("pattern weights must be non-negative".into()));
        }
        let sum: f64 = self.patterns.iter().map(|(_, w)| w).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("pattern weights sum to {sum}, not 1")));
        }
        let needs_words = self
            .patterns
            .iter()
            .any(|(p, w)| *w > 0.0 && matches!(p, Pattern::Word | Pattern::WordDigits { .. }));
        if needs_words {
            if self.words.is_empty() {
                return Err(Error::Config("word patterns need a non-empty vocabulary".into()));
            }
            if let Some(bad) = self
                .words
                .iter()
                .find(|w| {
                    w.is_empty()
                        || w.chars().count() > 12
                        || !w.chars().all(|c| (' '..='~').contains(&c))
                })
            {
                return Err(Error::Config(format!("unusable vocabulary word {bad:?}")));
            }
        }
        Ok(())
    }
}

/// Draws `n` passwords from the pattern mix; deterministic per seed.
pub fn synthesize_corpus(spec: &SynthSpec, n: usize, seed: u64) -> Result<Vec<Password>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let long_words: Vec<&String> = spec.words.iter().filter(|w| w.chars().count() >= 5).collect();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut u = rng.random::<f64>();
        let pattern = spec
            .patterns
            .iter()
            .find(|(_, w)| {
                let hit = u < *w;
                u -= w;
                hit
            })
            .map(|(p, _)| p)
            .unwrap_or(&spec.patterns.last().expect("validated non-empty").0);
        let candidate = match pattern {
            Pattern::WordDigits { digits } => {
                let word = spec.words.choose(&mut rng).expect("validated vocabulary");
                let mut s = word.clone();
                for _ in 0..*digits {
                    s.push(char::from(b'0' + rng.random_range(0..10u8)));
                }
                s
            }
            Pattern::Word => match long_words.choose(&mut rng) {
                Some(w) => (*w).clone(),
                // Short vocabularies get padded by repetition.
                None => {
                    let w = spec.words.choose(&mut rng).expect("validated vocabulary");
                    w.repeat(5usize.div_ceil(w.chars().count()))
                }
            },
            Pattern::KeyboardWalk => {
                let row = KEYBOARD_ROWS.choose(&mut rng).expect("non-empty rows").as_bytes();
                let len = rng.random_range(5..=row.len());
                let start = rng.random_range(0..=row.len() - len);
                String::from_utf8(row[start..start + len].to_vec()).expect("ascii row")
            }
            Pattern::Random => {
                const POOL: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
                let len = rng.random_range(6..=12);
                (0..len)
                    .map(|_| char::from(*POOL.choose(&mut rng).expect("non-empty pool")))
                    .collect()
            }
        };
        // Words longer than the cap with many digits can overflow 20 chars.
        if let Ok(p) = Password::parse(&candidate) {
            out.push(p);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn strs(ps: &[Password]) -> Vec<&str> {
        ps.iter().map(|p| p.as_str()).collect()
    }

    #[test]
    fn clean_examples() {
        let r = clean_corpus(["abc", "abcdef", "pass word!"]);
        assert_eq!(strs(&r.kept), ["abcdef", "pass word!"]);
        assert_eq!((r.rejected_length, r.rejected_charset), (1, 0));

        let r = clean_corpus(Vec::<String>::new());
        assert!(r.kept.is_empty());
        assert_eq!(r.rejected(), 0);

        let r = clean_corpus(["abcd€f"]);
        assert!(r.kept.is_empty());
        assert_eq!((r.rejected_length, r.rejected_charset), (0, 1));
    }

    #[test]
    fn length_checked_before_charset() {
        let r = clean_corpus(["a€", "€€€€€€€€€€€€€€€€€€€€€"]);
        assert_eq!(r.rejected_length, 2);
        assert_eq!(r.rejected_charset, 0);
    }

    #[test]
    fn reader_keeps_lines_verbatim() {
        let input = b"  spaced  \nwindows\r\nabcdef\n\xff\xfe\xfd\xfc\xfb\nlastline";
        let r = clean_reader(&input[..]).unwrap();
        assert_eq!(strs(&r.kept), ["  spaced  ", "abcdef", "lastline"]);
        assert_eq!(r.rejected_charset, 2);
    }

    #[test]
    fn duplicates_are_kept() {
        let r = clean_corpus(["123456", "123456", "123456"]);
        assert_eq!(r.kept.len(), 3);
    }

    #[test]
    fn split_examples() {
        let ps: Vec<Password> = (0..10)
            .map(|i| Password::parse(&format!("pass{i:02}")).unwrap())
            .collect();
        let s = split(&ps, 6, 4, 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (6, 4));
        assert!(s.train_index.iter().all(|i| !s.test_index.contains(i)));
        assert_eq!(split(&ps, 6, 4, 1).unwrap(), s);
        assert!(matches!(split(&ps, 8, 4, 1), Err(Error::Size(_))));
    }

    #[test]
    fn synth_word_digits() {
        let spec = SynthSpec::new(vec![(Pattern::WordDigits { digits: 2 }, 1.0)]);
        let out = synthesize_corpus(&spec, 3, 7).unwrap();
        assert_eq!(out.len(), 3);
        for p in &out {
            let s = p.as_str();
            let (word, digits) = s.split_at(s.len() - 2);
            assert!(!word.is_empty() && word.chars().all(|c| c.is_ascii_lowercase()), "{s}");
            assert!(digits.chars().all(|c| c.is_ascii_digit()), "{s}");
        }
        assert!(synthesize_corpus(&spec, 0, 7).unwrap().is_empty());
    }

    #[test]
    fn synth_config_errors() {
        let bad = SynthSpec::new(vec![(Pattern::Word, 0.5), (Pattern::Random, 0.4)]);
        assert!(matches!(synthesize_corpus(&bad, 3, 1), Err(Error::Config(_))));
        let empty = SynthSpec::new(vec![]);
        assert!(matches!(synthesize_corpus(&empty, 3, 1), Err(Error::Config(_))));
        assert!(SynthSpec::parse("bogus = 1").is_err());
    }

    #[test]
    fn synth_spec_parses() {
        let spec = SynthSpec::parse(
            "# mix\nword+2digits = 0.5\nkeyboard = 0.25 # walks\nrandom=0.25\nwords = neo, trinity\n",
        )
        .unwrap();
        assert_eq!(spec.patterns.len(), 3);
        assert_eq!(spec.patterns[0].0, Pattern::WordDigits { digits: 2 });
        assert_eq!(spec.words, ["neo", "trinity"]);
    }

    proptest! {
        #[test]
        fn cleaning_is_idempotent(lines in proptest::collection::vec(".{0,24}", 0..40)) {
            let once = clean_corpus(&lines);
            let twice = clean_corpus(once.kept.iter().map(|p| p.as_str()));
            prop_assert_eq!(&twice.kept, &once.kept);
            prop_assert_eq!(twice.rejected(), 0);
        }

        #[test]
        fn split_is_disjoint(seed in any::<u64>(), train in 0usize..20, test in 0usize..20) {
            let ps: Vec<Password> = (0..40).map(|i| Password::parse(&format!("pw{i:04}")).unwrap()).collect();
            let s = split(&ps, train, test, seed).unwrap();
            for i in &s.train_index {
                prop_assert!(!s.test_index.contains(i));
            }
        }

        #[test]
        fn synthesized_passwords_pass_cleaning(seed in any::<u64>(), n in 0usize..50) {
            let spec = SynthSpec::new(vec![
                (Pattern::WordDigits { digits: 3 }, 0.4),
                (Pattern::Word, 0.2),
                (Pattern::KeyboardWalk, 0.2),
                (Pattern::Random, 0.2),
            ]);
            let out = synthesize_corpus(&spec, n, seed).unwrap();
            prop_assert_eq!(out.len(), n);
            let cleaned = clean_corpus(out.iter().map(|p| p.as_str()));
            prop_assert_eq!(cleaned.kept, out);
        }
    }
}
