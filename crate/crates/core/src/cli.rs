//! The `kapg` command line. Passwords to score are read from stdin or
//! files, never from arguments.
//!
//! Errors print one line, `error: kind=<kind> msg=<message>`, and exit 1;
//! usage errors exit 2.

use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::alphabet::Alphabet;
use crate::config::Config;
use crate::corpus::{clean_file, split, synthesize_corpus, CleanReport, SynthSpec};
use crate::dpg::{run_dpg, DpgRun, UpdatePolicy};
use crate::error::{Error, Result};
use crate::eval;
use crate::fusion::{FusedModel, FusionPolicy, LambdaMode};
use crate::guesser::{generate_parallel, generate_stream, GuessConfig};
use crate::knowledge::{read_terms_file, KnowledgeStore, DEFAULT_K};
use crate::markov::MarkovModel;
use crate::service::{self, ServiceState};
use crate::strength::{build_rank, evaluate_password, MonteCarloRank};

#[derive(Debug, Parser)]
#[command(name = "kapg", version, about = "Knowledge-augmented password guessing and strength metering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter a corpus to printable ASCII passwords of length 5..=20.
    Clean {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Seeded disjoint train/test split of a cleaned corpus.
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        train_size: usize,
        #[arg(long)]
        test_size: usize,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a synthetic corpus from a pattern spec file.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the backoff Markov model.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Characters of the alphabet; defaults to printable ASCII.
        #[arg(long)]
        alphabet: Option<String>,
    },
    /// Build a knowledge store from `term[<TAB>weight]` lines.
    BuildKb {
        #[arg(long)]
        terms: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long)]
        alphabet: Option<String>,
    },
    /// Sample guesses from the fused model.
    Generate {
        #[command(flatten)]
        scorer: ScorerArgs,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        lengths: LengthArgs,
        /// Independent sessions of this many guesses, run in parallel.
        #[arg(long)]
        parallel_block: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a Monte Carlo rank table.
    Rank {
        #[command(flatten)]
        scorer: ScorerArgs,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        lengths: LengthArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score passwords read one per line from stdin; prints JSON lines.
    Estimate {
        #[command(flatten)]
        scorer: ScorerArgs,
        #[arg(long)]
        rank: PathBuf,
        /// Only `-` (stdin) is accepted.
        #[arg(long, default_value = "-", value_parser = parse_stdin_marker)]
        password: String,
    },
    /// Dynamic guessing against a test set.
    Dpg {
        #[command(flatten)]
        scorer: ScorerArgs,
        #[arg(long)]
        test: PathBuf,
        /// Accepts scientific notation, e.g. 1e8.
        #[arg(long, value_parser = parse_count)]
        max_guesses: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run the static baseline.
        #[arg(long)]
        no_update: bool,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.8)]
        beta: f64,
        #[command(flatten)]
        lengths: LengthArgs,
    },
    /// Evaluation harness.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Run the HTTP strength meter.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Fraction of a test set within each guess budget (CSV: budget,fraction).
    Curve {
        #[command(flatten)]
        scorer: ScorerArgs,
        #[arg(long)]
        rank: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Comma-separated budgets; defaults to 10^0..10^14.
        #[arg(long, value_delimiter = ',', value_parser = parse_budget)]
        budgets: Vec<f64>,
    },
    /// Venn regions of cracked sets (CSV: region,size).
    Overlap {
        /// `name=path`, repeated at least twice.
        #[arg(long = "set", value_parser = parse_named_path, required = true)]
        sets: Vec<(String, PathBuf)>,
    },
    /// Term prevalence in a corpus (CSV: metric,value).
    Prevalence {
        #[arg(long)]
        terms: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Weighted rank correlation between meter and frequency orderings.
    PsmAcc {
        #[command(flatten)]
        scorer: ScorerArgs,
        #[arg(long)]
        rank: PathBuf,
        /// Test corpus with repeats; frequency is the multiplicity.
        #[arg(long)]
        test: PathBuf,
    },
    /// Model size, training time and generation rate (CSV).
    Bench {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        kb: Option<PathBuf>,
        #[arg(long)]
        alphabet: Option<String>,
        #[arg(long, default_value_t = 3)]
        runs: usize,
        #[arg(long, default_value_t = 100_000)]
        guesses: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        fusion: FusionArgs,
    },
}

#[derive(Debug, Args)]
pub struct FusionArgs {
    /// sum_raw_clipped or fixed.
    #[arg(long)]
    pub lambda_mode: Option<LambdaMode>,
    #[arg(long)]
    pub lambda_max: Option<f64>,
    #[arg(long)]
    pub fixed_lambda: Option<f64>,
    /// TOML config supplying fusion defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl FusionArgs {
    pub fn policy(&self) -> Result<FusionPolicy> {
        let mut p = match &self.config {
            Some(path) => Config::load(path)?.fusion,
            None => FusionPolicy::default(),
        };
        if let Some(m) = self.lambda_mode {
            p.lambda_mode = m;
            if m == LambdaMode::Fixed && self.lambda_max.is_none() {
                p.lambda_max = 1.0;
            }
        }
        if let Some(v) = self.lambda_max {
            p.lambda_max = v;
        }
        if let Some(v) = self.fixed_lambda {
            p.fixed_lambda = Some(v);
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Args)]
pub struct ScorerArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Knowledge store; without one the model runs alone.
    #[arg(long)]
    pub kb: Option<PathBuf>,
    /// Overrides the store's retrieval count.
    #[arg(long, visible_alias = "top-k")]
    pub k: Option<usize>,
    #[command(flatten)]
    pub fusion: FusionArgs,
}

impl ScorerArgs {
    fn load(&self) -> Result<(MarkovModel, KnowledgeStore, FusionPolicy)> {
        let model = MarkovModel::load(&self.model)?;
        let mut store = match &self.kb {
            Some(p) => KnowledgeStore::load(p)?,
            None => KnowledgeStore::empty(model.alphabet(), DEFAULT_K),
        };
        if let Some(k) = self.k {
            if k == 0 {
                return Err(Error::Config("k must be at least 1".into()));
            }
            store = store.with_k(k);
        }
        let policy = self.fusion.policy()?;
        FusedModel::try_new(&model, &store, policy)?;
        Ok((model, store, policy))
    }
}

#[derive(Debug, Args)]
pub struct LengthArgs {
    #[arg(long, default_value_t = 5)]
    pub min_len: usize,
    #[arg(long, default_value_t = 20)]
    pub max_len: usize,
}

impl LengthArgs {
    fn config(&self) -> Result<GuessConfig> {
        if self.min_len > self.max_len || self.max_len == 0 {
            return Err(Error::Config(format!("bad length range {}..={}", self.min_len, self.max_len)));
        }
        Ok(GuessConfig::with_lengths(self.min_len, self.max_len))
    }
}

fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(format!("not a non-negative integer: {s}"))
    }
}

fn parse_stdin_marker(s: &str) -> std::result::Result<String, String> {
    if s == "-" {
        Ok(s.to_string())
    } else {
        Err("passwords are read from stdin; pass `-`".into())
    }
}

fn parse_budget(s: &str) -> std::result::Result<f64, String> {
    match s.trim() {
        "inf" | "infinity" => Ok(f64::INFINITY),
        t => t.parse::<f64>().map_err(|_| format!("not a number: {t}")),
    }
}

fn parse_named_path(s: &str) -> std::result::Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or("expected name=path")?;
    if name.is_empty() || path.is_empty() {
        return Err("expected name=path".into());
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

fn alphabet_arg(chars: &Option<String>) -> Result<Alphabet> {
    match chars {
        Some(c) => Alphabet::new(c),
        None => Ok(Alphabet::printable()),
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_all(out: &mut dyn Write, text: &str, path: &Option<PathBuf>) -> Result<()> {
    let wrap = |e| match path {
        Some(p) => Error::io(p, e),
        None => Error::Stream(e),
    };
    out.write_all(text.as_bytes()).map_err(wrap)?;
    out.flush().map_err(wrap)
}

fn write_lines<S: AsRef<str>>(path: &Option<PathBuf>, lines: &[S]) -> Result<()> {
    let mut text = String::with_capacity(lines.len() * 12);
    for l in lines {
        text.push_str(l.as_ref());
        text.push('\n');
    }
    write_all(&mut *output(path)?, &text, path)
}

/// Raw lines of a file, LF-delimited, without cleaning.
fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .split(|&b| b == b'\n')
        .filter(|l| !l.is_empty())
        .map(|l| String::from_utf8_lossy(l).into_owned())
        .collect())
}

fn report_clean(report: &CleanReport) {
    eprintln!(
        "kept={} rejected_length={} rejected_charset={}",
        report.kept.len(),
        report.rejected_length,
        report.rejected_charset
    );
}

fn cleaned_for(alphabet: &Alphabet, path: &Path) -> Result<Vec<String>> {
    let report = clean_file(path)?;
    report_clean(&report);
    Ok(report
        .kept
        .into_iter()
        .map(|p| p.into_string())
        .filter(|p| alphabet.encode_str(p).is_ok())
        .collect())
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Clean { input, out } => {
            let report = clean_file(&input)?;
            report_clean(&report);
            write_lines(&out, &report.kept)
        }
        Command::Split {
            input,
            train_size,
            test_size,
            train_out,
            test_out,
            seed,
        } => {
            let report = clean_file(&input)?;
            let s = split(&report.kept, train_size, test_size, seed)?;
            write_lines(&Some(train_out), &s.train)?;
            write_lines(&Some(test_out), &s.test)
        }
        Command::Synth { spec, count, seed, out } => {
            let text = std::fs::read_to_string(&spec).map_err(|e| Error::io(&spec, e))?;
            let passwords = synthesize_corpus(&SynthSpec::parse(&text)?, count, seed)?;
            write_lines(&out, &passwords)
        }
        Command::Train { input, out, alphabet } => {
            let alphabet = alphabet_arg(&alphabet)?;
            let corpus = cleaned_for(&alphabet, &input)?;
            MarkovModel::train(&alphabet, &corpus)?.save(&out)
        }
        Command::BuildKb { terms, out, k, alphabet } => {
            if k == 0 {
                return Err(Error::Config("k must be at least 1".into()));
            }
            let alphabet = alphabet_arg(&alphabet)?;
            let report = read_terms_file(&terms, &alphabet)?;
            eprintln!("terms={} skipped={}", report.terms.len(), report.skipped);
            let store = KnowledgeStore::build(&alphabet, &report.terms, k)?;
            eprintln!("entries={}", store.len());
            store.save(&out)
        }
        Command::Generate {
            scorer,
            count,
            seed,
            lengths,
            parallel_block,
            out,
        } => {
            let (model, store, policy) = scorer.load()?;
            let fused = FusedModel::new(&model, &store, policy);
            let cfg = lengths.config()?;
            let generated = match parallel_block {
                Some(b) => generate_parallel(fused, cfg, count, seed, b),
                None => generate_stream(fused, cfg, count, seed),
            };
            write_lines(&out, &generated.guesses)?;
            eprintln!(
                "guesses={} per_second={:.0}",
                generated.stats.guesses,
                generated.stats.per_second()
            );
            Ok(())
        }
        Command::Rank {
            scorer,
            samples,
            seed,
            lengths,
            out,
        } => {
            let (model, store, policy) = scorer.load()?;
            let rank = build_rank(FusedModel::new(&model, &store, policy), lengths.config()?, samples, seed)?;
            rank.save(&out)
        }
        Command::Estimate { scorer, rank, .. } => {
            let (model, store, policy) = scorer.load()?;
            let rank = MonteCarloRank::load(&rank)?;
            let fused = FusedModel::new(&model, &store, policy);
            let stdout = io::stdout();
            let mut out = BufWriter::new(stdout.lock());
            for line in io::stdin().lock().lines() {
                let line = line?;
                let pwd = line.strip_suffix('\r').unwrap_or(&line);
                let json = match evaluate_password(&fused, &rank, pwd) {
                    Ok(r) => serde_json::json!({
                        "per_char_probs": r.per_char_probs,
                        "color_scalars": r.color_scalars,
                        "total_prob": r.total_prob,
                        "guess_number": r.guess_number.is_finite().then_some(r.guess_number),
                        "bucket": r.bucket,
                    }),
                    Err(e) => serde_json::json!({ "error": e.kind() }),
                };
                writeln!(out, "{json}")?;
            }
            out.flush()?;
            Ok(())
        }
        Command::Dpg {
            scorer,
            test,
            max_guesses,
            seed,
            no_update,
            alpha,
            beta,
            lengths,
        } => {
            let (model, store, policy) = scorer.load()?;
            let test_set = read_lines(&test)?;
            let run = DpgRun {
                policy,
                guess: lengths.config()?,
                update: (!no_update).then_some(UpdatePolicy { alpha, beta }),
                max_guesses,
                seed,
            };
            let report = run_dpg(&model, &store, &test_set, &run)?;
            let mut text = String::from("budget,cracked,fraction\n");
            for t in &report.tiers {
                text.push_str(&format!(
                    "{},{},{}\n",
                    t.budget,
                    t.cracked,
                    t.cracked as f64 / test_set.len().max(1) as f64
                ));
            }
            write_all(&mut *output(&None)?, &text, &None)?;
            eprintln!("updates={} epoch={}", report.updates, report.final_epoch);
            Ok(())
        }
        Command::Eval(cmd) => execute_eval(cmd),
        Command::Serve { config } => {
            let cfg = Config::load(&config)?;
            let state = Arc::new(ServiceState::from_config(&cfg)?);
            let _ = tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
                )
                .with_writer(io::stderr)
                .try_init();
            tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?
                .block_on(service::serve(state, &cfg.listen))
        }
    }
}

fn execute_eval(cmd: EvalCommand) -> Result<()> {
    let csv = match cmd {
        EvalCommand::Curve {
            scorer,
            rank,
            test,
            budgets,
        } => {
            let (model, store, policy) = scorer.load()?;
            let rank = MonteCarloRank::load(&rank)?;
            let test_set = read_lines(&test)?;
            let fused = FusedModel::new(&model, &store, policy);
            let budgets = if budgets.is_empty() {
                (0..=14).map(|e| 10f64.powi(e)).collect()
            } else {
                budgets
            };
            let guesses = eval::estimate_guess_numbers(&fused, &rank, &test_set);
            eval::cracking_curve(&guesses, &budgets)?.to_csv()
        }
        EvalCommand::Overlap { sets } => {
            let mut named = Vec::with_capacity(sets.len());
            for (name, path) in sets {
                named.push((name, read_lines(&path)?));
            }
            eval::overlap(&named)?.to_csv()
        }
        EvalCommand::Prevalence { terms, corpus, top } => {
            let terms = read_lines(&terms)?;
            let corpus = read_lines(&corpus)?;
            eval::prevalence(&terms, &corpus, top)?.to_csv()
        }
        EvalCommand::PsmAcc { scorer, rank, test } => {
            let (model, store, policy) = scorer.load()?;
            let rank = MonteCarloRank::load(&rank)?;
            let fused = FusedModel::new(&model, &store, policy);
            let mut counts = std::collections::BTreeMap::<String, usize>::new();
            for p in read_lines(&test)? {
                *counts.entry(p).or_default() += 1;
            }
            let (unique, freq): (Vec<String>, Vec<usize>) = counts.into_iter().unzip();
            let guesses = eval::estimate_guess_numbers(&fused, &rank, &unique);
            // Both orderings put the weakest (most frequent) first.
            let by_frequency: Vec<f64> = freq.iter().map(|&f| -(f as f64)).collect();
            let weights: Vec<f64> = freq.iter().map(|&f| f as f64).collect();
            let rho = eval::weighted_spearman(&guesses, &by_frequency, &weights)?;
            format!("metric,value\nweighted_spearman,{rho}\nunique,{}\n", unique.len())
        }
        EvalCommand::Bench {
            corpus,
            kb,
            alphabet,
            runs,
            guesses,
            seed,
            fusion,
        } => {
            let alphabet = alphabet_arg(&alphabet)?;
            let corpus = cleaned_for(&alphabet, &corpus)?;
            let store = match kb {
                Some(p) => KnowledgeStore::load(&p)?,
                None => KnowledgeStore::empty(&alphabet, DEFAULT_K),
            };
            eval::bench(&alphabet, &corpus, &store, fusion.policy()?, runs, guesses, seed)?.to_csv()
        }
    };
    write_all(&mut *output(&None)?, &csv, &None)
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error: kind={} msg={}", e.kind(), msg);
            1
        }
    }
}
