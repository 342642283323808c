//! Gate computation and the convex mix of internal and external
//! distributions.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alphabet::{Symbol, Window};
use crate::error::{Error, Result};
use crate::knowledge::{KnowledgeStore, RetrievalResult};
use crate::markov::MarkovModel;

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// λ = min(λ_max, Σ raw similarity / k).
    #[default]
    SumRawClipped,
    /// λ = the configured constant (still 0 when nothing is retrieved).
    Fixed,
}

impl FromStr for LambdaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum_raw_clipped" | "sum-raw-clipped" => Ok(LambdaMode::SumRawClipped),
            "fixed" => Ok(LambdaMode::Fixed),
            _ => Err(Error::Config(format!("unknown lambda mode {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionPolicy {
    pub lambda_mode: LambdaMode,
    pub lambda_max: f64,
    pub fixed_lambda: Option<f64>,
}

impl Default for FusionPolicy {
    fn default() -> Self {
        Self {
            lambda_mode: LambdaMode::SumRawClipped,
            lambda_max: 0.95,
            fixed_lambda: None,
        }
    }
}

impl FusionPolicy {
    pub fn fixed(lambda: f64) -> Self {
        Self {
            lambda_mode: LambdaMode::Fixed,
            lambda_max: 1.0,
            fixed_lambda: Some(lambda),
        }
    }

    /// Pure Markov scoring: λ is always 0.
    pub fn internal_only() -> Self {
        Self::fixed(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda_max) {
            return Err(Error::Config(format!("lambda_max {} outside [0, 1]", self.lambda_max)));
        }
        match (self.lambda_mode, self.fixed_lambda) {
            (LambdaMode::Fixed, None) => Err(Error::Config("fixed lambda mode needs fixed_lambda".into())),
            (_, Some(l)) if !(0.0..=1.0).contains(&l) => {
                Err(Error::Config(format!("fixed_lambda {l} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

/// The mixing weight for one step. Always 0 for an empty retrieval and
/// never above `lambda_max`.
pub fn gate_lambda(policy: &FusionPolicy, retrieval: &RetrievalResult, k: usize) -> f64 {
    if retrieval.is_empty() {
        return 0.0;
    }
    let raw = match policy.lambda_mode {
        LambdaMode::SumRawClipped => retrieval.similarity_sum() / k.max(1) as f64,
        LambdaMode::Fixed => policy.fixed_lambda.unwrap_or(0.0),
    };
    raw.clamp(0.0, policy.lambda_max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusedDistribution {
    pub row: Vec<f64>,
    pub lambda_used: f64,
    /// Markov order the internal row came from; 0 for the uniform fallback.
    pub backoff_order_used: usize,
}

fn check_row(row: &[f64], name: &str) -> Result<()> {
    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::domain(format!("{name} has a negative or non-finite entry")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::domain(format!("{name} sums to {sum}")));
    }
    Ok(())
}

/// `(1 − λ)·p_int + λ·p_ext`, elementwise.
pub fn fuse(p_int: &[f64], p_ext: &[f64], lambda: f64) -> Result<FusedDistribution> {
    if p_int.len() != p_ext.len() {
        return Err(Error::domain(format!(
            "row widths differ: {} vs {}",
            p_int.len(),
            p_ext.len()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::domain(format!("lambda {lambda} outside [0, 1]")));
    }
    check_row(p_int, "internal row")?;
    check_row(p_ext, "external row")?;
    let mut row = vec![0.0; p_int.len()];
    mix_into(p_int, p_ext, lambda, &mut row);
    Ok(FusedDistribution {
        row,
        lambda_used: lambda,
        backoff_order_used: 0,
    })
}

#[inline]
fn mix_into(p_int: &[f64], p_ext: &[f64], lambda: f64, out: &mut [f64]) {
    let keep = 1.0 - lambda;
    for ((o, &a), &b) in out.iter_mut().zip(p_int).zip(p_ext) {
        *o = keep * a + lambda * b;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub lambda: f64,
    pub order: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepScore {
    pub symbol: Symbol,
    pub prob: f64,
    pub lambda: f64,
    pub order: usize,
}

/// Per-step fused probabilities of one password, end step included.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityTrace {
    pub total: f64,
    pub steps: Vec<StepScore>,
}

impl ProbabilityTrace {
    pub fn step_probs(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.prob).collect()
    }
}

/// A Markov model, a knowledge store and a policy, read together as one
/// next-symbol distribution per window.
#[derive(Clone, Copy, Debug)]
pub struct FusedModel<'a> {
    model: &'a MarkovModel,
    store: &'a KnowledgeStore,
    policy: FusionPolicy,
}

impl<'a> FusedModel<'a> {
    /// # Panics
    ///
    /// If the model and store were built over different alphabets.
    pub fn new(model: &'a MarkovModel, store: &'a KnowledgeStore, policy: FusionPolicy) -> Self {
        Self::try_new(model, store, policy).expect("model and store alphabets differ")
    }

    pub fn try_new(model: &'a MarkovModel, store: &'a KnowledgeStore, policy: FusionPolicy) -> Result<Self> {
        if model.alphabet() != store.alphabet() {
            return Err(Error::Config("model and knowledge store use different alphabets".into()));
        }
        Ok(Self { model, store, policy })
    }

    pub fn model(&self) -> &'a MarkovModel {
        self.model
    }

    pub fn store(&self) -> &'a KnowledgeStore {
        self.store
    }

    pub fn policy(&self) -> &FusionPolicy {
        &self.policy
    }

    pub fn row_width(&self) -> usize {
        self.model.alphabet().row_width()
    }

    /// Query for the store: the password characters at the end of the
    /// window, at most `max_len` of them.
    fn query<'w>(&self, window: &'w Window) -> &'w [Symbol] {
        let symbols = window.symbols();
        let alphabet = self.model.alphabet();
        let first = symbols
            .iter()
            .position(|&s| alphabet.is_password_symbol(s))
            .unwrap_or(symbols.len());
        let tail = &symbols[first..];
        &tail[tail.len().saturating_sub(self.store.max_len())..]
    }

    /// The retrieval used at `window`. A window with no password characters
    /// yet carries no query, so it retrieves nothing.
    pub fn retrieval(&self, window: &Window) -> RetrievalResult {
        let query = self.query(window);
        if query.is_empty() || self.store.is_empty() {
            return RetrievalResult::default();
        }
        self.store.retrieve_unchecked(query)
    }

    /// Fused row for `window` written into `out`.
    pub fn step_into(&self, window: &Window, out: &mut [f64]) -> StepInfo {
        let order = self.model.internal_into(window.symbols(), out);
        let lambda = if self.policy.lambda_mode == LambdaMode::Fixed
            && self.policy.fixed_lambda.unwrap_or(0.0) == 0.0
        {
            0.0
        } else {
            let retrieval = self.retrieval(window);
            let lambda = gate_lambda(&self.policy, &retrieval, self.store.k());
            if lambda > 0.0 {
                let mut ext = vec![0.0; out.len()];
                match self.store.external_into(&retrieval, &mut ext) {
                    Some(_) => {
                        let int = out.to_vec();
                        mix_into(&int, &ext, lambda, out);
                        lambda
                    }
                    None => 0.0,
                }
            } else {
                0.0
            }
        };
        StepInfo { lambda, order }
    }

    pub fn step(&self, window: &Window) -> FusedDistribution {
        let mut row = vec![0.0; self.row_width()];
        let info = self.step_into(window, &mut row);
        FusedDistribution {
            row,
            lambda_used: info.lambda,
            backoff_order_used: info.order,
        }
    }

    /// Walks `pwd` from the start window, multiplying the fused probability
    /// of each character and finally of the end symbol.
    pub fn password_probability(&self, pwd: &str) -> Result<ProbabilityTrace> {
        let alphabet = self.model.alphabet();
        let symbols = alphabet.encode_str(pwd)?;
        let mut window = Window::start(alphabet);
        let mut row = vec![0.0; self.row_width()];
        let mut steps = Vec::with_capacity(symbols.len() + 1);
        let mut total = 1.0;
        for s in symbols.into_iter().chain(std::iter::once(alphabet.end())) {
            let info = self.step_into(&window, &mut row);
            let prob = row[s as usize];
            total *= prob;
            steps.push(StepScore {
                symbol: s,
                prob,
                lambda: info.lambda,
                order: info.order,
            });
            window.push(s);
        }
        Ok(ProbabilityTrace { total, steps })
    }
}
