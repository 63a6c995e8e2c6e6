//! A tabular autoregressive categorical policy.
//!
//! The next-token distribution is a softmax over one logit row per context,
//! where a context is the prompt index plus the previous `context_order`
//! tokens (padded with a beginning-of-sequence marker). It is small enough
//! that the GRPO gradient can be checked exhaustively against finite
//! differences.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new<I, S>(symbols: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.is_empty() {
            return Err(Error::domain("vocabulary is empty"));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::domain(format!("duplicate vocabulary symbol {s:?}")));
            }
        }
        Ok(Self { symbols, index })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: usize) -> &str {
        &self.symbols[id]
    }

    pub fn encode<S: AsRef<str>>(&self, symbols: &[S]) -> Result<Vec<usize>> {
        symbols
            .iter()
            .map(|s| {
                self.id(s.as_ref())
                    .ok_or_else(|| Error::domain(format!("token {:?} is not in the vocabulary", s.as_ref())))
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.symbols[i].clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ToyPolicy {
    pub params: Vec<f64>,
    vocab: Arc<Vocab>,
    context_order: usize,
    n_prompts: usize,
}

impl ToyPolicy {
    /// All-zero logits, i.e. the uniform distribution in every context.
    pub fn uniform(vocab: Arc<Vocab>, context_order: usize, n_prompts: usize) -> Result<Self> {
        if n_prompts == 0 {
            return Err(Error::domain("policy needs at least one prompt"));
        }
        let v = vocab.len();
        let n_contexts = (v + 1)
            .checked_pow(context_order as u32)
            .and_then(|c| c.checked_mul(n_prompts))
            .and_then(|c| c.checked_mul(v))
            .ok_or_else(|| Error::domain("context table too large"))?;
        Ok(Self { params: vec![0.0; n_contexts], vocab, context_order, n_prompts })
    }

    pub fn with_params(mut self, params: Vec<f64>) -> Result<Self> {
        if params.len() != self.params.len() {
            return Err(Error::domain(format!("expected {} params, got {}", self.params.len(), params.len())));
        }
        self.params = params;
        Ok(self)
    }

    pub fn vocab(&self) -> &Arc<Vocab> {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn context_order(&self) -> usize {
        self.context_order
    }

    pub fn n_prompts(&self) -> usize {
        self.n_prompts
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Same table shape (vocabulary size, order, prompt count).
    pub fn same_shape(&self, other: &ToyPolicy) -> bool {
        self.params.len() == other.params.len()
            && self.vocab_size() == other.vocab_size()
            && self.context_order == other.context_order
            && self.n_prompts == other.n_prompts
    }

    /// Row index of the context preceding position `t` of `tokens`.
    pub fn context_id(&self, prompt: usize, tokens: &[usize], t: usize) -> usize {
        let base = self.vocab_size() + 1;
        let bos = self.vocab_size();
        let mut id = prompt;
        for back in (1..=self.context_order).rev() {
            let tok = if t >= back { tokens[t - back] } else { bos };
            id = id * base + tok;
        }
        id
    }

    pub fn logits(&self, context: usize) -> &[f64] {
        let v = self.vocab_size();
        &self.params[context * v..(context + 1) * v]
    }

    pub fn logits_mut(&mut self, context: usize) -> &mut [f64] {
        let v = self.vocab_size();
        &mut self.params[context * v..(context + 1) * v]
    }

    /// Log-probabilities of the whole vocabulary in `context`.
    pub fn log_softmax(&self, context: usize, out: &mut Vec<f64>) {
        let z = self.logits(context);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        out.clear();
        out.extend(z.iter().map(|x| x - lse));
    }

    fn check(&self, prompt: usize, tokens: &[usize]) -> Result<()> {
        if prompt >= self.n_prompts {
            return Err(Error::domain(format!("prompt {prompt} outside 0..{}", self.n_prompts)));
        }
        if let Some(bad) = tokens.iter().find(|&&t| t >= self.vocab_size()) {
            return Err(Error::domain(format!("token id {bad} outside vocabulary of {}", self.vocab_size())));
        }
        Ok(())
    }

    /// Per-token log-probabilities of `tokens` given the prompt.
    pub fn log_prob(&self, prompt: usize, tokens: &[usize]) -> Result<Vec<f64>> {
        self.check(prompt, tokens)?;
        let mut row = Vec::with_capacity(self.vocab_size());
        Ok((0..tokens.len())
            .map(|t| {
                self.log_softmax(self.context_id(prompt, tokens, t), &mut row);
                row[tokens[t]]
            })
            .collect())
    }

    /// Same as [`ToyPolicy::log_prob`] over symbol strings.
    pub fn log_prob_symbols<S: AsRef<str>>(&self, prompt: usize, symbols: &[S]) -> Result<Vec<f64>> {
        let ids = self.vocab.encode(symbols)?;
        self.log_prob(prompt, &ids)
    }

    /// Samples until `stop` is emitted (inclusive) or `max_len` tokens.
    pub fn sample<R: Rng + ?Sized>(&self, prompt: usize, stop: Option<usize>, max_len: usize, rng: &mut R) -> Vec<usize> {
        let mut tokens = Vec::with_capacity(max_len);
        let mut row = Vec::with_capacity(self.vocab_size());
        while tokens.len() < max_len {
            self.log_softmax(self.context_id(prompt, &tokens, tokens.len()), &mut row);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = row.len() - 1;
            for (i, lp) in row.iter().enumerate() {
                acc += lp.exp();
                if u < acc {
                    pick = i;
                    break;
                }
            }
            tokens.push(pick);
            if Some(pick) == stop {
                break;
            }
        }
        tokens
    }
}
