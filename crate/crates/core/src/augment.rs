//! Pseudoword generation by random per-character edits.
//!
//! Every character of the source word independently draws one of four
//! operators. `Insert` keeps the character and appends a random symbol after
//! it, `Delete` drops it, `Replace` emits a random symbol in its place and
//! `Keep` copies it. Random symbols are uniform over the whole charset and
//! may coincide with the character they replace.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::charset::{Charset, Word};
use crate::error::{invalid, Result};
use crate::similarity::normalized_similarity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EditOp {
    Insert,
    Delete,
    Replace,
    Keep,
}

impl EditOp {
    pub const ALL: [EditOp; 4] = [EditOp::Insert, EditOp::Delete, EditOp::Replace, EditOp::Keep];
}

/// Relative weights of insert : delete : replace : keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditOperatorRatios {
    pub insert: f64,
    pub delete: f64,
    pub replace: f64,
    pub keep: f64,
}

impl Default for EditOperatorRatios {
    /// The 1:1:1:5 mix.
    fn default() -> Self {
        EditOperatorRatios {
            insert: 1.0,
            delete: 1.0,
            replace: 1.0,
            keep: 5.0,
        }
    }
}

impl EditOperatorRatios {
    pub fn new(insert: f64, delete: f64, replace: f64, keep: f64) -> Result<Self> {
        let r = EditOperatorRatios {
            insert,
            delete,
            replace,
            keep,
        };
        r.validate()?;
        Ok(r)
    }

    /// All-keep ratios, under which augmentation is the identity.
    pub fn identity() -> Self {
        EditOperatorRatios {
            insert: 0.0,
            delete: 0.0,
            replace: 0.0,
            keep: 1.0,
        }
    }

    pub fn weights(&self) -> [f64; 4] {
        [self.insert, self.delete, self.replace, self.keep]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.weights();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(invalid(format!("operator ratios must be finite and non-negative, got {w:?}")));
        }
        if w.iter().all(|x| *x == 0.0) {
            return Err(invalid("at least one operator ratio must be positive"));
        }
        Ok(())
    }

    /// Normalized probabilities, summing to one.
    pub fn probabilities(&self) -> Result<[f64; 4]> {
        self.validate()?;
        let w = self.weights();
        let total: f64 = w.iter().sum();
        Ok(w.map(|x| x / total))
    }

    /// Parses `"1:1:1:5"` (commas are accepted too).
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<f64> = text
            .split([':', ','])
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| invalid(format!("bad ratio list {text:?}: {e}")))?;
        match parts[..] {
            [i, d, r, k] => EditOperatorRatios::new(i, d, r, k),
            _ => Err(invalid(format!("expected four ratios, got {text:?}"))),
        }
    }
}

/// One operator per source character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorSequence(pub Vec<EditOp>);

impl OperatorSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Draws `n` i.i.d. operators from the normalized ratios.
pub fn sample_operators<R: Rng + ?Sized>(n: usize, ratios: &EditOperatorRatios, rng: &mut R) -> Result<OperatorSequence> {
    if n == 0 {
        return Err(invalid("operator sequence length must be at least 1"));
    }
    ratios.validate()?;
    let dist = WeightedIndex::new(ratios.weights()).map_err(|e| invalid(e.to_string()))?;
    Ok(OperatorSequence((0..n).map(|_| EditOp::ALL[dist.sample(rng)]).collect()))
}

/// Applies an operator sequence to `word`; the result may be empty.
pub fn apply_operators<R: Rng + ?Sized>(word: &Word, ops: &OperatorSequence, charset: &Charset, rng: &mut R) -> Vec<u32> {
    let l = charset.len() as u32;
    let mut out = Vec::with_capacity(word.len() * 2);
    for (&m, op) in word.symbols().iter().zip(&ops.0) {
        match op {
            EditOp::Insert => {
                out.push(m);
                out.push(rng.gen_range(0..l));
            }
            EditOp::Delete => {}
            EditOp::Replace => out.push(rng.gen_range(0..l)),
            EditOp::Keep => out.push(m),
        }
    }
    out
}

/// Redraws that produced an empty pseudoword before giving up and returning
/// the source word; only reachable when deletion is (nearly) certain.
const MAX_RESAMPLES: usize = 256;

/// Generates one pseudoword from `word`.
///
/// Empty results are redrawn. Outputs longer than `max_len` are truncated.
pub fn augment<R: Rng + ?Sized>(
    word: &Word,
    ratios: &EditOperatorRatios,
    charset: &Charset,
    max_len: usize,
    rng: &mut R,
) -> Result<Word> {
    if word.charset_id() != charset.id() {
        return Err(invalid(format!("word {word} does not belong to the given charset")));
    }
    for _ in 0..MAX_RESAMPLES {
        let ops = sample_operators(word.len(), ratios, rng)?;
        let mut out = apply_operators(word, &ops, charset, rng);
        if out.is_empty() {
            continue;
        }
        out.truncate(max_len.max(1));
        return charset.word_from_indices(out);
    }
    Ok(word.clone())
}

/// Returns the `N` originals followed by one pseudoword per original.
pub fn augment_query_set<R: Rng + ?Sized>(
    queries: &[Word],
    ratios: &EditOperatorRatios,
    charset: &Charset,
    max_len: usize,
    rng: &mut R,
) -> Result<Vec<Word>> {
    if queries.is_empty() {
        return Err(invalid("query set is empty"));
    }
    let mut out = queries.to_vec();
    for q in queries {
        out.push(augment(q, ratios, charset, max_len, rng)?);
    }
    Ok(out)
}

/// Histogram of normalized similarity over all unordered pairs of `words`.
///
/// Bin `b` covers `[b / bins, (b + 1) / bins)`; a similarity of exactly 1
/// lands in the top bin. Frequencies sum to one.
pub fn similarity_histogram(words: &[Word], bins: usize) -> Result<Vec<f64>> {
    if words.len() < 2 {
        return Err(invalid("a similarity histogram needs at least two words"));
    }
    if bins < 2 {
        return Err(invalid("a similarity histogram needs at least two bins"));
    }
    let mut counts = vec![0u64; bins];
    let mut total = 0u64;
    for i in 0..words.len() {
        for j in i + 1..words.len() {
            let s = normalized_similarity(&words[i], &words[j])?;
            let b = ((s * bins as f64).floor() as usize).min(bins - 1);
            counts[b] += 1;
            total += 1;
        }
    }
    Ok(counts.into_iter().map(|c| c as f64 / total as f64).collect())
}

/// Total frequency of the bins whose lower edge is at least `threshold`.
pub fn mass_at_or_above(histogram: &[f64], threshold: f64) -> f64 {
    let bins = histogram.len() as f64;
    histogram
        .iter()
        .enumerate()
        .filter(|(b, _)| *b as f64 / bins >= threshold - 1e-12)
        .map(|(_, f)| f)
        .sum()
}
