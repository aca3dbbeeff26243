//! Word-to-word supervision targets and feature-to-feature predictions.
//!
//! Targets are `1 - lev(a, b) / max(|a|, |b|)` and live in `[0, 1]`.
//! Predictions are cosines between `tanh`-squashed, flattened `(T, C)`
//! sequence features and live in `[-1, 1]`.

use crate::charset::Word;
use crate::error::{invalid, Error, Result};

/// Unit-cost edit distance between two symbol sequences.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Levenshtein distance between two words of the same charset.
pub fn levenshtein(a: &Word, b: &Word) -> Result<usize> {
    a.check_same_charset(b)?;
    Ok(edit_distance(a.symbols(), b.symbols()))
}

/// `1 - levenshtein(a, b) / max(|a|, |b|)`.
pub fn normalized_similarity(a: &Word, b: &Word) -> Result<f64> {
    let d = levenshtein(a, b)?;
    let longest = a.len().max(b.len());
    Ok(1.0 - d as f64 / longest as f64)
}

/// A labelled dense matrix of scores, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    row_labels: Vec<String>,
    col_labels: Vec<String>,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(row_labels: Vec<String>, col_labels: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() != row_labels.len() * col_labels.len() {
            return Err(invalid(format!(
                "{} values cannot fill a {}x{} matrix",
                values.len(),
                row_labels.len(),
                col_labels.len()
            )));
        }
        Ok(SimilarityMatrix {
            row_labels,
            col_labels,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.row_labels.len()
    }

    pub fn cols(&self) -> usize {
        self.col_labels.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Pairwise normalized similarities, `values[i][j] = s(rows[i], cols[j])`.
pub fn target_matrix(rows: &[Word], cols: &[Word]) -> Result<SimilarityMatrix> {
    if rows.is_empty() || cols.is_empty() {
        return Err(invalid("target matrix needs at least one row and one column"));
    }
    let mut values = Vec::with_capacity(rows.len() * cols.len());
    for r in rows {
        for c in cols {
            values.push(normalized_similarity(r, c)?);
        }
    }
    SimilarityMatrix::new(
        rows.iter().map(|w| w.as_str().to_owned()).collect(),
        cols.iter().map(|w| w.as_str().to_owned()).collect(),
        values,
    )
}

/// A stack of `count` sequence features, each `steps x channels`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFeature {
    count: usize,
    steps: usize,
    channels: usize,
    values: Vec<f64>,
}

impl SequenceFeature {
    pub fn new(count: usize, steps: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if steps == 0 || channels == 0 {
            return Err(invalid("sequence features need T >= 1 and C >= 1"));
        }
        if values.len() != count * steps * channels {
            return Err(invalid(format!(
                "{} values do not match shape ({count}, {steps}, {channels})",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("sequence features must be finite"));
        }
        Ok(SequenceFeature {
            count,
            steps,
            channels,
            values,
        })
    }

    pub fn empty(steps: usize, channels: usize) -> Result<Self> {
        SequenceFeature::new(0, steps, channels, Vec::new())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Length of one flattened feature, `T * C`.
    pub fn dim(&self) -> usize {
        self.steps * self.channels
    }

    /// The `i`-th feature flattened step-major, i.e. `V(X_i)`.
    pub fn flat(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Keeps the listed features, in the given order.
    pub fn select(&self, indices: &[usize]) -> SequenceFeature {
        let mut values = Vec::with_capacity(indices.len() * self.dim());
        for &i in indices {
            values.extend_from_slice(self.flat(i));
        }
        SequenceFeature {
            count: indices.len(),
            steps: self.steps,
            channels: self.channels,
            values,
        }
    }

    /// Appends the features of `other`; shapes must agree.
    pub fn extend(&mut self, other: &SequenceFeature) -> Result<()> {
        if other.steps != self.steps || other.channels != self.channels {
            return Err(invalid("cannot concatenate features of different (T, C)"));
        }
        self.values.extend_from_slice(&other.values);
        self.count += other.count;
        Ok(())
    }
}

/// Plain cosine similarity. Zero-norm inputs are rejected.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(invalid(format!("cosine of vectors of length {} and {}", a.len(), b.len())));
    }
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("cosine of a zero-norm vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Unit-normalized `tanh` of every flattened feature.
fn squashed_units(x: &SequenceFeature) -> Result<Vec<Vec<f64>>> {
    (0..x.count())
        .map(|i| {
            let t: Vec<f64> = x.flat(i).iter().map(|v| v.tanh()).collect();
            let n = norm(&t);
            if n == 0.0 {
                return Err(Error::Degenerate(format!("feature {i} is all zeros after tanh")));
            }
            Ok(t.into_iter().map(|v| v / n).collect())
        })
        .collect()
}

/// `values[i][j] = cos(tanh(V(f_i)), tanh(V(e_j)))`.
pub fn cosine_matrix(f: &SequenceFeature, e: &SequenceFeature) -> Result<SimilarityMatrix> {
    if f.steps() != e.steps() || f.channels() != e.channels() {
        return Err(invalid(format!(
            "feature shapes (T={}, C={}) and (T={}, C={}) differ",
            f.steps(),
            f.channels(),
            e.steps(),
            e.channels()
        )));
    }
    let fu = squashed_units(f)?;
    let eu = squashed_units(e)?;
    let mut values = Vec::with_capacity(fu.len() * eu.len());
    for a in &fu {
        for b in &eu {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            values.push(dot.clamp(-1.0, 1.0));
        }
    }
    SimilarityMatrix::new(
        (0..fu.len()).map(|i| i.to_string()).collect(),
        (0..eu.len()).map(|i| i.to_string()).collect(),
        values,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charset::Charset;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    /// Top-down memoized recursion over suffixes; shares no code with the
    /// rolling-row implementation.
    fn oracle_distance(a: &[u32], b: &[u32]) -> usize {
        fn go(a: &[u32], b: &[u32], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
            if i == a.len() {
                return b.len() - j;
            }
            if j == b.len() {
                return a.len() - i;
            }
            if let Some(&v) = memo.get(&(i, j)) {
                return v;
            }
            let v = if a[i] == b[j] {
                go(a, b, i + 1, j + 1, memo)
            } else {
                1 + go(a, b, i + 1, j, memo)
                    .min(go(a, b, i, j + 1, memo))
                    .min(go(a, b, i + 1, j + 1, memo))
            };
            memo.insert((i, j), v);
            v
        }
        go(a, b, 0, 0, &mut HashMap::new())
    }

    fn w(cs: &Charset, s: &str) -> Word {
        cs.encode(s).unwrap()
    }

    #[test]
    fn worked_examples() {
        let cs = Charset::latin36();
        assert_eq!(levenshtein(&w(&cs, "google"), &w(&cs, "google")).unwrap(), 0);
        assert_eq!(levenshtein(&w(&cs, "true"), &w(&cs, "cute")).unwrap(), 3);
        assert_eq!(levenshtein(&w(&cs, "ab"), &w(&cs, "xy")).unwrap(), 2);
        assert_eq!(oracle_distance(w(&cs, "true").symbols(), w(&cs, "cute").symbols()), 3);

        assert_eq!(normalized_similarity(&w(&cs, "google"), &w(&cs, "google")).unwrap(), 1.0);
        assert_eq!(normalized_similarity(&w(&cs, "true"), &w(&cs, "cute")).unwrap(), 0.25);
        assert_eq!(normalized_similarity(&w(&cs, "ab"), &w(&cs, "xy")).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_charsets_are_rejected() {
        let a = Charset::latin36();
        let b = Charset::new("ab".chars()).unwrap();
        assert!(matches!(
            levenshtein(&w(&a, "ab"), &w(&b, "ab")),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn random_pairs_match_oracle() {
        let cs = Charset::latin36();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let la = rng.gen_range(1..12);
            let lb = rng.gen_range(1..12);
            // small alphabet slice so that pairs actually share symbols
            let a: Vec<u32> = (0..la).map(|_| rng.gen_range(0..6)).collect();
            let b: Vec<u32> = (0..lb).map(|_| rng.gen_range(0..36)).collect();
            let wa = cs.word_from_indices(a.clone()).unwrap();
            let wb = cs.word_from_indices(b.clone()).unwrap();
            assert_eq!(levenshtein(&wa, &wb).unwrap(), oracle_distance(&a, &b));
        }
    }

    #[test]
    fn target_matrix_examples() {
        let cs = Charset::latin36();
        let aa = vec![w(&cs, "a"), w(&cs, "a")];
        assert_eq!(target_matrix(&aa, &aa).unwrap().values(), &[1.0, 1.0, 1.0, 1.0]);
        let t = target_matrix(&[w(&cs, "true")], &[w(&cs, "cute")]).unwrap();
        assert_eq!(t.values(), &[0.25]);
        let ab = vec![w(&cs, "ab"), w(&cs, "abc")];
        let t = target_matrix(&ab, &ab).unwrap();
        assert_eq!(t.get(0, 0), 1.0);
        assert_eq!(t.get(1, 1), 1.0);
        assert!((t.get(0, 1) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(t.get(0, 1), t.get(1, 0));
        assert!(target_matrix(&[], &ab).is_err());
        assert!(target_matrix(&ab, &[]).is_err());
    }

    #[test]
    fn cosine_examples() {
        let f = SequenceFeature::new(1, 2, 1, vec![0.5, 0.5]).unwrap();
        let e = SequenceFeature::new(1, 2, 1, vec![0.5, -0.5]).unwrap();
        let m = cosine_matrix(&f, &e).unwrap();
        assert!(m.get(0, 0).abs() < 1e-15);
        assert!((cosine_matrix(&f, &f).unwrap().get(0, 0) - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn cosine_errors() {
        let f = SequenceFeature::new(1, 2, 1, vec![0.5, 0.5]).unwrap();
        let g = SequenceFeature::new(1, 1, 2, vec![0.5, 0.5]).unwrap();
        assert!(matches!(cosine_matrix(&f, &g), Err(Error::InvalidInput(_))));
        let z = SequenceFeature::new(1, 2, 1, vec![0.0, 0.0]).unwrap();
        assert!(matches!(cosine_matrix(&f, &z), Err(Error::Degenerate(_))));
        assert!(matches!(cosine(&[0.0], &[1.0]), Err(Error::Degenerate(_))));
        assert!(SequenceFeature::new(1, 1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn cosine_kernel_ignores_positive_scale() {
        let v = [0.3, -0.2, 0.9, 0.05];
        let u = [-0.1, 0.4, 0.2, 0.7];
        let base = cosine(&v, &u).unwrap();
        for alpha in [1e-3, 0.5, 2.0, 1e4] {
            let scaled: Vec<f64> = v.iter().map(|x| x * alpha).collect();
            assert!((cosine(&scaled, &u).unwrap() - base).abs() < 1e-12);
        }
    }

    fn word_strategy() -> impl Strategy<Value = Vec<u32>> {
        prop::collection::vec(0u32..5, 1..10)
    }

    proptest! {
        #[test]
        fn similarity_is_bounded_symmetric_and_exact_on_identity(a in word_strategy(), b in word_strategy()) {
            let cs = Charset::latin36();
            let wa = cs.word_from_indices(a).unwrap();
            let wb = cs.word_from_indices(b).unwrap();
            let s = normalized_similarity(&wa, &wb).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s, normalized_similarity(&wb, &wa).unwrap());
            prop_assert_eq!(s == 1.0, wa == wb);
        }

        #[test]
        fn self_target_matrix_is_symmetric_with_unit_diagonal(ws in prop::collection::vec(word_strategy(), 1..8)) {
            let cs = Charset::latin36();
            let words: Vec<Word> = ws.into_iter().map(|s| cs.word_from_indices(s).unwrap()).collect();
            let t = target_matrix(&words, &words).unwrap();
            for i in 0..words.len() {
                prop_assert_eq!(t.get(i, i), 1.0);
                for j in 0..words.len() {
                    prop_assert_eq!(t.get(i, j), t.get(j, i));
                }
            }
        }

        #[test]
        fn cosine_matrix_is_bounded_with_unit_self_diagonal(
            vals in prop::collection::vec(-3.0f64..3.0, 12),
            other in prop::collection::vec(-3.0f64..3.0, 6),
        ) {
            prop_assume!(vals.chunks(6).all(|c| c.iter().any(|v| v.abs() > 1e-3)));
            prop_assume!(other.iter().any(|v| v.abs() > 1e-3));
            let f = SequenceFeature::new(2, 3, 2, vals).unwrap();
            let e = SequenceFeature::new(1, 3, 2, other).unwrap();
            let m = cosine_matrix(&f, &e).unwrap();
            prop_assert!(m.values().iter().all(|v| (-1.0..=1.0).contains(v)));
            let ff = cosine_matrix(&f, &f).unwrap();
            for i in 0..2 {
                prop_assert!((ff.get(i, i) - 1.0).abs() < 1e-6);
            }
        }
    }
}
