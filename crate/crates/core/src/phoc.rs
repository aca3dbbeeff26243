//! Pyramidal histogram of characters (unigram levels only).
//!
//! At pyramid level `L` the word is split into `L` equal regions. Character
//! `i` of an `n`-symbol word spans `[i/n, (i+1)/n)`; it is counted in region
//! `r` when the region covers at least half of that span. Bits are laid out
//! level by level, then region by region, then by charset index.

use crate::charset::{Charset, Word};
use crate::error::{invalid, Error, Result};
use crate::similarity::cosine;

pub const DEFAULT_LEVELS: [usize; 4] = [2, 3, 4, 5];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhocVector {
    bits: Vec<u8>,
    levels: Vec<usize>,
}

impl PhocVector {
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| b as f64).collect()
    }
}

fn check_levels(levels: &[usize]) -> Result<()> {
    if levels.is_empty() {
        return Err(invalid("PHOC needs at least one pyramid level"));
    }
    if levels.contains(&0) {
        return Err(invalid("PHOC levels must be positive"));
    }
    Ok(())
}

/// `(sum of levels) * |charset|`.
pub fn phoc_dimension(charset_len: usize, levels: &[usize]) -> Result<usize> {
    check_levels(levels)?;
    Ok(levels.iter().sum::<usize>() * charset_len)
}

pub fn phoc_encode(word: &Word, charset: &Charset, levels: &[usize]) -> Result<PhocVector> {
    check_levels(levels)?;
    if word.charset_id() != charset.id() {
        return Err(invalid(format!("word {word} is not spelled over this charset")));
    }
    let n = word.len();
    let l = charset.len();
    let mut bits = vec![0u8; phoc_dimension(l, levels)?];
    let mut offset = 0;
    for &level in levels {
        for (i, &sym) in word.symbols().iter().enumerate() {
            // Work in units of 1 / (n * level) so all bounds are integers.
            let (c0, c1) = (i * level, (i + 1) * level);
            for r in 0..level {
                let (r0, r1) = (r * n, (r + 1) * n);
                let overlap = c1.min(r1).saturating_sub(c0.max(r0));
                if 2 * overlap >= level {
                    bits[offset + r * l + sym as usize] = 1;
                }
            }
        }
        offset += level * l;
    }
    Ok(PhocVector {
        bits,
        levels: levels.to_vec(),
    })
}

/// Cosine scores of each proposal's predicted PHOC against the query's PHOC.
#[derive(Debug, Clone, PartialEq)]
pub struct PhocRanking {
    pub scores: Vec<f64>,
    /// Proposal indices in descending score order.
    pub order: Vec<usize>,
}

impl PhocRanking {
    /// Best proposal score, `None` when there are no proposals.
    pub fn image_score(&self) -> Option<f64> {
        self.order.first().map(|&i| self.scores[i])
    }
}

pub fn phoc_rank(query: &Word, charset: &Charset, levels: &[usize], predicted: &[Vec<f64>]) -> Result<PhocRanking> {
    let q = phoc_encode(query, charset, levels)?.to_f64();
    let mut scores = Vec::with_capacity(predicted.len());
    for (i, p) in predicted.iter().enumerate() {
        if p.len() != q.len() {
            return Err(invalid(format!(
                "proposal {i} has a {}-dim PHOC, expected {}",
                p.len(),
                q.len()
            )));
        }
        scores.push(cosine(&q, p).map_err(|e| match e {
            Error::Degenerate(m) => Error::Degenerate(format!("proposal {i}: {m}")),
            other => other,
        })?);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(PhocRanking { scores, order })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_char_fills_both_halves() {
        let cs = Charset::new(['a']).unwrap();
        let v = phoc_encode(&cs.encode("a").unwrap(), &cs, &[2]).unwrap();
        assert_eq!(v.bits(), &[1, 1]);
    }

    #[test]
    fn two_chars_split_halves() {
        let cs = Charset::new(['a', 'b']).unwrap();
        let v = phoc_encode(&cs.encode("ab").unwrap(), &cs, &[2]).unwrap();
        // region 0: (a, b), region 1: (a, b)
        assert_eq!(v.bits(), &[1, 0, 0, 1]);
        let w = phoc_encode(&cs.encode("ba").unwrap(), &cs, &[2]).unwrap();
        assert_ne!(v, w);
    }

    #[test]
    fn middle_char_of_three_counts_in_both_halves() {
        // span of 'b' is [1/3, 2/3); each half covers exactly 1/6 = half of it
        let cs = Charset::new(['a', 'b', 'c']).unwrap();
        let v = phoc_encode(&cs.encode("abc").unwrap(), &cs, &[2]).unwrap();
        assert_eq!(v.bits(), &[1, 1, 0, 0, 1, 1]);
    }

    #[test]
    fn dimensions() {
        assert_eq!(phoc_dimension(1019, &DEFAULT_LEVELS).unwrap(), 14266);
        assert_eq!(phoc_dimension(36, &DEFAULT_LEVELS).unwrap(), 504);
        assert_eq!(phoc_dimension(1, &[2]).unwrap(), 2);
        assert!(phoc_dimension(36, &[]).is_err());
        let cs = Charset::latin36();
        let v = phoc_encode(&cs.encode("scene7").unwrap(), &cs, &DEFAULT_LEVELS).unwrap();
        assert_eq!(v.len(), 504);
        assert!(v.bits().iter().all(|&b| b <= 1));
    }

    #[test]
    fn foreign_word_is_rejected() {
        let cs = Charset::latin36();
        let other = Charset::new(['x']).unwrap();
        assert!(phoc_encode(&other.encode("x").unwrap(), &cs, &[2]).is_err());
    }

    #[test]
    fn ranking() {
        let cs = Charset::latin36();
        let q = cs.encode("cafe").unwrap();
        let exact = phoc_encode(&q, &cs, &DEFAULT_LEVELS).unwrap().to_f64();
        let r = phoc_rank(&q, &cs, &DEFAULT_LEVELS, &[exact.clone()]).unwrap();
        assert!((r.scores[0] - 1.0).abs() < 1e-12);

        let zero = vec![0.0; exact.len()];
        assert!(matches!(
            phoc_rank(&q, &cs, &DEFAULT_LEVELS, &[zero]),
            Err(Error::Degenerate(_))
        ));
        assert!(phoc_rank(&q, &cs, &DEFAULT_LEVELS, &[vec![1.0; 3]]).is_err());

        let other = phoc_encode(&cs.encode("bar").unwrap(), &cs, &DEFAULT_LEVELS).unwrap().to_f64();
        let r = phoc_rank(&q, &cs, &DEFAULT_LEVELS, &[other, exact]).unwrap();
        assert_eq!(r.order, vec![1, 0]);
        assert_eq!(r.image_score(), Some(r.scores[1]));
        assert!(phoc_rank(&q, &cs, &DEFAULT_LEVELS, &[]).unwrap().image_score().is_none());
    }
}
