//! The similarity regression loss and the total objective.

use textseek_core::SimilarityMatrix;
use textseek_tensor::{Graph, Tensor, Var};

use crate::config::RowReduce;
use crate::error::{Result, TrainError};

const BETA: f64 = 1.0;

fn smooth_l1(x: f64) -> f64 {
    if x.abs() < BETA {
        0.5 * x * x / BETA
    } else {
        x.abs() - 0.5 * BETA
    }
}

fn shape_error(pred: (usize, usize), target: (usize, usize)) -> TrainError {
    TrainError::Config(format!("similarity shapes differ: predicted {pred:?}, target {target:?}"))
}

/// One term: per row, the maximum (or mean) of the element-wise smooth-L1
/// between prediction and target, averaged over rows. Empty matrices
/// contribute zero.
pub fn similarity_term(g: &mut Graph, pred: Var, target: &SimilarityMatrix, reduce: RowReduce) -> Result<Var> {
    let s = g.shape(pred).to_vec();
    if s.len() != 2 || (s[0], s[1]) != target.shape() {
        let got = if s.len() == 2 { (s[0], s[1]) } else { (0, 0) };
        return Err(shape_error(got, target.shape()));
    }
    if s[0] == 0 || s[1] == 0 {
        return Ok(g.constant(Tensor::scalar(0.0)));
    }
    let t = g.constant(Tensor::new(&s, target.values().to_vec()));
    let diff = g.sub(pred, t);
    let elem = g.smooth_l1(diff, BETA);
    let rows = match reduce {
        RowReduce::Max => g.max_rows(elem),
        RowReduce::Mean => g.mean_axis(elem, 1),
    };
    Ok(g.mean(rows))
}

/// Predicted similarity matrices of one batch.
#[derive(Debug, Clone, Copy)]
pub struct PredictedSimilarities {
    /// Proposals against proposals, `(K, K)`.
    pub pp: Var,
    /// Augmented queries against proposals, `(2N, K)`.
    pub qp: Var,
    /// Augmented queries against themselves, `(2N, 2N)`.
    pub qq: Var,
}

/// Target matrices in the same layout as [`PredictedSimilarities`].
#[derive(Debug, Clone)]
pub struct TargetSimilarities {
    pub pp: SimilarityMatrix,
    pub qp: SimilarityMatrix,
    pub qq: SimilarityMatrix,
}

/// Sum of the three terms; with `pp_qq` off only the query-proposal term.
pub fn loss_similarity(
    g: &mut Graph,
    pred: &PredictedSimilarities,
    target: &TargetSimilarities,
    reduce: RowReduce,
    pp_qq: bool,
) -> Result<Var> {
    let qp = similarity_term(g, pred.qp, &target.qp, reduce)?;
    if !pp_qq {
        return Ok(qp);
    }
    let pp = similarity_term(g, pred.pp, &target.pp, reduce)?;
    let qq = similarity_term(g, pred.qq, &target.qq, reduce)?;
    let s = g.add(pp, qp);
    Ok(g.add(s, qq))
}

/// Value of one term on plain matrices, computed without a graph.
pub fn similarity_term_value(pred: &SimilarityMatrix, target: &SimilarityMatrix, reduce: RowReduce) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(shape_error(pred.shape(), target.shape()));
    }
    let (r, c) = pred.shape();
    if r == 0 || c == 0 {
        return Ok(0.0);
    }
    let total: f64 = (0..r)
        .map(|i| {
            let e = pred.row(i).iter().zip(target.row(i)).map(|(p, t)| smooth_l1(p - t));
            match reduce {
                RowReduce::Max => e.fold(f64::NEG_INFINITY, f64::max),
                RowReduce::Mean => e.sum::<f64>() / c as f64,
            }
        })
        .sum();
    Ok(total / r as f64)
}

/// The three component losses of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub detection: f64,
    pub similarity: f64,
    pub ctc: f64,
}

impl LossTerms {
    fn check(&self, iteration: usize) -> Result<()> {
        for (term, value) in [("L_d", self.detection), ("L_s", self.similarity), ("L_c", self.ctc)] {
            if !value.is_finite() {
                return Err(TrainError::NonFinite { term, value, iteration });
            }
        }
        Ok(())
    }
}

/// `L = L_d + L_s + L_c`, or an error naming the first non-finite term.
pub fn loss_total(terms: &LossTerms, iteration: usize) -> Result<f64> {
    terms.check(iteration)?;
    Ok(terms.detection + terms.similarity + terms.ctc)
}

/// Graph form of [`loss_total`]; `ctc` is left out when `None`.
pub fn loss_total_graph(g: &mut Graph, detection: Var, similarity: Var, ctc: Option<Var>, iteration: usize) -> Result<Var> {
    let terms = LossTerms {
        detection: g.value(detection).item(),
        similarity: g.value(similarity).item(),
        ctc: ctc.map_or(0.0, |c| g.value(c).item()),
    };
    terms.check(iteration)?;
    let s = g.add(detection, similarity);
    Ok(match ctc {
        Some(c) => g.add(s, c),
        None => s,
    })
}
