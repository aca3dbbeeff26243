use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use textseek_core::augment::EditOperatorRatios;
use textseek_core::similarity::target_matrix;
use textseek_core::{Charset, SimilarityMatrix, Word};
use textseek_model::network;
use textseek_model::{ModelConfig, ParameterStore};
use textseek_tensor::gradcheck::check_gradients;
use textseek_tensor::{init, Graph, Tensor};
use textseek_train::batch::build_queries;
use textseek_train::loss::{
    loss_similarity, loss_total, similarity_term, similarity_term_value, LossTerms, PredictedSimilarities,
    TargetSimilarities,
};
use textseek_train::{similarity_objective, RowReduce};

fn matrix(r: usize, c: usize, v: Vec<f64>) -> SimilarityMatrix {
    SimilarityMatrix::new(vec![String::new(); r], vec![String::new(); c], v).unwrap()
}

fn graph_loss(pred: [&SimilarityMatrix; 3], target: &TargetSimilarities, pp_qq: bool) -> f64 {
    let mut g = Graph::new();
    let mut var = |m: &SimilarityMatrix| {
        let (r, c) = m.shape();
        g.param(Tensor::new(&[r, c], m.values().to_vec()))
    };
    let p = PredictedSimilarities {
        pp: var(pred[0]),
        qp: var(pred[1]),
        qq: var(pred[2]),
    };
    let l = loss_similarity(&mut g, &p, target, RowReduce::Max, pp_qq).unwrap();
    g.value(l).item()
}

#[test]
fn exact_prediction_costs_nothing() {
    let t = matrix(2, 2, vec![1.0, 0.25, 0.25, 1.0]);
    let target = TargetSimilarities {
        pp: t.clone(),
        qp: t.clone(),
        qq: t.clone(),
    };
    assert_eq!(graph_loss([&t, &t, &t], &target, true), 0.0);
}

#[test]
fn one_by_one_offsets_sum_over_three_terms() {
    let t = matrix(1, 1, vec![0.5]);
    let p = matrix(1, 1, vec![0.7]);
    let target = TargetSimilarities {
        pp: t.clone(),
        qp: t.clone(),
        qq: t.clone(),
    };
    let expected = 3.0 * 0.5 * 0.2f64.powi(2);
    assert!((graph_loss([&p, &p, &p], &target, true) - expected).abs() < 1e-12);
    assert!((expected - 0.06).abs() < 1e-12);
    // Only the query-proposal term is left without the other two.
    assert!((graph_loss([&p, &p, &p], &target, false) - 0.02).abs() < 1e-12);
}

#[test]
fn row_maximum_picks_the_larger_error() {
    let t = matrix(1, 2, vec![0.3, 0.1]);
    let p = matrix(1, 2, vec![0.3, 0.5]);
    assert!((similarity_term_value(&p, &t, RowReduce::Max).unwrap() - 0.08).abs() < 1e-12);
    let mut g = Graph::new();
    let v = g.param(Tensor::new(&[1, 2], p.values().to_vec()));
    let l = similarity_term(&mut g, v, &t, RowReduce::Max).unwrap();
    assert!((g.value(l).item() - 0.08).abs() < 1e-12);
}

#[test]
fn large_errors_use_the_linear_branch() {
    let t = matrix(1, 1, vec![1.0]);
    let p = matrix(1, 1, vec![-1.0]);
    assert!((similarity_term_value(&p, &t, RowReduce::Max).unwrap() - 1.5).abs() < 1e-12);
}

#[test]
fn shape_mismatch_is_an_error() {
    let mut g = Graph::new();
    let v = g.param(Tensor::zeros(&[2, 3]));
    assert!(similarity_term(&mut g, v, &matrix(3, 2, vec![0.0; 6]), RowReduce::Max).is_err());
    assert!(similarity_term_value(&matrix(1, 2, vec![0.0; 2]), &matrix(2, 1, vec![0.0; 2]), RowReduce::Max).is_err());
}

#[test]
fn empty_matrices_contribute_zero() {
    let mut g = Graph::new();
    let v = g.param(Tensor::zeros(&[0, 3]));
    let l = similarity_term(&mut g, v, &matrix(0, 3, vec![]), RowReduce::Max).unwrap();
    assert_eq!(g.value(l).item(), 0.0);
}

#[test]
fn total_is_the_plain_sum() {
    let zero = LossTerms {
        detection: 0.0,
        similarity: 0.0,
        ctc: 0.0,
    };
    assert_eq!(loss_total(&zero, 0).unwrap(), 0.0);
    let some = LossTerms {
        detection: 1.0,
        similarity: 2.0,
        ctc: 3.0,
    };
    assert_eq!(loss_total(&some, 0).unwrap(), 6.0);
    for (i, term) in ["L_d", "L_s", "L_c"].into_iter().enumerate() {
        let mut bad = some;
        match i {
            0 => bad.detection = f64::NAN,
            1 => bad.similarity = f64::INFINITY,
            _ => bad.ctc = f64::NAN,
        }
        let err = loss_total(&bad, 12).unwrap_err().to_string();
        assert!(err.contains(term) && err.contains("12"), "{err}");
    }
}

#[test]
fn similarity_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inputs: Vec<Tensor> = (0..3).map(|_| init::uniform(&[3, 3], 1.0, &mut rng)).collect();
    let targets: Vec<SimilarityMatrix> = (0..3)
        .map(|_| matrix(3, 3, init::uniform(&[9], 1.0, &mut rng).data().iter().map(|v| v.abs()).collect()))
        .collect();
    let target = TargetSimilarities {
        pp: targets[0].clone(),
        qp: targets[1].clone(),
        qq: targets[2].clone(),
    };
    let report = check_gradients(&inputs, 1e-6, |g, v| {
        let p = PredictedSimilarities {
            pp: v[0],
            qp: v[1],
            qq: v[2],
        };
        loss_similarity(g, &p, &target, RowReduce::Max, true).unwrap()
    });
    assert!(report.max_relative_error() < 1e-4, "{:?}", report.relative_errors);
}

#[test]
fn cosine_kernel_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let inputs = vec![init::uniform(&[3, 2, 3], 1.0, &mut rng), init::uniform(&[3, 2, 3], 1.0, &mut rng)];
    let report = check_gradients(&inputs, 1e-6, |g, v| {
        let a = network::squash(g, v[0]).unwrap();
        let b = network::squash(g, v[1]).unwrap();
        let s = network::cosine(g, a, b);
        let w = g.constant(Tensor::new(&[3, 3], vec![0.3, -1.2, 0.5, 0.9, 0.1, -0.4, 1.1, 0.7, -0.8]));
        let p = g.mul(s, w);
        g.sum(p)
    });
    assert!(report.max_relative_error() < 1e-4, "{:?}", report.relative_errors);
}

fn tiny_config() -> ModelConfig {
    ModelConfig {
        channels: 4,
        steps: 4,
        backbone_width: 2,
        ..ModelConfig::desk(36)
    }
}

fn words(cs: &Charset, list: &[&str]) -> Vec<Word> {
    list.iter().map(|w| cs.encode(w).unwrap()).collect()
}

/// The whole similarity objective (text branch, squashing, cosine, all
/// three terms) differentiated with respect to every text parameter and the
/// image-side features.
#[test]
fn similarity_objective_gradient_over_all_text_parameters() {
    let config = tiny_config();
    let cs = Charset::latin36();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = ParameterStore::init(&config, &mut rng).unwrap();
    let text: Vec<String> = params
        .names()
        .filter(|n| n.starts_with("text"))
        .map(String::from)
        .collect();
    let mut subset = ParameterStore::default();
    for n in &text {
        subset.insert(n, params.get(n).unwrap().clone());
    }
    let transcripts = words(&cs, &["taxi", "stop"]);
    let queries = build_queries(&transcripts, &EditOperatorRatios::identity(), &cs, 32, &mut rng)
        .unwrap()
        .unwrap();
    let mut inputs: Vec<Tensor> = subset.iter().map(|(_, t)| t.clone()).collect();
    inputs.push(init::uniform(&[2, config.steps, config.channels], 1.0, &mut rng));
    let report = check_gradients(&inputs, 1e-6, |g, v| {
        let b = subset.bind_vars(&v[..v.len() - 1]);
        let e = v[v.len() - 1];
        similarity_objective(g, &b, &config, e, &transcripts, &queries, RowReduce::Max, true).unwrap()
    });
    assert!(report.max_relative_error() < 1e-4, "{:?}", report.relative_errors);
}

#[test]
fn without_pp_qq_only_the_query_proposal_term_remains() {
    let config = tiny_config();
    let cs = Charset::latin36();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = ParameterStore::init(&config, &mut rng).unwrap();
    let transcripts = words(&cs, &["taxi", "stop", "taxi"]);
    let queries = build_queries(&transcripts, &EditOperatorRatios::parse("1:1:1:5").unwrap(), &cs, 32, &mut rng)
        .unwrap()
        .unwrap();
    let e_value = init::uniform(&[3, config.steps, config.channels], 1.0, &mut rng);

    let mut g = Graph::new();
    let b = params.bind(&mut g);
    let e = g.param(e_value.clone());
    let nodes_before = g.len();
    let reduced = similarity_objective(&mut g, &b, &config, e, &transcripts, &queries, RowReduce::Max, false).unwrap();
    let reduced_nodes = g.len() - nodes_before;
    let reduced = g.value(reduced).item();

    let mut g = Graph::new();
    let b = params.bind(&mut g);
    let e = g.param(e_value.clone());
    let nodes_before = g.len();
    let full = similarity_objective(&mut g, &b, &config, e, &transcripts, &queries, RowReduce::Max, true).unwrap();
    let full_nodes = g.len() - nodes_before;
    let full = g.value(full).item();

    // Recompute the query-proposal term on its own.
    let mut g = Graph::new();
    let b = params.bind(&mut g);
    let x = network::embed_words(&mut g, &b, &queries.augmented, &config).unwrap();
    let f = network::text_s2sm(&mut g, &b, x, &config).unwrap();
    let e = g.param(e_value);
    let en = network::squash(&mut g, e).unwrap();
    let fnorm = network::squash(&mut g, f).unwrap();
    let qp = network::cosine(&mut g, fnorm, en);
    let t = target_matrix(&queries.augmented, &transcripts).unwrap();
    let alone = similarity_term(&mut g, qp, &t, RowReduce::Max).unwrap();

    assert_eq!(reduced, g.value(alone).item());
    assert!(reduced_nodes < full_nodes, "{reduced_nodes} vs {full_nodes}");
    assert!(reduced <= full + 1e-12);
    assert!(reduced > 0.0);
}

/// Independent Levenshtein over chars with a full table.
fn dp_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

#[test]
fn batch_targets_agree_with_a_dp_oracle() {
    let cs = Charset::latin36();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let transcripts = words(&cs, &["motel", "moon", "street", "motel", "hill"]);
    let q = build_queries(&transcripts, &EditOperatorRatios::parse("1:1:1:5").unwrap(), &cs, 32, &mut rng)
        .unwrap()
        .unwrap();
    for (rows, cols) in [(&q.augmented, &transcripts), (&transcripts, &transcripts), (&q.augmented, &q.augmented)] {
        let m = target_matrix(rows, cols).unwrap();
        for (i, r) in rows.iter().enumerate() {
            for (j, c) in cols.iter().enumerate() {
                let longest = r.len().max(c.len());
                let want = 1.0 - dp_distance(r.as_str(), c.as_str()) as f64 / longest as f64;
                assert_eq!(m.get(i, j), want, "{} vs {}", r.as_str(), c.as_str());
            }
        }
    }
}

proptest! {
    #[test]
    fn loss_is_non_negative_and_row_permutation_invariant(
        values in proptest::collection::vec((-1.0f64..1.0, 0.0f64..1.0), 12),
        shift in 0usize..4,
    ) {
        let (p, t): (Vec<f64>, Vec<f64>) = values.into_iter().unzip();
        let pred = matrix(4, 3, p.clone());
        let target = matrix(4, 3, t.clone());
        let perm: Vec<usize> = (0..4).map(|i| (i + shift) % 4).collect();
        let permute = |v: &[f64]| -> Vec<f64> { perm.iter().flat_map(|&r| v[r * 3..r * 3 + 3].to_vec()).collect() };
        for reduce in [RowReduce::Max, RowReduce::Mean] {
            let a = similarity_term_value(&pred, &target, reduce).unwrap();
            let b = similarity_term_value(&matrix(4, 3, permute(&p)), &matrix(4, 3, permute(&t)), reduce).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn graph_and_plain_values_agree(values in proptest::collection::vec((-1.0f64..1.0, 0.0f64..1.0), 6)) {
        let (p, t): (Vec<f64>, Vec<f64>) = values.into_iter().unzip();
        let target = matrix(2, 3, t);
        let mut g = Graph::new();
        let v = g.param(Tensor::new(&[2, 3], p.clone()));
        let l = similarity_term(&mut g, v, &target, RowReduce::Max).unwrap();
        let plain = similarity_term_value(&matrix(2, 3, p), &target, RowReduce::Max).unwrap();
        prop_assert!((g.value(l).item() - plain).abs() < 1e-12);
    }
}
