use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use textseek_core::image::Image;
use textseek_core::metrics::mean_average_precision;
use textseek_core::{BBox, Charset, SequenceFeature};
use textseek_model::{meta, Checkpoint, ModelConfig, ParameterStore, ProposalSet};
use textseek_retrieval::{
    annotate, index_image, mean_ap, rank_gallery, retrieve, GalleryImage, GalleryIndex, IndexedImage, QueryVector,
    Representation, RetrievalError, Retriever, EMPTY_SCORE,
};

fn checkpoint(seed: u64, mode: &str) -> Checkpoint {
    let cs = Charset::latin36();
    let config = ModelConfig {
        channels: 4,
        steps: 5,
        roi_height: 4,
        backbone_width: 2,
        score_thresh: 0.0,
        max_proposals: 6,
        ..ModelConfig::desk(cs.len())
    };
    let params = ParameterStore::init(&config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let mut ck = Checkpoint::new(config, params);
    ck.meta.insert(meta::CHARSET.into(), cs.to_text());
    ck.meta.insert(meta::FOLD_CASE.into(), "true".into());
    ck.meta.insert(meta::MODE.into(), mode.into());
    ck
}

fn retriever(seed: u64) -> Retriever {
    Retriever::from_checkpoint(&checkpoint(seed, "joint")).unwrap()
}

fn textured(w: usize, h: usize, phase: usize) -> Image {
    let mut img = Image::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let v = ((x * 7 + y * 13 + phase * 5) % 17) as f32 / 17.0;
            img.set_pixel(x, y, [v, 1.0 - v, (v * 3.0) % 1.0]);
        }
    }
    img
}

fn gallery() -> Vec<(String, Image)> {
    (0..3).map(|i| (format!("img{i}"), textured(64, 48, i))).collect()
}

/// An index built by hand: one entry per image, each a list of proposal
/// features of width `dim`.
fn manual_index(images: Vec<Vec<Vec<f64>>>, dim: usize) -> GalleryIndex {
    GalleryIndex {
        fingerprint: "manual".into(),
        charset: Charset::latin36().to_text(),
        fold_case: false,
        representation: Representation::Phoc,
        scales: vec![0],
        steps: 1,
        channels: dim,
        warnings: Vec::new(),
        images: images
            .into_iter()
            .enumerate()
            .map(|(i, feats)| {
                let n = feats.len();
                IndexedImage {
                    id: format!("{i:03}"),
                    width: 100,
                    height: 100,
                    proposals: ProposalSet {
                        boxes: (0..n).map(|k| BBox::new(k as f64, 0.0, k as f64 + 5.0, 5.0).unwrap()).collect(),
                        scores: vec![0.5; n],
                    },
                    features: SequenceFeature::new(n, 1, dim, feats.concat()).unwrap(),
                }
            })
            .collect(),
    }
}

fn query(v: Vec<f64>) -> QueryVector {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    QueryVector {
        word: Charset::latin36().encode("q").unwrap(),
        vector: v.into_iter().map(|x| x / n).collect(),
    }
}

#[test]
fn index_survives_a_round_trip_and_rejects_damage() {
    let r = retriever(1);
    let index = GalleryIndex::from_images(&r, &gallery(), &[0, 48]).unwrap();
    assert!(index.images.iter().all(|e| e.proposals.len() > 0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.idx");
    index.save(&path).unwrap();
    assert!(!dir.path().join("g.tmp").exists());
    assert_eq!(GalleryIndex::load(&path).unwrap(), index);
    let bytes = index.to_bytes();
    assert!(GalleryIndex::from_bytes(&bytes[..bytes.len() - 1], &path).is_err());
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(GalleryIndex::from_bytes(&longer, &path).is_err());
    assert!(GalleryIndex::from_bytes(b"TSINDY", &path).is_err());
}

#[test]
fn ranking_breaks_ties_by_id_and_scores_empty_images_lowest() {
    let index = manual_index(
        vec![
            vec![vec![1.0, 0.0]],
            vec![],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![vec![0.6, 0.8]],
        ],
        2,
    );
    let result = rank_gallery(&index, &query(vec![1.0, 0.0])).unwrap();
    let order: Vec<&str> = result.ranking.iter().map(|r| r.image.as_str()).collect();
    assert_eq!(order, ["000", "002", "003", "001"]);
    assert_eq!(result.ranking[1].bbox, Some(index.images[2].proposals.boxes[1]));
    assert_eq!(result.ranking[3].score, EMPTY_SCORE);
    assert_eq!(result.ranking[3].bbox, None);
    assert!(rank_gallery(&index, &query(vec![1.0, 0.0, 0.0])).is_err());
}

#[test]
fn duplicate_images_rank_next_to_each_other() {
    let r = retriever(2);
    let img = textured(64, 48, 4);
    let images = vec![
        ("a".to_string(), img.clone()),
        ("m".to_string(), textured(64, 48, 9)),
        ("z".to_string(), img),
    ];
    let index = GalleryIndex::from_images(&r, &images, &[0]).unwrap();
    for q in ["taxi", "stop", "x"] {
        let result = retrieve(&r, &index, q).unwrap();
        let pos = |id: &str| result.ranking.iter().position(|e| e.image == id).unwrap();
        assert_eq!(pos("z"), pos("a") + 1, "{q}");
        assert_eq!(result.ranking[pos("a")].score, result.ranking[pos("z")].score);
    }
}

#[test]
fn queries_outside_the_charset_are_rejected() {
    let r = retriever(3);
    let index = GalleryIndex::from_images(&r, &gallery(), &[0]).unwrap();
    assert!(matches!(retrieve(&r, &index, "ta#i"), Err(RetrievalError::InvalidInput(_))));
    assert!(retrieve(&r, &index, "").is_err());
    assert!(retrieve(&r, &index, "TAXI").is_ok(), "case folding applies to queries");
}

#[test]
fn an_index_from_another_checkpoint_is_rejected() {
    let index = GalleryIndex::from_images(&retriever(4), &gallery(), &[0]).unwrap();
    assert!(retrieve(&retriever(5), &index, "taxi").is_err());
}

#[test]
fn unreadable_images_become_warnings() {
    let r = retriever(6);
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.png");
    textseek_synth::save_image(&textured(64, 48, 1), &good).unwrap();
    let bad = dir.path().join("bad.png");
    std::fs::write(&bad, b"not a png").unwrap();
    let images = vec![
        GalleryImage {
            id: "good".into(),
            path: good,
        },
        GalleryImage {
            id: "bad".into(),
            path: bad,
        },
        GalleryImage {
            id: "missing".into(),
            path: dir.path().join("missing.png"),
        },
    ];
    let index = GalleryIndex::build(&r, &images, &[0]).unwrap();
    assert_eq!(index.images.len(), 1);
    assert_eq!(index.warnings.len(), 2);
    assert!(index.warnings[0].starts_with("bad"));
    assert!(GalleryIndex::build(&r, &[], &[0]).is_err());
    assert!(GalleryIndex::build(&r, &images, &[]).is_err());
    assert!(GalleryIndex::build(&r, &images, &[4]).is_err());
}

#[test]
fn phoc_checkpoints_compare_phoc_vectors() {
    let r = Retriever::from_checkpoint(&checkpoint(7, "phoc_head")).unwrap();
    assert_eq!(r.representation(), Representation::Phoc);
    let index = GalleryIndex::from_images(&r, &gallery(), &[0]).unwrap();
    assert_eq!(index.steps, 1);
    let result = retrieve(&r, &index, "taxi").unwrap();
    assert_eq!(result.ranking.len(), 3);
    assert!(result.ranking.iter().all(|e| (0.0..=1.0).contains(&e.score)));
}

#[test]
fn mean_ap_skips_queries_without_relevant_images() {
    let r = retriever(8);
    let index = GalleryIndex::from_images(&r, &gallery(), &[0]).unwrap();
    let gt: BTreeMap<String, Vec<String>> = [
        ("img0".to_string(), vec!["Taxi".to_string()]),
        ("img2".to_string(), vec!["stop".to_string(), "taxi".to_string()]),
    ]
    .into_iter()
    .collect();
    let queries = vec!["taxi".to_string(), "stop".to_string(), "bus".to_string()];
    let report = mean_ap(&r, &index, &queries, &gt, true).unwrap();
    assert_eq!(report.skipped, 1);
    assert_eq!(report.queries[0].relevant, 2);
    assert_eq!(report.queries[2].ap, None);
    let mean = (report.queries[0].ap.unwrap() + report.queries[1].ap.unwrap()) / 2.0;
    assert!((report.map - mean).abs() < 1e-12);
    let strict = mean_ap(&r, &index, &queries, &gt, false).unwrap();
    assert_eq!(strict.queries[0].relevant, 1);
}

#[test]
fn annotation_places_every_word_on_a_proposal() {
    let r = retriever(9);
    let img = textured(64, 48, 2);
    let words: Vec<_> = ["taxi", "stop"].iter().map(|w| r.parse_query(w).unwrap()).collect();
    let a = annotate(&r, &img, &words, &[0]).unwrap();
    assert_eq!(a.annotated.len(), 2);
    assert!(a.unannotated.is_empty());
    let entry = index_image(&r, "", &img, &[0]).unwrap();
    for wb in &a.annotated {
        assert!(entry.proposals.boxes.contains(&wb.bbox));
        assert!(wb.bbox.within(64.0, 48.0));
    }
}

/// Mean AP of random unit features against random ground truth matches the
/// expectation under uniformly random rankings, estimated by shuffling.
#[test]
fn random_features_give_chance_level_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (images, per_query_relevant, dim, trials) = (20, 3, 8, 300);
    let mut model_map = 0.0;
    for _ in 0..trials {
        let feats: Vec<Vec<Vec<f64>>> = (0..images)
            .map(|_| (0..2).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect())
            .collect();
        let index = manual_index(feats, dim);
        let mut rankings = Vec::new();
        for _ in 0..4 {
            let relevant: Vec<usize> = rand::seq::index::sample(&mut rng, images, per_query_relevant).into_vec();
            let q = query((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let result = rank_gallery(&index, &q).unwrap();
            rankings.push(
                result
                    .ranking
                    .iter()
                    .map(|e| relevant.contains(&e.image.parse::<usize>().unwrap()))
                    .collect::<Vec<bool>>(),
            );
        }
        model_map += mean_average_precision(&rankings).unwrap().map;
    }
    model_map /= trials as f64;

    let mut shuffled = 0.0;
    let mut labels = vec![false; images];
    labels[..per_query_relevant].iter_mut().for_each(|v| *v = true);
    let draws = 20000;
    for _ in 0..draws {
        labels.shuffle(&mut rng);
        shuffled += textseek_core::metrics::average_precision(&labels).unwrap();
    }
    shuffled /= draws as f64;
    assert!((model_map - shuffled).abs() < 0.03, "{model_map} vs {shuffled}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// An image's score is the best of its proposals, so splitting its
    /// proposals across scales and pooling them gives the maximum of the
    /// per-part scores.
    #[test]
    fn pooled_score_is_the_max_over_parts(
        parts in prop::collection::vec(prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..4), 1..4),
        q in prop::collection::vec(0.1f64..1.0, 3),
    ) {
        let q = query(q);
        let pooled = manual_index(vec![parts.concat()], 3);
        let whole = rank_gallery(&pooled, &q).unwrap().ranking[0].score;
        let best = parts
            .iter()
            .map(|p| rank_gallery(&manual_index(vec![p.clone()], 3), &q).unwrap().ranking[0].score)
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(whole, best);
    }
}

#[test]
fn multi_scale_index_pools_every_scale() {
    let r = retriever(12);
    let img = textured(64, 48, 3);
    let both = index_image(&r, "x", &img, &[0, 48]).unwrap();
    let native = index_image(&r, "x", &img, &[0]).unwrap();
    let small = index_image(&r, "x", &img, &[48]).unwrap();
    assert_eq!(both.proposals.len(), native.proposals.len() + small.proposals.len());
    assert!(both.proposals.boxes.iter().all(|b| b.within(64.0, 48.0)));
    assert_eq!(&both.proposals.boxes[..native.proposals.len()], &native.proposals.boxes[..]);
    let gallery_of = |e: IndexedImage| {
        let mut idx = GalleryIndex::from_images(&r, &[], &[0]).unwrap();
        idx.images.push(e);
        idx
    };
    let q = r.encode_queries(&[r.parse_query("taxi").unwrap()]).unwrap().remove(0);
    let s = |e: IndexedImage| rank_gallery(&gallery_of(e), &q).unwrap().ranking[0].score;
    assert_eq!(s(both), s(native).max(s(small)));
}
