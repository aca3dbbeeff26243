use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use textseek_core::Charset;
use textseek_model::{meta, Checkpoint, ParameterStore};
use textseek_synth::{builtin_lexicon, render_sample, SynthConfig};
use textseek_train::{train, Mode, TrainConfig, TrainError, Trainer, TrainingSet, CHECKPOINT_FILE, METRICS_FILE};

fn small_set(images: usize, seed: u64) -> TrainingSet {
    let cs = Charset::latin36();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lexicon = builtin_lexicon(6, &cs, &mut rng).unwrap();
    let cfg = SynthConfig {
        width: 64,
        height: 64,
        min_words: 1,
        max_words: 2,
        min_scale: 1.2,
        max_scale: 1.6,
        ..SynthConfig::default()
    };
    let mut imgs = Vec::new();
    let mut inst = Vec::new();
    for _ in 0..images {
        let s = render_sample(&lexicon, &cfg, &mut rng).unwrap();
        imgs.push(s.image);
        inst.push(s.instances.into_iter().map(|i| (i.bbox, i.text)).collect());
    }
    TrainingSet::new(cs, imgs, inst).unwrap()
}

fn quick(mode: Mode, iterations: usize) -> TrainConfig {
    TrainConfig {
        mode,
        iterations,
        batch_size: 2,
        channels: 4,
        steps: 6,
        backbone_width: 2,
        warmup_iterations: 0,
        log_every: 0,
        ..TrainConfig::default()
    }
}

fn max_abs_diff(a: &ParameterStore, b: &ParameterStore) -> f64 {
    a.iter()
        .map(|(n, t)| {
            let u = b.get(n).unwrap();
            t.data().iter().zip(u.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

#[test]
fn one_iteration_is_exactly_one_update() {
    let data = small_set(3, 1);
    let config = TrainConfig {
        lr_decay_steps: vec![0],
        ..quick(Mode::Joint, 1)
    };
    let dir = tempfile::tempdir().unwrap();
    let out = train(&config, &data, dir.path()).unwrap();
    let trained = Checkpoint::load(&out.checkpoint).unwrap();

    let fresh = Trainer::new(&config, &data).unwrap();
    let initial = fresh.params().clone();
    let mut manual = Trainer::new(&config, &data).unwrap();
    manual.step(0).unwrap();

    assert!(max_abs_diff(&initial, &trained.params) > 0.0);
    assert_eq!(&trained.params, manual.params());
    assert_eq!(trained.meta[meta::ITERATIONS], "1");
    let log = std::fs::read_to_string(&out.metrics).unwrap();
    assert_eq!(log.lines().count(), 2, "{log}");
    assert_eq!(log.lines().next().unwrap(), "iteration,L_d,L_s,L_c,L,lr");
}

#[test]
fn fixed_seed_runs_are_bit_identical() {
    let data = small_set(4, 2);
    let config = quick(Mode::Joint, 4);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    train(&config, &data, a.path()).unwrap();
    train(&config, &data, b.path()).unwrap();
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    assert_eq!(read(&a, METRICS_FILE), read(&b, METRICS_FILE));
    assert_eq!(read(&a, CHECKPOINT_FILE), read(&b, CHECKPOINT_FILE));
    let other = TrainConfig { seed: 99, ..config };
    let c = tempfile::tempdir().unwrap();
    train(&other, &data, c.path()).unwrap();
    assert_ne!(read(&a, METRICS_FILE), read(&c, METRICS_FILE));
}

#[test]
fn checkpoints_are_written_atomically_and_periodically() {
    let data = small_set(3, 3);
    let config = TrainConfig {
        checkpoint_every: 1,
        ..quick(Mode::Joint, 3)
    };
    let dir = tempfile::tempdir().unwrap();
    let out = train(&config, &data, dir.path()).unwrap();
    let names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(names.iter().all(|n| !n.ends_with(".tmp")), "{names:?}");
    let ck = Checkpoint::load(&out.checkpoint).unwrap();
    assert_eq!(ck.meta[meta::MODE], "joint");
    assert_eq!(ck.meta[meta::ITERATIONS], "3");
    assert_eq!(Charset::from_text(&ck.meta[meta::CHARSET]).unwrap().len(), 36);
}

#[test]
fn divergence_stops_training_and_dumps_the_state() {
    let data = small_set(3, 4);
    let config = TrainConfig {
        lr: 1e200,
        grad_clip: 0.0,
        momentum: 0.0,
        ..quick(Mode::Joint, 5)
    };
    let dir = tempfile::tempdir().unwrap();
    match train(&config, &data, dir.path()) {
        Err(TrainError::Diverged { iteration, reason, dump }) => {
            assert!(iteration < 5);
            assert!(dump.exists());
            assert!(
                ["L_d", "L_s", "L_c", "parameters", "zero-norm"].iter().any(|t| reason.contains(t)),
                "{reason}"
            );
            Checkpoint::load(&dump).unwrap();
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn batches_without_text_are_skipped() {
    let full = small_set(2, 5);
    let mut inst = full.instances.clone();
    inst[1].clear();
    let data = TrainingSet::new(full.charset.clone(), full.images.clone(), inst).unwrap();
    let config = TrainConfig {
        batch_size: 1,
        ..quick(Mode::Joint, 12)
    };
    let mut t = Trainer::new(&config, &data).unwrap();
    let reports: Vec<_> = (0..12).map(|i| t.step(i).unwrap()).collect();
    assert!(reports.iter().any(|r| r.skipped));
    assert!(reports.iter().any(|r| !r.skipped));
    assert!(reports.iter().filter(|r| r.skipped).all(|r| r.total == 0.0 && r.proposals == 0));
    let empty = TrainingSet::new(full.charset.clone(), full.images.clone(), vec![Vec::new(), Vec::new()]);
    assert!(matches!(empty, Err(TrainError::NoText)));
}

#[test]
fn every_mode_trains_and_records_itself() {
    let data = small_set(3, 6);
    for mode in Mode::ALL {
        let config = quick(mode, 2);
        let mut t = Trainer::new(&config, &data).unwrap();
        let r = t.step(0).unwrap();
        assert!(r.total.is_finite(), "{mode}");
        assert!(r.proposals > 0, "{mode}");
        if mode.uses_ctc() {
            assert!(r.ctc > 0.0, "{mode}");
        } else {
            assert_eq!(r.ctc, 0.0, "{mode}");
        }
        let ck = t.checkpoint(1);
        assert_eq!(ck.meta[meta::MODE], mode.name());
        assert_eq!(ck.retrieval.is_some(), mode == Mode::Separated, "{mode}");
    }
}

#[test]
fn separated_training_leaves_the_detector_out_of_retrieval() {
    let data = small_set(3, 7);
    let config = TrainConfig {
        weight_decay: 0.0,
        ..quick(Mode::Separated, 1)
    };
    let mut t = Trainer::new(&config, &data).unwrap();
    let before = t.params().clone();
    t.step(0).unwrap();
    // The detector's own recognition head gets no gradient in this mode.
    assert_eq!(before.get("ctc.w"), t.params().get("ctc.w"));
    assert_eq!(before.get("text.embedding"), t.params().get("text.embedding"));
    assert_ne!(before.get("head.out.w"), t.params().get("head.out.w"));
}

#[test]
fn overfitting_a_few_images_reduces_the_loss() {
    let data = small_set(2, 8);
    let config = TrainConfig {
        lr: 0.02,
        ..quick(Mode::Joint, 150)
    };
    let mut t = Trainer::new(&config, &data).unwrap();
    let reports: Vec<_> = (0..150).map(|i| t.step(i).unwrap()).collect();
    let mean = |r: &[textseek_train::StepReport]| r.iter().map(|x| x.total).sum::<f64>() / r.len() as f64;
    let first = mean(&reports[..10]);
    let last = mean(&reports[140..]);
    assert!(last < first / 2.0, "{first} -> {last}");
}
