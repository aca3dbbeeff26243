//! The training loop.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use textseek_core::augment::EditOperatorRatios;
use textseek_core::image::Image;
use textseek_core::phoc::phoc_encode;
use textseek_core::similarity::target_matrix;
use textseek_core::{BBox, Charset, Word};
use textseek_model::network::{self, Pyramid};
use textseek_model::{crop_features, crops_to_tensor, meta, Binding, Checkpoint, ModelConfig, ModelError, ParameterStore};
use textseek_synth::GalleryManifest;
use textseek_tensor::{Graph, Tensor, Var};

use crate::batch::{build_queries, training_proposals, QuerySet};
use crate::config::{Mode, OptimizerKind, RowReduce, TrainConfig};
use crate::error::{Result, TrainError};
use crate::loss::{loss_similarity, loss_total_graph, similarity_term, PredictedSimilarities, TargetSimilarities};
use crate::optim::{Adam, Optimizer, Sgd};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const METRICS_FILE: &str = "metrics.csv";
const DUMP_FILE: &str = "diverged.ckpt";

/// Training images held in memory with their annotations.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub charset: Charset,
    pub images: Vec<Image>,
    pub instances: Vec<Vec<(BBox, Word)>>,
}

impl TrainingSet {
    pub fn from_manifest(manifest: &GalleryManifest) -> Result<Self> {
        let charset = manifest.charset()?;
        let mut images = Vec::with_capacity(manifest.samples.len());
        let mut instances = Vec::with_capacity(manifest.samples.len());
        for i in 0..manifest.samples.len() {
            images.push(manifest.load_image(i)?);
            instances.push(manifest.instances(i, &charset)?);
        }
        TrainingSet::new(charset, images, instances)
    }

    pub fn new(charset: Charset, images: Vec<Image>, instances: Vec<Vec<(BBox, Word)>>) -> Result<Self> {
        if images.is_empty() || images.len() != instances.len() {
            return Err(TrainError::Config("need one annotation list per image and at least one image".into()));
        }
        let (w, h) = (images[0].width(), images[0].height());
        if images.iter().any(|i| i.width() != w || i.height() != h) {
            return Err(TrainError::Config("training images must share one size".into()));
        }
        if instances.iter().all(Vec::is_empty) {
            return Err(TrainError::NoText);
        }
        Ok(TrainingSet {
            charset,
            images,
            instances,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// A subset, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        TrainingSet::new(
            self.charset.clone(),
            indices.iter().map(|&i| self.images[i].clone()).collect(),
            indices.iter().map(|&i| self.instances[i].clone()).collect(),
        )
    }
}

/// Losses and bookkeeping of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub iteration: usize,
    pub detection: f64,
    pub similarity: f64,
    pub ctc: f64,
    pub total: f64,
    pub lr: f64,
    /// Global gradient norm of the main network before clipping.
    pub grad_norm: f64,
    /// Proposals that entered the similarity loss.
    pub proposals: usize,
    /// The batch held no text and no update was made.
    pub skipped: bool,
}

/// Everything the similarity and recognition losses need from one batch.
struct Sequences {
    /// Image-side sequence features `[K, T, C]`.
    e: Var,
    transcripts: Vec<Word>,
}

/// The similarity objective between proposal features and augmented query
/// words, with targets from the transcripts.
pub fn similarity_objective(
    g: &mut Graph,
    text: &Binding,
    config: &ModelConfig,
    e: Var,
    transcripts: &[Word],
    queries: &QuerySet,
    reduce: RowReduce,
    pp_qq: bool,
) -> Result<Var> {
    let x = network::embed_words(g, text, &queries.augmented, config)?;
    let f = network::text_s2sm(g, text, x, config)?;
    let en = network::squash(g, e)?;
    let fnorm = network::squash(g, f)?;
    let qp = network::cosine(g, fnorm, en);
    let qp_target = target_matrix(&queries.augmented, transcripts)?;
    if !pp_qq {
        return similarity_term(g, qp, &qp_target, reduce);
    }
    let pred = PredictedSimilarities {
        pp: network::cosine(g, en, en),
        qp,
        qq: network::cosine(g, fnorm, fnorm),
    };
    let target = TargetSimilarities {
        pp: target_matrix(transcripts, transcripts)?,
        qp: qp_target,
        qq: target_matrix(&queries.augmented, &queries.augmented)?,
    };
    loss_similarity(g, &pred, &target, reduce, true)
}

/// Summed binary cross-entropy of PHOC logits per proposal, averaged over
/// proposals.
fn phoc_objective(
    g: &mut Graph,
    b: &Binding,
    config: &ModelConfig,
    charset: &Charset,
    e: Var,
    transcripts: &[Word],
) -> Result<Var> {
    let logits = network::phoc_logits(g, b, e, config);
    let mut t = Vec::with_capacity(transcripts.len() * config.phoc_dim());
    for w in transcripts {
        t.extend(phoc_encode(w, charset, &config.phoc_levels)?.to_f64());
    }
    let bce = g.bce_with_logits(logits, &Tensor::new(&[transcripts.len(), config.phoc_dim()], t), None);
    Ok(g.scale(bce, 1.0 / transcripts.len() as f64))
}

/// SGD over one training set. Owns the parameters being optimized.
pub struct Trainer<'a> {
    config: TrainConfig,
    model_config: ModelConfig,
    data: &'a TrainingSet,
    params: ParameterStore,
    /// The crop-based retrieval network of separated training.
    retrieval: Option<ParameterStore>,
    optimizer: Optimizer,
    retrieval_optimizer: Optimizer,
    ratios: EditOperatorRatios,
    rng: ChaCha8Rng,
}

impl<'a> Trainer<'a> {
    pub fn new(config: &TrainConfig, data: &'a TrainingSet) -> Result<Self> {
        config.validate()?;
        let model_config = config.model_config(data.charset.len());
        model_config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = ParameterStore::init(&model_config, &mut rng)?;
        let retrieval = match config.mode {
            Mode::Separated => Some(ParameterStore::init(&model_config, &mut rng)?),
            _ => None,
        };
        let ratios = if config.mode.uses_was() {
            config.ratios()?
        } else {
            EditOperatorRatios::identity()
        };
        let opt = || match config.optimizer {
            OptimizerKind::Sgd => Optimizer::Sgd(Sgd::new(config.momentum, config.weight_decay, config.grad_clip)),
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(config.momentum, config.weight_decay, config.grad_clip)),
        };
        Ok(Trainer {
            config: config.clone(),
            model_config,
            data,
            params,
            retrieval,
            optimizer: opt(),
            retrieval_optimizer: opt(),
            ratios,
            rng,
        })
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn model_config(&self) -> &ModelConfig {
        &self.model_config
    }

    pub fn checkpoint(&self, iterations: usize) -> Checkpoint {
        let mut ck = Checkpoint::new(self.model_config.clone(), self.params.clone());
        ck.retrieval = self.retrieval.clone();
        let meta: BTreeMap<String, String> = [
            (meta::CHARSET, self.data.charset.to_text()),
            (meta::FOLD_CASE, self.data.charset.folds_case().to_string()),
            (meta::MODE, self.config.mode.name().to_string()),
            (meta::SEED, self.config.seed.to_string()),
            (meta::ITERATIONS, iterations.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        ck.meta = meta;
        ck
    }

    fn sample_batch(&mut self) -> Vec<usize> {
        let n = self.data.len();
        let k = self.config.batch_size.min(n);
        let mut idx = sample(&mut self.rng, n, k).into_vec();
        idx.sort_unstable();
        idx
    }

    /// Proposals of every batch image (detections matched to ground truth,
    /// then the ground truth itself) as `(batch index, box)`.
    fn batch_proposals(&self, g: &Graph, heads: &[Var], batch: &[usize]) -> (Vec<(usize, BBox)>, Vec<Word>) {
        let (w, h) = (self.data.images[0].width(), self.data.images[0].height());
        let mut boxes = Vec::new();
        let mut words = Vec::new();
        for (n, &i) in batch.iter().enumerate() {
            let inst = &self.data.instances[i];
            if inst.is_empty() {
                continue;
            }
            let detected = network::decode_proposals(g, heads, n, w, h, &self.model_config);
            let usable: Vec<BBox> = detected
                .boxes
                .into_iter()
                .filter(|b| b.width() >= 1.0 && b.height() >= 1.0)
                .collect();
            let gt: Vec<BBox> = inst.iter().map(|(b, _)| *b).collect();
            for m in training_proposals(&usable, &gt, self.config.match_iou, self.config.matched_per_gt) {
                boxes.push((n, m.bbox));
                words.push(inst[m.gt].1.clone());
            }
        }
        (boxes, words)
    }

    fn joint_sequences(
        &self,
        g: &mut Graph,
        b: &Binding,
        pyr: &Pyramid,
        boxes: &[(usize, BBox)],
        words: Vec<Word>,
    ) -> Result<Sequences> {
        let rois = network::roi_features(g, pyr.p2, boxes, &self.model_config)?;
        let e = network::image_s2sm(g, b, rois, &self.model_config)?;
        Ok(Sequences { e, transcripts: words })
    }

    fn crop_sequences(
        &self,
        g: &mut Graph,
        rb: &Binding,
        batch: &[usize],
        boxes: &[(usize, BBox)],
        words: Vec<Word>,
    ) -> Result<Sequences> {
        let mc = &self.model_config;
        let mut all = Vec::new();
        for (n, &i) in batch.iter().enumerate() {
            let mine: Vec<BBox> = boxes.iter().filter(|(bn, _)| *bn == n).map(|(_, b)| *b).collect();
            if mine.is_empty() {
                continue;
            }
            all.push(crops_to_tensor(&self.data.images[i], &mine, mc.crop_width, mc.crop_height)?);
        }
        let k: usize = all.iter().map(|t| t.dim(0)).sum();
        let mut data = Vec::with_capacity(k * 3 * mc.crop_height * mc.crop_width);
        let mut shape = vec![k, 3, 0, 0];
        for t in all {
            shape[2] = t.dim(2);
            shape[3] = t.dim(3);
            data.extend(t.into_data());
        }
        let crops = g.constant(Tensor::new(&shape, data));
        let e = crop_features(g, rb, crops, mc)?;
        Ok(Sequences { e, transcripts: words })
    }

    /// One forward/backward pass and parameter update at `iteration`.
    pub fn step(&mut self, iteration: usize) -> Result<StepReport> {
        let lr = self.config.lr_at(iteration);
        let batch = self.sample_batch();
        let transcripts: Vec<Word> = batch
            .iter()
            .flat_map(|&i| self.data.instances[i].iter().map(|(_, w)| w.clone()))
            .collect();
        let queries = build_queries(
            &transcripts,
            &self.ratios,
            &self.data.charset,
            self.model_config.max_word_len,
            &mut self.rng,
        )?;
        let Some(queries) = queries else {
            return Ok(StepReport {
                iteration,
                detection: 0.0,
                similarity: 0.0,
                ctc: 0.0,
                total: 0.0,
                lr,
                grad_norm: 0.0,
                proposals: 0,
                skipped: true,
            });
        };
        let mc = self.model_config.clone();
        let mode = self.config.mode;

        let mut g = Graph::new();
        let b = self.params.bind(&mut g);
        let rb = self.retrieval.as_ref().map(|r| r.bind(&mut g));
        let imgs: Vec<&Image> = batch.iter().map(|&i| &self.data.images[i]).collect();
        let x = g.constant(network::images_to_tensor(&imgs)?);
        let pyr = network::backbone(&mut g, &b, x);
        let heads = [
            network::detection_head(&mut g, &b, pyr.p2),
            network::detection_head(&mut g, &b, pyr.p3),
        ];
        let gt: Vec<Vec<BBox>> = batch
            .iter()
            .map(|&i| self.data.instances[i].iter().map(|(b, _)| *b).collect())
            .collect();
        let targets = network::detection_targets(&g, &heads, &gt, &mc);
        let ld = network::detection_loss(&mut g, &heads, &targets);

        let (boxes, words) = self.batch_proposals(&g, &heads, &batch);
        let seq = match &rb {
            Some(rb) => self.crop_sequences(&mut g, rb, &batch, &boxes, words)?,
            None => self.joint_sequences(&mut g, &b, &pyr, &boxes, words)?,
        };
        let branch = rb.as_ref().unwrap_or(&b);
        let ls = match mode {
            Mode::PhocHead => phoc_objective(&mut g, branch, &mc, &self.data.charset, seq.e, &seq.transcripts)?,
            _ => similarity_objective(
                &mut g,
                branch,
                &mc,
                seq.e,
                &seq.transcripts,
                &queries,
                self.config.row_reduce,
                mode.uses_pp_qq(),
            )?,
        };
        let lc = if mode.uses_ctc() {
            let logits = network::ctc_logits(&mut g, branch, seq.e);
            let labels: Vec<Vec<u32>> = seq.transcripts.iter().map(|w| w.symbols().to_vec()).collect();
            Some(g.ctc_loss(logits, &labels, mc.charset_size as u32))
        } else {
            None
        };
        let total = loss_total_graph(&mut g, ld, ls, lc, iteration)?;
        let mut report = StepReport {
            iteration,
            detection: g.value(ld).item(),
            similarity: g.value(ls).item(),
            ctc: lc.map_or(0.0, |v| g.value(v).item()),
            total: g.value(total).item(),
            lr,
            grad_norm: 0.0,
            proposals: seq.transcripts.len(),
            skipped: false,
        };

        let mut grads = g.backward(total);
        let main = b.gradients(&mut grads);
        report.grad_norm = self.optimizer.step(&mut self.params, &main, lr);
        if let (Some(rb), Some(rp)) = (&rb, self.retrieval.as_mut()) {
            let aux = rb.gradients(&mut grads);
            self.retrieval_optimizer.step(rp, &aux, lr);
        }
        if !self.params.is_finite() || self.retrieval.as_ref().is_some_and(|r| !r.is_finite()) {
            return Err(TrainError::NonFinite {
                term: "parameters",
                value: f64::NAN,
                iteration,
            });
        }
        Ok(report)
    }
}

/// Files written by [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub final_report: StepReport,
    pub skipped: usize,
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> TrainError + '_ {
    move |source| TrainError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Runs `config.iterations` steps, logging one CSV row per step to
/// `out_dir/metrics.csv` and writing `out_dir/model.ckpt` periodically and
/// at the end. A non-finite loss or collapsed features stop training and
/// dump the current parameters to `out_dir/diverged.ckpt`.
pub fn train(config: &TrainConfig, data: &TrainingSet, out_dir: &Path) -> Result<TrainOutcome> {
    std::fs::create_dir_all(out_dir).map_err(|source| TrainError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let metrics = out_dir.join(METRICS_FILE);
    let checkpoint = out_dir.join(CHECKPOINT_FILE);
    let mut log = csv::Writer::from_path(&metrics).map_err(csv_err(&metrics))?;
    log.write_record(["iteration", "L_d", "L_s", "L_c", "L", "lr"])
        .map_err(csv_err(&metrics))?;
    let mut trainer = Trainer::new(config, data)?;
    log::info!(
        "training {} for {} iterations on {} images ({} parameters)",
        config.mode,
        config.iterations,
        data.len(),
        trainer.params.numel()
    );
    let mut last = None;
    let mut skipped = 0;
    for it in 0..config.iterations {
        let report = match trainer.step(it) {
            Ok(r) => r,
            Err(e @ (TrainError::NonFinite { .. } | TrainError::Model(ModelError::Degenerate(_)))) => {
                let dump = out_dir.join(DUMP_FILE);
                trainer.checkpoint(it).save(&dump)?;
                return Err(TrainError::Diverged {
                    iteration: it,
                    reason: e.to_string(),
                    dump,
                });
            }
            Err(e) => return Err(e),
        };
        if report.skipped {
            skipped += 1;
        } else {
            log.write_record([
                it.to_string(),
                report.detection.to_string(),
                report.similarity.to_string(),
                report.ctc.to_string(),
                report.total.to_string(),
                report.lr.to_string(),
            ])
            .map_err(csv_err(&metrics))?;
        }
        if config.log_every > 0 && (it % config.log_every == 0 || it + 1 == config.iterations) {
            log::info!(
                "it {it}: L={:.4} (d {:.4}, s {:.4}, c {:.4}) lr {:.2e}, {} proposals",
                report.total,
                report.detection,
                report.similarity,
                report.ctc,
                report.lr,
                report.proposals
            );
        }
        if config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0 && it + 1 < config.iterations {
            trainer.checkpoint(it + 1).save(&checkpoint)?;
        }
        last = Some(report);
    }
    log.flush().map_err(|source| TrainError::Io {
        path: metrics.clone(),
        source,
    })?;
    trainer.checkpoint(config.iterations).save(&checkpoint)?;
    Ok(TrainOutcome {
        checkpoint,
        metrics,
        final_report: last.expect("at least one iteration"),
        skipped,
    })
}
