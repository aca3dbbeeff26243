//! Small end-to-end experiments: generate a split, train, evaluate.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use textseek_core::image::Image;
use textseek_core::{BBox, Charset, Word};
use textseek_model::Checkpoint;
use textseek_retrieval::{mean_ap, GalleryIndex, MapReport, Retriever};
use textseek_synth::{builtin_lexicon, render_sample, SynthConfig};
use textseek_train::{StepReport, TrainConfig, Trainer, TrainingSet};

use crate::error::{CliError, Result};

/// A generated training set and a disjoint gallery over the same lexicon.
#[derive(Debug, Clone)]
pub struct DeskSplit {
    pub lexicon: Vec<String>,
    pub train: TrainingSet,
    pub gallery: Vec<(String, Image)>,
    pub gallery_gt: BTreeMap<String, Vec<(BBox, String)>>,
}

impl DeskSplit {
    /// Renders `train_images + gallery_images` scenes with words drawn from
    /// a `lexicon_size` subset of the built-in word list.
    pub fn generate(lexicon_size: usize, train_images: usize, gallery_images: usize, seed: u64) -> Result<Self> {
        let charset = Charset::latin36();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lexicon = builtin_lexicon(lexicon_size, &charset, &mut rng)?;
        let cfg = SynthConfig::default();
        let scene = |rng: &mut ChaCha8Rng| -> Result<(Image, Vec<(BBox, Word)>)> {
            let s = render_sample(&lexicon, &cfg, rng)?;
            Ok((s.image, s.instances.into_iter().map(|i| (i.bbox, i.text)).collect()))
        };
        let mut images = Vec::with_capacity(train_images);
        let mut instances = Vec::with_capacity(train_images);
        for _ in 0..train_images {
            let (img, inst) = scene(&mut rng)?;
            images.push(img);
            instances.push(inst);
        }
        let mut gallery = Vec::with_capacity(gallery_images);
        let mut gallery_gt = BTreeMap::new();
        for i in 0..gallery_images {
            let (img, inst) = scene(&mut rng)?;
            let id = format!("g{i:04}");
            gallery_gt.insert(id.clone(), inst.into_iter().map(|(b, w)| (b, w.as_str().to_string())).collect());
            gallery.push((id, img));
        }
        Ok(DeskSplit {
            lexicon: lexicon.iter().map(|w| w.as_str().to_string()).collect(),
            train: TrainingSet::new(charset, images, instances)?,
            gallery,
            gallery_gt,
        })
    }

    /// Gallery transcripts keyed by image id.
    pub fn transcripts(&self) -> BTreeMap<String, Vec<String>> {
        self.gallery_gt
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().map(|(_, t)| t.clone()).collect()))
            .collect()
    }
}

/// Trains in memory and returns the final checkpoint with the per-step
/// losses.
pub fn train_in_memory(config: &TrainConfig, data: &TrainingSet) -> Result<(Checkpoint, Vec<StepReport>)> {
    let mut trainer = Trainer::new(config, data)?;
    let mut log = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let r = trainer.step(it)?;
        if config.log_every > 0 && it % config.log_every == 0 {
            log::info!("{} it {it}: L={:.4} d={:.4} s={:.4} c={:.4}", config.mode, r.total, r.detection, r.similarity, r.ctc);
        }
        log.push(r);
    }
    Ok((trainer.checkpoint(config.iterations), log))
}

/// mAP of the lexicon queries over the split's gallery at native scale.
pub fn evaluate_map(checkpoint: &Checkpoint, split: &DeskSplit) -> Result<MapReport> {
    let retriever = Retriever::from_checkpoint(checkpoint)?;
    let index = GalleryIndex::from_images(&retriever, &split.gallery, &[0])?;
    Ok(mean_ap(&retriever, &index, &split.lexicon, &split.transcripts(), true)?)
}

pub fn ensure(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Runtime(msg.into()))
    }
}
