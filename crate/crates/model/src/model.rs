//! Inference entry points over fixed parameters.

use textseek_core::image::Image;
use textseek_core::{BBox, SequenceFeature, Word};
use textseek_tensor::{Graph, Tensor, Var};

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::fcos::ProposalSet;
use crate::network::{self, Pyramid};
use crate::params::{Binding, ParameterStore};

/// A configuration with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParameterStore,
}

fn to_feature(g: &Graph, e: Var) -> Result<SequenceFeature> {
    let s = g.shape(e);
    Ok(SequenceFeature::new(s[0], s[1], s[2], g.value(e).data().to_vec())?)
}

/// Resizes the pixel region of each box to a fixed `width x height` and
/// stacks the crops, `[K, 3, height, width]`.
pub fn crops_to_tensor(image: &Image, boxes: &[BBox], width: usize, height: usize) -> Result<Tensor> {
    let crops: Vec<Image> = boxes
        .iter()
        .map(|b| Ok(image.crop(b)?.resize(width, height)))
        .collect::<Result<_>>()?;
    let refs: Vec<&Image> = crops.iter().collect();
    if refs.is_empty() {
        return Ok(Tensor::zeros(&[0, 3, height, width]));
    }
    network::images_to_tensor(&refs)
}

/// Sequence features of crops `[K, 3, h, w]`: each crop is pooled whole.
pub fn crop_features(g: &mut Graph, b: &Binding, crops: Var, config: &ModelConfig) -> Result<Var> {
    let s = g.shape(crops).to_vec();
    if s[0] == 0 {
        return Ok(g.constant(Tensor::zeros(&[0, config.steps, config.channels])));
    }
    let pyr = network::backbone(g, b, crops);
    let whole = BBox::new(0.0, 0.0, s[3] as f64, s[2] as f64)?;
    let boxes: Vec<(usize, BBox)> = (0..s[0]).map(|k| (k, whole)).collect();
    let rois = network::roi_features(g, pyr.p2, &boxes, config)?;
    network::image_s2sm(g, b, rois, config)
}

impl Model {
    pub fn new(config: ModelConfig, params: ParameterStore) -> Result<Self> {
        config.validate()?;
        // Only the shapes of the probe matter. A constant stream would stall the
        // normal sampler, so step through values with a large odd increment.
        let mut stream = rand::rngs::mock::StepRng::new(0x853c_49e6_748f_ea9b, 0xda3e_39cb_94b9_5bdb);
        let probe = ParameterStore::init(&config, &mut stream)?;
        for (name, t) in probe.iter() {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                Some(p) => {
                    return Err(ModelError::Config(format!(
                        "parameter {name} has shape {:?}, expected {:?}",
                        p.shape(),
                        t.shape()
                    )))
                }
                None => return Err(ModelError::Config(format!("parameter {name} is missing"))),
            }
        }
        Ok(Model { config, params })
    }

    fn graph(&self) -> (Graph, Binding) {
        let mut g = Graph::inference();
        let b = self.params.bind(&mut g);
        (g, b)
    }

    fn pyramid(&self, g: &mut Graph, b: &Binding, image: &Image) -> Result<Pyramid> {
        if image.width() < 8 || image.height() < 8 {
            return Err(ModelError::InvalidInput(format!(
                "image of {}x{} is too small",
                image.width(),
                image.height()
            )));
        }
        let x = g.constant(network::images_to_tensor(&[image])?);
        Ok(network::backbone(g, b, x))
    }

    /// Proposals of one image, in its own pixel coordinates.
    pub fn detect(&self, image: &Image) -> Result<ProposalSet> {
        Ok(self.detect_and_encode(image)?.0)
    }

    /// Proposals and their sequence features from one backbone pass.
    pub fn detect_and_encode(&self, image: &Image) -> Result<(ProposalSet, SequenceFeature)> {
        let (mut g, b) = self.graph();
        let pyr = self.pyramid(&mut g, &b, image)?;
        let heads = [
            network::detection_head(&mut g, &b, pyr.p2),
            network::detection_head(&mut g, &b, pyr.p3),
        ];
        let proposals = network::decode_proposals(&g, &heads, 0, image.width(), image.height(), &self.config);
        let boxes: Vec<(usize, BBox)> = proposals.boxes.iter().map(|&bx| (0, bx)).collect();
        let rois = network::roi_features(&mut g, pyr.p2, &boxes, &self.config)?;
        let e = network::image_s2sm(&mut g, &b, rois, &self.config)?;
        Ok((proposals, to_feature(&g, e)?))
    }

    /// Sequence features of given boxes of one image.
    pub fn encode_boxes(&self, image: &Image, boxes: &[BBox]) -> Result<SequenceFeature> {
        let (mut g, b) = self.graph();
        let pyr = self.pyramid(&mut g, &b, image)?;
        let boxes: Vec<(usize, BBox)> = boxes.iter().map(|&bx| (0, bx)).collect();
        let rois = network::roi_features(&mut g, pyr.p2, &boxes, &self.config)?;
        let e = network::image_s2sm(&mut g, &b, rois, &self.config)?;
        to_feature(&g, e)
    }

    /// Sequence features of boxes cropped out and resized, for a retrieval
    /// network trained on crops.
    pub fn encode_crops(&self, image: &Image, boxes: &[BBox]) -> Result<SequenceFeature> {
        let (mut g, b) = self.graph();
        let crops = crops_to_tensor(image, boxes, self.config.crop_width, self.config.crop_height)?;
        let x = g.constant(crops);
        let e = crop_features(&mut g, &b, x, &self.config)?;
        to_feature(&g, e)
    }

    /// Query features `F`, `[N, T, C]`.
    pub fn encode_words(&self, words: &[Word]) -> Result<SequenceFeature> {
        let (mut g, b) = self.graph();
        let x = network::embed_words(&mut g, &b, words, &self.config)?;
        let f = network::text_s2sm(&mut g, &b, x, &self.config)?;
        to_feature(&g, f)
    }

    /// Greedy CTC transcription of sequence features.
    pub fn transcribe(&self, features: &SequenceFeature) -> Vec<Vec<u32>> {
        let (mut g, b) = self.graph();
        let e = g.constant(Tensor::new(
            &[features.count(), features.steps(), features.channels()],
            features.values().to_vec(),
        ));
        let logits = network::ctc_logits(&mut g, &b, e);
        network::greedy_decode(g.value(logits), self.config.charset_size)
    }

    /// Sigmoid PHOC predictions, one vector per feature.
    pub fn predict_phoc(&self, features: &SequenceFeature) -> Vec<Vec<f64>> {
        let (mut g, b) = self.graph();
        let e = g.constant(Tensor::new(
            &[features.count(), features.steps(), features.channels()],
            features.values().to_vec(),
        ));
        let logits = network::phoc_logits(&mut g, &b, e, &self.config);
        let p = g.sigmoid(logits);
        g.value(p).data().chunks(self.config.phoc_dim()).map(<[f64]>::to_vec).collect()
    }
}
