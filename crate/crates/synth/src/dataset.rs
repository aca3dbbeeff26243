//! Writing generated samples to disk and reading them back.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use textseek_core::image::Image;
use textseek_core::{BBox, Charset, Word};

use crate::error::{io_err, Result, SynthError};
use crate::lexicon::save_lexicon;
use crate::render::{render_words, SynthConfig};

pub const ANNOTATION_FILE: &str = "annotations.json";
const CHARSET_FILE: &str = "charset.txt";
const LEXICON_FILE: &str = "lexicon.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedInstance {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSample {
    /// Relative to the manifest directory.
    pub image: String,
    pub instances: Vec<AnnotatedInstance>,
}

/// The annotation file of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryManifest {
    pub charset_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon_file: Option<String>,
    #[serde(default)]
    pub fold_case: bool,
    pub samples: Vec<AnnotatedSample>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl GalleryManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut manifest: GalleryManifest = serde_json::from_str(&text).map_err(|source| SynthError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        manifest.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let charset = manifest.charset()?;
        for s in &manifest.samples {
            for inst in &s.instances {
                charset.encode(&inst.text)?;
                inst.bbox.validate()?;
            }
        }
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(io_err(path))
    }

    pub fn charset(&self) -> Result<Charset> {
        let path = self.root.join(&self.charset_file);
        let cs = Charset::load(&path).map_err(io_err(&path))?;
        Ok(cs.with_case_folding(self.fold_case))
    }

    pub fn lexicon(&self, charset: &Charset) -> Result<Option<Vec<Word>>> {
        match &self.lexicon_file {
            Some(f) => Ok(Some(crate::lexicon::load_lexicon(&self.root.join(f), charset)?)),
            None => Ok(None),
        }
    }

    pub fn image_path(&self, index: usize) -> PathBuf {
        self.root.join(&self.samples[index].image)
    }

    pub fn load_image(&self, index: usize) -> Result<Image> {
        load_image(&self.image_path(index))
    }

    /// Ground-truth boxes and encoded transcripts of one sample.
    pub fn instances(&self, index: usize, charset: &Charset) -> Result<Vec<(BBox, Word)>> {
        self.samples[index]
            .instances
            .iter()
            .map(|i| Ok((i.bbox, charset.encode(&i.text)?)))
            .collect()
    }
}

pub fn save_image(image: &Image, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let buf = image::RgbImage::from_raw(image.width() as u32, image.height() as u32, bytes).expect("buffer matches dims");
    buf.save_with_format(path, image::ImageFormat::Png).map_err(|source| SynthError::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_image(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|source| SynthError::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
    Ok(Image::from_raw(w as usize, h as usize, data)?)
}

/// Per-sample generator, so any sample can be regenerated on its own.
fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Renders `n` images into `out_dir/images/` and writes the charset,
/// lexicon and annotation file. Sample `i` always contains
/// `lexicon[i % lexicon.len()]` (when it fits), so every word is covered
/// once `n >= lexicon.len()`.
pub fn generate_dataset(
    n: usize,
    lexicon: &[Word],
    charset: &Charset,
    config: &SynthConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<GalleryManifest> {
    if n == 0 {
        return Err(SynthError::InvalidConfig("need at least one sample".into()));
    }
    if lexicon.is_empty() {
        return Err(SynthError::InvalidConfig("empty lexicon".into()));
    }
    config.validate()?;
    let images = out_dir.join("images");
    std::fs::create_dir_all(&images).map_err(io_err(&images))?;
    charset.save(out_dir.join(CHARSET_FILE)).map_err(io_err(out_dir.join(CHARSET_FILE)))?;
    save_lexicon(&out_dir.join(LEXICON_FILE), lexicon)?;

    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = sample_rng(seed, i);
        let count = rng.gen_range(config.min_words.max(1)..=config.max_words.max(1));
        let mut words = vec![lexicon[i % lexicon.len()].clone()];
        for _ in 1..count {
            words.push(lexicon[rng.gen_range(0..lexicon.len())].clone());
        }
        let sample = render_words(&words, config, &mut rng)?;
        let name = format!("images/{i:06}.png");
        save_image(&sample.image, &out_dir.join(&name))?;
        samples.push(AnnotatedSample {
            image: name,
            instances: sample
                .instances
                .iter()
                .map(|inst| AnnotatedInstance {
                    bbox: inst.bbox,
                    text: inst.text.as_str().to_string(),
                })
                .collect(),
        });
    }
    let manifest = GalleryManifest {
        charset_file: CHARSET_FILE.to_string(),
        lexicon_file: Some(LEXICON_FILE.to_string()),
        fold_case: charset.folds_case(),
        samples,
        root: out_dir.to_path_buf(),
    };
    manifest.save(&out_dir.join(ANNOTATION_FILE))?;
    Ok(manifest)
}
