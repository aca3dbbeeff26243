//! One function per subcommand.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use textseek_core::augment::{augment_query_set, similarity_histogram, mass_at_or_above, EditOperatorRatios};
use textseek_core::{Charset, Word};
use textseek_retrieval::{
    annotate, manifest_gallery, mean_ap, retrieve, GalleryImage, GalleryIndex, MapReport, RetrievalResult, Retriever,
};
use textseek_synth::{builtin_lexicon, generate_dataset, load_lexicon, GalleryManifest, BUILTIN_WORDS};
use textseek_train::{train, Mode, TrainingSet};

use crate::args::{AblateArgs, AnnotateArgs, EvalMapArgs, GenDataArgs, IndexArgs, PlotHistArgs, RetrieveArgs, TrainArgs};
use crate::error::{CliError, Result};
use crate::hist;
use crate::settings::{annotation_path, load_dataset, read_words, write_json, write_text, Settings};

pub const INDEX_FILE: &str = "gallery.idx";
pub const RETRIEVAL_FILE: &str = "retrieval.json";
pub const MAP_FILE: &str = "map.json";
pub const ANNOTATE_FILE: &str = "annotation.json";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const ABLATION_RUNS_FILE: &str = "ablation.json";
pub const HIST_CSV: &str = "hist.csv";
pub const HIST_PNG: &str = "hist.png";

/// Longest pseudoword `plot-hist` may produce.
const MAX_WORD_LEN: usize = 32;

pub fn gen_data(a: &GenDataArgs, s: &Settings, out: &Path) -> Result<()> {
    let charset = match &a.charset {
        Some(path) => Charset::load(path)
            .map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?
            .with_case_folding(a.fold_case),
        None => Charset::latin36(),
    };
    let lexicon = match &a.lexicon {
        Some(path) => load_lexicon(path, &charset)?,
        None => builtin_lexicon(a.lexicon_size, &charset, &mut ChaCha8Rng::seed_from_u64(s.seed))?,
    };
    let manifest = generate_dataset(a.images, &lexicon, &charset, &s.synth, s.seed, out)?;
    let instances: usize = manifest.samples.iter().map(|x| x.instances.len()).sum();
    println!(
        "wrote {} images with {instances} words from a {}-word lexicon to {}",
        manifest.samples.len(),
        lexicon.len(),
        out.display()
    );
    Ok(())
}

pub fn train_model(a: &TrainArgs, s: &Settings, out: &Path) -> Result<textseek_train::TrainConfig> {
    let mut config = s.train_with(&a.overrides)?;
    if let Some(m) = a.mode {
        config.mode = m;
    }
    if let Some(n) = a.iterations {
        config.iterations = n;
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let data = TrainingSet::from_manifest(&load_dataset(&a.data)?)?;
    let outcome = train(&config, &data, out)?;
    let r = outcome.final_report;
    println!(
        "trained {} for {} iterations: L={:.4} (detection {:.4}, similarity {:.4}, ctc {:.4}); checkpoint {}",
        config.mode,
        config.iterations,
        r.total,
        r.detection,
        r.similarity,
        r.ctc,
        outcome.checkpoint.display()
    );
    Ok(config)
}

/// Gallery images of a dataset, or every PNG in a plain directory (ids are
/// file names, in sorted order).
fn gallery_images(path: &Path) -> Result<Vec<GalleryImage>> {
    let annotations = annotation_path(path);
    if annotations.is_file() {
        return Ok(manifest_gallery(&GalleryManifest::load(&annotations)?).0);
    }
    if !path.is_dir() {
        return Err(CliError::Runtime(format!("{}: not a dataset or image directory", path.display())));
    }
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut images = Vec::new();
    for entry in std::fs::read_dir(path).map_err(io)? {
        let p = entry.map_err(io)?.path();
        if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            images.push(GalleryImage {
                id: p.file_name().unwrap().to_string_lossy().into_owned(),
                path: p,
            });
        }
    }
    images.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(images)
}

pub fn index(a: &IndexArgs, out: &Path) -> Result<()> {
    let retriever = Retriever::load(&a.checkpoint)?;
    let images = gallery_images(&a.data)?;
    let index = GalleryIndex::build(&retriever, &images, &a.scales)?;
    let path = out.join(INDEX_FILE);
    index.save(&path)?;
    let proposals: usize = index.images.iter().map(|e| e.proposals.len()).sum();
    println!(
        "indexed {} images ({proposals} proposals, {} skipped) into {}",
        index.images.len(),
        index.warnings.len(),
        path.display()
    );
    Ok(())
}

fn load_pair(checkpoint: &Path, index: &Path) -> Result<(Retriever, GalleryIndex)> {
    Ok((Retriever::load(checkpoint)?, GalleryIndex::load(index)?))
}

pub fn retrieve_queries(a: &RetrieveArgs, out: &Path) -> Result<Vec<RetrievalResult>> {
    let (retriever, index) = load_pair(&a.checkpoint, &a.index)?;
    let mut results = Vec::with_capacity(a.queries.len());
    for q in &a.queries {
        let mut r = retrieve(&retriever, &index, q)?;
        if a.topk > 0 {
            r.truncate(a.topk);
        }
        results.push(r);
    }
    write_json(&out.join(RETRIEVAL_FILE), &results)?;
    println!("{}", serde_json::to_string_pretty(&results).expect("results serialize"));
    Ok(results)
}

/// Lexicon of a dataset as strings, or its distinct transcripts when it
/// has no lexicon file.
fn dataset_queries(manifest: &GalleryManifest) -> Result<Vec<String>> {
    let charset = manifest.charset()?;
    Ok(match manifest.lexicon(&charset)? {
        Some(words) => words.iter().map(|w| w.as_str().to_string()).collect(),
        None => {
            let mut all: Vec<String> = manifest
                .samples
                .iter()
                .flat_map(|s| s.instances.iter().map(|i| i.text.clone()))
                .collect();
            all.sort();
            all.dedup();
            all
        }
    })
}

pub fn eval_map(a: &EvalMapArgs, out: &Path) -> Result<MapReport> {
    let (retriever, index) = load_pair(&a.checkpoint, &a.index)?;
    let manifest = load_dataset(&a.data)?;
    let queries = match &a.queries {
        Some(p) => read_words(p)?,
        None => dataset_queries(&manifest)?,
    };
    let (_, gt) = manifest_gallery(&manifest);
    let report = mean_ap(&retriever, &index, &queries, &gt, a.fold_case || manifest.fold_case)?;
    write_json(&out.join(MAP_FILE), &report)?;
    println!(
        "mAP {:.4} over {} queries ({} without relevant images)",
        report.map,
        report.queries.len() - report.skipped,
        report.skipped
    );
    Ok(report)
}

pub fn annotate_image(a: &AnnotateArgs, out: &Path) -> Result<()> {
    let retriever = Retriever::load(&a.checkpoint)?;
    let image = textseek_synth::load_image(&a.image)?;
    let words: Vec<Word> = a
        .words
        .iter()
        .map(|w| retriever.parse_query(w))
        .collect::<std::result::Result<_, _>>()?;
    let result = annotate(&retriever, &image, &words, &a.scales)?;
    write_json(&out.join(ANNOTATE_FILE), &result)?;
    println!("{}", serde_json::to_string_pretty(&result).expect("annotation serializes"));
    Ok(())
}

/// Row label of a mode in the ablation table.
pub fn method_label(mode: Mode) -> String {
    match mode {
        Mode::Baseline => "baseline".into(),
        Mode::NoWas => "+CTC".into(),
        Mode::NoCtc => "+WAS".into(),
        Mode::Joint => "+WAS+CTC".into(),
        other => other.name().into(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRun {
    pub mode: String,
    pub seed: u64,
    pub map: f64,
    pub checkpoint: PathBuf,
}

pub fn ablate(a: &AblateArgs, s: &Settings, out: &Path) -> Result<Vec<AblationRun>> {
    if a.runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    if a.modes.is_empty() {
        return Err(CliError::Usage("--modes is empty".into()));
    }
    let base = s.train_with(&a.overrides)?;
    let data = TrainingSet::from_manifest(&load_dataset(&a.data)?)?;
    let test = load_dataset(&a.test)?;
    let (images, gt) = manifest_gallery(&test);
    let queries = dataset_queries(&test)?;
    let fold = a.fold_case || test.fold_case;
    let seeds: Vec<u64> = (0..a.runs as u64).map(|r| s.seed + r).collect();

    let mut runs = Vec::new();
    let mut csv = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["method".to_string(), "mode".into(), "was".into(), "ctc".into(), "map".into()];
    header.extend(seeds.iter().map(|s| format!("map_seed_{s}")));
    csv.write_record(&header).expect("in-memory csv");
    for &mode in &a.modes {
        let mut maps = Vec::with_capacity(seeds.len());
        for &seed in &seeds {
            let mut config = base.clone();
            config.mode = mode;
            config.seed = seed;
            let dir = out.join(mode.name()).join(format!("seed-{seed}"));
            log::info!("ablation: {mode} seed {seed}");
            let outcome = train(&config, &data, &dir)?;
            let retriever = Retriever::load(&outcome.checkpoint)?;
            let index = GalleryIndex::build(&retriever, &images, &a.scales)?;
            let report = mean_ap(&retriever, &index, &queries, &gt, fold)?;
            write_json(&dir.join(MAP_FILE), &report)?;
            println!("{:<10} seed {seed}: mAP {:.4}", method_label(mode), report.map);
            maps.push(report.map);
            runs.push(AblationRun {
                mode: mode.name().into(),
                seed,
                map: report.map,
                checkpoint: outcome.checkpoint,
            });
        }
        let mean = maps.iter().sum::<f64>() / maps.len() as f64;
        let mut row = vec![
            method_label(mode),
            mode.name().to_string(),
            mode.uses_was().to_string(),
            mode.uses_ctc().to_string(),
            format!("{mean:.6}"),
        ];
        row.extend(maps.iter().map(|m| format!("{m:.6}")));
        csv.write_record(&row).expect("in-memory csv");
    }
    let table = String::from_utf8(csv.into_inner().expect("in-memory csv")).expect("csv is utf-8");
    write_text(&out.join(ABLATION_FILE), &table)?;
    write_json(&out.join(ABLATION_RUNS_FILE), &runs)?;
    print!("{table}");
    Ok(runs)
}

/// `n` distinct words with lengths uniform in 3..=10 and symbols uniform
/// over the charset.
pub fn random_words(n: usize, charset: &Charset, rng: &mut impl Rng) -> Result<Vec<Word>> {
    let mut seen = std::collections::BTreeSet::new();
    let mut words = Vec::with_capacity(n);
    while words.len() < n {
        let len = rng.gen_range(3..=10);
        let symbols: Vec<u32> = (0..len).map(|_| rng.gen_range(0..charset.len() as u32)).collect();
        if seen.insert(symbols.clone()) {
            words.push(charset.word_from_indices(symbols)?);
        }
    }
    Ok(words)
}

pub fn plot_hist(a: &PlotHistArgs, s: &Settings, out: &Path) -> Result<Vec<f64>> {
    let charset = Charset::latin36();
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut words: Vec<Word> = match (&a.lexicon, a.random_words) {
        (Some(p), _) => load_lexicon(p, &charset)?,
        (None, Some(n)) => random_words(n, &charset, &mut rng)?,
        (None, None) => BUILTIN_WORDS
            .iter()
            .map(|w| charset.encode(w))
            .collect::<std::result::Result<_, _>>()?,
    };
    if a.augment {
        let ratios = EditOperatorRatios::parse(&a.ratios).map_err(|e| CliError::Usage(format!("--ratios: {e}")))?;
        words = augment_query_set(&words, &ratios, &charset, MAX_WORD_LEN, &mut rng)?;
    }
    let freq = similarity_histogram(&words, a.bins).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["low", "high", "frequency"]).expect("in-memory csv");
    for b in hist::bins(&freq) {
        csv.write_record([format!("{:.4}", b.low), format!("{:.4}", b.high), format!("{:.6}", b.frequency)])
            .expect("in-memory csv");
    }
    let table = String::from_utf8(csv.into_inner().expect("in-memory csv")).expect("csv is utf-8");
    write_text(&out.join(HIST_CSV), &table)?;
    textseek_synth::save_image(&hist::render(&freq), &out.join(HIST_PNG))?;
    println!(
        "{} words, {} pairs; similarity mass in [0.5, 1]: {:.4}",
        words.len(),
        words.len() * (words.len() - 1) / 2,
        mass_at_or_above(&freq, 0.5)
    );
    Ok(freq)
}
