//! Experiment orchestration: corpus preparation, quanvolution with caching,
//! the stage-1 and stage-2 comparison protocols, and report emission.
//!
//! Protocol fairness is structural: for every comparison the QNN and CNN
//! share the test set, epoch count, optimizer settings, and classifier
//! head; only the front end differs.

pub mod config;
pub mod dataset;
pub mod models;
pub mod report;

pub use config::{DatasetSource, ExperimentConfig, Stage};
pub use dataset::{generate_synthetic, ingest_stage1, ingest_stage2, LabeledImage, SyntheticCrackSpec};
pub use report::{emit_report, ComparisonReport, LocalizationRecord, ModelKind, QuanvStats, RunRecord};

use ndarray::{Array2, Array3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::imaging::{
    self, label_regions, split_image, stitch_predictions, CategoryRow, CategoryTable, MaskLabeling,
    RegionGrid, GRID,
};
use crate::nn::{self, Dataset, TrainConfig};
use crate::quanv::{quanvolve_batch, QuanvConfig};

/// Stream tags for deriving independent sub-seeds from a master seed.
fn derive_seed(base: u64, master: u64, tag: u64) -> u64 {
    let mut z = base
        .wrapping_add(master.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(tag.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn model_tag(kind: ModelKind) -> u64 {
    match kind {
        ModelKind::Qnn => 0,
        ModelKind::Cnn => 1,
    }
}

/// SHA-256 over ids, labels, and pixel bytes of a set of images.
fn corpus_hash<'a>(images: impl Iterator<Item = &'a LabeledImage>) -> String {
    let mut hasher = Sha256::new();
    for img in images {
        hasher.update(img.id.as_bytes());
        hasher.update([img.label as u8]);
        for &p in img.pixels.iter() {
            hasher.update(p.to_le_bytes());
        }
    }
    let digest: [u8; 32] = hasher.finalize().into();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn image_example(pixels: &Array2<f64>) -> Array3<f64> {
    pixels.clone().insert_axis(Axis(2))
}

/// Deterministically shuffled index order for corpus splits.
fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order
}

fn train_one(
    spec: &nn::ModelSpec,
    train_set: &Dataset,
    test_set: &Dataset,
    train_config: &TrainConfig,
    model: ModelKind,
    protocol: &str,
    seed: u64,
    test_set_hash: &str,
) -> Result<(RunRecord, nn::TrainedModel)> {
    let started = Instant::now();
    let (trained, epochs) = nn::train(spec, train_set, test_set, train_config)?;
    log::info!(
        "trained {model} {protocol} seed={seed}: final test acc {:.4}",
        epochs.last().map_or(f64::NAN, |e| e.test_acc)
    );
    Ok((
        RunRecord {
            model,
            protocol: protocol.to_string(),
            seed,
            train_count: train_set.len(),
            test_count: test_set.len(),
            test_set_hash: test_set_hash.to_string(),
            epochs,
            train_seconds: started.elapsed().as_secs_f64(),
        },
        trained,
    ))
}

/// Stage 1: quanvolve the corpus, then train matched QNN/CNN pairs at each
/// configured train count against one shared held-out test set, repeated
/// over the configured master seeds.
pub fn run_stage1(config: &ExperimentConfig) -> Result<ComparisonReport> {
    config.validate()?;
    if config.stage != Stage::One {
        return Err(Error::Config("run_stage1 requires stage = \"one\"".into()));
    }
    let cache_dir = config.effective_cache_dir();
    let quanv_base = config.resolved_quanv();
    let dropout = config.resolved_dropout();
    let max_train = *config.dataset.train_counts.iter().max().unwrap();
    let needed = max_train + config.dataset.test_count;

    let corpus = load_corpus(config)?;
    if corpus.len() < needed {
        return Err(Error::Input(format!(
            "corpus has {} images; the protocol needs {needed} (max train count + test count)",
            corpus.len()
        )));
    }

    let order = shuffled_indices(corpus.len(), config.dataset.shuffle_seed);
    let test_idx = &order[order.len() - config.dataset.test_count..];
    let pool_idx = &order[..max_train];
    let test_images: Vec<&LabeledImage> = test_idx.iter().map(|&i| &corpus[i]).collect();
    let test_set_hash = corpus_hash(test_images.iter().copied());
    log::info!(
        "stage 1: {} train pool, {} test images, hash {}",
        pool_idx.len(),
        test_images.len(),
        &test_set_hash[..12]
    );

    let parameter_note = models::stage1_parameter_note();
    log::info!("{parameter_note}");

    let mut quanv_stats = QuanvStats::default();
    let mut runs = Vec::new();

    for &master in &config.seeds {
        let quanv_config = QuanvConfig {
            seed: derive_seed(quanv_base.seed, master, 0),
            ..quanv_base.clone()
        };

        // Quanvolve the train pool and the test set in one cached pass.
        let mut batch_inputs: Vec<(String, Array2<f64>)> = Vec::new();
        for &i in pool_idx.iter().chain(test_idx) {
            batch_inputs.push((corpus[i].id.clone(), corpus[i].pixels.clone()));
        }
        let outcome = quanvolve_batch(&batch_inputs, &quanv_config, &cache_dir)?;
        quanv_stats.absorb(&outcome);

        let tensor_shape = {
            let t = &outcome.tensors[0];
            (t.height, t.width, t.channels)
        };
        let pool_tensor_examples: Vec<Array3<f64>> = outcome.tensors[..pool_idx.len()]
            .iter()
            .map(|t| t.values.clone())
            .collect();
        let test_tensor_examples: Vec<Array3<f64>> = outcome.tensors[pool_idx.len()..]
            .iter()
            .map(|t| t.values.clone())
            .collect();
        let pool_labels: Vec<usize> = pool_idx.iter().map(|&i| corpus[i].label).collect();
        let test_labels: Vec<usize> = test_idx.iter().map(|&i| corpus[i].label).collect();

        let image_shape = {
            let (h, w) = corpus[0].pixels.dim();
            (h, w, 1)
        };
        let pool_image_examples: Vec<Array3<f64>> = pool_idx
            .iter()
            .map(|&i| image_example(&corpus[i].pixels))
            .collect();
        let test_image_examples: Vec<Array3<f64>> = test_idx
            .iter()
            .map(|&i| image_example(&corpus[i].pixels))
            .collect();

        let qnn_test = Dataset::new(test_tensor_examples, test_labels.clone())?;
        let cnn_test = Dataset::new(test_image_examples, test_labels.clone())?;

        for &train_count in &config.dataset.train_counts {
            let protocol = format!("train{train_count}");
            for kind in [ModelKind::Qnn, ModelKind::Cnn] {
                let (train_set, test_set, spec) = match kind {
                    ModelKind::Qnn => (
                        Dataset::new(
                            pool_tensor_examples[..train_count].to_vec(),
                            pool_labels[..train_count].to_vec(),
                        )?,
                        &qnn_test,
                        models::qnn_stack(
                            tensor_shape,
                            &config.model,
                            dropout,
                            derive_seed(config.train.seed, master, model_tag(kind)),
                        ),
                    ),
                    ModelKind::Cnn => (
                        Dataset::new(
                            pool_image_examples[..train_count].to_vec(),
                            pool_labels[..train_count].to_vec(),
                        )?,
                        &cnn_test,
                        models::cnn_stack(
                            image_shape,
                            &config.model,
                            dropout,
                            derive_seed(config.train.seed, master, model_tag(kind)),
                        ),
                    ),
                };
                let train_config = TrainConfig {
                    seed: derive_seed(config.train.seed, master, 10 + model_tag(kind)),
                    class_weights: None,
                    ..config.train.clone()
                };
                let (record, _) = train_one(
                    &spec,
                    &train_set,
                    test_set,
                    &train_config,
                    kind,
                    &protocol,
                    master,
                    &test_set_hash,
                )?;
                runs.push(record);
            }
        }
    }

    Ok(ComparisonReport {
        stage: Stage::One,
        runs,
        quanv: quanv_stats,
        reference_validation_accuracy: None,
        localization: Vec::new(),
        parameter_note,
    })
}

/// Load (or synthesize) the configured corpus and quanvolve it into the
/// cache: whole images for stage one, grid regions for stage two. Returns
/// the aggregate effort so callers can report cache effectiveness.
pub fn quanvolve_corpus(config: &ExperimentConfig) -> Result<QuanvStats> {
    config.validate()?;
    let cache_dir = config.effective_cache_dir();
    let quanv_base = config.resolved_quanv();

    let corpus = load_corpus(config)?;
    let batch_inputs: Vec<(String, Array2<f64>)> = match config.stage {
        Stage::One => corpus
            .iter()
            .map(|img| (img.id.clone(), img.pixels.clone()))
            .collect(),
        Stage::Two => {
            let table = category_table_for(config, &corpus)?;
            let regions = build_region_corpus(
                &corpus,
                &table,
                config.imaging.positive_threshold,
                config.imaging.allow_fallback,
            )?;
            regions
                .region_ids
                .into_iter()
                .zip(regions.region_pixels)
                .collect()
        }
    };

    let mut stats = QuanvStats::default();
    for &master in &config.seeds {
        let quanv_config = QuanvConfig {
            seed: derive_seed(quanv_base.seed, master, 0),
            ..quanv_base.clone()
        };
        let outcome = quanvolve_batch(&batch_inputs, &quanv_config, &cache_dir)?;
        log::info!(
            "seed {master}: {} computed, {} cache hits",
            outcome.computed,
            outcome.cache_hits
        );
        stats.absorb(&outcome);
    }
    Ok(stats)
}

/// The corpus a config describes, synthetic or on-disk.
pub fn load_corpus(config: &ExperimentConfig) -> Result<Vec<LabeledImage>> {
    match (config.dataset.source, config.stage) {
        (DatasetSource::Synthetic, Stage::One) => {
            let synth = &config.dataset.synthetic;
            if synth.image_sizes.len() != 1 {
                return Err(Error::Config(
                    "stage one uses a single synthetic image size".into(),
                ));
            }
            let spec = synth.spec_for_size(synth.image_sizes[0], synth.seed);
            generate_synthetic(&spec, synth.count)
        }
        (DatasetSource::Synthetic, Stage::Two) => {
            let synth = &config.dataset.synthetic;
            let per_size = (synth.count / synth.image_sizes.len()).max(1);
            let mut all = Vec::new();
            for &size in &synth.image_sizes {
                let spec = synth.spec_for_size(size, derive_seed(synth.seed, size as u64, 0));
                for mut img in generate_synthetic(&spec, per_size)? {
                    img.id = format!("{size}px_{}", img.id);
                    all.push(img);
                }
            }
            Ok(all)
        }
        (DatasetSource::Directory, Stage::One) => {
            ingest_stage1(config.dataset.path.as_ref().expect("validated"))
        }
        (DatasetSource::Directory, Stage::Two) => {
            ingest_stage2(config.dataset.path.as_ref().expect("validated"))
        }
    }
}

/// Corpus loading with an optional synthetic-count override (the `synth`
/// subcommand's `--count` flag).
pub fn load_corpus_synthetic_override(
    config: &ExperimentConfig,
    count: Option<usize>,
) -> Result<Vec<LabeledImage>> {
    match count {
        Some(n) => {
            let mut adjusted = config.clone();
            adjusted.dataset.synthetic.count = n;
            load_corpus(&adjusted)
        }
        None => load_corpus(config),
    }
}

fn category_table_for(
    config: &ExperimentConfig,
    corpus: &[LabeledImage],
) -> Result<CategoryTable> {
    match &config.imaging.categories {
        Some(path) => CategoryTable::load(path),
        None => {
            let resolutions: Vec<(usize, usize)> = corpus.iter().map(|i| i.pixels.dim()).collect();
            derive_category_table(&resolutions)
        }
    }
}

/// Train one stage-1 model (first configured train count and seed); writes
/// the checkpoint and metrics file and returns their paths.
pub fn train_single(
    config: &ExperimentConfig,
    kind: ModelKind,
) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    config.validate()?;
    if config.stage != Stage::One {
        return Err(Error::Config(
            "single-model training works on stage-one configs; use stage2 for the full protocol"
                .into(),
        ));
    }
    let master = config.seeds[0];
    let train_count = config.dataset.train_counts[0];
    let needed = train_count + config.dataset.test_count;
    let corpus = load_corpus(config)?;
    if corpus.len() < needed {
        return Err(Error::Input(format!(
            "corpus has {} images; the run needs {needed}",
            corpus.len()
        )));
    }

    let order = shuffled_indices(corpus.len(), config.dataset.shuffle_seed);
    let test_idx = &order[order.len() - config.dataset.test_count..];
    let train_idx = &order[..train_count];
    let test_set_hash = corpus_hash(test_idx.iter().map(|&i| &corpus[i]));
    let train_labels: Vec<usize> = train_idx.iter().map(|&i| corpus[i].label).collect();
    let test_labels: Vec<usize> = test_idx.iter().map(|&i| corpus[i].label).collect();

    let quanv_base = config.resolved_quanv();
    let (train_set, test_set, input_shape) = match kind {
        ModelKind::Qnn => {
            let quanv_config = QuanvConfig {
                seed: derive_seed(quanv_base.seed, master, 0),
                ..quanv_base
            };
            let inputs: Vec<(String, Array2<f64>)> = train_idx
                .iter()
                .chain(test_idx)
                .map(|&i| (corpus[i].id.clone(), corpus[i].pixels.clone()))
                .collect();
            let outcome = quanvolve_batch(&inputs, &quanv_config, &config.effective_cache_dir())?;
            let shape = {
                let t = &outcome.tensors[0];
                (t.height, t.width, t.channels)
            };
            let mut tensors = outcome.tensors.into_iter().map(|t| t.values);
            let train_examples: Vec<Array3<f64>> = tensors.by_ref().take(train_count).collect();
            let test_examples: Vec<Array3<f64>> = tensors.collect();
            (
                Dataset::new(train_examples, train_labels)?,
                Dataset::new(test_examples, test_labels)?,
                shape,
            )
        }
        ModelKind::Cnn => {
            let (h, w) = corpus[0].pixels.dim();
            (
                Dataset::new(
                    train_idx
                        .iter()
                        .map(|&i| image_example(&corpus[i].pixels))
                        .collect(),
                    train_labels,
                )?,
                Dataset::new(
                    test_idx
                        .iter()
                        .map(|&i| image_example(&corpus[i].pixels))
                        .collect(),
                    test_labels,
                )?,
                (h, w, 1),
            )
        }
    };

    let dropout = config.resolved_dropout();
    let spec = match kind {
        ModelKind::Qnn => models::qnn_stack(
            input_shape,
            &config.model,
            dropout,
            derive_seed(config.train.seed, master, model_tag(kind)),
        ),
        ModelKind::Cnn => models::cnn_stack(
            input_shape,
            &config.model,
            dropout,
            derive_seed(config.train.seed, master, model_tag(kind)),
        ),
    };
    let train_config = TrainConfig {
        seed: derive_seed(config.train.seed, master, 10 + model_tag(kind)),
        class_weights: None,
        ..config.train.clone()
    };
    let protocol = format!("train{train_count}");
    let (record, model) = train_one(
        &spec,
        &train_set,
        &test_set,
        &train_config,
        kind,
        &protocol,
        master,
        &test_set_hash,
    )?;

    std::fs::create_dir_all(&config.output_dir)?;
    let metrics_path = config.output_dir.join(format!("{}.csv", record.file_stem()));
    nn::write_metrics(&record.epochs, &metrics_path)?;
    let checkpoint_path = config
        .output_dir
        .join(format!("model_{kind}_{protocol}_s{master}.qmdl"));
    nn::save_model(&model, &checkpoint_path)?;
    log::info!(
        "trained {kind} on {train_count} inputs: final test accuracy {:.4}",
        record.final_test_acc()
    );
    Ok((checkpoint_path, metrics_path))
}

/// Evaluate a checkpoint against the config's stage-1 test set. The input
/// channel count of the checkpoint decides whether it consumes quantum
/// tensors or raw grayscale images.
pub fn evaluate_checkpoint(
    config: &ExperimentConfig,
    checkpoint: &std::path::Path,
) -> Result<(f64, f64)> {
    config.validate()?;
    if config.stage != Stage::One {
        return Err(Error::Config(
            "checkpoint evaluation works on stage-one configs".into(),
        ));
    }
    let model = nn::load_model(checkpoint)?;
    let corpus = load_corpus(config)?;
    let needed = config.dataset.test_count;
    if corpus.len() < needed {
        return Err(Error::Input(format!(
            "corpus has {} images; test_count is {needed}",
            corpus.len()
        )));
    }
    let order = shuffled_indices(corpus.len(), config.dataset.shuffle_seed);
    let test_idx = &order[order.len() - needed..];
    let test_labels: Vec<usize> = test_idx.iter().map(|&i| corpus[i].label).collect();

    let (_, _, channels) = model.spec.input_shape;
    let quanv_base = config.resolved_quanv();
    let test_set = if channels == quanv_base.n_qubits() {
        let quanv_config = QuanvConfig {
            seed: derive_seed(quanv_base.seed, config.seeds[0], 0),
            ..quanv_base
        };
        let inputs: Vec<(String, Array2<f64>)> = test_idx
            .iter()
            .map(|&i| (corpus[i].id.clone(), corpus[i].pixels.clone()))
            .collect();
        let outcome = quanvolve_batch(&inputs, &quanv_config, &config.effective_cache_dir())?;
        Dataset::new(
            outcome.tensors.into_iter().map(|t| t.values).collect(),
            test_labels,
        )?
    } else {
        Dataset::new(
            test_idx
                .iter()
                .map(|&i| image_example(&corpus[i].pixels))
                .collect(),
            test_labels,
        )?
    };
    nn::evaluate(&model, &test_set, config.train.batch_size)
}

/// Default category table when none is configured: every distinct corpus
/// resolution maps to one common target (the next multiple of 9 above the
/// median extent) so all grids share a region size; weights are the linear
/// resize ratios.
pub fn derive_category_table(resolutions: &[(usize, usize)]) -> Result<CategoryTable> {
    if resolutions.is_empty() {
        return Err(Error::Input("no resolutions to derive categories from".into()));
    }
    let mut extents: Vec<usize> = resolutions.iter().map(|&(h, w)| h.max(w)).collect();
    extents.sort_unstable();
    let median = extents[extents.len() / 2];
    let target = median.div_ceil(GRID) * GRID;
    let mut rows: Vec<CategoryRow> = Vec::new();
    for &(h, w) in resolutions {
        if rows.iter().any(|r| r.height == h && r.width == w) {
            continue;
        }
        rows.push(CategoryRow {
            height: h,
            width: w,
            target,
            weight: target as f64 / h.max(w) as f64,
        });
    }
    rows.sort_by_key(|r| (r.height, r.width));
    CategoryTable::new(rows)
}

struct RegionCorpus {
    grids: Vec<RegionGrid>,
    /// Region pixels flattened image-major, row-major within each grid.
    region_pixels: Vec<Array2<f64>>,
    region_labels: Vec<usize>,
    region_ids: Vec<String>,
}

fn build_region_corpus(
    corpus: &[LabeledImage],
    table: &CategoryTable,
    threshold: f64,
    allow_fallback: bool,
) -> Result<RegionCorpus> {
    let mut grids = Vec::with_capacity(corpus.len());
    let mut region_pixels = Vec::with_capacity(corpus.len() * GRID * GRID);
    let mut region_labels = Vec::new();
    let mut region_ids = Vec::new();
    let mut region_size = None;
    for img in corpus {
        let mask = img.mask.as_ref().ok_or_else(|| {
            Error::Input(format!("stage 2 needs masks; image {} has none", img.id))
        })?;
        let mut grid = split_image(&img.pixels, &img.id, table, allow_fallback)?;
        label_regions(
            &mut grid,
            &MaskLabeling {
                mask: mask.clone(),
                positive_threshold: threshold,
            },
        )?;
        match region_size {
            None => region_size = Some(grid.region_size),
            Some(size) if size != grid.region_size => {
                return Err(Error::Input(format!(
                    "mixed region sizes {size:?} vs {:?}; use a category table with one common target",
                    grid.region_size
                )))
            }
            _ => {}
        }
        for region in &grid.regions {
            region_pixels.push(region.pixels.clone());
            region_labels.push(usize::from(region.label));
            region_ids.push(format!("{}_r{}c{}", img.id, region.row, region.col));
        }
        grids.push(grid);
    }
    Ok(RegionCorpus {
        grids,
        region_pixels,
        region_labels,
        region_ids,
    })
}

/// Stage 2: split every image into its 9×9 grid, label regions from masks,
/// quanvolve regions at 16 qubits, train class-weighted QNN/CNN pairs under
/// each train/test split, and stitch localization annotations for the test
/// images.
pub fn run_stage2(config: &ExperimentConfig) -> Result<ComparisonReport> {
    config.validate()?;
    if config.stage != Stage::Two {
        return Err(Error::Config("run_stage2 requires stage = \"two\"".into()));
    }
    let cache_dir = config.effective_cache_dir();
    let quanv_base = config.resolved_quanv();
    let dropout = config.resolved_dropout();

    let corpus = load_corpus(config)?;
    if corpus.len() < 4 {
        return Err(Error::Input(format!(
            "stage 2 needs at least 4 images, found {}",
            corpus.len()
        )));
    }

    let table = category_table_for(config, &corpus)?;
    std::fs::create_dir_all(&config.output_dir)?;
    std::fs::write(
        config.output_dir.join("categories.txt"),
        table.to_text(),
    )?;

    let regions = build_region_corpus(
        &corpus,
        &table,
        config.imaging.positive_threshold,
        config.imaging.allow_fallback,
    )?;
    let positives = regions.region_labels.iter().filter(|&&l| l == 1).count();
    log::info!(
        "stage 2: {} images, {} regions ({positives} positive)",
        corpus.len(),
        regions.region_pixels.len()
    );

    let qnn_spec_note = {
        let region_dim = regions.region_pixels[0].dim();
        format!(
            "stage-2 region size {}×{}, quanvolved with {} qubits",
            region_dim.0,
            region_dim.1,
            quanv_base.n_qubits()
        )
    };

    let mut quanv_stats = QuanvStats::default();
    let mut runs = Vec::new();
    let mut localization = Vec::new();

    for (seed_idx, &master) in config.seeds.iter().enumerate() {
        let quanv_config = QuanvConfig {
            seed: derive_seed(quanv_base.seed, master, 0),
            ..quanv_base.clone()
        };

        // Quanvolve every region once per master seed; the cache carries
        // repeats across splits and reruns.
        let batch_inputs: Vec<(String, Array2<f64>)> = regions
            .region_ids
            .iter()
            .cloned()
            .zip(regions.region_pixels.iter().cloned())
            .collect();
        let outcome = quanvolve_batch(&batch_inputs, &quanv_config, &cache_dir)?;
        quanv_stats.absorb(&outcome);
        let tensor_shape = {
            let t = &outcome.tensors[0];
            (t.height, t.width, t.channels)
        };
        let region_shape = {
            let (h, w) = regions.region_pixels[0].dim();
            (h, w, 1)
        };

        for &ratio in &config.dataset.split_ratios {
            let protocol = format!("split{:.0}", ratio * 100.0);
            let order = shuffled_indices(corpus.len(), config.dataset.shuffle_seed);
            let train_images = ((corpus.len() as f64 * ratio).round() as usize)
                .clamp(1, corpus.len() - 1);
            let (train_img_idx, test_img_idx) = order.split_at(train_images);

            let gather = |image_indices: &[usize]| -> (Vec<usize>, Vec<usize>) {
                let mut region_idx = Vec::new();
                let mut labels = Vec::new();
                for &img in image_indices {
                    for r in 0..GRID * GRID {
                        region_idx.push(img * GRID * GRID + r);
                        labels.push(regions.region_labels[img * GRID * GRID + r]);
                    }
                }
                (region_idx, labels)
            };
            let (train_regions, train_labels) = gather(train_img_idx);
            let (test_regions, test_labels) = gather(test_img_idx);
            let test_set_hash =
                corpus_hash(test_img_idx.iter().map(|&i| &corpus[i]));

            let class_weights = imaging::class_weights(&train_labels)?;
            log::info!(
                "{protocol}: {} train images / {} test images, class weights {:.3}/{:.3}",
                train_img_idx.len(),
                test_img_idx.len(),
                class_weights[0],
                class_weights[1]
            );

            let qnn_train = Dataset::new(
                train_regions
                    .iter()
                    .map(|&r| outcome.tensors[r].values.clone())
                    .collect(),
                train_labels.clone(),
            )?;
            let qnn_test = Dataset::new(
                test_regions
                    .iter()
                    .map(|&r| outcome.tensors[r].values.clone())
                    .collect(),
                test_labels.clone(),
            )?;
            let cnn_train = Dataset::new(
                train_regions
                    .iter()
                    .map(|&r| image_example(&regions.region_pixels[r]))
                    .collect(),
                train_labels.clone(),
            )?;
            let cnn_test = Dataset::new(
                test_regions
                    .iter()
                    .map(|&r| image_example(&regions.region_pixels[r]))
                    .collect(),
                test_labels.clone(),
            )?;

            for kind in [ModelKind::Qnn, ModelKind::Cnn] {
                let spec = match kind {
                    ModelKind::Qnn => models::qnn_stack(
                        tensor_shape,
                        &config.model,
                        dropout,
                        derive_seed(config.train.seed, master, model_tag(kind)),
                    ),
                    ModelKind::Cnn => models::cnn_stack(
                        region_shape,
                        &config.model,
                        dropout,
                        derive_seed(config.train.seed, master, model_tag(kind)),
                    ),
                };
                let train_config = TrainConfig {
                    seed: derive_seed(config.train.seed, master, 10 + model_tag(kind)),
                    class_weights: Some(class_weights),
                    ..config.train.clone()
                };
                let (train_set, test_set) = match kind {
                    ModelKind::Qnn => (&qnn_train, &qnn_test),
                    ModelKind::Cnn => (&cnn_train, &cnn_test),
                };
                let (record, trained) = train_one(
                    &spec,
                    train_set,
                    test_set,
                    &train_config,
                    kind,
                    &protocol,
                    master,
                    &test_set_hash,
                )?;
                runs.push(record);

                // Stitch localization for the test images once per split,
                // using the QNN of the first master seed.
                if kind == ModelKind::Qnn && seed_idx == 0 {
                    let annotations_dir = config.output_dir.join("annotations").join(&protocol);
                    std::fs::create_dir_all(&annotations_dir)?;
                    for &img in test_img_idx {
                        let grid = &regions.grids[img];
                        let examples: Vec<Array3<f64>> = (0..GRID * GRID)
                            .map(|r| outcome.tensors[img * GRID * GRID + r].values.clone())
                            .collect();
                        let labels_dummy = vec![0usize; examples.len()];
                        let region_set = Dataset::new(examples, labels_dummy)?;
                        let (batch, _) = region_set.batch(&(0..GRID * GRID).collect::<Vec<_>>());
                        let probs = trained.forward(&batch, false, 0)?;
                        let predictions: Vec<bool> =
                            probs.rows().into_iter().map(|r| r[1] > r[0]).collect();
                        let confidences: Vec<f64> =
                            probs.rows().into_iter().map(|r| r[1]).collect();
                        let stitched = stitch_predictions(grid, &predictions, &confidences)?;

                        let png = annotations_dir.join(format!("{}.png", grid.source_id));
                        stitched.annotated.save(&png)?;
                        let sidecar = annotations_dir.join(format!("{}.regions.txt", grid.source_id));
                        std::fs::write(&sidecar, imaging::sidecar_to_text(&stitched.records))?;
                        localization.push(LocalizationRecord {
                            protocol: protocol.clone(),
                            image_id: grid.source_id.clone(),
                            annotation_png: png,
                            sidecar,
                            n_regions: stitched.records.len(),
                        });
                    }
                }
            }
        }
    }

    Ok(ComparisonReport {
        stage: Stage::Two,
        runs,
        quanv: quanv_stats,
        reference_validation_accuracy: Some(0.978),
        localization,
        parameter_note: qnn_spec_note,
    })
}
