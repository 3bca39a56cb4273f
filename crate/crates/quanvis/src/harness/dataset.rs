//! Corpus handling: directory ingestion and the synthetic crack generator
//! that stands in for the unavailable industrial imagery.

use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::quanv::{luminance_gray, normalize_unit};

/// One corpus entry. Pixels are grayscale in [0, 1]; the mask, when present,
/// marks defect pixels and aligns with the image.
#[derive(Clone, Debug)]
pub struct LabeledImage {
    pub id: String,
    pub pixels: Array2<f64>,
    pub label: usize,
    pub mask: Option<Array2<bool>>,
}

/// Generator settings for synthetic crack images: wavy dark polyline strokes
/// over a lightly textured background, plus exact masks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCrackSpec {
    pub image_size: usize,
    pub crack_probability: f64,
    pub crack_width_px: usize,
    pub crack_waviness: f64,
    pub background_noise_level: f64,
    pub seed: u64,
}

impl Default for SyntheticCrackSpec {
    fn default() -> Self {
        Self {
            image_size: 32,
            crack_probability: 0.5,
            crack_width_px: 2,
            crack_waviness: 0.35,
            background_noise_level: 0.04,
            seed: 1234,
        }
    }
}

impl SyntheticCrackSpec {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 8 {
            return Err(Error::Config("synthetic image_size must be at least 8".into()));
        }
        if !(0.0..=1.0).contains(&self.crack_probability) {
            return Err(Error::Config("crack_probability must lie in [0, 1]".into()));
        }
        if self.crack_width_px == 0 {
            return Err(Error::Config("crack_width_px must be positive".into()));
        }
        Ok(())
    }
}

/// Generate `n` images. Image `i` draws from a ChaCha8 stream derived from
/// `(seed, i)`, so any prefix of the corpus is stable under regeneration.
pub fn generate_synthetic(spec: &SyntheticCrackSpec, n: usize) -> Result<Vec<LabeledImage>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Input("cannot generate an empty corpus".into()));
    }
    Ok((0..n).map(|i| generate_one(spec, i)).collect())
}

fn generate_one(spec: &SyntheticCrackSpec, index: usize) -> LabeledImage {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let size = spec.image_size;

    // Lightly textured background: two low-frequency waves plus noise.
    let (fx, fy) = (rng.random_range(0.6..2.2), rng.random_range(0.6..2.2));
    let (px, py) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
    let mut pixels = Array2::from_shape_fn((size, size), |(y, x)| {
        let u = x as f64 / size as f64;
        let v = y as f64 / size as f64;
        0.62 + 0.07 * (std::f64::consts::TAU * (fx * u + px)).sin()
            + 0.07 * (std::f64::consts::TAU * (fy * v + py)).sin()
    });
    for p in pixels.iter_mut() {
        *p += spec.background_noise_level * rng.random_range(-1.0..1.0);
        *p = p.clamp(0.02, 0.98);
    }

    let mut mask = Array2::from_elem((size, size), false);
    let has_crack = rng.random::<f64>() < spec.crack_probability;
    if has_crack {
        let n_cracks = rng.random_range(1..=2usize);
        for _ in 0..n_cracks {
            draw_crack(spec, &mut rng, &mut pixels, &mut mask);
        }
    }

    LabeledImage {
        id: format!("synth{index:05}"),
        pixels,
        label: usize::from(has_crack),
        mask: Some(mask),
    }
}

/// One wavy stroke from a random edge toward the opposite side.
fn draw_crack(
    spec: &SyntheticCrackSpec,
    rng: &mut ChaCha8Rng,
    pixels: &mut Array2<f64>,
    mask: &mut Array2<bool>,
) {
    let size = spec.image_size as f64;
    let side = rng.random_range(0..4u8);
    let along = rng.random_range(0.15..0.85) * size;
    let (mut y, mut x, base_heading) = match side {
        0 => (0.0, along, std::f64::consts::FRAC_PI_2),            // top, heading down
        1 => (size - 1.0, along, -std::f64::consts::FRAC_PI_2),    // bottom, heading up
        2 => (along, 0.0, 0.0),                                    // left, heading right
        _ => (along, size - 1.0, std::f64::consts::PI),            // right, heading left
    };
    let mut heading = base_heading + rng.random_range(-0.4..0.4);
    let darkness = rng.random_range(0.05..0.18);
    let radius = spec.crack_width_px as f64 / 2.0;
    let step = (size / 16.0).max(2.0);

    // Guarantee at least one stamped pixel so labels always reflect masks.
    stamp(pixels, mask, y, x, radius, darkness);
    for _ in 0..(3.0 * size / step) as usize {
        let substeps = step.ceil() as usize * 2;
        for _ in 0..substeps {
            y += heading.sin() * 0.5;
            x += heading.cos() * 0.5;
            if y < 0.0 || x < 0.0 || y >= size || x >= size {
                return;
            }
            stamp(pixels, mask, y, x, radius, darkness);
        }
        heading += spec.crack_waviness * rng.random_range(-1.0..1.0);
    }
}

fn stamp(pixels: &mut Array2<f64>, mask: &mut Array2<bool>, y: f64, x: f64, radius: f64, dark: f64) {
    let (h, w) = pixels.dim();
    let r = radius.max(0.5);
    let y_lo = ((y - r).floor().max(0.0)) as usize;
    let y_hi = ((y + r).ceil() as usize).min(h - 1);
    let x_lo = ((x - r).floor().max(0.0)) as usize;
    let x_hi = ((x + r).ceil() as usize).min(w - 1);
    for yy in y_lo..=y_hi {
        for xx in x_lo..=x_hi {
            let dy = yy as f64 - y;
            let dx = xx as f64 - x;
            if dy * dy + dx * dx <= r * r {
                pixels[(yy, xx)] = dark;
                mask[(yy, xx)] = true;
            }
        }
    }
}

/// Write a corpus to disk as 8-bit PNGs. Stage-1 layout is `positive/` and
/// `negative/` class directories; stage-2 layout is images at the root with
/// aligned masks under `masks/`.
pub fn write_corpus(images: &[LabeledImage], dir: &Path, with_masks: bool) -> Result<()> {
    if with_masks {
        std::fs::create_dir_all(dir.join("masks"))?;
        for img in images {
            save_gray(&img.pixels, &dir.join(format!("{}.png", img.id)))?;
            let mask = img.mask.as_ref().ok_or_else(|| {
                Error::Input(format!("image {} has no mask to write", img.id))
            })?;
            let mask_gray = mask.mapv(|m| if m { 1.0 } else { 0.0 });
            save_gray(&mask_gray, &dir.join("masks").join(format!("{}.png", img.id)))?;
        }
    } else {
        std::fs::create_dir_all(dir.join("positive"))?;
        std::fs::create_dir_all(dir.join("negative"))?;
        for img in images {
            let class = if img.label == 1 { "positive" } else { "negative" };
            save_gray(&img.pixels, &dir.join(class).join(format!("{}.png", img.id)))?;
        }
    }
    Ok(())
}

fn save_gray(pixels: &Array2<f64>, path: &Path) -> Result<()> {
    let (h, w) = pixels.dim();
    let mut img = image::GrayImage::new(w as u32, h as u32);
    for ((y, x), &v) in pixels.indexed_iter() {
        img.put_pixel(x as u32, y as u32, image::Luma([(v.clamp(0.0, 1.0) * 255.0).round() as u8]));
    }
    img.save(path)?;
    Ok(())
}

fn load_gray_normalized(path: &Path) -> Result<Array2<f64>> {
    let rgb = image::open(path)?.to_rgb8();
    let mut gray = luminance_gray(&rgb);
    normalize_unit(&mut gray);
    Ok(gray)
}

fn load_mask(path: &Path) -> Result<Array2<bool>> {
    let gray = image::open(path)?.to_luma8();
    let (w, h) = gray.dimensions();
    Ok(Array2::from_shape_fn((h as usize, w as usize), |(y, x)| {
        gray.get_pixel(x as u32, y as u32).0[0] > 127
    }))
}

fn png_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.to_ascii_lowercase().ends_with(".png") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// Stage-1 corpus: `positive/` and `negative/` class directories of PNGs,
/// ordered by class (negatives first) then filename. Unreadable files are
/// skipped with a warning and counted.
pub fn ingest_stage1(dir: &Path) -> Result<Vec<LabeledImage>> {
    let mut images = Vec::new();
    let mut skipped = 0usize;
    for (class, label) in [("negative", 0usize), ("positive", 1usize)] {
        let class_dir = dir.join(class);
        if !class_dir.is_dir() {
            return Err(Error::Input(format!(
                "missing class directory {}",
                class_dir.display()
            )));
        }
        let names = png_names(&class_dir)?;
        if names.is_empty() {
            return Err(Error::Input(format!(
                "class directory {} has no images",
                class_dir.display()
            )));
        }
        for name in names {
            match load_gray_normalized(&class_dir.join(&name)) {
                Ok(pixels) => images.push(LabeledImage {
                    id: format!("{class}/{name}"),
                    pixels,
                    label,
                    mask: None,
                }),
                Err(err) => {
                    skipped += 1;
                    log::warn!("skipping unreadable image {class}/{name}: {err}");
                }
            }
        }
    }
    if skipped > 0 {
        log::warn!("ingest: skipped {skipped} unreadable images");
    }
    Ok(images)
}

/// Stage-2 corpus: PNGs at the root with a `masks/` directory of aligned
/// masks under the same filenames.
pub fn ingest_stage2(dir: &Path) -> Result<Vec<LabeledImage>> {
    let masks_dir = dir.join("masks");
    if !masks_dir.is_dir() {
        return Err(Error::Input(format!(
            "missing masks directory {}",
            masks_dir.display()
        )));
    }
    let names = png_names(dir)?;
    if names.is_empty() {
        return Err(Error::Input(format!("no images in {}", dir.display())));
    }
    let mut images = Vec::new();
    let mut skipped = 0usize;
    for name in names {
        let image_path = dir.join(&name);
        let mask_path = masks_dir.join(&name);
        let loaded = load_gray_normalized(&image_path).and_then(|pixels| {
            let mask = load_mask(&mask_path)?;
            Ok((pixels, mask))
        });
        match loaded {
            Ok((pixels, mask)) => {
                let label = usize::from(mask.iter().any(|&m| m));
                images.push(LabeledImage {
                    id: name.trim_end_matches(".png").to_string(),
                    pixels,
                    label,
                    mask: Some(mask),
                });
            }
            Err(err) => {
                skipped += 1;
                log::warn!("skipping {name}: {err}");
            }
        }
    }
    if skipped > 0 {
        log::warn!("ingest: skipped {skipped} images without readable masks");
    }
    if images.is_empty() {
        return Err(Error::Input("no usable image/mask pairs".into()));
    }
    Ok(images)
}
