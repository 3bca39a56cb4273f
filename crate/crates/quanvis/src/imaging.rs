//! Region-grid localization machinery: split images into a 9×9 grid with
//! resolution-dependent padding and weights, derive per-region labels from
//! ground-truth masks, and stitch predictions back into annotated images.
//!
//! Corpus size classes are configuration, not constants: a category table
//! maps each known resolution to a target size (a multiple of 9) and a grid
//! weight. Images at or below the target are padded symmetrically with edge
//! replication — zero fill would paint dark borders that mimic cracks —
//! while larger images are rescaled down to the target. Unknown resolutions
//! optionally fall back to padding up to the next multiple of 9 at weight 1.

use ndarray::Array2;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Grid edge length; every image becomes `GRID × GRID` regions.
pub const GRID: usize = 9;

/// One corpus size class: images of exactly `height × width` map to a padded
/// (or rescaled) `target × target` canvas and carry `weight`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CategoryRow {
    pub height: usize,
    pub width: usize,
    pub target: usize,
    pub weight: f64,
}

/// Resolution → target/weight lookup, loaded from a plain text file with
/// one `height,width,target,weight` row per line (`#` starts a comment).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CategoryTable {
    rows: Vec<CategoryRow>,
}

impl CategoryTable {
    pub fn new(rows: Vec<CategoryRow>) -> Result<Self> {
        for row in &rows {
            if row.target == 0 || row.target % GRID != 0 {
                return Err(Error::Config(format!(
                    "category target {} is not a positive multiple of {GRID}",
                    row.target
                )));
            }
            if row.weight <= 0.0 || !row.weight.is_finite() {
                return Err(Error::Config(format!(
                    "category weight {} must be positive and finite",
                    row.weight
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(Error::Format(format!(
                    "category table line {}: expected height,width,target,weight",
                    lineno + 1
                )));
            }
            let parse_usize = |s: &str| {
                s.parse::<usize>().map_err(|_| {
                    Error::Format(format!("category table line {}: bad integer {s:?}", lineno + 1))
                })
            };
            let weight = fields[3].parse::<f64>().map_err(|_| {
                Error::Format(format!(
                    "category table line {}: bad weight {:?}",
                    lineno + 1,
                    fields[3]
                ))
            })?;
            rows.push(CategoryRow {
                height: parse_usize(fields[0])?,
                width: parse_usize(fields[1])?,
                target: parse_usize(fields[2])?,
                weight,
            });
        }
        Self::new(rows)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# height,width,target,weight\n");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                row.height, row.width, row.target, row.weight
            );
        }
        out
    }

    pub fn lookup(&self, height: usize, width: usize) -> Option<&CategoryRow> {
        self.rows
            .iter()
            .find(|r| r.height == height && r.width == width)
    }

    pub fn rows(&self) -> &[CategoryRow] {
        &self.rows
    }
}

/// How a grid's resolution was classified.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ResolutionCategory {
    /// Matched a configured size class.
    Table { target: usize, weight: f64 },
    /// Unknown resolution, padded up to the next multiple of 9 per axis.
    Fallback { target_h: usize, target_w: usize },
}

impl ResolutionCategory {
    pub fn weight(&self) -> f64 {
        match self {
            ResolutionCategory::Table { weight, .. } => *weight,
            ResolutionCategory::Fallback { .. } => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Pad {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

/// One cell of the 9×9 grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub row: usize,
    pub col: usize,
    pub pixels: Array2<f64>,
    pub label: bool,
    pub weight: f64,
}

/// 9×9 decomposition of one image, with enough geometry to transform the
/// matching mask identically and to undo the padding when stitching.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionGrid {
    pub source_id: String,
    pub source_resolution: (usize, usize),
    pub category: ResolutionCategory,
    pub pad: Pad,
    pub region_size: (usize, usize),
    /// `Some((h, w))` when the source was rescaled before slicing.
    pub rescaled_to: Option<(usize, usize)>,
    /// Row-major, exactly `GRID * GRID` entries.
    pub regions: Vec<Region>,
}

impl RegionGrid {
    pub fn region(&self, row: usize, col: usize) -> &Region {
        &self.regions[row * GRID + col]
    }

    pub fn labels(&self) -> Vec<bool> {
        self.regions.iter().map(|r| r.label).collect()
    }
}

/// Ground-truth mask plus the fraction of defect pixels at or above which a
/// region counts as positive.
#[derive(Clone, Debug)]
pub struct MaskLabeling {
    pub mask: Array2<bool>,
    pub positive_threshold: f64,
}

fn pad_amounts(size: usize, target: usize) -> (usize, usize) {
    let total = target - size;
    (total / 2, total - total / 2)
}

fn pad_edge<T: Copy>(img: &Array2<T>, pad: Pad) -> Array2<T> {
    let (h, w) = img.dim();
    Array2::from_shape_fn(
        (h + pad.top + pad.bottom, w + pad.left + pad.right),
        |(y, x)| {
            let sy = y.saturating_sub(pad.top).min(h - 1);
            let sx = x.saturating_sub(pad.left).min(w - 1);
            img[(sy, sx)]
        },
    )
}

fn resize_bilinear(img: &Array2<f64>, out_h: usize, out_w: usize) -> Array2<f64> {
    let (h, w) = img.dim();
    let scale_y = h as f64 / out_h as f64;
    let scale_x = w as f64 / out_w as f64;
    Array2::from_shape_fn((out_h, out_w), |(y, x)| {
        let sy = ((y as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (h - 1) as f64);
        let sx = ((x as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (w - 1) as f64);
        let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
        let top = img[(y0, x0)] * (1.0 - fx) + img[(y0, x1)] * fx;
        let bottom = img[(y1, x0)] * (1.0 - fx) + img[(y1, x1)] * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

fn resize_nearest_bool(mask: &Array2<bool>, out_h: usize, out_w: usize) -> Array2<bool> {
    let (h, w) = mask.dim();
    let scale_y = h as f64 / out_h as f64;
    let scale_x = w as f64 / out_w as f64;
    Array2::from_shape_fn((out_h, out_w), |(y, x)| {
        let sy = (((y as f64 + 0.5) * scale_y - 0.5).round()).clamp(0.0, (h - 1) as f64);
        let sx = (((x as f64 + 0.5) * scale_x - 0.5).round()).clamp(0.0, (w - 1) as f64);
        mask[(sy as usize, sx as usize)]
    })
}

fn next_multiple_of_grid(n: usize) -> usize {
    n.div_ceil(GRID) * GRID
}

/// Split an image into the 9×9 grid dictated by its resolution category.
///
/// With `allow_fallback` an unknown resolution pads up to the next multiple
/// of 9 at weight 1.0 (logged); without it, it is an input error.
pub fn split_image(
    image: &Array2<f64>,
    source_id: &str,
    table: &CategoryTable,
    allow_fallback: bool,
) -> Result<RegionGrid> {
    let (h, w) = image.dim();
    if h == 0 || w == 0 {
        return Err(Error::Input(format!("empty image {source_id:?}")));
    }

    let (category, target_h, target_w) = match table.lookup(h, w) {
        Some(row) => (
            ResolutionCategory::Table {
                target: row.target,
                weight: row.weight,
            },
            row.target,
            row.target,
        ),
        None if allow_fallback => {
            let (th, tw) = (next_multiple_of_grid(h), next_multiple_of_grid(w));
            log::warn!(
                "resolution {h}×{w} of {source_id:?} not in the category table; padding to {th}×{tw} at weight 1.0"
            );
            (
                ResolutionCategory::Fallback {
                    target_h: th,
                    target_w: tw,
                },
                th,
                tw,
            )
        }
        None => {
            return Err(Error::Input(format!(
                "resolution {h}×{w} of {source_id:?} not in the category table and fallback is disabled"
            )))
        }
    };

    // Pad when the target accommodates the source, rescale down otherwise.
    let (padded, pad, rescaled_to) = if h <= target_h && w <= target_w {
        let (top, bottom) = pad_amounts(h, target_h);
        let (left, right) = pad_amounts(w, target_w);
        let pad = Pad {
            top,
            bottom,
            left,
            right,
        };
        (pad_edge(image, pad), pad, None)
    } else {
        (
            resize_bilinear(image, target_h, target_w),
            Pad::default(),
            Some((target_h, target_w)),
        )
    };

    let weight = category.weight();
    let region_size = (target_h / GRID, target_w / GRID);
    let mut regions = Vec::with_capacity(GRID * GRID);
    for row in 0..GRID {
        for col in 0..GRID {
            let pixels = padded
                .slice(ndarray::s![
                    row * region_size.0..(row + 1) * region_size.0,
                    col * region_size.1..(col + 1) * region_size.1
                ])
                .to_owned();
            regions.push(Region {
                row,
                col,
                pixels,
                label: false,
                weight,
            });
        }
    }

    Ok(RegionGrid {
        source_id: source_id.to_string(),
        source_resolution: (h, w),
        category,
        pad,
        region_size,
        rescaled_to,
        regions,
    })
}

/// Label each region positive when its fraction of mask-positive pixels
/// reaches `positive_threshold`. The mask is transformed exactly like the
/// image was (edge padding or rescale) so regions stay aligned.
pub fn label_regions(grid: &mut RegionGrid, labeling: &MaskLabeling) -> Result<()> {
    if labeling.mask.dim() != grid.source_resolution {
        return Err(Error::Input(format!(
            "mask {:?} does not match source resolution {:?}",
            labeling.mask.dim(),
            grid.source_resolution
        )));
    }
    let threshold = labeling.positive_threshold;
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!(
            "positive_threshold must be in (0, 1], got {threshold}"
        )));
    }

    let aligned = match grid.rescaled_to {
        Some((th, tw)) => resize_nearest_bool(&labeling.mask, th, tw),
        None => pad_edge(&labeling.mask, grid.pad),
    };

    let (rh, rw) = grid.region_size;
    let area = (rh * rw) as f64;
    for region in &mut grid.regions {
        let positives = aligned
            .slice(ndarray::s![
                region.row * rh..(region.row + 1) * rh,
                region.col * rw..(region.col + 1) * rw
            ])
            .iter()
            .filter(|&&m| m)
            .count();
        region.label = positives as f64 / area >= threshold;
    }
    Ok(())
}

/// Per-region prediction record; also the sidecar line format
/// `row,col,label,confidence`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionOutcome {
    pub row: usize,
    pub col: usize,
    pub label: bool,
    pub confidence: f64,
}

/// Result of stitching predictions back over a grid.
pub struct Stitched {
    /// Reconstruction cropped to the unpadded window; bit-identical to the
    /// source whenever the grid was built by padding alone.
    pub image: Array2<f64>,
    /// Grayscale render with positive regions outlined; outline intensity
    /// encodes confidence.
    pub annotated: image::RgbImage,
    pub records: Vec<RegionOutcome>,
}

/// Reassemble the grid, crop the padding, and overlay positive predictions.
pub fn stitch_predictions(
    grid: &RegionGrid,
    predictions: &[bool],
    confidences: &[f64],
) -> Result<Stitched> {
    let expected = GRID * GRID;
    if predictions.len() != expected || confidences.len() != expected {
        return Err(Error::Structural(format!(
            "expected {expected} predictions and confidences, got {} and {}",
            predictions.len(),
            confidences.len()
        )));
    }

    let (rh, rw) = grid.region_size;
    let (padded_h, padded_w) = (rh * GRID, rw * GRID);
    let mut padded = Array2::<f64>::zeros((padded_h, padded_w));
    for region in &grid.regions {
        padded
            .slice_mut(ndarray::s![
                region.row * rh..(region.row + 1) * rh,
                region.col * rw..(region.col + 1) * rw
            ])
            .assign(&region.pixels);
    }

    let crop_h = padded_h - grid.pad.top - grid.pad.bottom;
    let crop_w = padded_w - grid.pad.left - grid.pad.right;
    let image = padded
        .slice(ndarray::s![
            grid.pad.top..grid.pad.top + crop_h,
            grid.pad.left..grid.pad.left + crop_w
        ])
        .to_owned();

    let mut annotated = image::RgbImage::new(crop_w as u32, crop_h as u32);
    for ((y, x), &v) in image.indexed_iter() {
        let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        annotated.put_pixel(x as u32, y as u32, image::Rgb([g, g, g]));
    }

    let mut records = Vec::with_capacity(expected);
    for (idx, region) in grid.regions.iter().enumerate() {
        records.push(RegionOutcome {
            row: region.row,
            col: region.col,
            label: predictions[idx],
            confidence: confidences[idx],
        });
        if !predictions[idx] {
            continue;
        }
        let level = 0.25 + 0.75 * confidences[idx].clamp(0.0, 1.0);
        let color = image::Rgb([(level * 255.0).round() as u8, 0, 0]);
        // Region rectangle in cropped coordinates, clipped at the borders.
        let top = (region.row * rh) as isize - grid.pad.top as isize;
        let left = (region.col * rw) as isize - grid.pad.left as isize;
        draw_rect_outline(&mut annotated, top, left, rh, rw, color);
    }

    Ok(Stitched {
        image,
        annotated,
        records,
    })
}

fn draw_rect_outline(
    img: &mut image::RgbImage,
    top: isize,
    left: isize,
    height: usize,
    width: usize,
    color: image::Rgb<u8>,
) {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let bottom = top + height as isize - 1;
    let right = left + width as isize - 1;
    let mut put = |x: isize, y: isize| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            img.put_pixel(x as u32, y as u32, color);
        }
    };
    for x in left..=right {
        put(x, top);
        put(x, bottom);
    }
    for y in top..=bottom {
        put(left, y);
        put(right, y);
    }
}

/// Render sidecar records, one `row,col,label,confidence` line per region.
pub fn sidecar_to_text(records: &[RegionOutcome]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.row,
            r.col,
            u8::from(r.label),
            r.confidence
        );
    }
    out
}

pub fn parse_sidecar(text: &str) -> Result<Vec<RegionOutcome>> {
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Format(format!(
                "sidecar line {}: expected row,col,label,confidence",
                lineno + 1
            )));
        }
        let bad = |what: &str| Error::Format(format!("sidecar line {}: bad {what}", lineno + 1));
        records.push(RegionOutcome {
            row: fields[0].parse().map_err(|_| bad("row"))?,
            col: fields[1].parse().map_err(|_| bad("col"))?,
            label: match fields[2] {
                "0" => false,
                "1" => true,
                _ => return Err(bad("label")),
            },
            confidence: fields[3].parse().map_err(|_| bad("confidence"))?,
        });
    }
    Ok(records)
}

/// Inverse-frequency class weights: `w_c = N_total / (N_classes · N_c)`.
/// Requires both classes present; the per-example loss in `nn` multiplies
/// by these.
pub fn class_weights(labels: &[usize]) -> Result<[f64; 2]> {
    let total = labels.len();
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = total - positives;
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Input(format!("label {bad} is not binary")));
    }
    if negatives == 0 || positives == 0 {
        return Err(Error::Config(
            "class weighting needs at least one example of each class; adjust the split or corpus"
                .into(),
        ));
    }
    Ok([
        total as f64 / (2.0 * negatives as f64),
        total as f64 / (2.0 * positives as f64),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((h, w), |_| rng.random_range(0.0..=1.0))
    }

    fn table(rows: &[(usize, usize, usize, f64)]) -> CategoryTable {
        CategoryTable::new(
            rows.iter()
                .map(|&(height, width, target, weight)| CategoryRow {
                    height,
                    width,
                    target,
                    weight,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn exact_multiple_needs_no_padding() {
        let img = random_image(450, 450, 1);
        let grid = split_image(&img, "a", &table(&[(450, 450, 450, 1.0)]), false).unwrap();
        assert_eq!(grid.pad, Pad::default());
        assert_eq!(grid.regions.len(), 81);
        assert_eq!(grid.region_size, (50, 50));
    }

    #[test]
    fn near_multiple_pads_symmetrically() {
        let img = random_image(448, 448, 2);
        let grid = split_image(&img, "a", &table(&[(448, 448, 450, 1.2)]), false).unwrap();
        assert_eq!(
            grid.pad,
            Pad {
                top: 1,
                bottom: 1,
                left: 1,
                right: 1
            }
        );
        assert_eq!(grid.region_size, (50, 50));
        assert_eq!(grid.category.weight(), 1.2);
    }

    #[test]
    fn split_then_stitch_is_identity_on_the_crop_window() {
        for (h, w, target) in [(45, 45, 45), (43, 41, 45), (36, 36, 45)] {
            let img = random_image(h, w, 7);
            let grid = split_image(&img, "rt", &table(&[(h, w, target, 1.0)]), false).unwrap();
            let stitched =
                stitch_predictions(&grid, &[false; 81], &[0.0; 81]).unwrap();
            assert_eq!(stitched.image, img, "round trip failed for {h}×{w}");
        }
    }

    #[test]
    fn oversize_images_are_rescaled_to_target() {
        let img = random_image(54, 54, 3);
        let grid = split_image(&img, "big", &table(&[(54, 54, 45, 0.9)]), false).unwrap();
        assert_eq!(grid.rescaled_to, Some((45, 45)));
        assert_eq!(grid.region_size, (5, 5));
        assert_eq!(grid.regions.len(), 81);
    }

    #[test]
    fn fallback_pads_to_next_multiple() {
        let img = random_image(40, 31, 4);
        let grid = split_image(&img, "odd", &table(&[]), true).unwrap();
        assert_eq!(
            grid.category,
            ResolutionCategory::Fallback {
                target_h: 45,
                target_w: 36
            }
        );
        assert_eq!(grid.category.weight(), 1.0);
        assert_eq!(grid.region_size, (5, 4));

        assert!(matches!(
            split_image(&img, "odd", &table(&[]), false),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn labeling_follows_threshold() {
        let img = random_image(45, 45, 5);
        let tbl = table(&[(45, 45, 45, 1.0)]);

        // Empty mask: everything negative.
        let mut grid = split_image(&img, "m", &tbl, false).unwrap();
        label_regions(
            &mut grid,
            &MaskLabeling {
                mask: Array2::from_elem((45, 45), false),
                positive_threshold: 0.01,
            },
        )
        .unwrap();
        assert!(grid.regions.iter().all(|r| !r.label));

        // Exactly one region fully positive.
        let mut mask = Array2::from_elem((45, 45), false);
        mask.slice_mut(ndarray::s![10..15, 20..25]).fill(true); // region (2, 4)
        let mut grid = split_image(&img, "m", &tbl, false).unwrap();
        label_regions(
            &mut grid,
            &MaskLabeling {
                mask: mask.clone(),
                positive_threshold: 0.01,
            },
        )
        .unwrap();
        for region in &grid.regions {
            assert_eq!(region.label, (region.row, region.col) == (2, 4));
        }

        // Threshold 1.0 with a half-covered region stays negative.
        let mut half = Array2::from_elem((45, 45), false);
        half.slice_mut(ndarray::s![10..15, 20..22]).fill(true);
        let mut grid = split_image(&img, "m", &tbl, false).unwrap();
        label_regions(
            &mut grid,
            &MaskLabeling {
                mask: half,
                positive_threshold: 1.0,
            },
        )
        .unwrap();
        assert!(grid.regions.iter().all(|r| !r.label));
    }

    #[test]
    fn label_rejects_misaligned_mask() {
        let img = random_image(45, 45, 6);
        let mut grid = split_image(&img, "m", &table(&[(45, 45, 45, 1.0)]), false).unwrap();
        let labeling = MaskLabeling {
            mask: Array2::from_elem((44, 45), false),
            positive_threshold: 0.01,
        };
        assert!(matches!(
            label_regions(&mut grid, &labeling),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn stitch_draws_only_positive_regions() {
        let img = Array2::from_elem((45, 45), 0.5);
        let grid = split_image(&img, "s", &table(&[(45, 45, 45, 1.0)]), false).unwrap();
        let mut predictions = [false; 81];
        let mut confidences = [0.0; 81];
        predictions[3 * GRID + 6] = true; // region (3, 6)
        confidences[3 * GRID + 6] = 1.0;
        let stitched = stitch_predictions(&grid, &predictions, &confidences).unwrap();

        assert_eq!(stitched.image, img);
        for (x, y, pixel) in stitched.annotated.enumerate_pixels() {
            let red = pixel.0[0] == 255 && pixel.0[1] == 0;
            let inside = (15..20).contains(&(y as usize)) && (30..35).contains(&(x as usize));
            if red {
                assert!(inside, "red pixel outside region rectangle at ({x},{y})");
            }
        }
        let reds = stitched
            .annotated
            .pixels()
            .filter(|p| p.0 == [255, 0, 0])
            .count();
        assert_eq!(reds, 16, "5×5 region outline");
    }

    #[test]
    fn stitch_rejects_count_mismatch() {
        let img = random_image(45, 45, 8);
        let grid = split_image(&img, "s", &table(&[(45, 45, 45, 1.0)]), false).unwrap();
        assert!(matches!(
            stitch_predictions(&grid, &[false; 80], &[0.0; 80]),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn sidecar_round_trips_losslessly() {
        let records = vec![
            RegionOutcome {
                row: 0,
                col: 8,
                label: true,
                confidence: 0.123456789012345678,
            },
            RegionOutcome {
                row: 4,
                col: 4,
                label: false,
                confidence: 1.0 / 3.0,
            },
        ];
        let text = sidecar_to_text(&records);
        assert_eq!(parse_sidecar(&text).unwrap(), records);
        assert!(parse_sidecar("1,2,banana,0.5").is_err());
    }

    #[test]
    fn class_weights_match_inverse_frequency() {
        let balanced: Vec<usize> = [vec![0; 50], vec![1; 50]].concat();
        assert_eq!(class_weights(&balanced).unwrap(), [1.0, 1.0]);

        let skewed: Vec<usize> = [vec![0; 90], vec![1; 10]].concat();
        let [w0, w1] = class_weights(&skewed).unwrap();
        assert!((w0 - 100.0 / 180.0).abs() < 1e-12);
        assert!((w1 - 5.0).abs() < 1e-12);

        // Σ w_c · N_c = N_total
        assert!((w0 * 90.0 + w1 * 10.0 - 100.0).abs() < 1e-9);

        assert!(matches!(
            class_weights(&vec![0; 10]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn regions_tile_the_padded_image() {
        let img = random_image(43, 41, 9);
        let grid = split_image(&img, "t", &table(&[(43, 41, 45, 1.0)]), false).unwrap();
        let (rh, rw) = grid.region_size;
        assert_eq!((rh * GRID, rw * GRID), (45, 45));
        let mut coverage = Array2::<u8>::zeros((45, 45));
        for region in &grid.regions {
            for y in region.row * rh..(region.row + 1) * rh {
                for x in region.col * rw..(region.col + 1) * rw {
                    coverage[(y, x)] += 1;
                }
            }
        }
        assert!(coverage.iter().all(|&c| c == 1));
    }
}
