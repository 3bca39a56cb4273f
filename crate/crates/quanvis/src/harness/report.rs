//! Comparison reports: per-run metric files, a combined summary, and
//! rasterized QNN-vs-CNN curve plots.
//!
//! Metric files, the summary, and the plots are byte-deterministic for a
//! fixed config; wall-clock numbers go to a separate `timings.txt` so the
//! deterministic artifacts stay comparable across reruns.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::Stage;
use crate::error::Result;
use crate::nn::{metrics_to_text, EpochRecord};
use crate::plot::{Plot, Series};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ModelKind {
    Qnn,
    Cnn,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Qnn => write!(f, "qnn"),
            ModelKind::Cnn => write!(f, "cnn"),
        }
    }
}

/// One training run of one model under one protocol and seed.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub model: ModelKind,
    /// Protocol label: `train100` / `train50` (stage 1) or `split50` /
    /// `split40` (stage 2).
    pub protocol: String,
    pub seed: u64,
    pub train_count: usize,
    pub test_count: usize,
    /// SHA-256 over the source test images and labels; equal hashes mean
    /// the models were judged on identical data.
    pub test_set_hash: String,
    pub epochs: Vec<EpochRecord>,
    pub train_seconds: f64,
}

impl RunRecord {
    pub fn final_test_acc(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.test_acc)
    }

    pub fn final_test_loss(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.test_loss)
    }

    pub fn file_stem(&self) -> String {
        format!("metrics_{}_{}_s{}", self.model, self.protocol, self.seed)
    }
}

/// Aggregate quanvolution effort; the wall clock covers the whole batch
/// pass and is never less than the summed per-image circuit time.
#[derive(Clone, Copy, Debug, Default)]
pub struct QuanvStats {
    pub wall_seconds: f64,
    pub circuit_seconds: f64,
    pub computed: usize,
    pub cache_hits: usize,
}

impl QuanvStats {
    pub fn absorb(&mut self, outcome: &crate::quanv::BatchOutcome) {
        self.wall_seconds += outcome.wall_seconds;
        self.circuit_seconds += outcome.per_image_seconds.iter().sum::<f64>();
        self.computed += outcome.computed;
        self.cache_hits += outcome.cache_hits;
    }
}

/// Stitched localization artifact of one test image (stage 2).
#[derive(Clone, Debug)]
pub struct LocalizationRecord {
    pub protocol: String,
    pub image_id: String,
    pub annotation_png: PathBuf,
    pub sidecar: PathBuf,
    pub n_regions: usize,
}

/// Everything a stage run produced.
#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub stage: Stage,
    pub runs: Vec<RunRecord>,
    pub quanv: QuanvStats,
    /// Reported validation accuracy from the original stage-2 experiments,
    /// logged as a reference line, never asserted.
    pub reference_validation_accuracy: Option<f64>,
    pub localization: Vec<LocalizationRecord>,
    pub parameter_note: String,
}

impl ComparisonReport {
    pub fn protocols(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for run in &self.runs {
            if !names.contains(&run.protocol) {
                names.push(run.protocol.clone());
            }
        }
        names
    }

    pub fn runs_for(&self, protocol: &str, model: ModelKind) -> Vec<&RunRecord> {
        self.runs
            .iter()
            .filter(|r| r.protocol == protocol && r.model == model)
            .collect()
    }

    /// Epoch-wise mean test metric across seeds.
    pub fn mean_curve(
        &self,
        protocol: &str,
        model: ModelKind,
        metric: fn(&EpochRecord) -> f64,
    ) -> Vec<f64> {
        let runs = self.runs_for(protocol, model);
        if runs.is_empty() {
            return Vec::new();
        }
        let epochs = runs.iter().map(|r| r.epochs.len()).min().unwrap_or(0);
        (0..epochs)
            .map(|e| runs.iter().map(|r| metric(&r.epochs[e])).sum::<f64>() / runs.len() as f64)
            .collect()
    }

    pub fn mean_final_test_acc(&self, protocol: &str, model: ModelKind) -> f64 {
        let runs = self.runs_for(protocol, model);
        runs.iter().map(|r| r.final_test_acc()).sum::<f64>() / runs.len().max(1) as f64
    }
}

/// Colors per (protocol index, model), following the original figures:
/// the first split is blue (quantum) and green (classical), the second red
/// and yellow.
fn series_color(protocol_idx: usize, model: ModelKind) -> [u8; 3] {
    match (protocol_idx % 2, model) {
        (0, ModelKind::Qnn) => [31, 119, 180],
        (0, ModelKind::Cnn) => [44, 160, 44],
        (1, ModelKind::Qnn) => [214, 39, 40],
        (1, ModelKind::Cnn) => [204, 164, 0],
        _ => unreachable!(),
    }
}

/// Write metric files, the summary, and the plots; returns the paths
/// written.
pub fn emit_report(report: &ComparisonReport, output_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(output_dir)?;
    let mut written = Vec::new();

    let mut runs = report.runs.clone();
    runs.sort_by(|a, b| {
        (&a.protocol, a.model, a.seed).cmp(&(&b.protocol, b.model, b.seed))
    });

    for run in &runs {
        let path = output_dir.join(format!("{}.csv", run.file_stem()));
        std::fs::write(&path, metrics_to_text(&run.epochs))?;
        written.push(path);
    }

    // Summary: deterministic, one final-accuracy line per run.
    let mut summary = String::new();
    let _ = writeln!(summary, "stage: {:?}", report.stage);
    let _ = writeln!(summary, "runs: {}", runs.len());
    for run in &runs {
        let _ = writeln!(
            summary,
            "{} {} seed={} train={} test={} final_test_acc={:.4} final_test_loss={:.4}",
            run.model,
            run.protocol,
            run.seed,
            run.train_count,
            run.test_count,
            run.final_test_acc(),
            run.final_test_loss(),
        );
    }
    for protocol in report.protocols() {
        let _ = writeln!(
            summary,
            "mean final test accuracy [{protocol}]: qnn={:.4} cnn={:.4}",
            report.mean_final_test_acc(&protocol, ModelKind::Qnn),
            report.mean_final_test_acc(&protocol, ModelKind::Cnn),
        );
    }
    if let Some(reference) = report.reference_validation_accuracy {
        let best = runs
            .iter()
            .filter(|r| r.model == ModelKind::Qnn)
            .map(|r| r.final_test_acc())
            .fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(
            summary,
            "reference validation accuracy (reported): {reference:.3}; best QNN here: {best:.4}"
        );
    }
    if !report.localization.is_empty() {
        let _ = writeln!(summary, "localization artifacts: {}", report.localization.len());
        for loc in &report.localization {
            let _ = writeln!(
                summary,
                "  {} {} regions={} {}",
                loc.protocol,
                loc.image_id,
                loc.n_regions,
                loc.annotation_png.display()
            );
        }
    }
    if !report.parameter_note.is_empty() {
        let _ = writeln!(summary, "{}", report.parameter_note);
    }
    let summary_path = output_dir.join("summary.txt");
    std::fs::write(&summary_path, summary)?;
    written.push(summary_path);

    // Timings are real measurements and intentionally live outside the
    // deterministic artifact set.
    let mut timings = String::new();
    let _ = writeln!(
        timings,
        "quanvolution wall seconds: {:.3}",
        report.quanv.wall_seconds
    );
    let _ = writeln!(
        timings,
        "quanvolution summed per-image circuit seconds: {:.3}",
        report.quanv.circuit_seconds
    );
    let _ = writeln!(
        timings,
        "quanvolution computed: {} cache hits: {}",
        report.quanv.computed, report.quanv.cache_hits
    );
    for run in &runs {
        let _ = writeln!(
            timings,
            "train {} {} seed={}: {:.3}s",
            run.model, run.protocol, run.seed, run.train_seconds
        );
    }
    let timings_path = output_dir.join("timings.txt");
    std::fs::write(&timings_path, timings)?;
    written.push(timings_path);

    // Per-protocol accuracy/loss plots plus the combined figure.
    let mut combined = Vec::new();
    for (idx, protocol) in report.protocols().iter().enumerate() {
        let mut acc_series = Vec::new();
        let mut loss_series = Vec::new();
        for model in [ModelKind::Qnn, ModelKind::Cnn] {
            let color = series_color(idx, model);
            let label = format!("{model} {protocol}").to_uppercase();
            acc_series.push(Series {
                label: label.clone(),
                color,
                values: self_curve(report, protocol, model, |e| e.test_acc),
            });
            loss_series.push(Series {
                label: label.clone(),
                color,
                values: self_curve(report, protocol, model, |e| e.test_loss),
            });
            combined.push(Series {
                label,
                color,
                values: self_curve(report, protocol, model, |e| e.test_acc),
            });
        }
        let reference = report
            .reference_validation_accuracy
            .map(|v| (v, format!("REFERENCE {v:.3}")));
        for (kind, series, refline) in [
            ("accuracy", acc_series, reference),
            ("loss", loss_series, None),
        ] {
            let plot = Plot {
                title: format!("{protocol} TEST {kind}").to_uppercase(),
                y_label: kind.to_uppercase(),
                series,
                reference: refline,
            };
            let path = output_dir.join(format!("plot_{protocol}_test_{kind}.png"));
            plot.render()
                .save(&path)
                .map_err(crate::error::Error::from)?;
            written.push(path);
        }
    }
    let combined_plot = Plot {
        title: "COMBINED TEST ACCURACY".into(),
        y_label: "ACCURACY".into(),
        series: combined,
        reference: report
            .reference_validation_accuracy
            .map(|v| (v, format!("REFERENCE {v:.3}"))),
    };
    let combined_path = output_dir.join("plot_combined_test_accuracy.png");
    combined_plot
        .render()
        .save(&combined_path)
        .map_err(crate::error::Error::from)?;
    written.push(combined_path);

    Ok(written)
}

fn self_curve(
    report: &ComparisonReport,
    protocol: &str,
    model: ModelKind,
    metric: fn(&EpochRecord) -> f64,
) -> Vec<f64> {
    report.mean_curve(protocol, model, metric)
}
