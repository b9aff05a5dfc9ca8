//! Detection reports (JSON + CSV) and ROC tables.

use std::fmt::Write as _;

use istd_core::metrics::{pixel_metrics, ConfusionCounts, PdFaCounts, RocCurve};
use serde::{Deserialize, Serialize};

/// Bumped whenever a field is added, removed or renamed.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ImageReport {
    pub id: String,
    pub iou: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub pd: f64,
    pub pd_vacuous: bool,
    pub fa: f64,
    pub targets: u64,
    pub detected: u64,
    pub false_pixels: u64,
    pub pixels: u64,
}

/// Dataset totals; every ratio is computed from summed counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AggregateReport {
    pub images: usize,
    pub iou: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub pd: f64,
    pub pd_vacuous: bool,
    pub fa: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub targets: u64,
    pub detected: u64,
    pub false_pixels: u64,
    pub pixels: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DetectionReport {
    pub schema_version: u32,
    /// Method name, or `files` when scores were read from disk.
    pub source: String,
    pub threshold: f64,
    pub match_radius: f64,
    pub images: Vec<ImageReport>,
    pub aggregate: AggregateReport,
}

/// Per-image counts feeding a report.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageCounts {
    pub id: String,
    pub confusion: ConfusionCounts,
    pub detection: PdFaCounts,
}

impl ImageReport {
    fn new(c: &ImageCounts) -> Self {
        let px = pixel_metrics(&c.confusion);
        let pd = c.detection.pd();
        ImageReport {
            id: c.id.clone(),
            iou: px.iou,
            f1: px.f1,
            precision: px.precision,
            recall: px.recall,
            pd: pd.value,
            pd_vacuous: pd.vacuous,
            fa: c.detection.fa(),
            targets: c.detection.total,
            detected: c.detection.correct,
            false_pixels: c.detection.false_pixels,
            pixels: c.detection.all_pixels,
        }
    }
}

impl DetectionReport {
    pub fn new(source: &str, threshold: f64, match_radius: f64, counts: &[ImageCounts]) -> Self {
        let conf = counts.iter().fold(ConfusionCounts::default(), |a, c| a + c.confusion);
        let det = counts.iter().fold(PdFaCounts::default(), |a, c| a + c.detection);
        let px = pixel_metrics(&conf);
        let pd = det.pd();
        DetectionReport {
            schema_version: REPORT_SCHEMA_VERSION,
            source: source.to_string(),
            threshold,
            match_radius,
            images: counts.iter().map(ImageReport::new).collect(),
            aggregate: AggregateReport {
                images: counts.len(),
                iou: px.iou,
                f1: px.f1,
                precision: px.precision,
                recall: px.recall,
                pd: pd.value,
                pd_vacuous: pd.vacuous,
                fa: det.fa(),
                tp: conf.tp,
                fp: conf.fp,
                fn_: conf.fn_,
                tn: conf.tn,
                targets: det.total,
                detected: det.correct,
                false_pixels: det.false_pixels,
                pixels: det.all_pixels,
            },
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    /// One row per image, then an `ALL` row with the aggregate.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,iou,f1,precision,recall,pd,fa,targets,detected,false_pixels,pixels\n");
        for r in &self.images {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.id, r.iou, r.f1, r.precision, r.recall, r.pd, r.fa, r.targets, r.detected, r.false_pixels, r.pixels
            );
        }
        let a = &self.aggregate;
        let _ = writeln!(
            s,
            "ALL,{},{},{},{},{},{},{},{},{},{}",
            a.iou, a.f1, a.precision, a.recall, a.pd, a.fa, a.targets, a.detected, a.false_pixels, a.pixels
        );
        s
    }
}

/// Header plus one `threshold,pd,fa` row per sample.
pub fn roc_csv(curve: &RocCurve) -> String {
    let mut s = String::from("threshold,pd,fa\n");
    for p in &curve.samples {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.pd, p.fa);
    }
    s
}
