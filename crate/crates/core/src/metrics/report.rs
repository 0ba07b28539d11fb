//! Aggregated T1 to T4 report types with JSON and fixed-width text output.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::query::StageTimings;

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Precision, recall and F1 with the counts they derive from.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1,
        }
    }

    pub fn merge(&self, other: &Prf) -> Prf {
        Prf::from_counts(
            self.true_positives + other.true_positives,
            self.false_positives + other.false_positives,
            self.false_negatives + other.false_negatives,
        )
    }
}

/// Localization statistics over one group of ground-truth objects.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct T1Summary {
    pub objects: usize,
    pub matched: usize,
    pub mean_error_cm: Option<f64>,
    pub std_error_cm: Option<f64>,
    pub median_error_cm: Option<f64>,
    pub mean_angular_deg: Option<f64>,
    pub std_angular_deg: Option<f64>,
    pub success_at_10: f64,
    pub success_at_20: f64,
    /// Success@10 after removing the anchor-to-center offset of the visible
    /// surface (half-extent along the view ray).
    pub adjusted_success_at_10: f64,
    /// Share of objects whose error stays within half-extent along the view
    /// ray plus 1 cm.
    pub within_tolerance_pct: f64,
    pub mean_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct T1Report {
    /// Catalog objects; support surfaces are summarized separately.
    pub overall: T1Summary,
    pub surfaces: T1Summary,
    pub by_context: BTreeMap<String, T1Summary>,
    pub by_difficulty: BTreeMap<String, T1Summary>,
    pub detections: usize,
    pub planar_fallbacks: usize,
    pub insufficient_depth_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct T2Report {
    pub overall: Prf,
    pub spatial: Prf,
    pub high_level: Prf,
    pub relation_type_accuracy: Option<f64>,
    pub relational_query_success: Option<f64>,
    pub by_context: BTreeMap<String, Prf>,
    pub by_difficulty: BTreeMap<String, Prf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CategoryStats {
    pub total: usize,
    pub passed: usize,
    pub success_pct: Option<f64>,
}

impl CategoryStats {
    pub(crate) fn add(&mut self, passed: bool) {
        self.total += 1;
        self.passed += usize::from(passed);
        self.success_pct = Some(100.0 * self.passed as f64 / self.total as f64);
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct T3Context {
    pub overall: CategoryStats,
    pub by_category: BTreeMap<String, CategoryStats>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct T3Report {
    pub overall: CategoryStats,
    pub by_category: BTreeMap<String, CategoryStats>,
    pub mean_distance_error_cm: Option<f64>,
    pub median_distance_error_cm: Option<f64>,
    pub by_context: BTreeMap<String, T3Context>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyStats {
    pub runs: usize,
    pub mean_s: Option<f64>,
    pub median_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct T4Report {
    pub query_runs: usize,
    pub cache_hits: usize,
    /// Medians over runs that went through perception.
    pub stage_medians: Option<StageTimings>,
    pub end_to_end: LatencyStats,
    pub end_to_end_total_s: f64,
    pub by_category: BTreeMap<String, LatencyStats>,
    pub query_success_pct: Option<f64>,
    pub mean_error_cm: Option<f64>,
    pub edge_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub version: u32,
    pub variant: String,
    pub scene_count: usize,
    pub t1: T1Report,
    pub t2: T2Report,
    pub t3: T3Report,
    pub t4: T4Report,
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

impl BenchmarkReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Fixed-width text rendering of the headline numbers.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        let _ = writeln!(w, "variant {}  scenes {}", self.variant, self.scene_count);
        let _ = writeln!(w);
        let _ = writeln!(
            w,
            "{:<14} {:>7} {:>7} {:>9} {:>9} {:>9} {:>8} {:>8} {:>8} {:>7}",
            "T1", "objects", "matched", "err_cm", "std_cm", "ang_deg", "s@10", "s@20", "adj@10", "iou"
        );
        let mut t1_row = |name: &str, s: &T1Summary| {
            let _ = writeln!(
                w,
                "{:<14} {:>7} {:>7} {:>9} {:>9} {:>9} {:>8.1} {:>8.1} {:>8.1} {:>7.3}",
                name,
                s.objects,
                s.matched,
                opt(s.mean_error_cm, 2),
                opt(s.std_error_cm, 2),
                opt(s.mean_angular_deg, 2),
                s.success_at_10,
                s.success_at_20,
                s.adjusted_success_at_10,
                s.mean_iou
            );
        };
        t1_row("overall", &self.t1.overall);
        t1_row("surfaces", &self.t1.surfaces);
        for (k, s) in self.t1.by_context.iter().chain(&self.t1.by_difficulty) {
            t1_row(k, s);
        }
        let _ = writeln!(w, "{:<14} {:>7.2}%", "insufficient", 100.0 * self.t1.insufficient_depth_rate);
        let _ = writeln!(w);
        let _ = writeln!(w, "{:<14} {:>6} {:>6} {:>6} {:>9} {:>9} {:>9}", "T2", "tp", "fp", "fn", "precision", "recall", "f1");
        let mut prf_row = |name: &str, p: &Prf| {
            let _ = writeln!(
                w,
                "{:<14} {:>6} {:>6} {:>6} {:>9.3} {:>9.3} {:>9.3}",
                name, p.true_positives, p.false_positives, p.false_negatives, p.precision, p.recall, p.f1
            );
        };
        prf_row("overall", &self.t2.overall);
        prf_row("spatial", &self.t2.spatial);
        prf_row("high_level", &self.t2.high_level);
        for (k, p) in self.t2.by_context.iter().chain(&self.t2.by_difficulty) {
            prf_row(k, p);
        }
        let _ = writeln!(w, "{:<14} {:>9}", "type_acc", opt(self.t2.relation_type_accuracy, 3));
        let _ = writeln!(w, "{:<14} {:>9}", "relational_%", opt(self.t2.relational_query_success, 1));
        let _ = writeln!(w);
        let _ = writeln!(w, "{:<14} {:>7} {:>7} {:>9}", "T3", "total", "passed", "success%");
        let mut cat_row = |name: &str, c: &CategoryStats| {
            let _ = writeln!(w, "{:<14} {:>7} {:>7} {:>9}", name, c.total, c.passed, opt(c.success_pct, 1));
        };
        cat_row("overall", &self.t3.overall);
        for (k, c) in &self.t3.by_category {
            cat_row(k, c);
        }
        for (k, c) in &self.t3.by_context {
            cat_row(k, &c.overall);
        }
        let _ = writeln!(
            w,
            "{:<14} {:>9} {:>9}",
            "dist_err_cm",
            opt(self.t3.mean_distance_error_cm, 2),
            opt(self.t3.median_distance_error_cm, 2)
        );
        let _ = writeln!(w);
        let t4 = &self.t4;
        let _ = writeln!(w, "{:<14} {:>7} {:>7} {:>9} {:>9} {:>10}", "T4", "runs", "cached", "mean_s", "median_s", "total_s");
        let _ = writeln!(
            w,
            "{:<14} {:>7} {:>7} {:>9} {:>9} {:>10.2}",
            "end_to_end",
            t4.query_runs,
            t4.cache_hits,
            opt(t4.end_to_end.mean_s, 2),
            opt(t4.end_to_end.median_s, 2),
            t4.end_to_end_total_s
        );
        for (k, l) in &t4.by_category {
            let _ = writeln!(w, "{:<14} {:>7} {:>7} {:>9} {:>9}", k, l.runs, "", opt(l.mean_s, 2), opt(l.median_s, 2));
        }
        if let Some(s) = &t4.stage_medians {
            let _ = writeln!(
                w,
                "stage medians  capture {:.2}  network {:.2}  mllm {:.2}  detection {:.2}  grounding {:.2}  e2e {:.2}",
                s.capture_encode, s.network, s.mllm, s.detection, s.client_grounding, s.end_to_end
            );
        }
        out
    }
}
