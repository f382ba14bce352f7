//! Evaluation metrics: Chamfer distance, density-aware Chamfer distance,
//! F-score and segmentation accuracy, plus the report container and its
//! CSV / Markdown serialization.

use crate::error::{CsError, Result};
use crate::geom::{dist2, PointCloud};
use std::collections::BTreeMap;

/// Options shared by the metric computations.
#[derive(Debug, Clone)]
pub struct MetricConfig {
    /// Square the nearest-neighbor distances inside CD (off by default;
    /// the loss definition uses the unsquared L2 norm).
    pub cd_squared: bool,
    /// Temperature of the density-aware CD exponent.
    pub dcd_alpha: f64,
    /// Distance threshold for the small F-score (interpreted in
    /// normalized model units).
    pub fscore_tau_small: f64,
    /// Distance threshold for the large F-score.
    pub fscore_tau_large: f64,
    /// Probability threshold for binarizing segmentation predictions.
    pub seg_threshold: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            cd_squared: false,
            dcd_alpha: 1000.0,
            fscore_tau_small: 1e-4,
            fscore_tau_large: 1e-3,
            seg_threshold: 0.5,
        }
    }
}

fn check_nonempty(a: &PointCloud, b: &PointCloud, op: &str) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(CsError::invalid(format!("{}: empty point cloud", op)));
    }
    Ok(())
}

/// Index of the nearest point of `cloud` to `p`, ties by lowest index.
fn nearest(p: &[f64; 3], cloud: &PointCloud) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d2 = f64::INFINITY;
    for (i, q) in cloud.points.iter().enumerate() {
        let d2 = dist2(p, q);
        if d2 < best_d2 {
            best_d2 = d2;
            best = i;
        }
    }
    (best, best_d2)
}

/// Symmetric Chamfer distance with unsquared L2 norms:
/// mean over `a` of the nearest distance into `b`, plus the reverse.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    chamfer_distance_cfg(a, b, false)
}

pub fn chamfer_distance_cfg(a: &PointCloud, b: &PointCloud, squared: bool) -> Result<f64> {
    check_nonempty(a, b, "chamfer_distance")?;
    let one_way = |from: &PointCloud, to: &PointCloud| -> f64 {
        let sum: f64 = from
            .points
            .iter()
            .map(|p| {
                let (_, d2) = nearest(p, to);
                if squared {
                    d2
                } else {
                    d2.sqrt()
                }
            })
            .sum();
        sum / from.len() as f64
    };
    Ok(one_way(a, b) + one_way(b, a))
}

/// Density-aware Chamfer distance, bounded in [0,1]. Each match is
/// weighted by exp(-alpha * d^2) and normalized by how many points share
/// the same nearest neighbor.
pub fn density_aware_cd(a: &PointCloud, b: &PointCloud, alpha: f64) -> Result<f64> {
    check_nonempty(a, b, "density_aware_cd")?;
    if alpha <= 0.0 {
        return Err(CsError::invalid("density_aware_cd: alpha must be > 0"));
    }
    let one_way = |from: &PointCloud, to: &PointCloud| -> f64 {
        let matches: Vec<(usize, f64)> = from.points.iter().map(|p| nearest(p, to)).collect();
        let mut mult = vec![0usize; to.len()];
        for &(i, _) in &matches {
            mult[i] += 1;
        }
        let sum: f64 = matches
            .iter()
            .map(|&(i, d2)| 1.0 - (-alpha * d2).exp() / mult[i] as f64)
            .sum();
        sum / from.len() as f64
    };
    Ok(0.5 * (one_way(a, b) + one_way(b, a)))
}

/// Harmonic mean of precision (pred points within `tau` of gt) and recall
/// (gt points within `tau` of pred); 0 when both are 0.
pub fn f_score(pred: &PointCloud, gt: &PointCloud, tau: f64) -> Result<f64> {
    check_nonempty(pred, gt, "f_score")?;
    if tau <= 0.0 {
        return Err(CsError::invalid("f_score: tau must be > 0"));
    }
    let frac_within = |from: &PointCloud, to: &PointCloud| -> f64 {
        let hits = from
            .points
            .iter()
            .filter(|p| nearest(p, to).1.sqrt() <= tau)
            .count();
        hits as f64 / from.len() as f64
    };
    let p = frac_within(pred, gt);
    let r = frac_within(gt, pred);
    if p + r == 0.0 {
        Ok(0.0)
    } else {
        Ok(2.0 * p * r / (p + r))
    }
}

/// Fraction of points where the thresholded prediction matches the
/// binary ground truth.
pub fn segmentation_accuracy(pred: &[f64], gt: &[f64], threshold: f64) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(CsError::invalid(format!(
            "segmentation_accuracy: length mismatch {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(CsError::invalid("segmentation_accuracy: empty input"));
    }
    let correct = pred
        .iter()
        .zip(gt)
        .filter(|(p, g)| (**p >= threshold) == (**g >= 0.5))
        .count();
    Ok(correct as f64 / pred.len() as f64)
}

/// Metric values for one sample or one aggregate row. `cd` is stored in
/// raw units; the reports multiply by 1e4 for display.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct MetricRow {
    pub cd: f64,
    pub dcd: f64,
    pub fscore_small: f64,
    pub fscore_large: f64,
    pub seg_macc: f64,
}

impl MetricRow {
    pub fn compute(
        pred: &PointCloud,
        gt: &PointCloud,
        pred_labels: &[f64],
        gt_labels: &[f64],
        cfg: &MetricConfig,
    ) -> Result<MetricRow> {
        Ok(MetricRow {
            cd: chamfer_distance_cfg(pred, gt, cfg.cd_squared)?,
            dcd: density_aware_cd(pred, gt, cfg.dcd_alpha)?,
            fscore_small: f_score(pred, gt, cfg.fscore_tau_small)?,
            fscore_large: f_score(pred, gt, cfg.fscore_tau_large)?,
            seg_macc: segmentation_accuracy(pred_labels, gt_labels, cfg.seg_threshold)?,
        })
    }

    fn mean(rows: &[&MetricRow]) -> MetricRow {
        let n = rows.len().max(1) as f64;
        let mut out = MetricRow::default();
        for r in rows {
            out.cd += r.cd;
            out.dcd += r.dcd;
            out.fscore_small += r.fscore_small;
            out.fscore_large += r.fscore_large;
            out.seg_macc += r.seg_macc;
        }
        out.cd /= n;
        out.dcd /= n;
        out.fscore_small /= n;
        out.fscore_large /= n;
        out.seg_macc /= n;
        out
    }
}

/// Per-sample and aggregate metric report.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    /// (sample id, category, metrics)
    pub samples: Vec<(String, String, MetricRow)>,
    /// Free-form notes placed in the report header (e.g. how the F-score
    /// thresholds are interpreted).
    pub notes: Vec<String>,
}

impl MetricsReport {
    pub fn push(&mut self, id: impl Into<String>, category: impl Into<String>, row: MetricRow) {
        self.samples.push((id.into(), category.into(), row));
    }

    pub fn aggregate(&self) -> MetricRow {
        MetricRow::mean(&self.samples.iter().map(|(_, _, r)| r).collect::<Vec<_>>())
    }

    pub fn per_category(&self) -> BTreeMap<String, MetricRow> {
        let mut groups: BTreeMap<String, Vec<&MetricRow>> = BTreeMap::new();
        for (_, cat, row) in &self.samples {
            groups.entry(cat.clone()).or_default().push(row);
        }
        groups
            .into_iter()
            .map(|(k, v)| (k, MetricRow::mean(&v)))
            .collect()
    }

    /// One row per sample plus per-category aggregates plus an overall
    /// aggregate row. CD is reported multiplied by 1e4.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for note in &self.notes {
            out.push_str(&format!("# {}\n", note));
        }
        out.push_str("id,category,cd_x1e4,dcd,fscore_small,fscore_large,seg_macc\n");
        let fmt = |id: &str, cat: &str, r: &MetricRow| {
            format!(
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                id,
                cat,
                r.cd * 1e4,
                r.dcd,
                r.fscore_small,
                r.fscore_large,
                r.seg_macc
            )
        };
        for (id, cat, row) in &self.samples {
            out.push_str(&fmt(id, cat, row));
        }
        for (cat, row) in self.per_category() {
            out.push_str(&fmt("aggregate", &cat, &row));
        }
        out.push_str(&fmt("aggregate", "all", &self.aggregate()));
        out
    }

    /// Markdown table mirroring the CD / DCD / F-score / mAcc column order.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        for note in &self.notes {
            out.push_str(&format!("> {}\n", note));
        }
        out.push_str("| Category | CD x1e4 | DCD | F(small) | F(large) | mAcc |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        for (cat, r) in self.per_category() {
            out.push_str(&format!(
                "| {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} |\n",
                cat,
                r.cd * 1e4,
                r.dcd,
                r.fscore_small,
                r.fscore_large,
                r.seg_macc
            ));
        }
        let r = self.aggregate();
        out.push_str(&format!(
            "| all | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} |\n",
            r.cd * 1e4,
            r.dcd,
            r.fscore_small,
            r.fscore_large,
            r.seg_macc
        ));
        out
    }
}
