use std::io::Write;

use rayon::prelude::*;

use super::matching::correspond;
use super::nms::nms_thin;
use crate::error::{Error, Result};
use crate::map::{BinaryMap, EdgeMap};
use crate::scalar::Scalar;

/// Default matching tolerance as a fraction of the image diagonal.
pub const DEFAULT_TOLERANCE: f64 = 0.0075;

/// Counts at one binarization threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub tp_pred: usize,
    pub n_pred: usize,
    pub tp_gt: usize,
    pub n_gt: usize,
}

impl PrPoint {
    pub fn precision(&self) -> f64 {
        ratio(self.tp_pred, self.n_pred)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp_gt, self.n_gt)
    }

    pub fn f_measure(&self) -> f64 {
        f_measure(self.precision(), self.recall())
    }

    fn merge(&mut self, other: &PrPoint) {
        self.tp_pred += other.tp_pred;
        self.n_pred += other.n_pred;
        self.tp_gt += other.tp_gt;
        self.n_gt += other.n_gt;
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean `2PR/(P+R)`, zero when both are zero.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// `k/100` for `k = 1..=99`.
pub fn default_thresholds() -> Vec<f64> {
    uniform_thresholds(99)
}

/// `n` evenly spaced thresholds `k/(n+1)`.
pub fn uniform_thresholds(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 / (n + 1) as f64).collect()
}

fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::InvalidArgument("threshold list is empty".into()));
    }
    let in_range = thresholds.iter().all(|t| *t > 0.0 && *t < 1.0);
    let increasing = thresholds.windows(2).all(|w| w[0] < w[1]);
    if !in_range || !increasing {
        return Err(Error::InvalidArgument(
            "thresholds must be strictly increasing within (0, 1)".into(),
        ));
    }
    Ok(())
}

/// Precision/recall counts of a thinned edge map against one or more
/// annotator maps. Matching radius is `tol_frac` times the image diagonal.
/// A predicted pixel is a true positive if any annotator matches it;
/// ground-truth counts pool all annotators.
pub fn pr_curve<T: Scalar>(
    thinned: &EdgeMap<T>,
    gts: &[BinaryMap],
    tol_frac: f64,
    thresholds: &[f64],
) -> Result<Vec<PrPoint>> {
    if gts.is_empty() {
        return Err(Error::InvalidArgument("no ground-truth maps".into()));
    }
    check_thresholds(thresholds)?;
    let (h, w) = (thinned.height(), thinned.width());
    if let Some(bad) = gts.iter().find(|g| g.height() != h || g.width() != w) {
        return Err(Error::ShapeMismatch {
            op: "pr_curve",
            lhs: vec![h, w],
            rhs: vec![bad.height(), bad.width()],
        });
    }
    let max_dist = tol_frac * ((h * h + w * w) as f64).sqrt();
    let n_gt: usize = gts.iter().map(BinaryMap::count).sum();

    thresholds
        .iter()
        .map(|&t| {
            let pred = thinned.binarize(T::lit(t));
            let mut any = vec![false; pred.count()];
            let mut tp_gt = 0;
            for gt in gts {
                let c = correspond(&pred, gt, max_dist)?;
                for (a, m) in any.iter_mut().zip(&c.pred_matched) {
                    *a |= *m;
                }
                tp_gt += c.counts().tp_gt;
            }
            Ok(PrPoint {
                threshold: t,
                tp_pred: any.iter().filter(|m| **m).count(),
                n_pred: any.len(),
                tp_gt,
                n_gt,
            })
        })
        .collect()
}

/// Dataset-level summary.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub per_image: Vec<Vec<PrPoint>>,
    /// Counts summed over images at each threshold.
    pub aggregate: Vec<PrPoint>,
    pub ods_f: f64,
    pub ods_threshold: f64,
    pub ois_f: f64,
}

impl EvalResult {
    pub fn summary(&self) -> String {
        format!(
            "ODS={:.4}@{:.2} OIS={:.4}",
            self.ods_f, self.ods_threshold, self.ois_f
        )
    }

    /// Per-image tables followed by an `AGGREGATE` table and the summary.
    pub fn write_csv<W: Write>(&self, out: &mut W, ids: &[String]) -> std::io::Result<()> {
        const HEADER: &str = "threshold,tp_pred,n_pred,tp_gt,n_gt,precision,recall,f";
        let rows = |out: &mut W, points: &[PrPoint]| -> std::io::Result<()> {
            writeln!(out, "{HEADER}")?;
            for p in points {
                writeln!(
                    out,
                    "{:.2},{},{},{},{},{:.6},{:.6},{:.6}",
                    p.threshold,
                    p.tp_pred,
                    p.n_pred,
                    p.tp_gt,
                    p.n_gt,
                    p.precision(),
                    p.recall(),
                    p.f_measure()
                )?;
            }
            Ok(())
        };
        for (i, points) in self.per_image.iter().enumerate() {
            let id = ids.get(i).cloned().unwrap_or_else(|| format!("image{i}"));
            writeln!(out, "# {id}")?;
            rows(out, points)?;
        }
        writeln!(out, "# AGGREGATE")?;
        rows(out, &self.aggregate)?;
        writeln!(out, "# {}", self.summary())
    }
}

/// ODS: best F of the counts pooled over images at a shared threshold.
/// OIS: each image at its own best threshold, counts pooled, then F.
/// Ties go to the lowest threshold.
pub fn ods_ois(per_image: Vec<Vec<PrPoint>>) -> Result<EvalResult> {
    let first = per_image
        .first()
        .ok_or_else(|| Error::InvalidArgument("no images to aggregate".into()))?;
    let grid: Vec<f64> = first.iter().map(|p| p.threshold).collect();
    for points in &per_image {
        if points.len() != grid.len() || points.iter().zip(&grid).any(|(p, t)| p.threshold != *t) {
            return Err(Error::InvalidArgument("images use different threshold grids".into()));
        }
    }
    let mut aggregate: Vec<PrPoint> = grid
        .iter()
        .map(|&threshold| PrPoint {
            threshold,
            tp_pred: 0,
            n_pred: 0,
            tp_gt: 0,
            n_gt: 0,
        })
        .collect();
    let mut ois = PrPoint {
        threshold: 0.0,
        tp_pred: 0,
        n_pred: 0,
        tp_gt: 0,
        n_gt: 0,
    };
    for points in &per_image {
        for (agg, p) in aggregate.iter_mut().zip(points) {
            agg.merge(p);
        }
        ois.merge(best(points));
    }
    let ods = best(&aggregate);
    Ok(EvalResult {
        ods_f: ods.f_measure(),
        ods_threshold: ods.threshold,
        ois_f: ois.f_measure(),
        per_image,
        aggregate,
    })
}

fn best(points: &[PrPoint]) -> &PrPoint {
    points
        .iter()
        .fold(&points[0], |b, p| if p.f_measure() > b.f_measure() { p } else { b })
}

/// Full benchmark over a dataset: optional NMS, per-image PR curves in
/// parallel, then ODS/OIS. Results are in input order.
pub fn evaluate<T: Scalar>(
    predictions: &[EdgeMap<T>],
    ground_truth: &[Vec<BinaryMap>],
    tol_frac: f64,
    thresholds: &[f64],
    thin: bool,
) -> Result<EvalResult> {
    if predictions.len() != ground_truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} ground-truth sets",
            predictions.len(),
            ground_truth.len()
        )));
    }
    let per_image = predictions
        .par_iter()
        .zip(ground_truth.par_iter())
        .map(|(pred, gts)| {
            if thin {
                pr_curve(&nms_thin(pred), gts, tol_frac, thresholds)
            } else {
                pr_curve(pred, gts, tol_frac, thresholds)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    ods_ois(per_image)
}
