use crate::error::{Error, Result};
use crate::map::EdgeMap;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    Edge,
    NonEdge,
    Ignore,
}

/// Per-pixel training labels derived from fractional ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<Label>,
    n_edge: usize,
    n_nonedge: usize,
}

impl LabelMap {
    /// EDGE where `gt > gt_threshold`, NONEDGE where `gt == 0`, IGNORE in
    /// between (pixels only some annotators marked).
    pub fn threshold_gt<T: Scalar>(gt: &EdgeMap<T>, gt_threshold: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gt_threshold) {
            return Err(Error::InvalidArgument(format!(
                "gt threshold {gt_threshold} outside [0, 1)"
            )));
        }
        let thr = T::lit(gt_threshold);
        let mut labels = Vec::with_capacity(gt.data().len());
        for (i, &v) in gt.data().iter().enumerate() {
            if !(v >= T::zero() && v <= T::one()) {
                return Err(Error::InvalidArgument(format!(
                    "ground truth value {v} at pixel {i} outside [0, 1]"
                )));
            }
            labels.push(if v > thr {
                Label::Edge
            } else if v == T::zero() {
                Label::NonEdge
            } else {
                Label::Ignore
            });
        }
        Ok(Self::from_labels(gt.height(), gt.width(), labels))
    }

    pub fn from_labels(height: usize, width: usize, labels: Vec<Label>) -> Self {
        assert_eq!(labels.len(), height * width, "label count must match dimensions");
        let n_edge = labels.iter().filter(|l| **l == Label::Edge).count();
        let n_nonedge = labels.iter().filter(|l| **l == Label::NonEdge).count();
        LabelMap {
            height,
            width,
            labels,
            n_edge,
            n_nonedge,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// |Y+|
    pub fn n_edge(&self) -> usize {
        self.n_edge
    }

    /// |Y-|
    pub fn n_nonedge(&self) -> usize {
        self.n_nonedge
    }

    pub fn n_ignored(&self) -> usize {
        self.labels.len() - self.n_edge - self.n_nonedge
    }

    /// True when one of the two classes is absent; the absent class then
    /// carries zero weight.
    pub fn is_degenerate(&self) -> bool {
        self.n_edge == 0 || self.n_nonedge == 0
    }

    /// `(edge weight, non-edge weight)` = `(λ·|Y-|/|Y|, |Y+|/|Y|)`.
    pub fn class_weights(&self, lambda: f64) -> (f64, f64) {
        let total = (self.n_edge + self.n_nonedge) as f64;
        if total == 0.0 {
            return (0.0, 0.0);
        }
        (
            lambda * self.n_nonedge as f64 / total,
            self.n_edge as f64 / total,
        )
    }
}
