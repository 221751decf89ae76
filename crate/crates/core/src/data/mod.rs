//! Image and ground-truth ingestion, manifests and the synthetic dataset.

mod io;
mod manifest;
mod pnm;
mod synth;

use std::path::Path;

use rayon::prelude::*;

pub use io::{load_image, read_edge_map, save_image, write_edge_map};
pub use manifest::{Manifest, ManifestEntry, Split};
pub use pnm::Pnm;
pub use synth::{synth_dataset, MIN_SYNTH_SIZE};

use crate::error::{Error, Result};
use crate::loss::LabelMap;
use crate::map::{BinaryMap, EdgeMap};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One image with its annotator maps.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T> {
    pub id: String,
    /// `[3, H, W]`, values in `[0, 1]`.
    pub image: Tensor<T>,
    pub gt_maps: Vec<EdgeMap<T>>,
}

impl<T: Scalar> Sample<T> {
    pub fn new(id: impl Into<String>, image: Tensor<T>, gt_maps: Vec<EdgeMap<T>>) -> Result<Self> {
        let (h, w) = match image.shape() {
            [3, h, w] => (*h, *w),
            s => {
                return Err(Error::InvalidShape {
                    op: "sample",
                    detail: format!("image must be [3, H, W], got {s:?}"),
                })
            }
        };
        if gt_maps.is_empty() {
            return Err(Error::InvalidArgument("sample needs at least one ground-truth map".into()));
        }
        for g in &gt_maps {
            if (g.height(), g.width()) != (h, w) {
                return Err(Error::ShapeMismatch {
                    op: "sample",
                    lhs: vec![h, w],
                    rhs: vec![g.height(), g.width()],
                });
            }
            if g.data().iter().any(|v| !(v.as_f64() >= 0.0 && v.as_f64() <= 1.0)) {
                return Err(Error::InvalidArgument("ground-truth values must lie in [0, 1]".into()));
            }
        }
        Ok(Sample {
            id: id.into(),
            image,
            gt_maps,
        })
    }

    pub fn height(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[2]
    }

    /// The image as a `[1, 3, H, W]` batch.
    pub fn batch(&self) -> Tensor<T> {
        Tensor::new(&[1, 3, self.height(), self.width()], self.image.data().to_vec())
            .expect("sample image has three dimensions")
    }

    pub fn consensus(&self) -> EdgeMap<T> {
        consensus_gt(&self.gt_maps).expect("sample maps share one shape")
    }

    /// Training labels from the annotator consensus.
    pub fn labels(&self, gt_threshold: f64) -> Result<LabelMap> {
        LabelMap::threshold_gt(&self.consensus(), gt_threshold)
    }

    /// Per-annotator boundary sets for evaluation; any nonzero value marks
    /// a boundary pixel.
    pub fn boundaries(&self) -> Vec<BinaryMap> {
        self.gt_maps.iter().map(gt_boundary).collect()
    }
}

pub fn gt_boundary<T: Scalar>(map: &EdgeMap<T>) -> BinaryMap {
    let data = map.data().iter().map(|v| *v > T::zero()).collect();
    BinaryMap::new(map.height(), map.width(), data).expect("same size")
}

/// Pixelwise mean of annotator maps: the fraction marking each pixel.
pub fn consensus_gt<T: Scalar>(maps: &[EdgeMap<T>]) -> Result<EdgeMap<T>> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidArgument("consensus of zero maps".into()))?;
    let mut out = EdgeMap::zeros(first.height(), first.width());
    for m in maps {
        if !m.same_size(first) {
            return Err(Error::ShapeMismatch {
                op: "consensus_gt",
                lhs: vec![first.height(), first.width()],
                rhs: vec![m.height(), m.width()],
            });
        }
        for (o, v) in out.data_mut().iter_mut().zip(m.data()) {
            *o += *v;
        }
    }
    let n = T::lit(maps.len() as f64);
    out.data_mut().iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

/// Loads every sample of a manifest, in manifest order.
pub fn load_samples<T: Scalar>(manifest: &Manifest) -> Result<Vec<Sample<T>>> {
    manifest
        .entries
        .par_iter()
        .map(|e| {
            let image = load_image(&e.image)?;
            let gts = e.gts.iter().map(read_edge_map).collect::<Result<Vec<_>>>()?;
            Sample::new(e.id(), image, gts).map_err(|err| Error::format(&e.image, err.to_string()))
        })
        .collect()
}

/// Writes `images/<id>.png`, `gt/<id>.pgm` (or `gt/<id>_<k>.pgm` for
/// several annotators) and `manifest.tsv` under `dir`.
pub fn write_dataset<T: Scalar>(samples: &[Sample<T>], dir: impl AsRef<Path>, split: Option<Split>) -> Result<Manifest> {
    let dir = dir.as_ref();
    for sub in ["images", "gt"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let entries = samples
        .par_iter()
        .map(|s| {
            let image = dir.join("images").join(format!("{}.png", s.id));
            save_image(&s.image, &image)?;
            let gts = s
                .gt_maps
                .iter()
                .enumerate()
                .map(|(k, g)| {
                    let name = if s.gt_maps.len() == 1 {
                        format!("{}.pgm", s.id)
                    } else {
                        format!("{}_{}.pgm", s.id, k + 1)
                    };
                    let path = dir.join("gt").join(name);
                    write_edge_map(g, &path).map(|_| path)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ManifestEntry { image, gts })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest { split, entries };
    manifest.save(dir.join("manifest.tsv"))?;
    Ok(manifest)
}
