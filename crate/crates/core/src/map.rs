use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Single-channel map at image resolution, row-major. Edge probabilities
/// and fractional ground truth both use this type.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMap<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> EdgeMap<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::InvalidShape {
                op: "edge map",
                detail: format!("{height}x{width} needs {} values, got {}", height * width, data.len()),
            });
        }
        Ok(EdgeMap { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        EdgeMap {
            height,
            width,
            data: vec![T::zero(); height * width],
        }
    }

    /// Takes the single plane of a `[1,1,H,W]` tensor.
    pub fn from_tensor(t: &Tensor<T>) -> Result<Self> {
        match t.shape() {
            [1, 1, h, w] => Self::new(*h, *w, t.data().to_vec()),
            s => Err(Error::InvalidShape {
                op: "edge map",
                detail: format!("expected [1, 1, H, W], got {s:?}"),
            }),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn get(&self, y: usize, x: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_size<U>(&self, other: &EdgeMap<U>) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Pixels with value `>= threshold`.
    pub fn binarize(&self, threshold: T) -> BinaryMap {
        BinaryMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| *v >= threshold).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> EdgeMap<U> {
        EdgeMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// Boolean boundary map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMap {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMap {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::InvalidShape {
                op: "binary map",
                detail: format!("{height}x{width} needs {} values, got {}", height * width, data.len()),
            });
        }
        Ok(BinaryMap { height, width, data })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        BinaryMap {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    /// `(y, x)` of every set pixel in row-major order.
    pub fn points(&self) -> Vec<(usize, usize)> {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| (i / self.width, i % self.width))
            .collect()
    }

    pub fn to_edge_map<T: Scalar>(&self) -> EdgeMap<T> {
        EdgeMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|b| if *b { T::one() } else { T::zero() }).collect(),
        }
    }
}
