//! Deterministic synthetic edge dataset: flat-coloured shapes over a
//! background, anti-aliased by 5x5 supersampling, with texture noise and
//! exact one-pixel region boundaries as ground truth. A pixel's label is
//! the label at its centre; the boundary between two labels is drawn on
//! whichever side's pixel centre is closer to it.
//!
//! Geometry and noise use integer arithmetic only, so a seed produces the
//! same bytes on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::Sample;
use crate::error::{Error, Result};
use crate::map::BinaryMap;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MIN_SYNTH_SIZE: usize = 32;

const SUB: i64 = 10; // coordinate units per pixel
const LEVEL_LO: i32 = 26; // ~0.1
const LEVEL_HI: i32 = 230; // ~0.9
const MIN_COLOUR_GAP: i32 = 51; // 0.2 in 8-bit levels
/// Noise standard deviation, 0.05 of full scale, in 1/100 of a level.
const NOISE_SIGMA_CENTI: i64 = 1275;
const MAX_EDGE_FRACTION_DEN: usize = 10;

enum Shape {
    Ellipse { cx: i64, cy: i64, rx: i64, ry: i64 },
    Polygon(Vec<(i64, i64)>),
}

impl Shape {
    fn contains(&self, px: i64, py: i64) -> bool {
        match self {
            Shape::Ellipse { cx, cy, rx, ry } => {
                let dx = (px - cx) as i128 * *ry as i128;
                let dy = (py - cy) as i128 * *rx as i128;
                let r = *rx as i128 * *ry as i128;
                dx * dx + dy * dy <= r * r
            }
            Shape::Polygon(v) => {
                // even-odd crossing test, exact in integers
                let mut inside = false;
                for i in 0..v.len() {
                    let (xi, yi) = v[i];
                    let (xj, yj) = v[(i + 1) % v.len()];
                    if (yi > py) != (yj > py) {
                        let lhs = (px - xi) as i128 * (yj - yi) as i128;
                        let rhs = (xj - xi) as i128 * (py - yi) as i128;
                        if (yj > yi && lhs < rhs) || (yj < yi && lhs > rhs) {
                            inside = !inside;
                        }
                    }
                }
                inside
            }
        }
    }
}

fn random_shape(rng: &mut ChaCha8Rng, size: i64) -> Shape {
    let extent = size * SUB;
    let cx = rng.random_range(0..extent);
    let cy = rng.random_range(0..extent);
    let (r_lo, r_hi) = (extent / 8, extent * 2 / 5);
    match rng.random_range(0..3) {
        0 => Shape::Ellipse {
            cx,
            cy,
            rx: rng.random_range(r_lo..=r_hi),
            ry: rng.random_range(r_lo..=r_hi),
        },
        1 => Shape::Polygon(
            (0..3)
                .map(|_| (cx + rng.random_range(-r_hi..=r_hi), cy + rng.random_range(-r_hi..=r_hi)))
                .collect(),
        ),
        _ => {
            // one vertex per quadrant, in cyclic order: a simple quadrilateral
            let mut off = || rng.random_range(r_lo / 2..=r_hi);
            let v = [
                (cx - off(), cy - off()),
                (cx + off(), cy - off()),
                (cx + off(), cy + off()),
                (cx - off(), cy + off()),
            ];
            Shape::Polygon(v.to_vec())
        }
    }
}

fn random_palette(rng: &mut ChaCha8Rng, n: usize) -> Vec<[i32; 3]> {
    let mut palette: Vec<[i32; 3]> = Vec::with_capacity(n);
    while palette.len() < n {
        let c = [0; 3].map(|_| rng.random_range(LEVEL_LO..=LEVEL_HI));
        let distinct = palette
            .iter()
            .all(|p| (0..3).map(|k| (p[k] - c[k]).abs()).max().unwrap() >= MIN_COLOUR_GAP);
        if distinct {
            palette.push(c);
        }
    }
    palette
}

/// Approximately standard-normal noise in 1/100 of a level: Irwin-Hall sum
/// of twelve 16-bit uniforms, scaled by sigma and rounded in integers.
fn noise_levels(rng: &mut ChaCha8Rng) -> i32 {
    let s: i64 = (0..12).map(|_| rng.random_range(0..65536i64)).sum::<i64>() - 6 * 65536;
    let num = s * NOISE_SIGMA_CENTI;
    let den = 65536;
    (if num >= 0 { (num + den / 2) / den } else { (num - den / 2) / den }) as i32
}

struct Rendered {
    /// Interleaved RGB levels.
    pixels: Vec<u8>,
    gt: BinaryMap,
}

fn render(rng: &mut ChaCha8Rng, size: usize) -> Rendered {
    let n_shapes = rng.random_range(2..=5usize);
    let shapes: Vec<Shape> = (0..n_shapes).map(|_| random_shape(rng, size as i64)).collect();
    let palette = random_palette(rng, n_shapes + 1);
    let label_at = |px: i64, py: i64| -> usize {
        shapes
            .iter()
            .rposition(|s| s.contains(px, py))
            .map_or(0, |i| i + 1)
    };

    let mut labels = vec![0usize; size * size];
    // subsamples sharing the centre's label, out of 25
    let mut purity = vec![0u8; size * size];
    let mut pixels = vec![0u8; size * size * 3];
    for y in 0..size {
        for x in 0..size {
            let mut sum = [0i32; 3];
            let mut sub = [0usize; 25];
            for sy in 0..5 {
                for sx in 0..5 {
                    let l = label_at(x as i64 * SUB + 2 * sx + 1, y as i64 * SUB + 2 * sy + 1);
                    sub[(sy * 5 + sx) as usize] = l;
                    for c in 0..3 {
                        sum[c] += palette[l][c];
                    }
                }
            }
            labels[y * size + x] = sub[12];
            purity[y * size + x] = sub.iter().filter(|l| **l == sub[12]).count() as u8;
            for c in 0..3 {
                let base = (sum[c] + 12) / 25;
                let v = (base * 100 + noise_levels(rng) + 50).div_euclid(100);
                pixels[(y * size + x) * 3 + c] = v.clamp(0, 255) as u8;
            }
        }
    }

    // Each label change between 4-neighbours marks the one of the two pixels
    // whose centre lies nearer the continuous boundary, i.e. the less pure
    // one (ties to the top/left pixel).
    let mut gt = BinaryMap::empty(size, size);
    let mut mark = |a: usize, b: usize| {
        let pick = if purity[a] <= purity[b] { a } else { b };
        gt.set(pick / size, pick % size, true);
    };
    for y in 0..size {
        for x in 0..size {
            let p = y * size + x;
            if x + 1 < size && labels[p + 1] != labels[p] {
                mark(p, p + 1);
            }
            if y + 1 < size && labels[p + size] != labels[p] {
                mark(p, p + size);
            }
        }
    }
    Rendered { pixels, gt }
}

fn sample_from<T: Scalar>(id: String, r: Rendered, size: usize) -> Sample<T> {
    let plane = size * size;
    let image = Tensor::from_fn(&[3, size, size], |i| {
        T::lit(r.pixels[(i % plane) * 3 + i / plane] as f64) / T::lit(255.0)
    });
    Sample {
        id,
        image,
        gt_maps: vec![r.gt.to_edge_map()],
    }
}

/// Generates `count` square samples of side `size`. Sample `i` draws from
/// its own ChaCha stream, so prefixes of a dataset agree across counts.
/// Images whose boundary covers none or at least a tenth of the pixels are
/// redrawn.
pub fn synth_dataset<T: Scalar>(seed: u64, count: usize, size: usize) -> Result<Vec<Sample<T>>> {
    if size < MIN_SYNTH_SIZE {
        return Err(Error::InvalidArgument(format!(
            "synthetic images need size >= {MIN_SYNTH_SIZE}, got {size}"
        )));
    }
    Ok((0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            loop {
                let r = render(&mut rng, size);
                let n = r.gt.count();
                if n > 0 && n * MAX_EDGE_FRACTION_DEN < size * size {
                    return sample_from(format!("{i:04}"), r, size);
                }
            }
        })
        .collect())
}
