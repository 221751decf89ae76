use crate::map::EdgeMap;
use crate::scalar::Scalar;

/// Width of the Gaussian used to estimate edge orientation.
pub const NMS_SIGMA: f64 = 1.0;

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian blur with replicated borders.
fn smooth(data: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * data[y * w + clamp(x as isize + i as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[clamp(y as isize + i as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Bilinear sample with zero outside the map.
fn sample(data: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let at = |yy: f64, xx: f64| {
        if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
            0.0
        } else {
            data[yy as usize * w + xx as usize]
        }
    };
    (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1.0))
        + fy * ((1.0 - fx) * at(y0 + 1.0, x0) + fx * at(y0 + 1.0, x0 + 1.0))
}

/// Direction `(dy, dx)` across the ridge at each pixel: the Hessian
/// eigenvector of most negative curvature of the smoothed map.
fn normals(prob: &[f64], h: usize, w: usize) -> Vec<(f64, f64)> {
    let s = smooth(prob, h, w, NMS_SIGMA);
    let at = |y: isize, x: isize| s[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize];
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let c = at(y, x);
            let hxx = at(y, x + 1) - 2.0 * c + at(y, x - 1);
            let hyy = at(y + 1, x) - 2.0 * c + at(y - 1, x);
            let hxy = (at(y + 1, x + 1) - at(y - 1, x + 1) - at(y + 1, x - 1) + at(y - 1, x - 1)) / 4.0;
            // 0.5·atan2 gives the major-eigenvalue axis; the ridge normal is
            // perpendicular to it
            let theta = 0.5 * (2.0 * hxy).atan2(hxx - hyy) + std::f64::consts::FRAC_PI_2;
            out.push((theta.sin(), theta.cos()));
        }
    }
    out
}

/// Non-maximum suppression along the estimated edge normal. A pixel keeps
/// its value when it is no smaller than both bilinearly sampled neighbours
/// one pixel away along the normal; otherwise it is zeroed. Flat regions
/// (including constant maps) have no preferred direction and are kept.
pub fn nms_thin<T: Scalar>(prob: &EdgeMap<T>) -> EdgeMap<T> {
    let (h, w) = (prob.height(), prob.width());
    let data: Vec<f64> = prob.data().iter().map(|v| v.as_f64()).collect();
    let dirs = normals(&data, h, w);
    let mut out = prob.clone();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let v = data[i];
            if v <= 0.0 {
                continue;
            }
            let (dy, dx) = dirs[i];
            let a = sample(&data, h, w, y as f64 + dy, x as f64 + dx);
            let b = sample(&data, h, w, y as f64 - dy, x as f64 - dx);
            if v < a || v < b {
                out.data_mut()[i] = T::zero();
            }
        }
    }
    out
}
