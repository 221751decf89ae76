use super::tape::Op;
use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const GROUP_NORM_EPS: f64 = 1e-5;

struct Forward<T> {
    out: Vec<T>,
    xhat: Vec<T>,
    rstd: Vec<T>,
}

fn forward<T: Scalar>(x: &Tensor<T>, groups: usize, gamma: &[T], beta: &[T], eps: T) -> Result<Forward<T>> {
    let (n, c, h, w) = x.dims4("group_norm")?;
    if groups == 0 || c % groups != 0 {
        return Err(Error::Config(format!(
            "group_norm: {c} channels not divisible into {groups} groups"
        )));
    }
    if gamma.len() != c || beta.len() != c {
        return Err(Error::ShapeMismatch {
            op: "group_norm affine",
            lhs: vec![c],
            rhs: vec![gamma.len(), beta.len()],
        });
    }
    let plane = h * w;
    let per_group = c / groups;
    let m = per_group * plane;
    let mf = T::from_usize(m).unwrap();
    let data = x.data();
    let mut xhat = vec![T::zero(); data.len()];
    let mut out = vec![T::zero(); data.len()];
    let mut rstd = Vec::with_capacity(n * groups);
    for ni in 0..n {
        for g in 0..groups {
            let start = (ni * c + g * per_group) * plane;
            let block = &data[start..start + m];
            let mean = block.iter().copied().sum::<T>() / mf;
            let var = block.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / mf;
            let r = T::one() / (var + eps).sqrt();
            rstd.push(r);
            for (k, v) in block.iter().enumerate() {
                let ch = g * per_group + k / plane;
                let xh = (*v - mean) * r;
                xhat[start + k] = xh;
                out[start + k] = xh * gamma[ch] + beta[ch];
            }
        }
    }
    Ok(Forward { out, xhat, rstd })
}

/// Returns `(d input, d gamma, d beta)`.
pub(crate) fn backward<T: Scalar>(
    shape: &[usize],
    groups: usize,
    gamma: &[T],
    xhat: &[T],
    rstd: &[T],
    g: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (n, c) = (shape[0], shape[1]);
    let plane = shape[2] * shape[3];
    let per_group = c / groups;
    let m = per_group * plane;
    let mf = T::from_usize(m).unwrap();
    let mut dx = vec![T::zero(); g.len()];
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for ni in 0..n {
        for gi in 0..groups {
            let start = (ni * c + gi * per_group) * plane;
            let mut sum_d = T::zero();
            let mut sum_dx = T::zero();
            for k in 0..m {
                let ch = gi * per_group + k / plane;
                let dy = g[start + k];
                let xh = xhat[start + k];
                dgamma[ch] += dy * xh;
                dbeta[ch] += dy;
                let dxh = dy * gamma[ch];
                sum_d += dxh;
                sum_dx += dxh * xh;
            }
            let r = rstd[ni * groups + gi];
            for k in 0..m {
                let ch = gi * per_group + k / plane;
                let dxh = g[start + k] * gamma[ch];
                dx[start + k] = r * (dxh - (sum_d + xhat[start + k] * sum_dx) / mf);
            }
        }
    }
    (dx, dgamma, dbeta)
}

impl<T: Scalar> Tape<T> {
    /// Group normalization over `(sample, group)` blocks followed by a
    /// per-channel affine map, with eps = 1e-5.
    pub fn group_norm(&mut self, input: Var, groups: usize, gamma: Var, beta: Var) -> Result<Var> {
        let fwd = forward(
            self.value(input),
            groups,
            self.value(gamma).data(),
            self.value(beta).data(),
            T::lit(GROUP_NORM_EPS),
        )?;
        let out = Tensor::new(self.shape(input), fwd.out)?;
        let op = Op::GroupNorm {
            input,
            gamma,
            beta,
            groups,
            xhat: fwd.xhat,
            rstd: fwd.rstd,
        };
        self.push("group_norm", out, op, &[input, gamma, beta])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn run(x: Tensor<f64>, groups: usize, gamma: Vec<f64>, beta: Vec<f64>) -> Result<Tensor<f64>> {
        let c = gamma.len();
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let g = tape.constant(Tensor::new(&[c], gamma)?);
        let b = tape.constant(Tensor::new(&[c], beta)?);
        let y = tape.group_norm(xv, groups, g, b)?;
        Ok(tape.value(y).clone())
    }

    /// Separate two-pass reference: mean first, then variance, per block.
    fn oracle(x: &Tensor<f64>, groups: usize, gamma: &[f64], beta: &[f64]) -> Tensor<f64> {
        let [n, c, h, w] = x.shape().try_into().unwrap();
        let cg = c / groups;
        let mut out = x.clone();
        for a in 0..n {
            for g in 0..groups {
                let idx: Vec<usize> = (g * cg..(g + 1) * cg)
                    .flat_map(|ch| (0..h * w).map(move |p| (a * c + ch) * h * w + p))
                    .collect();
                let mean: f64 = idx.iter().map(|&i| x.data()[i]).sum::<f64>() / idx.len() as f64;
                let var: f64 =
                    idx.iter().map(|&i| (x.data()[i] - mean).powi(2)).sum::<f64>() / idx.len() as f64;
                for &i in &idx {
                    let ch = (i / (h * w)) % c;
                    out.data_mut()[i] = (x.data()[i] - mean) / (var + 1e-5).sqrt() * gamma[ch] + beta[ch];
                }
            }
        }
        out
    }

    #[test]
    fn normalizes_each_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::from_fn(&[2, 6, 4, 5], |_| rng.random_range(-3.0..5.0));
        let y = run(x, 3, vec![1.0; 6], vec![0.0; 6]).unwrap();
        for block in y.data().chunks(2 * 20) {
            let mean = block.iter().sum::<f64>() / block.len() as f64;
            let var = block.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / block.len() as f64;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn constant_input_maps_to_zero() {
        let y = run(Tensor::full(&[1, 4, 3, 3], 2.5), 2, vec![1.0; 4], vec![0.0; 4]).unwrap();
        assert!(y.data().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::from_fn(&[2, 4, 3, 3], |_| rng.random_range(-1.0..1.0));
        let gamma: Vec<f64> = (0..4).map(|_| rng.random_range(0.5..1.5)).collect();
        let beta: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
        let y = run(x.clone(), 2, gamma.clone(), beta.clone()).unwrap();
        assert!(y.max_abs_diff(&oracle(&x, 2, &gamma, &beta)) < 1e-6);
    }

    #[test]
    fn indivisible_channels_rejected() {
        let err = run(Tensor::zeros(&[1, 21, 2, 2]), 8, vec![1.0; 21], vec![0.0; 21]);
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
