use super::tape::Op;
use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Source taps `(lo, hi, frac)` for each output position along one axis,
/// using half-pixel centers (align-corners off), clamped at the borders.
fn taps<T: Scalar>(input: usize, output: usize) -> Vec<(usize, usize, T)> {
    let scale = T::from_usize(input).unwrap() / T::from_usize(output).unwrap();
    let half = T::lit(0.5);
    (0..output)
        .map(|o| {
            let src = ((T::from_usize(o).unwrap() + half) * scale - half).max(T::zero());
            let lo = src.floor().to_usize().unwrap().min(input - 1);
            let hi = (lo + 1).min(input - 1);
            (lo, hi, src - T::from_usize(lo).unwrap())
        })
        .collect()
}

fn forward<T: Scalar>(x: &Tensor<T>, oh: usize, ow: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4("bilinear_resize")?;
    if oh == 0 || ow == 0 || h == 0 || w == 0 {
        return Err(Error::InvalidShape {
            op: "bilinear_resize",
            detail: format!("{:?} -> {oh}x{ow}", x.shape()),
        });
    }
    let ty = taps::<T>(h, oh);
    let tx = taps::<T>(w, ow);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for plane in x.data().chunks(h * w) {
        for &(y0, y1, ly) in &ty {
            let (r0, r1) = (&plane[y0 * w..][..w], &plane[y1 * w..][..w]);
            for &(x0, x1, lx) in &tx {
                let top = r0[x0] * (T::one() - lx) + r0[x1] * lx;
                let bot = r1[x0] * (T::one() - lx) + r1[x1] * lx;
                out.push(top * (T::one() - ly) + bot * ly);
            }
        }
    }
    Tensor::new(&[n, c, oh, ow], out)
}

pub(crate) fn backward<T: Scalar>(in_shape: &[usize], out_shape: &[usize], g: &[T]) -> Vec<T> {
    let (h, w) = (in_shape[2], in_shape[3]);
    let (oh, ow) = (out_shape[2], out_shape[3]);
    let ty = taps::<T>(h, oh);
    let tx = taps::<T>(w, ow);
    let planes = in_shape[0] * in_shape[1];
    let mut dx = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        let gp = &g[p * oh * ow..][..oh * ow];
        let dp = &mut dx[p * h * w..][..h * w];
        for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                let v = gp[oy * ow + ox];
                let (top, bot) = (v * (T::one() - ly), v * ly);
                dp[y0 * w + x0] += top * (T::one() - lx);
                dp[y0 * w + x1] += top * lx;
                dp[y1 * w + x0] += bot * (T::one() - lx);
                dp[y1 * w + x1] += bot * lx;
            }
        }
    }
    dx
}

impl<T: Scalar> Tape<T> {
    pub fn bilinear_resize(&mut self, input: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let out = forward(self.value(input), out_h, out_w)?;
        self.push("bilinear_resize", out, Op::Resize(input), &[input])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_is_bitwise_identity() {
        let x = Tensor::from_fn(&[1, 2, 5, 3], |i| (i as f32).sin());
        assert_eq!(forward(&x, 5, 3).unwrap(), x);
    }

    #[test]
    fn constant_stays_constant() {
        let x = Tensor::full(&[1, 1, 3, 7], 0.3f64);
        for (oh, ow) in [(1, 1), (9, 4), (16, 21), (2, 7)] {
            let y = forward(&x, oh, ow).unwrap();
            assert!(y.data().iter().all(|v| (v - 0.3).abs() < 1e-15));
        }
    }

    #[test]
    fn upsample_two_by_two() {
        // Per-axis sample positions for 2 -> 4 are 0, 0.25, 0.75, 1 (clamped ends);
        // the input is x + 2y, so the output is px + 2py.
        let x = Tensor::new(&[1, 1, 2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let y = forward(&x, 4, 4).unwrap();
        #[rustfmt::skip]
        let expected = [
            0.0, 0.25, 0.75, 1.0,
            0.5, 0.75, 1.25, 1.5,
            1.5, 1.75, 2.25, 2.5,
            2.0, 2.25, 2.75, 3.0,
        ];
        assert_eq!(y.data(), &expected);
    }
}
