//! Forward and backward passes of the network operators.
//!
//! Convolutions are 3×3, stride 1, zero padding 1. Each of the nine kernel
//! taps becomes one GEMM over a zero-padded copy of the input plane in which
//! the row pitch is `W + 2`; the two extra columns per row hold junk outputs
//! that are dropped when copying back. Accumulation order is fixed, so results
//! are deterministic.

use alloc::vec;
use alloc::vec::Vec;

use super::{Scalar, Tensor};
use crate::error::shape_err;
use crate::Result;

/// Negative-side slope of the Leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.1;

const TAPS: usize = 9;

/// Geometry of the padded, pitch-extended planes used by the GEMM convolution.
struct PaddedGeometry {
    h: usize,
    w: usize,
    pitch: usize,
    /// Length of one padded plane (one spare row so every tap view stays in bounds).
    plane: usize,
    /// Number of extended output positions `h·pitch`.
    span: usize,
}

impl PaddedGeometry {
    fn new(h: usize, w: usize) -> Self {
        let pitch = w + 2;
        Self {
            h,
            w,
            pitch,
            plane: (h + 3) * pitch,
            span: h * pitch,
        }
    }

    #[inline]
    fn tap_offset(&self, tap: usize) -> usize {
        (tap / 3) * self.pitch + tap % 3
    }

    /// Copies `channels` planes of `src` into the interior of a padded buffer.
    fn pad<T: Scalar>(&self, src: &[T], channels: usize, dst: &mut [T]) {
        dst.fill(T::zero());
        for c in 0..channels {
            for y in 0..self.h {
                let s = &src[(c * self.h + y) * self.w..][..self.w];
                let d = &mut dst[c * self.plane + (y + 1) * self.pitch + 1..][..self.w];
                d.copy_from_slice(s);
            }
        }
    }

    /// Spreads dense planes into the pitch-extended layout (junk columns zero).
    fn extend<T: Scalar>(&self, src: &[T], channels: usize, dst: &mut [T]) {
        dst.fill(T::zero());
        for c in 0..channels {
            for y in 0..self.h {
                let s = &src[(c * self.h + y) * self.w..][..self.w];
                dst[c * self.span + y * self.pitch..][..self.w].copy_from_slice(s);
            }
        }
    }
}

fn check_conv_shapes<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
) -> Result<(usize, usize, usize, usize, usize)> {
    let (b, cin, h, w) = input.dims4()?;
    match weight.shape() {
        &[cout, wcin, 3, 3] if wcin == cin => Ok((b, cin, cout, h, w)),
        &[_, wcin, 3, 3] => Err(shape_err!(
            "conv weight expects {wcin} input channels, input has {cin}"
        )),
        s => Err(shape_err!("conv weight must be [Cout,Cin,3,3], got {s:?}")),
    }
}

/// 3×3 cross-correlation plus bias: `[B,Cin,H,W] → [B,Cout,H,W]`.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (batch, cin, cout, h, w) = check_conv_shapes(input, weight)?;
    if bias.len() != cout {
        return Err(shape_err!("bias has {} entries for {cout} output channels", bias.len()));
    }
    let g = PaddedGeometry::new(h, w);
    let mut padded = vec![T::zero(); cin * g.plane];
    let mut ext = vec![T::zero(); cout * g.span];
    let mut out = Tensor::zeros(&[batch, cout, h, w]);
    let wd = weight.data();
    for b in 0..batch {
        g.pad(&input.data()[b * cin * h * w..][..cin * h * w], cin, &mut padded);
        for tap in 0..TAPS {
            let beta = if tap == 0 { T::zero() } else { T::one() };
            // SAFETY: weight view is cout×cin with strides (9·cin, 9) starting at `tap`;
            // the input view is cin×span inside `padded` (plane has a spare row);
            // `ext` is a separate cout×span buffer.
            unsafe {
                T::gemm(
                    cout,
                    cin,
                    g.span,
                    wd.as_ptr().add(tap),
                    (cin * TAPS) as isize,
                    TAPS as isize,
                    padded.as_ptr().add(g.tap_offset(tap)),
                    g.plane as isize,
                    1,
                    beta,
                    ext.as_mut_ptr(),
                    g.span as isize,
                    1,
                );
            }
        }
        let od = &mut out.data_mut()[b * cout * h * w..][..cout * h * w];
        for co in 0..cout {
            let bv = bias.data()[co];
            for y in 0..h {
                let src = &ext[co * g.span + y * g.pitch..][..w];
                let dst = &mut od[(co * h + y) * w..][..w];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = s + bv;
                }
            }
        }
    }
    out.ensure_finite("conv2d")?;
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to its three arguments.
#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let (batch, cin, cout, h, w) = check_conv_shapes(input, weight)?;
    if grad_out.shape() != [batch, cout, h, w] {
        return Err(shape_err!(
            "conv output gradient {:?} does not match [{batch},{cout},{h},{w}]",
            grad_out.shape()
        ));
    }
    let g = PaddedGeometry::new(h, w);
    let mut padded = vec![T::zero(); cin * g.plane];
    let mut grad_padded = vec![T::zero(); cin * g.plane];
    let mut grad_ext = vec![T::zero(); cout * g.span];
    let mut grad_input = Tensor::zeros(&[batch, cin, h, w]);
    let mut grad_weight = Tensor::<T>::zeros(&[cout, cin, 3, 3]);
    let mut grad_bias = Tensor::zeros(&[cout]);
    let wd = weight.data();
    for b in 0..batch {
        let go = &grad_out.data()[b * cout * h * w..][..cout * h * w];
        g.pad(&input.data()[b * cin * h * w..][..cin * h * w], cin, &mut padded);
        g.extend(go, cout, &mut grad_ext);
        grad_padded.fill(T::zero());
        for tap in 0..TAPS {
            let off = g.tap_offset(tap);
            // SAFETY: strides describe cin×cout (transposed weight tap), cout×span
            // (`grad_ext`) and cin×span inside `grad_padded`; no aliasing.
            unsafe {
                T::gemm(
                    cin,
                    cout,
                    g.span,
                    wd.as_ptr().add(tap),
                    TAPS as isize,
                    (cin * TAPS) as isize,
                    grad_ext.as_ptr(),
                    g.span as isize,
                    1,
                    T::one(),
                    grad_padded.as_mut_ptr().add(off),
                    g.plane as isize,
                    1,
                );
            }
            // SAFETY: cout×span times the transposed cin×span input view, written
            // into the cout×cin tap slice of the weight gradient.
            unsafe {
                T::gemm(
                    cout,
                    g.span,
                    cin,
                    grad_ext.as_ptr(),
                    g.span as isize,
                    1,
                    padded.as_ptr().add(off),
                    1,
                    g.plane as isize,
                    T::one(),
                    grad_weight.data_mut().as_mut_ptr().add(tap),
                    (cin * TAPS) as isize,
                    TAPS as isize,
                );
            }
        }
        let gi = &mut grad_input.data_mut()[b * cin * h * w..][..cin * h * w];
        for ci in 0..cin {
            for y in 0..h {
                let src = &grad_padded[ci * g.plane + (y + 1) * g.pitch + 1..][..w];
                gi[(ci * h + y) * w..][..w].copy_from_slice(src);
            }
        }
        for (co, gb) in grad_bias.data_mut().iter_mut().enumerate() {
            *gb += go[co * h * w..][..h * w].iter().copied().sum::<T>();
        }
    }
    Ok(ConvGrads {
        input: grad_input,
        weight: grad_weight,
        bias: grad_bias,
    })
}

/// `x` for `x > 0`, `0.1·x` otherwise.
pub fn leaky_relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let slope = T::lit(LEAKY_SLOPE);
    let data = x
        .data()
        .iter()
        .map(|&v| if v > T::zero() { v } else { slope * v })
        .collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

/// Gradient through [`leaky_relu`] given its input `x`. The `x ≤ 0` branch
/// owns zero, so the slope there is 0.1.
pub fn leaky_relu_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != grad_out.shape() {
        return Err(shape_err!(
            "leaky relu gradient {:?} vs input {:?}",
            grad_out.shape(),
            x.shape()
        ));
    }
    let slope = T::lit(LEAKY_SLOPE);
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { slope * g })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

/// Output of [`maxpool2`] with the flat input index chosen for every output cell.
#[derive(Debug, Clone)]
pub struct Pooled<T> {
    pub output: Tensor<T>,
    pub argmax: Vec<usize>,
    pub input_shape: [usize; 4],
}

/// 2×2 max pooling with stride 2. Ties go to the first cell in row-major order.
pub fn maxpool2<T: Scalar>(x: &Tensor<T>) -> Result<Pooled<T>> {
    let (b, c, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(shape_err!("max pooling needs even H and W, got {h}x{w}"));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(b * c * oh * ow);
    let mut argmax = Vec::with_capacity(b * c * oh * ow);
    let xd = x.data();
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if xd[i] > xd[best] {
                        best = i;
                    }
                }
                out.push(xd[best]);
                argmax.push(best);
            }
        }
    }
    Ok(Pooled {
        output: Tensor::from_vec(&[b, c, oh, ow], out)?,
        argmax,
        input_shape: [b, c, h, w],
    })
}

pub fn maxpool2_backward<T: Scalar>(pooled: &Pooled<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != pooled.output.shape() {
        return Err(shape_err!(
            "pool gradient {:?} vs output {:?}",
            grad_out.shape(),
            pooled.output.shape()
        ));
    }
    let mut grad = Tensor::zeros(&pooled.input_shape);
    let gd = grad.data_mut();
    for (&i, &g) in pooled.argmax.iter().zip(grad_out.data()) {
        gd[i] += g;
    }
    Ok(grad)
}

/// Source taps for one output coordinate of the ×2 half-pixel bilinear
/// resampling: output `i` reads input position `(i + 0.5)/2 − 0.5`, clamped.
fn bilinear_taps(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64, f64)> {
    (0..out_len)
        .map(|i| {
            let src = ((i as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (in_len - 1) as f64);
            let i0 = libm::floor(src) as usize;
            let i1 = (i0 + 1).min(in_len - 1);
            let frac = src - i0 as f64;
            (i0, i1, 1.0 - frac, frac)
        })
        .collect()
}

/// Bilinear ×2 upsampling with half-pixel centers and edge clamping.
pub fn upsample_bilinear2<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = x.dims4()?;
    let (oh, ow) = (2 * h, 2 * w);
    let ty = bilinear_taps(oh, h);
    let tx: Vec<_> = bilinear_taps(ow, w)
        .into_iter()
        .map(|(a, b, wa, wb)| (a, b, T::lit(wa), T::lit(wb)))
        .collect();
    let mut out = Tensor::zeros(&[b, c, oh, ow]);
    let xd = x.data();
    let od = out.data_mut();
    // horizontal pass into a scratch row pair, then vertical blend
    let mut row0 = vec![T::zero(); ow];
    let mut row1 = vec![T::zero(); ow];
    for plane in 0..b * c {
        let src = &xd[plane * h * w..][..h * w];
        let dst = &mut od[plane * oh * ow..][..oh * ow];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            let (wy0, wy1) = (T::lit(wy0), T::lit(wy1));
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                row0[ox] = wx0 * src[y0 * w + x0] + wx1 * src[y0 * w + x1];
                row1[ox] = wx0 * src[y1 * w + x0] + wx1 * src[y1 * w + x1];
            }
            for ox in 0..ow {
                dst[oy * ow + ox] = wy0 * row0[ox] + wy1 * row1[ox];
            }
        }
    }
    Ok(out)
}

/// Transpose of [`upsample_bilinear2`]: scatters each output gradient back to
/// its four source pixels with the same weights.
pub fn upsample_bilinear2_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input_shape: [usize; 4],
) -> Result<Tensor<T>> {
    let [b, c, h, w] = input_shape;
    let (oh, ow) = (2 * h, 2 * w);
    if grad_out.shape() != [b, c, oh, ow] {
        return Err(shape_err!(
            "upsample gradient {:?} does not match [{b},{c},{oh},{ow}]",
            grad_out.shape()
        ));
    }
    let ty = bilinear_taps(oh, h);
    let tx = bilinear_taps(ow, w);
    let mut grad = Tensor::zeros(&input_shape);
    let gd = grad.data_mut();
    let go = grad_out.data();
    for plane in 0..b * c {
        let src = &go[plane * oh * ow..][..oh * ow];
        let dst = &mut gd[plane * h * w..][..h * w];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let g = src[oy * ow + ox];
                dst[y0 * w + x0] += T::lit(wy0 * wx0) * g;
                dst[y0 * w + x1] += T::lit(wy0 * wx1) * g;
                dst[y1 * w + x0] += T::lit(wy1 * wx0) * g;
                dst[y1 * w + x1] += T::lit(wy1 * wx1) * g;
            }
        }
    }
    Ok(grad)
}

/// Stacks `a` then `b` along the channel axis.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (ba, ca, ha, wa) = a.dims4()?;
    let (bb, cb, hb, wb) = b.dims4()?;
    if (ba, ha, wa) != (bb, hb, wb) {
        return Err(shape_err!(
            "cannot concatenate {:?} with {:?}",
            a.shape(),
            b.shape()
        ));
    }
    let plane = ha * wa;
    let mut data = Vec::with_capacity(a.len() + b.len());
    for n in 0..ba {
        data.extend_from_slice(&a.data()[n * ca * plane..][..ca * plane]);
        data.extend_from_slice(&b.data()[n * cb * plane..][..cb * plane]);
    }
    Tensor::from_vec(&[ba, ca + cb, ha, wa], data)
}

/// Inverse of [`concat_channels`]: the first `ca` channels and the rest.
pub fn split_channels<T: Scalar>(x: &Tensor<T>, ca: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let (bn, c, h, w) = x.dims4()?;
    if ca == 0 || ca >= c {
        return Err(shape_err!("cannot split {c} channels at {ca}"));
    }
    let cb = c - ca;
    let plane = h * w;
    let mut a = Vec::with_capacity(bn * ca * plane);
    let mut b = Vec::with_capacity(bn * cb * plane);
    for n in 0..bn {
        let item = &x.data()[n * c * plane..][..c * plane];
        a.extend_from_slice(&item[..ca * plane]);
        b.extend_from_slice(&item[ca * plane..]);
    }
    Ok((
        Tensor::from_vec(&[bn, ca, h, w], a)?,
        Tensor::from_vec(&[bn, cb, h, w], b)?,
    ))
}

/// Mean absolute error and its gradient `sign(pred − target)/count`, with
/// `sign(0) = 0`. The loss is accumulated in `f64`.
pub fn l1_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(shape_err!(
            "l1 loss shapes differ: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        ));
    }
    let count = pred.len() as f64;
    let inv = T::lit(1.0 / count);
    let mut total = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            total += d.as_f64().abs();
            if d > T::zero() {
                inv
            } else if d < T::zero() {
                -inv
            } else {
                T::zero()
            }
        })
        .collect();
    let loss = total / count;
    if !loss.is_finite() {
        return Err(crate::Error::NonFinite("l1_loss".into()));
    }
    Ok((loss, Tensor::from_vec(pred.shape(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn identity_kernel_is_identity() {
        let x = t(&[1, 2, 3, 4], &(0..24).map(|v| v as f64 * 0.5 - 3.0).collect::<Vec<_>>());
        let mut w = Tensor::<f64>::zeros(&[2, 2, 3, 3]);
        for c in 0..2 {
            w.data_mut()[(c * 2 + c) * 9 + 4] = 1.0;
        }
        let y = conv2d(&x, &w, &Tensor::zeros(&[2])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn all_ones_kernel_counts_neighbours() {
        let x = Tensor::<f64>::full(&[1, 1, 4, 4], 1.0);
        let w = Tensor::<f64>::full(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &w, &Tensor::zeros(&[1])).unwrap();
        let expected = [4., 6., 6., 4., 6., 9., 9., 6., 6., 9., 9., 6., 4., 6., 6., 4.];
        assert_eq!(y.data(), &expected);
    }

    #[test]
    fn conv_channel_mismatch() {
        let x = Tensor::<f32>::zeros(&[1, 2, 4, 4]);
        let w = Tensor::<f32>::zeros(&[1, 3, 3, 3]);
        assert!(matches!(
            conv2d(&x, &w, &Tensor::zeros(&[1])),
            Err(crate::Error::Shape(_))
        ));
    }

    #[test]
    fn leaky_relu_values() {
        let y = leaky_relu(&t(&[3], &[2.0, -1.0, 0.0]));
        assert_eq!(y.data(), &[2.0, -0.1, 0.0]);
        let g = leaky_relu_backward(&t(&[3], &[2.0, -1.0, 0.0]), &t(&[3], &[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(g.data(), &[1.0, 0.1, 0.1]);
    }

    #[test]
    fn maxpool_routes_gradient_to_max() {
        let p = maxpool2(&t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(p.output.data(), &[4.0]);
        let g = maxpool2_backward(&p, &t(&[1, 1, 1, 1], &[1.0])).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn maxpool_ties_go_top_left() {
        let p = maxpool2(&Tensor::<f64>::full(&[1, 1, 4, 4], 3.0)).unwrap();
        assert!(p.output.data().iter().all(|&v| v == 3.0));
        let g = maxpool2_backward(&p, &Tensor::full(&[1, 1, 2, 2], 1.0)).unwrap();
        let expected = [1., 0., 1., 0., 0., 0., 0., 0., 1., 0., 1., 0., 0., 0., 0., 0.];
        assert_eq!(g.data(), &expected);
        assert!(maxpool2(&Tensor::<f64>::zeros(&[1, 1, 3, 4])).is_err());
    }

    #[test]
    fn upsample_examples() {
        let y = upsample_bilinear2(&t(&[1, 1, 1, 2], &[0.0, 1.0])).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 4]);
        assert_eq!(&y.data()[..4], &[0.0, 0.25, 0.75, 1.0]);
        let one = upsample_bilinear2(&t(&[1, 1, 1, 1], &[2.5])).unwrap();
        assert_eq!(one.data(), &[2.5; 4]);
        let c = upsample_bilinear2(&Tensor::<f64>::full(&[2, 3, 3, 5], -1.25)).unwrap();
        assert!(c.data().iter().all(|&v| v == -1.25));
    }

    #[test]
    fn concat_and_split() {
        let a = t(&[1, 1, 1, 2], &[1.0, 2.0]);
        let b = t(&[1, 2, 1, 2], &[3.0, 4.0, 5.0, 6.0]);
        let c = concat_channels(&a, &b).unwrap();
        assert_eq!(c.shape(), &[1, 3, 1, 2]);
        assert_eq!(c.data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let (a2, b2) = split_channels(&c, 1).unwrap();
        assert_eq!((a2, b2), (a, b));
        assert!(concat_channels(&t(&[1, 1, 1, 2], &[0.0; 2]), &t(&[1, 1, 2, 1], &[0.0; 2])).is_err());
    }

    #[test]
    fn l1_examples() {
        let (loss, grad) = l1_loss(&t(&[2], &[1.0, 3.0]), &t(&[2], &[0.0, 1.0])).unwrap();
        assert_eq!(loss, 1.5);
        assert_eq!(grad.data(), &[0.5, 0.5]);
        let (zero, g0) = l1_loss(&t(&[2], &[1.0, 3.0]), &t(&[2], &[1.0, 3.0])).unwrap();
        assert_eq!(zero, 0.0);
        assert_eq!(g0.data(), &[0.0, 0.0]);
        assert!(l1_loss(&t(&[2], &[0.0; 2]), &t(&[1, 2], &[0.0; 2])).is_err());
    }
}
