//! Forward and backward kernels behind the tape operations.
//!
//! Every reduction here runs in a fixed order so results are bitwise
//! reproducible across runs.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Dot product with eight fixed partial sums, combined in a fixed order.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (pa, pb) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += pa[l] * pb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub(crate) fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn sum_slice<T: Real>(a: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[c * 4 + l];
        }
    }
    let mut tail = T::zero();
    for &v in &a[chunks * 4..] {
        tail += v;
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(x: &[usize], weight: &[usize], bias: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let [n, cin, h, w] = match *x {
            [n, c, h, w] => [n, c, h, w],
            _ => return Err(Error::Contract(format!("conv2d input must be 4-D, got {x:?}"))),
        };
        let [cout, wcin, kh, kw] = match *weight {
            [a, b, c, d] => [a, b, c, d],
            _ => return Err(Error::Contract(format!("conv2d weight must be 4-D, got {weight:?}"))),
        };
        if kh != kw || kh % 2 == 0 {
            return Err(Error::Config(format!("conv2d kernel must be square and odd, got {kh}x{kw}")));
        }
        if wcin != cin {
            return Err(Error::Contract(format!(
                "conv2d input has {cin} channels but weight expects {wcin}"
            )));
        }
        if bias != [cout] {
            return Err(Error::Contract(format!("conv2d bias shape {bias:?} does not match {cout} outputs")));
        }
        if stride == 0 {
            return Err(Error::Config("conv2d stride must be positive".into()));
        }
        if h + 2 * pad < kh || w + 2 * pad < kh {
            return Err(Error::Contract(format!(
                "conv2d input {h}x{w} with padding {pad} is smaller than kernel {kh}"
            )));
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kh) / stride + 1;
        Ok(ConvGeom { n, cin, h, w, cout, k: kh, stride, pad, ho, wo })
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn pixels(&self) -> usize {
        self.ho * self.wo
    }
}

fn im2col<T: Real>(g: &ConvGeom, x: &[T], cols: &mut [T]) {
    let p = g.pixels();
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = &mut cols[((c * g.k + ky) * g.k + kx) * p..][..p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let out = &mut row[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, o) in out.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *o = if ix < 0 || ix >= g.w as isize { T::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(g: &ConvGeom, cols: &[T], dx: &mut [T]) {
    let p = g.pixels();
    for c in 0..g.cin {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = &cols[((c * g.k + ky) * g.k + kx) * p..][..p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            dst[ix as usize] += row[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeom::new(x.shape(), weight.shape(), bias.shape(), stride, pad)?;
    let (r, p) = (g.rows(), g.pixels());
    let mut out = vec![T::zero(); g.n * g.cout * p];
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); r * p] };
    let wd = weight.data();
    for n in 0..g.n {
        let xs = &x.data()[n * g.cin * g.h * g.w..(n + 1) * g.cin * g.h * g.w];
        let cols: &[T] = if g.is_pointwise() {
            xs
        } else {
            im2col(&g, xs, &mut cols);
            &cols
        };
        let os = &mut out[n * g.cout * p..(n + 1) * g.cout * p];
        for co in 0..g.cout {
            let row = &mut os[co * p..(co + 1) * p];
            row.fill(bias.data()[co]);
            for ri in 0..r {
                axpy(wd[co * r + ri], &cols[ri * p..(ri + 1) * p], row);
            }
        }
    }
    Tensor::new(&[g.n, g.cout, g.ho, g.wo], out)
}

pub struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dweight: Tensor<T>,
    pub dbias: Tensor<T>,
}

pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
    dout: &Tensor<T>,
    want_dx: bool,
) -> Result<ConvGrads<T>> {
    let g = ConvGeom::new(x.shape(), weight.shape(), bias.shape(), stride, pad)?;
    let (r, p) = (g.rows(), g.pixels());
    let wd = weight.data();
    let mut dw = vec![T::zero(); g.cout * r];
    let mut db = vec![T::zero(); g.cout];
    let mut dx = if want_dx { vec![T::zero(); x.numel()] } else { Vec::new() };
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); r * p] };
    let mut dcols = vec![T::zero(); r * p];
    for n in 0..g.n {
        let xs = &x.data()[n * g.cin * g.h * g.w..(n + 1) * g.cin * g.h * g.w];
        let ds = &dout.data()[n * g.cout * p..(n + 1) * g.cout * p];
        let cols: &[T] = if g.is_pointwise() {
            xs
        } else {
            im2col(&g, xs, &mut cols);
            &cols
        };
        for co in 0..g.cout {
            let drow = &ds[co * p..(co + 1) * p];
            db[co] += sum_slice(drow);
            for ri in 0..r {
                dw[co * r + ri] += dot(drow, &cols[ri * p..(ri + 1) * p]);
            }
        }
        if want_dx {
            dcols.fill(T::zero());
            for co in 0..g.cout {
                let drow = &ds[co * p..(co + 1) * p];
                for ri in 0..r {
                    axpy(wd[co * r + ri], drow, &mut dcols[ri * p..(ri + 1) * p]);
                }
            }
            let dxs = &mut dx[n * g.cin * g.h * g.w..(n + 1) * g.cin * g.h * g.w];
            if g.is_pointwise() {
                for (d, &c) in dxs.iter_mut().zip(&dcols) {
                    *d += c;
                }
            } else {
                col2im(&g, &dcols, dxs);
            }
        }
    }
    Ok(ConvGrads {
        dx: if want_dx { Some(Tensor::new(x.shape(), dx)?) } else { None },
        dweight: Tensor::new(weight.shape(), dw)?,
        dbias: Tensor::new(bias.shape(), db)?,
    })
}

// ---------------------------------------------------------------------------
// channel normalization
// ---------------------------------------------------------------------------

/// Saved state of a batch-statistics normalization.
#[derive(Debug, Clone)]
pub struct NormSaved<T> {
    /// Normalized input before the affine transform.
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    /// Biased batch variance.
    pub var: Vec<T>,
}

pub(crate) fn check_norm_shapes<T: Real>(x: &Tensor<T>, gain: &Tensor<T>, shift: &Tensor<T>) -> Result<[usize; 4]> {
    let dims = x.dims4()?;
    let c = dims[1];
    if gain.shape() != [c] || shift.shape() != [c] {
        return Err(Error::Contract(format!(
            "channel_norm over {c} channels got gain {:?} and shift {:?}",
            gain.shape(),
            shift.shape()
        )));
    }
    Ok(dims)
}

pub fn channel_norm_train<T: Real>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    shift: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, NormSaved<T>)> {
    let [n, c, h, w] = check_norm_shapes(x, gain, shift)?;
    let hw = h * w;
    let m = T::of((n * hw) as f64);
    let xd = x.data();
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    let mut inv_std = vec![T::zero(); c];
    for ch in 0..c {
        let mut s = T::zero();
        for b in 0..n {
            s += sum_slice(&xd[(b * c + ch) * hw..][..hw]);
        }
        let mu = s / m;
        let mut v = T::zero();
        for b in 0..n {
            for &xi in &xd[(b * c + ch) * hw..][..hw] {
                let d = xi - mu;
                v += d * d;
            }
        }
        mean[ch] = mu;
        var[ch] = v / m;
        inv_std[ch] = T::one() / (var[ch] + eps).sqrt();
    }
    let mut xhat = vec![T::zero(); xd.len()];
    let mut y = vec![T::zero(); xd.len()];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * hw;
            let (mu, is, g, s) = (mean[ch], inv_std[ch], gain.data()[ch], shift.data()[ch]);
            for i in off..off + hw {
                let xh = (xd[i] - mu) * is;
                xhat[i] = xh;
                y[i] = g * xh + s;
            }
        }
    }
    Ok((Tensor::new(x.shape(), y)?, NormSaved { xhat, inv_std, mean, var }))
}

pub struct NormGrads<T> {
    pub dx: Tensor<T>,
    pub dgain: Tensor<T>,
    pub dshift: Tensor<T>,
}

pub fn channel_norm_train_backward<T: Real>(
    dims: [usize; 4],
    gain: &Tensor<T>,
    saved: &NormSaved<T>,
    dout: &Tensor<T>,
) -> Result<NormGrads<T>> {
    let [n, c, h, w] = dims;
    let hw = h * w;
    let m = T::of((n * hw) as f64);
    let dy = dout.data();
    let mut dx = vec![T::zero(); dy.len()];
    let mut dgain = vec![T::zero(); c];
    let mut dshift = vec![T::zero(); c];
    for ch in 0..c {
        let mut sum_dy = T::zero();
        let mut sum_dy_xhat = T::zero();
        for b in 0..n {
            let off = (b * c + ch) * hw;
            sum_dy += sum_slice(&dy[off..off + hw]);
            sum_dy_xhat += dot(&dy[off..off + hw], &saved.xhat[off..off + hw]);
        }
        dgain[ch] = sum_dy_xhat;
        dshift[ch] = sum_dy;
        let g = gain.data()[ch];
        let scale = g * saved.inv_std[ch] / m;
        for b in 0..n {
            let off = (b * c + ch) * hw;
            for i in off..off + hw {
                dx[i] = scale * (m * dy[i] - sum_dy - saved.xhat[i] * sum_dy_xhat);
            }
        }
    }
    Ok(NormGrads {
        dx: Tensor::new(&[n, c, h, w], dx)?,
        dgain: Tensor::new(&[c], dgain)?,
        dshift: Tensor::new(&[c], dshift)?,
    })
}

/// Inference-mode normalization with fixed statistics. Returns the output and
/// the per-channel inverse standard deviations.
pub fn channel_norm_fixed<T: Real>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    shift: &Tensor<T>,
    mean: &[T],
    var: &[T],
    eps: T,
) -> Result<(Tensor<T>, Vec<T>)> {
    let [n, c, h, w] = check_norm_shapes(x, gain, shift)?;
    if mean.len() != c || var.len() != c {
        return Err(Error::Contract(format!("running statistics sized for {} channels, input has {c}", mean.len())));
    }
    let hw = h * w;
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut y = x.data().to_vec();
    for b in 0..n {
        for ch in 0..c {
            let (mu, is, g, s) = (mean[ch], inv_std[ch], gain.data()[ch], shift.data()[ch]);
            for v in &mut y[(b * c + ch) * hw..][..hw] {
                *v = g * ((*v - mu) * is) + s;
            }
        }
    }
    Ok((Tensor::new(x.shape(), y)?, inv_std))
}

// ---------------------------------------------------------------------------
// bilinear resize (half-pixel centers, align_corners = false)
// ---------------------------------------------------------------------------

/// Source taps for one output coordinate: two indices and their weights.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Tap<T> {
    pub i0: usize,
    pub i1: usize,
    pub w0: T,
    pub w1: T,
}

/// Output coordinate `o` samples source position `(o + 0.5) * in/out - 0.5`,
/// clamped at zero on the low side and to the last sample on the high side.
pub(crate) fn resize_taps<T: Real>(input: usize, output: usize) -> Vec<Tap<T>> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            let frac = if i0 == input - 1 { 0.0 } else { src - i0 as f64 };
            Tap { i0, i1, w0: T::of(1.0 - frac), w1: T::of(frac) }
        })
        .collect()
}

pub fn bilinear_resize<T: Real>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims4()?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::Contract(format!("resize target {out_h}x{out_w} must be positive")));
    }
    if out_h == h && out_w == w {
        return Ok(x.clone());
    }
    let ty = resize_taps::<T>(h, out_h);
    let tx = resize_taps::<T>(w, out_w);
    let xd = x.data();
    let mut out = vec![T::zero(); n * c * out_h * out_w];
    for plane in 0..n * c {
        let src = &xd[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out[plane * out_h * out_w..(plane + 1) * out_h * out_w];
        for (oy, ry) in ty.iter().enumerate() {
            let r0 = &src[ry.i0 * w..(ry.i0 + 1) * w];
            let r1 = &src[ry.i1 * w..(ry.i1 + 1) * w];
            for (ox, rx) in tx.iter().enumerate() {
                let top = r0[rx.i0] * rx.w0 + r0[rx.i1] * rx.w1;
                let bot = r1[rx.i0] * rx.w0 + r1[rx.i1] * rx.w1;
                dst[oy * out_w + ox] = top * ry.w0 + bot * ry.w1;
            }
        }
    }
    Tensor::new(&[n, c, out_h, out_w], out)
}

pub fn bilinear_resize_backward<T: Real>(in_shape: [usize; 4], dout: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = in_shape;
    let [_, _, out_h, out_w] = dout.dims4()?;
    if out_h == h && out_w == w {
        return Ok(dout.clone());
    }
    let ty = resize_taps::<T>(h, out_h);
    let tx = resize_taps::<T>(w, out_w);
    let dd = dout.data();
    let mut dx = vec![T::zero(); n * c * h * w];
    for plane in 0..n * c {
        let src = &dd[plane * out_h * out_w..(plane + 1) * out_h * out_w];
        let dst = &mut dx[plane * h * w..(plane + 1) * h * w];
        for (oy, ry) in ty.iter().enumerate() {
            for (ox, rx) in tx.iter().enumerate() {
                let g = src[oy * out_w + ox];
                let (gt, gb) = (g * ry.w0, g * ry.w1);
                dst[ry.i0 * w + rx.i0] += gt * rx.w0;
                dst[ry.i0 * w + rx.i1] += gt * rx.w1;
                dst[ry.i1 * w + rx.i0] += gb * rx.w0;
                dst[ry.i1 * w + rx.i1] += gb * rx.w1;
            }
        }
    }
    Tensor::new(&in_shape, dx)
}

// ---------------------------------------------------------------------------
// broadcasting
// ---------------------------------------------------------------------------

/// Common 4-D shape of several operands; each axis must equal the target or be 1.
pub fn broadcast_shape(shapes: &[&[usize]]) -> Result<[usize; 4]> {
    let mut out = [1usize; 4];
    for s in shapes {
        if s.len() != 4 {
            return Err(Error::Contract(format!("broadcast operands must be 4-D, got {s:?}")));
        }
        for ax in 0..4 {
            match (out[ax], s[ax]) {
                (a, b) if a == b => {}
                (1, b) => out[ax] = b,
                (_, 1) => {}
                _ => {
                    return Err(Error::Contract(format!(
                        "shapes {:?} are not broadcastable on axis {ax}",
                        shapes
                    )))
                }
            }
        }
    }
    Ok(out)
}

/// Element strides of `shape` viewed as `target`, zero on broadcast axes.
pub(crate) fn broadcast_strides(shape: &[usize], target: [usize; 4]) -> [usize; 4] {
    let mut st = [0usize; 4];
    let mut acc = 1;
    for ax in (0..4).rev() {
        st[ax] = if shape[ax] == 1 && target[ax] != 1 { 0 } else { acc };
        acc *= shape[ax];
    }
    st
}

/// Visits every element of `target` in row-major order with the flat offsets of
/// each operand.
pub(crate) fn for_each_broadcast<const K: usize>(
    target: [usize; 4],
    strides: [[usize; 4]; K],
    mut f: impl FnMut(usize, [usize; K]),
) {
    let mut flat = 0;
    for i0 in 0..target[0] {
        for i1 in 0..target[1] {
            for i2 in 0..target[2] {
                let mut base = [0usize; K];
                for (k, st) in strides.iter().enumerate() {
                    base[k] = i0 * st[0] + i1 * st[1] + i2 * st[2];
                }
                for i3 in 0..target[3] {
                    let mut off = base;
                    for (k, st) in strides.iter().enumerate() {
                        off[k] += i3 * st[3];
                    }
                    f(flat, off);
                    flat += 1;
                }
            }
        }
    }
}

/// `a ⊙ b + c ⊙ d` with size-1 broadcasting.
pub fn broadcast_mul_add<T: Real>(a: &Tensor<T>, b: &Tensor<T>, c: &Tensor<T>, d: &Tensor<T>) -> Result<Tensor<T>> {
    let target = broadcast_shape(&[a.shape(), b.shape(), c.shape(), d.shape()])?;
    let st = [a, b, c, d].map(|t| broadcast_strides(t.shape(), target));
    let mut out = vec![T::zero(); target.iter().product()];
    let (ad, bd, cd, dd) = (a.data(), b.data(), c.data(), d.data());
    for_each_broadcast(target, st, |i, [ia, ib, ic, id]| {
        out[i] = ad[ia] * bd[ib] + cd[ic] * dd[id];
    });
    Tensor::new(&target, out)
}

/// `a ⊙ b` with size-1 broadcasting.
pub fn broadcast_mul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let target = broadcast_shape(&[a.shape(), b.shape()])?;
    let st = [a, b].map(|t| broadcast_strides(t.shape(), target));
    let mut out = vec![T::zero(); target.iter().product()];
    let (ad, bd) = (a.data(), b.data());
    for_each_broadcast(target, st, |i, [ia, ib]| out[i] = ad[ia] * bd[ib]);
    Tensor::new(&target, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_output_size_uses_floor_arithmetic() {
        let g = ConvGeom::new(&[1, 3, 67, 120], &[8, 3, 3, 3], &[8], 2, 1).unwrap();
        assert_eq!((g.ho, g.wo), (34, 60));
        let g = ConvGeom::new(&[1, 1, 5, 5], &[1, 1, 3, 3], &[1], 1, 0).unwrap();
        assert_eq!((g.ho, g.wo), (3, 3));
    }

    #[test]
    fn conv_rejects_even_kernel_and_channel_mismatch() {
        assert!(matches!(
            ConvGeom::new(&[1, 3, 8, 8], &[4, 3, 2, 2], &[4], 1, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ConvGeom::new(&[1, 3, 8, 8], &[4, 2, 3, 3], &[4], 1, 1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn resize_taps_identity_when_sizes_match() {
        for t in resize_taps::<f64>(7, 7).iter().enumerate() {
            assert_eq!((t.1.i0, t.1.w0, t.1.w1), (t.0, 1.0, 0.0));
        }
    }

    #[test]
    fn broadcast_shape_rules() {
        assert_eq!(broadcast_shape(&[&[2, 1, 4, 5], &[1, 3, 4, 1]]).unwrap(), [2, 3, 4, 5]);
        assert!(broadcast_shape(&[&[2, 3, 4, 5], &[2, 2, 4, 5]]).is_err());
    }

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..37).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..37).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-9);
    }
}
