//! Raw kernels over flat slices. Shapes are validated by the graph layer.

use crate::element::Element;

/// Row-major `c = a · b + beta · c` where `a` is logically `m×k` and `b` is
/// logically `k×n`. A transposed operand is stored in its transposed layout.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Element>(
    m: usize,
    n: usize,
    k: usize,
    a: &[T],
    trans_a: bool,
    b: &[T],
    trans_b: bool,
    beta: T,
    c: &mut [T],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: lengths asserted above; `c` is an exclusive borrow.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(c: usize, h: usize, w: usize, kh: usize, kw: usize, stride: usize, pad: usize) -> Option<Self> {
        if stride == 0 || h + 2 * pad < kh || w + 2 * pad < kw {
            return None;
        }
        Some(Self {
            c,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (w + 2 * pad - kw) / stride + 1,
        })
    }

    pub fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    pub fn out_plane(&self) -> usize {
        self.ho * self.wo
    }
}

/// Output positions `lo..hi` along one axis whose input index for kernel tap
/// `j` lies inside `0..len`.
fn valid_range(out_len: usize, len: usize, j: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(j).div_ceil(stride);
    if len + pad <= j {
        return (0, 0);
    }
    let hi = ((len - 1 + pad - j) / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

pub(crate) fn im2col<T: Element>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let plane = g.out_plane();
    for c in 0..g.c {
        let xc = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            let (ylo, yhi) = valid_range(g.ho, g.h, i, g.stride, g.pad);
            for j in 0..g.kw {
                let (xlo, xhi) = valid_range(g.wo, g.w, j, g.stride, g.pad);
                let row = (c * g.kh + i) * g.kw + j;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                dst[..ylo * g.wo].fill(T::zero());
                dst[yhi * g.wo..].fill(T::zero());
                for oy in ylo..yhi {
                    let iy = oy * g.stride + i - g.pad;
                    let src = &xc[iy * g.w..(iy + 1) * g.w];
                    let drow = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    drow[..xlo].fill(T::zero());
                    drow[xhi..].fill(T::zero());
                    if xhi > xlo {
                        let ix0 = xlo * g.stride + j - g.pad;
                        if g.stride == 1 {
                            drow[xlo..xhi].copy_from_slice(&src[ix0..ix0 + xhi - xlo]);
                        } else {
                            for (d, s) in drow[xlo..xhi].iter_mut().zip(src[ix0..].iter().step_by(g.stride)) {
                                *d = *s;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn col2im_add<T: Element>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let plane = g.out_plane();
    for c in 0..g.c {
        let dxc = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            let (ylo, yhi) = valid_range(g.ho, g.h, i, g.stride, g.pad);
            for j in 0..g.kw {
                let (xlo, xhi) = valid_range(g.wo, g.w, j, g.stride, g.pad);
                if xhi == xlo {
                    continue;
                }
                let row = (c * g.kh + i) * g.kw + j;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in ylo..yhi {
                    let iy = oy * g.stride + i - g.pad;
                    let ix0 = xlo * g.stride + j - g.pad;
                    let drow = &mut dxc[iy * g.w + ix0..(iy + 1) * g.w];
                    let srow = &src[oy * g.wo + xlo..oy * g.wo + xhi];
                    for (d, s) in drow.iter_mut().step_by(g.stride).zip(srow) {
                        *d = *d + *s;
                    }
                }
            }
        }
    }
}

/// Forward convolution of a batch: `out[n] = W · im2col(x[n]) + b`.
pub(crate) fn conv2d_forward<T: Element>(
    x: &[T],
    n: usize,
    weight: &[T],
    bias: Option<&[T]>,
    out_ch: usize,
    g: &ConvGeom,
) -> Vec<T> {
    let plane = g.out_plane();
    let patch = g.patch();
    let in_item = g.c * g.h * g.w;
    let mut out = vec![T::zero(); n * out_ch * plane];
    let mut cols = vec![T::zero(); patch * plane];
    for b in 0..n {
        im2col(&x[b * in_item..(b + 1) * in_item], g, &mut cols);
        let ob = &mut out[b * out_ch * plane..(b + 1) * out_ch * plane];
        if let Some(bias) = bias {
            for (o, chunk) in ob.chunks_mut(plane).enumerate() {
                chunk.fill(bias[o]);
            }
            gemm(out_ch, plane, patch, weight, false, &cols, false, T::one(), ob);
        } else {
            gemm(out_ch, plane, patch, weight, false, &cols, false, T::zero(), ob);
        }
    }
    out
}

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dw: Option<Vec<T>>,
    pub db: Option<Vec<T>>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<T: Element>(
    x: &[T],
    n: usize,
    weight: &[T],
    out_ch: usize,
    g: &ConvGeom,
    dout: &[T],
    need_dx: bool,
    need_dw: bool,
    need_db: bool,
) -> ConvGrads<T> {
    let plane = g.out_plane();
    let patch = g.patch();
    let in_item = g.c * g.h * g.w;
    let mut dx = need_dx.then(|| vec![T::zero(); n * in_item]);
    let mut dw = need_dw.then(|| vec![T::zero(); out_ch * patch]);
    let db = need_db.then(|| {
        let mut db = vec![T::zero(); out_ch];
        for b in 0..n {
            for (o, d) in db.iter_mut().enumerate() {
                let start = (b * out_ch + o) * plane;
                *d = *d + dout[start..start + plane].iter().copied().sum::<T>();
            }
        }
        db
    });
    let mut cols = vec![T::zero(); patch * plane];
    for b in 0..n {
        let dob = &dout[b * out_ch * plane..(b + 1) * out_ch * plane];
        if let Some(dw) = dw.as_mut() {
            im2col(&x[b * in_item..(b + 1) * in_item], g, &mut cols);
            gemm(out_ch, patch, plane, dob, false, &cols, true, T::one(), dw);
        }
        if let Some(dx) = dx.as_mut() {
            gemm(patch, plane, out_ch, weight, true, dob, false, T::zero(), &mut cols);
            col2im_add(&cols, g, &mut dx[b * in_item..(b + 1) * in_item]);
        }
    }
    ConvGrads { dx, dw, db }
}
