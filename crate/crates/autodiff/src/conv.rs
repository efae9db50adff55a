//! im2col / col2im helpers shared by the 1-D and 2-D convolution kernels.

use crate::real::Real;

/// Geometry of one convolution. 1-D convolutions use `h = kh = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn col_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    pub fn out_area(&self) -> usize {
        self.ho * self.wo
    }

    pub fn in_sample(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn out_sample(&self) -> usize {
        self.k * self.ho * self.wo
    }
}

/// Valid output range `[lo, hi)` along one axis for kernel tap `tap`.
#[inline]
fn valid_range(out_len: usize, in_len: usize, stride: usize, pad: usize, tap: usize) -> (usize, usize) {
    // input index = o * stride + tap - pad must lie in [0, in_len)
    let lo = if pad > tap { (pad - tap).div_ceil(stride) } else { 0 };
    let hi = if in_len + pad > tap {
        ((in_len + pad - tap - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo.min(hi), hi)
}

pub(crate) fn im2col<T: Real>(g: &ConvGeom, x: &[T], cols: &mut [T]) {
    let area = g.out_area();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            let (oy_lo, oy_hi) = valid_range(g.ho, g.h, g.sh, g.ph, i);
            for j in 0..g.kw {
                let (ox_lo, ox_hi) = valid_range(g.wo, g.w, g.sw, g.pw, j);
                let row = (c * g.kh + i) * g.kw + j;
                let dst = &mut cols[row * area..(row + 1) * area];
                dst.fill(T::zero());
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.sh + i - g.ph;
                    let src = &plane[iy * g.w..(iy + 1) * g.w];
                    let drow = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if g.sw == 1 {
                        let ix0 = ox_lo + j - g.pw;
                        drow[ox_lo..ox_hi].copy_from_slice(&src[ix0..ix0 + (ox_hi - ox_lo)]);
                    } else {
                        for ox in ox_lo..ox_hi {
                            drow[ox] = src[ox * g.sw + j - g.pw];
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add of column gradients back onto the input gradient.
pub(crate) fn col2im_add<T: Real>(g: &ConvGeom, cols: &[T], dx: &mut [T]) {
    let area = g.out_area();
    for c in 0..g.c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            let (oy_lo, oy_hi) = valid_range(g.ho, g.h, g.sh, g.ph, i);
            for j in 0..g.kw {
                let (ox_lo, ox_hi) = valid_range(g.wo, g.w, g.sw, g.pw, j);
                let row = (c * g.kh + i) * g.kw + j;
                let src = &cols[row * area..(row + 1) * area];
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.sh + i - g.ph;
                    let drow = &mut plane[iy * g.w..(iy + 1) * g.w];
                    let srow = &src[oy * g.wo..(oy + 1) * g.wo];
                    for ox in ox_lo..ox_hi {
                        drow[ox * g.sw + j - g.pw] += srow[ox];
                    }
                }
            }
        }
    }
}
