//! Dense kernels behind the graph ops: im2col convolution and row softmax.

use crate::error::{NnError, Result};
use crate::float::Float;

/// Geometry of a (possibly grouped, dilated, asymmetrically padded) 2-D
/// convolution. 1-D convolutions use `h == kh == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub dh: usize,
    pub dw: usize,
    pub pad_top: usize,
    pub pad_bottom: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    pub groups: usize,
    pub ho: usize,
    pub wo: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvParams {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub dilation: (usize, usize),
    /// (top, bottom, left, right)
    pub padding: (usize, usize, usize, usize),
    pub groups: usize,
}

impl ConvGeom {
    pub fn new(c_in: usize, c_out: usize, input: (usize, usize), p: ConvParams) -> Result<Self> {
        let (h, w) = input;
        let (kh, kw) = p.kernel;
        let (sh, sw) = p.stride;
        let (dh, dw) = p.dilation;
        let (pt, pb, pl, pr) = p.padding;
        if p.groups == 0 || c_in % p.groups != 0 || c_out % p.groups != 0 {
            return Err(NnError::Config(format!(
                "groups={} must divide in={c_in} and out={c_out}",
                p.groups
            )));
        }
        if kh == 0 || kw == 0 || sh == 0 || sw == 0 || dh == 0 || dw == 0 {
            return Err(NnError::Config("kernel, stride and dilation must be positive".into()));
        }
        let span_h = dh * (kh - 1) + 1;
        let span_w = dw * (kw - 1) + 1;
        if h + pt + pb < span_h || w + pl + pr < span_w {
            return Err(NnError::Config(format!(
                "kernel span {span_h}x{span_w} exceeds padded input {}x{}",
                h + pt + pb,
                w + pl + pr
            )));
        }
        Ok(Self {
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            sh,
            sw,
            dh,
            dw,
            pad_top: pt,
            pad_bottom: pb,
            pad_left: pl,
            pad_right: pr,
            groups: p.groups,
            ho: (h + pt + pb - span_h) / sh + 1,
            wo: (w + pl + pr - span_w) / sw + 1,
        })
    }

    fn k(&self) -> usize {
        self.kh * self.kw
    }

    fn cin_g(&self) -> usize {
        self.c_in / self.groups
    }

    fn cout_g(&self) -> usize {
        self.c_out / self.groups
    }

    pub fn macs_per_sample(&self) -> usize {
        self.c_out * self.cin_g() * self.k() * self.ho * self.wo
    }
}

/// Unfolds `x: [B, C, H, W]` into `[C*kh*kw, B*ho*wo]`.
pub fn im2col<T: Float>(x: &[T], batch: usize, g: &ConvGeom) -> Vec<T> {
    let ncol = batch * g.ho * g.wo;
    let mut col = vec![T::zero(); g.c_in * g.k() * ncol];
    let hw = g.h * g.w;
    for c in 0..g.c_in {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut col[row * ncol..(row + 1) * ncol];
                let off_x = (kj * g.dw) as isize - g.pad_left as isize;
                for b in 0..batch {
                    let src = &x[(b * g.c_in + c) * hw..(b * g.c_in + c + 1) * hw];
                    for oy in 0..g.ho {
                        let iy = (oy * g.sh + ki * g.dh) as isize - g.pad_top as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let srow = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                        let d = &mut dst[(b * g.ho + oy) * g.wo..(b * g.ho + oy + 1) * g.wo];
                        if g.sw == 1 {
                            // contiguous run of valid columns
                            let lo = (-off_x).max(0) as usize;
                            let hi = ((g.w as isize - off_x).min(g.wo as isize)).max(lo as isize) as usize;
                            if hi > lo {
                                let s0 = (lo as isize + off_x) as usize;
                                d[lo..hi].copy_from_slice(&srow[s0..s0 + (hi - lo)]);
                            }
                        } else {
                            for (ox, v) in d.iter_mut().enumerate() {
                                let ix = (ox * g.sw) as isize + off_x;
                                if ix >= 0 && ix < g.w as isize {
                                    *v = srow[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    col
}

/// Folds `dcol: [C*kh*kw, B*ho*wo]` back into `[B, C, H, W]`, summing overlaps.
pub fn col2im<T: Float>(dcol: &[T], batch: usize, g: &ConvGeom) -> Vec<T> {
    let ncol = batch * g.ho * g.wo;
    let hw = g.h * g.w;
    let mut dx = vec![T::zero(); batch * g.c_in * hw];
    for c in 0..g.c_in {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &dcol[row * ncol..(row + 1) * ncol];
                let off_x = (kj * g.dw) as isize - g.pad_left as isize;
                for b in 0..batch {
                    let dst = &mut dx[(b * g.c_in + c) * hw..(b * g.c_in + c + 1) * hw];
                    for oy in 0..g.ho {
                        let iy = (oy * g.sh + ki * g.dh) as isize - g.pad_top as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let drow = &mut dst[iy as usize * g.w..(iy as usize + 1) * g.w];
                        let s = &src[(b * g.ho + oy) * g.wo..(b * g.ho + oy + 1) * g.wo];
                        for (ox, &v) in s.iter().enumerate() {
                            let ix = (ox * g.sw) as isize + off_x;
                            if ix >= 0 && ix < g.w as isize {
                                drow[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Returns `[B, C_out, ho, wo]` from unfolded input and `w: [C_out, C_in/groups, kh, kw]`.
pub fn conv_forward<T: Float>(col: &[T], w: &[T], bias: Option<&[T]>, batch: usize, g: &ConvGeom) -> Vec<T> {
    let ncol = batch * g.ho * g.wo;
    let kg = g.cin_g() * g.k();
    let (cog, cig) = (g.cout_g(), g.cin_g());
    let mut cm = vec![T::zero(); g.c_out * ncol];
    for gi in 0..g.groups {
        let wg = &w[gi * cog * kg..(gi + 1) * cog * kg];
        let cg = &col[gi * cig * g.k() * ncol..(gi + 1) * cig * g.k() * ncol];
        let og = &mut cm[gi * cog * ncol..(gi + 1) * cog * ncol];
        T::gemm(cog, kg, ncol, T::one(), wg, kg as isize, 1, cg, ncol as isize, 1, T::zero(), og, ncol as isize, 1);
    }
    let hw = g.ho * g.wo;
    let mut out = vec![T::zero(); g.c_out * ncol];
    for o in 0..g.c_out {
        let bo = bias.map_or(T::zero(), |b| b[o]);
        for b in 0..batch {
            let src = &cm[o * ncol + b * hw..o * ncol + (b + 1) * hw];
            let dst = &mut out[(b * g.c_out + o) * hw..(b * g.c_out + o + 1) * hw];
            dst.iter_mut().zip(src).for_each(|(d, &s)| *d = s + bo);
        }
    }
    out
}

/// `[B, C, HW] -> [C, B*HW]`.
pub fn batch_major_to_channel_major<T: Float>(g: &[T], batch: usize, c: usize, hw: usize) -> Vec<T> {
    let mut out = vec![T::zero(); g.len()];
    for b in 0..batch {
        for ch in 0..c {
            let src = &g[(b * c + ch) * hw..(b * c + ch + 1) * hw];
            out[ch * batch * hw + b * hw..ch * batch * hw + (b + 1) * hw].copy_from_slice(src);
        }
    }
    out
}

/// `dW = dOut * col^T` per group, with `gm: [C_out, B*ho*wo]`.
pub fn conv_weight_grad<T: Float>(gm: &[T], col: &[T], batch: usize, g: &ConvGeom) -> Vec<T> {
    let ncol = batch * g.ho * g.wo;
    let kg = g.cin_g() * g.k();
    let cog = g.cout_g();
    let mut dw = vec![T::zero(); g.c_out * kg];
    for gi in 0..g.groups {
        let a = &gm[gi * cog * ncol..(gi + 1) * cog * ncol];
        let bcol = &col[gi * kg * ncol..(gi + 1) * kg * ncol];
        let d = &mut dw[gi * cog * kg..(gi + 1) * cog * kg];
        T::gemm(cog, ncol, kg, T::one(), a, ncol as isize, 1, bcol, 1, ncol as isize, T::zero(), d, kg as isize, 1);
    }
    dw
}

/// `dcol = W^T * dOut` per group.
pub fn conv_col_grad<T: Float>(gm: &[T], w: &[T], batch: usize, g: &ConvGeom) -> Vec<T> {
    let ncol = batch * g.ho * g.wo;
    let kg = g.cin_g() * g.k();
    let cog = g.cout_g();
    let mut dcol = vec![T::zero(); g.c_in * g.k() * ncol];
    for gi in 0..g.groups {
        let wg = &w[gi * cog * kg..(gi + 1) * cog * kg];
        let a = &gm[gi * cog * ncol..(gi + 1) * cog * ncol];
        let d = &mut dcol[gi * kg * ncol..(gi + 1) * kg * ncol];
        T::gemm(kg, cog, ncol, T::one(), wg, 1, kg as isize, a, ncol as isize, 1, T::zero(), d, ncol as isize, 1);
    }
    dcol
}

pub fn softmax_rows<T: Float>(x: &[T], k: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks_exact(k) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        let mut s = T::zero();
        for &v in row {
            let e = (v - m).exp();
            s += e;
            out.push(e);
        }
        out[start..].iter_mut().for_each(|v| *v /= s);
    }
    out
}
