//! Raw forward/backward loops over flat buffers. Shapes are validated by the
//! callers in `graph.rs`.

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub pad: usize,
    pub stride: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(cin: usize, h: usize, w: usize, cout: usize, k: usize, pad: usize, stride: usize) -> Option<Self> {
        if h + 2 * pad < k || w + 2 * pad < k || stride == 0 {
            return None;
        }
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        Some(ConvGeom { cin, h, w, cout, k, pad, stride, ho, wo })
    }

    /// Output columns `ox` for which `ox*stride + kx - pad` lands inside the row (stride 1 only).
    #[inline]
    fn col_range(&self, kx: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kx);
        let hi = (self.w + self.pad).saturating_sub(kx).min(self.wo);
        (lo, hi.max(lo))
    }
}

/// Unfolds the input into a `(C_in·k·k) × (H_out·W_out)` matrix (zero padding).
fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let plane = g.ho * g.wo;
    let mut col = vec![0.0; g.cin * g.k * g.k * plane];
    for c in 0..g.cin {
        let x_c = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = &mut col[((c * g.k + ky) * g.k + kx) * plane..][..plane];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &x_c[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let dst = &mut row[oy * g.wo..(oy + 1) * g.wo];
                    if g.stride == 1 {
                        let (lo, hi) = g.col_range(kx);
                        if hi > lo {
                            dst[lo..hi].copy_from_slice(&src[lo + kx - g.pad..hi + kx - g.pad]);
                        }
                    } else {
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
fn col2im(gcol: &[f64], g: &ConvGeom, gx: &mut [f64]) {
    let plane = g.ho * g.wo;
    for c in 0..g.cin {
        let gx_c = &mut gx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = &gcol[((c * g.k + ky) * g.k + kx) * plane..][..plane];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut gx_c[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let src = &row[oy * g.wo..(oy + 1) * g.wo];
                    if g.stride == 1 {
                        let (lo, hi) = g.col_range(kx);
                        if hi > lo {
                            for (d, s) in dst[lo + kx - g.pad..hi + kx - g.pad].iter_mut().zip(&src[lo..hi]) {
                                *d += s;
                            }
                        }
                    } else {
                        for (ox, s) in src.iter().enumerate() {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                dst[ix as usize] += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn conv2d_forward(x: &[f64], wt: &[f64], bias: Option<&[f64]>, g: &ConvGeom) -> Vec<f64> {
    let plane = g.ho * g.wo;
    let kk = g.cin * g.k * g.k;
    let col = im2col(x, g);
    let mut out = vec![0.0; g.cout * plane];
    for (blk, outs) in out.chunks_mut(4 * plane).enumerate() {
        let o0 = blk * 4;
        let n = outs.len() / plane;
        if let Some(b) = bias {
            for j in 0..n {
                outs[j * plane..(j + 1) * plane].fill(b[o0 + j]);
            }
        }
        if n == 4 {
            let (a, rest) = outs.split_at_mut(plane);
            let (b_, rest) = rest.split_at_mut(plane);
            let (c_, d_) = rest.split_at_mut(plane);
            for r in 0..kk {
                let w0 = wt[o0 * kk + r];
                let w1 = wt[(o0 + 1) * kk + r];
                let w2 = wt[(o0 + 2) * kk + r];
                let w3 = wt[(o0 + 3) * kk + r];
                let src = &col[r * plane..(r + 1) * plane];
                for p in 0..plane {
                    let s = src[p];
                    a[p] += w0 * s;
                    b_[p] += w1 * s;
                    c_[p] += w2 * s;
                    d_[p] += w3 * s;
                }
            }
        } else {
            for j in 0..n {
                let dst = &mut outs[j * plane..(j + 1) * plane];
                for r in 0..kk {
                    let wv = wt[(o0 + j) * kk + r];
                    for (d, s) in dst.iter_mut().zip(&col[r * plane..(r + 1) * plane]) {
                        *d += wv * s;
                    }
                }
            }
        }
    }
    out
}

/// Accumulates input, weight and bias gradients for one conv2d.
pub(crate) fn conv2d_backward(
    x: &[f64],
    wt: &[f64],
    gout: &[f64],
    g: &ConvGeom,
    gx: Option<&mut [f64]>,
    gw: Option<&mut [f64]>,
    gb: Option<&mut [f64]>,
) {
    let plane = g.ho * g.wo;
    let kk = g.cin * g.k * g.k;
    if let Some(gb) = gb {
        for o in 0..g.cout {
            gb[o] += gout[o * plane..(o + 1) * plane].iter().sum::<f64>();
        }
    }
    if let Some(gw) = gw {
        let col = im2col(x, g);
        for o in 0..g.cout {
            let go = &gout[o * plane..(o + 1) * plane];
            for r in 0..kk {
                gw[o * kk + r] += dot(go, &col[r * plane..(r + 1) * plane]);
            }
        }
    }
    if let Some(gx) = gx {
        let mut gcol = vec![0.0; kk * plane];
        for o in 0..g.cout {
            let go = &gout[o * plane..(o + 1) * plane];
            for r in 0..kk {
                let wv = wt[o * kk + r];
                for (d, s) in gcol[r * plane..(r + 1) * plane].iter_mut().zip(go) {
                    *d += wv * s;
                }
            }
        }
        col2im(&gcol, g, gx);
    }
}

/// 2×2 max pooling; returns values and the flat argmax index of each window.
/// Ties resolve to the first element in row-major window order.
pub(crate) fn max_pool2_forward(x: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * ho * wo);
    let mut arg = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

/// Source taps `(i0, i1, frac)` for each output coordinate of a ×2 bilinear
/// upsample with half-pixel centers (align-corners false).
pub(crate) fn upsample_taps(n: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * n)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub(crate) fn upsample2_forward(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let ty = upsample_taps(h);
    let tx = upsample_taps(w);
    let (ho, wo) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * ho * wo];
    for ch in 0..c {
        let xs = &x[ch * h * w..(ch + 1) * h * w];
        let os = &mut out[ch * ho * wo..(ch + 1) * ho * wo];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let top = xs[y0 * w + x0] * (1.0 - fx) + xs[y0 * w + x1] * fx;
                let bot = xs[y1 * w + x0] * (1.0 - fx) + xs[y1 * w + x1] * fx;
                os[oy * wo + ox] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    out
}

pub(crate) fn upsample2_backward(gout: &[f64], c: usize, h: usize, w: usize, gx: &mut [f64]) {
    let ty = upsample_taps(h);
    let tx = upsample_taps(w);
    let wo = 2 * w;
    for ch in 0..c {
        let gs = &gout[ch * 4 * h * w..(ch + 1) * 4 * h * w];
        let gxs = &mut gx[ch * h * w..(ch + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let g = gs[oy * wo + ox];
                gxs[y0 * w + x0] += g * (1.0 - fy) * (1.0 - fx);
                gxs[y0 * w + x1] += g * (1.0 - fy) * fx;
                gxs[y1 * w + x0] += g * fy * (1.0 - fx);
                gxs[y1 * w + x1] += g * fy * fx;
            }
        }
    }
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Per-pixel separable kernel convolution with replicate padding:
/// `out[c,y,x] = Σ_i Σ_j kv[i,y,x]·kh[j,y,x]·frame[c, y+i-r, x+j-r]`.
pub(crate) fn sepconv_forward(frame: &[f64], kv: &[f64], kh: &[f64], c: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let r = (k / 2) as isize;
    let plane = h * w;
    let mut out = vec![0.0; c * plane];
    let mut row = vec![0.0; k];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let cols: Vec<usize> = (0..k).map(|j| clamp_index(x as isize + j as isize - r, w)).collect();
            for ch in 0..c {
                let f = &frame[ch * plane..(ch + 1) * plane];
                for (i, ri) in row.iter_mut().enumerate() {
                    let yy = clamp_index(y as isize + i as isize - r, h);
                    *ri = cols.iter().enumerate().map(|(j, &xx)| kh[j * plane + p] * f[yy * w + xx]).sum();
                }
                out[ch * plane + p] = row.iter().enumerate().map(|(i, s)| kv[i * plane + p] * s).sum();
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn sepconv_backward(
    frame: &[f64],
    kv: &[f64],
    kh: &[f64],
    gout: &[f64],
    (c, h, w, k): (usize, usize, usize, usize),
    mut gframe: Option<&mut [f64]>,
    mut gkv: Option<&mut [f64]>,
    mut gkh: Option<&mut [f64]>,
) {
    let r = (k / 2) as isize;
    let plane = h * w;
    for y in 0..h {
        let rows: Vec<usize> = (0..k).map(|i| clamp_index(y as isize + i as isize - r, h)).collect();
        for x in 0..w {
            let p = y * w + x;
            let cols: Vec<usize> = (0..k).map(|j| clamp_index(x as isize + j as isize - r, w)).collect();
            for ch in 0..c {
                let g = gout[ch * plane + p];
                if g == 0.0 {
                    continue;
                }
                let f = &frame[ch * plane..(ch + 1) * plane];
                for (i, &yy) in rows.iter().enumerate() {
                    let kvi = kv[i * plane + p];
                    let mut rowsum = 0.0;
                    for (j, &xx) in cols.iter().enumerate() {
                        let fv = f[yy * w + xx];
                        let khj = kh[j * plane + p];
                        rowsum += khj * fv;
                        if let Some(gkh) = gkh.as_deref_mut() {
                            gkh[j * plane + p] += g * kvi * fv;
                        }
                        if let Some(gf) = gframe.as_deref_mut() {
                            gf[ch * plane + yy * w + xx] += g * kvi * khj;
                        }
                    }
                    if let Some(gkv) = gkv.as_deref_mut() {
                        gkv[i * plane + p] += g * rowsum;
                    }
                }
            }
        }
    }
}
