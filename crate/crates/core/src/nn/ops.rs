//! Per-item numeric kernels. Every reduction runs in a fixed order so results are
//! bit-reproducible.

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    pub fn cols(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Unfolds `x` (`c×h×w`) into a `(c·k·k) × (oh·ow)` column matrix.
pub(crate) fn im2col(x: &[f32], g: &ConvGeom, col: &mut Vec<f32>) {
    col.clear();
    if g.is_pointwise() {
        col.extend_from_slice(x);
        return;
    }
    col.resize(g.rows() * g.cols(), 0.0);
    let mut row = 0;
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let dst = &mut col[row * g.cols()..(row + 1) * g.cols()];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            *v = src[ix as usize];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Folds a column matrix back onto `dx` (`c×h×w`), accumulating overlaps.
pub(crate) fn col2im_add(col: &[f32], g: &ConvGeom, dx: &mut [f32]) {
    if g.is_pointwise() {
        for (d, v) in dx.iter_mut().zip(col) {
            *d += v;
        }
        return;
    }
    let mut row = 0;
    for c in 0..g.c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let src = &col[row * g.cols()..(row + 1) * g.cols()];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let line = &src[oy * g.ow..(oy + 1) * g.ow];
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// `out[m×n] += a[m×k] · b[k×n]`
pub(crate) fn gemm_acc(a: &[f32], b: &[f32], out: &mut [f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &aik) in a[i * k..(i + 1) * k].iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
}

/// `out[m×k] += a[m×n] · b[k×n]ᵀ`
pub(crate) fn gemm_nt_acc(a: &[f32], b: &[f32], out: &mut [f32], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for kk in 0..k {
            let brow = &b[kk * n..(kk + 1) * n];
            out[i * k + kk] += dot(arow, brow);
        }
    }
}

/// `out[k×n] = a[m×k]ᵀ · b[m×n]`
pub(crate) fn gemm_tn(a: &[f32], b: &[f32], out: &mut [f32], m: usize, k: usize, n: usize) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for kk in 0..k {
            let aik = a[i * k + kk];
            let orow = &mut out[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
}

/// Fixed-order dot product with four interleaved partial sums.
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for j in 0..4 {
            acc[j] += a[4 * i + j] * b[4 * i + j];
        }
    }
    let mut tail = 0.0f32;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Convolution of one item: `out[oc, p] = bias[oc] + Σ_r w[oc, r] · col[r, p]`.
pub(crate) fn conv_forward(
    x: &[f32],
    weights: &[f32],
    bias: Option<&[f32]>,
    g: &ConvGeom,
    out_channels: usize,
    col: &mut Vec<f32>,
    out: &mut [f32],
) {
    im2col(x, g, col);
    let n = g.cols();
    match bias {
        Some(b) => {
            for (oc, chunk) in out.chunks_mut(n).enumerate() {
                chunk.iter_mut().for_each(|v| *v = b[oc]);
            }
        }
        None => out.iter_mut().for_each(|v| *v = 0.0),
    }
    gemm_acc(weights, col, out, out_channels, g.rows(), n);
}

/// Transposed convolution of one item (the input-gradient path): adds `Wᵀ ⋆ dy` to `dx`.
pub(crate) fn conv_transpose_add(
    dy: &[f32],
    weights: &[f32],
    g: &ConvGeom,
    out_channels: usize,
    col: &mut Vec<f32>,
    dx: &mut [f32],
) {
    col.clear();
    col.resize(g.rows() * g.cols(), 0.0);
    gemm_tn(weights, dy, col, out_channels, g.rows(), g.cols());
    col2im_add(col, g, dx);
}

pub(crate) fn softmax_row(logits: &[f32], out: &mut [f32]) {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f64> = logits.iter().map(|&l| ((l - max) as f64).exp()).collect();
    let sum: f64 = exps.iter().sum();
    for (o, e) in out.iter_mut().zip(&exps) {
        *o = (e / sum) as f32;
    }
}
