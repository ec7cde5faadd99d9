//! Dense kernels behind the differentiable convolution ops.
//!
//! Layout is NCHW throughout. Convolution weights are `[cout, cin, k, k]`;
//! transposed-convolution weights are `[cin, cout, k, k]`, so a transposed
//! convolution is exactly the input-gradient of the conv2d that shares its
//! weight buffer.

/// `c (+)= op(a) · op(b)` where `op(a)` is `m×k` and `op(b)` is `k×n`.
///
/// `a_t` means `a` is stored row-major as `k×m`; likewise `b_t` means `b` is
/// stored as `n×k`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].fill(0.0);
        }
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the slices cover m×k, k×n and m×n elements under the strides
    // above, checked by the debug assertion.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
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
        );
    }
}

/// Spatial geometry of one convolution, shared by conv2d and its transpose.
///
/// `h, w` is the "large" side (conv input, transpose output) and `ho, wo` the
/// "small" side (conv output, transpose input).
#[derive(Clone, Copy, Debug)]
pub(crate) struct Window {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl Window {
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn rows(&self) -> usize {
        self.channels * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }
}

/// Output columns `[lo, hi)` whose tap `kj` lands inside a row of width `w`.
fn valid_cols(kj: usize, g: &Window) -> (usize, usize) {
    let lo = g.pad.saturating_sub(kj).div_ceil(g.stride).min(g.wo);
    let hi = if g.w + g.pad <= kj {
        0
    } else {
        ((g.w + g.pad - kj - 1) / g.stride + 1).min(g.wo)
    };
    (lo, hi.max(lo))
}

/// Unfolds one `channels×h×w` sample into a `(channels·k·k)×(ho·wo)` matrix.
pub(crate) fn im2col(x: &[f64], g: &Window, col: &mut [f64]) {
    let cols = g.cols();
    for ci in 0..g.channels {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let dst = &mut col[row * cols..(row + 1) * cols];
                let (lo, hi) = valid_cols(kj, g);
                for oh in 0..g.ho {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    let out = &mut dst[oh * g.wo..(oh + 1) * g.wo];
                    if ih < 0 || ih >= g.h as isize || lo == hi {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &x[(ci * g.h + ih as usize) * g.w..][..g.w];
                    out[..lo].fill(0.0);
                    out[hi..].fill(0.0);
                    let first = lo * g.stride + kj - g.pad;
                    if g.stride == 1 {
                        out[lo..hi].copy_from_slice(&src[first..first + (hi - lo)]);
                    } else {
                        for (o, v) in out[lo..hi].iter_mut().zip(src[first..].iter().step_by(g.stride)) {
                            *o = *v;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: folds the matrix back, accumulating into `x`.
pub(crate) fn col2im(col: &[f64], g: &Window, x: &mut [f64]) {
    let cols = g.cols();
    for ci in 0..g.channels {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let src = &col[row * cols..(row + 1) * cols];
                let (lo, hi) = valid_cols(kj, g);
                if lo == hi {
                    continue;
                }
                let first = lo * g.stride + kj - g.pad;
                for oh in 0..g.ho {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    let dst = &mut x[(ci * g.h + ih as usize) * g.w..][..g.w];
                    let vals = &src[oh * g.wo + lo..oh * g.wo + hi];
                    if g.stride == 1 {
                        for (d, v) in dst[first..first + vals.len()].iter_mut().zip(vals) {
                            *d += v;
                        }
                    } else {
                        for (d, v) in dst[first..].iter_mut().step_by(g.stride).zip(vals) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
}

/// Unfolded view of one sample; borrows directly for 1×1 stride-1 windows.
fn unfold<'a>(x: &'a [f64], g: &Window, scratch: &'a mut Vec<f64>) -> &'a [f64] {
    if g.is_pointwise() {
        x
    } else {
        scratch.resize(g.rows() * g.cols(), 0.0);
        im2col(x, g, scratch);
        scratch
    }
}

/// Full conv2d forward over a batch. `g.channels` is the input channel count.
pub(crate) fn conv2d_forward(
    x: &[f64],
    weight: &[f64],
    bias: &[f64],
    batch: usize,
    cout: usize,
    g: &Window,
) -> Vec<f64> {
    let in_len = g.channels * g.h * g.w;
    let out_len = cout * g.cols();
    let mut out = vec![0.0; batch * out_len];
    let mut scratch = Vec::new();
    for (xs, ys) in x.chunks_exact(in_len).zip(out.chunks_exact_mut(out_len)) {
        for (c, row) in ys.chunks_exact_mut(g.cols()).enumerate() {
            row.fill(bias[c]);
        }
        let col = unfold(xs, g, &mut scratch);
        gemm(cout, g.rows(), g.cols(), weight, false, col, false, ys, true);
    }
    out
}

/// Accumulates conv2d gradients for whichever of `dx`, `dw`, `db` are given.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward(
    x: &[f64],
    weight: &[f64],
    gy: &[f64],
    batch: usize,
    cout: usize,
    g: &Window,
    mut dx: Option<&mut [f64]>,
    mut dw: Option<&mut [f64]>,
    mut db: Option<&mut [f64]>,
) {
    let in_len = g.channels * g.h * g.w;
    let out_len = cout * g.cols();
    let mut scratch = Vec::new();
    let mut dcol = vec![0.0; g.rows() * g.cols()];
    for i in 0..batch {
        let gys = &gy[i * out_len..(i + 1) * out_len];
        if let Some(db) = db.as_deref_mut() {
            for (c, row) in gys.chunks_exact(g.cols()).enumerate() {
                db[c] += row.iter().sum::<f64>();
            }
        }
        if let Some(dw) = dw.as_deref_mut() {
            let col = unfold(&x[i * in_len..(i + 1) * in_len], g, &mut scratch);
            gemm(cout, g.cols(), g.rows(), gys, false, col, true, dw, true);
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dxs = &mut dx[i * in_len..(i + 1) * in_len];
            if g.is_pointwise() {
                gemm(g.rows(), cout, g.cols(), weight, true, gys, false, dxs, true);
            } else {
                gemm(g.rows(), cout, g.cols(), weight, true, gys, false, &mut dcol, false);
                col2im(&dcol, g, dxs);
            }
        }
    }
}

/// Transposed convolution forward. Input is `batch×cin×ho×wo`, weight
/// `cin×cout×k×k` with `g.channels == cout`, output `batch×cout×h×w`.
pub(crate) fn conv_transpose2d_forward(
    x: &[f64],
    weight: &[f64],
    bias: &[f64],
    batch: usize,
    cin: usize,
    g: &Window,
) -> Vec<f64> {
    let in_len = cin * g.cols();
    let out_len = g.channels * g.h * g.w;
    let mut out = vec![0.0; batch * out_len];
    let mut col = vec![0.0; g.rows() * g.cols()];
    for (xs, ys) in x.chunks_exact(in_len).zip(out.chunks_exact_mut(out_len)) {
        if g.is_pointwise() {
            gemm(g.rows(), cin, g.cols(), weight, true, xs, false, ys, false);
        } else {
            gemm(g.rows(), cin, g.cols(), weight, true, xs, false, &mut col, false);
            col2im(&col, g, ys);
        }
        for (c, plane) in ys.chunks_exact_mut(g.h * g.w).enumerate() {
            plane.iter_mut().for_each(|v| *v += bias[c]);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_transpose2d_backward(
    x: &[f64],
    weight: &[f64],
    gy: &[f64],
    batch: usize,
    cin: usize,
    g: &Window,
    mut dx: Option<&mut [f64]>,
    mut dw: Option<&mut [f64]>,
    mut db: Option<&mut [f64]>,
) {
    let in_len = cin * g.cols();
    let out_len = g.channels * g.h * g.w;
    let mut scratch = Vec::new();
    for i in 0..batch {
        let gys = &gy[i * out_len..(i + 1) * out_len];
        if let Some(db) = db.as_deref_mut() {
            for (c, plane) in gys.chunks_exact(g.h * g.w).enumerate() {
                db[c] += plane.iter().sum::<f64>();
            }
        }
        if dx.is_none() && dw.is_none() {
            continue;
        }
        let gcol = unfold(gys, g, &mut scratch);
        if let Some(dw) = dw.as_deref_mut() {
            let xs = &x[i * in_len..(i + 1) * in_len];
            gemm(cin, g.cols(), g.rows(), xs, false, gcol, true, dw, true);
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dxs = &mut dx[i * in_len..(i + 1) * in_len];
            gemm(cin, g.rows(), g.cols(), weight, false, gcol, false, dxs, true);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_handles_all_transpose_combinations() {
        // a = [[1,2,3],[4,5,6]] (2×3), b = [[1,0],[0,1],[1,1]] (3×2)
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let bt = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let expected = [4.0, 5.0, 10.0, 11.0];
        for (aa, a_t) in [(&a, false), (&at, true)] {
            for (bb, b_t) in [(&b, false), (&bt, true)] {
                let mut c = [0.0; 4];
                gemm(2, 3, 2, aa, a_t, bb, b_t, &mut c, false);
                assert_eq!(c, expected, "a_t={a_t} b_t={b_t}");
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = Window {
            channels: 2,
            h: 5,
            w: 4,
            k: 3,
            stride: 2,
            pad: 1,
            ho: 3,
            wo: 2,
        };
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..g.rows() * g.cols()).map(|i| (i as f64 * 0.91).cos()).collect();
        let mut col = vec![0.0; y.len()];
        im2col(&x, &g, &mut col);
        let lhs: f64 = col.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im(&y, &g, &mut back);
        let rhs: f64 = back.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
