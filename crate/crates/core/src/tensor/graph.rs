use super::kernels::{self, Window};
use super::Tensor;
use crate::error::{Error, Result};
use crate::loss;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Per-channel running mean and (unbiased) variance for batch norm.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BatchStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

pub enum BatchNormMode<'a> {
    /// Normalize with batch statistics and fold them into `running`.
    Train {
        running: &'a mut BatchStats,
        momentum: f64,
    },
    /// Normalize with the running statistics only.
    Eval { running: &'a BatchStats },
}

enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        window: Window,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Var,
        window: Window,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Relu(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Sum(Var),
    AvgPool2(Var),
    GlobalAvgPool(Var),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    SoftArgmax {
        h: Var,
        probs: Vec<f64>,
        out_width: f64,
        out_height: f64,
    },
    BceWithLogits {
        logits: Var,
        labels: Vec<f64>,
    },
    MaskedSmoothL1 {
        pred: Var,
        target: Vec<f64>,
        mask: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Tape of differentiable operations.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant input; never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false, Op::Leaf)
    }

    /// A leaf that accumulates `∂loss/∂leaf` on every [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, true, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<f64>> {
        self.nodes[v.0].grad.take()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let [n, cin, h, wd] = self.value(x).dims4("conv2d")?;
        let [cout, wcin, k, k2] = self.value(w).dims4("conv2d")?;
        if k != k2 || k == 0 {
            return Err(Error::shape("conv2d", format!("kernel must be square and non-empty, got {k}×{k2}")));
        }
        if stride == 0 {
            return Err(Error::contract("conv2d", "stride must be at least 1"));
        }
        if cin != wcin {
            return Err(Error::shape(
                "conv2d",
                format!("input has {cin} channels but weight expects {wcin}"),
            ));
        }
        check_bias("conv2d", self.value(b), cout)?;
        if h + 2 * padding < k || wd + 2 * padding < k {
            return Err(Error::shape(
                "conv2d",
                format!("{k}×{k} kernel does not fit a {h}×{wd} input with padding {padding}"),
            ));
        }
        let window = Window {
            channels: cin,
            h,
            w: wd,
            k,
            stride,
            pad: padding,
            ho: (h + 2 * padding - k) / stride + 1,
            wo: (wd + 2 * padding - k) / stride + 1,
        };
        let out = kernels::conv2d_forward(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            n,
            cout,
            &window,
        );
        let value = Tensor::new(vec![n, cout, window.ho, window.wo], out)?;
        let rg = self.needs(&[x, w, b]);
        Ok(self.push(value, rg, Op::Conv2d { x, w, b, window }))
    }

    /// Weight layout is `[cin, cout, k, k]`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let [n, cin, h, wd] = self.value(x).dims4("conv_transpose2d")?;
        let [wcin, cout, k, k2] = self.value(w).dims4("conv_transpose2d")?;
        if k != k2 || k == 0 {
            return Err(Error::shape(
                "conv_transpose2d",
                format!("kernel must be square and non-empty, got {k}×{k2}"),
            ));
        }
        if stride == 0 {
            return Err(Error::contract("conv_transpose2d", "stride must be at least 1"));
        }
        if cin != wcin {
            return Err(Error::shape(
                "conv_transpose2d",
                format!("input has {cin} channels but weight expects {wcin}"),
            ));
        }
        check_bias("conv_transpose2d", self.value(b), cout)?;
        let full_h = (h - 1) * stride + k;
        let full_w = (wd - 1) * stride + k;
        if full_h <= 2 * padding || full_w <= 2 * padding {
            return Err(Error::shape(
                "conv_transpose2d",
                format!("padding {padding} consumes the whole {full_h}×{full_w} output"),
            ));
        }
        let window = Window {
            channels: cout,
            h: full_h - 2 * padding,
            w: full_w - 2 * padding,
            k,
            stride,
            pad: padding,
            ho: h,
            wo: wd,
        };
        let out = kernels::conv_transpose2d_forward(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            n,
            cin,
            &window,
        );
        let value = Tensor::new(vec![n, cout, window.h, window.w], out)?;
        let rg = self.needs(&[x, w, b]);
        Ok(self.push(value, rg, Op::ConvTranspose2d { x, w, b, window }))
    }

    pub fn batch_norm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        mode: BatchNormMode<'_>,
    ) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4("batch_norm2d")?;
        check_bias("batch_norm2d", self.value(gamma), c)?;
        check_bias("batch_norm2d", self.value(beta), c)?;
        let plane = h * w;
        let count = n * plane;
        let xs = self.value(x).data();
        let (mean, var, batch_stats) = match mode {
            BatchNormMode::Train { running, momentum } => {
                if count < 2 {
                    return Err(Error::DegenerateVariance { count });
                }
                if running.mean.len() != c || running.var.len() != c {
                    return Err(Error::shape("batch_norm2d", "running stats channel count"));
                }
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let mut s = 0.0;
                    for i in 0..n {
                        s += xs[(i * c + ch) * plane..][..plane].iter().sum::<f64>();
                    }
                    let m = s / count as f64;
                    let mut ss = 0.0;
                    for i in 0..n {
                        ss += xs[(i * c + ch) * plane..][..plane]
                            .iter()
                            .map(|v| (v - m) * (v - m))
                            .sum::<f64>();
                    }
                    mean[ch] = m;
                    var[ch] = ss / count as f64;
                    let unbiased = ss / (count - 1) as f64;
                    running.mean[ch] = (1.0 - momentum) * running.mean[ch] + momentum * m;
                    running.var[ch] = (1.0 - momentum) * running.var[ch] + momentum * unbiased;
                }
                (mean, var, true)
            }
            BatchNormMode::Eval { running } => {
                if running.mean.len() != c || running.var.len() != c {
                    return Err(Error::shape("batch_norm2d", "running stats channel count"));
                }
                (running.mean.clone(), running.var.clone(), false)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = vec![0.0; xs.len()];
        let mut out = vec![0.0; xs.len()];
        for i in 0..n {
            for ch in 0..c {
                let off = (i * c + ch) * plane;
                for j in off..off + plane {
                    let xh = (xs[j] - mean[ch]) * inv_std[ch];
                    xhat[j] = xh;
                    out[j] = g[ch] * xh + bt[ch];
                }
            }
        }
        let value = Tensor::new(vec![n, c, h, w], out)?;
        let rg = self.needs(&[x, gamma, beta]);
        Ok(self.push(
            value,
            rg,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let value = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|v| v.max(0.0)).collect(),
        };
        let rg = self.needs(&[x]);
        self.push(value, rg, Op::Relu(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip("add", a, b, |p, q| p + q)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, rg, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip("mul", a, b, |p, q| p * q)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, rg, Op::Mul(a, b)))
    }

    fn zip(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape != tb.shape {
            return Err(Error::shape(op, format!("{:?} vs {:?}", ta.shape, tb.shape)));
        }
        Ok(Tensor {
            shape: ta.shape.clone(),
            data: ta.data.iter().zip(&tb.data).map(|(p, q)| f(*p, *q)).collect(),
        })
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().sum();
        let rg = self.needs(&[x]);
        self.push(Tensor::scalar(s), rg, Op::Sum(x))
    }

    /// 2×2 average pooling with stride 2.
    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4("avg_pool2")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape("avg_pool2", format!("spatial dims {h}×{w} must be even")));
        }
        let (ho, wo) = (h / 2, w / 2);
        let xs = self.value(x).data();
        let mut out = vec![0.0; n * c * ho * wo];
        for (p, o) in xs.chunks_exact(h * w).zip(out.chunks_exact_mut(ho * wo)) {
            for i in 0..ho {
                for j in 0..wo {
                    let r0 = 2 * i * w + 2 * j;
                    o[i * wo + j] = 0.25 * (p[r0] + p[r0 + 1] + p[r0 + w] + p[r0 + w + 1]);
                }
            }
        }
        let value = Tensor::new(vec![n, c, ho, wo], out)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, rg, Op::AvgPool2(x)))
    }

    /// N×C×H×W → N×C mean over the spatial dims.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4("global_avg_pool")?;
        let plane = (h * w) as f64;
        let out = self
            .value(x)
            .data()
            .chunks_exact(h * w)
            .map(|p| p.iter().sum::<f64>() / plane)
            .collect();
        let value = Tensor::new(vec![n, c], out)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, rg, Op::GlobalAvgPool(x)))
    }

    /// `x · w + b` with `x: N×F`, `w: F×G`, `b: G`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, f) = dims2("linear", self.value(x))?;
        let (wf, gdim) = dims2("linear", self.value(w))?;
        if f != wf {
            return Err(Error::shape(
                "linear",
                format!("input has {f} features but weight expects {wf}"),
            ));
        }
        check_bias("linear", self.value(b), gdim)?;
        let mut out = Vec::with_capacity(n * gdim);
        for _ in 0..n {
            out.extend_from_slice(self.value(b).data());
        }
        kernels::gemm(n, f, gdim, self.value(x).data(), false, self.value(w).data(), false, &mut out, true);
        let value = Tensor::new(vec![n, gdim], out)?;
        let rg = self.needs(&[x, w, b]);
        Ok(self.push(value, rg, Op::Linear { x, w, b }))
    }

    /// Softmax over every cell of an `N×1×H×W` heatmap followed by the
    /// expected cell-center coordinate, scaled to `[0,out_width]×[0,out_height]`.
    ///
    /// Cell `(r, c)` sits at `((c+0.5)/W·out_width, (r+0.5)/H·out_height)`.
    pub fn spatial_soft_argmax(&mut self, h: Var, out_width: f64, out_height: f64) -> Result<Var> {
        let [n, c, hh, ww] = self.value(h).dims4("spatial_soft_argmax")?;
        if c != 1 {
            return Err(Error::shape(
                "spatial_soft_argmax",
                format!("heatmap must have one channel, got {c}"),
            ));
        }
        if hh == 0 || ww == 0 {
            return Err(Error::shape("spatial_soft_argmax", "empty heatmap"));
        }
        if !(out_width > 0.0 && out_height > 0.0) {
            return Err(Error::contract("spatial_soft_argmax", "output extents must be positive"));
        }
        let plane = hh * ww;
        let mut probs = vec![0.0; n * plane];
        let mut out = vec![0.0; n * 2];
        for (i, (src, p)) in self
            .value(h)
            .data()
            .chunks_exact(plane)
            .zip(probs.chunks_exact_mut(plane))
            .enumerate()
        {
            let m = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (pi, v) in p.iter_mut().zip(src) {
                *pi = (v - m).exp();
                z += *pi;
            }
            let (mut ex, mut ey) = (0.0, 0.0);
            for r in 0..hh {
                let cy = (r as f64 + 0.5) / hh as f64 * out_height;
                for col in 0..ww {
                    let cx = (col as f64 + 0.5) / ww as f64 * out_width;
                    let pi = &mut p[r * ww + col];
                    *pi /= z;
                    ex += *pi * cx;
                    ey += *pi * cy;
                }
            }
            out[2 * i] = ex.clamp(0.0, out_width);
            out[2 * i + 1] = ey.clamp(0.0, out_height);
        }
        let value = Tensor::new(vec![n, 2], out)?;
        let rg = self.needs(&[h]);
        Ok(self.push(
            value,
            rg,
            Op::SoftArgmax {
                h,
                probs,
                out_width,
                out_height,
            },
        ))
    }

    /// Mean binary cross-entropy of raw logits against `{0,1}` labels.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[f64]) -> Result<Var> {
        let l = self.value(logits).data();
        let value = loss::bce_with_logits(l, labels)?;
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Tensor::scalar(value),
            rg,
            Op::BceWithLogits {
                logits,
                labels: labels.to_vec(),
            },
        ))
    }

    /// `(1/N) Σ_i mask_i · mean_j smoothL1(pred_ij − target_ij)` for `pred: N×D`.
    pub fn masked_smooth_l1(&mut self, pred: Var, target: &[f64], mask: &[f64]) -> Result<Var> {
        let (n, _) = dims2("masked_smooth_l1", self.value(pred))?;
        let value = loss::masked_smooth_l1(self.value(pred).data(), target, mask)?;
        debug_assert_eq!(mask.len(), n);
        let rg = self.needs(&[pred]);
        Ok(self.push(
            Tensor::scalar(value),
            rg,
            Op::MaskedSmoothL1 {
                pred,
                target: target.to_vec(),
                mask: mask.to_vec(),
            },
        ))
    }

    /// Propagates `∂loss/∂·` to every parameter leaf, adding onto whatever
    /// those leaves already hold.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::contract(
                "backward",
                format!("loss must be a scalar, got shape {:?}", self.value(loss).shape),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut leaf_grads = Vec::new();
        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(i, gy, &mut grads, &mut leaf_grads);
        }
        for (i, g) in leaf_grads {
            let node = &mut self.nodes[i];
            match &mut node.grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(
        &self,
        i: usize,
        gy: Vec<f64>,
        grads: &mut [Option<Vec<f64>>],
        leaf_grads: &mut Vec<(usize, Vec<f64>)>,
    ) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => leaf_grads.push((i, gy)),
            Op::Conv2d { x, w, b, window } => {
                let n = self.value(*x).shape[0];
                let cout = self.value(*w).shape[0];
                let mut dx = self.slot(*x, grads);
                let mut dw = self.slot(*w, grads);
                let mut db = self.slot(*b, grads);
                kernels::conv2d_backward(
                    self.value(*x).data(),
                    self.value(*w).data(),
                    &gy,
                    n,
                    cout,
                    window,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                restore(grads, [(*x, dx), (*w, dw), (*b, db)]);
            }
            Op::ConvTranspose2d { x, w, b, window } => {
                let n = self.value(*x).shape[0];
                let cin = self.value(*x).shape[1];
                let mut dx = self.slot(*x, grads);
                let mut dw = self.slot(*w, grads);
                let mut db = self.slot(*b, grads);
                kernels::conv_transpose2d_backward(
                    self.value(*x).data(),
                    self.value(*w).data(),
                    &gy,
                    n,
                    cin,
                    window,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                restore(grads, [(*x, dx), (*w, dw), (*b, db)]);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let shape = &node.value.shape;
                let (n, c, plane) = (shape[0], shape[1], shape[2] * shape[3]);
                let count = (n * plane) as f64;
                let g = self.value(*gamma).data();
                let mut sum_dy = vec![0.0; c];
                let mut sum_dy_xhat = vec![0.0; c];
                for i in 0..n {
                    for ch in 0..c {
                        let off = (i * c + ch) * plane;
                        for j in off..off + plane {
                            sum_dy[ch] += gy[j];
                            sum_dy_xhat[ch] += gy[j] * xhat[j];
                        }
                    }
                }
                if let Some(mut dg) = self.slot(*gamma, grads) {
                    dg.iter_mut().zip(&sum_dy_xhat).for_each(|(a, b)| *a += b);
                    grads[gamma.0] = Some(dg);
                }
                if let Some(mut dbt) = self.slot(*beta, grads) {
                    dbt.iter_mut().zip(&sum_dy).for_each(|(a, b)| *a += b);
                    grads[beta.0] = Some(dbt);
                }
                if let Some(mut dx) = self.slot(*x, grads) {
                    for i in 0..n {
                        for ch in 0..c {
                            let off = (i * c + ch) * plane;
                            let scale = g[ch] * inv_std[ch];
                            for j in off..off + plane {
                                dx[j] += if *batch_stats {
                                    scale * (gy[j] - sum_dy[ch] / count - xhat[j] * sum_dy_xhat[ch] / count)
                                } else {
                                    scale * gy[j]
                                };
                            }
                        }
                    }
                    grads[x.0] = Some(dx);
                }
            }
            Op::Relu(x) => {
                if let Some(mut dx) = self.slot(*x, grads) {
                    for ((d, g), v) in dx.iter_mut().zip(&gy).zip(self.value(*x).data()) {
                        if *v > 0.0 {
                            *d += g;
                        }
                    }
                    grads[x.0] = Some(dx);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(mut d) = self.slot(v, grads) {
                        d.iter_mut().zip(&gy).for_each(|(p, q)| *p += q);
                        grads[v.0] = Some(d);
                    }
                }
            }
            Op::Mul(a, b) => {
                for (v, other) in [(*a, *b), (*b, *a)] {
                    if let Some(mut d) = self.slot(v, grads) {
                        for ((p, g), o) in d.iter_mut().zip(&gy).zip(self.value(other).data()) {
                            *p += g * o;
                        }
                        grads[v.0] = Some(d);
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(mut dx) = self.slot(*x, grads) {
                    dx.iter_mut().for_each(|d| *d += gy[0]);
                    grads[x.0] = Some(dx);
                }
            }
            Op::AvgPool2(x) => {
                if let Some(mut dx) = self.slot(*x, grads) {
                    let s = &self.value(*x).shape;
                    let (h, w) = (s[2], s[3]);
                    let (ho, wo) = (h / 2, w / 2);
                    for (d, g) in dx.chunks_exact_mut(h * w).zip(gy.chunks_exact(ho * wo)) {
                        for i in 0..ho {
                            for j in 0..wo {
                                let v = 0.25 * g[i * wo + j];
                                let r0 = 2 * i * w + 2 * j;
                                d[r0] += v;
                                d[r0 + 1] += v;
                                d[r0 + w] += v;
                                d[r0 + w + 1] += v;
                            }
                        }
                    }
                    grads[x.0] = Some(dx);
                }
            }
            Op::GlobalAvgPool(x) => {
                if let Some(mut dx) = self.slot(*x, grads) {
                    let s = &self.value(*x).shape;
                    let plane = s[2] * s[3];
                    for (d, g) in dx.chunks_exact_mut(plane).zip(&gy) {
                        let v = g / plane as f64;
                        d.iter_mut().for_each(|p| *p += v);
                    }
                    grads[x.0] = Some(dx);
                }
            }
            Op::Linear { x, w, b } => {
                let (n, f) = (self.value(*x).shape[0], self.value(*x).shape[1]);
                let gd = self.value(*w).shape[1];
                if let Some(mut dx) = self.slot(*x, grads) {
                    kernels::gemm(n, gd, f, &gy, false, self.value(*w).data(), true, &mut dx, true);
                    grads[x.0] = Some(dx);
                }
                if let Some(mut dw) = self.slot(*w, grads) {
                    kernels::gemm(f, n, gd, self.value(*x).data(), true, &gy, false, &mut dw, true);
                    grads[w.0] = Some(dw);
                }
                if let Some(mut db) = self.slot(*b, grads) {
                    for row in gy.chunks_exact(gd) {
                        db.iter_mut().zip(row).for_each(|(p, q)| *p += q);
                    }
                    grads[b.0] = Some(db);
                }
            }
            Op::SoftArgmax {
                h,
                probs,
                out_width,
                out_height,
            } => {
                if let Some(mut dh) = self.slot(*h, grads) {
                    let s = &self.value(*h).shape;
                    let (hh, ww) = (s[2], s[3]);
                    let plane = hh * ww;
                    for (i, (d, p)) in dh.chunks_exact_mut(plane).zip(probs.chunks_exact(plane)).enumerate() {
                        let (gx, gyy) = (gy[2 * i], gy[2 * i + 1]);
                        let (ex, ey) = (node.value.data[2 * i], node.value.data[2 * i + 1]);
                        for r in 0..hh {
                            let cy = (r as f64 + 0.5) / hh as f64 * out_height;
                            for col in 0..ww {
                                let cx = (col as f64 + 0.5) / ww as f64 * out_width;
                                let k = r * ww + col;
                                d[k] += p[k] * (gx * (cx - ex) + gyy * (cy - ey));
                            }
                        }
                    }
                    grads[h.0] = Some(dh);
                }
            }
            Op::BceWithLogits { logits, labels } => {
                if let Some(mut dl) = self.slot(*logits, grads) {
                    let n = labels.len() as f64;
                    for ((d, l), c) in dl.iter_mut().zip(self.value(*logits).data()).zip(labels) {
                        *d += gy[0] * (loss::sigmoid(*l) - c) / n;
                    }
                    grads[logits.0] = Some(dl);
                }
            }
            Op::MaskedSmoothL1 { pred, target, mask } => {
                if let Some(mut dp) = self.slot(*pred, grads) {
                    let n = mask.len();
                    let dim = target.len() / n.max(1);
                    let scale = gy[0] / (n * dim) as f64;
                    let s = self.value(*pred).data();
                    for i in 0..n {
                        for j in 0..dim {
                            let k = i * dim + j;
                            dp[k] += mask[i] * scale * loss::smooth_l1_slope(s[k] - target[k]);
                        }
                    }
                    grads[pred.0] = Some(dp);
                }
            }
        }
    }

    /// Takes the gradient buffer for `v` (zeroed on first touch), or `None`
    /// when `v` does not need a gradient.
    fn slot(&self, v: Var, grads: &mut [Option<Vec<f64>>]) -> Option<Vec<f64>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        Some(grads[v.0].take().unwrap_or_else(|| vec![0.0; self.nodes[v.0].value.len()]))
    }
}

fn restore<const K: usize>(grads: &mut [Option<Vec<f64>>], slots: [(Var, Option<Vec<f64>>); K]) {
    for (v, g) in slots {
        if g.is_some() {
            grads[v.0] = g;
        }
    }
}

fn check_bias(op: &'static str, t: &Tensor, channels: usize) -> Result<()> {
    if t.shape != [channels] {
        return Err(Error::shape(
            op,
            format!("per-channel vector must have shape [{channels}], got {:?}", t.shape),
        ));
    }
    Ok(())
}

fn dims2(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match *t.shape.as_slice() {
        [a, b] => Ok((a, b)),
        _ => Err(Error::shape(op, format!("expected a 2-d tensor, got {:?}", t.shape))),
    }
}
