//! Reference implementations that share no code with the library paths
//! they check.

/// Direct six-nested-loop convolution. `x: n×cin×h×w`, `w: cout×cin×k×k`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_loops(
    x: &[f64],
    [n, cin, h, wd]: [usize; 4],
    w: &[f64],
    [cout, _, k, _]: [usize; 4],
    b: &[f64],
    stride: usize,
    pad: usize,
) -> (Vec<f64>, [usize; 4]) {
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; n * cout * ho * wo];
    for i in 0..n {
        for co in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[co];
                    for ci in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x[((i * cin + ci) * h + iy as usize) * wd + ix as usize]
                                    * w[((co * cin + ci) * k + ky) * k + kx];
                            }
                        }
                    }
                    out[((i * cout + co) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    (out, [n, cout, ho, wo])
}

/// Expected soft-argmax coordinate by an explicit sum over cells.
pub fn soft_argmax_sum(h: &[f64], rows: usize, cols: usize, out_w: f64, out_h: f64) -> (f64, f64) {
    let z: f64 = h.iter().map(|v| v.exp()).sum();
    let mut ex = 0.0;
    let mut ey = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let p = h[r * cols + c].exp() / z;
            ex += p * (c as f64 + 0.5) * out_w / cols as f64;
            ey += p * (r as f64 + 0.5) * out_h / rows as f64;
        }
    }
    (ex, ey)
}

/// Mann–Whitney statistic by enumerating every positive/negative pair.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins2 = 0u64;
    let mut pairs = 0u64;
    for (sp, _) in scores.iter().zip(labels).filter(|(_, l)| **l) {
        for (sn, _) in scores.iter().zip(labels).filter(|(_, l)| !**l) {
            pairs += 1;
            if sp > sn {
                wins2 += 2;
            } else if sp == sn {
                wins2 += 1;
            }
        }
    }
    wins2 as f64 / 2.0 / pairs as f64
}

/// Average precision by sweeping every distinct threshold independently.
pub fn brute_force_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let pos = labels.iter().filter(|l| **l).count() as f64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let tp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && **l).count() as f64;
        let fp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && !**l).count() as f64;
        let recall = tp / pos;
        let precision = tp / (tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}
