//! Independent scalar references shared by the oracle tests and the
//! acceptance suite. Nothing here calls the code paths it checks.
#![allow(dead_code)]

use istd_core::network::*;
use istd_core::tensor::{BatchNorm, ConvKernel, ConvMode};
use istd_core::Tensor;
use rand::RngExt;
use rand_pcg::Pcg32;

pub fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn rvec(rng: &mut Pcg32, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn rbn(rng: &mut Pcg32, c: usize) -> BatchNorm {
    BatchNorm {
        gamma: rvec(rng, c, 0.5, 1.5),
        beta: rvec(rng, c, -0.5, 0.5),
        running_mean: rvec(rng, c, -0.5, 0.5),
        running_var: rvec(rng, c, 0.5, 2.0),
        epsilon: 1e-5,
    }
}

pub fn rtensor(rng: &mut Pcg32, h: usize, w: usize, c: usize) -> Tensor {
    Tensor::from_fn(h, w, c, |_, _, _| rng.random_range(-1.0f32..1.0))
}

pub fn bn_s(p: &BatchNorm, ch: usize, x: f64) -> f64 {
    p.gamma[ch] as f64 * (x - p.running_mean[ch] as f64) / (p.running_var[ch] as f64 + p.epsilon as f64).sqrt()
        + p.beta[ch] as f64
}

/// `W · v (+ b)` with `W` stored `[out][in]`.
pub fn dense_s(w: &[f32], b: Option<&[f32]>, v: &[f64], out: usize) -> Vec<f64> {
    let n = v.len();
    (0..out)
        .map(|o| b.map_or(0.0, |b| b[o] as f64) + (0..n).map(|i| w[o * n + i] as f64 * v[i]).sum::<f64>())
        .collect()
}

pub fn pixel(t: &Tensor, r: usize, c: usize) -> Vec<f64> {
    t.pixel(r, c).iter().map(|&v| v as f64).collect()
}

pub fn top_down_s(y: &Tensor, p: &TopDownParams) -> Vec<f64> {
    let (h, w, c) = y.shape();
    let mut gap = vec![0.0; c];
    for r in 0..h {
        for col in 0..w {
            for (ch, v) in pixel(y, r, col).into_iter().enumerate() {
                gap[ch] += v / (h * w) as f64;
            }
        }
    }
    let hid = p.fc1.out_channels();
    let a: Vec<f64> = dense_s(p.fc1.weights(), None, &gap, hid)
        .iter()
        .enumerate()
        .map(|(i, &v)| bn_s(&p.bn1, i, v).max(0.0))
        .collect();
    dense_s(p.fc2.weights(), None, &a, c)
        .iter()
        .enumerate()
        .map(|(i, &v)| sig(bn_s(&p.bn2, i, v)))
        .collect()
}

pub fn bottom_up_s(x: &Tensor, p: &BottomUpParams, r: usize, col: usize) -> Vec<f64> {
    let c = x.channels();
    let hid = p.pw1.out_channels();
    let a: Vec<f64> = dense_s(p.pw1.weights(), None, &pixel(x, r, col), hid)
        .iter()
        .enumerate()
        .map(|(i, &v)| bn_s(&p.bn1, i, v).max(0.0))
        .collect();
    dense_s(p.pw2.weights(), None, &a, c)
        .iter()
        .enumerate()
        .map(|(i, &v)| sig(bn_s(&p.bn2, i, v)))
        .collect()
}

/// Zero-padded correlation of channel `i` of `x` with a `k×k` plane.
pub fn corr_s(x: &Tensor, plane: impl Fn(usize, usize) -> f64, k: usize, i: usize, r: usize, c: usize) -> f64 {
    let half = (k / 2) as isize;
    let mut acc = 0.0;
    for ky in 0..k {
        for kx in 0..k {
            let yy = r as isize + ky as isize - half;
            let xx = c as isize + kx as isize - half;
            if yy >= 0 && xx >= 0 && (yy as usize) < x.height() && (xx as usize) < x.width() {
                acc += plane(ky, kx) * x.at(yy as usize, xx as usize, i) as f64;
            }
        }
    }
    acc
}

pub fn embed_s(cp2: &Tensor, p: &ChkimParams) -> Vec<Vec<f64>> {
    let (h, w, c) = cp2.shape();
    let dw = &p.embed_dw;
    let mut out = Vec::new();
    for r in 0..h {
        for col in 0..w {
            let d: Vec<f64> = (0..c)
                .map(|i| {
                    dw.bias().unwrap()[i] as f64 + corr_s(cp2, |ky, kx| dw.weight(i, i, ky, kx) as f64, 3, i, r, col)
                })
                .collect();
            out.push(dense_s(p.embed_pw.weights(), p.embed_pw.bias(), &d, c));
        }
    }
    out
}

pub fn random_chkim(rng: &mut Pcg32, c: usize) -> ChkimParams {
    let (td, bu) = (c / 4, c / 4);
    ChkimParams {
        embed_dw: ConvKernel::depthwise(3, c, rvec(rng, c * 9, -0.5, 0.5), Some(rvec(rng, c, -0.2, 0.2))).unwrap(),
        embed_pw: ConvKernel::pointwise(c, c, rvec(rng, c * c, -0.5, 0.5), Some(rvec(rng, c, -0.2, 0.2))).unwrap(),
        top_down: TopDownParams {
            fc1: ConvKernel::pointwise(c, td, rvec(rng, c * td, -1.0, 1.0), None).unwrap(),
            bn1: rbn(rng, td),
            fc2: ConvKernel::pointwise(td, c, rvec(rng, c * td, -1.0, 1.0), None).unwrap(),
            bn2: rbn(rng, c),
        },
        bottom_up: BottomUpParams {
            pw1: ConvKernel::pointwise(c, bu, rvec(rng, c * bu, -1.0, 1.0), None).unwrap(),
            bn1: rbn(rng, bu),
            pw2: ConvKernel::pointwise(bu, c, rvec(rng, c * bu, -1.0, 1.0), None).unwrap(),
            bn2: rbn(rng, c),
        },
    }
}

pub fn close(a: f32, b: f64, tol: f64) -> bool {
    (a as f64 - b).abs() <= tol
}

pub fn random_dafwm(rng: &mut Pcg32, c: usize) -> DafwmParams {
    let hid = c / 4;
    DafwmParams {
        fc1: ConvKernel::pointwise(c, hid, rvec(rng, c * hid, -1.0, 1.0), Some(rvec(rng, hid, -0.2, 0.2))).unwrap(),
        fc2: ConvKernel::pointwise(hid, c, rvec(rng, c * hid, -1.0, 1.0), Some(rvec(rng, c, -0.2, 0.2))).unwrap(),
        spatial: ConvKernel::general(7, 2, 1, rvec(rng, 98, -0.3, 0.3), Some(rvec(rng, 1, -0.2, 0.2))).unwrap(),
    }
}

pub fn dafwm_s(g: &Tensor, p: &DafwmParams) -> Vec<f64> {
    let (h, w, c) = g.shape();
    let hid = p.fc1.out_channels();
    let mut gmax = vec![f64::NEG_INFINITY; c];
    let mut gavg = vec![0.0; c];
    for r in 0..h {
        for col in 0..w {
            for (ch, v) in pixel(g, r, col).into_iter().enumerate() {
                gmax[ch] = gmax[ch].max(v);
                gavg[ch] += v / (h * w) as f64;
            }
        }
    }
    let mlp = |v: &[f64]| {
        let a: Vec<f64> = dense_s(p.fc1.weights(), p.fc1.bias(), v, hid)
            .into_iter()
            .map(|x| x.max(0.0))
            .collect();
        dense_s(p.fc2.weights(), p.fc2.bias(), &a, c)
    };
    let (m1, m2) = (mlp(&gmax), mlp(&gavg));
    let mc: Vec<f64> = (0..c).map(|i| sig(m1[i] + m2[i])).collect();
    let desc = Tensor::from_fn(h, w, 2, |r, col, i| {
        let px = pixel(g, r, col);
        if i == 0 {
            px.iter().cloned().fold(f64::NEG_INFINITY, f64::max) as f32
        } else {
            (px.iter().sum::<f64>() / c as f64) as f32
        }
    });
    let mut out = Vec::new();
    for r in 0..h {
        for col in 0..w {
            let s = p.spatial.bias().unwrap()[0] as f64
                + (0..2)
                    .map(|i| corr_s(&desc, |ky, kx| p.spatial.weight(0, i, ky, kx) as f64, 7, i, r, col))
                    .sum::<f64>();
            let ms = sig(s);
            for ch in 0..c {
                out.push(mc[ch] * ms * g.at(r, col, ch) as f64);
            }
        }
    }
    out
}

/// Textbook nested-loop correlation with explicit padding.
pub fn conv_oracle(x: &Tensor, k: &ConvKernel, pad: usize, replicate: bool) -> Tensor {
    let (h, w, cin) = x.shape();
    let n = k.k();
    let (oh, ow) = (h + 2 * pad + 1 - n, w + 2 * pad + 1 - n);
    Tensor::from_fn(oh, ow, k.out_channels(), |r, c, o| {
        let mut acc = k.bias().map_or(0.0, |b| b[o] as f64);
        for i in 0..cin {
            for ky in 0..n {
                for kx in 0..n {
                    let yy = (r + ky) as isize - pad as isize;
                    let xx = (c + kx) as isize - pad as isize;
                    let v = if yy >= 0 && xx >= 0 && yy < h as isize && xx < w as isize {
                        x.at(yy as usize, xx as usize, i)
                    } else if replicate {
                        x.at(
                            yy.clamp(0, h as isize - 1) as usize,
                            xx.clamp(0, w as isize - 1) as usize,
                            i,
                        )
                    } else {
                        0.0
                    };
                    acc += k.weight(o, i, ky, kx) as f64 * v as f64;
                }
            }
        }
        acc as f32
    })
}

pub fn random_kernel(rng: &mut Pcg32, mode: ConvMode, k: usize, cin: usize, cout: usize) -> ConvKernel {
    let n = match mode {
        ConvMode::General => cout * cin * k * k,
        ConvMode::Depthwise => cin * k * k,
        ConvMode::Pointwise => cout * cin,
    };
    let weights = (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let bias = rng
        .random::<bool>()
        .then(|| (0..cout).map(|_| rng.random_range(-1.0f32..1.0)).collect());
    ConvKernel::new(k, cin, cout, mode, weights, bias).unwrap()
}
