//! Acceptance gate: runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any criterion fails.

#[path = "../../core/tests/support/reference.rs"]
mod reference;

use std::f64::consts::SQRT_2;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use istd_cli::roc_csv;
use istd_core::baselines::{mpcm, top_hat, StructuringElement, DEFAULT_MPCM_SCALES, DEFAULT_TOP_HAT_RADIUS};
use istd_core::io::{decode, encode, load_weights, save_weights};
use istd_core::metrics::{confusion, pd_fa, pixel_metrics, roc_curve, threshold_grid, Mask, DEFAULT_MATCH_RADIUS};
use istd_core::network::{bottom_up_gate, chkim_fuse, dafwm, top_down_gate, CspeNet, NetConfig, LEVELS};
use istd_core::scpem::{extract_cp1, gradient_magnitude, GdKernelBank, SigmaRule};
use istd_core::synthgen::{make_suite, SuiteKind};
use istd_core::tensor::{conv2d, ConvMode, Padding};
use istd_core::weights::WeightStore;
use istd_core::Tensor;
use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg32;
use reference::*;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn bank() -> GdKernelBank {
    GdKernelBank::standard(SigmaRule::default()).unwrap()
}

fn random_image(rng: &mut Pcg32, h: usize, w: usize) -> Tensor {
    Tensor::from_fn(h, w, 1, |_, _, _| rng.random::<f32>())
}

fn max_abs(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (*x as f64 - *y as f64).abs())
        .fold(0.0, f64::max)
}

fn c01_conv_oracle() -> Verdict {
    let mut rng = Pcg32::seed_from_u64(1001);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for case in 0..200 {
        let k = [1, 3, 5, 7][case % 4];
        let (h, w) = (rng.random_range(k..=16), rng.random_range(k..=16));
        let cin = rng.random_range(1..=3);
        let mode = match (k, case % 3) {
            (1, 0) => ConvMode::Pointwise,
            (_, 1) => ConvMode::Depthwise,
            _ => ConvMode::General,
        };
        let cout = if mode == ConvMode::Depthwise {
            cin
        } else {
            rng.random_range(1..=3)
        };
        let x = Tensor::from_fn(h, w, cin, |_, _, _| rng.random_range(-1.0f32..1.0));
        let kern = random_kernel(&mut rng, mode, k, cin, cout);
        let pad = rng.random_range(0..=k / 2);
        let got = conv2d(&x, &kern, Padding::Zero(pad)).unwrap();
        worst = worst.max(max_abs(&got, &conv_oracle(&x, &kern, pad, false)));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-6 && secs < 5.0,
        format!("200 cases, max |Δ| = {worst:.2e} (≤ 1e-6), {secs:.3} s (< 5 s)"),
    )
}

fn c02_kernel_analytics() -> Verdict {
    let b = bank();
    let (mut sum, mut anti, mut lin) = (0.0f64, 0.0f64, 0.0f64);
    let mut count = 0;
    for kern in b.kernels() {
        count += 1;
        sum = sum.max(kern.grid().iter().map(|&v| v as f64).sum::<f64>().abs());
        let r = (kern.k() / 2) as isize;
        for y in -r..=r {
            for x in -r..=r {
                anti = anti.max((kern.at(x, y) as f64 + kern.at(-x, -y) as f64).abs());
            }
        }
    }
    // orientations are 15° apart: index 3 is 45°, index 6 is 90°
    for s in 0..b.scales() {
        let (g0, g45, g90) = (b.primary(s, 0), b.primary(s, 3), b.primary(s, 6));
        for i in 0..g0.grid().len() {
            let want = (g0.grid()[i] as f64 + g90.grid()[i] as f64) / SQRT_2;
            lin = lin.max((g45.grid()[i] as f64 - want).abs());
        }
    }
    verdict(
        sum <= 1e-6 && anti <= 1e-6 && lin <= 1e-6,
        format!(
            "{count} kernels, max |sum| = {sum:.2e}, antisymmetry {anti:.2e}, 45° linearity {lin:.2e} (all ≤ 1e-6)"
        ),
    )
}

fn c03_orthogonal_pairs() -> Verdict {
    let b = bank();
    let mut rng = Pcg32::seed_from_u64(1003);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let img = random_image(&mut rng, 32, 32);
        for s in 0..b.scales() {
            let m = gradient_magnitude(&img, &b, s).unwrap();
            let n = m.channels();
            for px in m.data().chunks(n) {
                for o in 0..n {
                    worst = worst.max((px[o] as f64 - px[(o + n / 4) % n] as f64).abs());
                }
            }
        }
    }
    verdict(
        worst <= 1e-6,
        format!("20 images × 3 scales × 24 channels, max |m(θ) − m(θ+90°)| = {worst:.2e}"),
    )
}

fn c04_cp1_localization() -> Verdict {
    let start = Instant::now();
    let b = bank();
    let suite = make_suite(SuiteKind::Localization, 100, 7).unwrap();
    let min_snr = suite.iter().map(|s| s.snr).fold(f64::INFINITY, f64::min);
    let hits = suite
        .iter()
        .filter(|s| {
            let (r, c) = extract_cp1(&s.scene.image, &b).unwrap().argmax(0);
            let (tr, tc) = s.spec.targets[0].center;
            (r as f64 - tr).hypot(c as f64 - tc) <= 3.0
        })
        .count();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        hits >= 95 && min_snr >= 4.0 && secs < 30.0,
        format!("{hits}/100 argmax within 3 px (≥ 95), min SNR {min_snr:.2}, {secs:.2} s (< 30 s)"),
    )
}

fn c05_cp1_scale_invariance() -> Verdict {
    let b = bank();
    let mut worst = 0.0f64;
    for s in make_suite(SuiteKind::Localization, 20, 5).unwrap() {
        let base = extract_cp1(&s.scene.image, &b).unwrap();
        for c in [0.5f32, 2.0] {
            worst = worst.max(max_abs(&base, &extract_cp1(&s.scene.image.scale(c), &b).unwrap()));
        }
    }
    verdict(
        worst <= 1e-6,
        format!("20 scenes, c ∈ {{0.5, 2}}, max |Δ| = {worst:.2e} (≤ 1e-6)"),
    )
}

fn c06_zero_weights() -> Verdict {
    let b = bank();
    let mut rng = Pcg32::seed_from_u64(1006);
    let mut bad = 0usize;
    let mut total = 0usize;
    for c in [8, 16] {
        let cfg = NetConfig::new(c);
        let net = CspeNet::from_store(&WeightStore::zeros(&cfg.layout().unwrap()), cfg).unwrap();
        let inputs = [
            Tensor::zeros(64, 64, 1),
            Tensor::filled(32, 48, 1, 0.7),
            random_image(&mut rng, 64, 64),
            random_image(&mut rng, 16, 32).map(|v| v * 1000.0),
        ];
        for img in &inputs {
            let out = net.forward(img, &b).unwrap();
            total += out.data().len();
            bad += out.data().iter().filter(|&&v| v != 0.5).count();
        }
    }
    verdict(
        bad == 0,
        format!("{total} output pixels over 8 forwards, {bad} differ from exactly 0.5"),
    )
}

fn c07_block_oracles() -> Verdict {
    let mut rng = Pcg32::seed_from_u64(1007);
    let (mut td, mut bu, mut ck, mut dw) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for draw in 0..50 {
        let c = [4, 8][draw % 2];
        let (h, w) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let p = random_chkim(&mut rng, c);
        let f = rtensor(&mut rng, h, w, c);
        let cp2 = rtensor(&mut rng, h, w, c);

        let g = top_down_gate(&f, &p.top_down).unwrap();
        let td_ref = top_down_s(&f, &p.top_down);
        for ch in 0..c {
            td = td.max((g.at(0, 0, ch) as f64 - td_ref[ch]).abs());
        }
        let g = bottom_up_gate(&f, &p.bottom_up).unwrap();
        for r in 0..h {
            for col in 0..w {
                for (ch, want) in bottom_up_s(&f, &p.bottom_up, r, col).into_iter().enumerate() {
                    bu = bu.max((g.at(r, col, ch) as f64 - want).abs());
                }
            }
        }
        let k = chkim_fuse(&f, &cp2, &p).unwrap();
        let e = embed_s(&cp2, &p);
        let e_t = Tensor::from_fn(h, w, c, |r, col, ch| e[r * w + col][ch] as f32);
        for r in 0..h {
            for col in 0..w {
                let gate = bottom_up_s(&e_t, &p.bottom_up, r, col);
                for ch in 0..c {
                    let want = td_ref[ch] * e[r * w + col][ch] + gate[ch] * f.at(r, col, ch) as f64;
                    ck = ck.max((k.at(r, col, ch) as f64 - want).abs());
                }
            }
        }
        let dp = random_dafwm(&mut rng, c);
        let gin = rtensor(&mut rng, h, w, c).map(|v| v.max(0.0));
        for (a, want) in dafwm(&gin, &dp).unwrap().data().iter().zip(dafwm_s(&gin, &dp)) {
            dw = dw.max((*a as f64 - want).abs());
        }
    }
    let worst = td.max(bu).max(ck).max(dw);
    verdict(
        worst <= 1e-5,
        format!("50 draws, max |Δ|: topDown {td:.1e}, bottomUp {bu:.1e}, chkim {ck:.1e}, dafwm {dw:.1e} (≤ 1e-5)"),
    )
}

fn c08_shape_laws() -> Verdict {
    let b = bank();
    let mut rng = Pcg32::seed_from_u64(1008);
    let mut failures = Vec::new();
    let mut checked = 0;
    for c in [8, 16] {
        let cfg = NetConfig::new(c);
        let net = CspeNet::from_store(&WeightStore::seeded(&cfg.layout().unwrap(), 8), cfg).unwrap();
        for n in [64, 128, 256] {
            let t = net.forward_trace(&random_image(&mut rng, n, n), &b).unwrap();
            for i in 0..LEVELS {
                let want = (n >> i, n >> i, (i + 1) * c);
                for (name, got) in [
                    ("f", t.features.f[i].shape()),
                    ("cp2", t.priors.cp2[i].shape()),
                    ("k", t.features.k[i].shape()),
                ] {
                    checked += 1;
                    if got != want {
                        failures.push(format!("{name}_{i} at {n}², C={c}: {got:?} ≠ {want:?}"));
                    }
                }
            }
            checked += 1;
            let in_range = t.output.data().iter().all(|&v| (0.0..=1.0).contains(&v));
            if t.output.shape() != (n, n, 1) || !in_range {
                failures.push(format!(
                    "output at {n}², C={c}: {:?}, in [0,1]: {in_range}",
                    t.output.shape()
                ));
            }
        }
    }
    let detail = if failures.is_empty() {
        format!("{checked} shape checks over 64², 128², 256² × C ∈ {{8, 16}}")
    } else {
        failures.join("; ")
    };
    verdict(failures.is_empty(), detail)
}

fn c09_metrics_fixtures() -> Verdict {
    // gt = {(0,0),(0,1)}, pred = {(0,1),(0,2)}: tp 1, fp 1, fn 1
    let gt = Mask::from_fn(3, 3, |r, c| r == 0 && c < 2);
    let pred = Mask::from_fn(3, 3, |r, c| r == 0 && c > 0);
    let m = pixel_metrics(&confusion(&pred, &gt).unwrap());
    let one = Mask::from_fn(256, 256, |r, c| (r, c) == (100, 7));
    let fa = pd_fa(&one, &Mask::new(256, 256), DEFAULT_MATCH_RADIUS).unwrap().fa();
    verdict(
        m.iou == 1.0 / 3.0 && m.f1 == 0.5 && fa == 15.2587890625e-6,
        format!(
            "IoU = {} (1/3), F1 = {} (0.5), Fa = {fa:e} (1.52587890625e-5)",
            m.iou, m.f1
        ),
    )
}

fn c10_roc_monotone() -> Verdict {
    let b = bank();
    let suite = make_suite(SuiteKind::Roc, 20, 7).unwrap();
    let gts: Vec<Mask> = suite.iter().map(|s| s.scene.mask.clone()).collect();
    let ts = threshold_grid(101);
    let se = StructuringElement::disk(DEFAULT_TOP_HAT_RADIUS);
    let mut notes = Vec::new();
    let mut pass = true;
    let methods: [(&str, &dyn Fn(&Tensor) -> Tensor); 3] = [
        ("CP1", &|x| extract_cp1(x, &b).unwrap()),
        ("Top-hat", &|x| top_hat(x, &se).unwrap()),
        ("MPCM", &|x| mpcm(x, &DEFAULT_MPCM_SCALES).unwrap()),
    ];
    for (name, score) in methods {
        let scores: Vec<Tensor> = suite.iter().map(|s| score(&s.scene.image)).collect();
        let curve = roc_curve(&scores, &gts, &ts, DEFAULT_MATCH_RADIUS).unwrap();
        let csv = roc_csv(&curve);
        let rows = csv.lines().skip(1).count();
        let monotone = curve.is_monotone();
        pass &= monotone && rows == 101;
        notes.push(format!("{name}: monotone {monotone}, {rows} rows"));
    }
    verdict(pass, notes.join("; "))
}

fn c11_ablation_direction() -> Verdict {
    let b = bank();
    let suite = make_suite(SuiteKind::Localization, 100, 7).unwrap();
    let gts: Vec<Mask> = suite.iter().map(|s| s.scene.mask.clone()).collect();
    let ts = threshold_grid(101);
    let se = StructuringElement::disk(DEFAULT_TOP_HAT_RADIUS);
    let cp1: Vec<Tensor> = suite.iter().map(|s| extract_cp1(&s.scene.image, &b).unwrap()).collect();
    let th: Vec<Tensor> = suite.iter().map(|s| top_hat(&s.scene.image, &se).unwrap()).collect();
    let cp1_curve = roc_curve(&cp1, &gts, &ts, DEFAULT_MATCH_RADIUS).unwrap();
    let th_curve = roc_curve(&th, &gts, &ts, DEFAULT_MATCH_RADIUS).unwrap();
    let (pd_cp1, pd_th) = (cp1_curve.pd_at_fa(1e-4), th_curve.pd_at_fa(1e-4));
    let min_fa = cp1_curve.samples.iter().map(|s| s.fa).fold(f64::INFINITY, f64::min);
    verdict(
        pd_cp1 >= pd_th,
        format!(
            "Pd@Fa≤1e-4: CP1 {pd_cp1:.3} vs Top-hat {pd_th:.3} (need CP1 ≥ Top-hat); \
             lowest CP1 Fa on the grid {min_fa:.2e}, CP1 Pd@1e-3 {:.3}",
            cp1_curve.pd_at_fa(1e-3)
        ),
    )
}

fn c12_determinism_and_format() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();

    let cfg = NetConfig::new(16);
    let store = WeightStore::seeded(&cfg.layout().unwrap(), 12);
    let (w1, w2) = (root.join("a.cspw"), root.join("b.cspw"));
    save_weights(&store, &w1).unwrap();
    save_weights(&load_weights(&w1).unwrap(), &w2).unwrap();
    let bytes = fs::read(&w1).unwrap();
    let weights_ok = bytes == fs::read(&w2).unwrap() && encode(&decode(&bytes).unwrap()).unwrap() == bytes;

    let ds = root.join("ds");
    let run = |args: &[&str]| istd_cli::run(std::iter::once("istd").chain(args.iter().copied()));
    let mut eval_ok = run(&[
        "synth",
        "--out",
        &s(&ds),
        "--family",
        "roc",
        "--count",
        "8",
        "--seed",
        "12",
    ]) == 0;
    let mut reports = Vec::new();
    for threads in ["1", "4"] {
        let out = root.join(format!("eval-{threads}"));
        eval_ok &= run(&[
            "eval",
            "--input",
            &s(&ds),
            "--method",
            "net",
            "--weights",
            &s(&w1),
            "--out",
            &s(&out),
            "--threads",
            threads,
        ]) == 0;
        reports.push((
            fs::read(out.join("report.json")).unwrap_or_default(),
            fs::read(out.join("report.csv")).unwrap_or_default(),
        ));
    }
    eval_ok &= !reports[0].0.is_empty() && reports[0] == reports[1];

    let net = CspeNet::from_store(&store, cfg).unwrap();
    let b = bank();
    let img = random_image(&mut Pcg32::seed_from_u64(1012), 64, 64);
    let start = Instant::now();
    let out = net.forward(&img, &b).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let timing_ok = secs < 2.0 && out.shape() == (64, 64, 1);

    verdict(
        weights_ok && eval_ok && timing_ok,
        format!(
            "weight round trip byte-identical: {weights_ok}; eval report 1 vs 4 threads byte-identical: {eval_ok}; \
             64×64 C=16 forward {secs:.3} s (< 2 s)"
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 12] = [
        ("convolution oracle", c01_conv_oracle),
        ("kernel analytics", c02_kernel_analytics),
        ("orthogonal-pair symmetry", c03_orthogonal_pairs),
        ("CP1 localization", c04_cp1_localization),
        ("CP1 scale invariance", c05_cp1_scale_invariance),
        ("zero-weight forcing", c06_zero_weights),
        ("block oracles", c07_block_oracles),
        ("shape laws", c08_shape_laws),
        ("metrics fixtures", c09_metrics_fixtures),
        ("ROC monotonicity", c10_roc_monotone),
        ("ablation direction", c11_ablation_direction),
        ("determinism & format", c12_determinism_and_format),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        if !v.pass {
            failed += 1;
        }
        println!(
            "{} [{:>2}] {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
