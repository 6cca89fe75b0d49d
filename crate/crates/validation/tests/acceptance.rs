//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Expected values come from closed-form
//! formulas and finite differences, not from the code under test.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uwimg_cli::commands::{cmd_synthesize, SynthesizeOpts};
use uwimg_cli::table::ComparisonTable;
use uwimg_cli::timing::{REFERENCE_TIMINGS, GPU_CAVEAT};
use uwimg_core::dataset::{DatasetManifest, GenerationConfig, MANIFEST_FILE};
use uwimg_core::imaging::{synthesize_improved, synthesize_legacy};
use uwimg_core::io::{read_depth16, read_rgb8, write_depth16, write_rgb8};
use uwimg_core::losses::evaluate;
use uwimg_core::metrics::{mse, psnr, ssim_index, uicm, uiconm, uiqm_combine, uism};
use uwimg_core::restoration::{
    analytic_invert, equalize_hist, gray_world_balance, invert_by_gradient_descent, InversionConfig,
};
use uwimg_core::{DepthMap, Image, LossKind, LossSpec, WaterParams, WaterType};
use uwimg_validation::{
    depth_ramp, fd_check, improved_oracle, max_abs, rand_image, scene, synthetic_set, Pair,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn c1_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut min_t = f64::INFINITY;
    for _ in 0..100 {
        let j = rand_image(&mut rng, 64, 64, 0.0, 0.5);
        let d = DepthMap::from_fn(64, 64, |_, _| rng.gen_range(0.0..5.0)).unwrap();
        let mut beta: [f64; 3] = [rng.gen_range(0.0..0.55), rng.gen_range(0.0..0.55), rng.gen_range(0.0..0.55)];
        beta.sort_by(|a, b| b.total_cmp(a));
        let a = [rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5)];
        let p = WaterParams::new(beta, a, rng.gen_range(0.1..3.0)).unwrap();
        min_t = min_t.min((-beta[0] * d.min_max().1).exp());
        let obs = synthesize_improved(&j, &d, &p).unwrap();
        let inv = analytic_invert(&obs, &d, &p, &InversionConfig::default()).unwrap();
        worst = worst.max(max_abs(inv.unclamped.data(), j.data()));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-6 && secs < 5.0 && min_t > 0.05,
        format!("max |J - J_hat| = {worst:.3e} (< 1e-6), min T = {min_t:.3}, {secs:.2} s (< 5 s)"),
    )
}

fn c2_reductions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_scatter = 0.0f64;
    let mut identity_ok = true;
    for _ in 0..1000 {
        let j = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
        let a = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
        let beta = [rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)];
        let d: f64 = rng.gen_range(0.0..10.0);
        let px = Image::uniform(1, 1, j).unwrap();
        let no_scatter = WaterParams::new(beta, a, 0.0).unwrap();
        let out = synthesize_improved(&px, &DepthMap::filled(1, 1, d).unwrap(), &no_scatter).unwrap();
        for c in 0..3 {
            let want = j[c] * (-beta[c] * d).exp();
            worst_scatter = worst_scatter.max((out.data()[c] - want).abs());
        }
        let p = WaterParams::new(beta, a, rng.gen_range(0.0..3.0)).unwrap();
        let zero = DepthMap::filled(1, 1, 0.0).unwrap();
        identity_ok &= synthesize_improved(&px, &zero, &p).unwrap() == px;
        identity_ok &= synthesize_legacy(&px, &zero, &p).unwrap() == px;
    }
    outcome(
        worst_scatter <= f64::EPSILON && identity_ok,
        format!("alpha=0 vs J*T max diff {worst_scatter:.1e} (<= eps), d=0 identity exact: {identity_ok}"),
    )
}

fn c3_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = rand_image(&mut rng, 32, 32, 0.0, 1.0);
    let g = r.map(|v| (v + rng.gen_range(-0.2..0.2)).clamp(0.0, 1.0)).unwrap();
    let picks: Vec<usize> = (0..96).map(|_| rng.gen_range(0..g.data().len())).collect();
    let mut fails = Vec::new();
    let mut parts = Vec::new();
    for kind in LossKind::ALL {
        let tol = match kind {
            LossKind::Ssim | LossKind::MsSsim | LossKind::L1Ssim | LossKind::L1MsSsim => 1e-3,
            _ => 1e-4,
        };
        let (err, used) = fd_check(&LossSpec::new(kind), &g, &r, &picks);
        parts.push(format!("{kind}={err:.1e}"));
        if err >= tol || used < picks.len() / 2 {
            fails.push(format!("{kind} (err {err:.2e}, {used} probes)"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        fails.is_empty() && secs < 30.0,
        format!("{} in {secs:.1} s (< 30 s){}", parts.join(" "), if fails.is_empty() { String::new() } else { format!("; failing: {}", fails.join(", ")) }),
    )
}

fn c4_linearity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let r = rand_image(&mut rng, 32, 32, 0.0, 1.0);
    let g = rand_image(&mut rng, 32, 32, 0.0, 1.0);
    let l1 = evaluate(&LossSpec::new(LossKind::L1), &g, &r).unwrap();
    let mut worst_v = 0.0f64;
    let mut worst_g = 0.0f64;
    for (combined, base) in [
        (LossKind::L1L2, LossKind::L2),
        (LossKind::L1Ssim, LossKind::Ssim),
        (LossKind::L1MsSsim, LossKind::MsSsim),
        (LossKind::L1Gdl, LossKind::Gdl),
    ] {
        let spec = LossSpec::new(combined);
        assert_eq!(spec.mix_alpha, 0.8);
        let c = evaluate(&spec, &g, &r).unwrap();
        let b = evaluate(&LossSpec::new(base), &g, &r).unwrap();
        let want = 0.8 * b.value + 0.2 * l1.value;
        worst_v = worst_v.max((c.value - want).abs() / want.abs().max(1e-300));
        for i in 0..c.gradient.len() {
            let wg = 0.8 * b.gradient[i] + 0.2 * l1.gradient[i];
            let scale = wg.abs().max(b.gradient[i].abs()).max(l1.gradient[i].abs());
            if scale > 0.0 {
                worst_g = worst_g.max((c.gradient[i] - wg).abs() / scale);
            }
        }
    }
    let tol = 4.0 * f64::EPSILON;
    outcome(
        worst_v <= tol && worst_g <= tol,
        format!("mix 0.8: value rel diff {worst_v:.1e}, gradient rel diff {worst_g:.1e} (<= 4 eps)"),
    )
}

fn c5_uiqm_weights() -> Outcome {
    let a = uiqm_combine(-0.332, 7.151, 0.593);
    let b = uiqm_combine(-0.273, 7.169, 0.506);
    outcome(
        (a - 4.22).abs() <= 0.01 && (b - 3.920).abs() <= 0.01,
        format!("RealA input row -> {a:.4} (4.22 +- 0.01), RealB input row -> {b:.4} (3.920 +- 0.01)"),
    )
}

fn c6_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = [0.0f64; 5];
    for _ in 0..50 {
        let a = rand_image(&mut rng, 48, 40, 0.0, 1.0);
        worst[0] = worst[0].max((ssim_index(&a, &a).unwrap() - 1.0).abs());
        worst[1] = worst[1].max(mse(&a, &a).unwrap().abs());
        let gray = {
            let v: Vec<f64> = (0..48 * 40).map(|_| rng.gen::<f64>()).collect();
            Image::from_fn(48, 40, |x, y, _| v[y * 48 + x]).unwrap()
        };
        worst[2] = worst[2].max(uicm(&gray).unwrap().abs());
        let k = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
        let flat = Image::uniform(48, 40, k).unwrap();
        worst[3] = worst[3].max(uism(&flat).unwrap().abs());
        worst[4] = worst[4].max(uiconm(&flat).unwrap().abs());
    }
    outcome(
        worst.iter().all(|w| *w < 1e-12),
        format!(
            "50 images each: |ssim(a,a)-1| {:.1e}, mse(a,a) {:.1e}, uicm(gray) {:.1e}, uism(const) {:.1e}, uiconm(const) {:.1e}",
            worst[0], worst[1], worst[2], worst[3], worst[4]
        ),
    )
}

fn c7_descent(set: &[Pair]) -> Outcome {
    let start = Instant::now();
    let cfg = InversionConfig::with_loss(LossSpec::new(LossKind::L2));
    let psnrs: Vec<f64> = set
        .iter()
        .map(|(j, d, p, obs)| {
            let out = invert_by_gradient_descent(obs, d, p, &cfg).unwrap();
            psnr(&out.image, j, 1.0).unwrap()
        })
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let min = psnrs.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        min >= 30.0 && secs < 120.0,
        format!("{} pairs, min PSNR {min:.2} dB (>= 30), {secs:.1} s (< 120 s)", psnrs.len()),
    )
}

fn c8_ablation(set: &[Pair]) -> Outcome {
    let start = Instant::now();
    let mut table = ComparisonTable::new("loss", vec!["mse".into(), "psnr".into(), "ssim".into()]);
    let mut worst = f64::INFINITY;
    let mut failing = Vec::new();
    for kind in LossKind::ALL {
        let cfg = InversionConfig::with_loss(LossSpec::new(kind));
        let mut rows = ComparisonTable::new("image", table.columns.clone());
        let mut kind_min = f64::INFINITY;
        for (i, (j, d, p, obs)) in set.iter().enumerate() {
            match invert_by_gradient_descent(obs, d, p, &cfg) {
                Ok(out) => {
                    let m = mse(&out.image, j).unwrap();
                    let s = ssim_index(&out.image, j).unwrap();
                    kind_min = kind_min.min(s);
                    rows.push(i.to_string(), vec![Some(m), Some(psnr(&out.image, j, 1.0).unwrap()), Some(s)]);
                }
                Err(e) => {
                    kind_min = f64::NEG_INFINITY;
                    rows.push_absent(i.to_string(), e.to_string());
                }
            }
        }
        if kind_min < 0.9 {
            failing.push(format!("{kind} (min ssim {kind_min:.3})"));
        }
        worst = worst.min(kind_min);
        table.push(kind.name(), rows.means());
    }
    let secs = start.elapsed().as_secs_f64();
    println!("\n{}", table.to_markdown(None));
    outcome(
        failing.is_empty(),
        format!(
            "min per-image SSIM over all losses {worst:.4} (>= 0.9), {secs:.1} s{}",
            if failing.is_empty() { String::new() } else { format!("; failing: {}", failing.join(", ")) }
        ),
    )
}

fn write_sources(dir: &Path, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let img = scene(&mut rng, 48, 40);
        let d = depth_ramp(&mut rng, 48, 40, 0.8, 6.0);
        write_rgb8(&dir.join(format!("s{i}.png")), &img).unwrap();
        write_depth16(&dir.join(format!("s{i}_depth.png")), &d, 0.001).unwrap();
    }
}

fn c9_determinism() -> Outcome {
    let src = tempfile::tempdir().unwrap();
    write_sources(src.path(), 3, 9);
    let runs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for out in &runs {
        let opts = SynthesizeOpts {
            input_dir: src.path().to_path_buf(),
            out_dir: out.path().to_path_buf(),
            water_type: WaterType::TurbidGreen,
            ranges: None,
            enforce_order: true,
            seed: 77,
            generation: GenerationConfig {
                samples_per_pair: 2,
                width: 32,
                height: 32,
                ..Default::default()
            },
        };
        if let Err(e) = cmd_synthesize(&opts) {
            return outcome(false, format!("synthesize failed: {e}"));
        }
    }
    let bytes: Vec<Vec<u8>> = runs
        .iter()
        .map(|d| std::fs::read(d.path().join(MANIFEST_FILE)).unwrap())
        .collect();
    let identical = bytes[0] == bytes[1];

    let root = runs[0].path();
    let manifest = DatasetManifest::read_csv(&root.join(MANIFEST_FILE)).unwrap();
    let mut worst = 0.0f64;
    for e in &manifest.entries {
        let clear = read_rgb8(&root.join(&e.clear_path)).unwrap();
        let depth = read_depth16(&root.join(e.depth_path()), 0.001).unwrap();
        let stored = read_rgb8(&root.join(&e.degraded_path)).unwrap();
        let beta = [e.beta_r, e.beta_g, e.beta_b];
        let amb = [e.ambient_r, e.ambient_g, e.ambient_b];
        for y in 0..clear.height() {
            for x in 0..clear.width() {
                for c in 0..3 {
                    let want = improved_oracle(clear.get(x, y, c), depth.get(x, y), beta[c], amb[c], e.alpha)
                        .clamp(0.0, 1.0);
                    worst = worst.max((stored.get(x, y, c) - want).abs());
                }
            }
        }
    }
    outcome(
        identical && worst <= 1.0 / 255.0 && manifest.entries.len() == 6,
        format!(
            "manifests byte-identical: {identical}, {} rows, max regeneration gap {:.3}/255 (<= 1/255)",
            manifest.entries.len(),
            worst * 255.0
        ),
    )
}

fn c10_throughput() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let imgs: Vec<Image> = (0..6).map(|_| rand_image(&mut rng, 256, 256, 0.0, 1.0)).collect();
        let d = depth_ramp(&mut rng, 256, 256, 1.0, 5.0);
        let p = WaterType::CoastalGreen.nominal();
        let cfg = InversionConfig::default();
        let time = |f: &dyn Fn(&Image)| {
            f(&imgs[0]);
            let start = Instant::now();
            for img in &imgs[1..] {
                f(img);
            }
            start.elapsed().as_secs_f64() / (imgs.len() - 1) as f64
        };
        let he = time(&|i| {
            std::hint::black_box(equalize_hist(i));
        });
        let gw = time(&|i| {
            std::hint::black_box(gray_world_balance(i).unwrap());
        });
        let an = time(&|i| {
            std::hint::black_box(analytic_invert(i, &d, &p, &cfg).unwrap());
        });
        let refs: Vec<String> = REFERENCE_TIMINGS
            .iter()
            .map(|(n, s, hw)| format!("{n} {s} s on {hw}"))
            .collect();
        println!("  reference timings: {}", refs.join(", "));
        println!("  note: {GPU_CAVEAT}");
        let limit = 0.05;
        outcome(
            he < limit && gw < limit && an < limit,
            format!(
                "256x256, 1 thread: he {:.2} ms, grayworld {:.2} ms, analytic {:.2} ms (< 50 ms each)",
                he * 1e3,
                gw * 1e3,
                an * 1e3
            ),
        )
    })
}

fn main() -> ExitCode {
    // 64x64 noiseless synthetic pairs shared by the descent criteria.
    let set = synthetic_set(20, 64, 7);
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("round-trip inversion", Box::new(c1_round_trip)),
        ("model reductions", Box::new(c2_reductions)),
        ("loss gradient checks", Box::new(c3_gradients)),
        ("combination linearity", Box::new(c4_linearity)),
        ("UIQM weights", Box::new(c5_uiqm_weights)),
        ("metric identities", Box::new(c6_identities)),
        ("gradient-descent inversion quality", Box::new(|| c7_descent(&set))),
        ("loss ablation SSIM", Box::new(|| c8_ablation(&set))),
        ("dataset determinism", Box::new(c9_determinism)),
        ("classical throughput", Box::new(c10_throughput)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("{} [{:>2}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("\n{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
