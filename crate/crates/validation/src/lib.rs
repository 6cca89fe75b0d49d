//! Reference computations for the acceptance suite: scene generators, the
//! forward model written out pointwise, and a finite-difference gradient
//! probe that knows nothing about the analytic gradients it checks.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use uwimg_core::imaging::synthesize_improved;
use uwimg_core::losses::{evaluate, value};
use uwimg_core::{DepthMap, Image, LossSpec, WaterParams, WaterType};

/// Clear scene, range map, parameters and the observation they produce.
pub type Pair = (Image, DepthMap, WaterParams, Image);

pub fn rand_image(rng: &mut ChaCha8Rng, w: usize, h: usize, lo: f64, hi: f64) -> Image {
    Image::from_fn(w, h, |_, _, _| rng.gen_range(lo..hi)).unwrap()
}

/// Smooth random scene: a few random sinusoids per channel plus mild noise.
pub fn scene(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
    let mut waves = [[0.0f64; 4]; 3];
    for ch in waves.iter_mut() {
        *ch = [
            rng.gen_range(0.05..0.3),
            rng.gen_range(0.05..0.3),
            rng.gen_range(0.0..6.3),
            rng.gen_range(0.2..0.6),
        ];
    }
    Image::from_fn(w, h, |x, y, c| {
        let [fx, fy, ph, base] = waves[c];
        let v = base + 0.2 * (fx * x as f64 + fy * y as f64 + ph).sin()
            + 0.05 * rng.gen_range(-1.0..1.0);
        v.clamp(0.0, 1.0)
    })
    .unwrap()
}

pub fn depth_ramp(rng: &mut ChaCha8Rng, w: usize, h: usize, lo: f64, hi: f64) -> DepthMap {
    let tilt: f64 = rng.gen_range(0.0..1.0);
    DepthMap::from_fn(w, h, |x, y| {
        let u = tilt * x as f64 / w as f64 + (1.0 - tilt) * y as f64 / h as f64;
        lo + (hi - lo) * u
    })
    .unwrap()
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Improved model written out directly.
pub fn improved_oracle(j: f64, d: f64, beta: f64, a: f64, alpha: f64) -> f64 {
    let t = (-beta * d).exp();
    j * t + a * t * (1.0 - (-alpha * d).exp())
}

/// Noiseless pairs cycling through the water presets.
pub fn synthetic_set(n: usize, size: usize, seed: u64) -> Vec<Pair> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let presets = [WaterType::ClearOceanic, WaterType::CoastalGreen, WaterType::TurbidGreen];
    (0..n)
        .map(|i| {
            let r = presets[i % 3].ranges();
            let draw = |rng: &mut ChaCha8Rng, r: [f64; 2]| rng.gen_range(r[0]..=r[1]);
            let p = WaterParams::new(
                [draw(&mut rng, r.beta[0]), draw(&mut rng, r.beta[1]), draw(&mut rng, r.beta[2])],
                [draw(&mut rng, r.ambient[0]), draw(&mut rng, r.ambient[1]), draw(&mut rng, r.ambient[2])],
                draw(&mut rng, r.alpha),
            )
            .unwrap();
            let j = scene(&mut rng, size, size);
            let d = depth_ramp(&mut rng, size, size, 0.5, 4.0);
            // Scale the scene so no observed value saturates: clipped values
            // carry no information about J and no inversion could recover them.
            let mut scale = 1.0f64;
            for y in 0..size {
                for x in 0..size {
                    for c in 0..3 {
                        let dd = d.get(x, y);
                        let veil = improved_oracle(0.0, dd, p.beta[c], p.ambient[c], p.alpha);
                        let direct = j.get(x, y, c) * (-p.beta[c] * dd).exp();
                        if direct > 0.0 {
                            scale = scale.min((0.98 - veil) / direct);
                        }
                    }
                }
            }
            let j = j.map(|v| v * scale.clamp(0.0, 1.0)).unwrap();
            let obs = synthesize_improved(&j, &d, &p).unwrap();
            assert!(obs.data().iter().all(|v| *v < 0.99));
            (j, d, p, obs)
        })
        .collect()
}

/// Central differences against the analytic gradient. Entries where the
/// one-sided slopes disagree (a kink of |.|) are skipped.
pub fn fd_check(spec: &LossSpec, g: &Image, r: &Image, picks: &[usize]) -> (f64, usize) {
    let analytic = evaluate(spec, g, r).unwrap().gradient;
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let h = 1e-5;
    let f0 = value(spec, g, r).unwrap();
    let mut worst = 0.0f64;
    let mut used = 0;
    for &i in picks {
        let base = g.data()[i];
        let fp = value(spec, &g.with_value(i, base + h), r).unwrap();
        let fm = value(spec, &g.with_value(i, base - h), r).unwrap();
        let (right, left) = ((fp - f0) / h, (f0 - fm) / h);
        if (right - left).abs() > 1e-2 * scale {
            continue;
        }
        let fd = (fp - fm) / (2.0 * h);
        let denom = analytic[i].abs().max(fd.abs()).max(1e-3 * scale);
        worst = worst.max((analytic[i] - fd).abs() / denom);
        used += 1;
    }
    (worst, used)
}

