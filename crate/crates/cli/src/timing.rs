//! Per-method wall-clock timing at a fixed image size.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use uwimg_core::restoration::{
    analytic_invert, equalize_hist, gray_world_balance, invert_by_gradient_descent, restore_udcp,
    InversionConfig, UdcpConfig,
};
use uwimg_core::{DepthMap, Image, Method, WaterType};

use crate::error::{CliError, CliResult};
use crate::table::ComparisonTable;

/// Published per-image timings for comparison: (method, seconds, hardware).
pub const REFERENCE_TIMINGS: [(&str, f64, &str); 3] = [
    ("he", 0.009, "i7-8750H CPU"),
    ("udcp", 2.051, "i7-8750H CPU"),
    ("learned restorer", 0.008, "GTX1060 GPU"),
];

pub const GPU_CAVEAT: &str = "The published 0.008 s/image (125 FPS) figure is GPU inference of a trained \
network; the timings here are CPU runs of the classical and model-based methods and are not directly comparable.";

#[derive(Debug, Clone, Serialize)]
pub struct MethodTiming {
    pub method: String,
    /// Mean over timed runs only.
    pub mean_seconds: f64,
    pub images: usize,
    pub warmup: usize,
    pub samples: Vec<f64>,
}

impl MethodTiming {
    pub fn throughput(&self) -> f64 {
        1.0 / self.mean_seconds
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingReport {
    pub width: usize,
    pub height: usize,
    pub threads: usize,
    pub methods: Vec<MethodTiming>,
}

#[derive(Debug, Clone, Copy)]
pub struct BenchConfig {
    pub images: usize,
    pub warmup: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            images: 10,
            warmup: 2,
            width: 256,
            height: 256,
            seed: 0,
        }
    }
}

/// Times each method on freshly drawn random images; warmup runs use their
/// own images and are discarded.
pub fn run_bench(methods: &[Method], cfg: &BenchConfig) -> CliResult<TimingReport> {
    if cfg.images == 0 {
        return Err(CliError::Usage("image count must be at least 1".into()));
    }
    if cfg.width == 0 || cfg.height == 0 {
        return Err(CliError::Usage("image size must be positive".into()));
    }
    let params = WaterType::CoastalGreen.nominal();
    let depth = DepthMap::from_fn(cfg.width, cfg.height, |x, y| {
        1.0 + 4.0 * (x + y) as f64 / (cfg.width + cfg.height) as f64
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let inputs: Vec<Image> = (0..cfg.images + cfg.warmup)
        .map(|_| Image::from_fn(cfg.width, cfg.height, |_, _, _| rng.gen::<f64>()))
        .collect::<Result<_, _>>()?;
    let inv = InversionConfig::default();
    let udcp = UdcpConfig::default();

    let mut out = Vec::with_capacity(methods.len());
    for &m in methods {
        let mut samples = Vec::with_capacity(cfg.images);
        for (i, img) in inputs.iter().enumerate() {
            let start = Instant::now();
            let restored = match m {
                Method::He => equalize_hist(img),
                Method::GrayWorld => gray_world_balance(img)?,
                Method::Udcp => restore_udcp(img, &udcp)?,
                Method::Analytic => analytic_invert(img, &depth, &params, &inv)?.image,
                Method::GradDesc => invert_by_gradient_descent(img, &depth, &params, &inv)?.image,
            };
            let elapsed = start.elapsed().as_secs_f64();
            std::hint::black_box(restored);
            if i >= cfg.warmup {
                samples.push(elapsed);
            }
        }
        out.push(MethodTiming {
            method: m.name().to_string(),
            mean_seconds: samples.iter().sum::<f64>() / samples.len() as f64,
            images: samples.len(),
            warmup: cfg.warmup,
            samples,
        });
    }
    Ok(TimingReport {
        width: cfg.width,
        height: cfg.height,
        threads: rayon::current_num_threads(),
        methods: out,
    })
}

impl TimingReport {
    pub fn table(&self) -> ComparisonTable {
        let cols = ["mean_seconds", "images_per_second", "images", "warmup"];
        let mut t = ComparisonTable::new("method", cols.iter().map(|s| s.to_string()).collect());
        for m in &self.methods {
            t.push(
                m.method.clone(),
                vec![
                    Some(m.mean_seconds),
                    Some(m.throughput()),
                    Some(m.images as f64),
                    Some(m.warmup as f64),
                ],
            );
        }
        t
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "Timing at {}x{} on {} thread(s)\n\n",
            self.width, self.height, self.threads
        );
        s.push_str(&self.table().to_markdown(None));
        s.push_str("\nReference timings per image:\n");
        for (name, secs, hw) in REFERENCE_TIMINGS {
            let _ = writeln!(s, "- {name}: {secs} s ({hw})");
        }
        let _ = writeln!(s, "\nNote: {GPU_CAVEAT}");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_is_excluded_from_counts() {
        let cfg = BenchConfig {
            images: 3,
            warmup: 2,
            width: 16,
            height: 16,
            seed: 1,
        };
        let r = run_bench(&[Method::He, Method::GrayWorld], &cfg).unwrap();
        for m in &r.methods {
            assert_eq!(m.images, 3);
            assert_eq!(m.samples.len(), 3);
            let mean = m.samples.iter().sum::<f64>() / 3.0;
            assert_eq!(m.mean_seconds, mean);
        }
        assert!(r.render().contains("not directly comparable"));
    }

    #[test]
    fn zero_images_is_a_usage_error() {
        let cfg = BenchConfig {
            images: 0,
            ..Default::default()
        };
        assert_eq!(run_bench(&[Method::He], &cfg).unwrap_err().exit_code(), 2);
    }
}
