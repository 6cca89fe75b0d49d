//! Restoration losses with analytic gradients.
//!
//! Every loss maps a reconstruction `g` and a reference `r` to a non-negative
//! scalar and the gradient of that scalar with respect to `g`. Colour images
//! are scored per channel and the channel scores averaged.

mod msssim;
mod ssim;

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use msssim::{MsSsimConfig, DEFAULT_WEIGHTS as MS_SSIM_WEIGHTS, FACTOR_FLOOR as MS_SSIM_FACTOR_FLOOR};
pub(crate) use ssim::{mean_term, SsimTerm};
pub use ssim::SsimConfig;

use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};

/// Mixing weight on the base loss of a combined kind.
pub const DEFAULT_MIX_ALPHA: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "l2")]
    L2,
    #[serde(rename = "ssim")]
    Ssim,
    #[serde(rename = "msssim")]
    MsSsim,
    #[serde(rename = "gdl")]
    Gdl,
    #[serde(rename = "l1l2")]
    L1L2,
    #[serde(rename = "l1ssim")]
    L1Ssim,
    #[serde(rename = "l1msssim")]
    L1MsSsim,
    #[serde(rename = "l1gdl")]
    L1Gdl,
}

impl LossKind {
    pub const ALL: [LossKind; 9] = [
        LossKind::L1,
        LossKind::L2,
        LossKind::Ssim,
        LossKind::MsSsim,
        LossKind::Gdl,
        LossKind::L1L2,
        LossKind::L1Ssim,
        LossKind::L1MsSsim,
        LossKind::L1Gdl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::L1 => "l1",
            LossKind::L2 => "l2",
            LossKind::Ssim => "ssim",
            LossKind::MsSsim => "msssim",
            LossKind::Gdl => "gdl",
            LossKind::L1L2 => "l1l2",
            LossKind::L1Ssim => "l1ssim",
            LossKind::L1MsSsim => "l1msssim",
            LossKind::L1Gdl => "l1gdl",
        }
    }

    /// For combined kinds, the loss blended with L1.
    pub fn base(self) -> Option<LossKind> {
        match self {
            LossKind::L1L2 => Some(LossKind::L2),
            LossKind::L1Ssim => Some(LossKind::Ssim),
            LossKind::L1MsSsim => Some(LossKind::MsSsim),
            LossKind::L1Gdl => Some(LossKind::Gdl),
            _ => None,
        }
    }

    pub fn is_combined(self) -> bool {
        self.base().is_some()
    }

    fn involves_l1(self) -> bool {
        self == LossKind::L1 || self.is_combined()
    }

    fn involves_gdl(self) -> bool {
        matches!(self, LossKind::Gdl | LossKind::L1Gdl)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown loss kind {s:?}")))
    }
}

/// Loss selection plus the mixing weight used by combined kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default = "default_mix")]
    pub mix_alpha: f64,
}

fn default_mix() -> f64 {
    DEFAULT_MIX_ALPHA
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            mix_alpha: DEFAULT_MIX_ALPHA,
        }
    }

    pub fn with_mix(kind: LossKind, mix_alpha: f64) -> Result<Self> {
        let spec = Self { kind, mix_alpha };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mix_alpha) {
            return Err(Error::InvalidParameter(format!(
                "mix_alpha must lie in [0, 1], got {}",
                self.mix_alpha
            )));
        }
        Ok(())
    }
}

/// Scalar loss and its gradient with respect to the reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    /// Interleaved like [`Image::data`].
    pub gradient: Vec<f64>,
}

/// Mean absolute difference. The subgradient at exact ties is 0.
pub fn loss_l1(g: &Image, r: &Image) -> Result<LossResult> {
    g.ensure_same_dims(r)?;
    let n = g.data().len() as f64;
    let mut value = 0.0;
    let gradient = g
        .data()
        .iter()
        .zip(r.data())
        .map(|(a, b)| {
            let d = a - b;
            value += d.abs();
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Ok(LossResult {
        value: value / n,
        gradient,
    })
}

/// Mean squared difference.
pub fn loss_l2(g: &Image, r: &Image) -> Result<LossResult> {
    g.ensure_same_dims(r)?;
    let n = g.data().len() as f64;
    let mut value = 0.0;
    let gradient = g
        .data()
        .iter()
        .zip(r.data())
        .map(|(a, b)| {
            let d = a - b;
            value += d * d;
            2.0 * d / n
        })
        .collect();
    Ok(LossResult {
        value: value / n,
        gradient,
    })
}

pub fn loss_ssim(g: &Image, r: &Image) -> Result<LossResult> {
    loss_ssim_with(&SsimConfig::default(), g, r)
}

/// `1 - mean SSIM`, the mean taken over window positions and channels.
pub fn loss_ssim_with(cfg: &SsimConfig, g: &Image, r: &Image) -> Result<LossResult> {
    g.ensure_same_dims(r)?;
    let (w, h) = g.dims();
    cfg.check_size(w, h)?;
    let (mean, gradient) = per_channel(g, r, |x, y| mean_term(cfg, SsimTerm::Full, x, y, w, h, true));
    Ok(LossResult {
        value: 1.0 - mean,
        gradient: gradient.into_iter().map(|v| -v).collect(),
    })
}

pub fn loss_msssim(g: &Image, r: &Image) -> Result<LossResult> {
    loss_msssim_with(&MsSsimConfig::default(), g, r)
}

/// `1 - MS-SSIM`, with MS-SSIM averaged over channels.
pub fn loss_msssim_with(cfg: &MsSsimConfig, g: &Image, r: &Image) -> Result<LossResult> {
    g.ensure_same_dims(r)?;
    let (w, h) = g.dims();
    cfg.check_size(w, h)?;
    let (mean, gradient) = per_channel(g, r, |x, y| msssim::ms_ssim_plane(cfg, x, y, w, h, true));
    Ok(LossResult {
        value: 1.0 - mean,
        gradient: gradient.into_iter().map(|v| -v).collect(),
    })
}

/// Mean absolute difference between forward-difference image gradients,
/// over both axes. The last column (row) has no horizontal (vertical) term.
pub fn loss_gdl(g: &Image, r: &Image) -> Result<LossResult> {
    g.ensure_same_dims(r)?;
    let (w, h) = g.dims();
    if w < 2 || h < 2 {
        return Err(Error::InvalidInput(format!(
            "gradient difference loss needs at least 2x2 pixels, got {w}x{h}"
        )));
    }
    let terms = (CHANNELS * ((w - 1) * h + w * (h - 1))) as f64;
    let (gd, rd) = (g.data(), r.data());
    let idx = |x: usize, y: usize, c: usize| (y * w + x) * CHANNELS + c;
    let mut value = 0.0;
    let mut gradient = vec![0.0; gd.len()];
    let mut visit = |a: usize, b: usize| {
        let e = (gd[b] - gd[a]) - (rd[b] - rd[a]);
        value += e.abs();
        let s = if e > 0.0 {
            1.0 / terms
        } else if e < 0.0 {
            -1.0 / terms
        } else {
            0.0
        };
        gradient[b] += s;
        gradient[a] -= s;
    };
    for y in 0..h {
        for x in 0..w {
            for c in 0..CHANNELS {
                if x + 1 < w {
                    visit(idx(x, y, c), idx(x + 1, y, c));
                }
                if y + 1 < h {
                    visit(idx(x, y, c), idx(x, y + 1, c));
                }
            }
        }
    }
    Ok(LossResult {
        value: value / terms,
        gradient,
    })
}

/// `mix_alpha * base + (1 - mix_alpha) * L1` for a combined kind.
pub fn loss_combine(g: &Image, r: &Image, spec: &LossSpec) -> Result<LossResult> {
    spec.validate()?;
    let base_kind = spec.kind.base().ok_or_else(|| {
        Error::InvalidParameter(format!("{} is not a combined loss kind", spec.kind))
    })?;
    let base = evaluate(&LossSpec::new(base_kind), g, r)?;
    let l1 = loss_l1(g, r)?;
    let a = spec.mix_alpha;
    Ok(LossResult {
        value: a * base.value + (1.0 - a) * l1.value,
        gradient: base
            .gradient
            .iter()
            .zip(&l1.gradient)
            .map(|(b, l)| a * b + (1.0 - a) * l)
            .collect(),
    })
}

/// Evaluates any loss kind.
pub fn evaluate(spec: &LossSpec, g: &Image, r: &Image) -> Result<LossResult> {
    match spec.kind {
        LossKind::L1 => loss_l1(g, r),
        LossKind::L2 => loss_l2(g, r),
        LossKind::Ssim => loss_ssim(g, r),
        LossKind::MsSsim => loss_msssim(g, r),
        LossKind::Gdl => loss_gdl(g, r),
        _ => loss_combine(g, r, spec),
    }
}

/// Value only; the gradient is still computed for kinds that build it in
/// the same pass.
pub fn value(spec: &LossSpec, g: &Image, r: &Image) -> Result<f64> {
    Ok(evaluate(spec, g, r)?.value)
}

fn per_channel(
    g: &Image,
    r: &Image,
    f: impl Fn(&[f64], &[f64]) -> (f64, Option<Vec<f64>>) + Sync + Send,
) -> (f64, Vec<f64>) {
    let gp = g.planes();
    let rp = r.planes();
    let parts = crate::par::map_indices(CHANNELS, |c| f(&gp[c], &rp[c]));
    let mean = parts.iter().map(|p| p.0).sum::<f64>() / CHANNELS as f64;
    let mut gradient = vec![0.0; g.data().len()];
    for (c, (_, grad)) in parts.into_iter().enumerate() {
        if let Some(grad) = grad {
            for (i, v) in grad.into_iter().enumerate() {
                gradient[i * CHANNELS + c] = v / CHANNELS as f64;
            }
        }
    }
    (mean, gradient)
}

/// Settings for comparing analytic gradients against central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub step: f64,
    /// Number of entries probed.
    pub samples: usize,
    pub seed: u64,
    /// Denominator floor; `None` uses `1e-3 * max |analytic gradient|`.
    pub floor: Option<f64>,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-5,
            samples: 128,
            seed: 0,
            floor: None,
        }
    }
}

/// Maximum relative error between the analytic gradient and central finite
/// differences over a random subset of entries. Entries within a few steps
/// of a kink of an L1 or GDL term are skipped; if every sampled entry is
/// skipped the result is 0.
pub fn check_gradient(spec: &LossSpec, g: &Image, r: &Image, check: &GradCheck) -> Result<f64> {
    if !(check.step > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step must be positive, got {}",
            check.step
        )));
    }
    let analytic = evaluate(spec, g, r)?.gradient;
    let floor = check.floor.unwrap_or_else(|| {
        1e-3 * analytic.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE)
    });
    let n = analytic.len();
    let mut rng = ChaCha8Rng::seed_from_u64(check.seed);
    let picks = sample(&mut rng, n, check.samples.min(n));
    let margin = 4.0 * check.step;
    let (w, h) = g.dims();

    let mut worst = 0.0f64;
    for i in picks.iter() {
        if spec.kind.involves_l1() && (g.data()[i] - r.data()[i]).abs() <= margin {
            continue;
        }
        if spec.kind.involves_gdl() && near_gdl_kink(g, r, i, w, h, margin) {
            continue;
        }
        let base = g.data()[i];
        let plus = value(spec, &g.with_value(i, base + check.step), r)?;
        let minus = value(spec, &g.with_value(i, base - check.step), r)?;
        let fd = (plus - minus) / (2.0 * check.step);
        let err = (analytic[i] - fd).abs() / fd.abs().max(floor);
        worst = worst.max(err);
    }
    Ok(worst)
}

fn near_gdl_kink(g: &Image, r: &Image, i: usize, w: usize, h: usize, margin: f64) -> bool {
    let p = i / CHANNELS;
    let c = i % CHANNELS;
    let (x, y) = (p % w, p / w);
    let mut neighbours = Vec::with_capacity(4);
    if x + 1 < w {
        neighbours.push((x + 1, y));
    }
    if x > 0 {
        neighbours.push((x - 1, y));
    }
    if y + 1 < h {
        neighbours.push((x, y + 1));
    }
    if y > 0 {
        neighbours.push((x, y - 1));
    }
    neighbours.into_iter().any(|(nx, ny)| {
        let dg = g.get(nx, ny, c) - g.get(x, y, c);
        let dr = r.get(nx, ny, c) - r.get(x, y, c);
        (dg - dr).abs() <= margin
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |_, _, _| rng.gen::<f64>()).unwrap_or_else(|_| unreachable!())
    }

    fn random_pair(w: usize, h: usize, seed: u64) -> (Image, Image) {
        let r = random_image(w, h, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        let g = r.map(|v| (v + 0.2 * (rng.gen::<f64>() - 0.5)).clamp(0.0, 1.0)).unwrap();
        (g, r)
    }

    #[test]
    fn names_round_trip() {
        for k in LossKind::ALL {
            assert_eq!(k.name().parse::<LossKind>().unwrap(), k);
            assert_eq!(k.to_string(), k.name());
        }
        assert!("l3".parse::<LossKind>().is_err());
    }

    #[test]
    fn zero_at_identity_for_every_kind() {
        let r = random_image(32, 32, 7);
        for k in LossKind::ALL {
            let res = evaluate(&LossSpec::new(k), &r, &r).unwrap();
            assert!(res.value.abs() < 1e-12, "{k}: {}", res.value);
            assert_eq!(res.gradient.len(), r.data().len());
            assert!(res.gradient.iter().all(|g| g.abs() < 1e-12), "{k}");
        }
    }

    #[test]
    fn constant_offset_values() {
        let r = Image::filled(16, 16, 0.4).unwrap();
        let g = Image::filled(16, 16, 0.5).unwrap();
        assert!((loss_l1(&g, &r).unwrap().value - 0.1).abs() < 1e-12);
        assert!((loss_l2(&g, &r).unwrap().value - 0.01).abs() < 1e-12);
        assert!(loss_gdl(&g, &r).unwrap().value.abs() < 1e-15);
    }

    #[test]
    fn combine_arithmetic() {
        let r = Image::filled(16, 16, 0.4).unwrap();
        let g = Image::filled(16, 16, 0.5).unwrap();
        let v = loss_combine(&g, &r, &LossSpec::new(LossKind::L1L2)).unwrap().value;
        assert!((v - 0.028).abs() < 1e-12);
        assert!(matches!(
            loss_combine(&g, &r, &LossSpec::new(LossKind::L2)),
            Err(Error::InvalidParameter(_))
        ));
        let (g, r) = random_pair(32, 32, 3);
        for kind in LossKind::ALL.into_iter().filter(|k| k.is_combined()) {
            let base = evaluate(&LossSpec::new(kind.base().unwrap()), &g, &r).unwrap();
            let l1 = loss_l1(&g, &r).unwrap();
            let one = loss_combine(&g, &r, &LossSpec::with_mix(kind, 1.0).unwrap()).unwrap();
            let zero = loss_combine(&g, &r, &LossSpec::with_mix(kind, 0.0).unwrap()).unwrap();
            assert_eq!(one.value, base.value);
            assert_eq!(zero.value, l1.value);
        }
    }

    #[test]
    fn shape_and_size_errors() {
        let a = Image::filled(16, 16, 0.5).unwrap();
        let b = Image::filled(16, 15, 0.5).unwrap();
        assert!(matches!(loss_l1(&a, &b), Err(Error::Shape { .. })));
        assert!(matches!(loss_gdl(&a, &b), Err(Error::Shape { .. })));
        let small = Image::filled(10, 10, 0.5).unwrap();
        assert!(matches!(loss_ssim(&small, &small), Err(Error::InvalidInput(_))));
        assert!(matches!(loss_msssim(&small, &small), Err(Error::InvalidInput(_))));
        let line = Image::filled(1, 8, 0.5).unwrap();
        assert!(matches!(loss_gdl(&line, &line), Err(Error::InvalidInput(_))));
        assert!(LossSpec::with_mix(LossKind::L1L2, 1.5).is_err());
    }

    #[test]
    fn l1_ties_are_skipped() {
        let r = random_image(16, 16, 1);
        let err = check_gradient(&LossSpec::new(LossKind::L1), &r, &r, &GradCheck::default()).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn gradient_checks_small() {
        let (g, r) = random_pair(16, 16, 11);
        let check = GradCheck::default();
        assert!(check_gradient(&LossSpec::new(LossKind::L2), &g, &r, &check).unwrap() < 1e-5);
        assert!(check_gradient(&LossSpec::new(LossKind::L1), &g, &r, &check).unwrap() < 1e-4);
        assert!(check_gradient(&LossSpec::new(LossKind::Gdl), &g, &r, &check).unwrap() < 1e-4);
        assert!(check_gradient(&LossSpec::new(LossKind::L2), &g, &r,
            &GradCheck { step: 0.0, ..check }).is_err());
    }
}
