//! Forward models of underwater image formation.
//!
//! Two models are provided. The legacy model blends the scene toward the
//! ambient light as transmission falls:
//!
//! ```text
//! I_c = J_c T_c + A_c (1 - T_c),            T_c = exp(-beta_c d)
//! ```
//!
//! The improved model attenuates the veiling light by the same per-channel
//! transmission and drives it by a separate scattering term `T' = exp(-alpha d)`:
//!
//! ```text
//! I_c = J_c T_c + A_c T_c (1 - T')
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Error, Result};
use crate::image::{DepthMap, Image, TransmissionMap, CHANNELS};
use crate::par;

/// Default scene scattering coefficient (1/m): a moderate homogeneous haze.
pub const DEFAULT_ALPHA: f64 = 1.0;

/// Water optical parameters for both forward models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterParams {
    /// Per-channel attenuation coefficient (1/m), RGB order.
    pub beta: [f64; 3],
    /// Per-channel ambient (veiling) light in `[0, 1]`.
    pub ambient: [f64; 3],
    /// Scene scattering coefficient (1/m).
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

impl WaterParams {
    pub fn new(beta: [f64; 3], ambient: [f64; 3], alpha: f64) -> Result<Self> {
        let p = Self {
            beta,
            ambient,
            alpha,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "attenuation coefficients must be finite and >= 0, got {:?}",
                self.beta
            )));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "scattering coefficient must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        if self.ambient.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidParameter(format!(
                "ambient light must lie in [0, 1], got {:?}",
                self.ambient
            )));
        }
        Ok(())
    }

    /// True when red attenuates at least as fast as green, and green as blue.
    pub fn is_oceanic_ordered(&self) -> bool {
        self.beta[0] >= self.beta[1] && self.beta[1] >= self.beta[2]
    }
}

/// Attenuation coefficient, either shared by all channels or per channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attenuation(pub [f64; 3]);

impl From<f64> for Attenuation {
    fn from(v: f64) -> Self {
        Self([v; 3])
    }
}

impl From<[f64; 3]> for Attenuation {
    fn from(v: [f64; 3]) -> Self {
        Self(v)
    }
}

/// Built-in water types. Their parameter ranges are configuration defaults,
/// not measured optical constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaterType {
    ClearOceanic,
    CoastalGreen,
    TurbidGreen,
}

/// Closed interval `[lo, hi]`.
pub type Range = [f64; 2];

/// Sampling ranges for one water type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterRanges {
    pub beta: [Range; 3],
    pub ambient: [Range; 3],
    pub alpha: Range,
}

impl WaterType {
    pub const ALL: [WaterType; 3] = [
        WaterType::ClearOceanic,
        WaterType::CoastalGreen,
        WaterType::TurbidGreen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WaterType::ClearOceanic => "clear-oceanic",
            WaterType::CoastalGreen => "coastal-green",
            WaterType::TurbidGreen => "turbid-green",
        }
    }

    /// Per-channel ranges. Beta ranges are disjoint and ordered red > green > blue.
    pub fn ranges(self) -> WaterRanges {
        match self {
            WaterType::ClearOceanic => WaterRanges {
                beta: [[0.30, 0.45], [0.06, 0.10], [0.02, 0.05]],
                ambient: [[0.05, 0.15], [0.45, 0.65], [0.60, 0.85]],
                alpha: [0.8, 1.2],
            },
            WaterType::CoastalGreen => WaterRanges {
                beta: [[0.50, 0.70], [0.15, 0.25], [0.10, 0.14]],
                ambient: [[0.05, 0.20], [0.55, 0.75], [0.30, 0.50]],
                alpha: [0.9, 1.5],
            },
            WaterType::TurbidGreen => WaterRanges {
                beta: [[0.70, 1.00], [0.30, 0.45], [0.22, 0.29]],
                ambient: [[0.10, 0.25], [0.45, 0.65], [0.30, 0.45]],
                alpha: [1.5, 2.5],
            },
        }
    }

    /// Parameters at the midpoint of every range.
    pub fn nominal(self) -> WaterParams {
        let r = self.ranges();
        let mid = |r: Range| 0.5 * (r[0] + r[1]);
        WaterParams {
            beta: r.beta.map(mid),
            ambient: r.ambient.map(mid),
            alpha: mid(r.alpha),
        }
    }
}

impl fmt::Display for WaterType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WaterType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WaterType::ALL
            .into_iter()
            .find(|w| w.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown water type {s:?}")))
    }
}

/// Per-pixel per-channel `exp(-coeff_c * d)`.
pub fn transmission_map(depth: &DepthMap, coeff: impl Into<Attenuation>) -> Result<TransmissionMap> {
    let Attenuation(k) = coeff.into();
    if k.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "attenuation coefficients must be finite and >= 0, got {k:?}"
        )));
    }
    let (w, h) = depth.dims();
    let d = depth.data();
    let mut data = vec![0.0; w * h * CHANNELS];
    par::for_each_row(&mut data, w * CHANNELS, |y, row| {
        for x in 0..w {
            let dist = d[y * w + x];
            for c in 0..CHANNELS {
                row[x * CHANNELS + c] = (-k[c] * dist).exp();
            }
        }
    });
    Ok(TransmissionMap::from_raw_unchecked(w, h, data))
}

/// Legacy model, clamped to `[0, 1]`.
pub fn synthesize_legacy(clear: &Image, depth: &DepthMap, params: &WaterParams) -> Result<Image> {
    let raw = evaluate(clear, depth, params, |j, a, t, _| j * t + a * (1.0 - t))?;
    Ok(raw.clamped())
}

/// Improved model, clamped to `[0, 1]`.
pub fn synthesize_improved(clear: &Image, depth: &DepthMap, params: &WaterParams) -> Result<Image> {
    Ok(synthesize_improved_unclamped(clear, depth, params)?.clamped())
}

/// Improved model without the final clamp. Accepts any finite `clear`,
/// which lets optimisers evaluate the model off the unit cube.
pub fn synthesize_improved_unclamped(
    clear: &Image,
    depth: &DepthMap,
    params: &WaterParams,
) -> Result<Image> {
    evaluate(clear, depth, params, |j, a, t, t_scatter| {
        j * t + a * t * (1.0 - t_scatter)
    })
}

/// Diagonal Jacobian of the improved model with respect to the clear image:
/// `dI_c / dJ_c = exp(-beta_c d)`.
pub fn forward_sensitivity(depth: &DepthMap, params: &WaterParams) -> Result<TransmissionMap> {
    params.validate()?;
    transmission_map(depth, params.beta)
}

/// Veiling-light term `A_c T_c (1 - T')` of the improved model.
pub(crate) fn improved_backscatter(depth: &DepthMap, params: &WaterParams) -> Vec<f64> {
    let (w, h) = depth.dims();
    let mut out = vec![0.0; w * h * CHANNELS];
    for (i, &d) in depth.data().iter().enumerate() {
        let t_scatter = (-params.alpha * d).exp();
        for c in 0..CHANNELS {
            let t = (-params.beta[c] * d).exp();
            out[i * CHANNELS + c] = params.ambient[c] * t * (1.0 - t_scatter);
        }
    }
    out
}

fn evaluate(
    clear: &Image,
    depth: &DepthMap,
    params: &WaterParams,
    model: impl Fn(f64, f64, f64, f64) -> f64 + Sync + Send,
) -> Result<Image> {
    params.validate()?;
    if clear.dims() != depth.dims() {
        return Err(shape_mismatch(clear.dims(), depth.dims()));
    }
    let (w, h) = clear.dims();
    let src = clear.data();
    let d = depth.data();
    let mut out = vec![0.0; w * h * CHANNELS];
    par::for_each_row(&mut out, w * CHANNELS, |y, row| {
        for x in 0..w {
            let dist = d[y * w + x];
            let t_scatter = (-params.alpha * dist).exp();
            for c in 0..CHANNELS {
                let t = (-params.beta[c] * dist).exp();
                let i = x * CHANNELS + c;
                row[i] = model(src[y * w * CHANNELS + i], params.ambient[c], t, t_scatter);
            }
        }
    });
    Ok(Image::from_raw_unchecked(w, h, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_pixel(j: f64) -> Image {
        Image::filled(1, 1, j).unwrap()
    }

    #[test]
    fn transmission_examples() {
        let d = DepthMap::filled(2, 2, 2.0).unwrap();
        let t = transmission_map(&d, 0.5).unwrap();
        // exp(-1)
        assert!(t.data().iter().all(|v| (v - 0.367_879_441_171_442_3).abs() < 1e-15));
        let t0 = transmission_map(&d, 0.0).unwrap();
        assert!(t0.data().iter().all(|&v| v == 1.0));
        let zero = DepthMap::filled(2, 2, 0.0).unwrap();
        let tz = transmission_map(&zero, [0.3, 0.2, 0.1]).unwrap();
        assert!(tz.data().iter().all(|&v| v == 1.0));
        assert!(matches!(transmission_map(&d, -0.1), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn legacy_hand_value() {
        let p = WaterParams::new([0.5; 3], [0.9; 3], 1.0).unwrap();
        let d = DepthMap::filled(1, 1, 2.0).unwrap();
        let out = synthesize_legacy(&one_pixel(0.8), &d, &p).unwrap();
        let t = (-1.0f64).exp();
        let expected = 0.8 * t + 0.9 * (1.0 - t);
        assert_relative_eq!(out.get(0, 0, 0), expected, epsilon = 1e-15);
        assert!((expected - 0.86321).abs() < 1e-5);
    }

    #[test]
    fn improved_hand_value() {
        let p = WaterParams::new([0.5; 3], [0.9; 3], 1.0).unwrap();
        let d = DepthMap::filled(1, 1, 2.0).unwrap();
        let out = synthesize_improved(&one_pixel(0.8), &d, &p).unwrap();
        let t = (-1.0f64).exp();
        let ts = (-2.0f64).exp();
        let expected = 0.8 * t + 0.9 * t * (1.0 - ts);
        assert_relative_eq!(out.get(0, 0, 0), expected, epsilon = 1e-15);
        assert!((expected - 0.58058).abs() < 1e-5);
    }

    #[test]
    fn reductions() {
        let j = Image::from_fn(4, 3, |x, y, c| 0.1 * (x + y + c) as f64 / 3.0).unwrap();
        let d = DepthMap::from_fn(4, 3, |x, y| 0.5 * (x * y) as f64).unwrap();
        let no_atten = WaterParams::new([0.0; 3], [0.7, 0.2, 0.4], 1.0).unwrap();
        assert_eq!(synthesize_legacy(&j, &d, &no_atten).unwrap(), j);

        let p = WaterParams::new([0.4, 0.1, 0.05], [0.2, 0.5, 0.6], 0.0).unwrap();
        let out = synthesize_improved(&j, &d, &p).unwrap();
        let t = transmission_map(&d, p.beta).unwrap();
        for ((o, jv), tv) in out.data().iter().zip(j.data()).zip(t.data()) {
            assert_eq!(*o, jv * tv);
        }

        let scene = Image::uniform(4, 3, [0.2, 0.5, 0.6]).unwrap();
        let fixed = synthesize_legacy(&scene, &d, &WaterParams { alpha: 1.0, ..p }).unwrap();
        for (o, s) in fixed.data().iter().zip(scene.data()) {
            assert_relative_eq!(*o, *s, epsilon = 1e-15);
        }
    }

    #[test]
    fn shape_errors() {
        let j = Image::filled(3, 3, 0.5).unwrap();
        let d = DepthMap::filled(2, 3, 1.0).unwrap();
        let p = WaterType::ClearOceanic.nominal();
        assert!(matches!(synthesize_improved(&j, &d, &p), Err(Error::Shape { .. })));
        assert!(matches!(synthesize_legacy(&j, &d, &p), Err(Error::Shape { .. })));
    }

    #[test]
    fn presets_are_ordered_and_valid() {
        for w in WaterType::ALL {
            let r = w.ranges();
            assert!(r.beta[0][0] >= r.beta[1][1] && r.beta[1][0] >= r.beta[2][1]);
            let p = w.nominal();
            p.validate().unwrap();
            assert!(p.is_oceanic_ordered());
            assert_eq!(w.name().parse::<WaterType>().unwrap(), w);
        }
    }
}
