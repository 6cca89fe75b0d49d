//! Multi-scale SSIM over a 2x2 mean-pooling pyramid.
//!
//! Scales `0..S-1` contribute their mean contrast-structure term, the
//! coarsest scale contributes the full index. Each factor is raised to its
//! scale weight and the factors are multiplied. The window shrinks to the
//! plane size on coarse levels, so the only size requirement is that the
//! coarsest level keeps at least one pixel.

use serde::{Deserialize, Serialize};

use super::ssim::{mean_term, SsimConfig, SsimTerm};
use crate::error::{Error, Result};
use crate::filter::{downsample2, downsample2_adjoint};

/// Standard five-scale weights, finest first.
pub const DEFAULT_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// Factors at or below this value are held there and stop propagating
/// gradient, keeping fractional powers real.
pub const FACTOR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsSsimConfig {
    pub ssim: SsimConfig,
    pub weights: Vec<f64>,
}

impl Default for MsSsimConfig {
    fn default() -> Self {
        Self {
            ssim: SsimConfig::default(),
            weights: DEFAULT_WEIGHTS.to_vec(),
        }
    }
}

impl MsSsimConfig {
    pub fn scales(&self) -> usize {
        self.weights.len()
    }

    /// Smallest edge length that survives every pooling step.
    pub fn min_size(&self) -> usize {
        1 << self.scales().saturating_sub(1)
    }

    pub(crate) fn check_size(&self, w: usize, h: usize) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::InvalidParameter("MS-SSIM needs at least one scale".into()));
        }
        let min = self.min_size();
        if w < min || h < min {
            return Err(Error::InvalidInput(format!(
                "image {w}x{h} too small for {} MS-SSIM scales; minimum size is {min}x{min}",
                self.scales()
            )));
        }
        Ok(())
    }
}

/// MS-SSIM of one plane pair and optionally its gradient w.r.t. `x`.
pub(crate) fn ms_ssim_plane(
    cfg: &MsSsimConfig,
    x: &[f64],
    y: &[f64],
    w: usize,
    h: usize,
    want_grad: bool,
) -> (f64, Option<Vec<f64>>) {
    let scales = cfg.scales();
    let mut pyramid_x = vec![(x.to_vec(), w, h)];
    let mut pyramid_y = vec![y.to_vec()];
    for _ in 1..scales {
        let (px, pw, ph) = pyramid_x.last().unwrap();
        let (nx, nw, nh) = downsample2(px, *pw, *ph);
        let (ny, _, _) = downsample2(pyramid_y.last().unwrap(), *pw, *ph);
        pyramid_x.push((nx, nw, nh));
        pyramid_y.push(ny);
    }

    let mut factors = Vec::with_capacity(scales);
    let mut grads = Vec::with_capacity(scales);
    for s in 0..scales {
        let term = if s + 1 == scales {
            SsimTerm::Full
        } else {
            SsimTerm::ContrastStructure
        };
        let (px, pw, ph) = &pyramid_x[s];
        let (m, g) = mean_term(&cfg.ssim, term, px, &pyramid_y[s], *pw, *ph, want_grad);
        factors.push(m);
        grads.push(g);
    }

    let value: f64 = factors
        .iter()
        .zip(&cfg.weights)
        .map(|(m, wt)| m.max(FACTOR_FLOOR).powf(*wt))
        .product();

    if !want_grad {
        return (value, None);
    }

    // Walk coarse to fine: accumulate this scale's direct term, then pull the
    // running gradient back through the pooling step.
    let mut acc: Option<Vec<f64>> = None;
    for s in (0..scales).rev() {
        let (_, pw, ph) = &pyramid_x[s];
        let mut here = match acc.take() {
            Some(coarse) => downsample2_adjoint(&coarse, *pw, *ph),
            None => vec![0.0; pw * ph],
        };
        if factors[s] > FACTOR_FLOOR {
            let scale = value * cfg.weights[s] / factors[s];
            let g = grads[s].as_ref().expect("gradient requested");
            for (a, b) in here.iter_mut().zip(g) {
                *a += scale * b;
            }
        }
        acc = Some(here);
    }
    (value, acc)
}
