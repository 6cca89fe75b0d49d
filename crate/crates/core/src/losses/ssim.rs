//! Windowed structural similarity with analytic gradients.
//!
//! Local statistics are Gaussian-weighted over every window position that
//! fits entirely inside the image. Gradients are taken with respect to the
//! first argument and pushed back through the moment maps with the adjoint
//! of the windowed correlation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::SeparableWindow;

/// SSIM window and stability constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    pub(crate) fn check_size(&self, w: usize, h: usize) -> Result<()> {
        if w < self.window || h < self.window {
            return Err(Error::InvalidInput(format!(
                "image {w}x{h} is smaller than the {0}x{0} SSIM window",
                self.window
            )));
        }
        Ok(())
    }
}

/// Which per-window quantity to average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SsimTerm {
    /// Full index `l * cs`.
    Full,
    /// Contrast-structure factor only.
    ContrastStructure,
}

/// Local statistics of one plane pair.
struct Moments {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    var_x: Vec<f64>,
    var_y: Vec<f64>,
    cov: Vec<f64>,
}

fn moments(win: &SeparableWindow, x: &[f64], y: &[f64], w: usize, h: usize) -> Moments {
    let mu_x = win.correlate_valid(x, w, h);
    let mu_y = win.correlate_valid(y, w, h);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mut var_x = win.correlate_valid(&xx, w, h);
    let mut var_y = win.correlate_valid(&yy, w, h);
    let mut cov = win.correlate_valid(&xy, w, h);
    for i in 0..mu_x.len() {
        var_x[i] -= mu_x[i] * mu_x[i];
        var_y[i] -= mu_y[i] * mu_y[i];
        cov[i] -= mu_x[i] * mu_y[i];
    }
    Moments {
        mu_x,
        mu_y,
        var_x,
        var_y,
        cov,
    }
}

/// Mean of the selected SSIM term over all valid window positions of one
/// plane pair, optionally with its gradient with respect to `x`.
///
/// `window` is the requested window edge; it is shrunk to the plane size on
/// small planes.
pub(crate) fn mean_term(
    cfg: &SsimConfig,
    term: SsimTerm,
    x: &[f64],
    y: &[f64],
    w: usize,
    h: usize,
    want_grad: bool,
) -> (f64, Option<Vec<f64>>) {
    let win = SeparableWindow::gaussian(cfg.window.min(w), cfg.window.min(h), cfg.sigma);
    let m = moments(&win, x, y, w, h);
    let (c1, c2) = (cfg.c1(), cfg.c2());
    let count = m.mu_x.len();
    let inv = 1.0 / count as f64;

    let mut total = 0.0;
    let (mut d_mu, mut d_var, mut d_cov) = if want_grad {
        (vec![0.0; count], vec![0.0; count], vec![0.0; count])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };

    for p in 0..count {
        let (mx, my) = (m.mu_x[p], m.mu_y[p]);
        let a1 = 2.0 * mx * my + c1;
        let b1 = mx * mx + my * my + c1;
        let a2 = 2.0 * m.cov[p] + c2;
        let b2 = m.var_x[p] + m.var_y[p] + c2;
        let cs = a2 / b2;
        let value = match term {
            SsimTerm::Full => (a1 / b1) * cs,
            SsimTerm::ContrastStructure => cs,
        };
        total += value;
        if want_grad {
            // Partials of `value` w.r.t. mu_x, var_x and cov.
            let (dmu, dvar, dcov) = match term {
                SsimTerm::Full => (
                    (2.0 * my * a2) / (b1 * b2) - value * 2.0 * mx / b1,
                    -value / b2,
                    2.0 * a1 / (b1 * b2),
                ),
                SsimTerm::ContrastStructure => (0.0, -cs / b2, 2.0 / b2),
            };
            // Fold the explicit mean dependence of var_x and cov into d_mu.
            d_var[p] = inv * dvar;
            d_cov[p] = inv * dcov;
            d_mu[p] = inv * (dmu - 2.0 * mx * dvar - my * dcov);
        }
    }

    let grad = want_grad.then(|| {
        let ga = win.correlate_valid_adjoint(&d_mu, w, h);
        let gb = win.correlate_valid_adjoint(&d_var, w, h);
        let gc = win.correlate_valid_adjoint(&d_cov, w, h);
        (0..w * h)
            .map(|q| ga[q] + 2.0 * x[q] * gb[q] + y[q] * gc[q])
            .collect()
    });
    (total * inv, grad)
}
