//! Image quality assessment: full-reference MSE / PSNR / SSIM and the
//! no-reference UIQM family.

mod uiqm;

use serde::{Deserialize, Serialize};

pub use uiqm::{
    uicm, uicm_with, uiconm, uiconm_with, uiqm, uiqm_combine, uiqm_combine_with, uiqm_with, uism,
    uism_with, UiqmConfig, UiqmScores, LOG_EPS,
};

use crate::error::Result;
use crate::image::{Image, CHANNELS};
use crate::losses::{mean_term, SsimConfig, SsimTerm};

/// Metric column names, in report order.
pub const METRIC_NAMES: [&str; 7] = ["uicm", "uism", "uiconm", "uiqm", "mse", "psnr", "ssim"];

/// Mean squared difference over every pixel and channel.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
    Ok(sum / a.data().len() as f64)
}

/// Peak signal-to-noise ratio in dB. Identical images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image, max_value: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, max_value))
}

pub fn psnr_from_mse(mse: f64, max_value: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (max_value * max_value / mse).log10()
    }
}

pub fn ssim_index(a: &Image, b: &Image) -> Result<f64> {
    ssim_index_with(&SsimConfig::default(), a, b)
}

/// Mean windowed SSIM, channels averaged.
pub fn ssim_index_with(cfg: &SsimConfig, a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let (w, h) = a.dims();
    cfg.check_size(w, h)?;
    let (ap, bp) = (a.planes(), b.planes());
    let total: f64 = (0..CHANNELS)
        .map(|c| mean_term(cfg, SsimTerm::Full, &ap[c], &bp[c], w, h, false).0)
        .sum();
    Ok(total / CHANNELS as f64)
}

/// Every metric for one image; full-reference fields are present only when
/// a reference was supplied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub uicm: f64,
    pub uism: f64,
    pub uiconm: f64,
    pub uiqm: f64,
    pub mse: Option<f64>,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
}

impl QualityReport {
    /// Looks a metric up by its column name.
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "uicm" => Some(self.uicm),
            "uism" => Some(self.uism),
            "uiconm" => Some(self.uiconm),
            "uiqm" => Some(self.uiqm),
            "mse" => self.mse,
            "psnr" => self.psnr,
            "ssim" => self.ssim,
            _ => None,
        }
    }
}

/// Scores `img`, against `reference` when given. PSNR uses a peak of 1.
pub fn assess(img: &Image, reference: Option<&Image>, cfg: &UiqmConfig) -> Result<QualityReport> {
    let scores = uiqm_with(cfg, img)?;
    let (mse_v, psnr_v, ssim_v) = match reference {
        Some(r) => {
            let m = mse(img, r)?;
            (Some(m), Some(psnr_from_mse(m, 1.0)), Some(ssim_index(img, r)?))
        }
        None => (None, None, None),
    };
    Ok(QualityReport {
        uicm: scores.uicm,
        uism: scores.uism,
        uiconm: scores.uiconm,
        uiqm: scores.uiqm,
        mse: mse_v,
        psnr: psnr_v,
        ssim: ssim_v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{loss_l2, loss_ssim};

    fn noise(w: usize, h: usize, seed: u64) -> Image {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |_, _, _| rng.gen::<f64>()).unwrap()
    }

    #[test]
    fn mse_and_psnr_values() {
        let a = Image::filled(8, 8, 0.5).unwrap();
        let b = Image::filled(8, 8, 0.4).unwrap();
        assert!((mse(&a, &b).unwrap() - 0.01).abs() < 1e-12);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        assert!((psnr_from_mse(0.002, 1.0) - 26.9897).abs() < 1e-4);
        assert!(mse(&a, &Image::filled(8, 7, 0.4).unwrap()).is_err());
    }

    #[test]
    fn cross_module_identities() {
        let a = noise(32, 32, 1);
        let b = noise(32, 32, 2);
        assert!((mse(&a, &b).unwrap() - loss_l2(&a, &b).unwrap().value).abs() < 1e-15);
        let s = ssim_index(&a, &b).unwrap();
        assert!((s - (1.0 - loss_ssim(&a, &b).unwrap().value)).abs() < 1e-15);
        assert!((ssim_index(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_noise_is_dissimilar() {
        for seed in 0..5 {
            let s = ssim_index(&noise(64, 64, 2 * seed), &noise(64, 64, 2 * seed + 1)).unwrap();
            assert!(s.abs() < 0.1, "{s}");
        }
    }

    #[test]
    fn report_lookup() {
        let a = noise(16, 16, 9);
        let rep = assess(&a, Some(&a), &UiqmConfig::default()).unwrap();
        assert_eq!(rep.get("mse"), Some(0.0));
        assert_eq!(rep.get("psnr"), Some(f64::INFINITY));
        assert!((rep.uiqm - uiqm_combine(rep.uicm, rep.uism, rep.uiconm)).abs() < 1e-12);
        let no_ref = assess(&a, None, &UiqmConfig::default()).unwrap();
        assert_eq!(no_ref.get("ssim"), None);
        assert_eq!(no_ref.get("bogus"), None);
    }
}
