//! Separable "valid" windowed correlation, its adjoint, and 2x2 mean pooling.
//! All planes are single-channel, row-major.

/// Normalised 1-D Gaussian of `len` taps centred at `(len - 1) / 2`.
pub fn gaussian_taps(len: usize, sigma: f64) -> Vec<f64> {
    let centre = (len as f64 - 1.0) / 2.0;
    let mut taps: Vec<f64> = (0..len)
        .map(|i| {
            let x = i as f64 - centre;
            (-(x * x) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Separable window `wy[i] * wx[j]`.
#[derive(Debug, Clone)]
pub struct SeparableWindow {
    pub wx: Vec<f64>,
    pub wy: Vec<f64>,
}

impl SeparableWindow {
    pub fn gaussian(kx: usize, ky: usize, sigma: f64) -> Self {
        Self {
            wx: gaussian_taps(kx, sigma),
            wy: gaussian_taps(ky, sigma),
        }
    }

    /// Output size of a valid correlation over a `w x h` plane.
    pub fn output_dims(&self, w: usize, h: usize) -> (usize, usize) {
        (w + 1 - self.wx.len(), h + 1 - self.wy.len())
    }

    /// `out[py][px] = sum_ij wy[i] wx[j] src[py + i][px + j]`.
    pub fn correlate_valid(&self, src: &[f64], w: usize, h: usize) -> Vec<f64> {
        let (ow, oh) = self.output_dims(w, h);
        let mut tmp = vec![0.0; ow * h];
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            let out = &mut tmp[y * ow..(y + 1) * ow];
            for (px, o) in out.iter_mut().enumerate() {
                *o = self
                    .wx
                    .iter()
                    .zip(&row[px..px + self.wx.len()])
                    .map(|(k, v)| k * v)
                    .sum();
            }
        }
        let mut out = vec![0.0; ow * oh];
        for (i, &k) in self.wy.iter().enumerate() {
            for py in 0..oh {
                let src_row = &tmp[(py + i) * ow..(py + i + 1) * ow];
                let dst = &mut out[py * ow..(py + 1) * ow];
                for (d, s) in dst.iter_mut().zip(src_row) {
                    *d += k * s;
                }
            }
        }
        out
    }

    /// Adjoint of [`Self::correlate_valid`]: scatters an `ow x oh` map back
    /// onto the `w x h` input grid.
    pub fn correlate_valid_adjoint(&self, grad: &[f64], w: usize, h: usize) -> Vec<f64> {
        let (ow, oh) = self.output_dims(w, h);
        let mut tmp = vec![0.0; ow * h];
        for (i, &k) in self.wy.iter().enumerate() {
            for py in 0..oh {
                let src_row = &grad[py * ow..(py + 1) * ow];
                let dst = &mut tmp[(py + i) * ow..(py + i + 1) * ow];
                for (d, s) in dst.iter_mut().zip(src_row) {
                    *d += k * s;
                }
            }
        }
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            let src_row = &tmp[y * ow..(y + 1) * ow];
            let dst = &mut out[y * w..(y + 1) * w];
            for (px, &s) in src_row.iter().enumerate() {
                for (j, &k) in self.wx.iter().enumerate() {
                    dst[px + j] += k * s;
                }
            }
        }
        out
    }
}

/// 2x2 mean pooling; a trailing odd row or column is dropped.
pub fn downsample2(src: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (ow, oh) = (w / 2, h / 2);
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let a = src[2 * y * w + 2 * x];
            let b = src[2 * y * w + 2 * x + 1];
            let c = src[(2 * y + 1) * w + 2 * x];
            let d = src[(2 * y + 1) * w + 2 * x + 1];
            out[y * ow + x] = 0.25 * (a + b + c + d);
        }
    }
    (out, ow, oh)
}

/// Adjoint of [`downsample2`] onto a `w x h` grid.
pub fn downsample2_adjoint(grad: &[f64], w: usize, h: usize) -> Vec<f64> {
    let (ow, oh) = (w / 2, h / 2);
    let mut out = vec![0.0; w * h];
    for y in 0..oh {
        for x in 0..ow {
            let g = 0.25 * grad[y * ow + x];
            out[2 * y * w + 2 * x] += g;
            out[2 * y * w + 2 * x + 1] += g;
            out[(2 * y + 1) * w + 2 * x] += g;
            out[(2 * y + 1) * w + 2 * x + 1] += g;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn taps_sum_to_one() {
        for len in 1..12 {
            let t = gaussian_taps(len, 1.5);
            assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn correlation_matches_direct_sum() {
        let (w, h) = (9, 7);
        let src = pseudo(w * h, 3);
        let win = SeparableWindow::gaussian(5, 3, 1.5);
        let out = win.correlate_valid(&src, w, h);
        let (ow, oh) = win.output_dims(w, h);
        for py in 0..oh {
            for px in 0..ow {
                let mut direct = 0.0;
                for i in 0..3 {
                    for j in 0..5 {
                        direct += win.wy[i] * win.wx[j] * src[(py + i) * w + px + j];
                    }
                }
                assert!((out[py * ow + px] - direct).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn adjoints_satisfy_inner_product_identity() {
        let (w, h) = (13, 11);
        let win = SeparableWindow::gaussian(11, 4, 1.5);
        let (ow, oh) = win.output_dims(w, h);
        let x = pseudo(w * h, 1);
        let g = pseudo(ow * oh, 2);
        let lhs = dot(&win.correlate_valid(&x, w, h), &g);
        let rhs = dot(&x, &win.correlate_valid_adjoint(&g, w, h));
        assert!((lhs - rhs).abs() < 1e-13);

        let (d, dw, dh) = downsample2(&x, w, h);
        let gd = pseudo(dw * dh, 5);
        let lhs = dot(&d, &gd);
        let rhs = dot(&x, &downsample2_adjoint(&gd, w, h));
        assert!((lhs - rhs).abs() < 1e-13);
    }
}
