//! Separable convolution helpers on row-major `f64` buffers.
//!
//! All borders replicate the edge pixel.

/// Sampled 1-D Gaussian, normalized to unit sum. Radius `ceil(truncate * sigma)`.
pub fn gaussian_kernel(sigma: f64, truncate: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (truncate * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Gaussian and its first two derivatives sampled on `[-radius, radius]`,
/// `radius = ceil(3 sigma)`.
///
/// The smoothing kernel is normalized to unit sum; the derivative kernels are corrected so
/// that they annihilate constants and respond exactly to linear/quadratic ramps.
pub fn gaussian_derivative_kernels(sigma: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let s2 = sigma * sigma;
    let xs: Vec<f64> = (-radius..=radius).map(|i| i as f64).collect();
    let g: Vec<f64> = xs.iter().map(|x| (-x * x / (2.0 * s2)).exp()).collect();
    let norm: f64 = g.iter().sum();
    let g0: Vec<f64> = g.iter().map(|v| v / norm).collect();

    // correlation form of d/dx G: x/s^2 G, scaled so that a unit ramp yields exactly 1
    let mut g1: Vec<f64> = xs.iter().zip(&g0).map(|(x, v)| x / s2 * v).collect();
    let m1: f64 = g1.iter().zip(&xs).map(|(k, x)| k * x).sum();
    g1.iter_mut().for_each(|v| *v /= m1);

    // d2/dx2 G = (x^2 - s^2)/s^4 G; remove DC then scale so sum(k2 * x^2 / 2) = 1
    let mut g2: Vec<f64> = xs
        .iter()
        .zip(&g0)
        .map(|(x, v)| (x * x - s2) / (s2 * s2) * v)
        .collect();
    let dc = g2.iter().sum::<f64>() / g2.len() as f64;
    g2.iter_mut().for_each(|v| *v -= dc);
    let m2: f64 = g2.iter().zip(&xs).map(|(k, x)| k * x * x / 2.0).sum();
    g2.iter_mut().for_each(|v| *v /= m2);

    (g0, g1, g2)
}

/// Correlates each row with `kernel` (kernel index `k` pairs with offset `k - radius`).
pub fn convolve_rows(data: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let last = width as isize - 1;
    let mut out = vec![0.0; data.len()];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        let dst = &mut out[y * width..(y + 1) * width];
        for (x, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let xi = (x as isize + k as isize - r).clamp(0, last) as usize;
                acc += w * row[xi];
            }
            *d = acc;
        }
    }
    out
}

/// Correlates each column with `kernel`.
pub fn convolve_cols(data: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let last = height as isize - 1;
    let mut out = vec![0.0; data.len()];
    for y in 0..height {
        let dst = &mut out[y * width..(y + 1) * width];
        for (k, w) in kernel.iter().enumerate() {
            let yi = (y as isize + k as isize - r).clamp(0, last) as usize;
            let src = &data[yi * width..(yi + 1) * width];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    out
}

pub fn separable(
    data: &[f64],
    width: usize,
    height: usize,
    kx: &[f64],
    ky: &[f64],
) -> Vec<f64> {
    let rows = convolve_rows(data, width, height, kx);
    convolve_cols(&rows, width, height, ky)
}

pub fn gaussian_blur(data: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return data.to_vec();
    }
    let k = gaussian_kernel(sigma, 4.0);
    separable(data, width, height, &k, &k)
}

/// Mean over a `window x window` box centered on each pixel, replicate borders.
pub fn box_mean(data: &[f64], width: usize, height: usize, window: usize) -> Vec<f64> {
    let k = vec![1.0 / window as f64; window];
    separable(data, width, height, &k, &k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_kernels_are_exact_on_polynomials() {
        for sigma in [0.8, 1.1, 1.5, 3.0] {
            let (g0, g1, g2) = gaussian_derivative_kernels(sigma);
            let r = (g0.len() / 2) as f64;
            let at = |k: &[f64], f: &dyn Fn(f64) -> f64| -> f64 {
                k.iter().enumerate().map(|(i, w)| w * f(i as f64 - r)).sum()
            };
            assert!((at(&g0, &|_| 1.0) - 1.0).abs() < 1e-12);
            assert!(at(&g1, &|_| 1.0).abs() < 1e-12);
            assert!((at(&g1, &|x| x) - 1.0).abs() < 1e-12);
            assert!(at(&g2, &|_| 1.0).abs() < 1e-12);
            assert!(at(&g2, &|x| x).abs() < 1e-12);
            assert!((at(&g2, &|x| x * x) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn blur_preserves_constants() {
        let data = vec![0.3; 40];
        let out = gaussian_blur(&data, 8, 5, 1.7);
        assert!(out.iter().all(|v| (v - 0.3).abs() < 1e-12));
        let out = box_mean(&data, 8, 5, 3);
        assert!(out.iter().all(|v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn box_mean_matches_direct_sum() {
        let (w, h) = (7, 6);
        let data: Vec<f64> = (0..w * h).map(|i| ((i * 37) % 11) as f64).collect();
        let out = box_mean(&data, w, h, 3);
        let (x, y) = (3, 2);
        let mut direct = 0.0;
        for dy in -1i32..=1 {
            for dx in -1i32..=1 {
                direct += data[(y as i32 + dy) as usize * w + (x as i32 + dx) as usize];
            }
        }
        assert!((out[y * w + x] - direct / 9.0).abs() < 1e-12);
    }
}
