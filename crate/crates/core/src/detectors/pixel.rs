//! Patch-grid to image-resolution conversion for localization maps.

use ndarray::Array2;

/// Bilinear resize with half-pixel centres (the `align_corners = false`
/// convention), clamping at the borders.
pub fn bilinear_resize(src: &Array2<f64>, out_h: usize, out_w: usize) -> Array2<f64> {
    let (in_h, in_w) = src.dim();
    if (in_h, in_w) == (out_h, out_w) {
        return src.clone();
    }
    let axis = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let x = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let lo = x.floor() as usize;
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, x - lo as f64)
            })
            .collect()
    };
    let rows = axis(out_h, in_h);
    let cols = axis(out_w, in_w);
    Array2::from_shape_fn((out_h, out_w), |(i, j)| {
        let (r0, r1, fy) = rows[i];
        let (c0, c1, fx) = cols[j];
        let top = src[[r0, c0]] * (1.0 - fx) + src[[r0, c1]] * fx;
        let bottom = src[[r1, c0]] * (1.0 - fx) + src[[r1, c1]] * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Separable Gaussian blur, kernel truncated at `4σ`, mirrored borders
/// (`d c b a | a b c d | d c b a`).
pub fn gaussian_smooth(src: &Array2<f64>, sigma: f64) -> Array2<f64> {
    if sigma <= 0.0 {
        return src.clone();
    }
    let radius = (4.0 * sigma + 0.5) as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|x| (-0.5 * (x as f64 / sigma).powi(2)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let (h, w) = src.dim();
    let mut tmp = Array2::<f64>::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            tmp[[i, j]] = kernel
                .iter()
                .enumerate()
                .map(|(t, k)| k * src[[i, reflect(j as isize + t as isize - radius, w)]])
                .sum();
        }
    }
    let mut out = Array2::<f64>::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            out[[i, j]] = kernel
                .iter()
                .enumerate()
                .map(|(t, k)| k * tmp[[reflect(i as isize + t as isize - radius, h), j]])
                .sum();
        }
    }
    out
}

fn reflect(mut x: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    x = x.rem_euclid(period);
    if x >= n {
        x = period - 1 - x;
    }
    x as usize
}
