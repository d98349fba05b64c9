//! Photometric loss (L1 plus structural dissimilarity) and the anisotropy
//! regularizer on decoded Gaussian scales.
//!
//! SSIM uses an 11x11 Gaussian window with sigma 1.5, `C1 = 0.01^2`,
//! `C2 = 0.03^2`, zero padding at the border, evaluated per channel and
//! averaged over every pixel and channel.

use nalgebra::Vector3;

use crate::color_image::ColorImage;
use crate::error::Result;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

pub const DEFAULT_LAMBDA_DSSIM: f64 = 0.2;
pub const DEFAULT_SCALE_RATIO: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub photo: f64,
    pub scale_reg: f64,
    /// `d photo / d rendered`.
    pub d_image: ColorImage,
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut w: [f64; SSIM_WINDOW] = std::array::from_fn(|i| {
        let x = i as f64 - r;
        (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
    });
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Same-size separable filtering of a single-channel plane with zero padding.
/// The window is symmetric, so this operator is its own adjoint.
fn filter(plane: &[f64], w: usize, h: usize, win: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let r = SSIM_WINDOW / 2;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            tmp[y * w + x] = (lo..=hi).map(|k| win[k + r - x] * row[k]).sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).map(|k| win[k + r - y] * tmp[k * w + x]).sum();
        }
    }
    out
}

fn channel(img: &ColorImage, c: usize) -> Vec<f64> {
    img.data().iter().skip(c).step_by(3).copied().collect()
}

/// Mean SSIM and, when `grad` is set, `d mean_ssim / d a`.
fn ssim_impl(a: &ColorImage, b: &ColorImage, want_grad: bool) -> (f64, Option<ColorImage>) {
    let (w, h) = (a.width(), a.height());
    let n = (w * h * 3) as f64;
    let win = gaussian_window();
    let mut total = 0.0;
    let mut grad = want_grad.then(|| ColorImage::new(w, h));
    for c in 0..3 {
        let x = channel(a, c);
        let y = channel(b, c);
        let sq = |v: &[f64]| v.iter().map(|t| t * t).collect::<Vec<_>>();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let mx = filter(&x, w, h, &win);
        let my = filter(&y, w, h, &win);
        let exx = filter(&sq(&x), w, h, &win);
        let eyy = filter(&sq(&y), w, h, &win);
        let exy = filter(&xy, w, h, &win);
        let len = w * h;
        let (mut d_mx, mut d_exx, mut d_exy) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
        for i in 0..len {
            let (ux, uy) = (mx[i], my[i]);
            let a1 = 2.0 * ux * uy + C1;
            let a2 = 2.0 * (exy[i] - ux * uy) + C2;
            let b1 = ux * ux + uy * uy + C1;
            let b2 = (exx[i] - ux * ux) + (eyy[i] - uy * uy) + C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            if want_grad {
                d_mx[i] = (2.0 * uy * a2 - 2.0 * uy * a1) / (b1 * b2) - s * (2.0 * ux / b1 - 2.0 * ux / b2);
                d_exx[i] = -s / b2;
                d_exy[i] = 2.0 * a1 / (b1 * b2);
            }
        }
        if let Some(g) = grad.as_mut() {
            let gm = filter(&d_mx, w, h, &win);
            let gxx = filter(&d_exx, w, h, &win);
            let gxy = filter(&d_exy, w, h, &win);
            let data = g.data_mut();
            for i in 0..len {
                data[3 * i + c] = (gm[i] + 2.0 * x[i] * gxx[i] + y[i] * gxy[i]) / n;
            }
        }
    }
    (total / n, grad)
}

/// Mean structural similarity of two images of equal size.
pub fn ssim(a: &ColorImage, b: &ColorImage) -> Result<f64> {
    a.check_shape(b)?;
    Ok(ssim_impl(a, b, false).0)
}

/// `(1 - lambda) * L1 + lambda * (1 - SSIM) / 2` and its gradient with
/// respect to `rendered`.
pub fn photometric(rendered: &ColorImage, observed: &ColorImage, lambda_dssim: f64) -> Result<(f64, ColorImage)> {
    rendered.check_shape(observed)?;
    let n = rendered.data().len() as f64;
    let mut grad = ColorImage::new(rendered.width(), rendered.height());
    let mut l1 = 0.0;
    for ((g, r), o) in grad.data_mut().iter_mut().zip(rendered.data()).zip(observed.data()) {
        let d = r - o;
        l1 += d.abs();
        // Subgradient 0 where the images agree.
        *g = (1.0 - lambda_dssim) * if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 } / n;
    }
    l1 /= n;
    let mut loss = (1.0 - lambda_dssim) * l1;
    if lambda_dssim != 0.0 {
        let (s, ds) = ssim_impl(rendered, observed, true);
        loss += lambda_dssim * (1.0 - s) / 2.0;
        let ds = ds.expect("requested");
        for (g, d) in grad.data_mut().iter_mut().zip(ds.data()) {
            *g -= 0.5 * lambda_dssim * d;
        }
    }
    Ok((loss, grad))
}

/// Mean over `scales` of `max(max(s) / min(s) - sigma, 0)` and its gradient
/// per scale vector. An empty set costs zero.
pub fn scale_reg(scales: &[Vector3<f64>], sigma: f64) -> (f64, Vec<Vector3<f64>>) {
    if scales.is_empty() {
        return (0.0, Vec::new());
    }
    let n = scales.len() as f64;
    let mut total = 0.0;
    let grads = scales
        .iter()
        .map(|s| {
            let (imax, &smax) = s.iter().enumerate().fold((0, &s[0]), |m, (i, v)| if *v > *m.1 { (i, v) } else { m });
            let (imin, &smin) = s.iter().enumerate().fold((0, &s[0]), |m, (i, v)| if *v < *m.1 { (i, v) } else { m });
            let excess = smax / smin - sigma;
            let mut g = Vector3::zeros();
            if excess > 0.0 {
                total += excess;
                g[imax] += 1.0 / (smin * n);
                g[imin] -= smax / (smin * smin * n);
            }
            g
        })
        .collect();
    (total / n, grads)
}
