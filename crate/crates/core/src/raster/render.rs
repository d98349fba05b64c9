//! Tiled front-to-back alpha blending of image-plane Gaussians and its exact
//! reverse pass.
//!
//! Each splat is evaluated with a truncated, renormalized kernel
//! `g = (G - G0 - G0 (9 - m) / 2) / Z` for `m < 9`, else 0, where
//! `G = exp(-m/2)`, `m` is the squared Mahalanobis distance, `G0 = exp(-4.5)`
//! and `Z = 1 - 5.5 G0`. The kernel is 1 at the center, decreasing, and
//! reaches 0 with zero slope at 3 sigma, so it is continuously
//! differentiable and the 3-sigma tile bounds are exact.

use nalgebra::{Matrix2, Vector2, Vector3};
use rayon::prelude::*;

use super::project::{PinholeCamera, SplatGrad, Splat2D, SUPPORT_SIGMAS};
use crate::color_image::ColorImage;
use crate::error::{Error, Result};

pub const TILE_SIZE: usize = 16;
/// Blending stops once transmittance drops below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;

const CUTOFF_MD2: f64 = SUPPORT_SIGMAS * SUPPORT_SIGMAS;

fn kernel_floor() -> f64 {
    (-0.5 * CUTOFF_MD2).exp()
}

/// Kernel value and `-2 d(value)/d(md2)`; both zero outside the support.
#[inline]
fn kernel(md2: f64, g0: f64) -> (f64, f64) {
    if md2 >= CUTOFF_MD2 {
        return (0.0, 0.0);
    }
    let g = (-0.5 * md2).exp();
    let z = 1.0 - (1.0 + 0.5 * CUTOFF_MD2) * g0;
    (((g - g0 - 0.5 * g0 * (CUTOFF_MD2 - md2)) / z).max(0.0), ((g - g0) / z).max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOptions {
    pub background: Vector3<f64>,
    pub early_exit: bool,
    /// Keep what [`render_backward`] needs.
    pub keep_cache: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { background: Vector3::zeros(), early_exit: true, keep_cache: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct RenderCache {
    splats: Vec<Splat2D>,
    conics: Vec<Matrix2<f64>>,
    tiles_x: usize,
    /// Splat indices per tile in blending order.
    tile_lists: Vec<Vec<u32>>,
    background: Vector3<f64>,
    early_exit: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderPacket {
    pub image: ColorImage,
    /// Transmittance left after blending, per pixel.
    pub transmittance: Vec<f64>,
    /// Number of splats that touched each pixel with a non-zero weight.
    pub contributors: Vec<u32>,
    cache: Option<RenderCache>,
}

impl RenderPacket {
    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }
}

/// Stable front-to-back order of `splats` by depth.
pub fn depth_order(splats: &[Splat2D]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..splats.len() as u32).collect();
    order.sort_by(|&a, &b| splats[a as usize].depth.total_cmp(&splats[b as usize].depth));
    order
}

/// Inclusive pixel range covered by a splat's 3-sigma box, clipped to the image.
fn pixel_bounds(s: &Splat2D, width: usize, height: usize) -> Option<([usize; 2], [usize; 2])> {
    let rx = SUPPORT_SIGMAS * s.cov[(0, 0)].sqrt();
    let ry = SUPPORT_SIGMAS * s.cov[(1, 1)].sqrt();
    let x0 = (s.mean.x - rx).ceil().max(0.0);
    let x1 = (s.mean.x + rx).floor().min(width as f64 - 1.0);
    let y0 = (s.mean.y - ry).ceil().max(0.0);
    let y1 = (s.mean.y + ry).floor().min(height as f64 - 1.0);
    (x0 <= x1 && y0 <= y1).then(|| ([x0 as usize, x1 as usize], [y0 as usize, y1 as usize]))
}

fn build_tile_lists(splats: &[Splat2D], width: usize, height: usize) -> (usize, Vec<Vec<u32>>) {
    let tiles_x = width.div_ceil(TILE_SIZE);
    let tiles_y = height.div_ceil(TILE_SIZE);
    let mut lists = vec![Vec::new(); tiles_x * tiles_y];
    for i in depth_order(splats) {
        let s = &splats[i as usize];
        if let Some(([x0, x1], [y0, y1])) = pixel_bounds(s, width, height) {
            for ty in y0 / TILE_SIZE..=y1 / TILE_SIZE {
                for tx in x0 / TILE_SIZE..=x1 / TILE_SIZE {
                    lists[ty * tiles_x + tx].push(i);
                }
            }
        }
    }
    (tiles_x, lists)
}

fn inverse_2x2(m: &Matrix2<f64>) -> Matrix2<f64> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det
}

#[inline]
fn mahalanobis2(q: &Matrix2<f64>, d: &Vector2<f64>) -> f64 {
    q[(0, 0)] * d.x * d.x + (q[(0, 1)] + q[(1, 0)]) * d.x * d.y + q[(1, 1)] * d.y * d.y
}

fn tile_rect(t: usize, tiles_x: usize, width: usize, height: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let (tx, ty) = (t % tiles_x, t / tiles_x);
    let xs = tx * TILE_SIZE..((tx + 1) * TILE_SIZE).min(width);
    let ys = ty * TILE_SIZE..((ty + 1) * TILE_SIZE).min(height);
    (xs, ys)
}

/// Renders `splats` into a `cam.width x cam.height` image.
pub fn render(splats: &[Splat2D], cam: &PinholeCamera, opts: &RenderOptions) -> RenderPacket {
    let (w, h) = (cam.width, cam.height);
    let (tiles_x, tile_lists) = build_tile_lists(splats, w, h);
    let conics: Vec<Matrix2<f64>> = splats.iter().map(|s| inverse_2x2(&s.cov)).collect();
    let g0 = kernel_floor();
    let bg = opts.background;

    struct TileOut {
        color: Vec<Vector3<f64>>,
        trans: Vec<f64>,
        count: Vec<u32>,
    }
    let tiles: Vec<TileOut> = tile_lists
        .par_iter()
        .enumerate()
        .map(|(t, list)| {
            let (xs, ys) = tile_rect(t, tiles_x, w, h);
            let n = xs.len() * ys.len();
            let mut out = TileOut { color: Vec::with_capacity(n), trans: Vec::with_capacity(n), count: Vec::with_capacity(n) };
            for y in ys {
                for x in xs.clone() {
                    let p = Vector2::new(x as f64, y as f64);
                    let mut c = Vector3::zeros();
                    let mut trans = 1.0;
                    let mut count = 0;
                    for &i in list {
                        let s = &splats[i as usize];
                        let (gt, _) = kernel(mahalanobis2(&conics[i as usize], &(p - s.mean)), g0);
                        if gt == 0.0 {
                            continue;
                        }
                        let a = s.opacity * gt;
                        c += s.color * (a * trans);
                        trans *= 1.0 - a;
                        count += 1;
                        if opts.early_exit && trans < MIN_TRANSMITTANCE {
                            break;
                        }
                    }
                    out.color.push(c + bg * trans);
                    out.trans.push(trans);
                    out.count.push(count);
                }
            }
            out
        })
        .collect();

    let mut image = ColorImage::new(w, h);
    let mut transmittance = vec![0.0; w * h];
    let mut contributors = vec![0; w * h];
    for (t, out) in tiles.iter().enumerate() {
        let (xs, ys) = tile_rect(t, tiles_x, w, h);
        let mut k = 0;
        for y in ys {
            for x in xs.clone() {
                image.set_pixel(x, y, out.color[k]);
                transmittance[y * w + x] = out.trans[k];
                contributors[y * w + x] = out.count[k];
                k += 1;
            }
        }
    }
    let cache = opts.keep_cache.then(|| RenderCache {
        splats: splats.to_vec(),
        conics,
        tiles_x,
        tile_lists,
        background: bg,
        early_exit: opts.early_exit,
    });
    RenderPacket { image, transmittance, contributors, cache }
}

/// Reverse pass of [`render`] given `dL/dImage` (same layout as the image).
/// Returns one gradient per input splat.
pub fn render_backward(packet: &RenderPacket, d_image: &ColorImage) -> Result<Vec<SplatGrad>> {
    let cache = packet.cache.as_ref().ok_or(Error::MissingCache("render"))?;
    packet.image.check_shape(d_image)?;
    let (w, h) = (packet.width(), packet.height());
    let g0 = kernel_floor();
    let splats = &cache.splats;

    // Per tile, gradients for the entries of its list; reduced below in tile
    // order so the sum does not depend on scheduling.
    let partial: Vec<Vec<SplatGrad>> = cache
        .tile_lists
        .par_iter()
        .enumerate()
        .map(|(t, list)| {
            let mut grads = vec![SplatGrad::default(); list.len()];
            if list.is_empty() {
                return grads;
            }
            let (xs, ys) = tile_rect(t, cache.tiles_x, w, h);
            // (list position, kernel value, kernel slope, weight a, transmittance before)
            let mut stack: Vec<(usize, f64, f64, f64, f64)> = Vec::new();
            for y in ys {
                for x in xs.clone() {
                    let dc = d_image.pixel(x, y);
                    if dc == Vector3::zeros() {
                        continue;
                    }
                    let p = Vector2::new(x as f64, y as f64);
                    stack.clear();
                    let mut trans = 1.0;
                    for (j, &i) in list.iter().enumerate() {
                        let s = &splats[i as usize];
                        let (gt, slope) = kernel(mahalanobis2(&cache.conics[i as usize], &(p - s.mean)), g0);
                        if gt == 0.0 {
                            continue;
                        }
                        let a = s.opacity * gt;
                        stack.push((j, gt, slope, a, trans));
                        trans *= 1.0 - a;
                        if cache.early_exit && trans < MIN_TRANSMITTANCE {
                            break;
                        }
                    }
                    let mut accum = cache.background;
                    for &(j, gt, slope, a, t_before) in stack.iter().rev() {
                        let i = list[j] as usize;
                        let s = &splats[i];
                        let gr = &mut grads[j];
                        gr.color += dc * (a * t_before);
                        let d_a = t_before * dc.dot(&(s.color - accum));
                        accum = s.color * a + accum * (1.0 - a);
                        gr.opacity += d_a * gt;
                        let d_gt = d_a * s.opacity;
                        let q = &cache.conics[i];
                        let d = p - s.mean;
                        let scale = d_gt * slope;
                        gr.mean += q * d * scale;
                        let d_conic = d * d.transpose() * (-0.5 * scale);
                        gr.cov -= q * d_conic * q;
                    }
                }
            }
            grads
        })
        .collect();

    let mut out = vec![SplatGrad::default(); splats.len()];
    for (list, grads) in cache.tile_lists.iter().zip(&partial) {
        for (&i, g) in list.iter().zip(grads) {
            out[i as usize].add(g);
        }
    }
    Ok(out)
}
