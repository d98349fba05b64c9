//! PNG images and image-quality metrics.
//!
//! 8-bit PNG channels map to `[0, 1]` by division by 255. No gamma curve is
//! applied in either direction.

use std::path::Path;

use crate::color_image::ColorImage;
use crate::error::{Error, Result};
use crate::losses::ssim;

pub fn read_png(path: &Path) -> Result<ColorImage> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?.to_rgb8();
    ColorImage::from_rgb8(img.width() as usize, img.height() as usize, img.as_raw())
}

/// Writes an 8-bit RGB PNG, clamping to `[0, 1]` and rounding.
pub fn write_png(path: &Path, img: &ColorImage) -> Result<()> {
    image::save_buffer(path, &img.to_rgb8(), img.width() as u32, img.height() as u32, image::ColorType::Rgb8)
        .map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

/// `10 log10(1 / MSE)` over all channels; `+inf` for identical images.
pub fn psnr(rendered: &ColorImage, observed: &ColorImage) -> Result<f64> {
    rendered.check_shape(observed)?;
    let n = rendered.data().len() as f64;
    let mse = rendered.data().iter().zip(observed.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

/// `(PSNR, SSIM)` of `rendered` against `observed`.
pub fn image_metrics(rendered: &ColorImage, observed: &ColorImage) -> Result<(f64, f64)> {
    Ok((psnr(rendered, observed)?, ssim(rendered, observed)?))
}
