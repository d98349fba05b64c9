//! Float image dumps in the NPY v1.0 layout.
//!
//! A file is the 6-byte magic `\x93NUMPY`, the version bytes `1 0`, a
//! little-endian `u16` header length, an ASCII header dictionary
//! `{'descr': '<f4', 'fortran_order': False, 'shape': (H, W, 3), }` padded
//! with spaces and a final newline so that the data starts on a 64-byte
//! boundary, then `H * W * 3` little-endian `f32` values in row-major order.

use std::fs;
use std::path::Path;

use crate::color_image::ColorImage;
use crate::error::{Error, Result};

const MAGIC: &[u8] = b"\x93NUMPY";
const ALIGN: usize = 64;

pub fn encode_npy(image: &ColorImage) -> Vec<u8> {
    let dict = format!(
        "{{'descr': '<f4', 'fortran_order': False, 'shape': ({}, {}, 3), }}",
        image.height(),
        image.width()
    );
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    let header_len = dict.len() + pad + 1;
    let mut out = Vec::with_capacity(unpadded + pad + image.data().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend(std::iter::repeat_n(b' ', pad));
    out.push(b'\n');
    for v in image.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

fn value_after<'a>(dict: &'a str, key: &str) -> Option<&'a str> {
    let at = dict.find(&format!("'{key}'"))?;
    let rest = &dict[at + key.len() + 2..];
    Some(rest.trim_start().strip_prefix(':')?.trim_start())
}

/// Parses an `(H, W, 3)` little-endian `f32` array.
pub fn parse_npy(bytes: &[u8], path: &Path) -> Result<ColorImage> {
    let bad = |msg: &str| Error::Parse(format!("{}: {msg}", path.display()));
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(bad("missing NPY magic"));
    }
    if bytes[6] != 1 {
        return Err(bad("only NPY version 1.0 is supported"));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = 10 + header_len;
    let dict = bytes
        .get(10..data_start)
        .and_then(|h| std::str::from_utf8(h).ok())
        .ok_or_else(|| bad("truncated header"))?;
    if !value_after(dict, "descr").is_some_and(|v| v.starts_with("'<f4'")) {
        return Err(bad("dtype must be '<f4'"));
    }
    if !value_after(dict, "fortran_order").is_some_and(|v| v.starts_with("False")) {
        return Err(bad("fortran_order must be False"));
    }
    let shape = value_after(dict, "shape")
        .and_then(|v| v.strip_prefix('('))
        .and_then(|v| v.split(')').next())
        .ok_or_else(|| bad("missing shape"))?;
    let dims: Vec<usize> = shape
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad("shape entries must be integers"))?;
    let [h, w, 3] = dims[..] else {
        return Err(bad("shape must be (H, W, 3)"));
    };
    let body = &bytes[data_start..];
    if body.len() != h * w * 3 * 4 {
        return Err(bad("data length does not match the shape"));
    }
    let data = body.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect();
    ColorImage::from_data(w, h, data)
}

pub fn write_npy(path: &Path, image: &ColorImage) -> Result<()> {
    fs::write(path, encode_npy(image)).map_err(|e| Error::io(path, e))
}

pub fn read_npy(path: &Path) -> Result<ColorImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_npy(&bytes, path)
}
