//! Grayscale image export for scalar fields.

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, Luma};

use crate::dataset::normalize01;
use crate::error::{Error, Result};
use crate::fields::ScalarField;

/// Min-max normalized 8-bit image of a scalar field; image row 0 holds the
/// top row of sites.
pub fn scalar_image(field: &ScalarField) -> GrayImage {
    let norm = normalize01(field);
    let (w, h) = norm.dims();
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let j = h - 1 - y as usize;
        let v = norm.at(x as usize, j);
        Luma([(v * 255.0).round().clamp(0.0, 255.0) as u8])
    })
}

pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn save_png(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
