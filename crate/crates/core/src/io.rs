//! Image files: the raw `CIMG` format and grayscale PNG.
//!
//! `CIMG` layout, little-endian: the magic `CIMG`, `u32` width, `u32` height,
//! `u32` flags (bit 0 set for complex data), then `f64` samples in row-major
//! order, interleaved `re, im` when complex.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageReader};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ComplexImage, Grid, RealImage};
use crate::sampling::SamplingMask;

const MAGIC: &[u8; 4] = b"CIMG";
const FLAG_COMPLEX: u32 = 1;

pub fn write_cimg<W: Write>(mut out: W, img: &ComplexImage, complex: bool) -> Result<()> {
    let (w, h) = img.dims();
    out.write_all(MAGIC)?;
    out.write_all(&u32::try_from(w).map_err(|_| Error::Format("width exceeds u32".into()))?.to_le_bytes())?;
    out.write_all(&u32::try_from(h).map_err(|_| Error::Format("height exceeds u32".into()))?.to_le_bytes())?;
    out.write_all(&(if complex { FLAG_COMPLEX } else { 0 }).to_le_bytes())?;
    for z in img.as_slice() {
        out.write_all(&z.re.to_le_bytes())?;
        if complex {
            out.write_all(&z.im.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_cimg<R: Read>(mut input: R) -> Result<ComplexImage> {
    let mut header = [0u8; 16];
    input
        .read_exact(&mut header)
        .map_err(|_| Error::Format("truncated CIMG header".into()))?;
    if &header[..4] != MAGIC {
        return Err(Error::Format("missing CIMG magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (w, h, flags) = (word(4), word(8), word(12) as u32);
    if w == 0 || h == 0 {
        return Err(Error::Format(format!("CIMG dimensions {w}x{h}")));
    }
    let complex = flags & FLAG_COMPLEX != 0;
    let per = if complex { 16 } else { 8 };
    let n = w.checked_mul(h).ok_or_else(|| Error::Format("CIMG dimensions overflow".into()))?;
    let mut raw = Vec::new();
    input.read_to_end(&mut raw)?;
    if raw.len() != n * per {
        return Err(Error::Format(format!(
            "CIMG payload is {} bytes, expected {}",
            raw.len(),
            n * per
        )));
    }
    let f = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8 bytes"));
    let data: Vec<Complex64> = raw
        .chunks_exact(per)
        .map(|c| {
            if complex {
                Complex64::new(f(&c[..8]), f(&c[8..]))
            } else {
                Complex64::new(f(c), 0.0)
            }
        })
        .collect();
    Grid::from_vec(w, h, data)
}

pub fn save_cimg(path: &Path, img: &ComplexImage, complex: bool) -> Result<()> {
    write_cimg(BufWriter::new(File::create(path)?), img, complex)
}

pub fn load_cimg(path: &Path) -> Result<ComplexImage> {
    read_cimg(BufReader::new(File::open(path)?))
}

/// Reads an 8- or 16-bit grayscale PNG with its raw sample values.
pub fn load_png(path: &Path) -> Result<ComplexImage> {
    let img = ImageReader::open(path)?.with_guessed_format()?.decode()?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values: Vec<f64> = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(f64::from).collect(),
        DynamicImage::ImageLuma16(g) => g.into_raw().into_iter().map(f64::from).collect(),
        other => {
            return Err(Error::Format(format!(
                "expected a grayscale PNG, found {:?}",
                other.color()
            )))
        }
    };
    Ok(ComplexImage::from_real(&Grid::from_vec(w, h, values)?))
}

/// Loads a `CIMG` file, or a PNG when the file does not start with the magic.
pub fn load_image(path: &Path) -> Result<ComplexImage> {
    let mut magic = [0u8; 4];
    let is_cimg = File::open(path)?.read_exact(&mut magic).is_ok() && &magic == MAGIC;
    if is_cimg {
        load_cimg(path)
    } else {
        load_png(path)
    }
}

/// 8-bit magnitude image, `|f|·255/max_intensity` clamped to `[0, 255]`.
pub fn magnitude_png(img: &ComplexImage, max_intensity: f64) -> Result<GrayImage> {
    if !(max_intensity > 0.0) {
        return Err(Error::BadParams(format!("max intensity must be positive, got {max_intensity}")));
    }
    let (w, h) = img.dims();
    let px: Vec<u8> = img
        .as_slice()
        .iter()
        .map(|z| (z.norm() * 255.0 / max_intensity).round().clamp(0.0, 255.0) as u8)
        .collect();
    GrayImage::from_raw(w as u32, h as u32, px).ok_or_else(|| Error::Format("image size".into()))
}

pub fn save_magnitude_png(path: &Path, img: &ComplexImage, max_intensity: f64) -> Result<()> {
    magnitude_png(img, max_intensity)?.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Masks are stored as real images of zeros and ones.
pub fn save_mask(path: &Path, mask: &SamplingMask) -> Result<()> {
    save_cimg(path, &ComplexImage::from_real(&mask.indicator()), false)
}

pub fn load_mask(path: &Path) -> Result<SamplingMask> {
    let img = load_image(path)?;
    let values: RealImage = img.re();
    Ok(SamplingMask::from_real(&values))
}
