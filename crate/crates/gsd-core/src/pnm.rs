//! Binary PGM (P5) / PPM (P6) reader and writer, maxval 255, plus a raw
//! float-grid container for the no-quantize pipeline path.
//!
//! PGM carries one channel, PPM three (interleaved RGB on disk,
//! channel-planar in memory). The float-grid format is `GSDF` magic, three
//! little-endian u32 dims, then the grid data as little-endian f64 — it
//! preserves every bit of an unquantized image so the exact-path tests can
//! round-trip through files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::codec::StegoImage;
use crate::error::{GsdError, Result};
use crate::grid::{Dims, Grid};

const FLOAT_MAGIC: &[u8; 4] = b"GSDF";

pub fn write_pnm(img: &StegoImage, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_pnm_to(img, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_pnm_to(img: &StegoImage, w: &mut impl Write) -> Result<()> {
    let dims = img.dims();
    match dims.channels {
        1 => {
            write!(w, "P5\n{} {}\n255\n", dims.width, dims.height)?;
            w.write_all(img.pixels())?;
        }
        3 => {
            write!(w, "P6\n{} {}\n255\n", dims.width, dims.height)?;
            let plane = dims.height * dims.width;
            let px = img.pixels();
            let mut row = Vec::with_capacity(3 * plane);
            for i in 0..plane {
                row.push(px[i]);
                row.push(px[plane + i]);
                row.push(px[2 * plane + i]);
            }
            w.write_all(&row)?;
        }
        other => {
            return Err(GsdError::ImageFormat(format!(
                "PNM supports 1 or 3 channels, got {other}"
            )))
        }
    }
    Ok(())
}

pub fn read_pnm(path: &Path) -> Result<StegoImage> {
    let mut r = BufReader::new(File::open(path)?);
    read_pnm_from(&mut r)
}

pub fn read_pnm_from(r: &mut impl BufRead) -> Result<StegoImage> {
    let mut magic = [0u8; 2];
    r.read_exact(&mut magic)?;
    let channels = match &magic {
        b"P5" => 1,
        b"P6" => 3,
        _ => {
            return Err(GsdError::ImageFormat(format!(
                "unsupported magic {:?} (binary P5/P6 only)",
                String::from_utf8_lossy(&magic)
            )))
        }
    };
    let width = read_header_number(r)?;
    let height = read_header_number(r)?;
    let maxval = read_header_number(r)?;
    if maxval != 255 {
        return Err(GsdError::ImageFormat(format!(
            "only maxval 255 is supported, got {maxval}"
        )));
    }
    let dims = Dims::new(channels, height, width)?;
    let mut raw = vec![0u8; dims.len()];
    r.read_exact(&mut raw)?;
    let pixels = if channels == 1 {
        raw
    } else {
        // De-interleave RGB into channel planes.
        let plane = height * width;
        let mut planar = vec![0u8; 3 * plane];
        for i in 0..plane {
            planar[i] = raw[3 * i];
            planar[plane + i] = raw[3 * i + 1];
            planar[2 * plane + i] = raw[3 * i + 2];
        }
        planar
    };
    StegoImage::new(dims, pixels)
}

/// One whitespace-separated positive integer, skipping `#` comments.
fn read_header_number(r: &mut impl BufRead) -> Result<usize> {
    let mut value: Option<usize> = None;
    loop {
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte)?;
        match byte[0] {
            b'#' => {
                let mut comment = String::new();
                r.read_line(&mut comment)?;
            }
            b'0'..=b'9' => {
                let digit = (byte[0] - b'0') as usize;
                value = Some(value.unwrap_or(0) * 10 + digit);
            }
            b' ' | b'\t' | b'\r' | b'\n' => {
                if let Some(v) = value {
                    return Ok(v);
                }
            }
            other => {
                return Err(GsdError::ImageFormat(format!(
                    "unexpected byte {other:#x} in header"
                )))
            }
        }
    }
}

pub fn write_float_grid(grid: &Grid, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let dims = grid.dims();
    w.write_all(FLOAT_MAGIC)?;
    for v in [dims.channels, dims.height, dims.width] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    for v in grid.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_float_grid(path: &Path) -> Result<Grid> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FLOAT_MAGIC {
        return Err(GsdError::ImageFormat(format!(
            "bad float-grid magic {magic:?}"
        )));
    }
    let mut buf4 = [0u8; 4];
    let mut axes = [0usize; 3];
    for axis in axes.iter_mut() {
        r.read_exact(&mut buf4)?;
        *axis = u32::from_le_bytes(buf4) as usize;
    }
    let dims = Dims::new(axes[0], axes[1], axes[2])
        .map_err(|e| GsdError::ImageFormat(e.to_string()))?;
    let mut data = vec![0.0; dims.len()];
    let mut buf8 = [0u8; 8];
    for slot in data.iter_mut() {
        r.read_exact(&mut buf8)?;
        *slot = f64::from_le_bytes(buf8);
    }
    Grid::from_vec(dims, data)
}

/// True when the file starts with the float-grid magic.
pub fn is_float_grid(path: &Path) -> Result<bool> {
    let mut r = File::open(path)?;
    let mut magic = [0u8; 4];
    match r.read_exact(&mut magic) {
        Ok(()) => Ok(&magic == FLOAT_MAGIC),
        Err(_) => Ok(false),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{sample_gaussian, SeededRng};

    #[test]
    fn pgm_round_trip() {
        let dims = Dims::new(1, 3, 5).unwrap();
        let pixels: Vec<u8> = (0..15).map(|i| (i * 17) as u8).collect();
        let img = StegoImage::new(dims, pixels).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        write_pnm(&img, &path).unwrap();
        let back = read_pnm(&path).unwrap();
        assert_eq!(back, img);

        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n5 3\n255\n"));
        assert_eq!(bytes.len(), 11 + 15);
    }

    #[test]
    fn ppm_round_trip_interleaves_channels() {
        let dims = Dims::new(3, 2, 2).unwrap();
        let pixels: Vec<u8> = (0..12).collect();
        let img = StegoImage::new(dims, pixels).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        write_pnm(&img, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P6\n2 2\n255\n"));
        // First disk pixel is (R0, G0, B0) = (0, 4, 8).
        assert_eq!(&bytes[11..14], &[0, 4, 8]);
        assert_eq!(read_pnm(&path).unwrap(), img);
    }

    #[test]
    fn rejects_bad_headers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad");
        std::fs::write(&path, b"P3\n2 2\n255\n").unwrap();
        assert!(read_pnm(&path).is_err());
        std::fs::write(&path, b"P5\n2 2\n65535\n").unwrap();
        assert!(read_pnm(&path).is_err());
        std::fs::write(&path, b"P5\n2 2\n255\nxx").unwrap();
        assert!(read_pnm(&path).is_err(), "truncated data must fail");
    }

    #[test]
    fn header_comments_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        let mut bytes = b"P5\n# a comment\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[7, 9]);
        std::fs::write(&path, &bytes).unwrap();
        let img = read_pnm(&path).unwrap();
        assert_eq!(img.dims(), Dims::new(1, 1, 2).unwrap());
        assert_eq!(img.pixels(), &[7, 9]);
    }

    #[test]
    fn float_grid_round_trip_is_bit_exact() {
        let dims = Dims::new(3, 4, 4).unwrap();
        let g = sample_gaussian(&mut SeededRng::new(2), dims).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("latent.gsdf");
        write_float_grid(&g, &path).unwrap();
        assert!(is_float_grid(&path).unwrap());
        let back = read_float_grid(&path).unwrap();
        assert_eq!(back.data(), g.data());

        let pgm = dir.path().join("img.pgm");
        let img = StegoImage::new(Dims::new(1, 1, 1).unwrap(), vec![0]).unwrap();
        write_pnm(&img, &pgm).unwrap();
        assert!(!is_float_grid(&pgm).unwrap());
    }
}
