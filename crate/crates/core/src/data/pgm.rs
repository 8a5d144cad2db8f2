//! Binary (P5) PGM with 8-bit samples.

use std::path::Path;

use crate::{Error, Grid, Image, Mask, Result};

pub fn encode_pgm(g: &Grid<u8>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", g.width(), g.height()).into_bytes();
    out.extend_from_slice(g.data());
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Grid<u8>> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Format("PGM header ends early".into())),
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    if magic != "P5" {
        return Err(Error::Format(format!("expected P5 magic, found `{magic}`")));
    }
    let mut number = |what: &str| -> Result<usize> {
        let t = token()?;
        t.parse().map_err(|_| Error::Format(format!("bad {what} `{t}`")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("maxval {maxval} out of range")));
    }
    if maxval > 255 {
        return Err(Error::Unsupported(format!("16-bit PGM (maxval {maxval})")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let start = pos + 1;
    let need = width * height;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("empty {width}x{height} raster")));
    }
    if bytes.len() < start + need {
        return Err(Error::Format(format!(
            "raster truncated: {} of {need} bytes",
            bytes.len().saturating_sub(start)
        )));
    }
    Grid::from_vec(height, width, bytes[start..start + need].to_vec())
}

pub fn to_bytes(img: &Image) -> Grid<u8> {
    img.map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<Image> {
    Ok(decode_pgm(&std::fs::read(path)?)?.map(|&b| f64::from(b) / 255.0))
}

pub fn save_pgm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    std::fs::write(path, encode_pgm(&to_bytes(img)))?;
    Ok(())
}

/// Pixels above 127 are foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    Ok(decode_pgm(&std::fs::read(path)?)?.map(|&b| u8::from(b > 127)))
}

/// Stored as 0/255.
pub fn save_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    std::fs::write(path, encode_pgm(&mask.map(|&v| if v != 0 { 255 } else { 0 })))?;
    Ok(())
}
