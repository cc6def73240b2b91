use std::io::{Read, Write};

use super::{DepthImage, MaskImage};
use crate::error::{Error, Result};

fn invalid(message: impl Into<String>) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, message.into())
}

/// Binary PGM (P5): 0 for background, 255 for object.
pub fn write_pgm<W: Write>(mask: &MaskImage, mut out: W) -> std::io::Result<()> {
    write!(out, "P5\n{} {}\n255\n", mask.width(), mask.height())?;
    let mut row = vec![0u8; mask.width() as usize];
    for y in 0..mask.height() {
        for (x, px) in row.iter_mut().enumerate() {
            *px = if mask.get(x as u32, y) { 255 } else { 0 };
        }
        out.write_all(&row)?;
    }
    Ok(())
}

pub fn read_pgm<R: Read>(mut input: R) -> std::io::Result<MaskImage> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    // Header: magic, width, height, maxval separated by whitespace, then one
    // whitespace byte before the raster.
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < data.len() && data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(invalid("truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&data[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(invalid("not a binary PGM"));
    }
    let parse = |s: &str| s.parse::<u32>().map_err(|_| invalid(format!("bad header field {s:?}")));
    let (w, h) = (parse(&fields[1])?, parse(&fields[2])?);
    let raster = &data[pos + 1..];
    if raster.len() < w as usize * h as usize {
        return Err(invalid("truncated PGM raster"));
    }
    let bits = raster[..w as usize * h as usize].iter().map(|&b| b > 127).collect();
    Ok(MaskImage::from_bits(w, h, bits))
}

/// Raw depth: width and height as little-endian u32, then row-major
/// little-endian f32 meters.
pub fn write_depth_raw<W: Write>(depth: &DepthImage, mut out: W) -> std::io::Result<()> {
    out.write_all(&depth.width().to_le_bytes())?;
    out.write_all(&depth.height().to_le_bytes())?;
    let mut buf = Vec::with_capacity(depth.width() as usize * depth.height() as usize * 4);
    for v in depth.to_dense() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.write_all(&buf)
}

pub fn read_depth_raw<R: Read>(mut input: R) -> Result<DepthImage> {
    let mut data = Vec::new();
    input.read_to_end(&mut data).map_err(|e| Error::io("<depth>", e))?;
    if data.len() < 8 {
        return Err(Error::io("<depth>", invalid("truncated depth header")));
    }
    let w = u32::from_le_bytes(data[0..4].try_into().unwrap());
    let h = u32::from_le_bytes(data[4..8].try_into().unwrap());
    let n = w as usize * h as usize;
    if data.len() != 8 + 4 * n {
        return Err(Error::io("<depth>", invalid("depth payload size mismatch")));
    }
    let values = data[8..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(DepthImage::from_values(w, h, values))
}
