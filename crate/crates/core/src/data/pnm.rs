//! Binary netpbm (P5/P6) reading and writing, 8- and 16-bit.

use std::path::Path;

use crate::error::{Error, Result};

/// Decoded netpbm raster with raw interleaved samples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pnm {
    pub width: usize,
    pub height: usize,
    /// 1 for P5, 3 for P6.
    pub channels: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

pub fn is_pnm(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[0] == b'P' && (bytes[1] == b'5' || bytes[1] == b'6')
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self) -> Option<usize> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).ok()?.parse().ok()
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Pnm> {
    if !is_pnm(bytes) {
        return Err(Error::format(path, "not a binary PGM/PPM file"));
    }
    let channels = if bytes[1] == b'5' { 1 } else { 3 };
    let mut h = Header { bytes, pos: 2 };
    let (width, height, maxval) = match (h.number(), h.number(), h.number()) {
        (Some(w), Some(hh), Some(m)) => (w, hh, m),
        _ => return Err(Error::format(path, "malformed header")),
    };
    if width == 0 || height == 0 {
        return Err(Error::format(path, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(path, format!("maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates header from raster
    if !bytes.get(h.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format(path, "malformed header"));
    }
    let raster = &bytes[h.pos + 1..];
    let n = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let wide = maxval > 255;
    let need = if wide { 2 * n } else { n };
    if raster.len() < need {
        return Err(Error::format(
            path,
            format!("truncated raster: {} of {need} bytes", raster.len()),
        ));
    }
    let samples: Vec<u16> = if wide {
        raster[..need]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        raster[..need].iter().map(|&b| b as u16).collect()
    };
    if samples.iter().any(|&s| s > maxval as u16) {
        return Err(Error::format(path, "sample exceeds maxval"));
    }
    Ok(Pnm {
        width,
        height,
        channels,
        maxval: maxval as u16,
        samples,
    })
}

pub fn encode(pnm: &Pnm) -> Vec<u8> {
    let magic = if pnm.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n{}\n", pnm.width, pnm.height, pnm.maxval).into_bytes();
    if pnm.maxval > 255 {
        for s in &pnm.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        out.extend(pnm.samples.iter().map(|&s| s as u8));
    }
    out
}
