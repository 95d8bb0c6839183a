//! Binary netpbm: P6 (RGB) and P5 (gray), maxval 255.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::LoadError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnmKind {
    Gray,
    Rgb,
}

impl PnmKind {
    fn magic(self) -> &'static str {
        match self {
            PnmKind::Gray => "P5",
            PnmKind::Rgb => "P6",
        }
    }

    fn channels(self) -> usize {
        match self {
            PnmKind::Gray => 1,
            PnmKind::Rgb => 3,
        }
    }
}

/// Decoded raster, interleaved by pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pnm {
    pub kind: PnmKind,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Option<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).ok()?.parse().ok()
    }
}

pub fn decode(bytes: &[u8], expected: PnmKind, path: &Path) -> Result<Pnm, LoadError> {
    let found = bytes.get(..2).map(|m| String::from_utf8_lossy(m).into_owned()).unwrap_or_default();
    if found != expected.magic() {
        return Err(LoadError::Magic { path: path.into(), expected: expected.magic(), found });
    }
    let mut hdr = Header { bytes, pos: 2 };
    let bad = |what: &str| LoadError::Header { path: path.into(), detail: what.to_string() };
    let width = hdr.number().filter(|&v| v > 0).ok_or_else(|| bad("missing or zero width"))?;
    let height = hdr.number().filter(|&v| v > 0).ok_or_else(|| bad("missing or zero height"))?;
    let maxval = hdr.number().ok_or_else(|| bad("missing maxval"))?;
    if maxval != 255 {
        return Err(LoadError::MaxVal { path: path.into(), maxval });
    }
    match bytes.get(hdr.pos) {
        Some(c) if c.is_ascii_whitespace() => hdr.pos += 1,
        _ => return Err(bad("no whitespace after maxval")),
    }
    let need = width * height * expected.channels();
    let raster = &bytes[hdr.pos..];
    if raster.len() < need {
        return Err(LoadError::Truncated { path: path.into(), expected: need, found: raster.len() });
    }
    Ok(Pnm { kind: expected, width, height, pixels: raster[..need].to_vec() })
}

pub fn read(path: &Path, kind: PnmKind) -> Result<Pnm, LoadError> {
    let bytes = fs::read(path).map_err(|source| LoadError::Io { path: path.into(), source })?;
    decode(&bytes, kind, path)
}

pub fn encode(img: &Pnm) -> Vec<u8> {
    let mut out = format!("{}\n{} {}\n255\n", img.kind.magic(), img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn write(path: &Path, img: &Pnm) -> Result<(), LoadError> {
    debug_assert_eq!(img.pixels.len(), img.width * img.height * img.kind.channels());
    let io = |source| LoadError::Io { path: path.into(), source };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&encode(img)).map_err(io)
}
