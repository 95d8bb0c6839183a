//! Checkpoint file format.
//!
//! ```text
//! "RSEG1\n"
//! u64 LE length, then that many bytes of UTF-8 config text
//! per tensor:
//!     name "\n"
//!     rank and dims, space separated, "\n"
//!     little-endian f32 payload
//! u32 LE CRC-32 of every preceding byte
//! ```
//!
//! The config block is the full `key = value` config followed by
//! `state.iteration = N`. Tensors are the parameters and running statistics
//! under their own names and the momentum buffers as `momentum/<name>`.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::Config;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"RSEG1\n";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: not a checkpoint (bad magic)")]
    Magic { path: PathBuf },
    #[error("{path}: checksum mismatch (file is truncated or corrupted)")]
    Crc { path: PathBuf },
    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: Config,
    pub iteration: usize,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        let text = format!("{}state.iteration = {}\n", self.config.to_text(), self.iteration);
        out.extend((text.len() as u64).to_le_bytes());
        out.extend(text.as_bytes());
        for t in &self.tensors {
            out.extend(t.name.as_bytes());
            out.push(b'\n');
            let dims: Vec<String> = std::iter::once(t.dims.len()).chain(t.dims.iter().copied()).map(|d| d.to_string()).collect();
            out.extend(dims.join(" ").as_bytes());
            out.push(b'\n');
            for v in &t.data {
                out.extend(v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend(crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let format = |detail: String| Error::from(CheckpointError::Format { path: path.into(), detail });
        let head = bytes.len().min(MAGIC.len());
        if bytes[..head] != MAGIC[..head] {
            return Err(CheckpointError::Magic { path: path.into() }.into());
        }
        if bytes.len() < MAGIC.len() + 4 {
            return Err(CheckpointError::Crc { path: path.into() }.into());
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(trailer.try_into().expect("four bytes")) {
            return Err(CheckpointError::Crc { path: path.into() }.into());
        }

        let mut r = Reader { buf: body, pos: MAGIC.len() };
        let len = u64::from_le_bytes(r.take(8).ok_or_else(|| format("missing config length".into()))?.try_into().expect("eight bytes"));
        let text = r.take(len as usize).ok_or_else(|| format("config block overruns the file".into()))?;
        let text = std::str::from_utf8(text).map_err(|_| format("config block is not UTF-8".into()))?;
        let mut iteration = None;
        let mut config_text = String::new();
        for line in text.lines() {
            match line.strip_prefix("state.iteration = ") {
                Some(v) => iteration = Some(v.parse().map_err(|_| format(format!("bad iteration '{v}'")))?),
                None => {
                    config_text.push_str(line);
                    config_text.push('\n');
                }
            }
        }
        let iteration = iteration.ok_or_else(|| format("config block lacks state.iteration".into()))?;
        let config = Config::parse(&config_text)?;

        let mut tensors = Vec::new();
        while r.pos < body.len() {
            let name = r.line().ok_or_else(|| format("unterminated tensor name".into()))?.to_string();
            let dims_line = r.line().ok_or_else(|| format(format!("{name}: missing dims")))?;
            let nums: Vec<usize> = dims_line
                .split(' ')
                .map(|s| s.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| format(format!("{name}: bad dims '{dims_line}'")))?;
            let (rank, dims) = nums.split_first().ok_or_else(|| format(format!("{name}: empty dims")))?;
            if *rank != dims.len() {
                return Err(format(format!("{name}: rank {rank} but {} dims", dims.len())));
            }
            let numel: usize = dims.iter().product();
            let raw = r.take(numel * 4).ok_or_else(|| format(format!("{name}: payload overruns the file")))?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("four bytes"))).collect();
            tensors.push(NamedTensor { name, dims: dims.to_vec(), data });
        }
        Ok(Checkpoint { config, iteration, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn line(&mut self) -> Option<&'a str> {
        let rest = &self.buf[self.pos..];
        let nl = rest.iter().position(|&b| b == b'\n')?;
        self.pos += nl + 1;
        std::str::from_utf8(&rest[..nl]).ok()
    }
}
