//! Weights file: magic `L2CI`, `u16` version, a config block, then named
//! little-endian `f32` arrays.

use std::path::Path;

use super::params::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::instance::ProblemKind;

const MAGIC: &[u8; 4] = b"L2CI";
const VERSION: u16 = 1;

pub fn params_to_bytes(params: &ModelParams<f32>) -> Vec<u8> {
    let c = &params.config;
    let mut out = Vec::with_capacity(16 + 4 * params.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match c.kind {
        ProblemKind::Tsp => 0,
        ProblemKind::Cvrp => 1,
    });
    for v in [c.d, c.layers, c.heads, c.d_ff, c.input_dim()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(c.include_unvisited as u8);
    out.extend_from_slice(&(c.k_filter.unwrap_or(0) as u32).to_le_bytes());
    let tensors = params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, m) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(2);
        out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::CorruptFile(format!("truncated at byte {}", self.at)))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn params_from_bytes(buf: &[u8]) -> Result<ModelParams<f32>> {
    let mut r = Reader { buf, at: 0 };
    if r.take(4).map_err(|_| Error::VersionMismatch("file too short for magic".into()))? != MAGIC {
        return Err(Error::VersionMismatch("bad magic bytes".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::VersionMismatch(format!("version {version}, expected {VERSION}")));
    }
    let kind = match r.u8()? {
        0 => ProblemKind::Tsp,
        1 => ProblemKind::Cvrp,
        k => return Err(Error::CorruptFile(format!("unknown problem kind {k}"))),
    };
    let (d, layers, heads, d_ff, input_dim) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    let include_unvisited = match r.u8()? {
        0 => false,
        1 => true,
        v => return Err(Error::CorruptFile(format!("bad flag byte {v}"))),
    };
    let k_filter = Some(r.u32()?).filter(|&k| k > 0);
    let config = ModelConfig { kind, d, layers, heads, d_ff, include_unvisited, k_filter };
    if config.input_dim() != input_dim || config.validate().is_err() || layers > 1024 || d > 1 << 16 || d_ff > 1 << 20 {
        return Err(Error::CorruptFile("inconsistent config block".into()));
    }
    let mut params = ModelParams::<f32>::zeros(config)?;
    let count = r.u32()?;
    let mut slots = params.tensors_mut();
    if count != slots.len() {
        return Err(Error::CorruptFile(format!("{count} arrays, expected {}", slots.len())));
    }
    for (name, m) in slots.iter_mut() {
        let len = r.u16()? as usize;
        let got = r.take(len)?;
        if got != name.as_bytes() {
            return Err(Error::CorruptFile(format!("expected array {name}, found {}", String::from_utf8_lossy(got))));
        }
        let rank = r.u8()? as usize;
        let dims: Vec<usize> = (0..rank).map(|_| r.u32()).collect::<Result<_>>()?;
        if dims != [m.rows(), m.cols()] {
            return Err(Error::CorruptFile(format!("array {name} has shape {dims:?}, expected {:?}", m.shape())));
        }
        let bytes = r.take(4 * m.rows() * m.cols())?;
        for (v, b) in m.as_mut_slice().iter_mut().zip(bytes.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().unwrap());
        }
    }
    drop(slots);
    if r.at != buf.len() {
        return Err(Error::CorruptFile(format!("{} trailing bytes", buf.len() - r.at)));
    }
    Ok(params)
}

pub fn save_params(params: &ModelParams<f32>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, params_to_bytes(params))?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ModelParams<f32>> {
    params_from_bytes(&std::fs::read(path)?)
}
