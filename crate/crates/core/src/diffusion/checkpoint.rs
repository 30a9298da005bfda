//! `GOHD` checkpoint files: schedule constants plus a table of named `f32`
//! tensors.
//!
//! Layout (little-endian): magic `GOHD`, version `u32`, `t_max` `u32`,
//! `beta_start` `f64`, `beta_end` `f64`, tensor count `u32`, then per tensor:
//! name length `u32`, UTF-8 name, dtype tag `u8` (0 = f32), rank `u32`,
//! dims `u64 × rank`, payload.

use std::path::Path;

use ndarray::Array2;

use crate::diffusion::{build_linear_schedule, DenoiserModel, NoiseSchedule};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GOHD";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
const AUX_PREFIX: &str = "aux/";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            dims: vec![data.len()],
            data,
        }
    }

    fn from_matrix(m: &Array2<f64>) -> Self {
        Self {
            dims: vec![m.nrows(), m.ncols()],
            data: m.iter().copied().collect(),
        }
    }
}

/// A model, its schedule and any auxiliary tensors (normalization
/// statistics and the like).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub schedule: NoiseSchedule,
    pub model: DenoiserModel,
    pub aux: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn aux(&self, name: &str) -> Option<&Tensor> {
        self.aux.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.schedule.t_max() as u32).to_le_bytes());
        out.extend_from_slice(&self.schedule.beta_start().to_le_bytes());
        out.extend_from_slice(&self.schedule.beta_end().to_le_bytes());
        let model: Vec<(String, Tensor)> = self
            .model
            .tensors()
            .map(|(n, t)| (n.to_string(), Tensor::from_matrix(t)))
            .collect();
        let aux = self.aux.iter().map(|(n, t)| (format!("{AUX_PREFIX}{n}"), t.clone()));
        let all: Vec<(String, Tensor)> = model.into_iter().chain(aux).collect();
        out.extend_from_slice(&(all.len() as u32).to_le_bytes());
        for (name, t) in &all {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(DTYPE_F32);
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for d in &t.dims {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::format("GOHD", "bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format("GOHD", format!("unsupported version {version}")));
        }
        let t_max = r.u32()? as usize;
        let beta_start = r.f64()?;
        let beta_end = r.f64()?;
        let schedule = build_linear_schedule(t_max, beta_start, beta_end)
            .map_err(|e| Error::format("GOHD", e.to_string()))?;
        let count = r.u32()?;
        let mut model = Vec::new();
        let mut aux = Vec::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::format("GOHD", "tensor name is not UTF-8"))?
                .to_string();
            let dtype = r.take(1)?[0];
            if dtype != DTYPE_F32 {
                return Err(Error::format("GOHD", format!("unknown dtype tag {dtype}")));
            }
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::format("GOHD", "tensor too large"))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            let t = Tensor { dims, data };
            match name.strip_prefix(AUX_PREFIX) {
                Some(a) => aux.push((a.to_string(), t)),
                None => {
                    if t.dims.len() != 2 {
                        return Err(Error::format("GOHD", format!("{name} is not a matrix")));
                    }
                    let m = Array2::from_shape_vec((t.dims[0], t.dims[1]), t.data).expect("sized above");
                    model.push((name, m));
                }
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::format("GOHD", "trailing bytes"));
        }
        Ok(Self {
            schedule,
            model: DenoiserModel::from_tensors(model)?,
            aux,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::atomic_write(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format("GOHD", "unexpected end of file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
