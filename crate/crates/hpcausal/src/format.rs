//! Binary file formats: model weights (`ZOOW`), datasets (`ZOOD`) and
//! per-instance outcome matrices (`ZOOE`). All integers are `u32` and all
//! payloads `f32`, little-endian.

use std::fs;
use std::path::Path;

use hpcausal_core::data::Dataset;
use hpcausal_core::nn::{ArchitectureSpec, ParameterSet, Shape};

use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"ZOOW";
pub const DATASET_MAGIC: &[u8; 4] = b"ZOOD";
pub const MATRIX_MAGIC: &[u8; 4] = b"ZOOE";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn new(magic: &[u8; 4]) -> Self {
        let mut w = Writer(magic.to_vec());
        w.u32(VERSION);
        w
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn len(&mut self, v: usize, path: &Path) -> Result<()> {
        let v = u32::try_from(v)
            .map_err(|_| Error::format(path, format!("{v} does not fit in u32")))?;
        self.u32(v);
        Ok(())
    }

    fn f32s(&mut self, values: &[f64]) {
        for &v in values {
            self.0.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
    what: String,
}

impl<'a> Reader<'a> {
    fn open(bytes: &'a [u8], path: &'a Path, magic: &[u8; 4], what: String) -> Result<Self> {
        let mut r = Reader {
            bytes,
            pos: 0,
            path,
            what,
        };
        let m = r.take(4)?;
        if m != magic {
            return Err(r.err(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(magic)
            )));
        }
        let v = r.u32()?;
        if v != VERSION {
            return Err(r.err(format!(
                "unsupported format version {v} (this build reads {VERSION})"
            )));
        }
        Ok(r)
    }

    fn err(&self, msg: String) -> Error {
        Error::format(self.path, format!("{}: {msg}", self.what))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.err(format!(
                "truncated file ({} bytes, needed {} more at offset {})",
                self.bytes.len(),
                n,
                self.pos
            ))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(
            n.checked_mul(4)
                .ok_or_else(|| self.err("size overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect())
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.err(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(Error::io(path))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(Error::io(path))
}

pub fn encode_weights(params: &ParameterSet, path: &Path) -> Result<Vec<u8>> {
    let mut w = Writer::new(WEIGHTS_MAGIC);
    w.len(params.layout().len(), path)?;
    for t in params.layout() {
        w.len(t.dims.len(), path)?;
        for &d in &t.dims {
            w.len(d, path)?;
        }
    }
    w.f32s(params.values());
    Ok(w.0)
}

pub fn write_weights(path: &Path, params: &ParameterSet) -> Result<()> {
    write(path, &encode_weights(params, path)?)
}

/// Reads a weight file and checks it against `arch`.
pub fn read_weights(path: &Path, arch: &ArchitectureSpec, model_id: u64) -> Result<ParameterSet> {
    let bytes = read(path)?;
    let mut r = Reader::open(&bytes, path, WEIGHTS_MAGIC, format!("model {model_id}"))?;
    let n_tensors = r.usize()?;
    let mut dims = Vec::with_capacity(n_tensors.min(64));
    let mut total = 0usize;
    for _ in 0..n_tensors {
        let rank = r.usize()?;
        let d: Vec<usize> = (0..rank).map(|_| r.usize()).collect::<Result<_>>()?;
        total = total.saturating_add(d.iter().product());
        dims.push(d);
    }
    let values = r.f32s(total)?;
    r.finish()?;
    ParameterSet::from_tensors(arch, &dims, values)
        .map_err(|e| Error::format(path, format!("model {model_id}: {e}")))
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = Writer::new(DATASET_MAGIC);
    for v in [
        data.shape.height,
        data.shape.width,
        data.shape.channels,
        data.num_classes,
        data.len(),
        data.test_start,
    ] {
        w.len(v, path)?;
    }
    for &l in &data.labels {
        w.len(l, path)?;
    }
    w.f32s(&data.inputs);
    write(path, &w.0)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = read(path)?;
    let mut r = Reader::open(&bytes, path, DATASET_MAGIC, "dataset".into())?;
    let (h, w, c, k, n, test_start) = (
        r.usize()?,
        r.usize()?,
        r.usize()?,
        r.usize()?,
        r.usize()?,
        r.usize()?,
    );
    let labels: Vec<usize> = (0..n).map(|_| r.usize()).collect::<Result<_>>()?;
    let shape = Shape::new(h, w, c);
    let inputs = r.f32s(n.saturating_mul(shape.len()))?;
    r.finish()?;
    Ok(Dataset::new(shape, k, inputs, labels, test_start)?)
}

/// Row-major `rows × dim` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl Matrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut w = Writer::new(MATRIX_MAGIC);
    w.len(m.rows, path)?;
    w.len(m.dim, path)?;
    w.f32s(&m.values);
    write(path, &w.0)
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let bytes = read(path)?;
    let mut r = Reader::open(&bytes, path, MATRIX_MAGIC, "outcome matrix".into())?;
    let (rows, dim) = (r.usize()?, r.usize()?);
    let values = r.f32s(rows.saturating_mul(dim))?;
    r.finish()?;
    Ok(Matrix { rows, dim, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use hpcausal_core::data::{generate_synthetic, DatasetSpec};
    use hpcausal_core::nn::{init_parameters, InitKind};

    #[test]
    fn weights_round_trip_and_reject_damage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("7.bin");
        let arch = ArchitectureSpec::desk_default(3);
        let p = init_parameters(&arch, InitKind::Normal, 0.1, InitKind::Uniform, 4).unwrap();
        write_weights(&path, &p).unwrap();
        let q = read_weights(&path, &arch, 7).unwrap();
        assert_eq!(p, q);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        let err = read_weights(&path, &arch, 7).unwrap_err().to_string();
        assert!(
            err.contains("model 7") && err.contains("truncated"),
            "{err}"
        );
        let mut bad = bytes.clone();
        bad[4] = 9;
        fs::write(&path, &bad).unwrap();
        assert!(read_weights(&path, &arch, 7)
            .unwrap_err()
            .to_string()
            .contains("version 9"));
        fs::write(&path, &bytes).unwrap();
        let other = ArchitectureSpec::desk_default(4);
        assert!(read_weights(&path, &other, 7).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.zood");
        let mut data = generate_synthetic(&DatasetSpec::shapes(3, 40, 2)).unwrap();
        for v in &mut data.inputs {
            *v = f64::from(*v as f32);
        }
        write_dataset(&path, &data).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), data);
    }
}
