//! Binary weight files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "MALXAIW\0"
//! version    u32
//! digest     32 bytes SHA-256 of the spec JSON
//! spec       u64 length + UTF-8 JSON of the ModelSpec
//! count      u64 number of tensors
//! tensor*    u32 name length, name ("layer/param"), u32 rank,
//!            rank × u64 dims, product(dims) × f64
//! ```

use std::path::Path;

use super::model::{build_model, Model};
use super::spec::ModelSpec;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MALXAIW\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode_weights(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&model.spec().digest());
    let spec = serde_json::to_vec(model.spec()).expect("spec serializes");
    out.extend_from_slice(&(spec.len() as u64).to_le_bytes());
    out.extend_from_slice(&spec);
    let tensors: Vec<(String, &crate::numerics::Tensor)> = model
        .layers()
        .iter()
        .flat_map(|l| l.params().entries().iter().map(move |p| (format!("{}/{}", l.name, p.name), &p.value)))
        .collect();
    out.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_weights(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_weights(model)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::WeightFormat(format!("truncated file: {what} needs {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let v = self.u64(what)?;
        usize::try_from(v).map_err(|_| Error::WeightFormat(format!("{what} {v} too large")))
    }
}

pub struct WeightFile {
    pub spec: ModelSpec,
    pub tensors: Vec<(String, Vec<usize>, Vec<f64>)>,
}

pub fn decode_weights(bytes: &[u8]) -> Result<WeightFile> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::WeightFormat("not a weight file (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::WeightFormat(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let digest: [u8; 32] = r.take(32, "digest")?.try_into().expect("32 bytes");
    let spec_len = r.len("spec length")?;
    let spec: ModelSpec = serde_json::from_slice(r.take(spec_len, "spec")?)
        .map_err(|e| Error::WeightFormat(format!("spec JSON: {e}")))?;
    if spec.digest() != digest {
        return Err(Error::WeightFormat("spec digest mismatch".into()));
    }
    let count = r.len("tensor count")?;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| Error::WeightFormat("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        let dims = (0..rank).map(|_| r.len("dimension")).collect::<Result<Vec<_>>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::WeightFormat(format!("{name}: dimensions overflow")))?;
        let raw = r.take(n.checked_mul(8).unwrap_or(usize::MAX), &name)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        tensors.push((name, dims, data));
    }
    if r.pos != bytes.len() {
        return Err(Error::WeightFormat(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(WeightFile { spec, tensors })
}

fn read(path: &Path) -> Result<WeightFile> {
    decode_weights(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Installs the tensors of `file` into a freshly built model for `spec`.
/// Every parameter must be present with an identical shape.
fn assemble(spec: &ModelSpec, file: WeightFile) -> Result<Model> {
    let mut model = build_model(spec, 0)?;
    let mut by_name: std::collections::HashMap<String, (Vec<usize>, Vec<f64>)> =
        file.tensors.into_iter().map(|(n, s, d)| (n, (s, d))).collect();
    for layer in model.layers_mut() {
        let lname = layer.name.clone();
        for (i, param) in layer.params().entries().to_vec().into_iter().enumerate() {
            let key = format!("{lname}/{}", param.name);
            let (shape, data) = by_name
                .remove(&key)
                .ok_or_else(|| Error::WeightFormat(format!("missing tensor {key}")))?;
            if shape != param.value.shape() {
                return Err(Error::Shape {
                    op: "load_weights",
                    left: param.value.shape().to_vec(),
                    right: shape,
                });
            }
            layer.params_mut().set(i, crate::numerics::Tensor::new(shape, data)?)?;
        }
    }
    if let Some(extra) = by_name.keys().min() {
        return Err(Error::WeightFormat(format!("unexpected tensor {extra}")));
    }
    Ok(model)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Model> {
    let file = read(path.as_ref())?;
    let spec = file.spec.clone();
    assemble(&spec, file)
}

/// Loads the tensors of a weight file into a model built from `spec`,
/// ignoring the spec stored in the file.
pub fn load_weights_into(path: impl AsRef<Path>, spec: &ModelSpec) -> Result<Model> {
    assemble(spec, read(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = build_model(&ModelSpec::default_for(ModelKind::Cnn), 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        save_weights(&m, &path).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(back.layers(), m.layers());
        let rows: Vec<Vec<u16>> = (0..3).map(|i| (0..100).map(|j| ((i + j * 7) % 307) as u16).collect()).collect();
        let a = m.forward(&rows).unwrap();
        let b = back.forward(&rows).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn truncated_file_errors() {
        let m = build_model(&ModelSpec::default_for(ModelKind::Mlp), 1).unwrap();
        let bytes = encode_weights(&m);
        for cut in [0, 5, 20, 60, bytes.len() - 1] {
            assert!(matches!(decode_weights(&bytes[..cut]), Err(Error::WeightFormat(_))), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(decode_weights(&bad), Err(Error::WeightFormat(_))));
    }

    #[test]
    fn mlp_weights_into_cnn_spec() {
        let m = build_model(&ModelSpec::default_for(ModelKind::Mlp), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mlp.bin");
        save_weights(&m, &path).unwrap();
        let err = load_weights_into(&path, &ModelSpec::default_for(ModelKind::Cnn)).unwrap_err();
        assert!(matches!(err, Error::Shape { .. } | Error::WeightFormat(_)), "{err}");
    }
}
