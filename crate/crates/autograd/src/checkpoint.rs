//! Checkpoint container.
//!
//! Layout: a `u64` little-endian manifest byte length, the JSON manifest,
//! then the raw little-endian IEEE-754 tensor payloads back to back. The
//! manifest records name, shape, trainability, dtype, and byte extents for
//! every tensor plus a caller-owned `meta` document (architecture
//! hyperparameters, training progress, and the like).

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::optim::ParamSet;
use crate::tensor::{Dtype, Scalar, Tensor};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    /// Byte offset into the payload region.
    pub offset: u64,
    pub nbytes: u64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub dtype: Dtype,
    pub tensors: Vec<TensorEntry>,
    pub meta: serde_json::Value,
}

/// Everything read back from a checkpoint file.
#[derive(Debug)]
pub struct Loaded<T> {
    pub tensors: Vec<(String, Tensor<T>, bool)>,
    pub meta: serde_json::Value,
}

impl<T: Scalar> Loaded<T> {
    pub fn tensor_map(&self) -> HashMap<String, Tensor<T>> {
        self.tensors.iter().map(|(n, t, _)| (n.clone(), t.clone())).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|(n, _, _)| n == name).map(|(_, t, _)| t)
    }

    /// Copies values into an existing parameter set by name. Every parameter
    /// must be present with a matching shape; extra tensors in the file
    /// (optimizer state, say) are ignored.
    pub fn fill_params(&self, params: &mut ParamSet<T>) -> Result<()> {
        let map: HashMap<&str, &Tensor<T>> =
            self.tensors.iter().map(|(n, t, _)| (n.as_str(), t)).collect();
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let name = params.get(id).name.clone();
            let src = map
                .get(name.as_str())
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if src.shape() != params.value(id).shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, parameter expects {:?}",
                    src.shape(),
                    params.value(id).shape()
                )));
            }
            *params.value_mut(id) = (*src).clone();
        }
        Ok(())
    }
}

/// Writes tensors plus a metadata document.
pub fn save<T: Scalar>(
    path: &Path,
    entries: &[(String, &Tensor<T>, bool)],
    meta: &serde_json::Value,
) -> Result<()> {
    let mut tensors = Vec::with_capacity(entries.len());
    let mut offset = 0u64;
    for (name, t, trainable) in entries {
        let nbytes = (t.numel() * T::DTYPE.size_of()) as u64;
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            trainable: *trainable,
            offset,
            nbytes,
        });
        offset += nbytes;
    }
    let manifest = Manifest {
        version: FORMAT_VERSION,
        dtype: T::DTYPE,
        tensors,
        meta: meta.clone(),
    };
    let manifest_bytes = serde_json::to_vec(&manifest)
        .map_err(|e| Error::Checkpoint(format!("manifest encode: {e}")))?;

    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&manifest_bytes)?;
    let mut buf = Vec::new();
    for (_, t, _) in entries {
        buf.clear();
        T::write_le(t.data(), &mut buf);
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Convenience wrapper: all parameters of a set plus optional extra tensors
/// (optimizer state), all marked with the parameters' trainability.
pub fn save_params<T: Scalar>(
    path: &Path,
    params: &ParamSet<T>,
    extra: &[(String, Tensor<T>)],
    meta: &serde_json::Value,
) -> Result<()> {
    let mut entries: Vec<(String, &Tensor<T>, bool)> = params
        .iter()
        .map(|(_, p)| (p.name.clone(), &p.value, p.trainable))
        .collect();
    for (name, t) in extra {
        entries.push((name.clone(), t, true));
    }
    save(path, &entries, meta)
}

fn read_manifest(r: &mut impl Read, path: &Path) -> Result<Manifest> {
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes)
        .map_err(|_| Error::Checkpoint(format!("{}: truncated header", path.display())))?;
    let len = u64::from_le_bytes(len_bytes);
    if len > 1 << 30 {
        return Err(Error::Checkpoint(format!("{}: implausible manifest length {len}", path.display())));
    }
    let mut manifest_bytes = vec![0u8; len as usize];
    r.read_exact(&mut manifest_bytes)
        .map_err(|_| Error::Checkpoint(format!("{}: truncated manifest", path.display())))?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| Error::Checkpoint(format!("{}: manifest decode: {e}", path.display())))?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported format version {} (expected {FORMAT_VERSION})",
            path.display(),
            manifest.version
        )));
    }
    Ok(manifest)
}

/// Reads just the manifest metadata, without tensor payloads.
pub fn peek(path: &Path) -> Result<Manifest> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    read_manifest(&mut r, path)
}

/// Reads the whole checkpoint. The stored dtype must match `T`.
pub fn load<T: Scalar>(path: &Path) -> Result<Loaded<T>> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let manifest = read_manifest(&mut r, path)?;
    if manifest.dtype != T::DTYPE {
        return Err(Error::Checkpoint(format!(
            "{}: stored dtype {} does not match requested {}",
            path.display(),
            manifest.dtype,
            T::DTYPE
        )));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;

    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        let numel: usize = entry.shape.iter().product();
        if entry.nbytes as usize != numel * T::DTYPE.size_of() {
            return Err(Error::Checkpoint(format!(
                "{}: tensor `{}` shape {:?} inconsistent with {} bytes",
                path.display(),
                entry.name,
                entry.shape,
                entry.nbytes
            )));
        }
        let start = entry.offset as usize;
        let end = start + entry.nbytes as usize;
        if end > payload.len() {
            return Err(Error::Checkpoint(format!(
                "{}: tensor `{}` extends past end of payload",
                path.display(),
                entry.name
            )));
        }
        let data = T::read_le(&payload[start..end]);
        tensors.push((entry.name.clone(), Tensor::new(entry.shape.clone(), data), entry.trainable));
    }
    Ok(Loaded { tensors, meta: manifest.meta })
}
