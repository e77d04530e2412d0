//! Reading and writing named tensors in the safetensors format.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;

use crate::error::{Error, Result};

/// A named tensor: shape and row-major values.
pub type NamedTensor = (Vec<usize>, Vec<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreType {
    F32,
    F64,
}

pub fn write_tensors(
    path: &Path,
    tensors: &BTreeMap<String, NamedTensor>,
    store: StoreType,
    metadata: Option<HashMap<String, String>>,
) -> Result<()> {
    let bytes: Vec<(String, Vec<usize>, Vec<u8>)> = tensors
        .iter()
        .map(|(name, (shape, values))| {
            let raw = match store {
                StoreType::F32 => values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect(),
                StoreType::F64 => values.iter().flat_map(|&v| v.to_le_bytes()).collect(),
            };
            (name.clone(), shape.clone(), raw)
        })
        .collect();
    let dtype = match store {
        StoreType::F32 => Dtype::F32,
        StoreType::F64 => Dtype::F64,
    };
    let views = bytes
        .iter()
        .map(|(n, s, b)| {
            TensorView::new(dtype, s.clone(), b)
                .map(|v| (n.as_str(), v))
                .map_err(|e| Error::Weights(format!("{n}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    safetensors::serialize_to_file(views, &metadata, path)
        .map_err(|e| Error::Weights(format!("writing {}: {e}", path.display())))
}

/// Reads every floating-point tensor; integer tensors (such as batch
/// counters) are skipped.
pub fn read_tensors(path: &Path) -> Result<(BTreeMap<String, NamedTensor>, HashMap<String, String>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let werr = |e: safetensors::SafeTensorError| Error::Weights(format!("{}: {e}", path.display()));
    let (_, meta) = SafeTensors::read_metadata(&bytes).map_err(werr)?;
    let st = SafeTensors::deserialize(&bytes).map_err(werr)?;
    let mut out = BTreeMap::new();
    for (name, view) in st.tensors() {
        let data = view.data();
        let values: Vec<f64> = match view.dtype() {
            Dtype::F64 => data
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
            Dtype::F32 => data
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
                .collect(),
            Dtype::I64 | Dtype::I32 | Dtype::U8 | Dtype::BOOL => continue,
            other => {
                return Err(Error::Weights(format!("{name}: unsupported element type {other:?}")));
            }
        };
        out.insert(name, (view.shape().to_vec(), values));
    }
    Ok((out, meta.metadata().clone().unwrap_or_default()))
}
