use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const BUNDLE_MAGIC: &[u8; 4] = b"EEGM";
pub const BUNDLE_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BundleKind {
    ChannelModel,
    BoostedEnsemble,
}

impl BundleKind {
    fn code(self) -> u8 {
        match self {
            BundleKind::ChannelModel => 1,
            BundleKind::BoostedEnsemble => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            1 => Ok(BundleKind::ChannelModel),
            2 => Ok(BundleKind::BoostedEnsemble),
            other => Err(Error::Bundle(format!("unknown bundle kind {other}"))),
        }
    }
}

/// Named parameter blob with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

/// Versioned model container: a JSON manifest (config, metadata, tensor
/// names and shapes) followed by little-endian f64 blobs and a CRC32.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub kind: BundleKind,
    pub config: serde_json::Value,
    pub metadata: BTreeMap<String, String>,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    kind: BundleKind,
    config: serde_json::Value,
    metadata: BTreeMap<String, String>,
    tensors: Vec<(String, Vec<usize>)>,
}

impl ModelBundle {
    pub fn new(kind: BundleKind, config: serde_json::Value) -> Self {
        ModelBundle {
            kind,
            config,
            metadata: BTreeMap::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            tensor,
        });
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| &t.tensor)
            .ok_or_else(|| Error::Bundle(format!("missing tensor {name}")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = Manifest {
            kind: self.kind,
            config: self.config.clone(),
            metadata: self.metadata.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| (t.name.clone(), t.tensor.shape().to_vec()))
                .collect(),
        };
        let json = serde_json::to_vec(&manifest)
            .map_err(|e| Error::Bundle(format!("manifest encoding: {e}")))?;
        let n_scalars: usize = self.tensors.iter().map(|t| t.tensor.len()).sum();
        let mut out = Vec::with_capacity(4 + 2 + 1 + 4 + json.len() + 8 + 8 * n_scalars + 4);
        out.extend_from_slice(BUNDLE_MAGIC);
        out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        out.push(self.kind.code());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(n_scalars as u64).to_le_bytes());
        for t in &self.tensors {
            for v in t.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |m: &str| Error::Bundle(m.to_string());
        if bytes.len() < 4 + 2 + 1 + 4 + 8 + 4 {
            return Err(err("file truncated"));
        }
        if &bytes[..4] != BUNDLE_MAGIC {
            return Err(err("not a model bundle (bad magic)"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != BUNDLE_VERSION {
            return Err(Error::Unsupported(format!(
                "bundle format version {version} (this build reads version {BUNDLE_VERSION})"
            )));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(err("checksum mismatch (file corrupted or truncated)"));
        }
        let kind = BundleKind::from_code(bytes[6])?;
        let json_len = u32::from_le_bytes(bytes[7..11].try_into().expect("4 bytes")) as usize;
        let rest = &body[11..];
        if rest.len() < json_len + 8 {
            return Err(err("manifest truncated"));
        }
        let manifest: Manifest = serde_json::from_slice(&rest[..json_len])
            .map_err(|e| Error::Bundle(format!("manifest: {e}")))?;
        if manifest.kind != kind {
            return Err(err("manifest kind disagrees with header"));
        }
        let rest = &rest[json_len..];
        let n = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes"));
        let blob = &rest[8..];
        let mut expected: u64 = 0;
        for (name, shape) in &manifest.tensors {
            let len = shape
                .iter()
                .try_fold(1u64, |a, &d| a.checked_mul(d as u64))
                .ok_or_else(|| Error::Bundle(format!("tensor {name} shape overflows")))?;
            expected = expected
                .checked_add(len)
                .ok_or_else(|| err("tensor sizes overflow"))?;
        }
        if expected != n || blob.len() as u64 != n.saturating_mul(8) {
            return Err(err("blob length disagrees with manifest shapes"));
        }
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        let mut off = 0;
        for (name, shape) in manifest.tensors {
            let len: usize = shape.iter().product();
            let data: Vec<f64> = blob[off..off + 8 * len]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            off += 8 * len;
            tensors.push(NamedTensor {
                name,
                tensor: Tensor::new(shape, data)?,
            });
        }
        Ok(ModelBundle {
            kind,
            config: manifest.config,
            metadata: manifest.metadata,
            tensors,
        })
    }
}

/// Writes the bundle atomically (temporary file, then rename).
pub fn save_model(bundle: &ModelBundle, path: &Path) -> Result<()> {
    let bytes = bundle.to_bytes()?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelBundle> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelBundle::from_bytes(&bytes).map_err(|e| match e {
        Error::Bundle(m) => Error::Bundle(format!("{}: {m}", path.display())),
        other => other,
    })
}
