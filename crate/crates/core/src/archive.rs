//! Framework-neutral checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "SGLB1\n"                      6 bytes of magic
//! manifest_len: u64              length of the JSON manifest in bytes
//! manifest: [u8; manifest_len]   UTF-8 JSON, keys sorted
//! data: [u8]                     raw f32 values, offsets relative to here
//! ```
//!
//! The manifest holds `manifest_version`, `metadata` and `tensors`
//! (name -> `{dtype: "f32", shape, offset, nbytes}`). Tensors are kept in
//! name order, which is also the order their bytes appear in the data
//! section, so serialization is deterministic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"SGLB1\n";
pub const MANIFEST_VERSION: u32 = 1;
const DTYPE_F32: &str = "f32";

/// Half of a segmentation network a tensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Encoder,
    Decoder,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Encoder => "encoder",
            Role::Decoder => "decoder",
        })
    }
}

/// Which tensors an averaging operation touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Encoder,
    Decoder,
    Full,
}

impl Scope {
    pub fn role(self) -> Option<Role> {
        match self {
            Scope::Encoder => Some(Role::Encoder),
            Scope::Decoder => Some(Role::Decoder),
            Scope::Full => None,
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Encoder => "encoder",
            Scope::Decoder => "decoder",
            Scope::Full => "full",
        })
    }
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encoder" => Ok(Scope::Encoder),
            "decoder" => Ok(Scope::Decoder),
            "full" => Ok(Scope::Full),
            other => Err(Error::Parse(format!("unknown scope `{other}`"))),
        }
    }
}

/// Which averaging rule produced an archive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AveragingMode {
    /// Checkpoints along one training run.
    Swa,
    /// Final weights of runs with different hyperparameters.
    Soup,
}

impl fmt::Display for AveragingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AveragingMode::Swa => "swa",
            AveragingMode::Soup => "soup",
        })
    }
}

impl FromStr for AveragingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "swa" => Ok(AveragingMode::Swa),
            "soup" => Ok(AveragingMode::Soup),
            other => Err(Error::Parse(format!("unknown averaging mode `{other}`"))),
        }
    }
}

/// Present on archives produced by weight averaging.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub base: String,
    pub mode: AveragingMode,
    pub scope: Scope,
    /// Contributing model ids, in the order they were accumulated.
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ArchiveMetadata {
    pub model_id: String,
    /// Training iteration the weights were taken at.
    pub iteration: u64,
    /// Identifier of the hyperparameter configuration of the run.
    pub hyperparam_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role_prefixes: Option<BTreeMap<Role, Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    /// Source parameters the exporter deliberately left out.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded_tensors: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ArchiveMetadata {
    pub fn new(model_id: impl Into<String>, iteration: u64, hyperparam_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            iteration,
            hyperparam_id: hyperparam_id.into(),
            ..Default::default()
        }
    }

    pub fn with_roles(mut self, encoder: &[&str], decoder: &[&str]) -> Self {
        let mut map = BTreeMap::new();
        map.insert(Role::Encoder, encoder.iter().map(|s| s.to_string()).collect());
        map.insert(Role::Decoder, decoder.iter().map(|s| s.to_string()).collect());
        self.role_prefixes = Some(map);
        self
    }

    fn role_of(&self, name: &str) -> Option<Role> {
        let map = self.role_prefixes.as_ref()?;
        map.iter()
            .find(|(_, prefixes)| prefixes.iter().any(|p| name.starts_with(p.as_str())))
            .map(|(role, _)| *role)
    }
}

/// A dense f32 tensor held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if let Some(pos) = shape.iter().position(|&d| d == 0) {
            return Err(Error::Validation(format!(
                "shape {shape:?} has a zero dimension at axis {pos}"
            )));
        }
        let expected = element_count(&shape).ok_or_else(|| Error::Validation(format!("shape {shape:?} overflows")))?;
        if expected != data.len() {
            return Err(Error::Validation(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn nbytes(&self) -> usize {
        self.data.len() * 4
    }

    /// Element-wise bit equality (distinguishes -0.0 and NaN payloads).
    pub fn bits_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

fn element_count(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

/// Manifest entry describing where a tensor's bytes live.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub dtype: String,
    pub nbytes: u64,
    pub offset: u64,
    pub shape: Vec<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    manifest_version: u32,
    metadata: ArchiveMetadata,
    tensors: BTreeMap<String, TensorRecord>,
}

/// Named tensors plus the metadata locating them on a training trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorArchive {
    pub manifest_version: u32,
    pub metadata: ArchiveMetadata,
    tensors: BTreeMap<String, Tensor>,
}

impl TensorArchive {
    pub fn new(metadata: ArchiveMetadata) -> Self {
        Self {
            manifest_version: MANIFEST_VERSION,
            metadata,
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::Validation("tensor names must be non-empty".into()));
        }
        if self.tensors.contains_key(&name) {
            return Err(Error::Validation(format!("duplicate tensor name `{name}`")));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn with_tensor(mut self, name: &str, shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        self.insert(name, Tensor::new(shape, data)?)?;
        Ok(self)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor> {
        &self.tensors
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Field-for-field equality with tensor data compared bitwise.
    pub fn bits_eq(&self, other: &TensorArchive) -> bool {
        self.manifest_version == other.manifest_version
            && self.metadata == other.metadata
            && self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|((na, a), (nb, b))| na == nb && a.bits_eq(b))
    }

    /// Checks every invariant the file format relies on.
    pub fn validate(&self) -> Result<()> {
        if self.manifest_version != MANIFEST_VERSION {
            return Err(Error::Validation(format!(
                "unsupported manifest_version {}",
                self.manifest_version
            )));
        }
        for (name, t) in &self.tensors {
            if name.is_empty() {
                return Err(Error::Validation("tensor names must be non-empty".into()));
            }
            if t.shape.contains(&0) {
                return Err(Error::Validation(format!("tensor `{name}` has a zero dimension")));
            }
            if element_count(&t.shape) != Some(t.data.len()) {
                return Err(Error::Validation(format!(
                    "tensor `{name}` element count does not match its shape"
                )));
            }
        }
        check_role_disjointness(&self.metadata, self.names()).map_err(Error::Validation)
    }

    /// Tensor names covered by `scope`.
    pub fn partition_by_role(&self, scope: Scope) -> Result<BTreeSet<String>> {
        let Some(role) = scope.role() else {
            return Ok(self.tensors.keys().cloned().collect());
        };
        if self.metadata.role_prefixes.is_none() {
            return Err(Error::MissingRoleMap(scope.to_string()));
        }
        Ok(self
            .tensors
            .keys()
            .filter(|name| self.metadata.role_of(name) == Some(role))
            .cloned()
            .collect())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut records = BTreeMap::new();
        let mut offset = 0u64;
        for (name, t) in &self.tensors {
            let nbytes = t.nbytes() as u64;
            records.insert(
                name.clone(),
                TensorRecord {
                    dtype: DTYPE_F32.to_string(),
                    nbytes,
                    offset,
                    shape: t.shape.iter().map(|&d| d as u64).collect(),
                },
            );
            offset += nbytes;
        }
        let manifest = Manifest {
            manifest_version: self.manifest_version,
            metadata: self.metadata.clone(),
            tensors: records,
        };
        // Going through `Value` sorts every object's keys.
        let json = serde_json::to_vec(&serde_json::to_value(&manifest)?)?;

        let mut out = Vec::with_capacity(MAGIC.len() + 8 + json.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.tensors.values() {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Format("missing SGLB1 magic".into()));
        }
        let rest = &bytes[MAGIC.len()..];
        if rest.len() < 8 {
            return Err(Error::Format("truncated manifest length".into()));
        }
        let manifest_len = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes"));
        let rest = &rest[8..];
        if manifest_len > rest.len() as u64 {
            return Err(Error::Format(format!(
                "manifest length {manifest_len} exceeds remaining {} bytes",
                rest.len()
            )));
        }
        let (json, data) = rest.split_at(manifest_len as usize);
        let text = std::str::from_utf8(json).map_err(|e| Error::Format(format!("manifest is not UTF-8: {e}")))?;
        let manifest: Manifest =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("manifest is not valid: {e}")))?;
        if manifest.manifest_version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "unsupported manifest_version {}",
                manifest.manifest_version
            )));
        }

        let mut extents: Vec<(u64, u64, &str)> = Vec::with_capacity(manifest.tensors.len());
        for (name, rec) in &manifest.tensors {
            if name.is_empty() {
                return Err(Error::Format("empty tensor name".into()));
            }
            if rec.dtype != DTYPE_F32 {
                return Err(Error::UnsupportedDtype(rec.dtype.clone()));
            }
            if rec.shape.contains(&0) {
                return Err(Error::Format(format!("tensor `{name}` has a zero dimension")));
            }
            let elements = rec
                .shape
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| Error::Format(format!("tensor `{name}` shape overflows")))?;
            if elements != rec.nbytes {
                return Err(Error::Integrity(format!(
                    "tensor `{name}` declares nbytes={} but shape {:?} needs {elements}",
                    rec.nbytes, rec.shape
                )));
            }
            if rec.offset % 4 != 0 {
                return Err(Error::Integrity(format!(
                    "tensor `{name}` offset {} is not 4-byte aligned",
                    rec.offset
                )));
            }
            let end = rec.offset.checked_add(rec.nbytes).filter(|&e| e <= data.len() as u64);
            if end.is_none() {
                return Err(Error::Integrity(format!(
                    "tensor `{name}` extent [{}, +{}) exceeds data section of {} bytes",
                    rec.offset,
                    rec.nbytes,
                    data.len()
                )));
            }
            extents.push((rec.offset, rec.offset + rec.nbytes, name));
        }
        extents.sort_unstable();
        for pair in extents.windows(2) {
            if pair[1].0 < pair[0].1 {
                return Err(Error::Integrity(format!(
                    "tensors `{}` and `{}` overlap",
                    pair[0].2, pair[1].2
                )));
            }
        }
        check_role_disjointness(&manifest.metadata, manifest.tensors.keys().map(String::as_str))
            .map_err(Error::Format)?;

        let mut tensors = BTreeMap::new();
        for (name, rec) in manifest.tensors {
            let start = rec.offset as usize;
            let end = start + rec.nbytes as usize;
            let values = data[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let shape = rec.shape.iter().map(|&d| d as usize).collect();
            tensors.insert(name, Tensor { shape, data: values });
        }
        Ok(Self {
            manifest_version: manifest.manifest_version,
            metadata: manifest.metadata,
            tensors,
        })
    }
}

fn check_role_disjointness<'a>(
    metadata: &ArchiveMetadata,
    names: impl Iterator<Item = &'a str>,
) -> std::result::Result<(), String> {
    let Some(map) = &metadata.role_prefixes else {
        return Ok(());
    };
    for name in names {
        let roles: Vec<Role> = map
            .iter()
            .filter(|(_, prefixes)| prefixes.iter().any(|p| name.starts_with(p.as_str())))
            .map(|(r, _)| *r)
            .collect();
        if roles.len() > 1 {
            return Err(format!("tensor `{name}` matches prefixes of several roles {roles:?}"));
        }
    }
    Ok(())
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<TensorArchive> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    TensorArchive::from_bytes(&bytes)
}

pub fn write_archive(archive: &TensorArchive, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = archive.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_role_archive() -> TensorArchive {
        TensorArchive::new(ArchiveMetadata::new("m0", 1000, "theta0").with_roles(&["enc."], &["dec."]))
            .with_tensor("enc.a", vec![2], vec![1.0, 2.0])
            .unwrap()
            .with_tensor("dec.b", vec![1], vec![3.0])
            .unwrap()
    }

    /// Builds a raw file from a hand-written manifest.
    fn raw_file(manifest: &str, data: &[u8]) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        out.extend_from_slice(data);
        out
    }

    const META: &str = r#"{"hyperparam_id":"h","iteration":0,"model_id":"m"}"#;

    #[test]
    fn six_element_tensor_has_24_bytes() {
        let a = TensorArchive::new(ArchiveMetadata::new("m", 0, "h"))
            .with_tensor("enc.w", vec![2, 3], (0..6).map(|i| i as f32).collect())
            .unwrap();
        let back = TensorArchive::from_bytes(&a.to_bytes().unwrap()).unwrap();
        assert_eq!(back.get("enc.w").unwrap().nbytes(), 24);
        assert!(back.bits_eq(&a));
    }

    #[test]
    fn wrong_nbytes_is_integrity_error() {
        let manifest = format!(
            r#"{{"manifest_version":1,"metadata":{META},"tensors":{{"enc.w":{{"dtype":"f32","nbytes":20,"offset":0,"shape":[2,3]}}}}}}"#
        );
        let err = TensorArchive::from_bytes(&raw_file(&manifest, &[0u8; 24])).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)), "{err}");
    }

    #[test]
    fn overlapping_extents_rejected() {
        let manifest = format!(
            r#"{{"manifest_version":1,"metadata":{META},"tensors":{{"a":{{"dtype":"f32","nbytes":8,"offset":0,"shape":[2]}},"b":{{"dtype":"f32","nbytes":8,"offset":4,"shape":[2]}}}}}}"#
        );
        let err = TensorArchive::from_bytes(&raw_file(&manifest, &[0u8; 16])).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)), "{err}");
    }

    #[test]
    fn misaligned_offset_rejected() {
        let manifest = format!(
            r#"{{"manifest_version":1,"metadata":{META},"tensors":{{"a":{{"dtype":"f32","nbytes":4,"offset":2,"shape":[1]}}}}}}"#
        );
        let err = TensorArchive::from_bytes(&raw_file(&manifest, &[0u8; 8])).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)), "{err}");
    }

    #[test]
    fn extent_past_data_rejected() {
        let manifest = format!(
            r#"{{"manifest_version":1,"metadata":{META},"tensors":{{"a":{{"dtype":"f32","nbytes":8,"offset":4,"shape":[2]}}}}}}"#
        );
        let err = TensorArchive::from_bytes(&raw_file(&manifest, &[0u8; 8])).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)), "{err}");
    }

    #[test]
    fn non_f32_dtype_rejected() {
        let manifest = format!(
            r#"{{"manifest_version":1,"metadata":{META},"tensors":{{"a":{{"dtype":"f16","nbytes":2,"offset":0,"shape":[1]}}}}}}"#
        );
        let err = TensorArchive::from_bytes(&raw_file(&manifest, &[0u8; 4])).unwrap_err();
        assert!(matches!(err, Error::UnsupportedDtype(ref d) if d == "f16"), "{err}");
    }

    #[test]
    fn bad_magic_and_bad_json_are_format_errors() {
        assert!(matches!(TensorArchive::from_bytes(b"NOPE"), Err(Error::Format(_))));
        let bytes = raw_file("{not json", &[]);
        assert!(matches!(TensorArchive::from_bytes(&bytes), Err(Error::Format(_))));
        let mut short = MAGIC.to_vec();
        short.extend_from_slice(&100u64.to_le_bytes());
        assert!(matches!(TensorArchive::from_bytes(&short), Err(Error::Format(_))));
    }

    #[test]
    fn empty_archive_round_trips() {
        let a = TensorArchive::new(ArchiveMetadata::new("empty", 0, "h"));
        let bytes = a.to_bytes().unwrap();
        let back = TensorArchive::from_bytes(&bytes).unwrap();
        assert!(back.is_empty());
        assert_eq!(back, a);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(Tensor::new(vec![2, 0], vec![]), Err(Error::Validation(_))));
    }

    #[test]
    fn writes_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = two_role_archive();
        let p1 = dir.path().join("a.sglb");
        let p2 = dir.path().join("b.sglb");
        write_archive(&a, &p1).unwrap();
        write_archive(&a, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert!(read_archive(&p1).unwrap().bits_eq(&a));
    }

    #[test]
    fn manifest_keys_are_sorted() {
        let bytes = two_role_archive().to_bytes().unwrap();
        let len = u64::from_le_bytes(bytes[6..14].try_into().unwrap()) as usize;
        let text = std::str::from_utf8(&bytes[14..14 + len]).unwrap();
        let dec = text.find("\"dec.b\"").unwrap();
        let enc = text.find("\"enc.a\"").unwrap();
        assert!(dec < enc);
        assert!(text.find("\"manifest_version\"").unwrap() < text.find("\"metadata\"").unwrap());
        assert!(text.find("\"metadata\"").unwrap() < text.find("\"tensors\"").unwrap());
    }

    #[test]
    fn partition_by_role_prefixes() {
        let a = two_role_archive();
        let enc = a.partition_by_role(Scope::Encoder).unwrap();
        assert_eq!(enc.into_iter().collect::<Vec<_>>(), vec!["enc.a".to_string()]);
        let full = a.partition_by_role(Scope::Full).unwrap();
        assert_eq!(full.len(), 2);
        let dec = a.partition_by_role(Scope::Decoder).unwrap();
        assert_eq!(dec.into_iter().collect::<Vec<_>>(), vec!["dec.b".to_string()]);
    }

    #[test]
    fn scoped_partition_needs_role_map() {
        let a = TensorArchive::new(ArchiveMetadata::new("m", 0, "h"))
            .with_tensor("enc.a", vec![1], vec![0.0])
            .unwrap();
        assert!(matches!(
            a.partition_by_role(Scope::Decoder),
            Err(Error::MissingRoleMap(_))
        ));
        assert_eq!(a.partition_by_role(Scope::Full).unwrap().len(), 1);
    }

    #[test]
    fn overlapping_role_prefixes_rejected() {
        let a = TensorArchive::new(ArchiveMetadata::new("m", 0, "h").with_roles(&["enc"], &["enc.x"]))
            .with_tensor("enc.x.w", vec![1], vec![0.0])
            .unwrap();
        assert!(matches!(a.to_bytes(), Err(Error::Validation(_))));
    }

    #[test]
    fn unassigned_tensors_belong_to_no_role() {
        let a = two_role_archive()
            .with_tensor("bn.running_mean", vec![1], vec![0.5])
            .unwrap();
        let enc = a.partition_by_role(Scope::Encoder).unwrap();
        let dec = a.partition_by_role(Scope::Decoder).unwrap();
        assert!(!enc.contains("bn.running_mean") && !dec.contains("bn.running_mean"));
        assert!(a.partition_by_role(Scope::Full).unwrap().contains("bn.running_mean"));
    }
}
