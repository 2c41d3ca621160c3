//! Frozen-model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "AZM1" | version: u32 | header_len: u32 | header (UTF-8 JSON)
//!        | tensor blobs (f32 LE, row-major, in directory order) | crc32(blobs): u32
//! ```

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Net, NetworkSpec};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"AZM1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    A2C,
    Impala,
    Dqn,
    Rainbow,
    ApeX,
    Es,
    Ga,
    Other(String),
}

impl Algorithm {
    pub fn as_str(&self) -> &str {
        match self {
            Algorithm::A2C => "A2C",
            Algorithm::Impala => "IMPALA",
            Algorithm::Dqn => "DQN",
            Algorithm::Rainbow => "Rainbow",
            Algorithm::ApeX => "ApeX",
            Algorithm::Es => "ES",
            Algorithm::Ga => "GA",
            Algorithm::Other(name) => name,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<&str> for Algorithm {
    fn from(s: &str) -> Self {
        match s.to_ascii_lowercase().as_str() {
            "a2c" => Algorithm::A2C,
            "impala" => Algorithm::Impala,
            "dqn" => Algorithm::Dqn,
            "rainbow" => Algorithm::Rainbow,
            "apex" | "ape-x" => Algorithm::ApeX,
            "es" => Algorithm::Es,
            "ga" => Algorithm::Ga,
            _ => Algorithm::Other(s.to_string()),
        }
    }
}

impl Serialize for Algorithm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Algorithm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Algorithm::from(s.as_str()))
    }
}

/// Which training snapshot a frozen model represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CheckpointTag {
    Final,
    Initial,
    Hours(u32),
    Frames(u64),
    /// Stored as given; the score claim is not checked.
    HumanLevel,
}

impl CheckpointTag {
    pub const HOURS: [u32; 5] = [1, 2, 4, 6, 10];
    pub const FRAMES: [u64; 2] = [400_000_000, 1_000_000_000];
}

impl fmt::Display for CheckpointTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointTag::Final => f.write_str("final"),
            CheckpointTag::Initial => f.write_str("initial"),
            CheckpointTag::Hours(h) => write!(f, "hours:{h}"),
            CheckpointTag::Frames(n) => write!(f, "frames:{n}"),
            CheckpointTag::HumanLevel => f.write_str("human_level"),
        }
    }
}

impl FromStr for CheckpointTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown checkpoint criterion {s:?}"));
        match s {
            "final" => Ok(CheckpointTag::Final),
            "initial" => Ok(CheckpointTag::Initial),
            "human_level" => Ok(CheckpointTag::HumanLevel),
            _ => {
                let (kind, value) = s.split_once(':').ok_or_else(bad)?;
                match kind {
                    "hours" => {
                        let h: u32 = value.parse().map_err(|_| bad())?;
                        Self::HOURS.contains(&h).then_some(CheckpointTag::Hours(h)).ok_or_else(bad)
                    }
                    "frames" => {
                        let n: u64 = value.parse().map_err(|_| bad())?;
                        Self::FRAMES.contains(&n).then_some(CheckpointTag::Frames(n)).ok_or_else(bad)
                    }
                    _ => Err(bad()),
                }
            }
        }
    }
}

impl TryFrom<String> for CheckpointTag {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CheckpointTag> for String {
    fn from(tag: CheckpointTag) -> String {
        tag.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub game: String,
    pub algorithm: Algorithm,
    pub run_id: String,
    pub checkpoint: CheckpointTag,
    pub format_version: u32,
}

impl ModelMeta {
    pub fn new(game: impl Into<String>, algorithm: Algorithm, run_id: impl Into<String>) -> Self {
        ModelMeta {
            game: game.into(),
            algorithm,
            run_id: run_id.into(),
            checkpoint: CheckpointTag::Final,
            format_version: FORMAT_VERSION,
        }
    }

    /// `algorithm/run_id`, used to label series and curves.
    pub fn label(&self) -> String {
        format!("{}/{}", self.algorithm, self.run_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrozenModel {
    pub spec: NetworkSpec,
    pub tensors: IndexMap<String, Tensor>,
    pub meta: ModelMeta,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    InvalidSpec(String),
    Missing { expected: Vec<usize> },
    WrongShape { expected: Vec<usize>, actual: Vec<usize> },
    Unexpected { actual: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub tensor: String,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::InvalidSpec(msg) => write!(f, "spec: {msg}"),
            ViolationKind::Missing { expected } => write!(f, "{}: missing (expected {expected:?})", self.tensor),
            ViolationKind::WrongShape { expected, actual } => {
                write!(f, "{}: expected {expected:?}, found {actual:?}", self.tensor)
            }
            ViolationKind::Unexpected { actual } => write!(f, "{}: unexpected tensor {actual:?}", self.tensor),
        }
    }
}

/// Lists every way `model` departs from the tensor set its spec implies.
pub fn validate_model(model: &FrozenModel) -> Vec<Violation> {
    let layout = match model.spec.tensor_layout() {
        Ok(layout) => layout,
        Err(e) => {
            return vec![Violation { tensor: "<spec>".into(), kind: ViolationKind::InvalidSpec(e.to_string()) }];
        }
    };
    let mut violations = Vec::new();
    for slot in &layout {
        match model.tensors.get(&slot.name) {
            None => violations.push(Violation {
                tensor: slot.name.clone(),
                kind: ViolationKind::Missing { expected: slot.shape.clone() },
            }),
            Some(t) if t.shape() != slot.shape.as_slice() => violations.push(Violation {
                tensor: slot.name.clone(),
                kind: ViolationKind::WrongShape { expected: slot.shape.clone(), actual: t.shape().to_vec() },
            }),
            Some(_) => {}
        }
    }
    for (name, t) in &model.tensors {
        if !layout.iter().any(|s| &s.name == name) {
            violations.push(Violation { tensor: name.clone(), kind: ViolationKind::Unexpected { actual: t.shape().to_vec() } });
        }
    }
    violations
}

impl FrozenModel {
    pub fn from_net(net: &Net, meta: ModelMeta) -> Self {
        FrozenModel { spec: net.spec().clone(), tensors: net.to_tensors().into_iter().collect(), meta }
    }

    /// He-initialized model, mostly for tests and demos.
    pub fn random(spec: NetworkSpec, meta: ModelMeta, seed: u64) -> Result<Self> {
        Ok(Self::from_net(&Net::random(spec, seed)?, meta))
    }

    pub fn check(&self) -> Result<()> {
        let violations = validate_model(self);
        if violations.is_empty() {
            Ok(())
        } else {
            let msgs: Vec<String> = violations.iter().map(ToString::to_string).collect();
            Err(Error::SpecInconsistency(msgs.join("; ")))
        }
    }

    /// Builds the executable network (parameters widened to `f64`).
    pub fn to_net(&self) -> Result<Net> {
        self.check()?;
        let layout = self.spec.tensor_layout()?;
        let mut params = Vec::with_capacity(layout.iter().map(|s| s.len()).sum());
        for slot in &layout {
            params.extend(self.tensors[&slot.name].data().iter().map(|&v| f64::from(v)));
        }
        Net::new(self.spec.clone(), params)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: ModelMeta,
    spec: NetworkSpec,
    tensors: Vec<DirEntry>,
}

#[derive(Serialize, Deserialize)]
struct DirEntry {
    name: String,
    shape: Vec<usize>,
}

pub fn model_to_bytes(model: &FrozenModel) -> Result<Vec<u8>> {
    let header = Header {
        meta: model.meta.clone(),
        spec: model.spec.clone(),
        tensors: model.tensors.iter().map(|(n, t)| DirEntry { name: n.clone(), shape: t.shape().to_vec() }).collect(),
    };
    let header = serde_json::to_vec(&header)?;
    let header_len = u32::try_from(header.len()).map_err(|_| Error::Config("header too large".into()))?;
    let blob_len: usize = model.tensors.values().map(|t| t.len() * 4).sum();
    let mut out = Vec::with_capacity(12 + header.len() + blob_len + 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&header);
    let blob_start = out.len();
    for t in model.tensors.values() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out[blob_start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn take(bytes: &[u8], at: usize, n: usize) -> Result<&[u8]> {
    bytes.get(at..at + n).ok_or(Error::Truncated { needed: at + n, available: bytes.len() })
}

fn u32_at(bytes: &[u8], at: usize) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, at, 4)?.try_into().expect("4 bytes")))
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<FrozenModel> {
    let magic: [u8; 4] = take(bytes, 0, 4)?.try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = u32_at(bytes, 4)?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let header_len = u32_at(bytes, 8)? as usize;
    let header: Header = serde_json::from_slice(take(bytes, 12, header_len)?)?;
    header.spec.validate()?;

    let blob_start = 12 + header_len;
    let blob_len: usize = header.tensors.iter().map(|d| d.shape.iter().product::<usize>() * 4).sum();
    let blob = take(bytes, blob_start, blob_len)?;
    let stored = u32_at(bytes, blob_start + blob_len)?;
    let end = blob_start + blob_len + 4;
    if bytes.len() > end {
        return Err(Error::TrailingBytes(bytes.len() - end));
    }
    let computed = crc32fast::hash(blob);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }

    let mut tensors = IndexMap::with_capacity(header.tensors.len());
    let mut floats = blob.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    for entry in header.tensors {
        let n = entry.shape.iter().product();
        let data: Vec<f32> = floats.by_ref().take(n).collect();
        let t = Tensor::new(entry.shape, data).map_err(|e| Error::SpecInconsistency(format!("{}: {e}", entry.name)))?;
        if tensors.insert(entry.name.clone(), t).is_some() {
            return Err(Error::SpecInconsistency(format!("duplicate tensor {}", entry.name)));
        }
    }
    let model = FrozenModel { spec: header.spec, tensors, meta: header.meta };
    model.check()?;
    Ok(model)
}

pub fn save_model(model: &FrozenModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_bytes(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FrozenModel> {
    model_from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::HeadKind;

    fn meta() -> ModelMeta {
        ModelMeta::new("Seaquest", Algorithm::Rainbow, "run-1")
    }

    #[test]
    fn default_model_round_trips_bit_exact() {
        let model = FrozenModel::random(NetworkSpec::nature(HeadKind::Dueling, 18), meta(), 7).unwrap();
        let bytes = model_to_bytes(&model).unwrap();
        let back = model_from_bytes(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(model_to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn corrupted_checksum_is_detected() {
        let model = FrozenModel::random(NetworkSpec::nature(HeadKind::Q, 4), meta(), 1).unwrap();
        let mut bytes = model_to_bytes(&model).unwrap();
        let n = bytes.len();
        bytes[n - 1] ^= 0x55;
        assert!(matches!(model_from_bytes(&bytes), Err(Error::ChecksumMismatch { .. })));
    }

    #[test]
    fn distinct_error_kinds() {
        let model = FrozenModel::random(NetworkSpec::nature(HeadKind::Q, 4), meta(), 1).unwrap();
        let bytes = model_to_bytes(&model).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(model_from_bytes(&bad), Err(Error::BadMagic(_))));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(model_from_bytes(&bad), Err(Error::UnsupportedVersion(9))));

        assert!(matches!(model_from_bytes(&bytes[..bytes.len() - 10]), Err(Error::Truncated { .. })));
        assert!(matches!(model_from_bytes(&bytes[..6]), Err(Error::Truncated { .. })));

        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(model_from_bytes(&long), Err(Error::TrailingBytes(1))));
    }

    #[test]
    fn c51_without_params_is_inconsistent() {
        let model = FrozenModel::random(NetworkSpec::nature(HeadKind::C51, 4), meta(), 2).unwrap();
        let mut broken = model.clone();
        broken.spec.c51 = None;
        // write the header by hand since the spec no longer validates
        let header = Header {
            meta: broken.meta.clone(),
            spec: broken.spec.clone(),
            tensors: broken.tensors.iter().map(|(n, t)| DirEntry { name: n.clone(), shape: t.shape().to_vec() }).collect(),
        };
        let good = model_to_bytes(&model).unwrap();
        let old_len = u32::from_le_bytes(good[8..12].try_into().unwrap()) as usize;
        let header = serde_json::to_vec(&header).unwrap();
        let mut bytes = good[..8].to_vec();
        bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&header);
        bytes.extend_from_slice(&good[12 + old_len..]);
        assert!(matches!(model_from_bytes(&bytes), Err(Error::SpecInconsistency(_))));
    }

    #[test]
    fn validate_reports_each_problem() {
        let model = FrozenModel::random(NetworkSpec::nature(HeadKind::Q, 4), meta(), 3).unwrap();
        assert!(validate_model(&model).is_empty());

        let mut wrong = model.clone();
        let w = wrong.tensors["conv1.w"].clone();
        wrong.tensors["conv1.w"] = Tensor::zeros(&[32, 3, 8, 8]);
        let v = validate_model(&wrong);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].tensor, "conv1.w");
        assert_eq!(
            v[0].kind,
            ViolationKind::WrongShape { expected: vec![32, 4, 8, 8], actual: vec![32, 3, 8, 8] }
        );
        wrong.tensors["conv1.w"] = w;

        let mut missing = model.clone();
        missing.tensors.shift_remove("fc.b");
        let v = validate_model(&missing);
        assert_eq!(v, vec![Violation { tensor: "fc.b".into(), kind: ViolationKind::Missing { expected: vec![512] } }]);

        let mut extra = model;
        extra.tensors.insert("junk".into(), Tensor::zeros(&[2]));
        assert!(matches!(validate_model(&extra)[0].kind, ViolationKind::Unexpected { .. }));
    }

    #[test]
    fn checkpoint_tags_are_a_closed_set() {
        for s in ["final", "initial", "hours:1", "hours:10", "frames:400000000", "frames:1000000000", "human_level"] {
            let tag: CheckpointTag = s.parse().unwrap();
            assert_eq!(tag.to_string(), s);
        }
        for s in ["hours:3", "frames:5", "best", "hours:x"] {
            assert!(s.parse::<CheckpointTag>().is_err(), "{s}");
        }
        let json = serde_json::to_string(&CheckpointTag::Hours(6)).unwrap();
        assert_eq!(json, "\"hours:6\"");
        assert!(serde_json::from_str::<CheckpointTag>("\"hours:7\"").is_err());
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in [Algorithm::A2C, Algorithm::Impala, Algorithm::Dqn, Algorithm::Rainbow, Algorithm::ApeX, Algorithm::Es, Algorithm::Ga] {
            assert_eq!(Algorithm::from(a.as_str()), a);
        }
        assert_eq!(Algorithm::from("PPO"), Algorithm::Other("PPO".into()));
    }
}
