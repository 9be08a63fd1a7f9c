//! Config documents and the `HPIW` weight container.
//!
//! Weight file layout, all integers little-endian:
//!
//! ```text
//! "HPIW"  version:u32  count:u32
//! count × { name_len:u32 name:utf8  dtype:u8 (0=f32, 1=f64)  rank:u8  dims:u32×rank  offset:u64 }
//! payloads, raw little-endian, at the absolute offsets given in the table
//! ```
//!
//! Writers place payloads contiguously in table order right after the table,
//! so saving the same parameters twice produces identical bytes.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::hpi_gc::{HpiGcOpParams, HpiGcRpParams};
use crate::model::{BlockParams, GcParams, ModelParams, ModelSpec, Residual, Structure, TcnParams, Variant};
use crate::params::{
    same_padding, AdjacencyParam, BatchNormParams, LinearParams, PointwiseConvParams, TemporalConvParams,
};
use crate::rep_tcn::{ConvBnBranch, PoolBnBranch, RepTcnInferParams, RepTcnTrainParams, POOL_KERNEL};
use crate::blending::SerialBranchParams;
use crate::scalar::{DType, Scalar};
use crate::tensor::{Matrix, Shape4, Tensor4};

pub const MAGIC: &[u8; 4] = b"HPIW";
pub const WEIGHTS_VERSION: u32 = 1;
pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_slice<S: Scalar>(v: &[S]) -> Self {
        match S::DTYPE {
            DType::F32 => TensorData::F32(v.iter().map(|x| x.to_f32().unwrap()).collect()),
            DType::F64 => TensorData::F64(v.iter().map(|x| x.to_f64_lossless()).collect()),
        }
    }

    /// Values as `S`; converts between dtypes only when `convert` is set.
    pub fn to_vec<S: Scalar>(&self, name: &str, convert: bool) -> Result<Vec<S>, FormatError> {
        if self.dtype() != S::DTYPE && !convert {
            return Err(FormatError::DtypeMismatch {
                name: name.to_string(),
                found: self.dtype().name(),
                expected: S::DTYPE.name(),
            });
        }
        Ok(match self {
            TensorData::F32(v) => v.iter().map(|&x| S::from_f64_lossy(x as f64)).collect(),
            TensorData::F64(v) => v.iter().map(|&x| S::from_f64_lossy(x)).collect(),
        })
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoredTensor {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

/// Ordered collection of named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightStore {
    tensors: IndexMap<String, StoredTensor>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, dims: Vec<usize>, data: TensorData) -> Result<()> {
        let name = name.into();
        let numel: usize = dims.iter().product();
        if numel != data.len() {
            return Err(Error::shape(format!(
                "tensor `{name}` dims {dims:?} need {numel} values, got {}",
                data.len()
            )));
        }
        if dims.len() > u8::MAX as usize || dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::shape(format!("tensor `{name}` dims {dims:?} not representable")));
        }
        if name.len() > u32::MAX as usize {
            return Err(Error::shape("tensor name too long"));
        }
        if self.tensors.contains_key(&name) {
            return Err(FormatError::DuplicateName(name).into());
        }
        self.tensors.insert(name, StoredTensor { dims, data });
        Ok(())
    }

    pub fn insert_slice<S: Scalar>(&mut self, name: impl Into<String>, dims: Vec<usize>, v: &[S]) -> Result<()> {
        self.insert(name, dims, TensorData::from_slice(v))
    }

    pub fn get(&self, name: &str) -> Option<&StoredTensor> {
        self.tensors.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &StoredTensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    /// The common dtype of all tensors, if they agree.
    pub fn dtype(&self) -> Option<DType> {
        let mut it = self.tensors.values().map(|t| t.data.dtype());
        let first = it.next()?;
        it.all(|d| d == first).then_some(first)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header_len: usize = 12
            + self
                .tensors
                .iter()
                .map(|(name, t)| 4 + name.len() + 2 + 4 * t.dims.len() + 8)
                .sum::<usize>();
        let payload_len: usize = self
            .tensors
            .values()
            .map(|t| t.data.len() * t.data.dtype().size())
            .sum();
        let mut out = Vec::with_capacity(header_len + payload_len);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        let mut offset = header_len as u64;
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.data.dtype().code());
            out.push(t.dims.len() as u8);
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.extend_from_slice(&offset.to_le_bytes());
            offset += (t.data.len() * t.data.dtype().size()) as u64;
        }
        debug_assert_eq!(out.len(), header_len);
        for t in self.tensors.values() {
            t.data.write_le(&mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4, "magic bytes")?;
        if magic != MAGIC {
            return Err(FormatError::BadMagic { found: magic.to_vec() });
        }
        let version = cur.u32("format version")?;
        if version != WEIGHTS_VERSION {
            return Err(FormatError::UnsupportedVersion {
                found: version,
                supported: WEIGHTS_VERSION,
            });
        }
        let count = cur.u32("tensor count")? as usize;
        struct Entry {
            name: String,
            dtype: DType,
            dims: Vec<usize>,
            offset: u64,
            len: u64,
        }
        let mut entries: Vec<Entry> = Vec::with_capacity(count.min(1 << 16));
        for idx in 0..count {
            let what = || format!("tensor table entry {idx}");
            let name_len = cur.u32(&what())? as usize;
            let name = std::str::from_utf8(cur.take(name_len, &what())?)
                .map_err(|_| FormatError::InvalidName)?
                .to_string();
            let code = cur.u8(&format!("header of tensor `{name}`"))?;
            let dtype = DType::from_code(code).ok_or_else(|| FormatError::UnknownDtype {
                name: name.clone(),
                code,
            })?;
            let rank = cur.u8(&format!("header of tensor `{name}`"))? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(cur.u32(&format!("dims of tensor `{name}`"))? as usize);
            }
            let offset = cur.u64(&format!("offset of tensor `{name}`"))?;
            let len = dims
                .iter()
                .try_fold(dtype.size() as u64, |acc, &d| acc.checked_mul(d as u64))
                .ok_or_else(|| FormatError::Truncated {
                    what: format!("tensor `{name}` (size overflows)"),
                })?;
            entries.push(Entry {
                name,
                dtype,
                dims,
                offset,
                len,
            });
        }
        let header_end = cur.pos as u64;
        let file_len = bytes.len() as u64;
        for e in &entries {
            if e.offset < header_end {
                return Err(FormatError::OffsetInHeader {
                    name: e.name.clone(),
                    offset: e.offset,
                });
            }
            if e.offset.checked_add(e.len).is_none_or(|end| end > file_len) {
                return Err(FormatError::Truncated {
                    what: format!("tensor `{}`", e.name),
                });
            }
        }
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_by_key(|&i| (entries[i].offset, i));
        for w in order.windows(2) {
            let (a, b) = (&entries[w[0]], &entries[w[1]]);
            if a.offset + a.len > b.offset && a.len > 0 && b.len > 0 {
                return Err(FormatError::OverlappingOffsets {
                    first: a.name.clone(),
                    second: b.name.clone(),
                });
            }
        }
        let data_end = entries.iter().map(|e| e.offset + e.len).max().unwrap_or(header_end);
        if data_end < file_len {
            return Err(FormatError::TrailingBytes(file_len - data_end));
        }
        let mut store = WeightStore::new();
        for e in entries {
            let raw = &bytes[e.offset as usize..(e.offset + e.len) as usize];
            let data = match e.dtype {
                DType::F32 => TensorData::F32(raw.chunks_exact(4).map(f32::read_le).collect()),
                DType::F64 => TensorData::F64(raw.chunks_exact(8).map(f64::read_le).collect()),
            };
            if store.tensors.contains_key(&e.name) {
                return Err(FormatError::DuplicateName(e.name));
            }
            store.tensors.insert(e.name, StoredTensor { dims: e.dims, data });
        }
        Ok(store)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        Ok(Self::from_bytes(&bytes)?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(FormatError::Truncated { what: what.to_string() }),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8, FormatError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// On-disk architecture description.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub format_version: u32,
    pub structure: String,
    pub variant: Variant,
    pub k_max: usize,
    pub n_pas: usize,
    pub joints: usize,
    pub num_classes: usize,
    pub in_channels: usize,
    pub channels: Vec<usize>,
    pub downsample_blocks: Vec<usize>,
}

impl ConfigDocument {
    pub fn new(spec: &ModelSpec, structure: Structure) -> Self {
        Self {
            format_version: CONFIG_VERSION,
            structure: structure.to_string(),
            variant: spec.variant,
            k_max: spec.k_max,
            n_pas: spec.n_pas,
            joints: spec.joints,
            num_classes: spec.num_classes,
            in_channels: spec.in_channels,
            channels: spec.channels.clone(),
            downsample_blocks: spec.downsample_blocks.clone(),
        }
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            variant: self.variant,
            k_max: self.k_max,
            n_pas: self.n_pas,
            joints: self.joints,
            num_classes: self.num_classes,
            in_channels: self.in_channels,
            channels: self.channels.clone(),
            downsample_blocks: self.downsample_blocks.clone(),
        }
    }

    pub fn structure(&self) -> Result<Structure> {
        match self.structure.as_str() {
            "train" => Ok(Structure::Train),
            "fused" => Ok(Structure::Fused),
            other => Err(FormatError::Config(format!("unknown structure `{other}`")).into()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config document is always serializable")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct VersionOnly {
            format_version: Option<u32>,
        }
        if let Ok(VersionOnly { format_version: Some(v) }) = toml::from_str::<VersionOnly>(text) {
            if v > CONFIG_VERSION {
                return Err(FormatError::UnsupportedVersion {
                    found: v,
                    supported: CONFIG_VERSION,
                }
                .into());
            }
        }
        let doc: Self = toml::from_str(text).map_err(|e| FormatError::Config(e.to_string()))?;
        if doc.format_version != CONFIG_VERSION {
            return Err(FormatError::UnsupportedVersion {
                found: doc.format_version,
                supported: CONFIG_VERSION,
            }
            .into());
        }
        doc.structure()?;
        Ok(doc)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }
}

fn put_bn<S: Scalar>(store: &mut WeightStore, prefix: &str, bn: &BatchNormParams<S>) -> Result<()> {
    let c = bn.channels();
    store.insert_slice(format!("{prefix}.mean"), vec![c], &bn.mean)?;
    store.insert_slice(format!("{prefix}.var"), vec![c], &bn.var)?;
    store.insert_slice(format!("{prefix}.scale"), vec![c], &bn.scale)?;
    store.insert_slice(format!("{prefix}.shift"), vec![c], &bn.shift)?;
    store.insert_slice(format!("{prefix}.eps"), vec![1], &[bn.eps])
}

fn put_pointwise<S: Scalar>(store: &mut WeightStore, prefix: &str, p: &PointwiseConvParams<S>) -> Result<()> {
    store.insert_slice(format!("{prefix}.weight"), vec![p.c_out, p.c_in], &p.weight)?;
    if let Some(b) = &p.bias {
        store.insert_slice(format!("{prefix}.bias"), vec![p.c_out], b)?;
    }
    Ok(())
}

fn put_temporal<S: Scalar>(store: &mut WeightStore, prefix: &str, p: &TemporalConvParams<S>) -> Result<()> {
    store.insert_slice(format!("{prefix}.weight"), vec![p.c_out, p.c_in, p.kernel], &p.weight)?;
    store.insert_slice(format!("{prefix}.bias"), vec![p.c_out], &p.bias)
}

/// Flatten model parameters into a store using `block{i}.{gc|tcn|residual}.{role}` names.
pub fn model_to_store<S: Scalar>(params: &ModelParams<S>) -> Result<WeightStore> {
    let mut st = WeightStore::new();
    put_pointwise(&mut st, "stem", &params.stem)?;
    for (i, b) in params.blocks.iter().enumerate() {
        let pfx = format!("block{}", i + 1);
        let (pre, pas, post, bn) = match &b.gc {
            GcParams::Rp(p) => (&p.pre, &p.pas, &p.post, &p.bn),
            GcParams::Op(p) => (&p.pre, &p.pas, &p.post, &p.bn),
        };
        put_pointwise(&mut st, &format!("{pfx}.gc.pre"), pre)?;
        for (j, a) in pas.iter().enumerate() {
            st.insert_slice(format!("{pfx}.gc.pa{j}"), vec![a.v, a.v], &a.matrix)?;
        }
        put_pointwise(&mut st, &format!("{pfx}.gc.post"), post)?;
        if let Some(bn) = bn {
            put_bn(&mut st, &format!("{pfx}.gc.bn"), bn)?;
        }
        match &b.tcn {
            TcnParams::Train(p) => {
                if let Some(a) = &p.a {
                    put_temporal(&mut st, &format!("{pfx}.tcn.a"), &a.conv)?;
                    put_bn(&mut st, &format!("{pfx}.tcn.a.bn"), &a.bn)?;
                }
                for (name, br) in [("b", &p.b), ("c", &p.c)] {
                    if let Some(br) = br {
                        put_pointwise(&mut st, &format!("{pfx}.tcn.{name}.first"), &br.first)?;
                        put_temporal(&mut st, &format!("{pfx}.tcn.{name}.second"), &br.second)?;
                        put_bn(&mut st, &format!("{pfx}.tcn.{name}.bn"), &br.bn)?;
                    }
                }
                if let Some(d) = &p.d {
                    put_bn(&mut st, &format!("{pfx}.tcn.d.bn"), &d.bn)?;
                }
            }
            TcnParams::Fused(p) => put_temporal(&mut st, &format!("{pfx}.tcn.fused"), &p.fused)?,
        }
        if let Residual::Projection(r) = &b.residual {
            put_temporal(&mut st, &format!("{pfx}.residual"), r)?;
        }
    }
    st.insert_slice("head.weight", vec![params.head.out_features, params.head.in_features], &params.head.weight)?;
    st.insert_slice("head.bias", vec![params.head.out_features], &params.head.bias)?;
    Ok(st)
}

/// Name-tracking reader: every tensor must be claimed exactly once.
struct Reader<'a> {
    store: &'a WeightStore,
    used: Vec<bool>,
    convert: bool,
}

impl<'a> Reader<'a> {
    fn new(store: &'a WeightStore, convert: bool) -> Self {
        Self {
            store,
            used: vec![false; store.len()],
            convert,
        }
    }

    fn has(&self, name: &str) -> bool {
        self.store.contains(name)
    }

    fn take<S: Scalar>(&mut self, name: &str, expected: &[Option<usize>]) -> Result<(Vec<usize>, Vec<S>)> {
        let (idx, _, t) = self
            .store
            .tensors
            .get_full(name)
            .ok_or_else(|| FormatError::MissingTensor(name.to_string()))?;
        let fits = t.dims.len() == expected.len()
            && t.dims.iter().zip(expected).all(|(&d, e)| e.map_or(d > 0, |e| e == d));
        if !fits {
            return Err(FormatError::DimsMismatch {
                name: name.to_string(),
                found: t.dims.clone(),
                expected: expected.iter().map(|e| e.unwrap_or(0)).collect(),
            }
            .into());
        }
        self.used[idx] = true;
        Ok((t.dims.clone(), t.data.to_vec(name, self.convert)?))
    }

    fn bn<S: Scalar>(&mut self, prefix: &str, c: usize) -> Result<BatchNormParams<S>> {
        let (_, mean) = self.take(&format!("{prefix}.mean"), &[Some(c)])?;
        let (_, var) = self.take(&format!("{prefix}.var"), &[Some(c)])?;
        let (_, scale) = self.take(&format!("{prefix}.scale"), &[Some(c)])?;
        let (_, shift) = self.take(&format!("{prefix}.shift"), &[Some(c)])?;
        let (_, eps) = self.take::<S>(&format!("{prefix}.eps"), &[Some(1)])?;
        BatchNormParams::new(mean, var, scale, shift, eps[0])
    }

    fn pointwise<S: Scalar>(&mut self, prefix: &str, c_out: usize, c_in: usize) -> Result<PointwiseConvParams<S>> {
        let (_, w) = self.take(&format!("{prefix}.weight"), &[Some(c_out), Some(c_in)])?;
        let bias_name = format!("{prefix}.bias");
        let bias = if self.has(&bias_name) {
            Some(self.take(&bias_name, &[Some(c_out)])?.1)
        } else {
            None
        };
        PointwiseConvParams::new(c_out, c_in, w, bias)
    }

    fn temporal<S: Scalar>(
        &mut self,
        prefix: &str,
        c_out: usize,
        c_in: usize,
        kernel: Option<usize>,
        stride: usize,
    ) -> Result<TemporalConvParams<S>> {
        let (dims, w) = self.take(&format!("{prefix}.weight"), &[Some(c_out), Some(c_in), kernel])?;
        let (_, b) = self.take(&format!("{prefix}.bias"), &[Some(c_out)])?;
        let k = dims[2];
        TemporalConvParams::new(c_out, c_in, k, w, b, stride, same_padding(k))
    }

    fn finish(self) -> Result<()> {
        if let Some(i) = self.used.iter().position(|u| !u) {
            let name = self.store.tensors.get_index(i).unwrap().0.clone();
            return Err(FormatError::UnexpectedTensor(name).into());
        }
        Ok(())
    }
}

/// Rebuild model parameters from a config document and a weight store.
pub fn model_from_store<S: Scalar>(doc: &ConfigDocument, store: &WeightStore, convert: bool) -> Result<ModelParams<S>> {
    let spec = doc.spec();
    spec.validate()?;
    let structure = doc.structure()?;
    let mut r = Reader::new(store, convert);
    let c0 = spec.channels[0];
    let stem = r.pointwise("stem", c0, spec.in_channels)?;
    let v = spec.joints;
    let mut blocks = Vec::with_capacity(spec.channels.len());
    for (i, g) in spec.block_geometry().into_iter().enumerate() {
        let pfx = format!("block{}", i + 1);
        let pre = r.pointwise::<S>(&format!("{pfx}.gc.pre"), g.c_out, g.c_in)?;
        let mut pas = Vec::new();
        while r.has(&format!("{pfx}.gc.pa{}", pas.len())) {
            let (_, m) = r.take(&format!("{pfx}.gc.pa{}", pas.len()), &[Some(v), Some(v)])?;
            pas.push(AdjacencyParam::new(v, m)?);
        }
        let post = r.pointwise::<S>(&format!("{pfx}.gc.post"), g.c_out, g.c_out)?;
        let bn = if r.has(&format!("{pfx}.gc.bn.mean")) {
            Some(r.bn(&format!("{pfx}.gc.bn"), g.c_out)?)
        } else {
            None
        };
        let gc = match spec.variant {
            Variant::Rp => {
                let p = HpiGcRpParams { pre, pas, post, bn };
                p.validate()?;
                GcParams::Rp(p)
            }
            Variant::Op => {
                let p = HpiGcOpParams { pre, pas, post, bn };
                p.validate()?;
                GcParams::Op(p)
            }
        };
        let c = g.c_out;
        let tcn = if r.has(&format!("{pfx}.tcn.fused.weight")) {
            TcnParams::Fused(RepTcnInferParams {
                fused: r.temporal(&format!("{pfx}.tcn.fused"), c, c, Some(spec.k_max), g.stride)?,
            })
        } else {
            let a = if r.has(&format!("{pfx}.tcn.a.weight")) {
                Some(ConvBnBranch {
                    conv: r.temporal(&format!("{pfx}.tcn.a"), c, c, None, g.stride)?,
                    bn: r.bn(&format!("{pfx}.tcn.a.bn"), c)?,
                })
            } else {
                None
            };
            let mut serial = |name: &str| -> Result<Option<SerialBranchParams<S>>> {
                if !r.has(&format!("{pfx}.tcn.{name}.first.weight")) {
                    return Ok(None);
                }
                Ok(Some(SerialBranchParams {
                    first: r.pointwise(&format!("{pfx}.tcn.{name}.first"), c, c)?,
                    second: r.temporal(&format!("{pfx}.tcn.{name}.second"), c, c, None, g.stride)?,
                    bn: r.bn(&format!("{pfx}.tcn.{name}.bn"), c)?,
                }))
            };
            let b = serial("b")?;
            let cc = serial("c")?;
            let d = if r.has(&format!("{pfx}.tcn.d.bn.mean")) {
                Some(PoolBnBranch {
                    kernel: POOL_KERNEL,
                    stride: g.stride,
                    padding: same_padding(POOL_KERNEL),
                    bn: r.bn(&format!("{pfx}.tcn.d.bn"), c)?,
                })
            } else {
                None
            };
            let p = RepTcnTrainParams {
                k_max: spec.k_max,
                a,
                b,
                c: cc,
                d,
            };
            p.validate()?;
            TcnParams::Train(p)
        };
        let residual = if g.c_in == g.c_out && g.stride == 1 {
            Residual::Identity
        } else {
            Residual::Projection(r.temporal(&format!("{pfx}.residual"), g.c_out, g.c_in, Some(1), g.stride)?)
        };
        blocks.push(BlockParams { gc, tcn, residual });
    }
    let nc = spec.num_classes;
    let f = spec.feature_width();
    let (_, hw) = r.take("head.weight", &[Some(nc), Some(f)])?;
    let (_, hb) = r.take("head.bias", &[Some(nc)])?;
    let head = LinearParams::new(nc, f, hw, hb)?;
    r.finish()?;
    let params = ModelParams {
        spec,
        stem,
        blocks,
        head,
    };
    if params.structure() != structure {
        return Err(FormatError::Config(format!(
            "config declares a {structure} structure but the weights hold a {} structure",
            params.structure()
        ))
        .into());
    }
    Ok(params)
}

pub fn save_model<S: Scalar>(params: &ModelParams<S>, config: impl AsRef<Path>, weights: impl AsRef<Path>) -> Result<()> {
    ConfigDocument::new(&params.spec, params.structure()).write(config)?;
    model_to_store(params)?.write(weights)
}

pub fn load_model<S: Scalar>(config: impl AsRef<Path>, weights: impl AsRef<Path>, convert: bool) -> Result<ModelParams<S>> {
    let doc = ConfigDocument::read(config)?;
    let store = WeightStore::read(weights)?;
    model_from_store(&doc, &store, convert)
}

pub fn save_tensor<S: Scalar>(path: impl AsRef<Path>, name: &str, x: &Tensor4<S>) -> Result<()> {
    let mut st = WeightStore::new();
    st.insert_slice(name, x.shape().dims().to_vec(), x.data())?;
    st.write(path)
}

fn single_entry(store: &WeightStore) -> Result<(&str, &StoredTensor)> {
    if store.len() != 1 {
        return Err(FormatError::Config(format!(
            "tensor file must hold exactly one tensor, found {}",
            store.len()
        ))
        .into());
    }
    Ok(store.iter().next().unwrap())
}

pub fn load_tensor<S: Scalar>(path: impl AsRef<Path>, convert: bool) -> Result<Tensor4<S>> {
    let store = WeightStore::read(path)?;
    let (name, t) = single_entry(&store)?;
    if t.dims.len() != 4 {
        return Err(Error::shape(format!("tensor `{name}` has rank {}, expected 4", t.dims.len())));
    }
    let shape = Shape4::new(t.dims[0], t.dims[1], t.dims[2], t.dims[3]);
    Tensor4::from_vec(shape, t.data.to_vec(name, convert)?)
}

pub fn save_matrix<S: Scalar>(path: impl AsRef<Path>, name: &str, m: &Matrix<S>) -> Result<()> {
    let mut st = WeightStore::new();
    st.insert_slice(name, vec![m.rows, m.cols], &m.data)?;
    st.write(path)
}

/// Reads a rank-2 tensor, or a rank-4 one with trailing unit dims.
pub fn load_matrix<S: Scalar>(path: impl AsRef<Path>, convert: bool) -> Result<Matrix<S>> {
    let store = WeightStore::read(path)?;
    let (name, t) = single_entry(&store)?;
    let (rows, cols) = match t.dims.as_slice() {
        [r, c] => (*r, *c),
        [r, c, 1, 1] => (*r, *c),
        other => return Err(Error::shape(format!("tensor `{name}` has dims {other:?}, expected a matrix"))),
    };
    Matrix::from_vec(rows, cols, t.data.to_vec(name, convert)?)
}
