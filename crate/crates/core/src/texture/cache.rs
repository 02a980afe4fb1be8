//! Binary feature cache.
//!
//! ```text
//! magic "PADF" | version u8 | header_len u32 | header JSON
//! per record:
//!   id_len u32 | id (UTF-8)
//!   vector_len u32 | layout_len u32
//!   layout_len x (descriptor_len u8 | descriptor | plane_len u8 | plane | offset u32 | length u32)
//!   vector_len x f32
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::descriptor::{DescriptorConfig, DescriptorKind, DescriptorVector, LayoutEntry};
use super::PlaneName;
use crate::error::{Error, Result};
use crate::fsutil::{put_f32s, put_u32, read_file, write_atomic, ByteReader};

pub const CACHE_MAGIC: &[u8; 4] = b"PADF";
pub const CACHE_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureCacheHeader {
    pub descriptor_config: DescriptorConfig,
    pub vector_len: usize,
    pub record_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    pub vector: DescriptorVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub config: DescriptorConfig,
    pub records: Vec<FeatureRecord>,
}

impl FeatureCache {
    pub fn get(&self, id: &str) -> Option<&FeatureRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

fn put_short_str(out: &mut Vec<u8>, s: &str) {
    out.push(s.len() as u8);
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_feature_cache(cache: &FeatureCache) -> Result<Vec<u8>> {
    let vector_len = cache.config.vector_len();
    let header = FeatureCacheHeader {
        descriptor_config: cache.config,
        vector_len,
        record_count: cache.records.len(),
    };
    let header = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(CACHE_MAGIC);
    out.push(CACHE_VERSION);
    put_u32(&mut out, header.len())?;
    out.extend_from_slice(&header);
    for r in &cache.records {
        if r.vector.len() != vector_len {
            return Err(Error::ConfigMismatch(format!(
                "record {} has {} values but the descriptor configuration produces {vector_len}",
                r.id,
                r.vector.len()
            )));
        }
        put_u32(&mut out, r.id.len())?;
        out.extend_from_slice(r.id.as_bytes());
        put_u32(&mut out, r.vector.len())?;
        put_u32(&mut out, r.vector.layout.len())?;
        for e in &r.vector.layout {
            put_short_str(&mut out, e.descriptor.as_str());
            put_short_str(&mut out, e.plane.as_str());
            put_u32(&mut out, e.offset)?;
            put_u32(&mut out, e.length)?;
        }
        put_f32s(&mut out, &r.vector.values);
    }
    Ok(out)
}

fn short_str<'a>(r: &mut ByteReader<'a>) -> Result<&'a str> {
    let n = r.u8()? as usize;
    std::str::from_utf8(r.bytes(n)?).map_err(|e| Error::CorruptHeader(format!("layout name is not UTF-8: {e}")))
}

pub fn decode_feature_cache(bytes: &[u8]) -> Result<FeatureCache> {
    let mut r = ByteReader::new(bytes, "feature cache");
    let magic = r
        .bytes(4)
        .map_err(|_| Error::CorruptHeader("file too short for a feature cache".into()))?;
    if magic != CACHE_MAGIC {
        return Err(Error::CorruptHeader(format!("bad magic {magic:02x?}, expected \"PADF\"")));
    }
    let version = r.u8().map_err(|_| Error::CorruptHeader("missing version byte".into()))?;
    if version != CACHE_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let header_len = r.u32().map_err(|_| Error::CorruptHeader("missing header length".into()))? as usize;
    let header_bytes = r
        .bytes(header_len)
        .map_err(|_| Error::CorruptHeader(format!("header length {header_len} exceeds the file")))?;
    let header: FeatureCacheHeader = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::CorruptHeader(format!("unreadable header JSON: {e}")))?;
    header.descriptor_config.lpq.validate()?;
    if header.vector_len != header.descriptor_config.vector_len() {
        return Err(Error::ConfigMismatch(format!(
            "header declares vectors of {} values but its descriptor configuration produces {}",
            header.vector_len,
            header.descriptor_config.vector_len()
        )));
    }
    let mut records = Vec::with_capacity(header.record_count.min(1 << 20));
    for index in 0..header.record_count {
        let id_len = r.u32()? as usize;
        let id = std::str::from_utf8(r.bytes(id_len)?)
            .map_err(|e| Error::CorruptHeader(format!("record {index} id is not UTF-8: {e}")))?
            .to_string();
        let vector_len = r.u32()? as usize;
        if vector_len != header.vector_len {
            return Err(Error::ConfigMismatch(format!(
                "record {id} has {vector_len} values, header says {}",
                header.vector_len
            )));
        }
        let layout_len = r.u32()? as usize;
        let mut layout = Vec::with_capacity(layout_len.min(64));
        for _ in 0..layout_len {
            let d = short_str(&mut r)?;
            let descriptor = DescriptorKind::parse(d)
                .ok_or_else(|| Error::CorruptHeader(format!("record {id}: unknown descriptor {d:?}")))?;
            let p = short_str(&mut r)?;
            let plane = PlaneName::parse(p)
                .ok_or_else(|| Error::CorruptHeader(format!("record {id}: unknown plane {p:?}")))?;
            let offset = r.u32()? as usize;
            let length = r.u32()? as usize;
            layout.push(LayoutEntry {
                descriptor,
                plane,
                offset,
                length,
            });
        }
        let values = r.f32s(vector_len)?;
        let vector = DescriptorVector::new(values, layout)
            .map_err(|e| Error::CorruptHeader(format!("record {id}: {e}")))?;
        records.push(FeatureRecord { id, vector });
    }
    if r.remaining() != 0 {
        return Err(Error::CorruptHeader(format!(
            "{} unexpected trailing bytes after offset {}",
            r.remaining(),
            r.position()
        )));
    }
    Ok(FeatureCache {
        config: header.descriptor_config,
        records,
    })
}

pub fn write_feature_cache(path: &Path, cache: &FeatureCache) -> Result<()> {
    write_atomic(path, &encode_feature_cache(cache)?)
}

pub fn read_feature_cache(path: &Path) -> Result<FeatureCache> {
    decode_feature_cache(&read_file(path)?)
}
