use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::ManifestRecord;
use super::preprocess::{preprocess, read_image, PreprocessSpec};
use crate::error::Result;
use crate::texture::{describe_face, DescriptorConfig, FaceImage, FeatureCache, FeatureRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFailure {
    pub id: String,
    pub class: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheReport {
    pub requested: usize,
    pub written: usize,
    pub failures: Vec<RecordFailure>,
}

/// Reads and preprocesses one manifest image.
pub fn load_face(record: &ManifestRecord, spec: &PreprocessSpec) -> Result<FaceImage> {
    let mut face = preprocess(&read_image(&record.path)?, spec)?;
    face.source = record.id.clone();
    Ok(face)
}

/// Describes every record in parallel. Records keep manifest order, and a
/// record that cannot be read or described is reported instead of aborting.
pub fn build_feature_cache(
    records: &[ManifestRecord],
    spec: &PreprocessSpec,
    config: &DescriptorConfig,
) -> Result<(FeatureCache, CacheReport)> {
    spec.validate()?;
    config.lpq.validate()?;
    let results: Vec<Result<FeatureRecord>> = records
        .par_iter()
        .map(|r| {
            let face = load_face(r, spec)?;
            Ok(FeatureRecord {
                id: r.id.clone(),
                vector: describe_face(&face, config)?,
            })
        })
        .collect();
    let mut cache = FeatureCache {
        config: config.clone(),
        records: Vec::with_capacity(records.len()),
    };
    let mut report = CacheReport {
        requested: records.len(),
        ..CacheReport::default()
    };
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(r) => cache.records.push(r),
            Err(e) => report.failures.push(RecordFailure {
                id: record.id.clone(),
                class: e.class().to_string(),
                detail: e.to_string(),
            }),
        }
    }
    report.written = cache.records.len();
    Ok((cache, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, write_samples, SynthConfig};
    use crate::texture::{encode_feature_cache, read_feature_cache, write_feature_cache};

    fn fixture(dir: &std::path::Path) -> Vec<ManifestRecord> {
        let samples = synth_dataset(&SynthConfig { side: 40, ..SynthConfig::new(5, 5, 12) }).unwrap();
        write_samples(dir, &samples).unwrap()
    }

    #[test]
    fn ten_images_then_one_missing() {
        let dir = tempfile::tempdir().unwrap();
        let records = fixture(dir.path());
        let spec = PreprocessSpec { margin: 44, output_side: 32 };
        let config = DescriptorConfig::default();
        let (cache, report) = build_feature_cache(&records, &spec, &config).unwrap();
        assert_eq!(cache.records.len(), 10);
        assert!(report.failures.is_empty());
        assert!(cache.records.iter().all(|r| r.vector.len() == 8034));
        assert_eq!(cache.records.iter().map(|r| &r.id).collect::<Vec<_>>(), records.iter().map(|r| &r.id).collect::<Vec<_>>());

        let path = dir.path().join("cache.padf");
        write_feature_cache(&path, &cache).unwrap();
        let first = std::fs::read(&path).unwrap();
        let (again, _) = build_feature_cache(&records, &spec, &config).unwrap();
        write_feature_cache(&path, &again).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
        assert_eq!(read_feature_cache(&path).unwrap(), cache);

        std::fs::remove_file(&records[3].path).unwrap();
        let (partial, report) = build_feature_cache(&records, &spec, &config).unwrap();
        assert_eq!(partial.records.len(), 9);
        assert_eq!(report.written, 9);
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].id, records[3].id);
        assert_eq!(report.failures[0].class, "io");
        assert_ne!(encode_feature_cache(&partial).unwrap(), first);
    }
}
