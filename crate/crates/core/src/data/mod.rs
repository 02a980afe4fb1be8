//! Manifests, preprocessing, the synthetic spoof generator and
//! feature-cache building.

mod features;
mod manifest;
mod preprocess;
mod synth;

pub use features::{build_feature_cache, load_face, CacheReport, RecordFailure};
pub use manifest::{
    encode_manifest, load_manifest, parse_manifest, split_records, subject_overlap, write_manifest, AttackType,
    ManifestRecord, Split, MANIFEST_HEADER,
};
pub use preprocess::{
    crop, decode_image, encode_png, preprocess, preprocess_with, read_image, resize_bilinear, write_png, CenterCrop,
    FaceBox, FaceDetector, PreprocessSpec,
};
pub use synth::{synth_dataset, write_samples, Artifact, SynthConfig, SynthProfile, SynthSample};
