//! End-to-end use of the library API: synthetic data, feature cache,
//! training, checkpoint resume and evaluation.

use padkit::data::{
    build_feature_cache, load_manifest, split_records, synth_dataset, write_manifest, write_samples, PreprocessSpec,
    Split, SynthConfig,
};
use padkit::eval::{eer, hter, Aggregation};
use padkit::model::{decode_checkpoint, encode_checkpoint, Checkpoint, Model, ModelConfig, Variant};
use padkit::nn::{OptimizerState, SgdConfig};
use padkit::texture::{decode_feature_cache, encode_feature_cache, DescriptorConfig};
use padkit::train::{score_dataset, train_epochs, Dataset, TrainConfig};

const SIDE: usize = 52;

fn fixture(dir: &std::path::Path) -> (Vec<padkit::data::ManifestRecord>, PreprocessSpec) {
    let mut records = Vec::new();
    for (split, n, seed) in [(Split::Train, 24, 1), (Split::Dev, 10, 2), (Split::Test, 10, 3)] {
        let samples = synth_dataset(&SynthConfig {
            side: SIDE,
            split,
            ..SynthConfig::new(n, n, seed)
        })
        .unwrap();
        records.extend(write_samples(dir, &samples).unwrap());
    }
    write_manifest(&dir.join("manifest.csv"), &records).unwrap();
    (load_manifest(&dir.join("manifest.csv")).unwrap(), PreprocessSpec { margin: 44, output_side: SIDE })
}

fn config() -> ModelConfig {
    ModelConfig {
        wide_input: DescriptorConfig::default().vector_len(),
        ..ModelConfig::tiny()
    }
}

fn sgd() -> SgdConfig {
    SgdConfig {
        learning_rate: 0.02,
        ..SgdConfig::default()
    }
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let dir = tempfile::tempdir().unwrap();
    let (records, spec) = fixture(dir.path());
    let train = split_records(&records, Split::Train);
    let (cache, report) = build_feature_cache(&train, &spec, &DescriptorConfig::default()).unwrap();
    assert_eq!(report.written, train.len());
    let cache = decode_feature_cache(&encode_feature_cache(&cache).unwrap()).unwrap();
    let data = Dataset::load(&train, &spec, true, Some(&cache)).unwrap();
    let cfg = |epochs| TrainConfig {
        epochs,
        batch_size: 8,
        seed: 5,
    };

    let mut straight = Model::new(config()).unwrap();
    let mut opt = OptimizerState::new(sgd()).unwrap();
    let full_log = train_epochs(&mut straight, &mut opt, &data, &cfg(2), 0, |_| {}).unwrap();

    let mut first = Model::new(config()).unwrap();
    let mut opt1 = OptimizerState::new(sgd()).unwrap();
    let mut log = train_epochs(&mut first, &mut opt1, &data, &cfg(1), 0, |_| {}).unwrap();
    let bytes = encode_checkpoint(&Checkpoint {
        model: first,
        optimizer: Some(opt1),
        run: None,
    })
    .unwrap();
    let restored = decode_checkpoint(&bytes).unwrap();
    let (mut resumed, mut opt2) = (restored.model, restored.optimizer.unwrap());
    log.extend(train_epochs(&mut resumed, &mut opt2, &data, &cfg(1), 1, |_| {}).unwrap());

    assert_eq!(log, full_log);
    assert!(resumed == straight);
    assert_eq!(opt2, opt);
}

#[test]
fn every_variant_trains_and_scores() {
    let dir = tempfile::tempdir().unwrap();
    let (records, spec) = fixture(dir.path());
    let (cache, _) = build_feature_cache(&records, &spec, &DescriptorConfig::default()).unwrap();
    for variant in Variant::ALL {
        let load = |split| {
            Dataset::load(&split_records(&records, split), &spec, variant.uses_deep(), variant.uses_wide().then_some(&cache))
                .unwrap()
        };
        let mut model = Model::new(config().with_variant(variant)).unwrap();
        let mut opt = OptimizerState::new(sgd()).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            seed: 1,
        };
        let log = train_epochs(&mut model, &mut opt, &load(Split::Train), &cfg, 0, |_| {}).unwrap();
        assert!(log.iter().all(|e| e.loss.is_finite()), "{}", variant.as_str());
        let dev = score_dataset(&mut model, &load(Split::Dev), 16).unwrap();
        let test = score_dataset(&mut model, &load(Split::Test), 16).unwrap();
        assert_eq!(test.len(), 20);
        assert!(test.validate().is_ok());
        let report = hter(&dev, &test).unwrap();
        assert!((0.0..=1.0).contains(&report.hter));
        assert_eq!(report.eer, eer(&test).unwrap().rate);
        let video = test.aggregate(Aggregation::Video).unwrap();
        assert!(video.len() < test.len());
    }
}
