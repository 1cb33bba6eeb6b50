use std::path::PathBuf;

use msl_core::engine::{execute, ExecOptions, OpKind};
use msl_core::golden::{replay, GoldenBundle, GoldenError};
use msl_core::imaging;
use msl_core::model_io::{load_model, read_model, write_model, ModelIoError};
use msl_core::tensor::Tensor;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn committed_containers_round_trip_byte_for_byte() {
    for name in ["tiny.mslw", "identity3.mslw"] {
        let bytes = std::fs::read(fixture(name)).unwrap();
        let model = read_model(&bytes).unwrap();
        assert_eq!(write_model(&model), bytes, "{name}");
    }
}

#[test]
fn tiny_fixture_covers_every_op_kind() {
    let model = load_model(fixture("tiny.mslw")).unwrap();
    assert!(model.file_size() <= 100_000);
    assert_eq!(model.param_count(), 631);
    let kinds: Vec<OpKind> = model.graph().nodes().iter().map(|n| n.op.kind()).collect();
    for kind in OpKind::ALL {
        assert!(kinds.contains(&kind), "missing {kind:?}");
    }
    let training = model.metadata().training.as_ref().unwrap();
    assert_eq!((training.max_epochs, training.patience), (200, 50));
}

#[test]
fn identity_model_declares_twelve_parameters() {
    let model = load_model(fixture("identity3.mslw")).unwrap();
    assert_eq!(model.param_count(), 12);
    let input = Tensor::nchw(3, 1, 1, vec![1.0, 1.0, 1.0]).unwrap();
    let (p, _) = execute(&model, &input, &ExecOptions::default()).unwrap();
    for v in p {
        assert!((v - 1.0 / 3.0).abs() < 1e-7);
    }
}

#[test]
fn identity_model_with_wrong_param_count_is_rejected() {
    let bytes = std::fs::read(fixture("identity3.mslw")).unwrap();
    let needle = b"\"param_count\":12";
    let at = bytes.windows(needle.len()).position(|w| w == needle).unwrap();
    let mut patched = bytes.clone();
    // Same length, so the header length field still holds.
    patched[at + needle.len() - 1] = b'3';
    let err = read_model(&patched).unwrap_err();
    assert!(matches!(err, ModelIoError::ParamCountMismatch { declared: 13, actual: 12 }), "{err}");
}

#[test]
fn golden_bundle_replays_within_tolerance() {
    let model = load_model(fixture("tiny.mslw")).unwrap();
    let bundle = GoldenBundle::load(fixture("tiny.golden")).unwrap();
    assert_eq!(bundle.model_name, model.metadata().model_name);
    let r = replay(&model, &bundle).unwrap();
    assert_eq!(r.nodes.len(), model.graph().nodes().len());
    for (node, (_, expected)) in r.nodes.iter().zip(&bundle.nodes) {
        let scale = expected.data().iter().fold(1.0f32, |m, v| m.max(v.abs()));
        assert!(node.max_abs_diff <= 1e-3 * scale, "node {} {}: {}", node.id, node.kind, node.max_abs_diff);
    }
    assert!(r.probabilities_max_abs_diff <= 1e-4, "{}", r.probabilities_max_abs_diff);
    assert!(r.preprocess_max_abs_diff.unwrap() <= 1e-6);
}

#[test]
fn golden_image_through_the_full_pipeline() {
    let model = load_model(fixture("tiny.mslw")).unwrap();
    let bundle = GoldenBundle::load(fixture("tiny.golden")).unwrap();
    let img = imaging::decode(&std::fs::read(fixture("tiny_input.png")).unwrap()).unwrap();
    let input = imaging::preprocess(&img, model.metadata()).unwrap();
    let (p, _) = execute(&model, &input, &ExecOptions::default()).unwrap();
    for (a, b) in p.iter().zip(&bundle.probabilities) {
        assert!((a - b).abs() <= 1e-4);
    }
    let (again, _) = execute(&model, &input, &ExecOptions::default()).unwrap();
    assert_eq!(p, again);
}

#[test]
fn bundle_with_a_missing_node_is_rejected() {
    let model = load_model(fixture("tiny.mslw")).unwrap();
    let mut bundle = GoldenBundle::load(fixture("tiny.golden")).unwrap();
    bundle.nodes.truncate(bundle.nodes.len() - 1);
    let bytes = bundle.to_bytes();
    let reloaded = GoldenBundle::from_bytes(&bytes).unwrap();
    let err = replay(&model, &reloaded).unwrap_err();
    assert!(matches!(err, GoldenError::NodeCount { .. }));
    assert!(err.to_string().contains("node records"));
}
