#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use msl_core::datasets::{dhash_hex, DatasetManifest, Label, SampleRecord, Source, Split};
use msl_core::engine::Op;
use msl_core::imaging::RawImage;
use msl_core::model_io::{sha256_hex, write_model_file, GraphBuilder, InputGeometry, ModelMetadata, PreprocessPolicy};
use msl_core::tensor::Tensor;
use msl_core::ModelContainer;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

pub fn msl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msl"))
        .args(args)
        .env_remove("MSL_MODEL")
        .output()
        .expect("msl runs")
}

/// Predicts the class whose colour channel dominates: red, green, blue map to
/// the three classes in order.
pub fn color_model(class_names: &[&str]) -> ModelContainer {
    let mut g = GraphBuilder::new();
    let gap = g.push(Op::Gap, vec![0]);
    let flat = g.push(Op::Flatten, vec![gap]);
    let mut w = vec![0.0f32; 9];
    for i in 0..3 {
        w[i * 3 + i] = 10.0;
    }
    let lin = g.push(
        Op::Linear {
            weight: Tensor::new(vec![3, 3], w).unwrap(),
            bias: vec![0.0; 3],
        },
        vec![flat],
    );
    g.push(Op::Softmax, vec![lin]);
    let meta = ModelMetadata {
        model_name: "color".into(),
        class_names: class_names.iter().map(|s| s.to_string()).collect(),
        input: InputGeometry::rgb(8, 8),
        preprocess: PreprocessPolicy::default(),
        param_count: 12,
        source_fingerprint: String::new(),
        training: None,
    };
    ModelContainer::new(meta, g.finish()).unwrap()
}

pub fn write_color_model(dir: &Path, class_names: &[&str]) -> PathBuf {
    let path = dir.join(format!("color-{}.mslw", class_names.join("-")));
    write_model_file(&color_model(class_names), &path).unwrap();
    path
}

pub const RED: [u8; 3] = [220, 10, 10];
pub const GREEN: [u8; 3] = [10, 220, 10];
pub const BLUE: [u8; 3] = [10, 10, 220];

/// Six test-split records: (id, true label, colour). The colour model
/// predicts mpox, other_skin, other_skin, normal, normal, mpox.
pub const SIX: [(&str, Label, [u8; 3]); 6] = [
    ("a", Label::Mpox, RED),
    ("b", Label::Mpox, GREEN),
    ("c", Label::OtherSkin, GREEN),
    ("d", Label::OtherSkin, BLUE),
    ("e", Label::Normal, BLUE),
    ("f", Label::Normal, RED),
];

/// Hand tally of [`SIX`] under the colour model, rows = truth.
pub const SIX_CONFUSION: [[u64; 3]; 3] = [[1, 1, 0], [0, 1, 1], [1, 0, 1]];

pub fn write_six(dir: &Path) -> PathBuf {
    let mut records = Vec::new();
    for (i, (id, label, rgb)) in SIX.iter().enumerate() {
        // Distinct sizes keep the file hashes distinct.
        let img = RawImage::filled(12 + i as u32, 10, *rgb).unwrap();
        let bytes = img.encode_png().unwrap();
        let rel = format!("img/{id}.png");
        std::fs::create_dir_all(dir.join("img")).unwrap();
        std::fs::write(dir.join(&rel), &bytes).unwrap();
        records.push(SampleRecord {
            id: id.to_string(),
            path: rel,
            label: *label,
            source: Source::Real,
            sha256: sha256_hex(&bytes),
            phash: dhash_hex(&img),
            split: Some(Split::Test),
        });
    }
    let path = dir.join("six.jsonl");
    DatasetManifest::new(records).unwrap().save(&path).unwrap();
    path
}
