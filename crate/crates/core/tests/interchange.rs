//! Files in the layouts an external training script writes: model text and
//! feature CSV.

mod common;

use olbench::format::{load_model, parse_model, save_model, write_model};
use olbench::frozen::{Layer, Shape};
use olbench::harness::dataset::{load_feature_csv, parse_feature_csv, InputKind};
use olbench::math::SeededRng;
use olbench::FrozenModel;

const HAND_WRITTEN: &str = "\
olmodel v1
# exported after training; classification layer moved to the head block
input image 4 4 1
layer conv2d 2 3 3 1 same
0.1 0.2 0.3 0.4 0.5 0.6 0.7 0.8 0.9
-1e-1 0 0 0 1 0 0 0 1.5E-1
0.01 -0.02
layer relu
layer maxpool2x2
layer dropout 0.25
layer flatten

head 3 8 a e i
1 0 0 0 0 0 0 0
0 1 0 0 0 0 0 0
0 0 1 0 0 0 0 0
0.5 -0.25 0
";

#[test]
fn hand_written_model_loads_and_runs() {
    let (model, head) = parse_model("fixture", HAND_WRITTEN).unwrap();
    assert_eq!(
        model.input_shape(),
        Shape::Image {
            height: 4,
            width: 4,
            channels: 1
        }
    );
    assert_eq!(model.feature_len(), 8);
    assert_eq!(model.layers().len(), 5);
    assert_eq!(head.labels, vec!["a", "e", "i"]);
    assert_eq!(head.biases, vec![0.5, -0.25, 0.0]);
    let out = model.forward(&[1.0; 16]).unwrap();
    assert_eq!(out.len(), 8);
    assert!(out.iter().all(|v| v.is_finite() && *v >= 0.0));
}

#[test]
fn written_model_reloads_bit_for_bit() {
    let (model, head) = parse_model("fixture", HAND_WRITTEN).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.olm");
    save_model(&path, &model, &head).unwrap();
    let (m2, h2) = load_model(&path).unwrap();
    assert_eq!(m2, model);
    assert_eq!(h2, head);
    assert_eq!(write_model(&m2, &h2).unwrap(), std::fs::read_to_string(&path).unwrap());
}

#[test]
fn dense_model_with_random_weights_round_trips() {
    let mut rng = SeededRng::new(1);
    let layers = vec![
        Layer::Dense {
            weights: common::random_matrix(&mut rng, 16, 30, 1.0),
            bias: common::random_vec(&mut rng, 16, 1.0),
        },
        Layer::Relu,
        Layer::Dense {
            weights: common::random_matrix(&mut rng, 8, 16, 1.0),
            bias: common::random_vec(&mut rng, 8, 1.0),
        },
        Layer::Relu,
    ];
    let model = FrozenModel::new(Shape::Flat(30), layers).unwrap();
    let head = common::random_head(&mut rng, 5, 8);
    let (m2, h2) = parse_model("rt", &write_model(&model, &head).unwrap()).unwrap();
    let x = common::random_vec(&mut rng, 30, 1.0);
    assert_eq!(
        common::bits(&m2.forward(&x).unwrap()),
        common::bits(&model.forward(&x).unwrap())
    );
    assert_eq!(h2, head);
}

#[test]
fn feature_csv_from_other_tools() {
    let text = "label,f0,f1,f2\nB,1.0,2.5e-3,-0.125\nR,0,0,1E2\nM,3,4,5\n";
    let ds = parse_feature_csv("tool.csv", text.as_bytes(), InputKind::PrecomputedFeatures).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.shape, Shape::Flat(3));
    assert_eq!(ds.samples[0].input, vec![1.0, 0.0025, -0.125]);
    assert_eq!(ds.samples[1].input[2], 100.0);
    assert_eq!(ds.labels(), vec!["B", "R", "M"]);

    let ragged = "label,f0,f1\nA,1,2\nB,1\n";
    let err = parse_feature_csv("ragged.csv", ragged.as_bytes(), InputKind::PrecomputedFeatures).unwrap_err();
    assert!(err.to_string().contains(":3:"), "{err}");
    let junk = "label,f0\nA,x\n";
    assert!(parse_feature_csv("junk.csv", junk.as_bytes(), InputKind::PrecomputedFeatures).is_err());
}

#[test]
fn missing_files_are_io_errors() {
    assert!(load_model("/nonexistent/model.olm").is_err());
    assert!(load_feature_csv("/nonexistent/f.csv").is_err());
}
