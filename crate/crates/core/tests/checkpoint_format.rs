//! Golden-file checks for the checkpoint format.
//!
//! `tests/fixtures/golden.ckpt` was written once by the (ignored)
//! `regenerate_golden_fixture` test below. The live tests parse it, round
//! trip it byte-for-byte, and verify a frozen forward pass — so any change
//! to the serialization or the forward kernels that would silently break
//! saved models fails loudly here.
//!
//! If the format version is deliberately bumped, rerun
//! `cargo test -p actlearn --test checkpoint_format -- --ignored` and paste
//! the printed constants below.

use actlearn::data::NormPolicy;
use actlearn::layers::{Activation, Connectivity, LayerState, LocalPattern};
use actlearn::network::{
    checkpoint_bytes, parse_checkpoint, Block, BlockLayout, BlockRole, NetworkModel,
};
use actlearn::numerics::SeededRng;

const FIXTURE: &[u8] = include_bytes!("fixtures/golden.ckpt");

/// The exact model the fixture holds: a local layer over a 4x4 grid with a
/// broadcast label tail, then a fully connected head.
fn fixture_model() -> NetworkModel<f32> {
    let layout = BlockLayout::new(vec![
        Block::new("image", vec![1, 4, 4], BlockRole::Data),
        Block::new("label", vec![2, 2], BlockRole::Label),
    ])
    .unwrap();
    let mut rng = SeededRng::new(2024);
    let pattern = LocalPattern::new(4, 4, 1, 2, 3, 4).unwrap();
    let l1 = LayerState::init(Connectivity::Local(pattern), Activation::StdAbs, &mut rng, 0.2);
    let l2 = LayerState::init(
        Connectivity::Full {
            fan_in: 32,
            fan_out: 6,
        },
        Activation::SquareNorm,
        &mut rng,
        0.2,
    );
    NetworkModel::new(layout, NormPolicy::PerBlock, vec![l1, l2]).unwrap()
}

/// Deterministic probe input: exactly representable sixteenths.
fn probe() -> Vec<f32> {
    (0..20).map(|i| i as f32 * 0.0625 - 0.5).collect()
}

#[test]
#[ignore = "writes the golden fixture; run once when the format changes"]
fn regenerate_golden_fixture() {
    let model = fixture_model();
    let bytes = checkpoint_bytes(&model);
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("golden.ckpt"), &bytes).unwrap();
    let act = model.output_activation_raw(&probe()).unwrap();
    println!("fixture bytes: {}", bytes.len());
    println!("const PROBE_ACTIVATION_BITS: u32 = 0x{:08x};", act.to_bits());
    let x = actlearn::Mat32::from_rows(&[probe()]).unwrap();
    let trace = model.forward_batch(&x).unwrap();
    let bits: Vec<String> = trace
        .output()
        .row(0)
        .iter()
        .map(|v| format!("0x{:08x}", v.to_bits()))
        .collect();
    println!("const PROBE_OUTPUT_BITS: [u32; 6] = [{}];", bits.join(", "));
}

const PROBE_ACTIVATION_BITS: u32 = 0x3ea6adbf;
const PROBE_OUTPUT_BITS: [u32; 6] = [
    0xbe86177d, 0x3e39d5d8, 0x3e7adb1a, 0x3e6927aa, 0x3e849c06, 0x3e596a90,
];

#[test]
fn golden_fixture_parses_and_round_trips_exactly() {
    let model: NetworkModel<f32> = parse_checkpoint(FIXTURE, "golden.ckpt").unwrap();
    assert_eq!(model.layers().len(), 2);
    assert_eq!(model.layout().total_len(), 20);
    assert_eq!(model.policy(), NormPolicy::PerBlock);
    assert_eq!(
        checkpoint_bytes(&model),
        FIXTURE,
        "re-serializing the parsed model must reproduce the file"
    );
}

#[test]
fn golden_fixture_matches_a_freshly_built_model() {
    // The fixture was produced from this exact seeded construction; if
    // either the serializer or the seeded initialization drifts, the bytes
    // will differ.
    assert_eq!(checkpoint_bytes(&fixture_model()), FIXTURE);
}

#[test]
fn golden_fixture_forward_pass_is_frozen() {
    let model: NetworkModel<f32> = parse_checkpoint(FIXTURE, "golden.ckpt").unwrap();
    let act = model.output_activation_raw(&probe()).unwrap();
    assert_eq!(
        act.to_bits(),
        PROBE_ACTIVATION_BITS,
        "activation changed: {act} (bits 0x{:08x})",
        act.to_bits()
    );
    let x = actlearn::Mat32::from_rows(&[probe()]).unwrap();
    let trace = model.forward_batch(&x).unwrap();
    for (i, (v, &want)) in trace
        .output()
        .row(0)
        .iter()
        .zip(PROBE_OUTPUT_BITS.iter())
        .enumerate()
    {
        assert_eq!(
            v.to_bits(),
            want,
            "output unit {i} changed: {v} (bits 0x{:08x})",
            v.to_bits()
        );
    }
}
