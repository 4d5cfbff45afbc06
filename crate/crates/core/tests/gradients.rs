mod common;

use common::{corrupted_backwards, end_to_end, layer_checks, END_TO_END_TOL, NONLINEAR_TOL, SEEDS};

fn run(name: &str) {
    let check = layer_checks().into_iter().find(|c| c.name == name).unwrap();
    let worst = check.worst(SEEDS);
    assert!(worst < check.tolerance(), "{name}: worst relative error {worst:e}");
}

#[test]
fn conv1d_same() {
    run("conv1d (same)");
}

#[test]
fn conv1d_valid() {
    run("conv1d (valid)");
}

#[test]
fn maxpool_routing() {
    run("maxpool routing");
}

#[test]
fn relu() {
    run("relu");
}

#[test]
fn dense() {
    run("dense");
}

#[test]
fn se_squeeze() {
    run("se_squeeze");
}

#[test]
fn se_excite() {
    run("se_excite");
}

#[test]
fn se_scale() {
    run("se_scale");
}

#[test]
fn se_block() {
    run("se_block");
}

#[test]
fn lstm_bptt() {
    run("lstm (BPTT)");
}

#[test]
fn softmax_cross_entropy() {
    run("softmax + cross-entropy");
}

#[test]
fn whole_network() {
    for seed in 0..3 {
        let (worst, probed) = end_to_end(seed);
        assert!(probed > 0);
        assert!(worst < END_TO_END_TOL, "seed {seed}: {worst:e}");
    }
}

#[test]
fn corrupted_backward_passes_are_caught() {
    for (fault, err) in corrupted_backwards() {
        assert!(err > NONLINEAR_TOL * 100.0, "{fault} slipped through with {err:e}");
    }
}
