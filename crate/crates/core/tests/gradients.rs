mod common;

use common::{batch, jitter, max_gradient_error, separated_spec, small_spec};
use msdeeponet::deeponet::{OperatorModel, Variant};
use msdeeponet::neural::Parameters;

#[test]
fn every_variant_matches_finite_differences() {
    for variant in Variant::ALL {
        let mut arch = small_spec(variant).build(6, 2, 21).unwrap();
        jitter(&mut arch, 1);
        let err = max_gradient_error(&arch, &batch(6, 2, 4));
        assert!(err < 1e-5, "{variant}: {err}");
    }
}

#[test]
fn amplitude_separated_matches_finite_differences() {
    let mut arch = separated_spec().build(6, 1, 2).unwrap();
    jitter(&mut arch, 2);
    assert_eq!(arch.tiers().len(), 3);
    let err = max_gradient_error(&arch, &batch(6, 1, 8));
    assert!(err < 1e-5, "{err}");
}

#[test]
fn normalization_is_outside_the_trainable_set() {
    let arch = small_spec(Variant::BfcnTfcn).build(6, 1, 0).unwrap();
    let n = arch.num_params();
    let model = OperatorModel::new(arch, 3.0, vec![2.0], 4.0).unwrap();
    assert_eq!(model.num_params(), n);
}
