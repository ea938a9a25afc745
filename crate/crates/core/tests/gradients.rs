mod common;

use fdiv_bounds::Divergence;

#[test]
fn loss_gradients_match_central_differences() {
    for (i, div) in Divergence::ALL.into_iter().enumerate() {
        let err = common::gradient_probe(div, 100, 40 + i as u64);
        assert!(err < 1e-4, "{div}: relative error {err:e}");
    }
}

#[test]
fn sign_test_tail() {
    assert!((common::sign_test_p(0, 10) - 1.0).abs() < 1e-15);
    assert!((common::sign_test_p(10, 10) - 1.0 / 1024.0).abs() < 1e-15);
    // 15 of 20: (C(20,15) + ... + C(20,20)) / 2^20 = 21700 / 1048576
    assert!((common::sign_test_p(15, 20) - 21_700.0 / 1_048_576.0).abs() < 1e-12);
}
