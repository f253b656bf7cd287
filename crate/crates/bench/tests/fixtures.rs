use opfact::quotients;
use opfact_bench::{diagonal_element, diagonal_example, elementary_tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn diagonal_fixture_matches_its_closed_form() {
    let (v, k) = diagonal_example();
    assert_eq!(v.dim(), 2);
    assert_eq!(k.dim(), 1);
    let x = diagonal_element(&mut ChaCha8Rng::seed_from_u64(4));
    // x = b I + (a − b) e11, so a + b = 2 x_0 + x_1
    let (b, amb) = (x.entry(0, 0)[0], x.entry(0, 0)[1]);
    let want = (amb + b * 2.0).norm() / 2.0;
    let got = quotients::osp_quotient_with(&x, &k, false).unwrap().value;
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
}

#[test]
fn elementary_tensor_has_tensor_dimension() {
    let z = elementary_tensor(&mut ChaCha8Rng::seed_from_u64(5), 2);
    assert_eq!((z.rows(), z.cols(), z.dim()), (1, 1, 16));
}
