//! Shared fixtures for the benchmarks.

use opfact::linalg;
use opfact::quotients::{KernelSubspace, UcpCertificate};
use opfact::spaces::{ConcreteOperatorSpace, MatrixElement};
use opfact::ComplexMatrix;
use rand::Rng;

/// span{I, e11} ⊂ M_2 with the averaging state as quotient certificate.
pub fn diagonal_example() -> (ConcreteOperatorSpace, KernelSubspace) {
    let v = ConcreteOperatorSpace::span(vec![linalg::identity(2), linalg::unit(2, 2, 0, 0)], Some(0), true).expect("valid span");
    let avg = UcpCertificate::from_map(2, 1, |x| ComplexMatrix::from_element(1, 1, (x[(0, 0)] + x[(1, 1)]) * 0.5));
    let k = KernelSubspace::from_certificate(&v, avg, true).expect("valid certificate");
    (v, k)
}

/// a e11 + b e22 in the basis {I, e11}.
pub fn diagonal_element<R: Rng + ?Sized>(rng: &mut R) -> MatrixElement {
    let (a, b) = (linalg::random_complex(rng), linalg::random_complex(rng));
    MatrixElement::from_vector(&[b, a - b])
}

/// Elementary tensor x ⊗ y of two random elements of M_d, as a 1 x 1 element of M_d ⊗ M_d.
pub fn elementary_tensor<R: Rng + ?Sized>(rng: &mut R, d: usize) -> MatrixElement {
    let n = d * d;
    let a: Vec<_> = (0..n).map(|_| linalg::random_complex(rng)).collect();
    let b: Vec<_> = (0..n).map(|_| linalg::random_complex(rng)).collect();
    MatrixElement::from_fn(1, 1, n * n, |_, _, g| a[g / n] * b[g % n])
}
