//! Haagerup tensor norm on M_{n,m}(X ⊗ Y) as an interval: the minimal tensor
//! norm from below and an optimized row-times-column factorization from above.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, ComplexMatrix, C64, RANK_TOL};
use crate::optim::{minimize_gauge, SearchOptions};
use crate::spaces::{min_tensor_norm, ConcreteOperatorSpace, MatrixElement};

/// z = left ⊙ right with left n x k over X and right k x m over Y.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HaagerupFactorization {
    pub left: MatrixElement,
    pub right: MatrixElement,
}

impl HaagerupFactorization {
    pub fn inner_dim(&self) -> usize {
        self.left.cols()
    }

    /// Σ_l x_il ⊗ y_lj as an element over X ⊗ Y.
    pub fn product(&self) -> MatrixElement {
        let (dx, dy) = (self.left.dim(), self.right.dim());
        let mut out = MatrixElement::zeros(self.left.rows(), self.right.cols(), dx * dy);
        for i in 0..self.left.rows() {
            for j in 0..self.right.cols() {
                for l in 0..self.left.cols() {
                    for g in 0..dx {
                        let a = self.left.get(i, l, g);
                        if a == C64::new(0.0, 0.0) {
                            continue;
                        }
                        for h in 0..dy {
                            let v = out.get(i, j, g * dy + h) + a * self.right.get(l, j, h);
                            out.set(i, j, g * dy + h, v);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn value(&self, x: &ConcreteOperatorSpace, y: &ConcreteOperatorSpace) -> f64 {
        if self.inner_dim() == 0 {
            return 0.0;
        }
        x.matrix_norm(&self.left) * y.matrix_norm(&self.right)
    }

    /// (left G, G⁻¹ right).
    pub fn gauged(&self, g: &ComplexMatrix) -> Option<Self> {
        let inv = linalg::inverse(g)?;
        Some(HaagerupFactorization { left: self.left.right_mul(g), right: self.right.left_mul(&inv) })
    }

    /// Rescales so both factor norms are equal.
    pub fn balanced(&self, x: &ConcreteOperatorSpace, y: &ConcreteOperatorSpace) -> Self {
        let a = x.matrix_norm(&self.left);
        let b = y.matrix_norm(&self.right);
        if a <= 0.0 || b <= 0.0 {
            return self.clone();
        }
        let s = (b / a).sqrt();
        HaagerupFactorization { left: self.left.scale(c(s, 0.0)), right: self.right.scale(c(1.0 / s, 0.0)) }
    }
}

/// Rows (i, g), columns (h, j): the flattening whose rank is the inner dimension.
fn flatten(z: &MatrixElement, dx: usize, dy: usize) -> ComplexMatrix {
    let (n, m) = z.shape();
    ComplexMatrix::from_fn(n * dx, dy * m, |r, col| {
        let (i, g) = (r / dx, r % dx);
        let (h, j) = (col / m, col % m);
        z.get(i, j, g * dy + h)
    })
}

/// Rank-revealing split of z; inner dimension equals the rank of the flattening.
pub fn initial_factorization(z: &MatrixElement, dx: usize, dy: usize) -> Result<HaagerupFactorization> {
    if z.dim() != dx * dy {
        return Err(Error::Input(format!("tensor has {} coefficients per entry, expected {}", z.dim(), dx * dy)));
    }
    let (n, m) = z.shape();
    let flat = flatten(z, dx, dy);
    let (u, s, vt) = linalg::truncated_svd(&flat, RANK_TOL);
    let k = s.len();
    let left = MatrixElement::from_fn(n, k, dx, |i, l, g| u[(i * dx + g, l)] * s[l].sqrt());
    let right = MatrixElement::from_fn(k, m, dy, |l, j, h| vt[(l, h * m + j)] * s[l].sqrt());
    Ok(HaagerupFactorization { left, right })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HaagerupInterval {
    pub lower: f64,
    pub upper: f64,
    pub witness: HaagerupFactorization,
}

/// Optimizes the gauge of a factorization, returning the balanced result.
pub fn optimize_factorization(
    start: &HaagerupFactorization,
    x: &ConcreteOperatorSpace,
    y: &ConcreteOperatorSpace,
    opts: &SearchOptions,
) -> HaagerupFactorization {
    let k = start.inner_dim();
    if k == 0 {
        return start.clone();
    }
    let rl = x.realize(&start.left);
    let rr = y.realize(&start.right);
    let (dxa, dya) = (x.ambient_dim(), y.ambient_dim());
    let objective = |g: &ComplexMatrix| -> Option<f64> {
        let inv = linalg::inverse(g)?;
        let a = linalg::norm2(&(&rl * linalg::kron(g, &linalg::identity(dxa))));
        let b = linalg::norm2(&(linalg::kron(&inv, &linalg::identity(dya)) * &rr));
        let v = a * b;
        v.is_finite().then_some(v)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (g, v) = minimize_gauge(k, &objective, opts, &mut rng);
    let base = start.value(x, y);
    let chosen = if v < base { start.gauged(&g).unwrap_or_else(|| start.clone()) } else { start.clone() };
    chosen.balanced(x, y)
}

pub fn haagerup_norm(
    z: &MatrixElement,
    x: &ConcreteOperatorSpace,
    y: &ConcreteOperatorSpace,
    opts: &SearchOptions,
) -> Result<HaagerupInterval> {
    let start = initial_factorization(z, x.dim(), y.dim())?;
    let lower = min_tensor_norm(z, x, y)?;
    if start.inner_dim() == 0 {
        return Ok(HaagerupInterval { lower: 0.0, upper: 0.0, witness: start });
    }
    let witness = optimize_factorization(&start, x, y, opts);
    let upper = witness.value(x, y).max(lower);
    Ok(HaagerupInterval { lower, upper, witness })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeReport {
    pub small: (f64, f64),
    pub large: (f64, f64),
    pub upper_gap: f64,
    pub lower_gap: f64,
    pub overlap: bool,
}

fn check_embedding(small: &ConcreteOperatorSpace, large: &ConcreteOperatorSpace, tol: f64) -> Result<()> {
    if small.dim() != large.dim() {
        return Err(Error::Precondition("embedding changes the dimension".into()));
    }
    for g in 0..small.dim() {
        let (a, b) = (linalg::norm2(&small.basis()[g]), linalg::norm2(&large.basis()[g]));
        if (a - b).abs() > tol * a.max(1.0) {
            return Err(Error::Precondition(format!("embedding changes the norm of basis element {g}: {a} vs {b}")));
        }
    }
    Ok(())
}

/// Compares the Haagerup interval of z computed in X ⊗ Y and in X' ⊗ Y', where
/// the primed spaces carry the same basis through an isometric embedding.
pub fn injectivity_probe(
    x: &ConcreteOperatorSpace,
    x_big: &ConcreteOperatorSpace,
    y: &ConcreteOperatorSpace,
    y_big: &ConcreteOperatorSpace,
    z: &MatrixElement,
    opts: &SearchOptions,
) -> Result<ProbeReport> {
    check_embedding(x, x_big, 1e-9)?;
    check_embedding(y, y_big, 1e-9)?;
    let a = haagerup_norm(z, x, y, opts)?;
    let b = haagerup_norm(z, x_big, y_big, opts)?;
    let slack = 1e-9 * a.upper.max(b.upper).max(1.0);
    Ok(ProbeReport {
        small: (a.lower, a.upper),
        large: (b.lower, b.upper),
        upper_gap: (a.upper - b.upper).abs(),
        lower_gap: (a.lower - b.lower).abs(),
        overlap: a.lower <= b.upper + slack && b.lower <= a.upper + slack,
    })
}

/// Elementary tensor a ⊗ b as an n x m element over X ⊗ Y (a is n x p, b is p x m, summed over p).
pub fn elementary(a: &MatrixElement, b: &MatrixElement) -> MatrixElement {
    HaagerupFactorization { left: a.clone(), right: b.clone() }.product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn m2() -> ConcreteOperatorSpace {
        ConcreteOperatorSpace::matrix_algebra(2)
    }

    fn coords(s: &ConcreteOperatorSpace, m: &ComplexMatrix) -> MatrixElement {
        MatrixElement::from_vector(&s.coordinates(m).unwrap())
    }

    #[test]
    fn rank_one_splits() {
        let s = m2();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = s.random_element(&mut rng, 1, 1);
        let b = s.random_element(&mut rng, 1, 1);
        let cc = s.random_element(&mut rng, 1, 1);
        let z = elementary(&a, &b);
        assert_eq!(initial_factorization(&z, 4, 4).unwrap().inner_dim(), 1);
        let z2 = elementary(&a, &b).add(&elementary(&a, &cc));
        let f = initial_factorization(&z2, 4, 4).unwrap();
        assert_eq!(f.inner_dim(), 1);
        assert!(f.product().distance(&z2) < 1e-10);
    }

    #[test]
    fn matrix_unit_sum_has_rank_two_and_norm_two() {
        let s = m2();
        let row = MatrixElement::hstack(&[&coords(&s, &linalg::unit(2, 2, 0, 0)), &coords(&s, &linalg::unit(2, 2, 0, 1))]);
        let col = MatrixElement::vstack(&[&coords(&s, &linalg::unit(2, 2, 0, 0)), &coords(&s, &linalg::unit(2, 2, 1, 0))]);
        let z = elementary(&row, &col);
        assert_eq!(initial_factorization(&z, 4, 4).unwrap().inner_dim(), 2);
        let r = haagerup_norm(&z, &s, &s, &SearchOptions::default()).unwrap();
        // min norm 1; every factorization is a gauge and the best is tr P tr P⁻¹ = 4
        assert!((r.lower - 1.0).abs() < 1e-9);
        assert!((r.upper - 2.0).abs() < 1e-4, "{}", r.upper);
        assert!(r.witness.product().distance(&z) < 1e-8);
    }

    #[test]
    fn units_and_zero() {
        let s = m2();
        let e = s.identity_element(1).unwrap();
        let r = haagerup_norm(&elementary(&e, &e), &s, &s, &SearchOptions::default()).unwrap();
        assert!((r.lower - 1.0).abs() < 1e-12 && (r.upper - 1.0).abs() < 1e-12);
        let r = haagerup_norm(&MatrixElement::zeros(1, 1, 16), &s, &s, &SearchOptions::default()).unwrap();
        assert_eq!((r.lower, r.upper), (0.0, 0.0));
    }

    #[test]
    fn elementary_is_exact() {
        let s = ConcreteOperatorSpace::matrix_algebra(3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let a = s.random_element(&mut rng, 1, 1);
            let b = s.random_element(&mut rng, 1, 1);
            let r = haagerup_norm(&elementary(&a, &b), &s, &s, &SearchOptions::default()).unwrap();
            let p = s.matrix_norm(&a) * s.matrix_norm(&b);
            assert!((r.upper - p).abs() <= 1e-6 * p && (r.lower - p).abs() <= 1e-6 * p);
        }
    }

    #[test]
    fn brute_force_does_not_beat_optimizer() {
        let x = ConcreteOperatorSpace::span(vec![linalg::identity(2), linalg::unit(2, 2, 0, 1)], Some(0), false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..3 {
            let row = x.random_element(&mut rng, 1, 2);
            let col = x.random_element(&mut rng, 2, 1);
            let z = elementary(&row, &col);
            let r = haagerup_norm(&z, &x, &x, &SearchOptions::default()).unwrap();
            let start = initial_factorization(&z, 2, 2).unwrap();
            let k = start.inner_dim();
            let mut best = f64::INFINITY;
            for _ in 0..100_000 {
                let g = ComplexMatrix::from_fn(k, k, |_, _| {
                    c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
                });
                if let Some(f) = start.gauged(&g) {
                    best = best.min(f.value(&x, &x));
                }
            }
            assert!(r.upper <= best * 1.01, "optimizer {} brute {}", r.upper, best);
            assert!(r.lower <= r.upper);
        }
    }

    #[test]
    fn probe_padding() {
        let x = ConcreteOperatorSpace::span(vec![linalg::identity(2), linalg::unit(2, 2, 0, 1)], Some(0), false).unwrap();
        let xp = x.padded(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = elementary(&x.random_element(&mut rng, 1, 2), &x.random_element(&mut rng, 2, 1));
        let p = injectivity_probe(&x, &xp, &x, &xp, &z, &SearchOptions::default()).unwrap();
        assert!(p.overlap && p.upper_gap <= 1e-4, "{:?}", p);
        let bad = ConcreteOperatorSpace::span(
            vec![linalg::identity(2) * c(2.0, 0.0), linalg::unit(2, 2, 0, 1)],
            None,
            false,
        )
        .unwrap();
        assert!(injectivity_probe(&x, &bad, &x, &xp, &z, &SearchOptions::default()).is_err());
    }
}
