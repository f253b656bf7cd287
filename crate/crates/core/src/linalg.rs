//! Dense complex linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

/// Relative threshold used for every rank and span-membership decision.
pub const RANK_TOL: f64 = 1e-8;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn is_finite(a: &ComplexMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Largest singular value. Errors on NaN or infinite entries.
pub fn spectral_norm(a: &ComplexMatrix) -> Result<f64> {
    if !is_finite(a) {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }
    Ok(norm2(a))
}

/// Largest singular value without the finiteness check.
///
/// Works on the Gram matrix of the smaller side, so a 4x400 block row costs a
/// 4x4 eigen-solve.
pub fn norm2(a: &ComplexMatrix) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let scale = a.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if scale == 0.0 {
        return 0.0;
    }
    if !scale.is_finite() {
        return f64::NAN;
    }
    let b = a.map(|z| z / scale);
    let gram = if b.nrows() <= b.ncols() {
        &b * b.adjoint()
    } else {
        b.adjoint() * &b
    };
    if gram.nrows() == 1 {
        return scale * gram[(0, 0)].re.max(0.0).sqrt();
    }
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    scale * top.max(0.0).sqrt()
}

/// All singular values, descending.
pub fn singular_values(a: &ComplexMatrix) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let svd = a.clone().svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().cloned().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    s
}

/// Numerical rank with threshold `RANK_TOL` times the largest singular value.
pub fn rank(a: &ComplexMatrix) -> usize {
    let s = singular_values(a);
    match s.first() {
        None => 0,
        Some(&top) if top == 0.0 => 0,
        Some(&top) => s.iter().filter(|&&v| v > RANK_TOL * top).count(),
    }
}

/// Thin SVD split into (U, sigma, V^*) truncated at the relative threshold.
pub fn truncated_svd(a: &ComplexMatrix, rel_tol: f64) -> (ComplexMatrix, Vec<f64>, ComplexMatrix) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let s: Vec<f64> = svd.singular_values.iter().cloned().collect();
    let top = s.iter().cloned().fold(0.0f64, f64::max);
    let mut idx: Vec<usize> = (0..s.len()).filter(|&i| top > 0.0 && s[i] > rel_tol * top).collect();
    idx.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap_or(std::cmp::Ordering::Equal));
    let k = idx.len();
    let mut uu = ComplexMatrix::zeros(a.nrows(), k);
    let mut vv = ComplexMatrix::zeros(k, a.ncols());
    let mut ss = Vec::with_capacity(k);
    for (col, &i) in idx.iter().enumerate() {
        uu.set_column(col, &u.column(i));
        vv.set_row(col, &vt.row(i));
        ss.push(s[i]);
    }
    (uu, ss, vv)
}

/// Orthonormal basis of the column span of `a`.
pub fn column_basis(a: &ComplexMatrix) -> ComplexMatrix {
    if a.ncols() == 0 || a.nrows() == 0 {
        return ComplexMatrix::zeros(a.nrows(), 0);
    }
    truncated_svd(a, RANK_TOL).0
}

/// Orthonormal basis of the null space of `a` (as columns).
pub fn null_space(a: &ComplexMatrix) -> ComplexMatrix {
    let n = a.ncols();
    if a.nrows() == 0 {
        return ComplexMatrix::identity(n, n);
    }
    // pad to a square-ish matrix so the SVD returns a full V
    let rows = a.nrows().max(n);
    let mut padded = ComplexMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(true, true);
    let vt = svd.v_t.expect("v_t requested");
    let s: Vec<f64> = svd.singular_values.iter().cloned().collect();
    let top = s.iter().cloned().fold(0.0f64, f64::max);
    let null: Vec<usize> = (0..s.len()).filter(|&i| top == 0.0 || s[i] <= RANK_TOL * top).collect();
    let mut out = ComplexMatrix::zeros(n, null.len());
    for (col, &i) in null.iter().enumerate() {
        let row = vt.row(i);
        for r in 0..n {
            out[(r, col)] = row[r].conj();
        }
    }
    out
}

/// Least-squares solution of `a x = b` together with the relative residual
/// `|a x - b| / max(|b|, tiny)`.
pub fn lstsq(a: &ComplexMatrix, b: &ComplexVector) -> (ComplexVector, f64) {
    let n = a.ncols();
    let bn = b.norm();
    if n == 0 || a.nrows() == 0 {
        return (ComplexVector::zeros(n), if bn > 0.0 { 1.0 } else { 0.0 });
    }
    let svd = a.clone().svd(true, true);
    let top = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let x = svd
        .solve(b, (RANK_TOL * 1e-4 * top).max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| ComplexVector::zeros(n));
    let r = (a * &x - b).norm();
    let rel = if bn > 1e-300 { r / bn } else { r };
    (x, rel)
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

/// Matrix unit e_{ij} in M_{r,c}.
pub fn unit(r: usize, c: usize, i: usize, j: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(r, c);
    m[(i, j)] = C64::new(1.0, 0.0);
    m
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_complex<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(gaussian(rng), gaussian(rng))
}

pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, r: usize, c: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(r, c, |_, _| random_complex(rng))
}

/// Haar-random unitary from the QR decomposition of a Ginibre matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    let g = random_matrix(rng, n, n);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// Stack matrices (all the same shape) as columns of their vectorizations.
pub fn vectorize_columns(mats: &[ComplexMatrix]) -> ComplexMatrix {
    let len = mats.first().map(|m| m.len()).unwrap_or(0);
    let mut out = ComplexMatrix::zeros(len, mats.len());
    for (j, m) in mats.iter().enumerate() {
        for (i, z) in m.iter().enumerate() {
            out[(i, j)] = *z;
        }
    }
    out
}

pub fn frobenius_inner(a: &ComplexMatrix, b: &ComplexMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn max_abs(a: &ComplexMatrix) -> f64 {
    a.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

/// Hermitian eigen-decomposition with eigenvalues sorted ascending.
pub fn hermitian_eigen(h: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let n = h.nrows();
    let sym = (h + h.adjoint()).map(|z| z * 0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = ComplexMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Inverse of a small square matrix, `None` when numerically singular.
pub fn inverse(a: &ComplexMatrix) -> Option<ComplexMatrix> {
    let s = singular_values(a);
    let top = *s.first()?;
    let low = *s.last()?;
    if top == 0.0 || low < 1e-13 * top {
        return None;
    }
    a.clone().try_inverse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn power_iteration(a: &ComplexMatrix) -> f64 {
        let g = a.adjoint() * a;
        let mut v = ComplexVector::from_element(g.nrows(), c(1.0, 0.3));
        for _ in 0..5000 {
            let w = &g * &v;
            let n = w.norm();
            if n == 0.0 {
                return 0.0;
            }
            v = w / C64::new(n, 0.0);
        }
        ((&g * &v).norm()).sqrt()
    }

    #[test]
    fn identity_has_norm_one() {
        assert!((spectral_norm(&identity(2)).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nilpotent_norm() {
        let mut a = ComplexMatrix::zeros(2, 2);
        a[(0, 1)] = c(2.0, 0.0);
        assert!((spectral_norm(&a).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn random_matches_power_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let a = random_matrix(&mut rng, 5, 5);
            let exact = spectral_norm(&a).unwrap();
            let oracle = power_iteration(&a);
            assert!((exact - oracle).abs() <= 1e-9 * exact, "{exact} vs {oracle}");
        }
    }

    #[test]
    fn rejects_nan() {
        let mut a = identity(2);
        a[(1, 0)] = c(f64::NAN, 0.0);
        assert!(spectral_norm(&a).is_err());
    }

    #[test]
    fn rectangular_and_empty() {
        let a = ComplexMatrix::from_fn(1, 3, |_, _| c(1.0, 0.0));
        assert!((norm2(&a) - 3f64.sqrt()).abs() < 1e-14);
        assert_eq!(norm2(&ComplexMatrix::zeros(0, 3)), 0.0);
    }

    #[test]
    fn unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_unitary(&mut rng, 4);
        let e = &u.adjoint() * &u - identity(4);
        assert!(max_abs(&e) < 1e-12);
    }

    #[test]
    fn null_space_and_lstsq() {
        let a = ComplexMatrix::from_row_slice(1, 2, &[c(1.0, 0.0), c(-1.0, 0.0)]);
        let n = null_space(&a);
        assert_eq!(n.ncols(), 1);
        assert!((n[(0, 0)] - n[(1, 0)]).norm() < 1e-12);
        let b = ComplexVector::from_vec(vec![c(3.0, 0.0)]);
        let (x, r) = lstsq(&a, &b);
        assert!(r < 1e-12);
        assert!((x[0] - x[1] - c(3.0, 0.0)).norm() < 1e-12);
    }
}
