//! Concrete operator spaces: spans of d x d complex matrices, matrix elements over
//! them, block realization and the exact matrix norms it induces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, ComplexMatrix, ComplexVector, C64, RANK_TOL};

pub use crate::linalg::spectral_norm;

/// A span of d x d matrices with an optional designated unit.
#[derive(Clone, Debug)]
pub struct ConcreteOperatorSpace {
    d: usize,
    basis: Vec<ComplexMatrix>,
    unit_index: Option<usize>,
    is_system: bool,
    // pseudo-inverse of the vectorized basis, used for coordinates
    pinv: ComplexMatrix,
    vec_basis: ComplexMatrix,
}

impl ConcreteOperatorSpace {
    pub fn new(d: usize, basis: Vec<ComplexMatrix>, unit_index: Option<usize>, is_system: bool) -> Result<Self> {
        for (g, b) in basis.iter().enumerate() {
            if b.nrows() != d || b.ncols() != d {
                return Err(Error::Input(format!("basis element {g} is not {d}x{d}")));
            }
            if !linalg::is_finite(b) {
                return Err(Error::Input(format!("basis element {g} has non-finite entries")));
            }
        }
        let vec_basis = linalg::vectorize_columns(&basis);
        if !basis.is_empty() && linalg::rank(&vec_basis) != basis.len() {
            return Err(Error::Input("basis is linearly dependent".into()));
        }
        if let Some(u) = unit_index {
            if u >= basis.len() {
                return Err(Error::Input(format!("unit index {u} out of range")));
            }
            let n = linalg::norm2(&basis[u]);
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::Input(format!("designated unit has norm {n}, expected 1")));
            }
        }
        let pinv = if basis.is_empty() {
            ComplexMatrix::zeros(0, d * d)
        } else {
            vec_basis
                .clone()
                .pseudo_inverse(1e-14)
                .map_err(|e| Error::Input(format!("pseudo-inverse failed: {e}")))?
        };
        let space = ConcreteOperatorSpace { d, basis, unit_index, is_system, pinv, vec_basis };
        if is_system {
            if space.coordinates(&linalg::identity(d)).is_none() {
                return Err(Error::Input("operator system must contain the identity".into()));
            }
            for (g, b) in space.basis.iter().enumerate() {
                if space.coordinates(&b.adjoint()).is_none() {
                    return Err(Error::Input(format!("span is not closed under adjoint (basis element {g})")));
                }
            }
        }
        Ok(space)
    }

    /// Full matrix algebra M_d with basis I followed by every matrix unit except e_{dd}.
    pub fn matrix_algebra(d: usize) -> Self {
        let mut basis = vec![linalg::identity(d)];
        for i in 0..d {
            for j in 0..d {
                if i == d - 1 && j == d - 1 {
                    continue;
                }
                basis.push(linalg::unit(d, d, i, j));
            }
        }
        Self::new(d, basis, Some(0), true).expect("matrix algebra basis is valid")
    }

    /// Span of the given matrices; the unit is located among them if `unit` is set.
    pub fn span(basis: Vec<ComplexMatrix>, unit_index: Option<usize>, is_system: bool) -> Result<Self> {
        let d = basis.first().map(|b| b.nrows()).unwrap_or(0);
        Self::new(d, basis, unit_index, is_system)
    }

    pub fn ambient_dim(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[ComplexMatrix] {
        &self.basis
    }

    pub fn unit_index(&self) -> Option<usize> {
        self.unit_index
    }

    pub fn is_system(&self) -> bool {
        self.is_system
    }

    /// Does the span contain every d x d matrix?
    pub fn is_full_matrix_algebra(&self) -> bool {
        self.dim() == self.d * self.d && self.d > 0
    }

    /// Same space with a different designated unit.
    pub fn with_unit(&self, unit_index: Option<usize>) -> Result<Self> {
        Self::new(self.d, self.basis.clone(), unit_index, self.is_system)
    }

    /// Coordinates of `m` in the basis, or `None` if `m` is not in the span.
    pub fn coordinates(&self, m: &ComplexMatrix) -> Option<Vec<C64>> {
        if m.nrows() != self.d || m.ncols() != self.d {
            return None;
        }
        let v = ComplexVector::from_iterator(self.d * self.d, m.iter().cloned());
        let scale = v.norm();
        if scale == 0.0 {
            return Some(vec![C64::new(0.0, 0.0); self.dim()]);
        }
        let x = &self.pinv * &v;
        let r = (&self.vec_basis * &x - &v).norm();
        if r > RANK_TOL * scale {
            return None;
        }
        Some(x.iter().cloned().collect())
    }

    /// Σ_g coeffs[g] B_g.
    pub fn combine(&self, coeffs: &[C64]) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.d, self.d);
        for (g, b) in self.basis.iter().enumerate() {
            if coeffs[g] != C64::new(0.0, 0.0) {
                out += b * coeffs[g];
            }
        }
        out
    }

    /// Unit as a coefficient vector.
    pub fn unit_vector(&self) -> Option<Vec<C64>> {
        self.unit_index.map(|u| {
            let mut v = vec![C64::new(0.0, 0.0); self.dim()];
            v[u] = C64::new(1.0, 0.0);
            v
        })
    }

    /// Coefficients of x^* for x with coefficients `coeffs`; requires adjoint closure.
    pub fn adjoint_coeffs(&self, coeffs: &[C64]) -> Option<Vec<C64>> {
        self.coordinates(&self.combine(coeffs).adjoint())
    }

    /// Entrywise adjoint-transpose of a matrix element, when the span allows it.
    pub fn adjoint_element(&self, x: &MatrixElement) -> Option<MatrixElement> {
        let mut out = MatrixElement::zeros(x.cols(), x.rows(), self.dim());
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                let a = self.adjoint_coeffs(x.entry(i, j))?;
                out.set_entry(j, i, &a);
            }
        }
        Some(out)
    }

    /// Block realization Σ_g C_g ⊗ B_g of a matrix element.
    pub fn realize(&self, x: &MatrixElement) -> ComplexMatrix {
        assert_eq!(x.dim(), self.dim(), "element dimension does not match space");
        let d = self.d;
        let mut out = ComplexMatrix::zeros(x.rows() * d, x.cols() * d);
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                let e = x.entry(i, j);
                for (g, b) in self.basis.iter().enumerate() {
                    let coef = e[g];
                    if coef == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let mut view = out.view_mut((i * d, j * d), (d, d));
                    view += b * coef;
                }
            }
        }
        out
    }

    pub fn matrix_norm(&self, x: &MatrixElement) -> f64 {
        linalg::norm2(&self.realize(x))
    }

    /// Minimal tensor product space: basis B_g ⊗ B'_h at index g * dim(W) + h.
    pub fn tensor(&self, other: &ConcreteOperatorSpace) -> Self {
        let mut basis = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.basis {
            for b in &other.basis {
                basis.push(linalg::kron(a, b));
            }
        }
        let unit = match (self.unit_index, other.unit_index) {
            (Some(u), Some(v)) => Some(u * other.dim() + v),
            _ => None,
        };
        Self::new(self.d * other.d, basis, unit, self.is_system && other.is_system)
            .expect("kronecker products of independent bases are independent")
    }

    /// The same matrices padded as B ⊕ 0 into a larger ambient dimension.
    /// The result is no longer an operator system (the identity is lost).
    pub fn padded(&self, extra: usize) -> Self {
        let d = self.d + extra;
        let basis = self
            .basis
            .iter()
            .map(|b| {
                let mut m = ComplexMatrix::zeros(d, d);
                m.view_mut((0, 0), (self.d, self.d)).copy_from(b);
                m
            })
            .collect();
        Self::new(d, basis, self.unit_index, false).expect("padding keeps independence")
    }

    pub fn random_element<R: Rng + ?Sized>(&self, rng: &mut R, rows: usize, cols: usize) -> MatrixElement {
        MatrixElement::from_fn(rows, cols, self.dim(), |_, _, _| linalg::random_complex(rng))
    }

    /// I_n ⊗ e.
    pub fn identity_element(&self, n: usize) -> Option<MatrixElement> {
        self.unit_index.map(|u| MatrixElement::scalar(&linalg::identity(n), self.dim(), u))
    }
}

/// An n x k matrix over a space, stored as coefficients indexed (i, j, g).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixElement {
    rows: usize,
    cols: usize,
    dim: usize,
    data: Vec<C64>,
}

impl MatrixElement {
    pub fn zeros(rows: usize, cols: usize, dim: usize) -> Self {
        MatrixElement { rows, cols, dim, data: vec![C64::new(0.0, 0.0); rows * cols * dim] }
    }

    pub fn from_fn<F: FnMut(usize, usize, usize) -> C64>(rows: usize, cols: usize, dim: usize, mut f: F) -> Self {
        let mut data = Vec::with_capacity(rows * cols * dim);
        for i in 0..rows {
            for j in 0..cols {
                for g in 0..dim {
                    data.push(f(i, j, g));
                }
            }
        }
        MatrixElement { rows, cols, dim, data }
    }

    /// 1 x 1 element with the given coefficients.
    pub fn from_vector(coeffs: &[C64]) -> Self {
        MatrixElement { rows: 1, cols: 1, dim: coeffs.len(), data: coeffs.to_vec() }
    }

    /// Element Σ_g C_g ⊗ b_g from its coefficient matrices.
    pub fn from_coefficient_matrices(mats: &[ComplexMatrix]) -> Result<Self> {
        let first = mats.first().ok_or_else(|| Error::Input("no coefficient matrices".into()))?;
        let (r, k) = (first.nrows(), first.ncols());
        if mats.iter().any(|m| m.nrows() != r || m.ncols() != k) {
            return Err(Error::Input("coefficient matrices differ in shape".into()));
        }
        Ok(Self::from_fn(r, k, mats.len(), |i, j, g| mats[g][(i, j)]))
    }

    /// α ⊗ e for a scalar matrix α.
    pub fn scalar(alpha: &ComplexMatrix, dim: usize, unit: usize) -> Self {
        Self::from_fn(alpha.nrows(), alpha.ncols(), dim, |i, j, g| if g == unit { alpha[(i, j)] } else { C64::new(0.0, 0.0) })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        (i * self.cols + j) * self.dim
    }

    pub fn get(&self, i: usize, j: usize, g: usize) -> C64 {
        self.data[self.offset(i, j) + g]
    }

    pub fn set(&mut self, i: usize, j: usize, g: usize, v: C64) {
        let o = self.offset(i, j);
        self.data[o + g] = v;
    }

    pub fn entry(&self, i: usize, j: usize) -> &[C64] {
        let o = self.offset(i, j);
        &self.data[o..o + self.dim]
    }

    pub fn set_entry(&mut self, i: usize, j: usize, v: &[C64]) {
        let o = self.offset(i, j);
        self.data[o..o + self.dim].copy_from_slice(v);
    }

    /// C_g, the scalar coefficient matrix of basis element g.
    pub fn coefficient_matrix(&self, g: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j, g))
    }

    pub fn coefficient_matrices(&self) -> Vec<ComplexMatrix> {
        (0..self.dim).map(|g| self.coefficient_matrix(g)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, z| m.max(z.norm()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| *z == C64::new(0.0, 0.0))
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols, self.dim), (other.rows, other.cols, other.dim));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        MatrixElement { data, ..*self }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: C64) -> Self {
        MatrixElement { data: self.data.iter().map(|z| z * s).collect(), ..*self }
    }

    /// α · x for a scalar matrix α (rows of α index the result).
    pub fn left_mul(&self, alpha: &ComplexMatrix) -> Self {
        assert_eq!(alpha.ncols(), self.rows);
        let mut out = Self::zeros(alpha.nrows(), self.cols, self.dim);
        for i in 0..alpha.nrows() {
            for l in 0..self.rows {
                let a = alpha[(i, l)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..self.cols {
                    let src = self.offset(l, j);
                    let dst = out.offset(i, j);
                    for g in 0..self.dim {
                        out.data[dst + g] += a * self.data[src + g];
                    }
                }
            }
        }
        out
    }

    /// x · β for a scalar matrix β.
    pub fn right_mul(&self, beta: &ComplexMatrix) -> Self {
        assert_eq!(beta.nrows(), self.cols);
        let mut out = Self::zeros(self.rows, beta.ncols(), self.dim);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let src = self.offset(i, l);
                for j in 0..beta.ncols() {
                    let b = beta[(l, j)];
                    if b == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let dst = out.offset(i, j);
                    for g in 0..self.dim {
                        out.data[dst + g] += self.data[src + g] * b;
                    }
                }
            }
        }
        out
    }

    pub fn direct_sum(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = Self::zeros(self.rows + other.rows, self.cols + other.cols, self.dim);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set_entry(i, j, self.entry(i, j));
            }
        }
        for i in 0..other.rows {
            for j in 0..other.cols {
                out.set_entry(self.rows + i, self.cols + j, other.entry(i, j));
            }
        }
        out
    }

    pub fn hstack(parts: &[&Self]) -> Self {
        let rows = parts[0].rows;
        let dim = parts[0].dim;
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut out = Self::zeros(rows, cols, dim);
        let mut off = 0;
        for p in parts {
            assert_eq!((p.rows, p.dim), (rows, dim));
            for i in 0..rows {
                for j in 0..p.cols {
                    out.set_entry(i, off + j, p.entry(i, j));
                }
            }
            off += p.cols;
        }
        out
    }

    pub fn vstack(parts: &[&Self]) -> Self {
        let cols = parts[0].cols;
        let dim = parts[0].dim;
        let rows = parts.iter().map(|p| p.rows).sum();
        let mut out = Self::zeros(rows, cols, dim);
        let mut off = 0;
        for p in parts {
            assert_eq!((p.cols, p.dim), (cols, dim));
            for i in 0..p.rows {
                for j in 0..cols {
                    out.set_entry(off + i, j, p.entry(i, j));
                }
            }
            off += p.rows;
        }
        out
    }

    /// Rows `r0..r0+nr`, columns `c0..c0+nc`.
    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        Self::from_fn(nr, nc, self.dim, |i, j, g| self.get(r0 + i, c0 + j, g))
    }

    /// Largest coefficient difference to `other`.
    pub fn distance(&self, other: &Self) -> f64 {
        if self.shape() != other.shape() || self.dim != other.dim {
            return f64::INFINITY;
        }
        self.data.iter().zip(&other.data).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()))
    }
}

/// Exact matrix norm of `x` via the block realization in `space`.
pub fn realize(space: &ConcreteOperatorSpace, x: &MatrixElement) -> ComplexMatrix {
    space.realize(x)
}

pub fn matrix_norm(space: &ConcreteOperatorSpace, x: &MatrixElement) -> f64 {
    space.matrix_norm(x)
}

/// ‖z‖_min for z over V ⊗ W (coefficient index g * dim(W) + h).
pub fn min_tensor_norm(z: &MatrixElement, v: &ConcreteOperatorSpace, w: &ConcreteOperatorSpace) -> Result<f64> {
    if z.dim() != v.dim() * w.dim() {
        return Err(Error::Input(format!(
            "tensor element has {} coefficients per entry, expected {}",
            z.dim(),
            v.dim() * w.dim()
        )));
    }
    Ok(v.tensor(w).matrix_norm(z))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AxiomReport {
    pub samples: usize,
    pub max_scaling_violation: f64,
    pub max_sum_violation: f64,
    pub max_violation: f64,
    pub degenerate: bool,
    pub witness: Option<String>,
}

/// Sampled check of ‖αxβ‖ ≤ ‖α‖‖x‖‖β‖ and ‖x ⊕ y‖ = max(‖x‖, ‖y‖) for the
/// realized norm of `space`.
pub fn check_linf_axioms(space: &ConcreteOperatorSpace, sample_count: usize, seed: u64) -> AxiomReport {
    check_linf_axioms_with(space.dim(), &|x: &MatrixElement| space.matrix_norm(x), sample_count, 4, seed)
}

/// Same check for an arbitrary norm callback on elements with `dim` coefficients.
/// Violations are relative to the size of the right-hand side.
pub fn check_linf_axioms_with(
    dim: usize,
    norm: &dyn Fn(&MatrixElement) -> f64,
    sample_count: usize,
    max_size: usize,
    seed: u64,
) -> AxiomReport {
    if dim == 0 {
        return AxiomReport {
            samples: 0,
            max_scaling_violation: 0.0,
            max_sum_violation: 0.0,
            max_violation: 0.0,
            degenerate: true,
            witness: None,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scal = 0.0f64;
    let mut sum = 0.0f64;
    let mut witness = None;
    let max_size = max_size.max(1);
    for s in 0..sample_count {
        let n = rng.gen_range(1..=max_size);
        let k = rng.gen_range(1..=max_size);
        let x = MatrixElement::from_fn(n, k, dim, |_, _, _| linalg::random_complex(&mut rng));
        let n2 = rng.gen_range(1..=max_size);
        let k2 = rng.gen_range(1..=max_size);
        let alpha = linalg::random_matrix(&mut rng, n2, n);
        let beta = linalg::random_matrix(&mut rng, k, k2);
        let lhs = norm(&x.left_mul(&alpha).right_mul(&beta));
        let rhs = linalg::norm2(&alpha) * norm(&x) * linalg::norm2(&beta);
        let v = if rhs > 0.0 { ((lhs - rhs) / rhs).max(0.0) } else { lhs.max(0.0) };
        if v > scal {
            scal = v;
            witness = Some(format!("sample {s}: scaling, ‖αxβ‖ = {lhs}, bound {rhs}"));
        }

        let m = rng.gen_range(1..=max_size);
        let l = rng.gen_range(1..=max_size);
        let y = MatrixElement::from_fn(m, l, dim, |_, _, _| linalg::random_complex(&mut rng));
        let lhs = norm(&x.direct_sum(&y));
        let rhs = norm(&x).max(norm(&y));
        let v = if rhs > 0.0 { (lhs - rhs).abs() / rhs } else { lhs.abs() };
        if v > sum {
            sum = v;
            if v > scal {
                witness = Some(format!("sample {s}: direct sum, ‖x⊕y‖ = {lhs}, max = {rhs}"));
            }
        }
    }
    AxiomReport {
        samples: sample_count,
        max_scaling_violation: scal,
        max_sum_violation: sum,
        max_violation: scal.max(sum),
        degenerate: false,
        witness,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UnitalityReport {
    pub samples: usize,
    /// max |‖[I⊗e, x]‖ - √(1+‖x‖²)| over samples, same for the column
    pub max_deviation: f64,
    /// max of ‖x+y‖ - ‖[x, I⊗e]‖‖[I⊗e; y]‖
    pub max_criterion_violation: f64,
    pub passed: bool,
    pub witness: Option<MatrixElement>,
}

/// ‖[I⊗e, x]‖ and ‖[I⊗e; x]‖ for square x.
pub fn unit_row_column_norms(space: &ConcreteOperatorSpace, x: &MatrixElement) -> Option<(f64, f64)> {
    let n = x.rows();
    let id = space.identity_element(n)?;
    let row = MatrixElement::hstack(&[&id, x]);
    let col = MatrixElement::vstack(&[&id, x]);
    Some((space.matrix_norm(&row), space.matrix_norm(&col)))
}

/// Sampled unitality test for the designated unit of `space`.
pub fn check_unitality(space: &ConcreteOperatorSpace, trials: usize, seed: u64) -> Result<UnitalityReport> {
    check_unitality_tol(space, trials, seed, 1e-8)
}

pub fn check_unitality_tol(space: &ConcreteOperatorSpace, trials: usize, seed: u64, tol: f64) -> Result<UnitalityReport> {
    let unit = space
        .unit_index()
        .ok_or_else(|| Error::Precondition("space has no designated unit".into()))?;
    let dim = space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<(MatrixElement, MatrixElement)> = Vec::new();
    // deterministic probes: each normalized basis element against itself
    for g in 0..dim {
        if g == unit {
            continue;
        }
        let mut v = vec![C64::new(0.0, 0.0); dim];
        v[g] = c(1.0, 0.0);
        let x = MatrixElement::from_vector(&v);
        let nx = space.matrix_norm(&x);
        let x = x.scale(c(1.0 / nx, 0.0));
        samples.push((x.clone(), x));
    }
    for _ in 0..trials {
        let n = rng.gen_range(1..=4);
        let mut pick = || {
            let x = space.random_element(&mut rng, n, n);
            let nx = space.matrix_norm(&x);
            if nx > 0.0 {
                x.scale(c(1.0 / nx, 0.0))
            } else {
                x
            }
        };
        let x = pick();
        let y = pick();
        samples.push((x, y));
    }
    let mut dev = 0.0f64;
    let mut crit = f64::NEG_INFINITY;
    let mut witness = None;
    let mut worst = 0.0f64;
    for (x, y) in &samples {
        let n = x.rows();
        let (r, cn) = unit_row_column_norms(space, x).expect("unit present");
        let target = (1.0 + space.matrix_norm(x).powi(2)).sqrt();
        let d = (r - target).abs().max((cn - target).abs());
        dev = dev.max(d);
        let id = MatrixElement::scalar(&linalg::identity(n), dim, unit);
        let lhs = space.matrix_norm(&x.add(y));
        let rhs = space.matrix_norm(&MatrixElement::hstack(&[x, &id])) * space.matrix_norm(&MatrixElement::vstack(&[&id, y]));
        let v = lhs - rhs;
        crit = crit.max(v);
        let bad = d.max(v);
        if bad > tol && bad > worst {
            worst = bad;
            witness = Some(x.clone());
        }
    }
    let crit = crit.max(0.0);
    Ok(UnitalityReport {
        samples: samples.len(),
        max_deviation: dev,
        max_criterion_violation: crit,
        passed: dev <= tol && crit <= tol,
        witness,
    })
}
