//! Quotients of concrete operator spaces by kernels of ucp maps: the operator
//! space quotient norm (exact convex program), lower bounds for the operator
//! system quotient norm through ucp maps into M_d, and factorization upper
//! bounds for quotients of partial products.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factnorm::{self, FactOptions, FactProblem, NormInterval};
use crate::linalg::{self, c, ComplexMatrix, ComplexVector, C64};
use crate::products::{self, PartialProduct};
use crate::sdp::{self, SdpProblem};
use crate::spaces::{ConcreteOperatorSpace, MatrixElement};

/// Tolerance for certificate validity (positivity, unitality, annihilation).
pub const CERT_TOL: f64 = 1e-9;

/// A linear map φ: M_D → M_d stored by its Choi matrix C = Σ e_ij ⊗ φ(e_ij)
/// (row index i·d + a).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UcpCertificate {
    pub d: usize,
    #[serde(with = "cmat")]
    pub choi: ComplexMatrix,
}

/// Serde for complex matrices as nested [re, im] rows.
pub mod cmat {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &ComplexMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> =
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ComplexMatrix, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        let n = rows.len();
        let m = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != m) {
            return Err(serde::de::Error::custom("ragged matrix"));
        }
        Ok(ComplexMatrix::from_fn(n, m, |i, j| c(rows[i][j][0], rows[i][j][1])))
    }
}

impl UcpCertificate {
    /// Choi matrix of an arbitrary linear map given on M_D.
    pub fn from_map(big_d: usize, d: usize, f: impl Fn(&ComplexMatrix) -> ComplexMatrix) -> Self {
        let mut choi = ComplexMatrix::zeros(big_d * d, big_d * d);
        for i in 0..big_d {
            for j in 0..big_d {
                let img = f(&linalg::unit(big_d, big_d, i, j));
                choi.view_mut((i * d, j * d), (d, d)).copy_from(&img);
            }
        }
        UcpCertificate { d, choi }
    }

    /// φ(X) = Σ_k K_k* X K_k with K_k of size D x d.
    pub fn from_kraus(kraus: &[ComplexMatrix]) -> Self {
        let (big_d, d) = (kraus[0].nrows(), kraus[0].ncols());
        Self::from_map(big_d, d, |x| kraus.iter().fold(ComplexMatrix::zeros(d, d), |acc, k| acc + k.adjoint() * x * k))
    }

    /// A random unital completely positive map from a Stinespring isometry C^d → C^D ⊗ C^r.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, big_d: usize, d: usize, r: usize) -> Self {
        let g = linalg::random_matrix(rng, big_d * r, d);
        let v = linalg::truncated_svd(&g, 0.0);
        let iso = &v.0 * &v.2;
        let kraus: Vec<ComplexMatrix> =
            (0..r).map(|k| ComplexMatrix::from_fn(big_d, d, |i, a| iso[(i * r + k, a)])).collect();
        Self::from_kraus(&kraus)
    }

    pub fn ambient_dim(&self) -> usize {
        self.choi.nrows() / self.d.max(1)
    }

    pub fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let (big_d, d) = (self.ambient_dim(), self.d);
        let mut out = ComplexMatrix::zeros(d, d);
        for i in 0..big_d {
            for j in 0..big_d {
                let v = x[(i, j)];
                if v != C64::new(0.0, 0.0) {
                    out += self.choi.view((i * d, j * d), (d, d)) * v;
                }
            }
        }
        out
    }

    /// (id_n ⊗ φ) applied to the realization of x.
    pub fn apply_element(&self, space: &ConcreteOperatorSpace, x: &MatrixElement) -> ComplexMatrix {
        let images: Vec<ComplexMatrix> = space.basis().iter().map(|b| self.apply(b)).collect();
        factnorm::realize_with(x, &images).unwrap_or_else(|| ComplexMatrix::zeros(x.rows() * self.d, x.cols() * self.d))
    }

    /// φ ⊗ ψ on M_{D D'}.
    pub fn tensor(&self, other: &UcpCertificate) -> Self {
        let (d1, d2) = (self.ambient_dim(), other.ambient_dim());
        let (e1, e2) = (self.d, other.d);
        let mut choi = ComplexMatrix::zeros(d1 * d2 * e1 * e2, d1 * d2 * e1 * e2);
        for i1 in 0..d1 {
            for j1 in 0..d1 {
                let a = self.choi.view((i1 * e1, j1 * e1), (e1, e1)).into_owned();
                for i2 in 0..d2 {
                    for j2 in 0..d2 {
                        let b = other.choi.view((i2 * e2, j2 * e2), (e2, e2)).into_owned();
                        let (i, j) = (i1 * d2 + i2, j1 * d2 + j2);
                        let d = e1 * e2;
                        choi.view_mut((i * d, j * d), (d, d)).copy_from(&linalg::kron(&a, &b));
                    }
                }
            }
        }
        UcpCertificate { d: e1 * e2, choi }
    }

    /// Smallest eigenvalue of the Choi matrix (≥ 0 iff completely positive).
    pub fn choi_min_eigenvalue(&self) -> f64 {
        linalg::hermitian_eigen(&self.choi).0.first().cloned().unwrap_or(0.0)
    }

    /// Rescales to φ(u) = I by conjugating with φ(u)^{-1/2}; kernel and
    /// complete positivity are unchanged. `None` if φ(u) is singular.
    pub fn normalized(&self, u: &ComplexMatrix) -> Option<Self> {
        let p = self.apply(u);
        let (vals, vecs) = linalg::hermitian_eigen(&p);
        if vals.iter().any(|&v| v <= 1e-12) {
            return None;
        }
        let inv_sqrt = ComplexMatrix::from_diagonal(&ComplexVector::from_iterator(
            vals.len(),
            vals.iter().map(|v| c(1.0 / v.sqrt(), 0.0)),
        ));
        let s = &vecs * inv_sqrt * vecs.adjoint();
        let big = linalg::kron(&linalg::identity(self.ambient_dim()), &s);
        Some(UcpCertificate { d: self.d, choi: &big * &self.choi * &big })
    }
}

/// A subspace J of a concrete space, optionally with a ucp map vanishing on it.
#[derive(Clone, Debug)]
pub struct KernelSubspace {
    pub space: ConcreteOperatorSpace,
    /// independent spanning elements, as coordinates in the space basis
    pub span: Vec<Vec<C64>>,
    pub certificate: Option<UcpCertificate>,
    pub is_product_certificate: bool,
}

fn independent(vecs: &[Vec<C64>], dim: usize) -> Vec<Vec<C64>> {
    let mut out: Vec<Vec<C64>> = Vec::new();
    for v in vecs {
        let mut cand = out.clone();
        cand.push(v.clone());
        let m = ComplexMatrix::from_fn(dim, cand.len(), |r, col| cand[col][r]);
        if linalg::rank(&m) == cand.len() {
            out = cand;
        }
    }
    out
}

impl KernelSubspace {
    pub fn new(
        space: &ConcreteOperatorSpace,
        span: Vec<Vec<C64>>,
        certificate: Option<UcpCertificate>,
        is_product_certificate: bool,
    ) -> Result<Self> {
        if let Some(v) = span.iter().find(|v| v.len() != space.dim()) {
            return Err(Error::Input(format!(
                "kernel element has {} coordinates, space has dimension {}",
                v.len(),
                space.dim()
            )));
        }
        let span = independent(&span, space.dim());
        let k = KernelSubspace { space: space.clone(), span, certificate, is_product_certificate };
        if let Some(cert) = &k.certificate {
            k.validate_certificate(cert)?;
        }
        Ok(k)
    }

    /// The zero subspace.
    pub fn zero(space: &ConcreteOperatorSpace) -> Self {
        KernelSubspace { space: space.clone(), span: Vec::new(), certificate: None, is_product_certificate: false }
    }

    /// J = V ∩ ker φ for a ucp map φ on the ambient algebra.
    pub fn from_certificate(space: &ConcreteOperatorSpace, cert: UcpCertificate, is_product: bool) -> Result<Self> {
        if cert.ambient_dim() != space.ambient_dim() {
            return Err(Error::Input("certificate acts on a different ambient dimension".into()));
        }
        let d = cert.d;
        let images: Vec<ComplexMatrix> = space.basis().iter().map(|b| cert.apply(b)).collect();
        let m = ComplexMatrix::from_fn(d * d, space.dim(), |r, g| images[g][(r % d, r / d)]);
        let null = linalg::null_space(&m);
        let span = (0..null.ncols()).map(|j| null.column(j).iter().cloned().collect()).collect();
        Self::new(space, span, Some(cert), is_product)
    }

    fn validate_certificate(&self, cert: &UcpCertificate) -> Result<()> {
        if cert.ambient_dim() != self.space.ambient_dim() || cert.choi.nrows() != cert.choi.ncols() {
            return Err(Error::Input("certificate acts on a different ambient dimension".into()));
        }
        let scale = linalg::max_abs(&cert.choi).max(1.0);
        let herm = linalg::max_abs(&(&cert.choi - cert.choi.adjoint()));
        if herm > CERT_TOL * scale {
            return Err(Error::Precondition(format!("certificate Choi matrix is not Hermitian ({herm:.2e})")));
        }
        let lmin = cert.choi_min_eigenvalue();
        if lmin < -CERT_TOL * scale {
            return Err(Error::Precondition(format!("certificate is not completely positive (Choi eigenvalue {lmin:.2e})")));
        }
        let u = self
            .space
            .unit_index()
            .ok_or_else(|| Error::Precondition("kernel certificates need a unital space".into()))?;
        let pu = cert.apply(&self.space.basis()[u]);
        let ures = linalg::max_abs(&(pu - linalg::identity(cert.d)));
        if ures > CERT_TOL * scale {
            return Err(Error::Precondition(format!("certificate is not unital (residual {ures:.2e})")));
        }
        for (l, v) in self.span.iter().enumerate() {
            let img = cert.apply(&self.space.combine(v));
            let r = linalg::max_abs(&img);
            if r > CERT_TOL * scale * linalg::max_abs(&self.space.combine(v)).max(1.0) {
                return Err(Error::Precondition(format!("certificate does not annihilate kernel element {l} ({r:.2e})")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.span.len()
    }

    pub fn matrices(&self) -> Vec<ComplexMatrix> {
        self.span.iter().map(|v| self.space.combine(v)).collect()
    }

    /// Is every entry of x in the span (relative tolerance `tol`)?
    pub fn contains(&self, x: &MatrixElement, tol: f64) -> bool {
        let dim = self.space.dim();
        let scale = x.max_abs().max(1.0);
        if self.span.is_empty() {
            return x.max_abs() <= tol * scale;
        }
        let m = ComplexMatrix::from_fn(dim, self.span.len(), |r, col| self.span[col][r]);
        let p = m.clone().pseudo_inverse(1e-13).expect("pseudo-inverse of a finite matrix");
        (0..x.rows()).all(|i| {
            (0..x.cols()).all(|j| {
                let v = ComplexVector::from_column_slice(x.entry(i, j));
                let r = (&m * (&p * &v) - &v).norm();
                r <= tol * scale
            })
        })
    }

    /// An element of M_{n,m}(J) with entry (i, j) = Σ_l coeffs[i][j][l] J_l.
    pub fn element(&self, rows: usize, cols: usize, mut coeffs: impl FnMut(usize, usize, usize) -> C64) -> MatrixElement {
        let dim = self.space.dim();
        let mut out = MatrixElement::zeros(rows, cols, dim);
        for i in 0..rows {
            for j in 0..cols {
                let mut e = vec![C64::new(0.0, 0.0); dim];
                for (l, v) in self.span.iter().enumerate() {
                    let a = coeffs(i, j, l);
                    for g in 0..dim {
                        e[g] += a * v[g];
                    }
                }
                out.set_entry(i, j, &e);
            }
        }
        out
    }
}

fn hermitian_dilation(m: &ComplexMatrix) -> ComplexMatrix {
    let (r, c_) = (m.nrows(), m.ncols());
    let mut out = ComplexMatrix::zeros(r + c_, r + c_);
    out.view_mut((0, r), (r, c_)).copy_from(m);
    out.view_mut((r, 0), (c_, r)).copy_from(&m.adjoint());
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OspQuotient {
    /// ‖x + j‖ at the best coset point found
    pub value: f64,
    /// the coset point x + j
    pub representative: MatrixElement,
    /// best value on the coarse grid, when it was run
    pub grid_value: Option<f64>,
}

const GRID_POINTS: usize = 20_000;

/// inf over j ∈ M_{n,m}(J) of ‖x + j‖, with the minimizing coset point.
/// `grid` adds a coarse grid cross-check when dim(J)·n·m ≤ 6.
pub fn osp_quotient_with(x: &MatrixElement, k: &KernelSubspace, grid: bool) -> Result<OspQuotient> {
    let space = &k.space;
    if x.dim() != space.dim() {
        return Err(Error::Input(format!("element has {} coefficients, space has dimension {}", x.dim(), space.dim())));
    }
    let m0 = space.realize(x);
    let base = linalg::norm2(&m0);
    let (n, m) = x.shape();
    if k.dim() == 0 || base == 0.0 || n * m == 0 {
        return Ok(OspQuotient { value: base, representative: x.clone(), grid_value: None });
    }
    let jm = k.matrices();
    let big_d = space.ambient_dim();
    // real directions: j = Σ (r + i s) e_ij ⊗ J_l
    let mut dirs: Vec<(usize, usize, usize, C64, ComplexMatrix)> = Vec::new();
    for i in 0..n {
        for j in 0..m {
            for (l, jl) in jm.iter().enumerate() {
                for ph in [c(1.0, 0.0), c(0.0, 1.0)] {
                    let mut b = ComplexMatrix::zeros(n * big_d, m * big_d);
                    b.view_mut((i * big_d, j * big_d), (big_d, big_d)).copy_from(&(jl * ph));
                    let nb = linalg::norm2(&b);
                    dirs.push((i, j, l, ph / nb, b / c(nb, 0.0)));
                }
            }
        }
    }
    let scaled = &m0 / c(base, 0.0);
    let f0 = -hermitian_dilation(&scaled);
    let dn = f0.nrows();
    let mut fk = vec![linalg::identity(dn)];
    fk.extend(dirs.iter().map(|d| -hermitian_dilation(&d.4)));
    let mut cost = vec![0.0; fk.len()];
    cost[0] = 1.0;
    let mut y0 = vec![0.0; fk.len()];
    y0[0] = 2.0;
    let y = sdp::lmi_minimize(&cost, &f0, &fk, &y0, 1e-13).unwrap_or(y0);
    let build = |y: &[f64]| -> MatrixElement {
        let mut coef = vec![vec![vec![C64::new(0.0, 0.0); jm.len()]; m]; n];
        for (t, d) in dirs.iter().enumerate() {
            coef[d.0][d.1][d.2] += d.3 * y[t + 1] * base;
        }
        x.add(&k.element(n, m, |i, j, l| coef[i][j][l]))
    };
    let mut rep = build(&y);
    let mut value = space.matrix_norm(&rep);
    if value > base {
        rep = x.clone();
        value = base;
    }
    let mut grid_value = None;
    if grid && k.dim() * n * m <= 6 {
        let p = dirs.len();
        let mut g = 1usize;
        while (g + 2).pow(p as u32) <= GRID_POINTS {
            g += 2;
        }
        if g > 1 {
            // directions are normalized, so |t| ≤ 2‖x‖ covers every useful point
            let h = 2.0 / ((g - 1) / 2) as f64;
            let half = (g / 2) as i64;
            let mut best = f64::INFINITY;
            let mut idx = vec![-half; p];
            loop {
                let mut mm = scaled.clone();
                for (t, d) in dirs.iter().enumerate() {
                    mm += &d.4 * c(idx[t] as f64 * h, 0.0);
                }
                best = best.min(linalg::norm2(&mm) * base);
                let mut t = 0;
                while t < p {
                    idx[t] += 1;
                    if idx[t] <= half {
                        break;
                    }
                    idx[t] = -half;
                    t += 1;
                }
                if t == p {
                    break;
                }
            }
            grid_value = Some(best);
        }
    }
    Ok(OspQuotient { value, representative: rep, grid_value })
}

/// Operator space quotient norm ‖x + M_{n,m}(J)‖.
pub fn osp_quotient_norm(x: &MatrixElement, k: &KernelSubspace) -> Result<f64> {
    Ok(osp_quotient_with(x, k, true)?.value)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UcpLower {
    /// ‖(id ⊗ φ)(x)‖ for the best map found
    pub value: f64,
    pub d: usize,
    pub map: UcpCertificate,
    /// max |φ(j)| over the kernel basis
    pub kill_residual: f64,
}

// Complex functional X ↦ φ(X)_{ab} as tr(B C) on the Choi matrix.
fn choi_functional(x: &ComplexMatrix, d: usize, a: usize, b: usize) -> ComplexMatrix {
    let big_d = x.nrows();
    let mut out = ComplexMatrix::zeros(big_d * d, big_d * d);
    for i in 0..big_d {
        for j in 0..big_d {
            out[(j * d + b, i * d + a)] = x[(i, j)];
        }
    }
    out
}

fn ucp_region(k: &KernelSubspace, d: usize) -> Result<sdp::FeasibleRegion> {
    let space = &k.space;
    let big_d = space.ambient_dim();
    let mut p = SdpProblem::new(big_d * d);
    let id = linalg::identity(big_d);
    for a in 0..d {
        for b in 0..d {
            p.add_complex_constraint(&choi_functional(&id, d, a, b), c(if a == b { 1.0 } else { 0.0 }, 0.0));
            for jl in k.matrices() {
                p.add_complex_constraint(&choi_functional(&jl, d, a, b), c(0.0, 0.0));
            }
        }
    }
    p.prepare().map_err(|_| Error::Infeasible(format!("not an osy kernel at dimension {d}")))
}

fn top_singular_pair(m: &ComplexMatrix) -> (ComplexVector, ComplexVector) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let i = svd.singular_values.imax();
    (u.column(i).into_owned(), vt.row(i).adjoint())
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexVector {
    let v = ComplexVector::from_fn(n, |_, _| linalg::random_complex(rng));
    let nv = v.norm();
    v / c(nv, 0.0)
}

/// Lower bound for the operator system quotient norm: max ‖(id ⊗ φ)(x)‖ over
/// ucp maps φ: V → M_d vanishing on J, by alternating between the top
/// singular pair and a semidefinite program over Choi matrices.
pub fn ucp_quotient_lower(x: &MatrixElement, k: &KernelSubspace, d: usize, restarts: usize, seed: u64) -> Result<UcpLower> {
    let space = &k.space;
    if !space.is_system() {
        return Err(Error::Precondition("ucp lower bounds need an operator system".into()));
    }
    let big_d = space.ambient_dim();
    let u = space.unit_index().ok_or_else(|| Error::Precondition("space has no unit".into()))?;
    if linalg::max_abs(&(&space.basis()[u] - linalg::identity(big_d))) > 1e-12 {
        return Err(Error::Precondition("ucp lower bounds need the identity as unit".into()));
    }
    if d == 0 {
        return Err(Error::Input("output dimension must be positive".into()));
    }
    if x.dim() != space.dim() {
        return Err(Error::Input("element does not match the space".into()));
    }
    let region = ucp_region(k, d)?;
    let (n, m) = x.shape();
    let entries: Vec<Vec<ComplexMatrix>> =
        (0..n).map(|i| (0..m).map(|j| space.combine(x.entry(i, j))).collect()).collect();
    let objective = |xi: &ComplexVector, eta: &ComplexVector| -> ComplexMatrix {
        // Re ξ* (id ⊗ φ)(x) η = Re tr(G C)
        let mut g = ComplexMatrix::zeros(big_d * d, big_d * d);
        for i in 0..n {
            for j in 0..m {
                let xij = &entries[i][j];
                for a in 0..d {
                    for b in 0..d {
                        let w = xi[i * d + a].conj() * eta[j * d + b];
                        if w == C64::new(0.0, 0.0) {
                            continue;
                        }
                        for p in 0..big_d {
                            for q in 0..big_d {
                                g[(q * d + b, p * d + a)] += w * xij[(p, q)];
                            }
                        }
                    }
                }
            }
        }
        // minimize −Re tr(G C)
        -(&g + g.adjoint()) * c(0.5, 0.0)
    };
    let evaluate = |cert: &UcpCertificate| linalg::norm2(&cert.apply_element(space, x));
    let start = UcpCertificate { d, choi: region.start_point() };
    let mut best_map = start.clone();
    let mut best = evaluate(&start);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for r in 0..restarts.max(1) {
        let (mut xi, mut eta) = if r == 0 && d == big_d {
            top_singular_pair(&space.realize(x))
        } else if r == 0 {
            top_singular_pair(&start.apply_element(space, x))
        } else {
            (random_unit(&mut rng, n * d), random_unit(&mut rng, m * d))
        };
        let mut last = f64::NEG_INFINITY;
        for _ in 0..25 {
            let sol = region.minimize(&objective(&xi, &eta), 1e-10);
            let cert = UcpCertificate { d, choi: sol.x };
            let img = cert.apply_element(space, x);
            let v = linalg::norm2(&img);
            if v > best {
                best = v;
                best_map = cert.clone();
            }
            if v <= last + 1e-12 * v.max(1.0) {
                break;
            }
            last = v;
            let pair = top_singular_pair(&img);
            xi = pair.0;
            eta = pair.1;
        }
    }
    // make unitality exact; the kernel constraints are preserved by the conjugation
    let map = best_map.normalized(&space.basis()[u]).unwrap_or(best_map);
    let value = evaluate(&map);
    let kill_residual = k.matrices().iter().map(|j| linalg::max_abs(&map.apply(j))).fold(0.0, f64::max);
    Ok(UcpLower { value, d, map, kill_residual })
}

/// Checks φ(m(l, r)) = φ(l) φ(r) on every spanning pair of every block.
pub fn check_product_certificate(k: &KernelSubspace, m: &PartialProduct) -> Result<()> {
    let cert = k
        .certificate
        .as_ref()
        .ok_or_else(|| Error::Precondition("kernel has no certificate".into()))?;
    if !k.is_product_certificate {
        return Err(Error::Precondition("kernel certificate is not declared a product map".into()));
    }
    let space = &k.space;
    let img = |v: &[C64]| cert.apply(&space.combine(v));
    for (bi, block) in m.blocks().iter().enumerate() {
        for p in 0..block.left_dim() {
            let l = block.left_vector(p);
            let il = img(&l);
            for q in 0..block.right_dim() {
                let r = block.right_vector(q);
                let lhs = img(block.table_entry(p, q));
                let rhs = &il * img(&r);
                let err = linalg::max_abs(&(lhs - &rhs));
                if err > 1e-8 * linalg::max_abs(&rhs).max(1.0) {
                    return Err(Error::Precondition(format!(
                        "certificate is not multiplicative on block {bi}, pair ({p}, {q}): residual {err:.2e}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Factorization-norm interval for x + M_n(K) over the quotient partial
/// product: upper from the engine with coset (osp) factor norms and products
/// accepted modulo K, lower from the product certificate.
pub fn product_quotient_upper(
    x: &MatrixElement,
    k: &KernelSubspace,
    m: &PartialProduct,
    opts: &FactOptions,
) -> Result<NormInterval> {
    if m.dim() != k.space.dim() {
        return Err(Error::Input("product and kernel live on different spaces".into()));
    }
    if k.dim() == 0 && k.certificate.is_none() && m.blocks().is_empty() {
        return factnorm::unital_norm(x, &k.space, opts);
    }
    check_product_certificate(k, m)?;
    let base = |y: &MatrixElement| osp_quotient_with(y, k, false).map(|q| q.value).unwrap_or(f64::INFINITY);
    let accept = |prod: &MatrixElement, target: &MatrixElement| k.contains(&prod.sub(target), 1e-8);
    let problem = FactProblem::new(m, &base).with_accept(&accept);
    // every base evaluation is an SDP solve, so seeds are balanced but not refined
    let capped = FactOptions { iters: 0, ..*opts };
    let w = problem.fact_norm_upper(x, &capped)?;
    let cert = k.certificate.as_ref().expect("checked above");
    let lower = linalg::norm2(&cert.apply_element(&k.space, x));
    Ok(NormInterval {
        lower,
        upper: w.value.max(lower),
        upper_witness: w,
        lower_witness: format!("product certificate into M_{}", cert.d),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProjectivityProbe {
    /// product-quotient upper bound on S ⊗_h T modulo J ⊗ T + S ⊗ K
    pub product_upper: f64,
    /// min norm of the representative (φ_J ⊗ φ_K)(z)
    pub quotient_lower: f64,
    /// product_upper − quotient_lower
    pub slack: f64,
}

/// Kernel J ⊗ T + S ⊗ K of S ⊗ T (basis index g·dim T + h) with certificate φ_J ⊗ φ_K.
pub fn tensor_kernel(j: &KernelSubspace, k: &KernelSubspace) -> Result<KernelSubspace> {
    let (s, t) = (&j.space, &k.space);
    let st = s.tensor(t);
    let (ds, dt) = (s.dim(), t.dim());
    let mut span = Vec::new();
    for v in &j.span {
        for h in 0..dt {
            let mut w = vec![C64::new(0.0, 0.0); ds * dt];
            for g in 0..ds {
                w[g * dt + h] = v[g];
            }
            span.push(w);
        }
    }
    for v in &k.span {
        for g in 0..ds {
            let mut w = vec![C64::new(0.0, 0.0); ds * dt];
            for h in 0..dt {
                w[g * dt + h] = v[h];
            }
            span.push(w);
        }
    }
    let cert = match (&j.certificate, &k.certificate) {
        (Some(a), Some(b)) => Some(a.tensor(b)),
        _ => None,
    };
    KernelSubspace::new(&st, span, cert, true)
}

/// Compares the product-quotient upper bound of z over (S ⊗_h T)/(J ⊗ T + S ⊗ K)
/// with the min norm of its image under φ_J ⊗ φ_K.
pub fn haagerup_projectivity_probe(
    z: &MatrixElement,
    j: &KernelSubspace,
    k: &KernelSubspace,
    opts: &FactOptions,
) -> Result<ProjectivityProbe> {
    let l = tensor_kernel(j, k)?;
    let m = products::haagerup_product(&j.space, &k.space)?;
    let iv = product_quotient_upper(z, &l, &m, opts)?;
    let cert = l.certificate.as_ref().ok_or_else(|| Error::Precondition("both kernels need certificates".into()))?;
    let quotient_lower = linalg::norm2(&cert.apply_element(&l.space, z));
    Ok(ProjectivityProbe { product_upper: iv.upper, quotient_lower, slack: iv.upper - quotient_lower })
}

/// Concrete model of S ⊗_h T + T ⊗_h S: block-diagonal matrices A ⊕ B in
/// M_N ⊕ M_N (N = D_S D_T) where A is the tensor realization and B uses
/// non-commuting copies π_S(s) = s ⊗ I, π_T(t) = U (I ⊗ t) U*. Both products
/// are ambient multiplication; [S, T] is the kernel of A ⊕ B ↦ A.
#[derive(Clone, Debug)]
pub struct CommutingLift {
    pub space: ConcreteOperatorSpace,
    pub product: PartialProduct,
    pub kernel: KernelSubspace,
    st_dim: usize,
}

impl CommutingLift {
    pub fn new(s: &ConcreteOperatorSpace, t: &ConcreteOperatorSpace, seed: u64) -> Result<Self> {
        if !s.is_system() || !t.is_system() {
            return Err(Error::Precondition("commuting lifts need operator systems".into()));
        }
        let us = s.unit_index().ok_or_else(|| Error::Precondition("first factor has no unit".into()))?;
        let ut = t.unit_index().ok_or_else(|| Error::Precondition("second factor has no unit".into()))?;
        for (sp, u) in [(s, us), (t, ut)] {
            if linalg::max_abs(&(&sp.basis()[u] - linalg::identity(sp.ambient_dim()))) > 1e-12 {
                return Err(Error::Precondition("commuting lifts need the identity as unit".into()));
            }
        }
        let (das, dat) = (s.ambient_dim(), t.ambient_dim());
        let n = das * dat;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let uni = linalg::random_unitary(&mut rng, n);
        let pi_s = |a: &ComplexMatrix| linalg::kron(a, &linalg::identity(dat));
        let pi_t = |b: &ComplexMatrix| &uni * linalg::kron(&linalg::identity(das), b) * uni.adjoint();
        let diag = |a: &ComplexMatrix, b: &ComplexMatrix| {
            let mut out = ComplexMatrix::zeros(2 * n, 2 * n);
            out.view_mut((0, 0), (n, n)).copy_from(a);
            out.view_mut((n, n), (n, n)).copy_from(b);
            out
        };
        let (ds, dt) = (s.dim(), t.dim());
        let mut basis = Vec::new();
        let mut extra = Vec::new();
        for g in 0..ds {
            for h in 0..dt {
                let (a, b) = (&s.basis()[g], &t.basis()[h]);
                let tensor = linalg::kron(a, b);
                basis.push(diag(&tensor, &(pi_s(a) * pi_t(b))));
                if g != us && h != ut {
                    extra.push(diag(&tensor, &(pi_t(b) * pi_s(a))));
                }
            }
        }
        let st_dim = basis.len();
        basis.extend(extra);
        let unit = us * dt + ut;
        let space = ConcreteOperatorSpace::new(2 * n, basis, Some(unit), true)?;
        let dim = space.dim();
        let unit_vec = |i: usize| {
            let mut v = vec![C64::new(0.0, 0.0); dim];
            v[i] = c(1.0, 0.0);
            v
        };
        let sv: Vec<Vec<C64>> = (0..ds).filter(|&g| g != us).map(|g| unit_vec(g * dt + ut)).collect();
        let tv: Vec<Vec<C64>> = (0..dt).filter(|&h| h != ut).map(|h| unit_vec(us * dt + h)).collect();
        let product = products::ambient_product(&space, &[(sv.clone(), tv.clone()), (tv, sv)])?;
        // commutators: first-block pair minus its reversed copy
        let mut span = Vec::new();
        let mut e = st_dim;
        for g in 0..ds {
            for h in 0..dt {
                if g != us && h != ut {
                    let mut v = unit_vec(g * dt + h);
                    v[e] = c(-1.0, 0.0);
                    span.push(v);
                    e += 1;
                }
            }
        }
        let cert = UcpCertificate::from_map(2 * n, n, |x| x.view((0, 0), (n, n)).into_owned());
        let kernel = KernelSubspace::new(&space, span, Some(cert), true)?;
        Ok(CommutingLift { space, product, kernel, st_dim })
    }

    /// Lift of z ∈ M_n(S ⊗ T) through the S x T products.
    pub fn lift(&self, z: &MatrixElement) -> Result<MatrixElement> {
        if z.dim() != self.st_dim {
            return Err(Error::Input("element does not match S ⊗ T".into()));
        }
        let dim = self.space.dim();
        Ok(MatrixElement::from_fn(z.rows(), z.cols(), dim, |i, j, g| if g < self.st_dim { z.get(i, j, g) } else { C64::new(0.0, 0.0) }))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CommutingConsistency {
    pub commuting_lower: f64,
    pub product_upper: f64,
    pub slack: f64,
}

/// commuting_norm(z).lower against the product-quotient upper bound of the
/// lift of z modulo [S, T].
pub fn commuting_consistency(
    z: &MatrixElement,
    s: &ConcreteOperatorSpace,
    t: &ConcreteOperatorSpace,
    opts: &FactOptions,
) -> Result<CommutingConsistency> {
    let lift = CommutingLift::new(s, t, opts.seed)?;
    let lz = lift.lift(z)?;
    let iv = product_quotient_upper(&lz, &lift.kernel, &lift.product, opts)?;
    let cn = factnorm::commuting_norm(z, s, t, opts)?;
    Ok(CommutingConsistency { commuting_lower: cn.lower, product_upper: iv.upper, slack: iv.upper - cn.lower })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(super) fn diag_space() -> ConcreteOperatorSpace {
        ConcreteOperatorSpace::span(vec![linalg::identity(2), linalg::unit(2, 2, 0, 0)], Some(0), true).unwrap()
    }

    pub(super) fn average_state() -> UcpCertificate {
        UcpCertificate::from_map(2, 1, |x| ComplexMatrix::from_element(1, 1, (x[(0, 0)] + x[(1, 1)]) * 0.5))
    }

    // a e11 + b e22 = b I + (a − b) e11
    pub(super) fn diag_element(a: C64, b: C64) -> MatrixElement {
        MatrixElement::from_vector(&[b, a - b])
    }

    #[test]
    fn zero_kernel_is_the_matrix_norm() {
        let v = ConcreteOperatorSpace::matrix_algebra(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = v.random_element(&mut rng, 2, 2);
        let k = KernelSubspace::zero(&v);
        assert!((osp_quotient_norm(&x, &k).unwrap() - v.matrix_norm(&x)).abs() < 1e-12);
    }

    #[test]
    fn diagonal_example() {
        let v = diag_space();
        let k = KernelSubspace::from_certificate(&v, average_state(), true).unwrap();
        assert_eq!(k.dim(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let (a, b) = (linalg::random_complex(&mut rng), linalg::random_complex(&mut rng));
            let x = diag_element(a, b);
            let want = (a + b).norm() / 2.0;
            let q = osp_quotient_with(&x, &k, true).unwrap();
            assert!((q.value - want).abs() < 1e-9, "{} {}", q.value, want);
            assert!(q.value <= q.grid_value.unwrap() + 1e-12);
            let lo = ucp_quotient_lower(&x, &k, 1, 2, 3).unwrap();
            assert!((lo.value - want).abs() < 1e-9, "{} {}", lo.value, want);
        }
    }

    #[test]
    fn kernel_elements_vanish_and_cosets_agree() {
        let v = ConcreteOperatorSpace::matrix_algebra(2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cert = UcpCertificate::random(&mut rng, 2, 1, 2);
        let k = KernelSubspace::from_certificate(&v, cert, false).unwrap();
        assert_eq!(k.dim(), 3);
        let j = k.element(2, 2, |_, _, _| linalg::random_complex(&mut rng));
        assert!(osp_quotient_norm(&j, &k).unwrap() < 1e-9);
        let x = v.random_element(&mut rng, 2, 2);
        let a = osp_quotient_norm(&x, &k).unwrap();
        let b = osp_quotient_norm(&x.add(&j), &k).unwrap();
        assert!((a - b).abs() < 1e-8 * a.max(1.0), "{a} {b}");
        let lo = ucp_quotient_lower(&x, &k, 1, 2, 5).unwrap();
        assert!(lo.value <= a + 1e-6);
        assert!(lo.kill_residual < 1e-9);
    }

    #[test]
    fn identity_map_is_feasible_for_zero_kernel() {
        let v = ConcreteOperatorSpace::matrix_algebra(2);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = v.random_element(&mut rng, 2, 2);
        let lo = ucp_quotient_lower(&x, &KernelSubspace::zero(&v), 2, 2, 7).unwrap();
        assert!(lo.value >= v.matrix_norm(&x) - 1e-6, "{} {}", lo.value, v.matrix_norm(&x));
        assert!(lo.value <= v.matrix_norm(&x) + 1e-6);
    }

    #[test]
    fn unit_in_kernel_is_not_an_osy_kernel() {
        let v = diag_space();
        let k = KernelSubspace::new(&v, vec![vec![c(1.0, 0.0), c(0.0, 0.0)]], None, false).unwrap();
        let err = ucp_quotient_lower(&diag_element(c(1.0, 0.0), c(2.0, 0.0)), &k, 1, 1, 0).unwrap_err();
        assert!(err.to_string().contains("not an osy kernel at dimension 1"), "{err}");
    }

    #[test]
    fn trivial_product_quotient_on_the_diagonal_example() {
        let v = diag_space();
        let k = KernelSubspace::from_certificate(&v, average_state(), true).unwrap();
        let m = products::trivial_product(2, 0).unwrap();
        let x = diag_element(c(0.3, -1.0), c(2.0, 0.5));
        let want = (c(0.3, -1.0) + c(2.0, 0.5)).norm() / 2.0;
        let iv = product_quotient_upper(&x, &k, &m, &FactOptions::default().with_len(2)).unwrap();
        assert!((iv.lower - want).abs() < 1e-9);
        assert!((iv.upper - want).abs() < 1e-9, "{}", iv.upper);
    }

    #[test]
    fn non_multiplicative_certificate_is_rejected() {
        let v = ConcreteOperatorSpace::matrix_algebra(2);
        let m = products::full_ambient_product(&v).unwrap();
        let k = KernelSubspace::from_certificate(&v, UcpCertificate::random(&mut ChaCha8Rng::seed_from_u64(8), 2, 1, 2), true)
            .unwrap();
        let x = MatrixElement::from_vector(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let err = product_quotient_upper(&x, &k, &m, &FactOptions::default().with_len(1)).unwrap_err();
        assert!(matches!(err, Error::Precondition(ref s) if s.contains("pair")), "{err}");
    }

    #[test]
    fn projectivity_and_commuting_probes() {
        let s = diag_space();
        let j = KernelSubspace::from_certificate(&s, average_state(), true).unwrap();
        let st = s.tensor(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z = st.random_element(&mut rng, 1, 1);
        let opts = FactOptions { iters: 20, ..FactOptions::default().with_len(2) };
        let probe = haagerup_projectivity_probe(&z, &j, &j, &opts).unwrap();
        assert!(probe.slack >= -1e-6, "{probe:?}");
        let cc = commuting_consistency(&z, &s, &s, &opts).unwrap();
        assert!(cc.slack >= -1e-6, "{cc:?}");
    }
}
