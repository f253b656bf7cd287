//! Small dense semidefinite programs solved by log-det barrier methods.
//!
//! Two forms are supported: linear matrix inequalities in free real variables
//! (minimize c·y subject to F0 + Σ y_k F_k ≻ 0) and the standard primal form
//! over Hermitian X (minimize tr(C X) subject to tr(A_i X) = b_i, X ⪰ 0) with a
//! phase one that detects infeasibility and restricts to a face when the
//! feasible set has no interior.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, c, ComplexMatrix, C64};

const MAX_NEWTON: usize = 80;
const MAX_OUTER: usize = 60;

fn re_tr_prod(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    // Re tr(A B) without forming the product
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..a.ncols() {
            s += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    s
}

fn pd_logdet(f: &ComplexMatrix) -> Option<f64> {
    if !linalg::is_finite(f) {
        return None;
    }
    let ch = f.clone().cholesky()?;
    let l = ch.l_dirty();
    let mut logdet = 0.0;
    for i in 0..f.nrows() {
        let d = l[(i, i)].re;
        if d <= 0.0 {
            return None;
        }
        logdet += 2.0 * d.ln();
    }
    Some(logdet)
}

/// Inverse and log-determinant of a Hermitian positive definite matrix.
fn pd_inverse_logdet(f: &ComplexMatrix) -> Option<(ComplexMatrix, f64)> {
    if !linalg::is_finite(f) {
        return None;
    }
    let ch = f.clone().cholesky()?;
    let l = ch.l_dirty();
    let mut logdet = 0.0;
    for i in 0..f.nrows() {
        let d = l[(i, i)].re;
        if d <= 0.0 {
            return None;
        }
        logdet += 2.0 * d.ln();
    }
    Some((ch.inverse(), logdet))
}

fn hermitize(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()) * c(0.5, 0.0)
}

fn is_pd(f: &ComplexMatrix) -> bool {
    linalg::is_finite(f) && f.clone().cholesky().is_some()
}

fn solve_sym(h: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let n = h.nrows();
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut reg = h.clone();
    for i in 0..n {
        reg[(i, i)] += 1e-13 * scale;
    }
    if let Some(ch) = reg.clone().cholesky() {
        return ch.solve(rhs);
    }
    reg.svd(true, true).solve(rhs, 1e-12 * scale).unwrap_or_else(|_| DVector::zeros(n))
}

/// Minimizes cost·y subject to F0 + Σ y_k F_k ≻ 0, starting from a strictly
/// feasible `y0`; stops when the barrier gap N/τ drops below `tol`.
/// Returns `None` if `y0` is not strictly feasible.
pub fn lmi_minimize(cost: &[f64], f0: &ComplexMatrix, fk: &[ComplexMatrix], y0: &[f64], tol: f64) -> Option<Vec<f64>> {
    let p = fk.len();
    let terms: Vec<SparseTerm> = fk.iter().map(SparseTerm::new).collect();
    let eval = |y: &[f64]| -> ComplexMatrix {
        let mut f = f0.clone();
        for (k, t) in terms.iter().enumerate() {
            if y[k] != 0.0 {
                t.add_to(&mut f, y[k]);
            }
        }
        f
    };
    let n = f0.nrows();
    let mut y = y0.to_vec();
    if !is_pd(&eval(&y)) {
        return None;
    }
    let cy = |y: &[f64]| cost.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let mut tau = 1.0 / (cy(&y).abs().max(1.0));
    for _ in 0..MAX_OUTER {
        for _ in 0..MAX_NEWTON {
            let f = eval(&y);
            let Some((finv, logdet)) = pd_inverse_logdet(&f) else { break };
            // W_k = F^{-1} F_k restricted to the nonzero columns of F_k
            let w: Vec<ComplexMatrix> = terms.iter().map(|t| t.left_mul(&finv)).collect();
            let mut grad = DVector::zeros(p);
            let mut hess = DMatrix::zeros(p, p);
            for k in 0..p {
                let tk = &terms[k];
                grad[k] = tau * cost[k] - tk.cols.iter().enumerate().map(|(a, &col)| w[k][(col, a)].re).sum::<f64>();
                for l in 0..=k {
                    let tl = &terms[l];
                    // Re tr(W_k W_l) = Σ_{a ∈ cols_k, b ∈ cols_l} W_k[b, a] W_l[a, b]
                    let mut v = 0.0;
                    for (a, &ca) in tk.cols.iter().enumerate() {
                        for (b, &cb) in tl.cols.iter().enumerate() {
                            v += (w[k][(cb, a)] * w[l][(ca, b)]).re;
                        }
                    }
                    hess[(k, l)] = v;
                    hess[(l, k)] = v;
                }
            }
            let step = solve_sym(&hess, &(-&grad));
            let dd = grad.dot(&step);
            if -dd / 2.0 <= 1e-11 {
                break;
            }
            let phi0 = tau * cy(&y) - logdet;
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-14 {
                let cand: Vec<f64> = y.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
                if let Some(ld) = pd_logdet(&eval(&cand)) {
                    if tau * cy(&cand) - ld <= phi0 + 0.25 * t * dd {
                        y = cand;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if n as f64 / tau < tol {
            break;
        }
        tau *= 8.0;
    }
    Some(y)
}

/// Nonzero rows and columns of a constraint matrix with the dense block they carve out.
struct SparseTerm {
    rows: Vec<usize>,
    cols: Vec<usize>,
    block: ComplexMatrix,
}

impl SparseTerm {
    fn new(m: &ComplexMatrix) -> Self {
        let rows: Vec<usize> = (0..m.nrows()).filter(|&i| (0..m.ncols()).any(|j| m[(i, j)] != C64::new(0.0, 0.0))).collect();
        let cols: Vec<usize> = (0..m.ncols()).filter(|&j| (0..m.nrows()).any(|i| m[(i, j)] != C64::new(0.0, 0.0))).collect();
        let block = ComplexMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])]);
        SparseTerm { rows, cols, block }
    }

    fn add_to(&self, f: &mut ComplexMatrix, y: f64) {
        for (a, &r) in self.rows.iter().enumerate() {
            for (b, &col) in self.cols.iter().enumerate() {
                f[(r, col)] += self.block[(a, b)] * y;
            }
        }
    }

    /// (A M)[:, cols]
    fn left_mul(&self, a: &ComplexMatrix) -> ComplexMatrix {
        let sub = ComplexMatrix::from_fn(a.nrows(), self.rows.len(), |i, k| a[(i, self.rows[k])]);
        sub * &self.block
    }
}

/// Standard-form problem over n x n Hermitian matrices.
#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub n: usize,
    /// Hermitian objective matrix
    pub c: ComplexMatrix,
    /// Hermitian constraint matrices with right-hand sides
    pub a: Vec<ComplexMatrix>,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub x: ComplexMatrix,
    pub value: f64,
    /// rank of the face the barrier ran on (n when the feasible set has interior)
    pub face_rank: usize,
    /// max |tr(A_i X) − b_i|
    pub residual: f64,
}

impl SdpProblem {
    pub fn new(n: usize) -> Self {
        SdpProblem { n, c: ComplexMatrix::zeros(n, n), a: Vec::new(), b: Vec::new() }
    }

    /// Adds Re tr(B X) = re and Im tr(B X) = im for an arbitrary complex B.
    pub fn add_complex_constraint(&mut self, bm: &ComplexMatrix, target: C64) {
        let h = (bm + bm.adjoint()) * c(0.5, 0.0);
        let k = (bm - bm.adjoint()) * c(0.0, -0.5);
        // a vanishing part with a zero target carries no constraint
        for (m, t) in [(h, target.re), (k, target.im)] {
            if linalg::max_abs(&m) > 0.0 || t != 0.0 {
                self.a.push(m);
                self.b.push(t);
            }
        }
    }

    pub fn residual(&self, x: &ComplexMatrix) -> f64 {
        self.a.iter().zip(&self.b).map(|(a, b)| (re_tr_prod(a, x) - b).abs()).fold(0.0, f64::max)
    }
}

// Real coordinates of r x r Hermitian matrices: diagonal entries, then for
// p < q the real and imaginary parts of the (p, q) entry.
fn herm_basis(r: usize) -> Vec<ComplexMatrix> {
    let mut out = Vec::with_capacity(r * r);
    for p in 0..r {
        out.push(linalg::unit(r, r, p, p));
    }
    for p in 0..r {
        for q in p + 1..r {
            let mut m = ComplexMatrix::zeros(r, r);
            m[(p, q)] = c(1.0, 0.0);
            m[(q, p)] = c(1.0, 0.0);
            out.push(m);
            let mut m = ComplexMatrix::zeros(r, r);
            m[(p, q)] = c(0.0, 1.0);
            m[(q, p)] = c(0.0, -1.0);
            out.push(m);
        }
    }
    out
}

/// Hermitian least-norm solution of tr(A_i X) = b_i, with its residual.
fn particular(a: &[ComplexMatrix], b: &[f64], r: usize) -> (ComplexMatrix, f64) {
    let basis = herm_basis(r);
    let m = a.len();
    if m == 0 {
        return (ComplexMatrix::zeros(r, r), 0.0);
    }
    // tr(A E) for the sparse basis elements
    let mut mat = DMatrix::zeros(m, basis.len());
    for (i, ai) in a.iter().enumerate() {
        let mut k = 0;
        for p in 0..r {
            mat[(i, k)] = ai[(p, p)].re;
            k += 1;
        }
        for p in 0..r {
            for q in p + 1..r {
                // E = e_pq + e_qp ⇒ tr(A E) = A_qp + A_pq
                mat[(i, k)] = (ai[(q, p)] + ai[(p, q)]).re;
                // E = i e_pq − i e_qp ⇒ tr(A E) = i A_qp − i A_pq
                mat[(i, k + 1)] = (c(0.0, 1.0) * (ai[(q, p)] - ai[(p, q)])).re;
                k += 2;
            }
        }
    }
    let rhs = DVector::from_column_slice(b);
    let scale = mat.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let sol = mat.clone().svd(true, true).solve(&rhs, 1e-12 * scale).unwrap_or_else(|_| DVector::zeros(basis.len()));
    let res = (&mat * &sol - &rhs).amax();
    let mut x = ComplexMatrix::zeros(r, r);
    for (k, e) in basis.iter().enumerate() {
        if sol[k] != 0.0 {
            x += e * c(sol[k], 0.0);
        }
    }
    (x, res)
}

fn lambda_min(x: &ComplexMatrix) -> f64 {
    linalg::hermitian_eigen(x).0.into_iter().fold(f64::INFINITY, f64::min)
}

fn mean_eig(x: &ComplexMatrix) -> f64 {
    (0..x.nrows()).map(|i| x[(i, i)].re).sum::<f64>() / x.nrows().max(1) as f64
}

fn schur(a: &[ComplexMatrix], x: &ComplexMatrix) -> (Vec<ComplexMatrix>, DMatrix<f64>) {
    let xax: Vec<ComplexMatrix> = a.iter().map(|ai| x * ai * x).collect();
    let m = a.len();
    let mut s = DMatrix::zeros(m, m);
    for j in 0..m {
        for i in 0..=j {
            let v = re_tr_prod(&a[j], &xax[i]);
            s[(j, i)] = v;
            s[(i, j)] = v;
        }
    }
    (xax, s)
}

fn solve_general(m: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    if m.iter().chain(rhs.iter()).any(|v| !v.is_finite()) {
        return DVector::zeros(m.ncols());
    }
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    m.clone().svd(true, true).solve(rhs, 1e-13 * scale).unwrap_or_else(|_| DVector::zeros(m.ncols()))
}

/// Phase one on the face: maximize s subject to X = Z + s I, Z ≻ 0, A(X) = b.
/// Returns (Z + s I, s).
fn phase_one(a: &[ComplexMatrix], b: &[f64], x0: &ComplexMatrix, tol: f64) -> (ComplexMatrix, f64) {
    let r = x0.nrows();
    let av: Vec<f64> = a.iter().map(|ai| (0..r).map(|i| ai[(i, i)].re).sum()).collect();
    let mut s = lambda_min(x0) - 1.0 - x0.norm();
    let mut z = x0 - linalg::identity(r) * c(s, 0.0);
    let mu0 = mean_eig(&z).max(1e-300);
    let mut tau = 1.0 / mu0;
    let residual = |z: &ComplexMatrix, s: f64| {
        a.iter().zip(b).zip(&av).map(|((aj, bj), tj)| (re_tr_prod(aj, z) + s * tj - bj).abs()).fold(0.0, f64::max)
    };
    let res_tol = residual(&z, s).max(1e-10 * b.iter().fold(1.0f64, |m, v| m.max(v.abs())));
    let m = a.len();
    for _ in 0..MAX_OUTER {
        for _ in 0..MAX_NEWTON {
            let Some((zinv, logdet)) = pd_inverse_logdet(&z) else { break };
            let (zaz, sm) = schur(a, &z);
            let mut kkt = DMatrix::zeros(m + 1, m + 1);
            kkt.view_mut((0, 0), (m, m)).copy_from(&sm);
            let mut rhs = DVector::zeros(m + 1);
            for j in 0..m {
                kkt[(j, m)] = -av[j];
                kkt[(m, j)] = av[j];
                // Newton step that also removes the current equality residual
                let resid = b[j] - re_tr_prod(&a[j], &z) - s * av[j];
                rhs[j] = re_tr_prod(&a[j], &z) - resid;
            }
            rhs[m] = tau;
            let sol = solve_general(&kkt, &rhs);
            let mut dz = z.clone();
            for (i, xi) in zaz.iter().enumerate() {
                if sol[i] != 0.0 {
                    dz -= xi * c(sol[i], 0.0);
                }
            }
            let dz = hermitize(&dz);
            let ds = sol[m];
            // directional derivative of −τ s − log det Z
            let dd = -tau * ds - re_tr_prod(&zinv, &dz);
            if -dd / 2.0 <= 1e-11 {
                break;
            }
            let f0 = -tau * s - logdet;
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-14 {
                let cand = &z + &dz * c(t, 0.0);
                if let Some((_, ld)) = pd_inverse_logdet(&cand) {
                    if -tau * (s + t * ds) - ld <= f0 + 0.25 * t * dd && residual(&cand, s + t * ds) <= res_tol {
                        z = cand;
                        s += t * ds;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let mu = mean_eig(&(&z + linalg::identity(r) * c(s, 0.0))).abs().max(1e-300);
        if s > 1e6 * mu || (r as f64 / tau) < tol * mu {
            break;
        }
        tau *= 8.0;
    }
    (&z + linalg::identity(r) * c(s, 0.0), s)
}

/// Barrier minimization of tr(C X) over {X ≻ 0, A(X) = b} from a strictly
/// feasible X.
fn phase_two(cm: &ComplexMatrix, a: &[ComplexMatrix], b: &[f64], x0: ComplexMatrix, tol: f64) -> ComplexMatrix {
    let r = x0.nrows();
    let cn = cm.norm();
    if cn == 0.0 {
        return x0;
    }
    let cs = cm * c(1.0 / cn, 0.0);
    let mut x = x0;
    let mut tau = 1.0 / mean_eig(&x).max(1e-300);
    let residual = |m: &ComplexMatrix| a.iter().zip(b).map(|(aj, bj)| (re_tr_prod(aj, m) - bj).abs()).fold(0.0, f64::max);
    let res_tol = residual(&x).max(1e-10 * b.iter().fold(1.0f64, |m, v| m.max(v.abs())));
    for _ in 0..MAX_OUTER {
        // a primal-only barrier loses the search direction to cancellation once
        // τ reaches ~1e8 relative to the data; stop when centering stalls there
        let mut stalled = false;
        for it in 0..MAX_NEWTON {
            let Some((xinv, logdet)) = pd_inverse_logdet(&x) else { break };
            let (xax, sm) = schur(a, &x);
            let xcx = &x * &cs * &x;
            let rhs = DVector::from_iterator(
                a.len(),
                a.iter().zip(b).map(|(aj, bj)| {
                    let ax = re_tr_prod(aj, &x);
                    ax - tau * re_tr_prod(aj, &xcx) - (bj - ax)
                }),
            );
            let nu = solve_general(&sm, &rhs);
            let mut dx = &x - &xcx * c(tau, 0.0);
            for (i, xi) in xax.iter().enumerate() {
                if nu[i] != 0.0 {
                    dx -= xi * c(nu[i], 0.0);
                }
            }
            let dx = hermitize(&dx);
            let dd = tau * re_tr_prod(&cs, &dx) - re_tr_prod(&xinv, &dx);
            if dd >= 0.0 {
                stalled = it == 0;
                break;
            }
            if -dd / 2.0 <= 1e-11 {
                break;
            }
            let f0 = tau * re_tr_prod(&cs, &x) - logdet;
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-14 {
                let cand = &x + &dx * c(t, 0.0);
                if let Some((_, ld)) = pd_inverse_logdet(&cand) {
                    if tau * re_tr_prod(&cs, &cand) - ld <= f0 + 0.25 * t * dd && residual(&cand) <= res_tol {
                        x = cand;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved {
                stalled = it == 0;
                break;
            }
        }
        if stalled || (r as f64 / tau) < tol * mean_eig(&x).abs().max(1e-300) {
            break;
        }
        tau *= 8.0;
    }
    x
}

/// Strictly feasible point of the constraint set, restricted to the face the
/// set spans. Reusable across objectives.
#[derive(Clone, Debug)]
pub struct FeasibleRegion {
    /// isometry onto the face
    q: ComplexMatrix,
    a: Vec<ComplexMatrix>,
    b: Vec<f64>,
    start: ComplexMatrix,
    full_a: Vec<ComplexMatrix>,
}

impl SdpProblem {
    /// Phase one with facial reduction. Fails with [`Error::Infeasible`] when no
    /// positive semidefinite matrix satisfies the constraints.
    pub fn prepare(&self) -> Result<FeasibleRegion> {
        let mut q = linalg::identity(self.n);
        let bscale = self.b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        loop {
            let r = q.ncols();
            if r == 0 {
                return Err(Error::Infeasible("no positive semidefinite point satisfies the constraints".into()));
            }
            let a: Vec<ComplexMatrix> = self.a.iter().map(|ai| q.adjoint() * ai * &q).collect();
            let (x0, res) = particular(&a, &self.b, r);
            if res > 1e-9 * bscale {
                return Err(Error::Infeasible(format!("linear constraints are inconsistent (residual {res:.2e})")));
            }
            let (x1, s) = phase_one(&a, &self.b, &x0, 1e-9);
            let mu = mean_eig(&x1).abs().max(1e-300);
            if s > 1e-6 * mu {
                return Ok(FeasibleRegion { q, a, b: self.b.clone(), start: x1, full_a: self.a.clone() });
            }
            if s < -1e-6 * mu {
                return Err(Error::Infeasible(format!(
                    "no positive semidefinite point satisfies the constraints (margin {s:.2e})"
                )));
            }
            // no interior at this margin: restrict to the range of the
            // near-optimal phase-one point
            let (vals, vecs) = linalg::hermitian_eigen(&x1);
            let top = vals.iter().cloned().fold(0.0f64, f64::max);
            let keep: Vec<usize> = (0..r).filter(|&i| vals[i] > 1e-5 * top).collect();
            if keep.len() == r || top <= 0.0 {
                return Err(Error::Infeasible("facial reduction made no progress".into()));
            }
            let sub = ComplexMatrix::from_fn(r, keep.len(), |i, j| vecs[(i, keep[j])]);
            q = &q * sub;
        }
    }
}

impl FeasibleRegion {
    pub fn face_rank(&self) -> usize {
        self.q.ncols()
    }

    /// The strictly feasible point found by phase one.
    pub fn start_point(&self) -> ComplexMatrix {
        &self.q * &self.start * self.q.adjoint()
    }

    /// Minimizes tr(C X) over the region (C Hermitian). Every returned X is
    /// feasible; the objective is accurate to roughly `tol` relative, limited
    /// near 1e-8 by the primal barrier.
    pub fn minimize(&self, cm: &ComplexMatrix, tol: f64) -> SdpSolution {
        let cq = self.q.adjoint() * cm * &self.q;
        let xr = phase_two(&cq, &self.a, &self.b, self.start.clone(), tol);
        let x = &self.q * &xr * self.q.adjoint();
        let value = re_tr_prod(cm, &x);
        let residual = self.full_a.iter().zip(&self.b).map(|(a, b)| (re_tr_prod(a, &x) - b).abs()).fold(0.0, f64::max);
        SdpSolution { x, value, face_rank: self.q.ncols(), residual }
    }
}

/// Solves a standard-form problem to relative barrier gap `tol`.
pub fn sdp_minimize(p: &SdpProblem, tol: f64) -> Result<SdpSolution> {
    Ok(p.prepare()?.minimize(&p.c, tol))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lmi_spectral_norm_minimum() {
        // min_t ‖diag(a + t, b − t)‖ = |a + b| / 2 for real a, b
        let (a, b) = (0.7, -2.1);
        let h = |m: &ComplexMatrix| {
            let n = m.nrows();
            let mut out = ComplexMatrix::zeros(2 * n, 2 * n);
            out.view_mut((0, n), (n, n)).copy_from(m);
            out.view_mut((n, 0), (n, n)).copy_from(&m.adjoint());
            out
        };
        let m0 = ComplexMatrix::from_diagonal(&linalg::ComplexVector::from_vec(vec![c(a, 0.0), c(b, 0.0)]));
        let m1 = ComplexMatrix::from_diagonal(&linalg::ComplexVector::from_vec(vec![c(1.0, 0.0), c(-1.0, 0.0)]));
        let f0 = -h(&m0);
        let fk = vec![linalg::identity(4), -h(&m1)];
        let y = lmi_minimize(&[1.0, 0.0], &f0, &fk, &[10.0, 0.0], 1e-12).unwrap();
        assert!((y[0] - (a + b).abs() / 2.0).abs() < 1e-9, "{y:?}");
    }

    #[test]
    fn density_matrix_eigenvalue() {
        // min tr(C ρ) over states is λ_min(C)
        let cm = ComplexMatrix::from_fn(3, 3, |i, j| c((i + j) as f64, if i < j { 1.0 } else if i > j { -1.0 } else { 0.0 }));
        let mut p = SdpProblem::new(3);
        p.c = cm.clone();
        p.add_complex_constraint(&linalg::identity(3), c(1.0, 0.0));
        let sol = sdp_minimize(&p, 1e-12).unwrap();
        assert!((sol.value - lambda_min(&cm)).abs() < 1e-7, "{} {}", sol.value, lambda_min(&cm));
        assert_eq!(sol.face_rank, 3);
    }

    #[test]
    fn face_reduction_and_infeasibility() {
        // ρ ⪰ 0, tr ρ = 1, ρ_00 = 0 forces ρ onto span{e1, e2}
        let mut p = SdpProblem::new(3);
        p.c = linalg::unit(3, 3, 1, 1);
        p.add_complex_constraint(&linalg::identity(3), c(1.0, 0.0));
        p.add_complex_constraint(&linalg::unit(3, 3, 0, 0), c(0.0, 0.0));
        let sol = sdp_minimize(&p, 1e-12).unwrap();
        assert!(sol.face_rank < 3);
        assert!(sol.value.abs() < 1e-9 && sol.residual < 1e-9);
        // ρ_00 = −1 is infeasible
        let mut q = SdpProblem::new(2);
        q.add_complex_constraint(&linalg::identity(2), c(1.0, 0.0));
        q.add_complex_constraint(&linalg::unit(2, 2, 0, 0), c(-1.0, 0.0));
        assert!(matches!(sdp_minimize(&q, 1e-10), Err(Error::Infeasible(_))));
    }
}
