//! Correlations from commuting projection-valued measures, synchronous
//! corners, the universal nonsignalling projection system S_{n,k}, and the
//! commutator (tracial) seminorm with a trace-extension test.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factnorm::{FactOptions, FactProblem};
use crate::linalg::{self, c, ComplexMatrix, ComplexVector, C64};
use crate::optim;
use crate::products::{self, BlockSpec, FreeElement, PartialProduct, Word};
use crate::spaces::{ConcreteOperatorSpace, MatrixElement};

/// Tolerance for table invariants and PVM checks.
pub const TABLE_TOL: f64 = 1e-10;
/// Absolute residual below which commutator-span membership is certified.
pub const MEMBERSHIP_TOL: f64 = 1e-11;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// p(a,b|x,y) stored as p[x][y][a][b].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub n: usize,
    pub k: usize,
    pub p: Vec<Vec<Vec<Vec<f64>>>>,
}

impl CorrelationTable {
    /// Builds and validates a table.
    pub fn new(n: usize, k: usize, p: Vec<Vec<Vec<Vec<f64>>>>) -> Result<Self> {
        let t = CorrelationTable { n, k, p };
        t.validate(TABLE_TOL)?;
        Ok(t)
    }

    fn from_fn(n: usize, k: usize, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let p = (0..n)
            .map(|x| (0..n).map(|y| (0..k).map(|a| (0..k).map(|b| f(a, b, x, y)).collect()).collect()).collect())
            .collect();
        CorrelationTable { n, k, p }
    }

    /// The table of deterministic strategies a = f(x), b = g(y).
    pub fn deterministic(k: usize, f: &[usize], g: &[usize]) -> Result<Self> {
        if f.len() != g.len() || f.iter().chain(g).any(|&v| v >= k) {
            return Err(Error::Input("deterministic strategy out of range".into()));
        }
        Ok(Self::from_fn(f.len(), k, |a, b, x, y| if a == f[x] && b == g[y] { 1.0 } else { 0.0 }))
    }

    pub fn get(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.p[x][y][a][b]
    }

    /// Shape, positivity, normalization and both nonsignalling conditions.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let (n, k) = (self.n, self.k);
        if n == 0 || k == 0 {
            return Err(Error::Input("table needs n, k ≥ 1".into()));
        }
        let shape_ok = self.p.len() == n
            && self.p.iter().all(|px| px.len() == n && px.iter().all(|pxy| pxy.len() == k && pxy.iter().all(|r| r.len() == k)));
        if !shape_ok {
            return Err(Error::Input(format!("table shape does not match n = {n}, k = {k}")));
        }
        for x in 0..n {
            for y in 0..n {
                let mut total = 0.0;
                for a in 0..k {
                    for b in 0..k {
                        let v = self.get(a, b, x, y);
                        if !v.is_finite() || v < -1e-12 {
                            return Err(Error::Input(format!("p({a},{b}|{x},{y}) = {v} is negative")));
                        }
                        total += v;
                    }
                }
                if (total - 1.0).abs() > tol {
                    return Err(Error::Input(format!("p(·,·|{x},{y}) sums to {total}")));
                }
            }
        }
        let v = self.signalling();
        if v > tol {
            return Err(Error::Input(format!("table is signalling (deviation {v:.3e})")));
        }
        Ok(())
    }

    /// Largest dependence of a marginal on the other party's input.
    pub fn signalling(&self) -> f64 {
        let (n, k) = (self.n, self.k);
        let mut worst = 0.0f64;
        for x in 0..n {
            for a in 0..k {
                let m0: f64 = (0..k).map(|b| self.get(a, b, x, 0)).sum();
                for y in 1..n {
                    let m: f64 = (0..k).map(|b| self.get(a, b, x, y)).sum();
                    worst = worst.max((m - m0).abs());
                }
            }
        }
        for y in 0..n {
            for b in 0..k {
                let m0: f64 = (0..k).map(|a| self.get(a, b, 0, y)).sum();
                for x in 1..n {
                    let m: f64 = (0..k).map(|a| self.get(a, b, x, y)).sum();
                    worst = worst.max((m - m0).abs());
                }
            }
        }
        worst
    }

    /// max |p − q| entrywise (infinite on shape mismatch).
    pub fn distance(&self, other: &Self) -> f64 {
        if self.n != other.n || self.k != other.k {
            return f64::INFINITY;
        }
        let mut d = 0.0f64;
        for x in 0..self.n {
            for y in 0..self.n {
                for a in 0..self.k {
                    for b in 0..self.k {
                        d = d.max((self.get(a, b, x, y) - other.get(a, b, x, y)).abs());
                    }
                }
            }
        }
        d
    }

    /// Rows `x,y,a,b,p` with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,a,b,p\n");
        for x in 0..self.n {
            for y in 0..self.n {
                for a in 0..self.k {
                    for b in 0..self.k {
                        out.push_str(&format!("{x},{y},{a},{b},{}\n", self.get(a, b, x, y)));
                    }
                }
            }
        }
        out
    }
}

pub fn is_synchronous(t: &CorrelationTable) -> bool {
    (0..t.n).all(|x| (0..t.k).all(|a| (0..t.k).all(|b| a == b || t.get(a, b, x, x) <= TABLE_TOL)))
}

/// p(a,b|x,y) = q(a,b|x,y+n) for a table q on 2n inputs.
pub fn synchronous_corner(q: &CorrelationTable) -> Result<CorrelationTable> {
    if q.n % 2 != 0 {
        return Err(Error::Input(format!("corner needs an even number of inputs, got {}", q.n)));
    }
    let n = q.n / 2;
    let p = CorrelationTable::from_fn(n, q.k, |a, b, x, y| q.get(a, b, x, y + n));
    p.validate(TABLE_TOL)?;
    Ok(p)
}

fn check_pvms(name: &str, pvms: &[Vec<ComplexMatrix>], d: usize, k: usize) -> Result<()> {
    for (x, pvm) in pvms.iter().enumerate() {
        if pvm.len() != k {
            return Err(Error::Input(format!("{name}[{x}] has {} outcomes, expected {k}", pvm.len())));
        }
        let mut total = ComplexMatrix::zeros(d, d);
        for (a, p) in pvm.iter().enumerate() {
            if p.nrows() != d || p.ncols() != d {
                return Err(Error::Input(format!("{name}[{x}][{a}] is not {d}x{d}")));
            }
            if linalg::max_abs(&(p - p.adjoint())) > TABLE_TOL || linalg::max_abs(&(p * p - p)) > TABLE_TOL {
                return Err(Error::Input(format!("{name}[{x}][{a}] is not a projection")));
            }
            for (b, q) in pvm.iter().enumerate().skip(a + 1) {
                if linalg::max_abs(&(p * q)) > TABLE_TOL {
                    return Err(Error::Input(format!("{name}[{x}][{a}] and {name}[{x}][{b}] are not orthogonal")));
                }
            }
            total += p;
        }
        if linalg::max_abs(&(total - linalg::identity(d))) > TABLE_TOL {
            return Err(Error::Input(format!("{name}[{x}] does not sum to the identity")));
        }
    }
    Ok(())
}

fn check_density(rho: &ComplexMatrix, d: usize) -> Result<()> {
    if rho.nrows() != d || rho.ncols() != d {
        return Err(Error::Input(format!("state must be {d}x{d}")));
    }
    if linalg::max_abs(&(rho - rho.adjoint())) > TABLE_TOL {
        return Err(Error::Input("state is not Hermitian".into()));
    }
    let (ev, _) = linalg::hermitian_eigen(rho);
    if ev.iter().any(|&l| l < -TABLE_TOL) || (rho.trace().re - 1.0).abs() > TABLE_TOL {
        return Err(Error::Input("state is not a density matrix".into()));
    }
    Ok(())
}

/// PVMs E_{x,a} on C^{d1} and F_{y,b} on C^{d2} with a density matrix on C^{d1}⊗C^{d2}.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "PvmModelRepr", into = "PvmModelRepr")]
pub struct PVMModel {
    pub d1: usize,
    pub d2: usize,
    pub e: Vec<Vec<ComplexMatrix>>,
    pub f: Vec<Vec<ComplexMatrix>>,
    pub state: ComplexMatrix,
}

type RawMatrix = Vec<Vec<[f64; 2]>>;

fn to_raw(m: &ComplexMatrix) -> RawMatrix {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

fn from_raw(r: &RawMatrix) -> std::result::Result<ComplexMatrix, String> {
    let cols = r.first().map(|row| row.len()).unwrap_or(0);
    if r.iter().any(|row| row.len() != cols) {
        return Err("ragged matrix".into());
    }
    Ok(ComplexMatrix::from_fn(r.len(), cols, |i, j| c(r[i][j][0], r[i][j][1])))
}

#[derive(Serialize, Deserialize)]
struct PvmModelRepr {
    d1: usize,
    d2: usize,
    e: Vec<Vec<RawMatrix>>,
    f: Vec<Vec<RawMatrix>>,
    state: RawMatrix,
}

impl From<PVMModel> for PvmModelRepr {
    fn from(m: PVMModel) -> Self {
        let conv = |v: &Vec<Vec<ComplexMatrix>>| v.iter().map(|pvm| pvm.iter().map(to_raw).collect()).collect();
        PvmModelRepr { d1: m.d1, d2: m.d2, e: conv(&m.e), f: conv(&m.f), state: to_raw(&m.state) }
    }
}

impl TryFrom<PvmModelRepr> for PVMModel {
    type Error = String;

    fn try_from(r: PvmModelRepr) -> std::result::Result<Self, String> {
        let conv = |v: &Vec<Vec<RawMatrix>>| -> std::result::Result<Vec<Vec<ComplexMatrix>>, String> {
            v.iter().map(|pvm| pvm.iter().map(from_raw).collect()).collect()
        };
        PVMModel::new(r.d1, r.d2, conv(&r.e)?, conv(&r.f)?, from_raw(&r.state)?).map_err(|e| e.to_string())
    }
}

impl PVMModel {
    pub fn new(
        d1: usize,
        d2: usize,
        e: Vec<Vec<ComplexMatrix>>,
        f: Vec<Vec<ComplexMatrix>>,
        state: ComplexMatrix,
    ) -> Result<Self> {
        let m = PVMModel { d1, d2, e, f, state };
        m.validate()?;
        Ok(m)
    }

    pub fn inputs(&self) -> usize {
        self.e.len()
    }

    pub fn outputs(&self) -> usize {
        self.e.first().map(|p| p.len()).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k) = (self.inputs(), self.outputs());
        if n == 0 || k == 0 || self.d1 == 0 || self.d2 == 0 {
            return Err(Error::Input("model needs inputs, outputs and positive dimensions".into()));
        }
        if self.f.len() != n {
            return Err(Error::Input(format!("E has {n} inputs, F has {}", self.f.len())));
        }
        check_pvms("E", &self.e, self.d1, k)?;
        check_pvms("F", &self.f, self.d2, k)?;
        check_density(&self.state, self.d1 * self.d2)
    }

    /// Random PVMs (unitary conjugates of random diagonal outcome patterns)
    /// and a random pure state.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize, d1: usize, d2: usize) -> Self {
        let e = (0..n).map(|_| random_pvm(rng, d1, k)).collect();
        let f = (0..n).map(|_| random_pvm(rng, d2, k)).collect();
        let v = ComplexVector::from_fn(d1 * d2, |_, _| linalg::random_complex(rng));
        let v = &v / c(v.norm(), 0.0);
        let state = &v * v.adjoint();
        PVMModel { d1, d2, e, f, state }
    }
}

/// {U P_a U*} where P_a projects onto a random set of coordinates labelled a.
pub fn random_pvm<R: Rng + ?Sized>(rng: &mut R, d: usize, k: usize) -> Vec<ComplexMatrix> {
    let labels: Vec<usize> = (0..d).map(|_| rng.gen_range(0..k)).collect();
    let u = linalg::random_unitary(rng, d);
    (0..k)
        .map(|a| {
            let diag = ComplexMatrix::from_fn(d, d, |i, j| if i == j && labels[i] == a { c(1.0, 0.0) } else { ZERO });
            let p = &u * diag * u.adjoint();
            (&p + p.adjoint()) * c(0.5, 0.0)
        })
        .collect()
}

/// p(a,b|x,y) = Tr(ρ (E_{x,a} ⊗ F_{y,b})).
pub fn correlation_from_model(m: &PVMModel) -> Result<CorrelationTable> {
    m.validate()?;
    let (n, k) = (m.inputs(), m.outputs());
    let t = CorrelationTable::from_fn(n, k, |a, b, x, y| {
        let op = linalg::kron(&m.e[x][a], &m.f[y][b]);
        (&m.state * op).trace().re
    });
    t.validate(TABLE_TOL)?;
    Ok(t)
}

/// q(a,b|x,y) = τ(R_{x,a} R_{y,b}) with R_{x,a} = E_{x,a} ⊗ I for x < n and
/// R_{x,a} = I ⊗ F_{x−n,a} otherwise; τ = Tr(ρ ·), by default the normalized
/// trace. Rejects a non-tracial ρ.
pub fn build_corner_model(
    e: &[Vec<ComplexMatrix>],
    f: &[Vec<ComplexMatrix>],
    density: Option<&ComplexMatrix>,
) -> Result<CorrelationTable> {
    let n = e.len();
    let k = e.first().map(|p| p.len()).unwrap_or(0);
    if n == 0 || k == 0 || f.len() != n {
        return Err(Error::Input("corner model needs equally many nonempty E and F measurements".into()));
    }
    let d1 = e[0][0].nrows();
    let d2 = f[0].first().map(|p| p.nrows()).unwrap_or(0);
    check_pvms("E", e, d1, k)?;
    check_pvms("F", f, d2, k)?;
    let d = d1 * d2;
    let rho = match density {
        Some(r) => r.clone(),
        None => linalg::identity(d) * c(1.0 / d as f64, 0.0),
    };
    check_density(&rho, d)?;
    let (i1, i2) = (linalg::identity(d1), linalg::identity(d2));
    let r: Vec<Vec<ComplexMatrix>> = e
        .iter()
        .map(|pvm| pvm.iter().map(|p| linalg::kron(p, &i2)).collect())
        .chain(f.iter().map(|pvm| pvm.iter().map(|p| linalg::kron(&i1, p)).collect()))
        .collect();
    let tau = |m: &ComplexMatrix| (&rho * m).trace();
    check_tracial(&r, &tau)?;
    let q = CorrelationTable::from_fn(2 * n, k, |a, b, x, y| tau(&(&r[x][a] * &r[y][b])).re);
    q.validate(TABLE_TOL)?;
    if !is_synchronous(&q) {
        return Err(Error::Precondition("corner table is not synchronous".into()));
    }
    Ok(q)
}

/// |τ(AB) − τ(BA)| ≤ TABLE_TOL on all generator pairs and on seeded pairs of
/// random words of length ≤ 3.
fn check_tracial(r: &[Vec<ComplexMatrix>], tau: &dyn Fn(&ComplexMatrix) -> C64) -> Result<()> {
    let gens: Vec<&ComplexMatrix> = r.iter().flatten().collect();
    let bad = |a: &ComplexMatrix, b: &ComplexMatrix| (tau(&(a * b)) - tau(&(b * a))).norm() > TABLE_TOL;
    for a in &gens {
        for b in &gens {
            if bad(a, b) {
                return Err(Error::Precondition("functional is not tracial on the generated algebra".into()));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let word = |rng: &mut ChaCha8Rng| {
        let len = rng.gen_range(1..=3);
        (0..len).fold(linalg::identity(gens[0].nrows()), |acc, _| acc * gens[rng.gen_range(0..gens.len())])
    };
    for _ in 0..64 {
        let (a, b) = (word(&mut rng), word(&mut rng));
        if bad(&a, &b) {
            return Err(Error::Precondition("functional is not tracial on the generated algebra".into()));
        }
    }
    Ok(())
}

/// The span of symbols Q(a,b|x,y) modulo the nonsignalling relations, with
/// basis e, Q(s_1), Q(s_2), … and the idempotent partial product m(Q, Q) = Q.
#[derive(Clone, Debug)]
pub struct SnkSystem {
    pub n: usize,
    pub k: usize,
    /// rank of the relation matrix
    pub relation_rank: usize,
    /// symbol behind each basis vector (None for the unit)
    pub basis_symbols: Vec<Option<usize>>,
    /// coordinates of every symbol Q(a,b|x,y) in the basis
    pub symbol_coords: Vec<Vec<C64>>,
    pub product: PartialProduct,
}

impl SnkSystem {
    /// Index of Q(a,b|x,y).
    pub fn symbol(&self, a: usize, b: usize, x: usize, y: usize) -> usize {
        symbol_index(self.n, self.k, a, b, x, y)
    }

    pub fn dim(&self) -> usize {
        self.basis_symbols.len()
    }

    /// Σ_g ‖C_g‖ over the basis {e, Q…}; every basis vector has norm at most one.
    pub fn base_norm(&self, x: &MatrixElement) -> f64 {
        crate::groups::ell1_norm(x)
    }

    /// Images of the basis under Q(a,b|x,y) ↦ E_{x,a} ⊗ F_{y,b}, e ↦ I.
    pub fn represent(&self, m: &PVMModel) -> Result<Vec<ComplexMatrix>> {
        m.validate()?;
        if m.inputs() != self.n || m.outputs() != self.k {
            return Err(Error::Input("model and system have different (n, k)".into()));
        }
        Ok(self
            .basis_symbols
            .iter()
            .map(|s| match s {
                None => linalg::identity(m.d1 * m.d2),
                Some(s) => {
                    let (a, b, x, y) = symbol_parts(self.n, self.k, *s);
                    linalg::kron(&m.e[x][a], &m.f[y][b])
                }
            })
            .collect())
    }

    /// φ(e) = 1, φ(Q(a,b|x,y)) = p(a,b|x,y) in basis coordinates; checks every
    /// symbol, not just the basis ones.
    pub fn state_from_table(&self, t: &CorrelationTable) -> Result<Vec<C64>> {
        if t.n != self.n || t.k != self.k {
            return Err(Error::Input("table and system have different (n, k)".into()));
        }
        let phi: Vec<C64> = self
            .basis_symbols
            .iter()
            .map(|s| match s {
                None => c(1.0, 0.0),
                Some(s) => {
                    let (a, b, x, y) = symbol_parts(self.n, self.k, *s);
                    c(t.get(a, b, x, y), 0.0)
                }
            })
            .collect();
        for (s, q) in self.symbol_coords.iter().enumerate() {
            let (a, b, x, y) = symbol_parts(self.n, self.k, s);
            let v: C64 = q.iter().zip(&phi).map(|(u, w)| u * w).sum();
            if (v.re - t.get(a, b, x, y)).abs() > TABLE_TOL {
                return Err(Error::Input(format!("table is inconsistent with the relations at Q({a},{b}|{x},{y})")));
            }
        }
        Ok(phi)
    }
}

fn symbol_index(n: usize, k: usize, a: usize, b: usize, x: usize, y: usize) -> usize {
    ((x * n + y) * k + a) * k + b
}

fn symbol_parts(n: usize, k: usize, s: usize) -> (usize, usize, usize, usize) {
    let b = s % k;
    let a = (s / k) % k;
    let y = (s / (k * k)) % n;
    let x = s / (k * k * n);
    (a, b, x, y)
}

/// Rows of the nonsignalling relation matrix: equal unit sums and well-defined marginals.
pub fn snk_relations(n: usize, k: usize) -> Vec<Vec<f64>> {
    let big_n = n * n * k * k;
    let idx = |a, b, x, y| symbol_index(n, k, a, b, x, y);
    let mut rows = Vec::new();
    for x in 0..n {
        for y in 0..n {
            if (x, y) == (0, 0) {
                continue;
            }
            let mut r = vec![0.0; big_n];
            for a in 0..k {
                for b in 0..k {
                    r[idx(a, b, x, y)] += 1.0;
                    r[idx(a, b, 0, 0)] -= 1.0;
                }
            }
            rows.push(r);
        }
    }
    for x in 0..n {
        for a in 0..k {
            for y in 1..n {
                let mut r = vec![0.0; big_n];
                for b in 0..k {
                    r[idx(a, b, x, y)] += 1.0;
                    r[idx(a, b, x, 0)] -= 1.0;
                }
                rows.push(r);
            }
        }
    }
    for y in 0..n {
        for b in 0..k {
            for x in 1..n {
                let mut r = vec![0.0; big_n];
                for a in 0..k {
                    r[idx(a, b, x, y)] += 1.0;
                    r[idx(a, b, 0, y)] -= 1.0;
                }
                rows.push(r);
            }
        }
    }
    rows
}

fn real_matrix(rows: &[Vec<f64>], cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows.len(), cols, |i, j| c(rows[i][j], 0.0))
}

pub fn snk_build(n: usize, k: usize) -> Result<SnkSystem> {
    if n == 0 || k == 0 {
        return Err(Error::Input("S_{n,k} needs n, k ≥ 1".into()));
    }
    let big_n = n * n * k * k;
    let rel = snk_relations(n, k);
    let rmat = real_matrix(&rel, big_n);
    let relation_rank = if rel.is_empty() { 0 } else { linalg::rank(&rmat) };
    // functionals vanishing on the relations: the quotient map C^N → C^dim
    let quot = if rel.is_empty() { linalg::identity(big_n) } else { linalg::null_space(&rmat) };
    let dim = quot.ncols();
    let image = |s: usize| -> ComplexVector { ComplexVector::from_fn(dim, |r, _| quot[(s, r)]) };
    let unit_img = (0..k * k).fold(ComplexVector::zeros(dim), |acc, ab| acc + image(ab));
    let mut chosen: Vec<ComplexVector> = vec![unit_img];
    let mut basis_symbols = vec![None];
    for s in 0..big_n {
        if chosen.len() == dim {
            break;
        }
        let mut trial = chosen.clone();
        trial.push(image(s));
        if linalg::rank(&ComplexMatrix::from_columns(&trial)) == trial.len() {
            chosen = trial;
            basis_symbols.push(Some(s));
        }
    }
    if chosen.len() != dim {
        return Err(Error::Precondition("symbols do not span the quotient".into()));
    }
    let inv = linalg::inverse(&ComplexMatrix::from_columns(&chosen))
        .ok_or_else(|| Error::Precondition("singular S_{n,k} basis".into()))?;
    let symbol_coords: Vec<Vec<C64>> = (0..big_n)
        .map(|s| {
            (&inv * image(s))
                .iter()
                .map(|z| {
                    let r = z.re.round();
                    if (z.re - r).abs() < 1e-9 && z.im.abs() < 1e-9 {
                        c(r, 0.0)
                    } else {
                        *z
                    }
                })
                .collect()
        })
        .collect();
    let mut labels = vec!["e".to_string()];
    for s in basis_symbols.iter().flatten() {
        let (a, b, x, y) = symbol_parts(n, k, *s);
        labels.push(format!("Q({a},{b}|{x},{y})"));
    }
    let specs = symbol_coords
        .iter()
        .filter(|q| q.iter().any(|z| *z != ZERO))
        .map(|q| BlockSpec { left: vec![q.clone()], right: vec![q.clone()], table: vec![vec![q.clone()]] })
        .collect();
    let product = PartialProduct::new("snk", dim, 0, labels, specs, None)?;
    Ok(SnkSystem { n, k, relation_rank, basis_symbols, symbol_coords, product })
}

/// Reduced commutators [w, w'] of basis words with |w| + |w'| ≤ L, as columns
/// over the words they involve.
#[derive(Clone, Debug)]
pub struct CommutatorSpan {
    pub length: usize,
    pub dim: usize,
    /// number of nonzero reduced commutators
    pub commutators: usize,
    words: Vec<Word>,
    matrix: ComplexMatrix,
    /// orthonormal basis (columns, in basis coordinates of V) of the span intersected with V
    pub in_space: ComplexMatrix,
}

/// Cap on the number of commutator pairs enumerated.
pub const MAX_COMMUTATORS: usize = 20_000;

fn all_words(dim: usize, len: usize) -> Vec<Word> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out.into_iter().flat_map(|w| (0..dim).map(move |g| [w.clone(), vec![g]].concat())).collect();
    }
    out
}

fn word_element(w: &[usize]) -> FreeElement {
    let mut f = FreeElement::new();
    f.insert(w.to_vec(), c(1.0, 0.0));
    f
}

impl CommutatorSpan {
    /// Checks non-degeneracy at depth max(L, 3) first.
    pub fn build(m: &PartialProduct, l: usize) -> Result<Self> {
        let rep = products::detect_degeneracy(m, l.max(3))?;
        if rep.degenerate {
            let text = rep.witness.map(|w| w.text).unwrap_or_default();
            return Err(Error::Degenerate(format!("reduction order matters at {text}; see detect_degeneracy")));
        }
        let dim = m.dim();
        let mut pairs = 0usize;
        for t in 2..=l {
            pairs = pairs.saturating_add((t / 2).saturating_mul(dim.saturating_pow(t as u32)));
        }
        if pairs > MAX_COMMUTATORS {
            return Err(Error::Input(format!("about {pairs} commutators at length {l}; lower L")));
        }
        let mut index: HashMap<Word, usize> = (0..dim).map(|g| (vec![g], g)).collect();
        let mut words: Vec<Word> = (0..dim).map(|g| vec![g]).collect();
        let mut cols: Vec<Vec<(usize, C64)>> = Vec::new();
        for t in 2..=l {
            for i in 1..=t / 2 {
                let left = all_words(dim, i);
                let right = all_words(dim, t - i);
                for w in &left {
                    for v in &right {
                        if i == t - i && w >= v {
                            continue;
                        }
                        let wv = products::reduce(&word_element(&[w.as_slice(), v.as_slice()].concat()), m);
                        let vw = products::reduce(&word_element(&[v.as_slice(), w.as_slice()].concat()), m);
                        let mut diff = wv;
                        for (word, z) in vw {
                            *diff.entry(word).or_insert(ZERO) -= z;
                        }
                        let col: Vec<(usize, C64)> = diff
                            .into_iter()
                            .filter(|(_, z)| z.norm() > 1e-13)
                            .map(|(word, z)| {
                                let next = words.len();
                                let id = *index.entry(word.clone()).or_insert_with(|| {
                                    words.push(word);
                                    next
                                });
                                (id, z)
                            })
                            .collect();
                        if !col.is_empty() {
                            cols.push(col);
                        }
                    }
                }
            }
        }
        let mut matrix = ComplexMatrix::zeros(words.len(), cols.len());
        for (j, col) in cols.iter().enumerate() {
            for (i, z) in col {
                matrix[(*i, j)] += z;
            }
        }
        let in_space = if cols.is_empty() {
            ComplexMatrix::zeros(dim, 0)
        } else {
            // V ∩ range(A): letters x with (I − QQ*) x = 0
            let q = linalg::column_basis(&matrix);
            let letters = ComplexMatrix::from_fn(words.len(), dim, |i, j| if i == j { c(1.0, 0.0) } else { ZERO });
            let perp = &letters - &q * (q.adjoint() * &letters);
            linalg::null_space(&perp)
        };
        Ok(CommutatorSpan { length: l, dim, commutators: cols.len(), words, matrix, in_space })
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    /// Absolute residual of the least-squares solve x = Σ c_i [w_i, w_i'].
    pub fn membership_residual(&self, x: &[C64]) -> f64 {
        let xv = ComplexVector::from_fn(self.words.len(), |i, _| if i < self.dim { x[i] } else { ZERO });
        if self.commutators == 0 {
            return xv.norm();
        }
        let (_, rel) = linalg::lstsq(&self.matrix, &xv);
        rel * xv.norm()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TracialSeminorm {
    pub length: usize,
    pub value_upper: f64,
    /// x lies in the commutator span (exact rank test)
    pub certified_zero: bool,
    pub residual: f64,
    /// dimension of the commutator span intersected with V
    pub kernel_dim: usize,
    /// best coset representative found
    pub representative: Vec<C64>,
}

fn fact_upper(x: &[C64], m: &PartialProduct, base: &dyn Fn(&MatrixElement) -> f64, opts: &FactOptions) -> Result<f64> {
    let xe = MatrixElement::from_vector(x);
    Ok(FactProblem::new(m, base).fact_norm_upper(&xe, opts)?.value)
}

fn seminorm_on(
    x: &[C64],
    span: &CommutatorSpan,
    m: &PartialProduct,
    base: &dyn Fn(&MatrixElement) -> f64,
    opts: &FactOptions,
    start: Option<&[C64]>,
) -> Result<TracialSeminorm> {
    let residual = span.membership_residual(x);
    let kernel_dim = span.in_space.ncols();
    let mk = |value_upper: f64, certified_zero: bool, representative: Vec<C64>| TracialSeminorm {
        length: span.length,
        value_upper,
        certified_zero,
        residual,
        kernel_dim,
        representative,
    };
    if residual <= MEMBERSHIP_TOL {
        return Ok(mk(0.0, true, vec![ZERO; x.len()]));
    }
    let k = &span.in_space;
    let shift = |t: &[f64]| -> Vec<C64> {
        (0..x.len())
            .map(|g| x[g] + (0..kernel_dim).map(|j| k[(g, j)] * c(t[2 * j], t[2 * j + 1])).sum::<C64>())
            .collect()
    };
    let mut candidates = vec![x.to_vec()];
    if let Some(s) = start {
        candidates.push(s.to_vec());
    }
    if kernel_dim > 0 {
        let obj = |t: &[f64]| base(&MatrixElement::from_vector(&shift(t)));
        let (t, _) = optim::minimize_vector(&vec![0.0; 2 * kernel_dim], &obj, 200);
        candidates.push(shift(&t));
    }
    let mut best = (f64::INFINITY, x.to_vec());
    for cand in candidates {
        let v = fact_upper(&cand, m, base, opts)?;
        if v < best.0 {
            best = (v, cand);
        }
    }
    Ok(mk(best.0, false, best.1))
}

/// Upper bound for the quotient seminorm of x ∈ V by the span of reduced
/// commutators of total length ≤ L, with an exact membership test.
pub fn tracial_seminorm(
    x: &[C64],
    m: &PartialProduct,
    base: &dyn Fn(&MatrixElement) -> f64,
    l: usize,
    opts: &FactOptions,
) -> Result<TracialSeminorm> {
    tracial_seminorm_by_length(x, m, base, l, opts)?
        .pop()
        .ok_or_else(|| Error::Input("length must be at least 1".into()))
}

/// Entries for L = 1..=l; each length starts from the previous best
/// representative, which stays admissible as the span grows.
pub fn tracial_seminorm_by_length(
    x: &[C64],
    m: &PartialProduct,
    base: &dyn Fn(&MatrixElement) -> f64,
    l: usize,
    opts: &FactOptions,
) -> Result<Vec<TracialSeminorm>> {
    if x.len() != m.dim() {
        return Err(Error::Input(format!("element has {} coefficients, product has dimension {}", x.len(), m.dim())));
    }
    let mut out: Vec<TracialSeminorm> = Vec::new();
    for len in 1..=l {
        let span = CommutatorSpan::build(m, len)?;
        let prev = out.last().map(|s| s.representative.clone());
        let mut s = seminorm_on(x, &span, m, base, opts, prev.as_deref())?;
        if let Some(p) = out.last() {
            if p.value_upper < s.value_upper {
                s.value_upper = p.value_upper;
                s.representative = p.representative.clone();
            }
        }
        out.push(s);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceViolation {
    pub x: Vec<C64>,
    pub phi_x: C64,
    pub bound: f64,
    /// the bound is exact (x lies in the commutator span), so no tracial extension exists
    pub certified: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceVerdict {
    pub pass: bool,
    pub length: usize,
    pub samples: usize,
    pub violation: Option<TraceViolation>,
}

/// Necessary condition for a tracial extension: |φ(x)| ≤ ‖x‖_τ + 1e-8 on the
/// unit, the commutator directions inside V, the basis, and seeded random x.
#[allow(clippy::too_many_arguments)]
pub fn trace_extension_feasible(
    phi: &[C64],
    m: &PartialProduct,
    base: &dyn Fn(&MatrixElement) -> f64,
    l: usize,
    samples: usize,
    seed: u64,
    opts: &FactOptions,
) -> Result<TraceVerdict> {
    let dim = m.dim();
    if phi.len() != dim {
        return Err(Error::Input(format!("state has {} coefficients, product has dimension {dim}", phi.len())));
    }
    if (phi[m.unit()] - c(1.0, 0.0)).norm() > TABLE_TOL {
        return Err(Error::Precondition(format!("functional is not unital: φ(e) = {}", phi[m.unit()])));
    }
    let span = CommutatorSpan::build(m, l.max(1))?;
    let mut xs: Vec<Vec<C64>> = vec![m.unit_vector()];
    for j in 0..span.in_space.ncols() {
        xs.push(span.in_space.column(j).iter().cloned().collect());
    }
    for g in 0..dim {
        let mut v = vec![ZERO; dim];
        v[g] = c(1.0, 0.0);
        xs.push(v);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while xs.len() < samples {
        xs.push((0..dim).map(|_| linalg::random_complex(&mut rng)).collect());
    }
    xs.truncate(samples.max(1));
    for x in &xs {
        let s = seminorm_on(x, &span, m, base, opts, None)?;
        let phi_x: C64 = x.iter().zip(phi).map(|(a, b)| a * b).sum();
        if phi_x.norm() > s.value_upper + 1e-8 {
            return Ok(TraceVerdict {
                pass: false,
                length: span.length,
                samples: xs.len(),
                violation: Some(TraceViolation { x: x.clone(), phi_x, bound: s.value_upper, certified: s.certified_zero }),
            });
        }
    }
    Ok(TraceVerdict { pass: true, length: span.length, samples: xs.len(), violation: None })
}

/// φ(b_g) on the Cuntz basis for the vector state h of the representation
/// s_i e_k = e_{n k + i} on ℓ²(ℕ), computed on a truncation large enough to
/// be exact for finitely supported h.
pub fn cuntz_vector_state(n: usize, h: &[C64]) -> Result<Vec<C64>> {
    let norm: f64 = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n < 2 || norm == 0.0 {
        return Err(Error::Input("Cuntz state needs n ≥ 2 and a nonzero vector".into()));
    }
    let big = n * h.len() + n;
    let hv = ComplexVector::from_fn(big, |i, _| if i < h.len() { h[i] / norm } else { ZERO });
    let s = products::truncated_cuntz_isometries(n, big);
    let ip = |m: &ComplexMatrix| (m * &hv).dotc(&hv);
    let mut phi = vec![c(1.0, 0.0)];
    phi.extend(s.iter().map(|si| ip(si)));
    phi.extend(s.iter().map(|si| ip(&si.adjoint())));
    phi.extend(s.iter().take(n - 1).map(|si| ip(&(si * si.adjoint()))));
    Ok(phi)
}

/// The diagonal algebra of M_r as span{I, e_11, …, e_{r−1,r−1}} with the
/// ambient (commutative) product.
pub fn commutative_projection_system(r: usize) -> Result<(ConcreteOperatorSpace, PartialProduct)> {
    if r == 0 {
        return Err(Error::Input("need r ≥ 1".into()));
    }
    let mut basis = vec![linalg::identity(r)];
    basis.extend((0..r - 1).map(|i| linalg::unit(r, r, i, i)));
    let space = ConcreteOperatorSpace::span(basis, Some(0), true)?;
    let m = products::full_ambient_product(&space)?;
    Ok((space, m))
}

/// Point evaluation at diagonal entry j in the basis of `commutative_projection_system`.
pub fn point_evaluation(r: usize, j: usize) -> Vec<C64> {
    let mut phi = vec![c(1.0, 0.0)];
    phi.extend((0..r - 1).map(|i| if i == j { c(1.0, 0.0) } else { ZERO }));
    phi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbol_indexing_round_trips() {
        for s in 0..2 * 2 * 3 * 3 {
            let (a, b, x, y) = symbol_parts(2, 3, s);
            assert_eq!(symbol_index(2, 3, a, b, x, y), s);
        }
    }

    #[test]
    fn trivial_model_gives_the_constant_table() {
        let one = vec![vec![linalg::identity(1)]];
        let m = PVMModel::new(1, 1, one.clone(), one, linalg::identity(1)).unwrap();
        let t = correlation_from_model(&m).unwrap();
        assert_eq!(t.get(0, 0, 0, 0), 1.0);
    }

    #[test]
    fn cuntz_vector_state_is_unital_and_consistent() {
        let phi = cuntz_vector_state(2, &[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        assert_eq!(phi.len(), 6);
        assert_eq!(phi[0], c(1.0, 0.0));
        assert!((phi[1] - phi[3].conj()).norm() < 1e-15);
        assert!(phi[5].re >= 0.0 && phi[5].re <= 1.0);
    }
}
