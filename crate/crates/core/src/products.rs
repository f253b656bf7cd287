//! Partial products (D, m) on a space with a distinguished unit: valid pairs,
//! the entrywise product A ⊙_m B, word reduction in the free algebra modulo the
//! product relations, permissible tuples, and sampled contractivity/degeneracy
//! checks.
//!
//! Elements are coefficient vectors over a fixed basis of the space. Domain
//! blocks are pairs of subspaces with a bilinear table. Word rewriting works on
//! basis symbols, so it captures every relation exactly when each block is
//! spanned by basis vectors (true for all built-in systems); for other blocks it
//! is sound but may miss relations.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, ComplexMatrix, ComplexVector, C64};
use crate::spaces::{ConcreteOperatorSpace, MatrixElement};

pub type Word = Vec<usize>;
pub type FreeElement = BTreeMap<Word, C64>;

const MEMBER_TOL: f64 = 1e-8;
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

fn basis_vec(dim: usize, g: usize) -> Vec<C64> {
    let mut v = vec![ZERO; dim];
    v[g] = c(1.0, 0.0);
    v
}

/// Zeroes entries below 1e-13 of the largest one (pseudo-inverse round-off).
fn chop(mut v: Vec<C64>) -> Vec<C64> {
    let m = v.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    for z in v.iter_mut() {
        if z.norm() <= 1e-13 * m {
            *z = ZERO;
        }
    }
    v
}

fn vnorm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// One domain block L x R with m given on pairs of spanning vectors.
#[derive(Clone, Debug)]
pub struct Block {
    left: ComplexMatrix,
    right: ComplexMatrix,
    left_pinv: ComplexMatrix,
    right_pinv: ComplexMatrix,
    table: Vec<Vec<Vec<C64>>>,
}

fn span_matrix(dim: usize, vecs: &[Vec<C64>]) -> ComplexMatrix {
    ComplexMatrix::from_fn(dim, vecs.len(), |r, col| vecs[col][r])
}

fn pinv(m: &ComplexMatrix) -> ComplexMatrix {
    if m.ncols() == 0 {
        return ComplexMatrix::zeros(0, m.nrows());
    }
    // orthonormal spans (e.g. coordinate subspaces) are solved exactly by the adjoint
    let gram = m.adjoint() * m;
    if linalg::max_abs(&(gram - linalg::identity(m.ncols()))) < 1e-15 {
        return m.adjoint();
    }
    m.clone().pseudo_inverse(1e-13).expect("pseudo-inverse of a finite matrix")
}

fn solve_in(span: &ComplexMatrix, p: &ComplexMatrix, v: &[C64]) -> Option<Vec<C64>> {
    let x = ComplexVector::from_column_slice(v);
    let scale = x.norm();
    if scale == 0.0 {
        return Some(vec![ZERO; span.ncols()]);
    }
    let a = p * &x;
    let r = (span * &a - &x).norm();
    (r <= MEMBER_TOL * scale).then(|| chop(a.iter().cloned().collect()))
}

impl Block {
    pub fn new(dim: usize, left: Vec<Vec<C64>>, right: Vec<Vec<C64>>, table: Vec<Vec<Vec<C64>>>) -> Result<Self> {
        if table.len() != left.len() || table.iter().any(|r| r.len() != right.len()) {
            return Err(Error::Input("block table shape does not match spanning sets".into()));
        }
        if left.iter().chain(right.iter()).any(|v| v.len() != dim) || table.iter().flatten().any(|v| v.len() != dim) {
            return Err(Error::Input("block vectors have wrong length".into()));
        }
        let l = span_matrix(dim, &left);
        let r = span_matrix(dim, &right);
        if linalg::rank(&l) != left.len() || linalg::rank(&r) != right.len() {
            return Err(Error::Input("block spanning sets must be linearly independent".into()));
        }
        Ok(Block { left_pinv: pinv(&l), right_pinv: pinv(&r), left: l, right: r, table })
    }

    pub fn left_dim(&self) -> usize {
        self.left.ncols()
    }

    pub fn right_dim(&self) -> usize {
        self.right.ncols()
    }

    pub fn left_vector(&self, p: usize) -> Vec<C64> {
        self.left.column(p).iter().cloned().collect()
    }

    pub fn right_vector(&self, q: usize) -> Vec<C64> {
        self.right.column(q).iter().cloned().collect()
    }

    /// m(l_p, r_q) on the spanning vectors.
    pub fn table_entry(&self, p: usize, q: usize) -> &[C64] {
        &self.table[p][q]
    }

    /// m(a, b) if (a, b) lies in this block.
    pub fn apply(&self, a: &[C64], b: &[C64]) -> Option<Vec<C64>> {
        let al = solve_in(&self.left, &self.left_pinv, a)?;
        let be = solve_in(&self.right, &self.right_pinv, b)?;
        let dim = a.len();
        let mut out = vec![ZERO; dim];
        for (p, ap) in al.iter().enumerate() {
            if *ap == ZERO {
                continue;
            }
            for (q, bq) in be.iter().enumerate() {
                if *bq == ZERO {
                    continue;
                }
                let f = ap * bq;
                for (o, t) in out.iter_mut().zip(&self.table[p][q]) {
                    *o += f * t;
                }
            }
        }
        Some(out)
    }

    pub fn contains(&self, a: &[C64], b: &[C64]) -> bool {
        solve_in(&self.left, &self.left_pinv, a).is_some() && solve_in(&self.right, &self.right_pinv, b).is_some()
    }
}

#[derive(Clone, Debug)]
pub struct PartialProduct {
    name: String,
    dim: usize,
    unit: usize,
    labels: Vec<String>,
    blocks: Vec<Block>,
    adjoint: Option<ComplexMatrix>,
    pairs: HashMap<(usize, usize), Vec<C64>>,
}

/// A block given by spanning vectors and its bilinear table.
#[derive(Clone, Debug)]
pub struct BlockSpec {
    pub left: Vec<Vec<C64>>,
    pub right: Vec<Vec<C64>>,
    pub table: Vec<Vec<Vec<C64>>>,
}

impl PartialProduct {
    /// Builds (D, m) from user blocks. The unit blocks Ce x V and V x Ce are
    /// added first, every block is extended so both sides contain the unit, and
    /// when an adjoint map is supplied each block (L, R) is mirrored by
    /// (R*, L*) with m(b*, a*) = m(a, b)*.
    pub fn new(
        name: &str,
        dim: usize,
        unit: usize,
        labels: Vec<String>,
        specs: Vec<BlockSpec>,
        adjoint: Option<ComplexMatrix>,
    ) -> Result<Self> {
        if unit >= dim {
            return Err(Error::Input("unit index out of range".into()));
        }
        let labels = if labels.len() == dim { labels } else { (0..dim).map(|g| format!("b{g}")).collect() };
        let e = basis_vec(dim, unit);
        let all: Vec<Vec<C64>> = (0..dim).map(|g| basis_vec(dim, g)).collect();
        let mut blocks = vec![
            Block::new(dim, vec![e.clone()], all.clone(), vec![all.clone()])?,
            Block::new(dim, all.clone(), vec![e.clone()], all.iter().map(|v| vec![v.clone()]).collect())?,
        ];
        let mut specs = specs;
        if let Some(adj) = &adjoint {
            let star = |v: &Vec<C64>| -> Vec<C64> {
                let conj = ComplexVector::from_iterator(dim, v.iter().map(|z| z.conj()));
                (adj * conj).iter().cloned().collect()
            };
            let mirrored: Vec<BlockSpec> = specs
                .iter()
                .map(|s| BlockSpec {
                    left: s.right.iter().map(star).collect(),
                    right: s.left.iter().map(star).collect(),
                    table: (0..s.right.len())
                        .map(|q| (0..s.left.len()).map(|p| star(&s.table[p][q])).collect())
                        .collect(),
                })
                .collect();
            specs.extend(mirrored);
        }
        for s in specs {
            blocks.push(Self::with_unit(dim, &e, s)?);
        }
        let mut pp = PartialProduct { name: name.to_string(), dim, unit, labels, blocks, adjoint, pairs: HashMap::new() };
        pp.pairs = pp.compute_pairs();
        Ok(pp)
    }

    fn with_unit(dim: usize, e: &[C64], mut s: BlockSpec) -> Result<Block> {
        let in_span = |vs: &Vec<Vec<C64>>| {
            let m = span_matrix(dim, vs);
            solve_in(&m, &pinv(&m), e).is_some()
        };
        if !in_span(&s.left) {
            let row: Vec<Vec<C64>> = s.right.clone();
            s.left.push(e.to_vec());
            s.table.push(row);
        }
        if !in_span(&s.right) {
            for (p, l) in s.left.iter().enumerate() {
                s.table[p].push(l.clone());
            }
            s.right.push(e.to_vec());
        }
        Block::new(dim, s.left, s.right, s.table)
    }

    fn compute_pairs(&self) -> HashMap<(usize, usize), Vec<C64>> {
        let mut out = HashMap::new();
        for g in 0..self.dim {
            let a = basis_vec(self.dim, g);
            for h in 0..self.dim {
                let b = basis_vec(self.dim, h);
                if let Some(v) = self.blocks.iter().find_map(|bl| bl.apply(&a, &b)) {
                    out.insert((g, h), chop(v));
                }
            }
        }
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn unit(&self) -> usize {
        self.unit
    }

    pub fn unit_vector(&self) -> Vec<C64> {
        basis_vec(self.dim, self.unit)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn adjoint(&self) -> Option<&ComplexMatrix> {
        self.adjoint.as_ref()
    }

    /// m on basis symbols, when (B_g, B_h) ∈ D.
    pub fn basis_product(&self, g: usize, h: usize) -> Option<&Vec<C64>> {
        self.pairs.get(&(g, h))
    }

    pub fn in_domain(&self, a: &[C64], b: &[C64]) -> bool {
        self.blocks.iter().any(|bl| bl.contains(a, b))
    }

    /// m(a, b) for (a, b) ∈ D.
    pub fn apply(&self, a: &[C64], b: &[C64]) -> Option<Vec<C64>> {
        self.blocks.iter().find_map(|bl| bl.apply(a, b))
    }

    pub fn format_word(&self, w: &[usize]) -> String {
        w.iter().map(|g| self.labels[*g].as_str()).collect::<Vec<_>>().join("·")
    }
}

pub fn is_valid_pair(a: &MatrixElement, b: &MatrixElement, m: &PartialProduct) -> Result<bool> {
    if a.cols() != b.rows() || a.dim() != m.dim() || b.dim() != m.dim() {
        return Err(Error::Input(format!(
            "shape mismatch: {}x{} (dim {}) and {}x{} (dim {})",
            a.rows(),
            a.cols(),
            a.dim(),
            b.rows(),
            b.cols(),
            b.dim()
        )));
    }
    for x in 0..a.rows() {
        for y in 0..a.cols() {
            for z in 0..b.cols() {
                if !m.in_domain(a.entry(x, y), b.entry(y, z)) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// A ⊙_m B with entries Σ_y m(a_xy, b_yz).
pub fn odot(a: &MatrixElement, b: &MatrixElement, m: &PartialProduct) -> Result<MatrixElement> {
    if a.cols() != b.rows() || a.dim() != m.dim() || b.dim() != m.dim() {
        return Err(Error::Input("shape mismatch in odot".into()));
    }
    let mut out = MatrixElement::zeros(a.rows(), b.cols(), m.dim());
    for x in 0..a.rows() {
        for z in 0..b.cols() {
            let mut acc = vec![ZERO; m.dim()];
            for y in 0..a.cols() {
                let v = m.apply(a.entry(x, y), b.entry(y, z)).ok_or_else(|| {
                    Error::Precondition(format!("invalid pair at entries ({x},{y}) x ({y},{z})"))
                })?;
                for (o, t) in acc.iter_mut().zip(&v) {
                    *o += t;
                }
            }
            out.set_entry(x, z, &acc);
        }
    }
    Ok(out)
}

fn add_term(out: &mut FreeElement, w: Word, coef: C64) {
    if coef == ZERO {
        return;
    }
    let e = out.entry(w).or_insert(ZERO);
    *e += coef;
}

fn prune(mut f: FreeElement) -> FreeElement {
    f.retain(|_, v| v.norm() > 1e-300);
    f
}

/// The free element Σ_g v_g (g).
pub fn letter(v: &[C64]) -> FreeElement {
    let mut f = FreeElement::new();
    for (g, z) in v.iter().enumerate() {
        add_term(&mut f, vec![g], *z);
    }
    f
}

fn rewrite_at(w: &[usize], i: usize, val: &[C64], coef: C64, out: &mut FreeElement) {
    for (g, z) in val.iter().enumerate() {
        if *z == ZERO {
            continue;
        }
        let mut nw = Vec::with_capacity(w.len() - 1);
        nw.extend_from_slice(&w[..i]);
        nw.push(g);
        nw.extend_from_slice(&w[i + 2..]);
        add_term(out, nw, coef * z);
    }
}

fn first_redex(w: &[usize], m: &PartialProduct) -> Option<usize> {
    (0..w.len().saturating_sub(1)).find(|&i| m.pairs.contains_key(&(w[i], w[i + 1])))
}

fn last_redex(w: &[usize], m: &PartialProduct) -> Option<usize> {
    (0..w.len().saturating_sub(1)).rev().find(|&i| m.pairs.contains_key(&(w[i], w[i + 1])))
}

fn reduce_with(w: &FreeElement, m: &PartialProduct, pick: fn(&[usize], &PartialProduct) -> Option<usize>) -> FreeElement {
    let mut cur = w.clone();
    loop {
        let mut next = FreeElement::new();
        let mut changed = false;
        for (word, coef) in &cur {
            match pick(word, m) {
                Some(i) => {
                    changed = true;
                    rewrite_at(word, i, &m.pairs[&(word[i], word[i + 1])], *coef, &mut next);
                }
                None => add_term(&mut next, word.clone(), *coef),
            }
        }
        cur = prune(next);
        if !changed {
            return cur;
        }
    }
}

/// Leftmost-first reduction to a normal form with no reducible adjacent pair.
pub fn reduce(w: &FreeElement, m: &PartialProduct) -> FreeElement {
    reduce_with(w, m, first_redex)
}

pub fn reduce_rightmost(w: &FreeElement, m: &PartialProduct) -> FreeElement {
    reduce_with(w, m, last_redex)
}

/// Every normal form reachable from a single word over all reduction orders,
/// each returned as a free element. Stops after `budget` distinct forms.
pub fn reachable_normal_forms(w: &[usize], m: &PartialProduct, budget: usize) -> Vec<FreeElement> {
    fn key(f: &FreeElement) -> Vec<(Word, i64, i64)> {
        f.iter()
            .filter(|(_, v)| v.norm() > 1e-12)
            .map(|(k, v)| (k.clone(), (v.re * 1e9).round() as i64, (v.im * 1e9).round() as i64))
            .collect()
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut stack: Vec<FreeElement> = vec![[(w.to_vec(), c(1.0, 0.0))].into_iter().collect()];
    let mut visited = HashSet::new();
    while let Some(f) = stack.pop() {
        if out.len() >= budget {
            break;
        }
        if !visited.insert(key(&f)) {
            continue;
        }
        // branch on the first word that still has a redex
        let target = f.iter().find(|(word, _)| first_redex(word, m).is_some()).map(|(k, v)| (k.clone(), *v));
        match target {
            None => {
                if seen.insert(key(&f)) {
                    out.push(f);
                }
            }
            Some((word, coef)) => {
                for i in 0..word.len() - 1 {
                    if let Some(val) = m.pairs.get(&(word[i], word[i + 1])) {
                        let mut g = f.clone();
                        g.remove(&word);
                        let mut part = FreeElement::new();
                        rewrite_at(&word, i, val, coef, &mut part);
                        for (k, v) in part {
                            add_term(&mut g, k, v);
                        }
                        stack.push(prune(g));
                    }
                }
            }
        }
    }
    out
}

/// Searches reduction orders for a normal form lying in V: leftmost, rightmost,
/// then per-word exhaustive search. Every rewrite applies a genuine product
/// relation, so any form found is equal to `w` modulo the relations.
pub fn reduce_search(w: &FreeElement, m: &PartialProduct, budget: usize) -> FreeElement {
    let left = reduce(w, m);
    if max_word_len(&left, 1e-12) <= 1 {
        return left;
    }
    let right = reduce_rightmost(w, m);
    if max_word_len(&right, 1e-12) <= 1 {
        return right;
    }
    // words of the original element, each reduced along its best order
    let mut alt = FreeElement::new();
    for (word, coef) in w {
        let forms = reachable_normal_forms(word, m, budget);
        let best = forms
            .iter()
            .min_by_key(|f| max_word_len(f, 1e-12))
            .cloned()
            .unwrap_or_else(|| reduce(&[(word.clone(), c(1.0, 0.0))].into_iter().collect(), m));
        for (k, v) in best {
            add_term(&mut alt, k, v * coef);
        }
    }
    let alt = prune(alt);
    if residual_norm(&alt) < residual_norm(&left) {
        alt
    } else {
        left
    }
}

pub fn max_word_len(f: &FreeElement, tol: f64) -> usize {
    f.iter().filter(|(_, v)| v.norm() > tol).map(|(k, _)| k.len()).max().unwrap_or(0)
}

/// Total coefficient mass on words of length ≥ 2.
pub fn residual_norm(f: &FreeElement) -> f64 {
    f.iter().filter(|(k, _)| k.len() >= 2).map(|(_, v)| v.norm()).sum()
}

/// Coefficient vector of the length-1 part (the empty word contributes nothing).
pub fn to_vector(f: &FreeElement, dim: usize) -> Vec<C64> {
    let mut v = vec![ZERO; dim];
    for (k, z) in f {
        if k.len() == 1 {
            v[k[0]] += z;
        }
    }
    v
}

#[derive(Clone, Debug)]
pub struct PermissibleResult {
    pub permissible: bool,
    pub product: Option<MatrixElement>,
    /// largest mass left on irreducible words of length ≥ 2, relative to the factor scale
    pub residual: f64,
}

fn tuple_scale(factors: &[MatrixElement]) -> f64 {
    factors
        .iter()
        .map(|f| {
            let mut s = 0.0f64;
            for i in 0..f.rows() {
                for j in 0..f.cols() {
                    s = s.max(vnorm(f.entry(i, j)));
                }
            }
            s
        })
        .product::<f64>()
        .max(1e-300)
}

/// Entrywise products accumulated left to right, reducing after each factor
/// (equivalent to leftmost-first reduction of the full words).
/// Partial products with more unreduced words than this are given up on; the
/// tuple is then reported as not permissible, which only loses candidates.
const MAX_PARTIAL_WORDS: usize = 4096;

fn incremental(factors: &[MatrixElement], m: &PartialProduct, from_right: bool) -> Option<Vec<Vec<FreeElement>>> {
    let order: Vec<&MatrixElement> = if from_right { factors.iter().rev().collect() } else { factors.iter().collect() };
    let first = order[0];
    let mut cur: Vec<Vec<FreeElement>> =
        (0..first.rows()).map(|i| (0..first.cols()).map(|j| letter(first.entry(i, j))).collect()).collect();
    for f in &order[1..] {
        let (rows, cols) = if from_right { (f.rows(), cur[0].len()) } else { (cur.len(), f.cols()) };
        let mut next = vec![vec![FreeElement::new(); cols]; rows];
        for i in 0..rows {
            for j in 0..cols {
                let mut acc = FreeElement::new();
                let inner = if from_right { f.cols() } else { f.rows() };
                for y in 0..inner {
                    let (p, lv) = if from_right { (&cur[y][j], f.entry(i, y)) } else { (&cur[i][y], f.entry(y, j)) };
                    if p.is_empty() || lv.iter().all(|z| *z == ZERO) {
                        continue;
                    }
                    for (w, cw) in p {
                        for (g, z) in lv.iter().enumerate() {
                            if *z == ZERO {
                                continue;
                            }
                            let mut nw = Vec::with_capacity(w.len() + 1);
                            if from_right {
                                nw.push(g);
                                nw.extend_from_slice(w);
                            } else {
                                nw.extend_from_slice(w);
                                nw.push(g);
                            }
                            add_term(&mut acc, nw, cw * z);
                        }
                    }
                }
                let acc = prune(acc);
                next[i][j] = if from_right { reduce_rightmost(&acc, m) } else { reduce(&acc, m) };
                if next[i][j].len() > MAX_PARTIAL_WORDS {
                    return None;
                }
            }
        }
        cur = next;
    }
    Some(cur)
}

fn evaluate(entries: &[Vec<FreeElement>], dim: usize, scale: f64, tol: f64) -> PermissibleResult {
    let rows = entries.len();
    let cols = entries.first().map(|r| r.len()).unwrap_or(0);
    let mut res = 0.0f64;
    let mut out = MatrixElement::zeros(rows, cols, dim);
    for i in 0..rows {
        for j in 0..cols {
            res = res.max(residual_norm(&entries[i][j]) / scale);
            out.set_entry(i, j, &to_vector(&entries[i][j], dim));
        }
    }
    let ok = res <= tol;
    PermissibleResult { permissible: ok, product: ok.then_some(out), residual: res }
}

/// Forms the entrywise free product of the tuple, reduces it and reports
/// whether every entry lands in V (words of length ≤ 1).
pub fn is_permissible(factors: &[MatrixElement], m: &PartialProduct) -> PermissibleResult {
    is_permissible_tol(factors, m, 1e-9)
}

pub fn is_permissible_tol(factors: &[MatrixElement], m: &PartialProduct, tol: f64) -> PermissibleResult {
    if factors.is_empty()
        || factors.windows(2).any(|w| w[0].cols() != w[1].rows())
        || factors.iter().any(|f| f.dim() != m.dim())
    {
        return PermissibleResult { permissible: false, product: None, residual: f64::INFINITY };
    }
    let scale = tuple_scale(factors);
    let rejected = PermissibleResult { permissible: false, product: None, residual: f64::INFINITY };
    let left = match incremental(factors, m, false) {
        Some(e) => evaluate(&e, m.dim(), scale, tol),
        None => return rejected,
    };
    if left.permissible || factors.len() <= 2 {
        return left;
    }
    let right = match incremental(factors, m, true) {
        Some(e) => evaluate(&e, m.dim(), scale, tol),
        None => return left,
    };
    if right.permissible {
        return right;
    }
    // last resort: full expansion with per-word order search, when small enough
    // bound on expanded words: per factor, the most nonzero letters in one row
    let paths: usize = factors
        .iter()
        .map(|f| {
            (0..f.rows())
                .map(|i| (0..f.cols()).map(|j| f.entry(i, j).iter().filter(|z| **z != ZERO).count()).sum::<usize>())
                .max()
                .unwrap_or(0)
                .max(1)
        })
        .fold(1usize, |a, b| a.saturating_mul(b));
    if paths > 200_000 {
        return left;
    }
    let first = &factors[0];
    let last = factors.last().unwrap();
    let mut entries = vec![vec![FreeElement::new(); last.cols()]; first.rows()];
    for (i, row) in entries.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().enumerate() {
            let mut full = FreeElement::new();
            expand(factors, 0, i, j, Vec::new(), c(1.0, 0.0), &mut full);
            *slot = reduce_search(&prune(full), m, 64);
        }
    }
    let searched = evaluate(&entries, m.dim(), scale, tol);
    if searched.permissible || searched.residual < left.residual {
        searched
    } else {
        left
    }
}

fn expand(factors: &[MatrixElement], k: usize, row: usize, end: usize, word: Word, coef: C64, out: &mut FreeElement) {
    let f = &factors[k];
    let last = k + 1 == factors.len();
    let cols: Vec<usize> = if last { vec![end] } else { (0..f.cols()).collect() };
    for y in cols {
        for (g, z) in f.entry(row, y).iter().enumerate() {
            if *z == ZERO {
                continue;
            }
            let mut w = word.clone();
            w.push(g);
            if last {
                add_term(out, w, coef * z);
            } else {
                expand(factors, k + 1, y, end, w, coef * z, out);
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContractivityReport {
    pub samples: usize,
    pub max_gap: f64,
    pub witness: Option<(MatrixElement, MatrixElement)>,
}

/// Samples valid pairs (A, B) by assigning a domain block to each inner index
/// and reports the largest ‖A ⊙ B‖ − ‖A‖‖B‖.
pub fn check_complete_contractivity(
    m: &PartialProduct,
    base_norm: &dyn Fn(&MatrixElement) -> f64,
    n_max: usize,
    samples: usize,
    seed: u64,
) -> ContractivityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gap = 0.0f64;
    let mut witness = None;
    let nb = m.blocks.len();
    for _ in 0..samples {
        let n = rng.gen_range(1..=n_max.max(1));
        let k = rng.gen_range(1..=n_max.max(1));
        let l = rng.gen_range(1..=n_max.max(1));
        let choice: Vec<usize> = (0..k).map(|_| rng.gen_range(0..nb)).collect();
        let mut a = MatrixElement::zeros(n, k, m.dim());
        let mut b = MatrixElement::zeros(k, l, m.dim());
        for (y, &bi) in choice.iter().enumerate() {
            let bl = &m.blocks[bi];
            for x in 0..n {
                let v = random_combination(&mut rng, &bl.left);
                a.set_entry(x, y, &v);
            }
            for z in 0..l {
                let v = random_combination(&mut rng, &bl.right);
                b.set_entry(y, z, &v);
            }
        }
        let p = match odot(&a, &b, m) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let g = base_norm(&p) - base_norm(&a) * base_norm(&b);
        if g > gap {
            gap = g;
            if g > 1e-8 {
                witness = Some((a, b));
            }
        }
    }
    ContractivityReport { samples, max_gap: gap, witness }
}

fn random_combination<R: Rng + ?Sized>(rng: &mut R, span: &ComplexMatrix) -> Vec<C64> {
    let coef = linalg::random_matrix(rng, span.ncols(), 1);
    (span * coef).iter().cloned().collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DegeneracyWitness {
    pub word: Word,
    pub text: String,
    pub first: Vec<(Word, C64)>,
    pub second: Vec<(Word, C64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub degenerate: bool,
    pub words_checked: usize,
    /// words whose orders end in different normal forms that still contain
    /// irreducible words of length ≥ 2 (inconclusive for degeneracy)
    pub non_confluent: usize,
    pub witness: Option<DegeneracyWitness>,
}

fn distance(a: &FreeElement, b: &FreeElement) -> f64 {
    let mut d = 0.0f64;
    for (k, v) in a {
        d = d.max((v - b.get(k).copied().unwrap_or(ZERO)).norm());
    }
    for (k, v) in b {
        if !a.contains_key(k) {
            d = d.max(v.norm());
        }
    }
    d
}

/// Looks for a basis word of length ≤ depth whose value depends on the
/// reduction order: for each redex position, rewrite there first and then
/// reduce leftmost-first. Two results that both lie in V and differ make a
/// nonzero element of V vanish in the free algebra modulo the relations, which
/// certifies degeneracy. Mismatches that keep longer words only show that the
/// rewriting is not confluent and are counted separately.
pub fn detect_degeneracy(m: &PartialProduct, depth: usize) -> Result<DegeneracyReport> {
    if depth < 3 {
        return Err(Error::Input("degeneracy search needs depth ≥ 3".into()));
    }
    let n = m.dim();
    let mut checked = 0;
    let mut non_confluent = 0;
    for len in 3..=depth {
        let total = n.checked_pow(len as u32).ok_or_else(|| Error::Input("search space too large".into()))?;
        if total > 5_000_000 {
            return Err(Error::Input(format!("{total} words at length {len}; lower the depth")));
        }
        let mut w = vec![0usize; len];
        for idx in 0..total {
            let mut r = idx;
            for slot in w.iter_mut().rev() {
                *slot = r % n;
                r /= n;
            }
            let redexes: Vec<usize> =
                (0..len - 1).filter(|&i| m.pairs.contains_key(&(w[i], w[i + 1]))).collect();
            if redexes.len() < 2 {
                continue;
            }
            checked += 1;
            let mut results = Vec::new();
            for &i in &redexes {
                let mut f = FreeElement::new();
                rewrite_at(&w, i, &m.pairs[&(w[i], w[i + 1])], c(1.0, 0.0), &mut f);
                results.push(reduce(&prune(f), m));
            }
            let mut mismatch = false;
            for r in &results[1..] {
                if distance(&results[0], r) <= 1e-9 {
                    continue;
                }
                mismatch = true;
                if max_word_len(&results[0], 1e-12) <= 1 && max_word_len(r, 1e-12) <= 1 {
                    return Ok(DegeneracyReport {
                        degenerate: true,
                        words_checked: checked,
                        non_confluent,
                        witness: Some(DegeneracyWitness {
                            word: w.clone(),
                            text: m.format_word(&w),
                            first: results[0].iter().map(|(k, v)| (k.clone(), *v)).collect(),
                            second: r.iter().map(|(k, v)| (k.clone(), *v)).collect(),
                        }),
                    });
                }
            }
            if mismatch {
                non_confluent += 1;
            }
        }
    }
    Ok(DegeneracyReport { degenerate: false, words_checked: checked, non_confluent, witness: None })
}

// ---------------------------------------------------------------------------
// Built-in systems

fn single(dim: usize, g: usize) -> Vec<Vec<C64>> {
    vec![basis_vec(dim, g)]
}

/// Only the unit blocks.
pub fn trivial_product(dim: usize, unit: usize) -> Result<PartialProduct> {
    PartialProduct::new("trivial", dim, unit, vec![], vec![], None)
}

fn kron_adjoint(s: &ConcreteOperatorSpace, t: &ConcreteOperatorSpace) -> Option<ComplexMatrix> {
    Some(linalg::kron(&adjoint_matrix(s)?, &adjoint_matrix(t)?))
}

/// Column g holds the coordinates of B_g*, so coeffs(x*) = A conj(coeffs(x)).
pub fn adjoint_matrix(s: &ConcreteOperatorSpace) -> Option<ComplexMatrix> {
    let cols: Option<Vec<Vec<C64>>> = s.basis().iter().map(|b| s.coordinates(&b.adjoint())).collect();
    let cols = cols?;
    Some(ComplexMatrix::from_fn(s.dim(), s.dim(), |r, col| cols[col][r]))
}

fn tensor_labels(s: &ConcreteOperatorSpace, t: &ConcreteOperatorSpace) -> Vec<String> {
    let mut out = Vec::new();
    for g in 0..s.dim() {
        for h in 0..t.dim() {
            out.push(format!("s{g}⊗t{h}"));
        }
    }
    out
}

fn tensor_blocks(s: &ConcreteOperatorSpace, t: &ConcreteOperatorSpace, both: bool) -> Result<(usize, usize, Vec<BlockSpec>)> {
    let us = s.unit_index().ok_or_else(|| Error::Precondition("first factor has no unit".into()))?;
    let ut = t.unit_index().ok_or_else(|| Error::Precondition("second factor has no unit".into()))?;
    let (ds, dt) = (s.dim(), t.dim());
    let dim = ds * dt;
    let sv: Vec<Vec<C64>> = (0..ds).map(|g| basis_vec(dim, g * dt + ut)).collect();
    let tv: Vec<Vec<C64>> = (0..dt).map(|h| basis_vec(dim, us * dt + h)).collect();
    let st: Vec<Vec<Vec<C64>>> = (0..ds).map(|g| (0..dt).map(|h| basis_vec(dim, g * dt + h)).collect()).collect();
    let mut specs = vec![BlockSpec { left: sv.clone(), right: tv.clone(), table: st.clone() }];
    if both {
        let ts = (0..dt).map(|h| (0..ds).map(|g| basis_vec(dim, g * dt + h)).collect()).collect();
        specs.push(BlockSpec { left: tv, right: sv, table: ts });
    }
    Ok((dim, us * dt + ut, specs))
}

/// D = (C x V) ∪ (V x C) ∪ (S x T), m(s, t) = s ⊗ t on V = S ⊗ T (index g·dim T + h).
pub fn haagerup_product(s: &ConcreteOperatorSpace, t: &ConcreteOperatorSpace) -> Result<PartialProduct> {
    let (dim, unit, specs) = tensor_blocks(s, t, false)?;
    PartialProduct::new("haagerup", dim, unit, tensor_labels(s, t), specs, None)
}

/// Adds T x S with m(t, s) = s ⊗ t.
pub fn commuting_product(s: &ConcreteOperatorSpace, t: &ConcreteOperatorSpace) -> Result<PartialProduct> {
    let (dim, unit, specs) = tensor_blocks(s, t, true)?;
    PartialProduct::new("commuting", dim, unit, tensor_labels(s, t), specs, kron_adjoint(s, t))
}

/// Blocks (L_i, R_i) of a concrete space with m the ambient matrix product,
/// which must land back in the span.
pub fn ambient_product(space: &ConcreteOperatorSpace, blocks: &[(Vec<Vec<C64>>, Vec<Vec<C64>>)]) -> Result<PartialProduct> {
    let unit = space.unit_index().ok_or_else(|| Error::Precondition("space has no unit".into()))?;
    if linalg::max_abs(&(&space.basis()[unit] - linalg::identity(space.ambient_dim()))) > 1e-12 {
        return Err(Error::Precondition("ambient products need the identity as unit".into()));
    }
    let mut specs = Vec::new();
    for (bi, (l, r)) in blocks.iter().enumerate() {
        let mut table = Vec::new();
        for a in l {
            let am = space.combine(a);
            let mut row = Vec::new();
            for b in r {
                let p = &am * space.combine(b);
                let v = space
                    .coordinates(&p)
                    .ok_or_else(|| Error::Precondition(format!("block {bi}: product leaves the space")))?;
                row.push(v);
            }
            table.push(row);
        }
        specs.push(BlockSpec { left: l.clone(), right: r.clone(), table });
    }
    PartialProduct::new("ambient", space.dim(), unit, vec![], specs, None)
}

/// Every pair of a concrete space multiplied in the ambient algebra (requires closure).
pub fn full_ambient_product(space: &ConcreteOperatorSpace) -> Result<PartialProduct> {
    let all: Vec<Vec<C64>> = (0..space.dim()).map(|g| basis_vec(space.dim(), g)).collect();
    ambient_product(space, &[(all.clone(), all)])
}

/// m(x, y) = (xy + yx)/2 on all pairs of a concrete space closed under it.
pub fn anticommutator_product(space: &ConcreteOperatorSpace) -> Result<PartialProduct> {
    let unit = space.unit_index().ok_or_else(|| Error::Precondition("space has no unit".into()))?;
    let n = space.dim();
    let all: Vec<Vec<C64>> = (0..n).map(|g| basis_vec(n, g)).collect();
    let mut table = Vec::new();
    for a in space.basis() {
        let mut row = Vec::new();
        for b in space.basis() {
            let p = (a * b + b * a) * c(0.5, 0.0);
            row.push(space.coordinates(&p).ok_or_else(|| Error::Precondition("anticommutator leaves the space".into()))?);
        }
        table.push(row);
    }
    let labels = (0..n).map(|g| format!("b{g}")).collect();
    PartialProduct::new("anticommutator", n, unit, labels, vec![BlockSpec { left: all.clone(), right: all, table }], None)
}

/// Pauli basis I, X, Y, Z of M_2.
pub fn pauli_space() -> ConcreteOperatorSpace {
    let i = linalg::identity(2);
    let x = ComplexMatrix::from_row_slice(2, 2, &[ZERO, c(1.0, 0.0), c(1.0, 0.0), ZERO]);
    let y = ComplexMatrix::from_row_slice(2, 2, &[ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO]);
    let z = ComplexMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), ZERO, ZERO, c(-1.0, 0.0)]);
    ConcreteOperatorSpace::span(vec![i, x, y, z], Some(0), true).expect("Pauli basis")
}

/// span{e, u_1..u_n, u_1*..u_n*} with m(u_i, u_i*) = m(u_i*, u_i) = e.
/// Basis: 0 = e, 1..=n the u_i, n+1..=2n their adjoints.
pub fn free_unitary_product(n: usize) -> Result<PartialProduct> {
    let dim = 2 * n + 1;
    let e = basis_vec(dim, 0);
    let mut specs = Vec::new();
    for i in 1..=n {
        specs.push(BlockSpec { left: single(dim, i), right: single(dim, n + i), table: vec![vec![e.clone()]] });
        specs.push(BlockSpec { left: single(dim, n + i), right: single(dim, i), table: vec![vec![e.clone()]] });
    }
    let mut labels = vec!["e".to_string()];
    labels.extend((1..=n).map(|i| format!("u{i}")));
    labels.extend((1..=n).map(|i| format!("u{i}*")));
    let adj = ComplexMatrix::from_fn(dim, dim, |r, col| {
        let img = if col == 0 { 0 } else if col <= n { col + n } else { col - n };
        if r == img {
            c(1.0, 0.0)
        } else {
            ZERO
        }
    });
    PartialProduct::new("free_unitary", dim, 0, labels, specs, Some(adj))
}

/// Cuntz system V_n = span{e, s_i, s_i*, p_i} with Σ p_i = e, so the basis is
/// e, s_1..s_n, s_1*..s_n*, p_1..p_{n-1} and p_n = e − Σ_{i<n} p_i.
/// m(s_i, s_i*) = p_i, m(s_i*, s_i) = e.
pub fn cuntz_product(n: usize) -> Result<PartialProduct> {
    if n < 2 {
        return Err(Error::Input("Cuntz system needs n ≥ 2".into()));
    }
    let dim = 3 * n;
    let e = basis_vec(dim, 0);
    let mut specs = Vec::new();
    for i in 1..=n {
        let p = cuntz_projection(n, i);
        specs.push(BlockSpec { left: single(dim, i), right: single(dim, n + i), table: vec![vec![p]] });
        specs.push(BlockSpec { left: single(dim, n + i), right: single(dim, i), table: vec![vec![e.clone()]] });
    }
    let mut labels = vec!["e".to_string()];
    labels.extend((1..=n).map(|i| format!("s{i}")));
    labels.extend((1..=n).map(|i| format!("s{i}*")));
    labels.extend((1..n).map(|i| format!("p{i}")));
    let adj = ComplexMatrix::from_fn(dim, dim, |r, col| {
        let img = if col == 0 || col > 2 * n {
            col
        } else if col <= n {
            col + n
        } else {
            col - n
        };
        if r == img {
            c(1.0, 0.0)
        } else {
            ZERO
        }
    });
    PartialProduct::new("cuntz", dim, 0, labels, specs, Some(adj))
}

/// Coordinates of p_i in the Cuntz basis (1-based i).
pub fn cuntz_projection(n: usize, i: usize) -> Vec<C64> {
    let dim = 3 * n;
    let mut v = vec![ZERO; dim];
    if i < n {
        v[2 * n + i] = c(1.0, 0.0);
    } else {
        v[0] = c(1.0, 0.0);
        for j in 1..n {
            v[2 * n + j] = c(-1.0, 0.0);
        }
    }
    v
}

/// Truncated Cuntz isometries on C^{dim}: s_i e_k = e_{n k + i} when in range.
/// The relations only hold on the low part of the space.
pub fn truncated_cuntz_isometries(n: usize, dim: usize) -> Vec<ComplexMatrix> {
    (0..n)
        .map(|i| {
            ComplexMatrix::from_fn(dim, dim, |r, col| if r == n * col + i { c(1.0, 0.0) } else { ZERO })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_of(m: &PartialProduct, g: usize) -> Vec<C64> {
        basis_vec(m.dim(), g)
    }

    fn elem(rows: usize, cols: usize, dim: usize, entries: &[Vec<C64>]) -> MatrixElement {
        MatrixElement::from_fn(rows, cols, dim, |i, j, g| entries[i * cols + j][g])
    }

    #[test]
    fn unit_column_is_always_valid() {
        let m = trivial_product(3, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = MatrixElement::from_fn(2, 2, 3, |_, _, _| linalg::random_complex(&mut rng));
        let id = MatrixElement::scalar(&linalg::identity(2), 3, 0);
        assert!(is_valid_pair(&a, &id, &m).unwrap());
        assert_eq!(odot(&a, &id, &m).unwrap().distance(&a), 0.0);
        let b = MatrixElement::from_fn(2, 1, 3, |_, _, _| linalg::random_complex(&mut rng));
        assert!(!is_valid_pair(&a, &b, &m).unwrap());
        assert!(odot(&a, &b, &m).is_err());
        assert!(is_valid_pair(&a, &MatrixElement::zeros(3, 1, 3), &m).is_err());
    }

    #[test]
    fn haagerup_pairs() {
        let s = ConcreteOperatorSpace::matrix_algebra(2);
        let m = haagerup_product(&s, &s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // A over S (entries s ⊗ e), B over T (entries e ⊗ t)
        let a = MatrixElement::from_fn(1, 2, 16, |_, _, g| if g % 4 == 0 { linalg::random_complex(&mut rng) } else { ZERO });
        let b = MatrixElement::from_fn(2, 1, 16, |_, _, g| if g / 4 == 0 { linalg::random_complex(&mut rng) } else { ZERO });
        assert!(is_valid_pair(&a, &b, &m).unwrap());
        let p = odot(&a, &b, &m).unwrap();
        let expect = crate::haagerup::elementary(
            &MatrixElement::from_fn(1, 2, 4, |i, j, g| a.get(i, j, g * 4)),
            &MatrixElement::from_fn(2, 1, 4, |i, j, h| b.get(i, j, h)),
        );
        assert!(p.distance(&expect) < 1e-12);
        // (t, s) is not in the Haagerup domain but is in the commuting one
        let bt = MatrixElement::from_fn(1, 1, 16, |_, _, g| if g == 1 { c(1.0, 0.0) } else { ZERO });
        let as_ = MatrixElement::from_fn(1, 1, 16, |_, _, g| if g == 4 { c(1.0, 0.0) } else { ZERO });
        assert!(!is_valid_pair(&bt, &as_, &m).unwrap());
        let cm = commuting_product(&s, &s).unwrap();
        assert!(is_valid_pair(&bt, &as_, &cm).unwrap());
    }

    #[test]
    fn free_unitary_and_cuntz_products() {
        let m = free_unitary_product(2).unwrap();
        let row = MatrixElement::from_vector(&vec_of(&m, 1));
        let col = MatrixElement::from_vector(&vec_of(&m, 3));
        assert_eq!(odot(&row, &col, &m).unwrap(), MatrixElement::from_vector(&vec_of(&m, 0)));
        let cz = cuntz_product(3).unwrap();
        for i in 1..=3 {
            let p = odot(&MatrixElement::from_vector(&vec_of(&cz, i)), &MatrixElement::from_vector(&vec_of(&cz, 3 + i)), &cz)
                .unwrap();
            assert_eq!(p.entry(0, 0), cuntz_projection(3, i).as_slice());
        }
    }

    #[test]
    fn reduction_examples() {
        let m = free_unitary_product(2).unwrap();
        let w: FreeElement = [(vec![0, 2], c(1.0, 0.0))].into_iter().collect();
        assert_eq!(reduce(&w, &m), letter(&vec_of(&m, 2)));
        let w: FreeElement = [(vec![1, 3, 2], c(1.0, 0.0))].into_iter().collect();
        assert_eq!(reduce(&w, &m), letter(&vec_of(&m, 2)));
        let w: FreeElement = [(vec![1, 2], c(1.0, 0.0))].into_iter().collect();
        assert_eq!(reduce(&w, &m), w);
        let r = reduce(&w, &m);
        assert_eq!(reduce(&r, &m), r);
    }

    #[test]
    fn worked_trivial_example() {
        // V = span{e, x}; ([e x −x], [3x; 2x; 2x]) reduces to 3x
        let m = trivial_product(2, 0).unwrap();
        let e = vec![c(1.0, 0.0), ZERO];
        let x = vec![ZERO, c(1.0, 0.0)];
        let s = |k: f64, v: &Vec<C64>| v.iter().map(|z| z * k).collect::<Vec<_>>();
        let a = elem(1, 3, 2, &[e.clone(), x.clone(), s(-1.0, &x)]);
        let b = elem(3, 1, 2, &[s(3.0, &x), s(2.0, &x), s(2.0, &x)]);
        let r = is_permissible(&[a.clone(), b.clone()], &m);
        assert!(r.permissible);
        assert_eq!(r.product.unwrap().entry(0, 0), s(3.0, &x).as_slice());
        assert!(!is_valid_pair(&a, &b, &m).unwrap());
        let r = is_permissible(&[MatrixElement::from_vector(&x), MatrixElement::from_vector(&x)], &m);
        assert!(!r.permissible);
    }

    #[test]
    fn valid_pairs_are_permissible() {
        let s = ConcreteOperatorSpace::matrix_algebra(2);
        let m = commuting_product(&s, &s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = MatrixElement::from_fn(2, 2, 16, |_, _, g| if g % 4 == 0 { linalg::random_complex(&mut rng) } else { ZERO });
        let b = MatrixElement::from_fn(2, 3, 16, |_, _, g| if g / 4 == 0 { linalg::random_complex(&mut rng) } else { ZERO });
        let r = is_permissible(&[a.clone(), b.clone()], &m);
        assert!(r.permissible);
        assert!(r.product.unwrap().distance(&odot(&a, &b, &m).unwrap()) < 1e-12);
    }

    #[test]
    fn concatenation_lemma() {
        let m = free_unitary_product(2).unwrap();
        let u = MatrixElement::from_vector(&vec_of(&m, 1));
        let us = MatrixElement::from_vector(&vec_of(&m, 3));
        let e = MatrixElement::from_vector(&vec_of(&m, 0));
        // (u, e) and (u*) are permissible with products u and u*, and (u, u*) is valid
        let r = is_permissible(&[u.clone(), e.clone(), us.clone()], &m);
        assert!(r.permissible);
        assert_eq!(r.product.unwrap(), e);
    }

    #[test]
    fn ambient_multiplication_is_contractive_and_matches() {
        // upper triangular 2x2 algebra
        let space = ConcreteOperatorSpace::span(
            vec![linalg::identity(2), linalg::unit(2, 2, 0, 0), linalg::unit(2, 2, 0, 1)],
            Some(0),
            false,
        )
        .unwrap();
        let m = full_ambient_product(&space).unwrap();
        let rep = check_complete_contractivity(&m, &|x| space.matrix_norm(x), 3, 200, 4);
        assert!(rep.max_gap <= 1e-9, "{:?}", rep.max_gap);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = space.random_element(&mut rng, 2, 3);
        let b = space.random_element(&mut rng, 3, 2);
        let p = odot(&a, &b, &m).unwrap();
        let diff = space.realize(&p) - space.realize(&a) * space.realize(&b);
        assert!(linalg::norm2(&diff) < 1e-9);
        let zero = check_complete_contractivity(&m, &|_| 0.0, 2, 5, 0);
        assert_eq!(zero.max_gap, 0.0);
    }

    #[test]
    fn anticommutator_is_degenerate() {
        let space = pauli_space();
        let m = anticommutator_product(&space).unwrap();
        let rep = detect_degeneracy(&m, 3).unwrap();
        assert!(rep.degenerate);
        // the word (X, Y, Y): left-first gives 0, right-first gives X
        let w: FreeElement = [(vec![1, 2, 2], c(1.0, 0.0))].into_iter().collect();
        assert!(reduce(&w, &m).is_empty());
        assert_eq!(reduce_rightmost(&w, &m), letter(&vec_of(&m, 1)));
    }

    #[test]
    fn confluent_systems() {
        assert!(!detect_degeneracy(&trivial_product(3, 0).unwrap(), 4).unwrap().degenerate);
        let r = detect_degeneracy(&free_unitary_product(2).unwrap(), 4).unwrap();
        assert!(!r.degenerate && r.words_checked > 0);
        // s1·s1*·s1 gives p1·s1 or s1: not confluent, but no element of V vanishes
        let r = detect_degeneracy(&cuntz_product(2).unwrap(), 4).unwrap();
        assert!(!r.degenerate && r.non_confluent > 0);
    }

    #[test]
    fn adjoint_closure_adds_mirror_blocks() {
        let s = ConcreteOperatorSpace::matrix_algebra(2);
        let m = commuting_product(&s, &s).unwrap();
        // unit blocks + (S,T) + (T,S) + two mirrors
        assert_eq!(m.blocks().len(), 6);
        let cz = cuntz_product(2).unwrap();
        // (s_1*, s_1) mirrored from (s_1*, s_1) itself and (s_1, s_1*) from (s_1, s_1*)
        assert_eq!(cz.basis_product(1, 3).unwrap(), &cuntz_projection(2, 1));
    }

    #[test]
    fn truncated_cuntz_relations_on_low_part() {
        let s = truncated_cuntz_isometries(2, 8);
        let sum: ComplexMatrix = s.iter().map(|x| x * x.adjoint()).fold(ComplexMatrix::zeros(8, 8), |a, b| a + b);
        assert!(linalg::max_abs(&(sum - linalg::identity(8))) < 1e-12);
        let p = s[0].adjoint() * &s[0];
        assert!((p[(0, 0)].re - 1.0).abs() < 1e-12);
    }
}
