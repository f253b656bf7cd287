//! Factorization norms over a partial product. Upper bounds come from explicit
//! permissible factorizations found by structural seeds plus gauge refinement;
//! lower bounds from explicit maps that respect the product.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, ComplexMatrix, C64};
use crate::optim;
use crate::products::{self, PartialProduct};
use crate::spaces::{ConcreteOperatorSpace, MatrixElement};

/// Entry class that no factor may contain.
pub const INADMISSIBLE: usize = usize::MAX;

/// Largest inner dimension refined with a full GL_k gauge.
pub const FULL_GAUGE_MAX: usize = 6;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct FactOptions {
    pub max_len: usize,
    pub restarts: usize,
    /// descent iterations per gauge refinement; 0 disables refinement
    pub iters: usize,
    pub seed: u64,
    /// candidates kept per length for refinement and extension
    pub beam: usize,
}

impl Default for FactOptions {
    fn default() -> Self {
        FactOptions { max_len: 6, restarts: 8, iters: 400, seed: 0, beam: 3 }
    }
}

impl FactOptions {
    pub fn with_len(mut self, l: usize) -> Self {
        self.max_len = l;
        self
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FactorizationWitness {
    pub factors: Vec<MatrixElement>,
    pub factor_norms: Vec<f64>,
    pub value: f64,
    pub target: MatrixElement,
    /// false only for the fallback A itself when no admissible factorization exists
    pub certified: bool,
}

/// Compact JSON form of a witness.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WitnessSummary {
    pub factor_shapes: Vec<(usize, usize)>,
    pub values: Vec<f64>,
    pub value: f64,
    pub certified: bool,
}

impl FactorizationWitness {
    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn factor_shapes(&self) -> Vec<(usize, usize)> {
        self.factors.iter().map(|f| f.shape()).collect()
    }

    pub fn summary(&self) -> WitnessSummary {
        WitnessSummary {
            factor_shapes: self.factor_shapes(),
            values: self.factor_norms.clone(),
            value: self.value,
            certified: self.certified,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormInterval {
    pub lower: f64,
    pub upper: f64,
    pub upper_witness: FactorizationWitness,
    pub lower_witness: String,
}

impl NormInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// (upper - lower) / lower, or the width when lower vanishes.
    pub fn relative_gap(&self) -> f64 {
        if self.lower > 0.0 {
            self.width() / self.lower
        } else {
            self.width()
        }
    }
}

/// A factorization problem: a partial product, the base norm of factors, an
/// optional per-entry constraint and an optional acceptance rule for products.
pub struct FactProblem<'a> {
    pub product: &'a PartialProduct,
    pub base_norm: &'a dyn Fn(&MatrixElement) -> f64,
    /// class of an entry vector; gauges only mix inner indices whose entries
    /// share classes, and factors with an [`INADMISSIBLE`] entry are rejected
    pub entry_class: Option<&'a dyn Fn(&[C64]) -> usize>,
    /// accepts `product` as a factorization of `target` (default: equal within 1e-8)
    pub accept: Option<&'a dyn Fn(&MatrixElement, &MatrixElement) -> bool>,
    /// generic splits of the previous beam are only tried up to this length;
    /// longer lengths then see extra seeds alone
    pub split_depth: usize,
}

fn scalar_element(n: usize, dim: usize, unit: usize) -> MatrixElement {
    MatrixElement::scalar(&linalg::identity(n), dim, unit)
}

impl<'a> FactProblem<'a> {
    pub fn new(product: &'a PartialProduct, base_norm: &'a dyn Fn(&MatrixElement) -> f64) -> Self {
        FactProblem { product, base_norm, entry_class: None, accept: None, split_depth: usize::MAX }
    }

    pub fn with_entry_class(mut self, f: &'a dyn Fn(&[C64]) -> usize) -> Self {
        self.entry_class = Some(f);
        self
    }

    pub fn with_split_depth(mut self, depth: usize) -> Self {
        self.split_depth = depth;
        self
    }

    pub fn with_accept(mut self, f: &'a dyn Fn(&MatrixElement, &MatrixElement) -> bool) -> Self {
        self.accept = Some(f);
        self
    }

    fn norm(&self, x: &MatrixElement) -> f64 {
        (self.base_norm)(x)
    }

    fn factor_ok(&self, f: &MatrixElement) -> bool {
        match self.entry_class {
            None => true,
            Some(cls) => (0..f.rows()).all(|i| (0..f.cols()).all(|j| cls(f.entry(i, j)) != INADMISSIBLE)),
        }
    }

    fn accepts(&self, product: &MatrixElement, target: &MatrixElement) -> bool {
        match self.accept {
            Some(f) => f(product, target),
            None => product.distance(target) <= 1e-8 * target.max_abs().max(1.0),
        }
    }

    /// Verifies a candidate tuple (admissible entries, permissible, product
    /// accepted for `target`) and packages it with its factor norms.
    pub fn witness(&self, factors: Vec<MatrixElement>, target: &MatrixElement) -> Option<FactorizationWitness> {
        if factors.is_empty() || factors[0].rows() != target.rows() || factors.last()?.cols() != target.cols() {
            return None;
        }
        if !factors.iter().all(|f| self.factor_ok(f)) {
            return None;
        }
        let res = products::is_permissible(&factors, self.product);
        let prod = res.product?;
        if !self.accepts(&prod, target) {
            return None;
        }
        let norms: Vec<f64> = factors.iter().map(|f| self.norm(f)).collect();
        let value = norms.iter().product::<f64>();
        if !value.is_finite() {
            return None;
        }
        Some(FactorizationWitness { factors, factor_norms: norms, value, target: target.clone(), certified: true })
    }

    pub fn fact_norm_upper(&self, target: &MatrixElement, opts: &FactOptions) -> Result<FactorizationWitness> {
        self.fact_norm_upper_seeded(target, opts, &[])
    }

    /// Best witness over lengths 1..=L. `extra` tuples join the candidates of
    /// their own length. Each length is processed identically for every L, so
    /// the result is nonincreasing in L.
    pub fn fact_norm_upper_seeded(
        &self,
        target: &MatrixElement,
        opts: &FactOptions,
        extra: &[Vec<MatrixElement>],
    ) -> Result<FactorizationWitness> {
        let mut all = self.upper_by_length(target, opts, extra)?;
        Ok(all.pop().expect("max_len ≥ 1"))
    }

    /// Best witness found with length ≤ L, for L = 1..=max_len, from one run.
    /// Entry L − 1 equals what a run with max_len = L reports.
    pub fn upper_by_length(
        &self,
        target: &MatrixElement,
        opts: &FactOptions,
        extra: &[Vec<MatrixElement>],
    ) -> Result<Vec<FactorizationWitness>> {
        if opts.max_len == 0 {
            return Err(Error::Precondition("maximal factorization length must be at least 1".into()));
        }
        if target.dim() != self.product.dim() {
            return Err(Error::Input(format!(
                "element has {} coefficients per entry, product space has dimension {}",
                target.dim(),
                self.product.dim()
            )));
        }
        let base = self.norm(target);
        let fallback = FactorizationWitness {
            factors: vec![target.clone()],
            factor_norms: vec![base],
            value: base,
            target: target.clone(),
            certified: false,
        };
        let mut best: Option<FactorizationWitness> = None;
        let mut per_len = Vec::with_capacity(opts.max_len);
        let mut prev: Vec<FactorizationWitness> = Vec::new();
        let beam = opts.beam.max(1);
        for len in 1..=opts.max_len {
            let mut cands: Vec<Vec<MatrixElement>> = Vec::new();
            match len {
                1 => cands.push(vec![target.clone()]),
                _ if len > self.split_depth => {}
                2 => cands.extend(self.two_splits(target).into_iter().map(|(b, c)| vec![b, c])),
                _ => {
                    for w in &prev {
                        for j in 0..w.len() {
                            for (b, c) in self.two_splits(&w.factors[j]) {
                                let mut f = w.factors[..j].to_vec();
                                f.push(b);
                                f.push(c);
                                f.extend_from_slice(&w.factors[j + 1..]);
                                cands.push(f);
                            }
                        }
                    }
                }
            }
            cands.extend(extra.iter().filter(|e| e.len() == len).cloned());
            let mut found: Vec<FactorizationWitness> =
                cands.into_iter().filter_map(|f| self.witness(f, target)).collect();
            sort_witnesses(&mut found);
            found.truncate(beam);
            let mut refined: Vec<FactorizationWitness> = found
                .into_iter()
                .enumerate()
                .map(|(i, w)| self.refine(w, opts, opts.seed ^ ((len as u64) << 32) ^ i as u64))
                .collect();
            sort_witnesses(&mut refined);
            if let Some(top) = refined.first() {
                if best.as_ref().map_or(true, |b| top.value < b.value) {
                    best = Some(top.clone());
                }
            }
            if !refined.is_empty() {
                prev = refined;
            }
            per_len.push(best.clone().unwrap_or_else(|| fallback.clone()));
        }
        Ok(per_len)
    }

    /// Two-factor splits F = B ⊙ C: unit insertions on either side and
    /// domain-block splits (entries solved jointly over the chosen blocks,
    /// then split by a rank-revealing decomposition per block).
    pub fn two_splits(&self, f: &MatrixElement) -> Vec<(MatrixElement, MatrixElement)> {
        let (n, k) = f.shape();
        let dim = f.dim();
        let unit = self.product.unit();
        let half = c(0.5, 0.0);
        let id_n = scalar_element(n, dim, unit);
        let id_k = scalar_element(k, dim, unit);
        let mut out = vec![
            (MatrixElement::hstack(&[&id_n, f]), MatrixElement::vstack(&[&f.scale(half), &id_k.scale(half)])),
            (MatrixElement::hstack(&[f, &id_n]), MatrixElement::vstack(&[&id_k.scale(half), &f.scale(half)])),
        ];
        let nb = self.product.blocks().len();
        let mut subsets: Vec<Vec<usize>> = (2..nb).map(|b| vec![b]).collect();
        if nb > 3 {
            subsets.push((2..nb).collect());
        }
        if nb > 2 {
            subsets.push((0..nb).collect());
        }
        for s in subsets {
            if let Some(bc) = self.block_split(f, &s) {
                out.push(bc);
            }
        }
        out
    }

    fn block_split(&self, f: &MatrixElement, blocks: &[usize]) -> Option<(MatrixElement, MatrixElement)> {
        let (n, k) = f.shape();
        let dim = f.dim();
        let all = self.product.blocks();
        let mut cols: Vec<&[C64]> = Vec::new();
        for &b in blocks {
            let bl = &all[b];
            for p in 0..bl.left_dim() {
                for q in 0..bl.right_dim() {
                    cols.push(bl.table_entry(p, q));
                }
            }
        }
        if cols.is_empty() {
            return None;
        }
        let t = ComplexMatrix::from_fn(dim, cols.len(), |r, col| cols[col][r]);
        let pinv = t.clone().pseudo_inverse(1e-12).ok()?;
        // coefficients per entry, indexed like `cols`
        let mut coef = vec![vec![Vec::new(); k]; n];
        for i in 0..n {
            for j in 0..k {
                let a = linalg::ComplexVector::from_column_slice(f.entry(i, j));
                let x = &pinv * &a;
                if (&t * &x - &a).norm() > 1e-10 * a.norm().max(1e-300) {
                    return None;
                }
                coef[i][j] = x.iter().cloned().collect::<Vec<C64>>();
            }
        }
        let mut lefts = Vec::new();
        let mut rights = Vec::new();
        let mut offset = 0;
        for &b in blocks {
            let bl = &all[b];
            let (pp, qq) = (bl.left_dim(), bl.right_dim());
            let m = ComplexMatrix::from_fn(n * pp, qq * k, |r, col| {
                let (x, p) = (r / pp, r % pp);
                let (q, z) = (col / k, col % k);
                coef[x][z][offset + p * qq + q]
            });
            offset += pp * qq;
            let (u, s, vt) = linalg::truncated_svd(&m, 1e-12);
            let r = s.len();
            if r == 0 {
                continue;
            }
            let lv: Vec<Vec<C64>> = (0..pp).map(|p| bl.left_vector(p)).collect();
            let rv: Vec<Vec<C64>> = (0..qq).map(|q| bl.right_vector(q)).collect();
            let bm = MatrixElement::from_fn(n, r, dim, |x, y, g| {
                let sq = s[y].sqrt();
                (0..pp).map(|p| u[(x * pp + p, y)] * lv[p][g]).sum::<C64>() * sq
            });
            let cm = MatrixElement::from_fn(r, k, dim, |y, z, g| {
                let sq = s[y].sqrt();
                (0..qq).map(|q| vt[(y, q * k + z)] * rv[q][g]).sum::<C64>() * sq
            });
            lefts.push(bm);
            rights.push(cm);
        }
        if lefts.is_empty() {
            return None;
        }
        let lrefs: Vec<&MatrixElement> = lefts.iter().collect();
        let rrefs: Vec<&MatrixElement> = rights.iter().collect();
        Some((MatrixElement::hstack(&lrefs), MatrixElement::vstack(&rrefs)))
    }

    /// Class signature of each inner index of the pair (column of `a`, row of `b`).
    fn inner_keys(&self, a: &MatrixElement, b: &MatrixElement) -> Vec<Vec<usize>> {
        let k = a.cols();
        match self.entry_class {
            None => vec![Vec::new(); k],
            Some(cls) => (0..k)
                .map(|y| {
                    let mut key: Vec<usize> = (0..a.rows()).map(|i| cls(a.entry(i, y))).collect();
                    key.extend((0..b.cols()).map(|j| cls(b.entry(y, j))));
                    key
                })
                .collect(),
        }
    }

    /// Gauge mask: full within equal class signatures, diagonal only once the
    /// inner dimension exceeds [`FULL_GAUGE_MAX`].
    fn gauge_mask(&self, a: &MatrixElement, b: &MatrixElement) -> Option<Vec<bool>> {
        let k = a.cols();
        if self.entry_class.is_none() && k <= FULL_GAUGE_MAX {
            return None;
        }
        let keys = self.inner_keys(a, b);
        let mut mask = vec![false; 2 * k * k];
        for i in 0..k {
            for j in 0..k {
                let ok = keys[i] == keys[j] && (k <= FULL_GAUGE_MAX || i == j);
                mask[2 * (i * k + j)] = ok;
                mask[2 * (i * k + j) + 1] = ok;
            }
        }
        Some(mask)
    }

    /// Reduces the inner dimension of a ⊙ b to the rank of each class group,
    /// first through the columns of `a`, then through the rows of `b`. The
    /// free product of the tuple is unchanged.
    fn compress_inner(&self, a: &MatrixElement, b: &MatrixElement) -> (MatrixElement, MatrixElement) {
        let (mut a, mut b) = (a.clone(), b.clone());
        for side in 0..2 {
            let keys = self.inner_keys(&a, &b);
            let mut groups: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
            for (y, key) in keys.into_iter().enumerate() {
                match groups.iter_mut().find(|(k, _)| *k == key) {
                    Some(g) => g.1.push(y),
                    None => groups.push((key, vec![y])),
                }
            }
            let dim = a.dim();
            let mut new_a: Vec<MatrixElement> = Vec::new();
            let mut new_b: Vec<MatrixElement> = Vec::new();
            for (_, idx) in &groups {
                let ga = MatrixElement::from_fn(a.rows(), idx.len(), dim, |i, y, g| a.get(i, idx[y], g));
                let gb = MatrixElement::from_fn(idx.len(), b.cols(), dim, |y, j, g| b.get(idx[y], j, g));
                // columns of a (side 0) or rows of b (side 1) as vectors
                let m = if side == 0 {
                    ComplexMatrix::from_fn(a.rows() * dim, idx.len(), |r, y| ga.get(r / dim, y, r % dim))
                } else {
                    ComplexMatrix::from_fn(idx.len(), b.cols() * dim, |y, col| gb.get(y, col / dim, col % dim))
                };
                let (u, sv, vt) = linalg::truncated_svd(&m, 1e-12);
                if sv.len() >= idx.len() || sv.is_empty() {
                    new_a.push(ga);
                    new_b.push(gb);
                    continue;
                }
                let r = sv.len();
                let sq: Vec<C64> = sv.iter().map(|x| c(x.sqrt(), 0.0)).collect();
                if side == 0 {
                    // a_grp = (U √S)(√S V*): new a columns U√S, new b rows √S V* b_grp
                    let left = ComplexMatrix::from_fn(a.rows() * dim, r, |row, y| u[(row, y)] * sq[y]);
                    let right = ComplexMatrix::from_fn(r, idx.len(), |y, col| sq[y] * vt[(y, col)]);
                    new_a.push(MatrixElement::from_fn(a.rows(), r, dim, |i, y, g| left[(i * dim + g, y)]));
                    new_b.push(gb.left_mul(&right));
                } else {
                    let left = ComplexMatrix::from_fn(idx.len(), r, |row, y| u[(row, y)] * sq[y]);
                    let right = ComplexMatrix::from_fn(r, b.cols() * dim, |y, col| sq[y] * vt[(y, col)]);
                    new_a.push(ga.right_mul(&left));
                    new_b.push(MatrixElement::from_fn(r, b.cols(), dim, |y, j, g| right[(y, j * dim + g)]));
                }
            }
            let ra: Vec<&MatrixElement> = new_a.iter().collect();
            let rb: Vec<&MatrixElement> = new_b.iter().collect();
            a = MatrixElement::hstack(&ra);
            b = MatrixElement::vstack(&rb);
        }
        (a, b)
    }

    /// Gauge descent on each adjacent pair, then balancing. Never worse than
    /// the input witness.
    fn refine(&self, w: FactorizationWitness, opts: &FactOptions, seed: u64) -> FactorizationWitness {
        if opts.iters == 0 || w.len() < 2 || w.value == 0.0 {
            return self.balance(w);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut factors = drop_zero_inner(&w.factors);
        for j in 0..factors.len() - 1 {
            let (a, b) = self.compress_inner(&factors[j], &factors[j + 1]);
            factors[j] = a;
            factors[j + 1] = b;
        }
        let sweeps = if factors.len() == 2 { 1 } else { 2 };
        for _ in 0..sweeps {
            for j in 0..factors.len() - 1 {
                let (a, b) = (&factors[j], &factors[j + 1]);
                let k = a.cols();
                if k == 0 {
                    continue;
                }
                let mask = self.gauge_mask(a, b);
                let obj = |g: &ComplexMatrix| -> Option<f64> {
                    let inv = linalg::inverse(g)?;
                    let v = self.norm(&a.right_mul(g)) * self.norm(&b.left_mul(&inv));
                    v.is_finite().then_some(v)
                };
                let start_v = match obj(&linalg::identity(k)) {
                    Some(v) if v > 0.0 => v,
                    _ => continue,
                };
                let mut best = (linalg::identity(k), start_v);
                let starts = if factors.len() == 2 { opts.restarts.max(1) } else { 1 };
                for r in 0..starts {
                    let g0 = if r == 0 {
                        linalg::identity(k)
                    } else {
                        let noise = linalg::random_matrix(&mut rng, k, k) * c(0.3 / (k as f64).sqrt(), 0.0);
                        let noise = match &mask {
                            Some(m) => ComplexMatrix::from_fn(k, k, |i, j| if m[2 * (i * k + j)] { noise[(i, j)] } else { c(0.0, 0.0) }),
                            None => noise,
                        };
                        linalg::identity(k) + noise
                    };
                    let (g, v) = optim::descend_masked(&g0, &obj, opts.iters, mask.as_deref());
                    if v < best.1 {
                        best = (g, v);
                    }
                }
                if best.1 < start_v {
                    let g = best.0;
                    if let Some(inv) = linalg::inverse(&g) {
                        let na = a.right_mul(&g);
                        let nb = b.left_mul(&inv);
                        factors[j] = na;
                        factors[j + 1] = nb;
                    }
                }
            }
        }
        match self.witness(factors, &w.target) {
            Some(r) if r.value <= w.value => self.balance(r),
            _ => self.balance(w),
        }
    }

    /// Rescales factors to equal norms; the product and the value are unchanged.
    pub fn balance(&self, w: FactorizationWitness) -> FactorizationWitness {
        let l = w.len();
        if l < 2 || w.value <= 0.0 || w.factor_norms.iter().any(|n| *n <= 0.0) {
            return w;
        }
        let r = w.value.powf(1.0 / l as f64);
        let factors: Vec<MatrixElement> =
            w.factors.iter().zip(&w.factor_norms).map(|(f, n)| f.scale(c(r / n, 0.0))).collect();
        let norms: Vec<f64> = factors.iter().map(|f| self.norm(f)).collect();
        let value = norms.iter().product::<f64>();
        if value > w.value * (1.0 + 1e-12) {
            return w;
        }
        FactorizationWitness { factors, factor_norms: norms, value, ..w }
    }

    /// Witness for αAβ with value ≤ ‖α‖·value·‖β‖: the scalars are absorbed
    /// into the outer factors.
    pub fn scale_witness(
        &self,
        w: &FactorizationWitness,
        alpha: &ComplexMatrix,
        beta: &ComplexMatrix,
    ) -> Option<FactorizationWitness> {
        let mut factors = w.factors.clone();
        factors[0] = factors[0].left_mul(alpha);
        let last = factors.len() - 1;
        factors[last] = factors[last].right_mul(beta);
        let target = w.target.left_mul(alpha).right_mul(beta);
        self.witness(factors, &target)
    }

    /// Witness for A ⊕ B with value max(value_A, value_B) up to rounding: both
    /// are padded with unit factors to a common length, balanced, and summed
    /// factor by factor.
    pub fn direct_sum_witness(&self, a: &FactorizationWitness, b: &FactorizationWitness) -> Option<FactorizationWitness> {
        let l = a.len().max(b.len());
        let fa = self.padded_balanced(a, l);
        let fb = self.padded_balanced(b, l);
        let factors: Vec<MatrixElement> = fa.iter().zip(&fb).map(|(x, y)| x.direct_sum(y)).collect();
        self.witness(factors, &a.target.direct_sum(&b.target))
    }

    fn padded_balanced(&self, w: &FactorizationWitness, l: usize) -> Vec<MatrixElement> {
        let dim = self.product.dim();
        let unit = self.product.unit();
        if w.value <= 0.0 {
            return w.factors.iter().map(|f| MatrixElement::zeros(f.rows(), f.cols(), dim)).chain(
                (w.len()..l).map(|_| MatrixElement::zeros(w.target.cols(), w.target.cols(), dim)),
            ).collect();
        }
        let r = w.value.powf(1.0 / l as f64);
        let mut out: Vec<MatrixElement> =
            w.factors.iter().zip(&w.factor_norms).map(|(f, n)| f.scale(c(r / n, 0.0))).collect();
        let k = w.target.cols();
        let pad = scalar_element(k, dim, unit);
        let pn = self.norm(&pad);
        for _ in w.len()..l {
            out.push(pad.scale(c(r / pn, 0.0)));
        }
        // the pad scalars and the rescaling multiply to 1 only with this correction
        let applied: f64 = out.iter().map(|f| self.norm(f)).product::<f64>();
        let fix = w.value / applied;
        if fix.is_finite() && fix > 0.0 {
            out[0] = out[0].scale(c(fix, 0.0));
        }
        out
    }

    /// Concatenation of witnesses for a valid pair (A, B): a witness for A ⊙ B.
    pub fn concat_witness(&self, a: &FactorizationWitness, b: &FactorizationWitness) -> Result<Option<FactorizationWitness>> {
        let target = products::odot(&a.target, &b.target, self.product)?;
        let mut factors = a.factors.clone();
        factors.extend(b.factors.iter().cloned());
        Ok(self.witness(factors, &target))
    }

    /// Upper bounds for A, B and A ⊕ B, the last seeded with the transported
    /// direct-sum witness.
    pub fn direct_sum_upper(
        &self,
        a: &MatrixElement,
        b: &MatrixElement,
        opts: &FactOptions,
    ) -> Result<(FactorizationWitness, FactorizationWitness, FactorizationWitness)> {
        let wa = self.fact_norm_upper(a, opts)?;
        let wb = self.fact_norm_upper(b, opts)?;
        let extra: Vec<Vec<MatrixElement>> =
            self.direct_sum_witness(&wa, &wb).map(|w| vec![w.factors]).unwrap_or_default();
        let wab = self.fact_norm_upper_seeded(&a.direct_sum(b), opts, &extra)?;
        Ok((wa, wb, wab))
    }

    /// Upper bounds for A and αAβ, the latter seeded with the transported witness.
    pub fn scaled_upper(
        &self,
        a: &MatrixElement,
        alpha: &ComplexMatrix,
        beta: &ComplexMatrix,
        opts: &FactOptions,
    ) -> Result<(FactorizationWitness, FactorizationWitness)> {
        let wa = self.fact_norm_upper(a, opts)?;
        let extra: Vec<Vec<MatrixElement>> =
            self.scale_witness(&wa, alpha, beta).map(|w| vec![w.factors]).unwrap_or_default();
        let ws = self.fact_norm_upper_seeded(&a.left_mul(alpha).right_mul(beta), opts, &extra)?;
        Ok((wa, ws))
    }
}

fn sort_witnesses(ws: &mut [FactorizationWitness]) {
    ws.sort_by(|a, b| a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Equal).then(a.len().cmp(&b.len())));
}

/// Removes inner indices carrying a zero column on the left or a zero row on the right.
fn drop_zero_inner(factors: &[MatrixElement]) -> Vec<MatrixElement> {
    let mut fs = factors.to_vec();
    for j in 0..fs.len().saturating_sub(1) {
        let (a, b) = (&fs[j], &fs[j + 1]);
        let keep: Vec<usize> = (0..a.cols())
            .filter(|&y| {
                let col = (0..a.rows()).any(|i| a.entry(i, y).iter().any(|z| z.norm() > 0.0));
                let row = (0..b.cols()).any(|k| b.entry(y, k).iter().any(|z| z.norm() > 0.0));
                col && row
            })
            .collect();
        if keep.len() == a.cols() || keep.is_empty() {
            continue;
        }
        let na = MatrixElement::from_fn(a.rows(), keep.len(), a.dim(), |i, y, g| a.get(i, keep[y], g));
        let nb = MatrixElement::from_fn(keep.len(), b.cols(), b.dim(), |y, k, g| b.get(keep[y], k, g));
        fs[j] = na;
        fs[j + 1] = nb;
    }
    fs
}

/// Trivial-product factorization norm of a space with a designated unit
/// vector. The lower bound compresses onto the subspace where the unit acts
/// isometrically, which is a unital complete contraction.
pub fn unital_norm(
    a: &MatrixElement,
    space: &ConcreteOperatorSpace,
    opts: &FactOptions,
) -> Result<NormInterval> {
    let unit = space
        .unit_index()
        .ok_or_else(|| Error::Precondition("space has no designated unit vector".into()))?;
    let m = products::trivial_product(space.dim(), unit)?;
    let base = |x: &MatrixElement| space.matrix_norm(x);
    let problem = FactProblem::new(&m, &base);
    let w = problem.fact_norm_upper(a, opts)?;
    let e = &space.basis()[unit];
    let d = space.ambient_dim();
    let (lower, desc) = if linalg::max_abs(&(e - linalg::identity(d))) <= 1e-10 {
        (space.matrix_norm(a), "ambient norm (unit is the identity)".to_string())
    } else {
        let svd = e.clone().svd(true, true);
        let u = svd.u.expect("u requested");
        let vt = svd.v_t.expect("v_t requested");
        let idx: Vec<usize> = (0..d).filter(|&i| svd.singular_values[i] >= 1.0 - 1e-9).collect();
        let u1 = ComplexMatrix::from_fn(d, idx.len(), |r, col| u[(r, idx[col])]);
        let v1 = ComplexMatrix::from_fn(d, idx.len(), |r, col| vt[(idx[col], r)].conj());
        let images: Vec<ComplexMatrix> = space.basis().iter().map(|b| u1.adjoint() * b * &v1).collect();
        let v = realize_with(a, &images).map(|r| linalg::norm2(&r)).unwrap_or(0.0);
        (v, format!("compression onto the isometric subspace of the unit (rank {})", idx.len()))
    };
    let upper = w.value;
    Ok(NormInterval { lower, upper, upper_witness: w, lower_witness: desc })
}

/// Σ_g C_g ⊗ images[g].
pub fn realize_with(a: &MatrixElement, images: &[ComplexMatrix]) -> Option<ComplexMatrix> {
    let d = images.first()?.nrows();
    let e = images.first()?.ncols();
    let mut out = ComplexMatrix::zeros(a.rows() * d, a.cols() * e);
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            for (g, img) in images.iter().enumerate() {
                let z = a.get(i, j, g);
                if z == c(0.0, 0.0) {
                    continue;
                }
                let mut blk = out.view_mut((i * d, j * e), (d, e));
                blk += img * z;
            }
        }
    }
    Some(out)
}

/// Entry class for the commuting product on S ⊗ T: 0 for multiples of the
/// unit, 1 for S ⊗ e, 2 for e ⊗ T, [`INADMISSIBLE`] otherwise.
pub fn commuting_entry_class(v: &[C64], s_dim: usize, t_dim: usize, s_unit: usize, t_unit: usize) -> usize {
    let tol = 1e-12 * v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut in_s = true;
    let mut in_t = true;
    for g in 0..s_dim {
        for h in 0..t_dim {
            if v[g * t_dim + h].norm() <= tol {
                continue;
            }
            if h != t_unit {
                in_s = false;
            }
            if g != s_unit {
                in_t = false;
            }
        }
    }
    match (in_s, in_t) {
        (true, true) => 0,
        (true, false) => 1,
        (false, true) => 2,
        _ => INADMISSIBLE,
    }
}

/// Factor base norm for the commuting product: the realized norm when S or T
/// is a full matrix algebra (there the min and commuting norms agree), else
/// ‖X_S‖ + ‖X_T‖ over the split into S ⊗ e and e ⊗ T parts.
pub fn commuting_base_norm(
    x: &MatrixElement,
    s: &ConcreteOperatorSpace,
    t: &ConcreteOperatorSpace,
    st: &ConcreteOperatorSpace,
) -> f64 {
    if s.is_full_matrix_algebra() || t.is_full_matrix_algebra() {
        return st.matrix_norm(x);
    }
    let (su, tu) = (s.unit_index().unwrap_or(0), t.unit_index().unwrap_or(0));
    let (sd, td) = (s.dim(), t.dim());
    let mut xs = MatrixElement::zeros(x.rows(), x.cols(), sd);
    let mut xt = MatrixElement::zeros(x.rows(), x.cols(), td);
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let v = x.entry(i, j);
            match commuting_entry_class(v, sd, td, su, tu) {
                0 | 1 => {
                    for g in 0..sd {
                        xs.set(i, j, g, v[g * td + tu]);
                    }
                }
                2 => {
                    for h in 0..td {
                        xt.set(i, j, h, v[su * td + h]);
                    }
                }
                _ => return f64::INFINITY,
            }
        }
    }
    s.matrix_norm(&xs) + t.matrix_norm(&xt)
}

/// Commuting tensor norm interval for z over S ⊗ T. Factors must have every
/// entry in S ⊗ e or e ⊗ T.
pub fn commuting_norm(
    z: &MatrixElement,
    s: &ConcreteOperatorSpace,
    t: &ConcreteOperatorSpace,
    opts: &FactOptions,
) -> Result<NormInterval> {
    if !s.is_system() || !t.is_system() {
        return Err(Error::Precondition("commuting norm needs operator systems".into()));
    }
    let m = products::commuting_product(s, t)?;
    let st = s.tensor(t);
    let (sd, td) = (s.dim(), t.dim());
    let (su, tu) = (s.unit_index().unwrap_or(0), t.unit_index().unwrap_or(0));
    let base = |x: &MatrixElement| commuting_base_norm(x, s, t, &st);
    let class = move |v: &[C64]| commuting_entry_class(v, sd, td, su, tu);
    let problem = FactProblem::new(&m, &base).with_entry_class(&class);
    let w = problem.fact_norm_upper(z, opts)?;
    let min = st.matrix_norm(z);
    // sampled product compressions never exceed the min norm; kept as an independent check
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let zr = st.realize(z);
    let mut sampled = 0.0f64;
    for _ in 0..opts.restarts {
        let ds = rng.gen_range(1..=s.ambient_dim());
        let dt = rng.gen_range(1..=t.ambient_dim());
        let vs = isometry(&mut rng, s.ambient_dim(), ds);
        let vt = isometry(&mut rng, t.ambient_dim(), dt);
        let v = linalg::kron(&linalg::identity(z.cols()), &linalg::kron(&vs, &vt));
        let u = linalg::kron(&linalg::identity(z.rows()), &linalg::kron(&vs, &vt));
        sampled = sampled.max(linalg::norm2(&(u.adjoint() * &zr * v)));
    }
    let (lower, desc) = if sampled > min {
        (sampled, "sampled product compression".to_string())
    } else {
        (min, "min tensor norm".to_string())
    };
    Ok(NormInterval { lower, upper: w.value, upper_witness: w, lower_witness: desc })
}

fn isometry<R: Rng + ?Sized>(rng: &mut R, d: usize, k: usize) -> ComplexMatrix {
    let u = linalg::random_unitary(rng, d);
    u.columns(0, k).into_owned()
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RepOptions {
    pub restarts: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for RepOptions {
    fn default() -> Self {
        RepOptions { restarts: 4, iters: 200, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RepLowerBound {
    /// ‖π(A)‖ of the best feasible representation, 0 when none was found
    pub value: f64,
    pub feasible: bool,
    pub relation_residual: f64,
    /// largest sampled ‖π(X)‖ / ‖X‖ - 1
    pub contractivity_excess: f64,
    #[serde(skip)]
    pub images: Vec<ComplexMatrix>,
}

/// Lower bound from a unital map π: V → M_d that is multiplicative on the
/// domain of the product, found by penalized ascent on ‖π(A)‖. A map is
/// feasible when its relation residual is at most 1e-6. Contractivity is
/// penalized on a fixed sample of test elements, and the reported value is
/// divided by the worst sampled ratio. `starts` are optional initial images
/// (one matrix per basis vector).
pub fn rep_lower_bound(
    a: &MatrixElement,
    m: &PartialProduct,
    base_norm: &dyn Fn(&MatrixElement) -> f64,
    d: usize,
    opts: &RepOptions,
    starts: &[Vec<ComplexMatrix>],
) -> Result<RepLowerBound> {
    if d == 0 {
        return Err(Error::Precondition("representation dimension must be at least 1".into()));
    }
    let dim = m.dim();
    if a.dim() != dim {
        return Err(Error::Input("element dimension does not match the product".into()));
    }
    let unit = m.unit();
    let free: Vec<usize> = (0..dim).filter(|&g| g != unit).collect();
    let np = 2 * d * d * free.len();
    let images = |p: &[f64]| -> Vec<ComplexMatrix> {
        let mut out = vec![ComplexMatrix::zeros(d, d); dim];
        out[unit] = linalg::identity(d);
        for (slot, &g) in free.iter().enumerate() {
            out[g] = ComplexMatrix::from_fn(d, d, |i, j| {
                let o = 2 * (slot * d * d + i * d + j);
                c(p[o], p[o + 1])
            });
        }
        out
    };
    let pairs: Vec<(usize, usize, Vec<C64>)> = (0..dim)
        .flat_map(|g| (0..dim).map(move |h| (g, h)))
        .filter(|&(g, h)| g != unit && h != unit)
        .filter_map(|(g, h)| m.basis_product(g, h).map(|v| (g, h, v.clone())))
        .collect();
    let residual = |imgs: &[ComplexMatrix]| -> f64 {
        pairs
            .iter()
            .map(|(g, h, v)| {
                let mut lhs = ComplexMatrix::zeros(d, d);
                for (k, z) in v.iter().enumerate() {
                    if *z != c(0.0, 0.0) {
                        lhs += &imgs[k] * *z;
                    }
                }
                (lhs - &imgs[*g] * &imgs[*h]).norm_squared()
            })
            .sum()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut tests: Vec<(MatrixElement, f64)> = Vec::new();
    for &g in &free {
        let mut v = vec![c(0.0, 0.0); dim];
        v[g] = c(1.0, 0.0);
        let x = MatrixElement::from_vector(&v);
        let n = base_norm(&x);
        if n > 0.0 {
            tests.push((x, n));
        }
    }
    for _ in 0..4 * opts.restarts.max(1) {
        let x = MatrixElement::from_fn(2, 2, dim, |_, _, _| linalg::random_complex(&mut rng));
        let n = base_norm(&x);
        if n > 0.0 {
            tests.push((x, n));
        }
    }
    let excess = |imgs: &[ComplexMatrix]| -> f64 {
        tests
            .iter()
            .map(|(x, n)| realize_with(x, imgs).map(|r| linalg::norm2(&r) / n - 1.0).unwrap_or(0.0))
            .fold(0.0f64, f64::max)
    };
    let soft_excess = |imgs: &[ComplexMatrix]| -> f64 {
        tests
            .iter()
            .map(|(x, n)| {
                let e = realize_with(x, imgs).map(|r| linalg::norm2(&r) / n - 1.0).unwrap_or(0.0);
                e.max(0.0).powi(2)
            })
            .sum()
    };
    let scale = base_norm(a).max(1e-300);
    let value_of = |imgs: &[ComplexMatrix]| realize_with(a, imgs).map(|r| linalg::norm2(&r)).unwrap_or(0.0);

    let mut inits: Vec<Vec<f64>> = Vec::new();
    for s in starts {
        if s.len() != dim || s.iter().any(|x| x.nrows() != d || x.ncols() != d) {
            return Err(Error::Input("start images have the wrong shape".into()));
        }
        let mut p = vec![0.0; np];
        for (slot, &g) in free.iter().enumerate() {
            for i in 0..d {
                for j in 0..d {
                    let o = 2 * (slot * d * d + i * d + j);
                    p[o] = s[g][(i, j)].re;
                    p[o + 1] = s[g][(i, j)].im;
                }
            }
        }
        inits.push(p);
    }
    for _ in 0..opts.restarts {
        let sc = 1.0 / (d as f64).sqrt();
        inits.push((0..np).map(|_| rng.gen_range(-1.0..1.0) * sc).collect());
    }

    let mut best: Option<RepLowerBound> = None;
    let consider = |p: &[f64], best: &mut Option<RepLowerBound>| {
        let imgs = images(p);
        let res = residual(&imgs);
        let exc = excess(&imgs);
        if res > 1e-6 {
            return;
        }
        // dividing by the sampled ratio keeps the reported value conservative
        let v = value_of(&imgs) / (1.0 + exc.max(0.0));
        if best.as_ref().map_or(true, |b| v > b.value) {
            *best = Some(RepLowerBound {
                value: v,
                feasible: true,
                relation_residual: res,
                contractivity_excess: exc,
                images: imgs,
            });
        }
    };
    for p0 in &inits {
        consider(p0, &mut best);
        let mut p = p0.clone();
        for lambda in [1e1, 1e3, 1e5] {
            let obj = |q: &[f64]| {
                let imgs = images(q);
                -value_of(&imgs) / scale + lambda * (residual(&imgs) + soft_excess(&imgs))
            };
            p = optim::minimize_vector(&p, &obj, (opts.iters / 3).max(1)).0;
        }
        consider(&p, &mut best);
    }
    Ok(best.unwrap_or(RepLowerBound {
        value: 0.0,
        feasible: false,
        relation_residual: f64::INFINITY,
        contractivity_excess: f64::INFINITY,
        images: Vec::new(),
    }))
}
