//! Finitely presented groups with relations a_i^x a_j^y = a_k^z: parsing,
//! coset enumeration, exact group C*-norms through the regular representation
//! (finite groups are amenable) and the group factorization norm.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factnorm::{FactOptions, FactProblem, NormInterval};
use crate::linalg::{self, c, ComplexMatrix, C64};
use crate::optim;
use crate::products::{BlockSpec, PartialProduct};
use crate::spaces::{ConcreteOperatorSpace, MatrixElement};

pub const DEFAULT_MAX_COSETS: usize = 10_000;

/// a_gen^exp, with exp = 0 standing for the identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Symbol {
    pub gen: usize,
    pub exp: i8,
}

impl Symbol {
    pub const E: Symbol = Symbol { gen: 0, exp: 0 };

    /// Index among the 2n+1 span symbols e, a_1..a_n, a_1⁻¹..a_n⁻¹.
    pub fn index(&self, n: usize) -> usize {
        match self.exp {
            0 => 0,
            1 => 1 + self.gen,
            _ => 1 + n + self.gen,
        }
    }

    pub fn from_index(i: usize, n: usize) -> Symbol {
        if i == 0 {
            Symbol::E
        } else if i <= n {
            Symbol { gen: i - 1, exp: 1 }
        } else {
            Symbol { gen: i - 1 - n, exp: -1 }
        }
    }

    pub fn label(&self) -> String {
        match self.exp {
            0 => "e".into(),
            1 => format!("a{}", self.gen + 1),
            _ => format!("a{}^-1", self.gen + 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupPresentation {
    pub generators: usize,
    /// x y = z
    pub relations: Vec<(Symbol, Symbol, Symbol)>,
}

fn parse_symbol(tok: &str, n: usize, line: usize) -> Result<Symbol> {
    if tok == "e" {
        return Ok(Symbol::E);
    }
    let body = tok
        .strip_prefix('a')
        .ok_or_else(|| Error::Input(format!("line {line}: bad symbol '{tok}'")))?;
    let (idx, exp) = match body.split_once('^') {
        None => (body, 1i8),
        Some((i, e)) => {
            let e: i64 = e.parse().map_err(|_| Error::Input(format!("line {line}: bad exponent in '{tok}'")))?;
            if !(-1..=1).contains(&e) {
                return Err(Error::Input(format!("line {line}: exponent {e} outside {{-1, 0, 1}} in '{tok}'")));
            }
            (i, e as i8)
        }
    };
    let i: usize = idx.parse().map_err(|_| Error::Input(format!("line {line}: bad generator index in '{tok}'")))?;
    if i == 0 || i > n {
        return Err(Error::Input(format!("line {line}: generator a{i} out of range 1..{n}")));
    }
    if exp == 0 {
        return Ok(Symbol::E);
    }
    Ok(Symbol { gen: i - 1, exp })
}

/// Parses `gens <n>` followed by `rel <sym> <sym> = <sym>` statements,
/// separated by newlines or `;`. `#` starts a comment.
pub fn parse_presentation(text: &str) -> Result<GroupPresentation> {
    let mut n: Option<usize> = None;
    let mut relations = Vec::new();
    let stmts = text
        .lines()
        .enumerate()
        .flat_map(|(ln, l)| l.split('#').next().unwrap_or("").split(';').map(move |s| (ln + 1, s.trim())).collect::<Vec<_>>());
    for (line, st) in stmts {
        if st.is_empty() {
            continue;
        }
        let toks: Vec<&str> = st.split_whitespace().collect();
        match toks[0] {
            "gens" => {
                if toks.len() != 2 || n.is_some() {
                    return Err(Error::Input(format!("line {line}: expected a single 'gens <n>'")));
                }
                let v: usize = toks[1].parse().map_err(|_| Error::Input(format!("line {line}: bad generator count")))?;
                if v == 0 {
                    return Err(Error::Input(format!("line {line}: need at least one generator")));
                }
                n = Some(v);
            }
            "rel" => {
                let n = n.ok_or_else(|| Error::Input(format!("line {line}: 'rel' before 'gens'")))?;
                let eq = toks.iter().position(|t| *t == "=").ok_or_else(|| Error::Input(format!("line {line}: missing '='")))?;
                let lhs = &toks[1..eq];
                let rhs = &toks[eq + 1..];
                if lhs.len() != 2 || rhs.len() != 1 {
                    return Err(Error::Input(format!(
                        "line {line}: relations must read '<sym> <sym> = <sym>' (introduce generators for longer words)"
                    )));
                }
                relations.push((parse_symbol(lhs[0], n, line)?, parse_symbol(lhs[1], n, line)?, parse_symbol(rhs[0], n, line)?));
            }
            other => return Err(Error::Input(format!("line {line}: unknown statement '{other}'"))),
        }
    }
    let generators = n.ok_or_else(|| Error::Input("missing 'gens <n>'".into()))?;
    Ok(GroupPresentation { generators, relations })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FiniteGroupTable {
    pub order: usize,
    /// mult[g][h] = g h; element 0 is the identity
    pub mult: Vec<Vec<usize>>,
    pub inverse: Vec<usize>,
    pub generators: Vec<usize>,
}

impl FiniteGroupTable {
    pub fn symbol_element(&self, s: Symbol) -> usize {
        match s.exp {
            0 => 0,
            1 => self.generators[s.gen],
            _ => self.inverse[self.generators[s.gen]],
        }
    }

    /// Left regular representation λ(g) e_h = e_{gh}.
    pub fn regular_matrix(&self, g: usize) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(self.order, self.order);
        for h in 0..self.order {
            m[(self.mult[g][h], h)] = c(1.0, 0.0);
        }
        m
    }

    pub fn is_abelian(&self) -> bool {
        (0..self.order).all(|g| (0..self.order).all(|h| self.mult[g][h] == self.mult[h][g]))
    }

    fn validate(&self, seed: u64) -> Result<()> {
        let n = self.order;
        for g in 0..n {
            let mut row = vec![false; n];
            let mut col = vec![false; n];
            for h in 0..n {
                row[self.mult[g][h]] = true;
                col[self.mult[h][g]] = true;
            }
            if row.iter().chain(col.iter()).any(|x| !x) {
                return Err(Error::Input("multiplication table is not a Latin square".into()));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..(4 * n).max(64) {
            let (a, b, d) = (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n));
            if self.mult[self.mult[a][b]][d] != self.mult[a][self.mult[b][d]] {
                return Err(Error::Input(format!("associativity fails on ({a}, {b}, {d})")));
            }
        }
        Ok(())
    }
}

const UNDEF: usize = usize::MAX;

/// Haselgrove–Leech–Trotter (HLT) coset enumeration over the trivial subgroup.
struct Enumerator {
    cols: usize,
    table: Vec<Vec<usize>>,
    parent: Vec<usize>,
    live: usize,
}

impl Enumerator {
    fn inv(x: usize) -> usize {
        x ^ 1
    }

    fn rep(&mut self, mut c: usize) -> usize {
        let mut root = c;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[c] != root {
            let next = self.parent[c];
            self.parent[c] = root;
            c = next;
        }
        root
    }

    fn define(&mut self, c: usize, x: usize) -> usize {
        let d = self.table.len();
        self.table.push(vec![UNDEF; self.cols]);
        self.parent.push(d);
        self.live += 1;
        self.table[c][x] = d;
        self.table[d][Self::inv(x)] = c;
        d
    }

    fn merge(&mut self, k: usize, l: usize, queue: &mut VecDeque<usize>) {
        let (k, l) = (self.rep(k), self.rep(l));
        if k == l {
            return;
        }
        let (k, l) = (k.min(l), k.max(l));
        self.parent[l] = k;
        self.live -= 1;
        queue.push_back(l);
    }

    fn coincidence(&mut self, a: usize, b: usize) {
        let mut queue = VecDeque::new();
        self.merge(a, b, &mut queue);
        while let Some(e) = queue.pop_front() {
            for x in 0..self.cols {
                let f = self.table[e][x];
                if f == UNDEF {
                    continue;
                }
                self.table[f][Self::inv(x)] = UNDEF;
                let e1 = self.rep(e);
                let f1 = self.rep(f);
                if self.table[e1][x] != UNDEF {
                    let t = self.table[e1][x];
                    self.merge(f1, t, &mut queue);
                } else if self.table[f1][Self::inv(x)] != UNDEF {
                    let t = self.table[f1][Self::inv(x)];
                    self.merge(e1, t, &mut queue);
                } else {
                    self.table[e1][x] = f1;
                    self.table[f1][Self::inv(x)] = e1;
                }
            }
        }
    }

    /// Scans relator `w` at coset `c`, defining cosets when `fill` is set.
    fn scan(&mut self, c: usize, w: &[usize], fill: bool) {
        if w.is_empty() {
            return;
        }
        let (mut f, mut b) = (c, c);
        let mut i = 0usize;
        let mut j = w.len() as isize - 1;
        loop {
            while (i as isize) <= j && self.table[f][w[i]] != UNDEF {
                f = self.table[f][w[i]];
                i += 1;
            }
            if (i as isize) > j {
                if f != b {
                    self.coincidence(f, b);
                }
                return;
            }
            while j >= i as isize && self.table[b][Self::inv(w[j as usize])] != UNDEF {
                b = self.table[b][Self::inv(w[j as usize])];
                j -= 1;
            }
            if j < i as isize {
                self.coincidence(f, b);
                return;
            }
            if j == i as isize {
                self.table[f][w[i]] = b;
                self.table[b][Self::inv(w[i])] = f;
                return;
            }
            if !fill {
                return;
            }
            self.define(f, w[i]);
        }
    }
}

/// Enumerates the cosets of the trivial subgroup. Fails with
/// [`Error::EnumerationExceeded`] when more than `max_cosets` live cosets are
/// needed after a lookahead pass.
pub fn enumerate_group(p: &GroupPresentation, max_cosets: usize) -> Result<FiniteGroupTable> {
    if max_cosets == 0 {
        return Err(Error::Precondition("max_cosets must be at least 1".into()));
    }
    let n = p.generators;
    let col = |s: Symbol, inverse: bool| -> Option<usize> {
        if s.exp == 0 {
            return None;
        }
        let neg = (s.exp < 0) ^ inverse;
        Some(2 * s.gen + usize::from(neg))
    };
    let relators: Vec<Vec<usize>> = p
        .relations
        .iter()
        .map(|(x, y, z)| [col(*x, false), col(*y, false), col(*z, true)].into_iter().flatten().collect())
        .filter(|w: &Vec<usize>| !w.is_empty())
        .collect();
    let mut en = Enumerator { cols: 2 * n, table: vec![vec![UNDEF; 2 * n]], parent: vec![0], live: 1 };
    let mut cur = 0;
    while cur < en.table.len() {
        if en.parent[cur] == cur {
            for r in &relators {
                en.scan(cur, r, true);
                if en.parent[cur] != cur {
                    break;
                }
            }
            if en.parent[cur] == cur {
                for x in 0..2 * n {
                    if en.table[cur][x] == UNDEF {
                        en.define(cur, x);
                    }
                }
            }
        }
        if en.live > max_cosets {
            // lookahead: deductions only
            for c0 in 0..en.table.len() {
                for r in &relators {
                    if en.parent[c0] == c0 {
                        en.scan(c0, r, false);
                    }
                }
            }
            if en.live > max_cosets {
                return Err(Error::EnumerationExceeded(max_cosets));
            }
        }
        cur += 1;
    }
    // compact the live cosets
    let mut index = HashMap::new();
    let mut order = Vec::new();
    for c0 in 0..en.table.len() {
        if en.parent[c0] == c0 {
            index.insert(c0, order.len());
            order.push(c0);
        }
    }
    let g = order.len();
    let mut act = vec![vec![0usize; 2 * n]; g];
    for (i, &c0) in order.iter().enumerate() {
        for x in 0..2 * n {
            let t = en.table[c0][x];
            if t == UNDEF {
                return Err(Error::Input("coset table did not close".into()));
            }
            let t = en.rep(t);
            act[i][x] = index[&t];
        }
    }
    // words for each coset by breadth-first search from the subgroup coset
    let mut word: Vec<Option<Vec<usize>>> = vec![None; g];
    word[0] = Some(Vec::new());
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for x in 0..2 * n {
            let v = act[u][x];
            if word[v].is_none() {
                let mut w = word[u].clone().unwrap_or_default();
                w.push(x);
                word[v] = Some(w);
                queue.push_back(v);
            }
        }
    }
    let word: Vec<Vec<usize>> = word.into_iter().map(|w| w.unwrap_or_default()).collect();
    let apply = |start: usize, w: &[usize]| w.iter().fold(start, |s, &x| act[s][x]);
    let mult: Vec<Vec<usize>> = (0..g).map(|a| (0..g).map(|b| apply(a, &word[b])).collect()).collect();
    let inverse: Vec<usize> = (0..g).map(|a| (0..g).find(|&b| mult[a][b] == 0).unwrap_or(0)).collect();
    let generators: Vec<usize> = (0..n).map(|i| act[0][2 * i]).collect();
    let t = FiniteGroupTable { order: g, mult, inverse, generators };
    t.validate(g as u64)?;
    Ok(t)
}

/// Parses a symbol-span element such as `e + 2*a1 - 0.5*a2^-1 + 1i*a1`.
pub fn parse_span_element(text: &str, n: usize) -> Result<Vec<C64>> {
    let mut out = vec![c(0.0, 0.0); 2 * n + 1];
    let s: String = text.chars().filter(|ch| !ch.is_whitespace()).collect();
    if s.is_empty() {
        return Err(Error::Input("empty element".into()));
    }
    let mut terms = Vec::new();
    let mut start = 0;
    let bytes = s.as_bytes();
    for i in 1..bytes.len() {
        if bytes[i] != b'+' && bytes[i] != b'-' {
            continue;
        }
        let prev = bytes[i - 1];
        // a sign after '^' is an exponent, after a digit followed by 'e' a float exponent
        let float_exp = (prev == b'e' || prev == b'E') && i >= 2 && (bytes[i - 2].is_ascii_digit() || bytes[i - 2] == b'.');
        if prev != b'^' && !float_exp {
            terms.push(&s[start..i]);
            start = i;
        }
    }
    terms.push(&s[start..]);
    for t in terms {
        let (sign, body) = match t.strip_prefix('-') {
            Some(b) => (-1.0, b),
            None => (1.0, t.strip_prefix('+').unwrap_or(t)),
        };
        let (coef, sym) = match body.rsplit_once('*') {
            Some((cf, sy)) => (parse_coefficient(cf)?, sy),
            None => (c(1.0, 0.0), body),
        };
        let sym = parse_symbol(sym, n, 1)?;
        out[sym.index(n)] += coef * sign;
    }
    Ok(out)
}

fn parse_coefficient(t: &str) -> Result<C64> {
    let bad = || Error::Input(format!("bad coefficient '{t}'"));
    if let Some(im) = t.strip_suffix('i') {
        let v: f64 = if im.is_empty() { 1.0 } else { im.parse().map_err(|_| bad())? };
        return Ok(c(0.0, v));
    }
    Ok(c(t.parse().map_err(|_| bad())?, 0.0))
}

/// Exact C*(G) norm of a matrix over the symbol span, through the left
/// regular representation.
pub fn regular_rep_norm(x: &MatrixElement, g: &FiniteGroupTable, generators: usize) -> Result<f64> {
    if x.dim() != 2 * generators + 1 {
        return Err(Error::Input(format!("expected {} symbol coefficients, got {}", 2 * generators + 1, x.dim())));
    }
    let images: Vec<ComplexMatrix> =
        (0..x.dim()).map(|s| g.regular_matrix(g.symbol_element(Symbol::from_index(s, generators)))).collect();
    let r = crate::factnorm::realize_with(x, &images).expect("nonempty symbol list");
    Ok(linalg::norm2(&r))
}

/// A presented finite group with its symbol space S = span{λ(g) : g a symbol}
/// and the partial product of multiplications that stay inside S.
pub struct GroupSystem {
    pub presentation: GroupPresentation,
    pub table: FiniteGroupTable,
    /// distinct group elements among the symbols, identity first
    pub elements: Vec<usize>,
    /// symbol index -> position in `elements`
    pub symbol_to_element: Vec<usize>,
    pub space: ConcreteOperatorSpace,
    pub product: PartialProduct,
    /// verified regular-representation covers (T_1, ..., T_r) as positions in `elements`
    pub covers: Vec<Vec<Vec<usize>>>,
}

/// Iterations of the weight descent inside the decomposable bound.
const DECOMPOSABLE_ITERS: usize = 12;

impl GroupSystem {
    pub fn new(p: &GroupPresentation) -> Result<Self> {
        Self::with_max_cosets(p, DEFAULT_MAX_COSETS)
    }

    pub fn with_max_cosets(p: &GroupPresentation, max_cosets: usize) -> Result<Self> {
        let table = enumerate_group(p, max_cosets)?;
        let n = p.generators;
        let mut elements: Vec<usize> = Vec::new();
        let mut symbol_to_element = Vec::new();
        for s in 0..2 * n + 1 {
            let g = table.symbol_element(Symbol::from_index(s, n));
            let pos = match elements.iter().position(|&x| x == g) {
                Some(p) => p,
                None => {
                    elements.push(g);
                    elements.len() - 1
                }
            };
            symbol_to_element.push(pos);
        }
        let basis: Vec<ComplexMatrix> = elements.iter().map(|&g| table.regular_matrix(g)).collect();
        let space = ConcreteOperatorSpace::new(table.order, basis, Some(0), true)?;
        let k = elements.len();
        let delta = |i: usize| {
            let mut v = vec![c(0.0, 0.0); k];
            v[i] = c(1.0, 0.0);
            v
        };
        let mut specs = Vec::new();
        for a in 1..k {
            let right: Vec<usize> =
                (1..k).filter(|&b| elements.contains(&table.mult[elements[a]][elements[b]])).collect();
            if right.is_empty() {
                continue;
            }
            let table_row: Vec<Vec<C64>> = right
                .iter()
                .map(|&b| {
                    let prod = table.mult[elements[a]][elements[b]];
                    delta(elements.iter().position(|&x| x == prod).expect("checked"))
                })
                .collect();
            specs.push(BlockSpec {
                left: vec![delta(a)],
                right: right.iter().map(|&b| delta(b)).collect(),
                table: vec![table_row],
            });
        }
        let labels: Vec<String> = (0..k)
            .map(|i| {
                let s = symbol_to_element.iter().position(|&e| e == i).expect("every element has a symbol");
                Symbol::from_index(s, n).label()
            })
            .collect();
        let product = PartialProduct::new("group", k, 0, labels, specs, None)?;
        let mut sys = GroupSystem {
            presentation: p.clone(),
            table,
            elements,
            symbol_to_element,
            space,
            product,
            covers: Vec::new(),
        };
        sys.covers = sys.find_covers();
        Ok(sys)
    }

    pub fn symbols(&self) -> usize {
        2 * self.presentation.generators + 1
    }

    /// Symbol coefficients -> element coefficients (merging coinciding symbols).
    pub fn to_elements(&self, x: &MatrixElement) -> Result<MatrixElement> {
        if x.dim() != self.symbols() {
            return Err(Error::Input(format!("expected {} symbol coefficients, got {}", self.symbols(), x.dim())));
        }
        let k = self.elements.len();
        let mut out = MatrixElement::zeros(x.rows(), x.cols(), k);
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                for s in 0..x.dim() {
                    let e = self.symbol_to_element[s];
                    let v = out.get(i, j, e) + x.get(i, j, s);
                    out.set(i, j, e, v);
                }
            }
        }
        Ok(out)
    }

    pub fn regular_rep_norm(&self, x: &MatrixElement) -> Result<f64> {
        regular_rep_norm(x, &self.table, self.presentation.generators)
    }

    /// Σ_g ‖C_g‖ minimized over the coset of the symbol relations, in closed
    /// form: the minimum merges the coefficients of coinciding symbols.
    pub fn intermediate_norm_upper(&self, x: &MatrixElement) -> Result<f64> {
        Ok(ell1_norm(&self.to_elements(x)?))
    }

    /// Base norm of factors over the element space: the smaller of the merged
    /// ℓ¹ bound and the decomposable bound.
    pub fn base_norm(&self, x: &MatrixElement) -> f64 {
        ell1_norm(x).min(decomposable_norm(x, DECOMPOSABLE_ITERS))
    }

    /// Uniform product covers of G by element subsets, verified on a generic
    /// element to give permissible regular-representation factorizations.
    fn find_covers(&self) -> Vec<Vec<Vec<usize>>> {
        let k = self.elements.len();
        let order = self.table.order;
        let mut out: Vec<Vec<Vec<usize>>> = Vec::new();
        let subsets: Vec<Vec<usize>> = (1u32..(1u32 << k)).map(|m| (0..k).filter(|i| m >> i & 1 == 1).collect()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let generic = MatrixElement::from_fn(1, 1, k, |_, _, _| linalg::random_complex(&mut rng));
        let base = |x: &MatrixElement| self.base_norm(x);
        let problem = FactProblem::new(&self.product, &base);
        let try_cover = |cover: Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>| {
            if let Some(f) = self.cover_factors(&generic, &cover) {
                if problem.witness(f, &generic).is_some() {
                    out.push(cover);
                }
            }
        };
        for t in &subsets {
            if self.cover_multiplicity(&[t.clone()]).is_some() {
                try_cover(vec![t.clone()], &mut out);
                if out.len() >= 2 {
                    return out;
                }
            }
        }
        for t1 in &subsets {
            for t2 in &subsets {
                if t1.len() * t2.len() != order || t1.len() == 1 || t2.len() == 1 {
                    continue;
                }
                let cover = vec![t1.clone(), t2.clone()];
                if self.cover_multiplicity(&cover).is_some() {
                    try_cover(cover, &mut out);
                    if out.len() >= 2 {
                        return out;
                    }
                }
            }
        }
        out
    }

    fn words(&self, cover: &[Vec<usize>]) -> Vec<usize> {
        let mut words = vec![0usize];
        for t in cover {
            words = words
                .iter()
                .flat_map(|&w| t.iter().map(move |&x| (w, x)))
                .map(|(w, x)| self.table.mult[w][self.elements[x]])
                .collect();
        }
        words
    }

    /// The constant number of pairs (i, j) with w_i w_j⁻¹ = g, if uniform over G.
    fn cover_multiplicity(&self, cover: &[Vec<usize>]) -> Option<usize> {
        let w = self.words(cover);
        let mut count = vec![0usize; self.table.order];
        for &a in &w {
            for &b in &w {
                count[self.table.mult[a][self.table.inverse[b]]] += 1;
            }
        }
        let k0 = count[0];
        (k0 > 0 && count.iter().all(|&x| x == k0)).then_some(k0)
    }

    /// R_1 ⊙ … ⊙ R_r ⊙ M ⊙ R_r' ⊙ … ⊙ R_1' where R_l = I ⊗ [T_l]/√|T_l|,
    /// R_l' = I ⊗ [T_l⁻¹]ᵀ/√|T_l| and M_ij = (K/k) C(w_i w_j⁻¹). Its value is the
    /// regular-representation norm.
    pub fn cover_factors(&self, a: &MatrixElement, cover: &[Vec<usize>]) -> Option<Vec<MatrixElement>> {
        let k = self.elements.len();
        if a.dim() != k {
            return None;
        }
        let mult = self.cover_multiplicity(cover)?;
        let words = self.words(cover);
        let kk = words.len();
        let (n, m) = a.shape();
        let pos = |g: usize| self.elements.iter().position(|&x| x == g);
        let mut lefts = Vec::new();
        let mut rights = Vec::new();
        let mut width = 1usize;
        for t in cover {
            let s = c(1.0 / (t.len() as f64).sqrt(), 0.0);
            let nt = t.len();
            // rows of I_{n·width} ⊗ [t_1 … t_nt]
            lefts.push(MatrixElement::from_fn(n * width, n * width * nt, k, |i, j, g| {
                if j / nt == i && t[j % nt] == g {
                    s
                } else {
                    c(0.0, 0.0)
                }
            }));
            let inv: Vec<usize> = t.iter().map(|&x| pos(self.table.inverse[self.elements[x]])).collect::<Option<_>>()?;
            rights.push(MatrixElement::from_fn(m * width * nt, m * width, k, |i, j, g| {
                if i / nt == j && inv[i % nt] == g {
                    s
                } else {
                    c(0.0, 0.0)
                }
            }));
            width *= nt;
        }
        // index of the word for a flattened (t_1, …, t_r) multi-index: row-major, matching the Kronecker layout
        let scale = kk as f64 / mult as f64;
        let mut mid = MatrixElement::zeros(n * kk, m * kk, k);
        for x in 0..n {
            for i in 0..kk {
                for z in 0..m {
                    for j in 0..kk {
                        let g = self.table.mult[words[i]][self.table.inverse[words[j]]];
                        if let Some(p) = pos(g) {
                            let v = a.get(x, z, p) * scale;
                            mid.set(x * kk + i, z * kk + j, 0, v);
                        }
                    }
                }
            }
        }
        let mut out = lefts;
        out.push(mid);
        out.extend(rights.into_iter().rev());
        Some(out)
    }

    /// Group factorization norm interval of a matrix over the symbol span.
    pub fn fact_norm(&self, x: &MatrixElement, opts: &FactOptions) -> Result<NormInterval> {
        let mut all = self.fact_norm_by_length(x, opts)?;
        Ok(all.pop().expect("max_len ≥ 1"))
    }

    /// Intervals for L = 1..=max_len from a single engine run.
    pub fn fact_norm_by_length(&self, x: &MatrixElement, opts: &FactOptions) -> Result<Vec<NormInterval>> {
        let lower = self.regular_rep_norm(x)?;
        let a = self.to_elements(x)?;
        let base = |y: &MatrixElement| self.base_norm(y);
        // the cover seeds carry the exact value; recursive generic splits of
        // length ≥ 3 grow combinatorially on group products without improving it
        let problem = FactProblem::new(&self.product, &base).with_split_depth(2);
        let extra: Vec<Vec<MatrixElement>> = self.covers.iter().filter_map(|cv| self.cover_factors(&a, cv)).collect();
        let mut o = *opts;
        // seeds are exact; continuous refinement of these base norms is not worth its cost
        o.iters = 0;
        let ws = problem.upper_by_length(&a, &o, &extra)?;
        Ok(ws
            .into_iter()
            .map(|w| NormInterval {
                lower,
                // the witness value can only undercut the exact norm by rounding
                upper: w.value.max(lower),
                upper_witness: w,
                lower_witness: "left regular representation".into(),
            })
            .collect())
    }
}

/// Σ_g ‖C_g‖ over the coefficient matrices.
pub fn ell1_norm(x: &MatrixElement) -> f64 {
    x.coefficient_matrices().iter().map(linalg::norm2).sum()
}

/// inf ‖Σ X_g X_g*‖^{1/2} ‖Σ Y_g* Y_g‖^{1/2} over splits C_g = X_g Y_g drawn
/// from the polar decompositions with positive weights; an upper bound for the
/// maximal operator space norm over an ℓ¹ basis.
pub fn decomposable_norm(x: &MatrixElement, iters: usize) -> f64 {
    let mats: Vec<ComplexMatrix> = x.coefficient_matrices().into_iter().filter(|m| linalg::max_abs(m) > 0.0).collect();
    if mats.is_empty() {
        return 0.0;
    }
    // |C*| and |C| via the SVD
    let parts: Vec<(ComplexMatrix, ComplexMatrix)> = mats
        .iter()
        .map(|m| {
            let (u, s, vt) = linalg::truncated_svd(m, 1e-14);
            let sd = ComplexMatrix::from_diagonal(&linalg::ComplexVector::from_iterator(s.len(), s.iter().map(|v| c(*v, 0.0))));
            (&u * &sd * u.adjoint(), vt.adjoint() * &sd * &vt)
        })
        .collect();
    let f = |w: &[f64]| -> f64 {
        let mut p = ComplexMatrix::zeros(x.rows(), x.rows());
        let mut q = ComplexMatrix::zeros(x.cols(), x.cols());
        for ((pl, pr), u) in parts.iter().zip(w) {
            p += pl * c(u.exp(), 0.0);
            q += pr * c((-u).exp(), 0.0);
        }
        (linalg::norm2(&p) * linalg::norm2(&q)).sqrt()
    };
    let w0 = vec![0.0; parts.len()];
    if parts.len() == 1 || iters == 0 {
        return f(&w0);
    }
    optim::minimize_vector(&w0, &f, iters).1
}

/// Group factorization norm of `x` (symbol coefficients) for presentation `p`.
pub fn group_fact_norm(x: &MatrixElement, p: &GroupPresentation, opts: &FactOptions) -> Result<NormInterval> {
    GroupSystem::new(p)?.fact_norm(x, opts)
}

/// Standard presentations used by the tests and examples.
pub mod presets {
    pub const Z2: &str = "gens 1\nrel a1 a1 = e\n";
    pub const Z3: &str = "gens 1\nrel a1 a1 = a1^-1\n";
    pub const Z4: &str = "gens 2\nrel a1 a1 = a2\nrel a2 a2 = e\n";
    /// a1, a2 involutions, a3 = a1 a2 of order 3
    pub const S3: &str = "gens 3\nrel a1 a1 = e\nrel a2 a2 = e\nrel a1 a2 = a3\nrel a3 a3 = a3^-1\n";
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(coeffs: &[f64]) -> MatrixElement {
        MatrixElement::from_vector(&coeffs.iter().map(|v| c(*v, 0.0)).collect::<Vec<_>>())
    }

    #[test]
    fn parses_and_rejects() {
        let p = parse_presentation("gens 1; rel a1 a1 = e").unwrap();
        assert_eq!(p.generators, 1);
        assert_eq!(p.relations, vec![(Symbol { gen: 0, exp: 1 }, Symbol { gen: 0, exp: 1 }, Symbol::E)]);
        let p = parse_presentation("gens 1; rel a1 a1 = a1^-1").unwrap();
        assert_eq!(p.relations[0].2, Symbol { gen: 0, exp: -1 });
        assert!(parse_presentation("gens 4; rel a1 a2 a3 = a4").is_err());
        assert!(parse_presentation("gens 1; rel a1^2 a1 = e").is_err());
        assert!(parse_presentation("gens 1; rel a2 a1 = e").is_err());
    }

    #[test]
    fn enumerates_small_groups() {
        for (text, order) in [(presets::Z2, 2), (presets::Z3, 3), (presets::Z4, 4), (presets::S3, 6)] {
            let g = enumerate_group(&parse_presentation(text).unwrap(), DEFAULT_MAX_COSETS).unwrap();
            assert_eq!(g.order, order, "{text}");
        }
        let s3 = enumerate_group(&parse_presentation(presets::S3).unwrap(), 100).unwrap();
        assert!(!s3.is_abelian());
    }

    #[test]
    fn free_group_exceeds_bound() {
        let p = parse_presentation("gens 2\nrel a1 a1 = e\n").unwrap();
        match enumerate_group(&p, 200) {
            Err(Error::EnumerationExceeded(200)) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn regular_norm_examples() {
        let z2 = enumerate_group(&parse_presentation(presets::Z2).unwrap(), 100).unwrap();
        assert!((regular_rep_norm(&sym(&[0.0, 1.0, 0.0]), &z2, 1).unwrap() - 1.0).abs() < 1e-12);
        assert!((regular_rep_norm(&sym(&[1.0, 1.0, 0.0]), &z2, 1).unwrap() - 2.0).abs() < 1e-12);
        let z3 = enumerate_group(&parse_presentation(presets::Z3).unwrap(), 100).unwrap();
        assert!((regular_rep_norm(&sym(&[1.0, 1.0, 1.0]), &z3, 1).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn abelian_norm_matches_characters() {
        let p = parse_presentation(presets::Z4).unwrap();
        let sys = GroupSystem::new(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coeffs: Vec<C64> = (0..5).map(|_| linalg::random_complex(&mut rng)).collect();
        let x = MatrixElement::from_vector(&coeffs);
        // a1 ↦ i^k, a2 = a1² ↦ (-1)^k
        let best = (0..4)
            .map(|k| {
                let z = C64::from_polar(1.0, std::f64::consts::FRAC_PI_2 * k as f64);
                let chi = [c(1.0, 0.0), z, z * z, z.conj(), (z * z).conj()];
                coeffs.iter().zip(chi).map(|(a, b)| a * b).sum::<C64>().norm()
            })
            .fold(0.0, f64::max);
        assert!((sys.regular_rep_norm(&x).unwrap() - best).abs() < 1e-9);
    }

    #[test]
    fn intermediate_examples() {
        let sys = GroupSystem::new(&parse_presentation(presets::Z2).unwrap()).unwrap();
        assert!((sys.intermediate_norm_upper(&sym(&[0.0, 1.0, 0.0])).unwrap() - 1.0).abs() < 1e-12);
        assert!((sys.intermediate_norm_upper(&sym(&[1.0, 1.0, 0.0])).unwrap() - 2.0).abs() < 1e-12);
        let alpha = ComplexMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let x = MatrixElement::scalar(&alpha, 3, 0);
        assert!((sys.intermediate_norm_upper(&x).unwrap() - linalg::norm2(&alpha)).abs() < 1e-12);
    }

    #[test]
    fn covers_exist_for_presets() {
        for text in [presets::Z2, presets::Z3, presets::Z4, presets::S3] {
            let sys = GroupSystem::new(&parse_presentation(text).unwrap()).unwrap();
            assert!(!sys.covers.is_empty(), "{text} elements {:?}", sys.elements);
        }
    }

    #[test]
    fn z2_example_interval() {
        let p = parse_presentation(presets::Z2).unwrap();
        let iv = group_fact_norm(&sym(&[1.0, 1.0, 0.0]), &p, &FactOptions::default().with_len(4)).unwrap();
        assert!((iv.lower - 2.0).abs() < 1e-9 && (iv.upper - 2.0).abs() < 1e-6);
        let iv = group_fact_norm(&sym(&[0.0, 1.0, 0.0]), &p, &FactOptions::default()).unwrap();
        assert!((iv.lower - 1.0).abs() < 1e-9 && (iv.upper - 1.0).abs() < 1e-9);
    }

    #[test]
    fn parses_span_elements() {
        let v = parse_span_element("e + 2*a1 - 0.5*a1^-1 + 1i*a2", 2).unwrap();
        assert_eq!(v[0], c(1.0, 0.0));
        assert_eq!(v[1], c(2.0, 0.0));
        assert_eq!(v[3], c(-0.5, 0.0));
        assert_eq!(v[2], c(0.0, 1.0));
        assert!(parse_span_element("e + a3", 2).is_err());
    }
}
