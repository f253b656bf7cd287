//! Derivative-free descent over GL_k gauges, shared by the Haagerup module and
//! the factorization engine.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, c, ComplexMatrix, C64};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct SearchOptions {
    pub restarts: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { restarts: 8, iters: 500, seed: 0 }
    }
}

/// Multiplicative perturbation G (I + Δ) with Δ given by 2k² real parameters.
fn perturb(g: &ComplexMatrix, delta: &[f64]) -> ComplexMatrix {
    let k = g.nrows();
    let mut m = linalg::identity(k);
    for i in 0..k {
        for j in 0..k {
            let p = 2 * (i * k + j);
            m[(i, j)] += c(delta[p], delta[p + 1]);
        }
    }
    g * m
}

/// Locally minimizes `objective` (a positive value, `None` when G is unusable)
/// from `start` with finite-difference descent on its logarithm. The returned
/// value never exceeds the starting value.
pub fn descend(
    start: &ComplexMatrix,
    objective: &dyn Fn(&ComplexMatrix) -> Option<f64>,
    iters: usize,
) -> (ComplexMatrix, f64) {
    descend_masked(start, objective, iters, None)
}

/// As [`descend`], moving only the parameters whose mask entry is set
/// (parameter 2(i k + j) and 2(i k + j) + 1 are the real and imaginary part of Δ_ij).
pub fn descend_masked(
    start: &ComplexMatrix,
    objective: &dyn Fn(&ComplexMatrix) -> Option<f64>,
    iters: usize,
    mask: Option<&[bool]>,
) -> (ComplexMatrix, f64) {
    let k = start.nrows();
    let mut g = start.clone();
    let mut best = match objective(&g) {
        Some(v) => v,
        None => return (g, f64::INFINITY),
    };
    if k == 0 || best <= 0.0 || !best.is_finite() {
        return (g, best);
    }
    let np = 2 * k * k;
    let mut h = 1e-4;
    let mut step = 0.1;
    let mut fval = best.ln();
    for _ in 0..iters {
        let mut grad = vec![0.0; np];
        let mut e = vec![0.0; np];
        for p in 0..np {
            if mask.is_some_and(|m| !m[p]) {
                continue;
            }
            e[p] = h;
            let fp = objective(&perturb(&g, &e)).map(f64::ln).unwrap_or(f64::INFINITY);
            e[p] = -h;
            let fm = objective(&perturb(&g, &e)).map(f64::ln).unwrap_or(f64::INFINITY);
            e[p] = 0.0;
            grad[p] = if fp.is_finite() && fm.is_finite() { (fp - fm) / (2.0 * h) } else { 0.0 };
        }
        let gn = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        if gn < 1e-12 {
            if h < 1e-9 {
                break;
            }
            h *= 0.1;
            continue;
        }
        let mut t = step;
        let mut moved = false;
        while t > 1e-12 {
            let d: Vec<f64> = grad.iter().map(|x| -t * x / gn).collect();
            let cand = perturb(&g, &d);
            if let Some(v) = objective(&cand) {
                if v.is_finite() && v.ln() < fval - 1e-14 {
                    g = cand;
                    fval = v.ln();
                    best = v;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if moved {
            step = (t * 2.0).min(1.0);
        } else {
            if h < 1e-9 {
                break;
            }
            h *= 0.1;
            step = 0.1;
        }
    }
    (g, best)
}

/// Finite-difference descent on a real parameter vector; never returns a worse point.
pub fn minimize_vector(x0: &[f64], objective: &dyn Fn(&[f64]) -> f64, iters: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = objective(&x);
    if n == 0 || !fx.is_finite() {
        return (x, fx);
    }
    let mut h = 1e-5;
    let mut step = 0.1;
    for _ in 0..iters {
        let mut grad = vec![0.0; n];
        let mut probe = x.clone();
        for p in 0..n {
            probe[p] = x[p] + h;
            let fp = objective(&probe);
            probe[p] = x[p] - h;
            let fm = objective(&probe);
            probe[p] = x[p];
            grad[p] = if fp.is_finite() && fm.is_finite() { (fp - fm) / (2.0 * h) } else { 0.0 };
        }
        let gn = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gn < 1e-14 {
            break;
        }
        let mut t = step;
        let mut moved = false;
        while t > 1e-13 {
            let cand: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a - t * g / gn).collect();
            let fc = objective(&cand);
            if fc < fx - 1e-15 * fx.abs().max(1.0) {
                x = cand;
                fx = fc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if moved {
            step = (t * 2.0).min(10.0);
        } else {
            if h < 1e-10 {
                break;
            }
            h *= 0.1;
            step = 0.1;
        }
    }
    (x, fx)
}

/// Multi-start descent; restart 0 starts at the identity, the rest at random
/// perturbations of it. Ties keep the earliest restart.
pub fn minimize_gauge<R: Rng + ?Sized>(
    k: usize,
    objective: &dyn Fn(&ComplexMatrix) -> Option<f64>,
    opts: &SearchOptions,
    rng: &mut R,
) -> (ComplexMatrix, f64) {
    let mut best_g = linalg::identity(k);
    let mut best_v = objective(&best_g).unwrap_or(f64::INFINITY);
    for r in 0..opts.restarts.max(1) {
        let start = if r == 0 {
            linalg::identity(k)
        } else {
            let noise = linalg::random_matrix(rng, k, k) * C64::new(0.3 / (k as f64).sqrt(), 0.0);
            linalg::identity(k) + noise
        };
        let (g, v) = descend(&start, objective, opts.iters);
        if v < best_v {
            best_v = v;
            best_g = g;
        }
    }
    (best_g, best_v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn finds_trace_product_minimum() {
        // ‖G‖_F² ‖G⁻¹‖_F² ≥ k² with equality at unitary multiples
        let f = |g: &ComplexMatrix| {
            let inv = linalg::inverse(g)?;
            Some(g.norm_squared() * inv.norm_squared())
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let start = linalg::random_matrix(&mut rng, 2, 2);
        let (_, v) = descend(&start, &f, 300);
        assert!((v - 4.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn monotone_from_start() {
        let f = |g: &ComplexMatrix| Some(linalg::norm2(g) * linalg::norm2(&linalg::inverse(g)?));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let start = linalg::random_matrix(&mut rng, 3, 3);
        let v0 = f(&start).unwrap();
        let (_, v) = descend(&start, &f, 50);
        assert!(v <= v0);
    }
}
