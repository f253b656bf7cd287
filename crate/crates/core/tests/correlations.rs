use opfact::correlations::*;
use opfact::factnorm::{self, FactOptions};
use opfact::groups::ell1_norm;
use opfact::linalg::{self, c, ComplexMatrix, C64};
use opfact::products;
use opfact::{Error, MatrixElement};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn diag_pvm(d: usize, labels: &[usize], k: usize) -> Vec<ComplexMatrix> {
    (0..k)
        .map(|a| ComplexMatrix::from_fn(d, d, |i, j| if i == j && labels[i] == a { c(1.0, 0.0) } else { c(0.0, 0.0) }))
        .collect()
}

fn product_state(d1: usize, d2: usize, i: usize, j: usize) -> ComplexMatrix {
    linalg::kron(&linalg::unit(d1, d1, i, i), &linalg::unit(d2, d2, j, j))
}

#[test]
fn deterministic_model_gives_a_zero_one_table() {
    // E_x diagonal on C^2, outcome of basis vector 0 is f(x); same for F with g
    let (f, g) = ([1usize, 0], [0usize, 2]);
    let e: Vec<_> = f.iter().map(|&fx| diag_pvm(2, &[fx, (fx + 1) % 3], 3)).collect();
    let ff: Vec<_> = g.iter().map(|&gy| diag_pvm(2, &[gy, (gy + 1) % 3], 3)).collect();
    let m = PVMModel::new(2, 2, e, ff, product_state(2, 2, 0, 0)).unwrap();
    let t = correlation_from_model(&m).unwrap();
    assert_eq!(t, CorrelationTable::deterministic(3, &f, &g).unwrap());
}

#[test]
fn maximally_entangled_table_is_a_valid_correlation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut m = PVMModel::random(&mut rng, 2, 2, 2, 2);
    let v = ComplexMatrix::from_fn(4, 1, |i, _| if i == 0 || i == 3 { c(0.5f64.sqrt(), 0.0) } else { c(0.0, 0.0) });
    m.state = &v * v.adjoint();
    m.f = m.e.clone();
    let t = correlation_from_model(&m).unwrap();
    t.validate(1e-10).unwrap();
}

#[test]
fn broken_pvm_is_an_input_error() {
    let mut e = diag_pvm(2, &[0, 1], 2);
    e[0][(0, 1)] = c(0.5, 0.0);
    let r = PVMModel::new(2, 1, vec![e], vec![vec![linalg::identity(1), ComplexMatrix::zeros(1, 1)]], linalg::identity(2) * c(0.5, 0.0));
    assert!(matches!(r, Err(Error::Input(ref s)) if s.contains("E[0][0]")));
}

#[test]
fn synchronous_checks() {
    assert!(is_synchronous(&CorrelationTable::deterministic(3, &[0, 2], &[0, 2]).unwrap()));
    assert!(!is_synchronous(&CorrelationTable::deterministic(3, &[0, 2], &[0, 1]).unwrap()));
}

#[test]
fn corner_of_deterministic_and_trivial_tables() {
    let q = CorrelationTable::deterministic(2, &[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap();
    let p = synchronous_corner(&q).unwrap();
    assert_eq!(p, CorrelationTable::deterministic(2, &[0, 1], &[1, 0]).unwrap());
    let one = vec![vec![linalg::identity(1)]];
    let q = build_corner_model(&one, &one, None).unwrap();
    assert_eq!(synchronous_corner(&q).unwrap().p, vec![vec![vec![vec![1.0]]]]);
    let odd = CorrelationTable::deterministic(2, &[0, 1, 1], &[0, 1, 1]).unwrap();
    assert!(synchronous_corner(&odd).is_err());
}

#[test]
fn one_dimensional_corner_model_is_deterministic() {
    let e = vec![diag_pvm(1, &[1], 2), diag_pvm(1, &[0], 2)];
    let f = vec![diag_pvm(1, &[0], 2), diag_pvm(1, &[0], 2)];
    let q = build_corner_model(&e, &f, None).unwrap();
    assert_eq!(q, CorrelationTable::deterministic(2, &[1, 0, 0, 0], &[1, 0, 0, 0]).unwrap());
}

#[test]
fn diagonal_corner_model_matches_hand_traces() {
    // E = {diag(1,0), diag(0,1)}, F = {0, I}
    let e = vec![diag_pvm(2, &[0, 1], 2)];
    let f = vec![diag_pvm(2, &[1, 1], 2)];
    let q = build_corner_model(&e, &f, None).unwrap();
    // τ((E_a ⊗ I)(I ⊗ F_b)) = tr(E_a) tr(F_b) / 4
    let tr_e = [1.0, 1.0];
    let tr_f = [0.0, 2.0];
    for a in 0..2 {
        for b in 0..2 {
            assert!((q.get(a, b, 0, 1) - tr_e[a] * tr_f[b] / 4.0).abs() < 1e-15);
            assert!((q.get(a, b, 0, 0) - if a == b { tr_e[a] * 2.0 / 4.0 } else { 0.0 }).abs() < 1e-15);
        }
    }
}

#[test]
fn non_tracial_density_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let e = vec![random_pvm(&mut rng, 2, 2), random_pvm(&mut rng, 2, 2)];
    let f = vec![random_pvm(&mut rng, 2, 2), random_pvm(&mut rng, 2, 2)];
    let rho = product_state(2, 2, 0, 0);
    assert!(matches!(build_corner_model(&e, &f, Some(&rho)), Err(Error::Precondition(_))));
}

#[test]
fn corners_recover_the_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10 {
        let (n, k) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let (d1, d2) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let mut m = PVMModel::random(&mut rng, n, k, d1, d2);
        m.state = linalg::identity(d1 * d2) * c(1.0 / (d1 * d2) as f64, 0.0);
        let q = build_corner_model(&m.e, &m.f, None).unwrap();
        assert!(is_synchronous(&q));
        assert!(q.signalling() <= 1e-10);
        let p = synchronous_corner(&q).unwrap();
        assert!(p.distance(&correlation_from_model(&m).unwrap()) <= 1e-12);
    }
}

#[test]
fn snk_dimension_matches_the_relation_rank() {
    for (n, k) in [(1, 1), (1, 2), (2, 2), (2, 3), (3, 2)] {
        let s = snk_build(n, k).unwrap();
        let rows = snk_relations(n, k);
        let brute = if rows.is_empty() {
            0
        } else {
            linalg::rank(&ComplexMatrix::from_fn(rows.len(), n * n * k * k, |i, j| c(rows[i][j], 0.0)))
        };
        assert_eq!(s.relation_rank, brute);
        assert_eq!(s.dim(), n * n * k * k - brute);
        // the nonsignalling span has dimension (n(k−1)+1)²
        assert_eq!(s.dim(), (n * (k - 1) + 1).pow(2), "n = {n}, k = {k}");
    }
    let s = snk_build(1, 1).unwrap();
    assert_eq!(s.dim(), 1);
    assert_eq!(s.symbol_coords[0], vec![c(1.0, 0.0)]);
}

#[test]
fn snk_unit_is_the_same_for_every_input_pair() {
    let s = snk_build(2, 3).unwrap();
    for x in 0..2 {
        for y in 0..2 {
            let mut sum = vec![C64::new(0.0, 0.0); s.dim()];
            for a in 0..3 {
                for b in 0..3 {
                    for (g, z) in s.symbol_coords[s.symbol(a, b, x, y)].iter().enumerate() {
                        sum[g] += z;
                    }
                }
            }
            assert!(sum.iter().enumerate().all(|(g, z)| (z - if g == 0 { 1.0 } else { 0.0 }).norm() < 1e-12));
        }
    }
}

#[test]
fn snk_symbols_represent_as_projections() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let s = snk_build(2, 2).unwrap();
    let m = PVMModel::random(&mut rng, 2, 2, 2, 3);
    let images = s.represent(&m).unwrap();
    for x in 0..2 {
        for y in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    let q = &s.symbol_coords[s.symbol(a, b, x, y)];
                    let img = q.iter().zip(&images).fold(ComplexMatrix::zeros(6, 6), |acc, (z, im)| acc + im * *z);
                    assert!(linalg::max_abs(&(&img * &img - &img)) < 1e-10);
                    assert!(linalg::max_abs(&(&img - linalg::kron(&m.e[x][a], &m.f[y][b]))) < 1e-10);
                }
            }
        }
    }
}

fn cuntz_base(x: &MatrixElement) -> f64 {
    ell1_norm(x)
}

#[test]
fn cuntz_unit_is_a_sum_of_commutators() {
    let opts = FactOptions::default().with_len(2);
    for n in [2, 3] {
        let m = products::cuntz_product(n).unwrap();
        let s = tracial_seminorm(&m.unit_vector(), &m, &cuntz_base, 2, &opts).unwrap();
        assert!(s.certified_zero, "n = {n}: residual {}", s.residual);
        assert!(s.residual <= 1e-11);
        assert_eq!(s.value_upper, 0.0);
    }
}

#[test]
fn zero_has_certified_zero_seminorm() {
    let m = products::cuntz_product(2).unwrap();
    let s = tracial_seminorm(&[C64::new(0.0, 0.0); 6], &m, &cuntz_base, 2, &FactOptions::default().with_len(2)).unwrap();
    assert!(s.certified_zero);
    assert_eq!(s.value_upper, 0.0);
}

#[test]
fn commutative_system_has_no_commutators() {
    let (space, m) = commutative_projection_system(3).unwrap();
    let base = |x: &MatrixElement| space.matrix_norm(x);
    let opts = FactOptions::default().with_len(2);
    let x = [c(0.5, 0.0), c(-2.0, 1.0), c(0.25, 0.0)];
    let xs = tracial_seminorm_by_length(&x, &m, &base, 3, &opts).unwrap();
    let want = factnorm::unital_norm(&MatrixElement::from_vector(&x), &space, &opts).unwrap().upper;
    for s in &xs {
        assert_eq!(s.kernel_dim, 0);
        assert!(!s.certified_zero);
        assert!((s.value_upper - want).abs() < 1e-9, "{} vs {want}", s.value_upper);
    }
}

#[test]
fn seminorm_is_monotone_in_length() {
    let m = products::cuntz_product(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<C64> = (0..6).map(|_| linalg::random_complex(&mut rng)).collect();
    let xs = tracial_seminorm_by_length(&x, &m, &cuntz_base, 3, &FactOptions::default().with_len(2)).unwrap();
    for w in xs.windows(2) {
        assert!(w[1].value_upper <= w[0].value_upper);
    }
}

#[test]
fn cuntz_states_have_no_tracial_extension() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let opts = FactOptions::default().with_len(2);
    for n in [2, 3] {
        let m = products::cuntz_product(n).unwrap();
        for _ in 0..3 {
            let h: Vec<C64> = (0..3).map(|_| linalg::random_complex(&mut rng)).collect();
            let phi = cuntz_vector_state(n, &h).unwrap();
            let v = trace_extension_feasible(&phi, &m, &cuntz_base, 2, 8, 1, &opts).unwrap();
            assert!(!v.pass);
            let w = v.violation.unwrap();
            assert!(w.certified);
            assert_eq!(w.x, m.unit_vector());
        }
    }
}

#[test]
fn point_evaluation_on_a_commutative_system_passes() {
    let (space, m) = commutative_projection_system(3).unwrap();
    let base = |x: &MatrixElement| space.matrix_norm(x);
    for l in 1..=3 {
        let v = trace_extension_feasible(&point_evaluation(3, 1), &m, &base, l, 12, 4, &FactOptions::default().with_len(2)).unwrap();
        assert!(v.pass, "L = {l}: {v:?}");
    }
}

#[test]
fn non_unital_functional_is_rejected() {
    let (space, m) = commutative_projection_system(2).unwrap();
    let base = |x: &MatrixElement| space.matrix_norm(x);
    let phi = [c(0.5, 0.0), c(0.0, 0.0)];
    let r = trace_extension_feasible(&phi, &m, &base, 2, 4, 0, &FactOptions::default());
    assert!(matches!(r, Err(Error::Precondition(_))));
}

#[test]
fn corner_state_on_snk_passes() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let s = snk_build(2, 2).unwrap();
    let mut m = PVMModel::random(&mut rng, 2, 2, 2, 2);
    m.state = linalg::identity(4) * c(0.25, 0.0);
    let q = build_corner_model(&m.e, &m.f, None).unwrap();
    let phi = s.state_from_table(&synchronous_corner(&q).unwrap()).unwrap();
    let base = |x: &MatrixElement| s.base_norm(x);
    let v = trace_extension_feasible(&phi, &s.product, &base, 2, 12, 9, &FactOptions::default().with_len(2)).unwrap();
    assert!(v.pass, "{v:?}");
}

#[test]
fn table_json_round_trip_and_csv() {
    let t = CorrelationTable::deterministic(2, &[0, 1], &[1, 1]).unwrap();
    let back: CorrelationTable = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
    assert_eq!(back, t);
    let csv = t.to_csv();
    assert_eq!(csv.lines().count(), 1 + 16);
    assert!(csv.starts_with("x,y,a,b,p\n0,0,0,0,0\n0,0,0,1,1\n"));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = PVMModel::random(&mut rng, 2, 2, 2, 2);
    let back: PVMModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
    assert!(linalg::max_abs(&(&back.state - &m.state)) == 0.0);
}
