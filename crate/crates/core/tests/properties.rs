use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use opfact::correlations::CorrelationTable;
use opfact::haagerup;
use opfact::linalg::{self, c};
use opfact::optim::SearchOptions;
use opfact::quotients::{self, KernelSubspace, UcpCertificate};
use opfact::spaces::ConcreteOperatorSpace;
use opfact::ComplexMatrix;

fn diag_kernel() -> KernelSubspace {
    let v = ConcreteOperatorSpace::span(vec![linalg::identity(2), linalg::unit(2, 2, 0, 0)], Some(0), true).unwrap();
    let avg = UcpCertificate::from_map(2, 1, |x| ComplexMatrix::from_element(1, 1, (x[(0, 0)] + x[(1, 1)]) * 0.5));
    KernelSubspace::from_certificate(&v, avg, true).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn realized_norm_of_direct_sum_is_the_max(seed in any::<u64>(), r in 1usize..3, k in 1usize..3) {
        let s = ConcreteOperatorSpace::span(vec![linalg::identity(2), linalg::unit(2, 2, 0, 1)], Some(0), false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = s.random_element(&mut rng, r, k);
        let y = s.random_element(&mut rng, k, r);
        let both = s.matrix_norm(&x.direct_sum(&y));
        let max = s.matrix_norm(&x).max(s.matrix_norm(&y));
        prop_assert!((both - max).abs() <= 1e-10 * max.max(1.0));
    }

    #[test]
    fn haagerup_interval_is_ordered(seed in any::<u64>()) {
        let x = ConcreteOperatorSpace::span(vec![linalg::identity(2), linalg::unit(2, 2, 0, 1)], Some(0), false).unwrap();
        let y = ConcreteOperatorSpace::matrix_algebra(2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = x.tensor(&y).random_element(&mut rng, 1, 1);
        let iv = haagerup::haagerup_norm(&z, &x, &y, &SearchOptions { restarts: 2, iters: 60, seed }).unwrap();
        prop_assert!(iv.lower <= iv.upper * (1.0 + 1e-9));
        let w = &iv.witness;
        prop_assert!(w.product().distance(&z) <= 1e-8 * z.max_abs().max(1.0));
    }

    #[test]
    fn osp_is_constant_on_cosets(re in -2.0f64..2.0, im in -2.0f64..2.0, shift in -3.0f64..3.0, seed in any::<u64>()) {
        let k = diag_kernel();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = k.space.random_element(&mut rng, 1, 1);
        let j = k.element(1, 1, |_, _, _| c(shift, 0.0) + c(re, im));
        let a = quotients::osp_quotient_with(&x, &k, false).unwrap().value;
        let b = quotients::osp_quotient_with(&x.add(&j), &k, false).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-8 * a.max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn deterministic_tables_survive_json(k in 1usize..4, f in proptest::collection::vec(0usize..3, 1..4), g in proptest::collection::vec(0usize..3, 1..4)) {
        let n = f.len().min(g.len());
        let (f, g): (Vec<usize>, Vec<usize>) = (f[..n].iter().map(|v| v % k).collect(), g[..n].iter().map(|v| v % k).collect());
        let t = CorrelationTable::deterministic(k, &f, &g).unwrap();
        let back: CorrelationTable = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        prop_assert_eq!(back.distance(&t), 0.0);
        prop_assert!(t.signalling() == 0.0);
    }
}
