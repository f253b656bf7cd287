use std::time::Instant;

use opfact::factnorm::FactOptions;
use opfact::groups::{parse_presentation, presets, GroupSystem};
use opfact::linalg;
use opfact::MatrixElement;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_span_element(rng: &mut ChaCha8Rng, symbols: usize, n: usize) -> MatrixElement {
    MatrixElement::from_fn(n, n, symbols, |_, _, _| linalg::random_complex(rng))
}

#[test]
fn group_norms_close_on_small_groups() {
    for (name, text) in [("Z2", presets::Z2), ("Z3", presets::Z3), ("Z4", presets::Z4), ("S3", presets::S3)] {
        let t0 = Instant::now();
        let sys = GroupSystem::new(&parse_presentation(text).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst = 0.0f64;
        for s in 0..20 {
            let n = 1 + s % 2;
            let x = random_span_element(&mut rng, sys.symbols(), n);
            let exact = sys.regular_rep_norm(&x).unwrap();
            let sweep = sys.fact_norm_by_length(&x, &FactOptions::default().with_len(6)).unwrap();
            let mut last = f64::INFINITY;
            for (i, iv) in sweep.iter().enumerate() {
                assert!((iv.lower - exact).abs() <= 1e-9);
                assert!(iv.upper <= last + 1e-12, "{name}: upper increased at L = {}", i + 1);
                last = iv.upper;
            }
            if s < 2 {
                // independent runs at each length agree with the sweep
                for (i, iv) in sweep.iter().enumerate() {
                    let single = sys.fact_norm(&x, &FactOptions::default().with_len(i + 1)).unwrap();
                    assert!((single.upper - iv.upper).abs() <= 1e-12);
                }
            }
            worst = worst.max((last - exact) / exact);
        }
        let secs = t0.elapsed().as_secs_f64();
        println!("{name}: worst relative gap {worst:.2e}, {secs:.2} s");
        assert!(worst <= 0.02, "{name}: gap {worst}");
    }
}
