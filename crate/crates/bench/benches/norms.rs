use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use opfact::correlations;
use opfact::factnorm::FactOptions;
use opfact::groups::{self, GroupSystem};
use opfact::haagerup;
use opfact::optim::SearchOptions;
use opfact::products;
use opfact::quotients;
use opfact::spaces::{ConcreteOperatorSpace, MatrixElement};
use opfact_bench::{diagonal_element, diagonal_example, elementary_tensor};

fn haagerup_elementary(c: &mut Criterion) {
    let m3 = ConcreteOperatorSpace::matrix_algebra(3);
    let z = elementary_tensor(&mut ChaCha8Rng::seed_from_u64(1), 3);
    let opts = SearchOptions { restarts: 4, iters: 200, seed: 0 };
    c.bench_function("haagerup_elementary_m3", |b| b.iter(|| haagerup::haagerup_norm(black_box(&z), &m3, &m3, &opts).unwrap()));
}

fn group_norm(c: &mut Criterion) {
    let pres = groups::parse_presentation(groups::presets::S3).unwrap();
    let sys = GroupSystem::new(&pres).unwrap();
    let x = MatrixElement::from_vector(&groups::parse_span_element("e+a1-0.5*a2", pres.generators).unwrap());
    let opts = FactOptions::default().with_len(4);
    c.bench_function("group_fact_norm_s3_l4", |b| b.iter(|| sys.fact_norm(black_box(&x), &opts).unwrap()));
}

fn osp_quotient(c: &mut Criterion) {
    let (_, k) = diagonal_example();
    let x = diagonal_element(&mut ChaCha8Rng::seed_from_u64(2));
    c.bench_function("osp_quotient_diagonal", |b| b.iter(|| quotients::osp_quotient_with(black_box(&x), &k, false).unwrap()));
}

fn cuntz_tracial(c: &mut Criterion) {
    let m = products::cuntz_product(2).unwrap();
    let e = m.unit_vector();
    let opts = FactOptions::default().with_len(2);
    c.bench_function("cuntz_tracial_seminorm_l2", |b| {
        b.iter(|| correlations::tracial_seminorm(black_box(&e), &m, &groups::ell1_norm, 2, &opts).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = haagerup_elementary, group_norm, osp_quotient, cuntz_tracial
}
criterion_main!(benches);
