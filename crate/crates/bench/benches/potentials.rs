use criterion::{criterion_group, criterion_main, Criterion};
use eot_bench::uniform_pair;
use eot_core::potentials::{derivative, holder_norm, Difference};
use eot_core::sinkhorn::{entropic_cost, normalize};
use eot_core::{
    CompactDomain, ExtendedPotential, GridSpec, HolderOrder, MultiIndex, Normalization, Side, SolverConfig,
};

fn derivatives(c: &mut Criterion) {
    let (p, q) = uniform_pair(50, 2, 3);
    let (_, pair) = entropic_cost(&p, &q, &SolverConfig::new(1.0)).unwrap();
    let f = ExtendedPotential::new(Side::F, &pair, &q).unwrap();
    let x = [0.3, 0.6];
    for order in [1, 3, 6] {
        let alpha = MultiIndex::of_order(2, order).remove(0);
        c.bench_function(&format!("derivative order {order}"), |b| b.iter(|| derivative(&f, &x, &alpha).unwrap()));
    }
}

fn holder(c: &mut Criterion) {
    let (p, q) = uniform_pair(10, 2, 4);
    let (p2, _) = uniform_pair(10, 2, 5);
    let cfg = SolverConfig::new(1.0);
    let a = normalize(&entropic_cost(&p, &q, &cfg).unwrap().1, &p, &q, Normalization::GZero);
    let b = normalize(&entropic_cost(&p2, &q, &cfg).unwrap().1, &p2, &q, Normalization::GZero);
    let fa = ExtendedPotential::new(Side::F, &a, &q).unwrap();
    let fb = ExtendedPotential::new(Side::F, &b, &q).unwrap();
    let grid = GridSpec::default_for(CompactDomain::unit_cube(2).unwrap());
    c.bench_function("holder norm s=2 41x41", |bch| {
        bch.iter(|| holder_norm(&Difference(&fa, &fb), HolderOrder::new(2).unwrap(), &grid).unwrap())
    });
}

criterion_group!(benches, derivatives, holder);
criterion_main!(benches);
