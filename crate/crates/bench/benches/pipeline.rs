use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use slicecrack::graph::{connected_components, extract_edges};
use slicecrack::planted::{matrix_geometry, planted, Domain, Family, DEFAULT_A2_BASE};
use slicecrack::sim::{run_workload, WorkloadConfig};
use slicecrack::solver::{
    crack, default_array_sizes, default_strides, fit_linear_gf2, stride_scan, CrackConfig,
};
use slicecrack::{
    BitFunction, CacheGeometry, EquitableOracle, LatencyModel, ReplacementPolicy, SliceHash,
    SlicedCache,
};

fn simulator(c: &mut Criterion) {
    let geom = matrix_geometry(4);
    let hash = planted(
        Family::Linear,
        &geom,
        false,
        &Domain::low(DEFAULT_A2_BASE, 13),
        1,
    )
    .unwrap();
    let blocks = Domain::low(DEFAULT_A2_BASE, 13).blocks(&geom, 0);
    let workload = WorkloadConfig::laps(blocks, 2, 1).with_idle_gap(1000);
    c.bench_function("simulate 2^13 blocks x 2 laps", |b| {
        b.iter_batched(
            || SlicedCache::new(geom, hash.clone(), ReplacementPolicy::LruMruInsert).unwrap(),
            |mut cache| black_box(run_workload(&mut cache, &workload).unwrap().trace.len()),
            BatchSize::SmallInput,
        )
    });

    let mut cache = SlicedCache::new(geom, hash.clone(), ReplacementPolicy::LruMruInsert).unwrap();
    let trace = run_workload(&mut cache, &workload).unwrap().trace;
    let nodes = Domain::low(DEFAULT_A2_BASE, 13).blocks(&geom, 0);
    c.bench_function("extract edges + components", |b| {
        b.iter(|| {
            let ex = extract_edges(&trace, 2);
            black_box(connected_components(&ex.edges, nodes.iter().copied()).len())
        })
    });
}

fn gf2(c: &mut Criterion) {
    let geom = matrix_geometry(8);
    let masks = vec![
        BitFunction::from_bits(&[17, 19, 23, 29, 31], false),
        BitFunction::from_bits(&[18, 20, 22, 27, 33], true),
        BitFunction::from_bits(&[21, 24, 25, 26, 30], false),
    ];
    let hash = SliceHash::linear(masks, &geom).unwrap();
    let assignments: BTreeMap<u64, u32> = (0..4096u64)
        .map(|i| {
            let pa = (i.wrapping_mul(0x9e37_79b9_7f4a_7c15) % geom.block_count()) << 6;
            (pa, hash.slice_of(pa, &geom).unwrap())
        })
        .collect();
    c.bench_function("fit_linear_gf2 4096 points", |b| {
        b.iter(|| black_box(fit_linear_gf2(&assignments, &geom).unwrap()))
    });
}

fn scan(c: &mut Criterion) {
    let geom = CacheGeometry::sandy_bridge_6core();
    let strides = default_strides(&geom);
    let sizes = default_array_sizes(&geom);
    c.bench_function("stride scan, 6-slice", |b| {
        b.iter(|| {
            let mut oracle = EquitableOracle::new(geom, LatencyModel::default()).unwrap();
            black_box(stride_scan(&mut oracle, &strides, &sizes, 1).unwrap())
        })
    });
}

fn end_to_end(c: &mut Criterion) {
    let geom = matrix_geometry(6);
    let domain = Domain::low(DEFAULT_A2_BASE, 10);
    let hash = planted(Family::RandomTable, &geom, true, &domain, 3).unwrap();
    let cfg = CrackConfig::new(domain, vec![0, 1, 2, 3], 3);
    let mut g = c.benchmark_group("crack");
    g.sample_size(10);
    g.bench_function("6-slice set-dependent, 4 set indexes x 2^10", |b| {
        b.iter(|| black_box(crack(&geom, &hash, &cfg).unwrap().distinct_tables()))
    });
    g.finish();
}

criterion_group!(benches, simulator, gf2, scan, end_to_end);
criterion_main!(benches);
