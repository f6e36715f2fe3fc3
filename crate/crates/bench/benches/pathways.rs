use criterion::{criterion_group, criterion_main, Criterion};
use pathgrad::attribution::pathway_gradient_from_mask;
use pathgrad::contrib::{neuron_intgrad, neuron_mct, shapley_bruteforce};
use pathgrad::linearity::{linear_region_radius, Surrogate};
use pathgrad::nn::{backward, forward_record};
use pathgrad::pathway::{build_frozen, select_pathway};
use pathgrad::pruneobj::{default_chunk, greedy_prune};
use pathgrad_bench::{glyph_fixture, mlp};
use std::hint::black_box;

fn network(c: &mut Criterion) {
    let (net, data) = glyph_fixture();
    let x = &data.inputs[0];
    c.bench_function("forward_record", |b| b.iter(|| forward_record(&net, black_box(x), None, 0).unwrap()));
    let rec = forward_record(&net, x, None, 0).unwrap();
    c.bench_function("backward", |b| b.iter(|| backward(&net, black_box(&rec), None).unwrap()));
}

fn contributions(c: &mut Criterion) {
    let (net, data) = glyph_fixture();
    let x = &data.inputs[0];
    c.bench_function("neuron_mct", |b| b.iter(|| neuron_mct(&net, black_box(x), 0).unwrap()));
    c.bench_function("neuron_intgrad_50", |b| b.iter(|| neuron_intgrad(&net, black_box(x), 0, 50).unwrap()));
    let small = mlp(4, &[12, 12], 2, 0);
    c.bench_function("shapley_bruteforce_12", |b| b.iter(|| shapley_bruteforce(&small, black_box(&[0.3, -0.2, 0.5, 0.1]), 0, 0).unwrap()));
}

fn pathways(c: &mut Criterion) {
    let (net, data) = glyph_fixture();
    let x = &data.inputs[0];
    let contrib = neuron_intgrad(&net, x, 0, 50).unwrap();
    let mask = select_pathway(&contrib, 0.9).unwrap();
    c.bench_function("pathway_gradient", |b| b.iter(|| pathway_gradient_from_mask(&net, black_box(x), 0, &mask).unwrap()));
    let rec = forward_record(&net, x, None, 0).unwrap();
    let frozen = build_frozen(&net, &rec, &mask).unwrap();
    c.bench_function("linear_region_radius", |b| {
        b.iter(|| linear_region_radius(&Surrogate::frozen(&frozen), black_box(x)).unwrap())
    });
    let chunk = default_chunk(net.num_neurons());
    let mut group = c.benchmark_group("pruning");
    group.sample_size(10);
    group.bench_function("greedy_prune_0.9", |b| b.iter(|| greedy_prune(&net, black_box(x), 0, 0.9, chunk).unwrap()));
    group.finish();
}

criterion_group!(benches, network, contributions, pathways);
criterion_main!(benches);
