mod common;

use common::{finite_diff, random_input, random_mlp, rng};
use pathgrad::attribution::pathway_gradient_from_mask;
use pathgrad::contrib::neuron_intgrad;
use pathgrad::linearity::{linear_region_radius, Surrogate};
use pathgrad::nn::{backward, forward_record, manifest, response, ArchSpec, Layer};
use pathgrad::pathway::{build_frozen, select_pathway};
use pathgrad::{Error, InterceptSpec, Network, Shape};

const H: f64 = 1e-4;

/// Straight-line re-evaluation of a dense ReLU stack.
fn naive_forward(net: &Network, x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    for layer in net.layers() {
        v = match layer {
            Layer::Dense(d) => (0..d.outputs)
                .map(|o| d.bias[o] + (0..d.inputs).map(|i| d.weights[o * d.inputs + i] * v[i]).sum::<f64>())
                .collect(),
            Layer::Relu => v.iter().map(|&z| z.max(0.0)).collect(),
            _ => unreachable!("dense-only oracle"),
        };
    }
    v
}

#[test]
fn forward_matches_naive_evaluation() {
    let mut r = rng(11);
    for seed in 0..20 {
        let net = random_mlp(&[2, 3, 1], seed);
        let x = random_input(2, &mut r);
        let rec = forward_record(&net, &x, None, 0).unwrap();
        let want = naive_forward(&net, &x);
        assert!((rec.output - want[0]).abs() <= 1e-12 * want[0].abs().max(1.0));
    }
}

/// Draws inputs until the full network's linear region is wider than `H`.
fn smooth_point(net: &Network, r: &mut impl rand::Rng) -> Vec<f64> {
    loop {
        let x = random_input(net.input_len(), r);
        if let Ok(rep) = linear_region_radius(&Surrogate::full(net, 0), &x) {
            if rep.radius > 10.0 * H {
                return x;
            }
        }
    }
}

#[test]
fn backward_matches_finite_differences() {
    let mut r = rng(5);
    for case in 0..50u64 {
        let net = random_mlp(&[4, 5, 5, 1], 100 + case);
        let x = smooth_point(&net, &mut r);
        let rec = forward_record(&net, &x, None, 0).unwrap();
        let g = backward(&net, &rec, None).unwrap().input_grad;
        let fd = finite_diff(|p| response(&net, p, None, 0).unwrap(), &x, H);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-5, "case {case}: {a} vs {b}");
        }
    }
}

#[test]
fn conv_backward_matches_finite_differences() {
    let arch = ArchSpec::parse(Shape::new(2, 6, 6), "conv:3:3,relu,pool:2,flatten,dense:5,relu,dense:3").unwrap();
    let mut r = rng(9);
    for case in 0..10u64 {
        let net = arch.build_random(&mut rng(case)).unwrap();
        let x = smooth_point(&net, &mut r);
        let rec = forward_record(&net, &x, None, 0).unwrap();
        let g = backward(&net, &rec, None).unwrap().input_grad;
        let fd = finite_diff(|p| response(&net, p, None, 0).unwrap(), &x, H);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-5, "case {case}: {a} vs {b}");
        }
    }
}

#[test]
fn pathway_gradient_matches_frozen_finite_differences() {
    let mut r = rng(6);
    let mut checked = 0;
    for case in 0..200u64 {
        if checked == 50 {
            break;
        }
        let net = random_mlp(&[4, 8, 8, 1], 300 + case);
        let x = random_input(4, &mut r);
        let Ok(mask) = select_pathway(&neuron_intgrad(&net, &x, 0, 16).unwrap(), 0.5) else { continue };
        let rec = forward_record(&net, &x, None, 0).unwrap();
        let frozen = build_frozen(&net, &rec, &mask).unwrap();
        match linear_region_radius(&Surrogate::frozen(&frozen), &x) {
            Ok(rep) if rep.radius > 10.0 * H => {}
            _ => continue,
        }
        let g = pathway_gradient_from_mask(&net, &x, 0, &mask).unwrap();
        let fd = finite_diff(|p| frozen.response(p).unwrap(), &x, H);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-5, "case {case}: {a} vs {b}");
        }
        checked += 1;
    }
    assert_eq!(checked, 50);
}

#[test]
fn single_chain_gradients() {
    let chain = |w: f64, b: f64| {
        Network::new(Shape::flat(1), vec![common::dense(1, 1, &[w], &[b]), Layer::Relu, common::dense(1, 1, &[1.0], &[0.0])])
            .unwrap()
    };
    let grad = |net: &Network, x: f64| {
        let rec = forward_record(net, &[x], None, 0).unwrap();
        backward(net, &rec, None).unwrap().input_grad[0]
    };
    assert_eq!(grad(&chain(3.0, 1.0), 1.0), 3.0);
    assert_eq!(grad(&chain(1.0, -2.0), 1.0), 0.0);
    let id = chain(1.0, 0.0);
    assert_eq!(response(&id, &[2.0], None, 0).unwrap(), 2.0);
    let rec = forward_record(&id, &[-1.0], None, 0).unwrap();
    assert_eq!((rec.activations[0][0], rec.output), (0.0, 0.0));
}

#[test]
fn all_ones_gates_equal_plain_forward() {
    let net = random_mlp(&[3, 6, 4, 2], 1);
    let x = [0.3, -0.2, 0.9];
    let gated = InterceptSpec::from_gates(&net, &[vec![1.0; 6], vec![1.0; 4]]).unwrap();
    let a = forward_record(&net, &x, None, 1).unwrap();
    let b = forward_record(&net, &x, Some(&gated), 1).unwrap();
    assert_eq!(a.logits, b.logits);
    assert_eq!(backward(&net, &a, None).unwrap(), backward(&net, &b, Some(&gated)).unwrap());
}

#[test]
fn stale_record_is_rejected() {
    let mut net = random_mlp(&[2, 3, 1], 2);
    let rec = forward_record(&net, &[0.1, 0.2], None, 0).unwrap();
    net.update_params(|_, w, _| w[0] += 1.0);
    assert!(matches!(backward(&net, &rec, None), Err(Error::StaleRecord { .. })));
}

#[test]
fn manifest_round_trip_is_bit_exact() {
    let arch = ArchSpec::parse(Shape::new(1, 5, 5), "conv:2:3,relu,pool:2,flatten,dense:4,relu,dense:3").unwrap();
    let net = arch.build_random(&mut rng(4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    manifest::save(&net, &path).unwrap();
    let back = manifest::load(&path).unwrap();
    let x: Vec<f64> = (0..25).map(|i| (i as f64 * 0.13).cos()).collect();
    let (a, b) = (forward_record(&net, &x, None, 2).unwrap(), forward_record(&back, &x, None, 2).unwrap());
    assert_eq!(a.output.to_bits(), b.output.to_bits());
    assert_eq!(net.content_hash(), back.content_hash());
}
