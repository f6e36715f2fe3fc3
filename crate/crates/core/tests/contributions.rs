mod common;

use common::{dense, random_input, random_mlp, rng};
use pathgrad::contrib::{
    layer_ablation_delta, marginal_exact, marginal_signed, neuron_intgrad, neuron_intgrad_with, neuron_mct,
    shapley_bruteforce, IntGradPath,
};
use pathgrad::linearity::ActivationPattern;
use pathgrad::nn::{forward_record, Directive, Layer};
use pathgrad::{InterceptSpec, Network, NeuronId, Shape};

/// a = ReLU(x); b = ReLU(a − 1), c = ReLU(a); Φ = b + c.
fn taylor_gap_net() -> Network {
    Network::new(
        Shape::flat(1),
        vec![
            dense(1, 1, &[1.0], &[0.0]),
            Layer::Relu,
            dense(1, 2, &[1.0, 1.0], &[-1.0, 0.0]),
            Layer::Relu,
            dense(2, 1, &[1.0, 1.0], &[0.0]),
        ],
    )
    .unwrap()
}

#[test]
fn taylor_score_differs_from_ablation_when_the_pattern_shifts() {
    let net = taylor_gap_net();
    let a = NeuronId::new(0, 0);
    assert_eq!(marginal_exact(&net, &[2.0], a, 0).unwrap(), 3.0);
    assert_eq!(neuron_mct(&net, &[2.0], 0).unwrap().get(a), 4.0);
}

#[test]
fn taylor_score_is_exact_when_the_pattern_is_fixed() {
    let mut r = rng(21);
    for seed in 0..10 {
        let mut net = random_mlp(&[3, 4, 4, 1], seed);
        // Large downstream biases keep every second-layer unit active.
        net.update_params(|layer, _, b| {
            if layer == 2 {
                b.fill(10.0);
            }
        });
        let x = random_input(3, &mut r);
        let rec = forward_record(&net, &x, None, 0).unwrap();
        let mct = neuron_mct(&net, &x, 0).unwrap();
        for unit in 0..4 {
            let id = NeuronId::new(0, unit);
            let mut spec = InterceptSpec::pass_through(&net);
            spec.set(id, Directive::Gate(0.0)).unwrap();
            let ablated = forward_record(&net, &x, Some(&spec), 0).unwrap();
            assert!(ActivationPattern::from_record(&ablated).layers[1] == ActivationPattern::from_record(&rec).layers[1]);
            assert!((mct.get(id) - marginal_exact(&net, &x, id, 0).unwrap()).abs() < 1e-9);
        }
    }
}

#[test]
fn linear_head_marginals_and_shapley() {
    // a = (ReLU(x), ReLU(x)) = (1, 1); Φ = 2a₁ + 3a₂.
    let net = Network::new(
        Shape::flat(1),
        vec![dense(1, 2, &[1.0, 1.0], &[0.0, 0.0]), Layer::Relu, dense(2, 1, &[2.0, 3.0], &[0.0])],
    )
    .unwrap();
    assert_eq!(marginal_exact(&net, &[1.0], NeuronId::new(0, 0), 0).unwrap(), 2.0);
    let s = shapley_bruteforce(&net, &[1.0], 0, 0).unwrap();
    assert!((s[0] - 2.0).abs() < 1e-12 && (s[1] - 3.0).abs() < 1e-12);
    let ig = neuron_intgrad(&net, &[1.0], 0, 7).unwrap();
    assert_eq!(ig.values[0], vec![2.0, 3.0]);
}

#[test]
fn intgrad_of_a_linear_head_is_step_independent() {
    let net = Network::new(Shape::flat(1), vec![dense(1, 1, &[1.0], &[0.0]), Layer::Relu, dense(1, 1, &[3.0], &[0.0])]).unwrap();
    for steps in [1, 2, 5, 50] {
        assert_eq!(neuron_intgrad(&net, &[2.0], 0, steps).unwrap().values[0][0], 6.0);
    }
}

#[test]
fn shapley_of_dead_neurons_is_zero() {
    let mut r = rng(3);
    let mut nets = 0;
    for seed in 0..200 {
        let net = random_mlp(&[3, 10, 8, 2], seed);
        let x = random_input(3, &mut r);
        let rec = forward_record(&net, &x, None, 0).unwrap();
        if rec.dead_count() == 0 {
            continue;
        }
        for layer in 0..2 {
            let s = shapley_bruteforce(&net, &x, layer, 0).unwrap();
            for (u, v) in s.iter().enumerate() {
                if rec.activations[layer][u] == 0.0 {
                    assert!(v.abs() < 1e-9, "seed {seed} neuron ({layer}, {u}): {v}");
                }
            }
        }
        nets += 1;
        if nets == 20 {
            break;
        }
    }
    assert_eq!(nets, 20);
}

#[test]
fn shapley_is_efficient() {
    let mut r = rng(8);
    for seed in 0..10 {
        let net = random_mlp(&[2, 6, 5, 1], seed);
        let x = random_input(2, &mut r);
        for layer in 0..2 {
            let total: f64 = shapley_bruteforce(&net, &x, layer, 0).unwrap().iter().sum();
            assert!((total - layer_ablation_delta(&net, &x, layer, 0).unwrap()).abs() < 1e-9);
        }
    }
}

#[test]
fn shapley_is_symmetric_for_twin_neurons() {
    // Two hidden units with identical incoming and outgoing weights.
    let net = Network::new(
        Shape::flat(2),
        vec![
            dense(2, 3, &[1.0, 0.5, 1.0, 0.5, -0.3, 0.8], &[0.1, 0.1, 0.2]),
            Layer::Relu,
            dense(3, 2, &[1.0, 1.0, -0.7, 0.4, 0.4, 1.2], &[-0.5, 0.0]),
            Layer::Relu,
            dense(2, 1, &[1.0, -1.0], &[0.0]),
        ],
    )
    .unwrap();
    let s = shapley_bruteforce(&net, &[0.9, 0.4], 0, 0).unwrap();
    assert!((s[0] - s[1]).abs() < 1e-12);
}

#[test]
fn null_player_gets_nothing_everywhere() {
    let mut r = rng(13);
    for seed in 0..30 {
        let net = random_mlp(&[3, 7, 7, 2], seed);
        let x = random_input(3, &mut r);
        let rec = forward_record(&net, &x, None, 1).unwrap();
        let mct = neuron_mct(&net, &x, 1).unwrap();
        let ig = neuron_intgrad(&net, &x, 1, 10).unwrap();
        for id in net.neurons().filter(|&id| !rec.is_active(id)) {
            assert_eq!(mct.get(id), 0.0);
            assert_eq!(ig.get(id), 0.0);
            assert_eq!(marginal_signed(&net, &x, id, 1).unwrap(), 0.0);
        }
    }
}

#[test]
fn per_layer_intgrad_converges_to_completeness() {
    let mut r = rng(17);
    for seed in 0..10 {
        let net = random_mlp(&[3, 6, 6, 1], seed);
        let x = random_input(3, &mut r);
        let ig = neuron_intgrad(&net, &x, 0, 2000).unwrap();
        for layer in 0..2 {
            let sum: f64 = ig.signed[layer].iter().sum();
            let delta = layer_ablation_delta(&net, &x, layer, 0).unwrap();
            assert!((sum - delta).abs() <= 1e-3 * delta.abs().max(1.0), "{sum} vs {delta}");
        }
    }
}

#[test]
fn single_unit_paths_agree() {
    let net = random_mlp(&[2, 1, 4, 1], 2);
    let x = [0.7, -0.1];
    let a = neuron_intgrad_with(&net, &x, 0, 30, IntGradPath::PerLayer).unwrap();
    let b = neuron_intgrad_with(&net, &x, 0, 30, IntGradPath::PerNeuron).unwrap();
    assert!((a.signed[0][0] - b.signed[0][0]).abs() < 1e-12);
}
