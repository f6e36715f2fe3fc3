mod common;

use common::{pruning_counterexample, random_input, random_mlp, rng};
use pathgrad::contrib::{neuron_intgrad, neuron_mct};
use pathgrad::nn::{backward, forward_record};
use pathgrad::pathway::{
    active_subnet, build_frozen, dead_fraction, masked_record, select_pathway, PathwayMask, Provenance,
};
use pathgrad::pruneobj::{dgr_optimize, greedy_prune, DgrConfig};
use pathgrad::NeuronId;

const U: NeuronId = NeuronId::new(0, 0);
const V: NeuronId = NeuronId::new(0, 1);
const P: NeuronId = NeuronId::new(1, 0);
const Q: NeuronId = NeuronId::new(1, 1);

#[test]
fn hand_net_forward_values() {
    let net = pruning_counterexample();
    let rec = forward_record(&net, &[1.0], None, 0).unwrap();
    assert_eq!(rec.activations, vec![vec![1.0, 2.0], vec![0.0, 2.5]]);
    assert_eq!(rec.output, 2.5);
    let mct = neuron_mct(&net, &[1.0], 0).unwrap();
    assert_eq!([mct.get(U), mct.get(V), mct.get(P), mct.get(Q)], [0.5, 2.0, 0.0, 2.5]);
}

#[test]
fn greedy_pruning_revives_a_dead_neuron() {
    let net = pruning_counterexample();
    let (mask, state) = greedy_prune(&net, &[1.0], 0, 0.25, 1).unwrap();
    assert_eq!(state.removed, vec![U]);
    assert!(!mask.contains(U) && mask.contains(V) && mask.contains(P) && mask.contains(Q));
    assert_eq!(state.kept_history, vec![4, 3]);
    assert_eq!(state.drift, vec![0.0, 0.5]);

    let original = forward_record(&net, &[1.0], None, 0).unwrap();
    let pruned = masked_record(&net, &[1.0], &mask, 0).unwrap();
    assert_eq!(pruned.activation(P), 1.0);
    assert_eq!(pruned.output, 3.0);
    let df = dead_fraction(&mask, &original, Some(&pruned)).unwrap();
    assert_eq!(df.originally_dead, 1.0 / 3.0);
    assert_eq!(df.originally_dead_now_active, Some(1.0 / 3.0));

    let ig = select_pathway(&neuron_intgrad(&net, &[1.0], 0, 50).unwrap(), 0.25).unwrap();
    assert_eq!(dead_fraction(&ig, &original, None).unwrap().originally_dead, 0.0);
}

#[test]
fn greedy_with_no_removals_keeps_everything() {
    let net = pruning_counterexample();
    let (mask, state) = greedy_prune(&net, &[1.0], 0, 0.0, 1).unwrap();
    assert_eq!(mask.kept_count(), 4);
    assert_eq!(state.drift, vec![0.0]);
}

#[test]
fn greedy_never_prunes_zero_scores_and_masks_only_shrink() {
    let mut r = rng(2);
    for seed in 0..20 {
        let net = random_mlp(&[3, 8, 8, 1], seed);
        let x = random_input(3, &mut r);
        let (mask, state) = greedy_prune(&net, &x, 0, 0.7, 2).unwrap();
        assert!(state.kept_history.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(mask.kept_count(), *state.kept_history.last().unwrap());
        if !state.stopped_early {
            assert_eq!(mask.kept_count(), pathgrad::pathway::kept_target(16, 0.7));
        }
    }
}

#[test]
fn dead_fraction_example() {
    let net = common::random_mlp(&[1, 3, 1], 0);
    let mut rec = forward_record(&net, &[0.0], None, 0).unwrap();
    rec.activations = vec![vec![0.0, 1.0, 2.0]];
    let mask = PathwayMask::from_layers(vec![vec![true, true, false]], Provenance::Manual);
    assert_eq!(dead_fraction(&mask, &rec, None).unwrap().originally_dead, 0.5);
}

#[test]
fn contribution_pathways_avoid_dead_neurons() {
    let mut r = rng(31);
    for seed in 0..50 {
        let net = random_mlp(&[4, 10, 10, 3], seed);
        let x = random_input(4, &mut r);
        let rec = forward_record(&net, &x, None, 2).unwrap();
        for c in [neuron_mct(&net, &x, 2).unwrap(), neuron_intgrad(&net, &x, 2, 20).unwrap()] {
            let Ok(mask) = select_pathway(&c, 0.8) else { continue };
            if mask.threshold_positive() {
                assert_eq!(dead_fraction(&mask, &rec, None).unwrap().originally_dead, 0.0);
            }
        }
    }
}

#[test]
fn frozen_network_reproduces_the_reference() {
    let mut r = rng(41);
    for seed in 0..20 {
        let net = random_mlp(&[4, 8, 8, 2], seed);
        let x = random_input(4, &mut r);
        let rec = forward_record(&net, &x, None, 0).unwrap();
        let Ok(mask) = select_pathway(&neuron_mct(&net, &x, 0).unwrap(), 0.75) else { continue };
        let frozen = build_frozen(&net, &rec, &mask).unwrap();
        assert_eq!(frozen.response(&x).unwrap().to_bits(), rec.output.to_bits());

        let full = build_frozen(&net, &rec, &PathwayMask::full(&net.hidden_widths(), Provenance::Manual)).unwrap();
        assert_eq!(full.input_gradient(&x).unwrap(), backward(&net, &rec, None).unwrap().input_grad);
    }
}

#[test]
fn active_subnet_excludes_dead_units() {
    let net = pruning_counterexample();
    let rec = forward_record(&net, &[1.0], None, 0).unwrap();
    assert_eq!(active_subnet(&rec).layers, vec![vec![true, true], vec![false, true]]);
}

#[test]
fn untrained_gates_keep_the_output() {
    let net = random_mlp(&[3, 5, 5, 2], 1);
    let cfg = DgrConfig { gamma: 0.0, iterations: 0, ..Default::default() };
    let (gates, _) = dgr_optimize(&net, &[0.2, 0.4, -0.6], 0, &cfg).unwrap();
    assert!(gates.lambdas.iter().flatten().all(|&l| l == 1.0));
    assert_eq!(gates.objective, vec![0.0]);
}

#[test]
fn dgr_objective_decreases_and_gates_stay_non_negative() {
    let net = random_mlp(&[3, 8, 8, 2], 5);
    let cfg = DgrConfig { iterations: 100, gamma: 0.05, ..Default::default() };
    let (gates, mask) = dgr_optimize(&net, &[0.5, -0.2, 0.8], 1, &cfg).unwrap();
    assert!(gates.lambdas.iter().flatten().all(|&l| l >= 0.0));
    assert!(gates.objective.last().unwrap() <= gates.objective.first().unwrap());
    assert_eq!(mask.kept_count(), pathgrad::pathway::kept_target(16, 0.9));
}
