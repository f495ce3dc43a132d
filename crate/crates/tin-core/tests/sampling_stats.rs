//! Distributional checks for the neighborhood samplers. The exponential-clock
//! draw should reproduce weighted sampling without replacement exactly: the
//! first pick lands on i with probability w_i/Σw, later picks renormalize
//! over what is left. Monte Carlo frequencies over many seeds are compared to
//! those closed forms in total variation.

use std::collections::BTreeMap;

use tin_core::graph::TinGraph;
use tin_core::mat::Mat;
use tin_core::sampling::{
    sample_centrality, sample_distance, sample_random, SamplerConfig, SamplerKind, Side,
};

const TRIALS: u64 = 100_000;

fn star(n_edges: usize) -> TinGraph {
    TinGraph::new(
        1,
        n_edges,
        (0..n_edges).map(|i| (0, i)).collect(),
        vec![0; n_edges],
        (0..n_edges).map(|i| format!("t{i}")).collect(),
        2,
    )
    .unwrap()
}

/// Centrality embedding whose squared row norms equal the given weights.
fn weights_as_rows(weights: &[f64]) -> Mat {
    Mat::from_fn(weights.len(), 1, |r, _| weights[r].sqrt())
}

fn total_variation(empirical: &BTreeMap<Vec<usize>, u64>, exact: &BTreeMap<Vec<usize>, f64>) -> f64 {
    let mut keys: Vec<&Vec<usize>> = empirical.keys().chain(exact.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut tv = 0.0;
    for k in keys {
        let emp = *empirical.get(k).unwrap_or(&0) as f64 / TRIALS as f64;
        let exa = *exact.get(k).unwrap_or(&0.0);
        tv += (emp - exa).abs();
    }
    tv / 2.0
}

#[test]
fn single_draw_marginals_proportional_to_weights() {
    let weights = [4.0, 3.0, 2.0, 1.0];
    let g = star(weights.len());
    let z = weights_as_rows(&weights);
    let total: f64 = weights.iter().sum();

    let mut counts = BTreeMap::new();
    for seed in 0..TRIALS {
        let cfg = SamplerConfig { kind: SamplerKind::Centrality, b: 1, seed };
        let got = sample_centrality(&g, 0, Side::User, &z, &cfg).unwrap();
        *counts.entry(got).or_insert(0u64) += 1;
    }
    let exact: BTreeMap<Vec<usize>, f64> =
        (0..weights.len()).map(|e| (vec![e], weights[e] / total)).collect();
    let tv = total_variation(&counts, &exact);
    assert!(tv <= 0.02, "total variation {tv} exceeds 0.02");
}

#[test]
fn zero_weight_edge_is_never_drawn() {
    let weights = [3.0, 1.0, 0.0];
    let g = star(weights.len());
    let z = weights_as_rows(&weights);

    let mut counts = [0u64; 3];
    for seed in 0..TRIALS {
        let cfg = SamplerConfig { kind: SamplerKind::Centrality, b: 1, seed };
        let got = sample_centrality(&g, 0, Side::User, &z, &cfg).unwrap();
        counts[got[0]] += 1;
    }
    assert_eq!(counts[2], 0, "an edge with zero weight was drawn");
    let p0 = counts[0] as f64 / TRIALS as f64;
    let p1 = counts[1] as f64 / TRIALS as f64;
    assert!((p0 - 0.75).abs() <= 0.01, "weight-3 edge frequency {p0}");
    assert!((p1 - 0.25).abs() <= 0.01, "weight-1 edge frequency {p1}");
}

#[test]
fn pair_draws_match_sampling_without_replacement() {
    let weights = [4.0, 3.0, 2.0, 1.0];
    let g = star(weights.len());
    let z = weights_as_rows(&weights);
    let total: f64 = weights.iter().sum();

    let mut counts = BTreeMap::new();
    for seed in 0..TRIALS {
        let cfg = SamplerConfig { kind: SamplerKind::Centrality, b: 2, seed };
        let got = sample_centrality(&g, 0, Side::User, &z, &cfg).unwrap();
        assert_eq!(got.len(), 2);
        *counts.entry(got).or_insert(0u64) += 1;
    }
    // P({i,j}) summed over both pick orders
    let mut exact = BTreeMap::new();
    for i in 0..weights.len() {
        for j in (i + 1)..weights.len() {
            let p = weights[i] / total * weights[j] / (total - weights[i])
                + weights[j] / total * weights[i] / (total - weights[j]);
            exact.insert(vec![i, j], p);
        }
    }
    let tv = total_variation(&counts, &exact);
    assert!(tv <= 0.02, "total variation {tv} exceeds 0.02");
}

#[test]
fn uniform_sampler_is_uniform_over_pairs() {
    let g = star(5);
    let mut counts = BTreeMap::new();
    for seed in 0..TRIALS {
        let cfg = SamplerConfig { kind: SamplerKind::Random, b: 2, seed };
        let got = sample_random(&g, 0, Side::User, &cfg).unwrap();
        *counts.entry(got).or_insert(0u64) += 1;
    }
    let mut exact = BTreeMap::new();
    for i in 0..5 {
        for j in (i + 1)..5 {
            exact.insert(vec![i, j], 0.1);
        }
    }
    let tv = total_variation(&counts, &exact);
    assert!(tv <= 0.02, "total variation {tv} exceeds 0.02");
}

#[test]
fn distance_weights_come_from_clamped_dot_products() {
    // anchor edge 0 has row [1, 0]; candidate rows put the intended weight in
    // the first coordinate, plus junk the anchor ignores in the second
    let g = star(4);
    let mut z = Mat::zeros(4, 2);
    *z.at_mut(0, 0) = 1.0;
    let weights = [2.0, 1.0, 1.0];
    for (i, &w) in weights.iter().enumerate() {
        *z.at_mut(i + 1, 0) = w;
        *z.at_mut(i + 1, 1) = -3.0;
    }
    let total: f64 = weights.iter().sum();

    let mut counts = [0u64; 4];
    for seed in 0..TRIALS {
        let cfg = SamplerConfig { kind: SamplerKind::Distance, b: 1, seed };
        let got = sample_distance(&g, 0, Side::User, &z, &cfg).unwrap();
        counts[got[0]] += 1;
    }
    assert_eq!(counts[0], 0, "the anchor edge must stay out of its own draw");
    for (i, &w) in weights.iter().enumerate() {
        let p = counts[i + 1] as f64 / TRIALS as f64;
        assert!((p - w / total).abs() <= 0.01, "edge {} frequency {p}", i + 1);
    }
}

#[test]
fn budget_covering_neighborhood_is_seed_independent() {
    let g = star(3);
    for seed in 0..100 {
        let cfg = SamplerConfig { kind: SamplerKind::Random, b: 3, seed };
        assert_eq!(sample_random(&g, 0, Side::User, &cfg).unwrap(), vec![0, 1, 2]);
        let cfg = SamplerConfig { kind: SamplerKind::Centrality, b: 5, seed };
        let z = weights_as_rows(&[1.0, 5.0, 2.0]);
        assert_eq!(sample_centrality(&g, 0, Side::User, &z, &cfg).unwrap(), vec![0, 1, 2]);
    }
}
