//! Synthetic interaction networks with a planted, recoverable signal.
//!
//! Users and items are split into two communities and interactions prefer
//! staying within a community. Each interaction carries a short text with
//! one marker word. The label combines two independent bits: the community
//! of the interaction's user (visible only through graph structure and node
//! identity) and the marker class (visible only through the text). A
//! text-only classifier therefore caps out near half accuracy, while a
//! structure-aware one can recover all four classes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::TinGraph;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_edges: usize,
    /// Probability that an interaction stays inside its user's community.
    pub p_intra: f64,
    /// Words per interaction text, marker included.
    pub text_words: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 60,
            n_items: 40,
            n_edges: 600,
            p_intra: 0.9,
            text_words: 6,
            seed: 42,
        }
    }
}

const FILLER: &[&str] = &[
    "the", "a", "this", "that", "item", "was", "is", "really", "quite", "very", "somewhat",
    "arrived", "ordered", "again", "would", "could", "nice", "okay", "fine", "package", "box",
    "time", "second", "first",
];

/// Marker vocabularies per text bit. Fillers never collide with these.
const MARKERS: [&[&str]; 2] = [&["amber", "alpine"], &["basil", "bravado"]];

/// Number of classes the generator plants.
pub const SYNTH_CLASSES: usize = 4;

fn community_of(idx: usize, total: usize) -> usize {
    usize::from(idx >= total / 2)
}

/// Generate a labeled interaction network per the config. Labels are
/// 2·(user community) + (marker class).
pub fn planted_tin(cfg: &SynthConfig) -> Result<TinGraph> {
    if cfg.n_users < 2 || cfg.n_items < 2 {
        return Err(Error::Contract("planted graph needs two communities per side".into()));
    }
    if !(0.0..=1.0).contains(&cfg.p_intra) {
        return Err(Error::Contract("p_intra must be a probability".into()));
    }
    if cfg.text_words == 0 {
        return Err(Error::Contract("texts need at least the marker word".into()));
    }
    // duplicate pairs are rejected, so demand comfortable headroom
    if cfg.n_edges > cfg.n_users * cfg.n_items / 2 {
        return Err(Error::Contract(format!(
            "{} interactions over {}x{} pairs leaves no room for distinct pairs",
            cfg.n_edges, cfg.n_users, cfg.n_items
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut used = std::collections::BTreeSet::new();
    let mut edges = Vec::with_capacity(cfg.n_edges);
    let mut labels = Vec::with_capacity(cfg.n_edges);
    let mut texts = Vec::with_capacity(cfg.n_edges);
    let mut attempts = 0usize;
    while edges.len() < cfg.n_edges {
        attempts += 1;
        if attempts > 200 * cfg.n_edges {
            return Err(Error::Numeric("planted generator failed to place edges".into()));
        }
        let u = rng.gen_range(0..cfg.n_users);
        let u_comm = community_of(u, cfg.n_users);
        let i_comm = if rng.gen::<f64>() < cfg.p_intra { u_comm } else { 1 - u_comm };
        let half = cfg.n_items / 2;
        let i = if i_comm == 0 {
            rng.gen_range(0..half)
        } else {
            rng.gen_range(half..cfg.n_items)
        };
        if !used.insert((u, i)) {
            continue;
        }
        let text_bit = usize::from(rng.gen::<bool>());
        let label = 2 * u_comm + text_bit;
        let marker = MARKERS[text_bit][rng.gen_range(0..MARKERS[text_bit].len())];
        let marker_pos = rng.gen_range(0..cfg.text_words);
        let mut words = Vec::with_capacity(cfg.text_words);
        for pos in 0..cfg.text_words {
            if pos == marker_pos {
                words.push(marker);
            } else {
                words.push(FILLER[rng.gen_range(0..FILLER.len())]);
            }
        }
        edges.push((u, i));
        labels.push(label);
        texts.push(words.join(" "));
    }
    TinGraph::new(cfg.n_users, cfg.n_items, edges, labels, texts, SYNTH_CLASSES)
}

/// Size envelope for [`random_tin`].
#[derive(Debug, Clone)]
pub struct RandomTinConfig {
    pub max_users: usize,
    pub max_items: usize,
    pub max_edges: usize,
    /// Also cap the edge count at the node count, so a rank-complete
    /// embedding (k = |E|) is representable.
    pub cap_edges_at_nodes: bool,
}

impl Default for RandomTinConfig {
    fn default() -> Self {
        RandomTinConfig { max_users: 10, max_items: 10, max_edges: 25, cap_edges_at_nodes: false }
    }
}

/// Small random interaction network for randomized checks: uniform sizes
/// within the envelope, distinct (user, item) pairs, uniform labels over 2-4
/// classes, throwaway texts. May be disconnected; may have isolated nodes.
pub fn random_tin(cfg: &RandomTinConfig, seed: u64) -> TinGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_users = rng.gen_range(1..=cfg.max_users.max(1));
    let n_items = rng.gen_range(1..=cfg.max_items.max(1));
    let mut cap = cfg.max_edges.min(n_users * n_items);
    if cfg.cap_edges_at_nodes {
        cap = cap.min(n_users + n_items);
    }
    let n_edges = rng.gen_range(1..=cap.max(1));
    let mut pairs: Vec<(usize, usize)> = (0..n_users)
        .flat_map(|u| (0..n_items).map(move |i| (u, i)))
        .collect();
    pairs.shuffle(&mut rng);
    pairs.truncate(n_edges);
    pairs.sort_unstable();
    let n_classes = rng.gen_range(2..=4);
    let labels: Vec<usize> = (0..n_edges).map(|_| rng.gen_range(0..n_classes)).collect();
    let texts: Vec<String> = (0..n_edges)
        .map(|_| {
            let a = FILLER[rng.gen_range(0..FILLER.len())];
            let b = FILLER[rng.gen_range(0..FILLER.len())];
            format!("{a} {b}")
        })
        .collect();
    TinGraph::new(n_users, n_items, pairs, labels, texts, n_classes)
        .expect("generated pairs are distinct and labels in range")
}
