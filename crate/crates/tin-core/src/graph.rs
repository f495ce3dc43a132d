//! TIN data model and implicit incidence-derived operators.
//!
//! The bipartite interaction graph induces three edge-to-edge random-walk
//! operators: through shared users, through shared items, and through either
//! endpoint. None of them is ever materialized; applying one to an |E|×d
//! matrix costs O(|E|·d) by grouping edges per endpoint and reusing group sums.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::tensor::SymmetricMap;

/// Bipartite textual interaction network. Edge order is insertion order and is
/// the canonical index space for labels, texts, embeddings, and batches.
#[derive(Debug, Clone)]
pub struct TinGraph {
    pub n_users: usize,
    pub n_items: usize,
    /// (user index, item index) per edge.
    pub edges: Vec<(usize, usize)>,
    /// Class label per edge, in [0, n_classes).
    pub labels: Vec<usize>,
    /// Raw edge text; tokenization happens at encoding time.
    pub texts: Vec<String>,
    pub n_classes: usize,
    /// Edge ids incident to each user, ascending.
    pub user_edges: Vec<Vec<usize>>,
    /// Edge ids incident to each item, ascending.
    pub item_edges: Vec<Vec<usize>>,
}

impl TinGraph {
    pub fn new(
        n_users: usize,
        n_items: usize,
        edges: Vec<(usize, usize)>,
        labels: Vec<usize>,
        texts: Vec<String>,
        n_classes: usize,
    ) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::Contract("graph has no interactions".into()));
        }
        if labels.len() != edges.len() || texts.len() != edges.len() {
            return Err(Error::Contract(format!(
                "edge/label/text counts differ: {} / {} / {}",
                edges.len(),
                labels.len(),
                texts.len()
            )));
        }
        if n_classes < 2 {
            return Err(Error::Contract(format!("need at least 2 classes, got {n_classes}")));
        }
        let mut user_edges = vec![Vec::new(); n_users];
        let mut item_edges = vec![Vec::new(); n_items];
        let mut seen = std::collections::BTreeSet::new();
        for (e, &(u, i)) in edges.iter().enumerate() {
            if u >= n_users || i >= n_items {
                return Err(Error::Contract(format!(
                    "edge {e} references (user {u}, item {i}) outside {n_users}x{n_items}"
                )));
            }
            if !seen.insert((u, i)) {
                return Err(Error::Contract(format!(
                    "duplicate interaction for (user {u}, item {i}) at edge {e}"
                )));
            }
            user_edges[u].push(e);
            item_edges[i].push(e);
        }
        for (e, &l) in labels.iter().enumerate() {
            if l >= n_classes {
                return Err(Error::Contract(format!(
                    "edge {e} label {l} outside [0, {n_classes})"
                )));
            }
        }
        Ok(TinGraph {
            n_users,
            n_items,
            edges,
            labels,
            texts,
            n_classes,
            user_edges,
            item_edges,
        })
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn user_degree(&self, u: usize) -> usize {
        self.user_edges[u].len()
    }

    pub fn item_degree(&self, i: usize) -> usize {
        self.item_edges[i].len()
    }

    /// Max degree over both sides; `b` at this value makes sampling exhaustive.
    pub fn max_degree(&self) -> usize {
        let du = self.user_edges.iter().map(Vec::len).max().unwrap_or(0);
        let di = self.item_edges.iter().map(Vec::len).max().unwrap_or(0);
        du.max(di)
    }
}

/// Implicit incidence operators over an edge set (the full graph or an induced
/// mini-batch subgraph). Degrees are always the induced ones.
#[derive(Debug, Clone)]
pub struct IncidenceOps {
    /// Global edge id per local row; ascending.
    pub edge_ids: Vec<usize>,
    /// (user, item) per local edge.
    pub endpoints: Vec<(usize, usize)>,
    /// Group index per local edge, user side / item side.
    user_group_of: Vec<usize>,
    item_group_of: Vec<usize>,
    /// Local edge rows per group; a group is one endpoint node.
    user_groups: Vec<Vec<usize>>,
    item_groups: Vec<Vec<usize>>,
}

impl IncidenceOps {
    /// Operators over the whole graph.
    pub fn build(g: &TinGraph) -> Self {
        Self::induced(g, &(0..g.n_edges()).collect::<Vec<_>>())
            .expect("full edge set is always valid")
    }

    /// Operators over the subgraph induced by `edge_ids` (deduplicated,
    /// ascending). Degrees are recomputed on the induced subgraph.
    pub fn induced(g: &TinGraph, edge_ids: &[usize]) -> Result<Self> {
        if edge_ids.is_empty() {
            return Err(Error::Contract("induced edge set is empty".into()));
        }
        let mut ids: Vec<usize> = edge_ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        if *ids.last().unwrap() >= g.n_edges() {
            return Err(Error::Contract(format!(
                "edge id {} outside graph with {} edges",
                ids.last().unwrap(),
                g.n_edges()
            )));
        }
        let endpoints: Vec<(usize, usize)> = ids.iter().map(|&e| g.edges[e]).collect();

        // Group local edges by endpoint node, node ids ascending.
        let group = |side_of: &dyn Fn(usize) -> usize| -> (Vec<usize>, Vec<Vec<usize>>) {
            let mut by_node: std::collections::BTreeMap<usize, Vec<usize>> =
                std::collections::BTreeMap::new();
            for (local, _) in ids.iter().enumerate() {
                by_node.entry(side_of(local)).or_default().push(local);
            }
            let groups: Vec<Vec<usize>> = by_node.into_values().collect();
            let mut of = vec![0usize; ids.len()];
            for (gi, members) in groups.iter().enumerate() {
                for &m in members {
                    of[m] = gi;
                }
            }
            (of, groups)
        };
        let (user_group_of, user_groups) = group(&|l| endpoints[l].0);
        let (item_group_of, item_groups) = group(&|l| endpoints[l].1);

        Ok(IncidenceOps {
            edge_ids: ids,
            endpoints,
            user_group_of,
            item_group_of,
            user_groups,
            item_groups,
        })
    }

    pub fn n_edges(&self) -> usize {
        self.edge_ids.len()
    }

    fn check_rows(&self, x: &Mat, what: &str) -> Result<()> {
        if x.rows != self.n_edges() {
            return Err(Error::Contract(format!(
                "{what}: input has {} rows, operator covers {} edges",
                x.rows,
                self.n_edges()
            )));
        }
        Ok(())
    }

    fn apply_grouped(
        &self,
        x: &Mat,
        group_of: &[usize],
        groups: &[Vec<usize>],
        coeff: impl Fn(usize) -> f64,
        out: &mut Mat,
        accumulate: bool,
    ) {
        let d = x.cols;
        let mut sums = Mat::zeros(groups.len(), d);
        for (gi, members) in groups.iter().enumerate() {
            let row = sums.row_mut(gi);
            for &m in members {
                let xr = x.row(m);
                for c in 0..d {
                    row[c] += xr[c];
                }
            }
        }
        for e in 0..x.rows {
            let gi = group_of[e];
            let w = coeff(groups[gi].len());
            let s = sums.row(gi);
            let o = out.row_mut(e);
            if accumulate {
                for c in 0..d {
                    o[c] += w * s[c];
                }
            } else {
                for c in 0..d {
                    o[c] = w * s[c];
                }
            }
        }
    }

    /// Shared-user walk with shifted degree: out[e] = (Σ_{f ~u e} x[f]) / (d_u + 1),
    /// the sum including e itself. Equals the dense shifted transition product.
    pub fn apply_user_transition(&self, x: &Mat) -> Result<Mat> {
        self.check_rows(x, "apply_user_transition")?;
        let mut out = Mat::zeros(x.rows, x.cols);
        self.apply_grouped(x, &self.user_group_of, &self.user_groups, |d| 1.0 / (d as f64 + 1.0), &mut out, false);
        Ok(out)
    }

    /// Shared-item counterpart of `apply_user_transition`.
    pub fn apply_item_transition(&self, x: &Mat) -> Result<Mat> {
        self.check_rows(x, "apply_item_transition")?;
        let mut out = Mat::zeros(x.rows, x.cols);
        self.apply_grouped(x, &self.item_group_of, &self.item_groups, |d| 1.0 / (d as f64 + 1.0), &mut out, false);
        Ok(out)
    }

    /// Either-endpoint walk: out[e] = su/(2·d_u) + si/(2·d_i) with unshifted
    /// degrees. Symmetric and doubly stochastic.
    pub fn apply_line_transition(&self, x: &Mat) -> Result<Mat> {
        self.check_rows(x, "apply_line_transition")?;
        let mut out = Mat::zeros(x.rows, x.cols);
        self.apply_grouped(x, &self.user_group_of, &self.user_groups, |d| 0.5 / d as f64, &mut out, false);
        self.apply_grouped(x, &self.item_group_of, &self.item_groups, |d| 0.5 / d as f64, &mut out, true);
        Ok(out)
    }

    /// Induced user-side degree of local edge `e` (unshifted).
    pub fn user_degree_of(&self, e: usize) -> usize {
        self.user_groups[self.user_group_of[e]].len()
    }

    /// Induced item-side degree of local edge `e` (unshifted).
    pub fn item_degree_of(&self, e: usize) -> usize {
        self.item_groups[self.item_group_of[e]].len()
    }
}

/// Which edge-to-edge operator a [`SymmetricMap`] wrapper applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionKind {
    User,
    Item,
    Line,
}

/// Tape-compatible wrapper around one transition operator. All three operators
/// are symmetric, so the backward pass reuses the forward apply.
pub struct Transition {
    pub ops: Rc<IncidenceOps>,
    pub kind: TransitionKind,
}

impl SymmetricMap for Transition {
    fn dim(&self) -> usize {
        self.ops.n_edges()
    }

    fn apply(&self, x: &Mat) -> Mat {
        let r = match self.kind {
            TransitionKind::User => self.ops.apply_user_transition(x),
            TransitionKind::Item => self.ops.apply_item_transition(x),
            TransitionKind::Line => self.ops.apply_line_transition(x),
        };
        r.expect("row count checked at tape insertion")
    }
}

/// Row-wise softmax restricted to nonzero entries; exact zeros stay zero.
/// A row of all zeros is returned unchanged (documented convention).
pub fn ssoftmax_dense(m: &Mat) -> Mat {
    let mut out = Mat::zeros(m.rows, m.cols);
    for r in 0..m.rows {
        let row = m.row(r);
        let support: Vec<usize> = (0..m.cols).filter(|&c| row[c] != 0.0).collect();
        if support.is_empty() {
            continue;
        }
        let mx = support.iter().map(|&c| row[c]).fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for &c in &support {
            z += (row[c] - mx).exp();
        }
        let o = out.row_mut(r);
        for &c in &support {
            o[c] = (row[c] - mx).exp() / z;
        }
    }
    out
}
