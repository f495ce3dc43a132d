//! Structural edge embeddings derived from spectral factorizations of the
//! interaction graph, plus their on-disk format.
//!
//! Two embeddings are computed per graph, both with one row per edge:
//!
//! - distance: right singular vectors of the degree-normalized incidence
//!   M = diag(d)^{-1/2}·E, rescaled so squared row distances reproduce
//!   resistance distances on the edge walk (stationary directions dropped)
//! - centrality: right singular vectors of the oriented incidence B, so each
//!   squared row norm equals the edge's spanning centrality (null directions
//!   zeroed, not completed, to keep the norms exact)
//!
//! Neither incidence matrix is materialized; both are applied edge-by-edge
//! through [`MatrixApply`].

use std::io::{Read as _, Write as _};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::TinGraph;
use crate::mat::Mat;
use crate::svd::{rsvd, MatrixApply, SvdConfig};

/// Stationary-direction cutoff: |1 − σ²/2| at or below this is treated as an
/// exact unit eigenvalue of the edge walk.
const STATIONARY_TOL: f64 = 1e-9;

/// Relative cutoff under which an oriented-incidence singular value counts as
/// null space.
const NULL_TOL: f64 = 1e-9;

/// diag(d)^{-1/2}·E applied implicitly; rows are nodes (users then items),
/// columns are edges.
pub struct NormalizedIncidence {
    n_nodes: usize,
    /// Per edge: (user row, item row) in node indexing.
    ends: Vec<(usize, usize)>,
    inv_sqrt_d: Vec<f64>,
}

impl NormalizedIncidence {
    pub fn new(g: &TinGraph) -> Self {
        let n_nodes = g.n_users + g.n_items;
        let mut deg = vec![0.0f64; n_nodes];
        let ends: Vec<(usize, usize)> =
            g.edges.iter().map(|&(u, i)| (u, g.n_users + i)).collect();
        for &(a, b) in &ends {
            deg[a] += 1.0;
            deg[b] += 1.0;
        }
        let inv_sqrt_d =
            deg.iter().map(|&d| if d == 0.0 { 0.0 } else { 1.0 / d.sqrt() }).collect();
        NormalizedIncidence { n_nodes, ends, inv_sqrt_d }
    }
}

impl MatrixApply for NormalizedIncidence {
    fn rows(&self) -> usize {
        self.n_nodes
    }
    fn cols(&self) -> usize {
        self.ends.len()
    }
    fn apply(&self, x: &Mat) -> Mat {
        let mut out = Mat::zeros(self.n_nodes, x.cols);
        for (e, &(a, b)) in self.ends.iter().enumerate() {
            let (wa, wb) = (self.inv_sqrt_d[a], self.inv_sqrt_d[b]);
            for c in 0..x.cols {
                let v = x.at(e, c);
                *out.at_mut(a, c) += wa * v;
                *out.at_mut(b, c) += wb * v;
            }
        }
        out
    }
    fn apply_t(&self, x: &Mat) -> Mat {
        let mut out = Mat::zeros(self.ends.len(), x.cols);
        for (e, &(a, b)) in self.ends.iter().enumerate() {
            let (wa, wb) = (self.inv_sqrt_d[a], self.inv_sqrt_d[b]);
            for c in 0..x.cols {
                *out.at_mut(e, c) = wa * x.at(a, c) + wb * x.at(b, c);
            }
        }
        out
    }
}

/// Oriented incidence B (+1 at the user, −1 at the item) applied implicitly.
pub struct OrientedIncidence {
    n_nodes: usize,
    ends: Vec<(usize, usize)>,
}

impl OrientedIncidence {
    pub fn new(g: &TinGraph) -> Self {
        OrientedIncidence {
            n_nodes: g.n_users + g.n_items,
            ends: g.edges.iter().map(|&(u, i)| (u, g.n_users + i)).collect(),
        }
    }
}

impl MatrixApply for OrientedIncidence {
    fn rows(&self) -> usize {
        self.n_nodes
    }
    fn cols(&self) -> usize {
        self.ends.len()
    }
    fn apply(&self, x: &Mat) -> Mat {
        let mut out = Mat::zeros(self.n_nodes, x.cols);
        for (e, &(a, b)) in self.ends.iter().enumerate() {
            for c in 0..x.cols {
                let v = x.at(e, c);
                *out.at_mut(a, c) += v;
                *out.at_mut(b, c) -= v;
            }
        }
        out
    }
    fn apply_t(&self, x: &Mat) -> Mat {
        let mut out = Mat::zeros(self.ends.len(), x.cols);
        for (e, &(a, b)) in self.ends.iter().enumerate() {
            for c in 0..x.cols {
                *out.at_mut(e, c) = x.at(a, c) - x.at(b, c);
            }
        }
        out
    }
}

fn check_rank(g: &TinGraph, k: usize) -> Result<()> {
    let n = g.n_users + g.n_items;
    if k == 0 {
        return Err(Error::Contract("embedding dimension k must be at least 1".into()));
    }
    if k > g.n_edges() || k > n {
        return Err(Error::Contract(format!(
            "embedding dimension k={k} exceeds the graph ({} edges, {n} nodes)",
            g.n_edges()
        )));
    }
    Ok(())
}

/// Distance embedding: rows z_e with ‖z_e − z_f‖² equal to the resistance
/// distance between edges e and f under the edge walk, up to truncation at
/// rank k. Exact when k equals the incidence rank.
pub fn distance_embeddings(g: &TinGraph, k: usize, cfg: &SvdConfig, seed: u64) -> Result<Mat> {
    check_rank(g, k)?;
    let op = NormalizedIncidence::new(g);
    let svd = rsvd(&op, k, cfg, seed)?;
    let mut z = svd.v;
    for j in 0..k {
        let denom = 1.0 - svd.s[j] * svd.s[j] / 2.0;
        let scale = if denom.abs() <= STATIONARY_TOL {
            0.0
        } else if denom < 0.0 {
            return Err(Error::Numeric(format!(
                "singular value {} exceeds the walk spectrum bound",
                svd.s[j]
            )));
        } else {
            1.0 / denom.sqrt()
        };
        for r in 0..z.rows {
            *z.at_mut(r, j) *= scale;
        }
    }
    Ok(z)
}

/// Centrality embedding: rows z_e with ‖z_e‖² equal to the spanning
/// centrality of edge e. Null-space columns are zeroed so the norms stay
/// exact regardless of the requested k.
pub fn centrality_embeddings(g: &TinGraph, k: usize, cfg: &SvdConfig, seed: u64) -> Result<Mat> {
    check_rank(g, k)?;
    let op = OrientedIncidence::new(g);
    let svd = rsvd(&op, k, cfg, seed)?;
    let mut z = svd.v;
    let smax = svd.s.first().copied().unwrap_or(0.0);
    for j in 0..k {
        if svd.s[j] <= NULL_TOL * smax {
            for r in 0..z.rows {
                *z.at_mut(r, j) = 0.0;
            }
        }
    }
    Ok(z)
}

/// Both structural embeddings for a graph, with the parameters that produced
/// them.
pub struct StructEmbeddings {
    pub z_dist: Mat,
    pub z_cent: Mat,
    pub k: usize,
    pub seed: u64,
}

impl StructEmbeddings {
    pub fn compute(g: &TinGraph, k: usize, cfg: &SvdConfig, seed: u64) -> Result<Self> {
        let z_dist = distance_embeddings(g, k, cfg, seed)?;
        let z_cent = centrality_embeddings(g, k, cfg, seed ^ 0x63656e74)?;
        Ok(StructEmbeddings { z_dist, z_cent, k, seed })
    }
}

/// Squared row distance within an embedding.
pub fn row_distance_sq(z: &Mat, e: usize, f: usize) -> f64 {
    let (a, b) = (z.row(e), z.row(f));
    let mut d = 0.0;
    for j in 0..z.cols {
        let t = a[j] - b[j];
        d += t * t;
    }
    d
}

/// Squared row norm within an embedding.
pub fn row_norm_sq(z: &Mat, e: usize) -> f64 {
    let r = z.row(e);
    r.iter().map(|&x| x * x).sum()
}

// ── embedding file format ────────────────────────────────────────────────

const MAGIC: &[u8; 8] = b"SAFTEMB1";

pub const TAG_DISTANCE: u8 = 0;
pub const TAG_CENTRALITY: u8 = 1;

/// Write an embedding matrix with its provenance tag and seed.
pub fn write_embedding(path: &Path, z: &Mat, tag: u8, seed: u64) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(MAGIC)?;
    f.write_all(&(z.rows as u64).to_le_bytes())?;
    f.write_all(&(z.cols as u64).to_le_bytes())?;
    f.write_all(&[tag])?;
    f.write_all(&seed.to_le_bytes())?;
    let mut buf = Vec::with_capacity(z.data.len() * 8);
    for &x in &z.data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    f.write_all(&buf)?;
    Ok(())
}

/// Read an embedding file back: (matrix, tag, seed).
pub fn read_embedding(path: &Path) -> Result<(Mat, u8, u64)> {
    let mut f = std::fs::File::open(path)?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)
        .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("{}: not an embedding file", path.display())));
    }
    let mut b8 = [0u8; 8];
    f.read_exact(&mut b8)
        .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
    let rows = u64::from_le_bytes(b8) as usize;
    f.read_exact(&mut b8)
        .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
    let cols = u64::from_le_bytes(b8) as usize;
    let mut tag = [0u8; 1];
    f.read_exact(&mut tag)
        .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
    f.read_exact(&mut b8)
        .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
    let seed = u64::from_le_bytes(b8);
    if rows.checked_mul(cols).is_none() || rows * cols > (1 << 28) {
        return Err(Error::Format(format!("{}: implausible embedding shape", path.display())));
    }
    let mut data = vec![0.0f64; rows * cols];
    let mut fb = [0u8; 8];
    for slot in data.iter_mut() {
        f.read_exact(&mut fb)
            .map_err(|_| Error::Format(format!("{}: truncated payload", path.display())))?;
        *slot = f64::from_le_bytes(fb);
    }
    let mut trailing = [0u8; 1];
    if f.read(&mut trailing)? != 0 {
        return Err(Error::Format(format!("{}: trailing bytes after payload", path.display())));
    }
    Ok((Mat::from_vec(rows, cols, data)?, tag[0], seed))
}
