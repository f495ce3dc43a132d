//! The transformer encoder over per-interaction token blocks.
//!
//! Each interaction is encoded as a token block (proxy ∥ text ∥ user ∥ item ∥
//! two structural tokens). The first layer sees only proxy and text rows and
//! applies MHA + FFN without residual or normalization; every later layer
//! runs MHA + FFN + residual + layer norm over the full N+5 block, feeds the
//! post-attention user/item rows through graph message passing, and fuses the
//! aggregates back into the proxy row. The pooled representation averages the
//! token means of the last two layers and feeds a softmax classifier.
//!
//! Tokens come from a hashing tokenizer (lowercase, split on
//! non-alphanumerics, FNV-1a into a fixed bucket count, pad id 0). There are
//! no positional encodings, so the text rows form a bag of tokens and the
//! whole forward pass is equivariant to their order.
//!
//! Parameters live in a [`ParamStore`] keyed by stable names; `bind` stages
//! them onto a tape (leaves when trainable, constants otherwise) for one
//! forward/backward pass.

use std::collections::BTreeMap;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{IncidenceOps, TinGraph, Transition, TransitionKind};
use crate::mat::Mat;
use crate::mp::{self, FinalizeParams, GauParams, MpConfig};
use crate::tensor::{concat_cols, concat_rows, gather_rows, SymmetricMap, Tape, Tensor};

// ── tokenizer ────────────────────────────────────────────────────────────

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Hash a text into exactly `n` token ids in [0, buckets): lowercase, split
/// on non-alphanumeric characters, FNV-1a per word, pad with id 0.
pub fn tokenize(text: &str, n: usize, buckets: usize) -> Vec<usize> {
    let lower = text.to_lowercase();
    let mut ids: Vec<usize> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| (fnv1a(w.as_bytes()) % buckets as u64) as usize)
        .collect();
    ids.truncate(n);
    ids.resize(n, 0);
    ids
}

// ── configuration and parameters ─────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct EncoderConfig {
    /// Transformer layers; at least two because pooling reads the last two.
    pub layers: usize,
    pub heads: usize,
    /// Token width; must divide evenly across heads.
    pub d: usize,
    /// Text tokens per interaction.
    pub text_len: usize,
    /// Tokenizer hash buckets.
    pub vocab_buckets: usize,
    pub n_classes: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 2 {
            return Err(Error::Contract("encoder needs at least 2 layers".into()));
        }
        if self.heads == 0 || self.d == 0 || self.d % self.heads != 0 {
            return Err(Error::Contract(format!(
                "hidden dim {} must be a positive multiple of the head count {}",
                self.d, self.heads
            )));
        }
        if self.text_len == 0 {
            return Err(Error::Contract("text length must be at least 1".into()));
        }
        if self.vocab_buckets == 0 {
            return Err(Error::Contract("tokenizer needs at least 1 bucket".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::Contract("classification needs at least 2 classes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Mat,
    pub trainable: bool,
}

/// Ordered, name-addressable parameter collection.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    list: Vec<Param>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn add(&mut self, name: &str, value: Mat, trainable: bool) {
        assert!(!self.index.contains_key(name), "duplicate parameter name {name}");
        self.index.insert(name.to_string(), self.list.len());
        self.list.push(Param { name: name.to_string(), value, trainable });
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.index.get(name).map(|&i| &self.list[i])
    }

    pub fn set_value(&mut self, name: &str, value: Mat) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name}")))?;
        let old = &self.list[i].value;
        if old.rows != value.rows || old.cols != value.cols {
            return Err(Error::Contract(format!(
                "parameter {name} has shape {}x{}, got {}x{}",
                old.rows, old.cols, value.rows, value.cols
            )));
        }
        self.list[i].value = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.list.iter()
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }
}

/// Parameters staged on a tape for one forward/backward pass.
pub struct BoundModel<'t> {
    map: BTreeMap<String, Tensor<'t>>,
}

impl<'t> BoundModel<'t> {
    pub fn tensor(&self, name: &str) -> Tensor<'t> {
        *self.map.get(name).unwrap_or_else(|| panic!("parameter {name} not bound"))
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }
}

// ── the model ────────────────────────────────────────────────────────────

pub struct SaftModel {
    pub cfg: EncoderConfig,
    pub mp_cfg: MpConfig,
    /// Structural embedding width the token maps expect.
    pub struct_k: usize,
    pub n_users: usize,
    pub n_items: usize,
    pub params: ParamStore,
}

impl SaftModel {
    /// Fresh model with seeded initialization: weights symmetric uniform
    /// ±1/sqrt(fan-in) (the embedding table uses ±1/sqrt(d)), biases zero,
    /// layer-norm gain 1 / bias 0, user and item base features standard
    /// Gaussian (fixed, not trained).
    pub fn new(
        cfg: EncoderConfig,
        mp_cfg: MpConfig,
        struct_k: usize,
        n_users: usize,
        n_items: usize,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        mp_cfg.validate()?;
        if struct_k == 0 {
            return Err(Error::Contract("structural width k must be at least 1".into()));
        }
        if n_users == 0 || n_items == 0 {
            return Err(Error::Contract("model needs at least one user and one item".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::default();
        let d = cfg.d;
        let dh = d / cfg.heads;

        let uniform_scaled = |rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng| {
            let mut m = Mat::zeros(rows, cols);
            for v in m.data.iter_mut() {
                *v = rng.gen_range(-scale..scale);
            }
            m
        };
        let uniform = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| -> Mat {
            uniform_scaled(rows, cols, 1.0 / (rows as f64).sqrt(), rng)
        };
        let gaussian = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| -> Mat {
            let mut m = Mat::zeros(rows, cols);
            for v in m.data.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            m
        };

        let embed_scale = 1.0 / (d as f64).sqrt();
        params.add(
            "embed.table",
            {
                let mut m = Mat::zeros(cfg.vocab_buckets, d);
                for v in m.data.iter_mut() {
                    *v = rng.gen_range(-embed_scale..embed_scale);
                }
                m
            },
            true,
        );
        params.add("node.user", gaussian(n_users, d, &mut rng), false);
        params.add("node.item", gaussian(n_items, d, &mut rng), false);

        for l in 1..=cfg.layers {
            for h in 0..cfg.heads {
                params.add(&format!("layer{l}.attn.h{h}.wq"), uniform(d, dh, &mut rng), true);
                params.add(&format!("layer{l}.attn.h{h}.wk"), uniform(d, dh, &mut rng), true);
                params.add(&format!("layer{l}.attn.h{h}.wv"), uniform(d, dh, &mut rng), true);
            }
            params.add(&format!("layer{l}.ffn.w1"), uniform(d, 2 * d, &mut rng), true);
            params.add(&format!("layer{l}.ffn.b1"), Mat::zeros(1, 2 * d), true);
            params.add(&format!("layer{l}.ffn.w2"), uniform(2 * d, d, &mut rng), true);
            params.add(&format!("layer{l}.ffn.b2"), Mat::zeros(1, d), true);
            if l >= 2 {
                params.add(&format!("layer{l}.ln.gain"), Mat::from_fn(1, d, |_, _| 1.0), true);
                params.add(&format!("layer{l}.ln.bias"), Mat::zeros(1, d), true);
                params.add(&format!("layer{l}.map.user.w"), uniform(d, d, &mut rng), true);
                params.add(&format!("layer{l}.map.user.b"), Mat::zeros(1, d), true);
                params.add(&format!("layer{l}.map.item.w"), uniform(d, d, &mut rng), true);
                params.add(&format!("layer{l}.map.item.b"), Mat::zeros(1, d), true);
                params.add(&format!("layer{l}.map.zdist.w"), uniform(struct_k, d, &mut rng), true);
                params.add(&format!("layer{l}.map.zdist.b"), Mat::zeros(1, d), true);
                params.add(&format!("layer{l}.map.zcent.w"), uniform(struct_k, d, &mut rng), true);
                params.add(&format!("layer{l}.map.zcent.b"), Mat::zeros(1, d), true);
                params.add(&format!("layer{l}.fuse.w"), uniform(3 * d, d, &mut rng), true);
                params.add(&format!("layer{l}.fuse.b"), Mat::zeros(1, d), true);
                for side in ["user", "item"] {
                    params.add(&format!("layer{l}.mp.{side}.gate.w"), uniform(d, d, &mut rng), true);
                    params.add(&format!("layer{l}.mp.{side}.gate.b"), Mat::zeros(1, d), true);
                    params.add(&format!("layer{l}.mp.{side}.res.w"), uniform(d, d, &mut rng), true);
                    params.add(&format!("layer{l}.mp.{side}.res.b"), Mat::zeros(1, d), true);
                    params.add(&format!("layer{l}.mp.{side}.lin.w"), uniform(d, d, &mut rng), true);
                    params.add(&format!("layer{l}.mp.{side}.lin.b"), Mat::zeros(1, d), true);
                    params.add(&format!("layer{l}.mp.{side}.fin.w"), uniform(d, d, &mut rng), true);
                    params.add(&format!("layer{l}.mp.{side}.fin.b"), Mat::zeros(1, d), true);
                    params.add(
                        &format!("layer{l}.mp.{side}.fin.gain"),
                        Mat::from_fn(1, d, |_, _| 1.0),
                        true,
                    );
                    params.add(&format!("layer{l}.mp.{side}.fin.bias"), Mat::zeros(1, d), true);
                }
            }
        }
        params.add("head.w", uniform(d, cfg.n_classes, &mut rng), true);
        params.add("head.b", Mat::zeros(1, cfg.n_classes), true);

        Ok(SaftModel { cfg, mp_cfg, struct_k, n_users, n_items, params })
    }

    /// Rebuild a model around loaded parameters.
    pub fn from_parts(
        cfg: EncoderConfig,
        mp_cfg: MpConfig,
        struct_k: usize,
        n_users: usize,
        n_items: usize,
        params: ParamStore,
    ) -> Result<Self> {
        cfg.validate()?;
        mp_cfg.validate()?;
        Ok(SaftModel { cfg, mp_cfg, struct_k, n_users, n_items, params })
    }

    /// Stage every parameter on the tape: leaves when trainable (gradients
    /// tracked), constants otherwise.
    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundModel<'t> {
        let mut map = BTreeMap::new();
        for p in self.params.iter() {
            let t = if p.trainable {
                tape.leaf(p.value.clone())
            } else {
                tape.constant(p.value.clone())
            };
            map.insert(p.name.clone(), t);
        }
        BoundModel { map }
    }

    /// Multi-head attention for one layer: per head softmax(Q·Kᵀ/√d)·V,
    /// heads concatenated along columns. No output projection.
    pub fn mha<'t>(
        &self,
        bound: &BoundModel<'t>,
        x: Tensor<'t>,
        layer: usize,
    ) -> Result<Tensor<'t>> {
        let heads: Vec<(Tensor<'t>, Tensor<'t>, Tensor<'t>)> = (0..self.cfg.heads)
            .map(|h| {
                (
                    bound.tensor(&format!("layer{layer}.attn.h{h}.wq")),
                    bound.tensor(&format!("layer{layer}.attn.h{h}.wk")),
                    bound.tensor(&format!("layer{layer}.attn.h{h}.wv")),
                )
            })
            .collect();
        mha_heads(x, &heads, 1.0 / (self.cfg.d as f64).sqrt())
    }

    /// Two-layer FFN with ReLU in the middle.
    pub fn ffn<'t>(
        &self,
        bound: &BoundModel<'t>,
        x: Tensor<'t>,
        layer: usize,
    ) -> Result<Tensor<'t>> {
        x.matmul(bound.tensor(&format!("layer{layer}.ffn.w1")))?
            .add_row(bound.tensor(&format!("layer{layer}.ffn.b1")))?
            .relu()
            .matmul(bound.tensor(&format!("layer{layer}.ffn.w2")))?
            .add_row(bound.tensor(&format!("layer{layer}.ffn.b2")))
    }

    /// One post-first-layer block update: LaNorm(FFN(MHA(H)) + H).
    pub fn layer_update<'t>(
        &self,
        bound: &BoundModel<'t>,
        block: Tensor<'t>,
        layer: usize,
    ) -> Result<Tensor<'t>> {
        let a = self.mha(bound, block, layer)?;
        let f = self.ffn(bound, a, layer)?;
        f.add(block)?.layer_norm(
            bound.tensor(&format!("layer{layer}.ln.gain")),
            bound.tensor(&format!("layer{layer}.ln.bias")),
        )
    }

    fn gau_params<'t>(&self, bound: &BoundModel<'t>, layer: usize, side: &str) -> GauParams<'t> {
        GauParams {
            gate_w: bound.tensor(&format!("layer{layer}.mp.{side}.gate.w")),
            gate_b: bound.tensor(&format!("layer{layer}.mp.{side}.gate.b")),
            delta_w: bound.tensor(&format!("layer{layer}.mp.{side}.res.w")),
            delta_b: bound.tensor(&format!("layer{layer}.mp.{side}.res.b")),
            lin_w: bound.tensor(&format!("layer{layer}.mp.{side}.lin.w")),
            lin_b: bound.tensor(&format!("layer{layer}.mp.{side}.lin.b")),
        }
    }

    fn finalize_params<'t>(
        &self,
        bound: &BoundModel<'t>,
        layer: usize,
        side: &str,
    ) -> FinalizeParams<'t> {
        FinalizeParams {
            lin_w: bound.tensor(&format!("layer{layer}.mp.{side}.fin.w")),
            lin_b: bound.tensor(&format!("layer{layer}.mp.{side}.fin.b")),
            ln_gain: bound.tensor(&format!("layer{layer}.mp.{side}.fin.gain")),
            ln_bias: bound.tensor(&format!("layer{layer}.mp.{side}.fin.bias")),
        }
    }

    /// Class probabilities for a batch of edges, rows aligned with `batch`
    /// (which must be strictly ascending edge ids). `z_dist`/`z_cent` carry
    /// one row per graph edge. With `text_only` the graph-side tokens,
    /// message passing, and fusion are skipped and only proxy+text rows flow.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        bound: &BoundModel<'t>,
        g: &TinGraph,
        z_dist: &Mat,
        z_cent: &Mat,
        batch: &[usize],
        text_only: bool,
    ) -> Result<Tensor<'t>> {
        if batch.is_empty() {
            return Err(Error::Contract("forward needs a nonempty batch".into()));
        }
        if batch.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Contract("batch edge ids must be strictly ascending".into()));
        }
        if *batch.last().unwrap() >= g.n_edges() {
            return Err(Error::Contract("batch references an edge outside the graph".into()));
        }
        if g.n_users != self.n_users || g.n_items != self.n_items {
            return Err(Error::Contract(format!(
                "model was built for {}x{} nodes, graph has {}x{}",
                self.n_users, self.n_items, g.n_users, g.n_items
            )));
        }
        if g.n_classes != self.cfg.n_classes {
            return Err(Error::Contract(format!(
                "model has {} classes, graph has {}",
                self.cfg.n_classes, g.n_classes
            )));
        }
        if !text_only {
            for (z, what) in [(z_dist, "distance"), (z_cent, "centrality")] {
                if z.rows != g.n_edges() || z.cols != self.struct_k {
                    return Err(Error::Contract(format!(
                        "{what} embedding is {}x{}, expected {}x{}",
                        z.rows,
                        z.cols,
                        g.n_edges(),
                        self.struct_k
                    )));
                }
            }
        }

        let n = self.cfg.text_len;
        let bsz = batch.len();
        let table = bound.tensor("embed.table");
        let node_user = bound.tensor("node.user");
        let node_item = bound.tensor("node.item");

        // first layer: proxy = mean of text embeddings, then FFN(MHA(·))
        let mut proxies: Vec<Tensor<'t>> = Vec::with_capacity(bsz);
        let mut texts: Vec<Tensor<'t>> = Vec::with_capacity(bsz);
        let mut mean_prev: Vec<Tensor<'t>> = Vec::with_capacity(bsz);
        let mut mean_last: Vec<Tensor<'t>> = Vec::with_capacity(bsz);
        for &e in batch {
            let ids = tokenize(&g.texts[e], n, self.cfg.vocab_buckets);
            let text0 = gather_rows(tape, table, &ids)?;
            let proxy0 = text0.mean_rows();
            let block = concat_rows(tape, &[proxy0, text0])?;
            let t1 = self.ffn(bound, self.mha(bound, block, 1)?, 1)?;
            proxies.push(t1.slice_rows(0, 1)?);
            texts.push(t1.slice_rows(1, n)?);
            if self.cfg.layers == 2 {
                mean_prev.push(t1.mean_rows());
            }
        }

        let transitions: Option<(Rc<dyn SymmetricMap>, Rc<dyn SymmetricMap>)> = if text_only {
            None
        } else {
            let ops = Rc::new(IncidenceOps::induced(g, batch)?);
            let tu: Rc<dyn SymmetricMap> =
                Rc::new(Transition { ops: Rc::clone(&ops), kind: TransitionKind::User });
            let ti: Rc<dyn SymmetricMap> = Rc::new(Transition { ops, kind: TransitionKind::Item });
            Some((tu, ti))
        };

        for l in 2..=self.cfg.layers {
            if text_only {
                for j in 0..bsz {
                    let block = concat_rows(tape, &[proxies[j], texts[j]])?;
                    let h = self.layer_update(bound, block, l)?;
                    proxies[j] = h.slice_rows(0, 1)?;
                    texts[j] = h.slice_rows(1, n)?;
                    if l == self.cfg.layers - 1 {
                        mean_prev.push(h.mean_rows());
                    }
                    if l == self.cfg.layers {
                        mean_last.push(h.mean_rows());
                    }
                }
                continue;
            }
            let (trans_user, trans_item) = transitions.as_ref().expect("built above");

            let user_map_w = bound.tensor(&format!("layer{l}.map.user.w"));
            let user_map_b = bound.tensor(&format!("layer{l}.map.user.b"));
            let item_map_w = bound.tensor(&format!("layer{l}.map.item.w"));
            let item_map_b = bound.tensor(&format!("layer{l}.map.item.b"));
            let zd_w = bound.tensor(&format!("layer{l}.map.zdist.w"));
            let zd_b = bound.tensor(&format!("layer{l}.map.zdist.b"));
            let zc_w = bound.tensor(&format!("layer{l}.map.zcent.w"));
            let zc_b = bound.tensor(&format!("layer{l}.map.zcent.b"));

            let mut user_pre: Vec<Tensor<'t>> = Vec::with_capacity(bsz);
            let mut item_pre: Vec<Tensor<'t>> = Vec::with_capacity(bsz);
            let mut user_post: Vec<Tensor<'t>> = Vec::with_capacity(bsz);
            let mut item_post: Vec<Tensor<'t>> = Vec::with_capacity(bsz);
            let mut proxy_post: Vec<Tensor<'t>> = Vec::with_capacity(bsz);

            for (j, &e) in batch.iter().enumerate() {
                let (u, i) = g.edges[e];
                let xu =
                    gather_rows(tape, node_user, &[u])?.matmul(user_map_w)?.add_row(user_map_b)?;
                let xi =
                    gather_rows(tape, node_item, &[i])?.matmul(item_map_w)?.add_row(item_map_b)?;
                let zd = tape.constant(Mat::from_vec(1, self.struct_k, z_dist.row(e).to_vec())?);
                let zc = tape.constant(Mat::from_vec(1, self.struct_k, z_cent.row(e).to_vec())?);
                let zd_tok = zd.matmul(zd_w)?.add_row(zd_b)?;
                let zc_tok = zc.matmul(zc_w)?.add_row(zc_b)?;

                let block =
                    concat_rows(tape, &[proxies[j], texts[j], xu, xi, zd_tok, zc_tok])?;
                let h = self.layer_update(bound, block, l)?;

                proxy_post.push(h.slice_rows(0, 1)?);
                texts[j] = h.slice_rows(1, n)?;
                user_post.push(h.slice_rows(n + 1, 1)?);
                item_post.push(h.slice_rows(n + 2, 1)?);
                user_pre.push(xu);
                item_pre.push(xi);
            }

            // batch-wide message passing over both sides
            let x_tilde_u = concat_rows(tape, &user_post)?;
            let x_u = concat_rows(tape, &user_pre)?;
            let u0_u = mp::init_state(x_tilde_u, x_u, self.mp_cfg.lambda)?;
            let gau_u = self.gau_params(bound, l, "user");
            let agg_u = mp::run_side(Rc::clone(trans_user), u0_u, &self.mp_cfg, Some(&gau_u))?;
            let xhat_u = mp::finalize(agg_u, &self.finalize_params(bound, l, "user"))?;

            let x_tilde_i = concat_rows(tape, &item_post)?;
            let x_i = concat_rows(tape, &item_pre)?;
            let u0_i = mp::init_state(x_tilde_i, x_i, self.mp_cfg.lambda)?;
            let gau_i = self.gau_params(bound, l, "item");
            let agg_i = mp::run_side(Rc::clone(trans_item), u0_i, &self.mp_cfg, Some(&gau_i))?;
            let xhat_i = mp::finalize(agg_i, &self.finalize_params(bound, l, "item"))?;

            let fuse_w = bound.tensor(&format!("layer{l}.fuse.w"));
            let fuse_b = bound.tensor(&format!("layer{l}.fuse.b"));
            for j in 0..bsz {
                let fused_in = concat_cols(
                    tape,
                    &[proxy_post[j], xhat_u.slice_rows(j, 1)?, xhat_i.slice_rows(j, 1)?],
                )?;
                let fused = fused_in.matmul(fuse_w)?.add_row(fuse_b)?.relu();
                proxies[j] = fused;
                let t_l = concat_rows(tape, &[fused, texts[j]])?;
                if l == self.cfg.layers - 1 {
                    mean_prev.push(t_l.mean_rows());
                }
                if l == self.cfg.layers {
                    mean_last.push(t_l.mean_rows());
                }
            }
        }

        // pooled representation: average of the last two layers' token means
        let mut pooled: Vec<Tensor<'t>> = Vec::with_capacity(bsz);
        for j in 0..bsz {
            pooled.push(mean_last[j].add(mean_prev[j])?.scale(0.5));
        }
        let rep = concat_rows(tape, &pooled)?;
        let logits = rep.matmul(bound.tensor("head.w"))?.add_row(bound.tensor("head.b"))?;
        Ok(logits.softmax_rows())
    }
}

/// Multi-head attention from explicit per-head (W_Q, W_K, W_V) triples:
/// softmax(x·W_Q·(x·W_K)ᵀ·scale)·(x·W_V), concatenated along columns.
pub fn mha_heads<'t>(
    x: Tensor<'t>,
    heads: &[(Tensor<'t>, Tensor<'t>, Tensor<'t>)],
    scale: f64,
) -> Result<Tensor<'t>> {
    let mut outs: Vec<Tensor<'t>> = Vec::with_capacity(heads.len());
    for &(wq, wk, wv) in heads {
        let q = x.matmul(wq)?;
        let k = x.matmul(wk)?;
        let v = x.matmul(wv)?;
        let scores = q.matmul(k.transpose())?.scale(scale);
        outs.push(scores.softmax_rows().matmul(v)?);
    }
    concat_cols(x.tape(), &outs)
}
