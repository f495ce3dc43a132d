//! The non-verify subcommands: ingest, embed, train, eval, sweep.
//!
//! All reports go to stdout as plain tab-separated lines; warnings go to
//! stderr. Every command is deterministic under fixed inputs and seed.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use tin_core::checkpoint::Checkpoint;
use tin_core::embed::{write_embedding, StructEmbeddings, TAG_CENTRALITY, TAG_DISTANCE};
use tin_core::graph::TinGraph;
use tin_core::mat::Mat;
use tin_core::mp::MpVariant;
use tin_core::pipeline::{
    evaluate, read_history, stratified_split, train, write_history, TrainConfig,
};
use tin_core::sampling::SamplerKind;
use tin_core::svd::SvdConfig;

use crate::config::{load_config, set_key};
use crate::dataset::read_dataset;

/// Command-line settings that take precedence over the config file.
pub struct Overrides {
    pub seed: Option<u64>,
    pub variant: Option<String>,
    pub sampler: Option<String>,
    pub b: Option<usize>,
}

fn resolve_config(path: Option<&Path>, ov: &Overrides) -> Result<TrainConfig> {
    let mut cfg = match path {
        Some(p) => load_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(v) = &ov.variant {
        cfg.variant = v.parse::<MpVariant>()?;
    }
    if let Some(s) = &ov.sampler {
        cfg.sampler = s.parse::<SamplerKind>()?;
    }
    if let Some(b) = ov.b {
        cfg.b = b;
    }
    Ok(cfg)
}

/// Largest embedding width the graph supports, and the requested width
/// clamped to it.
fn clamp_rank(g: &TinGraph, requested: usize) -> (usize, usize) {
    let cap = g.n_edges().min(g.n_users + g.n_items);
    (requested.min(cap).max(1), cap)
}

pub fn ingest(data: &Path) -> Result<bool> {
    let g = read_dataset(data)?;
    println!("users\t{}", g.n_users);
    println!("items\t{}", g.n_items);
    println!("interactions\t{}", g.n_edges());
    println!("classes\t{}", g.n_classes);
    Ok(true)
}

pub fn embed(
    data: &Path,
    out: &Path,
    config: Option<&Path>,
    k: Option<usize>,
    seed: Option<u64>,
) -> Result<bool> {
    let g = &read_dataset(data)?;
    let base = match config {
        Some(p) => load_config(p)?,
        None => TrainConfig::default(),
    };
    let seed = seed.unwrap_or(base.seed);
    let requested = k.unwrap_or(base.svd_dim);
    let (k, cap) = clamp_rank(g, requested);
    if k < requested {
        eprintln!("warning: k {requested} exceeds the usable width {cap}; using {k}");
    }
    let emb = StructEmbeddings::compute(g, k, &SvdConfig::default(), seed)?;
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let dist_path = out.join("distance.emb");
    let cent_path = out.join("centrality.emb");
    write_embedding(&dist_path, &emb.z_dist, TAG_DISTANCE, seed)?;
    write_embedding(&cent_path, &emb.z_cent, TAG_CENTRALITY, seed)?;
    let zeros = trailing_zero_cols(&emb.z_cent);
    if zeros > 0 {
        eprintln!(
            "warning: width {k} exceeds the structural rank; \
             {zeros} trailing centrality columns are zero"
        );
    }
    println!("interactions\t{}", g.n_edges());
    println!("width\t{k}");
    println!("distance\t{}", dist_path.display());
    println!("centrality\t{}", cent_path.display());
    Ok(true)
}

fn trailing_zero_cols(z: &Mat) -> usize {
    let mut zeros = 0;
    for j in (0..z.cols).rev() {
        if (0..z.rows).all(|r| z.at(r, j) == 0.0) {
            zeros += 1;
        } else {
            break;
        }
    }
    zeros
}

pub struct TrainArgs {
    pub data: PathBuf,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub overrides: Overrides,
    pub text_only: bool,
}

pub fn train_cmd(args: &TrainArgs) -> Result<bool> {
    let g = &read_dataset(&args.data)?;
    let cfg = resolve_config(args.config.as_deref(), &args.overrides)?;
    cfg.validate()?;
    let (k, cap) = clamp_rank(g, cfg.svd_dim);
    if k < cfg.svd_dim {
        eprintln!("warning: svd_dim {} exceeds the usable width {cap}; using {k}", cfg.svd_dim);
    }
    let embeds = StructEmbeddings::compute(g, k, &SvdConfig::default(), cfg.seed)?;
    let splits = stratified_split(g, cfg.seed);
    let result = train(g, &embeds, &cfg, &splits, args.text_only)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    let ck = Checkpoint {
        config: cfg.clone(),
        n_users: g.n_users,
        n_items: g.n_items,
        struct_k: k,
        n_classes: g.n_classes,
        best_epoch: result.best_epoch,
        params: result.model.params.clone(),
    };
    ck.save(&args.out.join("checkpoint.ckpt"))?;
    write_history(&args.out.join("history.tsv"), &result.history)?;
    write_embedding(&args.out.join("distance.emb"), &embeds.z_dist, TAG_DISTANCE, cfg.seed)?;
    write_embedding(&args.out.join("centrality.emb"), &embeds.z_cent, TAG_CENTRALITY, cfg.seed)?;
    println!("epochs_run\t{}", result.history.len());
    println!("best_epoch\t{}", result.best_epoch);
    println!("stopped_early\t{}", result.stopped_early);
    let best = &result.history[result.best_epoch];
    println!("val_macro_f1\t{}", best.val_macro_f1);
    println!("val_micro_f1\t{}", best.val_micro_f1);
    if !splits.test.is_empty() {
        let test = evaluate(&result.model, g, &embeds, &splits.test, args.text_only)?;
        println!("test_macro_f1\t{}", test.macro_f1);
        println!("test_micro_f1\t{}", test.micro_f1);
    }
    Ok(true)
}

pub struct EvalArgs {
    pub data: PathBuf,
    pub checkpoint: PathBuf,
    pub split: String,
    pub history: Option<PathBuf>,
    pub text_only: bool,
}

pub fn eval_cmd(args: &EvalArgs) -> Result<bool> {
    let g = &read_dataset(&args.data)?;
    let ck = Checkpoint::load(&args.checkpoint)?;
    if ck.n_users != g.n_users || ck.n_items != g.n_items || ck.n_classes != g.n_classes {
        bail!(
            "checkpoint shape ({} users, {} items, {} classes) does not match \
             the dataset ({}, {}, {})",
            ck.n_users,
            ck.n_items,
            ck.n_classes,
            g.n_users,
            g.n_items,
            g.n_classes
        );
    }
    let model = ck.model()?;
    let embeds = StructEmbeddings::compute(g, ck.struct_k, &SvdConfig::default(), ck.config.seed)?;
    let splits = stratified_split(g, ck.config.seed);
    let edges: Vec<usize> = match args.split.as_str() {
        "train" => splits.train.clone(),
        "val" => splits.val.clone(),
        "test" => splits.test.clone(),
        "all" => (0..g.n_edges()).collect(),
        other => bail!("unknown split `{other}`, expected train, val, test, or all"),
    };
    if edges.is_empty() {
        bail!("split `{}` is empty for this dataset", args.split);
    }
    let report = evaluate(&model, g, &embeds, &edges, args.text_only)?;
    println!("split\t{}", args.split);
    println!("edges\t{}", edges.len());
    println!("macro_f1\t{}", report.macro_f1);
    println!("micro_f1\t{}", report.micro_f1);
    for (r, row) in report.confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        println!("confusion\t{r}\t{}", cells.join("\t"));
    }

    let mut ok = true;
    if let Some(hist_path) = &args.history {
        let hist = read_history(hist_path)?;
        let Some(best) = hist.get(ck.best_epoch) else {
            bail!(
                "history {} has {} rows but the checkpoint points at epoch {}",
                hist_path.display(),
                hist.len(),
                ck.best_epoch
            );
        };
        if splits.val.is_empty() {
            bail!("the history check needs a validation split, and this dataset has none");
        }
        let val = evaluate(&model, g, &embeds, &splits.val, args.text_only)?;
        let dev = (val.macro_f1 - best.val_macro_f1)
            .abs()
            .max((val.micro_f1 - best.val_micro_f1).abs());
        let pass = dev <= 1e-12;
        println!("history_check\t{}\t{:e}", if pass { "pass" } else { "FAIL" }, dev);
        ok &= pass;
    }
    Ok(ok)
}

pub struct SweepArgs {
    pub data: PathBuf,
    pub key: String,
    pub values: String,
    pub out: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub text_only: bool,
}

pub fn sweep_cmd(args: &SweepArgs) -> Result<bool> {
    let g = &read_dataset(&args.data)?;
    let mut base = match &args.config {
        Some(p) => load_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = args.seed {
        base.seed = s;
    }
    let values: Vec<&str> = args.values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        bail!("--values lists no values");
    }
    let mut rows = String::new();
    for v in &values {
        let mut cfg = base.clone();
        set_key(&mut cfg, &args.key, v)?;
        cfg.validate()?;
        let (k, _) = clamp_rank(g, cfg.svd_dim);
        let embeds = StructEmbeddings::compute(g, k, &SvdConfig::default(), cfg.seed)?;
        let splits = stratified_split(g, cfg.seed);
        if splits.test.is_empty() {
            bail!("sweep needs a test split; every class must have at least 5 interactions");
        }
        let result = train(g, &embeds, &cfg, &splits, args.text_only)?;
        let report = evaluate(&result.model, g, &embeds, &splits.test, args.text_only)?;
        rows.push_str(&format!(
            "{v}\t{}\t{}\t{}\n",
            report.macro_f1, report.micro_f1, result.best_epoch
        ));
    }
    match &args.out {
        Some(p) => std::fs::write(p, rows)
            .with_context(|| format!("writing sweep table {}", p.display()))?,
        None => print!("{rows}"),
    }
    Ok(true)
}
