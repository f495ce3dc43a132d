//! Tab-separated interaction datasets.
//!
//! One interaction per line: `user_id<TAB>item_id<TAB>label<TAB>text`.
//! Ids are arbitrary non-empty strings and are mapped to dense indices in
//! first-appearance order. Tabs, newlines, and backslashes inside the text
//! column are escaped as `\t`, `\n`, `\\`. Lines starting with `#` are
//! comments. The class count is `max label + 1`.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use tin_core::graph::TinGraph;

pub fn read_dataset(path: &Path) -> Result<TinGraph> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading dataset {}", path.display()))?;
    let mut users: Vec<String> = Vec::new();
    let mut items: Vec<String> = Vec::new();
    let mut user_ix: HashMap<String, usize> = HashMap::new();
    let mut item_ix: HashMap<String, usize> = HashMap::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut texts: Vec<String> = Vec::new();
    let mut first_line: HashMap<(usize, usize), usize> = HashMap::new();

    for (ix, raw) in text.lines().enumerate() {
        let lineno = ix + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            bail!(
                "{}:{lineno}: expected 4 tab-separated fields (user, item, label, text), got {}",
                path.display(),
                fields.len()
            );
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            bail!("{}:{lineno}: empty user or item id", path.display());
        }
        let label: usize = fields[2]
            .parse()
            .with_context(|| format!("{}:{lineno}: label `{}` is not a nonnegative integer", path.display(), fields[2]))?;
        let body = unescape_text(fields[3])
            .with_context(|| format!("{}:{lineno}: bad escape in text", path.display()))?;

        let u = *user_ix.entry(fields[0].to_string()).or_insert_with(|| {
            users.push(fields[0].to_string());
            users.len() - 1
        });
        let i = *item_ix.entry(fields[1].to_string()).or_insert_with(|| {
            items.push(fields[1].to_string());
            items.len() - 1
        });
        if let Some(&prev) = first_line.get(&(u, i)) {
            bail!(
                "{}:{lineno}: duplicate interaction ({}, {}), first seen at line {prev}",
                path.display(),
                fields[0],
                fields[1]
            );
        }
        first_line.insert((u, i), lineno);
        edges.push((u, i));
        labels.push(label);
        texts.push(body);
    }

    if edges.is_empty() {
        bail!("{}: no interactions (empty or comment-only file)", path.display());
    }
    let n_classes = labels.iter().max().copied().unwrap_or(0) + 1;
    TinGraph::new(users.len(), items.len(), edges, labels, texts, n_classes)
        .with_context(|| format!("{}: invalid dataset", path.display()))
}

fn unescape_text(s: &str) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('\\') => out.push('\\'),
            Some(other) => bail!("unknown escape `\\{other}`"),
            None => bail!("dangling backslash at end of text"),
        }
    }
    Ok(out)
}

#[cfg(test)]
fn escape_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            other => out.push(other),
        }
    }
    out
}
