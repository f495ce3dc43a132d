//! Model checkpoints: a self-describing binary file holding the training
//! configuration, the model shape, and every named parameter tensor.
//!
//! Layout: an 8-byte magic, a length-prefixed UTF-8 header of `key = value`
//! lines, a length-prefixed list of tensors (name, trainable flag, shape,
//! row-major f64 little-endian data), and a SHA-256 checksum of everything
//! before it. Loading verifies the checksum before trusting any field.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::encoder::{ParamStore, SaftModel};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::pipeline::TrainConfig;

const MAGIC: &[u8; 8] = b"SAFTCKPT";
/// Upper bound on any declared count read from a file, to keep a corrupt
/// length field from driving allocation.
const SANE_LIMIT: u64 = 1 << 28;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub n_users: usize,
    pub n_items: usize,
    pub struct_k: usize,
    pub n_classes: usize,
    /// History row the retained parameters correspond to.
    pub best_epoch: usize,
    pub params: ParamStore,
}

impl Checkpoint {
    /// Rebuild the model behind this checkpoint. The stored parameter set is
    /// checked name-for-name and shape-for-shape against a freshly
    /// initialized model of the same geometry.
    pub fn model(&self) -> Result<SaftModel> {
        let reference = SaftModel::new(
            self.config.encoder_config(self.n_classes),
            self.config.mp_config(),
            self.struct_k,
            self.n_users,
            self.n_items,
            0,
        )?;
        let want: BTreeSet<&str> = reference.params.iter().map(|p| p.name.as_str()).collect();
        let have: BTreeSet<&str> = self.params.iter().map(|p| p.name.as_str()).collect();
        if want != have {
            let missing: Vec<&&str> = want.difference(&have).collect();
            let extra: Vec<&&str> = have.difference(&want).collect();
            return Err(Error::Format(format!(
                "checkpoint parameters do not match the declared model: missing {missing:?}, unexpected {extra:?}"
            )));
        }
        for p in reference.params.iter() {
            let stored = &self.params.get(&p.name).expect("name sets match").value;
            if stored.rows != p.value.rows || stored.cols != p.value.cols {
                return Err(Error::Format(format!(
                    "checkpoint tensor {} has shape {}x{}, model expects {}x{}",
                    p.name, stored.rows, stored.cols, p.value.rows, p.value.cols
                )));
            }
        }
        SaftModel::from_parts(
            self.config.encoder_config(self.n_classes),
            self.config.mp_config(),
            self.struct_k,
            self.n_users,
            self.n_items,
            self.params.clone(),
        )
    }

    fn header(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        put("learning_rate", format!("{}", c.learning_rate));
        put("weight_decay", format!("{}", c.weight_decay));
        put("epsilon", format!("{}", c.epsilon));
        put("epochs", format!("{}", c.epochs));
        put("early_stop", format!("{}", c.early_stop));
        put("batch_size", format!("{}", c.batch_size));
        put("mp_layer", format!("{}", c.mp_layer));
        put("svd_dim", format!("{}", c.svd_dim));
        put("delta", format!("{}", c.delta));
        put("lambda", format!("{}", c.lambda));
        put("layers", format!("{}", c.layers));
        put("heads", format!("{}", c.heads));
        put("hidden_dim", format!("{}", c.hidden_dim));
        put("text_len", format!("{}", c.text_len));
        put("vocab_buckets", format!("{}", c.vocab_buckets));
        put("sampler", format!("{}", c.sampler));
        put("b", format!("{}", c.b));
        put("variant", format!("{}", c.variant));
        put("seed", format!("{}", c.seed));
        put("n_users", format!("{}", self.n_users));
        put("n_items", format!("{}", self.n_items));
        put("struct_k", format!("{}", self.struct_k));
        put("n_classes", format!("{}", self.n_classes));
        put("best_epoch", format!("{}", self.best_epoch));
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MAGIC);
        let header = self.header().into_bytes();
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header);
        buf.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in self.params.iter() {
            let name = p.name.as_bytes();
            buf.extend_from_slice(&(name.len() as u64).to_le_bytes());
            buf.extend_from_slice(name);
            buf.push(p.trainable as u8);
            buf.extend_from_slice(&(p.value.rows as u64).to_le_bytes());
            buf.extend_from_slice(&(p.value.cols as u64).to_le_bytes());
            for &x in &p.value.data {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        let mut f = std::fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path)?;
        if bytes.len() < MAGIC.len() + 32 {
            return Err(Error::Format(format!(
                "{}: too short to be a checkpoint",
                path.display()
            )));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 32);
        let digest = Sha256::digest(body);
        if digest.as_slice() != trailer {
            return Err(Error::Format(format!(
                "{}: checksum mismatch, file is corrupt",
                path.display()
            )));
        }
        let mut r = Reader { bytes: body, pos: 0, path };
        let magic = r.take(8)?;
        if magic != MAGIC {
            return Err(Error::Format(format!("{}: not a checkpoint file", path.display())));
        }
        let header_len = r.u64()?;
        if header_len > SANE_LIMIT {
            return Err(Error::Format(format!("{}: header length implausible", path.display())));
        }
        let header_bytes = r.take(header_len as usize)?.to_vec();
        let header = String::from_utf8(header_bytes)
            .map_err(|_| Error::Format(format!("{}: header is not UTF-8", path.display())))?;
        let fields = parse_header(&header, path)?;

        let n_params = r.u64()?;
        if n_params > SANE_LIMIT {
            return Err(Error::Format(format!(
                "{}: parameter count implausible",
                path.display()
            )));
        }
        let mut params = ParamStore::default();
        let mut seen = BTreeSet::new();
        for _ in 0..n_params {
            let name_len = r.u64()?;
            if name_len > 4096 {
                return Err(Error::Format(format!(
                    "{}: parameter name length implausible",
                    path.display()
                )));
            }
            let name_bytes = r.take(name_len as usize)?.to_vec();
            let name = String::from_utf8(name_bytes).map_err(|_| {
                Error::Format(format!("{}: parameter name is not UTF-8", path.display()))
            })?;
            if !seen.insert(name.clone()) {
                return Err(Error::Format(format!(
                    "{}: duplicate parameter `{name}`",
                    path.display()
                )));
            }
            let trainable = match r.take(1)?[0] {
                0 => false,
                1 => true,
                other => {
                    return Err(Error::Format(format!(
                        "{}: bad trainable flag {other} for `{name}`",
                        path.display()
                    )))
                }
            };
            let rows = r.u64()?;
            let cols = r.u64()?;
            if rows > SANE_LIMIT || cols > SANE_LIMIT || rows.saturating_mul(cols) > SANE_LIMIT {
                return Err(Error::Format(format!(
                    "{}: tensor shape {rows}x{cols} implausible",
                    path.display()
                )));
            }
            let n = (rows * cols) as usize;
            let raw = r.take(n * 8)?;
            let mut data = Vec::with_capacity(n);
            for chunk in raw.chunks_exact(8) {
                data.push(f64::from_le_bytes(chunk.try_into().expect("chunk of 8")));
            }
            params.add(&name, Mat::from_vec(rows as usize, cols as usize, data)?, trainable);
        }
        if r.pos != body.len() {
            return Err(Error::Format(format!(
                "{}: {} trailing bytes after last tensor",
                path.display(),
                body.len() - r.pos
            )));
        }

        Ok(Checkpoint {
            config: config_from_fields(&fields, path)?,
            n_users: field_usize(&fields, "n_users", path)?,
            n_items: field_usize(&fields, "n_items", path)?,
            struct_k: field_usize(&fields, "struct_k", path)?,
            n_classes: field_usize(&fields, "n_classes", path)?,
            best_epoch: field_usize(&fields, "best_epoch", path)?,
            params,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!("{}: truncated checkpoint", self.path.display())));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        let s = self.take(8)?;
        Ok(u64::from_le_bytes(s.try_into().expect("slice of 8")))
    }
}

fn parse_header(
    header: &str,
    path: &Path,
) -> Result<std::collections::BTreeMap<String, String>> {
    let mut map = std::collections::BTreeMap::new();
    for line in header.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Format(format!("{}: malformed header line `{line}`", path.display()))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn field<'m>(
    fields: &'m std::collections::BTreeMap<String, String>,
    key: &str,
    path: &Path,
) -> Result<&'m str> {
    fields
        .get(key)
        .map(|s| s.as_str())
        .ok_or_else(|| Error::Format(format!("{}: header misses `{key}`", path.display())))
}

fn field_usize(
    fields: &std::collections::BTreeMap<String, String>,
    key: &str,
    path: &Path,
) -> Result<usize> {
    let raw = field(fields, key, path)?;
    raw.parse::<usize>()
        .map_err(|_| Error::Format(format!("{}: bad value `{raw}` for `{key}`", path.display())))
}

fn field_f64(
    fields: &std::collections::BTreeMap<String, String>,
    key: &str,
    path: &Path,
) -> Result<f64> {
    let raw = field(fields, key, path)?;
    raw.parse::<f64>()
        .map_err(|_| Error::Format(format!("{}: bad value `{raw}` for `{key}`", path.display())))
}

fn field_u64(
    fields: &std::collections::BTreeMap<String, String>,
    key: &str,
    path: &Path,
) -> Result<u64> {
    let raw = field(fields, key, path)?;
    raw.parse::<u64>()
        .map_err(|_| Error::Format(format!("{}: bad value `{raw}` for `{key}`", path.display())))
}

fn config_from_fields(
    fields: &std::collections::BTreeMap<String, String>,
    path: &Path,
) -> Result<TrainConfig> {
    Ok(TrainConfig {
        learning_rate: field_f64(fields, "learning_rate", path)?,
        weight_decay: field_f64(fields, "weight_decay", path)?,
        epsilon: field_f64(fields, "epsilon", path)?,
        epochs: field_usize(fields, "epochs", path)?,
        early_stop: field_usize(fields, "early_stop", path)?,
        batch_size: field_usize(fields, "batch_size", path)?,
        mp_layer: field_usize(fields, "mp_layer", path)?,
        svd_dim: field_usize(fields, "svd_dim", path)?,
        delta: field_f64(fields, "delta", path)?,
        lambda: field_f64(fields, "lambda", path)?,
        layers: field_usize(fields, "layers", path)?,
        heads: field_usize(fields, "heads", path)?,
        hidden_dim: field_usize(fields, "hidden_dim", path)?,
        text_len: field_usize(fields, "text_len", path)?,
        vocab_buckets: field_usize(fields, "vocab_buckets", path)?,
        sampler: field(fields, "sampler", path)?.parse()?,
        b: field_usize(fields, "b", path)?,
        variant: field(fields, "variant", path)?.parse()?,
        seed: field_u64(fields, "seed", path)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mp::MpVariant;
    use crate::sampling::SamplerKind;

    fn small_checkpoint() -> Checkpoint {
        let mut cfg = TrainConfig::default();
        cfg.hidden_dim = 8;
        cfg.heads = 2;
        cfg.text_len = 4;
        cfg.vocab_buckets = 64;
        cfg.sampler = SamplerKind::Centrality;
        cfg.variant = MpVariant::Gau;
        let model = SaftModel::new(cfg.encoder_config(3), cfg.mp_config(), 5, 4, 6, 11).unwrap();
        Checkpoint {
            config: cfg,
            n_users: 4,
            n_items: 6,
            struct_k: 5,
            n_classes: 3,
            best_epoch: 17,
            params: model.params,
        }
    }

    #[test]
    fn roundtrip_is_exact() {
        let ckpt = small_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.n_users, 4);
        assert_eq!(back.n_classes, 3);
        assert_eq!(back.best_epoch, 17);
        assert_eq!(back.config.sampler, SamplerKind::Centrality);
        assert_eq!(back.config.variant, MpVariant::Gau);
        assert_eq!(back.config.learning_rate, ckpt.config.learning_rate);
        assert_eq!(back.params.len(), ckpt.params.len());
        for p in ckpt.params.iter() {
            let q = back.params.get(&p.name).unwrap();
            assert_eq!(p.value.data, q.value.data, "tensor {} drifted", p.name);
            assert_eq!(p.trainable, q.trainable);
        }
        back.model().unwrap();
    }

    #[test]
    fn saves_are_byte_identical() {
        let ckpt = small_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        ckpt.save(&a).unwrap();
        ckpt.save(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn corruption_is_detected() {
        let ckpt = small_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        ckpt.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        let err = Checkpoint::load(&path).unwrap_err();
        assert!(err.to_string().contains("checksum"), "got: {err}");
    }

    #[test]
    fn truncation_is_detected() {
        let ckpt = small_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        ckpt.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 3]).unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut buf = b"NOTACKPT".to_vec();
        buf.extend_from_slice(&0u64.to_le_bytes());
        buf.extend_from_slice(&0u64.to_le_bytes());
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        std::fs::write(&path, &buf).unwrap();
        let err = Checkpoint::load(&path).unwrap_err();
        assert!(err.to_string().contains("not a checkpoint"), "got: {err}");
    }

    #[test]
    fn incomplete_parameter_set_fails_model_build() {
        let mut ckpt = small_checkpoint();
        ckpt.params = ParamStore::default();
        ckpt.params.add("embed.table", Mat::zeros(64, 8), true);
        assert!(ckpt.model().is_err());
    }
}
