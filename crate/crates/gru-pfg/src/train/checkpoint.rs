//! Binary checkpoint format.
//!
//! Layout (all integers little-endian u32 unless noted):
//!
//! ```text
//! magic  b"GPFGCKP1" (8 bytes)
//! schema_version = 1
//! kind_len, kind (utf8: one of the model-kind strings)
//! hidden_size (0 for the MLP)
//! entry_count
//! per entry: name_len, name (utf8), ndims, dims..., values (f64 LE)
//! ```
//!
//! Entry names follow the parameter-set naming (`gru.update.input`,
//! `fusion.base`, `head.weight`, `mlp.layer1.weight`, ...). Values are
//! stored as f64 regardless of the in-memory scalar type.

use std::path::Path;

use crate::baselines::{ModelVariant, VariantKind};
use crate::error::{Error, Result};
use crate::model::params::{GruBaselineParams, GruPfgParams, MlpParams, ParamSet};
use crate::model::{Similarity, CHANNELS};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"GPFGCKP1";
pub const SCHEMA_VERSION: u32 = 1;

/// Serialize a model variant to `path`.
pub fn save<T: Scalar>(model: &ModelVariant<T>, path: &Path) -> Result<()> {
    let mut entries = Vec::new();
    model.visit(&mut |name, tensor| {
        entries.push((
            name.to_string(),
            tensor.shape().to_vec(),
            tensor.values.iter().map(|v| v.to_f64_lossy()).collect(),
        ));
    });
    write_raw(
        path,
        model.kind().as_str(),
        model.hidden_size() as u32,
        &entries,
    )
}

/// Low-level writer; exposed so tools and tests can construct files
/// directly (including deliberately inconsistent ones).
pub fn write_raw(
    path: &Path,
    kind: &str,
    hidden: u32,
    entries: &[(String, Vec<usize>, Vec<f64>)],
) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&SCHEMA_VERSION.to_le_bytes());
    buf.extend_from_slice(&(kind.len() as u32).to_le_bytes());
    buf.extend_from_slice(kind.as_bytes());
    buf.extend_from_slice(&hidden.to_le_bytes());
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, shape, values) in entries {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("file truncated".into()));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let bytes = self.take(4)?;
        Ok(u32::from_le_bytes(bytes.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|e| Error::Checkpoint(format!("bad utf8 in header: {e}")))
    }
}

/// Load a model variant, validating the header and every entry shape.
pub fn load<T: Scalar>(path: &Path) -> Result<ModelVariant<T>> {
    let buf = std::fs::read(path)
        .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    let mut r = Reader { buf: &buf, pos: 0 };

    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != SCHEMA_VERSION {
        return Err(Error::Checkpoint(format!(
            "schema version {version} unsupported (expected {SCHEMA_VERSION})"
        )));
    }
    let kind: VariantKind = r
        .string()?
        .parse()
        .map_err(|e| Error::Checkpoint(format!("bad model kind: {e}")))?;
    let hidden = r.u32()? as usize;
    let entry_count = r.u32()? as usize;

    let mut entries: std::collections::BTreeMap<String, (Vec<usize>, Vec<f64>)> =
        Default::default();
    for _ in 0..entry_count {
        let name = r.string()?;
        let ndims = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            shape.push(r.u32()? as usize);
        }
        let len: usize = shape.iter().product();
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            let bytes = r.take(8)?;
            values.push(f64::from_le_bytes(bytes.try_into().expect("8 bytes")));
        }
        if entries.insert(name.clone(), (shape, values)).is_some() {
            return Err(Error::Checkpoint(format!("duplicate entry {name}")));
        }
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes after entries".into()));
    }

    let mut model: ModelVariant<T> = match kind {
        VariantKind::Mlp => ModelVariant::Mlp(MlpParams::zeros()),
        VariantKind::Gru => ModelVariant::Gru(GruBaselineParams::zeros(CHANNELS, hidden)),
        VariantKind::GruPfg => ModelVariant::Pfg {
            params: GruPfgParams::zeros(CHANNELS, hidden),
            similarity: Similarity::Pearson,
            primary_only: false,
        },
        VariantKind::GruPfgPrimaryOnly => {
            let mut params = GruPfgParams::zeros(CHANNELS, hidden);
            params.fusion.freeze_secondary_stage();
            ModelVariant::Pfg {
                params,
                similarity: Similarity::Pearson,
                primary_only: true,
            }
        }
        VariantKind::GruPfgCosine => ModelVariant::Pfg {
            params: GruPfgParams::zeros(CHANNELS, hidden),
            similarity: Similarity::Cosine,
            primary_only: false,
        },
    };

    let mut error: Option<Error> = None;
    let mut used = std::collections::BTreeSet::new();
    model.visit_mut(&mut |name, tensor| {
        if error.is_some() {
            return;
        }
        match entries.get(name) {
            None => {
                error = Some(Error::Checkpoint(format!("missing entry {name}")));
            }
            Some((shape, values)) => {
                if shape != tensor.shape() {
                    error = Some(Error::Checkpoint(format!(
                        "entry {name} has shape {shape:?} but the declared hidden size \
                         {hidden} implies {:?}",
                        tensor.shape()
                    )));
                    return;
                }
                for (dst, &src) in tensor.values.iter_mut().zip(values) {
                    *dst = T::from_f64_lossy(src);
                }
                used.insert(name.to_string());
            }
        }
    });
    if let Some(e) = error {
        return Err(e);
    }
    if used.len() != entries.len() {
        let extra: Vec<&String> = entries.keys().filter(|k| !used.contains(*k)).collect();
        return Err(Error::Checkpoint(format!("unexpected entries {extra:?}")));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ParamSet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn save_load_round_trip_all_kinds() {
        let dir = tempfile::tempdir().unwrap();
        for kind in VariantKind::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let model = ModelVariant::<f64>::init(kind, 8, &mut rng);
            let path = dir.path().join(format!("{kind}.bin"));
            save(&model, &path).unwrap();
            let loaded = load::<f64>(&path).unwrap();
            assert_eq!(loaded.kind(), kind);
            assert_eq!(loaded.to_flat(), model.to_flat(), "kind {kind}");
        }
    }

    #[test]
    fn save_is_bitwise_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = ModelVariant::<f64>::init(VariantKind::GruPfg, 8, &mut rng);
        let p1 = dir.path().join("a.bin");
        let p2 = dir.path().join("b.bin");
        save(&model, &p1).unwrap();
        save(&model, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn hidden_size_mismatch_is_checkpoint_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = ModelVariant::<f64>::init(VariantKind::Gru, 8, &mut rng);
        let mut entries = Vec::new();
        model.visit(&mut |name, t| {
            entries.push((name.to_string(), t.shape().to_vec(), t.values.clone()));
        });
        let path = dir.path().join("bad.bin");
        // headers claims hidden 16, arrays are built for hidden 8
        write_raw(&path, "gru", 16, &entries).unwrap();
        let err = load::<f64>(&path).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "got {err:?}");
    }

    #[test]
    fn primary_only_round_trip_keeps_freeze() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = ModelVariant::<f64>::init(VariantKind::GruPfgPrimaryOnly, 8, &mut rng);
        let path = dir.path().join("po.bin");
        save(&model, &path).unwrap();
        let loaded = load::<f64>(&path).unwrap();
        match loaded {
            ModelVariant::Pfg { params, .. } => {
                assert!(!params.fusion.secondary.trainable);
                assert_eq!(params.fusion.secondary.values[0], 0.0);
            }
            _ => panic!("wrong variant"),
        }
    }
}
