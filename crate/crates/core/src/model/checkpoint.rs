//! Named-tensor checkpoint archive.
//!
//! Wire format: magic `SGCK`, format version (u32 LE), entry count (u32 LE),
//! then per entry: path length (u32 LE) + UTF-8 path, rank (u32 LE), extents
//! (u32 LE each), and raw f32 LE values in row-major order.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::Model;

pub const MAGIC: [u8; 4] = *b"SGCK";
pub const FORMAT_VERSION: u32 = 1;

/// Shape plus values of one archived tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

impl TensorData {
    pub fn from_tensor<S: Scalar>(t: &Tensor<S>) -> Self {
        TensorData {
            shape: t.shape(),
            values: t.to_vec().iter().map(|v| v.to_double() as f32).collect(),
        }
    }
}

/// What a non-strict load actually did.
#[derive(Debug, Default)]
pub struct LoadReport {
    pub loaded: Vec<String>,
    /// Model paths with no entry in the file.
    pub missing: Vec<String>,
    /// File paths the model does not have.
    pub unexpected: Vec<String>,
    /// Paths present on both sides but with different shapes.
    pub mismatched: Vec<String>,
}

impl LoadReport {
    pub fn is_clean(&self) -> bool {
        self.missing.is_empty() && self.unexpected.is_empty() && self.mismatched.is_empty()
    }
}

pub fn write_entries(path: &Path, entries: &[(String, TensorData)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);

    w.write_all(&MAGIC).map_err(io_err)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(entries.len() as u32).to_le_bytes()).map_err(io_err)?;
    for (name, data) in entries {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(bytes).map_err(io_err)?;
        w.write_all(&(data.shape.len() as u32).to_le_bytes()).map_err(io_err)?;
        for &e in &data.shape {
            w.write_all(&(e as u32).to_le_bytes()).map_err(io_err)?;
        }
        let mut buf = Vec::with_capacity(data.values.len() * 4);
        for v in &data.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

pub fn read_entries(path: &Path) -> Result<Vec<(String, TensorData)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    fn read_exact(r: &mut impl Read, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        r.read_exact(&mut buf)
            .map_err(|_| Error::Checkpoint(format!("truncated file while reading {what}")))?;
        Ok(buf)
    }
    fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
        let b = read_exact(r, 4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    let magic = read_exact(&mut r, 4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic bytes {magic:?}")));
    }
    let version = read_u32(&mut r, "format version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version} is not supported (want {FORMAT_VERSION})"
        )));
    }
    let count = read_u32(&mut r, "entry count")? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r, "path length")? as usize;
        let name = String::from_utf8(read_exact(&mut r, name_len, "path")?)
            .map_err(|_| Error::Checkpoint("entry path is not UTF-8".into()))?;
        let rank = read_u32(&mut r, "rank")? as usize;
        if rank == 0 || rank > 4 {
            return Err(Error::Checkpoint(format!("entry {name}: bad rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r, "extent")? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = read_exact(&mut r, numel * 4, "values")?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        entries.push((name, TensorData { shape, values }));
    }
    Ok(entries)
}

/// Every parameter and BN statistic of the model, in visit order.
pub fn model_entries<S: Scalar>(model: &Model<S>) -> Vec<(String, TensorData)> {
    model
        .entries()
        .iter()
        .map(|e| (e.path.clone(), TensorData::from_tensor(&e.tensor)))
        .collect()
}

pub fn save(model: &Model<f32>, path: &Path) -> Result<()> {
    write_entries(path, &model_entries(model))
}

/// Restore parameters by path.
///
/// Strict mode fails on any missing, unexpected, or shape-mismatched entry;
/// non-strict loads the intersection and reports the rest (which is how an
/// RGB-only checkpoint flows into an RGB-D model).
pub fn load(model: &Model<f32>, path: &Path, strict: bool) -> Result<LoadReport> {
    let file_entries = read_entries(path)?;
    let mut by_name: HashMap<String, TensorData> = file_entries.into_iter().collect();
    let mut report = LoadReport::default();

    for entry in model.entries() {
        match by_name.remove(&entry.path) {
            Some(data) if data.shape == entry.tensor.shape() => {
                entry.tensor.set_data(&data.values)?;
                report.loaded.push(entry.path);
            }
            Some(_) => report.mismatched.push(entry.path),
            None => report.missing.push(entry.path),
        }
    }
    let mut unexpected: Vec<String> = by_name.into_keys().collect();
    unexpected.sort();
    report.unexpected = unexpected;

    if strict && !report.is_clean() {
        return Err(Error::Checkpoint(format!(
            "strict load failed: missing {:?}, unexpected {:?}, mismatched {:?}",
            report.missing, report.unexpected, report.mismatched
        )));
    }
    Ok(report)
}

/// Derive depth-branch init entries from trained RGB-branch entries: paths
/// are renamed `rgb.* -> depth.*` (and `fuse.rgb.* -> fuse.depth.*`), and the
/// first stem convolution is averaged over its input-channel axis.
pub fn derive_depth_entries(
    entries: &[(String, TensorData)],
) -> Vec<(String, TensorData)> {
    let mut out = BTreeMap::new();
    for (name, data) in entries {
        if let Some(rest) = name.strip_prefix("rgb.") {
            if rest == "stem.conv1.weight" {
                let [c, ci, kh, kw] = data.shape[..] else { continue };
                if ci != 3 {
                    continue;
                }
                let taps = kh * kw;
                let mut avg = vec![0.0f32; c * taps];
                for co in 0..c {
                    for t in 0..taps {
                        avg[co * taps + t] = (data.values[(co * 3) * taps + t]
                            + data.values[(co * 3 + 1) * taps + t]
                            + data.values[(co * 3 + 2) * taps + t])
                            / 3.0;
                    }
                }
                out.insert(
                    format!("depth.{rest}"),
                    TensorData { shape: vec![c, 1, kh, kw], values: avg },
                );
            } else {
                out.insert(format!("depth.{rest}"), data.clone());
            }
        } else if let Some(rest) = name.strip_prefix("fuse.rgb.") {
            out.insert(format!("fuse.depth.{rest}"), data.clone());
        }
    }
    out.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BranchMode, ModelConfig};

    fn tmpfile(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("rdseg-ckpt-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn save_load_round_trip_is_bitwise() {
        let model = Model::<f32>::new(ModelConfig::toy(4), 11).unwrap();
        let path = tmpfile("roundtrip.sgck");
        save(&model, &path).unwrap();

        let restored = Model::<f32>::new(ModelConfig::toy(4), 999).unwrap();
        let report = load(&restored, &path, true).unwrap();
        assert!(report.is_clean());

        let a = model_entries(&model);
        let b = model_entries(&restored);
        assert_eq!(a.len(), b.len());
        for ((na, da), (nb, db)) in a.iter().zip(&b) {
            assert_eq!(na, nb);
            assert_eq!(da.values, db.values, "{na} differs");
        }
    }

    #[test]
    fn rgb_checkpoint_into_rgbd_model_reports_depth_missing() {
        let rgb_model = Model::<f32>::new(
            ModelConfig::toy(4).with_branches(BranchMode::RgbOnly),
            11,
        )
        .unwrap();
        let path = tmpfile("rgb_only.sgck");
        save(&rgb_model, &path).unwrap();

        let rgbd = Model::<f32>::new(ModelConfig::toy(4), 12).unwrap();
        assert!(load(&rgbd, &path, true).is_err(), "strict must reject");
        let report = load(&rgbd, &path, false).unwrap();
        assert!(report.missing.iter().all(|p| p.starts_with("depth.") || p.starts_with("fuse.depth.")));
        assert!(!report.missing.is_empty());
        assert!(report.loaded.iter().any(|p| p.starts_with("rgb.")));
        // concat fusion doubles the head input width, so head convs mismatch
        assert!(report.mismatched.iter().all(|p| p.starts_with("head.")));
    }

    #[test]
    fn strict_load_names_a_deleted_entry() {
        let model = Model::<f32>::new(ModelConfig::toy(4), 11).unwrap();
        let mut entries = model_entries(&model);
        let removed = entries.remove(3).0;
        let path = tmpfile("deleted.sgck");
        write_entries(&path, &entries).unwrap();
        let err = load(&model, &path, true).unwrap_err();
        assert!(err.to_string().contains(&removed), "{err} should name {removed}");
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let path = tmpfile("corrupt.sgck");
        std::fs::write(&path, b"NOPE....").unwrap();
        assert!(matches!(read_entries(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn depth_derivation_renames_and_averages() {
        let entries = vec![
            (
                "rgb.stem.conv1.weight".to_string(),
                TensorData { shape: vec![1, 3, 1, 1], values: vec![0.3, 0.6, 0.9] },
            ),
            (
                "rgb.res2.0.conv1.weight".to_string(),
                TensorData { shape: vec![2, 1, 1, 1], values: vec![1.0, 2.0] },
            ),
            (
                "fuse.rgb.conv.weight".to_string(),
                TensorData { shape: vec![1, 1, 1, 1], values: vec![5.0] },
            ),
            (
                "head.classifier.bias".to_string(),
                TensorData { shape: vec![3], values: vec![0.0; 3] },
            ),
        ];
        let derived = derive_depth_entries(&entries);
        let by_name: HashMap<_, _> = derived.into_iter().collect();
        let stem = &by_name["depth.stem.conv1.weight"];
        assert_eq!(stem.shape, vec![1, 1, 1, 1]);
        assert!((stem.values[0] - 0.6).abs() < 1e-7);
        assert_eq!(by_name["depth.res2.0.conv1.weight"].values, vec![1.0, 2.0]);
        assert_eq!(by_name["fuse.depth.conv.weight"].values, vec![5.0]);
        assert!(!by_name.contains_key("head.classifier.bias"));
    }
}
