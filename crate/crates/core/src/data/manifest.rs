//! Dataset manifest: one sample per line,
//! `rgb-path <TAB> depth-path <TAB> label-path <TAB> split`.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub rgb: PathBuf,
    pub depth: PathBuf,
    pub labels: PathBuf,
    pub split: String,
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = String::new();
    for e in entries {
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            e.rgb.display(),
            e.depth.display(),
            e.labels.display(),
            e.split
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read all entries; relative paths are resolved against the manifest's
/// directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &str| -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::Data(format!(
                "{}:{}: expected 4 tab-separated fields, got {}",
                path.display(),
                lineno + 1,
                fields.len()
            )));
        }
        entries.push(ManifestEntry {
            rgb: resolve(fields[0]),
            depth: resolve(fields[1]),
            labels: resolve(fields[2]),
            split: fields[3].to_string(),
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_relative_resolution() {
        let dir = std::env::temp_dir().join("rdseg-manifest-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("manifest.tsv");
        let entries = vec![
            ManifestEntry {
                rgb: "a_rgb.png".into(),
                depth: "a_depth.png".into(),
                labels: "a_labels.png".into(),
                split: "train".into(),
            },
            ManifestEntry {
                rgb: "b_rgb.png".into(),
                depth: "b_depth.png".into(),
                labels: "b_labels.png".into(),
                split: "val".into(),
            },
        ];
        write_manifest(&path, &entries).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].rgb, dir.join("a_rgb.png"));
        assert_eq!(back[1].split, "val");
    }

    #[test]
    fn malformed_line_reports_position() {
        let dir = std::env::temp_dir().join("rdseg-manifest-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.tsv");
        std::fs::write(&path, "only\ttwo\n").unwrap();
        let err = read_manifest(&path).unwrap_err();
        assert!(err.to_string().contains(":1:"));
    }
}
