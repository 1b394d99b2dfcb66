//! Multi-view datasets and their on-disk layout.
//!
//! A dataset directory holds
//!
//! ```text
//! view_0.csv ... view_{K-1}.csv   features x samples, one row per feature
//! tasks.csv                       tasks x samples
//! meta.json                       provenance, split indices, config hash
//! ```
//!
//! CSV files start with a `# config_hash=<hex>` comment line and contain no
//! header row. Values are written with Rust's shortest round-trip float
//! formatting, so a write/read cycle is lossless.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::synthgen::SynthConfig;

pub const META_FILE: &str = "meta.json";
pub const TASKS_FILE: &str = "tasks.csv";
pub const DATASET_FORMAT: &str = "mvcca-dataset/1";

pub fn view_file(k: usize) -> String {
    format!("view_{k}.csv")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Leading `n_train` columns train, the rest test.
    pub fn leading(n: usize, n_train: usize) -> Self {
        Split {
            train: (0..n_train).collect(),
            test: (n_train..n).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Synthetic { config: SynthConfig },
    External { source: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    pub views: Vec<Matrix>,
    pub tasks: Matrix,
    pub split: Split,
    pub provenance: Provenance,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format: String,
    config_hash: String,
    provenance: Provenance,
    view_dims: Vec<usize>,
    n: usize,
    task_count: usize,
    split: Split,
}

pub fn select_columns(m: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_fn(m.nrows(), idx.len(), |r, c| m[(r, idx[c])])
}

impl MultiViewDataset {
    pub fn new(views: Vec<Matrix>, tasks: Matrix, split: Split, provenance: Provenance) -> Result<Self> {
        if views.len() < 2 {
            return Err(Error::contract(format!("need at least two views, got {}", views.len())));
        }
        let n = views[0].ncols();
        for (k, v) in views.iter().enumerate() {
            if v.ncols() != n {
                return Err(Error::contract(format!(
                    "view {k} has {} samples, view 0 has {n}",
                    v.ncols()
                )));
            }
            if v.nrows() == 0 {
                return Err(Error::contract(format!("view {k} has no features")));
            }
        }
        if tasks.ncols() != n {
            return Err(Error::contract(format!(
                "tasks have {} samples, views have {n}",
                tasks.ncols()
            )));
        }
        let mut seen = vec![false; n];
        for &i in split.train.iter().chain(&split.test) {
            if i >= n || seen[i] {
                return Err(Error::contract("split indices must be disjoint and in range"));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::contract("split must cover every sample"));
        }
        Ok(MultiViewDataset {
            views,
            tasks,
            split,
            provenance,
        })
    }

    pub fn n(&self) -> usize {
        self.tasks.ncols()
    }

    pub fn k(&self) -> usize {
        self.views.len()
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.nrows()).collect()
    }

    pub fn train_views(&self) -> Vec<Matrix> {
        self.views
            .iter()
            .map(|v| select_columns(v, &self.split.train))
            .collect()
    }

    pub fn test_views(&self) -> Vec<Matrix> {
        self.views
            .iter()
            .map(|v| select_columns(v, &self.split.test))
            .collect()
    }

    pub fn test_tasks(&self) -> Matrix {
        select_columns(&self.tasks, &self.split.test)
    }

    pub fn save(&self, dir: &Path, config_hash: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (k, v) in self.views.iter().enumerate() {
            write_csv(&dir.join(view_file(k)), v, config_hash)?;
        }
        write_csv(&dir.join(TASKS_FILE), &self.tasks, config_hash)?;
        let meta = Meta {
            format: DATASET_FORMAT.to_string(),
            config_hash: config_hash.to_string(),
            provenance: self.provenance.clone(),
            view_dims: self.view_dims(),
            n: self.n(),
            task_count: self.tasks.nrows(),
            split: self.split.clone(),
        };
        let text = serde_json::to_string_pretty(&meta)?;
        write_atomic(&dir.join(META_FILE), text.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: Meta =
            serde_json::from_str(&text).map_err(|e| Error::parse(&meta_path, e.to_string()))?;
        if meta.format != DATASET_FORMAT {
            return Err(Error::parse(&meta_path, format!("unsupported format {:?}", meta.format)));
        }
        let mut views = Vec::with_capacity(meta.view_dims.len());
        for (k, &d) in meta.view_dims.iter().enumerate() {
            let path = dir.join(view_file(k));
            let v = read_csv(&path)?;
            if v.shape() != (d, meta.n) {
                return Err(Error::parse(
                    &path,
                    format!("expected {d}x{}, found {}x{}", meta.n, v.nrows(), v.ncols()),
                ));
            }
            views.push(v);
        }
        let tasks = read_csv(&dir.join(TASKS_FILE))?;
        MultiViewDataset::new(views, tasks, meta.split, meta.provenance)
    }
}

/// Hash recorded in a dataset directory's metadata.
pub fn stored_config_hash(dir: &Path) -> Result<String> {
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: Meta =
        serde_json::from_str(&text).map_err(|e| Error::parse(&meta_path, e.to_string()))?;
    Ok(meta.config_hash)
}

/// Writes to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp: PathBuf = {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".tmp");
        path.with_file_name(name)
    };
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn csv_bytes(m: &Matrix, config_hash: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(m.len() * 20);
    writeln!(out, "# config_hash={config_hash}").expect("write to Vec");
    // `{}` on f64 prints the shortest string that parses back exactly.
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(b',');
            }
            write!(out, "{}", m[(r, c)]).expect("write to Vec");
        }
        out.push(b'\n');
    }
    out
}

pub fn write_csv(path: &Path, m: &Matrix, config_hash: &str) -> Result<()> {
    write_atomic(path, &csv_bytes(m, config_hash))
}

/// Reads a headerless numeric CSV (lines starting with `#` are skipped).
pub fn read_csv(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
        let mut row = Vec::with_capacity(rec.len());
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::parse(
                    path,
                    format!("line {line}, column {}: {field:?} is not a number", j + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::parse(path, format!("line {line}, column {}: non-finite value", j + 1)));
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::parse(
                    path,
                    format!("line {line}: expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::parse(path, "no numeric rows"));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> MultiViewDataset {
        let v0 = Matrix::from_fn(3, 6, |i, j| (i as f64 + 1.0) * 0.1 + j as f64 / 7.0);
        let v1 = Matrix::from_fn(2, 6, |i, j| -(i as f64) + (j as f64).sqrt());
        let t = Matrix::from_fn(1, 6, |_, j| j as f64 * 1e-17 + 1.0 / 3.0);
        MultiViewDataset::new(
            vec![v0, v1],
            t,
            Split::leading(6, 3),
            Provenance::External { source: "unit".into() },
        )
        .unwrap()
    }

    #[test]
    fn rejects_ragged_columns_and_bad_splits() {
        let ok = small();
        let mut views = ok.views.clone();
        views[1] = Matrix::zeros(2, 5);
        assert!(MultiViewDataset::new(views, ok.tasks.clone(), ok.split.clone(), ok.provenance.clone()).is_err());
        let bad = Split { train: vec![0, 1, 2], test: vec![2, 3, 4, 5] };
        assert!(MultiViewDataset::new(ok.views.clone(), ok.tasks.clone(), bad, ok.provenance.clone()).is_err());
        let missing = Split { train: vec![0, 1], test: vec![3, 4, 5] };
        assert!(MultiViewDataset::new(ok.views, ok.tasks, missing, ok.provenance).is_err());
    }

    #[test]
    fn save_load_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small();
        ds.save(dir.path(), "abc123").unwrap();
        let back = MultiViewDataset::load(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(stored_config_hash(dir.path()).unwrap(), "abc123");
        let text = fs::read_to_string(dir.path().join("view_0.csv")).unwrap();
        assert!(text.starts_with("# config_hash=abc123\n"));
    }

    #[test]
    fn read_csv_reports_location_of_bad_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "1,2,3\n4,x,6\n").unwrap();
        let err = read_csv(&p).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("column 2"), "{err}");

        fs::write(&p, "1,2,3\n4,5\n").unwrap();
        let err = read_csv(&p).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("expected 3 columns"), "{err}");
    }
}
