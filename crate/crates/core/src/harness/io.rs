//! On-disk artifacts: snapshots, ledgers and manifests.
//!
//! Floats are written with `{:e}` (shortest round-trip form), so reading a
//! snapshot back reproduces the in-memory values exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HomogError, Result};
use crate::field::{ScalarField, StaggeredVectorField};
use crate::grid::Mask;

pub const SNAPSHOT_HEADER: &str = "i,j,active,c,w,p,u,v";

/// Sidecar metadata of a snapshot CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    /// `micro` or `macro`.
    pub kind: String,
    pub step: usize,
    pub t: f64,
    pub n: usize,
    /// Lattice count `k` (`eps = 1/k`) for micro snapshots.
    pub k: Option<usize>,
    pub n_cell: Option<usize>,
    pub geometry: Option<String>,
    pub mask_hash: String,
}

/// A snapshot as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub meta: SnapshotMeta,
    pub mask: Mask,
    pub c: ScalarField,
    pub w: ScalarField,
    pub p: ScalarField,
    pub u: StaggeredVectorField,
}

pub fn snapshot_csv(mask: &Mask, c: &ScalarField, w: &ScalarField, p: &ScalarField, u: &StaggeredVectorField) -> String {
    let n = mask.n();
    let mut s = String::with_capacity(n * n * 80);
    s.push_str(SNAPSHOT_HEADER);
    s.push('\n');
    for j in 0..n {
        for i in 0..n {
            let k = j * n + i;
            s.push_str(&format!(
                "{},{},{},{:e},{:e},{:e},{:e},{:e}\n",
                i,
                j,
                mask.cell(i, j) as u8,
                c.values[k],
                w.values[k],
                p.values[k],
                u.u[k],
                u.v[k]
            ));
        }
    }
    s
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn write_snapshot(
    dir: &Path,
    stem: &str,
    meta: &SnapshotMeta,
    mask: &Mask,
    c: &ScalarField,
    w: &ScalarField,
    p: &ScalarField,
    u: &StaggeredVectorField,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{stem}.csv"));
    fs::write(&csv, snapshot_csv(mask, c, w, p, u))?;
    write_json(&dir.join(format!("{stem}.json")), meta)?;
    Ok(csv)
}

fn parse_err(path: &Path, line: usize, msg: &str) -> HomogError {
    HomogError::Parse(format!("{}:{}: {}", path.display(), line, msg))
}

/// Reads a snapshot CSV and its JSON sidecar (same stem).
pub fn read_snapshot(csv_path: &Path) -> Result<Snapshot> {
    let meta_path = csv_path.with_extension("json");
    let meta: SnapshotMeta = serde_json::from_str(&fs::read_to_string(&meta_path).map_err(|e| {
        HomogError::Parse(format!("{}: {e}", meta_path.display()))
    })?)?;
    let text = fs::read_to_string(csv_path).map_err(|e| HomogError::Parse(format!("{}: {e}", csv_path.display())))?;
    let n = meta.n;
    let mut lines = text.lines();
    if lines.next() != Some(SNAPSHOT_HEADER) {
        return Err(parse_err(csv_path, 1, "unexpected header"));
    }
    let mut cells = vec![false; n * n];
    let mut c = ScalarField::zeros(n);
    let mut w = ScalarField::zeros(n);
    let mut p = ScalarField::zeros(n);
    let mut u = StaggeredVectorField::zeros(n);
    let mut count = 0;
    for (idx, line) in lines.enumerate() {
        let ln = idx + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(parse_err(csv_path, ln, "expected 8 columns"));
        }
        let i: usize = f[0].parse().map_err(|_| parse_err(csv_path, ln, "bad i"))?;
        let j: usize = f[1].parse().map_err(|_| parse_err(csv_path, ln, "bad j"))?;
        if i >= n || j >= n {
            return Err(parse_err(csv_path, ln, "index out of range"));
        }
        let k = j * n + i;
        let val = |s: &str| s.parse::<f64>().map_err(|_| parse_err(csv_path, ln, "bad number"));
        cells[k] = f[2] == "1";
        c.values[k] = val(f[3])?;
        w.values[k] = val(f[4])?;
        p.values[k] = val(f[5])?;
        u.u[k] = val(f[6])?;
        u.v[k] = val(f[7])?;
        count += 1;
    }
    if count != n * n {
        return Err(HomogError::Parse(format!(
            "{}: {count} rows, expected {}",
            csv_path.display(),
            n * n
        )));
    }
    Ok(Snapshot {
        meta,
        mask: Mask::from_cells(n, cells),
        c,
        w,
        p,
        u,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn write_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

/// Run description written beside every output. Wall time lives in a
/// separate `timing.json` so this file is byte-for-byte reproducible.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// Canonical configuration text; feeding it back reproduces the run.
    pub config_text: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub rng: &'static str,
    pub mask_hashes: Vec<String>,
    pub artifacts: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub wall_seconds: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::InitialCondition;

    #[test]
    fn snapshot_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut cells = vec![true; 64];
        cells[9] = false;
        let mask = Mask::from_cells(8, cells);
        let c = InitialCondition::Random { seed: 3 }.sample(&mask);
        let w = InitialCondition::Random { seed: 4 }.sample(&mask);
        let p = ScalarField::from_fn(&mask, |x, y| x * y / 3.0);
        let mut u = StaggeredVectorField::zeros(8);
        u.u[10] = 1.0 / 7.0;
        u.v[11] = -2e-17;
        let meta = SnapshotMeta {
            kind: "micro".into(),
            step: 3,
            t: 0.003,
            n: 8,
            k: Some(2),
            n_cell: Some(4),
            geometry: Some("disc:0.25".into()),
            mask_hash: mask.hash(),
        };
        let path = write_snapshot(dir.path(), "s", &meta, &mask, &c, &w, &p, &u).unwrap();
        let back = read_snapshot(&path).unwrap();
        assert_eq!(back.meta, meta);
        assert_eq!(back.mask, mask);
        assert_eq!(back.c, c);
        assert_eq!(back.w, w);
        assert_eq!(back.p, p);
        assert_eq!(back.u, u);
    }

    #[test]
    fn malformed_snapshot_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let meta = SnapshotMeta {
            kind: "macro".into(),
            step: 0,
            t: 0.0,
            n: 2,
            k: None,
            n_cell: None,
            geometry: None,
            mask_hash: String::new(),
        };
        write_json(&dir.path().join("x.json"), &meta).unwrap();
        fs::write(dir.path().join("x.csv"), "i,j,active,c,w,p,u,v\n0,0,1,1,1\n").unwrap();
        assert!(matches!(read_snapshot(&dir.path().join("x.csv")), Err(HomogError::Parse(_))));
    }
}
