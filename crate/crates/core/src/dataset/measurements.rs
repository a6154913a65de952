//! Per-position CSI vectors and their on-disk text format.
//!
//! The table has header `position_id,ap_id,re,im` and one row per
//! (position, AP). Positions appear in ascending blocks starting at 0, and AP
//! ids inside a block run `0..M`. A JSON sidecar `<file>.meta.json` carries
//! `num_positions`, `num_aps`, `source`, `units`, and optionally `carrier_ghz`;
//! when present it is cross-checked against the table.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSI_HEADER: [&str; 4] = ["position_id", "ap_id", "re", "im"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementMeta {
    pub source: String,
    pub units: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carrier_ghz: Option<f64>,
    /// Index in the originally loaded set of each stored vector.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub original_indices: Vec<usize>,
}

impl Default for MeasurementMeta {
    fn default() -> Self {
        Self {
            source: "measured".into(),
            units: "linear".into(),
            carrier_ghz: None,
            original_indices: Vec::new(),
        }
    }
}

/// `N` single-user channel vectors, one row per measured position.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    vectors: DMatrix<Complex64>,
    pub meta: MeasurementMeta,
}

impl MeasurementSet {
    pub fn new(vectors: DMatrix<Complex64>, meta: MeasurementMeta) -> Result<Self> {
        if vectors.nrows() == 0 || vectors.ncols() == 0 {
            return Err(Error::InsufficientData(
                "measurement set needs N >= 1 and M >= 1".into(),
            ));
        }
        if !vectors.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::InvalidArgument("measurement set has non-finite entries".into()));
        }
        let mut meta = meta;
        if meta.original_indices.is_empty() {
            meta.original_indices = (0..vectors.nrows()).collect();
        }
        if meta.original_indices.len() != vectors.nrows() {
            return Err(Error::InvalidArgument("index map length differs from N".into()));
        }
        Ok(Self { vectors, meta })
    }

    pub fn num_positions(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn num_aps(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &DMatrix<Complex64> {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> Vec<Complex64> {
        self.vectors.row(i).iter().copied().collect()
    }

    /// Euclidean norm `||h_i||`.
    pub fn strength(&self, i: usize) -> f64 {
        self.vectors.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub(crate) fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let vectors = DMatrix::from_fn(rows.len(), self.num_aps(), |i, j| self.vectors[(rows[i], j)]);
        let mut meta = self.meta.clone();
        meta.original_indices = rows.iter().map(|&r| self.meta.original_indices[r]).collect();
        Self::new(vectors, meta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    /// Multiplier applied to every loaded coefficient.
    pub unit_scale: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { unit_scale: 1.0 }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SidecarDoc {
    num_positions: usize,
    num_aps: usize,
    source: String,
    #[serde(default = "default_units")]
    units: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    carrier_ghz: Option<f64>,
}

fn default_units() -> String {
    "linear".into()
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn load_measurements(path: &Path) -> Result<MeasurementSet> {
    load_measurements_with(path, LoadOptions::default())
}

pub fn load_measurements_with(path: &Path, options: LoadOptions) -> Result<MeasurementSet> {
    if !(options.unit_scale > 0.0 && options.unit_scale.is_finite()) {
        return Err(Error::InvalidArgument("unit scale must be positive".into()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (header_line, header) = lines.next().ok_or_else(|| parse_err(1, "empty file".into()))?;
    let fields: Vec<&str> = header.split(',').map(str::trim).collect();
    if fields != CSI_HEADER {
        return Err(parse_err(
            header_line,
            format!("expected header `{}`", CSI_HEADER.join(",")),
        ));
    }

    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    let mut last_line = header_line;
    for (line, row) in lines {
        last_line = line;
        let cols: Vec<&str> = row.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, found {}", cols.len())));
        }
        let pos: usize = cols[0]
            .parse()
            .map_err(|_| parse_err(line, format!("bad position_id `{}`", cols[0])))?;
        let ap: usize = cols[1]
            .parse()
            .map_err(|_| parse_err(line, format!("bad ap_id `{}`", cols[1])))?;
        let re: f64 = cols[2]
            .parse()
            .map_err(|_| parse_err(line, format!("bad re `{}`", cols[2])))?;
        let im: f64 = cols[3]
            .parse()
            .map_err(|_| parse_err(line, format!("bad im `{}`", cols[3])))?;
        if !(re.is_finite() && im.is_finite()) {
            return Err(Error::NonFinite {
                path: path.to_path_buf(),
                line,
            });
        }

        if pos == rows.len() {
            if let Some(prev) = rows.last() {
                check_ap_count(path, rows.len() - 1, rows[0].len(), prev.len())?;
            }
            rows.push(Vec::new());
        } else if pos + 1 != rows.len() {
            return Err(parse_err(
                line,
                format!(
                    "position {pos} out of order (expected {} or {})",
                    rows.len().saturating_sub(1),
                    rows.len()
                ),
            ));
        }
        let current = rows.last_mut().expect("pushed above");
        if ap != current.len() {
            return Err(parse_err(
                line,
                format!("ap_id {ap} out of order (expected {})", current.len()),
            ));
        }
        current.push(Complex64::new(re, im) * options.unit_scale);
    }

    let Some(last) = rows.last() else {
        return Err(parse_err(last_line, "no data rows".into()));
    };
    check_ap_count(path, rows.len() - 1, rows[0].len(), last.len())?;

    let (n, m) = (rows.len(), rows[0].len());
    let mut meta = MeasurementMeta::default();
    let side = sidecar_path(path);
    if side.exists() {
        let doc: SidecarDoc = serde_json::from_str(&fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?)?;
        if doc.num_positions != n || doc.num_aps != m {
            return Err(Error::InvalidArgument(format!(
                "{}: metadata says {}x{}, table is {n}x{m}",
                side.display(),
                doc.num_positions,
                doc.num_aps
            )));
        }
        meta.source = doc.source;
        meta.units = doc.units;
        meta.carrier_ghz = doc.carrier_ghz;
    }
    MeasurementSet::new(DMatrix::from_fn(n, m, |i, j| rows[i][j]), meta)
}

fn check_ap_count(path: &Path, position: usize, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::InconsistentAps {
            path: path.to_path_buf(),
            position,
            expected,
            found,
        });
    }
    Ok(())
}

/// Write the table and its sidecar. Values use the shortest exponent form
/// that parses back to the identical `f64`.
pub fn write_measurements(ms: &MeasurementSet, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut out = String::with_capacity(32 * ms.vectors.len() + 32);
    out.push_str(&CSI_HEADER.join(","));
    out.push('\n');
    for i in 0..ms.num_positions() {
        for j in 0..ms.num_aps() {
            let z = ms.vectors[(i, j)];
            out.push_str(&format!("{i},{j},{:e},{:e}\n", z.re, z.im));
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;

    let side = sidecar_path(path);
    let doc = SidecarDoc {
        num_positions: ms.num_positions(),
        num_aps: ms.num_aps(),
        source: ms.meta.source.clone(),
        units: ms.meta.units.clone(),
        carrier_ghz: ms.meta.carrier_ghz,
    };
    fs::write(&side, serde_json::to_string_pretty(&doc)? + "\n").map_err(|e| Error::io(&side, e))
}
