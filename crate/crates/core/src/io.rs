//! File formats: binary tensors, problem bundles, solver configs and reports.
//!
//! # Tensor files
//!
//! ```text
//! offset  size     field
//! 0       8        magic "ADMMTNS1"
//! 8       1        dtype: 1 = f32, 2 = f64
//! 9       1        ndim (always 2 for matrices)
//! 10      6        reserved, zero
//! 16      8*ndim   dims, u64 little-endian
//! ...     ...      row-major little-endian payload
//! ```
//!
//! Bundles are directories with a `manifest.json` holding `name`,
//! `weight_path`, `calib_path` and optionally `expected_mask_path`, paths
//! relative to the bundle directory.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, TensorFormatError};
use crate::masking::{Mask, StructurePattern};
use crate::report::PruneReport;
use crate::solver::{MaskRule, SolverConfig};
use crate::tensor::Matrix;

pub const TENSOR_MAGIC: &[u8; 8] = b"ADMMTNS1";
const HEADER_LEN: usize = 16;

/// Element type of a tensor file payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Dtype::F32),
            2 => Some(Dtype::F64),
            _ => None,
        }
    }
}

/// Serializes a matrix into the tensor file byte layout.
pub fn encode_tensor(m: &Matrix, dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 16 + m.data().len() * dtype.size());
    out.extend_from_slice(TENSOR_MAGIC);
    out.push(dtype.code());
    out.push(2);
    out.extend_from_slice(&[0u8; 6]);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    match dtype {
        Dtype::F32 => m
            .data()
            .iter()
            .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        Dtype::F64 => m
            .data()
            .iter()
            .for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
    }
    out
}

/// Parses the tensor file byte layout. Values are widened to `f64`.
pub fn decode_tensor(bytes: &[u8]) -> Result<Matrix, TensorFormatError> {
    use TensorFormatError as E;
    let truncated = |expected: usize| E::Truncated {
        expected: expected as u64,
        found: bytes.len() as u64,
    };
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 8 && &bytes[..8] != TENSOR_MAGIC {
            return Err(E::BadMagic(bytes[..8].try_into().expect("8 bytes")));
        }
        return Err(truncated(HEADER_LEN));
    }
    let magic: [u8; 8] = bytes[..8].try_into().expect("8 bytes");
    if &magic != TENSOR_MAGIC {
        return Err(E::BadMagic(magic));
    }
    let dtype = Dtype::from_code(bytes[8]).ok_or(E::UnknownDtype(bytes[8]))?;
    let ndim = bytes[9];
    if bytes[10..16].iter().any(|&b| b != 0) {
        return Err(E::ReservedNonZero);
    }
    if ndim != 2 {
        return Err(E::UnsupportedRank(ndim));
    }
    let dims_end = HEADER_LEN + 16;
    if bytes.len() < dims_end {
        return Err(truncated(dims_end));
    }
    let dim = |i: usize| {
        let start = HEADER_LEN + 8 * i;
        u64::from_le_bytes(bytes[start..start + 8].try_into().expect("8 bytes"))
    };
    let (rows, cols) = (dim(0), dim(1));
    let count = rows.checked_mul(cols).ok_or(E::DimOverflow)?;
    let payload = count
        .checked_mul(dtype.size() as u64)
        .and_then(|p| p.checked_add(dims_end as u64))
        .ok_or(E::DimOverflow)?;
    let rows = usize::try_from(rows).map_err(|_| E::DimOverflow)?;
    let cols = usize::try_from(cols).map_err(|_| E::DimOverflow)?;
    if rows == 0 || cols == 0 {
        return Err(E::DimOverflow);
    }
    let found = bytes.len() as u64;
    if found < payload {
        return Err(E::Truncated {
            expected: payload,
            found,
        });
    }
    if found > payload {
        return Err(E::TrailingBytes(found - payload));
    }

    let body = &bytes[dims_end..];
    let data: Vec<f64> = match dtype {
        Dtype::F32 => body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        Dtype::F64 => body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(E::NonFinite(i));
    }
    Ok(Matrix::new(rows, cols, data).expect("dimensions checked"))
}

pub fn write_tensor(path: impl AsRef<Path>, m: &Matrix, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_tensor(m, dtype)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes).map_err(|kind| Error::TensorFormat {
        path: path.to_path_buf(),
        kind,
    })
}

/// Masks are stored as 0/1 tensors.
pub fn write_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    write_tensor(path, &mask.to_matrix(), Dtype::F32)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let m = read_tensor(path)?;
    Mask::from_matrix(&m).map_err(|(index, value)| Error::TensorFormat {
        path: path.to_path_buf(),
        kind: TensorFormatError::NotBinary { index, value },
    })
}

/// On-disk form of [`SolverConfig`]; absent keys take the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsify_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structured: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_rule: Option<MaskRule>,
}

impl ConfigFile {
    /// Fills defaults and validates.
    pub fn into_config(self) -> Result<SolverConfig> {
        let d = SolverConfig::default();
        let structure = match self.structured.as_deref() {
            None => None,
            Some(s) => Some(
                s.parse::<StructurePattern>()
                    .map_err(|e| Error::config("structured", e.to_string()))?,
            ),
        };
        let sparsity = match (self.sparsity, structure) {
            (Some(s), _) => s,
            (None, Some(p)) => p.final_sparsity(),
            (None, None) => d.sparsity,
        };
        let cfg = SolverConfig {
            rho: self.rho.unwrap_or(d.rho),
            lambda: self.lambda.unwrap_or(d.lambda),
            eps: self.eps.unwrap_or(d.eps),
            iterations: self.iterations.unwrap_or(d.iterations),
            sparsify_steps: self.sparsify_steps.unwrap_or(d.sparsify_steps),
            sparsity,
            structure,
            mask_rule: self.mask_rule.unwrap_or(d.mask_rule),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl From<SolverConfig> for ConfigFile {
    fn from(c: SolverConfig) -> Self {
        ConfigFile {
            rho: Some(c.rho),
            lambda: Some(c.lambda),
            eps: Some(c.eps),
            iterations: Some(c.iterations),
            sparsify_steps: Some(c.sparsify_steps),
            sparsity: Some(c.sparsity),
            structured: c.structure.map(|p| p.to_string()),
            mask_rule: Some(c.mask_rule),
        }
    }
}

impl TryFrom<ConfigFile> for SolverConfig {
    type Error = Error;

    fn try_from(f: ConfigFile) -> Result<Self> {
        f.into_config()
    }
}

/// Parses a JSON config document.
pub fn parse_config(text: &str) -> Result<SolverConfig> {
    let parse_err = |source| Error::Parse {
        what: "config".into(),
        source,
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(parse_err)?;
    // serde would otherwise accept a JSON array as a positional struct.
    if !value.is_object() {
        return Err(Error::config("config", "expected a JSON object"));
    }
    let file: ConfigFile = serde_json::from_value(value).map_err(parse_err)?;
    file.into_config()
}

pub fn load_config(path: impl AsRef<Path>) -> Result<SolverConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

pub fn write_config(path: impl AsRef<Path>, cfg: &SolverConfig) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&ConfigFile::from(*cfg)).expect("config serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Bundle manifest as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    pub weight_path: String,
    pub calib_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_mask_path: Option<String>,
}

/// One layer problem: weights `W` (`m x n`) and calibration inputs `X`
/// (`N x m`).
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemBundle {
    pub name: String,
    pub weights: Matrix,
    pub calib: Matrix,
    pub expected_mask: Option<Mask>,
}

impl ProblemBundle {
    pub fn new(name: impl Into<String>, weights: Matrix, calib: Matrix) -> Result<Self> {
        if weights.rows() != calib.cols() {
            return Err(Error::shape(
                "bundle",
                format!(
                    "weights have {} input rows but calibration has {} features",
                    weights.rows(),
                    calib.cols()
                ),
            ));
        }
        Ok(Self {
            name: name.into(),
            weights,
            calib,
            expected_mask: None,
        })
    }
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<ProblemBundle> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Bundle {
        path: manifest_path.clone(),
        reason: e.to_string(),
    })?;
    let weights = read_tensor(dir.join(&manifest.weight_path))?;
    let calib = read_tensor(dir.join(&manifest.calib_path))?;
    if weights.rows() != calib.cols() {
        return Err(Error::Bundle {
            path: dir.to_path_buf(),
            reason: format!(
                "weights have {} input rows but calibration has {} features",
                weights.rows(),
                calib.cols()
            ),
        });
    }
    let expected_mask = match &manifest.expected_mask_path {
        Some(p) => {
            let mask = read_mask(dir.join(p))?;
            if mask.shape() != weights.shape() {
                return Err(Error::Bundle {
                    path: dir.to_path_buf(),
                    reason: format!(
                        "expected mask {:?} does not match weights {:?}",
                        mask.shape(),
                        weights.shape()
                    ),
                });
            }
            Some(mask)
        }
        None => None,
    };
    Ok(ProblemBundle {
        name: manifest.name,
        weights,
        calib,
        expected_mask,
    })
}

/// Writes `weights.tensor`, `calib.tensor`, an optional `expected_mask.tensor`
/// and the manifest into `dir` (created if missing).
pub fn write_bundle(dir: impl AsRef<Path>, bundle: &ProblemBundle) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_tensor(dir.join("weights.tensor"), &bundle.weights, Dtype::F64)?;
    write_tensor(dir.join("calib.tensor"), &bundle.calib, Dtype::F64)?;
    let expected_mask_path = match &bundle.expected_mask {
        Some(mask) => {
            write_mask(dir.join("expected_mask.tensor"), mask)?;
            Some("expected_mask.tensor".to_string())
        }
        None => None,
    };
    let manifest = Manifest {
        name: bundle.name.clone(),
        weight_path: "weights.tensor".into(),
        calib_path: "calib.tensor".into(),
        expected_mask_path,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// Output format for reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

pub const REPORT_CSV_HEADER: &str = "layer,iter,seconds,objective,sparsity";

/// CSV rows for one or more reports, header included.
///
/// Numbers are written with [`format_number`].
pub fn reports_to_csv(reports: &[PruneReport]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for rep in reports {
        for r in &rep.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_field(&rep.layer),
                r.iter,
                format_number(r.seconds),
                format_number(r.objective),
                format_number(r.sparsity)
            ));
        }
    }
    out
}

/// Shortest round-trip decimal, switching to exponent notation for very
/// small or large magnitudes. Never locale dependent.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

/// Quotes a CSV field when it contains a separator, quote or newline.
pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn report_to_json(report: &PruneReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes") + "\n"
}

pub fn report_from_json(text: &str) -> Result<PruneReport> {
    serde_json::from_str(text).map_err(|source| Error::Parse {
        what: "report".into(),
        source,
    })
}

pub fn write_report(path: impl AsRef<Path>, report: &PruneReport, format: ReportFormat) -> Result<()> {
    write_reports(path, std::slice::from_ref(report), format)
}

/// Writes several reports to one file: CSV rows are concatenated, JSON is an
/// array (a single report is written as an object).
pub fn write_reports(
    path: impl AsRef<Path>,
    reports: &[PruneReport],
    format: ReportFormat,
) -> Result<()> {
    let path = path.as_ref();
    let text = match (format, reports) {
        (ReportFormat::Csv, _) => reports_to_csv(reports),
        (ReportFormat::Json, [one]) => report_to_json(one),
        (ReportFormat::Json, many) => {
            serde_json::to_string_pretty(many).expect("reports serialize") + "\n"
        }
    };
    write_text(path, &text)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<PruneReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    report_from_json(&text)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
