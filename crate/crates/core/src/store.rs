//! Embedding, label and selection files.
//!
//! Binary layouts (little-endian throughout):
//!
//! ```text
//! EMB1: "EMB1" | u32 version=1 | u64 n | u32 d | u8 dtype=1 (f32) | 3 zero bytes | n*d f32 row-major
//! LBL1: "LBL1" | u32 version=1 | u64 n | u32 C (0 = infer)        | n i32
//! ```
//!
//! Selections are JSON documents with the fields of [`SelectionResult`].

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EMB_MAGIC: &[u8; 4] = b"EMB1";
const LBL_MAGIC: &[u8; 4] = b"LBL1";
const FORMAT_VERSION: u32 = 1;
const DTYPE_F32: u8 = 1;
const EMB_HEADER_LEN: usize = 24;
const LBL_HEADER_LEN: usize = 20;

/// Added to the per-dimension standard deviation before dividing.
pub const STANDARDIZE_EPS: f64 = 1e-8;

/// Dense `n x d` matrix of finite `f32` features, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    /// Builds a matrix, rejecting empty shapes and non-finite values.
    pub fn from_vec(n: usize, d: usize, data: Vec<f32>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Data(format!("matrix shape must be non-empty, got {n}x{d}")));
        }
        if data.len() != n * d {
            return Err(Error::Data(format!(
                "expected {} values for {n}x{d}, got {}",
                n * d,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / d,
                col: pos % d,
            });
        }
        Ok(Self { n, d, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Data("ragged rows".into()));
        }
        Self::from_vec(rows.len(), d, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.d)
    }

    /// Copies the given rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(Error::Argument(format!("row {i} out of range for n={}", self.n)));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::from_vec(indices.len(), self.d, data)
    }
}

/// Ground-truth class index per pool row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<u32>,
    num_classes: usize,
}

impl LabelVector {
    /// `num_classes = None` infers `1 + max(label)`.
    pub fn new(labels: Vec<u32>, num_classes: Option<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Data("label vector is empty".into()));
        }
        let max = *labels.iter().max().expect("non-empty") as usize;
        let num_classes = match num_classes {
            Some(c) if c <= max => {
                return Err(Error::Data(format!(
                    "declared class count {c} does not exceed max label {max}"
                )))
            }
            Some(c) => c,
            None => max + 1,
        };
        Ok(Self {
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, i: usize) -> u32 {
        self.labels[i]
    }

    /// Labels of the given rows, keeping the declared class count.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let labels = indices
            .iter()
            .map(|&i| {
                self.labels.get(i).copied().ok_or_else(|| {
                    Error::Argument(format!("index {i} out of range for {} labels", self.len()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(labels, Some(self.num_classes))
    }
}

/// Ordered pool indices chosen for annotation, with provenance.
///
/// `round_boundaries[t]` is the end offset in `indices` of round `t`, so with
/// a complete selection it equals the cumulative `budget_schedule`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub strategy: String,
    pub seed: u64,
    pub budget_schedule: Vec<usize>,
    pub round_boundaries: Vec<usize>,
    pub indices: Vec<usize>,
}

impl SelectionResult {
    /// Checks distinctness, range and that the rounds line up with the schedule.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in &self.indices {
            if i >= n {
                return Err(Error::Data(format!("selected index {i} out of range for n={n}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Data(format!("index {i} selected twice")));
            }
        }
        if self.round_boundaries.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Data("round boundaries must be nondecreasing".into()));
        }
        if self.round_boundaries != self.budget_schedule {
            return Err(Error::Data(format!(
                "round boundaries {:?} do not match budget schedule {:?}",
                self.round_boundaries, self.budget_schedule
            )));
        }
        if self.budget_schedule.last().copied().unwrap_or(0) != self.indices.len() {
            return Err(Error::Data(format!(
                "{} indices but final budget is {:?}",
                self.indices.len(),
                self.budget_schedule.last()
            )));
        }
        Ok(())
    }

    /// Indices of round `t` (0-based).
    pub fn round(&self, t: usize) -> &[usize] {
        let start = if t == 0 { 0 } else { self.round_boundaries[t - 1] };
        &self.indices[start..self.round_boundaries[t]]
    }

    /// Indices selected up to and including round `t`.
    pub fn prefix(&self, t: usize) -> &[usize] {
        &self.indices[..self.round_boundaries[t]]
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().expect("8 bytes"))
}

fn check_magic(bytes: &[u8], magic: &[u8; 4], header_len: usize) -> Result<()> {
    if bytes.len() >= 4 && &bytes[..4] != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            std::str::from_utf8(magic).expect("ascii")
        )));
    }
    if bytes.len() < header_len {
        return Err(Error::Truncation {
            expected: header_len as u64,
            actual: bytes.len() as u64,
        });
    }
    let version = u32_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    Ok(())
}

fn payload_len(n: u64, width: u64, header_len: usize, actual: usize) -> Result<usize> {
    let expected = n
        .checked_mul(width)
        .and_then(|p| p.checked_add(header_len as u64))
        .ok_or_else(|| Error::Format("declared size overflows".into()))?;
    match (actual as u64).cmp(&expected) {
        std::cmp::Ordering::Less => Err(Error::Truncation {
            expected,
            actual: actual as u64,
        }),
        std::cmp::Ordering::Greater => Err(Error::Format(format!(
            "{} trailing bytes after payload",
            actual as u64 - expected
        ))),
        std::cmp::Ordering::Equal => Ok(expected as usize),
    }
}

/// Parses an EMB1 byte buffer.
pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    check_magic(bytes, EMB_MAGIC, EMB_HEADER_LEN)?;
    let n = u64_at(bytes, 8);
    let d = u32_at(bytes, 16);
    let dtype = bytes[20];
    if dtype != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype code {dtype}")));
    }
    if bytes[21..24] != [0, 0, 0] {
        return Err(Error::Format("nonzero header padding".into()));
    }
    if n == 0 || d == 0 {
        return Err(Error::Format(format!("empty shape {n}x{d}")));
    }
    let cells = n
        .checked_mul(d as u64)
        .ok_or_else(|| Error::Format("declared size overflows".into()))?;
    payload_len(cells, 4, EMB_HEADER_LEN, bytes.len())?;
    let data = bytes[EMB_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    EmbeddingMatrix::from_vec(n as usize, d as usize, data)
}

pub fn encode_embeddings(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(EMB_HEADER_LEN + m.data.len() * 4);
    out.extend_from_slice(EMB_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.n as u64).to_le_bytes());
    out.extend_from_slice(&(m.d as u32).to_le_bytes());
    out.extend_from_slice(&[DTYPE_F32, 0, 0, 0]);
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    decode_embeddings(&read_file(path.as_ref())?)
}

pub fn save_embeddings(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_embeddings(m))
}

/// Parses an LBL1 byte buffer.
pub fn decode_labels(bytes: &[u8]) -> Result<LabelVector> {
    check_magic(bytes, LBL_MAGIC, LBL_HEADER_LEN)?;
    let n = u64_at(bytes, 8);
    let declared = u32_at(bytes, 16);
    if n == 0 {
        return Err(Error::Format("label file declares n=0".into()));
    }
    payload_len(n, 4, LBL_HEADER_LEN, bytes.len())?;
    let labels = bytes[LBL_HEADER_LEN..]
        .chunks_exact(4)
        .enumerate()
        .map(|(i, c)| {
            let v = i32::from_le_bytes(c.try_into().expect("4 bytes"));
            u32::try_from(v).map_err(|_| Error::Data(format!("negative label {v} at row {i}")))
        })
        .collect::<Result<Vec<_>>>()?;
    LabelVector::new(labels, (declared != 0).then_some(declared as usize))
}

/// Always writes the class count explicitly.
pub fn encode_labels(labels: &LabelVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(LBL_HEADER_LEN + labels.len() * 4);
    out.extend_from_slice(LBL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(labels.len() as u64).to_le_bytes());
    out.extend_from_slice(&(labels.num_classes as u32).to_le_bytes());
    for &l in &labels.labels {
        out.extend_from_slice(&(l as i32).to_le_bytes());
    }
    out
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    decode_labels(&read_file(path.as_ref())?)
}

pub fn save_labels(labels: &LabelVector, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_labels(labels))
}

pub fn load_selection(path: impl AsRef<Path>) -> Result<SelectionResult> {
    let bytes = read_file(path.as_ref())?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn save_selection(sel: &SelectionResult, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), sel.to_json()?.as_bytes())
}

/// Per-dimension mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn compute(m: &EmbeddingMatrix) -> Self {
        let n = m.n as f64;
        let mut mean = vec![0.0f64; m.d];
        for row in m.rows() {
            for (acc, &v) in mean.iter_mut().zip(row) {
                *acc += v as f64;
            }
        }
        mean.iter_mut().for_each(|v| *v /= n);
        let mut var = vec![0.0f64; m.d];
        for row in m.rows() {
            for ((acc, &v), mu) in var.iter_mut().zip(row).zip(&mean) {
                let dv = v as f64 - mu;
                *acc += dv * dv;
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Standardizes one row into `out` (double precision).
    pub fn apply_row(&self, row: &[f32], out: &mut [f64]) {
        for (((o, &v), mu), sd) in out.iter_mut().zip(row).zip(&self.mean).zip(&self.std) {
            *o = (v as f64 - mu) / (sd + STANDARDIZE_EPS);
        }
    }
}

/// `(x - mean) / (std + 1e-8)` per dimension. Computes the statistics from
/// `m` when `stats` is `None`; otherwise applies the given ones.
pub fn standardize(
    m: &EmbeddingMatrix,
    stats: Option<&NormStats>,
) -> Result<(EmbeddingMatrix, NormStats)> {
    let stats = match stats {
        Some(s) if s.dim() != m.d || s.std.len() != m.d => {
            return Err(Error::Data(format!(
                "normalization stats have dimension {}, matrix has {}",
                s.dim(),
                m.d
            )))
        }
        Some(s) => s.clone(),
        None => NormStats::compute(m),
    };
    let mut buf = vec![0.0f64; m.d];
    let mut data = Vec::with_capacity(m.data.len());
    for row in m.rows() {
        stats.apply_row(row, &mut buf);
        data.extend(buf.iter().map(|&v| v as f32));
    }
    Ok((EmbeddingMatrix::from_vec(m.n, m.d, data)?, stats))
}

/// Scales every row to unit Euclidean norm; all-zero rows stay zero.
pub fn l2_normalize(m: &EmbeddingMatrix) -> EmbeddingMatrix {
    let mut data = Vec::with_capacity(m.data.len());
    for row in m.rows() {
        let norm = row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        if norm > 0.0 {
            data.extend(row.iter().map(|&v| (v as f64 / norm) as f32));
        } else {
            data.extend_from_slice(row);
        }
    }
    EmbeddingMatrix {
        n: m.n,
        d: m.d,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb_bytes(magic: &[u8; 4], n: u64, d: u32, values: &[f32]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(magic);
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&n.to_le_bytes());
        b.extend_from_slice(&d.to_le_bytes());
        b.extend_from_slice(&[1, 0, 0, 0]);
        for v in values {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    fn lbl_bytes(c: u32, labels: &[i32]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(b"LBL1");
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&(labels.len() as u64).to_le_bytes());
        b.extend_from_slice(&c.to_le_bytes());
        for v in labels {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn decodes_hand_built_file() {
        let m = decode_embeddings(&emb_bytes(b"EMB1", 2, 3, &[1., 2., 3., 4., 5., 6.])).unwrap();
        assert_eq!((m.n(), m.d()), (2, 3));
        assert_eq!(m.row(1), &[4., 5., 6.]);
    }

    #[test]
    fn reports_first_nan_position() {
        let bytes = emb_bytes(b"EMB1", 2, 3, &[1., 2., 3., f32::NAN, 5., f32::INFINITY]);
        match decode_embeddings(&bytes) {
            Err(Error::NonFinite { row: 1, col: 0 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_magic_version_dtype_and_padding() {
        let good = emb_bytes(b"EMB1", 1, 1, &[1.0]);
        assert!(matches!(
            decode_embeddings(&emb_bytes(b"EMB9", 1, 1, &[1.0])),
            Err(Error::Format(_))
        ));
        let mut v = good.clone();
        v[4] = 2;
        assert!(matches!(decode_embeddings(&v), Err(Error::Format(_))));
        let mut v = good.clone();
        v[20] = 2;
        assert!(matches!(decode_embeddings(&v), Err(Error::Format(_))));
        let mut v = good.clone();
        v[22] = 1;
        assert!(matches!(decode_embeddings(&v), Err(Error::Format(_))));
        let mut v = good;
        v.push(0);
        assert!(matches!(decode_embeddings(&v), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_header_and_payload() {
        let good = emb_bytes(b"EMB1", 2, 2, &[1., 2., 3., 4.]);
        assert!(matches!(
            decode_embeddings(&good[..10]),
            Err(Error::Truncation { expected: 24, actual: 10 })
        ));
        assert!(matches!(
            decode_embeddings(&good[..good.len() - 1]),
            Err(Error::Truncation { .. })
        ));
    }

    #[test]
    fn labels_with_header_and_inferred_count() {
        let l = decode_labels(&lbl_bytes(3, &[0, 1, 2, 1])).unwrap();
        assert_eq!(l.num_classes(), 3);
        assert!(decode_labels(&lbl_bytes(3, &[0, 4])).unwrap_err().is_data_error());
        assert_eq!(decode_labels(&lbl_bytes(0, &[0, 0, 0])).unwrap().num_classes(), 1);
        assert!(decode_labels(&lbl_bytes(0, &[0, -1])).unwrap_err().is_data_error());
        assert_eq!(decode_labels(&lbl_bytes(7, &[0, 1])).unwrap().num_classes(), 7);
    }

    #[test]
    fn save_to_missing_directory_is_io_error() {
        let m = EmbeddingMatrix::from_vec(1, 1, vec![1.0]).unwrap();
        let err = save_embeddings(&m, "/nonexistent-dir/x/y.emb").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn reencode_is_byte_identical() {
        let bytes = emb_bytes(b"EMB1", 3, 2, &[0.1, -0.0, 1e-30, f32::MAX, -7.25, 3.0]);
        assert_eq!(encode_embeddings(&decode_embeddings(&bytes).unwrap()), bytes);
        let lbl = lbl_bytes(5, &[4, 0, 2]);
        assert_eq!(encode_labels(&decode_labels(&lbl).unwrap()), lbl);
    }

    #[test]
    fn standardize_two_points_and_constant_column() {
        let m = EmbeddingMatrix::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let (s, stats) = standardize(&m, None).unwrap();
        assert_eq!(stats.mean, vec![2.0, 5.0]);
        assert_eq!(stats.std, vec![1.0, 0.0]);
        assert!((s.row(0)[0] + 1.0).abs() < 1e-6 && (s.row(1)[0] - 1.0).abs() < 1e-6);
        assert_eq!((s.row(0)[1], s.row(1)[1]), (0.0, 0.0));
    }

    #[test]
    fn standardize_identity_stats_and_mismatch() {
        let m = EmbeddingMatrix::from_rows(&[vec![1.5, -2.0], vec![0.25, 8.0]]).unwrap();
        let id = NormStats {
            mean: vec![0.0; 2],
            std: vec![1.0; 2],
        };
        let (s, _) = standardize(&m, Some(&id)).unwrap();
        assert_eq!(s, m);
        let bad = NormStats {
            mean: vec![0.0; 3],
            std: vec![1.0; 3],
        };
        assert!(standardize(&m, Some(&bad)).unwrap_err().is_data_error());
    }

    #[test]
    fn l2_examples() {
        let m = EmbeddingMatrix::from_rows(&[vec![3.0, 4.0], vec![0.0, 0.0], vec![1.0, 0.0]])
            .unwrap();
        let u = l2_normalize(&m);
        assert!((u.row(0)[0] - 0.6).abs() < 1e-7 && (u.row(0)[1] - 0.8).abs() < 1e-7);
        assert_eq!(u.row(1), &[0.0, 0.0]);
        assert_eq!(u.row(2), &[1.0, 0.0]);
    }

    #[test]
    fn selection_validation() {
        let mut sel = SelectionResult {
            strategy: "random".into(),
            seed: 0,
            budget_schedule: vec![2, 3],
            round_boundaries: vec![2, 3],
            indices: vec![4, 0, 2],
        };
        sel.validate(5).unwrap();
        assert_eq!(sel.round(1), &[2]);
        sel.indices[2] = 4;
        assert!(sel.validate(5).is_err());
        sel.indices[2] = 5;
        assert!(sel.validate(5).is_err());
    }
}
