//! Per-sample embedding ingestion and per-class mean embeddings.
//!
//! Embeddings arrive precomputed (no image loading, no model inference).
//! Two on-disk formats are supported:
//!
//! * CSV: header `class_id,f0,f1,...,f{d-1}`, one sample per line.
//! * Binary (little-endian): magic `ATGE`, u16 version = 1, u32 sample
//!   count, u32 dim, then per sample a u32 class id followed by `dim`
//!   IEEE-754 f32 values.
//!
//! Samples are stored as f32 (the on-disk width); all statistics are
//! computed in f64.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::exec::map_indexed;
use crate::{Error, Result};

/// Magic bytes prefixing the binary sample format.
pub const BINARY_MAGIC: [u8; 4] = [0x41, 0x54, 0x47, 0x45]; // "ATGE"
/// Version field of the binary sample format.
pub const BINARY_VERSION: u16 = 1;

/// On-disk representation of a sample stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Csv,
    Binary,
}

/// Per-sample embedding vectors tagged with class ids, in ingestion order.
///
/// Class ids are caller-supplied opaque integers and need not be contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    class_ids: Vec<u32>,
    // Row-major: sample i occupies values[i*dim..(i+1)*dim].
    values: Vec<f32>,
}

impl EmbeddingTable {
    /// Builds a table from `(class_id, vector)` rows.
    pub fn from_rows(dim: usize, rows: Vec<(u32, Vec<f32>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dim must be positive".into()));
        }
        if rows.is_empty() {
            return Err(Error::NoSamples);
        }
        let mut class_ids = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (class_id, vector) in rows {
            if vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: vector.len(),
                });
            }
            class_ids.push(class_id);
            values.extend_from_slice(&vector);
        }
        Ok(Self {
            dim,
            class_ids,
            values,
        })
    }

    /// Embedding width.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    /// Class id of sample `i`.
    pub fn class_id(&self, i: usize) -> u32 {
        self.class_ids[i]
    }

    /// Embedding vector of sample `i`.
    pub fn vector(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Iterates `(class_id, vector)` pairs in sample order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, &[f32])> + '_ {
        self.class_ids
            .iter()
            .copied()
            .zip(self.values.chunks_exact(self.dim))
    }

    /// Sorted list of the distinct class ids present in the table.
    pub fn distinct_class_ids(&self) -> Vec<u32> {
        let mut ids = self.class_ids.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Sample indices per class, in sample order, keyed by class id.
    pub fn indices_by_class(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut map: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &id) in self.class_ids.iter().enumerate() {
            map.entry(id).or_default().push(i);
        }
        map
    }

    /// Reduces the table to one mean embedding per class.
    ///
    /// Rows are ordered by ascending class id. Accumulation runs in f64 and
    /// follows sample order within each class, so the result does not depend
    /// on the thread count.
    pub fn class_means(&self) -> ClassEmbeddingSet {
        let by_class = self.indices_by_class();
        let classes: Vec<(u32, Vec<usize>)> = by_class.into_iter().collect();
        let dim = self.dim;
        let rows = map_indexed(classes.len(), |c| {
            let (_, ref indices) = classes[c];
            let mut acc = vec![0.0f64; dim];
            for &i in indices {
                for (a, &v) in acc.iter_mut().zip(self.vector(i)) {
                    *a += v as f64;
                }
            }
            let inv = 1.0 / indices.len() as f64;
            for a in &mut acc {
                *a *= inv;
            }
            acc
        });
        let mut means = Vec::with_capacity(classes.len() * dim);
        for row in rows {
            means.extend_from_slice(&row);
        }
        ClassEmbeddingSet {
            dim,
            class_ids: classes.into_iter().map(|(id, _)| id).collect(),
            means,
            normalized: false,
        }
    }
}

/// One mean embedding per class, optionally unit-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEmbeddingSet {
    dim: usize,
    class_ids: Vec<u32>,
    // Row-major M x dim, rows aligned with class_ids.
    means: Vec<f64>,
    normalized: bool,
}

impl ClassEmbeddingSet {
    /// Builds a set directly from mean rows. Rows must align with `class_ids`.
    pub fn from_means(class_ids: Vec<u32>, dim: usize, means: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dim must be positive".into()));
        }
        if means.len() != class_ids.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: class_ids.len() * dim,
                found: means.len(),
            });
        }
        Ok(Self {
            dim,
            class_ids,
            means,
            normalized: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of classes.
    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    /// Mean embedding of the class at row `i`.
    pub fn mean(&self, i: usize) -> &[f64] {
        &self.means[i * self.dim..(i + 1) * self.dim]
    }

    /// All mean rows as one row-major slice.
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// Whether every row has unit Euclidean norm.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Returns a copy with every row scaled to unit Euclidean norm.
    ///
    /// Idempotent up to roundoff. Fails on a zero-norm row, naming the class.
    pub fn normalize_unit(&self) -> Result<ClassEmbeddingSet> {
        let mut means = self.means.clone();
        for (i, row) in means.chunks_exact_mut(self.dim).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm <= 0.0 {
                return Err(Error::ZeroNorm {
                    class_id: self.class_ids[i],
                });
            }
            let inv = 1.0 / norm;
            for v in row {
                *v *= inv;
            }
        }
        Ok(ClassEmbeddingSet {
            dim: self.dim,
            class_ids: self.class_ids.clone(),
            means,
            normalized: true,
        })
    }
}

/// Parses a sample stream in the given format.
///
/// The table preserves sample order; `dim` is inferred from the header.
pub fn load_samples<R: Read>(reader: R, format: SampleFormat) -> Result<EmbeddingTable> {
    match format {
        SampleFormat::Csv => load_csv(reader),
        SampleFormat::Binary => load_binary(reader),
    }
}

/// Writes a table in the given format. Binary output round-trips bit-exactly.
pub fn save_samples<W: Write>(
    table: &EmbeddingTable,
    writer: W,
    format: SampleFormat,
) -> Result<()> {
    match format {
        SampleFormat::Csv => save_csv(table, writer),
        SampleFormat::Binary => save_binary(table, writer),
    }
}

fn load_csv<R: Read>(mut reader: R) -> Result<EmbeddingTable> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or(Error::NoSamples)?;
    let header_fields: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    if header_fields.first() != Some(&"class_id") || header_fields.len() < 2 {
        return Err(Error::MalformedRow {
            line: 1,
            reason: "header must be class_id,f0,...".into(),
        });
    }
    let dim = header_fields.len() - 1;

    let mut class_ids = Vec::new();
    let mut values = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(Error::InconsistentWidth {
                line: line_no,
                expected: dim,
                found: fields.len().saturating_sub(1),
            });
        }
        let class_id: u32 = fields[0].trim().parse().map_err(|_| Error::MalformedRow {
            line: line_no,
            reason: format!("invalid class id {:?}", fields[0]),
        })?;
        class_ids.push(class_id);
        for (col, field) in fields[1..].iter().enumerate() {
            let v: f32 = field.trim().parse().map_err(|_| Error::MalformedRow {
                line: line_no,
                reason: format!("invalid float {:?}", field),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    line: line_no,
                    column: col + 2,
                });
            }
            values.push(v);
        }
    }
    if class_ids.is_empty() {
        return Err(Error::NoSamples);
    }
    Ok(EmbeddingTable {
        dim,
        class_ids,
        values,
    })
}

fn save_csv<W: Write>(table: &EmbeddingTable, mut writer: W) -> Result<()> {
    let mut header = String::from("class_id");
    for d in 0..table.dim {
        header.push_str(&format!(",f{d}"));
    }
    writeln!(writer, "{header}")?;
    for (class_id, vector) in table.iter() {
        let mut line = class_id.to_string();
        for v in vector {
            line.push(',');
            line.push_str(&format!("{v}"));
        }
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Tracks the byte offset while reading, for error messages.
struct Cursor<R> {
    reader: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn read_exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        self.reader
            .read_exact(buf)
            .map_err(|_| Error::MalformedBinary {
                offset: at,
                reason: format!("truncated {what}"),
            })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn read_u16(&mut self, what: &str) -> Result<u16> {
        let mut b = [0u8; 2];
        self.read_exact(&mut b, what)?;
        Ok(u16::from_le_bytes(b))
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }
}

fn load_binary<R: Read>(reader: R) -> Result<EmbeddingTable> {
    let mut cur = Cursor { reader, offset: 0 };

    let mut magic = [0u8; 4];
    if cur.reader.read_exact(&mut magic).is_err() {
        return Err(Error::NoSamples);
    }
    cur.offset = 4;
    if magic != BINARY_MAGIC {
        return Err(Error::MalformedBinary {
            offset: 0,
            reason: format!("bad magic {magic:02x?}"),
        });
    }
    let version = cur.read_u16("version")?;
    if version != BINARY_VERSION {
        return Err(Error::MalformedBinary {
            offset: 4,
            reason: format!("unsupported version {version}"),
        });
    }
    let num_samples = cur.read_u32("sample count")? as usize;
    let dim = cur.read_u32("dim")? as usize;
    if dim == 0 {
        return Err(Error::MalformedBinary {
            offset: 10,
            reason: "dim is zero".into(),
        });
    }
    if num_samples == 0 {
        return Err(Error::NoSamples);
    }

    let mut class_ids = Vec::with_capacity(num_samples);
    let mut values = Vec::with_capacity(num_samples * dim);
    let mut row = vec![0u8; 4 * dim];
    for _ in 0..num_samples {
        class_ids.push(cur.read_u32("class id")?);
        let at = cur.offset;
        cur.read_exact(&mut row, "sample values")?;
        for (j, chunk) in row.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if !v.is_finite() {
                return Err(Error::MalformedBinary {
                    offset: at + 4 * j as u64,
                    reason: "non-finite value".into(),
                });
            }
            values.push(v);
        }
    }

    let mut rest = [0u8; 1];
    if cur.reader.read_exact(&mut rest).is_ok() {
        return Err(Error::MalformedBinary {
            offset: cur.offset,
            reason: "trailing bytes after last sample".into(),
        });
    }

    Ok(EmbeddingTable {
        dim,
        class_ids,
        values,
    })
}

fn save_binary<W: Write>(table: &EmbeddingTable, mut writer: W) -> Result<()> {
    writer.write_all(&BINARY_MAGIC)?;
    writer.write_all(&BINARY_VERSION.to_le_bytes())?;
    writer.write_all(&(table.len() as u32).to_le_bytes())?;
    writer.write_all(&(table.dim as u32).to_le_bytes())?;
    for (class_id, vector) in table.iter() {
        writer.write_all(&class_id.to_le_bytes())?;
        for v in vector {
            writer.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: Vec<(u32, Vec<f32>)>) -> EmbeddingTable {
        let dim = rows[0].1.len();
        EmbeddingTable::from_rows(dim, rows).unwrap()
    }

    #[test]
    fn csv_two_samples_one_class() {
        let t = load_samples("class_id,f0,f1\n3,1.0,2.0\n3,3.0,4.0".as_bytes(), SampleFormat::Csv)
            .unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.len(), 2);
        assert_eq!(t.class_id(0), 3);
        assert_eq!(t.vector(1), &[3.0, 4.0]);
    }

    #[test]
    fn csv_empty_stream_is_no_samples() {
        assert!(matches!(
            load_samples("".as_bytes(), SampleFormat::Csv),
            Err(Error::NoSamples)
        ));
        assert!(matches!(
            load_samples("class_id,f0\n".as_bytes(), SampleFormat::Csv),
            Err(Error::NoSamples)
        ));
    }

    #[test]
    fn csv_errors_name_the_line() {
        let err = load_samples(
            "class_id,f0,f1\n1,0.5,0.25\n2,0.5\n".as_bytes(),
            SampleFormat::Csv,
        )
        .unwrap_err();
        match err {
            Error::InconsistentWidth {
                line,
                expected,
                found,
            } => {
                assert_eq!((line, expected, found), (3, 2, 1));
            }
            other => panic!("unexpected error {other:?}"),
        }

        let err = load_samples("class_id,f0\n1,inf\n".as_bytes(), SampleFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue { line: 2, column: 2 }));

        let err = load_samples("class_id,f0\n-1,0.5\n".as_bytes(), SampleFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 2, .. }));
    }

    #[test]
    fn binary_single_sample_round_trip() {
        let t = table(vec![(7, vec![0.25, -1.5, 3.0, 0.0])]);
        let mut buf = Vec::new();
        save_samples(&t, &mut buf, SampleFormat::Binary).unwrap();
        assert_eq!(&buf[..4], b"ATGE");
        let back = load_samples(buf.as_slice(), SampleFormat::Binary).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn binary_rejects_bad_magic_and_truncation() {
        let err = load_samples(b"XTGE\x01\x00".as_slice(), SampleFormat::Binary).unwrap_err();
        assert!(matches!(err, Error::MalformedBinary { offset: 0, .. }));

        let t = table(vec![(1, vec![1.0, 2.0])]);
        let mut buf = Vec::new();
        save_samples(&t, &mut buf, SampleFormat::Binary).unwrap();
        buf.truncate(buf.len() - 3);
        let err = load_samples(buf.as_slice(), SampleFormat::Binary).unwrap_err();
        assert!(matches!(err, Error::MalformedBinary { .. }));
    }

    #[test]
    fn class_means_two_point_average() {
        let t = table(vec![(0, vec![0.0, 0.0]), (0, vec![2.0, 2.0])]);
        let set = t.class_means();
        assert_eq!(set.class_ids(), &[0]);
        assert_eq!(set.mean(0), &[1.0, 1.0]);
        assert!(!set.is_normalized());
    }

    #[test]
    fn class_means_single_sample_identity_and_sorted_ids() {
        let t = table(vec![(9, vec![0.5, -0.5]), (2, vec![1.0, 4.0])]);
        let set = t.class_means();
        assert_eq!(set.class_ids(), &[2, 9]);
        assert_eq!(set.mean(0), &[1.0, 4.0]);
        assert_eq!(set.mean(1), &[0.5, -0.5]);
    }

    #[test]
    fn class_means_matches_accumulate_then_divide_oracle() {
        // Independent oracle: one sequential pass with f64 accumulators.
        let mut rows = Vec::new();
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) as f32 - 0.5
        };
        for i in 0..100u32 {
            rows.push((i % 5, vec![next(), next(), next()]));
        }
        let t = table(rows.clone());

        let mut sums = vec![vec![0.0f64; 3]; 5];
        let mut counts = vec![0usize; 5];
        for (id, v) in &rows {
            counts[*id as usize] += 1;
            for (a, x) in sums[*id as usize].iter_mut().zip(v) {
                *a += *x as f64;
            }
        }
        let set = t.class_means();
        for c in 0..5 {
            for d in 0..3 {
                let expected = sums[c][d] / counts[c] as f64;
                assert!((set.mean(c)[d] - expected).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn class_means_permutation_within_tolerance() {
        let mut rows = Vec::new();
        for i in 0..60u32 {
            let x = (i as f32).sin() * 3.0;
            rows.push((i % 4, vec![x, x * x, 1.0 - x]));
        }
        let a = table(rows.clone()).class_means();
        rows.reverse();
        let b = table(rows).class_means();
        for (x, y) in a.means().iter().zip(b.means()) {
            let scale = x.abs().max(y.abs()).max(1e-12);
            assert!((x - y).abs() / scale <= 1e-9);
        }
    }

    #[test]
    fn normalize_three_four_five() {
        let set = ClassEmbeddingSet::from_means(vec![1], 2, vec![3.0, 4.0]).unwrap();
        let n = set.normalize_unit().unwrap();
        assert!((n.mean(0)[0] - 0.6).abs() < 1e-15);
        assert!((n.mean(0)[1] - 0.8).abs() < 1e-15);
        assert!(n.is_normalized());
    }

    #[test]
    fn normalize_is_idempotent() {
        let set = ClassEmbeddingSet::from_means(vec![1, 2], 2, vec![3.0, 4.0, -1.0, 1.0]).unwrap();
        let once = set.normalize_unit().unwrap();
        let twice = once.normalize_unit().unwrap();
        for (a, b) in once.means().iter().zip(twice.means()) {
            assert!((a - b).abs() <= 1e-12);
        }
        for row in twice.means().chunks_exact(2) {
            let norm = (row[0] * row[0] + row[1] * row[1]).sqrt();
            assert!((norm - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn normalize_zero_row_names_class() {
        let set = ClassEmbeddingSet::from_means(vec![5, 8], 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        match set.normalize_unit() {
            Err(Error::ZeroNorm { class_id }) => assert_eq!(class_id, 8),
            other => panic!("expected zero-norm error, got {other:?}"),
        }
    }
}
