//! LibSVM-format parsing and deterministic shuffle/split into device shards.
//!
//! The text format is one sample per line, `label idx:val idx:val ...`, with
//! 1-based strictly increasing feature indices. Anything after `#` on a line
//! is a comment; blank lines are skipped.

use std::path::Path;

use nalgebra::DMatrix;

use crate::linalg::Vector;
use crate::simnet::{sample_subset, RngStream};

/// Parsed dataset in sparse row form. Feature column indices are 0-based
/// internally (the text format is 1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub labels: Vec<f64>,
    /// Per row: (column, value) with strictly increasing columns.
    pub rows: Vec<Vec<(u32, f64)>>,
    pub dim: usize,
}

/// One device's dense shard: an `m × d` feature matrix and `m` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceData {
    pub a: DMatrix<f64>,
    pub b: Vector,
}

impl DeviceData {
    pub fn points(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("line {line}: unreadable label `{token}`")]
    BadLabel { line: usize, token: String },
    #[error("line {line}: unreadable feature token `{token}` (want idx:val)")]
    BadToken { line: usize, token: String },
    #[error("line {line}: feature indices are 1-based, got 0")]
    ZeroIndex { line: usize },
    #[error("line {line}: feature index {index} not greater than previous index {prev}")]
    NonIncreasingIndex { line: usize, index: u32, prev: u32 },
    #[error("line {line}: feature index {index} exceeds declared dimension {dim}")]
    IndexOutOfRange { line: usize, index: u32, dim: usize },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, thiserror::Error)]
#[error("cannot split {rows} rows into {n} nonempty shards")]
pub struct SplitError {
    pub rows: usize,
    pub n: usize,
}

/// Parses LibSVM text. `declared_dim` pins the feature dimension (indices
/// beyond it are rejected); without it the dimension is the largest index
/// seen.
pub fn parse_libsvm(text: &str, declared_dim: Option<usize>) -> Result<RawDataset, ParseError> {
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    let mut max_index: u32 = 0;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        let Some(label_tok) = tokens.next() else { continue };
        let label: f64 = label_tok
            .parse()
            .map_err(|_| ParseError::BadLabel { line, token: label_tok.to_string() })?;

        let mut entries: Vec<(u32, f64)> = Vec::new();
        let mut prev: Option<u32> = None;
        for tok in tokens {
            let Some((i_str, v_str)) = tok.split_once(':') else {
                return Err(ParseError::BadToken { line, token: tok.to_string() });
            };
            let index: u32 = i_str
                .parse()
                .map_err(|_| ParseError::BadToken { line, token: tok.to_string() })?;
            let value: f64 = v_str
                .parse()
                .map_err(|_| ParseError::BadToken { line, token: tok.to_string() })?;
            if index == 0 {
                return Err(ParseError::ZeroIndex { line });
            }
            if let Some(prev) = prev {
                if index <= prev {
                    return Err(ParseError::NonIncreasingIndex { line, index, prev });
                }
            }
            if let Some(dim) = declared_dim {
                if index as usize > dim {
                    return Err(ParseError::IndexOutOfRange { line, index, dim });
                }
            }
            prev = Some(index);
            max_index = max_index.max(index);
            entries.push((index - 1, value));
        }
        labels.push(label);
        rows.push(entries);
    }

    Ok(RawDataset { labels, rows, dim: declared_dim.unwrap_or(max_index as usize) })
}

pub fn read_libsvm(path: impl AsRef<Path>, declared_dim: Option<usize>) -> Result<RawDataset, ParseError> {
    parse_libsvm(&std::fs::read_to_string(path)?, declared_dim)
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Maps labels for binary classification: values > 0 become +1, the rest
    /// −1 (some LibSVM sets use {0, 1} labels).
    pub fn remap_binary_labels(&mut self) {
        for b in &mut self.labels {
            *b = if *b > 0.0 { 1.0 } else { -1.0 };
        }
    }
}

/// Fisher-Yates shuffles the rows with the given stream, keeps the first
/// `n·⌊rows/n⌋` of them, and deals shard `i` the contiguous block
/// `[i·m, (i+1)·m)` as a dense `m × d` matrix.
pub fn shuffle_split(data: &RawDataset, n: usize, rng: &mut RngStream) -> Result<Vec<DeviceData>, SplitError> {
    if n == 0 || data.len() < n {
        return Err(SplitError { rows: data.len(), n });
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.below(i + 1);
        order.swap(i, j);
    }
    let m = data.len() / n;
    let mut shards = Vec::with_capacity(n);
    for i in 0..n {
        let block = &order[i * m..(i + 1) * m];
        let mut a = DMatrix::zeros(m, data.dim);
        let mut b = Vector::zeros(m);
        for (r, &row) in block.iter().enumerate() {
            for &(col, val) in &data.rows[row] {
                a[(r, col as usize)] = val;
            }
            b[r] = data.labels[row];
        }
        shards.push(DeviceData { a, b });
    }
    Ok(shards)
}

/// Deterministic LibSVM-format text for a small binary-features
/// classification problem: `rows` lines over `dim` columns, about `avg_nnz`
/// active features per row (value 1), labels in {−1, +1} from a hidden
/// hyperplane with `flip_prob` label noise.
pub fn synthetic_libsvm_text(rows: usize, dim: usize, avg_nnz: usize, flip_prob: f64, seed: u64) -> String {
    assert!(dim >= 1 && avg_nnz >= 1 && avg_nnz <= dim, "need 1 <= avg_nnz <= dim");
    let mut rng = RngStream::new(seed).split("libsvm-fixture", 0);
    let w: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
    let mut out = String::with_capacity(rows * (3 + avg_nnz * 6));
    for _ in 0..rows {
        let lo = avg_nnz.saturating_sub(3).max(1);
        let hi = (avg_nnz + 3).min(dim);
        let k = lo + rng.below(hi - lo + 1);
        let cols = sample_subset(dim, k, &mut rng);
        let margin: f64 = cols.iter().map(|&c| w[c]).sum();
        let flip = rng.bernoulli(flip_prob);
        let positive = (margin >= 0.0) != flip;
        out.push_str(if positive { "+1" } else { "-1" });
        for c in cols {
            out.push(' ');
            out.push_str(&(c + 1).to_string());
            out.push_str(":1");
        }
        out.push('\n');
    }
    out
}

/// The stand-in for the `a1a` adult-income set used throughout the examples
/// and tests: 1605 rows, 123 binary features, ~5% label noise. Splitting
/// across 16 devices gives shards of exactly 100 points.
pub fn a1a_like_text() -> String {
    synthetic_libsvm_text(1605, 123, 14, 0.05, 0xA1A)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_basic_line_format() {
        let data = parse_libsvm("-1 3:1 10:0.5\n+1 1:2.25\n", None).unwrap();
        assert_eq!(data.labels, vec![-1.0, 1.0]);
        assert_eq!(data.rows[0], vec![(2, 1.0), (9, 0.5)]);
        assert_eq!(data.rows[1], vec![(0, 2.25)]);
        assert_eq!(data.dim, 10);
    }

    #[test]
    fn skips_blanks_and_comments() {
        let text = "# header comment\n\n+1 2:1 # trailing note\n   \n-1 1:1\n";
        let data = parse_libsvm(text, None).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.rows[0], vec![(1, 1.0)]);
    }

    #[test]
    fn empty_input_gives_empty_dataset() {
        let data = parse_libsvm("", None).unwrap();
        assert!(data.is_empty());
        assert_eq!(data.dim, 0);
        assert_eq!(parse_libsvm("", Some(7)).unwrap().dim, 7);
    }

    #[test]
    fn declared_dim_wins_over_max_seen() {
        let data = parse_libsvm("+1 2:1\n", Some(123)).unwrap();
        assert_eq!(data.dim, 123);
    }

    #[test]
    fn rejects_malformed_input_with_line_numbers() {
        match parse_libsvm("+1 1:1\nxyz 2:1\n", None) {
            Err(ParseError::BadLabel { line: 2, token }) => assert_eq!(token, "xyz"),
            other => panic!("expected BadLabel, got {other:?}"),
        }
        assert!(matches!(
            parse_libsvm("+1 1:1 nocolon\n", None),
            Err(ParseError::BadToken { line: 1, .. })
        ));
        assert!(matches!(
            parse_libsvm("+1 3:abc\n", None),
            Err(ParseError::BadToken { line: 1, .. })
        ));
        assert!(matches!(parse_libsvm("+1 0:1\n", None), Err(ParseError::ZeroIndex { line: 1 })));
        assert!(matches!(
            parse_libsvm("+1 3:1 3:2\n", None),
            Err(ParseError::NonIncreasingIndex { line: 1, index: 3, prev: 3 })
        ));
        assert!(matches!(
            parse_libsvm("+1 5:1 2:1\n", None),
            Err(ParseError::NonIncreasingIndex { line: 1, index: 2, prev: 5 })
        ));
        assert!(matches!(
            parse_libsvm("+1 1:1\n-1 200:1\n", Some(123)),
            Err(ParseError::IndexOutOfRange { line: 2, index: 200, dim: 123 })
        ));
    }

    #[test]
    fn binary_label_remap() {
        let mut data = parse_libsvm("0 1:1\n1 1:1\n-3 1:1\n2 1:1\n", None).unwrap();
        data.remap_binary_labels();
        assert_eq!(data.labels, vec![-1.0, 1.0, -1.0, 1.0]);
    }

    fn toy(rows: usize) -> RawDataset {
        let text: String =
            (0..rows).map(|r| format!("{} {}:{}\n", if r % 2 == 0 { 1 } else { -1 }, r + 1, r + 1)).collect();
        parse_libsvm(&text, Some(rows)).unwrap()
    }

    #[test]
    fn split_is_exhaustive_and_disjoint() {
        let data = toy(12);
        let mut rng = RngStream::new(9).split("split", 0);
        let shards = shuffle_split(&data, 3, &mut rng).unwrap();
        assert_eq!(shards.len(), 3);
        // Each original row r has its unique feature value r+1 in column r,
        // so the set of nonzero values identifies the rows a shard received.
        let mut seen: Vec<u64> = Vec::new();
        for shard in &shards {
            assert_eq!(shard.points(), 4);
            assert_eq!(shard.dim(), 12);
            for r in 0..shard.points() {
                let nz: Vec<f64> = shard.a.row(r).iter().copied().filter(|v| *v != 0.0).collect();
                assert_eq!(nz.len(), 1, "each toy row has one feature");
                seen.push(nz[0] as u64);
                let original = nz[0] as usize - 1;
                let expected_label = if original % 2 == 0 { 1.0 } else { -1.0 };
                assert_eq!(shard.b[r], expected_label, "label must travel with its row");
            }
        }
        seen.sort_unstable();
        assert_eq!(seen, (1..=12).collect::<Vec<u64>>(), "every row placed exactly once");
    }

    #[test]
    fn split_drops_the_remainder() {
        let data = toy(7);
        let mut rng = RngStream::new(9).split("split", 1);
        let shards = shuffle_split(&data, 2, &mut rng).unwrap();
        assert_eq!(shards.iter().map(DeviceData::points).sum::<usize>(), 6);
    }

    #[test]
    fn split_rejects_too_many_shards() {
        let data = toy(3);
        let mut rng = RngStream::new(9).split("split", 2);
        assert!(shuffle_split(&data, 4, &mut rng).is_err());
        assert!(shuffle_split(&data, 0, &mut rng).is_err());
    }

    #[test]
    fn split_is_seed_deterministic() {
        let data = toy(20);
        let a = shuffle_split(&data, 4, &mut RngStream::new(5).split("s", 0)).unwrap();
        let b = shuffle_split(&data, 4, &mut RngStream::new(5).split("s", 0)).unwrap();
        let c = shuffle_split(&data, 4, &mut RngStream::new(6).split("s", 0)).unwrap();
        assert_eq!(a, b, "same seed must reproduce shards bitwise");
        assert_ne!(a, c, "different seed should permute differently");
    }

    #[test]
    fn single_shard_is_the_whole_truncated_dataset() {
        let data = toy(5);
        let mut rng = RngStream::new(1).split("s", 0);
        let shards = shuffle_split(&data, 1, &mut rng).unwrap();
        assert_eq!(shards.len(), 1);
        assert_eq!(shards[0].points(), 5);
    }

    #[test]
    fn fixture_parses_and_shards_like_the_reference_set() {
        let text = a1a_like_text();
        let data = parse_libsvm(&text, Some(123)).unwrap();
        assert_eq!(data.len(), 1605);
        assert_eq!(data.dim, 123);
        assert!(data.labels.iter().all(|b| *b == 1.0 || *b == -1.0));
        let nnz_total: usize = data.rows.iter().map(Vec::len).sum();
        let avg = nnz_total as f64 / data.len() as f64;
        assert!((11.0..17.0).contains(&avg), "average nnz per row {avg} drifted");
        assert!(data.rows.iter().all(|r| r.iter().all(|&(_, v)| v == 1.0)));

        let mut rng = RngStream::new(3).split("shards", 0);
        let shards = shuffle_split(&data, 16, &mut rng).unwrap();
        assert_eq!(shards.len(), 16);
        assert!(shards.iter().all(|s| s.points() == 100));
    }

    #[test]
    fn fixture_is_reproducible() {
        assert_eq!(a1a_like_text(), a1a_like_text());
        assert_ne!(
            synthetic_libsvm_text(10, 20, 4, 0.0, 1),
            synthetic_libsvm_text(10, 20, 4, 0.0, 2)
        );
    }
}
