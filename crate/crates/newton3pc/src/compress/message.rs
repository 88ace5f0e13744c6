//! Wire format for everything a device or the server transmits.
//!
//! One tag byte, then a fixed layout per kind; all integers are `u32` little
//! endian, all floats IEEE-754 binary64 little endian. Costs are the exact
//! arithmetic of this layout:
//!
//! ```text
//! tag 0  Skip      1 byte
//! tag 1  Sparse    1 + 4 + 12·count        (u32 flat index, f64 value) pairs
//! tag 2  LowRank   1 + 4 + 16·R·d          R left then R right d-vectors
//! tag 3  Dense     1 + 8·len               values in flat row-major order
//! tag 4  Scalar    1 + 8
//! ```
//!
//! Sparse indices are flat row-major (`idx = row·d + col`) and strictly
//! increasing. Payload lengths are implied by the byte count, so a message is
//! self-describing given its tag.

use crate::linalg::{SymMatrix, Vector};

#[derive(Debug, Clone, thiserror::Error)]
pub enum DecodeError {
    #[error("empty message")]
    Empty,
    #[error("unknown message tag {0}")]
    UnknownTag(u8),
    #[error("message length {got} does not fit tag {tag}: {why}")]
    BadLength { tag: &'static str, got: usize, why: String },
    #[error("sparse indices not strictly increasing at position {0}")]
    UnsortedIndices(usize),
    #[error("message does not fit target of dimension {dim}: {why}")]
    ShapeMismatch { dim: usize, why: String },
}

/// A single transmission unit. `Sparse` entries are `(flat index, value)`
/// with strictly increasing indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Skip,
    Sparse(Vec<(u32, f64)>),
    /// Rank-`R` factorization `Σ_r left_r · right_rᵀ`; every factor has the
    /// same length `d ≥ 1` and `R ≥ 1`.
    LowRank { left: Vec<Vec<f64>>, right: Vec<Vec<f64>> },
    Dense(Vec<f64>),
    Scalar(f64),
}

impl Message {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Message::Skip => "skip",
            Message::Sparse(_) => "sparse",
            Message::LowRank { .. } => "low-rank",
            Message::Dense(_) => "dense",
            Message::Scalar(_) => "scalar",
        }
    }

    /// Exact encoded size in bytes.
    pub fn byte_cost(&self) -> usize {
        match self {
            Message::Skip => 1,
            Message::Sparse(entries) => 1 + 4 + 12 * entries.len(),
            Message::LowRank { left, right } => {
                let d = left.first().map_or(0, |v| v.len());
                debug_assert_eq!(left.len(), right.len());
                1 + 4 + 16 * left.len() * d
            }
            Message::Dense(values) => 1 + 8 * values.len(),
            Message::Scalar(_) => 9,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_cost());
        match self {
            Message::Skip => out.push(0),
            Message::Sparse(entries) => {
                out.push(1);
                out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
                for (idx, val) in entries {
                    out.extend_from_slice(&idx.to_le_bytes());
                    out.extend_from_slice(&val.to_le_bytes());
                }
            }
            Message::LowRank { left, right } => {
                debug_assert!(!left.is_empty() && left.len() == right.len());
                out.push(2);
                out.extend_from_slice(&(left.len() as u32).to_le_bytes());
                for v in left.iter().chain(right.iter()) {
                    for x in v {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
            }
            Message::Dense(values) => {
                out.push(3);
                for x in values {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            Message::Scalar(x) => {
                out.push(4);
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        debug_assert_eq!(out.len(), self.byte_cost());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Message, DecodeError> {
        let (&tag, body) = bytes.split_first().ok_or(DecodeError::Empty)?;
        let f64_at = |b: &[u8], i: usize| f64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        match tag {
            0 => {
                if !body.is_empty() {
                    return Err(DecodeError::BadLength {
                        tag: "skip",
                        got: bytes.len(),
                        why: "expected exactly 1 byte".into(),
                    });
                }
                Ok(Message::Skip)
            }
            1 => {
                if body.len() < 4 || (body.len() - 4) % 12 != 0 {
                    return Err(DecodeError::BadLength {
                        tag: "sparse",
                        got: bytes.len(),
                        why: "expected 5 + 12·count bytes".into(),
                    });
                }
                let count = u32::from_le_bytes(body[..4].try_into().unwrap()) as usize;
                if body.len() - 4 != 12 * count {
                    return Err(DecodeError::BadLength {
                        tag: "sparse",
                        got: bytes.len(),
                        why: format!("count field says {count} entries"),
                    });
                }
                let mut entries = Vec::with_capacity(count);
                let mut prev: Option<u32> = None;
                for e in 0..count {
                    let off = 4 + 12 * e;
                    let idx = u32::from_le_bytes(body[off..off + 4].try_into().unwrap());
                    if prev.is_some_and(|p| p >= idx) {
                        return Err(DecodeError::UnsortedIndices(e));
                    }
                    prev = Some(idx);
                    entries.push((idx, f64_at(body, off + 4)));
                }
                Ok(Message::Sparse(entries))
            }
            2 => {
                if body.len() < 4 {
                    return Err(DecodeError::BadLength {
                        tag: "low-rank",
                        got: bytes.len(),
                        why: "missing rank field".into(),
                    });
                }
                let r = u32::from_le_bytes(body[..4].try_into().unwrap()) as usize;
                let payload = body.len() - 4;
                if r == 0 || payload == 0 || payload % (16 * r) != 0 {
                    return Err(DecodeError::BadLength {
                        tag: "low-rank",
                        got: bytes.len(),
                        why: format!("payload of {payload} bytes does not split into 2·{r} equal vectors"),
                    });
                }
                let d = payload / (16 * r);
                let vec_at = |start: usize| -> Vec<f64> {
                    (0..d).map(|j| f64_at(body, 4 + 8 * (start * d + j))).collect()
                };
                let left: Vec<Vec<f64>> = (0..r).map(vec_at).collect();
                let right: Vec<Vec<f64>> = (r..2 * r).map(vec_at).collect();
                Ok(Message::LowRank { left, right })
            }
            3 => {
                if body.len() % 8 != 0 {
                    return Err(DecodeError::BadLength {
                        tag: "dense",
                        got: bytes.len(),
                        why: "payload not a multiple of 8".into(),
                    });
                }
                Ok(Message::Dense(body.chunks_exact(8).map(|c| f64_at(c, 0)).collect()))
            }
            4 => {
                if body.len() != 8 {
                    return Err(DecodeError::BadLength {
                        tag: "scalar",
                        got: bytes.len(),
                        why: "expected exactly 9 bytes".into(),
                    });
                }
                Ok(Message::Scalar(f64_at(body, 0)))
            }
            t => Err(DecodeError::UnknownTag(t)),
        }
    }

    /// Materializes the payload as a `d×d` matrix (flat row-major indexing).
    /// `Skip` gives zeros; `Scalar` does not fit a matrix.
    pub fn to_matrix(&self, d: usize) -> Result<SymMatrix, DecodeError> {
        let numel = d * d;
        let mut out = SymMatrix::zeros(d);
        match self {
            Message::Skip => {}
            Message::Sparse(entries) => {
                for &(idx, val) in entries {
                    if idx as usize >= numel {
                        return Err(DecodeError::ShapeMismatch {
                            dim: d,
                            why: format!("sparse index {idx} out of range for {numel} entries"),
                        });
                    }
                    out.set_flat(idx as usize, val);
                }
            }
            Message::LowRank { left, right } => {
                for (l, r) in left.iter().zip(right) {
                    if l.len() != d || r.len() != d {
                        return Err(DecodeError::ShapeMismatch {
                            dim: d,
                            why: format!("factor length {} does not match", l.len()),
                        });
                    }
                    for i in 0..d {
                        for j in 0..d {
                            out.set(i, j, out.get(i, j) + l[i] * r[j]);
                        }
                    }
                }
            }
            Message::Dense(values) => {
                if values.len() != numel {
                    return Err(DecodeError::ShapeMismatch {
                        dim: d,
                        why: format!("dense payload has {} values, need {numel}", values.len()),
                    });
                }
                for (idx, &v) in values.iter().enumerate() {
                    out.set_flat(idx, v);
                }
            }
            Message::Scalar(_) => {
                return Err(DecodeError::ShapeMismatch { dim: d, why: "scalar payload".into() })
            }
        }
        Ok(out)
    }

    /// Materializes the payload as a `d`-vector. `Skip` gives zeros.
    pub fn to_vector(&self, d: usize) -> Result<Vector, DecodeError> {
        let mut out = Vector::zeros(d);
        match self {
            Message::Skip => {}
            Message::Sparse(entries) => {
                for &(idx, val) in entries {
                    if idx as usize >= d {
                        return Err(DecodeError::ShapeMismatch {
                            dim: d,
                            why: format!("sparse index {idx} out of range"),
                        });
                    }
                    out[idx as usize] = val;
                }
            }
            Message::Dense(values) => {
                if values.len() != d {
                    return Err(DecodeError::ShapeMismatch {
                        dim: d,
                        why: format!("dense payload has {} values, need {d}", values.len()),
                    });
                }
                for (i, &v) in values.iter().enumerate() {
                    out[i] = v;
                }
            }
            Message::LowRank { .. } | Message::Scalar(_) => {
                return Err(DecodeError::ShapeMismatch {
                    dim: d,
                    why: format!("{} payload cannot fill a vector", self.kind_name()),
                })
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_costs_match_layout_arithmetic() {
        assert_eq!(Message::Skip.byte_cost(), 1);
        let sparse = Message::Sparse((0..5).map(|i| (i as u32, i as f64)).collect());
        assert_eq!(sparse.byte_cost(), 65);
        let lowrank = Message::LowRank { left: vec![vec![0.0; 123]], right: vec![vec![0.0; 123]] };
        assert_eq!(lowrank.byte_cost(), 1973);
        assert_eq!(Message::Dense(vec![0.0; 123]).byte_cost(), 1 + 8 * 123);
        assert_eq!(Message::Scalar(1.0).byte_cost(), 9);

        for m in [&Message::Skip, &sparse, &lowrank] {
            assert_eq!(m.encode().len(), m.byte_cost());
        }
    }

    #[test]
    fn rejects_malformed_bytes() {
        assert!(matches!(Message::decode(&[]), Err(DecodeError::Empty)));
        assert!(matches!(Message::decode(&[9]), Err(DecodeError::UnknownTag(9))));
        assert!(matches!(Message::decode(&[0, 0]), Err(DecodeError::BadLength { .. })));
        // Sparse count field inconsistent with actual payload.
        let mut bad = Message::Sparse(vec![(0, 1.0)]).encode();
        bad[1] = 2;
        assert!(matches!(Message::decode(&bad), Err(DecodeError::BadLength { .. })));
        // Non-increasing sparse indices.
        let mut m = Message::Sparse(vec![(3, 1.0), (5, 2.0)]).encode();
        m[5 + 12] = 3; // second index 5 -> 3
        assert!(matches!(Message::decode(&m), Err(DecodeError::UnsortedIndices(1))));
        // Truncated scalar.
        assert!(matches!(Message::decode(&[4, 0, 0]), Err(DecodeError::BadLength { .. })));
        // Low-rank with rank 0.
        assert!(matches!(Message::decode(&[2, 0, 0, 0, 0]), Err(DecodeError::BadLength { .. })));
    }

    #[test]
    fn sparse_out_of_range_index_rejected_at_materialization() {
        let m = Message::Sparse(vec![(8, 1.0)]);
        assert!(m.to_matrix(2).is_err());
        assert!(m.to_vector(3).is_err());
    }

    fn arb_message() -> impl Strategy<Value = Message> {
        let finite = -1e12f64..1e12;
        prop_oneof![
            Just(Message::Skip),
            prop::collection::vec(finite.clone(), 0..20).prop_map(|vals| {
                Message::Sparse(vals.into_iter().enumerate().map(|(i, v)| ((3 * i) as u32, v)).collect())
            }),
            (1usize..4, 1usize..6).prop_flat_map(move |(r, d)| {
                prop::collection::vec(-1e9f64..1e9, 2 * r * d).prop_map(move |flat| {
                    let vec_at = |s: usize| flat[s * d..(s + 1) * d].to_vec();
                    Message::LowRank {
                        left: (0..r).map(vec_at).collect(),
                        right: (r..2 * r).map(vec_at).collect(),
                    }
                })
            }),
            prop::collection::vec(finite.clone(), 0..30).prop_map(Message::Dense),
            finite.prop_map(Message::Scalar),
        ]
    }

    proptest! {
        #[test]
        fn roundtrip(m in arb_message()) {
            let bytes = m.encode();
            prop_assert_eq!(bytes.len(), m.byte_cost());
            let back = Message::decode(&bytes).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
