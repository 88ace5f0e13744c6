//! Single-input compressors with the contraction property
//! `E‖C(X) − X‖² ≤ (1 − α)·‖X‖²` for some `α ∈ (0, 1]`.
//!
//! All entrywise kinds work on the flat row-major view, so the same spec can
//! compress a `d×d` Hessian (numel `d²`) or a `d`-vector iterate (numel `d`).
//! Rank truncation is matrix-only.


use super::{Message, SpecError};
use crate::linalg::{SymMatrix, Vector};
use crate::simnet::RngStream;

/// What a spec is bound to: a square matrix side or a vector length. The
/// compressors and their constants depend on the total entry count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Matrix { d: usize },
    Vector { d: usize },
}

impl Shape {
    pub fn dim(&self) -> usize {
        match *self {
            Shape::Matrix { d } | Shape::Vector { d } => d,
        }
    }

    pub fn numel(&self) -> usize {
        match *self {
            Shape::Matrix { d } => d * d,
            Shape::Vector { d } => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContractiveKind {
    /// Keep the `k` largest-magnitude entries; ties go to the smallest flat
    /// row-major index.
    TopK { k: usize },
    /// Best rank-`r` approximation via truncated SVD.
    RankR { r: usize },
    /// Keep `k` uniformly random entries. `scaled` multiplies survivors by
    /// `numel/k`, which makes the compressor unbiased instead of contractive.
    RandK { k: usize, scaled: bool },
    /// Keep entries with `|x| ≥ λ·max|x|`.
    AdaptiveThreshold { lambda: f64 },
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractiveSpec {
    kind: ContractiveKind,
    shape: Shape,
    alpha: Option<f64>,
}

impl ContractiveSpec {
    pub fn new(kind: ContractiveKind, shape: Shape) -> Result<Self, SpecError> {
        let numel = shape.numel();
        if numel == 0 {
            return Err(SpecError::new("compressor shape has no entries"));
        }
        if numel > u32::MAX as usize {
            return Err(SpecError::new("shape too large for 32-bit flat indices"));
        }
        let alpha = match kind {
            ContractiveKind::TopK { k } => {
                if k == 0 || k > numel {
                    return Err(SpecError::new(format!("top-k requires 1 ≤ k ≤ {numel}, got {k}")));
                }
                Some(k as f64 / numel as f64)
            }
            ContractiveKind::RankR { r } => {
                let Shape::Matrix { d } = shape else {
                    return Err(SpecError::new("rank truncation needs a matrix shape"));
                };
                if r == 0 || r > d {
                    return Err(SpecError::new(format!("rank-r requires 1 ≤ r ≤ {d}, got {r}")));
                }
                Some(r as f64 / d as f64)
            }
            ContractiveKind::RandK { k, scaled } => {
                if k == 0 || k > numel {
                    return Err(SpecError::new(format!("rand-k requires 1 ≤ k ≤ {numel}, got {k}")));
                }
                if scaled {
                    None // unbiased, not contractive
                } else {
                    Some(k as f64 / numel as f64)
                }
            }
            ContractiveKind::AdaptiveThreshold { lambda } => {
                if !(lambda > 0.0 && lambda <= 1.0) {
                    return Err(SpecError::new(format!(
                        "adaptive threshold requires λ ∈ (0, 1], got {lambda}"
                    )));
                }
                let n = numel as f64;
                Some((1.0 - n * lambda * lambda).max(1.0 / n))
            }
            ContractiveKind::Identity => Some(1.0),
        };
        Ok(Self { kind, shape, alpha })
    }

    pub fn top_k(k: usize, shape: Shape) -> Result<Self, SpecError> {
        Self::new(ContractiveKind::TopK { k }, shape)
    }

    pub fn rank_r(r: usize, d: usize) -> Result<Self, SpecError> {
        Self::new(ContractiveKind::RankR { r }, Shape::Matrix { d })
    }

    pub fn rand_k(k: usize, scaled: bool, shape: Shape) -> Result<Self, SpecError> {
        Self::new(ContractiveKind::RandK { k, scaled }, shape)
    }

    pub fn adaptive_threshold(lambda: f64, shape: Shape) -> Result<Self, SpecError> {
        Self::new(ContractiveKind::AdaptiveThreshold { lambda }, shape)
    }

    pub fn identity(shape: Shape) -> Result<Self, SpecError> {
        Self::new(ContractiveKind::Identity, shape)
    }

    pub fn kind(&self) -> &ContractiveKind {
        &self.kind
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// Contraction constant; `None` for the unbiased (scaled) rand-k, which
    /// satisfies `E[C(X)] = X` instead of a contraction bound.
    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    /// Deterministic per-instance bound on `‖C(X) − X‖²/‖X‖²` when one exists
    /// that is tighter than `1 − α` (the adaptive threshold has one).
    pub fn per_instance_bound(&self) -> Option<f64> {
        match self.kind {
            ContractiveKind::AdaptiveThreshold { lambda } => {
                let n = self.shape.numel() as f64;
                Some((n * lambda * lambda).min(1.0 - 1.0 / n))
            }
            _ => None,
        }
    }

    pub fn is_randomized(&self) -> bool {
        matches!(self.kind, ContractiveKind::RandK { .. })
    }

    pub fn label(&self) -> String {
        let shape = match self.shape {
            Shape::Matrix { d } => format!("{d}x{d}"),
            Shape::Vector { d } => format!("len {d}"),
        };
        match &self.kind {
            ContractiveKind::TopK { k } => format!("top-k(k={k}, {shape})"),
            ContractiveKind::RankR { r } => format!("rank-r(r={r}, {shape})"),
            ContractiveKind::RandK { k, scaled } => {
                format!("rand-k(k={k}, {}, {shape})", if *scaled { "scaled" } else { "unscaled" })
            }
            ContractiveKind::AdaptiveThreshold { lambda } => {
                format!("adaptive-threshold(λ={lambda}, {shape})")
            }
            ContractiveKind::Identity => format!("identity({shape})"),
        }
    }

    /// Kept `(flat index, value)` pairs for the entrywise kinds, ascending by
    /// index. `None` for the non-entrywise kinds.
    fn select_entries(&self, flat: &dyn Fn(usize) -> f64, rng: &mut RngStream) -> Option<Vec<(u32, f64)>> {
        let numel = self.shape.numel();
        match self.kind {
            ContractiveKind::TopK { k } => {
                let mut order: Vec<u32> = (0..numel as u32).collect();
                order.sort_unstable_by(|&a, &b| {
                    flat(b as usize)
                        .abs()
                        .total_cmp(&flat(a as usize).abs())
                        .then(a.cmp(&b))
                });
                let mut kept: Vec<u32> = order[..k].to_vec();
                kept.sort_unstable();
                Some(kept.into_iter().map(|i| (i, flat(i as usize))).collect())
            }
            ContractiveKind::RandK { k, scaled } => {
                let gain = if scaled { numel as f64 / k as f64 } else { 1.0 };
                let picked = crate::simnet::sample_subset(numel, k, rng);
                Some(picked.into_iter().map(|i| (i as u32, gain * flat(i))).collect())
            }
            ContractiveKind::AdaptiveThreshold { lambda } => {
                let max = (0..numel).fold(0.0f64, |m, i| m.max(flat(i).abs()));
                if max == 0.0 {
                    return Some(Vec::new());
                }
                let thresh = lambda * max;
                Some(
                    (0..numel)
                        .filter(|&i| flat(i).abs() >= thresh)
                        .map(|i| (i as u32, flat(i)))
                        .collect(),
                )
            }
            ContractiveKind::RankR { .. } | ContractiveKind::Identity => None,
        }
    }

    /// Compresses a matrix; returns the compressed matrix and the message
    /// that transports exactly it. Panics if the spec was built for a
    /// different shape.
    pub fn contract_matrix(&self, x: &SymMatrix, rng: &mut RngStream) -> (SymMatrix, Message) {
        assert_eq!(
            self.shape,
            Shape::Matrix { d: x.dim() },
            "spec shape does not match input matrix"
        );
        let d = x.dim();
        if let Some(entries) = self.select_entries(&|i| x.flat(i), rng) {
            let mut out = SymMatrix::zeros(d);
            for &(idx, val) in &entries {
                out.set_flat(idx as usize, val);
            }
            return (out, Message::Sparse(entries));
        }
        match self.kind {
            ContractiveKind::Identity => {
                let flat: Vec<f64> = (0..x.numel()).map(|i| x.flat(i)).collect();
                (x.clone(), Message::Dense(flat))
            }
            ContractiveKind::RankR { r } => {
                let svd = x
                    .matrix()
                    .clone()
                    .try_svd(true, true, f64::EPSILON, 50_000)
                    .expect("svd of finite matrix");
                let u = svd.u.as_ref().unwrap();
                let vt = svd.v_t.as_ref().unwrap();
                // Deterministic triplet order: singular value descending, then
                // original position ascending.
                let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
                order.sort_unstable_by(|&a, &b| {
                    svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b))
                });
                let mut left = Vec::with_capacity(r);
                let mut right = Vec::with_capacity(r);
                for &i in order.iter().take(r) {
                    let s = svd.singular_values[i];
                    left.push(u.column(i).iter().map(|&v| s * v).collect::<Vec<f64>>());
                    right.push(vt.row(i).iter().copied().collect::<Vec<f64>>());
                }
                let msg = Message::LowRank { left, right };
                let out = SymMatrix::from_matrix(
                    msg.to_matrix(d).expect("self-built low-rank message").matrix().clone(),
                );
                (out, msg)
            }
            _ => unreachable!("entrywise kinds handled above"),
        }
    }

    /// Vector twin of [`contract_matrix`](Self::contract_matrix), used for
    /// compressing iterates on the downlink.
    pub fn contract_vector(&self, x: &Vector, rng: &mut RngStream) -> (Vector, Message) {
        assert_eq!(
            self.shape,
            Shape::Vector { d: x.len() },
            "spec shape does not match input vector"
        );
        if let Some(entries) = self.select_entries(&|i| x[i], rng) {
            let mut out = Vector::zeros(x.len());
            for &(idx, val) in &entries {
                out[idx as usize] = val;
            }
            return (out, Message::Sparse(entries));
        }
        match self.kind {
            ContractiveKind::Identity => (x.clone(), Message::Dense(x.iter().copied().collect())),
            ContractiveKind::RankR { .. } => unreachable!("rank-r rejected for vector shapes"),
            _ => unreachable!("entrywise kinds handled above"),
        }
    }
}
