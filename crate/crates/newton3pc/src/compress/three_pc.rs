//! Three-point mechanisms `C_{H,Y}(X)`: stateful compression of a sequence of
//! matrices (or vectors) where `H` is the receiver's current estimate and `Y`
//! the previous input.
//!
//! Every mechanism factors as "build a message, then apply it to `H`", and the
//! sender computes its own new state by applying the message it just built.
//! Since the wire codec round-trips floats exactly, sender and receiver state
//! stay bitwise identical without any synchronization traffic.

use nalgebra::DMatrix;

use super::contractive::{ContractiveSpec, Shape};
use super::message::{DecodeError, Message};
use super::SpecError;
use crate::linalg::{SymMatrix, Vector};
use crate::simnet::RngStream;

#[derive(Debug, Clone)]
pub enum ThreePcKind {
    /// `H + C(X − H)`: always ship the compressed correction.
    Ef21 { inner: ContractiveSpec },
    /// Lazy full correction: ship `X − H` densely when the drift test fires,
    /// otherwise nothing.
    Lag { zeta: f64 },
    /// Lazy compressed correction: EF21 update gated by the drift test
    /// `‖X − H‖² > ζ·‖X − Y‖²`.
    Clag { inner: ContractiveSpec, zeta: f64 },
    /// Bernoulli-gated EF21: with probability `p` ship the compressed
    /// correction, otherwise skip the round entirely (the input needs not
    /// even be computed).
    Cbag { inner: ContractiveSpec, p: f64 },
    /// Top-k on the correction with `k` chosen adaptively from the progress
    /// ratio `‖Y − H‖²/‖X − H‖²`, capped at `d0` entries.
    AdaptiveTopK { d0: usize },
    /// EF21 conjugated by a fixed orthogonal basis: `H + Q·C(Qᵀ(X−H)Q)·Qᵀ`.
    Rotation { inner: ContractiveSpec, q: DMatrix<f64> },
    /// Ships the full correction every round; the dense baseline.
    Identity,
}

/// A three-point mechanism bound to a shape, carrying its contract constants
/// `(A, B)` such that `E‖C_{H,Y}(X) − X‖² ≤ (1−A)‖H−Y‖² + B‖X−Y‖²`.
#[derive(Debug, Clone)]
pub struct ThreePcSpec {
    kind: ThreePcKind,
    shape: Shape,
    a: f64,
    b: f64,
}

/// Whether the upcoming round needs the fresh input matrix at all. Only the
/// Bernoulli-gated mechanism ever answers `Skip`, and it decides before the
/// input exists, which is where its computation savings come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianPlan {
    Skip,
    Compute,
}

fn ef21_constants(alpha: f64, s: Option<f64>) -> Result<(f64, f64), SpecError> {
    debug_assert!(alpha > 0.0 && alpha <= 1.0);
    if alpha == 1.0 {
        if s.is_some() {
            return Err(SpecError::new("s has no effect when α = 1"));
        }
        return Ok((1.0, 0.0));
    }
    let hi = alpha / (1.0 - alpha);
    let s = s.unwrap_or(0.5 * hi);
    if !(s > 0.0 && s < hi) {
        return Err(SpecError::new(format!("s must lie in (0, {hi}), got {s}")));
    }
    let a = 1.0 - (1.0 - alpha) * (1.0 + s);
    let b = (1.0 - alpha) * (1.0 + 1.0 / s);
    Ok((a, b))
}

impl ThreePcSpec {
    fn contractive_alpha(inner: &ContractiveSpec) -> Result<f64, SpecError> {
        inner
            .alpha()
            .ok_or_else(|| SpecError::new("inner compressor must be contractive (scaled rand-k is not)"))
    }

    pub fn ef21(inner: ContractiveSpec) -> Result<Self, SpecError> {
        let alpha = Self::contractive_alpha(&inner)?;
        let (a, b) = ef21_constants(alpha, None)?;
        Ok(Self { shape: inner.shape(), kind: ThreePcKind::Ef21 { inner }, a, b })
    }

    pub fn lag(zeta: f64, shape: Shape) -> Result<Self, SpecError> {
        if !(zeta >= 0.0) {
            return Err(SpecError::new(format!("ζ must be nonnegative, got {zeta}")));
        }
        Ok(Self { kind: ThreePcKind::Lag { zeta }, shape, a: 1.0, b: zeta })
    }

    pub fn clag(inner: ContractiveSpec, zeta: f64, s: Option<f64>) -> Result<Self, SpecError> {
        if !(zeta >= 0.0) {
            return Err(SpecError::new(format!("ζ must be nonnegative, got {zeta}")));
        }
        let alpha = Self::contractive_alpha(&inner)?;
        let (a, b) = ef21_constants(alpha, s)?;
        Ok(Self {
            shape: inner.shape(),
            kind: ThreePcKind::Clag { inner, zeta },
            a,
            b: b.max(zeta),
        })
    }

    pub fn cbag(inner: ContractiveSpec, p: f64, s: Option<f64>) -> Result<Self, SpecError> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(SpecError::new(format!("p must lie in (0, 1], got {p}")));
        }
        let alpha = Self::contractive_alpha(&inner)?;
        // The effective contraction of "compress with probability p" is p·α.
        let (a, b) = ef21_constants(p * alpha, s)?;
        Ok(Self { shape: inner.shape(), kind: ThreePcKind::Cbag { inner, p }, a, b })
    }

    pub fn adaptive_top_k(d0: usize, shape: Shape) -> Result<Self, SpecError> {
        let numel = shape.numel();
        if d0 == 0 || d0 > numel {
            return Err(SpecError::new(format!("d0 must lie in [1, {numel}], got {d0}")));
        }
        let frac = d0 as f64 / numel as f64;
        let a = 0.5 * frac;
        let b = ((1.0 - frac) * (2.0 / frac - 1.0)).max(3.0);
        Ok(Self { kind: ThreePcKind::AdaptiveTopK { d0 }, shape, a, b })
    }

    pub fn rotation(inner: ContractiveSpec, q: DMatrix<f64>) -> Result<Self, SpecError> {
        let d = inner.shape().dim();
        if q.nrows() != d || q.ncols() != d {
            return Err(SpecError::new(format!(
                "rotation basis is {}x{}, compressor needs {d}x{d}",
                q.nrows(),
                q.ncols()
            )));
        }
        let gram_drift = (q.transpose() * &q - DMatrix::identity(d, d)).norm();
        if gram_drift > 1e-10 {
            return Err(SpecError::new(format!("rotation basis not orthogonal, ‖QᵀQ−I‖ = {gram_drift:.3e}")));
        }
        let alpha = Self::contractive_alpha(&inner)?;
        let b = if alpha == 1.0 { 0.0 } else { (1.0 - alpha) * (2.0 - alpha) / alpha };
        Ok(Self { shape: inner.shape(), kind: ThreePcKind::Rotation { inner, q }, a: 0.5 * alpha, b })
    }

    pub fn identity(shape: Shape) -> Result<Self, SpecError> {
        Ok(Self { kind: ThreePcKind::Identity, shape, a: 1.0, b: 0.0 })
    }

    pub fn kind(&self) -> &ThreePcKind {
        &self.kind
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// Contract constant `A ∈ (0, 1]`.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Contract constant `B ≥ 0`.
    pub fn b(&self) -> f64 {
        self.b
    }

    /// True when the mechanism reads the previous input `Y`. Callers that
    /// feed mechanisms with `needs_y() == false` may pass anything for `Y`
    /// and avoid caching it.
    pub fn needs_y(&self) -> bool {
        matches!(
            self.kind,
            ThreePcKind::Lag { .. } | ThreePcKind::Clag { .. } | ThreePcKind::AdaptiveTopK { .. }
        )
    }

    /// True when repeated application to the same `(H, Y, X)` can differ.
    pub fn is_randomized(&self) -> bool {
        match &self.kind {
            ThreePcKind::Cbag { inner, p } => *p < 1.0 || inner.is_randomized(),
            ThreePcKind::Ef21 { inner }
            | ThreePcKind::Clag { inner, .. }
            | ThreePcKind::Rotation { inner, .. } => inner.is_randomized(),
            _ => false,
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            ThreePcKind::Ef21 { inner } => format!("ef21[{}]", inner.label()),
            ThreePcKind::Lag { zeta } => format!("lag(ζ={zeta})"),
            ThreePcKind::Clag { inner, zeta } => format!("clag(ζ={zeta})[{}]", inner.label()),
            ThreePcKind::Cbag { inner, p } => format!("cbag(p={p})[{}]", inner.label()),
            ThreePcKind::AdaptiveTopK { d0 } => format!("adaptive-top-k(d0={d0})"),
            ThreePcKind::Rotation { inner, .. } => format!("rotation[{}]", inner.label()),
            ThreePcKind::Identity => "identity".to_string(),
        }
    }

    /// Decides whether this round's input must be produced at all. Draws the
    /// Bernoulli coin for the gated mechanism; deterministic otherwise.
    pub fn plan(&self, rng: &mut RngStream) -> HessianPlan {
        match &self.kind {
            ThreePcKind::Cbag { p, .. } => {
                if rng.bernoulli(*p) {
                    HessianPlan::Compute
                } else {
                    HessianPlan::Skip
                }
            }
            _ => HessianPlan::Compute,
        }
    }

    /// Full mechanism on matrices: coin, message, state update.
    pub fn three_pc_matrix(
        &self,
        h: &SymMatrix,
        y: &SymMatrix,
        x: &SymMatrix,
        rng: &mut RngStream,
    ) -> (SymMatrix, Message) {
        match self.plan(rng) {
            HessianPlan::Skip => (h.clone(), Message::Skip),
            HessianPlan::Compute => self.compress_matrix(h, y, x, rng),
        }
    }

    /// The post-coin path: build the message for input `x` and apply it.
    /// Callers that used [`plan`](Self::plan) themselves call this on
    /// `Compute` rounds only.
    pub fn compress_matrix(
        &self,
        h: &SymMatrix,
        y: &SymMatrix,
        x: &SymMatrix,
        rng: &mut RngStream,
    ) -> (SymMatrix, Message) {
        let d = self.shape.dim();
        assert_eq!(x.dim(), d, "input dimension mismatch");
        let diff = x.sub(h);
        let msg = match &self.kind {
            ThreePcKind::Ef21 { inner } | ThreePcKind::Cbag { inner, .. } => {
                inner.contract_matrix(&diff, rng).1
            }
            ThreePcKind::Identity => {
                // Ships the input itself so the receiver replica reproduces it
                // bitwise (adding a dense diff would reintroduce rounding).
                Message::Dense((0..x.numel()).map(|i| x.flat(i)).collect())
            }
            ThreePcKind::Lag { zeta } => {
                if drift_fires(&diff, &x.sub(y), *zeta) {
                    Message::Dense((0..diff.numel()).map(|i| diff.flat(i)).collect())
                } else {
                    Message::Skip
                }
            }
            ThreePcKind::Clag { inner, zeta } => {
                if drift_fires(&diff, &x.sub(y), *zeta) {
                    inner.contract_matrix(&diff, rng).1
                } else {
                    Message::Skip
                }
            }
            ThreePcKind::AdaptiveTopK { d0 } => {
                match adaptive_k(diff.frob_norm(), y.sub(h).frob_norm(), self.shape.numel(), *d0) {
                    None => Message::Skip,
                    Some(k) => {
                        let spec = ContractiveSpec::top_k(k, self.shape).expect("validated k");
                        let msg = spec.contract_matrix(&diff, rng).1;
                        if let Message::Sparse(entries) = &msg {
                            debug_assert!(entries.len() <= *d0);
                        }
                        msg
                    }
                }
            }
            ThreePcKind::Rotation { inner, q } => {
                let rotated = SymMatrix::from_matrix(q.transpose() * diff.matrix() * q);
                inner.contract_matrix(&rotated, rng).1
            }
        };
        let new_h = self.update_matrix(h, &msg).expect("self-built message");
        (new_h, msg)
    }

    /// Receiver-side state transition: the new estimate from the old one plus
    /// a decoded message. The sender uses the same function, which keeps both
    /// replicas bitwise equal.
    pub fn update_matrix(&self, h: &SymMatrix, msg: &Message) -> Result<SymMatrix, DecodeError> {
        if matches!(msg, Message::Skip) {
            return Ok(h.clone());
        }
        let d = self.shape.dim();
        let payload = msg.to_matrix(d)?;
        match &self.kind {
            ThreePcKind::Rotation { q, .. } => {
                let back = q * payload.matrix() * q.transpose();
                Ok(h.add(&SymMatrix::from_matrix(back)))
            }
            ThreePcKind::Identity => Ok(payload),
            _ => Ok(h.add(&payload)),
        }
    }

    /// Vector twin of [`three_pc_matrix`](Self::three_pc_matrix); used for
    /// compressed model broadcast.
    pub fn three_pc_vector(
        &self,
        h: &Vector,
        y: &Vector,
        x: &Vector,
        rng: &mut RngStream,
    ) -> (Vector, Message) {
        match self.plan(rng) {
            HessianPlan::Skip => (h.clone(), Message::Skip),
            HessianPlan::Compute => self.compress_vector(h, y, x, rng),
        }
    }

    pub fn compress_vector(
        &self,
        h: &Vector,
        y: &Vector,
        x: &Vector,
        rng: &mut RngStream,
    ) -> (Vector, Message) {
        let d = self.shape.dim();
        assert_eq!(x.len(), d, "input dimension mismatch");
        assert!(
            matches!(self.shape, Shape::Vector { .. }),
            "spec was built for matrices; construct it with a vector shape"
        );
        let diff = x - h;
        let msg = match &self.kind {
            ThreePcKind::Ef21 { inner } | ThreePcKind::Cbag { inner, .. } => {
                inner.contract_vector(&diff, rng).1
            }
            ThreePcKind::Identity => Message::Dense(x.iter().copied().collect()),
            ThreePcKind::Lag { zeta } => {
                if diff.norm_squared() > zeta * (x - y).norm_squared() {
                    Message::Dense(diff.iter().copied().collect())
                } else {
                    Message::Skip
                }
            }
            ThreePcKind::Clag { inner, zeta } => {
                if diff.norm_squared() > zeta * (x - y).norm_squared() {
                    inner.contract_vector(&diff, rng).1
                } else {
                    Message::Skip
                }
            }
            ThreePcKind::AdaptiveTopK { d0 } => {
                match adaptive_k(diff.norm(), (y - h).norm(), self.shape.numel(), *d0) {
                    None => Message::Skip,
                    Some(k) => {
                        let spec = ContractiveSpec::top_k(k, self.shape).expect("validated k");
                        spec.contract_vector(&diff, rng).1
                    }
                }
            }
            ThreePcKind::Rotation { inner, q } => {
                let rotated = q.transpose() * &diff;
                inner.contract_vector(&rotated, rng).1
            }
        };
        let new_h = self.update_vector(h, &msg).expect("self-built message");
        (new_h, msg)
    }

    pub fn update_vector(&self, h: &Vector, msg: &Message) -> Result<Vector, DecodeError> {
        if matches!(msg, Message::Skip) {
            return Ok(h.clone());
        }
        let payload = msg.to_vector(h.len())?;
        match &self.kind {
            ThreePcKind::Rotation { q, .. } => Ok(h + q * payload),
            ThreePcKind::Identity => Ok(payload),
            _ => Ok(h + payload),
        }
    }
}

fn drift_fires(diff_from_h: &SymMatrix, diff_from_y: &SymMatrix, zeta: f64) -> bool {
    diff_from_h.frob_norm().powi(2) > zeta * diff_from_y.frob_norm().powi(2)
}

/// Entry budget for the adaptive top-k rule: `min(⌈(‖Y−H‖²/‖X−H‖²)·numel⌉, d0)`,
/// `None` when nothing needs to be sent.
fn adaptive_k(xh_norm: f64, yh_norm: f64, numel: usize, d0: usize) -> Option<usize> {
    if xh_norm == 0.0 {
        return None; // X == H exactly; the current estimate is already right
    }
    let ratio = (yh_norm / xh_norm).powi(2);
    let k_f = (ratio * numel as f64).ceil();
    if k_f < 1.0 {
        return None;
    }
    Some(if k_f >= d0 as f64 { d0 } else { k_f as usize })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const D: usize = 3;
    const MSHAPE: Shape = Shape::Matrix { d: D };

    fn rng() -> RngStream {
        RngStream::new(3).split("three-pc-tests", 0)
    }

    fn random_matrix(rng: &mut RngStream) -> SymMatrix {
        SymMatrix::from_matrix(DMatrix::from_fn(D, D, |_, _| rng.standard_normal()))
    }

    fn top1() -> ContractiveSpec {
        ContractiveSpec::top_k(1, MSHAPE).unwrap()
    }

    #[test]
    fn ef21_ships_compressed_correction() {
        let spec = ThreePcSpec::ef21(top1()).unwrap();
        let h = SymMatrix::identity(D);
        let mut x = SymMatrix::identity(D);
        x.set(0, 0, 5.0);
        let (new_h, msg) = spec.three_pc_matrix(&h, &h, &x, &mut rng());
        // Correction is 4 at flat index 0; top-1 keeps exactly it.
        assert_eq!(msg, Message::Sparse(vec![(0, 4.0)]));
        assert_eq!(new_h.matrix(), x.matrix());
    }

    #[test]
    fn drift_test_is_strict_inequality() {
        // ‖X − H‖² = ζ·‖X − Y‖² exactly means no message.
        let spec = ThreePcSpec::clag(top1(), 1.0, None).unwrap();
        let h = SymMatrix::zeros(D);
        let mut x = SymMatrix::zeros(D);
        x.set(0, 0, 2.0); // ‖X‖² = 4 on both sides of the test
        let (new_h, msg) = spec.three_pc_matrix(&h, &h, &x, &mut rng());
        assert_eq!(msg, Message::Skip);
        assert_eq!(new_h.matrix(), h.matrix());

        // Any drift beyond the threshold fires.
        let spec = ThreePcSpec::clag(top1(), 0.5, None).unwrap();
        let (_, msg) = spec.three_pc_matrix(&h, &h, &x, &mut rng());
        assert!(matches!(msg, Message::Sparse(_)));
    }

    #[test]
    fn clag_zero_threshold_equals_ef21() {
        let ef = ThreePcSpec::ef21(top1()).unwrap();
        let cl = ThreePcSpec::clag(top1(), 0.0, None).unwrap();
        let mut r = rng();
        for _ in 0..50 {
            let (h, y, x) = (random_matrix(&mut r), random_matrix(&mut r), random_matrix(&mut r));
            let (he, me) = ef.three_pc_matrix(&h, &y, &x, &mut r);
            let (hc, mc) = cl.three_pc_matrix(&h, &y, &x, &mut r);
            assert_eq!(he.matrix(), hc.matrix());
            assert_eq!(me, mc);
        }
    }

    #[test]
    fn cbag_certain_send_equals_ef21() {
        let ef = ThreePcSpec::ef21(top1()).unwrap();
        let cb = ThreePcSpec::cbag(top1(), 1.0, None).unwrap();
        let mut r = rng();
        for _ in 0..50 {
            let (h, y, x) = (random_matrix(&mut r), random_matrix(&mut r), random_matrix(&mut r));
            let (he, me) = ef.three_pc_matrix(&h, &y, &x, &mut r);
            let (hc, mc) = cb.three_pc_matrix(&h, &y, &x, &mut r);
            assert_eq!(he.matrix(), hc.matrix());
            assert_eq!(me, mc);
        }
    }

    #[test]
    fn cbag_never_send_keeps_state_and_skips_input() {
        let cb = ThreePcSpec::cbag(top1(), 1e-300, None).unwrap();
        let mut r = rng();
        assert_eq!(cb.plan(&mut r), HessianPlan::Skip);
        let h = random_matrix(&mut r);
        let (new_h, msg) = cb.three_pc_matrix(&h, &h, &random_matrix(&mut r), &mut r);
        assert_eq!(msg, Message::Skip);
        assert_eq!(new_h.matrix(), h.matrix());
    }

    #[test]
    fn lag_equals_clag_with_identity_inner() {
        let lag = ThreePcSpec::lag(1.5, MSHAPE).unwrap();
        let clag = ThreePcSpec::clag(ContractiveSpec::identity(MSHAPE).unwrap(), 1.5, None).unwrap();
        let mut r = rng();
        for _ in 0..50 {
            let (h, y, x) = (random_matrix(&mut r), random_matrix(&mut r), random_matrix(&mut r));
            let (hl, ml) = lag.three_pc_matrix(&h, &y, &x, &mut r);
            let (hc, mc) = clag.three_pc_matrix(&h, &y, &x, &mut r);
            assert_eq!(hl.matrix(), hc.matrix());
            assert_eq!(ml, mc);
        }
        assert_eq!(lag.a(), 1.0);
        assert_eq!(lag.b(), 1.5);
    }

    #[test]
    fn rotation_identity_basis_equals_ef21() {
        let ef = ThreePcSpec::ef21(top1()).unwrap();
        let rot = ThreePcSpec::rotation(top1(), DMatrix::identity(D, D)).unwrap();
        let mut r = rng();
        for _ in 0..20 {
            let (h, y, x) = (random_matrix(&mut r), random_matrix(&mut r), random_matrix(&mut r));
            let (he, _) = ef.three_pc_matrix(&h, &y, &x, &mut r);
            let (hr, _) = rot.three_pc_matrix(&h, &y, &x, &mut r);
            assert_relative_eq!((he.sub(&hr)).frob_norm(), 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn receiver_reconstruction_matches_sender_state() {
        let mut r = rng();
        let q = {
            let g = DMatrix::from_fn(D, D, |_, _| r.standard_normal());
            let qr = g.qr();
            qr.q()
        };
        let specs = vec![
            ThreePcSpec::ef21(top1()).unwrap(),
            ThreePcSpec::clag(top1(), 1.0, None).unwrap(),
            ThreePcSpec::cbag(top1(), 0.5, None).unwrap(),
            ThreePcSpec::lag(0.5, MSHAPE).unwrap(),
            ThreePcSpec::adaptive_top_k(4, MSHAPE).unwrap(),
            ThreePcSpec::rotation(top1(), q).unwrap(),
            ThreePcSpec::identity(MSHAPE).unwrap(),
            ThreePcSpec::ef21(ContractiveSpec::rank_r(1, D).unwrap()).unwrap(),
        ];
        for spec in specs {
            let mut h_sender = SymMatrix::zeros(D);
            let mut h_receiver = SymMatrix::zeros(D);
            let mut y = SymMatrix::zeros(D);
            for _ in 0..10 {
                let x = random_matrix(&mut r);
                let (new_h, msg) = spec.three_pc_matrix(&h_sender, &y, &x, &mut r);
                // Receiver sees the message after a wire round trip.
                let wire = Message::decode(&msg.encode()).unwrap();
                h_receiver = spec.update_matrix(&h_receiver, &wire).unwrap();
                assert_eq!(
                    h_receiver.matrix(),
                    new_h.matrix(),
                    "replica divergence under {}",
                    spec.label()
                );
                h_sender = new_h;
                y = x;
            }
        }
    }

    #[test]
    fn adaptive_top_k_budget() {
        // No progress needed: Y == H means k = 0, nothing is sent.
        let spec = ThreePcSpec::adaptive_top_k(4, MSHAPE).unwrap();
        let h = SymMatrix::zeros(D);
        let mut x = SymMatrix::zeros(D);
        x.set(1, 1, 3.0);
        let (new_h, msg) = spec.three_pc_matrix(&h, &h, &x, &mut rng());
        assert_eq!(msg, Message::Skip);
        assert_eq!(new_h.matrix(), h.matrix());

        // X == H: estimate is exact, skip regardless of Y.
        let mut y = SymMatrix::zeros(D);
        y.set(0, 0, 9.0);
        let (_, msg) = spec.three_pc_matrix(&h, &y, &h, &mut rng());
        assert_eq!(msg, Message::Skip);

        // Large required k is capped at d0.
        let (_, msg) = spec.three_pc_matrix(&h, &y, &x, &mut rng());
        let Message::Sparse(entries) = msg else { panic!("expected sparse") };
        assert_eq!(entries.len(), 4);
    }

    #[test]
    fn identity_mechanism_reproduces_input() {
        let spec = ThreePcSpec::identity(MSHAPE).unwrap();
        let mut r = rng();
        let (h, x) = (random_matrix(&mut r), random_matrix(&mut r));
        let (new_h, msg) = spec.three_pc_matrix(&h, &h, &x, &mut r);
        assert_eq!(new_h.matrix(), x.matrix());
        assert_eq!(msg.byte_cost(), 1 + 8 * D * D);
    }

    #[test]
    fn contract_constants() {
        // α = 1/9 for top-1 on 3×3.
        let ef = ThreePcSpec::ef21(top1()).unwrap();
        let alpha = 1.0 / 9.0;
        assert_relative_eq!(ef.a(), alpha / 2.0, max_relative = 1e-12);
        assert_relative_eq!(ef.b(), (1.0 - alpha) * (2.0 - alpha) / alpha, max_relative = 1e-12);

        let cb = ThreePcSpec::cbag(top1(), 0.5, None).unwrap();
        let q = 0.5 * alpha;
        assert_relative_eq!(cb.a(), q / 2.0, max_relative = 1e-12);
        assert_relative_eq!(cb.b(), (1.0 - q) * (2.0 - q) / q, max_relative = 1e-12);

        // ζ dominates the B constant when large.
        let cl = ThreePcSpec::clag(top1(), 100.0, None).unwrap();
        assert_eq!(cl.b(), 100.0);

        let at = ThreePcSpec::adaptive_top_k(4, MSHAPE).unwrap();
        assert_relative_eq!(at.a(), 4.0 / 18.0, max_relative = 1e-12);
        assert_relative_eq!(at.b(), 3.0, max_relative = 1e-12); // (1−4/9)(18/4−1) ≈ 1.94 < 3

        let rot = ThreePcSpec::rotation(top1(), DMatrix::identity(D, D)).unwrap();
        assert_relative_eq!(rot.a(), alpha / 2.0, max_relative = 1e-12);

        let id = ThreePcSpec::identity(MSHAPE).unwrap();
        assert_eq!((id.a(), id.b()), (1.0, 0.0));
    }

    #[test]
    fn constructors_reject_bad_parameters() {
        assert!(ThreePcSpec::clag(top1(), -1.0, None).is_err());
        assert!(ThreePcSpec::clag(top1(), 1.0, Some(0.0)).is_err());
        assert!(ThreePcSpec::clag(top1(), 1.0, Some(1.0)).is_err()); // s ≥ α/(1−α) = 1/8
        assert!(ThreePcSpec::cbag(top1(), 0.0, None).is_err());
        assert!(ThreePcSpec::cbag(top1(), 1.5, None).is_err());
        assert!(ThreePcSpec::adaptive_top_k(0, MSHAPE).is_err());
        assert!(ThreePcSpec::adaptive_top_k(10, MSHAPE).is_err());
        let skewed = DMatrix::from_fn(D, D, |r, c| if r == c { 1.0 } else { 0.1 });
        assert!(ThreePcSpec::rotation(top1(), skewed).is_err());
        let scaled = ContractiveSpec::rand_k(1, true, MSHAPE).unwrap();
        assert!(ThreePcSpec::ef21(scaled).is_err());
    }

    #[test]
    fn vector_mechanisms_mirror_matrix_behavior() {
        let shape = Shape::Vector { d: 5 };
        let spec = ThreePcSpec::ef21(ContractiveSpec::top_k(2, shape).unwrap()).unwrap();
        let mut r = rng();
        let h = Vector::zeros(5);
        let x = Vector::from_vec(vec![5.0, -1.0, 0.0, 3.0, 0.5]);
        let (new_h, msg) = spec.three_pc_vector(&h, &h, &x, &mut r);
        assert_eq!(msg, Message::Sparse(vec![(0, 5.0), (3, 3.0)]));
        assert_eq!(new_h, Vector::from_vec(vec![5.0, 0.0, 0.0, 3.0, 0.0]));
        let wire = Message::decode(&msg.encode()).unwrap();
        assert_eq!(spec.update_vector(&h, &wire).unwrap(), new_h);
    }
}
