//! Problem oracles: regularized logistic regression and softmax loss,
//! evaluated per device and averaged globally.
//!
//! Each of `n` devices holds a dense shard `(a, b)` of the data. The global
//! objective is the arithmetic mean of the local ones, always reduced in
//! ascending device order so runs are bitwise reproducible.

mod synthetic;

pub use synthetic::gen_synthetic;

use crate::dataio::DeviceData;
use crate::linalg::{symmetrize, SymMatrix, Vector};

/// Which loss the devices evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemKind {
    /// `f_i(x) = (1/m) Σ_j log(1 + exp(−b_j·a_jᵀx)) + (λ/2)‖x‖²`, labels ±1.
    LogReg,
    /// `f_i(x) = σ·log Σ_j exp((a_jᵀx − b_j)/σ) + (λ/2)‖x‖²`.
    Softmax { sigma: f64 },
}

/// A distributed optimization problem: one data shard per device, a shared
/// loss kind, and an ℓ2 regularizer weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    kind: ProblemKind,
    devices: Vec<DeviceData>,
    lambda: f64,
    dim: usize,
}

fn check_shards(devices: &[DeviceData], lambda: f64) -> usize {
    assert!(!devices.is_empty(), "need at least one device shard");
    assert!(lambda.is_finite() && lambda >= 0.0, "regularizer weight must be finite and nonnegative");
    let dim = devices[0].dim();
    for (i, d) in devices.iter().enumerate() {
        assert_eq!(d.dim(), dim, "device {i} shard has mismatched feature dimension");
        assert!(d.points() >= 1, "device {i} shard is empty");
        assert_eq!(d.b.len(), d.points(), "device {i} labels do not match its rows");
    }
    dim
}

/// log(1 + e^t) without overflow for large |t|.
fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// The logistic function 1/(1 + e^{−t}), stable at both tails.
fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl Problem {
    /// Logistic-regression problem. Labels are remapped to ±1 (values ≤ 0
    /// become −1) since some LibSVM binary sets use {0, 1}.
    pub fn logreg(mut devices: Vec<DeviceData>, lambda: f64) -> Self {
        let dim = check_shards(&devices, lambda);
        for d in &mut devices {
            for b in d.b.iter_mut() {
                *b = if *b > 0.0 { 1.0 } else { -1.0 };
            }
        }
        Self { kind: ProblemKind::LogReg, devices, lambda, dim }
    }

    /// Softmax (smoothed max) problem with smoothing parameter `sigma`.
    pub fn softmax(devices: Vec<DeviceData>, lambda: f64, sigma: f64) -> Self {
        assert!(sigma.is_finite() && sigma > 0.0, "softmax smoothing must be positive");
        let dim = check_shards(&devices, lambda);
        Self { kind: ProblemKind::Softmax { sigma }, devices, lambda, dim }
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn n_devices(&self) -> usize {
        self.devices.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn device(&self, i: usize) -> &DeviceData {
        &self.devices[i]
    }

    pub fn devices(&self) -> &[DeviceData] {
        &self.devices
    }

    /// Local objective value at `x` for device `i`.
    ///
    /// # Panics
    /// If `i` is out of range or `x` has the wrong length.
    pub fn local_value(&self, i: usize, x: &Vector) -> f64 {
        let d = self.shard(i, x);
        let reg = 0.5 * self.lambda * x.norm_squared();
        match self.kind {
            ProblemKind::LogReg => {
                let t = &d.a * x;
                let m = d.points() as f64;
                let loss: f64 = t.iter().zip(d.b.iter()).map(|(&t, &b)| log1p_exp(-b * t)).sum();
                loss / m + reg
            }
            ProblemKind::Softmax { sigma } => {
                let t = (&d.a * x - &d.b) / sigma;
                let max = t.max();
                let sum: f64 = t.iter().map(|&v| (v - max).exp()).sum();
                sigma * (max + sum.ln()) + reg
            }
        }
    }

    /// Local gradient at `x` for device `i`.
    pub fn local_grad(&self, i: usize, x: &Vector) -> Vector {
        let d = self.shard(i, x);
        match self.kind {
            ProblemKind::LogReg => {
                let t = &d.a * x;
                let m = d.points() as f64;
                let coef =
                    Vector::from_iterator(d.points(), t.iter().zip(d.b.iter()).map(|(&t, &b)| -logistic(-b * t) * b / m));
                d.a.transpose() * coef + self.lambda * x
            }
            ProblemKind::Softmax { sigma } => {
                let w = softmax_weights(d, x, sigma);
                d.a.transpose() * w + self.lambda * x
            }
        }
    }

    /// Local Hessian at `x` for device `i`. The result is exactly symmetric
    /// and, for λ > 0, positive definite.
    pub fn local_hess(&self, i: usize, x: &Vector) -> SymMatrix {
        let d = self.shard(i, x);
        let mut h = match self.kind {
            ProblemKind::LogReg => {
                let t = &d.a * x;
                let m = d.points() as f64;
                // Rows scaled by sqrt(σ(1−σ)/m) so BᵀB is bitwise symmetric.
                let mut b_mat = d.a.clone();
                for (j, mut row) in b_mat.row_iter_mut().enumerate() {
                    let s = logistic(d.b[j] * t[j]);
                    row *= (s * (1.0 - s) / m).sqrt();
                }
                b_mat.transpose() * b_mat
            }
            ProblemKind::Softmax { sigma } => {
                let w = softmax_weights(d, x, sigma);
                let ghat = d.a.transpose() * &w;
                let mut b_mat = d.a.clone();
                for (j, mut row) in b_mat.row_iter_mut().enumerate() {
                    row *= w[j].sqrt();
                }
                (b_mat.transpose() * b_mat - &ghat * ghat.transpose()) / sigma
            }
        };
        for p in 0..self.dim {
            h[(p, p)] += self.lambda;
        }
        symmetrize(&SymMatrix::from_matrix(h))
    }

    /// Mean of the local values, ascending device order.
    pub fn global_value(&self, x: &Vector) -> f64 {
        let sum: f64 = (0..self.n_devices()).map(|i| self.local_value(i, x)).sum();
        sum / self.n_devices() as f64
    }

    /// Mean of the local gradients, ascending device order.
    pub fn global_grad(&self, x: &Vector) -> Vector {
        let mut sum = Vector::zeros(self.dim);
        for i in 0..self.n_devices() {
            sum += self.local_grad(i, x);
        }
        sum / self.n_devices() as f64
    }

    /// Mean of the local Hessians, ascending device order.
    pub fn global_hess(&self, x: &Vector) -> SymMatrix {
        let mut sum = self.local_hess(0, x);
        for i in 1..self.n_devices() {
            sum = sum.add(&self.local_hess(i, x));
        }
        sum.scale(1.0 / self.n_devices() as f64)
    }

    /// Recentres every softmax shard by its own unregularized gradient at 0,
    /// after which the global gradient at 0 vanishes (so 0 is the optimum of
    /// the regularized problem). Idempotent up to floating-point residue.
    ///
    /// # Panics
    /// If the problem is not a softmax problem.
    pub fn shift_softmax_data(&mut self) {
        let ProblemKind::Softmax { sigma } = self.kind else {
            panic!("data recentring is defined for the softmax problem only");
        };
        let zero = Vector::zeros(self.dim);
        for d in &mut self.devices {
            let w = softmax_weights(d, &zero, sigma);
            let shift = d.a.transpose() * w;
            for mut row in d.a.row_iter_mut() {
                for (c, v) in row.iter_mut().enumerate() {
                    *v -= shift[c];
                }
            }
        }
    }

    fn shard(&self, i: usize, x: &Vector) -> &DeviceData {
        assert!(i < self.devices.len(), "device index {i} out of range (n = {})", self.devices.len());
        assert_eq!(x.len(), self.dim, "query point has wrong dimension");
        &self.devices[i]
    }
}

/// Softmax weights w_j ∝ exp((a_jᵀx − b_j)/σ), computed with max-subtraction.
fn softmax_weights(d: &DeviceData, x: &Vector, sigma: f64) -> Vector {
    let t = (&d.a * x - &d.b) / sigma;
    let max = t.max();
    let mut w = Vector::from_iterator(d.points(), t.iter().map(|&v| (v - max).exp()));
    let sum: f64 = w.iter().sum();
    w /= sum;
    w
}
