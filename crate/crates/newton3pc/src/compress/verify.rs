//! Statistical and exact checks of the advertised compressor contracts.
//!
//! Deterministic compressors must satisfy their inequality on every instance,
//! so those are checked exactly (modulo floating-point slack). Randomized ones
//! are checked in expectation: the empirical mean over resamples of the same
//! instance must not exceed the bound by more than five standard errors.

use nalgebra::DMatrix;

use super::contractive::{ContractiveSpec, Shape};
use super::three_pc::ThreePcSpec;
use crate::linalg::{SymMatrix, Vector};
use crate::simnet::RngStream;

/// Which property a contractive check targeted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckedProperty {
    /// `E‖C(X) − X‖² ≤ (1 − α)‖X‖²`.
    Contraction,
    /// `E[C(X)] = X` (the scaled random sparsifier).
    Unbiasedness,
}

#[derive(Debug, Clone)]
pub struct ContractReport {
    pub label: String,
    pub property: CheckedProperty,
    pub randomized: bool,
    pub trials: usize,
    /// Largest observed violation (negative means margin everywhere).
    pub worst_excess: f64,
    pub pass: bool,
}

impl std::fmt::Display for ContractReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {} {} [{} trials, worst excess {:+.3e}]",
            if self.pass { "PASS" } else { "FAIL" },
            match self.property {
                CheckedProperty::Contraction => "contraction",
                CheckedProperty::Unbiasedness => "unbiasedness",
            },
            self.label,
            self.trials,
            self.worst_excess,
        )
    }
}

#[derive(Debug, Clone)]
pub struct ThreePcReport {
    pub label: String,
    pub a: f64,
    pub b: f64,
    pub randomized: bool,
    pub trials: usize,
    pub worst_excess: f64,
    pub pass: bool,
}

impl std::fmt::Display for ThreePcReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} three-point bound {} (A={:.4}, B={:.4}) [{} trials, worst excess {:+.3e}]",
            if self.pass { "PASS" } else { "FAIL" },
            self.label,
            self.a,
            self.b,
            self.trials,
            self.worst_excess,
        )
    }
}

fn random_instance(shape: Shape, rng: &mut RngStream) -> Instance {
    match shape {
        Shape::Matrix { d } => {
            Instance::Matrix(SymMatrix::from_matrix(DMatrix::from_fn(d, d, |_, _| rng.standard_normal())))
        }
        Shape::Vector { d } => Instance::Vector(Vector::from_fn(d, |_, _| rng.standard_normal())),
    }
}

enum Instance {
    Matrix(SymMatrix),
    Vector(Vector),
}

impl Instance {
    fn norm_squared(&self) -> f64 {
        match self {
            Instance::Matrix(m) => m.frob_norm().powi(2),
            Instance::Vector(v) => v.norm_squared(),
        }
    }

    fn numel(&self) -> usize {
        match self {
            Instance::Matrix(m) => m.numel(),
            Instance::Vector(v) => v.len(),
        }
    }

    fn flat(&self, i: usize) -> f64 {
        match self {
            Instance::Matrix(m) => m.flat(i),
            Instance::Vector(v) => v[i],
        }
    }

    fn compress_error_sq(&self, spec: &ContractiveSpec, rng: &mut RngStream) -> f64 {
        match self {
            Instance::Matrix(m) => spec.contract_matrix(m, rng).0.sub(m).frob_norm().powi(2),
            Instance::Vector(v) => (spec.contract_vector(v, rng).0 - v).norm_squared(),
        }
    }

    fn compressed_flat(&self, spec: &ContractiveSpec, rng: &mut RngStream) -> Vec<f64> {
        match self {
            Instance::Matrix(m) => {
                let c = spec.contract_matrix(m, rng).0;
                (0..c.numel()).map(|i| c.flat(i)).collect()
            }
            Instance::Vector(v) => spec.contract_vector(v, rng).0.iter().copied().collect(),
        }
    }
}

/// Checks the property a contractive spec advertises. For deterministic kinds
/// every one of `trials` random instances must satisfy the bound exactly; for
/// randomized kinds the bound is checked in expectation over `trials`
/// resamples on each of ten fixed instances.
pub fn verify_contractive(spec: &ContractiveSpec, trials: usize, rng: &mut RngStream) -> ContractReport {
    assert!(trials >= 2, "need at least two trials");
    let randomized = spec.is_randomized();
    let mut worst = f64::NEG_INFINITY;

    let (property, pass) = match spec.alpha() {
        Some(alpha) if !randomized => {
            let allowed = spec.per_instance_bound().unwrap_or(1.0 - alpha);
            for _ in 0..trials {
                let x = random_instance(spec.shape(), rng);
                let ratio = x.compress_error_sq(spec, rng) / x.norm_squared();
                worst = worst.max(ratio - allowed);
            }
            (CheckedProperty::Contraction, worst <= 1e-12)
        }
        Some(alpha) => {
            // Contraction in expectation, five-sigma band on the mean.
            let mut ok = true;
            for _ in 0..10 {
                let x = random_instance(spec.shape(), rng);
                let xn = x.norm_squared();
                let (mut sum, mut sumsq) = (0.0, 0.0);
                for _ in 0..trials {
                    let r = x.compress_error_sq(spec, rng) / xn;
                    sum += r;
                    sumsq += r * r;
                }
                let mean = sum / trials as f64;
                let var = (sumsq / trials as f64 - mean * mean).max(0.0);
                let band = 5.0 * (var / trials as f64).sqrt();
                let excess = mean - (1.0 - alpha) - band;
                worst = worst.max(excess);
                ok &= excess <= 1e-12;
            }
            (CheckedProperty::Contraction, ok)
        }
        None => {
            // Scaled rand-k: check E[C(X)] = X entrywise. Under the claimed
            // distribution each output entry is (numel/k)·x_e with probability
            // k/numel and 0 otherwise, so the variance under the hypothesis is
            // known exactly; an estimated variance would be unreliable at low
            // trial counts, where an entry is hit only a handful of times. The
            // band is a Bernstein tail at the five-sigma failure probability;
            // its 1/trials term keeps the test sound for small samples.
            let super::contractive::ContractiveKind::RandK { k, scaled: true } = *spec.kind() else {
                unreachable!("scaled rand-k is the only compressor without a contraction constant");
            };
            let mut ok = true;
            for _ in 0..10 {
                let x = random_instance(spec.shape(), rng);
                let numel = x.numel();
                let q = k as f64 / numel as f64;
                let mut sum = vec![0.0; numel];
                for _ in 0..trials {
                    let c = x.compressed_flat(spec, rng);
                    for (e, v) in c.into_iter().enumerate() {
                        sum[e] += v;
                    }
                }
                for e in 0..numel {
                    let mean = sum[e] / trials as f64;
                    let sigma0 = x.flat(e).abs() * (1.0 / q - 1.0).sqrt();
                    let range = x.flat(e).abs() / q;
                    let band = 5.5 * sigma0 / (trials as f64).sqrt() + 10.0 * range / trials as f64;
                    let excess = (mean - x.flat(e)).abs() - band;
                    worst = worst.max(excess);
                    ok &= excess <= 1e-9;
                }
            }
            (CheckedProperty::Unbiasedness, ok)
        }
    };

    ContractReport { label: spec.label(), property, randomized, trials, worst_excess: worst, pass }
}

/// Checks the three-point inequality
/// `E‖C_{H,Y}(X) − X‖² ≤ (1−A)‖H−Y‖² + B‖X−Y‖²` on random triples.
pub fn verify_3pc(spec: &ThreePcSpec, trials: usize, rng: &mut RngStream) -> ThreePcReport {
    assert!(trials >= 2, "need at least two trials");
    let randomized = spec.is_randomized();
    let mut worst = f64::NEG_INFINITY;
    let mut pass = true;

    let lhs_of = |h: &Instance, y: &Instance, x: &Instance, rng: &mut RngStream| -> f64 {
        match (h, y, x) {
            (Instance::Matrix(h), Instance::Matrix(y), Instance::Matrix(x)) => {
                spec.three_pc_matrix(h, y, x, rng).0.sub(x).frob_norm().powi(2)
            }
            (Instance::Vector(h), Instance::Vector(y), Instance::Vector(x)) => {
                (spec.three_pc_vector(h, y, x, rng).0 - x).norm_squared()
            }
            _ => unreachable!("instances share the spec shape"),
        }
    };
    let rhs_of = |h: &Instance, y: &Instance, x: &Instance| -> f64 {
        let hy = match (h, y) {
            (Instance::Matrix(h), Instance::Matrix(y)) => h.sub(y).frob_norm().powi(2),
            (Instance::Vector(h), Instance::Vector(y)) => (h - y).norm_squared(),
            _ => unreachable!(),
        };
        let xy = match (x, y) {
            (Instance::Matrix(x), Instance::Matrix(y)) => x.sub(y).frob_norm().powi(2),
            (Instance::Vector(x), Instance::Vector(y)) => (x - y).norm_squared(),
            _ => unreachable!(),
        };
        (1.0 - spec.a()) * hy + spec.b() * xy
    };

    if !randomized {
        for _ in 0..trials {
            let h = random_instance(spec.shape(), rng);
            let y = random_instance(spec.shape(), rng);
            let x = random_instance(spec.shape(), rng);
            let lhs = lhs_of(&h, &y, &x, rng);
            let rhs = rhs_of(&h, &y, &x);
            let excess = lhs - rhs;
            worst = worst.max(excess);
            pass &= excess <= 1e-9 * (1.0 + rhs);
        }
    } else {
        for _ in 0..20 {
            let h = random_instance(spec.shape(), rng);
            let y = random_instance(spec.shape(), rng);
            let x = random_instance(spec.shape(), rng);
            let rhs = rhs_of(&h, &y, &x);
            let (mut sum, mut sumsq) = (0.0, 0.0);
            for _ in 0..trials {
                let lhs = lhs_of(&h, &y, &x, rng);
                sum += lhs;
                sumsq += lhs * lhs;
            }
            let mean = sum / trials as f64;
            let var = (sumsq / trials as f64 - mean * mean).max(0.0);
            let band = 5.0 * (var / trials as f64).sqrt();
            let excess = mean - rhs - band;
            worst = worst.max(excess);
            pass &= excess <= 1e-9 * (1.0 + rhs);
        }
    }

    ThreePcReport {
        label: spec.label(),
        a: spec.a(),
        b: spec.b(),
        randomized,
        trials,
        worst_excess: worst,
        pass,
    }
}

/// A deterministic `d×d` orthogonal basis drawn from the stream (QR of a
/// Gaussian matrix).
pub fn random_orthogonal(d: usize, rng: &mut RngStream) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.standard_normal());
    g.qr().q()
}

/// The fixed battery of contraction checks run by the CLI and acceptance
/// suite at side length `d`.
pub fn standard_contractive_suite(d: usize, trials: usize, rng: &mut RngStream) -> Vec<ContractReport> {
    let shape = Shape::Matrix { d };
    let specs = vec![
        ContractiveSpec::top_k(1, shape).unwrap(),
        ContractiveSpec::top_k(d, shape).unwrap(),
        ContractiveSpec::top_k(d * d, shape).unwrap(),
        ContractiveSpec::rank_r(1, d).unwrap(),
        ContractiveSpec::rank_r(2.min(d), d).unwrap(),
        ContractiveSpec::rand_k(1, false, shape).unwrap(),
        ContractiveSpec::rand_k(d, false, shape).unwrap(),
        ContractiveSpec::rand_k(d, true, shape).unwrap(),
        ContractiveSpec::adaptive_threshold(0.25, shape).unwrap(),
        ContractiveSpec::adaptive_threshold(0.5, shape).unwrap(),
        ContractiveSpec::adaptive_threshold(1.0, shape).unwrap(),
        ContractiveSpec::identity(shape).unwrap(),
    ];
    specs.iter().map(|s| verify_contractive(s, trials, rng)).collect()
}

/// The fixed battery of three-point bound checks at side length `d`.
pub fn standard_three_pc_suite(d: usize, trials: usize, rng: &mut RngStream) -> Vec<ThreePcReport> {
    let shape = Shape::Matrix { d };
    let topd = || ContractiveSpec::top_k(d, shape).unwrap();
    let q = random_orthogonal(d, &mut rng.split("rotation-basis", d as u64));
    let specs = vec![
        ThreePcSpec::ef21(topd()).unwrap(),
        ThreePcSpec::ef21(ContractiveSpec::rank_r(1, d).unwrap()).unwrap(),
        ThreePcSpec::lag(1.0, shape).unwrap(),
        ThreePcSpec::clag(topd(), 0.0, None).unwrap(),
        ThreePcSpec::clag(topd(), 1.0, None).unwrap(),
        ThreePcSpec::clag(topd(), 2.0, None).unwrap(),
        ThreePcSpec::cbag(topd(), 0.25, None).unwrap(),
        ThreePcSpec::cbag(topd(), 0.75, None).unwrap(),
        ThreePcSpec::cbag(topd(), 1.0, None).unwrap(),
        ThreePcSpec::adaptive_top_k(2 * d, shape).unwrap(),
        ThreePcSpec::rotation(topd(), q).unwrap(),
        ThreePcSpec::identity(shape).unwrap(),
    ];
    specs.iter().map(|s| verify_3pc(s, trials, rng)).collect()
}
