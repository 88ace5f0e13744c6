//! Dense symmetric-matrix kernels shared by every solver: norms, eigenvalue
//! clipping, SPD solves, and the cubically regularized Newton step.
//!
//! Everything here is dense and deterministic. Problems in scope have a few
//! hundred coordinates at most, so `O(d^3)` factorizations per iteration are
//! the right trade against the bookkeeping cost of sparse or iterative
//! alternatives.

use nalgebra::{DMatrix, DVector};

pub type Vector = DVector<f64>;

/// Eigenvalue tolerance: projections guarantee `λ_min ≥ μ − TOL_EIG`.
pub const TOL_EIG: f64 = 1e-10;
/// Relative residual target for linear solves.
pub const TOL_LIN: f64 = 1e-10;
/// Stationarity target for the cubic step, relative to `max(1, ‖g‖)`.
pub const TOL_CUBIC: f64 = 1e-8;
/// Iteration cap for the cubic step's scalar root finder.
pub const MAX_ROOT_ITER: usize = 200;

#[derive(Debug, thiserror::Error)]
pub enum LinalgError {
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: {0}")]
    Dim(String),
    #[error("eigendecomposition did not converge")]
    Eigen,
    #[error("matrix is not positive definite (Cholesky failed)")]
    NotPositiveDefinite,
    #[error("cubic step root finder stalled, stationarity residual {residual:.3e}")]
    CubicRootFind { residual: f64 },
    #[error("cubic regularization weight must be positive, got {0}")]
    BadCubicWeight(f64),
}

type Result<T> = std::result::Result<T, LinalgError>;

/// Dense square matrix with a "known symmetric by construction" flag.
///
/// The flag is not re-derived from the entries; it is set by operations that
/// produce exact symmetry (symmetrization, projection, sums of symmetric
/// terms) and cleared by anything that might break it. Consumers that require
/// symmetry symmetrize first when the flag is unset.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: DMatrix<f64>,
    symmetric: bool,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be at least 1");
        Self { data: DMatrix::zeros(dim, dim), symmetric: true }
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be at least 1");
        Self { data: DMatrix::identity(dim, dim), symmetric: true }
    }

    /// Wraps a square matrix. The symmetry flag starts unset.
    pub fn from_matrix(data: DMatrix<f64>) -> Self {
        assert_eq!(data.nrows(), data.ncols(), "matrix must be square");
        assert!(data.nrows() >= 1, "matrix dimension must be at least 1");
        Self { data, symmetric: false }
    }

    /// Wraps a matrix the caller guarantees to be exactly symmetric.
    pub fn from_symmetric(data: DMatrix<f64>) -> Self {
        let mut m = Self::from_matrix(data);
        debug_assert!(m.is_symmetric_exact());
        m.symmetric = true;
        m
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Total entry count `dim²`; flat indices below refer to this range.
    pub fn numel(&self) -> usize {
        self.dim() * self.dim()
    }

    pub fn is_flagged_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn is_symmetric_exact(&self) -> bool {
        let d = self.dim();
        (0..d).all(|r| (r + 1..d).all(|c| self.data[(r, c)] == self.data[(c, r)]))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[(r, c)]
    }

    /// Reads by flat row-major index (`idx = r·dim + c`), the ordering used by
    /// the wire format and the entrywise compressors.
    pub fn flat(&self, idx: usize) -> f64 {
        let d = self.dim();
        self.data[(idx / d, idx % d)]
    }

    pub fn set_flat(&mut self, idx: usize, v: f64) {
        let d = self.dim();
        self.data[(idx / d, idx % d)] = v;
        self.symmetric = false;
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[(r, c)] = v;
        self.symmetric = false;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn mul_vec(&self, x: &Vector) -> Vector {
        &self.data * x
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim(), other.dim());
        SymMatrix { data: &self.data + &other.data, symmetric: self.symmetric && other.symmetric }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim(), other.dim());
        SymMatrix { data: &self.data - &other.data, symmetric: self.symmetric && other.symmetric }
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix { data: &self.data * s, symmetric: self.symmetric }
    }

    /// Adds `s·I` in place; preserves the symmetry flag.
    pub fn add_diag(&mut self, s: f64) {
        for i in 0..self.dim() {
            self.data[(i, i)] += s;
        }
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.norm()
    }

    /// Largest-magnitude entry.
    pub fn inf_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest singular value. Uses the symmetric eigendecomposition when the
    /// flag allows, SVD otherwise.
    pub fn spectral_norm(&self) -> f64 {
        if self.symmetric {
            match self.data.clone().try_symmetric_eigen(f64::EPSILON, 10_000) {
                Some(e) => e.eigenvalues.iter().fold(0.0, |m, v| m.max(v.abs())),
                None => self.data.clone().singular_values().max(),
            }
        } else {
            self.data.clone().singular_values().max()
        }
    }
}

/// `(A + Aᵀ)/2`, exact by pairwise averaging; idempotent.
pub fn symmetrize(a: &SymMatrix) -> SymMatrix {
    let d = a.dim();
    let mut out = a.data.clone();
    for r in 0..d {
        for c in r + 1..d {
            let v = 0.5 * (a.data[(r, c)] + a.data[(c, r)]);
            out[(r, c)] = v;
            out[(c, r)] = v;
        }
    }
    SymMatrix { data: out, symmetric: true }
}

/// Projects onto `{M = Mᵀ : M ⪰ μI}` by clipping eigenvalues at `μ`.
///
/// Asymmetric input is symmetrized first, so the result is well defined for
/// any square matrix. The returned matrix is exactly symmetric and its
/// smallest eigenvalue is at least `μ − TOL_EIG`.
pub fn project_psd_mu(a: &SymMatrix, mu: f64) -> Result<SymMatrix> {
    if !a.is_finite() {
        return Err(LinalgError::NonFinite("projection input"));
    }
    let sym = if a.symmetric { a.clone() } else { symmetrize(a) };
    let eig = sym
        .data
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or(LinalgError::Eigen)?;
    if eig.eigenvalues.iter().all(|&l| l >= mu) {
        // Already feasible; return the symmetrized input untouched so that the
        // projection is exactly idempotent and bit-stable on feasible inputs.
        return Ok(sym);
    }
    let clipped = Vector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| l.max(mu)));
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&clipped);
    let recomposed = scaled * eig.eigenvectors.transpose();
    Ok(symmetrize(&SymMatrix::from_matrix(recomposed)))
}

/// Solves `A h = b` for symmetric positive definite `A` via Cholesky, with up
/// to two iterative-refinement sweeps. Input that is not flagged symmetric is
/// symmetrized first; factoring one triangle of an asymmetric matrix would
/// make the refinement chase a different system than the residual measures.
/// The relative residual is checked against [`TOL_LIN`] in debug builds.
pub fn solve_linear(a: &SymMatrix, b: &Vector) -> Result<Vector> {
    if !a.is_finite() {
        return Err(LinalgError::NonFinite("linear system matrix"));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite("linear system rhs"));
    }
    if a.dim() != b.len() {
        return Err(LinalgError::Dim(format!("matrix is {0}x{0}, rhs has {1}", a.dim(), b.len())));
    }
    let symmetrized;
    let a = if a.symmetric {
        a
    } else {
        symmetrized = symmetrize(a);
        &symmetrized
    };
    let chol = nalgebra::Cholesky::new(a.data.clone()).ok_or(LinalgError::NotPositiveDefinite)?;
    let mut x = chol.solve(b);
    let bnorm = b.norm();
    for _ in 0..2 {
        let r = b - a.mul_vec(&x);
        if r.norm() <= TOL_LIN * bnorm {
            break;
        }
        x += chol.solve(&r);
    }
    debug_assert!(
        (b - a.mul_vec(&x)).norm() <= TOL_LIN * bnorm.max(f64::MIN_POSITIVE),
        "linear solve residual {} above tolerance (rhs norm {}, matrix inf norm {}, solution norm {})",
        (b - a.mul_vec(&x)).norm(),
        bnorm,
        a.inf_norm(),
        x.norm()
    );
    Ok(x)
}

/// Global minimizer of the cubically regularized model
/// `T(h) = ⟨g, h⟩ + ½⟨Bh, h⟩ + (M/6)‖h‖³` with `M > 0`.
///
/// Stationary points satisfy `h = −(B + (M r / 2) I)⁻¹ g` with `r = ‖h‖`, so
/// the problem reduces to a one-dimensional root find on the secular function
/// `σ(r) = ‖h(r)‖ − r`, monotone on the region where the shifted matrix is
/// positive definite. Works for indefinite `B` (including the hard case where
/// `g` has no component on the bottom eigenspace); the solvers only call it
/// with `B ⪰ μI`.
pub fn solve_cubic_step(g: &Vector, b: &SymMatrix, m_cubic: f64) -> Result<Vector> {
    if !(m_cubic > 0.0) {
        return Err(LinalgError::BadCubicWeight(m_cubic));
    }
    if !b.is_finite() {
        return Err(LinalgError::NonFinite("cubic model matrix"));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite("cubic model gradient"));
    }
    if b.dim() != g.len() {
        return Err(LinalgError::Dim(format!("matrix is {0}x{0}, gradient has {1}", b.dim(), g.len())));
    }

    let sym = if b.symmetric { b.clone() } else { symmetrize(b) };
    let eig = sym
        .data
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or(LinalgError::Eigen)?;
    let lam = &eig.eigenvalues;
    let q = &eig.eigenvectors;
    let ghat = q.transpose() * g;
    let d = g.len();

    let lam_min = lam.iter().cloned().fold(f64::INFINITY, f64::min);
    let gnorm = g.norm();
    let tol = TOL_CUBIC * gnorm.max(1.0);

    if gnorm == 0.0 && lam_min >= 0.0 {
        return Ok(Vector::zeros(d));
    }

    // Model norm squared at shift r: ψ(r) = Σ ĝ_j² / (λ_j + M r / 2)².
    let psi = |r: f64| -> f64 {
        (0..d).map(|j| (ghat[j] / (lam[j] + 0.5 * m_cubic * r)).powi(2)).sum()
    };
    // ‖∇T(h(r))‖ = (M/2)·|‖h(r)‖ − r|·‖h(r)‖, exact for the shifted solve.
    let stationarity = |r: f64| -> f64 {
        let hn = psi(r).sqrt();
        0.5 * m_cubic * (hn - r).abs() * hn
    };
    let assemble = |r: f64| -> Vector {
        let coeffs = Vector::from_iterator(d, (0..d).map(|j| -ghat[j] / (lam[j] + 0.5 * m_cubic * r)));
        q * coeffs
    };

    // Smallest shift keeping B + (M r / 2) I positive semidefinite.
    let r_floor = (-2.0 * lam_min / m_cubic).max(0.0);

    // Hard case: no gradient mass on the bottom eigenspace and the pseudo
    // solution at the floor shift is already short enough. Pad with a bottom
    // eigenvector to reach norm r_floor.
    if lam_min < 0.0 {
        let gap = 1e-12 * lam.iter().fold(1.0f64, |m, &l| m.max(l.abs()));
        let bottom: Vec<usize> = (0..d).filter(|&j| lam[j] <= lam_min + gap).collect();
        let mass_on_bottom: f64 = bottom.iter().map(|&j| ghat[j] * ghat[j]).sum();
        if mass_on_bottom <= (1e-14 * gnorm.max(1.0)).powi(2) {
            let psi_floor: f64 = (0..d)
                .filter(|j| !bottom.contains(j))
                .map(|j| (ghat[j] / (lam[j] + 0.5 * m_cubic * r_floor)).powi(2))
                .sum();
            if psi_floor <= r_floor * r_floor {
                let mut h = Vector::zeros(d);
                for j in 0..d {
                    if !bottom.contains(&j) {
                        h += q.column(j) * (-ghat[j] / (lam[j] + 0.5 * m_cubic * r_floor));
                    }
                }
                let tau = (r_floor * r_floor - psi_floor).max(0.0).sqrt();
                h += q.column(bottom[0]) * tau;
                return Ok(h);
            }
        }
    }

    // Bracket the root of σ(r) = √ψ(r) − r. Just above the floor σ > 0 (ψ
    // blows up or exceeds the floor by the hard-case exclusion); for large r,
    // ψ → 0 so σ < 0.
    let mut lo = if r_floor == 0.0 { 0.0 } else { r_floor * (1.0 + 1e-14) + f64::MIN_POSITIVE };
    if psi(lo).sqrt() <= lo {
        // Degenerate bracket: the solution sits essentially at the floor.
        return Ok(assemble(lo));
    }
    let mut hi = (r_floor + 1.0).max(2.0 * gnorm / m_cubic).max(2.0 * r_floor);
    let mut grow = 0;
    while psi(hi).sqrt() > hi {
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(LinalgError::CubicRootFind { residual: stationarity(hi) });
        }
    }

    let mut r = 0.5 * (lo + hi);
    for _ in 0..MAX_ROOT_ITER {
        r = 0.5 * (lo + hi);
        if stationarity(r) <= tol {
            return Ok(assemble(r));
        }
        if psi(r).sqrt() > r {
            lo = r;
        } else {
            hi = r;
        }
    }
    let residual = stationarity(r);
    if residual <= tol {
        Ok(assemble(r))
    } else {
        Err(LinalgError::CubicRootFind { residual })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn mat(rows: &[&[f64]]) -> SymMatrix {
        let d = rows.len();
        let mut m = DMatrix::zeros(d, d);
        for (r, row) in rows.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                m[(r, c)] = *v;
            }
        }
        SymMatrix::from_matrix(m)
    }

    #[test]
    fn solve_linear_symmetrizes_unflagged_input() {
        let a = mat(&[&[1.0, 0.4, -0.3], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        assert!(!a.symmetric, "test needs an unflagged asymmetric matrix");
        let b = Vector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = solve_linear(&a, &b).unwrap();
        let residual = (&b - symmetrize(&a).mul_vec(&x)).norm();
        assert!(
            residual <= 1e-12,
            "solution must satisfy the symmetrized system, residual {residual}"
        );
    }

    #[test]
    fn symmetrize_basics() {
        let a = mat(&[&[0.0, 2.0], &[0.0, 0.0]]);
        let s = symmetrize(&a);
        assert_eq!(s.get(0, 1), 1.0);
        assert_eq!(s.get(1, 0), 1.0);
        assert!(s.is_flagged_symmetric());
        // Idempotent, bit for bit.
        assert_eq!(symmetrize(&s).matrix(), s.matrix());
    }

    #[test]
    fn norms_on_known_matrices() {
        let id3 = SymMatrix::identity(3);
        assert_relative_eq!(id3.frob_norm(), 3.0f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(id3.spectral_norm(), 1.0, max_relative = 1e-12);
        assert_eq!(id3.inf_norm(), 1.0);

        let a = mat(&[&[3.0, 4.0], &[0.0, 0.0]]);
        assert_relative_eq!(a.frob_norm(), 5.0, max_relative = 1e-14);

        // Rank-one uuᵀ with ‖u‖ = 2 has spectral norm 4.
        let u = Vector::from_vec(vec![2.0f64.sqrt(), 2.0f64.sqrt()]);
        let uut = SymMatrix::from_symmetric(&u * u.transpose());
        assert_relative_eq!(uut.spectral_norm(), 4.0, max_relative = 1e-12);
    }

    #[test]
    fn flat_indexing_is_row_major() {
        let a = mat(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(a.flat(0), 1.0);
        assert_eq!(a.flat(1), 2.0);
        assert_eq!(a.flat(2), 3.0);
        assert_eq!(a.flat(3), 4.0);
    }

    #[test]
    fn projection_clips_eigenvalues() {
        let a = mat(&[&[3.0, 0.0], &[0.0, 0.5]]);
        let p = project_psd_mu(&a, 1.0).unwrap();
        assert_relative_eq!(p.get(0, 0), 3.0, max_relative = 1e-12);
        assert_relative_eq!(p.get(1, 1), 1.0, max_relative = 1e-12);
        assert!(p.get(0, 1).abs() < 1e-12);

        let z = SymMatrix::zeros(4);
        let p = project_psd_mu(&z, 1.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(p.get(i, j), want, epsilon = 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn projection_contract_on_random_symmetric(
            d in 2usize..7,
            seed in any::<u64>(),
            mu in 0.0f64..2.0,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let raw = DMatrix::from_fn(d, d, |_, _| rng.random_range(-3.0..3.0));
            let a = symmetrize(&SymMatrix::from_matrix(raw));
            let p = project_psd_mu(&a, mu).unwrap();

            prop_assert!(p.is_symmetric_exact());
            let eig = p.matrix().clone().symmetric_eigen();
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(min >= mu - TOL_EIG, "min eig {min} below {mu}");

            // Idempotence.
            let pp = project_psd_mu(&p, mu).unwrap();
            let drift = pp.sub(&p).frob_norm();
            prop_assert!(drift <= 1e-12 * (1.0 + p.frob_norm()), "projection drift {drift}");
        }
    }

    #[test]
    fn solve_linear_identity_and_scaled() {
        let b = Vector::from_vec(vec![1.0, -2.0, 3.0]);
        let x = solve_linear(&SymMatrix::identity(3), &b).unwrap();
        assert_relative_eq!((&x - &b).norm(), 0.0, epsilon = 1e-14);

        let x = solve_linear(&SymMatrix::identity(3).scale(2.0), &b).unwrap();
        assert_relative_eq!((&x - b.scale(0.5)).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn solve_linear_random_spd_residual() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for _ in 0..20 {
            let g = DMatrix::from_fn(10, 10, |_, _| rng.random_range(-1.0..1.0));
            let spd = SymMatrix::from_symmetric(g.transpose() * &g + DMatrix::identity(10, 10));
            let b = Vector::from_fn(10, |_, _| rng.random_range(-1.0..1.0));
            let x = solve_linear(&spd, &b).unwrap();
            let res = (&b - spd.mul_vec(&x)).norm();
            assert!(res <= TOL_LIN * b.norm(), "residual {res}");
        }
    }

    #[test]
    fn solve_linear_rejects_indefinite() {
        let a = mat(&[&[1.0, 0.0], &[0.0, -1.0]]);
        assert!(matches!(solve_linear(&a, &Vector::zeros(2)), Err(LinalgError::NotPositiveDefinite)));
    }

    #[test]
    fn cubic_step_zero_gradient() {
        let h = solve_cubic_step(&Vector::zeros(3), &SymMatrix::identity(3), 1.0).unwrap();
        assert_eq!(h.norm(), 0.0);
    }

    #[test]
    fn cubic_step_tiny_m_recovers_newton() {
        let g = Vector::from_vec(vec![1.0, 0.0]);
        let h = solve_cubic_step(&g, &SymMatrix::identity(2), 1e-8).unwrap();
        assert!((h[0] + 1.0).abs() < 1e-6 && h[1].abs() < 1e-6, "h = {h:?}");
    }

    #[test]
    fn cubic_step_scalar_closed_form() {
        // d = 1, B = 0, M = 6: minimize h + |h|³, stationarity 1 + 3h|h| = 0,
        // so h = −1/√3.
        let g = Vector::from_vec(vec![1.0]);
        let b = SymMatrix::zeros(1);
        let h = solve_cubic_step(&g, &b, 6.0).unwrap();
        assert_relative_eq!(h[0], -1.0 / 3.0f64.sqrt(), max_relative = 1e-8);
    }

    #[test]
    fn cubic_step_beats_brute_force_grid() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2024);
        for inst in 0..20 {
            let g = Vector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let raw = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-2.0..2.0));
            let b = symmetrize(&SymMatrix::from_matrix(raw));
            let m: f64 = [0.5, 1.0, 3.0][inst % 3];

            let h = solve_cubic_step(&g, &b, m).unwrap();
            let model = |h1: f64, h2: f64| -> f64 {
                let quad = 0.5 * (b.get(0, 0) * h1 * h1 + 2.0 * b.get(0, 1) * h1 * h2 + b.get(1, 1) * h2 * h2);
                let n2 = h1 * h1 + h2 * h2;
                g[0] * h1 + g[1] * h2 + quad + m / 6.0 * n2 * n2.sqrt()
            };

            // Exhaustive reference on [−3, 3]² with step 1e-3.
            let (g0, g1, b00, b01, b11) = (g[0], g[1], b.get(0, 0), b.get(0, 1), b.get(1, 1));
            let mut grid_min = f64::INFINITY;
            let steps = 6001;
            for i in 0..steps {
                let h1 = -3.0 + i as f64 * 1e-3;
                let base = g0 * h1 + 0.5 * b00 * h1 * h1;
                let h1sq = h1 * h1;
                for j in 0..steps {
                    let h2 = -3.0 + j as f64 * 1e-3;
                    let n2 = h1sq + h2 * h2;
                    let t = base + (g1 + b01 * h1) * h2 + 0.5 * b11 * h2 * h2 + m / 6.0 * n2 * n2.sqrt();
                    if t < grid_min {
                        grid_min = t;
                    }
                }
            }
            let solver_val = model(h[0], h[1]);
            assert!(
                solver_val <= grid_min + 1e-4,
                "instance {inst}: solver {solver_val} vs grid {grid_min}"
            );
        }
    }

    #[test]
    fn cubic_step_stationarity_on_random_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(99);
        for _ in 0..50 {
            let d = rng.random_range(1usize..8);
            let g = Vector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
            let raw = DMatrix::from_fn(d, d, |_, _| rng.random_range(-2.0..2.0));
            let b = symmetrize(&SymMatrix::from_matrix(raw));
            let m = rng.random_range(0.1..5.0);
            let h = solve_cubic_step(&g, &b, m).unwrap();
            let grad = &g + b.mul_vec(&h) + h.scale(0.5 * m * h.norm());
            assert!(
                grad.norm() <= TOL_CUBIC * g.norm().max(1.0) * 1.01,
                "stationarity {} at d={d}",
                grad.norm()
            );
        }
    }

    #[test]
    fn cubic_step_rejects_nonpositive_weight() {
        let g = Vector::from_vec(vec![1.0]);
        assert!(solve_cubic_step(&g, &SymMatrix::identity(1), 0.0).is_err());
        assert!(solve_cubic_step(&g, &SymMatrix::identity(1), -1.0).is_err());
    }
}
