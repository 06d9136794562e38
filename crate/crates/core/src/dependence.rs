//! Empirical HSIC and the normalized dependence NOCCO between two columns.
//!
//! The reference route builds both regularized operators
//! `R = HKH (HKH + n eps I)^{-1}` densely through a Cholesky solve and takes
//! their Frobenius inner product. [`LabelOperator`] provides a second route
//! for scoring many columns against one shared label vector: each column's
//! centered Gram is factored with a pivoted Cholesky, and only when that
//! factor is not low rank does it fall back to a dense solve against the
//! label factor. Both routes compute the same `tr(R_x R_y)`.

use serde::{Deserialize, Serialize};

use crate::error::NumericError;
use crate::kernels::{center, check_column, gram, GramMatrix, KernelKind};
use crate::linalg::{pivoted_cholesky, Cholesky, LowRankFactor, Matrix};
use crate::scalar::Scalar;

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependenceConfig {
    pub kernel: KernelKind,
    /// Regularization `eps`; the operator shift is `n * eps`.
    pub epsilon: f64,
}

impl Default for DependenceConfig {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Rbf,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl DependenceConfig {
    pub fn new(kernel: KernelKind, epsilon: f64) -> Self {
        Self { kernel, epsilon }
    }

    pub fn validate(&self) -> Result<(), NumericError> {
        check_epsilon(self.epsilon)
    }

    fn shift<T: Scalar>(&self, n: usize) -> T {
        T::of(self.epsilon) * T::of_usize(n)
    }
}

fn check_epsilon(eps: f64) -> Result<(), NumericError> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(NumericError::BadRegularization(eps))
    }
}

fn check_pair<T: Scalar>(x: &[T], y: &[T]) -> Result<(), NumericError> {
    if x.len() != y.len() {
        return Err(NumericError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    check_column(x)?;
    check_column(y)
}

/// Subtracts the column mean. Both kernels give the same `HKH` for `x` and
/// `x - mean`, and the shifted column avoids cancellation in the linear Gram.
fn demeaned<T: Scalar>(x: &[T]) -> Vec<T> {
    let mean = x.iter().copied().sum::<T>() / T::of_usize(x.len());
    x.iter().map(|&v| v - mean).collect()
}

/// `tr(K_x H K_y H) / (n - 1)^2`
pub fn hsic<T: Scalar>(x: &[T], y: &[T], kind: KernelKind) -> Result<T, NumericError> {
    check_pair(x, y)?;
    let n = x.len();
    let kx = center(&gram(&demeaned(x), kind)?);
    let ky = gram(&demeaned(y), kind)?;
    let denom = T::of_usize(n - 1);
    Ok(kx.matrix().frobenius_inner(ky.matrix()) / (denom * denom))
}

/// Dense `R = HKH (HKH + n eps I)^{-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedOperator<T>(Matrix<T>);

impl<T: Scalar> RegularizedOperator<T> {
    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> T {
        self.0.trace()
    }

    /// `tr(R_self R_other)` as a sum of elementwise products.
    pub fn trace_product(&self, other: &Self) -> T {
        self.0.frobenius_inner(&other.0)
    }
}

/// Builds `R` from a Gram matrix by solving `(HKH + n eps I) Z = HKH`.
pub fn regularized_operator<T: Scalar>(
    k: &GramMatrix<T>,
    epsilon: f64,
) -> Result<RegularizedOperator<T>, NumericError> {
    check_epsilon(epsilon)?;
    let n = k.n();
    let centered = center(k).into_matrix();
    let mut system = centered.clone();
    system.add_diagonal(T::of(epsilon) * T::of_usize(n));
    let chol = Cholesky::factor(&system)?;
    let mut z = centered;
    chol.solve_in_place(&mut z);
    Ok(RegularizedOperator(z))
}

/// `tr(R_x R_y)` through two dense regularized operators.
pub fn nocco<T: Scalar>(x: &[T], y: &[T], config: &DependenceConfig) -> Result<T, NumericError> {
    check_pair(x, y)?;
    let rx = regularized_operator(&gram(&demeaned(x), config.kernel)?, config.epsilon)?;
    let ry = regularized_operator(&gram(&demeaned(y), config.kernel)?, config.epsilon)?;
    Ok(rx.trace_product(&ry))
}

/// `R = C (C^T C + n eps I)^{-1} C^T` for a column-centered factor `C` with `HKH ≈ C C^T`.
#[derive(Debug, Clone)]
pub struct FactoredOperator<T> {
    factor: Matrix<T>,
    inner: Cholesky<T>,
    residual_trace: T,
}

impl<T: Scalar> FactoredOperator<T> {
    fn from_low_rank(f: LowRankFactor<T>, shift: T) -> Result<Self, NumericError> {
        let n = f.n;
        let r = f.rank();
        let mut c = Matrix::zeros(n, r);
        for (j, col) in f.columns.iter().enumerate() {
            let mean = col.iter().copied().sum::<T>() / T::of_usize(n);
            for i in 0..n {
                c[(i, j)] = col[i] - mean;
            }
        }
        let mut small = c.tr_matmul(&c);
        small.add_diagonal(shift);
        let inner = Cholesky::factor(&small)?;
        Ok(Self {
            factor: c,
            inner,
            residual_trace: f.residual_trace,
        })
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    pub fn n(&self) -> usize {
        self.factor.nrows()
    }

    /// Trace of the Gram residual the factorization neglected.
    pub fn residual_trace(&self) -> T {
        self.residual_trace
    }

    pub fn trace(&self) -> T {
        let g = self.factor.tr_matmul(&self.factor);
        let mut s = g.clone();
        self.inner.solve_in_place(&mut s);
        s.trace()
    }

    /// Materializes the dense `n x n` operator.
    pub fn to_dense(&self) -> Matrix<T> {
        let mut ct = self.factor.transpose();
        self.inner.solve_in_place(&mut ct);
        self.factor.matmul(&ct)
    }

    /// `tr(R_self R_other)` in the factor space.
    pub fn trace_product(&self, other: &Self) -> T {
        let cross = self.factor.tr_matmul(&other.factor);
        let mut p = cross.clone();
        self.inner.solve_in_place(&mut p);
        let mut q = cross.transpose();
        other.inner.solve_in_place(&mut q);
        // tr(P Q) with P: r1 x r2, Q: r2 x r1
        p.frobenius_inner(&q.transpose())
    }
}

/// Residual-diagonal floor below which pivoting stops, relative to the largest Gram diagonal entry.
const ENTRY_TOL: f64 = 1e-13;
/// Residual-trace target, relative to the shift `n eps`; bounds the induced error in `tr(R_x R_y)`.
const TRACE_TOL: f64 = 1e-10;

fn factor_gram<T: Scalar>(
    x: &[T],
    config: &DependenceConfig,
    max_rank: usize,
) -> Result<Option<FactoredOperator<T>>, NumericError> {
    let n = x.len();
    let kind = config.kernel;
    let shift: T = config.shift(n);
    let x = &demeaned(x)[..];
    let diag: Vec<T> = x.iter().map(|&v| kind.eval(v, v, n)).collect();
    let max_diag = diag.iter().fold(T::zero(), |m, &d| m.max(d));
    if max_diag == T::zero() {
        // identically zero linear Gram: R = 0
        let f = LowRankFactor {
            n,
            columns: Vec::new(),
            residual_trace: T::zero(),
            converged: true,
        };
        return FactoredOperator::from_low_rank(f, shift).map(Some);
    }
    let f = pivoted_cholesky(
        diag,
        |j, out: &mut [T]| {
            for (o, &xi) in out.iter_mut().zip(x) {
                *o = kind.eval(xi, x[j], n);
            }
        },
        T::of(TRACE_TOL) * shift,
        T::of(ENTRY_TOL) * max_diag,
        max_rank,
    );
    if !f.converged {
        return Ok(None);
    }
    FactoredOperator::from_low_rank(f, shift).map(Some)
}

/// Regularized operator of a shared label column, reused across many feature columns.
#[derive(Debug, Clone)]
pub struct LabelOperator<T> {
    op: FactoredOperator<T>,
    config: DependenceConfig,
    /// `(C^T C + n eps I)^{-1}` for the label factor, needed by the dense fallback.
    inner_inverse: Matrix<T>,
}

impl<T: Scalar> LabelOperator<T> {
    pub fn new(y: &[T], config: &DependenceConfig) -> Result<Self, NumericError> {
        config.validate()?;
        check_column(y)?;
        let op = factor_gram(y, config, y.len())?
            .expect("uncapped pivoted Cholesky always converges");
        let mut inner_inverse = Matrix::identity(op.rank());
        op.inner.solve_in_place(&mut inner_inverse);
        Ok(Self {
            op,
            config: *config,
            inner_inverse,
        })
    }

    pub fn n(&self) -> usize {
        self.op.n()
    }

    pub fn config(&self) -> &DependenceConfig {
        &self.config
    }

    pub fn operator(&self) -> &FactoredOperator<T> {
        &self.op
    }

    /// `tr(R_x R_y)` for a feature column `x` against this label.
    pub fn nocco(&self, x: &[T]) -> Result<T, NumericError> {
        if x.len() != self.n() {
            return Err(NumericError::LengthMismatch {
                left: x.len(),
                right: self.n(),
            });
        }
        check_column(x)?;
        let n = x.len();
        let max_rank = (n / 4).max(1);
        match factor_gram(x, &self.config, max_rank)? {
            Some(fx) => Ok(fx.trace_product(&self.op)),
            None => self.nocco_dense(x),
        }
    }

    /// Dense fallback: `R_x C_y = C_y - n eps (HK_xH + n eps I)^{-1} C_y`.
    fn nocco_dense(&self, x: &[T]) -> Result<T, NumericError> {
        let n = x.len();
        let shift: T = self.config.shift(n);
        let mut system = center(&gram(&demeaned(x), self.config.kernel)?).into_matrix();
        system.add_diagonal(shift);
        let chol = Cholesky::factor(&system)?;
        let cy = &self.op.factor;
        let mut solved = cy.clone();
        chol.solve_in_place(&mut solved);
        let mut rx_cy = cy.clone();
        for (o, &s) in rx_cy.as_mut_slice().iter_mut().zip(solved.as_slice()) {
            *o -= shift * s;
        }
        let m = cy.tr_matmul(&rx_cy);
        Ok(self.inner_inverse.frobenius_inner(&m.transpose()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn balanced_pm1(n: usize) -> Vec<f64> {
        (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect()
    }

    #[test]
    fn hsic_examples() {
        let x = [1.0, -1.0, 1.0, -1.0];
        let h = hsic(&x, &x, KernelKind::Linear).unwrap();
        assert_abs_diff_eq!(h, 16.0 / 9.0, epsilon = 1e-12);

        let c = [2.0; 4];
        assert_eq!(hsic(&c, &x, KernelKind::Rbf).unwrap(), 0.0);
        assert!(matches!(
            hsic(&[1.0, 2.0], &[1.0, 2.0, 3.0], KernelKind::Rbf),
            Err(NumericError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn hsic_symmetric() {
        let mut r = rng(3);
        let x: Vec<f64> = (0..25).map(|_| r.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..25).map(|_| r.gen_range(-2.0..2.0)).collect();
        for kind in [KernelKind::Rbf, KernelKind::Linear] {
            let a = hsic(&x, &y, kind).unwrap();
            let b = hsic(&y, &x, kind).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn constant_kernel_gives_zero_operator() {
        let k = gram(&[5.0f64; 7], KernelKind::Rbf).unwrap();
        let r = regularized_operator(&k, 1e-6).unwrap();
        assert_eq!(r.matrix().max_abs(), 0.0);
    }

    #[test]
    fn rank_one_closed_form() {
        let n = 10;
        let eps = 1e-6;
        let y = balanced_pm1(n);
        let r = regularized_operator(&gram(&y, KernelKind::Linear).unwrap(), eps).unwrap();
        let expected_scale = 1.0 / (1.0 + eps) / n as f64;
        for i in 0..n {
            for j in 0..n {
                assert_abs_diff_eq!(
                    r.matrix()[(i, j)],
                    expected_scale * y[i] * y[j],
                    epsilon = 1e-9
                );
            }
        }
        let cfg = DependenceConfig::new(KernelKind::Linear, eps);
        let v = nocco(&y, &y, &cfg).unwrap();
        assert_abs_diff_eq!(v, (1.0 / (1.0 + eps)).powi(2), epsilon = 1e-10);
        assert_abs_diff_eq!(v, 0.999_998, epsilon = 1e-6);
    }

    #[test]
    fn rejects_non_positive_epsilon() {
        let k = gram(&[1.0f64, 2.0], KernelKind::Rbf).unwrap();
        assert_eq!(
            regularized_operator(&k, 0.0),
            Err(NumericError::BadRegularization(0.0))
        );
        assert!(LabelOperator::new(&[1.0f64, -1.0], &DependenceConfig::new(KernelKind::Rbf, -1.0)).is_err());
    }

    #[test]
    fn constant_column_has_zero_dependence() {
        let y = balanced_pm1(12);
        let c = [0.3; 12];
        for kind in [KernelKind::Rbf, KernelKind::Linear] {
            let cfg = DependenceConfig::new(kind, 1e-6);
            assert_eq!(nocco(&c, &y, &cfg).unwrap(), 0.0);
            let label = LabelOperator::new(&y, &cfg).unwrap();
            assert_abs_diff_eq!(label.nocco(&c).unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn operator_symmetric_with_spectrum_in_unit_interval() {
        let mut r = rng(11);
        let x: Vec<f64> = (0..40).map(|_| r.gen_range(-3.0..3.0)).collect();
        let op = regularized_operator(&gram(&x, KernelKind::Rbf).unwrap(), 1e-6).unwrap();
        assert!(op.matrix().asymmetry() < 1e-9);
        for _ in 0..10 {
            let v: Vec<f64> = (0..40).map(|_| r.gen_range(-1.0..1.0)).collect();
            let rv = op.matrix().mat_vec(&v);
            let q = crate::scalar::dot(&v, &rv) / crate::scalar::dot(&v, &v);
            assert!((-1e-9..1.0 + 1e-9).contains(&q), "rayleigh quotient {q}");
        }
    }

    fn fast_vs_dense(x: &[f64], y: &[f64], kind: KernelKind) {
        let cfg = DependenceConfig::new(kind, 1e-6);
        let dense = nocco(x, y, &cfg).unwrap();
        let label = LabelOperator::new(y, &cfg).unwrap();
        let fast = label.nocco(x).unwrap();
        assert_abs_diff_eq!(fast, dense, epsilon = 1e-8 * dense.abs().max(1.0));
    }

    #[test]
    fn label_route_matches_dense_route() {
        let mut r = rng(21);
        let n = 80;
        let y: Vec<f64> = (0..n).map(|_| if r.gen_bool(0.4) { 1.0 } else { -1.0 }).collect();
        let indicator: Vec<f64> = (0..n).map(|_| if r.gen_bool(0.3) { 1.0 } else { 0.0 }).collect();
        let counts: Vec<f64> = (0..n).map(|_| r.gen_range(0..6) as f64).collect();
        let smooth: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let wide: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..1e4)).collect();
        for kind in [KernelKind::Rbf, KernelKind::Linear] {
            fast_vs_dense(&indicator, &y, kind);
            fast_vs_dense(&counts, &y, kind);
            fast_vs_dense(&smooth, &y, kind);
            if kind == KernelKind::Rbf {
                // a linear Gram at this scale has condition ~1e13 against the n*eps shift,
                // so the dense route itself loses digits there
                fast_vs_dense(&wide, &y, kind);
            }
            fast_vs_dense(&y, &y, kind);
        }
    }

    #[test]
    fn dense_fallback_matches_dense_route() {
        // wide spread makes the RBF Gram close to the identity, so the factor is full rank
        let mut r = rng(5);
        let n = 40;
        let y: Vec<f64> = (0..n).map(|_| if r.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let x: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..1e3)).collect();
        let cfg = DependenceConfig::default();
        let label = LabelOperator::new(&y, &cfg).unwrap();
        assert!(factor_gram(&x, &cfg, n / 4).unwrap().is_none());
        let fallback = label.nocco_dense(&x).unwrap();
        let dense = nocco(&x, &y, &cfg).unwrap();
        assert_abs_diff_eq!(fallback, dense, epsilon = 1e-10);
    }

    #[test]
    fn factored_operator_densifies_to_reference() {
        let x = [0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0];
        let cfg = DependenceConfig::default();
        let f = factor_gram(&x, &cfg, 7).unwrap().unwrap();
        let dense = regularized_operator(&gram(&x, cfg.kernel).unwrap(), cfg.epsilon).unwrap();
        let fd = f.to_dense();
        for (a, b) in fd.as_slice().iter().zip(dense.matrix().as_slice()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(f.trace(), dense.trace(), epsilon = 1e-10);
    }

    #[test]
    fn independent_noise_scores_low() {
        let cfg = DependenceConfig::default();
        let mut worst = 0.0f64;
        for seed in 0..20 {
            let mut r = rng(100 + seed);
            let x: Vec<f64> = (0..500).map(|_| r.gen_range(0.0..1.0)).collect();
            let y: Vec<f64> = (0..500).map(|_| if r.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
            worst = worst.max(LabelOperator::new(&y, &cfg).unwrap().nocco(&x).unwrap());
        }
        // observed maximum over these seeds: 0.0122
        assert!(worst < 0.05, "max over seeds {worst}");
    }

    #[test]
    fn linear_kernel_is_nearly_scale_free() {
        let mut r = rng(8);
        let cfg = DependenceConfig::new(KernelKind::Linear, 1e-6);
        for _ in 0..5 {
            let x: Vec<f64> = (0..40).map(|_| r.gen_range(-2.0..2.0)).collect();
            let y: Vec<f64> = x.iter().map(|v| v + r.gen_range(-2.0..2.0)).collect();
            let base = nocco(&x, &y, &cfg).unwrap();
            for c in [0.1, 10.0] {
                let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
                let v = nocco(&scaled, &y, &cfg).unwrap();
                assert!((v - base).abs() <= 1e-3 * base, "c = {c}: {v} vs {base}");
            }
        }
    }

    #[test]
    fn nocco_symmetric_and_hsic_agrees_on_constants() {
        let mut r = rng(4);
        let x: Vec<f64> = (0..30).map(|_| r.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..30).map(|_| r.gen_range(-1.0..1.0)).collect();
        for kind in [KernelKind::Rbf, KernelKind::Linear] {
            let cfg = DependenceConfig::new(kind, 1e-6);
            let a = nocco(&x, &y, &cfg).unwrap();
            let b = nocco(&y, &x, &cfg).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-10 * a);
            let c = [1.5; 30];
            assert_abs_diff_eq!(hsic(&c, &y, kind).unwrap(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(nocco(&c, &y, &cfg).unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn nocco_bounded_by_operator_traces(
            pairs in proptest::collection::vec((-3.0f64..3.0, proptest::bool::ANY), 4..30),
            linear in proptest::bool::ANY,
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| if p.1 { 1.0 } else { -1.0 }).collect();
            let kind = if linear { KernelKind::Linear } else { KernelKind::Rbf };
            let rx = regularized_operator(&gram(&x, kind).unwrap(), 1e-6).unwrap();
            let ry = regularized_operator(&gram(&y, kind).unwrap(), 1e-6).unwrap();
            let d = rx.trace_product(&ry);
            proptest::prop_assert!(d >= -1e-9);
            proptest::prop_assert!(d <= rx.trace().min(ry.trace()) + 1e-9);
        }

        #[test]
        fn complement_indicator_scores_the_same(
            bits in proptest::collection::vec((proptest::bool::ANY, proptest::bool::ANY), 4..40),
            linear in proptest::bool::ANY,
        ) {
            let b: Vec<f64> = bits.iter().map(|p| f64::from(u8::from(p.0))).collect();
            let nb: Vec<f64> = b.iter().map(|v| 1.0 - v).collect();
            let y: Vec<f64> = bits.iter().map(|p| if p.1 { 1.0 } else { -1.0 }).collect();
            let kind = if linear { KernelKind::Linear } else { KernelKind::Rbf };
            let cfg = DependenceConfig::new(kind, 1e-6);
            let (a, c) = (nocco(&b, &y, &cfg).unwrap(), nocco(&nb, &y, &cfg).unwrap());
            // both scores are at most 1 for an indicator
            proptest::prop_assert!((a - c).abs() <= 1e-10, "{} vs {}", a, c);
        }
    }

    #[test]
    fn single_precision_nocco() {
        let y: Vec<f32> = (0..16).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let cfg = DependenceConfig::new(KernelKind::Linear, 1e-3);
        let v: f32 = nocco(&y, &y, &cfg).unwrap();
        assert!((v - (1.0 / 1.001f32).powi(2)).abs() < 1e-4);
    }
}
