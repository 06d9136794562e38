//! Kernel Gram matrices over a single data column, and double centering.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::NumericError;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Kernel family. The RBF bandwidth is fixed by the sample size: `exp(-(a-b)^2 / n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
    Linear,
}

impl KernelKind {
    /// Evaluates the kernel for two entries of a length-`n` sample.
    #[inline]
    pub fn eval<T: Scalar>(self, a: T, b: T, n: usize) -> T {
        match self {
            KernelKind::Rbf => {
                let d = a - b;
                (-(d * d) / T::of_usize(n)).exp()
            }
            KernelKind::Linear => a * b,
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Rbf => "rbf",
            KernelKind::Linear => "linear",
        })
    }
}

impl FromStr for KernelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rbf" | "gaussian" => Ok(KernelKind::Rbf),
            "linear" => Ok(KernelKind::Linear),
            other => Err(format!("unknown kernel `{other}` (expected rbf or linear)")),
        }
    }
}

/// Symmetric `n x n` matrix of kernel evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix<T>(Matrix<T>);

impl<T: Scalar> GramMatrix<T> {
    /// Wraps a square matrix. The caller vouches for symmetry.
    pub fn from_matrix(m: Matrix<T>) -> Result<Self, NumericError> {
        if !m.is_square() {
            return Err(NumericError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        Ok(Self(m))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }
}

pub(crate) fn check_column<T: Scalar>(v: &[T]) -> Result<(), NumericError> {
    if v.len() < 2 {
        return Err(NumericError::TooFewSamples(v.len()));
    }
    if let Some(index) = v.iter().position(|x| !x.is_finite()) {
        return Err(NumericError::NonFinite { index });
    }
    Ok(())
}

/// Gram matrix of one column under `kind`; the RBF scale uses `n = v.len()`.
pub fn gram<T: Scalar>(v: &[T], kind: KernelKind) -> Result<GramMatrix<T>, NumericError> {
    check_column(v)?;
    let n = v.len();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = kind.eval(v[i], v[i], n);
        for j in 0..i {
            let e = kind.eval(v[i], v[j], n);
            k[(i, j)] = e;
            k[(j, i)] = e;
        }
    }
    Ok(GramMatrix(k))
}

/// Double centering `H K H` with `H = I - ee^T/n`.
pub fn center<T: Scalar>(k: &GramMatrix<T>) -> GramMatrix<T> {
    let m = k.matrix();
    let n = m.nrows();
    let nf = T::of_usize(n);
    let row_means: Vec<T> = (0..n)
        .map(|i| m.row(i).iter().copied().sum::<T>() / nf)
        .collect();
    let mut col_means = vec![T::zero(); n];
    for i in 0..n {
        for (c, &v) in col_means.iter_mut().zip(m.row(i)) {
            *c += v;
        }
    }
    col_means.iter_mut().for_each(|c| *c /= nf);
    let grand = row_means.iter().copied().sum::<T>() / nf;
    let out = Matrix::from_fn(n, n, |i, j| m[(i, j)] - row_means[i] - col_means[j] + grand);
    GramMatrix(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn rbf_constant_vector_is_all_ones() {
        let k = gram(&[3.5f64; 6], KernelKind::Rbf).unwrap();
        assert!(k.matrix().as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rbf_two_points() {
        let k = gram(&[0.0f64, 1.0], KernelKind::Rbf).unwrap();
        let m = k.matrix();
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(1, 1)], 1.0);
        assert_abs_diff_eq!(m[(0, 1)], 0.606_530_659_712_633_4, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(0, 1)], (-0.5f64).exp(), epsilon = 0.0);
    }

    #[test]
    fn linear_outer_product() {
        let k = gram(&[2.0f64, -3.0], KernelKind::Linear).unwrap();
        assert_eq!(k.matrix().as_slice(), &[4.0, -6.0, -6.0, 9.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            gram(&[1.0f64, f64::NAN], KernelKind::Rbf),
            Err(NumericError::NonFinite { index: 1 })
        );
        assert_eq!(
            gram(&[1.0f64], KernelKind::Linear),
            Err(NumericError::TooFewSamples(1))
        );
    }

    #[test]
    fn centering_examples() {
        let ones = GramMatrix::from_matrix(Matrix::from_fn(4, 4, |_, _| 1.0f64)).unwrap();
        assert!(center(&ones).matrix().max_abs() < 1e-15);

        // mean-zero vector: H x = x, so the centered Gram is unchanged
        let k = gram(&[1.0f64, -1.0], KernelKind::Linear).unwrap();
        assert_eq!(center(&k).matrix().as_slice(), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn works_in_single_precision() {
        let k = gram(&[0.0f32, 1.0, 2.0], KernelKind::Rbf).unwrap();
        let c = center(&k);
        for i in 0..3 {
            let s: f32 = c.matrix().row(i).iter().sum();
            assert!(s.abs() < 1e-6);
        }
    }

    fn column() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-50.0f64..50.0, 2..24)
    }

    proptest! {
        #[test]
        fn centered_rows_and_columns_sum_to_zero(v in column(), linear in any::<bool>()) {
            let kind = if linear { KernelKind::Linear } else { KernelKind::Rbf };
            let c = center(&gram(&v, kind).unwrap());
            let n = v.len();
            let scale = c.matrix().max_abs().max(1.0);
            for i in 0..n {
                let rs: f64 = c.matrix().row(i).iter().sum();
                let cs: f64 = (0..n).map(|r| c.matrix()[(r, i)]).sum();
                prop_assert!(rs.abs() <= 1e-9 * n as f64 * scale);
                prop_assert!(cs.abs() <= 1e-9 * n as f64 * scale);
            }
        }

        #[test]
        fn centering_is_idempotent(v in column()) {
            let c1 = center(&gram(&v, KernelKind::Rbf).unwrap());
            let c2 = center(&c1);
            for (a, b) in c1.matrix().as_slice().iter().zip(c2.matrix().as_slice()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn rbf_translation_invariant_positive_symmetric(v in prop::collection::vec(-5.0f64..5.0, 2..24), shift in -100.0f64..100.0) {
            let k = gram(&v, KernelKind::Rbf).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
            let ks = gram(&shifted, KernelKind::Rbf).unwrap();
            for (a, b) in k.matrix().as_slice().iter().zip(ks.matrix().as_slice()) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
            prop_assert!(k.matrix().as_slice().iter().all(|&e| e > 0.0 && e <= 1.0));
            prop_assert_eq!(k.matrix().asymmetry(), 0.0);
            for i in 0..v.len() {
                prop_assert_eq!(k.matrix()[(i, i)], 1.0);
            }
        }

        #[test]
        fn gram_is_positive_semidefinite_on_probes(
            v in column(),
            probes in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 24), 5),
            linear in any::<bool>(),
        ) {
            let kind = if linear { KernelKind::Linear } else { KernelKind::Rbf };
            let k = gram(&v, kind).unwrap();
            let n = v.len();
            for p in &probes {
                let p = &p[..n];
                let norm = crate::scalar::dot(p, p);
                prop_assume!(norm > 1e-6);
                let q = crate::scalar::dot(p, &k.matrix().mat_vec(p)) / norm;
                prop_assert!(q >= -1e-8 * n as f64 * k.matrix().max_abs().max(1.0), "quotient {}", q);
            }
        }

        #[test]
        fn indicator_complement_has_same_centered_gram(bits in prop::collection::vec(any::<bool>(), 2..30), linear in any::<bool>()) {
            let kind = if linear { KernelKind::Linear } else { KernelKind::Rbf };
            let b: Vec<f64> = bits.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect();
            let nb: Vec<f64> = b.iter().map(|x| 1.0 - x).collect();
            let c1 = center(&gram(&b, kind).unwrap());
            let c2 = center(&gram(&nb, kind).unwrap());
            for (a, e) in c1.matrix().as_slice().iter().zip(c2.matrix().as_slice()) {
                prop_assert!((a - e).abs() <= 1e-12);
            }
        }
    }
}
