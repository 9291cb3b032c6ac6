//! Per-class batch statistics: means, scatter matrices, unbiased covariance
//! estimates, the pooled trace and the Hotelling T-squared separation
//! statistic between two classes.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Floor for the scale-aware ridge applied to a pooled scatter matrix.
pub const RIDGE_EPS_FLOOR: f64 = 1e-8;

/// Samples of one class inside a mini-batch.
#[derive(Debug, Clone)]
pub struct ClassBatch {
    pub class_id: usize,
    pub features: Vec<Vec<f64>>,
}

impl ClassBatch {
    pub fn new(class_id: usize, features: Vec<Vec<f64>>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyClass { class_id });
        }
        let dim = features[0].len();
        for f in &features {
            if f.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "class batch feature dims",
                    expected: dim,
                    found: f.len(),
                });
            }
        }
        Ok(Self { class_id, features })
    }

    pub fn count(&self) -> usize {
        self.features.len()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }
}

/// Mean, scatter and count of one class batch.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub class_id: usize,
    pub mean: Vec<f64>,
    pub scatter: Matrix,
    pub count: usize,
}

impl BatchStats {
    pub fn from_batch(batch: &ClassBatch) -> Result<Self> {
        let mean = class_mean(batch)?;
        let scatter = scatter_matrix(batch, &mean)?;
        Ok(Self {
            class_id: batch.class_id,
            mean,
            scatter,
            count: batch.count(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Coordinatewise arithmetic mean of the batch features.
pub fn class_mean(batch: &ClassBatch) -> Result<Vec<f64>> {
    if batch.features.is_empty() {
        return Err(Error::EmptyClass {
            class_id: batch.class_id,
        });
    }
    let dim = batch.dim();
    let mut mean = vec![0.0; dim];
    for f in &batch.features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    let n = batch.count() as f64;
    for m in &mut mean {
        *m /= n;
    }
    Ok(mean)
}

/// Scatter matrix: the sum of outer products of deviations about `mean`.
pub fn scatter_matrix(batch: &ClassBatch, mean: &[f64]) -> Result<Matrix> {
    let dim = batch.dim();
    if mean.len() != dim {
        return Err(Error::DimensionMismatch {
            context: "scatter mean length",
            expected: dim,
            found: mean.len(),
        });
    }
    let mut s = Matrix::zeros(dim, dim);
    for f in &batch.features {
        let d = linalg::sub(f, mean);
        for i in 0..dim {
            // fill the upper triangle, mirror afterwards
            for j in i..dim {
                s.set(i, j, s.get(i, j) + d[i] * d[j]);
            }
        }
    }
    for i in 0..dim {
        for j in (i + 1)..dim {
            s.set(j, i, s.get(i, j));
        }
    }
    Ok(s)
}

/// Unbiased covariance estimate: scatter over n - 1.
pub fn covariance_unbiased(batch: &ClassBatch) -> Result<Matrix> {
    if batch.count() < 2 {
        return Err(Error::DegenerateClass {
            class_id: batch.class_id,
            count: batch.count(),
        });
    }
    let mean = class_mean(batch)?;
    let s = scatter_matrix(batch, &mean)?;
    Ok(s.scale(1.0 / (batch.count() as f64 - 1.0)))
}

/// Mean over classes of trace(S_k) / (n_k - 1).
pub fn pooled_trace_estimate(stats: &[BatchStats]) -> Result<f64> {
    if stats.is_empty() {
        return Err(Error::DegenerateBatch {
            reason: "no class statistics supplied".to_string(),
        });
    }
    let mut sum = 0.0;
    for st in stats {
        if st.count < 2 {
            return Err(Error::DegenerateClass {
                class_id: st.class_id,
                count: st.count,
            });
        }
        sum += linalg::trace(&st.scatter)? / (st.count as f64 - 1.0);
    }
    Ok(sum / stats.len() as f64)
}

/// Scale-aware default ridge for a pooled scatter matrix:
/// 1e-3 * trace / p, floored at 1e-8. Keeps the pooled scatter invertible
/// when per-class counts fall below the feature dimension.
pub fn scaled_ridge_eps(pooled_scatter: &Matrix) -> f64 {
    let p = pooled_scatter.rows() as f64;
    let tr = linalg::trace(pooled_scatter).unwrap_or(0.0);
    (1e-3 * tr / p).max(RIDGE_EPS_FLOOR)
}

/// Two-sample Hotelling T-squared statistic with an explicit ridge:
///
/// T^2 = ((n_k + n_t - 2) / (1/n_k + 1/n_t)) * G^T (S_k + S_t + eps I)^-1 G
///
/// with G the difference of class means. Symmetric in its class arguments
/// and invariant under invertible affine maps of the features (for eps = 0).
pub fn hotelling_t2(stats_k: &BatchStats, stats_t: &BatchStats, eps: f64) -> Result<f64> {
    for st in [stats_k, stats_t] {
        if st.count < 2 {
            return Err(Error::DegenerateClass {
                class_id: st.class_id,
                count: st.count,
            });
        }
    }
    if stats_k.dim() != stats_t.dim() {
        return Err(Error::DimensionMismatch {
            context: "hotelling class dims",
            expected: stats_k.dim(),
            found: stats_t.dim(),
        });
    }
    let gamma = linalg::sub(&stats_k.mean, &stats_t.mean);
    let pooled = stats_k.scatter.add(&stats_t.scatter)?;
    let inv = linalg::ridge_inverse(&pooled, eps)?;
    let n_k = stats_k.count as f64;
    let n_t = stats_t.count as f64;
    let factor = (n_k + n_t - 2.0) / (1.0 / n_k + 1.0 / n_t);
    Ok(factor * linalg::quadratic_form(&gamma, &inv)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn batch(class_id: usize, rows: &[&[f64]]) -> ClassBatch {
        ClassBatch::new(class_id, rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn mean_examples() {
        let m = class_mean(&batch(0, &[&[1.0, 2.0], &[3.0, 4.0]])).unwrap();
        assert_eq!(m, vec![2.0, 3.0]);
        let m = class_mean(&batch(0, &[&[5.0]])).unwrap();
        assert_eq!(m, vec![5.0]);
        let m = class_mean(&batch(0, &[&[0.0, 0.0], &[0.0, 0.0], &[3.0, 3.0]])).unwrap();
        assert_eq!(m, vec![1.0, 1.0]);
    }

    #[test]
    fn empty_class_rejected() {
        assert!(matches!(
            ClassBatch::new(3, vec![]),
            Err(Error::EmptyClass { class_id: 3 })
        ));
    }

    #[test]
    fn scatter_examples() {
        let b = batch(0, &[&[1.0, 2.0], &[3.0, 4.0]]);
        let s = scatter_matrix(&b, &[2.0, 3.0]).unwrap();
        assert_eq!(s, Matrix::from_rows(&[&[2.0, 2.0], &[2.0, 2.0]]));

        let b = batch(0, &[&[4.0, -1.0], &[4.0, -1.0], &[4.0, -1.0]]);
        let mean = class_mean(&b).unwrap();
        let s = scatter_matrix(&b, &mean).unwrap();
        assert_eq!(s, Matrix::zeros(2, 2));

        let b = batch(0, &[&[0.0], &[2.0]]);
        let s = scatter_matrix(&b, &[1.0]).unwrap();
        assert_eq!(s, Matrix::from_rows(&[&[2.0]]));
    }

    #[test]
    fn covariance_examples() {
        let c = covariance_unbiased(&batch(0, &[&[0.0], &[2.0]])).unwrap();
        assert_eq!(c, Matrix::from_rows(&[&[2.0]]));

        let c = covariance_unbiased(&batch(0, &[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]])).unwrap();
        assert_eq!(c, Matrix::zeros(2, 2));

        let c = covariance_unbiased(&batch(0, &[&[0.0], &[1.0], &[2.0]])).unwrap();
        assert!((c.get(0, 0) - 1.0).abs() <= 1e-15);

        assert!(matches!(
            covariance_unbiased(&batch(1, &[&[0.0]])),
            Err(Error::DegenerateClass { class_id: 1, count: 1 })
        ));
    }

    #[test]
    fn pooled_trace_examples() {
        let one = BatchStats::from_batch(&batch(0, &[&[0.0], &[2.0]])).unwrap();
        assert_eq!(pooled_trace_estimate(&[one.clone()]).unwrap(), 2.0);

        let same = BatchStats::from_batch(&batch(1, &[&[3.0], &[3.0]])).unwrap();
        let same2 = BatchStats::from_batch(&batch(2, &[&[-1.0], &[-1.0]])).unwrap();
        assert_eq!(pooled_trace_estimate(&[same, same2]).unwrap(), 0.0);

        // covariance traces 2 and 4 average to 3
        let a = BatchStats::from_batch(&batch(0, &[&[0.0], &[2.0]])).unwrap();
        let spread = 2.0 * 2.0f64.sqrt();
        let b = BatchStats::from_batch(&batch(1, &[&[0.0], &[spread]])).unwrap();
        let pooled = pooled_trace_estimate(&[a, b]).unwrap();
        assert!((pooled - 3.0).abs() <= 1e-12);
    }

    #[test]
    fn deviations_sum_to_zero() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.random_range(1..12);
            let p = rng.random_range(1..6);
            let feats: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..p).map(|_| rng.random_range(-100.0..100.0)).collect())
                .collect();
            let b = ClassBatch::new(0, feats).unwrap();
            let mean = class_mean(&b).unwrap();
            let mut residual = vec![0.0; p];
            for f in &b.features {
                for (r, (x, m)) in residual.iter_mut().zip(f.iter().zip(&mean)) {
                    *r += x - m;
                }
            }
            for r in residual {
                assert!(r.abs() <= 1e-10, "deviation sum {r}");
            }
        }
    }

    #[test]
    fn scatter_is_positive_semidefinite() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..10 {
            let n = rng.random_range(2..10);
            let p = rng.random_range(1..6);
            let feats: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..p).map(|_| rng.random_range(-5.0..5.0)).collect())
                .collect();
            let b = ClassBatch::new(0, feats).unwrap();
            let s = scatter_matrix(&b, &class_mean(&b).unwrap()).unwrap();
            for _ in 0..100 {
                let v: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
                let q = linalg::quadratic_form(&v, &s).unwrap();
                assert!(q >= -1e-10, "scatter quadratic form {q}");
            }
        }
    }

    #[test]
    fn hotelling_identical_means_is_zero() {
        let a = BatchStats::from_batch(&batch(0, &[&[1.0, 0.0], &[-1.0, 0.0]])).unwrap();
        let b = BatchStats::from_batch(&batch(1, &[&[0.0, 1.0], &[0.0, -1.0]])).unwrap();
        let t2 = hotelling_t2(&a, &b, 0.0).unwrap();
        assert_eq!(t2, 0.0);
    }

    #[test]
    fn hotelling_one_dimensional_worked_example() {
        let a = BatchStats::from_batch(&batch(0, &[&[0.0], &[2.0]])).unwrap();
        let b = BatchStats::from_batch(&batch(1, &[&[4.0], &[6.0]])).unwrap();
        let t2 = hotelling_t2(&a, &b, 0.0).unwrap();
        assert!((t2 - 8.0).abs() <= 1e-12, "T2 {t2}");
    }

    #[test]
    fn hotelling_is_symmetric() {
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..20 {
            let p = rng.random_range(1..5);
            let n = rng.random_range(p + 2..p + 8);
            let make = |rng: &mut StdRng, off: f64| {
                let feats: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..p).map(|_| rng.random_range(-2.0..2.0) + off).collect())
                    .collect();
                BatchStats::from_batch(&ClassBatch::new(0, feats).unwrap()).unwrap()
            };
            let a = make(&mut rng, 0.0);
            let b = make(&mut rng, 1.0);
            let kt = hotelling_t2(&a, &b, 0.0).unwrap();
            let tk = hotelling_t2(&b, &a, 0.0).unwrap();
            assert_eq!(kt, tk);
            assert!(kt >= 0.0);
        }
    }

    #[test]
    fn scaled_ridge_has_floor() {
        let eps = scaled_ridge_eps(&Matrix::zeros(3, 3));
        assert_eq!(eps, RIDGE_EPS_FLOOR);
        let eps = scaled_ridge_eps(&Matrix::diag(&[300.0, 300.0, 300.0]));
        assert!((eps - 0.3).abs() <= 1e-15);
    }
}
