//! Statistical properties: affine invariance of the Hotelling statistic
//! and the Monte Carlo unbiasedness of the covariance estimator.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use statloss::class_stats::{self, BatchStats, ClassBatch};
use statloss::data::{self, GaussianSpec};
use statloss::linalg::Matrix;

#[test]
fn hotelling_t2_is_affine_invariant() {
    let mut rng = StdRng::seed_from_u64(31);
    for trial in 0..50 {
        let p = rng.random_range(1..=5);
        let n = rng.random_range(p + 2..p + 9);

        let sample = |rng: &mut StdRng, shift: f64| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0) + shift).collect())
                .collect()
        };
        let a_feats = sample(&mut rng, 0.0);
        let b_feats = sample(&mut rng, 0.8);

        // well-conditioned invertible map: identity plus a mild perturbation
        let mut map = Matrix::identity(p);
        for i in 0..p {
            for j in 0..p {
                map.add_at(i, j, 0.5 * rng.random_range(-1.0..1.0));
            }
        }
        let shift: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
        let transform = |feats: &[Vec<f64>]| -> Vec<Vec<f64>> {
            feats
                .iter()
                .map(|f| {
                    let mut out = map.mul_vec(f).unwrap();
                    for (o, s) in out.iter_mut().zip(&shift) {
                        *o += s;
                    }
                    out
                })
                .collect()
        };

        let stats = |feats: Vec<Vec<f64>>, id: usize| {
            BatchStats::from_batch(&ClassBatch::new(id, feats).unwrap()).unwrap()
        };
        let t2 = class_stats::hotelling_t2(
            &stats(a_feats.clone(), 0),
            &stats(b_feats.clone(), 1),
            0.0,
        )
        .unwrap();
        let t2_mapped = class_stats::hotelling_t2(
            &stats(transform(&a_feats), 0),
            &stats(transform(&b_feats), 1),
            0.0,
        )
        .unwrap();
        let rel = (t2 - t2_mapped).abs() / t2.abs().max(1e-30);
        assert!(rel <= 1e-8, "trial {trial}: relative deviation {rel}");
    }
}

#[test]
fn covariance_estimator_is_unbiased_monte_carlo() {
    let true_cov = Matrix::from_rows(&[
        &[2.0, 0.5, 0.3],
        &[0.5, 1.5, -0.2],
        &[0.3, -0.2, 1.0],
    ]);
    let spec = GaussianSpec {
        mean: vec![1.0, -2.0, 0.5],
        cov: true_cov.clone(),
        count: 80_000, // 10 000 batches of 8
    };
    let dataset = data::synth_gaussians(&[spec], 2718).unwrap();

    let mut mean_cov = Matrix::zeros(3, 3);
    let batches = 10_000;
    for chunk in dataset.samples.chunks(8) {
        let feats: Vec<Vec<f64>> = chunk.iter().map(|(f, _)| f.clone()).collect();
        let cov = class_stats::covariance_unbiased(&ClassBatch::new(0, feats).unwrap()).unwrap();
        mean_cov = mean_cov.add(&cov).unwrap();
    }
    mean_cov = mean_cov.scale(1.0 / batches as f64);

    let max_abs = true_cov
        .data()
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = 0.05 * max_abs;
    for i in 0..3 {
        for j in 0..3 {
            let diff = (mean_cov.get(i, j) - true_cov.get(i, j)).abs();
            assert!(
                diff <= tol,
                "entry ({i},{j}): mean {} vs true {} (tol {tol})",
                mean_cov.get(i, j),
                true_cov.get(i, j)
            );
        }
    }
}
