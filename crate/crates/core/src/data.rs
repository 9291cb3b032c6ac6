//! Dataset ingestion and sampling: labeled CSV, a plain-text band-cube
//! format with patch extraction, stratified splitting, stratified batch
//! sampling and a synthetic multivariate-Gaussian generator.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::class_stats::ClassBatch;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Labeled feature vectors. Labels are 0-based class indices.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<(Vec<f64>, usize)>,
    pub num_classes: usize,
    pub feature_dim: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample indices grouped by class, ascending.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_classes];
        for (i, (_, label)) in self.samples.iter().enumerate() {
            groups[*label].push(i);
        }
        groups
    }
}

/// A hyperspectral-style cube: H x W pixels of B bands plus one label per
/// pixel. Label 0 means unlabeled; class c is stored as c >= 1.
#[derive(Debug, Clone)]
pub struct BandCube {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    /// Pixel values indexed (row * width + col) * bands + band.
    pub values: Vec<f64>,
    /// One label per pixel, row-major.
    pub labels: Vec<usize>,
}

/// One synthetic Gaussian class: N_p(mean, cov) with a sample count.
#[derive(Debug, Clone)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub cov: Matrix,
    pub count: usize,
}

/// Train share for a stratified split.
#[derive(Debug, Clone, Copy)]
pub enum SplitSpec {
    PerClass(usize),
    Fraction(f64),
}

/// Reads a labeled CSV: comma-separated reals followed by an integer
/// label, with an optional header detected by a non-numeric first field.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<Dataset> {
    let mut samples: Vec<(Vec<f64>, usize)> = Vec::new();
    let mut feature_dim = None;
    let mut max_label = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if idx == 0 && fields[0].trim().parse::<f64>().is_err() {
            // header row
            continue;
        }
        if fields.len() < 2 {
            return Err(Error::Parse {
                line: line_no,
                message: "expected at least one feature and a label".to_string(),
            });
        }
        let (label_field, feature_fields) = fields.split_last().unwrap();
        let expected = *feature_dim.get_or_insert(feature_fields.len());
        if feature_fields.len() != expected {
            return Err(Error::RaggedRows {
                line: line_no,
                expected,
                found: feature_fields.len(),
            });
        }
        let mut features = Vec::with_capacity(expected);
        for f in feature_fields {
            features.push(f.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: line_no,
                message: format!("bad feature {:?}: {e}", f.trim()),
            })?);
        }
        let label = label_field.trim().parse::<usize>().map_err(|e| Error::Parse {
            line: line_no,
            message: format!("bad label {:?}: {e}", label_field.trim()),
        })?;
        max_label = max_label.max(label);
        samples.push((features, label));
    }
    if samples.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok(Dataset {
        feature_dim: feature_dim.unwrap(),
        num_classes: max_label + 1,
        samples,
    })
}

/// Writes the CSV counterpart of `load_csv` (no header row).
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (features, label) in &dataset.samples {
        for f in features {
            write!(out, "{f},").unwrap();
        }
        writeln!(out, "{label}").unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads the band-cube text format: a "H W B" header line, H*W*B
/// whitespace-separated reals, then H*W integer labels.
pub fn load_cube(path: &Path) -> Result<BandCube> {
    let text = std::fs::read_to_string(path)?;
    parse_cube(&text)
}

pub fn parse_cube(text: &str) -> Result<BandCube> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::EmptyFile)?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>().map_err(|e| Error::Parse {
                line: 1,
                message: format!("bad cube dimension {t:?}: {e}"),
            })
        })
        .collect::<Result<_>>()?;
    if dims.len() != 3 {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header \"H W B\", found {} fields", dims.len()),
        });
    }
    let (height, width, bands) = (dims[0], dims[1], dims[2]);
    let tokens: Vec<&str> = text
        .lines()
        .skip(1)
        .flat_map(|l| l.split_whitespace())
        .collect();
    let expected = height * width * bands + height * width;
    if tokens.len() != expected {
        return Err(Error::Parse {
            line: 2,
            message: format!("expected {expected} values, found {}", tokens.len()),
        });
    }
    let value_count = height * width * bands;
    let mut values = Vec::with_capacity(value_count);
    for t in &tokens[..value_count] {
        values.push(t.parse::<f64>().map_err(|e| Error::Parse {
            line: 2,
            message: format!("bad value {t:?}: {e}"),
        })?);
    }
    let mut labels = Vec::with_capacity(height * width);
    for t in &tokens[value_count..] {
        labels.push(t.parse::<usize>().map_err(|e| Error::Parse {
            line: 2,
            message: format!("bad label {t:?}: {e}"),
        })?);
    }
    Ok(BandCube {
        height,
        width,
        bands,
        values,
        labels,
    })
}

/// Writes the cube text format; a reread reproduces the cube bit-exactly.
pub fn write_cube(cube: &BandCube, path: &Path) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{} {} {}", cube.height, cube.width, cube.bands).unwrap();
    for pixel in cube.values.chunks(cube.bands) {
        let line: Vec<String> = pixel.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
    for row in cube.labels.chunks(cube.width) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Flattens a (2r+1)x(2r+1) neighborhood of every labeled pixel into one
/// feature vector, ordered (row, col, band). Window positions outside the
/// image clamp to the nearest edge pixel. Labels shift to 0-based.
pub fn extract_patches(cube: &BandCube, radius: usize) -> Result<Dataset> {
    let side = 2 * radius + 1;
    let dim = side * side * cube.bands;
    let mut samples = Vec::new();
    let mut max_label = 0usize;
    for r in 0..cube.height {
        for c in 0..cube.width {
            let label = cube.labels[r * cube.width + c];
            if label == 0 {
                continue;
            }
            let mut features = Vec::with_capacity(dim);
            for dr in 0..side {
                let rr = clamp_index(r as isize + dr as isize - radius as isize, cube.height);
                for dc in 0..side {
                    let cc = clamp_index(c as isize + dc as isize - radius as isize, cube.width);
                    let base = (rr * cube.width + cc) * cube.bands;
                    features.extend_from_slice(&cube.values[base..base + cube.bands]);
                }
            }
            max_label = max_label.max(label - 1);
            samples.push((features, label - 1));
        }
    }
    if samples.is_empty() {
        return Err(Error::NoLabeledPixels);
    }
    Ok(Dataset {
        samples,
        num_classes: max_label + 1,
        feature_dim: dim,
    })
}

fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Splits per class, drawing the requested share into the train set
/// without replacement. Deterministic per seed.
pub fn stratified_split(dataset: &Dataset, spec: SplitSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = dataset.indices_by_class();
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (class_id, group) in groups.iter().enumerate() {
        let need = match spec {
            SplitSpec::PerClass(n) => n,
            SplitSpec::Fraction(f) => (f * group.len() as f64).ceil() as usize,
        };
        if group.len() <= need {
            return Err(Error::InsufficientClassSamples {
                class_id,
                have: group.len(),
                need,
            });
        }
        let mut shuffled = group.clone();
        shuffled.shuffle(&mut rng);
        train_idx.extend_from_slice(&shuffled[..need]);
        test_idx.extend_from_slice(&shuffled[need..]);
    }
    let subset = |idx: &[usize]| Dataset {
        samples: idx.iter().map(|&i| dataset.samples[i].clone()).collect(),
        num_classes: dataset.num_classes,
        feature_dim: dataset.feature_dim,
    };
    Ok((subset(&train_idx), subset(&test_idx)))
}

/// Draws a stratified batch: every class appears with at least two
/// samples, per-class counts as equal as possible, the remainder going to
/// uniformly chosen distinct classes. Sampling is without replacement
/// within the batch.
pub fn sample_batch<R: Rng>(
    dataset: &Dataset,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<ClassBatch>> {
    let num_classes = dataset.num_classes;
    if batch_size < 2 * num_classes {
        return Err(Error::BatchTooSmall {
            batch_size,
            num_classes,
        });
    }
    let base = batch_size / num_classes;
    let remainder = batch_size % num_classes;
    let mut counts = vec![base; num_classes];
    if remainder > 0 {
        let mut classes: Vec<usize> = (0..num_classes).collect();
        classes.shuffle(rng);
        for &c in classes.iter().take(remainder) {
            counts[c] += 1;
        }
    }
    let groups = dataset.indices_by_class();
    let mut batches = Vec::with_capacity(num_classes);
    for (class_id, group) in groups.iter().enumerate() {
        let want = counts[class_id];
        if group.len() < want {
            return Err(Error::InsufficientClassSamples {
                class_id,
                have: group.len(),
                need: want,
            });
        }
        let picks = rand::seq::index::sample(rng, group.len(), want);
        let features: Vec<Vec<f64>> = picks
            .iter()
            .map(|i| dataset.samples[group[i]].0.clone())
            .collect();
        batches.push(ClassBatch::new(class_id, features)?);
    }
    Ok(batches)
}

/// Draws `count` samples per class from N_p(mean, cov) via the Cholesky
/// factor of cov + 1e-12 I. Deterministic per seed.
pub fn synth_gaussians(specs: &[GaussianSpec], seed: u64) -> Result<Dataset> {
    if specs.is_empty() {
        return Err(Error::DegenerateBatch {
            reason: "no Gaussian class specs".to_string(),
        });
    }
    let dim = specs[0].mean.len();
    for spec in specs {
        if spec.mean.len() != dim || spec.cov.rows() != dim || spec.cov.cols() != dim {
            return Err(Error::DimensionMismatch {
                context: "Gaussian spec dims",
                expected: dim,
                found: spec.mean.len(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    for (class_id, spec) in specs.iter().enumerate() {
        let factor = linalg::cholesky_factor(&spec.cov.add_ridge(1e-12))?;
        for _ in 0..spec.count {
            let noise: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let mut z = factor.mul_vec(&noise)?;
            for (zi, m) in z.iter_mut().zip(&spec.mean) {
                *zi += m;
            }
            samples.push((z, class_id));
        }
    }
    Ok(Dataset {
        samples,
        num_classes: specs.len(),
        feature_dim: dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_basic() {
        let ds = parse_csv("1.0,2.0,0\n3.0,4.0,1\n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.feature_dim, 2);
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.samples[0], (vec![1.0, 2.0], 0));
    }

    #[test]
    fn csv_header_skipped() {
        let ds = parse_csv("f0,f1,label\r\n1.0,2.0,0\n3.0,4.0,1\n").unwrap();
        assert_eq!(ds.len(), 2);
    }

    #[test]
    fn csv_ragged_row_names_line() {
        let err = parse_csv("1.0,2.0,0\n1.0,2.0,3.0,1\n").unwrap_err();
        match err {
            Error::RaggedRows { line, expected, found } => {
                assert_eq!(line, 2);
                assert_eq!(expected, 2);
                assert_eq!(found, 3);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn csv_empty_file() {
        assert!(matches!(parse_csv(""), Err(Error::EmptyFile)));
        assert!(matches!(parse_csv("f0,f1,label\n"), Err(Error::EmptyFile)));
    }

    #[test]
    fn csv_bad_feature_names_line() {
        let err = parse_csv("1.0,2.0,0\n1.0,x,1\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let ds = parse_csv("0.125,-3.5,0\n1e-7,42.0,1\n").unwrap();
        write_csv(&ds, &path).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(ds.samples, back.samples);
    }

    fn tiny_cube() -> BandCube {
        // 2x2 pixels, 2 bands; pixel (r,c) holds [10r+c, (10r+c)+0.5]
        let mut values = Vec::new();
        for r in 0..2 {
            for c in 0..2 {
                let v = (10 * r + c) as f64;
                values.push(v);
                values.push(v + 0.5);
            }
        }
        BandCube {
            height: 2,
            width: 2,
            bands: 2,
            values,
            labels: vec![1, 0, 2, 1],
        }
    }

    #[test]
    fn cube_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.txt");
        let cube = tiny_cube();
        write_cube(&cube, &path).unwrap();
        let back = load_cube(&path).unwrap();
        assert_eq!(cube.values, back.values);
        assert_eq!(cube.labels, back.labels);
        assert_eq!((back.height, back.width, back.bands), (2, 2, 2));
    }

    #[test]
    fn patches_radius_zero_are_spectra() {
        let ds = extract_patches(&tiny_cube(), 0).unwrap();
        assert_eq!(ds.len(), 3); // three labeled pixels
        assert_eq!(ds.feature_dim, 2);
        assert_eq!(ds.samples[0], (vec![0.0, 0.5], 0));
        assert_eq!(ds.samples[1], (vec![10.0, 10.5], 1));
        assert_eq!(ds.samples[2], (vec![11.0, 11.5], 0));
    }

    #[test]
    fn patches_clamp_replicates_single_pixel() {
        let cube = BandCube {
            height: 1,
            width: 1,
            bands: 3,
            values: vec![7.0, 8.0, 9.0],
            labels: vec![4],
        };
        let ds = extract_patches(&cube, 2).unwrap();
        assert_eq!(ds.feature_dim, 75);
        let expected: Vec<f64> = std::iter::repeat([7.0, 8.0, 9.0])
            .take(25)
            .flatten()
            .collect();
        assert_eq!(ds.samples[0].0, expected);
        assert_eq!(ds.samples[0].1, 3);
    }

    #[test]
    fn patches_need_labels() {
        let cube = BandCube {
            height: 1,
            width: 2,
            bands: 1,
            values: vec![1.0, 2.0],
            labels: vec![0, 0],
        };
        assert!(matches!(extract_patches(&cube, 1), Err(Error::NoLabeledPixels)));
    }

    fn toy_dataset(per_class: usize, classes: usize) -> Dataset {
        let mut samples = Vec::new();
        for c in 0..classes {
            for i in 0..per_class {
                samples.push((vec![c as f64, i as f64], c));
            }
        }
        Dataset {
            samples,
            num_classes: classes,
            feature_dim: 2,
        }
    }

    #[test]
    fn split_partitions_per_class() {
        let ds = toy_dataset(10, 3);
        let (train, test) = stratified_split(&ds, SplitSpec::PerClass(2), 11).unwrap();
        assert_eq!(train.len(), 6);
        assert_eq!(test.len(), 24);
        // disjoint union reconstructs the dataset
        let mut all: Vec<_> = train.samples.iter().chain(&test.samples).cloned().collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut orig = ds.samples.clone();
        orig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(all, orig);
    }

    #[test]
    fn split_fraction_takes_ceil() {
        let ds = toy_dataset(10, 2);
        let (train, _) = stratified_split(&ds, SplitSpec::Fraction(0.25), 3).unwrap();
        // ceil(0.25 * 10) = 3 per class
        assert_eq!(train.len(), 6);
    }

    #[test]
    fn split_is_deterministic() {
        let ds = toy_dataset(10, 3);
        let (a_train, a_test) = stratified_split(&ds, SplitSpec::PerClass(4), 99).unwrap();
        let (b_train, b_test) = stratified_split(&ds, SplitSpec::PerClass(4), 99).unwrap();
        assert_eq!(a_train.samples, b_train.samples);
        assert_eq!(a_test.samples, b_test.samples);
    }

    #[test]
    fn split_rejects_oversized_request() {
        let ds = toy_dataset(5, 2);
        let err = stratified_split(&ds, SplitSpec::PerClass(5), 0).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientClassSamples { have: 5, need: 5, .. }
        ));
    }

    #[test]
    fn batch_counts_divide_evenly() {
        let ds = toy_dataset(10, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch = sample_batch(&ds, 9, &mut rng).unwrap();
        assert_eq!(batch.len(), 3);
        assert!(batch.iter().all(|b| b.count() == 3));
    }

    #[test]
    fn batch_remainder_goes_to_one_class() {
        let ds = toy_dataset(10, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch = sample_batch(&ds, 9, &mut rng).unwrap();
        let mut counts: Vec<usize> = batch.iter().map(|b| b.count()).collect();
        counts.sort_unstable();
        assert_eq!(counts, vec![2, 2, 2, 3]);
    }

    #[test]
    fn batch_always_stratified() {
        let ds = toy_dataset(12, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let size = rng.random_range(6..=12);
            let batch = sample_batch(&ds, size, &mut rng).unwrap();
            assert_eq!(batch.len(), 3);
            assert!(batch.iter().all(|b| b.count() >= 2));
            assert_eq!(batch.iter().map(|b| b.count()).sum::<usize>(), size);
        }
    }

    #[test]
    fn batch_too_small_rejected() {
        let ds = toy_dataset(10, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(matches!(
            sample_batch(&ds, 7, &mut rng),
            Err(Error::BatchTooSmall { batch_size: 7, num_classes: 4 })
        ));
    }

    #[test]
    fn synth_zero_covariance_pins_samples_to_mean() {
        let spec = GaussianSpec {
            mean: vec![3.0, -1.0],
            cov: Matrix::zeros(2, 2),
            count: 50,
        };
        let ds = synth_gaussians(&[spec], 1).unwrap();
        for (f, _) in &ds.samples {
            assert!((f[0] - 3.0).abs() <= 1e-5);
            assert!((f[1] + 1.0).abs() <= 1e-5);
        }
    }

    #[test]
    fn synth_is_deterministic() {
        let specs = vec![GaussianSpec {
            mean: vec![0.0],
            cov: Matrix::identity(1),
            count: 20,
        }];
        let a = synth_gaussians(&specs, 42).unwrap();
        let b = synth_gaussians(&specs, 42).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn synth_moments_converge() {
        let specs = vec![GaussianSpec {
            mean: vec![0.0, 0.0],
            cov: Matrix::identity(2),
            count: 10_000,
        }];
        let ds = synth_gaussians(&specs, 7).unwrap();
        let n = ds.len() as f64;
        let mut mean = [0.0f64; 2];
        for (f, _) in &ds.samples {
            mean[0] += f[0];
            mean[1] += f[1];
        }
        mean[0] /= n;
        mean[1] /= n;
        assert!(mean[0].abs() <= 0.05 && mean[1].abs() <= 0.05);
        let mut cov = [[0.0f64; 2]; 2];
        for (f, _) in &ds.samples {
            for i in 0..2 {
                for j in 0..2 {
                    cov[i][j] += (f[i] - mean[i]) * (f[j] - mean[j]);
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                cov[i][j] /= n - 1.0;
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((cov[i][j] - target).abs() <= 0.1, "cov[{i}][{j}] = {}", cov[i][j]);
            }
        }
    }

    #[test]
    fn synth_rejects_non_psd() {
        let spec = GaussianSpec {
            mean: vec![0.0, 0.0],
            cov: Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]),
            count: 5,
        };
        assert!(matches!(
            synth_gaussians(&[spec], 0),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }
}
