//! `synth`: draw the configured Gaussian classes and write train/test
//! CSVs plus a manifest echoing the spec, the seed, and the pairwise
//! distances between class means.

use serde::Serialize;

use statloss::data::{self, Dataset};

use crate::config::Resolved;
use crate::CliError;

#[derive(Serialize)]
struct Manifest {
    seed: u64,
    classes: Vec<ManifestClass>,
    pairwise_mean_distance: Vec<PairDistance>,
}

#[derive(Serialize)]
struct ManifestClass {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
    train_count: usize,
    test_count: usize,
}

#[derive(Serialize)]
struct PairDistance {
    class_a: usize,
    class_b: usize,
    distance: f64,
}

pub fn run(cfg: &Resolved) -> Result<(), CliError> {
    if cfg.synth_classes.is_empty() {
        return Err(CliError::Config(
            "synth needs at least one [[synth_class]] in the config".to_string(),
        ));
    }
    let mut specs = Vec::new();
    for class in &cfg.synth_classes {
        let spec = class
            .to_spec(class.train_count + class.test_count)
            .map_err(CliError::Config)?;
        specs.push(spec);
    }
    let full = data::synth_gaussians(&specs, cfg.seed)?;

    // samples are generated class by class: the first train_count go to
    // the train set, the rest to the test set
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut offset = 0;
    for class in &cfg.synth_classes {
        let total = class.train_count + class.test_count;
        let block = &full.samples[offset..offset + total];
        train.extend_from_slice(&block[..class.train_count]);
        test.extend_from_slice(&block[class.train_count..]);
        offset += total;
    }
    let subset = |samples: Vec<(Vec<f64>, usize)>| Dataset {
        samples,
        num_classes: full.num_classes,
        feature_dim: full.feature_dim,
    };

    std::fs::create_dir_all(&cfg.out_dir).map_err(statloss::Error::Io)?;
    let train_path = cfg.out_dir.join("train.csv");
    let test_path = cfg.out_dir.join("test.csv");
    data::write_csv(&subset(train), &train_path)?;
    data::write_csv(&subset(test), &test_path)?;

    let mut distances = Vec::new();
    for a in 0..specs.len() {
        for b in (a + 1)..specs.len() {
            let d2: f64 = specs[a]
                .mean
                .iter()
                .zip(&specs[b].mean)
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            distances.push(PairDistance {
                class_a: a,
                class_b: b,
                distance: d2.sqrt(),
            });
        }
    }
    let manifest = Manifest {
        seed: cfg.seed,
        classes: cfg
            .synth_classes
            .iter()
            .zip(&specs)
            .map(|(class, spec)| ManifestClass {
                mean: class.mean.clone(),
                cov: (0..spec.cov.rows())
                    .map(|i| (0..spec.cov.cols()).map(|j| spec.cov.get(i, j)).collect())
                    .collect(),
                train_count: class.train_count,
                test_count: class.test_count,
            })
            .collect(),
        pairwise_mean_distance: distances,
    };
    let manifest_path = cfg.out_dir.join("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(statloss::Error::Io)?;

    println!(
        "synth: wrote {}, {}, {}",
        train_path.display(),
        test_path.display(),
        manifest_path.display()
    );
    Ok(())
}
