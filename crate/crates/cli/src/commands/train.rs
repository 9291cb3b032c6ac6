//! `train`: fit the classifier on a CSV dataset, writing the checkpoint,
//! the per-iteration loss log, and train/test metric reports.

use std::fmt::Write as _;
use std::path::Path;

use statloss::data::{self, Dataset};
use statloss::metrics::{self, MetricsReport};
use statloss::model::{self, NetworkState};

use crate::config::Resolved;
use crate::CliError;

pub fn run(cfg: &Resolved) -> Result<(), CliError> {
    let train_path = cfg.train_data.clone().ok_or_else(|| {
        CliError::Config("train needs train_data (config key or --train-data)".to_string())
    })?;
    let train_set = data::load_csv(&train_path)?;
    let test_set = match &cfg.test_data {
        Some(path) => Some(data::load_csv(path)?),
        None => None,
    };

    let train_cfg = cfg.train_cfg();
    let mut net = model::init_from_config(train_set.feature_dim, train_set.num_classes, &train_cfg)?;
    let curve = model::train(&mut net, &train_set, &train_cfg)?;

    std::fs::create_dir_all(&cfg.out_dir).map_err(statloss::Error::Io)?;

    let mut log = String::from("iteration,l_joint,l_s,l_stat\n");
    for record in &curve {
        writeln!(
            log,
            "{},{},{},{}",
            record.iteration, record.l_joint, record.l_s, record.l_stat
        )
        .unwrap();
    }
    let log_path = cfg.out_dir.join("loss_log.csv");
    std::fs::write(&log_path, log).map_err(statloss::Error::Io)?;

    let ckpt_path = cfg.out_dir.join("checkpoint.txt");
    model::save_checkpoint(&net, &ckpt_path)?;

    let train_report = evaluate_split(&net, &train_set)?;
    write_report(&train_report, &cfg.out_dir.join("metrics_train"))?;
    println!(
        "train: {} iterations, final l_joint {:.6}, train oa {:.4}",
        curve.len(),
        curve.last().map(|r| r.l_joint).unwrap_or(f64::NAN),
        train_report.oa
    );
    if let Some(test_set) = &test_set {
        let test_report = evaluate_split(&net, test_set)?;
        write_report(&test_report, &cfg.out_dir.join("metrics_test"))?;
        println!("train: test oa {:.4}", test_report.oa);
    }
    println!(
        "train: wrote {}, {}",
        ckpt_path.display(),
        log_path.display()
    );
    Ok(())
}

pub fn evaluate_split(net: &NetworkState, dataset: &Dataset) -> Result<MetricsReport, CliError> {
    let mut truths = Vec::with_capacity(dataset.len());
    let mut preds = Vec::with_capacity(dataset.len());
    for (x, y) in &dataset.samples {
        truths.push(*y);
        preds.push(model::predict(net, x)?);
    }
    let cm = metrics::confusion(&truths, &preds, net.num_classes())?;
    let m = metrics::metrics(&cm)?;
    Ok(MetricsReport::new(&cm, &m, None))
}

pub fn write_report(report: &MetricsReport, stem: &Path) -> Result<(), CliError> {
    let txt = stem.with_extension("txt");
    let json = stem.with_extension("json");
    std::fs::write(&txt, report.to_text()).map_err(statloss::Error::Io)?;
    std::fs::write(&json, report.to_json()).map_err(statloss::Error::Io)?;
    Ok(())
}
