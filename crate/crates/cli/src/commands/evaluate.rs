//! `eval`: score a checkpoint on a labeled dataset; with a baseline
//! checkpoint, also report McNemar's paired statistic between the two.

use std::path::{Path, PathBuf};

use statloss::data::{self, Dataset};
use statloss::metrics::{self, MetricsReport};
use statloss::model::{self, NetworkState};

use crate::commands::train::write_report;
use crate::config::Resolved;
use crate::CliError;

pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub baseline: Option<PathBuf>,
    pub data: Option<PathBuf>,
}

fn check_compatible(net: &NetworkState, dataset: &Dataset, name: &Path) -> Result<(), CliError> {
    if dataset.feature_dim != net.input_dim() {
        return Err(CliError::Config(format!(
            "checkpoint {} expects {}-dim features but the dataset has {} dims",
            name.display(),
            net.input_dim(),
            dataset.feature_dim
        )));
    }
    if dataset.num_classes > net.num_classes() {
        return Err(CliError::Config(format!(
            "checkpoint {} has {} classes but the dataset labels reach {}",
            name.display(),
            net.num_classes(),
            dataset.num_classes - 1
        )));
    }
    Ok(())
}

fn correctness(net: &NetworkState, dataset: &Dataset) -> Result<(Vec<usize>, Vec<bool>), CliError> {
    let mut preds = Vec::with_capacity(dataset.len());
    let mut correct = Vec::with_capacity(dataset.len());
    for (x, y) in &dataset.samples {
        let p = model::predict(net, x)?;
        preds.push(p);
        correct.push(p == *y);
    }
    Ok((preds, correct))
}

pub fn run(cfg: &Resolved, args: &EvalArgs) -> Result<(), CliError> {
    let data_path = args
        .data
        .clone()
        .or_else(|| cfg.test_data.clone())
        .ok_or_else(|| CliError::Config("eval needs a dataset (--data or test_data)".to_string()))?;
    let dataset = data::load_csv(&data_path)?;
    let net = model::load_checkpoint(&args.checkpoint)?;
    check_compatible(&net, &dataset, &args.checkpoint)?;

    let truths: Vec<usize> = dataset.samples.iter().map(|(_, y)| *y).collect();
    let (preds, correct) = correctness(&net, &dataset)?;

    let mcnemar_f = match &args.baseline {
        Some(path) => {
            let baseline = model::load_checkpoint(path)?;
            check_compatible(&baseline, &dataset, path)?;
            let (_, base_correct) = correctness(&baseline, &dataset)?;
            Some(metrics::mcnemar(&correct, &base_correct)?)
        }
        None => None,
    };

    let cm = metrics::confusion(&truths, &preds, net.num_classes())?;
    let m = metrics::metrics(&cm)?;
    let report = MetricsReport::new(&cm, &m, mcnemar_f);

    std::fs::create_dir_all(&cfg.out_dir).map_err(statloss::Error::Io)?;
    write_report(&report, &cfg.out_dir.join("metrics_eval"))?;
    print!("{}", report.to_text());
    Ok(())
}
