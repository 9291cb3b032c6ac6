//! A small feed-forward classifier with manual backpropagation.
//!
//! The network is a chain of rectified affine layers followed by a linear
//! softmax head. The activation of the last hidden layer is the embedding
//! z fed to the statistical loss; the joint training objective is
//! L_joint = L_s + beta * L with L_s the softmax cross-entropy summed
//! over the batch. The
//! statistical loss reaches the hidden layers through dL/dz only; the head
//! is updated by the cross-entropy gradient alone. Updates are plain SGD.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::class_stats::ClassBatch;
use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::loss::{self, LossConfig};

/// Standard deviation of the Gaussian weight initialization.
const INIT_WEIGHT_STD: f64 = 0.01;

/// One affine layer; weights are out x in.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Full parameter state. `dims` chains input, hidden widths and the class
/// count; the embedding dimension is the second-to-last entry.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub dims: Vec<usize>,
    pub layers: Vec<Layer>,
    pub seed: u64,
    pub iterations: usize,
}

impl NetworkState {
    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn embed_dim(&self) -> usize {
        self.dims[self.dims.len() - 2]
    }

    pub fn num_classes(&self) -> usize {
        *self.dims.last().unwrap()
    }

    fn hidden_count(&self) -> usize {
        self.layers.len() - 1
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Weight of the statistical loss in the joint objective.
    pub beta: f64,
    pub lr: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss_cfg: LossConfig,
    pub hidden_dims: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            lr: 0.001,
            iterations: 2000,
            batch_size: 84,
            seed: 0,
            loss_cfg: LossConfig::default(),
            hidden_dims: vec![32, 16],
        }
    }
}

/// Loss components of one SGD step.
#[derive(Debug, Clone, Copy)]
pub struct StepLosses {
    pub l_joint: f64,
    pub l_s: f64,
    pub l_stat: f64,
}

/// One row of the training curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    pub iteration: usize,
    pub l_joint: f64,
    pub l_s: f64,
    pub l_stat: f64,
}

/// Initializes weights from N(0, 0.01^2) via the seeded generator; biases
/// start at zero. The same seed yields a bitwise-identical state.
pub fn init_network(dims: &[usize], seed: u64) -> Result<NetworkState> {
    if dims.len() < 2 {
        return Err(Error::InvalidDims {
            reason: format!("need at least input and output dims, got {dims:?}"),
        });
    }
    if dims.contains(&0) {
        return Err(Error::InvalidDims {
            reason: format!("all dims must be at least 1, got {dims:?}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_WEIGHT_STD).expect("valid std");
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for pair in dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let mut weights = Matrix::zeros(fan_out, fan_in);
        for r in 0..fan_out {
            for c in 0..fan_in {
                weights.set(r, c, normal.sample(&mut rng));
            }
        }
        layers.push(Layer {
            weights,
            bias: vec![0.0; fan_out],
        });
    }
    Ok(NetworkState {
        dims: dims.to_vec(),
        layers,
        seed,
        iterations: 0,
    })
}

/// Builds the dims chain input -> hidden_dims -> num_classes and
/// initializes from the config seed.
pub fn init_from_config(input_dim: usize, num_classes: usize, cfg: &TrainConfig) -> Result<NetworkState> {
    let mut dims = Vec::with_capacity(cfg.hidden_dims.len() + 2);
    dims.push(input_dim);
    dims.extend_from_slice(&cfg.hidden_dims);
    dims.push(num_classes);
    init_network(&dims, cfg.seed)
}

struct ForwardTrace {
    /// Post-activation values per layer boundary; `acts[0]` is the input
    /// and the last entry is the embedding z.
    acts: Vec<Vec<f64>>,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

fn forward_trace(net: &NetworkState, x: &[f64]) -> Result<ForwardTrace> {
    if x.len() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "network input",
            expected: net.input_dim(),
            found: x.len(),
        });
    }
    let mut acts = Vec::with_capacity(net.hidden_count() + 1);
    acts.push(x.to_vec());
    for layer in &net.layers[..net.hidden_count()] {
        let mut a = layer.weights.mul_vec(acts.last().unwrap())?;
        for (v, b) in a.iter_mut().zip(&layer.bias) {
            *v = (*v + b).max(0.0);
        }
        acts.push(a);
    }
    let head = net.layers.last().unwrap();
    let mut logits = head.weights.mul_vec(acts.last().unwrap())?;
    for (v, b) in logits.iter_mut().zip(&head.bias) {
        *v += b;
    }
    let probs = softmax(&logits);
    Ok(ForwardTrace { acts, logits, probs })
}

/// Embedding, logits and softmax probabilities for one input.
pub fn forward(net: &NetworkState, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let trace = forward_trace(net, x)?;
    let z = trace.acts.last().unwrap().clone();
    Ok((z, trace.logits, trace.probs))
}

/// Predicted class: argmax over logits.
pub fn predict(net: &NetworkState, x: &[f64]) -> Result<usize> {
    let (_, logits, _) = forward(net, x)?;
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Max-logit-stabilized softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Cross-entropy of one sample: loss = -ln probs[label], gradient
/// w.r.t. logits = probs - onehot(label).
pub fn softmax_ce(probs: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= probs.len() {
        return Err(Error::InvalidLabel {
            label,
            num_classes: probs.len(),
        });
    }
    let loss = -probs[label].ln();
    let mut dlogits = probs.to_vec();
    dlogits[label] -= 1.0;
    Ok((loss, dlogits))
}

fn validate_batch(net: &NetworkState, batch: &[ClassBatch]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::DegenerateBatch {
            reason: "empty batch".to_string(),
        });
    }
    for cb in batch {
        if cb.class_id >= net.num_classes() {
            return Err(Error::InvalidLabel {
                label: cb.class_id,
                num_classes: net.num_classes(),
            });
        }
        if cb.dim() != net.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "batch feature dim",
                expected: net.input_dim(),
                found: cb.dim(),
            });
        }
        if cb.count() < 2 {
            return Err(Error::DegenerateBatch {
                reason: format!("class {} has {} sample(s) in the batch", cb.class_id, cb.count()),
            });
        }
    }
    Ok(())
}

/// Joint loss of a batch without touching parameters.
pub fn joint_loss(net: &NetworkState, batch: &[ClassBatch], cfg: &TrainConfig) -> Result<StepLosses> {
    validate_batch(net, batch)?;
    let mut l_s = 0.0;
    let mut z_batches = Vec::with_capacity(batch.len());
    for cb in batch {
        let mut feats = Vec::with_capacity(cb.count());
        for x in &cb.features {
            let trace = forward_trace(net, x)?;
            let (loss, _) = softmax_ce(&trace.probs, cb.class_id)?;
            l_s += loss;
            feats.push(trace.acts.last().unwrap().clone());
        }
        z_batches.push(ClassBatch::new(cb.class_id, feats)?);
    }
    let stat = loss::loss_values(&z_batches, &cfg.loss_cfg)?;
    Ok(StepLosses {
        l_joint: l_s + cfg.beta * stat.total,
        l_s,
        l_stat: stat.total,
    })
}

/// One SGD step over a stratified batch.
///
/// Backpropagates the summed cross-entropy through the head and
/// dL_s/dz + beta * dL/dz through the hidden layers; the head parameters
/// receive only the cross-entropy gradient. With beta = 0 the update is
/// bitwise identical to a softmax-only step.
pub fn train_step(net: &mut NetworkState, batch: &[ClassBatch], cfg: &TrainConfig) -> Result<StepLosses> {
    validate_batch(net, batch)?;

    // forward pass for every sample, embeddings grouped per class
    let mut traces: Vec<Vec<ForwardTrace>> = Vec::with_capacity(batch.len());
    let mut z_batches = Vec::with_capacity(batch.len());
    let mut l_s = 0.0;
    for cb in batch {
        let mut class_traces = Vec::with_capacity(cb.count());
        let mut feats = Vec::with_capacity(cb.count());
        for x in &cb.features {
            let trace = forward_trace(net, x)?;
            let (loss, _) = softmax_ce(&trace.probs, cb.class_id)?;
            l_s += loss;
            feats.push(trace.acts.last().unwrap().clone());
            class_traces.push(trace);
        }
        traces.push(class_traces);
        z_batches.push(ClassBatch::new(cb.class_id, feats)?);
    }

    let stat = loss::loss_total(&z_batches, &cfg.loss_cfg)?;
    let l_joint = l_s + cfg.beta * stat.total;

    // gradient accumulators per layer
    let mut grad_w: Vec<Matrix> = net
        .layers
        .iter()
        .map(|l| Matrix::zeros(l.weights.rows(), l.weights.cols()))
        .collect();
    let mut grad_b: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect();

    let head_idx = net.layers.len() - 1;
    for (b, cb) in batch.iter().enumerate() {
        for (i, trace) in traces[b].iter().enumerate() {
            // summed cross-entropy: dL_s/dlogits = probs - onehot
            let mut dlogits = trace.probs.clone();
            dlogits[cb.class_id] -= 1.0;

            let z = trace.acts.last().unwrap();
            for r in 0..dlogits.len() {
                grad_b[head_idx][r] += dlogits[r];
                for c in 0..z.len() {
                    grad_w[head_idx].add_at(r, c, dlogits[r] * z[c]);
                }
            }

            // dL_joint/dz: cross-entropy through the head plus the
            // statistical-loss gradient (skipped entirely at beta = 0)
            let head = &net.layers[head_idx];
            let mut dz = vec![0.0; z.len()];
            for r in 0..dlogits.len() {
                for c in 0..z.len() {
                    dz[c] += head.weights.get(r, c) * dlogits[r];
                }
            }
            if cfg.beta != 0.0 {
                for (d, g) in dz.iter_mut().zip(&stat.grads[b][i]) {
                    *d += cfg.beta * g;
                }
            }

            // hidden layers, embedding downwards
            let mut upstream = dz;
            for j in (0..net.hidden_count()).rev() {
                let out_act = &trace.acts[j + 1];
                let in_act = &trace.acts[j];
                let mut delta = upstream;
                for (d, a) in delta.iter_mut().zip(out_act) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
                for r in 0..delta.len() {
                    if delta[r] == 0.0 {
                        continue;
                    }
                    grad_b[j][r] += delta[r];
                    for c in 0..in_act.len() {
                        grad_w[j].add_at(r, c, delta[r] * in_act[c]);
                    }
                }
                let mut down = vec![0.0; in_act.len()];
                for r in 0..delta.len() {
                    if delta[r] == 0.0 {
                        continue;
                    }
                    for c in 0..in_act.len() {
                        down[c] += net.layers[j].weights.get(r, c) * delta[r];
                    }
                }
                upstream = down;
            }
        }
    }

    for (layer, (gw, gb)) in net.layers.iter_mut().zip(grad_w.iter().zip(&grad_b)) {
        for r in 0..layer.weights.rows() {
            for c in 0..layer.weights.cols() {
                layer.weights.add_at(r, c, -cfg.lr * gw.get(r, c));
            }
        }
        for (b, g) in layer.bias.iter_mut().zip(gb) {
            *b -= cfg.lr * g;
        }
    }

    Ok(StepLosses {
        l_joint,
        l_s,
        l_stat: stat.total,
    })
}

/// Runs `cfg.iterations` SGD steps over freshly sampled stratified
/// batches. Deterministic given the seed.
pub fn train(net: &mut NetworkState, dataset: &Dataset, cfg: &TrainConfig) -> Result<Vec<TrainRecord>> {
    if dataset.feature_dim != net.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "dataset feature dim vs network input",
            expected: net.input_dim(),
            found: dataset.feature_dim,
        });
    }
    if dataset.num_classes > net.num_classes() {
        return Err(Error::InvalidLabel {
            label: dataset.num_classes - 1,
            num_classes: net.num_classes(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut curve = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let batch = data::sample_batch(dataset, cfg.batch_size, &mut rng)?;
        let losses = train_step(net, &batch, cfg)?;
        curve.push(TrainRecord {
            iteration: it,
            l_joint: losses.l_joint,
            l_s: losses.l_s,
            l_stat: losses.l_stat,
        });
    }
    net.iterations += cfg.iterations;
    Ok(curve)
}

/// Writes the plain-text checkpoint:
///
/// ```text
/// statloss-checkpoint v1
/// seed <u64>
/// iterations <count>
/// dims <d0> <d1> ... <dn>
/// layer <index> <out> <in>
/// <out rows of in weights>
/// bias <out values>
/// ...
/// ```
///
/// Floats use the shortest round-trip decimal form, so a load reproduces
/// the parameters bit for bit.
pub fn save_checkpoint(net: &NetworkState, path: &Path) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "statloss-checkpoint v1").unwrap();
    writeln!(out, "seed {}", net.seed).unwrap();
    writeln!(out, "iterations {}", net.iterations).unwrap();
    let dims: Vec<String> = net.dims.iter().map(|d| d.to_string()).collect();
    writeln!(out, "dims {}", dims.join(" ")).unwrap();
    for (idx, layer) in net.layers.iter().enumerate() {
        let (rows, cols) = (layer.weights.rows(), layer.weights.cols());
        writeln!(out, "layer {idx} {rows} {cols}").unwrap();
        for r in 0..rows {
            let row: Vec<String> = (0..cols).map(|c| layer.weights.get(r, c).to_string()).collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
        let bias: Vec<String> = layer.bias.iter().map(|b| b.to_string()).collect();
        writeln!(out, "bias {}", bias.join(" ")).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkState> {
    let text = std::fs::read_to_string(path)?;
    let fail = |message: String| Error::Checkpoint { message };
    let mut lines = text.lines();
    let magic = lines.next().ok_or_else(|| fail("empty file".into()))?;
    if magic.trim() != "statloss-checkpoint v1" {
        return Err(fail(format!("unsupported header {magic:?}")));
    }
    let mut field = |name: &str| -> Result<Vec<String>> {
        let line = lines
            .next()
            .ok_or_else(|| fail(format!("missing {name} line")))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(name) {
            return Err(fail(format!("expected {name} line, found {line:?}")));
        }
        Ok(parts.map(str::to_string).collect())
    };
    let seed: u64 = parse_one(&field("seed")?, "seed")?;
    let iterations: usize = parse_one(&field("iterations")?, "iterations")?;
    let dims: Vec<usize> = field("dims")?
        .iter()
        .map(|t| t.parse().map_err(|e| fail(format!("bad dim {t:?}: {e}"))))
        .collect::<Result<_>>()?;
    if dims.len() < 2 {
        return Err(fail(format!("dims chain too short: {dims:?}")));
    }
    let mut layers = Vec::with_capacity(dims.len() - 1);
    let mut rest = lines;
    for idx in 0..dims.len() - 1 {
        let header = rest
            .next()
            .ok_or_else(|| fail(format!("missing layer {idx}")))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "layer" {
            return Err(fail(format!("bad layer header {header:?}")));
        }
        let rows: usize = parts[2].parse().map_err(|e| fail(format!("bad rows: {e}")))?;
        let cols: usize = parts[3].parse().map_err(|e| fail(format!("bad cols: {e}")))?;
        if rows != dims[idx + 1] || cols != dims[idx] {
            return Err(fail(format!(
                "layer {idx} is {rows}x{cols} but dims imply {}x{}",
                dims[idx + 1],
                dims[idx]
            )));
        }
        let mut weights = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let line = rest
                .next()
                .ok_or_else(|| fail(format!("missing weight row {r} of layer {idx}")))?;
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() != cols {
                return Err(fail(format!(
                    "layer {idx} row {r} has {} values, expected {cols}",
                    vals.len()
                )));
            }
            for (c, t) in vals.iter().enumerate() {
                weights.set(r, c, t.parse().map_err(|e| fail(format!("bad weight {t:?}: {e}")))?);
            }
        }
        let bias_line = rest
            .next()
            .ok_or_else(|| fail(format!("missing bias of layer {idx}")))?;
        let mut parts = bias_line.split_whitespace();
        if parts.next() != Some("bias") {
            return Err(fail(format!("expected bias line, found {bias_line:?}")));
        }
        let bias: Vec<f64> = parts
            .map(|t| t.parse().map_err(|e| fail(format!("bad bias {t:?}: {e}"))))
            .collect::<Result<_>>()?;
        if bias.len() != rows {
            return Err(fail(format!(
                "layer {idx} bias has {} values, expected {rows}",
                bias.len()
            )));
        }
        layers.push(Layer { weights, bias });
    }
    Ok(NetworkState {
        dims,
        layers,
        seed,
        iterations,
    })
}

fn parse_one<T: std::str::FromStr>(fields: &[String], name: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    if fields.len() != 1 {
        return Err(Error::Checkpoint {
            message: format!("{name} line needs exactly one value"),
        });
    }
    fields[0].parse().map_err(|e| Error::Checkpoint {
        message: format!("bad {name}: {e}"),
    })
}
