use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{softmax_in_place, Network};
use super::optim::sgd_step;
use super::tensor::Tensor;
use crate::data::Dataset;
use crate::ensemble::ScoreMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { batch_size: 30, learning_rate: 1e-4, epochs: 30, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config(format!("bad learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Mean training loss (penalties included) of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains without augmentation.
pub fn train(net: &mut Network, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    train_with(net, data, cfg, |_, _| {})
}

/// Mini-batch SGD. Each epoch shuffles the samples, and `transform` may
/// modify every sample copy before it enters a batch. Shuffling and the
/// transform draw from one stream seeded by `cfg.seed`.
pub fn train_with<F>(
    net: &mut Network,
    data: &Dataset,
    cfg: &TrainConfig,
    mut transform: F,
) -> Result<TrainReport>
where
    F: FnMut(&mut [f64], &mut ChaCha8Rng),
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::config("cannot train on an empty dataset"));
    }
    if data.sample_shape() != net.spec().input {
        return Err(Error::config(format!(
            "dataset samples have shape {:?}, network expects {:?}",
            data.sample_shape(),
            net.spec().input
        )));
    }
    if data.classes() > net.classes() {
        return Err(Error::config(format!(
            "dataset has {} classes, network outputs {}",
            data.classes(),
            net.classes()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let per = data.sample_len();
    let [c, h, w] = data.sample_shape();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut buf = Vec::with_capacity(chunk.len() * per);
            for &i in chunk {
                let start = buf.len();
                buf.extend_from_slice(data.sample(i));
                transform(&mut buf[start..], &mut rng);
            }
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels()[i]).collect();
            let batch = Tensor::new(vec![chunk.len(), c, h, w], buf)?;
            let loss = match net.loss_and_backward(&batch, &labels) {
                Err(Error::Diverged { loss, .. }) => {
                    return Err(Error::Diverged { epoch, batch: bi, loss })
                }
                other => other?,
            };
            sgd_step(net.param_groups_mut(), cfg.learning_rate);
            if net.param_groups().iter().any(|g| g.values.iter().any(|v| !v.is_finite())) {
                return Err(Error::Diverged { epoch, batch: bi, loss: f64::NAN });
            }
            total += loss * chunk.len() as f64;
        }
        report.epoch_losses.push(total / data.len() as f64);
    }
    Ok(report)
}

/// Row-wise softmax of a `(rows, classes)` logit matrix.
pub fn softmax_rows(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out, classes);
    out
}

/// Softmax class probabilities for every sample, in dataset order.
pub fn predict_scores(net: &Network, data: &Dataset, model_id: &str) -> Result<ScoreMatrix> {
    if data.sample_shape() != net.spec().input {
        return Err(Error::config(format!(
            "dataset samples have shape {:?}, network expects {:?}",
            data.sample_shape(),
            net.spec().input
        )));
    }
    let classes = net.classes();
    let [c, h, w] = data.sample_shape();
    let per = data.sample_len();
    let mut scores = Vec::with_capacity(data.len() * classes);
    const CHUNK: usize = 64;
    let mut start = 0;
    while start < data.len() {
        let end = (start + CHUNK).min(data.len());
        let batch = Tensor::new(
            vec![end - start, c, h, w],
            data.features()[start * per..end * per].to_vec(),
        )?;
        let (logits, _) = net.forward(&batch)?;
        scores.extend(softmax_rows(logits.data(), classes));
        start = end;
    }
    ScoreMatrix::new(model_id, classes, scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::{ActivationFamily, ActivationKind};
    use crate::nn::NetworkSpec;

    #[test]
    fn softmax_closed_forms() {
        assert_eq!(softmax_rows(&[0.0, 0.0], 2), vec![0.5, 0.5]);
        let p = softmax_rows(&[2f64.ln(), 0.0], 2);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        let p = softmax_rows(&[1000.0, -1000.0, 3.0], 3);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    fn toy() -> Dataset {
        Dataset::new([2, 1, 1], vec![0.0, 1.0, 1.0, 0.0, 0.2, 0.9, 0.8, 0.1], vec![0, 1, 0, 1], 2)
            .unwrap()
    }

    #[test]
    fn zero_epochs_is_identity() {
        let spec = NetworkSpec::mlp([2, 1, 1], &[4], 2);
        let fam = ActivationFamily::new(ActivationKind::Relu, 1.0);
        let mut net = Network::new(spec.clone(), fam.clone(), 3).unwrap();
        let init = Network::new(spec, fam, 3).unwrap();
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        assert!(train(&mut net, &toy(), &cfg).unwrap().epoch_losses.is_empty());
        assert_eq!(net.param_groups(), init.param_groups());
    }

    #[test]
    fn rejects_bad_inputs() {
        let spec = NetworkSpec::mlp([3, 1, 1], &[4], 2);
        let mut net =
            Network::new(spec, ActivationFamily::new(ActivationKind::Relu, 1.0), 3).unwrap();
        assert!(train(&mut net, &toy(), &TrainConfig::default()).is_err());
        let cfg = TrainConfig { batch_size: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn divergence_reports_position() {
        let spec = NetworkSpec::mlp([2, 1, 1], &[4], 2);
        let mut net =
            Network::new(spec, ActivationFamily::new(ActivationKind::Relu, 1.0), 3).unwrap();
        let big = Dataset::new([2, 1, 1], vec![1e300, 1e300, -1e300, 1e300], vec![0, 1], 2).unwrap();
        let cfg = TrainConfig { learning_rate: 1e10, batch_size: 1, ..Default::default() };
        match train(&mut net, &big, &cfg) {
            Err(Error::Diverged { epoch, .. }) => assert_eq!(epoch, 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
