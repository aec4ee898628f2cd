use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{network_input, sample_loss, LossParts, Network, NetworkOutput, Targets};
use crate::design::{seeded_rng, Sample, StructureSpec};
use crate::error::{Error, Result};
use crate::net::AdamState;

/// Samples per gradient work unit. Fixed so the floating-point reduction
/// order, and therefore the result, does not depend on the thread count.
const CHUNK: usize = 4;

/// A prepared training example: network input tensor plus targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainItem {
    pub input: Vec<f64>,
    pub targets: Targets,
}

impl TrainItem {
    pub fn from_sample(sample: &Sample, net: &Network, spec: &StructureSpec) -> Result<Self> {
        Ok(Self {
            input: network_input(net.config(), &sample.map)?,
            targets: Targets::from_structure(&sample.structure, spec)?,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Selects the shuffle for this epoch.
    pub epoch: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpochMetrics {
    pub mean_loss: f64,
    pub mean_thickness_loss: f64,
    pub mean_type_surrogate: f64,
    pub mean_type_error: f64,
}

impl EpochMetrics {
    fn accumulate(&mut self, p: &LossParts) {
        self.mean_loss += p.total;
        self.mean_thickness_loss += p.thickness;
        self.mean_type_surrogate += p.type_surrogate;
        self.mean_type_error += p.type_error;
    }

    fn scale(&mut self, k: f64) {
        self.mean_loss *= k;
        self.mean_thickness_loss *= k;
        self.mean_type_surrogate *= k;
        self.mean_type_error *= k;
    }

    pub fn is_finite(&self) -> bool {
        [self.mean_loss, self.mean_thickness_loss, self.mean_type_surrogate, self.mean_type_error]
            .iter()
            .all(|v| v.is_finite())
    }
}

fn chunk_gradient(net: &Network, items: &[&TrainItem]) -> Result<(Vec<f64>, EpochMetrics)> {
    let mut grads = vec![0.0; net.num_params()];
    let mut m = EpochMetrics::default();
    let w = net.config().type_weight;
    for it in items {
        let (out, cache) = net.forward_input(it.input.clone())?;
        let (parts, adj) = sample_loss(&out, &it.targets, w)?;
        net.backward(&cache, &adj, &mut grads)?;
        m.accumulate(&parts);
    }
    Ok((grads, m))
}

/// Summed gradient and loss over `items`, in fixed chunk order.
pub(crate) fn batch_gradient(net: &Network, items: &[&TrainItem]) -> Result<(Vec<f64>, EpochMetrics)> {
    let parts: Vec<_> = items
        .par_chunks(CHUNK)
        .map(|c| chunk_gradient(net, c))
        .collect::<Result<_>>()?;
    let mut grads = vec![0.0; net.num_params()];
    let mut m = EpochMetrics::default();
    for (g, pm) in parts {
        grads.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        m.mean_loss += pm.mean_loss;
        m.mean_thickness_loss += pm.mean_thickness_loss;
        m.mean_type_surrogate += pm.mean_type_surrogate;
        m.mean_type_error += pm.mean_type_error;
    }
    Ok((grads, m))
}

/// One shuffled pass with an Adam update per mini-batch (mean gradient).
/// Reported losses are those seen by each batch before its update.
pub fn train_epoch(
    net: &mut Network,
    state: &mut AdamState,
    items: &[TrainItem],
    opts: &TrainOptions,
) -> Result<EpochMetrics> {
    if items.is_empty() {
        return Err(Error::domain("training set is empty"));
    }
    if opts.batch_size == 0 {
        return Err(Error::domain("batch size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut seeded_rng(opts.seed, 0x5348_0000_0000 + opts.epoch as u64));

    let mut total = EpochMetrics::default();
    for batch in order.chunks(opts.batch_size) {
        let refs: Vec<&TrainItem> = batch.iter().map(|&i| &items[i]).collect();
        let (grads, m) = batch_gradient(net, &refs)?;
        let k = 1.0 / batch.len() as f64;
        net.params.grads = grads.into_iter().map(|g| g * k).collect();
        net.apply_adam(state, opts.learning_rate)?;
        total.mean_loss += m.mean_loss;
        total.mean_thickness_loss += m.mean_thickness_loss;
        total.mean_type_surrogate += m.mean_type_surrogate;
        total.mean_type_error += m.mean_type_error;
    }
    total.scale(1.0 / items.len() as f64);
    if !total.is_finite() {
        return Err(Error::NonFinite("epoch loss".into()));
    }
    Ok(total)
}

/// Forward pass over all items (parallel, order preserved).
pub fn predict_items(net: &Network, inputs: &[Vec<f64>]) -> Result<Vec<NetworkOutput>> {
    inputs.par_iter().map(|x| net.predict_input(x.clone())).collect()
}
