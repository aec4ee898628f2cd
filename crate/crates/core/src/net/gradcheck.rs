use rand::seq::index::sample;

use super::{sample_loss, Network, TrainItem};
use crate::design::seeded_rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradEntry {
    pub index: usize,
    pub tensor: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Worst entries first (at most ten).
    pub worst: Vec<GradEntry>,
}

impl GradCheckReport {
    pub fn ensure(&self, tol: f64) -> Result<()> {
        if self.max_rel_error <= tol {
            return Ok(());
        }
        let lines: Vec<String> = self
            .worst
            .iter()
            .filter(|e| e.rel_error > tol)
            .map(|e| {
                format!(
                    "{}[{}]: analytic {:.6e}, central difference {:.6e}, rel {:.2e}",
                    e.tensor, e.index, e.analytic, e.numeric, e.rel_error
                )
            })
            .collect();
        Err(Error::Contract(format!(
            "gradient check failed: max relative error {:.3e} > {tol:.1e}\n  {}",
            self.max_rel_error,
            lines.join("\n  ")
        )))
    }
}

/// At least one index from every tensor (while `count` allows), the rest
/// drawn uniformly without replacement from the whole vector.
pub fn grad_check_indices(net: &Network, count: usize, seed: u64) -> Vec<usize> {
    let n = net.num_params();
    let count = count.min(n);
    let mut rng = seeded_rng(seed, 0x6763);
    let mut picked: Vec<usize> = net
        .params
        .layout
        .iter()
        .take(count)
        .map(|t| t.offset + sample(&mut rng, t.len, 1).index(0))
        .collect();
    let mut seen: std::collections::BTreeSet<usize> = picked.iter().copied().collect();
    for i in sample(&mut rng, n, n.min(count * 4)) {
        if picked.len() >= count {
            break;
        }
        if seen.insert(i) {
            picked.push(i);
        }
    }
    picked
}

/// Compares the reverse-pass gradient of the training loss on one item with
/// central differences of step `h`, for `count` parameters.
pub fn grad_check(net: &Network, item: &TrainItem, h: f64, count: usize, seed: u64) -> Result<GradCheckReport> {
    let w = net.config().type_weight;
    let loss = |n: &Network| -> Result<f64> {
        let out = n.predict_input(item.input.clone())?;
        Ok(sample_loss(&out, &item.targets, w)?.0.total)
    };
    let (out, cache) = net.forward_input(item.input.clone())?;
    let (_, adj) = sample_loss(&out, &item.targets, w)?;
    let mut analytic = vec![0.0; net.num_params()];
    net.backward(&cache, &adj, &mut analytic)?;

    let mut probe = net.clone();
    let mut entries = Vec::new();
    for i in grad_check_indices(net, count, seed) {
        let orig = probe.params.values[i];
        probe.params.values[i] = orig + h;
        let up = loss(&probe)?;
        probe.params.values[i] = orig - h;
        let down = loss(&probe)?;
        probe.params.values[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let rel_error = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        let tensor = net
            .params
            .layout
            .iter()
            .find(|t| i >= t.offset && i < t.offset + t.len)
            .map_or_else(String::new, |t| t.name.clone());
        entries.push(GradEntry {
            index: i,
            tensor,
            analytic: a,
            numeric,
            rel_error,
        });
    }
    entries.sort_by(|a, b| b.rel_error.total_cmp(&a.rel_error));
    Ok(GradCheckReport {
        checked: entries.len(),
        max_rel_error: entries.first().map_or(0.0, |e| e.rel_error),
        worst: entries.into_iter().take(10).collect(),
    })
}
