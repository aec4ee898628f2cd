//! Cost-guided training: after each epoch (past a warmup) the model's own
//! prediction for every training map is simulated, and when it reproduces
//! the map within `epsilon` at a strictly lower cost it becomes that
//! sample's new target structure. The map itself is left alone.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{cost, CostTable, Dataset, Sample, StructureSpec, StructureVector};
use crate::error::{Error, Result};
use crate::net::{
    decode, network_input, train_epoch, AdamState, EpochMetrics, Network, NetworkConfig, Targets, TrainItem,
    TrainOptions,
};
use crate::optics::{Grid, HeatMap, Solver};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceConfig {
    pub enabled: bool,
    /// Largest accepted relative L1 map distance.
    pub epsilon: f64,
    /// Run a replacement pass every `cadence` epochs.
    pub cadence: u32,
    /// Epochs trained before the first pass.
    pub warmup: u32,
    pub max_per_pass: Option<usize>,
    /// Also overwrite the stored map with the simulated one.
    pub replace_map: bool,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            epsilon: 0.05,
            cadence: 1,
            warmup: 5,
            max_per_pass: None,
            replace_map: false,
        }
    }
}

impl GuidanceConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("guidance.epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.cadence == 0 {
            return Err(Error::Config("guidance.cadence must be >= 1".into()));
        }
        Ok(())
    }

    /// Whether a pass runs after 1-based `epoch`.
    pub fn runs_after(&self, epoch: u32) -> bool {
        self.enabled && epoch > self.warmup && (epoch - self.warmup).is_multiple_of(self.cadence)
    }
}

/// `Σ|O − Õ| / Σ|O|`, normalized by the reference map `o`.
pub fn map_distance(o: &HeatMap, o_tilde: &HeatMap) -> Result<f64> {
    if o.rows() != o_tilde.rows() || o.cols() != o_tilde.cols() {
        return Err(Error::Shape {
            expected: format!("{}x{} map", o.rows(), o.cols()),
            actual: format!("{}x{}", o_tilde.rows(), o_tilde.cols()),
        });
    }
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for (&a, &b) in o.values().iter().zip(o_tilde.values()) {
        num += (a as f64 - b as f64).abs();
        den += (a as f64).abs();
    }
    if den == 0.0 {
        return Err(Error::domain("map distance undefined for an all-zero reference map"));
    }
    Ok(num / den)
}

/// Anything that proposes a structure for a reflectance map.
pub trait StructurePredictor: Sync {
    fn predict(&self, map: &HeatMap) -> Result<StructureVector>;
}

/// Network prediction decoded against a structure spec.
pub struct NetPredictor<'a> {
    pub net: &'a Network,
    pub spec: &'a StructureSpec,
}

impl StructurePredictor for NetPredictor<'_> {
    fn predict(&self, map: &HeatMap) -> Result<StructureVector> {
        let out = self.net.predict_input(network_input(self.net.config(), map)?)?;
        decode(&out, self.spec)
    }
}

/// What a predicted structure is checked against.
#[derive(Debug, Clone, Copy)]
pub struct Simulation<'a> {
    pub solver: &'a Solver,
    pub grid: &'a Grid,
    pub cost_table: &'a CostTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub structure: StructureVector,
    pub map: HeatMap,
    pub cost: f64,
    /// Distance from the sample's stored map.
    pub distance: f64,
}

pub fn evaluate_candidate(sample: &Sample, predictor: &dyn StructurePredictor, sim: &Simulation) -> Result<Candidate> {
    let structure = predictor.predict(&sample.map)?;
    let map = sim.solver.heat_map(&structure, sim.grid)?;
    let distance = map_distance(&sample.map, &map)?;
    let cost = cost(&structure, sim.cost_table)?;
    Ok(Candidate {
        structure,
        map,
        cost,
        distance,
    })
}

/// One line of the replacement audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplacementEvent {
    pub sample_id: u64,
    pub epoch: u32,
    pub old_cost: f64,
    pub new_cost: f64,
    pub distance: f64,
}

fn accept(sample: &Sample, cand: &Candidate, epsilon: f64) -> bool {
    cand.distance <= epsilon && cand.cost < sample.cost
}

fn apply(sample: &mut Sample, cand: Candidate, replace_map: bool, epoch: u32) -> ReplacementEvent {
    let ev = ReplacementEvent {
        sample_id: sample.id,
        epoch,
        old_cost: sample.cost,
        new_cost: cand.cost,
        distance: cand.distance,
    };
    sample.structure = cand.structure;
    sample.cost = cand.cost;
    sample.replaced = true;
    if replace_map {
        sample.map = cand.map;
    }
    ev
}

/// Replaces the sample's target iff the prediction is within `epsilon` of
/// its map and strictly cheaper.
pub fn try_replace(
    sample: &mut Sample,
    predictor: &dyn StructurePredictor,
    sim: &Simulation,
    cfg: &GuidanceConfig,
    epoch: u32,
) -> Result<Option<ReplacementEvent>> {
    let cand = evaluate_candidate(sample, predictor, sim)?;
    Ok(accept(sample, &cand, cfg.epsilon).then(|| apply(sample, cand, cfg.replace_map, epoch)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassOutcome {
    pub events: Vec<ReplacementEvent>,
    /// Indices of samples that were replaced.
    pub replaced: Vec<usize>,
    /// Samples whose candidate could not be evaluated.
    pub skipped: usize,
    pub mean_cost: f64,
}

/// Evaluates every sample's candidate in parallel, then applies accepted
/// ones serially in index order (up to `max_per_pass`).
pub fn replacement_pass(
    train: &mut Dataset,
    predictor: &dyn StructurePredictor,
    sim: &Simulation,
    cfg: &GuidanceConfig,
    epoch: u32,
) -> Result<PassOutcome> {
    if train.is_empty() {
        return Err(Error::domain("replacement pass on an empty training set"));
    }
    let candidates: Vec<Result<Candidate>> = train
        .samples
        .par_iter()
        .map(|s| evaluate_candidate(s, predictor, sim))
        .collect();
    let limit = cfg.max_per_pass.unwrap_or(usize::MAX);
    let mut out = PassOutcome {
        events: Vec::new(),
        replaced: Vec::new(),
        skipped: 0,
        mean_cost: 0.0,
    };
    for (i, cand) in candidates.into_iter().enumerate() {
        let sample = &mut train.samples[i];
        match cand {
            Err(e) => {
                log::warn!("sample {}: candidate skipped: {e}", sample.id);
                out.skipped += 1;
            }
            Ok(c) if out.events.len() < limit && accept(sample, &c, cfg.epsilon) => {
                out.events.push(apply(sample, c, cfg.replace_map, epoch));
                out.replaced.push(i);
            }
            Ok(_) => {}
        }
    }
    out.mean_cost = train.mean_cost();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEvaluation {
    pub id: u64,
    pub distance: f64,
    pub predicted_cost: f64,
    pub target_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    /// `1 − mean(e_i)` with `e_i` the relative L1 map error.
    pub accuracy_mre: f64,
    /// `sqrt(Σ e_i) / N`, the formula as printed.
    pub accuracy_literal: f64,
    pub mean_predicted_cost: f64,
    pub samples: Vec<SampleEvaluation>,
}

/// Predicts, re-simulates and prices every sample of `test`.
pub fn spectrum_accuracy(predictor: &dyn StructurePredictor, test: &Dataset, sim: &Simulation) -> Result<AccuracyReport> {
    if test.is_empty() {
        return Err(Error::domain("accuracy needs a non-empty test set"));
    }
    let samples: Vec<SampleEvaluation> = test
        .samples
        .par_iter()
        .map(|s| {
            let c = evaluate_candidate(s, predictor, sim)?;
            Ok(SampleEvaluation {
                id: s.id,
                distance: c.distance,
                predicted_cost: c.cost,
                target_cost: s.cost,
            })
        })
        .collect::<Result<_>>()?;
    let n = samples.len() as f64;
    let sum_e: f64 = samples.iter().map(|s| s.distance).sum();
    Ok(AccuracyReport {
        accuracy_mre: 1.0 - sum_e / n,
        accuracy_literal: sum_e.sqrt() / n,
        mean_predicted_cost: samples.iter().map(|s| s.predicted_cost).sum::<f64>() / n,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub mean_train_cost: f64,
    pub mean_test_cost: f64,
    pub replacements: usize,
    pub mean_loss: f64,
    pub accuracy_mre: f64,
    pub accuracy_literal: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
}

pub const HISTORY_HEADER: &str = "epoch,mean_train_cost,mean_test_cost,replacements,mean_loss,accuracy_mre,accuracy_literal";

impl TrainingHistory {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.records.is_empty() {
            w.write_record(HISTORY_HEADER.split(',')).expect("in-memory write");
        }
        for r in &self.records {
            w.serialize(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    /// `source` is only used in error messages.
    pub fn from_csv(text: &str, source: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| Error::format(source, e.to_string()))?;
        if header.iter().collect::<Vec<_>>().join(",") != HISTORY_HEADER {
            return Err(Error::format(source, format!("unexpected header, want {HISTORY_HEADER}")));
        }
        let records = r
            .deserialize()
            .collect::<std::result::Result<Vec<EpochRecord>, _>>()
            .map_err(|e| Error::format(source, e.to_string()))?;
        Ok(Self { records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, path)
    }
}

pub fn write_audit_log(events: &[ReplacementEvent], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for ev in events {
        serde_json::to_writer(&mut out, ev).expect("event serializes");
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_audit_log(path: impl AsRef<Path>) -> Result<Vec<ReplacementEvent>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                source_name: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.01,
            seed: 1,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("training.epochs and training.batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "training.learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    /// The last good model (the one before the failing epoch on abort).
    pub network: Network,
    pub adam: AdamState,
    pub history: TrainingHistory,
    pub events: Vec<ReplacementEvent>,
    /// Number of completed epochs.
    pub epochs_completed: u32,
    /// Set when training stopped on a non-finite loss or gradient.
    pub aborted: Option<String>,
}

/// Trains a freshly initialized network on `train`, with replacement passes
/// when guidance is enabled, evaluating on `test` after every epoch.
/// `on_epoch` sees each record as it is produced.
pub fn guided_train(
    train: &mut Dataset,
    test: &Dataset,
    solver: &Solver,
    net_cfg: &NetworkConfig,
    training: &TrainingConfig,
    guidance: &GuidanceConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainingOutcome> {
    training.validate()?;
    guidance.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::domain("training and test sets must be non-empty"));
    }
    if train.split == test.split && train.seed == test.seed {
        return Err(Error::domain("training and test sets come from the same split and seed"));
    }
    if train.grid != test.grid || train.spec != test.spec {
        return Err(Error::domain("training and test sets use different grids or specs"));
    }
    let spec = train.spec.clone();
    net_cfg.check_spec(&spec)?;
    let grid = train.grid.build()?;
    let cost_table = train.cost_table.clone();
    let sim = Simulation {
        solver,
        grid: &grid,
        cost_table: &cost_table,
    };

    let mut net = Network::new(net_cfg.clone(), training.seed)?;
    let mut adam = AdamState::new(net.num_params());
    let mut items: Vec<TrainItem> = train
        .samples
        .iter()
        .map(|s| TrainItem::from_sample(s, &net, &spec))
        .collect::<Result<_>>()?;

    let mut history = TrainingHistory::default();
    let mut events = Vec::new();
    let mut good = (net.clone(), adam.clone());
    let mut aborted = None;

    for epoch in 1..=training.epochs {
        let opts = TrainOptions {
            batch_size: training.batch_size,
            learning_rate: training.learning_rate,
            seed: training.seed,
            epoch,
        };
        let metrics: EpochMetrics = match train_epoch(&mut net, &mut adam, &items, &opts) {
            Ok(m) => m,
            Err(Error::NonFinite(what)) => {
                aborted = Some(format!("epoch {epoch}: non-finite {what}"));
                break;
            }
            Err(e) => return Err(e),
        };

        let mut replacements = 0;
        if guidance.runs_after(epoch) {
            let pass = replacement_pass(train, &NetPredictor { net: &net, spec: &spec }, &sim, guidance, epoch)?;
            for &i in &pass.replaced {
                let s = &train.samples[i];
                items[i].targets = Targets::from_structure(&s.structure, &spec)?;
                if guidance.replace_map {
                    items[i].input = network_input(net.config(), &s.map)?;
                }
            }
            replacements = pass.events.len();
            events.extend(pass.events);
        }

        let acc = spectrum_accuracy(&NetPredictor { net: &net, spec: &spec }, test, &sim)?;
        let record = EpochRecord {
            epoch,
            mean_train_cost: train.mean_cost(),
            mean_test_cost: acc.mean_predicted_cost,
            replacements,
            mean_loss: metrics.mean_loss,
            accuracy_mre: acc.accuracy_mre,
            accuracy_literal: acc.accuracy_literal,
        };
        log::info!(
            "epoch {epoch}: loss {:.4}, train cost {:.2}, test cost {:.2}, replaced {replacements}, accuracy {:.4}",
            record.mean_loss,
            record.mean_train_cost,
            record.mean_test_cost,
            record.accuracy_mre
        );
        on_epoch(&record);
        history.records.push(record);
        good = (net.clone(), adam.clone());
    }

    let (network, adam) = good;
    Ok(TrainingOutcome {
        network,
        adam,
        epochs_completed: history.records.len() as u32,
        history,
        events,
        aborted,
    })
}
