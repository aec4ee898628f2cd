use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use spp_core::config::RunConfig;
use spp_core::design::{
    cost, generate_dataset, load_dataset, save_dataset, validate_dataset, Dataset, Split, StructureVector,
};
use spp_core::guided::{
    guided_train, map_distance, read_audit_log, spectrum_accuracy, write_audit_log, EpochRecord, GuidanceConfig,
    NetPredictor, Simulation, StructurePredictor, TrainingHistory, TrainingOutcome,
};
use spp_core::net::{network_input, sample_loss, Checkpoint, Network, Targets};
use spp_core::optics::{GridSpec, HeatMap, Solver};
use spp_core::{Error, Result};

use crate::render::{axes_text, parse_pgm, to_pgm};
use crate::{Command, GlobalOpts};

pub(crate) fn dispatch(g: &GlobalOpts, cfg: &RunConfig, cmd: &Command) -> Result<()> {
    match cmd {
        Command::GenData {
            out,
            count,
            test_count,
            seed,
        } => gen_data(g, cfg, out, *count, *test_count, *seed),
        Command::Train {
            data,
            guided,
            baseline,
            out,
            history,
            audit,
            save_dataset,
            epochs,
            seed,
        } => {
            let arm = match (*guided, *baseline) {
                (true, _) => Arm::Guided,
                (_, true) => Arm::Baseline,
                _ if cfg.guidance.enabled => Arm::Guided,
                _ => Arm::Baseline,
            };
            let paths = TrainPaths {
                history: history.clone().unwrap_or_else(|| suffixed(out, ".history.csv")),
                audit: audit.clone().unwrap_or_else(|| suffixed(out, ".audit.jsonl")),
                checkpoint: out.clone(),
                dataset: save_dataset.clone(),
            };
            train(g, cfg, data, arm, &paths, *epochs, *seed)
        }
        Command::Predict { checkpoint, map } => predict(cfg, checkpoint, map),
        Command::Eval {
            checkpoint,
            data,
            per_sample,
        } => eval(g, cfg, checkpoint, data, per_sample.as_deref()),
        Command::Render { map, out, csv } => render(g, cfg, map, out.as_deref(), csv.as_deref()),
        Command::Compare {
            data,
            seeds,
            out,
            epochs,
        } => compare(g, cfg, data, seeds, out.as_deref(), *epochs),
    }
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(path.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.into(),
            source: e,
        })?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn check_failed(path: &Path, what: impl Into<String>) -> Error {
    Error::Format {
        path: path.into(),
        message: format!("check failed: {}", what.into()),
    }
}

fn verify_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    let back = load_dataset(dir)?;
    if &back != ds {
        return Err(check_failed(dir, "reloaded dataset differs from the one written"));
    }
    let warnings = validate_dataset(&back);
    if !warnings.is_empty() {
        return Err(check_failed(dir, warnings.join("; ")));
    }
    Ok(())
}

fn gen_data(
    g: &GlobalOpts,
    cfg: &RunConfig,
    out: &Path,
    count: Option<usize>,
    test_count: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    let setup = cfg.generation_setup();
    let solver = cfg.solver()?;
    let seed = seed.unwrap_or(cfg.training.seed);
    let counts = [
        (Split::Train, count.unwrap_or(cfg.dataset.train_count)),
        (Split::Test, test_count.unwrap_or(cfg.dataset.test_count)),
    ];
    for (split, n) in counts {
        let start = Instant::now();
        let ds = generate_dataset(n, &setup, &solver, seed, split)?;
        let dir = out.join(split_dir(split));
        save_dataset(&ds, &dir)?;
        if g.check {
            verify_dataset(&ds, &dir)?;
        }
        println!(
            "{}: {} samples, {}x{} maps, mean cost {:.4}",
            split_dir(split),
            ds.len(),
            ds.grid.angle_count,
            ds.grid.wavelength_count,
            ds.mean_cost()
        );
        eprintln!("{}: generated in {:.2} s", split_dir(split), start.elapsed().as_secs_f64());
    }
    Ok(())
}

fn split_dir(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Test => "test",
    }
}

fn load_split(cfg: &RunConfig, data: &Path, split: Split) -> Result<Dataset> {
    let dir = data.join(split_dir(split));
    let ds = load_dataset(&dir)?;
    if ds.spec != cfg.structure {
        return Err(Error::Config(format!(
            "{}: dataset structure spec differs from the configured one",
            dir.display()
        )));
    }
    Ok(ds)
}

fn dataset_solver(cfg: &RunConfig, ds: &Dataset) -> Result<Solver> {
    Solver::from_settings(cfg.material_db()?, &ds.optics)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Arm {
    Guided,
    Baseline,
}

impl Arm {
    fn name(self) -> &'static str {
        match self {
            Arm::Guided => "guided",
            Arm::Baseline => "baseline",
        }
    }

    fn guidance(self, cfg: &RunConfig) -> GuidanceConfig {
        match self {
            Arm::Guided => GuidanceConfig {
                enabled: true,
                ..cfg.guidance.clone()
            },
            Arm::Baseline => GuidanceConfig {
                enabled: false,
                ..cfg.guidance.clone()
            },
        }
    }
}

fn run_training(
    cfg: &RunConfig,
    train: &mut Dataset,
    test: &Dataset,
    arm: Arm,
    epochs: Option<u32>,
    seed: Option<u64>,
) -> Result<TrainingOutcome> {
    let solver = dataset_solver(cfg, train)?;
    let mut training = cfg.training;
    training.epochs = epochs.unwrap_or(training.epochs);
    training.seed = seed.unwrap_or(training.seed);
    let name = arm.name();
    guided_train(
        train,
        test,
        &solver,
        &cfg.network_config(),
        &training,
        &arm.guidance(cfg),
        &mut |r: &EpochRecord| {
            log::info!(
                "{name} epoch {}: loss {:.4}, train cost {:.2}, predicted test cost {:.2}, accuracy {:.4}, replaced {}",
                r.epoch,
                r.mean_loss,
                r.mean_train_cost,
                r.mean_test_cost,
                r.accuracy_mre,
                r.replacements
            )
        },
    )
}

struct TrainPaths {
    checkpoint: PathBuf,
    history: PathBuf,
    audit: PathBuf,
    dataset: Option<PathBuf>,
}

fn train(
    g: &GlobalOpts,
    cfg: &RunConfig,
    data: &Path,
    arm: Arm,
    paths: &TrainPaths,
    epochs: Option<u32>,
    seed: Option<u64>,
) -> Result<()> {
    let mut train_set = load_split(cfg, data, Split::Train)?;
    let test_set = load_split(cfg, data, Split::Test)?;
    let start = Instant::now();
    let out = run_training(cfg, &mut train_set, &test_set, arm, epochs, seed)?;

    let ck = Checkpoint::capture(&out.network, &cfg.structure, out.epochs_completed, Some(&out.adam));
    ck.save(&paths.checkpoint)?;
    out.history.save(&paths.history)?;
    write_audit_log(&out.events, &paths.audit)?;
    if let Some(dir) = &paths.dataset {
        save_dataset(&train_set, dir)?;
    }

    if g.check {
        if Checkpoint::load(&paths.checkpoint)? != ck {
            return Err(check_failed(&paths.checkpoint, "reloaded checkpoint differs"));
        }
        if TrainingHistory::load(&paths.history)? != out.history {
            return Err(check_failed(&paths.history, "reloaded history differs"));
        }
        if read_audit_log(&paths.audit)? != out.events {
            return Err(check_failed(&paths.audit, "reloaded audit log differs"));
        }
        if let Some(dir) = &paths.dataset {
            verify_dataset(&train_set, dir)?;
        }
    }

    if let Some(last) = out.history.records.last() {
        println!(
            "{}: {} epochs, loss {:.6} (epoch 1: {:.6}), train cost {:.4}, predicted test cost {:.4}, \
             accuracy_mre {:.6}, accuracy_literal {:.6}, replacements {}",
            arm.name(),
            out.epochs_completed,
            last.mean_loss,
            out.history.records[0].mean_loss,
            last.mean_train_cost,
            last.mean_test_cost,
            last.accuracy_mre,
            last.accuracy_literal,
            out.events.len()
        );
    }
    eprintln!("trained in {:.1} s", start.elapsed().as_secs_f64());
    match out.aborted {
        Some(msg) => Err(Error::NonFinite(format!("training aborted ({msg}); last good epoch kept"))),
        None => Ok(()),
    }
}

fn load_network(cfg: &RunConfig, path: &Path) -> Result<(Network, u32)> {
    let ck = Checkpoint::load(path)?;
    let epoch = ck.epoch;
    let (net, _) = ck.restore(cfg.network_config(), &cfg.structure).map_err(|e| match e {
        Error::CheckpointMismatch(m) => Error::CheckpointMismatch(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok((net, epoch))
}

#[derive(Serialize)]
struct Prediction {
    layers: StructureVector,
    cost: f64,
    distance: f64,
}

fn predict(cfg: &RunConfig, checkpoint: &Path, map_path: &Path) -> Result<()> {
    let (net, _) = load_network(cfg, checkpoint)?;
    let map = HeatMap::load(map_path)?;
    let grid = GridSpec {
        angle_count: map.rows(),
        wavelength_count: map.cols(),
        ..cfg.grids
    }
    .build()?;
    let solver = cfg.solver()?;
    let structure = NetPredictor {
        net: &net,
        spec: &cfg.structure,
    }
    .predict(&map)?;
    let simulated = solver.heat_map(&structure, &grid)?;
    let report = Prediction {
        cost: cost(&structure, &cfg.cost)?,
        distance: map_distance(&map, &simulated)?,
        layers: structure,
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("prediction serializes"));
    Ok(())
}

fn mean_loss(net: &Network, ds: &Dataset) -> Result<f64> {
    let w = net.config().type_weight;
    let losses: Vec<f64> = ds
        .samples
        .par_iter()
        .map(|s| {
            let targets = Targets::from_structure(&s.structure, &ds.spec)?;
            let out = net.predict_input(network_input(net.config(), &s.map)?)?;
            Ok(sample_loss(&out, &targets, w)?.0.total)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

fn eval(g: &GlobalOpts, cfg: &RunConfig, checkpoint: &Path, data: &Path, per_sample: Option<&Path>) -> Result<()> {
    let (net, epoch) = load_network(cfg, checkpoint)?;
    let ds = load_dataset(data)?;
    if ds.spec != cfg.structure {
        return Err(Error::Config(format!(
            "{}: dataset structure spec differs from the configured one",
            data.display()
        )));
    }
    let solver = dataset_solver(cfg, &ds)?;
    let grid = ds.grid.build()?;
    let sim = Simulation {
        solver: &solver,
        grid: &grid,
        cost_table: &ds.cost_table,
    };
    let predictor = NetPredictor {
        net: &net,
        spec: &cfg.structure,
    };
    let report = spectrum_accuracy(&predictor, &ds, &sim)?;
    let record = EpochRecord {
        epoch,
        mean_train_cost: ds.mean_cost(),
        mean_test_cost: report.mean_predicted_cost,
        replacements: ds.replaced_count(),
        mean_loss: mean_loss(&net, &ds)?,
        accuracy_mre: report.accuracy_mre,
        accuracy_literal: report.accuracy_literal,
    };
    print!("{}", TrainingHistory { records: vec![record] }.to_csv());

    if let Some(path) = per_sample {
        let mut text = String::from("id,distance,predicted_cost,target_cost\n");
        for s in &report.samples {
            text.push_str(&format!("{},{},{},{}\n", s.id, s.distance, s.predicted_cost, s.target_cost));
        }
        write_file(path, &text)?;
        if g.check && read_file(path)? != text.as_bytes() {
            return Err(check_failed(path, "reloaded per-sample report differs"));
        }
    }
    Ok(())
}

fn render(g: &GlobalOpts, cfg: &RunConfig, map_path: &Path, out: Option<&Path>, csv: Option<&Path>) -> Result<()> {
    if out.is_none() && csv.is_none() {
        return Err(Error::Config("render needs --out and/or --csv".into()));
    }
    let map = HeatMap::load(map_path)?;
    let grid = GridSpec {
        angle_count: map.rows(),
        wavelength_count: map.cols(),
        ..cfg.grids
    }
    .build()?;
    if let Some(path) = out {
        let pgm = to_pgm(&map);
        write_file(path, &pgm)?;
        let axes = suffixed(path, ".axes.txt");
        write_file(&axes, axes_text(&grid))?;
        if g.check {
            let (w, h, px) = parse_pgm(&read_file(path)?).map_err(|m| check_failed(path, m))?;
            if (w, h) != (map.cols(), map.rows()) || px[..] != pgm[pgm.len() - px.len()..] {
                return Err(check_failed(path, "reloaded image differs"));
            }
        }
        println!("wrote {} ({}x{}) and {}", path.display(), map.cols(), map.rows(), axes.display());
    }
    if let Some(path) = csv {
        let text = map.to_csv(&grid)?;
        write_file(path, &text)?;
        if g.check && read_file(path)? != text.as_bytes() {
            return Err(check_failed(path, "reloaded CSV differs"));
        }
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub const COMPARE_HEADER: &str = "seed,arm,accuracy_mre,accuracy_literal,mean_predicted_cost,cost_ratio";

fn compare(
    g: &GlobalOpts,
    cfg: &RunConfig,
    data: &Path,
    seeds: &[u64],
    out: Option<&Path>,
    epochs: Option<u32>,
) -> Result<()> {
    let train_set = load_split(cfg, data, Split::Train)?;
    let test_set = load_split(cfg, data, Split::Test)?;
    let mut table = format!("{COMPARE_HEADER}\n");
    for &seed in seeds {
        let mut finals = Vec::new();
        for arm in [Arm::Guided, Arm::Baseline] {
            let mut tr = train_set.clone();
            let res = run_training(cfg, &mut tr, &test_set, arm, epochs, Some(seed))?;
            if let Some(msg) = res.aborted {
                return Err(Error::NonFinite(format!("seed {seed}, {}: {msg}", arm.name())));
            }
            finals.push((arm, *res.history.records.last().expect("at least one epoch")));
        }
        let ratio = finals[0].1.mean_test_cost / finals[1].1.mean_test_cost;
        for (arm, r) in finals {
            table.push_str(&format!(
                "{seed},{},{},{},{},{ratio}\n",
                arm.name(),
                r.accuracy_mre,
                r.accuracy_literal,
                r.mean_test_cost
            ));
        }
    }
    print!("{table}");
    if let Some(path) = out {
        write_file(path, &table)?;
        if g.check && read_file(path)? != table.as_bytes() {
            return Err(check_failed(path, "reloaded comparison table differs"));
        }
    }
    Ok(())
}
