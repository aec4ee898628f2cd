//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `SPP_ACCEPT_ONLY=1,3,5` runs a subset; criteria not selected print SKIP.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;
use spp_core::design::{
    cost, generate_dataset, load_dataset, random_structure, save_dataset, seeded_rng, CostTable, Dataset,
    GenerationSetup, Layer, Sample, Split, StructureSpec, StructureVector,
};
use spp_core::guided::{
    guided_train, map_distance, read_audit_log, replacement_pass, spectrum_accuracy, write_audit_log,
    GuidanceConfig, NetPredictor, Simulation, StructurePredictor, TrainingConfig, TrainingOutcome,
};
use spp_core::materials::MaterialId;
use spp_core::net::{
    grad_check, hybrid_loss, thickness_loss, train_epoch, type_loss, AdamState, Checkpoint, Network,
    NetworkConfig, Targets, TrainItem, TrainOptions,
};
use spp_core::optics::{
    reflectance_slabs, stack_matrix_slabs, GridSpec, HeatMap, LayerSlab, OpticsSettings,
    Polarization, Solver,
};
use spp_core::Result;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

// ---------------------------------------------------------------- 1

fn fresnel(n1: f64, n2: f64, theta_deg: f64, pol: Polarization) -> f64 {
    let (n1c, n2c) = (c(n1, 0.0), c(n2, 0.0));
    let ci = c(theta_deg.to_radians().cos(), 0.0);
    let s = n1 * theta_deg.to_radians().sin() / n2;
    let ct = (c(1.0, 0.0) - c(s * s, 0.0)).sqrt();
    let r = match pol {
        Polarization::S => (n1c * ci - n2c * ct) / (n1c * ci + n2c * ct),
        Polarization::P => (n2c * ci - n1c * ct) / (n2c * ci + n1c * ct),
    };
    r.norm_sqr()
}

fn criterion1() -> Result<Verdict> {
    let mut rng = seeded_rng(101, 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n1 = rng.random_range(1.0..=2.0);
        let n2 = rng.random_range(1.0..=2.0);
        let theta = rng.random_range(0.0..=89.0);
        let wl = rng.random_range(300.0..2000.0);
        for pol in [Polarization::P, Polarization::S] {
            let r = reflectance_slabs(c(n1, 0.0), &[], c(n2, 0.0), wl, theta, pol)?;
            worst = worst.max((r - fresnel(n1, n2, theta, pol)).abs());
        }
    }
    Ok(verdict(worst <= 1e-10, format!("max |R - Fresnel| = {worst:.2e} over 100 cases x 2 pols (tol 1e-10)")))
}

// ---------------------------------------------------------------- 2

fn random_slab(rng: &mut impl Rng, lossless: bool) -> LayerSlab {
    let n = rng.random_range(1.0..3.0);
    let k = if lossless || rng.random_bool(0.5) {
        0.0
    } else {
        rng.random_range(0.0..5.0)
    };
    let h = if k > 0.0 {
        rng.random_range(0.0..15.0)
    } else {
        rng.random_range(0.0..200.0)
    };
    LayerSlab::new(c(n, k), h)
}

fn random_case(rng: &mut impl Rng, lossless: bool) -> (Vec<LayerSlab>, f64, f64, Polarization) {
    let count = rng.random_range(1..=10);
    let slabs = (0..count).map(|_| random_slab(rng, lossless)).collect();
    let wl = rng.random_range(300.0..2000.0);
    let theta = rng.random_range(0.0..89.9);
    let pol = if rng.random_bool(0.5) {
        Polarization::P
    } else {
        Polarization::S
    };
    (slabs, wl, theta, pol)
}

const PRISM: Complex64 = Complex64::new(1.52, 0.0);
const AIR: Complex64 = Complex64::new(1.0, 0.0);

fn criterion2() -> Result<Verdict> {
    let cases = 1000;
    let mut rng = seeded_rng(102, 0);
    let (mut det_err, mut zero_err, mut split_err, mut max_r) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..cases {
        let (slabs, wl, theta, pol) = random_case(&mut rng, false);
        let kx = PRISM.re * theta.to_radians().sin();
        let m = stack_matrix_slabs(&slabs, kx, wl, pol)?;
        det_err = det_err.max((m.determinant() - c(1.0, 0.0)).norm());

        let base = reflectance_slabs(PRISM, &slabs, AIR, wl, theta, pol)?;
        let mut with_zero = slabs.clone();
        let at = rng.random_range(0..=slabs.len());
        with_zero.insert(at, LayerSlab::new(random_slab(&mut rng, false).index, 0.0));
        let r = reflectance_slabs(PRISM, &with_zero, AIR, wl, theta, pol)?;
        zero_err = zero_err.max((r - base).abs());

        let mut split = slabs.clone();
        let at = rng.random_range(0..slabs.len());
        let f = rng.random_range(0.0..1.0);
        let s = split[at];
        split[at].thickness_nm = s.thickness_nm * f;
        split.insert(at + 1, LayerSlab::new(s.index, s.thickness_nm * (1.0 - f)));
        let r = reflectance_slabs(PRISM, &split, AIR, wl, theta, pol)?;
        split_err = split_err.max((r - base).abs());

        let (lossless, wl, theta, pol) = random_case(&mut rng, true);
        max_r = max_r.max(reflectance_slabs(PRISM, &lossless, AIR, wl, theta, pol)?);
    }
    let pass = det_err <= 1e-8 && zero_err <= 1e-12 && split_err <= 1e-9 && max_r <= 1.0 + 1e-9;
    Ok(verdict(
        pass,
        format!(
            "{cases} cases each: |det-1| {det_err:.1e} (1e-8), zero-layer {zero_err:.1e} (1e-12), \
             split {split_err:.1e} (1e-9), lossless max R {max_r:.12}"
        ),
    ))
}

// ---------------------------------------------------------------- 3

fn criterion3() -> Result<Verdict> {
    let stack = StructureVector::new(vec![Layer::new(50.0, MaterialId::Ag)]);
    let scan = |pol| -> Result<(f64, f64)> {
        let solver = Solver::default().with_polarization(pol);
        let mut best = (f64::INFINITY, 0.0);
        for i in 1..3000 {
            let theta = 30.0 + i as f64 * 0.01;
            let r = solver.reflectance(&stack, 633.0, theta)?;
            if r < best.0 {
                best = (r, theta);
            }
        }
        Ok(best)
    };
    let (rp, tp) = scan(Polarization::P)?;
    let (rs, ts) = scan(Polarization::S)?;
    Ok(verdict(
        rp < 0.1 && rs > 0.5,
        format!("Ag 50 nm at 633 nm: min R_p {rp:.4} at {tp:.2} deg (< 0.1), min R_s {rs:.4} at {ts:.2} deg (> 0.5)"),
    ))
}

// ---------------------------------------------------------------- 4

fn random_item(net: &Network, spec: &StructureSpec, rng: &mut impl Rng) -> Result<TrainItem> {
    let input = (0..net.config().input_len()).map(|_| rng.random_range(0.0..1.0)).collect();
    let targets = Targets::from_structure(&random_structure(spec, rng), spec)?;
    Ok(TrainItem { input, targets })
}

fn criterion4() -> Result<Verdict> {
    let spec = StructureSpec::desk();
    let mut net = Network::new(NetworkConfig::desk(&spec), 7)?;
    let mut rng = seeded_rng(104, 0);
    // A few Adam steps move the residual gains off zero so every tensor
    // carries gradient.
    let warm: Vec<TrainItem> = (0..8).map(|_| random_item(&net, &spec, &mut rng)).collect::<Result<_>>()?;
    let mut adam = AdamState::new(net.num_params());
    for epoch in 1..=3 {
        let opts = TrainOptions {
            batch_size: 4,
            learning_rate: 0.01,
            seed: 1,
            epoch,
        };
        train_epoch(&mut net, &mut adam, &warm, &opts)?;
    }
    let (mut worst, mut checked, mut worst_at) = (0.0f64, 0, String::new());
    for k in 0..5 {
        let item = random_item(&net, &spec, &mut rng)?;
        let rep = grad_check(&net, &item, 1e-5, 40, 200 + k)?;
        checked += rep.checked;
        if rep.max_rel_error > worst {
            worst = rep.max_rel_error;
            worst_at = rep.worst[0].tensor.clone();
        }
    }
    Ok(verdict(
        worst <= 1e-4 && checked >= 200,
        format!("{checked} parameters over 5 inputs, max rel error {worst:.2e} ({worst_at}) (tol 1e-4)"),
    ))
}

// ---------------------------------------------------------------- 5

struct Fixed(StructureVector);

impl StructurePredictor for Fixed {
    fn predict(&self, _: &HeatMap) -> Result<StructureVector> {
        Ok(self.0.clone())
    }
}

fn small_setup(rows: usize) -> GenerationSetup {
    GenerationSetup {
        spec: StructureSpec::desk(),
        grid: GridSpec {
            angle_count: rows,
            wavelength_count: rows,
            ..GridSpec::desk()
        },
        cost_table: CostTable::fitted(),
        optics: OpticsSettings::default(),
    }
}

fn criterion5() -> Result<Verdict> {
    let l_t = thickness_loss(&[3.0, 4.0], &[3.0, 0.0])?;
    let uniform = type_loss(&[0, 2, 3], &[0.0; 12])?;
    let ln4 = 4f64.ln();

    let (t, tp) = ([0.2, 0.7, 0.1], [0.3, 0.5, 0.4]);
    let (m, logits) = ([1usize, 0, 3], [0.3, -1.2, 2.0, 0.1, 1.0, 0.0, -0.5, 0.2, 0.0, 0.4, 0.9, 1.9]);
    let hybrid = hybrid_loss(&t, &tp, &m, &logits)?;
    let sum = thickness_loss(&t, &tp)? + type_loss(&m, &logits)?.surrogate;

    let solver = Solver::default();
    let setup = small_setup(12);
    let test = generate_dataset(6, &setup, &solver, 5, Split::Test)?;
    let grid = setup.grid.build()?;
    let sim = Simulation {
        solver: &solver,
        grid: &grid,
        cost_table: &setup.cost_table,
    };
    let guess = Fixed(test.samples[0].structure.clone());
    let rep = spectrum_accuracy(&guess, &test, &sim)?;
    let e: Vec<f64> = test
        .samples
        .iter()
        .map(|s| map_distance(&s.map, &solver.heat_map(&guess.0, &grid)?))
        .collect::<Result<_>>()?;
    let n = e.len() as f64;
    let (mre, literal) = (1.0 - e.iter().sum::<f64>() / n, e.iter().sum::<f64>().sqrt() / n);

    let pass = (l_t - 0.8).abs() < 1e-15
        && (uniform.surrogate - ln4).abs() <= 1e-9
        && hybrid == sum
        && (rep.accuracy_mre - mre).abs() < 1e-12
        && (rep.accuracy_literal - literal).abs() < 1e-12;
    Ok(verdict(
        pass,
        format!(
            "L_t((3,4),(3,0)) = {l_t}, uniform CE = {:.12} (ln 4 = {ln4:.12}), hybrid - parts = {:e}, \
             accuracy 1-mean(e) = {:.6}, sqrt(sum e)/N = {:.6}",
            uniform.surrogate,
            hybrid - sum,
            rep.accuracy_mre,
            rep.accuracy_literal
        ),
    ))
}

// ---------------------------------------------------------------- 6

struct Oracle<'a>(&'a Dataset);

impl StructurePredictor for Oracle<'_> {
    fn predict(&self, map: &HeatMap) -> Result<StructureVector> {
        let s = self.0.samples.iter().find(|s| &s.map == map).expect("map from the dataset");
        Ok(s.structure.clone())
    }
}

struct Table(Vec<(HeatMap, StructureVector)>);

impl StructurePredictor for Table {
    fn predict(&self, map: &HeatMap) -> Result<StructureVector> {
        Ok(self.0.iter().find(|(m, _)| m == map).expect("fixture map").1.clone())
    }
}

fn with_metal(sv: &StructureVector, index: usize, layer: Layer) -> StructureVector {
    let mut out = sv.clone();
    out.layers[index] = layer;
    out
}

fn criterion6(runs: &Experiment) -> Result<Verdict> {
    let solver = Solver::default();
    let setup = small_setup(24);
    let grid = setup.grid.build()?;
    let sim = Simulation {
        solver: &solver,
        grid: &grid,
        cost_table: &setup.cost_table,
    };
    let eps = GuidanceConfig {
        enabled: true,
        ..GuidanceConfig::default()
    };
    let base = generate_dataset(40, &setup, &solver, 9, Split::Train)?;

    // (a) epsilon 0 with an untrained network.
    let net = Network::new(NetworkConfig::desk(&setup.spec), 3)?;
    let mut ds = base.clone();
    let zero_eps = GuidanceConfig { epsilon: 0.0, ..eps.clone() };
    let a = replacement_pass(&mut ds, &NetPredictor { net: &net, spec: &setup.spec }, &sim, &zero_eps, 1)?;
    let ok_a = a.events.is_empty() && ds == base;

    // (b) the oracle reproduces each target: distance 0 but never cheaper.
    let mut ds = base.clone();
    let b = replacement_pass(&mut ds, &Oracle(&base), &sim, &eps, 1)?;
    let ok_b = b.events.is_empty() && ds == base;

    // (c) three hand-built samples, only the first of which has a cheaper
    // equivalent: the same stack with 0.1 nm less gold.
    let gold = StructureVector::new(vec![
        Layer::new(8.0, MaterialId::Au),
        Layer::new(20.0, MaterialId::SiO2),
        Layer::new(7.0, MaterialId::Ag),
        Layer::new(15.0, MaterialId::SiO2),
        Layer::new(9.0, MaterialId::Au),
        Layer::new(30.0, MaterialId::SiO2),
    ]);
    let thinner = with_metal(&gold, 4, Layer::new(8.9, MaterialId::Au));
    let thicker = with_metal(&gold, 4, Layer::new(9.1, MaterialId::Au));
    let far = with_metal(&gold, 0, Layer::new(8.0, MaterialId::Al));
    let mk = |id: u64, sv: &StructureVector| -> Result<Sample> {
        let c = cost(sv, &setup.cost_table)?;
        Ok(Sample {
            id,
            structure: sv.clone(),
            map: solver.heat_map(sv, &grid)?,
            cost: c,
            original_cost: c,
            replaced: false,
        })
    };
    let mut fixture = base.clone();
    fixture.samples = vec![mk(0, &gold)?, mk(1, &thinner)?, mk(2, &gold)?];
    // Sample 2 shares sample 0's map; give it a distinct one so the table
    // can tell them apart.
    fixture.samples[2].map = solver.heat_map(&with_metal(&gold, 1, Layer::new(21.0, MaterialId::SiO2)), &grid)?;
    let table = Table(vec![
        (fixture.samples[0].map.clone(), thinner.clone()),
        (fixture.samples[1].map.clone(), thicker.clone()),
        (fixture.samples[2].map.clone(), far.clone()),
    ]);
    let before = fixture.clone();
    let pass_c = replacement_pass(&mut fixture, &table, &sim, &eps, 7)?;
    let audit = tempfile::NamedTempFile::new().map_err(|e| spp_core::Error::Io {
        path: PathBuf::from("tempfile"),
        source: e,
    })?;
    write_audit_log(&pass_c.events, audit.path())?;
    let log = read_audit_log(audit.path())?;
    let mut audit_ok = log == pass_c.events;
    for ev in &log {
        let s = &fixture.samples[ev.sample_id as usize];
        let original = &before.samples[ev.sample_id as usize];
        let d = map_distance(&original.map, &solver.heat_map(&s.structure, &grid)?)?;
        audit_ok &= d == ev.distance
            && d <= eps.epsilon
            && cost(&s.structure, &setup.cost_table)? == ev.new_cost
            && ev.old_cost == original.cost
            && ev.new_cost < ev.old_cost;
    }
    let ok_c = pass_c.replaced == vec![0]
        && fixture.samples[0].structure == thinner
        && fixture.samples[1] == before.samples[1]
        && fixture.samples[2] == before.samples[2]
        && audit_ok;

    // (d), (e) from the guided desk runs of criterion 7.
    let mut ok_d = true;
    let mut ok_e = true;
    for run in &runs.seeds {
        let costs: Vec<f64> = run.guided.history.records.iter().map(|r| r.mean_train_cost).collect();
        ok_d &= costs.len() == 30 && costs.windows(2).all(|w| w[1] <= w[0]);
        ok_e &= run
            .maps_before
            .iter()
            .zip(&run.guided_train_after.samples)
            .all(|(b, s)| *b == s.map.to_bytes());
    }
    let replaced: usize = runs.seeds.iter().map(|r| r.guided.events.len()).sum();
    Ok(verdict(
        ok_a && ok_b && ok_c && ok_d && ok_e && !runs.seeds.is_empty(),
        format!(
            "(a) eps=0 untrained: {} replaced; (b) oracle: {} replaced; (c) fixture replaced {:?}, audit re-simulated {}; \
             (d) train cost non-increasing over 30 epochs: {ok_d} ({replaced} replacements over {} runs); \
             (e) input maps byte-identical: {ok_e}",
            a.events.len(),
            b.events.len(),
            pass_c.replaced,
            if audit_ok { "ok" } else { "MISMATCH" },
            runs.seeds.len()
        ),
    ))
}

// ---------------------------------------------------------------- 7

struct SeedRun {
    seed: u64,
    guided: TrainingOutcome,
    baseline: TrainingOutcome,
    maps_before: Vec<Vec<u8>>,
    guided_train_after: Dataset,
    elapsed: Duration,
}

#[derive(Default)]
struct Experiment {
    seeds: Vec<SeedRun>,
}

fn run_experiment(seeds: &[u64]) -> Result<Experiment> {
    let spec = StructureSpec::desk();
    let setup = GenerationSetup {
        spec: spec.clone(),
        grid: GridSpec::desk(),
        cost_table: CostTable::fitted(),
        optics: OpticsSettings::default(),
    };
    let solver = Solver::default();
    let cfg = NetworkConfig::desk(&spec);
    let mut out = Experiment::default();
    for &seed in seeds {
        let start = Instant::now();
        let train = generate_dataset(500, &setup, &solver, seed, Split::Train)?;
        let test = generate_dataset(100, &setup, &solver, seed, Split::Test)?;
        let training = TrainingConfig {
            epochs: 30,
            seed,
            ..TrainingConfig::default()
        };
        let guidance = GuidanceConfig {
            enabled: true,
            ..GuidanceConfig::default()
        };
        let maps_before = train.samples.iter().map(|s| s.map.to_bytes()).collect();
        let mut guided_train_set = train.clone();
        let guided = guided_train(&mut guided_train_set, &test, &solver, &cfg, &training, &guidance, &mut |_| {})?;
        let mut baseline_set = train.clone();
        let baseline = guided_train(
            &mut baseline_set,
            &test,
            &solver,
            &cfg,
            &training,
            &GuidanceConfig::disabled(),
            &mut |_| {},
        )?;
        out.seeds.push(SeedRun {
            seed,
            guided,
            baseline,
            maps_before,
            guided_train_after: guided_train_set,
            elapsed: start.elapsed(),
        });
    }
    Ok(out)
}

fn criterion7(runs: &Experiment) -> Result<Verdict> {
    let mut pass = runs.seeds.len() == 3;
    let mut parts = Vec::new();
    for r in &runs.seeds {
        let ratio = |o: &TrainingOutcome| {
            let h = &o.history.records;
            h[h.len() - 1].mean_loss / h[0].mean_loss
        };
        let last = |o: &TrainingOutcome| o.history.records.last().map_or(f64::NAN, |x| x.mean_test_cost);
        let (rg, rb) = (ratio(&r.guided), ratio(&r.baseline));
        let (cg, cb) = (last(&r.guided), last(&r.baseline));
        let complete = r.guided.aborted.is_none() && r.baseline.aborted.is_none();
        pass &= complete && rg <= 0.5 && rb <= 0.5 && cg <= cb;
        parts.push(format!(
            "seed {}: loss ratio guided {rg:.3} baseline {rb:.3}, cost guided {cg:.1} vs baseline {cb:.1} ({} replacements, {:.0} s)",
            r.seed,
            r.guided.events.len(),
            r.elapsed.as_secs_f64()
        ));
    }
    Ok(verdict(pass, parts.join("; ")))
}

// ---------------------------------------------------------------- 8, 9

const SMALL_CONFIG: &str = r#"
[grids]
wavelength_count = 16
angle_count = 16

[dataset]
train_count = 24
test_count = 8

[training]
epochs = 3
batch_size = 8

[guidance]
warmup = 1
epsilon = 0.5
"#;

struct CliRun {
    code: i32,
    stdout: Vec<u8>,
    stderr: String,
}

fn spp(dir: &Path, args: &[&str]) -> CliRun {
    let out = Command::new(env!("CARGO_BIN_EXE_spp"))
        .current_dir(dir)
        .args(["--workers", "1", "--config", "run.toml"])
        .args(args)
        .output()
        .expect("spp runs");
    CliRun {
        code: out.status.code().unwrap_or(-1),
        stdout: out.stdout,
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

const SCRIPT: &[&[&str]] = &[
    &["--check", "gen-data", "--out", "data", "--seed", "4"],
    &[
        "--check",
        "train",
        "--data",
        "data",
        "--guided",
        "--out",
        "model.sppw",
        "--save-dataset",
        "trained",
    ],
    &["--check", "train", "--data", "data", "--baseline", "--out", "base.sppw"],
    &["predict", "--checkpoint", "model.sppw", "--map", "data/test/maps/0000.sppm"],
    &[
        "--check",
        "eval",
        "--checkpoint",
        "model.sppw",
        "--data",
        "data/test",
        "--per-sample",
        "per_sample.csv",
    ],
    &[
        "--check",
        "render",
        "--map",
        "data/test/maps/0001.sppm",
        "--out",
        "map.pgm",
        "--csv",
        "map.csv",
    ],
    &[
        "--check",
        "compare",
        "--data",
        "data",
        "--seeds",
        "1,2",
        "--epochs",
        "2",
        "--out",
        "compare.csv",
    ],
];

fn run_script(dir: &Path) -> Vec<(String, CliRun)> {
    std::fs::write(dir.join("run.toml"), SMALL_CONFIG).expect("write config");
    SCRIPT
        .iter()
        .map(|args| (args.iter().find(|a| !a.starts_with('-')).unwrap().to_string(), spp(dir, args)))
        .collect()
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).expect("read dir") {
            let p = e.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).expect("read"));
            }
        }
    }
    out
}

struct CliRuns {
    first: Vec<(String, CliRun)>,
    second: Vec<(String, CliRun)>,
    dirs: [tempfile::TempDir; 2],
}

fn cli_runs() -> CliRuns {
    let dirs = [tempfile::tempdir().expect("tempdir"), tempfile::tempdir().expect("tempdir")];
    CliRuns {
        first: run_script(dirs[0].path()),
        second: run_script(dirs[1].path()),
        dirs,
    }
}

fn criterion8(cli: &CliRuns) -> Result<Verdict> {
    let mut failures: Vec<String> = cli
        .first
        .iter()
        .filter(|(_, r)| r.code != 0)
        .map(|(name, r)| format!("{name} exited {}: {}", r.code, r.stderr.trim()))
        .collect();

    let dir = cli.dirs[0].path();
    let ds = load_dataset(dir.join("data/train"))?;
    let copy = tempfile::tempdir().expect("tempdir");
    save_dataset(&ds, copy.path())?;
    if load_dataset(copy.path())? != ds || tree(copy.path()) != tree(&dir.join("data/train")) {
        failures.push("dataset round trip is not bit-exact".into());
    }
    let bytes = std::fs::read(dir.join("model.sppw")).expect("checkpoint");
    let ck = Checkpoint::from_bytes(&bytes, Path::new("model.sppw"))?;
    if ck.to_bytes() != bytes {
        failures.push("checkpoint bytes change on re-encoding".into());
    }
    let spec = StructureSpec::desk();
    let (net, adam) = ck.clone().restore(NetworkConfig::desk(&spec), &spec)?;
    if Checkpoint::capture(&net, &spec, ck.epoch, adam.as_ref()) != ck {
        failures.push("restored network does not reproduce the checkpoint".into());
    }
    Ok(verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} subcommands passed --check; dataset and checkpoint round trips bit-exact", cli.first.len())
        } else {
            failures.join("; ")
        },
    ))
}

fn criterion9(cli: &CliRuns) -> Result<Verdict> {
    let mut diffs = Vec::new();
    for ((name, a), (_, b)) in cli.first.iter().zip(&cli.second) {
        if a.code != b.code || a.stdout != b.stdout {
            diffs.push(format!("{name} stdout/exit differs"));
        }
    }
    let (ta, tb) = (tree(cli.dirs[0].path()), tree(cli.dirs[1].path()));
    for (path, bytes) in &ta {
        if tb.get(path) != Some(bytes) {
            diffs.push(format!("{} differs", path.display()));
        }
    }
    if ta.len() != tb.len() {
        diffs.push("file sets differ".into());
    }
    Ok(verdict(
        diffs.is_empty(),
        if diffs.is_empty() {
            format!("{} subcommand runs and {} output files identical across two runs", cli.first.len(), ta.len())
        } else {
            diffs.join("; ")
        },
    ))
}

// ----------------------------------------------------------------

fn main() {
    // `cargo test` passes harness flags; listing must not run the suite.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let only: Option<Vec<u32>> = std::env::var("SPP_ACCEPT_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let selected = |n: u32| only.as_ref().is_none_or(|v| v.contains(&n));

    let start = Instant::now();
    let experiment = if selected(6) || selected(7) {
        run_experiment(&[1, 2, 3]).map_err(|e| e.to_string())
    } else {
        Ok(Experiment::default())
    };
    if selected(7) {
        println!("desk experiment: {:.0} s", start.elapsed().as_secs_f64());
    }
    let cli = (selected(8) || selected(9)).then(cli_runs);

    let mut failed = 0;
    for n in 1..=9u32 {
        if !selected(n) {
            println!("criterion {n}: SKIP");
            continue;
        }
        let start = Instant::now();
        let result = match n {
            1 => criterion1(),
            2 => criterion2(),
            3 => criterion3(),
            4 => criterion4(),
            5 => criterion5(),
            6 | 7 => match &experiment {
                Ok(x) if n == 6 => criterion6(x),
                Ok(x) => criterion7(x),
                Err(e) => Ok(verdict(false, format!("desk experiment failed: {e}"))),
            },
            8 => criterion8(cli.as_ref().unwrap()),
            _ => criterion9(cli.as_ref().unwrap()),
        };
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(v) => {
                failed += usize::from(!v.pass);
                println!("criterion {n}: {} [{secs:.1} s] {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
            }
            Err(e) => {
                failed += 1;
                println!("criterion {n}: FAIL [{secs:.1} s] error: {e}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
