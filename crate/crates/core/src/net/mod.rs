//! Residual CNN from heat maps to structure outputs, written from scratch
//! with an explicit reverse pass.
//!
//! Topology: 7×7 stride-2 stem, one or more residual stages of 3×3
//! convolutions (stride-2 entry + 1×1 projection when the resolution or width
//! changes), global average pool, then two linear heads: sigmoid-bounded
//! normalized thicknesses and per-metal-layer class logits. Activations are
//! SiLU. There is no batch normalization: convolutions use standardized
//! weights and every residual branch is multiplied by a learnable gain that
//! starts at `residual_init` (0 by default, so each block is initially the
//! identity).
//!
//! Arithmetic is f64. Parameters and optimizer moments are kept
//! f32-representable so checkpoints store them losslessly as f32.

mod adam;
mod checkpoint;
mod conv;
mod gradcheck;
mod loss;
mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{model_hash, Checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{grad_check, grad_check_indices, GradCheckReport, GradEntry};
pub use loss::{
    hybrid_loss, sample_loss, softmax, thickness_loss, type_loss, LossParts, Targets, TypeLoss,
};
pub use train::{predict_items, train_epoch, EpochMetrics, TrainItem, TrainOptions};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use conv::ConvLayer;

use crate::design::{seeded_rng, Layer, LayerRole, StructureSpec, StructureVector};
use crate::error::{Error, Result};
use crate::optics::{resize_map, HeatMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_rows: usize,
    pub input_cols: usize,
    /// 1, or 3 with the reflectance replicated into every channel.
    pub input_channels: usize,
    /// Output width of each residual stage; the stem uses the first width.
    pub stage_widths: Vec<usize>,
    pub blocks_per_stage: usize,
    pub stem_kernel: usize,
    pub stem_stride: usize,
    /// Initial value of the learnable residual-branch gains.
    pub residual_init: f64,
    pub thickness_outputs: usize,
    pub metal_layers: usize,
    pub classes: usize,
    /// Weight of the material term in the hybrid loss.
    pub type_weight: f64,
}

impl NetworkConfig {
    /// Compact network for 64×64 single-channel maps.
    pub fn desk(spec: &StructureSpec) -> Self {
        Self {
            input_rows: 64,
            input_cols: 64,
            input_channels: 1,
            stage_widths: vec![16, 32, 64, 128],
            blocks_per_stage: 1,
            stem_kernel: 7,
            stem_stride: 2,
            residual_init: 0.0,
            thickness_outputs: spec.layer_count,
            metal_layers: spec.metal_layer_count(),
            classes: spec.palette.len(),
            type_weight: 1.0,
        }
    }

    /// ResNet-18-sized reference: 224×224×3 input, widths 64–512, two blocks per stage.
    pub fn paper(spec: &StructureSpec) -> Self {
        Self {
            input_rows: 224,
            input_cols: 224,
            input_channels: 3,
            stage_widths: vec![64, 128, 256, 512],
            blocks_per_stage: 2,
            ..Self::desk(spec)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("network: {m}")));
        if self.input_rows == 0 || self.input_cols == 0 {
            return bad("input dimensions must be positive");
        }
        if !matches!(self.input_channels, 1 | 3) {
            return bad("input_channels must be 1 or 3");
        }
        if self.stage_widths.is_empty() || self.stage_widths.contains(&0) {
            return bad("stage widths must be non-empty and positive");
        }
        if self.stage_widths.windows(2).any(|w| w[1] < w[0]) {
            return bad("stage widths must be non-decreasing");
        }
        if self.blocks_per_stage == 0 || self.stem_kernel.is_multiple_of(2) || self.stem_stride == 0 {
            return bad("need >= 1 block per stage, odd stem kernel, positive stride");
        }
        if self.thickness_outputs == 0 || self.classes < 2 {
            return bad("head sizes must be positive with at least two classes");
        }
        if !(self.residual_init.is_finite() && self.type_weight >= 0.0) {
            return bad("residual_init must be finite and type_weight non-negative");
        }
        Ok(())
    }

    /// Head sizes must agree with the structure spec.
    pub fn check_spec(&self, spec: &StructureSpec) -> Result<()> {
        if self.thickness_outputs != spec.layer_count
            || self.metal_layers != spec.metal_layer_count()
            || self.classes != spec.palette.len()
        {
            return Err(Error::Shape {
                expected: format!(
                    "heads {}/{}x{} for the structure spec",
                    spec.layer_count,
                    spec.metal_layer_count(),
                    spec.palette.len()
                ),
                actual: format!(
                    "{}/{}x{}",
                    self.thickness_outputs, self.metal_layers, self.classes
                ),
            });
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.input_channels * self.input_rows * self.input_cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Weight { fan_in: usize },
    Bias,
    /// Residual-branch gain, initialized to `residual_init`.
    Gain,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    pub kind: TensorKind,
}

/// Flat parameter vector with a parallel gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
    pub layout: Vec<TensorInfo>,
    /// Bumped on every update; forward caches remember the version they saw.
    version: u64,
}

impl Parameters {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorInfo> {
        self.layout.iter().find(|t| t.name == name)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Call after mutating `values` directly.
    pub fn touch(&mut self) {
        self.version += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    conv1: ConvLayer,
    conv2: ConvLayer,
    proj: Option<ConvLayer>,
    gain: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Plan {
    stem: ConvLayer,
    blocks: Vec<Block>,
    features: usize,
    thick_w: usize,
    thick_b: usize,
    type_w: usize,
    type_b: usize,
}

struct LayoutBuilder {
    offset: usize,
    layout: Vec<TensorInfo>,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, len: usize, kind: TensorKind) -> usize {
        let at = self.offset;
        self.layout.push(TensorInfo {
            name,
            offset: at,
            len,
            kind,
        });
        self.offset += len;
        at
    }

    fn conv(&mut self, name: &str, mut layer: ConvLayer) -> ConvLayer {
        layer.w = self.push(
            format!("{name}.weight"),
            layer.weight_len(),
            TensorKind::Weight { fan_in: layer.fan_in() },
        );
        layer.b = self.push(format!("{name}.bias"), layer.out_c, TensorKind::Bias);
        layer
    }
}

fn build_plan(cfg: &NetworkConfig) -> Result<(Plan, Vec<TensorInfo>, usize)> {
    cfg.validate()?;
    let mut lb = LayoutBuilder {
        offset: 0,
        layout: Vec::new(),
    };
    let stem = lb.conv(
        "stem",
        ConvLayer::new(
            cfg.input_channels,
            cfg.stage_widths[0],
            cfg.stem_kernel,
            cfg.stem_stride,
            cfg.input_rows,
            cfg.input_cols,
        ),
    );
    let (mut c, mut h, mut w) = (stem.out_c, stem.out_h, stem.out_w);
    let mut blocks = Vec::new();
    for (s, &width) in cfg.stage_widths.iter().enumerate() {
        for b in 0..cfg.blocks_per_stage {
            let stride = if s > 0 && b == 0 && h > 1 && w > 1 { 2 } else { 1 };
            let name = format!("stage{}.block{}", s + 1, b + 1);
            let conv1 = lb.conv(&format!("{name}.conv1"), ConvLayer::new(c, width, 3, stride, h, w));
            let conv2 = lb.conv(
                &format!("{name}.conv2"),
                ConvLayer::new(width, width, 3, 1, conv1.out_h, conv1.out_w),
            );
            let proj = (stride != 1 || c != width)
                .then(|| lb.conv(&format!("{name}.proj"), ConvLayer::new(c, width, 1, stride, h, w)));
            let gain = lb.push(format!("{name}.gain"), 1, TensorKind::Gain);
            (c, h, w) = (width, conv2.out_h, conv2.out_w);
            blocks.push(Block { conv1, conv2, proj, gain });
        }
    }
    let features = c;
    let thick_w = lb.push(
        "head.thickness.weight".into(),
        cfg.thickness_outputs * features,
        TensorKind::Weight { fan_in: features },
    );
    let thick_b = lb.push("head.thickness.bias".into(), cfg.thickness_outputs, TensorKind::Bias);
    let n_logits = cfg.metal_layers * cfg.classes;
    let type_w = lb.push(
        "head.material.weight".into(),
        n_logits * features,
        TensorKind::Weight { fan_in: features },
    );
    let type_b = lb.push("head.material.bias".into(), n_logits, TensorKind::Bias);
    let plan = Plan {
        stem,
        blocks,
        features,
        thick_w,
        thick_b,
        type_w,
        type_b,
    };
    Ok((plan, lb.layout, lb.offset))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOutput {
    /// Per-layer thickness in [0, 1] of its role range.
    pub thickness_norm: Vec<f64>,
    /// `metal_layers × classes`, row-major.
    pub metal_logits: Vec<f64>,
}

/// Gradient of a scalar loss with respect to the network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputAdjoint {
    pub d_thickness: Vec<f64>,
    pub d_logits: Vec<f64>,
}

impl OutputAdjoint {
    pub fn scaled(mut self, k: f64) -> Self {
        self.d_thickness.iter_mut().for_each(|v| *v *= k);
        self.d_logits.iter_mut().for_each(|v| *v *= k);
        self
    }
}

#[derive(Debug, Clone)]
struct BlockCache {
    p1: Vec<f64>,
    a1: Vec<f64>,
    p2: Vec<f64>,
    z: Vec<f64>,
}

/// Activations recorded by [`Network::forward`] for the reverse pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    input: Vec<f64>,
    stem_pre: Vec<f64>,
    /// `acts[0]` is the stem output, `acts[i + 1]` the output of block `i`.
    acts: Vec<Vec<f64>>,
    blocks: Vec<BlockCache>,
    features: Vec<f64>,
    thickness: Vec<f64>,
}

impl ForwardCache {
    pub fn features(&self) -> &[f64] {
        &self.features
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Converts a reflectance map into the network's input tensor: area resize
/// to the configured dimensions, then channel replication.
pub fn network_input(cfg: &NetworkConfig, map: &HeatMap) -> Result<Vec<f64>> {
    let resized = resize_map(map, cfg.input_rows, cfg.input_cols)?;
    Ok(replicate_channels(cfg, &resized))
}

fn replicate_channels(cfg: &NetworkConfig, map: &HeatMap) -> Vec<f64> {
    let plane: Vec<f64> = map.values().iter().map(|&v| v as f64).collect();
    let mut out = Vec::with_capacity(cfg.input_len());
    for _ in 0..cfg.input_channels {
        out.extend_from_slice(&plane);
    }
    out
}

fn round_f32(values: &mut [f64]) {
    for v in values {
        *v = *v as f32 as f64;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    plan: Plan,
    pub params: Parameters,
}

impl Network {
    /// He-normal weights (variance 2/fan_in), zero biases, residual gains at
    /// `residual_init`; deterministic per seed.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = seeded_rng(seed, 0x6e6574);
        for t in &net.params.layout {
            let slot = &mut net.params.values[t.offset..t.offset + t.len];
            match t.kind {
                TensorKind::Weight { fan_in } => {
                    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
                    slot.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
                }
                TensorKind::Gain => slot.fill(net.config.residual_init),
                TensorKind::Bias => {}
            }
        }
        round_f32(&mut net.params.values);
        Ok(net)
    }

    /// All parameters zero.
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        let (plan, layout, n) = build_plan(&config)?;
        Ok(Self {
            config,
            plan,
            params: Parameters {
                values: vec![0.0; n],
                grads: vec![0.0; n],
                layout,
                version: 0,
            },
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Installs a parameter vector (e.g. from a checkpoint).
    pub fn set_values(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::Shape {
                expected: format!("{} parameters", self.params.len()),
                actual: format!("{}", values.len()),
            });
        }
        self.params.values = values;
        self.params.touch();
        Ok(())
    }

    /// Forward pass on a map whose dimensions already match the config.
    pub fn forward(&self, map: &HeatMap) -> Result<(NetworkOutput, ForwardCache)> {
        if map.rows() != self.config.input_rows || map.cols() != self.config.input_cols {
            return Err(Error::Shape {
                expected: format!("{}x{} map", self.config.input_rows, self.config.input_cols),
                actual: format!("{}x{}", map.rows(), map.cols()),
            });
        }
        self.forward_input(replicate_channels(&self.config, map))
    }

    /// Forward pass on a prepared input tensor (see [`network_input`]).
    pub fn forward_input(&self, input: Vec<f64>) -> Result<(NetworkOutput, ForwardCache)> {
        if input.len() != self.config.input_len() {
            return Err(Error::Shape {
                expected: format!("input tensor of {} values", self.config.input_len()),
                actual: format!("{}", input.len()),
            });
        }
        let p = &self.params.values;
        let mut scratch = Vec::new();

        let mut stem_pre = Vec::new();
        self.plan.stem.forward(p, &input, &mut stem_pre, &mut scratch);
        let mut acts = vec![stem_pre.iter().map(|&x| silu(x)).collect::<Vec<_>>()];
        let mut blocks = Vec::with_capacity(self.plan.blocks.len());

        for blk in &self.plan.blocks {
            let x = acts.last().unwrap();
            let mut p1 = Vec::new();
            blk.conv1.forward(p, x, &mut p1, &mut scratch);
            let a1: Vec<f64> = p1.iter().map(|&v| silu(v)).collect();
            let mut p2 = Vec::new();
            blk.conv2.forward(p, &a1, &mut p2, &mut scratch);
            let mut short_buf = Vec::new();
            let short: &[f64] = match &blk.proj {
                Some(proj) => {
                    proj.forward(p, x, &mut short_buf, &mut scratch);
                    &short_buf
                }
                None => x,
            };
            let alpha = p[blk.gain];
            let z: Vec<f64> = short.iter().zip(&p2).map(|(s, r)| s + alpha * r).collect();
            let out: Vec<f64> = z.iter().map(|&v| silu(v)).collect();
            blocks.push(BlockCache { p1, a1, p2, z });
            acts.push(out);
        }

        let last = acts.last().unwrap();
        let c = self.plan.features;
        let area = last.len() / c;
        let features: Vec<f64> = (0..c)
            .map(|ch| last[ch * area..(ch + 1) * area].iter().sum::<f64>() / area as f64)
            .collect();

        let linear = |w: usize, b: usize, rows: usize| -> Vec<f64> {
            (0..rows)
                .map(|j| {
                    let row = &p[w + j * c..w + (j + 1) * c];
                    p[b + j] + row.iter().zip(&features).map(|(a, f)| a * f).sum::<f64>()
                })
                .collect()
        };
        let thickness: Vec<f64> = linear(self.plan.thick_w, self.plan.thick_b, self.config.thickness_outputs)
            .into_iter()
            .map(sigmoid)
            .collect();
        let logits = linear(
            self.plan.type_w,
            self.plan.type_b,
            self.config.metal_layers * self.config.classes,
        );

        let out = NetworkOutput {
            thickness_norm: thickness.clone(),
            metal_logits: logits,
        };
        if out.thickness_norm.iter().chain(&out.metal_logits).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        let cache = ForwardCache {
            version: self.params.version,
            input,
            stem_pre,
            acts,
            blocks,
            features,
            thickness,
        };
        Ok((out, cache))
    }

    pub fn predict_input(&self, input: Vec<f64>) -> Result<NetworkOutput> {
        Ok(self.forward_input(input)?.0)
    }

    /// Reverse pass: adds d(loss)/d(parameter) into `grads`.
    pub fn backward(&self, cache: &ForwardCache, adj: &OutputAdjoint, grads: &mut [f64]) -> Result<()> {
        if cache.version != self.params.version {
            return Err(Error::Contract(format!(
                "forward cache from parameter version {} used with version {}",
                cache.version, self.params.version
            )));
        }
        if grads.len() != self.params.len()
            || adj.d_thickness.len() != self.config.thickness_outputs
            || adj.d_logits.len() != self.config.metal_layers * self.config.classes
        {
            return Err(Error::Shape {
                expected: "gradient buffer and adjoint matching the network".into(),
                actual: format!(
                    "{} grads, {} thickness, {} logits",
                    grads.len(),
                    adj.d_thickness.len(),
                    adj.d_logits.len()
                ),
            });
        }
        let p = &self.params.values;
        let plan = &self.plan;
        let c = plan.features;

        let mut d_features = vec![0.0; c];
        let mut head = |w: usize, b: usize, d_pre: &[f64], grads: &mut [f64]| {
            for (j, &g) in d_pre.iter().enumerate() {
                grads[b + j] += g;
                let row = w + j * c;
                for ch in 0..c {
                    grads[row + ch] += g * cache.features[ch];
                    d_features[ch] += g * p[row + ch];
                }
            }
        };
        let d_th_pre: Vec<f64> = adj
            .d_thickness
            .iter()
            .zip(&cache.thickness)
            .map(|(d, t)| d * t * (1.0 - t))
            .collect();
        head(plan.thick_w, plan.thick_b, &d_th_pre, grads);
        head(plan.type_w, plan.type_b, &adj.d_logits, grads);

        let last = cache.acts.last().unwrap();
        let area = last.len() / c;
        let mut d_act: Vec<f64> = (0..last.len()).map(|i| d_features[i / area] / area as f64).collect();

        let mut scratch = Vec::new();
        for (i, blk) in plan.blocks.iter().enumerate().rev() {
            let bc = &cache.blocks[i];
            let x = &cache.acts[i];
            let dz: Vec<f64> = d_act.iter().zip(&bc.z).map(|(d, &z)| d * silu_grad(z)).collect();

            let mut dx = vec![0.0; x.len()];
            match &blk.proj {
                Some(proj) => proj.backward(p, grads, x, &dz, Some(&mut dx), &mut scratch),
                None => dx.copy_from_slice(&dz),
            }
            let alpha = p[blk.gain];
            grads[blk.gain] += dz.iter().zip(&bc.p2).map(|(d, r)| d * r).sum::<f64>();
            let dp2: Vec<f64> = dz.iter().map(|d| alpha * d).collect();
            let mut da1 = vec![0.0; bc.a1.len()];
            blk.conv2.backward(p, grads, &bc.a1, &dp2, Some(&mut da1), &mut scratch);
            let dp1: Vec<f64> = da1.iter().zip(&bc.p1).map(|(d, &v)| d * silu_grad(v)).collect();
            blk.conv1.backward(p, grads, x, &dp1, Some(&mut dx), &mut scratch);
            d_act = dx;
        }

        let d_stem: Vec<f64> = d_act
            .iter()
            .zip(&cache.stem_pre)
            .map(|(d, &v)| d * silu_grad(v))
            .collect();
        plan.stem.backward(p, grads, &cache.input, &d_stem, None, &mut scratch);
        Ok(())
    }

    /// One Adam update from `params.grads`, keeping everything f32-representable.
    pub fn apply_adam(&mut self, state: &mut AdamState, lr: f64) -> Result<()> {
        adam_step(&mut self.params.values, &self.params.grads, state, lr)?;
        round_f32(&mut self.params.values);
        state.round_f32();
        self.params.touch();
        Ok(())
    }
}

/// Maps network outputs to a concrete stack: thickness rounded to whole nm
/// inside its role range, metal = argmax of the layer's logits (ties go to
/// the lowest palette index), dielectric layers fixed.
pub fn decode(out: &NetworkOutput, spec: &StructureSpec) -> Result<StructureVector> {
    let classes = spec.palette.len();
    if out.thickness_norm.len() != spec.layer_count || out.metal_logits.len() != spec.metal_layer_count() * classes {
        return Err(Error::Shape {
            expected: format!("{} thicknesses, {} logits", spec.layer_count, spec.metal_layer_count() * classes),
            actual: format!("{}, {}", out.thickness_norm.len(), out.metal_logits.len()),
        });
    }
    let layers = (0..spec.layer_count)
        .map(|i| {
            let role = spec.role(i);
            let r = spec.range(role);
            let raw = r.min_nm + out.thickness_norm[i].clamp(0.0, 1.0) * r.span();
            let h = raw.round().clamp(r.min_nm.ceil(), r.max_nm.floor());
            let material = match role {
                LayerRole::Metal => {
                    let slot = i / 2;
                    spec.palette[argmax(&out.metal_logits[slot * classes..(slot + 1) * classes])]
                }
                LayerRole::Dielectric => spec.dielectric,
            };
            Ok(Layer::new(h, material))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StructureVector::new(layers))
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::MaterialId;

    fn tiny_config() -> NetworkConfig {
        NetworkConfig {
            input_rows: 12,
            input_cols: 10,
            stage_widths: vec![3, 4],
            ..NetworkConfig::desk(&StructureSpec::desk())
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = Network::new(tiny_config(), 4).unwrap();
        let b = Network::new(tiny_config(), 4).unwrap();
        assert_eq!(a.params.values, b.params.values);
        let c = Network::new(tiny_config(), 5).unwrap();
        assert_ne!(a.params.values, c.params.values);
    }

    #[test]
    fn he_variance_and_zero_biases() {
        let net = Network::new(NetworkConfig::desk(&StructureSpec::desk()), 1).unwrap();
        for t in &net.params.layout {
            let vals = &net.params.values[t.offset..t.offset + t.len];
            match t.kind {
                TensorKind::Bias | TensorKind::Gain => assert!(vals.iter().all(|&v| v == 0.0), "{}", t.name),
                TensorKind::Weight { fan_in } => {
                    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
                    let target = 2.0 / fan_in as f64;
                    assert!((var / target - 1.0).abs() < 0.2, "{}: {var} vs {target}", t.name);
                }
            }
        }
        assert!(net.params.values.iter().all(|&v| v as f32 as f64 == v));
    }

    #[test]
    fn desk_layout_shapes() {
        let net = Network::zeros(NetworkConfig::desk(&StructureSpec::desk())).unwrap();
        assert_eq!(net.plan.stem.out_h, 32);
        assert_eq!(net.plan.blocks.last().unwrap().conv2.out_h, 4);
        assert_eq!(net.plan.features, 128);
        assert!(net.params.tensor("stage2.block1.proj.weight").is_some());
        assert!(net.params.tensor("stage1.block1.proj.weight").is_none());
        let last = net.params.layout.last().unwrap();
        assert_eq!(last.offset + last.len, net.num_params());
    }

    #[test]
    fn paper_preset_builds() {
        let cfg = NetworkConfig::paper(&StructureSpec::paper());
        let net = Network::zeros(cfg).unwrap();
        assert_eq!(net.plan.stem.out_c, 64);
        assert_eq!(net.plan.features, 512);
        assert_eq!(net.plan.blocks.len(), 8);
        assert_eq!(net.config.metal_layers * net.config.classes, 20);
    }

    #[test]
    fn zero_network_outputs_half_and_zero_logits() {
        let cfg = tiny_config();
        let net = Network::zeros(cfg.clone()).unwrap();
        let map = HeatMap::filled(cfg.input_rows, cfg.input_cols, 0.0).unwrap();
        let (out, _) = net.forward(&map).unwrap();
        assert!(out.thickness_norm.iter().all(|&t| t == 0.5));
        assert!(out.metal_logits.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn shape_mismatch_names_dims() {
        let net = Network::zeros(tiny_config()).unwrap();
        let err = net.forward(&HeatMap::filled(5, 5, 0.1).unwrap()).unwrap_err().to_string();
        assert!(err.contains("12x10") && err.contains("5x5"), "{err}");
    }

    #[test]
    fn three_channel_replication() {
        let cfg = NetworkConfig {
            input_channels: 3,
            ..tiny_config()
        };
        let map = HeatMap::filled(24, 20, 0.3).unwrap();
        let input = network_input(&cfg, &map).unwrap();
        assert_eq!(input.len(), 3 * 12 * 10);
        assert!(input.iter().all(|&v| (v - 0.3f32 as f64).abs() < 1e-7));
    }

    #[test]
    fn stale_cache_rejected() {
        let cfg = tiny_config();
        let mut net = Network::new(cfg.clone(), 2).unwrap();
        let (_, cache) = net.forward(&HeatMap::filled(12, 10, 0.2).unwrap()).unwrap();
        net.params.touch();
        let adj = OutputAdjoint {
            d_thickness: vec![0.0; cfg.thickness_outputs],
            d_logits: vec![0.0; cfg.metal_layers * cfg.classes],
        };
        let mut g = vec![0.0; net.num_params()];
        assert!(matches!(net.backward(&cache, &adj, &mut g), Err(Error::Contract(_))));
    }

    #[test]
    fn backward_is_linear_in_adjoint() {
        let cfg = tiny_config();
        let net = Network::new(cfg.clone(), 3).unwrap();
        let map = HeatMap::new(12, 10, (0..120).map(|i| (i % 7) as f32 / 7.0).collect()).unwrap();
        let (_, cache) = net.forward(&map).unwrap();
        let adj = OutputAdjoint {
            d_thickness: (0..cfg.thickness_outputs).map(|i| 0.1 * i as f64 - 0.2).collect(),
            d_logits: (0..cfg.metal_layers * cfg.classes).map(|i| ((i * 5) % 3) as f64 - 1.0).collect(),
        };
        let mut g1 = vec![0.0; net.num_params()];
        let mut g2 = vec![0.0; net.num_params()];
        net.backward(&cache, &adj, &mut g1).unwrap();
        net.backward(&cache, &adj.clone().scaled(2.0), &mut g2).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-300), "{a} {b}");
        }
    }

    #[test]
    fn decode_examples() {
        let spec = StructureSpec::desk();
        let mut out = NetworkOutput {
            thickness_norm: vec![0.0; 6],
            metal_logits: vec![0.0; 12],
        };
        out.metal_logits[..4].copy_from_slice(&[0.1, 2.0, -1.0, 0.0]);
        let sv = decode(&out, &spec).unwrap();
        assert_eq!(sv.layers[0], Layer::new(5.0, MaterialId::Ag));
        // uniform logits → lowest palette index
        assert_eq!(sv.layers[2].material, MaterialId::Au);
        assert_eq!(sv.layers[1], Layer::new(5.0, MaterialId::SiO2));

        out.thickness_norm = vec![1.0; 6];
        let sv = decode(&out, &spec).unwrap();
        assert_eq!(sv.layers[0].thickness_nm, 10.0);
        assert_eq!(sv.layers[1].thickness_nm, 40.0);
        spec.check(&sv).unwrap();
    }
}
