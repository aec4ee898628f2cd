//! Hybrid loss: relative L2 on thicknesses plus a material-type term.
//!
//! The 0/1 material error has no useful gradient, so training uses mean
//! cross-entropy over metal layers and the 0/1 rate is reported next to it.

use super::{argmax, NetworkOutput, OutputAdjoint};
use crate::design::{LayerRole, StructureSpec, StructureVector};
use crate::error::{Error, Result};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - lse).collect()
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

fn same_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape {
            expected: format!("{a} {what}"),
            actual: format!("{b}"),
        });
    }
    Ok(())
}

/// `‖t − t̃‖ / ‖t‖`; a zero-norm target is a domain error.
pub fn thickness_loss(target: &[f64], predicted: &[f64]) -> Result<f64> {
    same_len(target.len(), predicted.len(), "thicknesses")?;
    let tn = norm(target.iter().copied());
    if tn == 0.0 {
        return Err(Error::domain("thickness loss undefined for a zero target vector"));
    }
    Ok(norm(target.iter().zip(predicted).map(|(a, b)| a - b)) / tn)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeLoss {
    /// Mean cross-entropy over metal layers.
    pub surrogate: f64,
    /// Fraction of metal layers whose argmax differs from the target.
    pub error01: f64,
}

/// `logits` is `targets.len() × classes`, row-major.
pub fn type_loss(targets: &[usize], logits: &[f64]) -> Result<TypeLoss> {
    if targets.is_empty() {
        return Ok(TypeLoss {
            surrogate: 0.0,
            error01: 0.0,
        });
    }
    if !logits.len().is_multiple_of(targets.len()) {
        return Err(Error::Shape {
            expected: format!("a multiple of {} logits", targets.len()),
            actual: format!("{}", logits.len()),
        });
    }
    let classes = logits.len() / targets.len();
    let mut ce = 0.0;
    let mut wrong = 0usize;
    for (row, &m) in logits.chunks(classes).zip(targets) {
        if m >= classes {
            return Err(Error::domain(format!("material index {m} outside {classes} classes")));
        }
        ce -= log_softmax(row)[m];
        wrong += usize::from(argmax(row) != m);
    }
    let n = targets.len() as f64;
    Ok(TypeLoss {
        surrogate: ce / n,
        error01: wrong as f64 / n,
    })
}

/// Unweighted sum of [`thickness_loss`] and the cross-entropy surrogate.
pub fn hybrid_loss(t: &[f64], t_pred: &[f64], m: &[usize], logits: &[f64]) -> Result<f64> {
    Ok(thickness_loss(t, t_pred)? + type_loss(m, logits)?.surrogate)
}

/// Training targets in the network's output space.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    /// Per-layer thickness normalized to its role range.
    pub thickness_norm: Vec<f64>,
    /// Palette index of each metal layer.
    pub metals: Vec<usize>,
}

impl Targets {
    pub fn from_structure(sv: &StructureVector, spec: &StructureSpec) -> Result<Self> {
        spec.check(sv)?;
        let mut thickness_norm = Vec::with_capacity(sv.len());
        let mut metals = Vec::new();
        for (i, l) in sv.layers.iter().enumerate() {
            let role = spec.role(i);
            thickness_norm.push(spec.range(role).normalize(l.thickness_nm));
            if role == LayerRole::Metal {
                metals.push(spec.palette_index(l.material).ok_or_else(|| {
                    Error::domain(format!("layer {i}: {} not in palette", l.material))
                })?);
            }
        }
        Ok(Self { thickness_norm, metals })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub thickness: f64,
    pub type_surrogate: f64,
    pub type_error: f64,
}

/// Loss for one sample and its gradient with respect to the outputs.
///
/// Thicknesses are compared in normalized units. When the normalized target
/// is the zero vector the relative norm has no scale, so the absolute norm
/// is used for that sample.
pub fn sample_loss(out: &NetworkOutput, targets: &Targets, type_weight: f64) -> Result<(LossParts, OutputAdjoint)> {
    let t = &targets.thickness_norm;
    let p = &out.thickness_norm;
    same_len(t.len(), p.len(), "thickness outputs")?;
    let tn = match norm(t.iter().copied()) {
        0.0 => 1.0,
        v => v,
    };
    let diff: Vec<f64> = p.iter().zip(t).map(|(a, b)| a - b).collect();
    let dn = norm(diff.iter().copied());
    let thickness = dn / tn;
    let d_thickness = if dn > 0.0 {
        diff.iter().map(|d| d / (dn * tn)).collect()
    } else {
        vec![0.0; diff.len()]
    };

    let ty = type_loss(&targets.metals, &out.metal_logits)?;
    let mut d_logits = vec![0.0; out.metal_logits.len()];
    if !targets.metals.is_empty() {
        let classes = out.metal_logits.len() / targets.metals.len();
        let scale = type_weight / targets.metals.len() as f64;
        for (slot, &m) in targets.metals.iter().enumerate() {
            let row = slot * classes..(slot + 1) * classes;
            let sm = softmax(&out.metal_logits[row.clone()]);
            for (c, (d, s)) in d_logits[row].iter_mut().zip(sm).enumerate() {
                *d = scale * (s - f64::from(u8::from(c == m)));
            }
        }
    }

    let parts = LossParts {
        total: thickness + type_weight * ty.surrogate,
        thickness,
        type_surrogate: ty.surrogate,
        type_error: ty.error01,
    };
    Ok((parts, OutputAdjoint { d_thickness, d_logits }))
}
