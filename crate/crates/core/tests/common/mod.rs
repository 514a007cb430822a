#![allow(dead_code)]

use pscf_core::experiments::{batch_loss, batch_loss_and_grad, build_dataset, BatchLoss, Dataset, LossMode};
use pscf_core::losses::sd_gap;
use pscf_core::nn::{Gradients, MlpModel};
use pscf_core::seed::rng_for;
use pscf_core::{EmbeddingKind, RuleId};
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOLERANCE: f64 = 1e-4;

#[derive(Debug)]
pub struct GradCheck {
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
    pub worst: Option<(usize, f64, f64)>,
    pub loss: BatchLoss,
}

/// Everything the piecewise-smooth loss branches on: ReLU signs of every
/// hidden unit on every row, `sign(y - t)`, and the worst abstention of
/// each profile.
fn branch_signature(model: &MlpModel, data: &Dataset, indices: &[usize], mode: LossMode) -> Vec<i8> {
    let d = data.feature_dim();
    let m = data.m;
    let n = data.n;
    let mut xs = Vec::new();
    for &i in indices {
        xs.extend_from_slice(data.feature_row(i));
    }
    if mode.uses_participation() {
        for &i in indices {
            xs.extend_from_slice(data.abstention_rows(i).unwrap());
        }
    }
    let rows = xs.len() / d;
    let cache = model.forward_batch(&xs, rows).unwrap();
    let pre = cache.pre_activations();
    let mut sig = Vec::new();
    for layer in &pre[..pre.len() - 1] {
        sig.extend(layer.iter().map(|&z| (z > 0.0) as i8));
    }
    let out = cache.output();
    for (r, &i) in indices.iter().enumerate() {
        for (y, t) in out[r * m..(r + 1) * m].iter().zip(data.target_row(i)) {
            sig.push(if y > t { 1 } else if y < t { -1 } else { 0 });
        }
    }
    if mode.uses_participation() {
        let base = indices.len();
        for (r, &i) in indices.iter().enumerate() {
            let q = &out[r * m..(r + 1) * m];
            let mut worst = (0.0, 0usize, 0usize);
            for v in 0..n {
                let row = base + r * n + v;
                let p = &out[row * m..(row + 1) * m];
                let (gap, prefix) = sd_gap(p, data.profiles[i].ballots()[v].ranking(), q);
                if gap > worst.0 {
                    worst = (gap, v, prefix);
                }
            }
            sig.push(worst.1 as i8);
            sig.push(worst.2 as i8);
        }
    }
    sig
}

/// Central finite differences against backprop on `coords` random parameters
/// of an `m=3`, width-8 model. Coordinates whose `±step` perturbation changes
/// a branch of the loss are skipped.
pub fn gradient_check(mode: LossMode, seed: u64, coords: usize) -> GradCheck {
    let mut data = build_dataset(RuleId::Plurality, EmbeddingKind::RankFrequency, 3, 5, 24, seed).unwrap();
    if mode.uses_participation() {
        data = data.with_abstentions().unwrap();
    }
    let mut model = MlpModel::new(&[9, 8, 8, 3], seed).unwrap();
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut grads = Gradients::zeros_like(&model);
    let loss = batch_loss_and_grad(&model, &data, &indices, mode, &mut grads).unwrap();
    let base_sig = branch_signature(&model, &data, &indices, mode);

    let mut rng = rng_for(seed, 99);
    let total = model.num_params();
    let mut check = GradCheck {
        checked: 0,
        skipped: 0,
        max_rel_err: 0.0,
        worst: None,
        loss,
    };
    let mut attempts = 0;
    while check.checked < coords && attempts < 20 * coords {
        attempts += 1;
        let j = rng.random_range(0..total);
        let theta = model.param(j);
        model.set_param(j, theta + FD_STEP);
        let plus = batch_loss(&model, &data, &indices, mode).unwrap().loss;
        let plus_sig = branch_signature(&model, &data, &indices, mode);
        model.set_param(j, theta - FD_STEP);
        let minus = batch_loss(&model, &data, &indices, mode).unwrap().loss;
        let minus_sig = branch_signature(&model, &data, &indices, mode);
        model.set_param(j, theta);
        if plus_sig != base_sig || minus_sig != base_sig {
            check.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let analytic = grads.get(j);
        let scale = numeric.abs().max(analytic.abs()).max(1e-7);
        let rel = (numeric - analytic).abs() / scale;
        if rel > check.max_rel_err {
            check.max_rel_err = rel;
            check.worst = Some((j, analytic, numeric));
        }
        check.checked += 1;
    }
    check
}
