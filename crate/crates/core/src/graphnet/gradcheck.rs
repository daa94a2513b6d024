use std::ops::Range;

use ndarray::Array2;
use rand::Rng;

use super::model::{batch_loss, forward, loss_and_gradient, ModelParams, TENSOR_NAMES};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;
/// Floor of the relative-error denominator, so entries with vanishing
/// gradients are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// Tensor and flat index of the worst entry.
    pub worst: Option<(&'static str, usize)>,
    pub checked: usize,
    /// Entries whose step straddled an activation kink.
    pub skipped: usize,
}

/// Selection of parameter entries to compare.
pub enum Entries<'a, R: Rng> {
    All,
    /// Up to this many random entries per tensor.
    Sample(usize, &'a mut R),
}

/// Compares analytic gradients of the batch loss with central differences.
/// An entry is skipped when the differences at `h` and `h/2` disagree, which
/// signals a LeakyReLU kink inside the step.
pub fn check_gradients<R: Rng>(
    params: &ModelParams,
    x: &Array2<f64>,
    segs: &[Range<usize>],
    truths: &[&Array2<f64>],
    pos_weight: f64,
    entries: Entries<'_, R>,
) -> Result<GradCheck> {
    let cache = forward(params, x.clone(), segs.to_vec())?;
    let mut grads = ModelParams::zeros(&params.config);
    loss_and_gradient(params, &cache, truths, pos_weight, &mut grads);

    let loss_at = |p: &ModelParams| -> Result<f64> {
        let c = forward(p, x.clone(), segs.to_vec())?;
        Ok(batch_loss(&c, truths, pos_weight))
    };

    let mut picks: Vec<(usize, usize)> = Vec::new();
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    match entries {
        Entries::All => {
            for (t, &n) in sizes.iter().enumerate() {
                picks.extend((0..n).map(|k| (t, k)));
            }
        }
        Entries::Sample(per, rng) => {
            for (t, &n) in sizes.iter().enumerate() {
                if n <= per {
                    picks.extend((0..n).map(|k| (t, k)));
                } else {
                    picks.extend((0..per).map(|_| (t, rng.random_range(0..n))));
                }
            }
        }
    }

    let mut out = GradCheck::default();
    let mut p = params.clone();
    for (t, k) in picks {
        let orig = params.tensors()[t].as_slice().unwrap()[k];
        let mut diff = |h: f64| -> Result<f64> {
            p.tensors_mut()[t].as_slice_mut().unwrap()[k] = orig + h;
            let up = loss_at(&p)?;
            p.tensors_mut()[t].as_slice_mut().unwrap()[k] = orig - h;
            let down = loss_at(&p)?;
            p.tensors_mut()[t].as_slice_mut().unwrap()[k] = orig;
            Ok((up - down) / (2.0 * h))
        };
        let fd = diff(FD_STEP)?;
        let fd_half = diff(FD_STEP / 2.0)?;
        if (fd - fd_half).abs() > 1e-5 * fd.abs().max(fd_half.abs()).max(REL_FLOOR) {
            out.skipped += 1;
            continue;
        }
        let a = grads.tensors()[t].as_slice().unwrap()[k];
        let rel = (a - fd).abs() / (a.abs() + fd.abs()).max(REL_FLOOR);
        out.checked += 1;
        if rel > out.max_rel_err || out.worst.is_none() {
            out.max_rel_err = out.max_rel_err.max(rel);
            if rel >= out.max_rel_err {
                out.worst = Some((TENSOR_NAMES[t], k));
            }
        }
    }
    Ok(out)
}
