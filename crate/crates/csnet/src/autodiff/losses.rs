//! Differentiable loss primitives: Chamfer distance against a fixed
//! target cloud, and mean binary cross entropy.
//!
//! Chamfer nearest-neighbor correspondences are fixed during the forward
//! pass; gradients flow through the distance terms of the matched pairs
//! only (the standard subgradient choice at argmin ties).

use super::{Op, Tape, Value};
use crate::error::{CsError, Result};
use crate::geom::dist2;

const BCE_CLAMP: f64 = 1e-7;
// matched pairs closer than this get zero gradient (norm is not
// differentiable at 0)
const CHAMFER_ZERO: f64 = 1e-12;

pub(super) fn chamfer_loss(tape: &mut Tape, pred: Value, gt: &[[f64; 3]]) -> Result<Value> {
    let (n, c) = tape.shape(pred);
    if c != 3 {
        return Err(CsError::shape(format!("chamfer_loss: pred has {} columns", c)));
    }
    if n == 0 || gt.is_empty() {
        return Err(CsError::invalid("chamfer_loss: empty input"));
    }
    let pred_pts = tape.points(pred)?;
    let nearest = |p: &[f64; 3], cloud: &[[f64; 3]]| -> (usize, f64) {
        let mut best = 0;
        let mut best_d2 = f64::INFINITY;
        for (i, q) in cloud.iter().enumerate() {
            let d2 = dist2(p, q);
            if d2 < best_d2 {
                best_d2 = d2;
                best = i;
            }
        }
        (best, best_d2)
    };
    let mut pred_match = Vec::with_capacity(n);
    let mut sum_a = 0.0;
    for p in &pred_pts {
        let (i, d2) = nearest(p, gt);
        pred_match.push(i);
        sum_a += d2.sqrt();
    }
    let mut gt_match = Vec::with_capacity(gt.len());
    let mut sum_b = 0.0;
    for q in gt {
        let (i, d2) = nearest(q, &pred_pts);
        gt_match.push(i);
        sum_b += d2.sqrt();
    }
    let loss = sum_a / n as f64 + sum_b / gt.len() as f64;
    let rg = tape.needs_grad(pred);
    Ok(tape.push_loss(
        loss,
        rg,
        Op::ChamferLoss {
            pred,
            gt: gt.to_vec(),
            pred_match,
            gt_match,
        },
    ))
}

pub(super) fn chamfer_backward(
    tape: &Tape,
    pred: Value,
    gt: &[[f64; 3]],
    pred_match: &[usize],
    gt_match: &[usize],
    upstream: f64,
    grads: &mut [Option<Vec<f64>>],
) {
    let pred_pts = tape.points(pred).expect("pred was Nx3 at forward time");
    let n = pred_pts.len() as f64;
    let m = gt.len() as f64;
    tape.add_grad(grads, pred, |gp| {
        for (i, (p, &j)) in pred_pts.iter().zip(pred_match).enumerate() {
            let q = &gt[j];
            let d = dist2(p, q).sqrt();
            if d > CHAMFER_ZERO {
                for a in 0..3 {
                    gp[i * 3 + a] += upstream * (p[a] - q[a]) / d / n;
                }
            }
        }
        for (j, (q, &i)) in gt.iter().zip(gt_match).enumerate() {
            let p = &pred_pts[i];
            let _ = j;
            let d = dist2(p, q).sqrt();
            if d > CHAMFER_ZERO {
                for a in 0..3 {
                    gp[i * 3 + a] += upstream * (p[a] - q[a]) / d / m;
                }
            }
        }
    });
}

pub(super) fn bce_loss(tape: &mut Tape, pred: Value, gt: &[f64]) -> Result<Value> {
    let (r, c) = tape.shape(pred);
    if r * c != gt.len() {
        return Err(CsError::shape(format!(
            "bce_loss: pred has {} entries, gt has {}",
            r * c,
            gt.len()
        )));
    }
    if gt.is_empty() {
        return Err(CsError::invalid("bce_loss: empty input"));
    }
    let mut sum = 0.0;
    for (&p, &g) in tape.value(pred).iter().zip(gt) {
        let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        sum -= g * p.ln() + (1.0 - g) * (1.0 - p).ln();
    }
    let loss = sum / gt.len() as f64;
    let rg = tape.needs_grad(pred);
    Ok(tape.push_loss(loss, rg, Op::BceLoss { pred, gt: gt.to_vec() }))
}

pub(super) fn bce_backward(
    tape: &Tape,
    pred: Value,
    gt: &[f64],
    upstream: f64,
    grads: &mut [Option<Vec<f64>>],
) {
    let vals = tape.value(pred).to_vec();
    let n = gt.len() as f64;
    tape.add_grad(grads, pred, |gp| {
        for (i, (&p, &g)) in vals.iter().zip(gt).enumerate() {
            // clamped values sit on a constant plateau: zero gradient
            if p < BCE_CLAMP || p > 1.0 - BCE_CLAMP {
                continue;
            }
            gp[i] += upstream * (-(g / p) + (1.0 - g) / (1.0 - p)) / n;
        }
    });
}
