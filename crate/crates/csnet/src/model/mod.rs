//! The cascaded completion-and-segmentation network.
//!
//! The network runs M blocks. Every block predicts per-point object
//! labels and a completed cloud; blocks after the first purify the input
//! by multiplying it with the previous labels (collapsing outliers toward
//! the origin), fuse it with the previous completion, farthest-point
//! sample back to N points, and refine point positions with a learned
//! shift plus KNN grouping. Features are shared between the segmentation
//! and completion paths so the two tasks promote each other.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use crate::autodiff::{Tape, Value};
use crate::error::{CsError, Result};
use crate::geom::{farthest_point_sample_points, knn_points, PointCloud};
use crate::nn::{self, Binder, Params};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// All learnable weights of the network, addressable by hierarchical name.
pub type CsNetParams = Params;

/// Architecture and loss configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CsNetConfig {
    /// Number of cascaded blocks.
    pub m_blocks: usize,
    /// Points per cloud (inputs are resampled to this).
    pub n_points: usize,
    /// Neighbors grouped during refinement.
    pub k_neighbors: usize,
    /// Branching factor of the coarse tree decoder; the level count is
    /// the smallest L with branching^L >= n_points.
    pub coarse_branching: usize,
    /// Scales every channel width; 1.0 is full scale, 0.25 desk scale.
    pub width_multiplier: f64,
    /// Optional explicit widths for the two refinement feature MLPs.
    pub f_prime_width: Option<usize>,
    pub f_double_width: Option<usize>,
    /// Segmentation loss weight.
    pub alpha1: f64,
    /// Reconstruction loss weight.
    pub alpha2: f64,
    /// Ablation switches.
    pub enable_label_mult_fps: bool,
    pub enable_knn_refine: bool,
    pub enable_feature_sharing: bool,
    pub enable_segmentation: bool,
    pub enable_completion: bool,
}

impl Default for CsNetConfig {
    fn default() -> Self {
        CsNetConfig {
            m_blocks: 3,
            n_points: 2048,
            k_neighbors: 8,
            coarse_branching: 4,
            width_multiplier: 1.0,
            f_prime_width: None,
            f_double_width: None,
            alpha1: 0.01,
            alpha2: 1.0,
            enable_label_mult_fps: true,
            enable_knn_refine: true,
            enable_feature_sharing: true,
            enable_segmentation: true,
            enable_completion: true,
        }
    }
}

impl CsNetConfig {
    /// Desk-scale profile: small clouds and narrow layers, trainable on
    /// one CPU core.
    pub fn desk() -> Self {
        CsNetConfig {
            n_points: 256,
            width_multiplier: 0.25,
            ..Default::default()
        }
    }

    /// Miniature profile used by gradient checks (all widths <= 16).
    pub fn miniature() -> Self {
        CsNetConfig {
            m_blocks: 2,
            n_points: 32,
            k_neighbors: 4,
            width_multiplier: 1.0 / 32.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_blocks < 1 {
            return Err(CsError::invalid("m_blocks must be >= 1"));
        }
        if self.n_points < 4 {
            return Err(CsError::invalid("n_points must be >= 4"));
        }
        if self.k_neighbors == 0 || self.k_neighbors > self.n_points {
            return Err(CsError::invalid("k_neighbors must be in [1, n_points]"));
        }
        if self.coarse_branching < 2 {
            return Err(CsError::invalid("coarse_branching must be >= 2"));
        }
        if self.alpha1 < 0.0 || self.alpha2 < 0.0 {
            return Err(CsError::invalid("loss weights must be >= 0"));
        }
        if !self.enable_segmentation && !self.enable_completion {
            return Err(CsError::invalid(
                "at least one of segmentation/completion must be enabled",
            ));
        }
        if self.enable_label_mult_fps && !self.enable_segmentation {
            return Err(CsError::invalid(
                "label-multiplication FPS requires the segmentation pipeline",
            ));
        }
        Ok(())
    }

    fn width(&self, base: usize) -> usize {
        ((base as f64 * self.width_multiplier).round() as usize).max(2)
    }

    pub(crate) fn channels(&self) -> Channels {
        Channels {
            c1: self.width(64),
            c2: self.width(128),
            c3: self.width(256),
            cg: self.width(512),
            child: self.width(64),
            cfp: self.f_prime_width.unwrap_or_else(|| self.width(256)),
            cfpp: self.f_double_width.unwrap_or_else(|| self.width(256)),
        }
    }

    /// Smallest L with branching^L >= n_points.
    pub fn coarse_levels(&self) -> usize {
        let mut l = 1usize;
        let mut n = self.coarse_branching;
        while n < self.n_points {
            n *= self.coarse_branching;
            l += 1;
        }
        l
    }

    /// True when the blocks actually exchange features between the two
    /// pipelines (requires both to exist).
    pub fn sharing_active(&self) -> bool {
        self.enable_feature_sharing && self.enable_segmentation && self.enable_completion
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Channels {
    pub c1: usize,
    pub c2: usize,
    pub c3: usize,
    pub cg: usize,
    pub child: usize,
    pub cfp: usize,
    pub cfpp: usize,
}

/// Initialize all parameters declared by the architecture. Glorot-uniform
/// weights, zero biases; the final layer of each shift MLP is
/// zero-initialized so refinement starts at identity.
pub fn init_params(cfg: &CsNetConfig, seed: u64) -> Result<CsNetParams> {
    cfg.validate()?;
    let ch = cfg.channels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Params::new();

    if cfg.enable_segmentation {
        p.declare_mlp(&mut rng, "fe.local", &[3, ch.c1, ch.c1], false)?;
        p.declare_mlp(&mut rng, "fe.post", &[2 * ch.c1, ch.c2, ch.c3], false)?;
        for i in 0..cfg.m_blocks {
            let extra = if i > 0 && cfg.sharing_active() {
                ch.cg + 1
            } else {
                0
            };
            p.declare_mlp(
                &mut rng,
                &format!("seg.head.{}", i),
                &[ch.c3 + 3 + extra, ch.c3, ch.c1, 1],
                false,
            )?;
        }
    }

    if cfg.enable_completion {
        let b = cfg.coarse_branching;
        p.declare_mlp(&mut rng, "coarse.enc", &[3, ch.c1, ch.c2, ch.c3], false)?;
        p.declare_linear(&mut rng, "coarse.fc", ch.c3, ch.cg, false)?;
        p.declare_linear(&mut rng, "coarse.root", ch.c3, b * ch.child, false)?;
        for l in 0..cfg.coarse_levels() - 1 {
            p.declare_linear(
                &mut rng,
                &format!("coarse.expand.{}", l),
                ch.child,
                b * ch.child,
                false,
            )?;
        }
        p.declare_linear(&mut rng, "coarse.leaf", ch.child, 3, false)?;

        let gin = if cfg.enable_segmentation { 4 } else { 3 };
        for i in 1..cfg.m_blocks {
            p.declare_mlp(&mut rng, &format!("gf.{}.f1", i), &[gin, ch.c1, ch.c2], false)?;
            p.declare_mlp(&mut rng, &format!("gf.{}.f3", i), &[2 * ch.c2, ch.c3, ch.cg], false)?;
            p.declare_mlp(&mut rng, &format!("fp.{}", i), &[3 + ch.cg, ch.c2, ch.cfp], false)?;
            p.declare_mlp(
                &mut rng,
                &format!("fpp.{}", i),
                &[2 * ch.cfp + 3, ch.c2, ch.cfpp],
                false,
            )?;
            p.declare_mlp(
                &mut rng,
                &format!("shift1.{}", i),
                &[ch.cfp + ch.cfpp + 3, ch.c2, 3],
                true,
            )?;
            if cfg.enable_knn_refine {
                p.declare_mlp(
                    &mut rng,
                    &format!("shift2.{}", i),
                    &[3 + 3 * cfg.k_neighbors + ch.cfp + ch.cfpp, ch.c2, 3],
                    true,
                )?;
            }
        }
    }
    Ok(p)
}

/// Verify that a loaded checkpoint matches the architecture the config
/// declares (same parameter names and shapes).
pub fn check_params(cfg: &CsNetConfig, params: &CsNetParams) -> Result<()> {
    let expected = init_params(cfg, 0)?;
    for (name, t) in expected.iter() {
        match params.get(name) {
            Ok(loaded) if (loaded.rows, loaded.cols) == (t.rows, t.cols) => {}
            Ok(loaded) => {
                return Err(CsError::Checkpoint(format!(
                    "parameter {} has shape {}x{}, config expects {}x{}",
                    name, loaded.rows, loaded.cols, t.rows, t.cols
                )))
            }
            Err(_) => {
                return Err(CsError::Checkpoint(format!(
                    "checkpoint is missing parameter {}",
                    name
                )))
            }
        }
    }
    for name in params.names() {
        if expected.get(name).is_err() {
            return Err(CsError::Checkpoint(format!(
                "checkpoint has unexpected parameter {}",
                name
            )));
        }
    }
    Ok(())
}

/// Outputs of one block. Entries are absent when the corresponding
/// pipeline is disabled by ablation.
pub struct BlockOutput {
    /// Per-point object probability, Nx1, strictly inside (0,1).
    pub ps_pred: Option<Value>,
    /// Completed cloud, Nx3.
    pub pc_pred: Option<Value>,
    /// Global feature passed to the next block, 1 x cg.
    pub f_c: Option<Value>,
    /// Purified-and-fused cloud before refinement (blocks >= 2 only).
    pub p_sampled: Option<Value>,
}

/// Per-point feature extraction for segmentation, computed once and
/// reused by every block. Row j depends only on point j and the pooled
/// max over all points, so the output is permutation-equivariant.
pub fn extract_seg_features(
    tape: &mut Tape,
    binder: &mut Binder,
    coords: Value,
) -> Result<Value> {
    let (n, _) = tape.shape(coords);
    let local = nn::mlp(tape, binder, "fe.local", 2, coords)?;
    let pooled = tape.reduce_max(local, 0)?;
    let rep = tape.broadcast_repeat(pooled, 0, n)?;
    let cat = tape.concat(1, &[local, rep])?;
    nn::mlp(tape, binder, "fe.post", 2, cat)
}

fn seg_forward(
    tape: &mut Tape,
    binder: &mut Binder,
    cfg: &CsNetConfig,
    block: usize,
    f_s: Value,
    coords: Value,
    prev: Option<(Value, Value)>,
) -> Result<Value> {
    let (n, _) = tape.shape(coords);
    let mut inputs = vec![f_s, coords];
    if block > 0 && cfg.sharing_active() {
        let (f_c_prev, ps_prev) = prev.ok_or_else(|| {
            CsError::invalid("seg_forward: missing previous block features")
        })?;
        let rep = tape.broadcast_repeat(f_c_prev, 0, n)?;
        inputs.push(rep);
        inputs.push(ps_prev);
    }
    let x = tape.concat(1, &inputs)?;
    let logits = nn::mlp(tape, binder, &format!("seg.head.{}", block), 3, x)?;
    Ok(tape.sigmoid(logits))
}

/// First-block completion: encode the input to a global feature and
/// expand it through a small tree decoder (root feature splits into
/// `branching` children per level, leaves map to 3D points, truncated to
/// N). Returns the coarse cloud and the block-1 global feature.
fn coarse_decode(
    tape: &mut Tape,
    binder: &mut Binder,
    cfg: &CsNetConfig,
    coords: Value,
) -> Result<(Value, Value)> {
    let enc = nn::mlp(tape, binder, "coarse.enc", 3, coords)?;
    let g = tape.reduce_max(enc, 0)?;
    let f_c = nn::linear(tape, binder, "coarse.fc", g)?;
    let b = cfg.coarse_branching;
    let ch = cfg.channels();
    let mut nodes = nn::linear(tape, binder, "coarse.root", g)?;
    nodes = tape.reshape(nodes, b, ch.child)?;
    nodes = tape.relu(nodes);
    for l in 0..cfg.coarse_levels() - 1 {
        let (rows, _) = tape.shape(nodes);
        nodes = nn::linear(tape, binder, &format!("coarse.expand.{}", l), nodes)?;
        nodes = tape.reshape(nodes, rows * b, ch.child)?;
        nodes = tape.relu(nodes);
    }
    let leaves = nn::linear(tape, binder, "coarse.leaf", nodes)?;
    let keep: Vec<usize> = (0..cfg.n_points).collect();
    let pc = tape.gather_rows(leaves, &keep)?;
    Ok((pc, f_c))
}

/// Purify the input with the previous labels (scaling each point by its
/// object probability), fuse with the previous completion to 2N points,
/// and farthest-point sample
/// back to N. When `use_labels` is off the raw input is fused instead.
/// The FPS index selection runs on detached values; gradients flow to the
/// selected rows' sources through the gather.
fn purify_and_fuse(
    tape: &mut Tape,
    cfg: &CsNetConfig,
    coords: Value,
    ps_prev: Option<Value>,
    pc_prev: Value,
    use_labels: bool,
) -> Result<Value> {
    let fused = if use_labels {
        let ps = ps_prev
            .ok_or_else(|| CsError::invalid("purify_and_fuse: labels required but missing"))?;
        let ps3 = tape.broadcast_repeat(ps, 1, 3)?;
        let clean = tape.mul(coords, ps3)?;
        tape.concat(0, &[clean, pc_prev])?
    } else {
        tape.concat(0, &[coords, pc_prev])?
    };
    let pts = tape.points(fused)?;
    let idx = farthest_point_sample_points(&pts, cfg.n_points, 0)?;
    tape.gather_rows(fused, &idx)
}

/// Global feature of a block: shared MLP over [input, ps_prev], max-pool,
/// repeat, second shared MLP, max-pool again. Exactly permutation
/// invariant.
fn global_feature(
    tape: &mut Tape,
    binder: &mut Binder,
    block: usize,
    coords: Value,
    ps_prev: Option<Value>,
) -> Result<Value> {
    let (n, _) = tape.shape(coords);
    let gin = match ps_prev {
        Some(ps) => tape.concat(1, &[coords, ps])?,
        None => coords,
    };
    let f1 = nn::mlp(tape, binder, &format!("gf.{}.f1", block), 2, gin)?;
    let pooled = tape.reduce_max(f1, 0)?;
    let f2 = tape.broadcast_repeat(pooled, 0, n)?;
    let cat = tape.concat(1, &[f1, f2])?;
    let f3 = nn::mlp(tape, binder, &format!("gf.{}.f3", block), 2, cat)?;
    tape.reduce_max(f3, 0)
}

/// Two-stage refinement: a learned shift proposes positions, neighbors of
/// the proposal are grouped (differentiable gather over detached KNN
/// indices), and a second learned shift is added to `p_sampled`.
fn knn_refine(
    tape: &mut Tape,
    binder: &mut Binder,
    cfg: &CsNetConfig,
    block: usize,
    p_sampled: Value,
    f_prime: Value,
    f_double: Value,
) -> Result<Value> {
    let cat1 = tape.concat(1, &[f_prime, f_double, p_sampled])?;
    let dp1 = nn::mlp(tape, binder, &format!("shift1.{}", block), 2, cat1)?;
    let proposed = tape.add(p_sampled, dp1)?;
    if !cfg.enable_knn_refine {
        return Ok(proposed);
    }
    let pts = tape.points(proposed)?;
    let idx = knn_points(&pts, cfg.k_neighbors)?;
    let mut cols = Vec::with_capacity(cfg.k_neighbors);
    for c in 0..cfg.k_neighbors {
        let col: Vec<usize> = idx.indices.iter().map(|row| row[c]).collect();
        cols.push(tape.gather_rows(proposed, &col)?);
    }
    let grouped = tape.concat(1, &cols)?;
    let cat2 = tape.concat(1, &[proposed, grouped, f_prime, f_double])?;
    let dp2 = nn::mlp(tape, binder, &format!("shift2.{}", block), 2, cat2)?;
    // the second shift is added to the sampled cloud, not the proposal
    tape.add(p_sampled, dp2)
}

/// Full forward pass; returns one output per block for deep supervision.
pub fn csnet_forward(
    tape: &mut Tape,
    binder: &mut Binder,
    cfg: &CsNetConfig,
    input: &PointCloud,
) -> Result<Vec<BlockOutput>> {
    cfg.validate()?;
    if input.len() != cfg.n_points {
        return Err(CsError::invalid(format!(
            "csnet_forward: input has {} points, config expects {}",
            input.len(),
            cfg.n_points
        )));
    }
    let n = cfg.n_points;
    let coords = tape.leaf_points(&input.points, false);
    let f_s = if cfg.enable_segmentation {
        Some(extract_seg_features(tape, binder, coords)?)
    } else {
        None
    };

    let mut outputs: Vec<BlockOutput> = Vec::with_capacity(cfg.m_blocks);
    for i in 0..cfg.m_blocks {
        let prev = outputs.last();
        let prev_shared = prev.and_then(|o| match (o.f_c, o.ps_pred) {
            (Some(f), Some(p)) => Some((f, p)),
            _ => None,
        });
        let prev_pc = prev.and_then(|o| o.pc_pred);
        let prev_ps = prev.and_then(|o| o.ps_pred);

        let ps_pred = match f_s {
            Some(f_s) => Some(seg_forward(tape, binder, cfg, i, f_s, coords, prev_shared)?),
            None => None,
        };

        let (pc_pred, f_c, p_sampled) = if !cfg.enable_completion {
            (None, None, None)
        } else if i == 0 {
            let (pc, f_c) = coarse_decode(tape, binder, cfg, coords)?;
            (Some(pc), Some(f_c), None)
        } else {
            let pc_prev = prev_pc
                .ok_or_else(|| CsError::invalid("csnet_forward: missing previous completion"))?;
            let sampled = purify_and_fuse(
                tape,
                cfg,
                coords,
                prev_ps,
                pc_prev,
                cfg.enable_label_mult_fps,
            )?;
            let ps_for_gf = if cfg.enable_segmentation { prev_ps } else { None };
            let f_c = global_feature(tape, binder, i, coords, ps_for_gf)?;
            let rep = tape.broadcast_repeat(f_c, 0, n)?;
            let cat_fp = tape.concat(1, &[sampled, rep])?;
            let f_prime = nn::mlp(tape, binder, &format!("fp.{}", i), 2, cat_fp)?;
            let fp_pool = tape.reduce_max(f_prime, 0)?;
            let fp_rep = tape.broadcast_repeat(fp_pool, 0, n)?;
            let cat_fpp = tape.concat(1, &[f_prime, fp_rep, sampled])?;
            let f_double = nn::mlp(tape, binder, &format!("fpp.{}", i), 2, cat_fpp)?;
            let pc = knn_refine(tape, binder, cfg, i, sampled, f_prime, f_double)?;
            (Some(pc), Some(f_c), Some(sampled))
        };

        outputs.push(BlockOutput {
            ps_pred,
            pc_pred,
            f_c,
            p_sampled,
        });
    }
    Ok(outputs)
}

/// Per-block loss components (segmentation, reconstruction), raw
/// (unweighted) values for logging.
#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub total: f64,
    pub per_block: Vec<(Option<f64>, Option<f64>)>,
}

/// Deep-supervision loss: sum over blocks of
/// alpha1 * BCE(ps, gt_labels) + alpha2 * CD(pc, gt_complete).
pub fn total_loss(
    tape: &mut Tape,
    outputs: &[BlockOutput],
    gt_complete: &PointCloud,
    gt_labels: &[f64],
    cfg: &CsNetConfig,
) -> Result<(Value, LossBreakdown)> {
    if cfg.enable_segmentation && gt_labels.len() != cfg.n_points {
        return Err(CsError::invalid(format!(
            "total_loss: {} labels for {} points",
            gt_labels.len(),
            cfg.n_points
        )));
    }
    let mut total: Option<Value> = None;
    let mut per_block = Vec::with_capacity(outputs.len());
    for out in outputs {
        let mut seg_raw = None;
        let mut cd_raw = None;
        if let Some(ps) = out.ps_pred {
            let seg = tape.bce_loss(ps, gt_labels)?;
            seg_raw = Some(tape.scalar(seg)?);
            let weighted = tape.scalar_mul(seg, cfg.alpha1);
            total = Some(match total {
                Some(t) => tape.add(t, weighted)?,
                None => weighted,
            });
        }
        if let Some(pc) = out.pc_pred {
            let cd = tape.chamfer_loss(pc, &gt_complete.points)?;
            cd_raw = Some(tape.scalar(cd)?);
            let weighted = tape.scalar_mul(cd, cfg.alpha2);
            total = Some(match total {
                Some(t) => tape.add(t, weighted)?,
                None => weighted,
            });
        }
        per_block.push((seg_raw, cd_raw));
    }
    let total = total.ok_or_else(|| CsError::invalid("total_loss: no outputs"))?;
    let breakdown = LossBreakdown {
        total: tape.scalar(total)?,
        per_block,
    };
    Ok((total, breakdown))
}
