//! Adam optimizer, the training loop with deep supervision, and the
//! evaluation / ablation harness.

use crate::autodiff::Tape;
use crate::datasynth::{read_manifest, sample_path, ManifestEntry};
use crate::error::{CsError, Result};
use crate::geom::PointCloud;
use crate::io::{atomic_write, read_pcsm};
use crate::metrics::{
    chamfer_distance_cfg, segmentation_accuracy, MetricConfig, MetricRow, MetricsReport,
};
use crate::model::{
    csnet_forward, init_params, save_checkpoint, total_loss, CsNetConfig, CsNetParams,
};
use crate::nn::{Binder, Params};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Optimization settings. The learning rate is fixed for the whole run
/// (no schedule); this is recorded in the loss-log header.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Save an intermediate checkpoint every this many epochs (0 = only
    /// the final one).
    pub checkpoint_interval: usize,
    /// Stop after this many optimizer steps (0 = no cap).
    pub max_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1.2e-4,
            batch_size: 16,
            epochs: 10,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            checkpoint_interval: 0,
            max_steps: 0,
        }
    }
}

impl TrainConfig {
    /// Desk-scale profile: small batches for CPU training.
    pub fn desk() -> Self {
        TrainConfig {
            batch_size: 4,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(CsError::invalid("learning_rate must be > 0"));
        }
        if self.batch_size < 1 {
            return Err(CsError::invalid("batch_size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(CsError::invalid("adam betas must be in [0, 1)"));
        }
        if self.epsilon <= 0.0 {
            return Err(CsError::invalid("epsilon must be > 0"));
        }
        Ok(())
    }
}

/// First/second moment buffers, keyed like the parameters.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &Params) -> AdamState {
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for (name, t) in params.iter() {
            m.insert(name.clone(), vec![0.0; t.len()]);
            v.insert(name.clone(), vec![0.0; t.len()]);
        }
        AdamState { m, v, step: 0 }
    }
}

/// One bias-corrected Adam update. Parameters without an entry in `grads`
/// are treated as having zero gradient.
pub fn adam_step(
    params: &mut Params,
    grads: &BTreeMap<String, Vec<f64>>,
    state: &mut AdamState,
    tc: &TrainConfig,
) -> Result<()> {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - tc.beta1.powi(t);
    let bc2 = 1.0 - tc.beta2.powi(t);
    for (name, tensor) in params.iter_mut() {
        let zero;
        let g = match grads.get(name) {
            Some(g) => {
                if g.len() != tensor.len() {
                    return Err(CsError::shape(format!(
                        "adam_step: gradient for {} has {} values, parameter has {}",
                        name,
                        g.len(),
                        tensor.len()
                    )));
                }
                g
            }
            None => {
                zero = vec![0.0; tensor.len()];
                &zero
            }
        };
        let m = state.m.get_mut(name).ok_or_else(|| {
            CsError::shape(format!("adam_step: state missing parameter {}", name))
        })?;
        let v = state.v.get_mut(name).unwrap();
        for i in 0..tensor.len() {
            m[i] = tc.beta1 * m[i] + (1.0 - tc.beta1) * g[i];
            v[i] = tc.beta2 * v[i] + (1.0 - tc.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            tensor.data[i] -= tc.learning_rate * m_hat / (v_hat.sqrt() + tc.epsilon);
        }
    }
    Ok(())
}

/// A dataset record loaded into memory.
#[derive(Debug, Clone)]
pub struct LoadedSample {
    pub entry: ManifestEntry,
    pub input: PointCloud,
    pub gt_complete: PointCloud,
}

/// Load every sample of one split ("train", "val" or "test").
pub fn load_split(dataset_dir: &Path, split: &str) -> Result<Vec<LoadedSample>> {
    let manifest = read_manifest(dataset_dir)?;
    let mut out = Vec::new();
    for entry in manifest {
        if entry.split != split {
            continue;
        }
        let (input, gt_complete) = read_pcsm(&sample_path(dataset_dir, &entry))?;
        out.push(LoadedSample {
            entry,
            input,
            gt_complete,
        });
    }
    Ok(out)
}

fn check_sample_size(sample: &LoadedSample, cfg: &CsNetConfig) -> Result<()> {
    if sample.input.len() != cfg.n_points {
        return Err(CsError::invalid(format!(
            "sample {} has {} points but the model expects {}; regenerate the \
             dataset with matching --points",
            sample.entry.id,
            sample.input.len(),
            cfg.n_points
        )));
    }
    Ok(())
}

/// Raw per-block loss components averaged over a batch. `None` marks a
/// disabled pipeline.
type BlockLosses = Vec<(Option<f64>, Option<f64>)>;

/// Forward + backward for one sample; returns the parameter gradients and
/// the loss breakdown.
fn sample_gradients(
    params: &CsNetParams,
    cfg: &CsNetConfig,
    sample: &LoadedSample,
) -> Result<(BTreeMap<String, Vec<f64>>, f64, BlockLosses)> {
    let mut tape = Tape::new();
    let mut binder = Binder::new(params);
    let outputs = csnet_forward(&mut tape, &mut binder, cfg, &sample.input)?;
    let gt_labels: &[f64] = match &sample.input.labels {
        Some(l) => l,
        None => &[],
    };
    let (loss, breakdown) = total_loss(&mut tape, &outputs, &sample.gt_complete, gt_labels, cfg)?;
    let grads = tape.backward(loss)?;
    let mut out = BTreeMap::new();
    for (name, &v) in binder.bound() {
        out.insert(name.clone(), grads.get(&tape, v));
    }
    Ok((out, breakdown.total, breakdown.per_block))
}

/// Result of a training run.
pub struct TrainOutcome {
    pub params: CsNetParams,
    /// CSV loss log, one row per optimizer step.
    pub log_csv: String,
    pub checkpoint_path: PathBuf,
    pub loss_log_path: PathBuf,
    pub steps: usize,
}

fn csv_header(m_blocks: usize) -> String {
    let mut h = String::from("step,epoch,total");
    for i in 1..=m_blocks {
        h.push_str(&format!(",seg_{}", i));
    }
    for i in 1..=m_blocks {
        h.push_str(&format!(",cd_{}", i));
    }
    h.push('\n');
    h
}

fn csv_row(step: usize, epoch: usize, total: f64, per_block: &BlockLosses) -> String {
    let mut row = format!("{},{},{}", step, epoch, total);
    let field = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (seg, _) in per_block {
        row.push(',');
        row.push_str(&field(*seg));
    }
    for (_, cd) in per_block {
        row.push(',');
        row.push_str(&field(*cd));
    }
    row.push('\n');
    row
}

/// Train on the "train" split of a dataset directory. Fully deterministic
/// from the seed: shuffling, initialization and gradient accumulation
/// order are all fixed. Writes `checkpoint.csnt` and `loss_log.csv` into
/// `out_dir` (plus interval checkpoints when configured).
pub fn train(
    dataset_dir: &Path,
    cfg: &CsNetConfig,
    tc: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    tc.validate()?;
    let samples = load_split(dataset_dir, "train")?;
    if samples.is_empty() {
        return Err(CsError::invalid("train: empty train split"));
    }
    for s in &samples {
        check_sample_size(s, cfg)?;
    }
    std::fs::create_dir_all(out_dir)?;

    let mut params = init_params(cfg, tc.seed)?;
    let mut adam = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut log = format!(
        "# fixed learning rate {}, batch {}, seed {}\n",
        tc.learning_rate, tc.batch_size, tc.seed
    );
    log.push_str(&csv_header(cfg.m_blocks));

    let mut step = 0usize;
    'epochs: for epoch in 0..tc.epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);
        for batch in order.chunks(tc.batch_size) {
            step += 1;
            let results: Vec<_> = batch
                .par_iter()
                .map(|&i| sample_gradients(&params, cfg, &samples[i]))
                .collect();
            let mut acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            let mut total = 0.0;
            let mut per_block: BlockLosses = vec![(None, None); cfg.m_blocks];
            for result in results {
                let (grads, sample_total, blocks) = result?;
                if !sample_total.is_finite() {
                    let block = blocks
                        .iter()
                        .position(|(s, c)| {
                            s.map_or(false, |v| !v.is_finite())
                                || c.map_or(false, |v| !v.is_finite())
                        })
                        .unwrap_or(0);
                    return Err(CsError::NonFiniteLoss {
                        block: block + 1,
                        step,
                    });
                }
                total += sample_total;
                for (slot, val) in per_block.iter_mut().zip(&blocks) {
                    slot.0 = merge_add(slot.0, val.0);
                    slot.1 = merge_add(slot.1, val.1);
                }
                for (name, g) in grads {
                    let slot = acc.entry(name).or_insert_with(|| vec![0.0; g.len()]);
                    for (a, b) in slot.iter_mut().zip(&g) {
                        *a += b;
                    }
                }
            }
            let bn = batch.len() as f64;
            total /= bn;
            for slot in per_block.iter_mut() {
                slot.0 = slot.0.map(|v| v / bn);
                slot.1 = slot.1.map(|v| v / bn);
            }
            for g in acc.values_mut() {
                for v in g.iter_mut() {
                    *v /= bn;
                }
            }
            adam_step(&mut params, &acc, &mut adam, tc)?;
            log.push_str(&csv_row(step, epoch, total, &per_block));
            if tc.max_steps > 0 && step >= tc.max_steps {
                break 'epochs;
            }
        }
        if tc.checkpoint_interval > 0 && (epoch + 1) % tc.checkpoint_interval == 0 {
            save_checkpoint(
                &params,
                &out_dir.join(format!("checkpoint_epoch{:04}.csnt", epoch + 1)),
            )?;
        }
    }

    let checkpoint_path = out_dir.join("checkpoint.csnt");
    let loss_log_path = out_dir.join("loss_log.csv");
    save_checkpoint(&params, &checkpoint_path)?;
    atomic_write(&loss_log_path, log.as_bytes())?;
    Ok(TrainOutcome {
        params,
        log_csv: log,
        checkpoint_path,
        loss_log_path,
        steps: step,
    })
}

fn merge_add(acc: Option<f64>, v: Option<f64>) -> Option<f64> {
    match (acc, v) {
        (None, x) => x,
        (x, None) => x,
        (Some(a), Some(b)) => Some(a + b),
    }
}

/// Prediction of one forward pass used by evaluation.
pub struct Prediction {
    pub pc_pred: Option<PointCloud>,
    pub ps_pred: Option<Vec<f64>>,
}

/// Run the model on one sample and extract per-block predictions as plain
/// clouds/label vectors.
pub fn predict_blocks(
    params: &CsNetParams,
    cfg: &CsNetConfig,
    input: &PointCloud,
) -> Result<Vec<Prediction>> {
    let mut tape = Tape::new();
    let mut binder = Binder::new(params);
    let outputs = csnet_forward(&mut tape, &mut binder, cfg, input)?;
    outputs
        .iter()
        .map(|o| {
            Ok(Prediction {
                pc_pred: match o.pc_pred {
                    Some(v) => Some(PointCloud::new(tape.points(v)?)),
                    None => None,
                },
                ps_pred: o.ps_pred.map(|v| tape.value(v).to_vec()),
            })
        })
        .collect()
}

/// Evaluate a split with the final block's predictions. `oracle` replaces
/// the predictions with the ground truth, which must produce the metric
/// identities (CD 0, F-scores 1, mAcc 1) — a self-check of the harness.
pub fn evaluate(
    dataset_dir: &Path,
    split: &str,
    params: &CsNetParams,
    cfg: &CsNetConfig,
    mc: &MetricConfig,
    oracle: bool,
) -> Result<MetricsReport> {
    let mut reports = evaluate_blocks(dataset_dir, split, params, cfg, mc, oracle, false)?;
    Ok(reports.pop().expect("at least one block"))
}

/// Per-block evaluation: report i holds the metrics of block i+1's
/// predictions. With `final_only` false every block is evaluated; the
/// last report is always the final block.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_blocks(
    dataset_dir: &Path,
    split: &str,
    params: &CsNetParams,
    cfg: &CsNetConfig,
    mc: &MetricConfig,
    oracle: bool,
    _final_only: bool,
) -> Result<Vec<MetricsReport>> {
    if !cfg.enable_completion {
        return Err(CsError::invalid(
            "evaluate: completion pipeline disabled; nothing to score",
        ));
    }
    let samples = load_split(dataset_dir, split)?;
    if samples.is_empty() {
        return Err(CsError::invalid(format!("evaluate: empty split '{}'", split)));
    }
    for s in &samples {
        check_sample_size(s, cfg)?;
    }
    let note = format!(
        "F-score thresholds {} and {} are absolute distances in normalized unit-ball units",
        mc.fscore_tau_small, mc.fscore_tau_large
    );
    let mut reports = vec![MetricsReport::default(); cfg.m_blocks];
    for r in reports.iter_mut() {
        r.notes.push(note.clone());
    }

    let rows: Vec<Result<Vec<MetricRow>>> = samples
        .par_iter()
        .map(|s| {
            let preds = predict_blocks(params, cfg, &s.input)?;
            let gt_labels = s
                .input
                .labels
                .as_ref()
                .ok_or_else(|| CsError::invalid("evaluate: sample has no labels"))?;
            preds
                .iter()
                .map(|p| {
                    let pc = p
                        .pc_pred
                        .as_ref()
                        .ok_or_else(|| CsError::invalid("evaluate: missing completion output"))?;
                    let default_labels;
                    let ps = match &p.ps_pred {
                        Some(ps) => ps,
                        None => {
                            // segmentation disabled: score accuracy against
                            // the ground truth itself (always 1, marked in
                            // the notes by the caller when relevant)
                            default_labels = gt_labels.clone();
                            &default_labels
                        }
                    };
                    if oracle {
                        MetricRow::compute(&s.gt_complete, &s.gt_complete, gt_labels, gt_labels, mc)
                    } else {
                        MetricRow::compute(pc, &s.gt_complete, ps, gt_labels, mc)
                    }
                })
                .collect()
        })
        .collect();
    for (s, sample_rows) in samples.iter().zip(rows) {
        for (block, row) in sample_rows?.into_iter().enumerate() {
            reports[block].push(s.entry.id.clone(), s.entry.category.clone(), row);
        }
    }
    Ok(reports)
}

/// Total scalar parameter count.
pub fn param_count(params: &Params) -> usize {
    params.param_count()
}

/// One ablation result row. `None` marks a metric that does not apply to
/// the variant (no completion -> no CD, no segmentation -> no mAcc).
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub index: usize,
    pub name: String,
    pub params: usize,
    pub cd: Option<f64>,
    pub macc: Option<f64>,
}

pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    /// Markdown comparison table; absent metrics render as "-".
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| # | Variant | Params | CD x1e4 | mAcc |\n|---|---|---|---|---|\n");
        for r in &self.rows {
            let fmt = |v: Option<f64>, scale: f64| match v {
                Some(v) => format!("{:.4}", v * scale),
                None => "-".to_string(),
            };
            out.push_str(&format!(
                "| ({}) | {} | {} | {} | {} |\n",
                r.index,
                r.name,
                r.params,
                fmt(r.cd, 1e4),
                fmt(r.macc, 1.0)
            ));
        }
        out
    }
}

/// The seven standard ablation variants derived from a base configuration.
pub fn ablation_variants(base: &CsNetConfig) -> Vec<(String, CsNetConfig)> {
    let stripped = CsNetConfig {
        enable_feature_sharing: false,
        enable_label_mult_fps: false,
        enable_knn_refine: false,
        ..base.clone()
    };
    vec![
        (
            "segmentation pipeline".to_string(),
            CsNetConfig {
                enable_completion: false,
                ..stripped.clone()
            },
        ),
        (
            "completion pipeline".to_string(),
            CsNetConfig {
                enable_segmentation: false,
                ..stripped.clone()
            },
        ),
        (
            "+ feature sharing".to_string(),
            CsNetConfig {
                enable_feature_sharing: true,
                ..stripped
            },
        ),
        (
            "+ label-multiplication FPS".to_string(),
            CsNetConfig {
                enable_knn_refine: false,
                ..base.clone()
            },
        ),
        ("full".to_string(), base.clone()),
        (
            "full, 2 blocks".to_string(),
            CsNetConfig {
                m_blocks: 2,
                ..base.clone()
            },
        ),
        (
            "full, 4 blocks".to_string(),
            CsNetConfig {
                m_blocks: 4,
                ..base.clone()
            },
        ),
    ]
}

/// Train and evaluate every ablation variant on the same dataset, scoring
/// the test split with the final block's outputs.
pub fn ablation_suite(
    dataset_dir: &Path,
    base_cfg: &CsNetConfig,
    tc: &TrainConfig,
    out_dir: &Path,
) -> Result<AblationReport> {
    let test = load_split(dataset_dir, "test")?;
    if test.is_empty() {
        return Err(CsError::invalid("ablation_suite: empty test split"));
    }
    let mut rows = Vec::new();
    for (i, (name, cfg)) in ablation_variants(base_cfg).into_iter().enumerate() {
        let variant_dir = out_dir.join(format!("variant_{}", i + 1));
        let outcome = train(dataset_dir, &cfg, tc, &variant_dir)?;
        let mut cd_sum = 0.0;
        let mut macc_sum = 0.0;
        for s in &test {
            let preds = predict_blocks(&outcome.params, &cfg, &s.input)?;
            let last = preds.last().unwrap();
            if let Some(pc) = &last.pc_pred {
                cd_sum += chamfer_distance_cfg(pc, &s.gt_complete, false)?;
            }
            if let Some(ps) = &last.ps_pred {
                let gt_labels = s
                    .input
                    .labels
                    .as_ref()
                    .ok_or_else(|| CsError::invalid("ablation_suite: sample has no labels"))?;
                macc_sum += segmentation_accuracy(ps, gt_labels, 0.5)?;
            }
        }
        let n = test.len() as f64;
        rows.push(AblationRow {
            index: i + 1,
            name,
            params: outcome.params.param_count(),
            cd: cfg.enable_completion.then(|| cd_sum / n),
            macc: cfg.enable_segmentation.then(|| macc_sum / n),
        });
    }
    Ok(AblationReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::datasynth::{generate_dataset, Category};
    use crate::model::load_checkpoint;

    fn scalar_params(v: f64) -> Params {
        let mut p = Params::new();
        p.insert("w", Tensor::new(1, 1, vec![v]).unwrap()).unwrap();
        p
    }

    #[test]
    fn adam_zero_grad_keeps_params() {
        let mut p = scalar_params(0.7);
        let mut st = AdamState::new(&p);
        let tc = TrainConfig::default();
        adam_step(&mut p, &BTreeMap::new(), &mut st, &tc).unwrap();
        assert_eq!(p.get("w").unwrap().data[0], 0.7);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn adam_first_step_magnitude() {
        let mut p = scalar_params(0.0);
        let mut st = AdamState::new(&p);
        let tc = TrainConfig {
            learning_rate: 1e-3,
            ..Default::default()
        };
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), vec![1.0]);
        adam_step(&mut p, &grads, &mut st, &tc).unwrap();
        // bias-corrected m_hat = v_hat = 1 -> update = lr / (1 + eps)
        let expect = 1e-3 / (1.0 + 1e-8);
        assert!((p.get("w").unwrap().data[0] + expect).abs() < 1e-15);
    }

    #[test]
    fn adam_deterministic_and_shape_checked() {
        let run = || {
            let mut p = scalar_params(0.3);
            let mut st = AdamState::new(&p);
            let tc = TrainConfig::default();
            let mut grads = BTreeMap::new();
            grads.insert("w".to_string(), vec![0.25]);
            for _ in 0..5 {
                adam_step(&mut p, &grads, &mut st, &tc).unwrap();
            }
            p.get("w").unwrap().data[0]
        };
        assert_eq!(run().to_bits(), run().to_bits());

        let mut p = scalar_params(0.0);
        let mut st = AdamState::new(&p);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), vec![1.0, 2.0]);
        assert!(adam_step(&mut p, &grads, &mut st, &TrainConfig::default()).is_err());
    }

    fn tiny_dataset(dir: &Path, n: usize) {
        generate_dataset(dir, 10, n, 7, &Category::ALL, (0.8, 0.1, 0.1)).unwrap();
    }

    #[test]
    fn zero_epochs_checkpoint_equals_init() {
        let data = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let cfg = CsNetConfig::miniature();
        tiny_dataset(data.path(), cfg.n_points);
        let tc = TrainConfig {
            epochs: 0,
            seed: 3,
            ..TrainConfig::desk()
        };
        let outcome = train(data.path(), &cfg, &tc, out.path()).unwrap();
        assert_eq!(outcome.steps, 0);
        assert_eq!(outcome.params, init_params(&cfg, 3).unwrap());
        assert_eq!(load_checkpoint(&outcome.checkpoint_path).unwrap(), outcome.params);
    }

    #[test]
    fn training_is_deterministic() {
        let data = tempfile::tempdir().unwrap();
        let cfg = CsNetConfig::miniature();
        tiny_dataset(data.path(), cfg.n_points);
        let tc = TrainConfig {
            epochs: 2,
            seed: 11,
            ..TrainConfig::desk()
        };
        let run = || {
            let out = tempfile::tempdir().unwrap();
            let o = train(data.path(), &cfg, &tc, out.path()).unwrap();
            let bytes = std::fs::read(&o.checkpoint_path).unwrap();
            (o.log_csv, bytes)
        };
        let (log_a, ckpt_a) = run();
        let (log_b, ckpt_b) = run();
        assert_eq!(log_a, log_b);
        assert_eq!(ckpt_a, ckpt_b);
        assert!(log_a.lines().count() > 2);
    }

    #[test]
    fn evaluate_oracle_identities_and_shape() {
        let data = tempfile::tempdir().unwrap();
        let cfg = CsNetConfig::miniature();
        tiny_dataset(data.path(), cfg.n_points);
        let params = init_params(&cfg, 0).unwrap();
        let mc = MetricConfig::default();
        let report = evaluate(data.path(), "train", &params, &cfg, &mc, true).unwrap();
        assert_eq!(report.samples.len(), 8);
        let agg = report.aggregate();
        assert_eq!(agg.cd, 0.0);
        assert_eq!(agg.fscore_small, 1.0);
        assert_eq!(agg.fscore_large, 1.0);
        assert_eq!(agg.seg_macc, 1.0);

        let blocks =
            evaluate_blocks(data.path(), "val", &params, &cfg, &mc, false, false).unwrap();
        assert_eq!(blocks.len(), cfg.m_blocks);
        for b in &blocks {
            assert_eq!(b.samples.len(), 1);
            assert!(b.aggregate().cd.is_finite());
        }
    }

    #[test]
    fn ablation_variant_list() {
        let base = CsNetConfig::default();
        let variants = ablation_variants(&base);
        assert_eq!(variants.len(), 7);
        assert_eq!(variants[4].1, base); // "full" is the unmodified config
        assert!(!variants[0].1.enable_completion);
        assert!(!variants[1].1.enable_segmentation);
        assert_eq!(variants[5].1.m_blocks, 2);
        assert_eq!(variants[6].1.m_blocks, 4);
        for (_, cfg) in &variants {
            cfg.validate().unwrap();
        }
    }
}
