//! `csnet` command-line interface: dataset synthesis, training,
//! evaluation, completion of single clouds, the ablation suite, a
//! self-test, and micro-benchmarks.
//!
//! Exit codes: 0 success, 1 selftest failure, 2 invalid arguments,
//! 3 I/O failure, 4 checkpoint mismatch, 5 non-finite loss.

use clap::{Parser, Subcommand};
use csnet::config::RunConfig;
use csnet::datasynth::{generate_dataset, resample_to, Category};
use csnet::geom::{dist, farthest_point_sample_points, knn_points, PointCloud};
use csnet::io::{atomic_write, read_pcsm, read_xyz_text, write_pcsm, write_xyz_text};
use csnet::metrics::{chamfer_distance, density_aware_cd, f_score};
use csnet::model::{check_params, init_params, load_checkpoint, total_loss};
use csnet::train::{ablation_suite, evaluate, evaluate_blocks, predict_blocks, train};
use csnet::{CsError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "csnet", version, about = "Collaborative point-cloud completion and segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration flags shared by model-running commands.
#[derive(clap::Args)]
struct ConfigArgs {
    /// Start from the desk-scale profile instead of full-scale defaults.
    #[arg(long)]
    desk: bool,
    /// Flat dotted-key config file (key = value per line).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Individual overrides, e.g. --set model.m_blocks=2 (repeatable;
    /// wins over the file).
    #[arg(long = "set")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(self.desk, self.config.as_deref(), &self.set)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        points: usize,
        /// Comma-separated subset of chair,table,lamp,cabinet.
        #[arg(long, default_value = "chair,table,lamp,cabinet")]
        categories: String,
    },
    /// Train on the train split of a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Score the ground truth against itself (harness self-check).
        #[arg(long)]
        oracle: bool,
        /// Also write one report per cascade block.
        #[arg(long)]
        per_block: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Complete a single partial cloud.
    Complete {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Also write the predicted per-point labels for the input.
        #[arg(long)]
        emit_labels: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train and evaluate the 7 standard ablation variants.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run the built-in gradient and oracle check suites.
    Selftest,
    /// Time one geometry kernel.
    Bench {
        /// One of: fps, knn, cd.
        #[arg(long)]
        op: String,
        #[arg(long, default_value_t = 2048)]
        n: usize,
    },
}

fn exit_code(err: &CsError) -> u8 {
    match err {
        CsError::Io(_) => 3,
        CsError::Checkpoint(_) => 4,
        CsError::NonFiniteLoss { .. } => 5,
        _ => 2,
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("PCC_THREADS") {
        match threads.parse::<usize>() {
            Ok(t) if t >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
            }
            _ => {
                eprintln!("error: PCC_THREADS must be a positive integer");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth {
            out,
            count,
            seed,
            points,
            categories,
        } => cmd_synth(&out, count, seed, points, &categories),
        Command::Train { data, out, config } => cmd_train(&data, &out, &config),
        Command::Eval {
            data,
            ckpt,
            out,
            split,
            oracle,
            per_block,
            config,
        } => cmd_eval(&data, &ckpt, &out, &split, oracle, per_block, &config),
        Command::Complete {
            input,
            ckpt,
            output,
            emit_labels,
            config,
        } => cmd_complete(&input, &ckpt, &output, emit_labels, &config),
        Command::Ablate { data, out, config } => cmd_ablate(&data, &out, &config),
        Command::Selftest => return cmd_selftest(),
        Command::Bench { op, n } => cmd_bench(&op, n),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(exit_code(&e))
        }
    }
}

fn cmd_synth(out: &Path, count: usize, seed: u64, points: usize, categories: &str) -> Result<()> {
    let categories: Vec<Category> = categories
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_>>()?;
    let entries = generate_dataset(out, count, points, seed, &categories, (0.8, 0.1, 0.1))?;
    let size = |split: &str| entries.iter().filter(|e| e.split == split).count();
    println!("manifest: {}", out.join("manifest.jsonl").display());
    println!(
        "train={} val={} test={}",
        size("train"),
        size("val"),
        size("test")
    );
    Ok(())
}

fn cmd_train(data: &Path, out: &Path, config: &ConfigArgs) -> Result<()> {
    let run = config.load()?;
    let outcome = train(data, &run.model, &run.train, out)?;
    // per-epoch mean of the logged per-step totals
    let mut epoch_sums: Vec<(usize, f64, usize)> = Vec::new();
    for line in outcome.log_csv.lines().skip(2) {
        let mut fields = line.split(',');
        let (Some(_), Some(epoch), Some(total)) = (fields.next(), fields.next(), fields.next())
        else {
            continue;
        };
        let (epoch, total): (usize, f64) = match (epoch.parse(), total.parse()) {
            (Ok(e), Ok(t)) => (e, t),
            _ => continue,
        };
        match epoch_sums.last_mut() {
            Some((e, sum, n)) if *e == epoch => {
                *sum += total;
                *n += 1;
            }
            _ => epoch_sums.push((epoch, total, 1)),
        }
    }
    for (epoch, sum, n) in &epoch_sums {
        println!("epoch {}: mean loss {:.6}", epoch, sum / *n as f64);
    }
    println!("steps: {}", outcome.steps);
    println!("checkpoint: {}", outcome.checkpoint_path.display());
    println!("loss log: {}", outcome.loss_log_path.display());
    Ok(())
}

fn load_matching_checkpoint(ckpt: &Path, run: &RunConfig) -> Result<csnet::nn::Params> {
    let params = load_checkpoint(ckpt)?;
    check_params(&run.model, &params)?;
    Ok(params)
}

fn cmd_eval(
    data: &Path,
    ckpt: &Path,
    out: &Path,
    split: &str,
    oracle: bool,
    per_block: bool,
    config: &ConfigArgs,
) -> Result<()> {
    let run = config.load()?;
    let params = load_matching_checkpoint(ckpt, &run)?;
    std::fs::create_dir_all(out)?;
    if per_block {
        let reports = evaluate_blocks(data, split, &params, &run.model, &run.metrics, oracle, false)?;
        for (i, report) in reports.iter().enumerate() {
            atomic_write(
                &out.join(format!("report_block{}.csv", i + 1)),
                report.to_csv().as_bytes(),
            )?;
            atomic_write(
                &out.join(format!("report_block{}.md", i + 1)),
                report.to_markdown().as_bytes(),
            )?;
        }
    }
    let report = evaluate(data, split, &params, &run.model, &run.metrics, oracle)?;
    atomic_write(&out.join("report.csv"), report.to_csv().as_bytes())?;
    atomic_write(&out.join("report.md"), report.to_markdown().as_bytes())?;
    let agg = report.aggregate();
    println!(
        "split {}: CDx1e4 {:.4} DCD {:.4} F@small {:.4} F@large {:.4} mAcc {:.4}",
        split,
        agg.cd * 1e4,
        agg.dcd,
        agg.fscore_small,
        agg.fscore_large,
        agg.seg_macc
    );
    println!("report: {}", out.join("report.csv").display());
    Ok(())
}

fn cmd_complete(
    input: &Path,
    ckpt: &Path,
    output: &Path,
    emit_labels: bool,
    config: &ConfigArgs,
) -> Result<()> {
    let run = config.load()?;
    let params = load_matching_checkpoint(ckpt, &run)?;
    let is_pcsm = |p: &Path| p.extension().map_or(false, |e| e == "pcsm");
    let cloud = if is_pcsm(input) {
        read_pcsm(input)?.0
    } else {
        read_xyz_text(input)?
    };
    if cloud.is_empty() {
        return Err(CsError::invalid(format!("{}: empty cloud", input.display())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut resampled = resample_to(&cloud, run.model.n_points, &mut rng)?;
    resampled.labels = None;
    let preds = predict_blocks(&params, &run.model, &resampled)?;
    let last = preds.last().expect("at least one block");
    let completed = last
        .pc_pred
        .clone()
        .ok_or_else(|| CsError::invalid("completion pipeline disabled in this config"))?;
    if is_pcsm(output) {
        let labels = last
            .ps_pred
            .clone()
            .unwrap_or_else(|| vec![0.0; resampled.len()]);
        let labeled = PointCloud::with_labels(resampled.points.clone(), labels)?;
        write_pcsm(output, &labeled, &completed)?;
    } else {
        write_xyz_text(output, &completed)?;
    }
    println!("completed {} points -> {}", completed.len(), output.display());
    if emit_labels {
        let labels = last
            .ps_pred
            .clone()
            .ok_or_else(|| CsError::invalid("segmentation pipeline disabled; no labels to emit"))?;
        let labeled = PointCloud::with_labels(resampled.points.clone(), labels)?;
        let path = output.with_extension("labels.xyzl");
        write_xyz_text(&path, &labeled)?;
        println!("labels -> {}", path.display());
    }
    Ok(())
}

fn cmd_ablate(data: &Path, out: &Path, config: &ConfigArgs) -> Result<()> {
    let run = config.load()?;
    let report = ablation_suite(data, &run.model, &run.train, out)?;
    let md = report.to_markdown();
    std::fs::create_dir_all(out)?;
    atomic_write(&out.join("ablation.md"), md.as_bytes())?;
    print!("{}", md);
    println!("report: {}", out.join("ablation.md").display());
    Ok(())
}

// ---------------------------------------------------------------- selftest

fn random_points(n: usize, rng: &mut impl Rng) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect()
}

/// Reference maximin FPS, written independently of the library kernel.
fn fps_reference(points: &[[f64; 3]], m: usize, seed: usize) -> Vec<usize> {
    let mut chosen = vec![seed];
    let mut min_d: Vec<f64> = points.iter().map(|p| dist(p, &points[seed])).collect();
    while chosen.len() < m {
        let mut best = 0;
        for i in 1..points.len() {
            if min_d[i] > min_d[best] {
                best = i;
            }
        }
        chosen.push(best);
        for i in 0..points.len() {
            let d = dist(&points[i], &points[best]);
            if d < min_d[i] {
                min_d[i] = d;
            }
        }
    }
    chosen
}

fn selftest_gradient_fd() -> Result<()> {
    use csnet::autodiff::Tape;
    use csnet::model::{csnet_forward, CsNetConfig};
    use csnet::nn::Binder;

    // one block only: no FPS/KNN index selection, so the loss is smooth
    let cfg = CsNetConfig {
        m_blocks: 1,
        ..CsNetConfig::miniature()
    };
    let mut params = init_params(&cfg, 1)?;
    // Jitter every weight off its initial value: freshly initialized biases
    // are exactly zero, which parks dead ReLU units exactly on their kink
    // and makes central differences one-sided there.
    let mut jitter_rng = ChaCha8Rng::seed_from_u64(7);
    for (_, tensor) in params.iter_mut() {
        for w in &mut tensor.data {
            *w += jitter_rng.gen_range(-0.05..0.05);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let input = PointCloud::new(random_points(cfg.n_points, &mut rng));
    let gt = PointCloud::new(random_points(cfg.n_points, &mut rng));
    let labels: Vec<f64> = (0..cfg.n_points).map(|i| (i % 2) as f64).collect();

    let loss_of = |params: &csnet::nn::Params| -> Result<f64> {
        let mut tape = Tape::new();
        let mut binder = Binder::new(params);
        let outs = csnet_forward(&mut tape, &mut binder, &cfg, &input)?;
        let (_, breakdown) = total_loss(&mut tape, &outs, &gt, &labels, &cfg)?;
        Ok(breakdown.total)
    };

    let mut tape = Tape::new();
    let mut binder = Binder::new(&params);
    let outs = csnet_forward(&mut tape, &mut binder, &cfg, &input)?;
    let (loss, _) = total_loss(&mut tape, &outs, &gt, &labels, &cfg)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<(String, f64)> = binder
        .bound()
        .map(|(name, &v)| (name.clone(), grads.get(&tape, v)[0]))
        .collect();

    let base = loss_of(&params)?;
    let h = 1e-6;
    let mut checked = 0;
    let mut skipped = 0;
    for (name, g) in analytic {
        let orig = params.get(&name)?.data[0];
        params.get_mut(&name)?.data[0] = orig + h;
        let up = loss_of(&params)?;
        params.get_mut(&name)?.data[0] = orig - h;
        let down = loss_of(&params)?;
        params.get_mut(&name)?.data[0] = orig;
        // a smooth loss has |up + down - 2*base| = O(h^2); a ReLU kink or
        // a nearest-neighbor correspondence flip inside the step shows up
        // as O(h) and makes the central difference meaningless there
        if (up + down - 2.0 * base).abs() > 1e-8 {
            skipped += 1;
            continue;
        }
        let fd = (up - down) / (2.0 * h);
        let scale = g.abs().max(fd.abs());
        if scale < 1e-7 {
            continue;
        }
        if (g - fd).abs() / scale > 1e-4 {
            return Err(CsError::invalid(format!(
                "gradient mismatch at {}: analytic {} vs finite-difference {}",
                name, g, fd
            )));
        }
        checked += 1;
    }
    if checked < 10 || skipped > checked {
        return Err(CsError::invalid(format!(
            "gradient check inconclusive: {} checked, {} skipped",
            checked, skipped
        )));
    }
    Ok(())
}

fn selftest_fps_oracle() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let points = random_points(200, &mut rng);
        let got = farthest_point_sample_points(&points, 50, 0)?;
        if got != fps_reference(&points, 50, 0) {
            return Err(CsError::invalid("FPS disagrees with reference maximin"));
        }
    }
    Ok(())
}

fn selftest_knn_oracle() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let points = random_points(150, &mut rng);
    let got = knn_points(&points, 6)?;
    for (i, row) in got.indices.iter().enumerate() {
        // the library convention includes the query point itself
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| {
            dist(&points[i], &points[a])
                .partial_cmp(&dist(&points[i], &points[b]))
                .unwrap()
                .then(a.cmp(&b))
        });
        if row != &order[..6] {
            return Err(CsError::invalid(format!("KNN row {} disagrees with sort", i)));
        }
    }
    Ok(())
}

fn selftest_cd_oracle() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let a = PointCloud::new(random_points(80, &mut rng));
        let b = PointCloud::new(random_points(60, &mut rng));
        let fast = chamfer_distance(&a, &b)?;
        let one = |x: &PointCloud, y: &PointCloud| -> f64 {
            x.points
                .iter()
                .map(|p| y.points.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / x.len() as f64
        };
        if (fast - (one(&a, &b) + one(&b, &a))).abs() > 1e-12 {
            return Err(CsError::invalid("CD disagrees with brute-force oracle"));
        }
    }
    Ok(())
}

fn selftest_metric_identities() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = PointCloud::new(random_points(40, &mut rng));
    if chamfer_distance(&a, &a)? != 0.0 {
        return Err(CsError::invalid("CD(a,a) != 0"));
    }
    if f_score(&a, &a, 1e-4)? != 1.0 {
        return Err(CsError::invalid("F-score(gt,gt) != 1"));
    }
    if density_aware_cd(&a, &a, 1000.0)?.abs() > 1e-15 {
        return Err(CsError::invalid("DCD(a,a) != 0"));
    }
    let p = PointCloud::new(vec![[0.0; 3]]);
    let q = PointCloud::new(vec![[1.0, 0.0, 0.0]]);
    let expect = 1.0 - (-1.0f64).exp();
    if (density_aware_cd(&p, &q, 1.0)? - expect).abs() > 1e-9 {
        return Err(CsError::invalid("DCD single-pair example mismatch"));
    }
    Ok(())
}

fn cmd_selftest() -> ExitCode {
    let groups: [(&str, fn() -> Result<()>); 5] = [
        ("gradient-fd", selftest_gradient_fd),
        ("fps-oracle", selftest_fps_oracle),
        ("knn-oracle", selftest_knn_oracle),
        ("cd-oracle", selftest_cd_oracle),
        ("metric-identities", selftest_metric_identities),
    ];
    let mut failed = false;
    for (name, run) in groups {
        match run() {
            Ok(()) => println!("{}: pass", name),
            Err(e) => {
                println!("{}: FAIL ({})", name, e);
                failed = true;
            }
        }
    }
    if failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_bench(op: &str, n: usize) -> Result<()> {
    if n < 2 {
        return Err(CsError::invalid("bench: n must be >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let points = random_points(n, &mut rng);
    let iters = 5;
    let start = Instant::now();
    match op {
        "fps" => {
            for _ in 0..iters {
                farthest_point_sample_points(&points, n / 2, 0)?;
            }
        }
        "knn" => {
            for _ in 0..iters {
                knn_points(&points, 8.min(n - 1))?;
            }
        }
        "cd" => {
            let b = PointCloud::new(random_points(n, &mut rng));
            let a = PointCloud::new(points.clone());
            for _ in 0..iters {
                chamfer_distance(&a, &b)?;
            }
        }
        other => {
            return Err(CsError::invalid(format!(
                "bench: unknown op '{}' (expected fps|knn|cd)",
                other
            )))
        }
    }
    let total = start.elapsed().as_secs_f64();
    println!(
        "op={} n={} iters={} total_s={:.4} per_iter_ms={:.3}",
        op,
        n,
        iters,
        total,
        total / iters as f64 * 1e3
    );
    Ok(())
}
