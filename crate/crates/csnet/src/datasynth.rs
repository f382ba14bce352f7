//! Procedural dataset synthesis: parametric furniture shapes sampled into
//! point clouds, surrounding clutter, two-view visibility filtering, and
//! deterministic dataset generation with a JSON-lines manifest.

use crate::error::{CsError, Result};
use crate::geom::{
    dist, farthest_point_sample, hidden_point_removal, voxel_downsample, PointCloud, Viewpoint,
};
use crate::io::write_pcsm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::path::{Path, PathBuf};

/// Object categories. Four parametric families; the category is recorded
/// so reports can break results down per category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Chair,
    Table,
    Lamp,
    Cabinet,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Chair,
        Category::Table,
        Category::Lamp,
        Category::Cabinet,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Chair => "chair",
            Category::Table => "table",
            Category::Lamp => "lamp",
            Category::Cabinet => "cabinet",
        }
    }
}

impl std::str::FromStr for Category {
    type Err = CsError;
    fn from_str(s: &str) -> Result<Category> {
        match s {
            "chair" => Ok(Category::Chair),
            "table" => Ok(Category::Table),
            "lamp" => Ok(Category::Lamp),
            "cabinet" => Ok(Category::Cabinet),
            other => Err(CsError::invalid(format!(
                "unknown category '{}' (expected chair|table|lamp|cabinet)",
                other
            ))),
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

type Triangle = [[f64; 3]; 3];

/// A concrete shape: category plus a triangle-mesh realization with
/// dimensions drawn from per-category ranges. z is up, the base sits at
/// z = 0.
#[derive(Debug, Clone)]
pub struct ShapeSpec {
    pub category: Category,
    pub mesh: Vec<Triangle>,
}

fn push_box(mesh: &mut Vec<Triangle>, min: [f64; 3], max: [f64; 3]) {
    let v = |x, y, z| {
        [
            if x == 0 { min[0] } else { max[0] },
            if y == 0 { min[1] } else { max[1] },
            if z == 0 { min[2] } else { max[2] },
        ]
    };
    let quads = [
        [v(0, 0, 0), v(1, 0, 0), v(1, 1, 0), v(0, 1, 0)], // bottom
        [v(0, 0, 1), v(1, 0, 1), v(1, 1, 1), v(0, 1, 1)], // top
        [v(0, 0, 0), v(1, 0, 0), v(1, 0, 1), v(0, 0, 1)], // -y
        [v(0, 1, 0), v(1, 1, 0), v(1, 1, 1), v(0, 1, 1)], // +y
        [v(0, 0, 0), v(0, 1, 0), v(0, 1, 1), v(0, 0, 1)], // -x
        [v(1, 0, 0), v(1, 1, 0), v(1, 1, 1), v(1, 0, 1)], // +x
    ];
    for q in quads {
        mesh.push([q[0], q[1], q[2]]);
        mesh.push([q[0], q[2], q[3]]);
    }
}

/// Four legs at the corners of a (w x d) footprint, from z=0 to z=h.
fn push_legs(mesh: &mut Vec<Triangle>, w: f64, d: f64, h: f64, t: f64) {
    for (sx, sy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
        let x0 = -w / 2.0 + sx * (w - t);
        let y0 = -d / 2.0 + sy * (d - t);
        push_box(mesh, [x0, y0, 0.0], [x0 + t, y0 + t, h]);
    }
}

impl ShapeSpec {
    /// Draw a random instance of a category.
    pub fn sample(category: Category, rng: &mut impl Rng) -> ShapeSpec {
        let mut mesh = Vec::new();
        match category {
            Category::Chair => {
                let w = rng.gen_range(0.6..0.9);
                let d = rng.gen_range(0.6..0.9);
                let leg_h = rng.gen_range(0.4..0.6);
                let t = rng.gen_range(0.05..0.08);
                let seat_t = rng.gen_range(0.06..0.1);
                let back_h = rng.gen_range(0.5..0.8);
                push_legs(&mut mesh, w, d, leg_h, t);
                push_box(
                    &mut mesh,
                    [-w / 2.0, -d / 2.0, leg_h],
                    [w / 2.0, d / 2.0, leg_h + seat_t],
                );
                push_box(
                    &mut mesh,
                    [-w / 2.0, d / 2.0 - t, leg_h + seat_t],
                    [w / 2.0, d / 2.0, leg_h + seat_t + back_h],
                );
            }
            Category::Table => {
                let w = rng.gen_range(1.0..1.6);
                let d = rng.gen_range(0.7..1.1);
                let leg_h = rng.gen_range(0.6..0.85);
                let t = rng.gen_range(0.06..0.1);
                let top_t = rng.gen_range(0.05..0.09);
                push_legs(&mut mesh, w * 0.92, d * 0.92, leg_h, t);
                push_box(
                    &mut mesh,
                    [-w / 2.0, -d / 2.0, leg_h],
                    [w / 2.0, d / 2.0, leg_h + top_t],
                );
            }
            Category::Lamp => {
                let base = rng.gen_range(0.25..0.4);
                let pole_h = rng.gen_range(0.9..1.4);
                let pole_t = rng.gen_range(0.04..0.07);
                let r_bot = rng.gen_range(0.25..0.4);
                let r_top = rng.gen_range(0.1..0.2);
                let shade_h = rng.gen_range(0.25..0.4);
                push_box(
                    &mut mesh,
                    [-base / 2.0, -base / 2.0, 0.0],
                    [base / 2.0, base / 2.0, 0.05],
                );
                push_box(
                    &mut mesh,
                    [-pole_t / 2.0, -pole_t / 2.0, 0.05],
                    [pole_t / 2.0, pole_t / 2.0, pole_h],
                );
                // conical shade as a 12-segment strip
                let segs = 12;
                for s in 0..segs {
                    let a0 = s as f64 / segs as f64 * std::f64::consts::TAU;
                    let a1 = (s + 1) as f64 / segs as f64 * std::f64::consts::TAU;
                    let b0 = [r_bot * a0.cos(), r_bot * a0.sin(), pole_h];
                    let b1 = [r_bot * a1.cos(), r_bot * a1.sin(), pole_h];
                    let t0 = [r_top * a0.cos(), r_top * a0.sin(), pole_h + shade_h];
                    let t1 = [r_top * a1.cos(), r_top * a1.sin(), pole_h + shade_h];
                    mesh.push([b0, b1, t1]);
                    mesh.push([b0, t1, t0]);
                }
            }
            Category::Cabinet => {
                let w = rng.gen_range(0.8..1.3);
                let d = rng.gen_range(0.4..0.6);
                let h = rng.gen_range(1.0..1.7);
                push_box(&mut mesh, [-w / 2.0, -d / 2.0, 0.0], [w / 2.0, d / 2.0, h]);
            }
        }
        ShapeSpec { category, mesh }
    }
}

fn triangle_area(t: &Triangle) -> f64 {
    let u = [t[1][0] - t[0][0], t[1][1] - t[0][1], t[1][2] - t[0][2]];
    let v = [t[2][0] - t[0][0], t[2][1] - t[0][1], t[2][2] - t[0][2]];
    let c = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    0.5 * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
}

/// Area-weighted uniform surface sampling: pick a triangle proportional
/// to its area, then a barycentric point inside it.
pub fn sample_shape(spec: &ShapeSpec, n: usize, rng: &mut impl Rng) -> Result<PointCloud> {
    if n < 1 {
        return Err(CsError::invalid("sample_shape: n must be >= 1"));
    }
    let areas: Vec<f64> = spec.mesh.iter().map(triangle_area).collect();
    if spec.mesh.is_empty() || areas.iter().any(|&a| a <= 1e-12) {
        return Err(CsError::invalid(
            "sample_shape: mesh is empty or has a degenerate triangle",
        ));
    }
    let mut cumulative = Vec::with_capacity(areas.len());
    let mut total = 0.0;
    for a in &areas {
        total += a;
        cumulative.push(total);
    }
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.gen_range(0.0..total);
        let ti = cumulative.partition_point(|&c| c <= r).min(spec.mesh.len() - 1);
        let t = &spec.mesh[ti];
        let (mut u, mut v) = (rng.gen::<f64>(), rng.gen::<f64>());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        points.push([
            t[0][0] + u * (t[1][0] - t[0][0]) + v * (t[2][0] - t[0][0]),
            t[0][1] + u * (t[1][1] - t[0][1]) + v * (t[2][1] - t[0][1]),
            t[0][2] + u * (t[1][2] - t[0][2]) + v * (t[2][2] - t[0][2]),
        ]);
    }
    Ok(PointCloud::new(points))
}

/// Sample the object surface and surround it with clutter: a floor patch,
/// 0-2 wall fragments, and noise blobs, all inside the axis-aligned box
/// 1.1x the object's bounding box and kept clear of the object surface so
/// outliers stay geometrically separable.
pub fn build_scene(
    spec: &ShapeSpec,
    n: usize,
    rng: &mut impl Rng,
) -> Result<(PointCloud, PointCloud)> {
    let object = sample_shape(spec, n, rng)?;
    let (bmin, bmax) = object.bbox().unwrap();
    let center = [
        (bmin[0] + bmax[0]) / 2.0,
        (bmin[1] + bmax[1]) / 2.0,
        (bmin[2] + bmax[2]) / 2.0,
    ];
    let half = [
        (bmax[0] - bmin[0]) / 2.0 * 1.1,
        (bmax[1] - bmin[1]) / 2.0 * 1.1,
        (bmax[2] - bmin[2]) / 2.0 * 1.1,
    ];
    let cmin = [center[0] - half[0], center[1] - half[1], center[2] - half[2]];
    let cmax = [center[0] + half[0], center[1] + half[1], center[2] + half[2]];
    // Required clearance: 0.05 of the eventual normalization scale, which
    // is bounded by the distance from the centroid to a clip-box corner.
    let centroid = object.centroid();
    let corner_dist = (0..8)
        .map(|i| {
            let c = [
                if i & 1 == 0 { cmin[0] } else { cmax[0] },
                if i & 2 == 0 { cmin[1] } else { cmax[1] },
                if i & 4 == 0 { cmin[2] } else { cmax[2] },
            ];
            dist(&centroid, &c)
        })
        .fold(0.0, f64::max);
    let margin = 0.055 * corner_dist;
    let diag = dist(&bmin, &bmax);

    let n_walls = rng.gen_range(0..=2usize);
    let walls: Vec<(usize, bool)> = (0..n_walls)
        .map(|_| (rng.gen_range(0..2usize), rng.gen_bool(0.5)))
        .collect();
    let n_blobs = rng.gen_range(1..=3usize);
    let blobs: Vec<[f64; 3]> = (0..n_blobs)
        .map(|_| {
            [
                rng.gen_range(cmin[0]..cmax[0]),
                rng.gen_range(cmin[1]..cmax[1]),
                rng.gen_range(cmin[2]..cmax[2]),
            ]
        })
        .collect();

    let target = ((rng.gen_range(0.1..=0.5) * n as f64).round() as usize).max(1);
    let mut clutter = Vec::with_capacity(target);
    let mut attempts = 0usize;
    while clutter.len() < target && attempts < 400 * target {
        attempts += 1;
        let kind = rng.gen_range(0.0..1.0);
        let p = if kind < 0.6 || walls.is_empty() && kind < 0.8 {
            // floor: the bottom face of the clip box
            [
                rng.gen_range(cmin[0]..cmax[0]),
                rng.gen_range(cmin[1]..cmax[1]),
                cmin[2],
            ]
        } else if kind < 0.8 {
            // wall fragment on a vertical clip-box face
            let (axis, side) = walls[rng.gen_range(0..walls.len())];
            let plane = if side { cmax[axis] } else { cmin[axis] };
            let mut p = [
                rng.gen_range(cmin[0]..cmax[0]),
                rng.gen_range(cmin[1]..cmax[1]),
                rng.gen_range(cmin[2]..cmax[2]),
            ];
            p[axis] = plane;
            p
        } else {
            // gaussian-ish noise blob (sum of uniforms), clamped to the box
            let c = blobs[rng.gen_range(0..blobs.len())];
            let sigma = 0.04 * diag;
            let mut p = c;
            for (a, pa) in p.iter_mut().enumerate() {
                let g: f64 = (0..4).map(|_| rng.gen_range(-1.0..1.0)).sum::<f64>() / 2.0;
                *pa = (*pa + g * sigma).clamp(cmin[a], cmax[a]);
            }
            p
        };
        let clear = object.points.iter().all(|q| dist(&p, q) >= margin);
        if clear {
            clutter.push(p);
        }
    }
    if clutter.len() * 10 < target {
        return Err(CsError::invalid(
            "build_scene: could not place clutter clear of the object",
        ));
    }
    Ok((object, PointCloud::new(clutter)))
}

/// Combine object (label 1) and clutter (label 0) and keep the points
/// visible from at least one of two random viewpoints on a radius-3
/// sphere around the scene center. Visibility runs on the whole scene so
/// clutter occludes the object and vice versa. Returns the filtered cloud
/// and the two viewpoints.
pub fn make_partial(
    object: &PointCloud,
    clutter: &PointCloud,
    rng: &mut impl Rng,
) -> Result<(PointCloud, [[f64; 3]; 2])> {
    if object.is_empty() {
        return Err(CsError::invalid("make_partial: empty object cloud"));
    }
    let mut points = object.points.clone();
    points.extend_from_slice(&clutter.points);
    let mut labels = vec![1.0; object.len()];
    labels.extend(std::iter::repeat(0.0).take(clutter.len()));
    let scene = PointCloud::with_labels(points, labels)?;
    let (bmin, bmax) = scene.bbox().unwrap();
    let center = [
        (bmin[0] + bmax[0]) / 2.0,
        (bmin[1] + bmax[1]) / 2.0,
        (bmin[2] + bmax[2]) / 2.0,
    ];

    for _ in 0..10 {
        let mut views = [[0.0; 3]; 2];
        for view in &mut views {
            let z: f64 = rng.gen_range(-1.0..1.0);
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = (1.0 - z * z).sqrt();
            *view = [
                center[0] + 3.0 * r * theta.cos(),
                center[1] + 3.0 * r * theta.sin(),
                center[2] + 3.0 * z,
            ];
        }
        let mut keep = vec![false; scene.len()];
        for view in &views {
            let vp = Viewpoint::auto(&scene, *view);
            for i in hidden_point_removal(&scene, &vp)? {
                keep[i] = true;
            }
        }
        let indices: Vec<usize> = (0..scene.len()).filter(|&i| keep[i]).collect();
        if !indices.is_empty() {
            return Ok((scene.select(&indices), views));
        }
    }
    Err(CsError::invalid(
        "make_partial: no points survived after 10 view resamples",
    ))
}

/// Resample a cloud to exactly n points: farthest-point trim when above,
/// random duplication when below.
pub fn resample_to(cloud: &PointCloud, n: usize, rng: &mut impl Rng) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(CsError::invalid("resample_to: empty cloud"));
    }
    if cloud.len() == n {
        return Ok(cloud.clone());
    }
    if cloud.len() > n {
        let idx = farthest_point_sample(cloud, n, 0)?;
        return Ok(cloud.select(&idx));
    }
    let mut idx: Vec<usize> = (0..cloud.len()).collect();
    while idx.len() < n {
        idx.push(rng.gen_range(0..cloud.len()));
    }
    Ok(cloud.select(&idx))
}

/// Normalization frame and provenance recorded with each sample.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SampleMeta {
    pub seed: u64,
    pub views: [[f64; 3]; 2],
    pub center: [f64; 3],
    pub scale: f64,
}

/// One finished dataset record.
#[derive(Debug, Clone)]
pub struct SceneSample {
    pub id: String,
    pub category: Category,
    /// Partial scene, exactly n points, binary labels (1 object, 0 outlier).
    pub input: PointCloud,
    /// Complete object cloud, exactly n points, same frame as `input`.
    pub gt_complete: PointCloud,
    pub meta: SampleMeta,
}

/// Voxel-downsample the partial cloud (voxel edge 0.02 x its diameter),
/// resample input and ground truth to exactly n, and normalize both into
/// the unit ball. The frame is centered on the input centroid; the scale
/// covers the ground truth too so both clouds land inside the ball.
pub fn finalize_sample(
    partial: &PointCloud,
    gt_complete: &PointCloud,
    n: usize,
    rng: &mut impl Rng,
) -> Result<(PointCloud, PointCloud, [f64; 3], f64)> {
    if partial.is_empty() {
        return Err(CsError::invalid("finalize_sample: empty partial cloud"));
    }
    let voxel = 0.02 * partial.diameter();
    let coarse = if voxel > 0.0 {
        voxel_downsample(partial, voxel)?
    } else {
        partial.clone()
    };
    let mut input = resample_to(&coarse, n, rng)?;
    if let Some(labels) = &mut input.labels {
        // voxel cells average labels; a cell is an object cell when object
        // points dominate it
        for l in labels.iter_mut() {
            *l = if *l >= 0.5 { 1.0 } else { 0.0 };
        }
    }
    let gt = resample_to(gt_complete, n, rng)?;

    let center = input.centroid();
    let scale = input
        .points
        .iter()
        .chain(&gt.points)
        .map(|p| dist(p, &center))
        .fold(0.0, f64::max)
        .max(1e-12);
    let mut norm_input = crate::geom::apply_frame(&input, &center, scale);
    norm_input.labels = input.labels.clone();
    let norm_gt = crate::geom::apply_frame(&gt, &center, scale);
    Ok((norm_input, norm_gt, center, scale))
}

/// Minimum normalized distance from any outlier-labeled input point to
/// the given reference points.
fn min_outlier_distance(input: &PointCloud, refs: &[[f64; 3]]) -> f64 {
    let labels = input.labels.as_ref().unwrap();
    let mut best = f64::INFINITY;
    for (p, &l) in input.points.iter().zip(labels) {
        if l != 0.0 {
            continue;
        }
        for q in refs {
            best = best.min(dist(p, q));
        }
    }
    best
}

/// Build one full sample: shape, scene, two-view filtering, finalize.
/// Retries with derived seeds until the sample invariants hold (outlier
/// fraction in (0, 0.6], outliers at least 0.05 from the object and the
/// origin in normalized coordinates).
pub fn synthesize_sample(
    id: &str,
    category: Category,
    n: usize,
    seed: u64,
) -> Result<SceneSample> {
    let mut last_err = CsError::invalid("synthesize_sample: no attempts made");
    for attempt in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt.wrapping_mul(0x9E37)));
        let result = (|| -> Result<SceneSample> {
            let spec = ShapeSpec::sample(category, &mut rng);
            let (object, clutter) = build_scene(&spec, n, &mut rng)?;
            let (partial, views) = make_partial(&object, &clutter, &mut rng)?;
            let (input, gt, center, scale) = finalize_sample(&partial, &object, n, &mut rng)?;

            let labels = input.labels.as_ref().unwrap();
            let outliers = labels.iter().filter(|&&l| l == 0.0).count();
            let frac = outliers as f64 / n as f64;
            if frac <= 0.0 || frac > 0.6 {
                return Err(CsError::invalid(format!(
                    "outlier fraction {:.3} outside (0, 0.6]",
                    frac
                )));
            }
            let object_pts: Vec<[f64; 3]> = input
                .points
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == 1.0)
                .map(|(p, _)| *p)
                .collect();
            let mut sep = min_outlier_distance(&input, &gt.points);
            sep = sep.min(min_outlier_distance(&input, &object_pts));
            sep = sep.min(min_outlier_distance(&input, &[[0.0; 3]]));
            if sep < 0.05 {
                return Err(CsError::invalid(format!(
                    "outlier separation {:.4} below 0.05",
                    sep
                )));
            }
            Ok(SceneSample {
                id: id.to_string(),
                category,
                input,
                gt_complete: gt,
                meta: SampleMeta {
                    seed,
                    views,
                    center,
                    scale,
                },
            })
        })();
        match result {
            Ok(sample) => return Ok(sample),
            Err(e) => last_err = e,
        }
    }
    Err(CsError::invalid(format!(
        "synthesize_sample {}: 20 attempts failed, last: {}",
        id, last_err
    )))
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub category: String,
    pub split: String,
    /// File name relative to the manifest's directory.
    pub path: String,
    pub seed: u64,
}

/// Generate `count` samples into `out_dir` (PCSM files plus
/// manifest.jsonl). Splits follow the given ratios in id order. Fully
/// deterministic from the master seed; samples are generated in parallel.
pub fn generate_dataset(
    out_dir: &Path,
    count: usize,
    n_points: usize,
    seed: u64,
    categories: &[Category],
    ratios: (f64, f64, f64),
) -> Result<Vec<ManifestEntry>> {
    if count < 10 {
        return Err(CsError::invalid("generate_dataset: count must be >= 10"));
    }
    if categories.is_empty() {
        return Err(CsError::invalid("generate_dataset: no categories"));
    }
    let (rt, rv, rs) = ratios;
    if rt <= 0.0 || rv < 0.0 || rs < 0.0 || (rt + rv + rs - 1.0).abs() > 1e-9 {
        return Err(CsError::invalid("generate_dataset: ratios must sum to 1"));
    }
    std::fs::create_dir_all(out_dir)?;
    let n_train = (rt * count as f64).round() as usize;
    let n_val = (rv * count as f64).round() as usize;

    let entries: Vec<Result<ManifestEntry>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let id = format!("sample_{:05}", i);
            let category = categories[i % categories.len()];
            let split = if i < n_train {
                "train"
            } else if i < n_train + n_val {
                "val"
            } else {
                "test"
            };
            let sample_seed = seed.wrapping_add((i as u64).wrapping_mul(0x9E3779B97F4A7C15));
            let sample = synthesize_sample(&id, category, n_points, sample_seed)?;
            let file = format!("{}.pcsm", id);
            write_pcsm(&out_dir.join(&file), &sample.input, &sample.gt_complete)?;
            Ok(ManifestEntry {
                id,
                category: category.as_str().to_string(),
                split: split.to_string(),
                path: file,
                seed: sample_seed,
            })
        })
        .collect();
    let entries: Vec<ManifestEntry> = entries.into_iter().collect::<Result<_>>()?;

    let mut manifest = String::new();
    for e in &entries {
        manifest.push_str(&serde_json::to_string(e)?);
        manifest.push('\n');
    }
    crate::io::atomic_write(&out_dir.join("manifest.jsonl"), manifest.as_bytes())?;
    Ok(entries)
}

/// Read manifest.jsonl from a dataset directory.
pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join("manifest.jsonl");
    let text = std::fs::read_to_string(&path)?;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        entries.push(serde_json::from_str(line).map_err(|e| CsError::Parse {
            line: lineno + 1,
            message: format!("{}: {}", path.display(), e),
        })?);
    }
    Ok(entries)
}

/// Resolve a manifest entry to its sample file.
pub fn sample_path(dir: &Path, entry: &ManifestEntry) -> PathBuf {
    dir.join(&entry.path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::read_pcsm;

    #[test]
    fn unit_square_sampling_is_area_uniform() {
        let spec = ShapeSpec {
            category: Category::Table,
            mesh: vec![
                [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]],
                [[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
            ],
        };
        let n = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cloud = sample_shape(&spec, n, &mut rng).unwrap();
        let mut quadrants = [0usize; 4];
        for p in &cloud.points {
            let q = (p[0] >= 0.5) as usize + 2 * (p[1] >= 0.5) as usize;
            quadrants[q] += 1;
        }
        // binomial: mean n/4, sigma = sqrt(n * 1/4 * 3/4) ~ 43.3
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for q in quadrants {
            assert!(
                (q as f64 - n as f64 / 4.0).abs() < 4.0 * sigma,
                "quadrant count {} too far from {}",
                q,
                n / 4
            );
        }
    }

    #[test]
    fn sample_shape_deterministic_and_minimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = ShapeSpec::sample(Category::Chair, &mut rng);
        let a = sample_shape(&spec, 100, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_shape(&spec, 100, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let one = sample_shape(&spec, 1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn degenerate_mesh_rejected() {
        let spec = ShapeSpec {
            category: Category::Lamp,
            mesh: vec![[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]],
        };
        assert!(sample_shape(&spec, 10, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn scene_clutter_bounded_and_clipped() {
        for seed in 0..4u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = ShapeSpec::sample(Category::ALL[seed as usize % 4], &mut rng);
            let n = 400;
            let (object, clutter) = build_scene(&spec, n, &mut rng).unwrap();
            assert!(clutter.len() >= n / 20 && clutter.len() <= n / 2 + 1);
            let (bmin, bmax) = object.bbox().unwrap();
            let c = [
                (bmin[0] + bmax[0]) / 2.0,
                (bmin[1] + bmax[1]) / 2.0,
                (bmin[2] + bmax[2]) / 2.0,
            ];
            for p in &clutter.points {
                for a in 0..3 {
                    let half = (bmax[a] - bmin[a]) / 2.0 * 1.1;
                    assert!(p[a] >= c[a] - half - 1e-9 && p[a] <= c[a] + half + 1e-9);
                }
            }
        }
    }

    #[test]
    fn scene_deterministic() {
        let build = || {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let spec = ShapeSpec::sample(Category::Cabinet, &mut rng);
            build_scene(&spec, 300, &mut rng).unwrap()
        };
        assert_eq!(build(), build());
    }

    #[test]
    fn partial_sphere_keeps_union_of_two_caps() {
        // points on a sphere: two views see two caps; the union keeps a
        // fraction well inside [0.5, 0.95]
        let n = 600;
        let mut points = Vec::with_capacity(n);
        let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
        for i in 0..n {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let a = golden * i as f64;
            points.push([r * a.cos(), r * a.sin(), z]);
        }
        let object = PointCloud::new(points);
        let clutter = PointCloud::new(vec![]);
        let mut fractions = Vec::new();
        for seed in 0..8u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (partial, views) = make_partial(&object, &clutter, &mut rng).unwrap();
            let frac = partial.len() as f64 / n as f64;
            // a single view keeps at least the facing hemisphere minus
            // discreteness; two can keep nearly everything
            assert!(
                (0.4..=1.0).contains(&frac),
                "seed {}: surviving fraction {}",
                seed,
                frac
            );
            fractions.push(frac);
            assert!(partial.labels.as_ref().unwrap().iter().all(|&l| l == 1.0));
            for v in views {
                assert!((dist(&v, &[0.0; 3]) - 3.0).abs() < 0.02);
            }
        }
        let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
        assert!((0.5..=0.95).contains(&mean), "mean surviving fraction {}", mean);
    }

    #[test]
    fn finalize_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = ShapeSpec::sample(Category::Table, &mut rng);
        let n = 256;
        let (object, clutter) = build_scene(&spec, n, &mut rng).unwrap();
        let (partial, _) = make_partial(&object, &clutter, &mut rng).unwrap();
        let (input, gt, center, scale) = finalize_sample(&partial, &object, n, &mut rng).unwrap();
        assert_eq!(input.len(), n);
        assert_eq!(gt.len(), n);
        for p in input.points.iter().chain(&gt.points) {
            assert!(dist(p, &[0.0; 3]) <= 1.0 + 1e-9);
        }
        assert!(input.labels.as_ref().unwrap().iter().all(|&l| l == 0.0 || l == 1.0));
        // inverse frame restores pre-normalization coordinates
        for p in &input.points {
            let restored = [
                p[0] * scale + center[0],
                p[1] * scale + center[1],
                p[2] * scale + center[2],
            ];
            let renorm = [
                (restored[0] - center[0]) / scale,
                (restored[1] - center[1]) / scale,
                (restored[2] - center[2]) / scale,
            ];
            for a in 0..3 {
                assert!((renorm[a] - p[a]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn synthesized_samples_hold_invariants() {
        for (i, cat) in Category::ALL.iter().enumerate() {
            let s = synthesize_sample(&format!("t{}", i), *cat, 192, 1000 + i as u64).unwrap();
            let labels = s.input.labels.as_ref().unwrap();
            let frac =
                labels.iter().filter(|&&l| l == 0.0).count() as f64 / s.input.len() as f64;
            assert!(frac > 0.0 && frac <= 0.6, "{}: outlier fraction {}", cat, frac);
            assert!(min_outlier_distance(&s.input, &s.gt_complete.points) >= 0.05);
        }
    }

    #[test]
    fn dataset_generation_deterministic_with_valid_manifest() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let gen = |dir: &Path| {
            generate_dataset(dir, 10, 96, 42, &Category::ALL, (0.8, 0.1, 0.1)).unwrap()
        };
        let entries = gen(dir_a.path());
        let again = gen(dir_b.path());
        assert_eq!(entries, again);
        let count = |split: &str| entries.iter().filter(|e| e.split == split).count();
        assert_eq!((count("train"), count("val"), count("test")), (8, 1, 1));

        let manifest = read_manifest(dir_a.path()).unwrap();
        assert_eq!(manifest, entries);
        for e in &manifest {
            let path = sample_path(dir_a.path(), e);
            let (input, gt) = read_pcsm(&path).unwrap();
            assert_eq!(input.len(), 96);
            assert_eq!(gt.len(), 96);
            // regeneration is byte-identical
            let other = std::fs::read(sample_path(dir_b.path(), e)).unwrap();
            assert_eq!(std::fs::read(&path).unwrap(), other);
        }
    }
}
