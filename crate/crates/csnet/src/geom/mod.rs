//! Deterministic, differentiation-free geometry kernels: sampling,
//! neighbor search, visibility and normalization.
//!
//! All operations here are pure functions of their arguments. Tie-breaking
//! is always lowest-index so results match brute-force oracles exactly.

mod hull;

pub use hull::{hidden_point_removal, Viewpoint};

use crate::error::{CsError, Result};
use std::collections::BTreeMap;

/// An ordered list of 3D points with optional per-point labels in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub labels: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        PointCloud {
            points,
            labels: None,
        }
    }

    pub fn with_labels(points: Vec<[f64; 3]>, labels: Vec<f64>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(CsError::invalid(format!(
                "labels length {} != points length {}",
                labels.len(),
                points.len()
            )));
        }
        Ok(PointCloud {
            points,
            labels: Some(labels),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Axis-aligned bounding box, `None` for an empty cloud.
    pub fn bbox(&self) -> Option<([f64; 3], [f64; 3])> {
        if self.points.is_empty() {
            return None;
        }
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        Some((lo, hi))
    }

    /// Largest pairwise extent of the bounding box diagonal.
    pub fn diameter(&self) -> f64 {
        match self.bbox() {
            Some((lo, hi)) => dist(&lo, &hi),
            None => 0.0,
        }
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.points.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.points {
            for a in 0..3 {
                c[a] += p[a];
            }
        }
        for v in &mut c {
            *v /= n;
        }
        c
    }

    /// New cloud keeping only the given indices (labels carried through).
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let points = indices.iter().map(|&i| self.points[i]).collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        PointCloud { points, labels }
    }
}

/// Exact k-nearest-neighbor index, self included at column 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborIndex {
    pub k: usize,
    /// Row j lists the indices of the k nearest points to point j.
    pub indices: Vec<Vec<usize>>,
}

pub fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

pub fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    dist2(a, b).sqrt()
}

/// Greedy maximin (farthest point) sampling over raw coordinates.
///
/// The first index is `seed_index`; each subsequent index maximizes the
/// minimum distance to the already-selected set, ties broken by lowest
/// index. Deterministic given inputs.
pub fn farthest_point_sample_points(
    points: &[[f64; 3]],
    m: usize,
    seed_index: usize,
) -> Result<Vec<usize>> {
    let n = points.len();
    if n == 0 {
        return Err(CsError::invalid("farthest_point_sample: empty cloud"));
    }
    if m == 0 || m > n {
        return Err(CsError::invalid(format!(
            "farthest_point_sample: m={} out of range [1,{}]",
            m, n
        )));
    }
    if seed_index >= n {
        return Err(CsError::invalid(format!(
            "farthest_point_sample: seed_index {} out of range",
            seed_index
        )));
    }
    let mut selected = Vec::with_capacity(m);
    selected.push(seed_index);
    // min squared distance from each point to the selected set
    let mut min_d2: Vec<f64> = points
        .iter()
        .map(|p| dist2(p, &points[seed_index]))
        .collect();
    for _ in 1..m {
        let mut best = 0usize;
        let mut best_d2 = f64::NEG_INFINITY;
        for (j, &d2) in min_d2.iter().enumerate() {
            if d2 > best_d2 {
                best_d2 = d2;
                best = j;
            }
        }
        selected.push(best);
        for (j, d2) in min_d2.iter_mut().enumerate() {
            let nd = dist2(&points[j], &points[best]);
            if nd < *d2 {
                *d2 = nd;
            }
        }
    }
    Ok(selected)
}

pub fn farthest_point_sample(cloud: &PointCloud, m: usize, seed_index: usize) -> Result<Vec<usize>> {
    farthest_point_sample_points(&cloud.points, m, seed_index)
}

/// Exact k nearest neighbors per point, self included, ties by lowest index.
pub fn knn_points(points: &[[f64; 3]], k: usize) -> Result<NeighborIndex> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(CsError::invalid(format!(
            "knn: k={} out of range [1,{}]",
            k, n
        )));
    }
    let mut indices = Vec::with_capacity(n);
    for j in 0..n {
        let mut cand: Vec<(f64, usize)> = (0..n).map(|i| (dist2(&points[j], &points[i]), i)).collect();
        cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        indices.push(cand[..k].iter().map(|&(_, i)| i).collect());
    }
    Ok(NeighborIndex { k, indices })
}

pub fn knn(cloud: &PointCloud, k: usize) -> Result<NeighborIndex> {
    knn_points(&cloud.points, k)
}

/// Row j is the concatenation of the k neighbor coordinates in index order,
/// so the output is N rows of 3k values.
pub fn group_points(cloud: &PointCloud, idx: &NeighborIndex) -> Result<Vec<Vec<f64>>> {
    let n = cloud.len();
    let mut out = Vec::with_capacity(n);
    for row in &idx.indices {
        let mut r = Vec::with_capacity(3 * idx.k);
        for &i in row {
            if i >= n {
                return Err(CsError::invalid(format!(
                    "group_points: index {} out of range for cloud of size {}",
                    i, n
                )));
            }
            r.extend_from_slice(&cloud.points[i]);
        }
        out.push(r);
    }
    Ok(out)
}

/// Voxel-grid downsampling: one centroid per occupied voxel of the grid
/// anchored at the componentwise floor of the minimum corner. Labels, when
/// present, are carried as the per-voxel mean.
pub fn voxel_downsample(cloud: &PointCloud, voxel: f64) -> Result<PointCloud> {
    if voxel <= 0.0 {
        return Err(CsError::invalid("voxel_downsample: voxel must be > 0"));
    }
    if cloud.is_empty() {
        return Ok(PointCloud::new(Vec::new()));
    }
    let (lo, _) = cloud.bbox().unwrap();
    let anchor = [lo[0].floor(), lo[1].floor(), lo[2].floor()];
    // BTreeMap keyed by voxel cell gives deterministic output order.
    let mut cells: BTreeMap<(i64, i64, i64), (usize, [f64; 3], f64)> = BTreeMap::new();
    for (j, p) in cloud.points.iter().enumerate() {
        let key = (
            ((p[0] - anchor[0]) / voxel).floor() as i64,
            ((p[1] - anchor[1]) / voxel).floor() as i64,
            ((p[2] - anchor[2]) / voxel).floor() as i64,
        );
        let label = cloud.labels.as_ref().map_or(0.0, |l| l[j]);
        let e = cells.entry(key).or_insert((0, [0.0; 3], 0.0));
        e.0 += 1;
        for a in 0..3 {
            e.1[a] += p[a];
        }
        e.2 += label;
    }
    let mut points = Vec::with_capacity(cells.len());
    let mut labels = Vec::with_capacity(cells.len());
    for (_, (count, sum, lsum)) in cells {
        let c = count as f64;
        points.push([sum[0] / c, sum[1] / c, sum[2] / c]);
        labels.push(lsum / c);
    }
    Ok(PointCloud {
        points,
        labels: cloud.labels.as_ref().map(|_| labels),
    })
}

/// Center at the centroid and scale by the maximum distance from it, so the
/// output lies in the closed unit ball. Returns `(cloud, center, scale)`;
/// inversion is `p * scale + center`. Degenerate clouds (radius < 1e-12)
/// keep scale 1.
pub fn normalize_unit_ball(cloud: &PointCloud) -> Result<(PointCloud, [f64; 3], f64)> {
    if cloud.is_empty() {
        return Err(CsError::invalid("normalize_unit_ball: empty cloud"));
    }
    let center = cloud.centroid();
    let r = cloud
        .points
        .iter()
        .map(|p| dist(p, &center))
        .fold(0.0f64, f64::max);
    let scale = if r < 1e-12 { 1.0 } else { r };
    Ok((apply_frame(cloud, &center, scale), center, scale))
}

/// Apply an explicit normalization frame: `(p - center) / scale`.
pub fn apply_frame(cloud: &PointCloud, center: &[f64; 3], scale: f64) -> PointCloud {
    let points = cloud
        .points
        .iter()
        .map(|p| {
            [
                (p[0] - center[0]) / scale,
                (p[1] - center[1]) / scale,
                (p[2] - center[2]) / scale,
            ]
        })
        .collect();
    PointCloud {
        points,
        labels: cloud.labels.clone(),
    }
}
