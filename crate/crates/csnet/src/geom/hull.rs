//! Hidden point removal: spherical flipping plus a convex hull decides
//! which points a viewpoint can see.

use super::{dist, PointCloud};
use crate::error::{CsError, Result};
use std::collections::HashSet;

/// A camera position with the spherical-flip radius used by hidden point
/// removal. `flip_radius` must strictly exceed the distance from the
/// position to every input point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewpoint {
    pub position: [f64; 3],
    pub flip_radius: f64,
}

impl Viewpoint {
    pub fn new(position: [f64; 3], flip_radius: f64) -> Self {
        Viewpoint {
            position,
            flip_radius,
        }
    }

    /// Viewpoint with the default flip radius of 100x the cloud diameter
    /// (grown further if the camera sits far from the cloud).
    pub fn auto(cloud: &PointCloud, position: [f64; 3]) -> Self {
        let max_d = cloud
            .points
            .iter()
            .map(|p| dist(p, &position))
            .fold(0.0f64, f64::max);
        let flip_radius = (100.0 * cloud.diameter()).max(2.0 * max_d).max(1.0);
        Viewpoint {
            position,
            flip_radius,
        }
    }
}

/// Returns the sorted indices of points visible from the viewpoint.
///
/// Each point is mapped through the spherical flip
/// `p' = p + 2(R - ||p - c||) (p - c) / ||p - c||`; a point is visible iff
/// its flipped image is a vertex of the convex hull of the flipped set
/// together with the viewpoint itself.
pub fn hidden_point_removal(cloud: &PointCloud, view: &Viewpoint) -> Result<Vec<usize>> {
    let n = cloud.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let c = view.position;
    let r = view.flip_radius;
    let mut flipped = Vec::with_capacity(n + 1);
    for p in &cloud.points {
        let d = dist(p, &c);
        if d < 1e-12 {
            return Err(CsError::invalid(
                "hidden_point_removal: point coincident with viewpoint",
            ));
        }
        if d >= r {
            return Err(CsError::invalid(format!(
                "hidden_point_removal: flip_radius {} does not exceed point distance {}",
                r, d
            )));
        }
        let s = (2.0 * r - d) / d;
        flipped.push([
            c[0] + (p[0] - c[0]) * s,
            c[1] + (p[1] - c[1]) * s,
            c[2] + (p[2] - c[2]) * s,
        ]);
    }
    flipped.push(c);
    let on_hull = convex_hull_vertices(&flipped, 1e-10);
    Ok((0..n).filter(|&i| on_hull[i]).collect())
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Marks which input points are vertices of the convex hull.
///
/// Degenerate inputs fall back to lower-dimensional hulls: coincident
/// points are all vertices, collinear sets keep their two extremes, and
/// coplanar sets use a 2D hull in their plane. `tol` is relative to the
/// coordinate scale of the input.
pub fn convex_hull_vertices(points: &[[f64; 3]], tol: f64) -> Vec<bool> {
    let n = points.len();
    if n <= 2 {
        return vec![true; n];
    }
    let scale = points
        .iter()
        .map(|p| p.iter().map(|v| v.abs()).fold(0.0f64, f64::max))
        .fold(0.0f64, f64::max)
        .max(1.0);
    let eps = tol * scale;

    // Extreme pair along the largest spread.
    let mut i0 = 0;
    let mut i1 = 0;
    let mut best = -1.0;
    for axis in 0..3 {
        let lo = (0..n)
            .min_by(|&a, &b| points[a][axis].partial_cmp(&points[b][axis]).unwrap())
            .unwrap();
        let hi = (0..n)
            .max_by(|&a, &b| points[a][axis].partial_cmp(&points[b][axis]).unwrap())
            .unwrap();
        let d = dist(&points[lo], &points[hi]);
        if d > best {
            best = d;
            i0 = lo;
            i1 = hi;
        }
    }
    if best <= eps {
        // all points coincide
        return vec![true; n];
    }

    // Farthest point from the line i0-i1.
    let dir = sub(&points[i1], &points[i0]);
    let dn = norm(&dir);
    let mut i2 = usize::MAX;
    let mut best_line = eps;
    for j in 0..n {
        let v = sub(&points[j], &points[i0]);
        let d = norm(&cross(&v, &dir)) / dn;
        if d > best_line {
            best_line = d;
            i2 = j;
        }
    }
    if i2 == usize::MAX {
        return collinear_hull(points, &points[i0], &dir, eps);
    }

    // Farthest point from the plane (i0, i1, i2).
    let normal = cross(&dir, &sub(&points[i2], &points[i0]));
    let nn = norm(&normal);
    let unit_n = [normal[0] / nn, normal[1] / nn, normal[2] / nn];
    let mut i3 = usize::MAX;
    let mut best_plane = eps;
    for j in 0..n {
        let d = dot(&sub(&points[j], &points[i0]), &unit_n).abs();
        if d > best_plane {
            best_plane = d;
            i3 = j;
        }
    }
    if i3 == usize::MAX {
        return planar_hull(points, &points[i0], &unit_n, eps);
    }

    quickhull_3d(points, [i0, i1, i2, i3], eps)
}

/// 1D hull: only the extreme points along the line are vertices.
fn collinear_hull(points: &[[f64; 3]], origin: &[f64; 3], dir: &[f64; 3], eps: f64) -> Vec<bool> {
    let dn = norm(dir);
    let t: Vec<f64> = points
        .iter()
        .map(|p| dot(&sub(p, origin), dir) / dn)
        .collect();
    let tmin = t.iter().cloned().fold(f64::INFINITY, f64::min);
    let tmax = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    t.iter()
        .map(|&v| v <= tmin + eps || v >= tmax - eps)
        .collect()
}

/// 2D hull in the plane with the given unit normal (monotone chain).
fn planar_hull(points: &[[f64; 3]], origin: &[f64; 3], unit_n: &[f64; 3], eps: f64) -> Vec<bool> {
    // build an in-plane basis
    let mut u = cross(unit_n, &[1.0, 0.0, 0.0]);
    if norm(&u) < 1e-6 {
        u = cross(unit_n, &[0.0, 1.0, 0.0]);
    }
    let un = norm(&u);
    let u = [u[0] / un, u[1] / un, u[2] / un];
    let v = cross(unit_n, &u);

    let proj: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let w = sub(p, origin);
            (dot(&w, &u), dot(&w, &v))
        })
        .collect();
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        proj[a]
            .partial_cmp(&proj[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let spread = {
        let first = order[0];
        let last = order[order.len() - 1];
        ((proj[last].0 - proj[first].0).powi(2) + (proj[last].1 - proj[first].1).powi(2)).sqrt()
    };
    let eps_area = eps * spread.max(1.0);
    let cross2 = |o: usize, a: usize, b: usize| -> f64 {
        (proj[a].0 - proj[o].0) * (proj[b].1 - proj[o].1)
            - (proj[a].1 - proj[o].1) * (proj[b].0 - proj[o].0)
    };
    // monotone chain, lower then upper
    let mut set: HashSet<usize> = HashSet::new();
    for pass in [order.clone(), order.iter().rev().cloned().collect::<Vec<_>>()] {
        let mut chain: Vec<usize> = Vec::new();
        for &i in &pass {
            while chain.len() >= 2
                && cross2(chain[chain.len() - 2], chain[chain.len() - 1], i) <= eps_area
            {
                chain.pop();
            }
            chain.push(i);
        }
        set.extend(chain);
    }
    (0..points.len()).map(|i| set.contains(&i)).collect()
}

#[derive(Clone)]
struct Face {
    verts: [usize; 3],
    normal: [f64; 3], // unit outward normal
    offset: f64,      // plane offset: dot(normal, x) = offset
    outside: Vec<usize>,
    alive: bool,
}

impl Face {
    fn new(points: &[[f64; 3]], a: usize, b: usize, c: usize, interior: &[f64; 3]) -> Face {
        let mut verts = [a, b, c];
        let mut normal = cross(&sub(&points[b], &points[a]), &sub(&points[c], &points[a]));
        let nn = norm(&normal).max(1e-300);
        for x in &mut normal {
            *x /= nn;
        }
        let mut offset = dot(&normal, &points[a]);
        if dot(&normal, interior) > offset {
            // flip orientation so the interior point is below the plane
            verts.swap(1, 2);
            for x in &mut normal {
                *x = -*x;
            }
            offset = -offset;
        }
        Face {
            verts,
            normal,
            offset,
            outside: Vec::new(),
            alive: true,
        }
    }

    fn height(&self, p: &[f64; 3]) -> f64 {
        dot(&self.normal, p) - self.offset
    }
}

fn quickhull_3d(points: &[[f64; 3]], simplex: [usize; 4], eps: f64) -> Vec<bool> {
    let n = points.len();
    let interior = {
        let mut c = [0.0; 3];
        for &i in &simplex {
            for a in 0..3 {
                c[a] += points[i][a] / 4.0;
            }
        }
        c
    };
    let [a, b, c, d] = simplex;
    let mut faces = vec![
        Face::new(points, a, b, c, &interior),
        Face::new(points, a, b, d, &interior),
        Face::new(points, a, c, d, &interior),
        Face::new(points, b, c, d, &interior),
    ];

    // assign each point to the first face it is strictly above
    for j in 0..n {
        if simplex.contains(&j) {
            continue;
        }
        for f in faces.iter_mut() {
            if f.height(&points[j]) > eps {
                f.outside.push(j);
                break;
            }
        }
    }

    loop {
        // face with the farthest pending point
        let mut pick: Option<(usize, usize, f64)> = None;
        for (fi, f) in faces.iter().enumerate() {
            if !f.alive || f.outside.is_empty() {
                continue;
            }
            for &j in &f.outside {
                let h = f.height(&points[j]);
                if pick.map_or(true, |(_, _, best)| h > best) {
                    pick = Some((fi, j, h));
                }
            }
        }
        let Some((_, apex, _)) = pick else { break };

        // all faces visible from the apex
        let visible: Vec<usize> = faces
            .iter()
            .enumerate()
            .filter(|(_, f)| f.alive && f.height(&points[apex]) > eps)
            .map(|(i, _)| i)
            .collect();
        if visible.is_empty() {
            // apex no longer above any face; drop it from pending sets
            for f in faces.iter_mut() {
                f.outside.retain(|&j| j != apex);
            }
            continue;
        }

        // horizon: directed edges of visible faces whose reverse edge is
        // not part of any visible face
        let mut edge_set: HashSet<(usize, usize)> = HashSet::new();
        for &fi in &visible {
            let [x, y, z] = faces[fi].verts;
            for (u, v) in [(x, y), (y, z), (z, x)] {
                edge_set.insert((u, v));
            }
        }
        let mut horizon: Vec<(usize, usize)> = Vec::new();
        for &(u, v) in &edge_set {
            if !edge_set.contains(&(v, u)) {
                horizon.push((u, v));
            }
        }
        horizon.sort_unstable();

        // orphaned points to redistribute
        let mut orphans: Vec<usize> = Vec::new();
        for &fi in &visible {
            faces[fi].alive = false;
            orphans.append(&mut faces[fi].outside);
        }
        orphans.sort_unstable();
        orphans.dedup();
        orphans.retain(|&j| j != apex);

        for (u, v) in horizon {
            let mut f = Face::new(points, u, v, apex, &interior);
            for &j in &orphans {
                if f.height(&points[j]) > eps {
                    f.outside.push(j);
                }
            }
            faces.push(f);
        }
        // points above no new face are interior and silently dropped
    }

    let mut on_hull = vec![false; n];
    for f in faces.iter().filter(|f| f.alive) {
        for &v in &f.verts {
            on_hull[v] = true;
        }
    }
    on_hull
}
