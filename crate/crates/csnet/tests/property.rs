//! Randomized property tests for the geometry kernels.

use csnet::geom::{
    dist, farthest_point_sample_points, knn_points, normalize_unit_ball, voxel_downsample,
};
use csnet::PointCloud;
use proptest::prelude::*;

fn arb_points(max: usize) -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec(
        prop::array::uniform3(-10.0f64..10.0),
        2..max,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fps_indices_are_unique_and_in_range(points in arb_points(64)) {
        let m = points.len() / 2 + 1;
        let idx = farthest_point_sample_points(&points, m, 0).unwrap();
        prop_assert_eq!(idx.len(), m);
        prop_assert_eq!(idx[0], 0);
        let mut seen = std::collections::HashSet::new();
        for &i in &idx {
            prop_assert!(i < points.len());
            prop_assert!(seen.insert(i), "duplicate index {}", i);
        }
    }

    #[test]
    fn knn_first_neighbor_is_self_and_sorted(points in arb_points(32)) {
        let k = 3.min(points.len());
        let nn = knn_points(&points, k).unwrap();
        for (i, row) in nn.indices.iter().enumerate() {
            prop_assert_eq!(row.len(), k);
            prop_assert_eq!(row[0], i);
            let dists: Vec<f64> = row.iter().map(|&j| dist(&points[i], &points[j])).collect();
            for w in dists.windows(2) {
                prop_assert!(w[0] <= w[1], "neighbors out of order: {:?}", dists);
            }
        }
    }

    #[test]
    fn normalization_fits_the_unit_ball(points in arb_points(48)) {
        let (normalized, _, scale) = normalize_unit_ball(&PointCloud::new(points)).unwrap();
        prop_assert!(scale > 0.0);
        for p in &normalized.points {
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            prop_assert!(r <= 1.0 + 1e-12, "radius {}", r);
        }
    }

    #[test]
    fn voxel_downsample_never_grows(points in arb_points(48)) {
        let cloud = PointCloud::new(points);
        let down = voxel_downsample(&cloud, 0.5).unwrap();
        prop_assert!(!down.is_empty());
        prop_assert!(down.len() <= cloud.len());
    }
}
