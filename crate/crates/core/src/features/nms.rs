//! Spatial thinning of corner responses.

use super::Keypoint;

/// Radius within which a strictly stronger response suppresses a keypoint.
pub const SUPPRESSION_RADIUS: f64 = 3.0;

/// Suppresses keypoints that have a strictly stronger neighbor within
/// [`SUPPRESSION_RADIUS`], then keeps the `max_per_cell` strongest survivors of
/// every `cell x cell` tile. Coordinates are taken at the detection level.
///
/// Output order is raster order of the surviving keypoints.
pub fn grid_nms(
    keypoints: &[Keypoint],
    dims: (usize, usize),
    cell: usize,
    max_per_cell: usize,
) -> Vec<Keypoint> {
    assert!(cell >= 8, "NMS cell size must be >= 8");
    let (w, h) = dims;
    let cols = w.div_ceil(cell).max(1);
    let rows = h.div_ceil(cell).max(1);

    // Bucket by cell so the neighborhood search only visits adjacent cells.
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); cols * rows];
    let cell_of = |kp: &Keypoint| {
        let cx = (kp.level_x / cell).min(cols - 1);
        let cy = (kp.level_y / cell).min(rows - 1);
        cy * cols + cx
    };
    for (i, kp) in keypoints.iter().enumerate() {
        buckets[cell_of(kp)].push(i);
    }

    let r2 = SUPPRESSION_RADIUS * SUPPRESSION_RADIUS;
    let dominated = |i: usize| -> bool {
        let kp = &keypoints[i];
        let cx = (kp.level_x / cell).min(cols - 1) as isize;
        let cy = (kp.level_y / cell).min(rows - 1) as isize;
        for ny in (cy - 1).max(0)..=(cy + 1).min(rows as isize - 1) {
            for nx in (cx - 1).max(0)..=(cx + 1).min(cols as isize - 1) {
                for &j in &buckets[ny as usize * cols + nx as usize] {
                    let o = &keypoints[j];
                    let dx = o.level_x as f64 - kp.level_x as f64;
                    let dy = o.level_y as f64 - kp.level_y as f64;
                    if o.score > kp.score && dx * dx + dy * dy <= r2 {
                        return true;
                    }
                }
            }
        }
        false
    };

    let mut keep = Vec::new();
    for bucket in &buckets {
        let mut survivors: Vec<usize> = bucket.iter().copied().filter(|&i| !dominated(i)).collect();
        // Strongest first; ties resolved by raster position for determinism.
        survivors.sort_by(|&a, &b| {
            let (ka, kb) = (&keypoints[a], &keypoints[b]);
            kb.score
                .total_cmp(&ka.score)
                .then(ka.level_y.cmp(&kb.level_y))
                .then(ka.level_x.cmp(&kb.level_x))
        });
        survivors.truncate(max_per_cell);
        keep.extend(survivors);
    }
    keep.sort_by_key(|&i| (keypoints[i].level_y, keypoints[i].level_x));
    keep.into_iter().map(|i| keypoints[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kp(x: usize, y: usize, score: f32) -> Keypoint {
        Keypoint::at_level(x, y, 0, 1.0, score)
    }

    #[test]
    fn single_keypoint_kept() {
        let out = grid_nms(&[kp(5, 5, 1.0)], (64, 64), 16, 3);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn stronger_neighbor_wins() {
        let out = grid_nms(&[kp(10, 10, 10.0), kp(11, 10, 20.0)], (64, 64), 16, 3);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].score, 20.0);
    }

    #[test]
    fn equal_neighbors_both_survive() {
        let out = grid_nms(&[kp(10, 10, 5.0), kp(11, 10, 5.0)], (64, 64), 16, 3);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn suppression_crosses_cell_boundaries() {
        let out = grid_nms(&[kp(15, 10, 5.0), kp(17, 10, 9.0)], (64, 64), 16, 3);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].level_x, 17);
    }

    #[test]
    fn top_k_per_cell() {
        // 10x10 lattice spaced 5 px apart, all inside one 64-px cell.
        let kps: Vec<_> = (0..100)
            .map(|i| kp(2 + 5 * (i % 10), 2 + 5 * (i / 10), i as f32))
            .collect();
        let out = grid_nms(&kps, (64, 64), 64, 5);
        let mut scores: Vec<f32> = out.iter().map(|k| k.score).collect();
        scores.sort_by(f32::total_cmp);
        assert_eq!(scores, vec![95.0, 96.0, 97.0, 98.0, 99.0]);
    }
}
