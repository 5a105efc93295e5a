//! Brute-force Hamming matching and row-constrained stereo correspondence.

use crate::features::{BinaryDescriptor, Feature};

/// A descriptor correspondence between a query set and a train set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub query_idx: usize,
    pub train_idx: usize,
    pub distance: u32,
}

#[inline]
pub fn hamming(a: &BinaryDescriptor, b: &BinaryDescriptor) -> u32 {
    a.hamming(b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// Nearest must be strictly below `ratio` times the second nearest.
    pub ratio: f64,
    pub max_dist: u32,
    /// Keep only mutual nearest neighbors.
    pub cross_check: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            ratio: 0.8,
            max_dist: 64,
            cross_check: true,
        }
    }
}

/// Nearest index (lowest index on ties), its distance, and the second-best distance.
#[derive(Debug, Clone, Copy)]
struct Nearest {
    idx: usize,
    best: u32,
    second: u32,
}

impl Nearest {
    fn new() -> Self {
        Self {
            idx: usize::MAX,
            best: u32::MAX,
            second: u32::MAX,
        }
    }

    #[inline]
    fn offer(&mut self, idx: usize, d: u32) {
        if d < self.best {
            self.second = self.best;
            self.best = d;
            self.idx = idx;
        } else if d < self.second {
            self.second = d;
        }
    }

    fn passes_ratio(&self, ratio: f64) -> bool {
        self.second == u32::MAX || (self.best as f64) < ratio * self.second as f64
    }
}

/// Exhaustive nearest/second-nearest matching with the ratio criterion.
/// Output is ordered by query index.
pub fn match_ratio(
    query: &[BinaryDescriptor],
    train: &[BinaryDescriptor],
    config: &MatchConfig,
) -> Vec<Match> {
    if query.is_empty() || train.is_empty() {
        return Vec::new();
    }
    let mut per_query = vec![Nearest::new(); query.len()];
    let mut per_train = vec![Nearest::new(); train.len()];
    for (qi, q) in query.iter().enumerate() {
        let nq = &mut per_query[qi];
        for (ti, t) in train.iter().enumerate() {
            let d = q.hamming(t);
            nq.offer(ti, d);
            if config.cross_check {
                per_train[ti].offer(qi, d);
            }
        }
    }
    per_query
        .iter()
        .enumerate()
        .filter_map(|(qi, nq)| {
            if nq.best > config.max_dist || !nq.passes_ratio(config.ratio) {
                return None;
            }
            if config.cross_check {
                let nt = &per_train[nq.idx];
                if nt.idx != qi {
                    return None;
                }
            }
            Some(Match {
                query_idx: qi,
                train_idx: nq.idx,
                distance: nq.best,
            })
        })
        .collect()
}

/// A left feature matched along its epipolar row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoObservation {
    pub left_idx: usize,
    pub right_idx: usize,
    pub disparity: f64,
    pub right_x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoConfig {
    pub row_tol: f64,
    pub d_min: f64,
    /// `None` means one third of the image width.
    pub d_max: Option<f64>,
    pub max_dist: u32,
}

impl Default for StereoConfig {
    fn default() -> Self {
        Self {
            row_tol: 2.0,
            d_min: 1.0,
            d_max: None,
            max_dist: 64,
        }
    }
}

impl StereoConfig {
    pub fn d_max_for_width(&self, width: usize) -> f64 {
        self.d_max.unwrap_or(width as f64 / 3.0)
    }
}

/// Matches each left feature to the best right feature of the same octave
/// lying within `row_tol` rows and `[d_min, d_max]` disparity. A match is
/// kept only if it is also the best left candidate of its right feature
/// (left-right consistency), and a best distance shared by two candidates
/// is ambiguous and yields no match. Output is ordered by left index.
pub fn stereo_match(
    left: &[Feature],
    right: &[Feature],
    row_tol: f64,
    d_min: f64,
    d_max: f64,
    max_dist: u32,
) -> Vec<StereoObservation> {
    let gate = Gate {
        row_tol,
        d_min: d_min.max(f64::MIN_POSITIVE),
        d_max,
        max_dist,
    };
    let l2r = best_along_rows(left, right, &gate, |q, t| q - t);
    let r2l = best_along_rows(right, left, &gate, |q, t| t - q);
    l2r.iter()
        .enumerate()
        .filter_map(|(li, m)| {
            let ri = (*m)?;
            if r2l[ri] != Some(li) {
                return None;
            }
            let right_x = right[ri].keypoint.x;
            Some(StereoObservation {
                left_idx: li,
                right_idx: ri,
                disparity: left[li].keypoint.x - right_x,
                right_x,
            })
        })
        .collect()
}

struct Gate {
    row_tol: f64,
    d_min: f64,
    d_max: f64,
    max_dist: u32,
}

/// For each query feature, the unique best train feature of the same octave
/// within the row band and disparity range, where `disparity(query_x,
/// train_x)` orients the pair as left minus right.
fn best_along_rows(
    query: &[Feature],
    train: &[Feature],
    gate: &Gate,
    disparity: impl Fn(f64, f64) -> f64,
) -> Vec<Option<usize>> {
    // Train features sorted by row so each query scans a narrow band.
    let mut by_row: Vec<usize> = (0..train.len()).collect();
    by_row.sort_by(|&a, &b| train[a].keypoint.y.total_cmp(&train[b].keypoint.y).then(a.cmp(&b)));
    let rows: Vec<f64> = by_row.iter().map(|&i| train[i].keypoint.y).collect();

    query
        .iter()
        .map(|qf| {
            let qk = &qf.keypoint;
            let start = rows.partition_point(|&y| y < qk.y - gate.row_tol);
            let mut best: Option<(u32, usize)> = None;
            let mut tied = false;
            for &ti in &by_row[start..] {
                let tk = &train[ti].keypoint;
                if tk.y > qk.y + gate.row_tol {
                    break;
                }
                if tk.octave != qk.octave {
                    continue;
                }
                let d = disparity(qk.x, tk.x);
                if d < gate.d_min || d > gate.d_max {
                    continue;
                }
                let h = qf.descriptor.hamming(&train[ti].descriptor);
                match best {
                    Some((bh, _)) if h == bh => tied = true,
                    Some((bh, _)) if h > bh => {}
                    _ => {
                        best = Some((h, ti));
                        tied = false;
                    }
                }
            }
            match best {
                Some((h, ti)) if h <= gate.max_dist && !tied => Some(ti),
                _ => None,
            }
        })
        .collect()
}
