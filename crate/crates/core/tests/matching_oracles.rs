use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use stereo_vo::features::{detect_and_describe, BinaryDescriptor, FeatureConfig, SamplingPattern};
use stereo_vo::geometry::PoseSE3;
use stereo_vo::image::build_pyramid;
use stereo_vo::matching::{match_ratio, stereo_match, Match, MatchConfig, StereoConfig};
use stereo_vo::synth::{generate_scene, render_stereo, SceneSpec, SequenceSpec};

/// The acceptance rule applied literally with two nested loops.
fn oracle(query: &[BinaryDescriptor], train: &[BinaryDescriptor], config: &MatchConfig) -> Vec<Match> {
    let nearest = |d: &BinaryDescriptor, set: &[BinaryDescriptor]| {
        let dists: Vec<u32> = set.iter().map(|s| (0..256).filter(|&b| d.bit(b) != s.bit(b)).count() as u32).collect();
        let best = *dists.iter().min().unwrap();
        let idx = dists.iter().position(|&x| x == best).unwrap();
        let second = dists
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != idx)
            .map(|(_, &x)| x)
            .min();
        (idx, best, second)
    };
    let mut out = Vec::new();
    for (qi, q) in query.iter().enumerate() {
        let (ti, best, second) = nearest(q, train);
        if best > config.max_dist {
            continue;
        }
        if let Some(second) = second {
            if best as f64 >= config.ratio * second as f64 {
                continue;
            }
        }
        if config.cross_check && nearest(&train[ti], query).0 != qi {
            continue;
        }
        out.push(Match { query_idx: qi, train_idx: ti, distance: best });
    }
    out
}

fn random_descriptor(rng: &mut Xoshiro256StarStar) -> BinaryDescriptor {
    BinaryDescriptor([rng.random(), rng.random(), rng.random(), rng.random()])
}

/// `n` random descriptors and a shuffled, bit-flipped copy of most of them.
fn related_sets(seed: u64, n: usize, flips: usize) -> (Vec<BinaryDescriptor>, Vec<BinaryDescriptor>) {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let query: Vec<_> = (0..n).map(|_| random_descriptor(&mut rng)).collect();
    let mut train = Vec::new();
    for d in &query {
        if rng.random_bool(0.8) {
            let mut d = *d;
            for _ in 0..rng.random_range(0..=flips) {
                d.flip_bit(rng.random_range(0..256));
            }
            train.push(d);
        }
    }
    train.extend((0..n / 4).map(|_| random_descriptor(&mut rng)));
    for i in (1..train.len()).rev() {
        train.swap(i, rng.random_range(0..=i));
    }
    (query, train)
}

#[test]
fn ratio_matching_equals_the_oracle() {
    for seed in 0..40 {
        let (query, train) = related_sets(seed, 64, 100);
        for config in [
            MatchConfig::default(),
            MatchConfig { cross_check: false, ..MatchConfig::default() },
            MatchConfig { ratio: 0.6, max_dist: 40, cross_check: true },
            MatchConfig { ratio: 1.0, max_dist: 256, cross_check: false },
        ] {
            assert_eq!(match_ratio(&query, &train, &config), oracle(&query, &train, &config), "seed {seed}");
        }
    }
}

#[test]
fn duplicated_nearest_is_ambiguous() {
    let mut rng = Xoshiro256StarStar::seed_from_u64(9);
    let q = random_descriptor(&mut rng);
    let train = vec![random_descriptor(&mut rng), q, q];
    assert!(match_ratio(&[q], &train, &MatchConfig::default()).is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn cross_checked_matching_is_symmetric(seed in 0u64..100_000, flips in 0usize..120) {
        let (a, b) = related_sets(seed, 48, flips);
        let config = MatchConfig { ratio: 1.0, ..MatchConfig::default() };
        let mut forward: Vec<(usize, usize, u32)> =
            match_ratio(&a, &b, &config).iter().map(|m| (m.query_idx, m.train_idx, m.distance)).collect();
        let mut backward: Vec<(usize, usize, u32)> =
            match_ratio(&b, &a, &config).iter().map(|m| (m.train_idx, m.query_idx, m.distance)).collect();
        forward.sort_unstable();
        backward.sort_unstable();
        prop_assert_eq!(forward, backward);
    }

    #[test]
    fn match_distances_are_hamming(seed in 0u64..100_000) {
        let (a, b) = related_sets(seed, 32, 60);
        for m in match_ratio(&a, &b, &MatchConfig::default()) {
            prop_assert_eq!(m.distance, a[m.query_idx].hamming(&b[m.train_idx]));
            prop_assert!(m.distance <= 64);
        }
    }
}

/// Random dots at depths 5 to 15 m straight ahead of the identity camera.
fn known_depth_scene() -> SceneSpec {
    SceneSpec {
        n_points: 600,
        bounds_min: Vector3::new(-8.0, -6.0, 5.0),
        bounds_max: Vector3::new(8.0, 6.0, 15.0),
        seed: 21,
        ..SceneSpec::default()
    }
}

/// Fraction of stereo matches whose disparity is within 1 px of the
/// disparity of the rendered dot under the left keypoint.
fn stereo_accuracy(stereo: &StereoConfig) -> (usize, f64) {
    let spec = known_depth_scene();
    let rig = SequenceSpec::default().rig;
    let cloud = generate_scene(&spec);
    let r = render_stereo(&cloud, &PoseSE3::identity(), &rig, (640, 480), &spec);
    let config = FeatureConfig::default();
    let pattern = SamplingPattern::builtin();
    let extract = |img| {
        let pyr = build_pyramid(img, config.pyramid_levels, config.pyramid_scale).unwrap();
        detect_and_describe(&pyr, &config, &pattern)
    };
    let (left, right) = (extract(&r.left), extract(&r.right));
    let d_max = stereo.d_max_for_width(640);
    let obs = stereo_match(&left, &right, stereo.row_tol, stereo.d_min, d_max, stereo.max_dist);
    let mut good = 0;
    for o in &obs {
        let l = &left[o.left_idx].keypoint;
        let rk = &right[o.right_idx].keypoint;
        assert!((l.y - rk.y).abs() <= stereo.row_tol);
        assert!(o.disparity >= stereo.d_min && o.disparity <= d_max);
        assert_eq!(o.disparity, l.x - o.right_x);
        // The nearest visible dot centre; nearer dots are drawn on top.
        let px = Vector2::new(l.x, l.y);
        let truth = r
            .visible
            .iter()
            .filter(|v| (v.left - px).norm() <= 2.5)
            .min_by(|a, b| a.camera_point.z.total_cmp(&b.camera_point.z));
        if truth.is_some_and(|t| (t.disparity - o.disparity).abs() <= 1.0) {
            good += 1;
        }
    }
    (obs.len(), good as f64 / obs.len().max(1) as f64)
}

#[test]
fn rendered_dots_give_accurate_disparities() {
    let bf = SequenceSpec::default().rig.bf();
    let gated = StereoConfig { d_min: bf / 15.0 - 2.0, d_max: Some(bf / 5.0 + 2.0), ..StereoConfig::default() };
    let (n, acc) = stereo_accuracy(&gated);
    println!("depth-gated stereo: {n} matches, {:.1}% within 1 px", 100.0 * acc);
    assert!(n >= 100);
    assert!(acc >= 0.9);

    let (n, acc) = stereo_accuracy(&StereoConfig::default());
    println!("default gates: {n} matches, {:.1}% within 1 px", 100.0 * acc);
    assert!(acc >= 0.9);
}
