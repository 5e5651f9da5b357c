mod common;

use common::{labeled_set, population, THETA_STAR};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shelfscan::calibration::{
    confusion_counts, cross_store_eval, precision_recall_f1, same_store_eval, AxisRange, ConfusionCounts, ParamGrid,
};
use shelfscan::detector::detect_stops;
use shelfscan::geometry::Vec2;
use shelfscan::kinematics::{build_track, DEFAULT_WINDOW};
use shelfscan::labeling::{visit_matrices, ReviewerLabel};
use shelfscan::oracle::brute_force_stops;
use shelfscan::synth::{generate, random_params, random_scenario, NoiseSpec, Scenario};

fn noisy() -> NoiseSpec {
    NoiseSpec {
        position_std: 0.05,
        heading_std: 0.2,
    }
}

/// Labels scattered independently of any detector output.
fn random_labels(scenario: &Scenario, n_l: usize, seed: u64) -> Vec<ReviewerLabel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_s = scenario.layout.shelf_count();
    let mut labels = Vec::new();
    for t in &scenario.trajectories {
        let end = t.samples.last().unwrap().t;
        for _ in 0..rng.random_range(0..6) {
            let shelf_id = rng.random_range(1..=n_s);
            let a = rng.random_range(0.0..end);
            let b = a + rng.random_range(0.5..8.0);
            for r in 0..n_l {
                if rng.random_bool(0.7) {
                    labels.push(ReviewerLabel {
                        reviewer_id: format!("r{r}"),
                        trajectory_id: t.trajectory_id.clone(),
                        shelf_id,
                        t_start: a + rng.random_range(-0.2..0.2),
                        t_end: b + rng.random_range(-0.2..0.2),
                    });
                }
            }
        }
    }
    labels
}

#[test]
fn grid_scores_match_exhaustive_rescoring() {
    let scenario = population(25, 300, noisy(), 21);
    let labels = random_labels(&scenario, 3, 5);
    let set = labeled_set(&scenario, &labels, 3);
    let visits = visit_matrices(&labels, &scenario.trajectories, &scenario.layout, 3).unwrap();
    let tracks: Vec<_> = scenario.trajectories.iter().map(|t| build_track(t, DEFAULT_WINDOW).unwrap()).collect();
    let grid = ParamGrid {
        t_b: AxisRange::new(0.5, 3.0, 0.5),
        delta_b: AxisRange::new(0.5, 2.5, 0.5),
        v_b: AxisRange::new(0.2, 1.0, 0.2),
    };
    let indices: Vec<usize> = (0..set.len()).filter(|i| i % 3 != 1).collect();
    let scores = set.score_grid(&indices, &grid).unwrap();
    assert_eq!(scores.len(), 6 * 5 * 5);
    let mut best = (f64::NEG_INFINITY, None);
    for s in &scores {
        let expected: ConfusionCounts = indices
            .iter()
            .map(|&i| {
                let m = brute_force_stops(&tracks[i], &scenario.layout, &s.params).unwrap();
                confusion_counts(&m, &visits[i]).unwrap()
            })
            .sum();
        assert_eq!(s.metrics.counts, expected, "{:?}", s.params);
        assert_eq!(set.evaluate(&indices, &s.params).unwrap(), expected);
        let f1 = precision_recall_f1(expected).f1;
        if f1 > best.0 {
            best = (f1, Some(s.params));
        }
    }
    let result = set.calibrate(&indices, &grid, false).unwrap();
    assert_eq!(result.best_f1, best.0);
    assert_eq!(Some(result.best_params), best.1);
}

#[test]
fn detection_is_frame_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut compared = 0;
    for _ in 0..30 {
        let spec = random_scenario(&mut rng, 20, 50, 600);
        let params = random_params(&mut rng);
        let angle = rng.random_range(-3.0..3.0);
        let shift = Vec2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
        let scenario = generate(&spec).unwrap();
        let moved = scenario.layout.transformed(angle, shift);
        for t in &scenario.trajectories {
            let a = detect_stops(&build_track(t, 5).unwrap(), &scenario.layout, &params).unwrap().1;
            let b = detect_stops(&build_track(&t.transformed(angle, shift), 5).unwrap(), &moved, &params)
                .unwrap()
                .1;
            assert_eq!(a.mask, b.mask, "angle {angle} shift {shift:?} params {params:?}");
            compared += 1;
        }
    }
    assert_eq!(compared, 30);
}

#[test]
fn evaluation_is_seed_deterministic() {
    let scenario = population(30, 300, noisy(), 8);
    let labels = random_labels(&scenario, 4, 9);
    let set = labeled_set(&scenario, &labels, 4);
    let grid = ParamGrid {
        t_b: AxisRange::new(1.0, 3.0, 1.0),
        delta_b: AxisRange::new(0.6, 1.8, 0.6),
        v_b: AxisRange::new(0.25, 0.85, 0.3),
    };
    let a = same_store_eval(&set, &grid, 0.3, 5, 1).unwrap();
    let b = same_store_eval(&set, &grid, 0.3, 5, 1).unwrap();
    let c = same_store_eval(&set, &grid, 0.3, 5, 2).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.scores.len(), 5);
    assert!(a.scores.iter().all(|s| s.train_size == 9 && s.test_size == 21));
    // a different seed draws different subsets
    assert!(a.scores.iter().zip(&c.scores).any(|(x, y)| x.counts != y.counts || x.params != y.params));
}

#[test]
fn cross_store_with_planted_labels_is_perfect() {
    let a = population(40, 400, NoiseSpec::default(), 31);
    let b = population(40, 400, NoiseSpec::default(), 32);
    let la = common::planted_labels(&a, &THETA_STAR, 3);
    let lb = common::planted_labels(&b, &THETA_STAR, 3);
    let grid = ParamGrid::single(THETA_STAR);
    let report = cross_store_eval(&labeled_set(&a, &la, 3), &labeled_set(&b, &lb, 3), &grid, 1.0, 2, 0).unwrap();
    assert_eq!(report.mean_f1, 1.0);
    assert_eq!(report.std_err, 0.0);
    assert!(report.scores.iter().all(|s| s.train_size == 40 && s.test_size == 40));
}
