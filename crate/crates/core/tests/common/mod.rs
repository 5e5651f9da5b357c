#![allow(dead_code)]

use shelfscan::calibration::{CalibrationSet, LabeledTrack};
use shelfscan::detector::{detect_stops, StopParams};
use shelfscan::kinematics::{build_track, DEFAULT_WINDOW, SAMPLE_PERIOD};
use shelfscan::labeling::{visit_matrices, ReviewerLabel};
use shelfscan::synth::{generate, random_population, LayoutTemplate, NoiseSpec, Scenario};

pub const THETA_STAR: StopParams = StopParams {
    t_b: 2.0,
    delta_b: 1.2,
    v_b: 0.55,
};

pub fn population(shoppers: usize, samples: usize, noise: NoiseSpec, seed: u64) -> Scenario {
    let spec = random_population(&LayoutTemplate::default(), shoppers, samples, noise, seed);
    generate(&spec).unwrap()
}

/// Every reviewer of an `n_l` panel labels exactly the detector's stops at
/// `params`, padded by half a sample on each side.
pub fn planted_labels(scenario: &Scenario, params: &StopParams, n_l: usize) -> Vec<ReviewerLabel> {
    let mut labels = Vec::new();
    for traj in &scenario.trajectories {
        let track = build_track(traj, DEFAULT_WINDOW).unwrap();
        let (events, _) = detect_stops(&track, &scenario.layout, params).unwrap();
        for e in events {
            for r in 0..n_l {
                labels.push(ReviewerLabel {
                    reviewer_id: format!("r{r}"),
                    trajectory_id: e.trajectory_id.clone(),
                    shelf_id: e.shelf_id,
                    t_start: e.t_s - SAMPLE_PERIOD / 2.0,
                    t_end: e.t_f + SAMPLE_PERIOD / 2.0,
                });
            }
        }
    }
    labels
}

pub fn labeled_set(scenario: &Scenario, labels: &[ReviewerLabel], n_l: usize) -> CalibrationSet {
    let visits = visit_matrices(labels, &scenario.trajectories, &scenario.layout, n_l).unwrap();
    let dataset = scenario
        .trajectories
        .iter()
        .zip(visits)
        .map(|(t, visits)| LabeledTrack {
            track: build_track(t, DEFAULT_WINDOW).unwrap(),
            visits,
        })
        .collect();
    CalibrationSet::new(dataset, &scenario.layout).unwrap()
}

pub fn planted_set(shoppers: usize, samples: usize, noise: NoiseSpec, seed: u64) -> CalibrationSet {
    let scenario = population(shoppers, samples, noise, seed);
    let labels = planted_labels(&scenario, &THETA_STAR, 3);
    labeled_set(&scenario, &labels, 3)
}
