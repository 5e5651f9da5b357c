//! Brute-force reference for stop detection and the randomized
//! equivalence check built on it.
//!
//! The reference enumerates sample intervals directly instead of scanning
//! runs, and picks each sample's candidate by collecting every ray hit and
//! taking the minimum by (λ, segment index).

use crate::detector::{detect_stops, ray_segment_intersection, StopMatrix, StopParams, DURATION_TOL};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::kinematics::{build_track, KinematicTrack, SAMPLE_PERIOD};
use crate::layout::StoreLayout;
use crate::mask::ShelfTimeMask;
use crate::synth::{generate, random_params, random_scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

fn enumerate_candidate(origin: Vec2, heading: Vec2, layout: &StoreLayout) -> Option<(usize, f64)> {
    let mut hits: Vec<(f64, usize, bool)> = Vec::new();
    for shelf in &layout.shelves {
        if let Some(l) = ray_segment_intersection(origin, heading, &shelf.face) {
            hits.push((l, shelf.id, true));
        }
    }
    for obstacle in &layout.obstacles {
        if let Some(l) = ray_segment_intersection(origin, heading, &obstacle.segment) {
            hits.push((l, obstacle.id, false));
        }
    }
    let nearest = hits
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))?;
    nearest.2.then_some((nearest.1, nearest.0))
}

pub fn brute_force_stops(track: &KinematicTrack, layout: &StoreLayout, params: &StopParams) -> Result<StopMatrix> {
    params.validate()?;
    if track.store_id != layout.store_id {
        return Err(Error::FrameMismatch {
            trajectory_id: track.trajectory_id.clone(),
            track_store: track.store_id.clone(),
            layout_store: layout.store_id.clone(),
        });
    }
    let n = track.len();
    let candidates: Vec<Option<(usize, f64)>> = (0..n)
        .map(|k| enumerate_candidate(track.positions[k], track.normals[k], layout))
        .collect();
    let holds = |j: usize, k: usize| match candidates[k] {
        Some((c, l)) => c == j && l <= params.delta_b && track.speeds[k] <= params.v_b,
        None => false,
    };
    let mut mask = ShelfTimeMask::zeros(layout.shelf_count(), n);
    for j in 1..=layout.shelf_count() {
        for ks in 0..n {
            // every kf such that all of ks..=kf satisfy the conditions; the
            // union of the qualifying [ks, kf] is [ks, last qualifying kf]
            let mut last = None;
            for kf in ks..n {
                if !holds(j, kf) {
                    break;
                }
                if (kf - ks) as f64 * SAMPLE_PERIOD + DURATION_TOL >= params.t_b {
                    last = Some(kf);
                }
            }
            if let Some(kf) = last {
                for k in ks..=kf {
                    mask.set(j, k, true);
                }
            }
        }
    }
    Ok(StopMatrix {
        trajectory_id: track.trajectory_id.clone(),
        mask,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub scenario: usize,
    pub trajectory_id: String,
    pub shelf_id: usize,
    pub k: usize,
    pub detector: bool,
    pub oracle: bool,
    pub params: StopParams,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub seed: u64,
    pub scenarios: usize,
    pub samples_checked: u64,
    pub mismatched_scenarios: usize,
    pub passed: bool,
    pub first_counterexample: Option<Counterexample>,
}

pub const MAX_SHELVES: usize = 50;
pub const MIN_LEN: usize = 3;
pub const MAX_LEN: usize = 2000;
const WINDOWS: [usize; 4] = [1, 3, 5, 7];

/// Seed for scenario `i` of a check seeded with `seed`.
pub fn scenario_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Per-scenario result: sample count and the first disagreement, if any.
pub fn check_scenario(seed: u64, i: usize) -> Result<(u64, Option<Counterexample>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario_seed(seed, i));
    let spec = random_scenario(&mut rng, MAX_SHELVES, MIN_LEN, MAX_LEN);
    let params = random_params(&mut rng);
    let window = WINDOWS[rng.random_range(0..WINDOWS.len())];
    let scenario = generate(&spec)?;
    let mut samples = 0;
    for traj in &scenario.trajectories {
        let track = build_track(traj, window)?;
        let (_, fast) = detect_stops(&track, &scenario.layout, &params)?;
        let slow = brute_force_stops(&track, &scenario.layout, &params)?;
        samples += track.len() as u64;
        if fast != slow {
            let (shelf_id, k) = (1..=scenario.layout.shelf_count())
                .flat_map(|j| (0..track.len()).map(move |k| (j, k)))
                .find(|&(j, k)| fast.mask.get(j, k) != slow.mask.get(j, k))
                .unwrap_or((0, 0));
            let (detector, oracle) = if shelf_id > 0 {
                (fast.mask.get(shelf_id, k), slow.mask.get(shelf_id, k))
            } else {
                (false, false)
            };
            return Ok((
                samples,
                Some(Counterexample {
                    scenario: i,
                    trajectory_id: traj.trajectory_id.clone(),
                    shelf_id,
                    k,
                    detector,
                    oracle,
                    params,
                    window,
                }),
            ));
        }
    }
    Ok((samples, None))
}

/// Detector vs brute force on `scenarios` seeded random scenarios.
pub fn oracle_check(seed: u64, scenarios: usize) -> Result<OracleReport> {
    let results = (0..scenarios)
        .into_par_iter()
        .map(|i| check_scenario(seed, i))
        .collect::<Result<Vec<_>>>()?;
    let samples_checked = results.iter().map(|r| r.0).sum();
    let failures: Vec<&Counterexample> = results.iter().filter_map(|r| r.1.as_ref()).collect();
    Ok(OracleReport {
        seed,
        scenarios,
        samples_checked,
        mismatched_scenarios: failures.len(),
        passed: failures.is_empty(),
        first_counterexample: failures.first().map(|c| (*c).clone()),
    })
}
