//! Shelf-stop detection.
//!
//! Each sample casts a half-line from the (filtered) shopper position along
//! the body-orientation normal. The nearest segment hit with λ > 0 is the
//! candidate if it is an interactive shelf face; an obstacle hit first means
//! no candidate. A stop is a maximal run of samples with one unchanging
//! candidate, λ ≤ Δ_B and speed ≤ v_B, lasting at least T_B.

use crate::error::{Error, Result};
use crate::geometry::{Segment2D, Vec2, MEMBERSHIP_EPS};
use crate::kinematics::{KinematicTrack, SAMPLE_PERIOD};
use crate::layout::{IndexedSegment, StoreLayout};
use crate::mask::ShelfTimeMask;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Slack added to run durations before comparing against T_B, seconds.
pub const DURATION_TOL: f64 = 1e-9;

/// Below this |sin| between ray and segment the two are treated as parallel.
const PARALLEL_SIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopParams {
    /// Minimum browsing time, seconds.
    pub t_b: f64,
    /// Maximum distance to the shelf, meters.
    pub delta_b: f64,
    /// Maximum browsing speed, m/s.
    pub v_b: f64,
}

impl StopParams {
    pub fn new(t_b: f64, delta_b: f64, v_b: f64) -> Result<Self> {
        let p = StopParams { t_b, delta_b, v_b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("t_b", self.t_b), ("delta_b", self.delta_b), ("v_b", self.v_b)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Candidate shelf seen at one sample, with its distance.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GazeSample {
    pub candidate: Option<usize>,
    pub lambda: Option<f64>,
}

impl GazeSample {
    pub const NONE: GazeSample = GazeSample {
        candidate: None,
        lambda: None,
    };

    pub fn hit(shelf_id: usize, lambda: f64) -> Self {
        GazeSample {
            candidate: Some(shelf_id),
            lambda: Some(lambda),
        }
    }

    pub fn as_hit(&self) -> Option<(usize, f64)> {
        self.candidate.zip(self.lambda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopEvent {
    pub trajectory_id: String,
    pub shelf_id: usize,
    pub t_s: f64,
    pub t_f: f64,
    pub duration: f64,
    pub min_lambda: f64,
    pub mean_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopMatrix {
    pub trajectory_id: String,
    pub mask: ShelfTimeMask,
}

/// Smallest λ > 0 with `origin + λ·direction` on `seg` (endpoints included).
///
/// A ray starting on the segment itself (λ = 0) does not count. For a
/// collinear segment ahead of the origin the nearer endpoint is returned; a
/// collinear segment the origin sits on or has passed yields `None`.
pub fn ray_segment_intersection(origin: Vec2, direction: Vec2, seg: &Segment2D) -> Option<f64> {
    let d = direction.normalized();
    let e = seg.direction();
    let len = e.norm();
    let w = seg.a - origin;
    let denom = d.cross(e);
    if denom.abs() > PARALLEL_SIN * len {
        let lambda = w.cross(e) / denom;
        let mu = w.cross(d) / denom;
        let tol = MEMBERSHIP_EPS / len;
        if (-tol..=1.0 + tol).contains(&mu) && lambda > MEMBERSHIP_EPS {
            Some(lambda)
        } else {
            None
        }
    } else {
        // parallel: only a collinear segment can be hit
        if w.cross(d).abs() > MEMBERSHIP_EPS {
            return None;
        }
        let la = w.dot(d);
        let lb = (seg.b - origin).dot(d);
        let near = la.min(lb);
        (near > MEMBERSHIP_EPS).then_some(near)
    }
}

/// Nearest-hit candidate among pre-ordered segments. Ties keep the earlier
/// segment, so a shelf face beats an equidistant obstacle.
pub fn candidate_among(origin: Vec2, heading: Vec2, segments: &[IndexedSegment]) -> GazeSample {
    let mut best: Option<(f64, &IndexedSegment)> = None;
    for s in segments {
        if let Some(l) = ray_segment_intersection(origin, heading, &s.segment) {
            if best.is_none_or(|(bl, _)| l < bl) {
                best = Some((l, s));
            }
        }
    }
    match best {
        Some((l, s)) if s.is_shelf => GazeSample::hit(s.index, l),
        _ => GazeSample::NONE,
    }
}

pub fn candidate_shelf(origin: Vec2, heading: Vec2, layout: &StoreLayout) -> GazeSample {
    candidate_among(origin, heading, &layout.all_segments())
}

fn check_frame(track: &KinematicTrack, layout: &StoreLayout) -> Result<()> {
    if track.store_id != layout.store_id {
        return Err(Error::FrameMismatch {
            trajectory_id: track.trajectory_id.clone(),
            track_store: track.store_id.clone(),
            layout_store: layout.store_id.clone(),
        });
    }
    Ok(())
}

/// Candidate shelf at every sample. Independent of the stop parameters.
pub fn gaze_stream(track: &KinematicTrack, layout: &StoreLayout) -> Result<Vec<GazeSample>> {
    check_frame(track, layout)?;
    let segments = layout.all_segments();
    Ok(track
        .positions
        .iter()
        .zip(&track.normals)
        .map(|(&p, &n)| candidate_among(p, n, &segments))
        .collect())
}

/// Whether a run of `samples` consecutive samples lasts at least `t_b`.
pub fn run_qualifies(samples: usize, t_b: f64) -> bool {
    samples >= 1 && (samples - 1) as f64 * SAMPLE_PERIOD + DURATION_TOL >= t_b
}

/// Maximal run of samples that satisfy the distance and speed conditions
/// on one candidate shelf. `end` is inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConditionRun {
    pub shelf_id: usize,
    pub start: usize,
    pub end: usize,
}

impl ConditionRun {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn condition_runs(gaze: &[GazeSample], speeds: &[f64], delta_b: f64, v_b: f64) -> Vec<ConditionRun> {
    let mut runs = Vec::new();
    let mut current: Option<ConditionRun> = None;
    for (k, (g, &v)) in gaze.iter().zip(speeds).enumerate() {
        let ok = match g.as_hit() {
            Some((j, l)) if l <= delta_b && v <= v_b => Some(j),
            _ => None,
        };
        current = match (current, ok) {
            (Some(mut run), Some(j)) if run.shelf_id == j && run.end + 1 == k => {
                run.end = k;
                Some(run)
            }
            (prev, next) => {
                runs.extend(prev);
                next.map(|j| ConditionRun {
                    shelf_id: j,
                    start: k,
                    end: k,
                })
            }
        };
    }
    runs.extend(current);
    runs
}

/// Stop extraction from a precomputed gaze stream.
pub fn stops_from_gaze(
    track: &KinematicTrack,
    gaze: &[GazeSample],
    n_shelves: usize,
    params: &StopParams,
) -> (Vec<StopEvent>, StopMatrix) {
    let mut mask = ShelfTimeMask::zeros(n_shelves, track.len());
    let mut events = Vec::new();
    for run in condition_runs(gaze, &track.speeds, params.delta_b, params.v_b) {
        if !run_qualifies(run.len(), params.t_b) {
            continue;
        }
        let mut min_lambda = f64::INFINITY;
        let mut speed_sum = 0.0;
        for (k, g) in gaze.iter().enumerate().take(run.end + 1).skip(run.start) {
            mask.set(run.shelf_id, k, true);
            min_lambda = min_lambda.min(g.lambda.unwrap_or(f64::INFINITY));
            speed_sum += track.speeds[k];
        }
        let t_s = track.times[run.start];
        let t_f = track.times[run.end];
        events.push(StopEvent {
            trajectory_id: track.trajectory_id.clone(),
            shelf_id: run.shelf_id,
            t_s,
            t_f,
            duration: t_f - t_s,
            min_lambda,
            mean_speed: speed_sum / run.len() as f64,
        });
    }
    let matrix = StopMatrix {
        trajectory_id: track.trajectory_id.clone(),
        mask,
    };
    (events, matrix)
}

pub fn detect_stops(
    track: &KinematicTrack,
    layout: &StoreLayout,
    params: &StopParams,
) -> Result<(Vec<StopEvent>, StopMatrix)> {
    params.validate()?;
    let gaze = gaze_stream(track, layout)?;
    Ok(stops_from_gaze(track, &gaze, layout.shelf_count(), params))
}

/// Runs [`detect_stops`] over many tracks in parallel; output order follows
/// input order.
pub fn detect_batch(
    tracks: &[KinematicTrack],
    layout: &StoreLayout,
    params: &StopParams,
) -> Result<Vec<(Vec<StopEvent>, StopMatrix)>> {
    tracks
        .par_iter()
        .map(|t| detect_stops(t, layout, params))
        .collect()
}
