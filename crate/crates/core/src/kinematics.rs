//! Trajectory ingest, position smoothing, heading normals and speeds.

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Vec2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Tracker sampling period in seconds (10 Hz).
pub const SAMPLE_PERIOD: f64 = 0.1;
/// Allowed jitter on consecutive timestamps.
pub const TIMESTAMP_TOL: f64 = 1e-6;
/// Steps longer than this many periods are treated as tracking dropouts.
pub const GAP_FACTOR: f64 = 1.5;
pub const DEFAULT_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct RawSample {
    pub t: f64,
    pub pos: Vec2,
    pub theta: f64,
}

impl RawSample {
    pub fn new(t: f64, pos: Vec2, theta: f64) -> Self {
        Self { t, pos, theta }
    }
}

impl From<[f64; 4]> for RawSample {
    fn from([t, x, y, theta]: [f64; 4]) -> Self {
        RawSample::new(t, Vec2::new(x, y), theta)
    }
}

impl From<RawSample> for [f64; 4] {
    fn from(s: RawSample) -> Self {
        [s.t, s.pos.x, s.pos.y, s.theta]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub trajectory_id: String,
    pub store_id: String,
    pub samples: Vec<RawSample>,
}

impl Trajectory {
    pub fn new(
        trajectory_id: impl Into<String>,
        store_id: impl Into<String>,
        samples: Vec<RawSample>,
    ) -> Result<Self> {
        let traj = Trajectory {
            trajectory_id: trajectory_id.into(),
            store_id: store_id.into(),
            samples,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        let id = &self.trajectory_id;
        if self.samples.len() < 3 {
            return Err(Error::TooShort {
                id: id.clone(),
                len: self.samples.len(),
            });
        }
        for (k, s) in self.samples.iter().enumerate() {
            if !(s.t.is_finite() && s.pos.is_finite() && s.theta.is_finite()) {
                return Err(Error::validation(format!("trajectory {id}"), format!("non-finite value at sample {k}")));
            }
            if !(s.theta > -PI && s.theta <= PI) {
                return Err(Error::validation(
                    format!("trajectory {id}"),
                    format!("theta {} at sample {k} outside (-pi, pi]", s.theta),
                ));
            }
        }
        for (k, w) in self.samples.windows(2).enumerate() {
            if ((w[1].t - w[0].t) - SAMPLE_PERIOD).abs() > TIMESTAMP_TOL {
                return Err(Error::validation(
                    format!("trajectory {id}"),
                    format!("timestamp step {} between samples {k} and {}", w[1].t - w[0].t, k + 1),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Applies a rigid motion to positions and headings.
    pub fn transformed(&self, angle: f64, shift: Vec2) -> Trajectory {
        Trajectory {
            trajectory_id: self.trajectory_id.clone(),
            store_id: self.store_id.clone(),
            samples: self
                .samples
                .iter()
                .map(|s| RawSample::new(s.t, s.pos.rotated(angle) + shift, wrap_angle(s.theta + angle)))
                .collect(),
        }
    }
}

/// Builds trajectories from a raw record, splitting wherever consecutive
/// timestamps are more than 1.5 sampling periods apart. Headings are wrapped
/// into (-π, π]. Pieces shorter than three samples are dropped. When a split
/// happens the pieces are named `<id>#0`, `<id>#1`, ...
pub fn split_on_gaps(
    trajectory_id: &str,
    store_id: &str,
    samples: Vec<RawSample>,
) -> Result<Vec<Trajectory>> {
    let samples: Vec<RawSample> = samples
        .into_iter()
        .map(|s| RawSample::new(s.t, s.pos, wrap_angle(s.theta)))
        .collect();
    let mut pieces: Vec<Vec<RawSample>> = vec![Vec::new()];
    for (k, s) in samples.iter().enumerate() {
        if let Some(prev) = pieces.last().and_then(|p| p.last()) {
            let step = s.t - prev.t;
            if !(step > 0.0) {
                return Err(Error::validation(
                    format!("trajectory {trajectory_id}"),
                    format!("timestamps not increasing at sample {k}"),
                ));
            }
            if step > GAP_FACTOR * SAMPLE_PERIOD {
                pieces.push(Vec::new());
            }
        }
        pieces.last_mut().unwrap().push(*s);
    }
    if pieces.len() == 1 {
        return Ok(vec![Trajectory::new(trajectory_id, store_id, pieces.pop().unwrap())?]);
    }
    pieces
        .into_iter()
        .enumerate()
        .filter(|(_, p)| p.len() >= 3)
        .map(|(i, p)| Trajectory::new(format!("{trajectory_id}#{i}"), store_id, p))
        .collect()
}

/// Centered moving average over `window` samples, clipped to the available
/// range at both ends.
pub fn low_pass_positions(traj: &Trajectory, window: usize) -> Result<Vec<Vec2>> {
    let pos: Vec<Vec2> = traj.samples.iter().map(|s| s.pos).collect();
    moving_average(&pos, window)
}

pub fn moving_average(points: &[Vec2], window: usize) -> Result<Vec<Vec2>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidWindow(window));
    }
    let half = window / 2;
    let n = points.len();
    Ok((0..n)
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half).min(n - 1);
            let sum = points[lo..=hi].iter().fold(Vec2::default(), |acc, &p| acc + p);
            sum * (1.0 / (hi - lo + 1) as f64)
        })
        .collect())
}

/// Per-sample quantities the detector consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicTrack {
    pub trajectory_id: String,
    pub store_id: String,
    pub times: Vec<f64>,
    pub positions: Vec<Vec2>,
    pub normals: Vec<Vec2>,
    pub speeds: Vec<f64>,
}

impl KinematicTrack {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

pub fn build_track(traj: &Trajectory, window: usize) -> Result<KinematicTrack> {
    let n = traj.samples.len();
    if n < 3 {
        return Err(Error::TooShort {
            id: traj.trajectory_id.clone(),
            len: n,
        });
    }
    let positions = low_pass_positions(traj, window)?;
    let normals = traj.samples.iter().map(|s| Vec2::from_angle(s.theta)).collect();
    let speeds = (0..n)
        .map(|k| {
            if k == 0 {
                (positions[1] - positions[0]).norm() / SAMPLE_PERIOD
            } else if k == n - 1 {
                (positions[n - 1] - positions[n - 2]).norm() / SAMPLE_PERIOD
            } else {
                (positions[k + 1] - positions[k - 1]).norm() / (2.0 * SAMPLE_PERIOD)
            }
        })
        .collect();
    Ok(KinematicTrack {
        trajectory_id: traj.trajectory_id.clone(),
        store_id: traj.store_id.clone(),
        times: traj.times(),
        positions,
        normals,
        speeds,
    })
}
