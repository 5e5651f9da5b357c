//! Synthetic stores and scripted shoppers with known browsing episodes.
//!
//! Shelves are laid out in rows of single-sided units. Each unit has an
//! interactive face facing +y and three obstacle edges (back and both
//! sides). Shoppers walk waypoint to waypoint in straight lines, heading
//! along their motion, and stand still facing the shelf while browsing.

use crate::detector::StopParams;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Segment2D, Vec2};
use crate::kinematics::{RawSample, Trajectory, SAMPLE_PERIOD};
use crate::layout::{Obstacle, Portal, Shelf, StoreLayout};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutTemplate {
    pub store_id: String,
    pub shelf_count: usize,
    pub shelves_per_row: usize,
    pub shelf_length: f64,
    pub shelf_depth: f64,
    pub shelf_gap: f64,
    pub aisle_width: f64,
}

impl Default for LayoutTemplate {
    fn default() -> Self {
        LayoutTemplate {
            store_id: "synth".into(),
            shelf_count: 19,
            shelves_per_row: 5,
            shelf_length: 2.0,
            shelf_depth: 0.6,
            shelf_gap: 1.5,
            aisle_width: 3.0,
        }
    }
}

/// Axis-aligned walkable bounds of a generated store.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bounds {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }
}

impl LayoutTemplate {
    fn rows(&self) -> usize {
        self.shelf_count.div_ceil(self.shelves_per_row)
    }

    pub fn bounds(&self) -> Bounds {
        let cols = self.shelf_count.min(self.shelves_per_row) as f64;
        let width = cols * (self.shelf_length + self.shelf_gap) - self.shelf_gap;
        let height = self.rows() as f64 * (self.shelf_depth + self.aisle_width);
        Bounds {
            min: Vec2::new(-self.aisle_width, -self.aisle_width),
            max: Vec2::new(width + self.aisle_width, height),
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = [self.shelf_length, self.shelf_depth, self.aisle_width];
        if self.shelf_count == 0 || self.shelves_per_row == 0 {
            return Err(Error::InfeasibleScript("layout needs at least one shelf per row".into()));
        }
        if positive.iter().any(|&v| !(v.is_finite() && v > 0.0)) || !(self.shelf_gap >= 0.0) {
            return Err(Error::InfeasibleScript("layout dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<StoreLayout> {
        self.validate()?;
        let n = self.shelf_count;
        let mut shelves = Vec::with_capacity(n);
        let mut obstacles = Vec::with_capacity(3 * n);
        for i in 0..n {
            let row = (i / self.shelves_per_row) as f64;
            let col = (i % self.shelves_per_row) as f64;
            let x0 = col * (self.shelf_length + self.shelf_gap);
            let x1 = x0 + self.shelf_length;
            let y_face = row * (self.shelf_depth + self.aisle_width) + self.shelf_depth;
            let y_back = y_face - self.shelf_depth;
            shelves.push(Shelf {
                id: i + 1,
                face: Segment2D::new(Vec2::new(x0, y_face), Vec2::new(x1, y_face)),
                normal: Vec2::new(0.0, 1.0),
            });
            for segment in [
                Segment2D::new(Vec2::new(x0, y_back), Vec2::new(x1, y_back)),
                Segment2D::new(Vec2::new(x0, y_back), Vec2::new(x0, y_face)),
                Segment2D::new(Vec2::new(x1, y_back), Vec2::new(x1, y_face)),
            ] {
                obstacles.push(Obstacle {
                    id: n + obstacles.len() + 1,
                    segment,
                });
            }
        }
        let b = self.bounds();
        let portals = vec![
            Portal {
                id: 1,
                segment: Segment2D::new(Vec2::new(b.min.x, b.min.y), Vec2::new(b.min.x, b.min.y + self.aisle_width)),
                entrance: true,
                exit: true,
            },
            Portal {
                id: 2,
                segment: Segment2D::new(Vec2::new(b.max.x, b.min.y), Vec2::new(b.max.x, b.min.y + self.aisle_width)),
                entrance: true,
                exit: true,
            },
        ];
        StoreLayout {
            store_id: self.store_id.clone(),
            area: Some(b.area()),
            shelves,
            obstacles,
            portals,
        }
        .validated()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Waypoint {
    /// Stand `standoff` meters in front of the shelf face at fraction
    /// `offset` along it, facing the face, for `dwell` seconds.
    Browse {
        shelf_id: usize,
        offset: f64,
        standoff: f64,
        dwell: f64,
    },
    /// Go to `target` and stay `dwell` seconds; `heading` defaults to the
    /// direction of arrival.
    Point {
        target: Vec2,
        dwell: f64,
        #[serde(default)]
        heading: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShopperScript {
    #[serde(default)]
    pub trajectory_id: Option<String>,
    pub start: Vec2,
    /// Walking speed, m/s.
    pub speed: f64,
    pub waypoints: Vec<Waypoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Gaussian position jitter, meters.
    pub position_std: f64,
    /// Gaussian heading jitter, radians.
    pub heading_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub layout: LayoutTemplate,
    pub shoppers: Vec<ShopperScript>,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub seed: u64,
    /// Truncate every trajectory to at most this many samples.
    #[serde(default)]
    pub max_samples: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub shelf_id: usize,
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub trajectory_id: String,
    pub episodes: Vec<Episode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub layout: StoreLayout,
    pub trajectories: Vec<Trajectory>,
    pub ground_truth: Vec<GroundTruth>,
}

#[derive(Debug, Clone, Copy)]
enum Piece {
    Walk { from: Vec2, to: Vec2, start: f64, duration: f64, heading: f64 },
    Dwell { at: Vec2, start: f64, heading: f64 },
}

impl Piece {
    fn start(&self) -> f64 {
        match *self {
            Piece::Walk { start, .. } | Piece::Dwell { start, .. } => start,
        }
    }

    fn state(&self, t: f64) -> (Vec2, f64) {
        match *self {
            Piece::Walk { from, to, start, duration, heading } => {
                let u = ((t - start) / duration).clamp(0.0, 1.0);
                (from + (to - from) * u, heading)
            }
            Piece::Dwell { at, heading, .. } => (at, heading),
        }
    }
}

fn check_finite_nonneg(what: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::InfeasibleScript(format!("{what} must be finite and non-negative, got {v}")));
    }
    Ok(())
}

/// Script to (pieces, episodes, total duration).
fn plan(script: &ShopperScript, layout: &StoreLayout, bounds: &Bounds) -> Result<(Vec<Piece>, Vec<Episode>, f64)> {
    if !(script.speed.is_finite() && script.speed > 0.0) {
        return Err(Error::InfeasibleScript(format!("speed must be positive, got {}", script.speed)));
    }
    if !bounds.contains(script.start) {
        return Err(Error::InfeasibleScript(format!("start {:?} outside the store", script.start)));
    }
    let mut pieces = Vec::new();
    let mut episodes = Vec::new();
    let mut pos = script.start;
    let mut t = 0.0;
    let mut heading = 0.0;
    for (i, wp) in script.waypoints.iter().enumerate() {
        let (target, dwell, face_heading, shelf) = match *wp {
            Waypoint::Browse { shelf_id, offset, standoff, dwell } => {
                let shelf = layout
                    .shelf(shelf_id)
                    .ok_or_else(|| Error::InfeasibleScript(format!("waypoint {i}: unknown shelf {shelf_id}")))?;
                if !(0.0..=1.0).contains(&offset) || !(standoff > 0.0 && standoff.is_finite()) {
                    return Err(Error::InfeasibleScript(format!("waypoint {i}: bad offset or standoff")));
                }
                let target = shelf.face.point_at(offset) + shelf.normal * standoff;
                (target, dwell, Some((-shelf.normal).angle()), Some(shelf_id))
            }
            Waypoint::Point { target, dwell, heading } => (target, dwell, heading, None),
        };
        check_finite_nonneg(&format!("waypoint {i} dwell"), dwell)?;
        if !bounds.contains(target) {
            return Err(Error::InfeasibleScript(format!("waypoint {i} at {target:?} outside the store")));
        }
        let dist = (target - pos).norm();
        if dist > 0.0 {
            let duration = dist / script.speed;
            heading = (target - pos).angle();
            pieces.push(Piece::Walk { from: pos, to: target, start: t, duration, heading });
            t += duration;
        }
        pos = target;
        if let Some(h) = face_heading {
            heading = h;
        }
        pieces.push(Piece::Dwell { at: pos, start: t, heading });
        if let Some(shelf_id) = shelf {
            if dwell > 0.0 {
                episodes.push(Episode { shelf_id, t_start: t, t_end: t + dwell });
            }
        }
        t += dwell;
    }
    if pieces.is_empty() {
        pieces.push(Piece::Dwell { at: pos, start: 0.0, heading });
    }
    Ok((pieces, episodes, t))
}

fn sample_script(
    script: &ShopperScript,
    id: String,
    layout: &StoreLayout,
    bounds: &Bounds,
    noise: &NoiseSpec,
    max_samples: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<(Trajectory, GroundTruth)> {
    let (pieces, mut episodes, total) = plan(script, layout, bounds)?;
    let mut n = (total / SAMPLE_PERIOD + 1e-9).floor() as usize + 1;
    if let Some(m) = max_samples {
        n = n.min(m);
    }
    if n < 3 {
        return Err(Error::InfeasibleScript(format!("{id}: script lasts {total} s, fewer than 3 samples")));
    }
    let pos_noise = Normal::new(0.0, noise.position_std).map_err(|e| Error::InfeasibleScript(e.to_string()))?;
    let head_noise = Normal::new(0.0, noise.heading_std).map_err(|e| Error::InfeasibleScript(e.to_string()))?;
    let mut piece = 0;
    let samples = (0..n)
        .map(|k| {
            let t = k as f64 * SAMPLE_PERIOD;
            while piece + 1 < pieces.len() && pieces[piece + 1].start() <= t + 1e-12 {
                piece += 1;
            }
            let (mut p, mut h) = pieces[piece].state(t);
            if noise.position_std > 0.0 {
                p = p + Vec2::new(pos_noise.sample(rng), pos_noise.sample(rng));
            }
            if noise.heading_std > 0.0 {
                h += head_noise.sample(rng);
            }
            RawSample::new(t, p, wrap_angle(h))
        })
        .collect();
    let t_last = (n - 1) as f64 * SAMPLE_PERIOD;
    episodes.retain(|e| e.t_start <= t_last);
    for e in &mut episodes {
        e.t_end = e.t_end.min(t_last);
    }
    let traj = Trajectory::new(id.clone(), layout.store_id.clone(), samples)?;
    Ok((traj, GroundTruth { trajectory_id: id, episodes }))
}

/// Deterministic in `spec.seed`.
pub fn generate(spec: &ScenarioSpec) -> Result<Scenario> {
    let layout = spec.layout.build()?;
    check_finite_nonneg("position noise", spec.noise.position_std)?;
    check_finite_nonneg("heading noise", spec.noise.heading_std)?;
    let bounds = spec.layout.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut trajectories = Vec::with_capacity(spec.shoppers.len());
    let mut ground_truth = Vec::with_capacity(spec.shoppers.len());
    for (i, script) in spec.shoppers.iter().enumerate() {
        let id = script
            .trajectory_id
            .clone()
            .unwrap_or_else(|| format!("{}-{i:05}", layout.store_id));
        let (t, g) = sample_script(script, id, &layout, &bounds, &spec.noise, spec.max_samples, &mut rng)?;
        trajectories.push(t);
        ground_truth.push(g);
    }
    Ok(Scenario {
        layout,
        trajectories,
        ground_truth,
    })
}

/// Knobs for randomized scripts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptRanges {
    pub speed: (f64, f64),
    pub standoff: (f64, f64),
    pub browse_dwell: (f64, f64),
    pub point_dwell: (f64, f64),
    /// Probability that a waypoint is a shelf visit.
    pub browse_prob: f64,
}

impl Default for ScriptRanges {
    fn default() -> Self {
        ScriptRanges {
            speed: (0.3, 1.8),
            standoff: (0.2, 2.5),
            browse_dwell: (0.0, 6.0),
            point_dwell: (0.0, 3.0),
            browse_prob: 0.65,
        }
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn random_point(rng: &mut impl Rng, b: &Bounds) -> Vec2 {
    Vec2::new(rng.random_range(b.min.x..b.max.x), rng.random_range(b.min.y..b.max.y))
}

/// Random script lasting at least `min_duration` seconds.
pub fn random_script(
    rng: &mut impl Rng,
    template: &LayoutTemplate,
    ranges: &ScriptRanges,
    min_duration: f64,
) -> ShopperScript {
    let bounds = template.bounds();
    let speed = uniform(rng, ranges.speed);
    let start = random_point(rng, &bounds);
    let standoff_cap = template.aisle_width * 0.95;
    let mut pos = start;
    let mut elapsed = 0.0;
    let mut waypoints = Vec::new();
    while elapsed < min_duration || waypoints.is_empty() {
        let wp = if rng.random_bool(ranges.browse_prob) {
            let shelf_id = rng.random_range(1..=template.shelf_count);
            let offset = rng.random_range(0.05..0.95);
            let standoff = uniform(rng, ranges.standoff).min(standoff_cap);
            let dwell = uniform(rng, ranges.browse_dwell);
            let i = shelf_id - 1;
            let x0 = (i % template.shelves_per_row) as f64 * (template.shelf_length + template.shelf_gap);
            let y = (i / template.shelves_per_row) as f64 * (template.shelf_depth + template.aisle_width)
                + template.shelf_depth
                + standoff;
            let target = Vec2::new(x0 + offset * template.shelf_length, y);
            elapsed += (target - pos).norm() / speed + dwell;
            pos = target;
            Waypoint::Browse { shelf_id, offset, standoff, dwell }
        } else {
            let target = random_point(rng, &bounds);
            let dwell = uniform(rng, ranges.point_dwell);
            let heading = rng.random_bool(0.5).then(|| rng.random_range(-PI..PI));
            elapsed += (target - pos).norm() / speed + dwell;
            pos = target;
            Waypoint::Point { target, dwell, heading }
        };
        waypoints.push(wp);
    }
    ShopperScript {
        trajectory_id: None,
        start,
        speed,
        waypoints,
    }
}

/// Noise levels the randomized suites cycle through.
pub const POSITION_NOISE_LEVELS: [f64; 4] = [0.0, 0.01, 0.05, 0.15];
pub const HEADING_NOISE_LEVELS: [f64; 4] = [0.0, 0.05, 0.2, 0.5];

/// One randomized single-shopper scenario: 1..=`max_shelves` shelves and a
/// trajectory of `min_len..=max_len` samples, noise drawn from the levels
/// above.
pub fn random_scenario(rng: &mut impl Rng, max_shelves: usize, min_len: usize, max_len: usize) -> ScenarioSpec {
    let shelf_count = rng.random_range(1..=max_shelves);
    let layout = LayoutTemplate {
        store_id: "random".into(),
        shelf_count,
        shelves_per_row: rng.random_range(1..=8),
        shelf_length: rng.random_range(0.8..3.0),
        shelf_depth: rng.random_range(0.3..1.0),
        shelf_gap: rng.random_range(0.0..2.0),
        aisle_width: rng.random_range(1.5..4.0),
    };
    let len = rng.random_range(min_len..=max_len);
    let script = random_script(rng, &layout, &ScriptRanges::default(), len as f64 * SAMPLE_PERIOD);
    ScenarioSpec {
        layout,
        shoppers: vec![script],
        noise: NoiseSpec {
            position_std: POSITION_NOISE_LEVELS[rng.random_range(0..4)],
            heading_std: HEADING_NOISE_LEVELS[rng.random_range(0..4)],
        },
        seed: rng.random(),
        max_samples: Some(len),
    }
}

/// Random parameters; t_b on the 0.1 s lattice so boundary run lengths occur.
pub fn random_params(rng: &mut impl Rng) -> StopParams {
    StopParams {
        t_b: rng.random_range(1..=40) as f64 / 10.0,
        delta_b: rng.random_range(0.3..3.0),
        v_b: rng.random_range(0.1..1.5),
    }
}

/// Many shoppers in one store, each trajectory exactly `samples` long.
pub fn random_population(
    template: &LayoutTemplate,
    shoppers: usize,
    samples: usize,
    noise: NoiseSpec,
    seed: u64,
) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranges = ScriptRanges::default();
    let scripts = (0..shoppers)
        .map(|_| random_script(&mut rng, template, &ranges, samples as f64 * SAMPLE_PERIOD))
        .collect();
    ScenarioSpec {
        layout: template.clone(),
        shoppers: scripts,
        noise,
        seed,
        max_samples: Some(samples),
    }
}
