//! Confusion counting, precision/recall/F1, grid calibration of the stop
//! parameters, and the same-store / cross-store evaluation protocols.

use crate::detector::{condition_runs, gaze_stream, run_qualifies, stops_from_gaze, GazeSample, StopMatrix, StopParams};
use crate::error::{Error, Result};
use crate::kinematics::KinematicTrack;
use crate::labeling::VisitMatrix;
use crate::layout::StoreLayout;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::iter::Sum;
use std::ops::{Add, AddAssign};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, fp, fn_ }
    }
}

impl Add for ConfusionCounts {
    type Output = ConfusionCounts;
    fn add(self, o: Self) -> Self {
        ConfusionCounts::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), Add::add)
    }
}

pub fn confusion_counts(s: &StopMatrix, v: &VisitMatrix) -> Result<ConfusionCounts> {
    if s.trajectory_id != v.trajectory_id {
        return Err(Error::AxisMismatch(format!(
            "stop matrix for {} paired with visits for {}",
            s.trajectory_id, v.trajectory_id
        )));
    }
    if !s.mask.same_shape(&v.mask) {
        return Err(Error::AxisMismatch(format!(
            "{}: stops are {}x{}, visits are {}x{}",
            s.trajectory_id,
            s.mask.n_shelves(),
            s.mask.n_samples(),
            v.mask.n_shelves(),
            v.mask.n_samples()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&sb, &vb) in s.mask.bits().iter().zip(v.mask.bits()) {
        match (sb, vb) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

/// Pooled counts over many trajectories.
pub fn confusion_counts_many<'a>(
    pairs: impl IntoIterator<Item = (&'a StopMatrix, &'a VisitMatrix)>,
) -> Result<ConfusionCounts> {
    pairs.into_iter().map(|(s, v)| confusion_counts(s, v)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
}

/// Zero denominators yield zero rather than NaN.
pub fn precision_recall_f1(c: ConfusionCounts) -> MetricsReport {
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    MetricsReport {
        precision,
        recall,
        f1,
        counts: c,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl AxisRange {
    pub const fn new(min: f64, max: f64, step: f64) -> Self {
        Self { min, max, step }
    }

    pub const fn single(value: f64) -> Self {
        Self {
            min: value,
            max: value,
            step: 1.0,
        }
    }

    /// `min, min+step, ...` up to `max`, each rounded to 1e-9 so that
    /// decimal grid points land on the nearest double.
    pub fn values(&self, name: &str) -> Result<Vec<f64>> {
        if !(self.min.is_finite() && self.max.is_finite() && self.step.is_finite()) {
            return Err(Error::EmptyGrid(format!("{name}: non-finite bounds")));
        }
        if self.min > self.max {
            return Err(Error::EmptyGrid(format!("{name}: min {} > max {}", self.min, self.max)));
        }
        if !(self.step > 0.0) {
            return Err(Error::EmptyGrid(format!("{name}: step must be positive")));
        }
        let count = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count)
            .map(|i| ((self.min + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub t_b: AxisRange,
    pub delta_b: AxisRange,
    pub v_b: AxisRange,
}

impl Default for ParamGrid {
    fn default() -> Self {
        ParamGrid {
            t_b: AxisRange::new(0.5, 4.0, 0.1),
            delta_b: AxisRange::new(0.3, 3.0, 0.05),
            v_b: AxisRange::new(0.1, 1.5, 0.01),
        }
    }
}

impl ParamGrid {
    pub fn single(p: StopParams) -> Self {
        ParamGrid {
            t_b: AxisRange::single(p.t_b),
            delta_b: AxisRange::single(p.delta_b),
            v_b: AxisRange::single(p.v_b),
        }
    }

    /// Axis values, each checked to be a valid parameter.
    pub fn axes(&self) -> Result<[Vec<f64>; 3]> {
        let axes = [
            self.t_b.values("t_b")?,
            self.delta_b.values("delta_b")?,
            self.v_b.values("v_b")?,
        ];
        for (name, axis) in ["t_b", "delta_b", "v_b"].iter().zip(&axes) {
            if axis.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::EmptyGrid(format!("{name}: values must be positive")));
            }
        }
        Ok(axes)
    }

    /// All grid points in lexicographic (t_b, delta_b, v_b) order.
    pub fn points(&self) -> Result<Vec<StopParams>> {
        let [ts, ds, vs] = self.axes()?;
        let mut points = Vec::with_capacity(ts.len() * ds.len() * vs.len());
        for &t_b in &ts {
            for &delta_b in &ds {
                for &v_b in &vs {
                    points.push(StopParams { t_b, delta_b, v_b });
                }
            }
        }
        Ok(points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub params: StopParams,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub best_params: StopParams,
    pub best_f1: f64,
    pub best_metrics: MetricsReport,
    pub grid_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<GridScore>>,
}

/// A kinematic track paired with its reviewer visit flags.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrack {
    pub track: KinematicTrack,
    pub visits: VisitMatrix,
}

#[derive(Debug, Clone)]
struct Prepared {
    track: KinematicTrack,
    gaze: Vec<GazeSample>,
    visits: VisitMatrix,
    visit_total: u64,
}

/// Labeled tracks of one store with their gaze streams cached, so a grid
/// point costs one pass of the threshold/run logic.
#[derive(Debug, Clone)]
pub struct CalibrationSet {
    n_shelves: usize,
    items: Vec<Prepared>,
}

impl CalibrationSet {
    pub fn new(dataset: Vec<LabeledTrack>, layout: &StoreLayout) -> Result<Self> {
        let n_shelves = layout.shelf_count();
        let items = dataset
            .into_par_iter()
            .map(|lt| {
                let gaze = gaze_stream(&lt.track, layout)?;
                if lt.visits.trajectory_id != lt.track.trajectory_id
                    || lt.visits.mask.n_shelves() != n_shelves
                    || lt.visits.mask.n_samples() != lt.track.len()
                {
                    return Err(Error::AxisMismatch(format!(
                        "visits for {} do not match track {}",
                        lt.visits.trajectory_id, lt.track.trajectory_id
                    )));
                }
                let visit_total = lt.visits.mask.count_ones() as u64;
                Ok(Prepared {
                    track: lt.track,
                    gaze,
                    visits: lt.visits,
                    visit_total,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CalibrationSet { n_shelves, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.items.len()).collect()
    }

    /// Pooled counts at one parameter point, via full stop extraction.
    pub fn evaluate(&self, indices: &[usize], params: &StopParams) -> Result<ConfusionCounts> {
        params.validate()?;
        indices
            .par_iter()
            .map(|&i| {
                let item = &self.items[i];
                let (_, s) = stops_from_gaze(&item.track, &item.gaze, self.n_shelves, params);
                confusion_counts(&s, &item.visits)
            })
            .collect::<Result<Vec<_>>>()
            .map(|v| v.into_iter().sum())
    }

    /// Pooled counts at every grid point, lexicographic order.
    ///
    /// Runs depend only on (delta_b, v_b); t_b just filters them by length,
    /// so each run's TP/FP contribution is computed once per pair.
    pub fn score_grid(&self, indices: &[usize], grid: &ParamGrid) -> Result<Vec<GridScore>> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let [ts, ds, vs] = grid.axes()?;
        let visit_total: u64 = indices.iter().map(|&i| self.items[i].visit_total).sum();
        let pairs: Vec<(f64, f64)> = ds.iter().flat_map(|&d| vs.iter().map(move |&v| (d, v))).collect();
        let per_pair: Vec<Vec<(u64, u64)>> = pairs
            .par_iter()
            .map(|&(d, v)| {
                let mut acc = vec![(0u64, 0u64); ts.len()];
                for &i in indices {
                    let item = &self.items[i];
                    for run in condition_runs(&item.gaze, &item.track.speeds, d, v) {
                        let row = item.visits.mask.row(run.shelf_id);
                        let tp = row[run.start..=run.end].iter().filter(|&&b| b).count() as u64;
                        let fp = run.len() as u64 - tp;
                        for (slot, &t) in acc.iter_mut().zip(&ts) {
                            if run_qualifies(run.len(), t) {
                                slot.0 += tp;
                                slot.1 += fp;
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        let mut scores = Vec::with_capacity(ts.len() * pairs.len());
        for (ti, &t) in ts.iter().enumerate() {
            for (pi, &(d, v)) in pairs.iter().enumerate() {
                let (tp, fp) = per_pair[pi][ti];
                let counts = ConfusionCounts::new(tp, fp, visit_total - tp);
                scores.push(GridScore {
                    params: StopParams { t_b: t, delta_b: d, v_b: v },
                    metrics: precision_recall_f1(counts),
                });
            }
        }
        Ok(scores)
    }

    /// Grid point with maximal pooled F1; ties go to the lexicographically
    /// smallest (t_b, delta_b, v_b).
    pub fn calibrate(&self, indices: &[usize], grid: &ParamGrid, keep_scores: bool) -> Result<CalibrationResult> {
        let scores = self.score_grid(indices, grid)?;
        let best = best_score(&scores).ok_or_else(|| Error::EmptyGrid("no grid points".into()))?;
        Ok(CalibrationResult {
            best_params: best.params,
            best_f1: best.metrics.f1,
            best_metrics: best.metrics,
            grid_points: scores.len(),
            scores: keep_scores.then_some(scores),
        })
    }
}

/// First maximal-F1 entry of a lexicographically ordered score table.
pub fn best_score(scores: &[GridScore]) -> Option<GridScore> {
    let mut best: Option<GridScore> = None;
    for s in scores {
        if best.is_none_or(|b| s.metrics.f1 > b.metrics.f1) {
            best = Some(*s);
        }
    }
    best
}

pub fn calibrate(dataset: &[LabeledTrack], layout: &StoreLayout, grid: &ParamGrid) -> Result<CalibrationResult> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let set = CalibrationSet::new(dataset.to_vec(), layout)?;
    set.calibrate(&set.all_indices(), grid, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    SameStore,
    CrossStore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatScore {
    pub repeat: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub params: StopParams,
    pub calibration_f1: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub p: f64,
    pub repeats: usize,
    pub seed: u64,
    pub scores: Vec<RepeatScore>,
    pub mean_f1: f64,
    /// Sample standard deviation over repeats divided by √repeats; 0 for a
    /// single repeat.
    pub std_err: f64,
}

/// Mean and standard error of the per-repeat scores.
pub fn mean_and_std_err(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt() / (n as f64).sqrt())
}

/// `ceil(p·n)` with a little slack so that e.g. 0.3·10 stays 3.
pub fn train_size(p: f64, n: usize) -> usize {
    ((p * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

fn draw_subset(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut idx = rand::seq::index::sample(rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

fn check_repeats(repeats: usize) -> Result<()> {
    if repeats == 0 {
        return Err(Error::validation("protocol", "repeats must be at least 1"));
    }
    Ok(())
}

fn finish(protocol: Protocol, p: f64, repeats: usize, seed: u64, scores: Vec<RepeatScore>) -> EvalReport {
    let f1s: Vec<f64> = scores.iter().map(|s| s.f1).collect();
    let (mean_f1, std_err) = mean_and_std_err(&f1s);
    EvalReport {
        protocol,
        p,
        repeats,
        seed,
        scores,
        mean_f1,
        std_err,
    }
}

/// Calibrate on a random `ceil(p·N)` subset, score on the rest, `repeats`
/// times.
pub fn same_store_eval(set: &CalibrationSet, grid: &ParamGrid, p: f64, repeats: usize, seed: u64) -> Result<EvalReport> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::FractionOutOfRange(p));
    }
    check_repeats(repeats)?;
    if set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = set.len();
    let k = train_size(p, n);
    if k == 0 || k == n {
        return Err(Error::DegenerateSplit { train: k, test: n - k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(repeats);
    for repeat in 0..repeats {
        let train = draw_subset(&mut rng, n, k);
        let mut in_train = vec![false; n];
        for &i in &train {
            in_train[i] = true;
        }
        let test: Vec<usize> = (0..n).filter(|&i| !in_train[i]).collect();
        let cal = set.calibrate(&train, grid, false)?;
        let counts = set.evaluate(&test, &cal.best_params)?;
        scores.push(RepeatScore {
            repeat,
            train_size: train.len(),
            test_size: test.len(),
            params: cal.best_params,
            calibration_f1: cal.best_f1,
            f1: precision_recall_f1(counts).f1,
            counts,
        });
    }
    Ok(finish(Protocol::SameStore, p, repeats, seed, scores))
}

/// Calibrate on a random `ceil(p·N)` subset of store A, score on all of
/// store B.
pub fn cross_store_eval(
    calib: &CalibrationSet,
    eval: &CalibrationSet,
    grid: &ParamGrid,
    p: f64,
    repeats: usize,
    seed: u64,
) -> Result<EvalReport> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::FractionOutOfRange(p));
    }
    check_repeats(repeats)?;
    if calib.is_empty() || eval.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = calib.len();
    let k = train_size(p, n);
    if k == 0 {
        return Err(Error::DegenerateSplit { train: 0, test: eval.len() });
    }
    let test = eval.all_indices();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(repeats);
    for repeat in 0..repeats {
        let train = draw_subset(&mut rng, n, k);
        let cal = calib.calibrate(&train, grid, false)?;
        let counts = eval.evaluate(&test, &cal.best_params)?;
        scores.push(RepeatScore {
            repeat,
            train_size: train.len(),
            test_size: test.len(),
            params: cal.best_params,
            calibration_f1: cal.best_f1,
            f1: precision_recall_f1(counts).f1,
            counts,
        });
    }
    Ok(finish(Protocol::CrossStore, p, repeats, seed, scores))
}
