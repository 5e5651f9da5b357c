//! Reviewer interval labels to per-sample majority-vote visit flags.

use crate::error::{Error, Result};
use crate::kinematics::Trajectory;
use crate::layout::StoreLayout;
use crate::mask::ShelfTimeMask;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// One reviewer's claim that a shopper browsed a shelf over
/// `[t_start, t_end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewerLabel {
    pub reviewer_id: String,
    pub trajectory_id: String,
    pub shelf_id: usize,
    pub t_start: f64,
    pub t_end: f64,
}

impl ReviewerLabel {
    pub fn covers(&self, t: f64) -> bool {
        self.t_start <= t && t < self.t_end
    }
}

/// Panel description shipped next to a labels file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelManifest {
    pub n_l: usize,
    #[serde(default)]
    pub reviewers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisitMatrix {
    pub trajectory_id: String,
    pub n_l: usize,
    pub mask: ShelfTimeMask,
}

fn check_label(label: &ReviewerLabel, traj: &Trajectory, n_shelves: usize) -> Result<()> {
    if label.trajectory_id != traj.trajectory_id {
        return Err(Error::UnknownTrajectory(label.trajectory_id.clone()));
    }
    if label.shelf_id == 0 || label.shelf_id > n_shelves {
        return Err(Error::UnknownShelf {
            shelf_id: label.shelf_id,
            n_shelves,
        });
    }
    if !(label.t_start < label.t_end) {
        return Err(Error::validation(
            format!("label by {} on {}", label.reviewer_id, label.trajectory_id),
            "t_start must precede t_end",
        ));
    }
    Ok(())
}

/// Strict-majority vote: V = 1 iff more than `n_l / 2` distinct reviewers
/// cover the sample. Reviewers without labels still count toward `n_l`.
pub fn majority_vote(
    labels: &[ReviewerLabel],
    traj: &Trajectory,
    layout: &StoreLayout,
    n_l: usize,
) -> Result<VisitMatrix> {
    if n_l == 0 {
        return Err(Error::validation("manifest", "n_l must be at least 1"));
    }
    let n_shelves = layout.shelf_count();
    let mut reviewers = BTreeSet::new();
    for label in labels {
        check_label(label, traj, n_shelves)?;
        reviewers.insert(label.reviewer_id.as_str());
    }
    if reviewers.len() > n_l {
        return Err(Error::ReviewerCountMismatch {
            found: reviewers.len(),
            n_l,
        });
    }

    let n = traj.len();
    let times = traj.times();
    // per (shelf, reviewer): union of that reviewer's intervals
    let mut coverage: BTreeMap<(usize, &str), Vec<bool>> = BTreeMap::new();
    for label in labels {
        let row = coverage
            .entry((label.shelf_id, label.reviewer_id.as_str()))
            .or_insert_with(|| vec![false; n]);
        for (k, &t) in times.iter().enumerate() {
            if label.covers(t) {
                row[k] = true;
            }
        }
    }
    let mut votes = vec![0usize; n_shelves * n];
    for ((shelf, _), row) in &coverage {
        for (k, _) in row.iter().enumerate().filter(|(_, &c)| c) {
            votes[(shelf - 1) * n + k] += 1;
        }
    }
    let mut mask = ShelfTimeMask::zeros(n_shelves, n);
    for shelf in 1..=n_shelves {
        for k in 0..n {
            // n > n_l / 2  <=>  2n > n_l
            if 2 * votes[(shelf - 1) * n + k] > n_l {
                mask.set(shelf, k, true);
            }
        }
    }
    Ok(VisitMatrix {
        trajectory_id: traj.trajectory_id.clone(),
        n_l,
        mask,
    })
}

/// Groups labels by trajectory, rejecting labels for trajectories that are
/// not in `trajectories`.
pub fn group_labels(
    labels: &[ReviewerLabel],
    trajectories: &[Trajectory],
) -> Result<BTreeMap<String, Vec<ReviewerLabel>>> {
    let mut groups: BTreeMap<String, Vec<ReviewerLabel>> = trajectories
        .iter()
        .map(|t| (t.trajectory_id.clone(), Vec::new()))
        .collect();
    for label in labels {
        match groups.get_mut(&label.trajectory_id) {
            Some(g) => g.push(label.clone()),
            None => return Err(Error::UnknownTrajectory(label.trajectory_id.clone())),
        }
    }
    Ok(groups)
}

/// Checks labels against an explicit reviewer roster.
pub fn check_roster(labels: &[ReviewerLabel], manifest: &LabelManifest) -> Result<()> {
    if manifest.reviewers.is_empty() {
        return Ok(());
    }
    if manifest.reviewers.len() != manifest.n_l {
        return Err(Error::validation(
            "manifest",
            format!("roster lists {} reviewers but n_l is {}", manifest.reviewers.len(), manifest.n_l),
        ));
    }
    let roster: BTreeSet<&str> = manifest.reviewers.iter().map(String::as_str).collect();
    match labels.iter().find(|l| !roster.contains(l.reviewer_id.as_str())) {
        Some(l) => Err(Error::validation(
            "manifest",
            format!("reviewer {} is not on the roster", l.reviewer_id),
        )),
        None => Ok(()),
    }
}

/// Majority vote for every trajectory, in trajectory order.
pub fn visit_matrices(
    labels: &[ReviewerLabel],
    trajectories: &[Trajectory],
    layout: &StoreLayout,
    n_l: usize,
) -> Result<Vec<VisitMatrix>> {
    let groups = group_labels(labels, trajectories)?;
    let mut distinct = BTreeSet::new();
    for l in labels {
        distinct.insert(l.reviewer_id.as_str());
    }
    if distinct.len() > n_l {
        return Err(Error::ReviewerCountMismatch {
            found: distinct.len(),
            n_l,
        });
    }
    trajectories
        .iter()
        .map(|t| majority_vote(&groups[&t.trajectory_id], t, layout, n_l))
        .collect()
}
