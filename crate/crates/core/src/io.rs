//! Readers and writers for the on-disk formats: JSONL trajectories, labels
//! and stop events; JSON manifests; CSV purchases, matrices and tables.

use crate::analytics::{ConversionVector, PurchaseRecord, ShelfStats};
use crate::calibration::{EvalReport, GridScore};
use crate::detector::{StopEvent, StopMatrix};
use crate::error::{Error, Result};
use crate::kinematics::{split_on_gaps, RawSample, Trajectory};
use crate::labeling::{LabelManifest, ReviewerLabel};
use crate::synth::GroundTruth;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrajectoryRecord {
    trajectory_id: String,
    store_id: String,
    samples: Vec<RawSample>,
}

/// Parses JSON Lines, skipping blank lines. Errors carry the line number.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads trajectories, splitting records at tracking dropouts.
pub fn read_trajectories(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let records: Vec<TrajectoryRecord> = read_jsonl(path)?;
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        out.extend(split_on_gaps(&r.trajectory_id, &r.store_id, r.samples)?);
    }
    Ok(out)
}

pub fn write_trajectories(path: impl AsRef<Path>, trajectories: &[Trajectory]) -> Result<()> {
    write_jsonl(path, trajectories)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<ReviewerLabel>> {
    read_jsonl(path)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<LabelManifest> {
    read_json(path)
}

pub fn read_stops(path: impl AsRef<Path>) -> Result<Vec<StopEvent>> {
    read_jsonl(path)
}

pub fn write_ground_truth(path: impl AsRef<Path>, gt: &[GroundTruth]) -> Result<()> {
    write_jsonl(path, gt)
}

pub fn read_purchases(path: impl AsRef<Path>) -> Result<Vec<PurchaseRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Which StopMatrix entries go into the long-form CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixRows {
    /// Every (shelf, sample) entry.
    Full,
    /// Only entries with S = 1.
    Positive,
}

/// Long-form `trajectory_id,shelf_id,k,t,S` rows.
pub fn write_matrix_rows<W: Write>(
    w: &mut csv::Writer<W>,
    matrix: &StopMatrix,
    times: &[f64],
    rows: MatrixRows,
) -> Result<()> {
    let mask = &matrix.mask;
    for shelf in 1..=mask.n_shelves() {
        for (k, &s) in mask.row(shelf).iter().enumerate() {
            if rows == MatrixRows::Positive && !s {
                continue;
            }
            w.write_record([
                matrix.trajectory_id.as_str(),
                &shelf.to_string(),
                &k.to_string(),
                &times[k].to_string(),
                if s { "1" } else { "0" },
            ])?;
        }
    }
    Ok(())
}

pub const MATRIX_HEADER: [&str; 5] = ["trajectory_id", "shelf_id", "k", "t", "S"];

pub fn write_grid_scores(path: impl AsRef<Path>, scores: &[GridScore]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t_b", "delta_b", "v_b", "tp", "fp", "fn", "P", "R", "F1"])?;
    for s in scores {
        let m = &s.metrics;
        w.write_record([
            s.params.t_b.to_string(),
            s.params.delta_b.to_string(),
            s.params.v_b.to_string(),
            m.counts.tp.to_string(),
            m.counts.fp.to_string(),
            m.counts.fn_.to_string(),
            m.precision.to_string(),
            m.recall.to_string(),
            m.f1.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const EVAL_HEADER: [&str; 12] = [
    "p", "repeat", "train_size", "test_size", "t_b", "delta_b", "v_b", "calibration_f1", "f1", "mean_f1", "std_err", "repeats",
];

/// One row per repeat; each row also carries its fraction's mean and
/// standard error.
pub fn write_eval_csv(path: impl AsRef<Path>, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(EVAL_HEADER)?;
    for r in reports {
        for s in &r.scores {
            w.write_record([
                r.p.to_string(),
                s.repeat.to_string(),
                s.train_size.to_string(),
                s.test_size.to_string(),
                s.params.t_b.to_string(),
                s.params.delta_b.to_string(),
                s.params.v_b.to_string(),
                s.calibration_f1.to_string(),
                s.f1.to_string(),
                r.mean_f1.to_string(),
                r.std_err.to_string(),
                r.repeats.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_shelf_stats(path: impl AsRef<Path>, stats: &ShelfStats) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["shelf_id", "avg_visits_per_trip"])?;
    for (i, v) in stats.per_shelf.iter().enumerate() {
        w.write_record([(i + 1).to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Undefined rates are written as empty fields.
pub fn write_conversion(path: impl AsRef<Path>, conv: &ConversionVector) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["shelf_id", "visit_avg", "purchase_avg", "conversion_rate", "conversion_pct"])?;
    for s in &conv.shelves {
        let (rate, pct) = match s.rate {
            Some(r) => (r.to_string(), (100.0 * r).to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([s.shelf_id.to_string(), s.visit_avg.to_string(), s.purchase_avg.to_string(), rate, pct])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use proptest::prelude::*;

    #[test]
    fn trajectory_jsonl_splits_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"trajectory_id":"a","store_id":"s","samples":[[0,0,0,0],[0.1,0,0,0],[0.2,0,0,0]]}"#,
                "\n\n",
                r#"{"trajectory_id":"b","store_id":"s","samples":[[0,0,0,0],[0.1,0,0,0],[0.2,0,0,0],[0.9,0,0,0],[1.0,0,0,0],[1.1,0,0,0]]}"#,
                "\n"
            ),
        )
        .unwrap();
        let ts = read_trajectories(&path).unwrap();
        let ids: Vec<&str> = ts.iter().map(|t| t.trajectory_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b#0", "b#1"]);
    }

    #[test]
    fn jsonl_parse_error_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.jsonl");
        std::fs::write(&path, "{\"reviewer_id\":\"a\"}\n").unwrap();
        match read_labels(&path) {
            Err(Error::Parse(m)) => assert!(m.contains(":1:")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn purchases_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "trajectory_id,shelf_id,quantity\na,3,2\nb,1,0\n").unwrap();
        let p = read_purchases(&path).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!((p[0].shelf_id, p[0].quantity), (3, 2));
    }

    proptest! {
        #[test]
        fn trajectory_round_trip(n in 3usize..30, x0 in -10.0..10.0f64, th in -3.0..3.0f64, seed in 0u64..1000) {
            let samples: Vec<RawSample> = (0..n)
                .map(|k| RawSample::new(k as f64 * 0.1, Vec2::new(x0 + k as f64 * 0.013 * seed as f64, -x0), th))
                .collect();
            let t = Trajectory::new("id", "s", samples).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("t.jsonl");
            write_trajectories(&path, std::slice::from_ref(&t)).unwrap();
            prop_assert_eq!(read_trajectories(&path).unwrap(), vec![t]);
        }
    }
}
