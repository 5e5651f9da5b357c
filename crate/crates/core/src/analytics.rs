//! Visit vectors, per-shelf visit averages and visit-to-purchase conversion.

use crate::detector::StopEvent;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisitVector {
    pub trajectory_id: String,
    /// `bits[j-1]` is true iff shelf `j` received at least one stop.
    pub bits: Vec<bool>,
}

impl VisitVector {
    pub fn visits(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

pub fn visit_vector(trajectory_id: &str, events: &[StopEvent], n_s: usize) -> Result<VisitVector> {
    let mut bits = vec![false; n_s];
    for e in events {
        if e.shelf_id == 0 || e.shelf_id > n_s {
            return Err(Error::ShelfOutOfRange {
                shelf_id: e.shelf_id,
                n_shelves: n_s,
            });
        }
        bits[e.shelf_id - 1] = true;
    }
    Ok(VisitVector {
        trajectory_id: trajectory_id.to_string(),
        bits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShelfStats {
    pub trips: usize,
    /// Mean visit bit per shelf, index `j-1`.
    pub per_shelf: Vec<f64>,
    /// Mean number of visited shelves per trip.
    pub overall: f64,
}

pub fn shelf_stats(vectors: &[VisitVector]) -> Result<ShelfStats> {
    let first = vectors.first().ok_or(Error::EmptyInput)?;
    let n_s = first.bits.len();
    let mut sums = vec![0usize; n_s];
    let mut total = 0usize;
    for v in vectors {
        if v.bits.len() != n_s {
            return Err(Error::LengthMismatch {
                expected: n_s,
                found: v.bits.len(),
            });
        }
        for (s, &b) in sums.iter_mut().zip(&v.bits) {
            *s += b as usize;
        }
        total += v.visits();
    }
    let n = vectors.len() as f64;
    Ok(ShelfStats {
        trips: vectors.len(),
        per_shelf: sums.iter().map(|&s| s as f64 / n).collect(),
        overall: total as f64 / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurchaseRecord {
    pub trajectory_id: String,
    pub shelf_id: usize,
    pub quantity: u64,
}

/// How purchases are averaged per trip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PurchaseMode {
    /// Sum of quantities.
    #[default]
    Quantity,
    /// 1 per (trip, shelf) with any purchase.
    Incidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShelfConversion {
    pub shelf_id: usize,
    pub visit_avg: f64,
    pub purchase_avg: f64,
    /// `None` when the shelf's visit average is zero.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionVector {
    pub mode: PurchaseMode,
    pub shelves: Vec<ShelfConversion>,
}

/// Per shelf: average purchases per trip over average visits per trip.
/// `population` lists the trajectory ids the stats were computed on.
pub fn conversion_rates(
    stats: &ShelfStats,
    purchases: &[PurchaseRecord],
    population: &[String],
    mode: PurchaseMode,
) -> Result<ConversionVector> {
    let ids: BTreeSet<&str> = population.iter().map(String::as_str).collect();
    if ids.len() != stats.trips || population.len() != stats.trips {
        return Err(Error::InconsistentPopulation(format!(
            "stats cover {} trips, population lists {} ({} distinct)",
            stats.trips,
            population.len(),
            ids.len()
        )));
    }
    let n_s = stats.per_shelf.len();
    let mut totals = vec![0u64; n_s];
    let mut seen = BTreeSet::new();
    for p in purchases {
        if !ids.contains(p.trajectory_id.as_str()) {
            return Err(Error::InconsistentPopulation(format!(
                "purchase for trajectory {} outside the population",
                p.trajectory_id
            )));
        }
        if p.shelf_id == 0 || p.shelf_id > n_s {
            return Err(Error::ShelfOutOfRange {
                shelf_id: p.shelf_id,
                n_shelves: n_s,
            });
        }
        match mode {
            PurchaseMode::Quantity => totals[p.shelf_id - 1] += p.quantity,
            PurchaseMode::Incidence => {
                if p.quantity > 0 && seen.insert((p.trajectory_id.as_str(), p.shelf_id)) {
                    totals[p.shelf_id - 1] += 1;
                }
            }
        }
    }
    let trips = stats.trips as f64;
    let shelves = stats
        .per_shelf
        .iter()
        .zip(&totals)
        .enumerate()
        .map(|(i, (&visit_avg, &total))| {
            let purchase_avg = total as f64 / trips;
            ShelfConversion {
                shelf_id: i + 1,
                visit_avg,
                purchase_avg,
                rate: (visit_avg > 0.0).then(|| purchase_avg / visit_avg),
            }
        })
        .collect();
    Ok(ConversionVector { mode, shelves })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(shelf: usize) -> StopEvent {
        StopEvent {
            trajectory_id: "t".into(),
            shelf_id: shelf,
            t_s: 0.0,
            t_f: 2.0,
            duration: 2.0,
            min_lambda: 1.0,
            mean_speed: 0.1,
        }
    }

    fn vv(id: &str, bits: &[u8]) -> VisitVector {
        VisitVector {
            trajectory_id: id.into(),
            bits: bits.iter().map(|&b| b == 1).collect(),
        }
    }

    #[test]
    fn visit_vector_examples() {
        let v = visit_vector("t", &[ev(1), ev(5)], 19).unwrap();
        assert_eq!(v.visits(), 2);
        assert!(v.bits[0] && v.bits[4]);
        assert_eq!(visit_vector("t", &[], 19).unwrap().visits(), 0);
        let v = visit_vector("t", &[ev(7), ev(7), ev(7)], 19).unwrap();
        assert_eq!(v.visits(), 1);
        assert!(v.bits[6]);
        assert!(matches!(visit_vector("t", &[ev(20)], 19), Err(Error::ShelfOutOfRange { .. })));
        assert!(visit_vector("t", &[ev(0)], 19).is_err());
    }

    #[test]
    fn stats_example() {
        let s = shelf_stats(&[vv("a", &[1, 0]), vv("b", &[1, 1])]).unwrap();
        assert_eq!(s.per_shelf, vec![1.0, 0.5]);
        assert_eq!(s.overall, 1.5);
        assert!(matches!(shelf_stats(&[]), Err(Error::EmptyInput)));
        assert!(matches!(shelf_stats(&[vv("a", &[1]), vv("b", &[1, 0])]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn conversion_examples() {
        let vecs = [vv("a", &[1, 0]), vv("b", &[1, 0])];
        let stats = shelf_stats(&vecs).unwrap();
        let pop = vec!["a".to_string(), "b".to_string()];
        let purchases = vec![PurchaseRecord { trajectory_id: "a".into(), shelf_id: 1, quantity: 1 }];
        let c = conversion_rates(&stats, &purchases, &pop, PurchaseMode::Quantity).unwrap();
        assert_eq!(c.shelves[0].rate, Some(0.5));
        assert_eq!(c.shelves[1].rate, None);

        let outsider = vec![PurchaseRecord { trajectory_id: "z".into(), shelf_id: 1, quantity: 1 }];
        assert!(matches!(
            conversion_rates(&stats, &outsider, &pop, PurchaseMode::Quantity),
            Err(Error::InconsistentPopulation(_))
        ));
    }

    #[test]
    fn rates_may_exceed_one_and_incidence_mode() {
        let stats = shelf_stats(&[vv("a", &[1]), vv("b", &[0])]).unwrap();
        let pop = vec!["a".to_string(), "b".to_string()];
        let purchases = vec![
            PurchaseRecord { trajectory_id: "a".into(), shelf_id: 1, quantity: 3 },
            PurchaseRecord { trajectory_id: "a".into(), shelf_id: 1, quantity: 1 },
            PurchaseRecord { trajectory_id: "b".into(), shelf_id: 1, quantity: 2 },
        ];
        let q = conversion_rates(&stats, &purchases, &pop, PurchaseMode::Quantity).unwrap();
        assert_eq!(q.shelves[0].rate, Some(6.0));
        let i = conversion_rates(&stats, &purchases, &pop, PurchaseMode::Incidence).unwrap();
        assert_eq!(i.shelves[0].rate, Some(2.0));
    }

    fn arb_vectors() -> impl Strategy<Value = Vec<VisitVector>> {
        (1usize..20).prop_flat_map(|n_s| {
            prop::collection::vec(prop::collection::vec(any::<bool>(), n_s), 1..30).prop_map(|rows| {
                rows.into_iter()
                    .enumerate()
                    .map(|(i, bits)| VisitVector { trajectory_id: format!("t{i}"), bits })
                    .collect()
            })
        })
    }

    proptest! {
        #[test]
        fn overall_equals_sum_of_shelves(vecs in arb_vectors()) {
            let s = shelf_stats(&vecs).unwrap();
            prop_assert!((s.overall - s.per_shelf.iter().sum::<f64>()).abs() <= 1e-12);
        }

        #[test]
        fn permutation_and_duplication_invariance(vecs in arb_vectors(), qty in prop::collection::vec(0u64..4, 1..30)) {
            let n_s = vecs[0].bits.len();
            let pop: Vec<String> = vecs.iter().map(|v| v.trajectory_id.clone()).collect();
            let purchases: Vec<PurchaseRecord> = pop.iter().zip(&qty).enumerate()
                .map(|(i, (id, &q))| PurchaseRecord { trajectory_id: id.clone(), shelf_id: i % n_s + 1, quantity: q })
                .collect();
            let base = conversion_rates(&shelf_stats(&vecs).unwrap(), &purchases, &pop, PurchaseMode::Quantity).unwrap();

            let mut rev = vecs.clone();
            rev.reverse();
            let s_rev = shelf_stats(&rev).unwrap();
            prop_assert_eq!(&s_rev, &shelf_stats(&vecs).unwrap());

            let dup: Vec<VisitVector> = vecs.iter().cloned()
                .chain(vecs.iter().map(|v| VisitVector { trajectory_id: format!("{}'", v.trajectory_id), ..v.clone() }))
                .collect();
            let dup_pop: Vec<String> = dup.iter().map(|v| v.trajectory_id.clone()).collect();
            let dup_purchases: Vec<PurchaseRecord> = purchases.iter().cloned()
                .chain(purchases.iter().map(|p| PurchaseRecord { trajectory_id: format!("{}'", p.trajectory_id), ..p.clone() }))
                .collect();
            let doubled = conversion_rates(&shelf_stats(&dup).unwrap(), &dup_purchases, &dup_pop, PurchaseMode::Quantity).unwrap();
            for (a, b) in base.shelves.iter().zip(&doubled.shelves) {
                match (a.rate, b.rate) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                    (None, None) => {}
                    other => prop_assert!(false, "definedness changed: {:?}", other),
                }
            }
        }
    }
}
