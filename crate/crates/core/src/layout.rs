//! The 2D projected store model: interactive shelf faces, vision-blocking
//! obstacles and entrances/exits.
//!
//! Segment indices follow one global numbering: shelves occupy `1..=n_s`,
//! obstacles `n_s+1..=n_s+n_o`. Candidate selection scans in this order.

use crate::error::{Error, Result};
use crate::geometry::{Segment2D, Vec2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

/// Maximum deviation from unit length tolerated (and repaired) on load.
pub const NORMAL_UNIT_TOL: f64 = 1e-6;
/// Maximum angular deviation of a face normal from perpendicular, radians.
pub const NORMAL_PERP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shelf {
    pub id: usize,
    pub face: Segment2D,
    pub normal: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub id: usize,
    pub segment: Segment2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portal {
    pub id: usize,
    pub segment: Segment2D,
    pub entrance: bool,
    pub exit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreLayout {
    pub store_id: String,
    #[serde(default, rename = "area_m2", skip_serializing_if = "Option::is_none")]
    pub area: Option<f64>,
    pub shelves: Vec<Shelf>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub portals: Vec<Portal>,
}

/// One entry of the global segment numbering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexedSegment {
    pub index: usize,
    pub segment: Segment2D,
    pub is_shelf: bool,
}

impl StoreLayout {
    /// Checks every invariant and renormalizes near-unit normals.
    pub fn validated(mut self) -> Result<Self> {
        if self.shelves.is_empty() {
            return Err(Error::validation(
                format!("store {}", self.store_id),
                "layout must contain at least one shelf",
            ));
        }
        for (pos, shelf) in self.shelves.iter_mut().enumerate() {
            let element = format!("shelf {}", shelf.id);
            if shelf.id != pos + 1 {
                return Err(Error::validation(
                    element,
                    format!("shelf ids must be 1..n_s in order; expected {}", pos + 1),
                ));
            }
            check_segment(&element, &shelf.face)?;
            let n = shelf.normal;
            if !n.is_finite() || (n.norm() - 1.0).abs() > NORMAL_UNIT_TOL {
                return Err(Error::validation(element, "normal is not unit length"));
            }
            let n = n.normalized();
            let d = shelf.face.direction().normalized();
            // |sin| of the deviation from perpendicular
            if n.dot(d).abs() > NORMAL_PERP_TOL.sin() {
                return Err(Error::validation(element, "normal not perpendicular to face"));
            }
            shelf.normal = n;
        }
        let n_s = self.shelves.len();
        for (pos, obstacle) in self.obstacles.iter().enumerate() {
            let element = format!("obstacle {}", obstacle.id);
            if obstacle.id != n_s + pos + 1 {
                return Err(Error::validation(
                    element,
                    format!("obstacle ids must follow shelves; expected {}", n_s + pos + 1),
                ));
            }
            check_segment(&element, &obstacle.segment)?;
        }
        let mut seen = BTreeSet::new();
        for portal in &self.portals {
            let element = format!("portal {}", portal.id);
            if !seen.insert(portal.id) {
                return Err(Error::validation(element, "duplicate portal id"));
            }
            check_segment(&element, &portal.segment)?;
            if !(portal.entrance || portal.exit) {
                return Err(Error::validation(element, "portal must be an entrance, an exit or both"));
            }
        }
        if let Some(area) = self.area {
            if !(area.is_finite() && area >= 0.0) {
                return Err(Error::validation(format!("store {}", self.store_id), "area must be non-negative"));
            }
        }
        Ok(self)
    }

    pub fn shelf_count(&self) -> usize {
        self.shelves.len()
    }

    pub fn shelf(&self, id: usize) -> Option<&Shelf> {
        id.checked_sub(1).and_then(|i| self.shelves.get(i))
    }

    /// Shelves first, then obstacles, in global index order.
    pub fn all_segments(&self) -> Vec<IndexedSegment> {
        let shelves = self.shelves.iter().map(|s| IndexedSegment {
            index: s.id,
            segment: s.face,
            is_shelf: true,
        });
        let obstacles = self.obstacles.iter().map(|o| IndexedSegment {
            index: o.id,
            segment: o.segment,
            is_shelf: false,
        });
        shelves.chain(obstacles).collect()
    }

    /// Applies a rigid motion `p -> R(angle) p + shift` to every element.
    pub fn transformed(&self, angle: f64, shift: Vec2) -> StoreLayout {
        let f = |p: Vec2| p.rotated(angle) + shift;
        StoreLayout {
            store_id: self.store_id.clone(),
            area: self.area,
            shelves: self
                .shelves
                .iter()
                .map(|s| Shelf {
                    id: s.id,
                    face: s.face.map(f),
                    normal: s.normal.rotated(angle),
                })
                .collect(),
            obstacles: self
                .obstacles
                .iter()
                .map(|o| Obstacle {
                    id: o.id,
                    segment: o.segment.map(f),
                })
                .collect(),
            portals: self
                .portals
                .iter()
                .map(|p| Portal {
                    segment: p.segment.map(f),
                    ..p.clone()
                })
                .collect(),
        }
    }
}

fn check_segment(element: &str, seg: &Segment2D) -> Result<()> {
    if !(seg.a.is_finite() && seg.b.is_finite()) {
        return Err(Error::validation(element, "non-finite coordinate"));
    }
    if seg.is_degenerate() {
        return Err(Error::validation(element, "degenerate segment"));
    }
    Ok(())
}

pub fn parse_layout(text: &str) -> Result<StoreLayout> {
    let raw: StoreLayout = serde_json::from_str(text)?;
    raw.validated()
}

pub fn load_layout(path: impl AsRef<Path>) -> Result<StoreLayout> {
    let text = std::fs::read_to_string(path)?;
    parse_layout(&text)
}

pub fn save_layout(layout: &StoreLayout, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(layout)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
