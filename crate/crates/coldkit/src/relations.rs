//! Spatial relation vocabulary and its geometric semantics.
//!
//! This is the single source of truth for what each relation means: the
//! instruction generator and the grounding oracle both call into these
//! predicates, so they cannot drift apart.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distractor::DistractorSet;
use crate::geom::{self, Vec3};
use crate::scene::{ObjectInstance, Scene};

#[derive(Debug, Error)]
pub enum RelationError {
    #[error("unknown object id {0}")]
    UnknownId(u32),
    #[error("{kind:?} takes {expected} anchor(s), got {actual}")]
    ArityMismatch {
        kind: RelationKind,
        expected: usize,
        actual: usize,
    },
}

/// View-independent relation vocabulary. View-dependent relations
/// (left/right/front/behind) are deliberately absent: centroid-and-box
/// geometry carries no orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Closest,
    Farthest,
    Near,
    Far,
    Above,
    Below,
    SupportedBy,
    Between,
}

impl RelationKind {
    pub fn arity(self) -> usize {
        match self {
            RelationKind::Between => 2,
            _ => 1,
        }
    }
}

/// A relation applied to concrete anchor objects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialRelation {
    pub kind: RelationKind,
    pub anchor_ids: Vec<u32>,
}

impl SpatialRelation {
    pub fn new(kind: RelationKind, anchor_ids: Vec<u32>) -> Result<Self, RelationError> {
        if anchor_ids.len() != kind.arity() {
            return Err(RelationError::ArityMismatch {
                kind,
                expected: kind.arity(),
                actual: anchor_ids.len(),
            });
        }
        Ok(Self { kind, anchor_ids })
    }
}

/// Distance and gap thresholds for the metric relations. Defaults are
/// unambiguous at typical room scale; all are overridable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelationThresholds {
    /// near: centroid distance at most this many meters.
    pub near_max: f64,
    /// far: centroid distance at least this many meters.
    pub far_min: f64,
    /// supported_by: |bottom(subject) - top(anchor)| at most this.
    pub support_gap: f64,
    /// between: perpendicular distance to the anchor-anchor segment.
    pub between_perp_max: f64,
    /// between: projection parameter must lie strictly inside
    /// (between_t_min, between_t_max).
    pub between_t_min: f64,
    pub between_t_max: f64,
}

impl Default for RelationThresholds {
    fn default() -> Self {
        Self {
            near_max: 1.0,
            far_min: 2.5,
            support_gap: 0.1,
            between_perp_max: 0.5,
            between_t_min: 0.1,
            between_t_max: 0.9,
        }
    }
}

/// All relations are irreflexive: a subject never stands in a relation
/// to itself.
pub(crate) fn near(s: &ObjectInstance, a: &ObjectInstance, th: &RelationThresholds) -> bool {
    s.id != a.id && geom::dist(s.centroid, a.centroid) <= th.near_max
}

pub(crate) fn far(s: &ObjectInstance, a: &ObjectInstance, th: &RelationThresholds) -> bool {
    s.id != a.id && geom::dist(s.centroid, a.centroid) >= th.far_min
}

/// Plan-view overlap: the two boxes intersect when projected onto the
/// xy plane.
fn horizontally_aligned(s: &ObjectInstance, a: &ObjectInstance) -> bool {
    (s.centroid[0] - a.centroid[0]).abs() <= (s.size[0] + a.size[0]) / 2.0
        && (s.centroid[1] - a.centroid[1]).abs() <= (s.size[1] + a.size[1]) / 2.0
}

pub(crate) fn above(s: &ObjectInstance, a: &ObjectInstance) -> bool {
    s.id != a.id && s.centroid[2] > a.centroid[2] && horizontally_aligned(s, a)
}

pub(crate) fn below(s: &ObjectInstance, a: &ObjectInstance) -> bool {
    s.id != a.id && s.centroid[2] < a.centroid[2] && horizontally_aligned(s, a)
}

pub(crate) fn supported_by(
    s: &ObjectInstance,
    a: &ObjectInstance,
    th: &RelationThresholds,
) -> bool {
    if !above(s, a) {
        return false;
    }
    let subject_bottom = s.centroid[2] - s.size[2] / 2.0;
    let anchor_top = a.centroid[2] + a.size[2] / 2.0;
    (subject_bottom - anchor_top).abs() <= th.support_gap
}

pub(crate) fn between(
    s: &ObjectInstance,
    a1: &ObjectInstance,
    a2: &ObjectInstance,
    th: &RelationThresholds,
) -> bool {
    if s.id == a1.id || s.id == a2.id || a1.id == a2.id {
        return false;
    }
    let seg = geom::sub(a2.centroid, a1.centroid);
    let seg_len_sq = geom::dot(seg, seg);
    if seg_len_sq <= 0.0 {
        return false;
    }
    let to_s = geom::sub(s.centroid, a1.centroid);
    let t = geom::dot(to_s, seg) / seg_len_sq;
    if t <= th.between_t_min || t >= th.between_t_max {
        return false;
    }
    let projection: Vec3 = [
        a1.centroid[0] + t * seg[0],
        a1.centroid[1] + t * seg[1],
        a1.centroid[2] + t * seg[2],
    ];
    geom::dist(s.centroid, projection) <= th.between_perp_max
}

/// Subject is at minimal distance to `anchor` within `comparison`
/// (anchor and subject excluded from the comparison; ties count).
pub(crate) fn closest_among<'a>(
    s: &ObjectInstance,
    anchor: &ObjectInstance,
    comparison: impl IntoIterator<Item = &'a ObjectInstance>,
) -> bool {
    if s.id == anchor.id {
        return false;
    }
    let d_subject = geom::dist(s.centroid, anchor.centroid);
    comparison
        .into_iter()
        .filter(|o| o.id != s.id && o.id != anchor.id)
        .all(|o| d_subject <= geom::dist(o.centroid, anchor.centroid))
}

pub(crate) fn farthest_among<'a>(
    s: &ObjectInstance,
    anchor: &ObjectInstance,
    comparison: impl IntoIterator<Item = &'a ObjectInstance>,
) -> bool {
    if s.id == anchor.id {
        return false;
    }
    let d_subject = geom::dist(s.centroid, anchor.centroid);
    comparison
        .into_iter()
        .filter(|o| o.id != s.id && o.id != anchor.id)
        .all(|o| d_subject >= geom::dist(o.centroid, anchor.centroid))
}

/// Evaluate a relation for `subject_id`. For closest/farthest the
/// comparison set is the target plus its distractors; other relations
/// are pairwise predicates against the named anchors.
pub fn holds(
    relation: &SpatialRelation,
    subject_id: u32,
    scene: &Scene,
    distractors: &DistractorSet,
    thresholds: &RelationThresholds,
) -> Result<bool, RelationError> {
    if relation.anchor_ids.len() != relation.kind.arity() {
        return Err(RelationError::ArityMismatch {
            kind: relation.kind,
            expected: relation.kind.arity(),
            actual: relation.anchor_ids.len(),
        });
    }
    let subject = scene
        .object(subject_id)
        .ok_or(RelationError::UnknownId(subject_id))?;
    let anchor = |idx: usize| -> Result<&ObjectInstance, RelationError> {
        let id = relation.anchor_ids[idx];
        scene.object(id).ok_or(RelationError::UnknownId(id))
    };

    Ok(match relation.kind {
        RelationKind::Closest | RelationKind::Farthest => {
            let a = anchor(0)?;
            let mut comparison = Vec::with_capacity(distractors.members.len() + 1);
            for &id in std::iter::once(&distractors.target_id).chain(&distractors.members) {
                comparison.push(scene.object(id).ok_or(RelationError::UnknownId(id))?);
            }
            match relation.kind {
                RelationKind::Closest => closest_among(subject, a, comparison),
                _ => farthest_among(subject, a, comparison),
            }
        }
        RelationKind::Near => near(subject, anchor(0)?, thresholds),
        RelationKind::Far => far(subject, anchor(0)?, thresholds),
        RelationKind::Above => above(subject, anchor(0)?),
        RelationKind::Below => below(subject, anchor(0)?),
        RelationKind::SupportedBy => supported_by(subject, anchor(0)?, thresholds),
        RelationKind::Between => between(subject, anchor(0)?, anchor(1)?, thresholds),
    })
}
