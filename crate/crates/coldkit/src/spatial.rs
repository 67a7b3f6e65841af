//! Relative-position encoding, anchor candidate selection, ambiguous
//! anchor injection, and token-sequence construction with pinned
//! shuffling.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distractor::DistractorSet;
use crate::geom::{self, Vec3};
use crate::rng::SplitMix64;
use crate::scene::{scene_extents, Scene, EXTENT_EPSILON};

#[derive(Debug, Error)]
pub enum SpatialError {
    #[error("unknown object id {0}")]
    UnknownId(u32),
    #[error("no valid anchor: no category-unique object of a non-target category exists")]
    NoValidAnchor,
    #[error("max_anchors must be at least 1")]
    InvalidMaxAnchors,
    #[error("object {0} is not present in the relative position map")]
    AnchorNotInMap(u32),
    #[error("duplicate anchor id {0}")]
    DuplicateAnchor(u32),
    #[error("token sequence syntax error: {0}")]
    TokenSyntax(String),
}

/// Normalized pairwise centroid offsets over a subset of scene objects.
///
/// `entry(i, j)` is the offset of j relative to i, divided per axis by
/// the whole-scene centroid extent; axes flatter than [`EXTENT_EPSILON`]
/// map to zero. The grid is exactly antisymmetric with a zero diagonal
/// and every component lies in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RelativePositionMap {
    object_ids: Vec<u32>,
    index: BTreeMap<u32, usize>,
    entries: Vec<Vec3>,
}

impl RelativePositionMap {
    pub fn object_ids(&self) -> &[u32] {
        &self.object_ids
    }

    pub fn len(&self) -> usize {
        self.object_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.object_ids.is_empty()
    }

    /// Offset of `to` relative to `from`, or None when either id is
    /// outside the encoded subset.
    pub fn entry(&self, from: u32, to: u32) -> Option<Vec3> {
        let i = *self.index.get(&from)?;
        let j = *self.index.get(&to)?;
        Some(self.entries[i * self.object_ids.len() + j])
    }

    pub fn entry_at(&self, i: usize, j: usize) -> Vec3 {
        self.entries[i * self.object_ids.len() + j]
    }
}

/// Build the map over `subset` (typically target + distractors +
/// anchors, keeping the grid small in cluttered scenes).
pub fn relative_position_map(
    scene: &Scene,
    subset: &[u32],
) -> Result<RelativePositionMap, SpatialError> {
    let mut centroids = Vec::with_capacity(subset.len());
    for &id in subset {
        let obj = scene.object(id).ok_or(SpatialError::UnknownId(id))?;
        centroids.push(obj.centroid);
    }
    let extents = scene_extents(scene);
    let normalize = |delta: f64, extent: f64| -> f64 {
        if extent < EXTENT_EPSILON {
            0.0
        } else {
            delta / extent
        }
    };
    let n = subset.len();
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let delta = geom::sub(centroids[j], centroids[i]);
            entries.push([
                normalize(delta[0], extents[0]),
                normalize(delta[1], extents[1]),
                normalize(delta[2], extents[2]),
            ]);
        }
    }
    Ok(RelativePositionMap {
        object_ids: subset.to_vec(),
        index: subset.iter().enumerate().map(|(i, &id)| (id, i)).collect(),
        entries,
    })
}

/// A candidate anchor object for localizing one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorCandidate {
    pub object_id: u32,
    pub distance_to_target: f64,
    /// Set on anchors injected as deliberately ambiguous training
    /// proposals, never on selected candidates.
    pub ambiguous: bool,
}

/// Select anchor candidates: objects of a category different from the
/// target's that occurs exactly once in the scene, sorted ascending by
/// centroid distance to the target (ties by id), truncated to
/// `max_anchors`. Category uniqueness rules out ambiguous-anchor
/// failures by construction.
pub fn select_anchor_candidates(
    scene: &Scene,
    target_id: u32,
    _distractors: &DistractorSet,
    max_anchors: usize,
) -> Result<Vec<AnchorCandidate>, SpatialError> {
    if max_anchors == 0 {
        return Err(SpatialError::InvalidMaxAnchors);
    }
    let target = scene
        .object(target_id)
        .ok_or(SpatialError::UnknownId(target_id))?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for obj in &scene.objects {
        *counts.entry(obj.category.as_str()).or_default() += 1;
    }
    let mut candidates: Vec<AnchorCandidate> = scene
        .objects
        .iter()
        .filter(|o| o.category != target.category && counts[o.category.as_str()] == 1)
        .map(|o| AnchorCandidate {
            object_id: o.id,
            distance_to_target: geom::dist(o.centroid, target.centroid),
            ambiguous: false,
        })
        .collect();
    if candidates.is_empty() {
        return Err(SpatialError::NoValidAnchor);
    }
    candidates.sort_by(|a, b| {
        a.distance_to_target
            .total_cmp(&b.distance_to_target)
            .then(a.object_id.cmp(&b.object_id))
    });
    candidates.truncate(max_anchors);
    Ok(candidates)
}

/// Append one decoy anchor whose distance rank to the target is strictly
/// between the nearest and farthest non-target object, chosen uniformly
/// by the pinned PRNG. No-op when the scene has fewer than three
/// non-target objects or no eligible object remains.
pub fn inject_ambiguous_anchor(
    candidates: &[AnchorCandidate],
    scene: &Scene,
    target_id: u32,
    seed: u64,
) -> Result<Vec<AnchorCandidate>, SpatialError> {
    let target = scene
        .object(target_id)
        .ok_or(SpatialError::UnknownId(target_id))?;
    let mut ranked: Vec<(f64, u32)> = scene
        .objects
        .iter()
        .filter(|o| o.id != target_id)
        .map(|o| (geom::dist(o.centroid, target.centroid), o.id))
        .collect();
    if ranked.len() < 3 {
        return Ok(candidates.to_vec());
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let existing: BTreeSet<u32> = candidates.iter().map(|c| c.object_id).collect();
    let eligible: Vec<&(f64, u32)> = ranked[1..ranked.len() - 1]
        .iter()
        .filter(|(_, id)| !existing.contains(id))
        .collect();
    if eligible.is_empty() {
        return Ok(candidates.to_vec());
    }
    let pick = eligible[SplitMix64::new(seed).next_below(eligible.len() as u64) as usize];
    let mut out = candidates.to_vec();
    out.push(AnchorCandidate {
        object_id: pick.1,
        distance_to_target: pick.0,
        ambiguous: true,
    });
    Ok(out)
}

/// One anchor entry of a token sequence: the anchor reference plus its
/// relative position w.r.t. the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorBlock {
    pub anchor_id: u32,
    pub rel_pos: Vec3,
}

/// Serialized target/anchor block sequence. `seed` records which shuffle
/// produced the block order; it is provenance, so equality compares
/// target and blocks only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenSequence {
    pub target_id: u32,
    pub blocks: Vec<AnchorBlock>,
    pub seed: u64,
}

impl PartialEq for TokenSequence {
    fn eq(&self, other: &Self) -> bool {
        self.target_id == other.target_id && self.blocks == other.blocks
    }
}

/// Build a token sequence whose anchor blocks are the input anchors in
/// Fisher-Yates order under `seed`; each block carries the map entry
/// target -> anchor.
pub fn build_token_sequence(
    scene: &Scene,
    target_id: u32,
    anchors: &[AnchorCandidate],
    rpm: &RelativePositionMap,
    seed: u64,
) -> Result<TokenSequence, SpatialError> {
    scene
        .object(target_id)
        .ok_or(SpatialError::UnknownId(target_id))?;
    let mut seen = BTreeSet::new();
    let mut blocks = Vec::with_capacity(anchors.len());
    for anchor in anchors {
        if !seen.insert(anchor.object_id) {
            return Err(SpatialError::DuplicateAnchor(anchor.object_id));
        }
        let rel_pos = rpm.entry(target_id, anchor.object_id).ok_or_else(|| {
            if rpm.entry(target_id, target_id).is_none() {
                SpatialError::AnchorNotInMap(target_id)
            } else {
                SpatialError::AnchorNotInMap(anchor.object_id)
            }
        })?;
        blocks.push(AnchorBlock {
            anchor_id: anchor.object_id,
            rel_pos,
        });
    }
    SplitMix64::new(seed).shuffle(&mut blocks);
    Ok(TokenSequence {
        target_id,
        blocks,
        seed,
    })
}

/// Render the exact textual grammar:
/// `<PC> T:<id> <Anchor_1> A:<id> RP:(x,y,z) </Anchor_1> ... </PC>`
/// with RP components as shortest round-trip decimals.
pub fn serialize_token_sequence(ts: &TokenSequence) -> String {
    let mut out = format!("<PC> T:{}", ts.target_id);
    for (i, block) in ts.blocks.iter().enumerate() {
        let n = i + 1;
        out.push_str(&format!(
            " <Anchor_{n}> A:{} RP:({},{},{}) </Anchor_{n}>",
            block.anchor_id, block.rel_pos[0], block.rel_pos[1], block.rel_pos[2]
        ));
    }
    out.push_str(" </PC>");
    out
}

/// Inverse of [`serialize_token_sequence`]. The shuffle seed is not part
/// of the textual form, so the parsed sequence carries seed 0; equality
/// ignores it.
pub fn parse_token_sequence(input: &str) -> Result<TokenSequence, SpatialError> {
    let mut tokens = input.split_whitespace().peekable();
    let mut expect = |want: &str| -> Result<(), SpatialError> {
        match tokens.next() {
            Some(t) if t == want => Ok(()),
            Some(t) => Err(SpatialError::TokenSyntax(format!(
                "expected {want:?}, found {t:?}"
            ))),
            None => Err(SpatialError::TokenSyntax(format!(
                "expected {want:?}, found end of input"
            ))),
        }
    };
    expect("<PC>")?;
    let target_tok = match tokens.next() {
        Some(t) => t,
        None => return Err(SpatialError::TokenSyntax("missing target token".into())),
    };
    let target_id: u32 = target_tok
        .strip_prefix("T:")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| SpatialError::TokenSyntax(format!("bad target token {target_tok:?}")))?;
    let mut blocks = Vec::new();
    loop {
        match tokens.next() {
            Some("</PC>") => break,
            Some(open) => {
                let n = open
                    .strip_prefix("<Anchor_")
                    .and_then(|s| s.strip_suffix('>'))
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| SpatialError::TokenSyntax(format!("bad block open {open:?}")))?;
                if n != blocks.len() + 1 {
                    return Err(SpatialError::TokenSyntax(format!(
                        "block index {n} out of order, expected {}",
                        blocks.len() + 1
                    )));
                }
                let anchor_tok = tokens
                    .next()
                    .ok_or_else(|| SpatialError::TokenSyntax("missing anchor token".into()))?;
                let anchor_id: u32 = anchor_tok
                    .strip_prefix("A:")
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| {
                        SpatialError::TokenSyntax(format!("bad anchor token {anchor_tok:?}"))
                    })?;
                let rp_tok = tokens
                    .next()
                    .ok_or_else(|| SpatialError::TokenSyntax("missing RP token".into()))?;
                let body = rp_tok
                    .strip_prefix("RP:(")
                    .and_then(|s| s.strip_suffix(')'))
                    .ok_or_else(|| SpatialError::TokenSyntax(format!("bad RP token {rp_tok:?}")))?;
                let parts: Vec<&str> = body.split(',').collect();
                if parts.len() != 3 {
                    return Err(SpatialError::TokenSyntax(format!(
                        "RP needs 3 components, got {rp_tok:?}"
                    )));
                }
                let mut rel_pos = [0.0; 3];
                for (slot, part) in rel_pos.iter_mut().zip(&parts) {
                    *slot = part.parse().map_err(|_| {
                        SpatialError::TokenSyntax(format!("bad RP component {part:?}"))
                    })?;
                }
                let close = format!("</Anchor_{n}>");
                match tokens.next() {
                    Some(t) if t == close => {}
                    other => {
                        return Err(SpatialError::TokenSyntax(format!(
                            "expected {close:?}, found {other:?}"
                        )))
                    }
                }
                blocks.push(AnchorBlock { anchor_id, rel_pos });
            }
            None => return Err(SpatialError::TokenSyntax("unterminated sequence".into())),
        }
    }
    if tokens.next().is_some() {
        return Err(SpatialError::TokenSyntax(
            "trailing tokens after </PC>".into(),
        ));
    }
    let mut seen = BTreeSet::new();
    for block in &blocks {
        if !seen.insert(block.anchor_id) {
            return Err(SpatialError::DuplicateAnchor(block.anchor_id));
        }
    }
    Ok(TokenSequence {
        target_id,
        blocks,
        seed: 0,
    })
}

/// JSONL record for emitted token sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSequenceRecord {
    pub scene_id: String,
    pub target_id: u32,
    pub seed: u64,
    pub serialized: String,
}
