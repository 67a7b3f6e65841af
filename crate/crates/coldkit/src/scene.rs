//! Scene representation, JSON ingestion/emission, and seeded procedural
//! generation of desk-scale rooms.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{self, Vec3};
use crate::rng::SplitMix64;

/// Rejection-sampling cap per object when enforcing `min_separation`.
const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// Axis extents below this are treated as degenerate (flat) axes.
pub const EXTENT_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("malformed scene file {path}: {message}")]
    MalformedFile { path: String, message: String },
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("feature dim mismatch on object {id}: scene declares {declared:?}, object carries {actual:?}")]
    FeatureDimMismatch {
        id: u32,
        declared: Option<usize>,
        actual: Option<usize>,
    },
    #[error(
        "placement exhausted: could not place object {object_index} after {attempts} attempts \
         (room {room_extent:?}, min separation {min_separation})"
    )]
    PlacementExhausted {
        object_index: usize,
        attempts: usize,
        room_extent: Vec3,
        min_separation: f64,
    },
}

/// One labeled, positioned, axis-aligned object in a room.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: u32,
    pub category: String,
    /// Centroid in meters.
    pub centroid: Vec3,
    /// Full axis-aligned extents in meters, each component > 0.
    pub size: Vec3,
    /// Optional unit-normalized feature vector of the scene-wide
    /// dimensionality.
    #[serde(default)]
    pub feature: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_id: String,
    pub feature_dim: Option<usize>,
    pub objects: Vec<ObjectInstance>,
}

impl Scene {
    pub fn object(&self, id: u32) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Number of objects carrying the given category.
    pub fn category_count(&self, category: &str) -> usize {
        self.objects
            .iter()
            .filter(|o| o.category == category)
            .count()
    }

    /// Sorted, deduplicated category list; doubles as the parser lexicon
    /// for texts grounded against this scene.
    pub fn categories(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.objects.iter().map(|o| o.category.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Check every type invariant; called by the loader and the emitter.
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.objects.len() < 2 {
            return Err(SceneError::InvariantViolation(format!(
                "scene {:?} must contain at least 2 objects, found {}",
                self.scene_id,
                self.objects.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for obj in &self.objects {
            if !seen.insert(obj.id) {
                return Err(SceneError::InvariantViolation(format!(
                    "duplicate object id {} in scene {:?}",
                    obj.id, self.scene_id
                )));
            }
            if obj.category.is_empty() || obj.category != obj.category.to_lowercase() {
                return Err(SceneError::InvariantViolation(format!(
                    "object {} category {:?} must be a non-empty lowercase token string",
                    obj.id, obj.category
                )));
            }
            if obj.size.iter().any(|&s| s <= 0.0) {
                return Err(SceneError::InvariantViolation(format!(
                    "object {} has non-positive size {:?}",
                    obj.id, obj.size
                )));
            }
            if obj
                .centroid
                .iter()
                .chain(obj.size.iter())
                .any(|v| !v.is_finite())
            {
                return Err(SceneError::InvariantViolation(format!(
                    "object {} has non-finite geometry",
                    obj.id
                )));
            }
            match (self.feature_dim, &obj.feature) {
                (None, None) => {}
                (Some(dim), Some(f)) if f.len() == dim => {
                    let norm = f.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if (norm - 1.0).abs() > 1e-6 {
                        return Err(SceneError::InvariantViolation(format!(
                            "object {} feature is not unit-normalized (norm {norm})",
                            obj.id
                        )));
                    }
                }
                (declared, actual) => {
                    return Err(SceneError::FeatureDimMismatch {
                        id: obj.id,
                        declared,
                        actual: actual.as_ref().map(Vec::len),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Configuration for the seeded scene generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGenConfig {
    pub seed: u64,
    /// Room spans `[0, room_extent[axis]]` on each axis, meters.
    pub room_extent: Vec3,
    pub category_pool: Vec<String>,
    pub object_count: usize,
    /// Force this many instances of one category (the distractor class),
    /// in addition to whatever the pool draw produces.
    pub distractor_spec: Option<(String, usize)>,
    /// Minimum pairwise centroid distance, meters.
    pub min_separation: f64,
}

impl SceneGenConfig {
    fn validate(&self) -> Result<(), SceneError> {
        if self.object_count < 2 {
            return Err(SceneError::InvariantViolation(format!(
                "object_count must be at least 2, got {}",
                self.object_count
            )));
        }
        if self.room_extent.iter().any(|&e| e <= 0.0 || !e.is_finite()) {
            return Err(SceneError::InvariantViolation(format!(
                "room_extent components must be positive, got {:?}",
                self.room_extent
            )));
        }
        if self.min_separation < 0.0 || !self.min_separation.is_finite() {
            return Err(SceneError::InvariantViolation(format!(
                "min_separation must be non-negative, got {}",
                self.min_separation
            )));
        }
        let categories = self
            .category_pool
            .iter()
            .chain(self.distractor_spec.iter().map(|(c, _)| c));
        for category in categories {
            if category.is_empty() || *category != category.to_lowercase() {
                return Err(SceneError::InvariantViolation(format!(
                    "category {category:?} must be a non-empty lowercase token string"
                )));
            }
        }
        let forced = self.distractor_spec.as_ref().map_or(0, |(_, k)| *k);
        if forced > self.object_count {
            return Err(SceneError::InvariantViolation(format!(
                "distractor_spec asks for {forced} objects but object_count is {}",
                self.object_count
            )));
        }
        if forced < self.object_count && self.category_pool.is_empty() {
            return Err(SceneError::InvariantViolation(
                "category_pool is empty and distractor_spec does not cover all objects".into(),
            ));
        }
        Ok(())
    }
}

/// Load and validate a scene JSON file. Object order is preserved as
/// found in the file.
pub fn load_scene(path: &Path) -> Result<Scene, SceneError> {
    let display = path.display().to_string();
    let raw = std::fs::read_to_string(path).map_err(|e| SceneError::MalformedFile {
        path: display.clone(),
        message: e.to_string(),
    })?;
    let scene: Scene = serde_json::from_str(&raw).map_err(|e| SceneError::MalformedFile {
        path: display,
        message: e.to_string(),
    })?;
    scene.validate()?;
    Ok(scene)
}

/// Render the documented JSON form: objects in id order, keys in schema
/// order, trailing newline.
pub fn scene_json(scene: &Scene) -> Result<String, SceneError> {
    scene.validate()?;
    let mut ordered = scene.clone();
    ordered.objects.sort_by_key(|o| o.id);
    let mut out =
        serde_json::to_string_pretty(&ordered).expect("scene serialization is infallible");
    out.push('\n');
    Ok(out)
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<(), SceneError> {
    let json = scene_json(scene)?;
    std::fs::write(path, json).map_err(|e| SceneError::MalformedFile {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Generate a scene deterministically from `config`.
///
/// Draw order is pinned per object id i = 0..n: category (one draw for
/// pool objects, none for forced-category objects), then size (three
/// draws in [0.2, 1.0)), then position attempts (three draws each) until
/// `min_separation` holds against all previously placed objects.
pub fn generate_scene(config: &SceneGenConfig) -> Result<Scene, SceneError> {
    config.validate()?;
    let mut rng = SplitMix64::new(config.seed);
    let forced = config.distractor_spec.clone();
    let mut objects = Vec::with_capacity(config.object_count);
    let mut centroids: Vec<Vec3> = Vec::with_capacity(config.object_count);

    for i in 0..config.object_count {
        let category = match &forced {
            Some((cat, k)) if i < *k => cat.clone(),
            _ => {
                let idx = rng.next_below(config.category_pool.len() as u64) as usize;
                config.category_pool[idx].clone()
            }
        };
        let size = [
            0.2 + rng.next_f64() * 0.8,
            0.2 + rng.next_f64() * 0.8,
            0.2 + rng.next_f64() * 0.8,
        ];
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let candidate = [
                rng.next_f64() * config.room_extent[0],
                rng.next_f64() * config.room_extent[1],
                rng.next_f64() * config.room_extent[2],
            ];
            if centroids
                .iter()
                .all(|&c| geom::dist(c, candidate) >= config.min_separation)
            {
                placed = Some(candidate);
                break;
            }
        }
        let centroid = placed.ok_or(SceneError::PlacementExhausted {
            object_index: i,
            attempts: MAX_PLACEMENT_ATTEMPTS,
            room_extent: config.room_extent,
            min_separation: config.min_separation,
        })?;
        centroids.push(centroid);
        objects.push(ObjectInstance {
            id: i as u32,
            category,
            centroid,
            size,
            feature: None,
        });
    }

    Ok(Scene {
        scene_id: format!("scene-{:016x}", config.seed),
        feature_dim: None,
        objects,
    })
}

/// Per-axis span of object centroids (max minus min).
pub fn scene_extents(scene: &Scene) -> Vec3 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for obj in &scene.objects {
        for axis in 0..3 {
            lo[axis] = lo[axis].min(obj.centroid[axis]);
            hi[axis] = hi[axis].max(obj.centroid[axis]);
        }
    }
    [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]]
}

#[cfg(test)]
pub(crate) fn test_object(id: u32, category: &str, centroid: Vec3) -> ObjectInstance {
    ObjectInstance {
        id,
        category: category.to_string(),
        centroid,
        size: [0.5, 0.5, 1.0],
        feature: None,
    }
}

/// The four-object fixture used across the module tests: two chairs, a
/// table and a door on the z=0 plane.
#[cfg(test)]
pub(crate) fn fixture_s1() -> Scene {
    Scene {
        scene_id: "s1".into(),
        feature_dim: None,
        objects: vec![
            test_object(1, "chair", [1.0, 1.0, 0.0]),
            test_object(2, "chair", [3.0, 1.0, 0.0]),
            test_object(3, "table", [1.0, 2.0, 0.0]),
            test_object(4, "door", [5.0, 3.0, 0.0]),
        ],
    }
}
