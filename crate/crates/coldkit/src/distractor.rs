//! Distractor identification: an object is a distractor for a target
//! when the classifier's argmax category equals the target's ground-truth
//! category.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{ObjectInstance, Scene};

#[derive(Debug, Error)]
pub enum DistractorError {
    #[error("unknown target id {0}")]
    UnknownTarget(u32),
    #[error("object {0} carries no feature vector")]
    MissingFeature(u32),
    #[error("invalid prototype for category {category:?}: {message}")]
    InvalidPrototype { category: String, message: String },
    #[error("object {id} feature has length {actual}, classifier expects {expected}")]
    FeatureDimMismatch {
        id: u32,
        expected: usize,
        actual: usize,
    },
    #[error("classifier produced no scores for object {0}")]
    NoScores(u32),
    #[error("malformed prototype file {path}: {message}")]
    MalformedFile { path: String, message: String },
}

/// Category-scoring interface. Implementations must be deterministic:
/// the same object always receives the same scores.
pub trait Classifier {
    /// Score every category in the classifier's label set for one object.
    fn score(&self, object: &ObjectInstance) -> Result<BTreeMap<String, f64>, DistractorError>;

    /// Argmax category; ties broken by lexicographically smallest
    /// category string.
    fn predict(&self, object: &ObjectInstance) -> Result<String, DistractorError> {
        let scores = self.score(object)?;
        let mut best: Option<(&String, f64)> = None;
        for (category, &score) in &scores {
            // BTreeMap iterates in key order, so strict improvement keeps
            // the smallest category on ties.
            match best {
                Some((_, s)) if score <= s => {}
                _ => best = Some((category, score)),
            }
        }
        best.map(|(c, _)| c.clone())
            .ok_or(DistractorError::NoScores(object.id))
    }
}

/// Ground-truth stand-in for a pretrained classifier: the argmax is
/// always the object's own category label.
#[derive(Debug, Clone, Default)]
pub struct OracleClassifier;

pub fn oracle_classifier() -> OracleClassifier {
    OracleClassifier
}

impl Classifier for OracleClassifier {
    fn score(&self, object: &ObjectInstance) -> Result<BTreeMap<String, f64>, DistractorError> {
        let mut scores = BTreeMap::new();
        scores.insert(object.category.clone(), 1.0);
        Ok(scores)
    }
}

/// Dot-product classifier against fixed unit-norm category prototypes.
/// Exercises distractor identification under misclassification.
#[derive(Debug, Clone)]
pub struct CentroidFeatureClassifier {
    dim: usize,
    prototypes: BTreeMap<String, Vec<f64>>,
}

impl CentroidFeatureClassifier {
    pub fn new(prototypes: BTreeMap<String, Vec<f64>>) -> Result<Self, DistractorError> {
        let dim = match prototypes.values().next() {
            Some(v) => v.len(),
            None => {
                return Err(DistractorError::InvalidPrototype {
                    category: String::new(),
                    message: "prototype map is empty".into(),
                })
            }
        };
        for (category, vector) in &prototypes {
            if vector.len() != dim {
                return Err(DistractorError::InvalidPrototype {
                    category: category.clone(),
                    message: format!("length {} differs from {}", vector.len(), dim),
                });
            }
            let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(DistractorError::InvalidPrototype {
                    category: category.clone(),
                    message: format!("not unit-normalized (norm {norm})"),
                });
            }
        }
        Ok(Self { dim, prototypes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

pub fn centroid_feature_classifier(
    prototypes: BTreeMap<String, Vec<f64>>,
) -> Result<CentroidFeatureClassifier, DistractorError> {
    CentroidFeatureClassifier::new(prototypes)
}

impl Classifier for CentroidFeatureClassifier {
    fn score(&self, object: &ObjectInstance) -> Result<BTreeMap<String, f64>, DistractorError> {
        let feature = object
            .feature
            .as_ref()
            .ok_or(DistractorError::MissingFeature(object.id))?;
        if feature.len() != self.dim {
            return Err(DistractorError::FeatureDimMismatch {
                id: object.id,
                expected: self.dim,
                actual: feature.len(),
            });
        }
        Ok(self
            .prototypes
            .iter()
            .map(|(category, proto)| {
                let dot = feature.iter().zip(proto).map(|(a, b)| a * b).sum::<f64>();
                (category.clone(), dot)
            })
            .collect())
    }
}

/// On-disk prototype map: `{"dim": int, "prototypes": {category: [floats]}}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct PrototypeFile {
    pub dim: usize,
    pub prototypes: BTreeMap<String, Vec<f64>>,
}

pub fn load_prototypes(path: &Path) -> Result<CentroidFeatureClassifier, DistractorError> {
    let display = path.display().to_string();
    let raw = std::fs::read_to_string(path).map_err(|e| DistractorError::MalformedFile {
        path: display.clone(),
        message: e.to_string(),
    })?;
    let file: PrototypeFile =
        serde_json::from_str(&raw).map_err(|e| DistractorError::MalformedFile {
            path: display.clone(),
            message: e.to_string(),
        })?;
    let classifier = CentroidFeatureClassifier::new(file.prototypes)?;
    if classifier.dim() != file.dim {
        return Err(DistractorError::MalformedFile {
            path: display,
            message: format!(
                "declared dim {} does not match prototype length {}",
                file.dim,
                classifier.dim()
            ),
        });
    }
    Ok(classifier)
}

/// The distractor set for one target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistractorSet {
    pub target_id: u32,
    pub members: BTreeSet<u32>,
}

impl DistractorSet {
    pub fn empty(target_id: u32) -> Self {
        Self {
            target_id,
            members: BTreeSet::new(),
        }
    }
}

/// Flag every non-target object whose predicted category equals the
/// target's ground-truth category.
pub fn identify_distractors(
    scene: &Scene,
    target_id: u32,
    classifier: &dyn Classifier,
) -> Result<DistractorSet, DistractorError> {
    let target = scene
        .object(target_id)
        .ok_or(DistractorError::UnknownTarget(target_id))?;
    let mut members = BTreeSet::new();
    for obj in &scene.objects {
        if obj.id != target_id && classifier.predict(obj)? == target.category {
            members.insert(obj.id);
        }
    }
    Ok(DistractorSet { target_id, members })
}
