//! Per-scene orchestration: distractor identification, anchor selection,
//! instruction generation, and token-sequence emission.
//!
//! Seed discipline: each (scene, target) unit consumes exactly three
//! draws from a stream seeded with the scene seed (shuffle seed,
//! injection seed, injection-rate draw), with targets visited in
//! ascending id order. Outputs therefore depend only on the scene and
//! the options, never on worker scheduling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distractor::{identify_distractors, Classifier, DistractorError};
use crate::instruction::{generate_instruction, Instruction, InstructionError, InstructionStatus};
use crate::relations::RelationThresholds;
use crate::rng::SplitMix64;
use crate::scene::Scene;
use crate::spatial::{
    build_token_sequence, inject_ambiguous_anchor, relative_position_map, select_anchor_candidates,
    serialize_token_sequence, SpatialError, TokenSequenceRecord,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Distractor(#[from] DistractorError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    #[error(transparent)]
    Instruction(#[from] InstructionError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateOptions {
    /// Scene-level seed for shuffle/injection draws.
    pub seed: u64,
    pub max_anchors: usize,
    /// Probability that a unit receives one injected ambiguous anchor in
    /// its token sequence.
    pub ambiguous_rate: f64,
    /// Emit instructions for every object, not only those with
    /// distractors.
    pub all_targets: bool,
    pub thresholds: RelationThresholds,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            max_anchors: 4,
            ambiguous_rate: 0.3,
            all_targets: false,
            thresholds: RelationThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneOutputs {
    pub instructions: Vec<Instruction>,
    pub token_records: Vec<TokenSequenceRecord>,
}

/// Run the generation pipeline over one scene.
///
/// Targets default to every object with at least one distractor. A
/// target whose distractors cannot be disambiguated because the scene
/// offers no valid anchor at all yields a bare-category instruction
/// marked `failed` rather than aborting the scene.
pub fn generate_for_scene(
    scene: &Scene,
    classifier: &dyn Classifier,
    options: &GenerateOptions,
) -> Result<SceneOutputs, PipelineError> {
    let mut rng = SplitMix64::new(options.seed);
    let mut instructions = Vec::new();
    let mut token_records = Vec::new();

    let mut target_ids: Vec<u32> = scene.objects.iter().map(|o| o.id).collect();
    target_ids.sort_unstable();

    for target_id in target_ids {
        let distractors = identify_distractors(scene, target_id, classifier)?;
        let shuffle_seed = rng.next_u64();
        let inject_seed = rng.next_u64();
        let inject_draw = rng.next_f64();
        if distractors.members.is_empty() && !options.all_targets {
            continue;
        }

        let anchors =
            match select_anchor_candidates(scene, target_id, &distractors, options.max_anchors) {
                Ok(anchors) => anchors,
                Err(SpatialError::NoValidAnchor) => Vec::new(),
                Err(other) => return Err(other.into()),
            };

        let instruction = if distractors.members.is_empty() || !anchors.is_empty() {
            generate_instruction(
                scene,
                target_id,
                &distractors,
                &anchors,
                shuffle_seed,
                &options.thresholds,
            )?
        } else {
            // distractors present but nothing can anchor a relation;
            // the bare reference is still checked against the oracle so
            // the exclusive status stays truthful even when a
            // misclassifying classifier reported distractors for a
            // category-unique target
            let category = &scene.object(target_id).expect("target exists").category;
            let text = format!("the {category}");
            let status = match crate::grounding::parse_instruction(&text, &scene.categories()) {
                Ok(parsed) => {
                    let matched = crate::grounding::ground(&parsed, scene, &options.thresholds);
                    if matched.len() == 1 && matched.contains(&target_id) {
                        InstructionStatus::Exclusive
                    } else {
                        InstructionStatus::Failed
                    }
                }
                // a category the grammar cannot re-read (stray
                // punctuation) can never be verified exclusive
                Err(_) => InstructionStatus::Failed,
            };
            Instruction {
                scene_id: scene.scene_id.clone(),
                target_id,
                text,
                relation: None,
                status,
            }
        };
        instructions.push(instruction);

        let token_anchors = if inject_draw < options.ambiguous_rate {
            inject_ambiguous_anchor(&anchors, scene, target_id, inject_seed)?
        } else {
            anchors.clone()
        };
        let mut subset: Vec<u32> =
            Vec::with_capacity(1 + distractors.members.len() + token_anchors.len());
        subset.push(target_id);
        subset.extend(distractors.members.iter().copied());
        for anchor in &token_anchors {
            if !subset.contains(&anchor.object_id) {
                subset.push(anchor.object_id);
            }
        }
        let rpm = relative_position_map(scene, &subset)?;
        let sequence = build_token_sequence(scene, target_id, &token_anchors, &rpm, shuffle_seed)?;
        token_records.push(TokenSequenceRecord {
            scene_id: scene.scene_id.clone(),
            target_id,
            seed: shuffle_seed,
            serialized: serialize_token_sequence(&sequence),
        });
    }

    Ok(SceneOutputs {
        instructions,
        token_records,
    })
}

/// Derive one seed per scene from a command seed; scenes are expected in
/// a deterministic order (the callers sort by scene id or file name).
pub fn derive_scene_seeds(command_seed: u64, count: usize) -> Vec<u64> {
    let mut rng = SplitMix64::new(command_seed);
    (0..count).map(|_| rng.next_u64()).collect()
}
