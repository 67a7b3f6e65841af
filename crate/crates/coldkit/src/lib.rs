//! Toolkit for generating and evaluating target-exclusive spatial
//! referring instructions in 3D scenes.
//!
//! The pipeline: identify distractors of a target object, encode
//! relative positions between target, distractors and candidate anchors,
//! generate a referring instruction that a rule-based grounding oracle
//! resolves to exactly the target, and evaluate instruction corpora both
//! with n-gram metrics (BLEU, ROUGE-L, CIDEr) and by grounding accuracy
//! stratified over distractor counts.
//!
//! ```
//! use coldkit::{
//!     generate_instruction, generate_scene, ground, identify_distractors, oracle_classifier,
//!     parse_instruction, select_anchor_candidates, InstructionStatus, RelationThresholds,
//!     SceneGenConfig,
//! };
//!
//! let scene = generate_scene(&SceneGenConfig {
//!     seed: 11,
//!     room_extent: [8.0, 8.0, 3.0],
//!     category_pool: vec!["table".into(), "door".into(), "lamp".into(), "sofa".into()],
//!     object_count: 8,
//!     distractor_spec: Some(("chair".into(), 3)),
//!     min_separation: 0.5,
//! })?;
//!
//! let thresholds = RelationThresholds::default();
//! let target = 0;
//! let distractors = identify_distractors(&scene, target, &oracle_classifier())?;
//! let anchors = select_anchor_candidates(&scene, target, &distractors, 4)?;
//! let instruction =
//!     generate_instruction(&scene, target, &distractors, &anchors, 11, &thresholds)?;
//!
//! if instruction.status == InstructionStatus::Exclusive {
//!     let parsed = parse_instruction(&instruction.text, &scene.categories())?;
//!     assert_eq!(ground(&parsed, &scene, &thresholds), [target].into());
//! }
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod distractor;
pub mod geom;
pub mod grounding;
pub mod instruction;
pub mod losses;
pub mod metrics;
pub mod pipeline;
pub mod relations;
pub mod rng;
pub mod scene;
pub mod spatial;

pub use distractor::{
    centroid_feature_classifier, identify_distractors, load_prototypes, oracle_classifier,
    Classifier, DistractorError, DistractorSet,
};
pub use grounding::{
    classify_error, evaluate_corpus, ground, parse_instruction, ErrorMode, GroundingError,
    GroundingReport, GroundingResult, ParsedInstruction, Verdict,
};
pub use instruction::{
    generate_instruction, render_text, Instruction, InstructionError, InstructionStatus,
};
pub use losses::{
    cross_entropy, cross_entropy_grad, stage1_loss, stage1_loss_grad, EmbeddingBatch, LossError,
    ProbDistribution,
};
pub use metrics::{
    bleu, cider, cider_per_pair, metric_report, perturb_spatial_terms, perturbation_study, rouge_l,
    tokenize, MetricError, MetricReport, PerturbMode, PerturbationStudy, TokenizedCorpus,
};
pub use pipeline::{
    derive_scene_seeds, generate_for_scene, GenerateOptions, PipelineError, SceneOutputs,
};
pub use relations::{holds, RelationError, RelationKind, RelationThresholds, SpatialRelation};
pub use rng::SplitMix64;
pub use scene::{
    generate_scene, load_scene, save_scene, scene_extents, scene_json, ObjectInstance, Scene,
    SceneError, SceneGenConfig,
};
pub use spatial::{
    build_token_sequence, inject_ambiguous_anchor, parse_token_sequence, relative_position_map,
    select_anchor_candidates, serialize_token_sequence, AnchorBlock, AnchorCandidate,
    RelativePositionMap, SpatialError, TokenSequence, TokenSequenceRecord,
};
