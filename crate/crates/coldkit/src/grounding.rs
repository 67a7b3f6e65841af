//! Rule-based 3D visual grounding: parse an instruction against a small
//! grammar, resolve it geometrically in a scene, and classify failures
//! into the four error modes (hallucination, ambiguous anchor, wrong
//! anchor, wrong description).
//!
//! The resolver reuses the predicates in [`crate::relations`], so the
//! instruction generator and this oracle share one set of semantics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instruction::Instruction;
use crate::relations::{self, RelationKind, RelationThresholds};
use crate::scene::{ObjectInstance, Scene};

#[derive(Debug, Error)]
pub enum GroundingError {
    #[error("parse error at byte {offset}: {message}")]
    ParseError { offset: usize, message: String },
    #[error("unknown category {word:?} at byte {offset}")]
    UnknownCategory { word: String, offset: usize },
    #[error("unknown target id {0}")]
    UnknownTarget(u32),
    #[error("missing scene {0:?}")]
    MissingScene(String),
}

/// Grammar:
/// `"the" CAT [RELPHRASE "the" CAT ["and the" CAT]]`, where the trailing
/// conjunct is present exactly for "between". Categories are matched
/// longest-first against the lexicon, so multi-word categories like
/// "trash can" tokenize correctly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedInstruction {
    pub target_category: String,
    pub relation_kind: Option<RelationKind>,
    pub anchor_categories: Vec<String>,
}

impl ParsedInstruction {
    pub fn bare(target_category: impl Into<String>) -> Self {
        Self {
            target_category: target_category.into(),
            relation_kind: None,
            anchor_categories: Vec::new(),
        }
    }

    pub fn with_relation(
        target_category: impl Into<String>,
        kind: RelationKind,
        anchor_categories: Vec<String>,
    ) -> Self {
        Self {
            target_category: target_category.into(),
            relation_kind: Some(kind),
            anchor_categories,
        }
    }
}

/// Relation phrases accepted by the parser, longest-first. "close to"
/// and "next to" normalize to near; "on" to supported_by.
const REL_PHRASES: &[(&[&str], RelationKind)] = &[
    (&["closest", "to"], RelationKind::Closest),
    (&["farthest", "from"], RelationKind::Farthest),
    (&["close", "to"], RelationKind::Near),
    (&["far", "from"], RelationKind::Far),
    (&["next", "to"], RelationKind::Near),
    (&["near"], RelationKind::Near),
    (&["above"], RelationKind::Above),
    (&["below"], RelationKind::Below),
    (&["on"], RelationKind::SupportedBy),
    (&["between"], RelationKind::Between),
];

struct Word {
    text: String,
    offset: usize,
}

/// Split on whitespace and the punctuation set `. , ; ! ?`, lowercasing
/// each word and recording its byte offset in the original input.
fn words_with_offsets(input: &str) -> Vec<Word> {
    let mut words = Vec::new();
    let mut start = None;
    for (idx, ch) in input.char_indices() {
        let is_sep = ch.is_whitespace() || matches!(ch, '.' | ',' | ';' | '!' | '?');
        match (is_sep, start) {
            (false, None) => start = Some(idx),
            (true, Some(s)) => {
                words.push(Word {
                    text: input[s..idx].to_lowercase(),
                    offset: s,
                });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        words.push(Word {
            text: input[s..].to_lowercase(),
            offset: s,
        });
    }
    words
}

fn rel_phrase_at(words: &[Word], pos: usize) -> Option<(RelationKind, usize)> {
    for (phrase, kind) in REL_PHRASES {
        if pos + phrase.len() <= words.len()
            && phrase.iter().zip(&words[pos..]).all(|(p, w)| *p == w.text)
        {
            return Some((*kind, phrase.len()));
        }
    }
    None
}

struct Parser<'a> {
    words: Vec<Word>,
    pos: usize,
    lexicon: BTreeSet<&'a str>,
    max_lexicon_words: usize,
    input_len: usize,
}

impl<'a> Parser<'a> {
    fn new(input: &str, lexicon: &'a [String]) -> Self {
        let max_lexicon_words = lexicon
            .iter()
            .map(|c| c.split_whitespace().count())
            .max()
            .unwrap_or(1);
        Self {
            words: words_with_offsets(input),
            pos: 0,
            lexicon: lexicon.iter().map(String::as_str).collect(),
            max_lexicon_words,
            input_len: input.len(),
        }
    }

    fn offset(&self) -> usize {
        self.words
            .get(self.pos)
            .map_or(self.input_len, |w| w.offset)
    }

    fn expect_word(&mut self, want: &str) -> Result<(), GroundingError> {
        match self.words.get(self.pos) {
            Some(w) if w.text == want => {
                self.pos += 1;
                Ok(())
            }
            Some(w) => Err(GroundingError::ParseError {
                offset: w.offset,
                message: format!("expected {want:?}, found {:?}", w.text),
            }),
            None => Err(GroundingError::ParseError {
                offset: self.input_len,
                message: format!("expected {want:?}, found end of input"),
            }),
        }
    }

    /// Longest-match category against the lexicon. On failure the
    /// unknown span runs up to the next relation phrase, "and", or the
    /// end of input, so hallucinated multi-word categories surface
    /// whole.
    fn category(&mut self) -> Result<String, GroundingError> {
        let remaining = self.words.len() - self.pos;
        if remaining == 0 {
            return Err(GroundingError::ParseError {
                offset: self.input_len,
                message: "expected a category, found end of input".into(),
            });
        }
        let longest = self.max_lexicon_words.min(remaining);
        for len in (1..=longest).rev() {
            let joined = self.words[self.pos..self.pos + len]
                .iter()
                .map(|w| w.text.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            if self.lexicon.contains(joined.as_str()) {
                self.pos += len;
                return Ok(joined);
            }
        }
        let mut end = self.pos;
        while end < self.words.len()
            && self.words[end].text != "and"
            && rel_phrase_at(&self.words, end).is_none()
        {
            end += 1;
        }
        let span = self.words[self.pos..end.max(self.pos + 1)]
            .iter()
            .map(|w| w.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        Err(GroundingError::UnknownCategory {
            word: span,
            offset: self.words[self.pos].offset,
        })
    }

    fn relation(&mut self) -> Result<(RelationKind, usize), GroundingError> {
        match rel_phrase_at(&self.words, self.pos) {
            Some((kind, len)) => {
                self.pos += len;
                Ok((kind, len))
            }
            None => Err(GroundingError::ParseError {
                offset: self.offset(),
                message: format!(
                    "expected a relation phrase, found {:?}",
                    self.words
                        .get(self.pos)
                        .map_or("end of input", |w| w.text.as_str())
                ),
            }),
        }
    }

    fn at_end(&self) -> bool {
        self.pos == self.words.len()
    }
}

/// Parse an instruction text against a lexicon of known categories.
pub fn parse_instruction(
    text: &str,
    lexicon: &[String],
) -> Result<ParsedInstruction, GroundingError> {
    let mut p = Parser::new(text, lexicon);
    p.expect_word("the")?;
    let target_category = p.category()?;
    if p.at_end() {
        return Ok(ParsedInstruction::bare(target_category));
    }
    let (kind, _) = p.relation()?;
    p.expect_word("the")?;
    let first_anchor = p.category()?;
    let mut anchors = vec![first_anchor];
    if kind == RelationKind::Between {
        p.expect_word("and")?;
        p.expect_word("the")?;
        anchors.push(p.category()?);
    }
    if !p.at_end() {
        return Err(GroundingError::ParseError {
            offset: p.offset(),
            message: "unexpected trailing words".into(),
        });
    }
    Ok(ParsedInstruction::with_relation(
        target_category,
        kind,
        anchors,
    ))
}

/// Optionally pin one anchor position to a single object id; used by the
/// error classifier to probe per-instance outcomes.
fn ground_filtered(
    parsed: &ParsedInstruction,
    scene: &Scene,
    th: &RelationThresholds,
    fixed: [Option<u32>; 2],
) -> BTreeSet<u32> {
    let candidates: Vec<&ObjectInstance> = scene
        .objects
        .iter()
        .filter(|o| o.category == parsed.target_category)
        .collect();
    let Some(kind) = parsed.relation_kind else {
        return candidates.iter().map(|o| o.id).collect();
    };
    let anchors_at = |slot: usize| -> Vec<&ObjectInstance> {
        let Some(category) = parsed.anchor_categories.get(slot) else {
            return Vec::new();
        };
        scene
            .objects
            .iter()
            .filter(|o| &o.category == category)
            .filter(|o| fixed[slot].is_none_or(|id| o.id == id))
            .collect()
    };
    let primary = anchors_at(0);
    let satisfied = |s: &ObjectInstance| -> bool {
        match kind {
            RelationKind::Closest => primary
                .iter()
                .any(|a| relations::closest_among(s, a, candidates.iter().copied())),
            RelationKind::Farthest => primary
                .iter()
                .any(|a| relations::farthest_among(s, a, candidates.iter().copied())),
            RelationKind::Near => primary.iter().any(|a| relations::near(s, a, th)),
            RelationKind::Far => primary.iter().any(|a| relations::far(s, a, th)),
            RelationKind::Above => primary.iter().any(|a| relations::above(s, a)),
            RelationKind::Below => primary.iter().any(|a| relations::below(s, a)),
            RelationKind::SupportedBy => primary.iter().any(|a| relations::supported_by(s, a, th)),
            RelationKind::Between => {
                let secondary = anchors_at(1);
                primary
                    .iter()
                    .any(|a1| secondary.iter().any(|a2| relations::between(s, a1, a2, th)))
            }
        }
    };
    candidates
        .iter()
        .filter(|s| satisfied(s))
        .map(|o| o.id)
        .collect()
}

/// Resolve a parsed instruction: candidates are all objects of the
/// target category; anchors resolve existentially over every instance
/// of their category; closest/farthest compare within the candidate
/// set. Returns every candidate satisfying the relation.
pub fn ground(parsed: &ParsedInstruction, scene: &Scene, th: &RelationThresholds) -> BTreeSet<u32> {
    ground_filtered(parsed, scene, th, [None, None])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    UniqueTarget,
    UniqueWrong,
    Ambiguous,
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMode {
    Hallucination,
    AmbiguousAnchor,
    WrongAnchor,
    WrongDescription,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingResult {
    pub matched_ids: BTreeSet<u32>,
    pub verdict: Verdict,
    pub error_mode: Option<ErrorMode>,
}

/// Classify a grounding outcome against the expected target.
///
/// Error modes form a priority cascade: hallucination (a referenced
/// category has no instance), then ambiguous anchor (an anchor category
/// with several instances whose choice changes the outcome), then wrong
/// description (the relation excludes the expected target), then wrong
/// anchor (the relation holds for the target but fails to discriminate).
pub fn classify_error(
    parsed: &ParsedInstruction,
    result_ids: &BTreeSet<u32>,
    scene: &Scene,
    expected_target: u32,
    th: &RelationThresholds,
) -> Result<GroundingResult, GroundingError> {
    if scene.object(expected_target).is_none() {
        return Err(GroundingError::UnknownTarget(expected_target));
    }
    let verdict = if result_ids.len() == 1 && result_ids.contains(&expected_target) {
        Verdict::UniqueTarget
    } else if result_ids.len() == 1 {
        Verdict::UniqueWrong
    } else if result_ids.is_empty() {
        Verdict::Empty
    } else {
        Verdict::Ambiguous
    };
    if verdict == Verdict::UniqueTarget {
        return Ok(GroundingResult {
            matched_ids: result_ids.clone(),
            verdict,
            error_mode: None,
        });
    }

    let target_absent = scene.category_count(&parsed.target_category) == 0;
    let anchor_counts: Vec<usize> = parsed
        .anchor_categories
        .iter()
        .map(|c| scene.category_count(c))
        .collect();

    let error_mode = if target_absent || anchor_counts.contains(&0) {
        ErrorMode::Hallucination
    } else if anchor_ambiguity_changes_outcome(parsed, scene, th, &anchor_counts) {
        ErrorMode::AmbiguousAnchor
    } else if !result_ids.contains(&expected_target) {
        ErrorMode::WrongDescription
    } else {
        ErrorMode::WrongAnchor
    };
    Ok(GroundingResult {
        matched_ids: result_ids.clone(),
        verdict,
        error_mode: Some(error_mode),
    })
}

/// True when some anchor position has at least two instances and the
/// grounded set depends on which instance is used.
fn anchor_ambiguity_changes_outcome(
    parsed: &ParsedInstruction,
    scene: &Scene,
    th: &RelationThresholds,
    anchor_counts: &[usize],
) -> bool {
    if parsed.relation_kind.is_none() {
        return false;
    }
    for (slot, &count) in anchor_counts.iter().enumerate() {
        if count < 2 {
            continue;
        }
        let category = &parsed.anchor_categories[slot];
        let mut per_instance: Option<BTreeSet<u32>> = None;
        for obj in scene.objects.iter().filter(|o| &o.category == category) {
            let mut fixed = [None, None];
            fixed[slot] = Some(obj.id);
            let outcome = ground_filtered(parsed, scene, th, fixed);
            match &per_instance {
                None => per_instance = Some(outcome),
                Some(prev) if *prev != outcome => return true,
                _ => {}
            }
        }
    }
    false
}

/// Accuracy stratified by oracle distractor count. `4+` collects
/// |D| >= 4; counts of 0 or 3 contribute to the overall figure only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistractorStrata {
    #[serde(rename = "1")]
    pub one: Option<f64>,
    #[serde(rename = "2")]
    pub two: Option<f64>,
    #[serde(rename = "4+")]
    pub four_plus: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorHistogram {
    pub hallucination: u64,
    pub ambiguous_anchor: u64,
    pub wrong_anchor: u64,
    pub wrong_description: u64,
}

impl ErrorHistogram {
    fn record(&mut self, mode: ErrorMode) {
        match mode {
            ErrorMode::Hallucination => self.hallucination += 1,
            ErrorMode::AmbiguousAnchor => self.ambiguous_anchor += 1,
            ErrorMode::WrongAnchor => self.wrong_anchor += 1,
            ErrorMode::WrongDescription => self.wrong_description += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingReport {
    pub overall_acc: f64,
    pub by_distractors: DistractorStrata,
    pub errors: ErrorHistogram,
}

#[derive(Default)]
struct Tally {
    total: u64,
    correct: u64,
}

impl Tally {
    fn record(&mut self, ok: bool) {
        self.total += 1;
        self.correct += u64::from(ok);
    }

    fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

/// Ground every instruction in its scene and aggregate accuracy and the
/// error-mode histogram. Instructions whose text fails to parse against
/// the scene's own category lexicon count as hallucinations: they refer
/// outside the scene's vocabulary.
pub fn evaluate_corpus(
    instructions: &[Instruction],
    scenes: &BTreeMap<String, Scene>,
    th: &RelationThresholds,
) -> Result<GroundingReport, GroundingError> {
    let mut overall = Tally::default();
    let mut strata = [Tally::default(), Tally::default(), Tally::default()];
    let mut errors = ErrorHistogram::default();

    for instruction in instructions {
        let scene = scenes
            .get(&instruction.scene_id)
            .ok_or_else(|| GroundingError::MissingScene(instruction.scene_id.clone()))?;
        let target = scene
            .object(instruction.target_id)
            .ok_or(GroundingError::UnknownTarget(instruction.target_id))?;
        let lexicon = scene.categories();
        let result = match parse_instruction(&instruction.text, &lexicon) {
            Ok(parsed) => {
                let matched = ground(&parsed, scene, th);
                classify_error(&parsed, &matched, scene, instruction.target_id, th)?
            }
            Err(GroundingError::ParseError { .. } | GroundingError::UnknownCategory { .. }) => {
                GroundingResult {
                    matched_ids: BTreeSet::new(),
                    verdict: Verdict::Empty,
                    error_mode: Some(ErrorMode::Hallucination),
                }
            }
            Err(other) => return Err(other),
        };
        let ok = result.verdict == Verdict::UniqueTarget;
        overall.record(ok);
        let distractor_count = scene.category_count(&target.category) - 1;
        match distractor_count {
            1 => strata[0].record(ok),
            2 => strata[1].record(ok),
            n if n >= 4 => strata[2].record(ok),
            _ => {}
        }
        if let Some(mode) = result.error_mode {
            errors.record(mode);
        }
    }

    Ok(GroundingReport {
        overall_acc: overall.accuracy().unwrap_or(0.0),
        by_distractors: DistractorStrata {
            one: strata[0].accuracy(),
            two: strata[1].accuracy(),
            four_plus: strata[2].accuracy(),
        },
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{fixture_s1, test_object, Scene};

    fn lexicon(cats: &[&str]) -> Vec<String> {
        cats.iter().map(|c| c.to_string()).collect()
    }

    #[test]
    fn parses_simple_relation() {
        let lex = lexicon(&["chair", "table"]);
        let parsed = parse_instruction("the chair closest to the table", &lex).unwrap();
        assert_eq!(
            parsed,
            ParsedInstruction::with_relation("chair", RelationKind::Closest, vec!["table".into()])
        );
    }

    #[test]
    fn parses_multiword_category() {
        let lex = lexicon(&["sink", "trash can"]);
        let parsed = parse_instruction("the sink far from the trash can", &lex).unwrap();
        assert_eq!(
            parsed,
            ParsedInstruction::with_relation("sink", RelationKind::Far, vec!["trash can".into()])
        );
    }

    #[test]
    fn parses_bare_category() {
        let parsed = parse_instruction("the chair", &lexicon(&["chair"])).unwrap();
        assert_eq!(parsed, ParsedInstruction::bare("chair"));
    }

    #[test]
    fn parses_between() {
        let lex = lexicon(&["book", "lamp", "plant"]);
        let parsed = parse_instruction("the book between the lamp and the plant", &lex).unwrap();
        assert_eq!(
            parsed,
            ParsedInstruction::with_relation(
                "book",
                RelationKind::Between,
                vec!["lamp".into(), "plant".into()]
            )
        );
    }

    #[test]
    fn normalizes_synonym_phrases() {
        let lex = lexicon(&["chair", "table"]);
        for text in [
            "the chair close to the table",
            "the chair next to the table",
        ] {
            let parsed = parse_instruction(text, &lex).unwrap();
            assert_eq!(parsed.relation_kind, Some(RelationKind::Near));
        }
        let parsed = parse_instruction("the chair on the table", &lex).unwrap();
        assert_eq!(parsed.relation_kind, Some(RelationKind::SupportedBy));
    }

    #[test]
    fn unknown_category_is_surfaced() {
        let lex = lexicon(&["chair", "table"]);
        match parse_instruction("the backpack next to the sink", &lex) {
            Err(GroundingError::UnknownCategory { word, offset }) => {
                assert_eq!(word, "backpack");
                assert_eq!(offset, 4);
            }
            other => panic!("expected UnknownCategory, got {other:?}"),
        }
        match parse_instruction("the chair next to the trash can", &lex) {
            Err(GroundingError::UnknownCategory { word, .. }) => assert_eq!(word, "trash can"),
            other => panic!("expected UnknownCategory, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_offsets() {
        let lex = lexicon(&["chair", "table"]);
        match parse_instruction("a chair near the table", &lex) {
            Err(GroundingError::ParseError { offset: 0, .. }) => {}
            other => panic!("expected ParseError at 0, got {other:?}"),
        }
        match parse_instruction("the chair somewhere the table", &lex) {
            Err(GroundingError::ParseError { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("expected ParseError, got {other:?}"),
        }
        match parse_instruction("the chair near the table and the door", &lex) {
            Err(GroundingError::ParseError { .. }) => {}
            other => panic!("expected trailing-word ParseError, got {other:?}"),
        }
    }

    #[test]
    fn punctuation_and_case_are_tolerated() {
        let lex = lexicon(&["sink", "trash can"]);
        let parsed = parse_instruction("The sink far from the trash can.", &lex).unwrap();
        assert_eq!(parsed.target_category, "sink");
        assert_eq!(parsed.anchor_categories, vec!["trash can".to_string()]);
    }

    #[test]
    fn grounds_s1_examples() {
        let scene = fixture_s1();
        let th = RelationThresholds::default();
        let closest =
            ParsedInstruction::with_relation("chair", RelationKind::Closest, vec!["table".into()]);
        assert_eq!(ground(&closest, &scene, &th), BTreeSet::from([1]));

        let bare = ParsedInstruction::bare("chair");
        assert_eq!(ground(&bare, &scene, &th), BTreeSet::from([1, 2]));

        let no_anchor =
            ParsedInstruction::with_relation("chair", RelationKind::Near, vec!["sofa".into()]);
        assert_eq!(ground(&no_anchor, &scene, &th), BTreeSet::new());
    }

    #[test]
    fn hallucination_fixture() {
        // two backpacks and no sink: "the backpack next to the sink"
        let scene = Scene {
            scene_id: "halluc".into(),
            feature_dim: None,
            objects: vec![
                test_object(0, "backpack", [0.0, 0.0, 0.0]),
                test_object(1, "backpack", [2.0, 0.0, 0.0]),
                test_object(2, "desk", [1.0, 1.0, 0.0]),
            ],
        };
        let th = RelationThresholds::default();
        let parsed =
            ParsedInstruction::with_relation("backpack", RelationKind::Near, vec!["sink".into()]);
        let matched = ground(&parsed, &scene, &th);
        let result = classify_error(&parsed, &matched, &scene, 0, &th).unwrap();
        assert_eq!(result.verdict, Verdict::Empty);
        assert_eq!(result.error_mode, Some(ErrorMode::Hallucination));
    }

    #[test]
    fn ambiguous_anchor_fixture() {
        // two tables with differing outcomes: "the armchair close to the table"
        let scene = Scene {
            scene_id: "amb-anchor".into(),
            feature_dim: None,
            objects: vec![
                test_object(0, "armchair", [0.0, 0.0, 0.0]),
                test_object(1, "armchair", [5.0, 0.0, 0.0]),
                test_object(2, "table", [0.5, 0.0, 0.0]),
                test_object(3, "table", [5.5, 0.0, 0.0]),
            ],
        };
        let th = RelationThresholds::default();
        let parsed =
            ParsedInstruction::with_relation("armchair", RelationKind::Near, vec!["table".into()]);
        let matched = ground(&parsed, &scene, &th);
        assert_eq!(matched, BTreeSet::from([0, 1]));
        let result = classify_error(&parsed, &matched, &scene, 0, &th).unwrap();
        assert_eq!(result.verdict, Verdict::Ambiguous);
        assert_eq!(result.error_mode, Some(ErrorMode::AmbiguousAnchor));
    }

    #[test]
    fn wrong_description_fixture() {
        // expected chair#2, but "closest to the table" grounds to chair#1
        let scene = fixture_s1();
        let th = RelationThresholds::default();
        let parsed =
            ParsedInstruction::with_relation("chair", RelationKind::Closest, vec!["table".into()]);
        let matched = ground(&parsed, &scene, &th);
        let result = classify_error(&parsed, &matched, &scene, 2, &th).unwrap();
        assert_eq!(result.verdict, Verdict::UniqueWrong);
        assert_eq!(result.error_mode, Some(ErrorMode::WrongDescription));
    }

    #[test]
    fn wrong_anchor_fixture() {
        // monitor near both chairs: relation holds for the target and a
        // distractor alike
        let scene = Scene {
            scene_id: "wrong-anchor".into(),
            feature_dim: None,
            objects: vec![
                test_object(0, "chair", [0.0, 0.0, 0.0]),
                test_object(1, "chair", [1.0, 0.0, 0.0]),
                test_object(2, "monitor", [0.5, 0.3, 0.0]),
            ],
        };
        let th = RelationThresholds::default();
        let parsed =
            ParsedInstruction::with_relation("chair", RelationKind::Near, vec!["monitor".into()]);
        let matched = ground(&parsed, &scene, &th);
        assert_eq!(matched, BTreeSet::from([0, 1]));
        let result = classify_error(&parsed, &matched, &scene, 0, &th).unwrap();
        assert_eq!(result.verdict, Verdict::Ambiguous);
        assert_eq!(result.error_mode, Some(ErrorMode::WrongAnchor));
    }

    #[test]
    fn bare_ambiguous_counts_as_wrong_anchor() {
        let scene = fixture_s1();
        let th = RelationThresholds::default();
        let parsed = ParsedInstruction::bare("chair");
        let matched = ground(&parsed, &scene, &th);
        let result = classify_error(&parsed, &matched, &scene, 1, &th).unwrap();
        assert_eq!(result.verdict, Verdict::Ambiguous);
        assert_eq!(result.error_mode, Some(ErrorMode::WrongAnchor));
    }

    #[test]
    fn unique_target_has_no_error_mode() {
        let scene = fixture_s1();
        let th = RelationThresholds::default();
        let parsed =
            ParsedInstruction::with_relation("chair", RelationKind::Closest, vec!["table".into()]);
        let matched = ground(&parsed, &scene, &th);
        let result = classify_error(&parsed, &matched, &scene, 1, &th).unwrap();
        assert_eq!(result.verdict, Verdict::UniqueTarget);
        assert_eq!(result.error_mode, None);
    }

    #[test]
    fn classify_rejects_unknown_target() {
        let scene = fixture_s1();
        let th = RelationThresholds::default();
        let parsed = ParsedInstruction::bare("chair");
        assert!(matches!(
            classify_error(&parsed, &BTreeSet::new(), &scene, 99, &th),
            Err(GroundingError::UnknownTarget(99))
        ));
    }

    #[test]
    fn bare_texts_in_two_chair_scenes_score_zero() {
        let mut scenes = std::collections::BTreeMap::new();
        let mut instructions = Vec::new();
        for i in 0..4u32 {
            let scene = Scene {
                scene_id: format!("pair-{i}"),
                feature_dim: None,
                objects: vec![
                    test_object(0, "chair", [0.0, 0.0, 0.0]),
                    test_object(1, "chair", [2.0 + i as f64, 0.0, 0.0]),
                ],
            };
            instructions.push(crate::instruction::Instruction {
                scene_id: scene.scene_id.clone(),
                target_id: 0,
                text: "the chair".into(),
                relation: None,
                status: crate::instruction::InstructionStatus::Ambiguous,
            });
            scenes.insert(scene.scene_id.clone(), scene);
        }
        let report =
            evaluate_corpus(&instructions, &scenes, &RelationThresholds::default()).unwrap();
        assert_eq!(report.overall_acc, 0.0);
        assert_eq!(report.by_distractors.one, Some(0.0));
        assert_eq!(report.errors.wrong_anchor, 4);
    }

    #[test]
    fn missing_scene_is_reported() {
        let scenes = std::collections::BTreeMap::new();
        let instructions = vec![crate::instruction::Instruction {
            scene_id: "ghost".into(),
            target_id: 0,
            text: "the chair".into(),
            relation: None,
            status: crate::instruction::InstructionStatus::Failed,
        }];
        match evaluate_corpus(&instructions, &scenes, &RelationThresholds::default()) {
            Err(GroundingError::MissingScene(id)) => assert_eq!(id, "ghost"),
            other => panic!("expected MissingScene, got {other:?}"),
        }
    }

    #[test]
    fn ground_is_object_order_invariant() {
        let scene = fixture_s1();
        let mut reversed = scene.clone();
        reversed.objects.reverse();
        let th = RelationThresholds::default();
        for parsed in [
            ParsedInstruction::bare("chair"),
            ParsedInstruction::with_relation("chair", RelationKind::Closest, vec!["table".into()]),
            ParsedInstruction::with_relation("chair", RelationKind::Far, vec!["door".into()]),
        ] {
            assert_eq!(
                ground(&parsed, &scene, &th),
                ground(&parsed, &reversed, &th)
            );
        }
    }
}
