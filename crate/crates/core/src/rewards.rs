//! Reasoning-trace parsing, format scoring and the composite reward.
//!
//! A well-formed response looks like
//!
//! ```text
//! <think>
//! Step 1: ...
//! ```json
//! {"0": {...}}
//! ```
//! </think>
//! Final Scene Graph
//! ```json
//! {"0": {...}}
//! ```
//! ```
//!
//! Fences are only recognized at the start of a line. The last fenced block
//! after `</think>` is the answer.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::metrics::{self, Matching, DEFAULT_COLLISION_EPS};
use crate::scene_graph::{parse_scene_graph, GraphError, SceneGraph};

const OPEN_TAG: &str = "<think>";
const CLOSE_TAG: &str = "</think>";
const OPEN_FENCE: &str = "```json";
const FENCE: &str = "```";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Defect {
    MissingOpenTag,
    MissingCloseTag,
    /// Both tags occur but not as a single open/close pair.
    MisnestedTags,
    NoThinkJson,
    InvalidThinkJson,
    NoAnswerJson,
    InvalidAnswerJson,
    /// Answer JSON parses but is not a valid scene graph.
    InvalidAnswerGraph,
    ExtraTextAfterAnswer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JsonBlock {
    /// Byte span of the block body inside the trace.
    pub span: Range<usize>,
    pub value: Result<Value, String>,
}

impl JsonBlock {
    pub fn is_valid(&self) -> bool {
        self.value.is_ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceDocument {
    pub think_section: Option<String>,
    pub think_json_blocks: Vec<JsonBlock>,
    pub answer_section: Option<String>,
    pub answer_block: Option<JsonBlock>,
    pub answer_graph: Option<SceneGraph>,
    pub answer_error: Option<GraphError>,
    pub defects: Vec<Defect>,
}

impl TraceDocument {
    pub fn has(&self, d: Defect) -> bool {
        self.defects.contains(&d)
    }
}

struct Fenced {
    body: Range<usize>,
    /// End of the closing fence line, or end of text when unterminated.
    end: usize,
}

/// All ```json blocks whose fences start a line.
fn fenced_blocks(text: &str) -> Vec<Fenced> {
    let mut lines = Vec::new();
    let mut start = 0;
    for line in text.split_inclusive('\n') {
        lines.push(start..start + line.len());
        start += line.len();
    }

    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let line = &text[lines[i].clone()];
        if line.starts_with(OPEN_FENCE) && line[OPEN_FENCE.len()..].trim().is_empty() {
            let body_start = lines[i].end;
            let mut j = i + 1;
            let mut closed = None;
            while j < lines.len() {
                let l = &text[lines[j].clone()];
                if l.starts_with(FENCE) && l[FENCE.len()..].trim().is_empty() {
                    closed = Some(j);
                    break;
                }
                j += 1;
            }
            match closed {
                Some(j) => {
                    out.push(Fenced {
                        body: body_start..lines[j].start,
                        end: lines[j].end,
                    });
                    i = j + 1;
                }
                None => {
                    out.push(Fenced {
                        body: body_start..text.len(),
                        end: text.len(),
                    });
                    break;
                }
            }
        } else {
            i += 1;
        }
    }
    out
}

fn json_block(text: &str, f: &Fenced) -> JsonBlock {
    JsonBlock {
        span: f.body.clone(),
        value: serde_json::from_str(&text[f.body.clone()]).map_err(|e| e.to_string()),
    }
}

/// Splits a raw model output into its reasoning and answer parts. Never
/// fails; every problem is recorded as a defect.
pub fn parse_trace(text: &str) -> TraceDocument {
    let mut defects = Vec::new();
    let open = text.find(OPEN_TAG);
    let close_after_open = open.and_then(|o| {
        let from = o + OPEN_TAG.len();
        text[from..].find(CLOSE_TAG).map(|c| from + c)
    });
    let any_close = text.find(CLOSE_TAG);

    if open.is_none() {
        defects.push(Defect::MissingOpenTag);
    }
    if any_close.is_none() {
        defects.push(Defect::MissingCloseTag);
    }
    if open.is_some() && any_close.is_some() {
        let single_pair =
            text.matches(OPEN_TAG).count() == 1 && text.matches(CLOSE_TAG).count() == 1 && close_after_open.is_some();
        if !single_pair {
            defects.push(Defect::MisnestedTags);
        }
    }

    // (think body, answer segment)
    let (think, answer): (Option<Range<usize>>, Range<usize>) = match (open, close_after_open) {
        (Some(o), Some(c)) => (Some(o + OPEN_TAG.len()..c), c + CLOSE_TAG.len()..text.len()),
        (Some(o), None) => (Some(o + OPEN_TAG.len()..text.len()), text.len()..text.len()),
        (None, _) => match any_close {
            Some(c) => (None, c + CLOSE_TAG.len()..text.len()),
            None => (None, 0..text.len()),
        },
    };

    let blocks = fenced_blocks(text);
    let think_json_blocks: Vec<JsonBlock> = match &think {
        Some(t) => blocks
            .iter()
            .filter(|b| b.body.start >= t.start && b.body.end <= t.end)
            .map(|b| json_block(text, b))
            .collect(),
        None => Vec::new(),
    };
    if think_json_blocks.is_empty() {
        defects.push(Defect::NoThinkJson);
    } else if think_json_blocks.iter().any(|b| !b.is_valid()) {
        defects.push(Defect::InvalidThinkJson);
    }

    let last_answer = blocks
        .iter()
        .rfind(|b| b.body.start >= answer.start && b.end <= answer.end);
    let mut answer_block = None;
    let mut answer_graph = None;
    let mut answer_error = None;
    match last_answer {
        None => defects.push(Defect::NoAnswerJson),
        Some(f) => {
            let block = json_block(text, f);
            if block.is_valid() {
                match parse_scene_graph(&text[f.body.clone()]) {
                    Ok(g) => answer_graph = Some(g),
                    Err(e) => {
                        defects.push(Defect::InvalidAnswerGraph);
                        answer_error = Some(e);
                    }
                }
            } else {
                defects.push(Defect::InvalidAnswerJson);
            }
            if !text[f.end..].trim().is_empty() {
                defects.push(Defect::ExtraTextAfterAnswer);
            }
            answer_block = Some(block);
        }
    }

    defects.sort();
    TraceDocument {
        think_section: think.map(|r| text[r].to_string()),
        think_json_blocks,
        answer_section: (!answer.is_empty()).then(|| text[answer].to_string()),
        answer_block,
        answer_graph,
        answer_error,
        defects,
    }
}

/// Additive format rubric. Weights are configurable; the defaults sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormatRubric {
    pub tags: f64,
    pub tags_misnested: f64,
    pub think_json: f64,
    pub think_json_unparsable: f64,
    pub answer_json: f64,
    pub answer_json_unparsable: f64,
}

impl Default for FormatRubric {
    fn default() -> Self {
        Self {
            tags: 0.4,
            tags_misnested: 0.2,
            think_json: 0.3,
            think_json_unparsable: 0.1,
            answer_json: 0.3,
            answer_json_unparsable: 0.1,
        }
    }
}

pub fn format_score(doc: &TraceDocument) -> f64 {
    format_score_with(doc, &FormatRubric::default())
}

pub fn format_score_with(doc: &TraceDocument, rubric: &FormatRubric) -> f64 {
    let both_tags = !doc.has(Defect::MissingOpenTag) && !doc.has(Defect::MissingCloseTag);
    let tags = match (both_tags, doc.has(Defect::MisnestedTags)) {
        (true, false) => rubric.tags,
        (true, true) => rubric.tags_misnested,
        _ => 0.0,
    };
    let think = if doc.think_json_blocks.iter().any(JsonBlock::is_valid) {
        rubric.think_json
    } else if !doc.think_json_blocks.is_empty() {
        rubric.think_json_unparsable
    } else {
        0.0
    };
    let answer = match &doc.answer_block {
        Some(b) if b.is_valid() => rubric.answer_json,
        Some(_) => rubric.answer_json_unparsable,
        None => 0.0,
    };
    (tags + think + answer).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub collision_eps: f64,
    pub rubric: FormatRubric,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.2,
            lambda2: 0.2,
            collision_eps: DEFAULT_COLLISION_EPS,
            rubric: FormatRubric::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardReport {
    pub iou: f64,
    pub coll: f64,
    pub fmt: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub composite: f64,
    pub matching: Matching,
    pub defects: Vec<Defect>,
}

/// `iou + lambda1 * coll + lambda2 * fmt`.
pub fn combine(iou: f64, coll: f64, fmt: f64, cfg: &RewardConfig) -> f64 {
    iou + cfg.lambda1 * coll + cfg.lambda2 * fmt
}

/// Scores one rollout against its target graph.
pub fn composite_reward(pred_text: &str, gt: &SceneGraph, cfg: &RewardConfig) -> RewardReport {
    let doc = parse_trace(pred_text);
    let fmt = format_score_with(&doc, &cfg.rubric);
    let (iou, coll, matching) = match &doc.answer_graph {
        Some(g) => {
            let m = metrics::match_nodes(g, gt);
            (
                metrics::iou_reward_from(g, &m),
                metrics::collision_score(g, cfg.collision_eps),
                m,
            )
        }
        None => (0.0, 0.0, Matching::default()),
    };
    RewardReport {
        iou,
        coll,
        fmt,
        lambda1: cfg.lambda1,
        lambda2: cfg.lambda2,
        composite: combine(iou, coll, fmt, cfg),
        matching,
        defects: doc.defects,
    }
}

/// A trace in the canonical pattern whose reasoning and answer both carry `g`.
pub fn canonical_trace(g: &SceneGraph) -> String {
    let json = g.to_canonical_json();
    format!(
        "<think>\nStep 1: read the initial scene graph and the constraints.\n```json\n{json}\n```\n</think>\nFinal Scene Graph\n```json\n{json}\n```\n"
    )
}
