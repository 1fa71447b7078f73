//! Triage routing: send a question to the PCB that can describe its scene,
//! either through a deterministic keyword classifier or a remote model, and
//! score routing quality with the shared confusion-matrix arithmetic.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::endpoint::{ChatRequest, Endpoint};
use crate::eval::metrics::{ClassScores, ConfusionMatrix};
use crate::eval::{build_prompt, extract_answer, Mode};
use crate::manifest::DataSplit;
use crate::qa::{Category, QAItem};
use crate::util::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcbKind {
    StackedObjects,
    DynamicScene,
}

impl PcbKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PcbKind::StackedObjects => "stacked_objects",
            PcbKind::DynamicScene => "dynamic_scene",
        }
    }

    pub fn parse(label: &str) -> Option<PcbKind> {
        match label.trim() {
            "stacked_objects" => Some(PcbKind::StackedObjects),
            "dynamic_scene" => Some(PcbKind::DynamicScene),
            _ => None,
        }
    }
}

impl fmt::Display for PcbKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingMethod {
    Rules,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub qa_id: String,
    pub chosen_pcb: PcbKind,
    pub method: RoutingMethod,
    pub confidence: f64,
    /// Remote decisions carry the raw model output.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    /// How many media references accompanied the query.
    pub media_sent: usize,
}

/// One routable query; the label is present when known by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageItem {
    pub qa_id: String,
    pub question: String,
    #[serde(default)]
    pub media: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<PcbKind>,
}

const DYNAMIC_KEYWORDS: [&str; 12] = [
    "collide",
    "collision",
    "moving",
    "moves toward",
    "motion",
    "velocity",
    "first",
    "sequence",
    "order of events",
    "enters",
    "hits",
    "trajectory",
];

const STACKED_KEYWORDS: [&str; 11] = [
    "stationary",
    "stable",
    "stability",
    "stack",
    "above",
    "below",
    "on top",
    "tower",
    "collection of objects",
    "bottom",
    "supporting",
];

/// Keyword-vote classifier. Ties (including no keywords at all) fall back
/// to the media hint: more than one frame suggests a dynamic scene.
pub fn route_rules(qa_id: &str, question: &str, media_count: usize) -> RoutingDecision {
    let lower = question.to_ascii_lowercase();
    let dynamic_votes = DYNAMIC_KEYWORDS.iter().filter(|k| lower.contains(*k)).count();
    let stacked_votes = STACKED_KEYWORDS.iter().filter(|k| lower.contains(*k)).count();
    let chosen_pcb = match dynamic_votes.cmp(&stacked_votes) {
        std::cmp::Ordering::Greater => PcbKind::DynamicScene,
        std::cmp::Ordering::Less => PcbKind::StackedObjects,
        std::cmp::Ordering::Equal => {
            if media_count > 1 {
                PcbKind::DynamicScene
            } else {
                PcbKind::StackedObjects
            }
        }
    };
    RoutingDecision {
        qa_id: qa_id.to_string(),
        chosen_pcb,
        method: RoutingMethod::Rules,
        confidence: 1.0,
        rationale: None,
        media_sent: media_count,
    }
}

const ROUTING_QUESTION: &str =
    "Which physics context builder should describe the scene for this query? Reply with exactly one label.";

/// Ask a remote endpoint for the label. A response that parses to neither
/// label falls back to the rule classifier (recorded as a rules decision).
pub fn route_remote(item: &TriageItem, endpoint: &dyn Endpoint) -> Result<RoutingDecision> {
    let fallback = route_rules(&item.qa_id, &item.question, item.media.len());
    let options = vec![
        PcbKind::StackedObjects.as_str().to_string(),
        PcbKind::DynamicScene.as_str().to_string(),
    ];
    // Ground truth (when known) rides along so oracle mocks can answer it;
    // unlabeled corpora fall back to the rule label.
    let truth = item.label.unwrap_or(fallback.chosen_pcb);
    let routing_item = QAItem {
        qa_id: item.qa_id.clone(),
        scene_id: item.qa_id.clone(),
        category: Category::CountObjects,
        question: format!("{ROUTING_QUESTION} Query: {}", item.question),
        options: options.clone(),
        answer: vec![truth.as_str().to_string()],
        is_binary: false,
        split: DataSplit::Eval,
    };
    let prompt = build_prompt(&routing_item, Mode::ZeroShotCot, None, &item.media)?;
    let request = ChatRequest { prompt, item: routing_item, sub_index: None };
    let response = match endpoint.complete(&request) {
        Ok(text) => text,
        Err(crate::error::Error::Transport(_)) => return Ok(fallback),
        Err(other) => return Err(other),
    };
    match PcbKind::parse(&extract_answer(&response, &options)) {
        Some(chosen_pcb) => Ok(RoutingDecision {
            qa_id: item.qa_id.clone(),
            chosen_pcb,
            method: RoutingMethod::Remote,
            confidence: 1.0,
            rationale: Some(response),
            media_sent: item.media.len(),
        }),
        None => Ok(fallback),
    }
}

/// Routing quality: overall accuracy plus per-task F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingScore {
    pub scored: usize,
    pub accuracy: f64,
    pub stacked_objects: ClassScores,
    pub dynamic_scene: ClassScores,
}

pub fn score_routing(
    decisions: &[RoutingDecision],
    labels: &BTreeMap<String, PcbKind>,
) -> RoutingScore {
    let mut stacked = ConfusionMatrix::default();
    let mut dynamic = ConfusionMatrix::default();
    for decision in decisions {
        let Some(truth) = labels.get(&decision.qa_id) else {
            eprintln!("warning: no label for {}; excluded from routing score", decision.qa_id);
            continue;
        };
        stacked.observe(
            decision.chosen_pcb == PcbKind::StackedObjects,
            *truth == PcbKind::StackedObjects,
        );
        dynamic.observe(
            decision.chosen_pcb == PcbKind::DynamicScene,
            *truth == PcbKind::DynamicScene,
        );
    }
    RoutingScore {
        scored: stacked.total(),
        accuracy: stacked.accuracy(),
        stacked_objects: ClassScores::from(stacked),
        dynamic_scene: ClassScores::from(dynamic),
    }
}

pub fn routing_table(score: &RoutingScore) -> String {
    let mut out = String::new();
    out.push_str(&format!("routing accuracy: {:.4} over {} items\n", score.accuracy, score.scored));
    out.push_str(&format!(
        "{:<16} {:>10} {:>8} {:>8}\n",
        "task", "precision", "recall", "F1"
    ));
    for (name, s) in [
        ("Stacked Objects", score.stacked_objects),
        ("Dynamic Scene", score.dynamic_scene),
    ] {
        out.push_str(&format!(
            "{:<16} {:>10.4} {:>8.4} {:>8.4}\n",
            name, s.precision, s.recall, s.f1
        ));
    }
    out
}

/// Labeled corpus mixing both vocabularies, separable by the rule
/// classifier by construction.
pub fn mixed_corpus(seed: u64, n: usize) -> Vec<TriageItem> {
    let stacked_templates = [
        "Will the {} stay stationary?",
        "How many objects are above the {}?",
        "How many objects are below the {}?",
        "What is the shape/color of the object above the {}?",
        "Will this collection of objects stay stationary?",
        "Is the {} at the bottom of the stack?",
    ];
    let dynamic_templates = [
        "Which object collides with the {} first?",
        "How many collisions occur in the scene?",
        "Is the {} moving toward Object 2?",
        "Which object enters the scene last?",
        "Describe the order of events in the motion sequence.",
        "What is the velocity of the {} in the final frame?",
    ];
    let names: Vec<String> = crate::scene::catalog()
        .into_iter()
        .map(|(s, c)| crate::scene::object_name(c, s))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "triage_corpus"));
    let mut items = Vec::with_capacity(n);
    for i in 0..n {
        let dynamic = i % 2 == 1;
        let templates: &[&str] =
            if dynamic { &dynamic_templates } else { &stacked_templates };
        let template = templates.choose(&mut rng).expect("non-empty templates");
        let name = names.choose(&mut rng).expect("non-empty catalog");
        let question = template.replace("{}", name);
        let media = if dynamic {
            (0..4).map(|f| format!("frames/{i:05}_{f}.png")).collect()
        } else {
            vec![format!("scenes/{i:05}.png")]
        };
        items.push(TriageItem {
            qa_id: format!("triage_{i:05}"),
            question,
            media,
            label: Some(if dynamic { PcbKind::DynamicScene } else { PcbKind::StackedObjects }),
        });
    }
    items.shuffle(&mut rng);
    items
}

pub fn labels_of(corpus: &[TriageItem]) -> BTreeMap<String, PcbKind> {
    corpus
        .iter()
        .filter_map(|i| i.label.map(|l| (i.qa_id.clone(), l)))
        .collect()
}
