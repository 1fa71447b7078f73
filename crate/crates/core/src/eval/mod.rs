//! Evaluation harness: prompt construction, binary reframing, answer
//! extraction, bounded-parallel endpoint dispatch with transcript caching,
//! and the stratified metrics in [`metrics`].

pub mod endpoint;
pub mod metrics;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::context::{ContextDoc, ContextStyle};
use crate::error::{Error, Result};
use crate::qa::QAItem;
use crate::util::{now_millis, sha256_hex};

use endpoint::{ChatRequest, Endpoint};

pub const UNPARSEABLE: &str = "UNPARSEABLE";
pub const MAX_MEDIA: usize = 8;
pub const PROMPT_TEMPLATE_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ZeroShotCot,
    PcbAugmented,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::ZeroShotCot => "zero_shot_cot",
            Mode::PcbAugmented => "pcb_augmented",
        }
    }
}

/// Fully assembled prompt for one (sub-)question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub mode: Mode,
    pub question_text: String,
    pub options_text: String,
    /// Empty unless pcb_augmented.
    pub context_text: String,
    /// Image references, at most [`MAX_MEDIA`].
    pub media: Vec<String>,
    pub footer: String,
}

impl PromptBundle {
    /// The textual content sent to the model (media travel separately).
    pub fn render(&self) -> String {
        let mut out = String::new();
        if !self.context_text.is_empty() {
            out.push_str("Scene context:\n");
            out.push_str(&self.context_text);
            if !self.context_text.ends_with('\n') {
                out.push('\n');
            }
            out.push('\n');
        }
        out.push_str(&self.question_text);
        out.push(' ');
        out.push_str(&self.options_text);
        out.push('\n');
        out.push_str(&self.footer);
        out
    }

    pub fn hash(&self) -> String {
        let mut payload = self.render();
        for m in &self.media {
            payload.push('\u{0}');
            payload.push_str(m);
        }
        sha256_hex(payload.as_bytes())
    }
}

fn cot_footer() -> String {
    format!(
        "Reason step by step about the physical scene, then give your final answer on a new line formatted exactly as: Answer: <option> [template {PROMPT_TEMPLATE_VERSION}]"
    )
}

/// Deterministic prompt template. The chain-of-thought instruction is
/// present in both modes; pcb_augmented inserts the context before the
/// question under a "Scene context:" header.
pub fn build_prompt(
    item: &QAItem,
    mode: Mode,
    context: Option<&ContextDoc>,
    media: &[String],
) -> Result<PromptBundle> {
    if mode == Mode::PcbAugmented && context.is_none() {
        return Err(Error::Input(format!(
            "pcb_augmented prompt for {} requires a context document",
            item.qa_id
        )));
    }
    if media.len() > MAX_MEDIA {
        return Err(Error::Input(format!(
            "{} media references exceed the limit of {MAX_MEDIA}",
            media.len()
        )));
    }
    if mode == Mode::PcbAugmented {
        if let Some(doc) = context {
            if doc.style == ContextStyle::Sp && item.category.is_stability() {
                eprintln!(
                    "warning: SP context paired with static stability question {}",
                    item.qa_id
                );
            }
        }
    }
    let context_text = match mode {
        Mode::ZeroShotCot => String::new(),
        Mode::PcbAugmented => context.map(|c| c.text.clone()).unwrap_or_default(),
    };
    Ok(PromptBundle {
        mode,
        question_text: item.question.clone(),
        options_text: format!("Choose from: {}", item.options.join(", ")),
        context_text,
        media: media.to_vec(),
        footer: cot_footer(),
    })
}

/// Reframe a k-option question into k binary sub-questions, one per
/// option, asking whether that option is a valid answer. Binary questions
/// are reframed too (into 2 sub-questions) for protocol uniformity.
pub fn reframe_multichoice(item: &QAItem) -> Vec<QAItem> {
    item.options
        .iter()
        .map(|option| {
            let truth = if item.answer.contains(option) { "True" } else { "False" };
            QAItem {
                qa_id: item.qa_id.clone(),
                scene_id: item.scene_id.clone(),
                category: item.category,
                question: format!("Is '{option}' a correct answer to: {}?", item.question),
                options: vec!["True".to_string(), "False".to_string()],
                answer: vec![truth.to_string()],
                is_binary: true,
                split: item.split,
            }
        })
        .collect()
}

/// One dispatchable unit: either the whole item or one binary sub-question.
#[derive(Debug, Clone)]
pub struct EvalUnit {
    pub parent: QAItem,
    pub sub_index: Option<usize>,
    pub effective: QAItem,
}

pub fn expand_units(dataset: &[QAItem], reframe: bool) -> Vec<EvalUnit> {
    let mut units = Vec::new();
    for item in dataset {
        if reframe {
            for (i, sub) in reframe_multichoice(item).into_iter().enumerate() {
                units.push(EvalUnit { parent: item.clone(), sub_index: Some(i), effective: sub });
            }
        } else {
            units.push(EvalUnit { parent: item.clone(), sub_index: None, effective: item.clone() });
        }
    }
    units
}

/// Total answer extraction: the final "Answer:" line wins, matched
/// case-insensitively against the options; otherwise the last option
/// appearing verbatim in the response; otherwise UNPARSEABLE.
pub fn extract_answer(response: &str, options: &[String]) -> String {
    let match_option = |candidate: &str| -> Option<String> {
        let cleaned = candidate
            .trim()
            .trim_end_matches('.')
            .trim_matches(|c| c == '"' || c == '\'' || c == '*' || c == '`')
            .trim();
        options
            .iter()
            .find(|o| o.eq_ignore_ascii_case(cleaned))
            .cloned()
    };
    for line in response.lines().rev() {
        let trimmed = line.trim();
        let lower = trimmed.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("answer:") {
            let tail = &trimmed[trimmed.len() - rest.len()..];
            if let Some(found) = match_option(tail) {
                return found;
            }
        }
    }
    // Fallback: last verbatim option occurrence anywhere in the text.
    let lower = response.to_ascii_lowercase();
    let mut best: Option<(usize, String)> = None;
    for option in options {
        if let Some(pos) = lower.rfind(&option.to_ascii_lowercase()) {
            if best.as_ref().map_or(true, |(p, _)| pos > *p) {
                best = Some((pos, option.clone()));
            }
        }
    }
    best.map(|(_, o)| o).unwrap_or_else(|| UNPARSEABLE.to_string())
}

/// One model transaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub qa_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_question: Option<usize>,
    pub prompt_hash: String,
    pub response: String,
    pub extracted: String,
    pub correct: bool,
    pub latency_ms: u64,
    pub endpoint: String,
    pub timestamp_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// First line of a run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub kind: String,
    pub dataset_hash: String,
    pub config_hash: String,
    pub endpoint: String,
    pub mode: Mode,
    pub reframed: bool,
}

pub const RUN_HEADER_KIND: &str = "run_header";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: Mode,
    pub reframe: bool,
    pub max_parallel: usize,
    pub endpoint_id: String,
    pub dataset_hash: String,
    pub config_hash: String,
}

impl RunOptions {
    pub fn new(mode: Mode, endpoint_id: &str) -> Self {
        RunOptions {
            mode,
            reframe: true,
            max_parallel: 4,
            endpoint_id: endpoint_id.to_string(),
            dataset_hash: String::new(),
            config_hash: String::new(),
        }
    }
}

/// Parse a run file into its header and records, skipping blank lines.
pub fn read_run_file(path: &Path) -> Result<(Option<RunHeader>, Vec<EvalRecord>)> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut header = None;
    let mut records = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() && records.is_empty() {
            if let Ok(h) = serde_json::from_str::<RunHeader>(&line) {
                if h.kind == RUN_HEADER_KIND {
                    header = Some(h);
                    continue;
                }
            }
        }
        let record: EvalRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        records.push(record);
    }
    Ok((header, records))
}

/// Run every (item, sub-question) against the endpoint. Transcripts are
/// appended to `run_path` (single writer, append-only); re-runs skip
/// entries whose (qa_id, sub, prompt hash) already appear in the file.
/// Returns the union of cached and fresh records.
pub fn run_eval(
    dataset: &[QAItem],
    contexts: Option<&BTreeMap<String, ContextDoc>>,
    media: &BTreeMap<String, Vec<String>>,
    endpoint: &dyn Endpoint,
    opts: &RunOptions,
    run_path: Option<&Path>,
) -> Result<Vec<EvalRecord>> {
    if opts.max_parallel == 0 {
        return Err(Error::Config("max_parallel must be >= 1".to_string()));
    }
    let units = expand_units(dataset, opts.reframe);

    // Resolve prompts up front so precondition failures abort before any
    // endpoint traffic.
    let mut prepared = Vec::with_capacity(units.len());
    for unit in units {
        let context = match opts.mode {
            Mode::ZeroShotCot => None,
            Mode::PcbAugmented => {
                let doc = contexts
                    .and_then(|m| m.get(&unit.parent.scene_id))
                    .ok_or_else(|| {
                        Error::Input(format!(
                            "no context available for scene {}",
                            unit.parent.scene_id
                        ))
                    })?;
                Some(doc.clone())
            }
        };
        let item_media = media.get(&unit.parent.scene_id).cloned().unwrap_or_default();
        let prompt = build_prompt(&unit.effective, opts.mode, context.as_ref(), &item_media)?;
        prepared.push((unit, prompt));
    }

    let mut cached: Vec<EvalRecord> = Vec::new();
    let mut seen: BTreeSet<(String, Option<usize>, String)> = BTreeSet::new();
    if let Some(path) = run_path {
        if path.exists() {
            let (header, records) = read_run_file(path)?;
            if let Some(h) = header {
                if !opts.dataset_hash.is_empty() && h.dataset_hash != opts.dataset_hash {
                    return Err(Error::Config(format!(
                        "run file {} was produced from a different dataset (hash {} vs {})",
                        path.display(),
                        h.dataset_hash,
                        opts.dataset_hash
                    )));
                }
            }
            for r in records {
                seen.insert((r.qa_id.clone(), r.sub_question, r.prompt_hash.clone()));
                cached.push(r);
            }
        }
    }

    let todo: Vec<(EvalUnit, PromptBundle)> = prepared
        .into_iter()
        .filter(|(unit, prompt)| {
            !seen.contains(&(unit.parent.qa_id.clone(), unit.sub_index, prompt.hash()))
        })
        .collect();

    let queue: Mutex<VecDeque<(EvalUnit, PromptBundle)>> = Mutex::new(todo.into());
    let results: Mutex<Vec<EvalRecord>> = Mutex::new(Vec::new());
    let fatal: Mutex<Option<Error>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..opts.max_parallel {
            scope.spawn(|| loop {
                if fatal.lock().unwrap().is_some() {
                    return;
                }
                let Some((unit, prompt)) = queue.lock().unwrap().pop_front() else {
                    return;
                };
                match evaluate_unit(&unit, &prompt, endpoint, opts) {
                    Ok(record) => results.lock().unwrap().push(record),
                    Err(err) => {
                        *fatal.lock().unwrap() = Some(err);
                        return;
                    }
                }
            });
        }
    });

    if let Some(err) = fatal.into_inner().unwrap().take() {
        return Err(err);
    }
    let mut fresh = results.into_inner().unwrap();
    fresh.sort_by(|a, b| (&a.qa_id, a.sub_question).cmp(&(&b.qa_id, b.sub_question)));

    if let Some(path) = run_path {
        let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        if cached.is_empty() {
            let header = RunHeader {
                kind: RUN_HEADER_KIND.to_string(),
                dataset_hash: opts.dataset_hash.clone(),
                config_hash: opts.config_hash.clone(),
                endpoint: opts.endpoint_id.clone(),
                mode: opts.mode,
                reframed: opts.reframe,
            };
            writeln!(file, "{}", serde_json::to_string(&header)?)?;
        }
        for record in &fresh {
            writeln!(file, "{}", serde_json::to_string(record)?)?;
        }
    }

    cached.extend(fresh);
    Ok(cached)
}

fn evaluate_unit(
    unit: &EvalUnit,
    prompt: &PromptBundle,
    endpoint: &dyn Endpoint,
    opts: &RunOptions,
) -> Result<EvalRecord> {
    let request = ChatRequest {
        prompt: prompt.clone(),
        item: unit.effective.clone(),
        sub_index: unit.sub_index,
    };
    let started = std::time::Instant::now();
    let (response, note) = match endpoint.complete(&request) {
        Ok(text) => (text, None),
        // Transport exhaustion is recorded as an unparseable transaction;
        // config errors (bad auth) abort the run.
        Err(Error::Transport(message)) => (String::new(), Some(message)),
        Err(other) => return Err(other),
    };
    let latency_ms = started.elapsed().as_millis() as u64;
    let extracted = if response.is_empty() {
        UNPARSEABLE.to_string()
    } else {
        extract_answer(&response, &unit.effective.options)
    };
    let correct = unit.effective.answer.contains(&extracted);
    Ok(EvalRecord {
        qa_id: unit.parent.qa_id.clone(),
        sub_question: unit.sub_index,
        prompt_hash: prompt.hash(),
        response,
        extracted,
        correct,
        latency_ms,
        endpoint: opts.endpoint_id.clone(),
        timestamp_ms: now_millis(),
        note,
    })
}

/// Combine the k binary sub-records of one parent item:
/// (all-correct, number correct, k).
pub fn aggregate_binary(records: &[&EvalRecord], k: usize) -> Result<(bool, usize, usize)> {
    let mut by_sub: BTreeMap<usize, &EvalRecord> = BTreeMap::new();
    for r in records {
        let Some(sub) = r.sub_question else {
            return Err(Error::Aggregation(format!(
                "record for {} lacks a sub-question index",
                r.qa_id
            )));
        };
        by_sub.insert(sub, r);
    }
    if by_sub.len() != k || by_sub.keys().copied().ne(0..k) {
        return Err(Error::Aggregation(format!(
            "expected sub-questions 0..{k}, found {:?}",
            by_sub.keys().collect::<Vec<_>>()
        )));
    }
    let correct = by_sub.values().filter(|r| r.correct).count();
    Ok((correct == k, correct, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::DataSplit;
    use crate::qa::Category;

    fn item(k: usize, answer: &str) -> QAItem {
        let options: Vec<String> = match k {
            2 => vec!["True".into(), "False".into()],
            _ => (0..k).map(|i| format!("option{i}")).collect(),
        };
        QAItem {
            qa_id: "qa_test".to_string(),
            scene_id: "scene_test".to_string(),
            category: if k == 2 { Category::TowerStable } else { Category::IdentifyAboveBelow },
            question: "What is below the red cube?".to_string(),
            options,
            answer: vec![answer.to_string()],
            is_binary: k == 2,
            split: DataSplit::Eval,
        }
    }

    #[test]
    fn reframe_emits_one_binary_per_option() {
        let parent = item(4, "option1");
        let subs = reframe_multichoice(&parent);
        assert_eq!(subs.len(), 4);
        for (i, sub) in subs.iter().enumerate() {
            assert_eq!(sub.qa_id, parent.qa_id);
            assert_eq!(sub.options, ["True", "False"]);
            let expected = if i == 1 { "True" } else { "False" };
            assert_eq!(sub.answer, [expected]);
            assert!(sub.question.starts_with(&format!("Is 'option{i}' a correct answer to:")));
        }
    }

    #[test]
    fn binary_items_reframe_into_two_subs() {
        let subs = reframe_multichoice(&item(2, "False"));
        assert_eq!(subs.len(), 2);
        assert_eq!(subs[0].answer, ["False"]); // option "True" is not the answer
        assert_eq!(subs[1].answer, ["True"]);
    }

    #[test]
    fn multi_truth_item_marks_each_true() {
        let mut parent = item(4, "option0");
        parent.answer.push("option2".to_string());
        let subs = reframe_multichoice(&parent);
        let truths: Vec<&str> = subs.iter().map(|s| s.answer[0].as_str()).collect();
        assert_eq!(truths, ["True", "False", "True", "False"]);
    }

    #[test]
    fn extract_final_answer_line_wins() {
        let options = vec!["True".to_string(), "False".to_string()];
        let text = "The tower looks unstable because True is tempting.\nAnswer: False";
        assert_eq!(extract_answer(text, &options), "False");
    }

    #[test]
    fn extract_prefers_final_line_over_mentions() {
        let options = vec!["purple cube".to_string(), "yellow cylinder".to_string()];
        let text = "It could be the purple cube or the yellow cylinder.\nAnswer: yellow cylinder";
        assert_eq!(extract_answer(text, &options), "yellow cylinder");
    }

    #[test]
    fn extract_empty_response_is_unparseable() {
        assert_eq!(extract_answer("", &["True".to_string()]), UNPARSEABLE);
    }

    #[test]
    fn extract_falls_back_to_last_option_substring() {
        let options = vec!["2".to_string(), "3".to_string(), "4".to_string()];
        assert_eq!(extract_answer("I see 2, no wait, 3 objects", &options), "3");
    }

    #[test]
    fn extract_never_leaves_the_option_set() {
        let options = vec!["True".to_string(), "False".to_string()];
        for text in ["Answer: maybe", "gibberish", "Answer:", "Answer: True", ""] {
            let out = extract_answer(text, &options);
            assert!(options.contains(&out) || out == UNPARSEABLE, "{out}");
        }
    }

    #[test]
    fn pcb_prompt_requires_context() {
        let err = build_prompt(&item(2, "True"), Mode::PcbAugmented, None, &[]).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn prompt_contains_context_verbatim() {
        let doc = ContextDoc {
            style: ContextStyle::Hn,
            text: "The red cube will stay stationary.".to_string(),
            source: crate::context::ContextSource::Oracle,
            subject_id: "scene_test".to_string(),
        };
        let prompt = build_prompt(&item(2, "True"), Mode::PcbAugmented, Some(&doc), &[]).unwrap();
        let rendered = prompt.render();
        assert!(rendered.contains("Scene context:\nThe red cube will stay stationary."));
        assert!(rendered.contains("Choose from: True, False"));
    }

    #[test]
    fn media_limit_enforced() {
        let media: Vec<String> = (0..9).map(|i| format!("frame{i}.png")).collect();
        assert!(build_prompt(&item(2, "True"), Mode::ZeroShotCot, None, &media).is_err());
    }

    #[test]
    fn aggregate_binary_counts() {
        let mk = |sub: usize, correct: bool| EvalRecord {
            qa_id: "qa".to_string(),
            sub_question: Some(sub),
            prompt_hash: String::new(),
            response: String::new(),
            extracted: String::new(),
            correct,
            latency_ms: 0,
            endpoint: String::new(),
            timestamp_ms: 0,
            note: None,
        };
        let records = vec![mk(0, true), mk(1, true), mk(2, false), mk(3, true)];
        let refs: Vec<&EvalRecord> = records.iter().collect();
        assert_eq!(aggregate_binary(&refs, 4).unwrap(), (false, 3, 4));
        let all = vec![mk(0, true), mk(1, true)];
        let refs: Vec<&EvalRecord> = all.iter().collect();
        assert_eq!(aggregate_binary(&refs, 2).unwrap(), (true, 2, 2));
    }

    #[test]
    fn aggregate_binary_missing_sub_is_an_error() {
        let record = EvalRecord {
            qa_id: "qa".to_string(),
            sub_question: Some(0),
            prompt_hash: String::new(),
            response: String::new(),
            extracted: String::new(),
            correct: true,
            latency_ms: 0,
            endpoint: String::new(),
            timestamp_ms: 0,
            note: None,
        };
        let refs = vec![&record];
        assert!(matches!(aggregate_binary(&refs, 2), Err(Error::Aggregation(_))));
    }
}
