//! End-to-end pipeline steps behind the CLI subcommands, exposed as
//! library functions so tests can drive the full flow in-process.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::context::{build_hn_dynamic, build_hn_static, ContextDoc, ContextStyle, EventLog};
use crate::error::{Error, Result};
use crate::eval::endpoint::Endpoint;
use crate::eval::metrics::{compute_metrics, MetricsReport};
use crate::eval::{run_eval, EvalRecord, RunOptions};
use crate::gen::{generate_scene, GenOptions};
use crate::manifest::{split_for, DataSplit, Manifest, ManifestEntry};
use crate::qa::{generate_qas, QAItem};
use crate::scene::{load_scene, save_scene, to_canonical_json};
use crate::triage::{labels_of, mixed_corpus, route_remote, route_rules, score_routing, RoutingDecision, RoutingScore};
use crate::util::sha256_hex;

/// Generate the scene corpus and its manifest under `output_dir/scenes`.
pub fn gen_scenes(config: &RunConfig) -> Result<Manifest> {
    config.validate()?;
    let config_hash = config.config_hash()?;
    let scenes_dir = config.output_dir.join("scenes");
    std::fs::create_dir_all(&scenes_dir)?;
    let opts = GenOptions {
        seed: config.seed,
        max_objects: config.max_stack_height,
        threshold: config.stability_threshold,
        ..GenOptions::new(config.seed)
    };
    let mut entries = Vec::with_capacity(config.scene_count);
    for i in 0..config.scene_count {
        let scene = generate_scene(&opts, i)?;
        let path = scenes_dir.join(format!("{}.json", scene.scene_id));
        save_scene(&scene, &path)?;
        entries.push(ManifestEntry {
            scene_id: scene.scene_id.clone(),
            split: split_for(&scene.scene_id, config.split_ratio),
            scene_path: Some(path.to_string_lossy().into_owned()),
            image_path: None,
            qa_path: None,
        });
    }
    let manifest = Manifest {
        config_hash,
        seed: config.seed,
        stability_threshold: config.stability_threshold,
        sp_bins: config.bins,
        train_ratio: config.split_ratio,
        entries,
    };
    manifest.save(&config.output_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// First line of a QA corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaHeader {
    pub kind: String,
    pub config_hash: String,
    pub dataset_hash: String,
    pub count: usize,
}

pub const QA_HEADER_KIND: &str = "qa_corpus";

/// Stable content hash of a QA corpus.
pub fn dataset_hash(items: &[QAItem]) -> Result<String> {
    Ok(sha256_hex(&to_canonical_json(&items)?))
}

/// Generate QAs for every simulated manifest entry, then merge any
/// human-authored sim2real QA files. Splits come from the manifest.
pub fn gen_qa(config: &RunConfig, manifest: &Manifest) -> Result<Vec<QAItem>> {
    config.validate()?;
    let mut items = Vec::new();
    for entry in &manifest.entries {
        match entry.split {
            DataSplit::Sim2Real => {
                let path = entry.qa_path.as_deref().ok_or_else(|| {
                    Error::Input(format!("sim2real entry {} has no qa_path", entry.scene_id))
                })?;
                for mut item in load_qa_items(Path::new(path))? {
                    item.split = DataSplit::Sim2Real;
                    item.validate()?;
                    items.push(item);
                }
            }
            _ => {
                let path = entry.scene_path.as_deref().ok_or_else(|| {
                    Error::Input(format!("entry {} has no scene_path", entry.scene_id))
                })?;
                let scene = load_scene(Path::new(path))?;
                for mut item in generate_qas(&scene, config.seed)? {
                    item.split = entry.split;
                    items.push(item);
                }
            }
        }
    }
    Ok(items)
}

/// Write a QA corpus as JSONL with a header line.
pub fn save_qa_corpus(items: &[QAItem], config_hash: &str, path: &Path) -> Result<()> {
    let header = QaHeader {
        kind: QA_HEADER_KIND.to_string(),
        config_hash: config_hash.to_string(),
        dataset_hash: dataset_hash(items)?,
        count: items.len(),
    };
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "{}", serde_json::to_string(&header)?)?;
    for item in items {
        writeln!(file, "{}", serde_json::to_string(item)?)?;
    }
    Ok(())
}

pub fn load_qa_corpus(path: &Path) -> Result<(QaHeader, Vec<QAItem>)> {
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Input(format!("{}: empty corpus", path.display())))??;
    let header: QaHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::Input(format!("{}: bad header: {e}", path.display())))?;
    if header.kind != QA_HEADER_KIND {
        return Err(Error::Input(format!("{}: not a QA corpus", path.display())));
    }
    let mut items = Vec::with_capacity(header.count);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: QAItem = serde_json::from_str(&line)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        item.validate()?;
        items.push(item);
    }
    if items.len() != header.count {
        return Err(Error::Input(format!(
            "{}: header promises {} items, found {}",
            path.display(),
            header.count,
            items.len()
        )));
    }
    let actual = dataset_hash(&items)?;
    if actual != header.dataset_hash {
        return Err(Error::Input(format!(
            "{}: dataset hash mismatch ({} vs {})",
            path.display(),
            header.dataset_hash,
            actual
        )));
    }
    Ok((header, items))
}

/// Headerless JSONL of QA items (human-authored sim2real files).
fn load_qa_items(path: &Path) -> Result<Vec<QAItem>> {
    let file = std::fs::File::open(path)?;
    let mut items = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: QAItem = serde_json::from_str(&line)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        items.push(item);
    }
    Ok(items)
}

/// Oracle HN contexts for every simulated scene in the manifest, keyed by
/// scene id.
pub fn gen_static_contexts(
    manifest: &Manifest,
    include_stability: bool,
) -> Result<BTreeMap<String, ContextDoc>> {
    let mut contexts = BTreeMap::new();
    for entry in manifest.sim_entries() {
        let path = entry.scene_path.as_deref().ok_or_else(|| {
            Error::Input(format!("entry {} has no scene_path", entry.scene_id))
        })?;
        let scene = load_scene(Path::new(path))?;
        contexts.insert(entry.scene_id.clone(), build_hn_static(&scene, include_stability));
    }
    Ok(contexts)
}

/// Contexts for a directory of event-log JSON files, keyed by log id.
pub fn gen_dynamic_contexts(
    log_dir: &Path,
    style: ContextStyle,
    frames: usize,
    bins: u32,
) -> Result<BTreeMap<String, ContextDoc>> {
    let mut contexts = BTreeMap::new();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(log_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    for path in paths {
        let log = EventLog::from_json(&std::fs::read(&path)?)?;
        let doc = match style {
            ContextStyle::Hn => build_hn_dynamic(&log)?,
            ContextStyle::Sp => {
                let indices = crate::context::sp::sample_frame_indices(&log, frames);
                crate::context::sp::build_sp(&log, &indices, bins)?
            }
        };
        contexts.insert(log.log_id.clone(), doc);
    }
    Ok(contexts)
}

pub fn save_contexts(contexts: &BTreeMap<String, ContextDoc>, path: &Path) -> Result<()> {
    std::fs::write(path, to_canonical_json(contexts)?)?;
    Ok(())
}

pub fn load_contexts(path: &Path) -> Result<BTreeMap<String, ContextDoc>> {
    let bytes = std::fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

/// Items scored at evaluation time: everything except the training split.
pub fn eval_subset(items: &[QAItem]) -> Vec<QAItem> {
    items.iter().filter(|i| i.split != DataSplit::Train).cloned().collect()
}

/// Optional restriction to one metrics group ("sim" / "real").
pub fn filter_group(items: &[QAItem], group: Option<&str>) -> Vec<QAItem> {
    match group {
        None => items.to_vec(),
        Some(g) => items.iter().filter(|i| i.split.metrics_group() == g).cloned().collect(),
    }
}

/// Evaluate a QA corpus against an endpoint; see [`run_eval`].
pub fn evaluate(
    items: &[QAItem],
    contexts: Option<&BTreeMap<String, ContextDoc>>,
    endpoint: &dyn Endpoint,
    opts: &RunOptions,
    run_path: Option<&Path>,
) -> Result<Vec<EvalRecord>> {
    let media = BTreeMap::new();
    run_eval(items, contexts, &media, endpoint, opts, run_path)
}

/// Aggregate one run file against its QA corpus.
pub fn metrics_for_run(run_path: &Path, corpus_path: &Path) -> Result<MetricsReport> {
    let (qa_header, items) = load_qa_corpus(corpus_path)?;
    let (run_header, records) = crate::eval::read_run_file(run_path)?;
    let run_header = run_header.ok_or_else(|| {
        Error::Input(format!("{}: missing run header", run_path.display()))
    })?;
    if run_header.dataset_hash != qa_header.dataset_hash {
        return Err(Error::Config(format!(
            "run {} was produced from a different dataset than {}",
            run_path.display(),
            corpus_path.display()
        )));
    }
    let scored: Vec<QAItem> = eval_subset(&items);
    compute_metrics(
        &records,
        &scored,
        run_header.reframed,
        &run_header.dataset_hash,
        &run_header.endpoint,
        run_header.mode,
    )
}

/// Route a generated mixed corpus and score it against its own labels.
pub fn triage_eval(
    seed: u64,
    count: usize,
    remote: Option<&dyn Endpoint>,
) -> Result<(Vec<RoutingDecision>, RoutingScore)> {
    let corpus = mixed_corpus(seed, count);
    let mut decisions = Vec::with_capacity(corpus.len());
    for item in &corpus {
        let decision = match remote {
            Some(endpoint) => route_remote(item, endpoint)?,
            None => route_rules(&item.qa_id, &item.question, item.media.len()),
        };
        decisions.push(decision);
    }
    let score = score_routing(&decisions, &labels_of(&corpus));
    Ok((decisions, score))
}

pub fn save_decisions(decisions: &[RoutingDecision], path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for decision in decisions {
        writeln!(file, "{}", serde_json::to_string(decision)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::endpoint::OracleMock;
    use crate::eval::Mode;

    fn small_config(dir: &Path) -> RunConfig {
        RunConfig::new(21, 12, dir)
    }

    #[test]
    fn scenes_qas_contexts_evaluate_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(dir.path());
        let manifest = gen_scenes(&config).unwrap();
        assert_eq!(manifest.entries.len(), 12);

        let items = gen_qa(&config, &manifest).unwrap();
        assert!(items.len() >= 12 * 7, "{} items", items.len());
        // Splits follow the manifest, not the per-item default.
        for item in &items {
            let entry = manifest.entries.iter().find(|e| e.scene_id == item.scene_id).unwrap();
            assert_eq!(item.split, entry.split);
        }

        let corpus_path = dir.path().join("qa.jsonl");
        save_qa_corpus(&items, &manifest.config_hash, &corpus_path).unwrap();
        let (header, loaded) = load_qa_corpus(&corpus_path).unwrap();
        assert_eq!(loaded, items);
        assert_eq!(header.count, items.len());

        let contexts = gen_static_contexts(&manifest, true).unwrap();
        assert_eq!(contexts.len(), manifest.sim_entries().count());

        let subset = eval_subset(&items);
        let mut opts = RunOptions::new(Mode::PcbAugmented, "mock:oracle");
        opts.dataset_hash = header.dataset_hash.clone();
        let run_path = dir.path().join("run.jsonl");
        let records =
            evaluate(&subset, Some(&contexts), &OracleMock, &opts, Some(&run_path)).unwrap();
        assert_eq!(records.len(), subset.iter().map(|i| i.options.len()).sum::<usize>());

        let report = metrics_for_run(&run_path, &corpus_path).unwrap();
        for categories in report.splits.values() {
            for metrics in categories.values() {
                assert_eq!(metrics.per_question_accuracy, 1.0);
            }
        }
    }

    #[test]
    fn rerun_uses_the_cache() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(dir.path());
        let manifest = gen_scenes(&config).unwrap();
        let items = eval_subset(&gen_qa(&config, &manifest).unwrap());
        let opts = RunOptions::new(Mode::ZeroShotCot, "mock:oracle");
        let run_path = dir.path().join("run.jsonl");
        let first = evaluate(&items, None, &OracleMock, &opts, Some(&run_path)).unwrap();
        let len_after_first = std::fs::metadata(&run_path).unwrap().len();
        let second = evaluate(&items, None, &OracleMock, &opts, Some(&run_path)).unwrap();
        assert_eq!(first.len(), second.len());
        assert_eq!(std::fs::metadata(&run_path).unwrap().len(), len_after_first);
    }

    #[test]
    fn corpus_tamper_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(dir.path());
        let manifest = gen_scenes(&config).unwrap();
        let items = gen_qa(&config, &manifest).unwrap();
        let path = dir.path().join("qa.jsonl");
        save_qa_corpus(&items, &manifest.config_hash, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replacen("How many", "How  many", 1)).unwrap();
        assert!(load_qa_corpus(&path).is_err());
    }

    #[test]
    fn rule_triage_end_to_end() {
        let (decisions, score) = triage_eval(5, 100, None).unwrap();
        assert_eq!(decisions.len(), 100);
        assert_eq!(score.accuracy, 1.0);
    }
}
