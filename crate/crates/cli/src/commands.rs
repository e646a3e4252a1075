use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sgg_core::dataset::{load_class_list, read_dataset, render_prompt, DatasetRecord, PromptSpec};
use sgg_core::eval::{evaluate_image, CorpusAccumulator, EvalConfig, EvalReport, ImageEval};
use sgg_core::graph::{validate_graph, Origin, RawGraph, RawObject, RawRelation};
use sgg_core::grpo::{advantages, grpo_objective, GroupSample};
use sgg_core::{
    candidate_reward, parse_response, EmbeddingTable, ExactMatch, LabelSimilarity, ParseMode, ParseStatus,
    RewardBreakdown, RewardConfig, RewardVariant,
};

use crate::config::{
    eval_config, grpo_config, reward_config, workers, EvalOverrides, FileConfig, GrpoOverrides, RewardOverrides,
};
use crate::stream::{build_pool, for_each_chunk, map_lines, open_input, open_output, Numbered, CHUNK_LINES};
use crate::{AdvantageArgs, CliError, EvaluateArgs, ParseCheckArgs, PromptArgs, RewardArgs};

fn timestamp(suppressed: bool) -> Option<u64> {
    if suppressed {
        return None;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
}

fn write_json(out: &mut dyn Write, value: &impl Serialize) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| CliError::Output(e.into()))?;
    writeln!(out).and_then(|()| out.flush()).map_err(CliError::output)
}

/// Image ids may be JSON strings or integers.
fn image_id_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn load_gt(path: &Path) -> Result<Vec<DatasetRecord>, CliError> {
    let loaded = read_dataset(path)?;
    for e in &loaded.skipped {
        log::warn!("{}: skipped {e}", path.display());
    }
    if loaded.records.is_empty() {
        return Err(CliError::EmptyInput(format!("no valid ground-truth records in {}", path.display())));
    }
    Ok(loaded.records)
}

fn gt_index(records: &[DatasetRecord]) -> HashMap<&str, &DatasetRecord> {
    let mut index = HashMap::with_capacity(records.len());
    for r in records {
        if index.contains_key(r.image_id.as_str()) {
            log::warn!("duplicate ground-truth image_id {}; keeping the first", r.image_id);
        } else {
            index.insert(r.image_id.as_str(), r);
        }
    }
    index
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    line: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_id: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    group_id: Option<&'a Value>,
    error: String,
}

impl<'a> ErrorRecord<'a> {
    fn render(line: usize, error: impl ToString) -> Self {
        Self { line, image_id: None, group_id: None, error: error.to_string() }
    }

    fn to_line(&self) -> String {
        serde_json::to_string(self).expect("error records serialize")
    }
}

enum Prediction {
    Response(String),
    Graph(RawGraph),
}

#[derive(Deserialize)]
struct PredictionLine {
    image_id: Value,
    #[serde(alias = "response")]
    response_text: Option<String>,
    graph: Option<RawGraph>,
    objects: Option<Vec<RawObject>>,
    relationships: Option<Vec<RawRelation>>,
}

impl PredictionLine {
    fn into_prediction(self) -> Option<Prediction> {
        if let Some(text) = self.response_text {
            return Some(Prediction::Response(text));
        }
        if let Some(graph) = self.graph {
            return Some(Prediction::Graph(graph));
        }
        if self.objects.is_some() || self.relationships.is_some() {
            return Some(Prediction::Graph(RawGraph {
                objects: self.objects.unwrap_or_default(),
                relationships: self.relationships.unwrap_or_default(),
            }));
        }
        None
    }
}

#[derive(Default)]
struct PredictionIndex {
    by_id: HashMap<String, Prediction>,
    invalid_lines: u64,
    duplicates: u64,
}

fn load_predictions(path: &Path) -> Result<PredictionIndex, CliError> {
    let mut index = PredictionIndex::default();
    for_each_chunk(open_input(path)?, path, |chunk| {
        for Numbered { line, text } in chunk {
            let parsed = serde_json::from_str::<PredictionLine>(&text).map_err(|e| e.to_string()).and_then(|p| {
                let id = image_id_string(&p.image_id).ok_or("image_id must be a string or integer")?;
                let pred = p.into_prediction().ok_or("needs response_text, graph, or objects/relationships")?;
                Ok((id, pred))
            });
            match parsed {
                Ok((id, pred)) => match index.by_id.entry(id) {
                    Entry::Occupied(e) => {
                        log::warn!(
                            "{}:{line}: duplicate prediction for {}; keeping the first",
                            path.display(),
                            e.key()
                        );
                        index.duplicates += 1;
                    }
                    Entry::Vacant(e) => {
                        e.insert(pred);
                    }
                },
                Err(e) => {
                    log::warn!("{}:{line}: {e}", path.display());
                    index.invalid_lines += 1;
                }
            }
        }
        Ok(())
    })?;
    Ok(index)
}

fn evaluate_record(record: &DatasetRecord, prediction: Option<&Prediction>, cfg: &EvalConfig) -> ImageEval {
    match prediction {
        None => evaluate_image(ParseStatus::NoAnswerBlock, None, &record.gt, cfg),
        Some(Prediction::Response(text)) => {
            let outcome = parse_response(text, cfg.parse_mode, Some(record.dims));
            evaluate_image(outcome.status, outcome.graph.as_ref(), &record.gt, cfg)
        }
        Some(Prediction::Graph(raw)) => {
            match validate_graph(&raw.objects, &raw.relationships, Some(record.dims), Origin::Prediction) {
                Ok(v) => evaluate_image(ParseStatus::Ok, Some(&v.graph), &record.gt, cfg),
                Err(_) => evaluate_image(ParseStatus::SchemaViolation, None, &record.gt, cfg),
            }
        }
    }
}

#[derive(Serialize)]
struct EvaluateOutput<'a> {
    #[serde(flatten)]
    report: &'a EvalReport,
    parse_mode: ParseMode,
    iou_threshold: f64,
    top_k: Option<usize>,
    predictions_missing: u64,
    predictions_unknown_image: u64,
    predictions_duplicate: u64,
    predictions_invalid_lines: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<u64>,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let file = FileConfig::load_optional(args.common.config.as_deref())?;
    let vocabulary = args.predicates.as_deref().map(load_class_list).transpose()?;
    let cfg = eval_config(
        &file.eval,
        EvalOverrides {
            iou_threshold: args.iou_thresh,
            top_k: args.top_k,
            parse_mode: args.parse_mode.map(Into::into),
            predicate_vocabulary: vocabulary,
        },
    )?;
    let pool = build_pool(workers(args.common.workers, file.workers)?)?;

    let gt = load_gt(&args.gt)?;
    let predictions = load_predictions(&args.pred)?;

    let mut acc = CorpusAccumulator::new();
    for chunk in gt.chunks(CHUNK_LINES) {
        let evals: Vec<ImageEval> = pool.install(|| {
            chunk.par_iter().map(|r| evaluate_record(r, predictions.by_id.get(&r.image_id), &cfg)).collect()
        });
        evals.into_iter().for_each(|e| acc.add(e));
    }
    let gt_ids: HashSet<&str> = gt.iter().map(|r| r.image_id.as_str()).collect();
    let missing = gt.iter().filter(|r| !predictions.by_id.contains_key(&r.image_id)).count() as u64;
    let unknown = predictions.by_id.keys().filter(|id| !gt_ids.contains(id.as_str())).count() as u64;
    if missing > 0 {
        log::warn!("{missing} ground-truth images have no prediction; counted as failures");
    }
    if unknown > 0 {
        log::warn!("{unknown} predictions name images absent from the ground truth; ignored");
    }

    let report = acc.finish(&cfg).map_err(|e| CliError::EmptyInput(e.to_string()))?;
    let output = EvaluateOutput {
        report: &report,
        parse_mode: cfg.parse_mode,
        iou_threshold: cfg.iou_threshold,
        top_k: cfg.top_k,
        predictions_missing: missing,
        predictions_unknown_image: unknown,
        predictions_duplicate: predictions.duplicates,
        predictions_invalid_lines: predictions.invalid_lines,
        timestamp: timestamp(args.common.no_timestamp),
    };
    write_json(&mut *open_output(args.common.out.as_deref())?, &output)?;
    if let Some(csv) = &args.csv {
        std::fs::write(csv, report.per_predicate_csv()).map_err(|e| CliError::io(csv, e))?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct CandidateLine {
    image_id: Value,
    #[serde(alias = "response")]
    response_text: String,
}

#[derive(Serialize)]
struct RewardRecord<'a> {
    line: usize,
    image_id: &'a str,
    #[serde(flatten)]
    breakdown: RewardBreakdown,
}

fn reward_line(
    input: &Numbered,
    gt: &HashMap<&str, &DatasetRecord>,
    cfg: &RewardConfig,
    similarity: &dyn LabelSimilarity,
) -> String {
    let candidate = match serde_json::from_str::<CandidateLine>(&input.text) {
        Ok(c) => c,
        Err(e) => return ErrorRecord::render(input.line, format!("invalid candidate record: {e}")).to_line(),
    };
    let Some(id) = image_id_string(&candidate.image_id) else {
        return ErrorRecord::render(input.line, "image_id must be a string or integer").to_line();
    };
    let Some(record) = gt.get(id.as_str()) else {
        let err = ErrorRecord { image_id: Some(&id), ..ErrorRecord::render(input.line, "unknown image_id") };
        return err.to_line();
    };
    let breakdown = candidate_reward(&candidate.response_text, &record.gt, cfg, similarity);
    serde_json::to_string(&RewardRecord { line: input.line, image_id: &id, breakdown })
        .expect("reward records serialize")
}

pub fn reward(args: &RewardArgs) -> Result<(), CliError> {
    let file = FileConfig::load_optional(args.common.config.as_deref())?;
    let cfg = reward_config(
        &file.reward,
        &RewardOverrides {
            variant: args.variant.map(Into::into),
            iou_threshold: args.iou_thresh,
            lambda1: args.lambda1,
            lambda2: args.lambda2,
            lambda3: args.lambda3,
            format_mode: args.parse_mode.map(Into::into),
            l1_scale: args.l1_scale.map(Into::into),
            no_format: args.no_format,
        },
    )?;
    let pool = build_pool(workers(args.common.workers, file.workers)?)?;
    let similarity: Box<dyn LabelSimilarity> = match args.embeddings.as_ref().or(file.embeddings.as_ref()) {
        Some(path) => Box::new(EmbeddingTable::load(path)?),
        None => {
            if cfg.variant != RewardVariant::HardRecall {
                log::warn!("no embeddings given; label similarity falls back to exact match");
            }
            Box::new(ExactMatch)
        }
    };

    let gt = load_gt(&args.gt)?;
    let index = gt_index(&gt);
    let mut out = open_output(args.common.out.as_deref())?;
    let processed = map_lines(open_input(&args.candidates)?, &args.candidates, &pool, &mut *out, |l| {
        reward_line(l, &index, &cfg, &*similarity)
    })?;
    if processed == 0 {
        return Err(CliError::EmptyInput(format!("no candidates in {}", args.candidates.display())));
    }
    Ok(())
}

#[derive(Deserialize)]
struct GroupLine {
    #[serde(default)]
    group_id: Value,
    #[serde(flatten)]
    sample: GroupSample,
}

#[derive(Serialize)]
struct AdvantageRecord {
    line: usize,
    group_id: Value,
    advantages: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective: Option<f64>,
}

pub fn advantage(args: &AdvantageArgs) -> Result<(), CliError> {
    let file = FileConfig::load_optional(args.common.config.as_deref())?;
    let cfg =
        grpo_config(&file.grpo, GrpoOverrides { epsilon: args.epsilon, beta: args.beta, std_floor: args.group_floor })?;
    let pool = build_pool(workers(args.common.workers, file.workers)?)?;
    let mut out = open_output(args.common.out.as_deref())?;
    let processed = map_lines(open_input(&args.groups)?, &args.groups, &pool, &mut *out, |input| {
        let group = match serde_json::from_str::<GroupLine>(&input.text) {
            Ok(g) => g,
            Err(e) => return ErrorRecord::render(input.line, format!("invalid group record: {e}")).to_line(),
        };
        let result = advantages(&group.sample.rewards, cfg.std_floor).and_then(|adv| {
            let objective = group.sample.ratios.as_ref().map(|_| grpo_objective(&group.sample, &cfg)).transpose()?;
            Ok((adv, objective))
        });
        match result {
            Ok((advantages, objective)) => {
                let record = AdvantageRecord { line: input.line, group_id: group.group_id, advantages, objective };
                serde_json::to_string(&record).expect("advantage records serialize")
            }
            Err(e) => ErrorRecord { group_id: Some(&group.group_id), ..ErrorRecord::render(input.line, e) }.to_line(),
        }
    })?;
    if processed == 0 {
        return Err(CliError::EmptyInput(format!("no groups in {}", args.groups.display())));
    }
    Ok(())
}

#[derive(Deserialize)]
struct ResponseLine {
    #[serde(alias = "response")]
    response_text: String,
}

#[derive(Serialize)]
struct ParseSummary {
    mode: ParseMode,
    total: u64,
    counts: BTreeMap<&'static str, u64>,
    invalid_lines: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<u64>,
}

pub fn parse_check(args: &ParseCheckArgs) -> Result<(), CliError> {
    let file = FileConfig::load_optional(args.common.config.as_deref())?;
    let mode = args.parse_mode.map(Into::into).or(file.eval.parse_mode).unwrap_or(ParseMode::Lenient);
    let pool = build_pool(workers(args.common.workers, file.workers)?)?;

    let mut counts: BTreeMap<&'static str, u64> = ParseStatus::ALL.iter().map(|s| (s.name(), 0)).collect();
    let mut invalid_lines = 0;
    for_each_chunk(open_input(&args.responses)?, &args.responses, |chunk| {
        let statuses: Vec<Option<ParseStatus>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|l| {
                    serde_json::from_str::<ResponseLine>(&l.text)
                        .ok()
                        .map(|r| parse_response(&r.response_text, mode, None).status)
                })
                .collect()
        });
        for (status, input) in statuses.into_iter().zip(&chunk) {
            match status {
                Some(s) => *counts.entry(s.name()).or_default() += 1,
                None => {
                    log::warn!("{}:{}: not a response record", args.responses.display(), input.line);
                    invalid_lines += 1;
                }
            }
        }
        Ok(())
    })?;
    let summary = ParseSummary {
        mode,
        total: counts.values().sum(),
        counts,
        invalid_lines,
        timestamp: timestamp(args.common.no_timestamp),
    };
    write_json(&mut *open_output(args.common.out.as_deref())?, &summary)
}

pub fn prompt(args: &PromptArgs) -> Result<(), CliError> {
    let spec = match (&args.obj_classes, &args.rel_classes) {
        (None, None) => PromptSpec::default(),
        (Some(o), Some(r)) => PromptSpec {
            with_categories: true,
            object_classes: Some(load_class_list(o)?),
            relation_classes: Some(load_class_list(r)?),
        },
        _ => return Err(CliError::Usage("--obj-classes and --rel-classes go together".into())),
    };
    let text = render_prompt(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut out = open_output(args.common.out.as_deref())?;
    out.write_all(text.as_bytes()).and_then(|()| out.flush()).map_err(CliError::output)
}
