use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{read_text, write_output, CliError, ReportFormat, RunConfig};
use crate::benchgen::{generate, read_dataset, write_dataset, GenParams, TaskInstance, TaskKind};
use crate::metrics::{score_scene, threshold_key, EvalReport};
use crate::rewards::{composite_reward, parse_trace};
use crate::scene_graph::SceneGraph;
use crate::solvers::solve_instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Ok,
    Failed,
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<SolveStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_graph: Option<SceneGraph>,
}

impl PredictionRecord {
    /// The graph to score: the explicit graph, else the trace's answer.
    pub fn graph(&self) -> Option<SceneGraph> {
        self.final_graph
            .clone()
            .or_else(|| self.raw_text.as_deref().and_then(|t| parse_trace(t).answer_graph))
    }
}

fn load_manifest(path: &Path) -> Result<Vec<TaskInstance>, CliError> {
    Ok(read_dataset(path)?)
}

pub fn cmd_gen(tasks: &[TaskKind], count: usize, seed: u64, params: &GenParams, out: &Path) -> Result<(), CliError> {
    let mut all = Vec::with_capacity(tasks.len() * count);
    let mut mix = Vec::new();
    for &task in tasks {
        let batch = generate(task, count, seed, params)?;
        mix.push(format!("{task}={}", batch.len()));
        all.extend(batch);
    }
    write_dataset(&all, out)?;
    println!(
        "wrote {} instances to {} (tasks: {}; seed {seed})",
        all.len(),
        out.display(),
        mix.join(", ")
    );
    Ok(())
}

pub fn cmd_solve(manifest: &Path, out: &Path, grid_hint: bool) -> Result<(), CliError> {
    let instances = load_manifest(manifest)?;
    let records: Vec<PredictionRecord> = instances
        .par_iter()
        .map(|inst| match solve_instance(inst, grid_hint) {
            Ok(r) => {
                log::info!("{}: residual {:.3e}, {} steps", inst.id, r.residual, r.steps.len());
                PredictionRecord {
                    id: inst.id.clone(),
                    status: Some(SolveStatus::Ok),
                    residual: Some(r.residual),
                    error: None,
                    raw_text: None,
                    final_graph: Some(r.graph.canonicalized()),
                }
            }
            Err(e) => {
                log::warn!("{}: {e}", inst.id);
                PredictionRecord {
                    id: inst.id.clone(),
                    status: Some(SolveStatus::Failed),
                    residual: None,
                    error: Some(e.to_string()),
                    raw_text: None,
                    final_graph: None,
                }
            }
        })
        .collect();
    let mut text = String::new();
    for r in &records {
        text.push_str(&serde_json::to_string(r).map_err(|e| CliError::Internal(e.to_string()))?);
        text.push('\n');
    }
    write_output(Some(out), text.as_bytes())?;
    let failed = records.iter().filter(|r| r.status == Some(SolveStatus::Failed)).count();
    println!("solved {} of {} instances", records.len() - failed, records.len());
    if failed > 0 {
        return Err(CliError::Data(format!("{failed} instance(s) failed to solve")));
    }
    Ok(())
}

struct Predictions {
    graphs: BTreeMap<String, Option<SceneGraph>>,
    unreadable: Vec<usize>,
}

fn load_predictions(path: &Path, known: &BTreeSet<&str>) -> Result<Predictions, CliError> {
    let text = read_text(path)?;
    let mut graphs = BTreeMap::new();
    let mut unreadable = Vec::new();
    let mut unknown = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("{}:{}: unreadable record: {e}", path.display(), i + 1);
                unreadable.push(i + 1);
                continue;
            }
        };
        if !known.contains(rec.id.as_str()) {
            unknown.push(rec.id);
            continue;
        }
        if graphs.contains_key(&rec.id) {
            log::warn!(
                "{}:{}: duplicate prediction for {} ignored",
                path.display(),
                i + 1,
                rec.id
            );
            continue;
        }
        let g = rec.graph();
        graphs.insert(rec.id, g);
    }
    if !unknown.is_empty() {
        return Err(CliError::Data(format!(
            "predictions reference unknown ids: {}",
            unknown.join(", ")
        )));
    }
    Ok(Predictions { graphs, unreadable })
}

/// Column headers and values for one task's report row.
fn columns(task: TaskKind, r: &EvalReport, thresholds: &[f64]) -> Vec<(String, Option<f64>)> {
    let mut cols = vec![("Mean IoU".to_string(), Some(r.mean_iou))];
    match task {
        TaskKind::Sorting => {
            cols.push(("Ctr. Dist.".into(), r.center_dist));
            cols.push(("Col. Free".into(), Some(r.collision_free)));
            cols.push(("Edit Dist.".into(), r.edit_dist));
        }
        TaskKind::Alignment | TaskKind::Roomedit => {
            for &t in thresholds {
                let k = threshold_key(t);
                cols.push((format!("IoU@{k}"), r.iou_at.get(&k).copied()));
            }
            cols.push(("Ctr. Dist.".into(), r.center_dist));
        }
    }
    cols
}

pub fn cmd_eval(manifest: &Path, predictions: &Path, cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let instances = load_manifest(manifest)?;
    let known: BTreeSet<&str> = instances.iter().map(|i| i.id.as_str()).collect();
    let preds = load_predictions(predictions, &known)?;

    let mut reports: Vec<(TaskKind, EvalReport, usize)> = Vec::new();
    for task in TaskKind::ALL {
        let of_task: Vec<&TaskInstance> = instances.iter().filter(|i| i.task == task).collect();
        if of_task.is_empty() {
            continue;
        }
        let per_scene = of_task
            .par_iter()
            .map(|inst| {
                let pred = preds.graphs.get(&inst.id).and_then(|g| g.as_ref());
                let axis = match task {
                    TaskKind::Sorting => cfg.sort_axis.or(inst.sort_axis()),
                    _ => None,
                };
                score_scene(
                    &inst.id,
                    pred,
                    &inst.target_graph,
                    &cfg.iou_thresholds,
                    cfg.collision_eps,
                    axis,
                )
            })
            .collect();
        let failed = of_task
            .iter()
            .filter(|i| matches!(preds.graphs.get(&i.id), Some(None)))
            .count();
        reports.push((task, EvalReport::aggregate(per_scene), failed));
    }

    let text = match cfg.format {
        ReportFormat::Json => {
            let mut tasks = serde_json::Map::new();
            for (task, r, failed) in &reports {
                let mut row = serde_json::Map::new();
                row.insert("scenes".into(), json!(r.scenes));
                row.insert("missing".into(), json!(r.missing));
                row.insert("failed".into(), json!(failed));
                for (name, v) in columns(*task, r, &cfg.iou_thresholds) {
                    row.insert(name, json!(v));
                }
                tasks.insert(task.to_string(), Value::Object(row));
            }
            let doc = json!({
                "config": cfg,
                "unreadable_records": preds.unreadable,
                "tasks": tasks,
            });
            let mut s = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Internal(e.to_string()))?;
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut header: Vec<String> = Vec::new();
            for (task, r, _) in &reports {
                for (name, _) in columns(*task, r, &cfg.iou_thresholds) {
                    if !header.contains(&name) {
                        header.push(name);
                    }
                }
            }
            let mut s = format!("# config: {}\n", serde_json::to_string(cfg).unwrap_or_default());
            let _ = writeln!(s, "task,scenes,missing,failed,{}", header.join(","));
            for (task, r, failed) in &reports {
                let cols: BTreeMap<String, Option<f64>> = columns(*task, r, &cfg.iou_thresholds).into_iter().collect();
                let cells: Vec<String> = header
                    .iter()
                    .map(|h| match cols.get(h) {
                        Some(Some(v)) => format!("{v}"),
                        _ => String::new(),
                    })
                    .collect();
                let _ = writeln!(s, "{task},{},{},{failed},{}", r.scenes, r.missing, cells.join(","));
            }
            s
        }
        ReportFormat::TextTable => {
            let mut s = format!("# config: {}\n", serde_json::to_string(cfg).unwrap_or_default());
            if !preds.unreadable.is_empty() {
                let _ = writeln!(s, "# unreadable prediction lines: {:?}", preds.unreadable);
            }
            for (task, r, failed) in &reports {
                let cols = columns(*task, r, &cfg.iou_thresholds);
                let _ = writeln!(
                    s,
                    "\n{task}: {} scenes, {} missing, {failed} failed",
                    r.scenes, r.missing
                );
                let widths: Vec<usize> = cols.iter().map(|(n, _)| n.len().max(8)).collect();
                let head: Vec<String> = cols.iter().zip(&widths).map(|((n, _), w)| format!("{n:>w$}")).collect();
                let vals: Vec<String> = cols
                    .iter()
                    .zip(&widths)
                    .map(|((_, v), w)| match v {
                        Some(v) => format!("{v:>w$.4}"),
                        None => format!("{:>w$}", "n/a"),
                    })
                    .collect();
                let _ = writeln!(s, "{}", head.join("  "));
                let _ = writeln!(s, "{}", vals.join("  "));
            }
            s
        }
    };
    write_output(out, text.as_bytes())
}

#[derive(Deserialize)]
struct TraceLine {
    id: String,
    #[serde(alias = "raw_text")]
    text: String,
}

pub fn cmd_score(traces: &Path, manifest: &Path, cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let instances = load_manifest(manifest)?;
    let by_id: BTreeMap<&str, &TaskInstance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let text = read_text(traces)?;
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    let reward_cfg = cfg.reward_config();
    let rows: Vec<(f64, Value)> = lines
        .par_iter()
        .map(|&(line_no, line)| {
            let parsed: Result<TraceLine, String> = serde_json::from_str(line).map_err(|e| e.to_string());
            match parsed {
                Err(e) => (0.0, json!({"line": line_no, "id": null, "composite": 0.0, "error": e})),
                Ok(t) => match by_id.get(t.id.as_str()) {
                    None => (
                        0.0,
                        json!({"line": line_no, "id": t.id, "composite": 0.0, "error": "unknown id"}),
                    ),
                    Some(inst) => {
                        let r = composite_reward(&t.text, &inst.target_graph, &reward_cfg);
                        (
                            r.composite,
                            json!({
                                "line": line_no,
                                "id": t.id,
                                "iou": r.iou,
                                "coll": r.coll,
                                "fmt": r.fmt,
                                "lambda1": r.lambda1,
                                "lambda2": r.lambda2,
                                "composite": r.composite,
                                "defects": r.defects,
                            }),
                        )
                    }
                },
            }
        })
        .collect();
    let mut s = String::new();
    for (_, v) in &rows {
        s.push_str(&v.to_string());
        s.push('\n');
    }
    write_output(out, s.as_bytes())?;
    if rows.is_empty() {
        eprintln!("scored 0 traces");
    } else {
        let n = rows.len() as f64;
        let mean = rows.iter().map(|r| r.0).sum::<f64>() / n;
        let min = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
        let max = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
        eprintln!(
            "scored {} traces: mean {mean:.6}, min {min:.6}, max {max:.6}",
            rows.len()
        );
    }
    Ok(())
}
