//! Cross-model analytics: competition ranking, average ranking, phase-over-phase
//! gains, and table rendering in plain text and CSV.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::IoError;
use crate::scorer::read_metrics;
use crate::task::{Phase, TaskKind};

/// Row of a result table: a task and one of its datasets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowKey {
    pub task: TaskKind,
    pub dataset: String,
}

/// phase → row → model → F1. Missing cells are absent, never zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultGrid {
    cells: BTreeMap<Phase, BTreeMap<RowKey, BTreeMap<String, f64>>>,
}

impl ResultGrid {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, phase: Phase, task: TaskKind, dataset: &str, model: &str, f1: f64) {
        self.cells
            .entry(phase)
            .or_default()
            .entry(RowKey {
                task,
                dataset: dataset.to_string(),
            })
            .or_default()
            .insert(model.to_string(), f1);
    }

    pub fn get(&self, phase: Phase, task: TaskKind, dataset: &str, model: &str) -> Option<f64> {
        self.cells
            .get(&phase)?
            .get(&RowKey {
                task,
                dataset: dataset.to_string(),
            })?
            .get(model)
            .copied()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.values().all(|rows| rows.values().all(BTreeMap::is_empty))
    }

    pub fn phases(&self) -> impl Iterator<Item = Phase> + '_ {
        self.cells.keys().copied()
    }

    fn rows(&self, phase: Phase) -> impl Iterator<Item = (&RowKey, &BTreeMap<String, f64>)> {
        self.cells.get(&phase).into_iter().flatten()
    }

    pub fn tasks(&self, phase: Phase) -> Vec<TaskKind> {
        let mut tasks: Vec<_> = self.rows(phase).map(|(k, _)| k.task).collect();
        tasks.dedup();
        tasks
    }

    /// Models with any cell in `phase`, in display order.
    pub fn models(&self, phase: Phase) -> Vec<String> {
        let mut models: Vec<String> = self
            .rows(phase)
            .flat_map(|(_, m)| m.keys().cloned())
            .collect();
        models.sort_by(|a, b| model_order(a).cmp(&model_order(b)).then_with(|| a.cmp(b)));
        models.dedup();
        models
    }

    /// Task-level score: plain mean over the task's datasets the model has.
    pub fn task_score(&self, phase: Phase, task: TaskKind, model: &str) -> Option<f64> {
        let values: Vec<f64> = self
            .rows(phase)
            .filter(|(k, _)| k.task == task)
            .filter_map(|(_, m)| m.get(model).copied())
            .collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }

    pub fn task_scores(&self, phase: Phase, task: TaskKind) -> BTreeMap<String, f64> {
        self.models(phase)
            .into_iter()
            .filter_map(|m| self.task_score(phase, task, &m).map(|s| (m, s)))
            .collect()
    }

    /// Builds a grid from `runs/{phase}/{model}/{task}/metrics.json` files.
    pub fn from_runs(runs: &Path) -> Result<Self, IoError> {
        let mut grid = ResultGrid::new();
        for phase in Phase::ALL {
            let phase_dir = runs.join(phase.as_str());
            for model_dir in sorted_dirs(&phase_dir)? {
                let model = model_dir.file_name().unwrap().to_string_lossy().into_owned();
                for task_dir in sorted_dirs(&model_dir)? {
                    let metrics = task_dir.join("metrics.json");
                    if !metrics.exists() {
                        continue;
                    }
                    for r in read_metrics(&metrics)? {
                        grid.insert(phase, r.task, &r.dataset, &model, r.f1);
                    }
                }
            }
        }
        Ok(grid)
    }
}

fn sorted_dirs(dir: &Path) -> Result<Vec<std::path::PathBuf>, IoError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| IoError::io(dir, e))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    out.sort();
    Ok(out)
}

/// Column order used by the published tables; unknown models sort after, by name.
const MODEL_ORDER: [&str; 6] = ["llama2", "falcon", "mpt", "bloom", "chatglm2", "qwen"];

fn model_order(name: &str) -> usize {
    let lower = name.to_lowercase();
    MODEL_ORDER
        .iter()
        .position(|m| lower.starts_with(m))
        .unwrap_or(MODEL_ORDER.len())
}

/// Descending competition ranking: tied scores share the best rank of their
/// block, and each rank is 1 + the number of strictly better models.
pub fn rank_models(scores: &BTreeMap<String, f64>) -> BTreeMap<String, usize> {
    scores
        .iter()
        .map(|(model, s)| {
            let better = scores.values().filter(|o| **o > *s).count();
            (model.clone(), better + 1)
        })
        .collect()
}

pub fn avg_ranking(ranks: &[usize]) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().sum::<usize>() as f64 / ranks.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arrow {
    #[serde(rename = "↑")]
    Up,
    #[serde(rename = "↓")]
    Down,
    #[serde(rename = "-")]
    Flat,
}

impl fmt::Display for Arrow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arrow::Up => "↑",
            Arrow::Down => "↓",
            Arrow::Flat => "-",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gain {
    /// `(after - before) * 100`, unrounded.
    pub points: f64,
    pub arrow: Arrow,
}

impl Gain {
    /// Signed, one decimal: `+1.1`, `-1.3`, `0.0`.
    pub fn rendered(&self) -> String {
        let tenths = (self.points * 10.0).round();
        if tenths == 0.0 {
            "0.0".to_string()
        } else {
            format!("{:+.1}", tenths / 10.0)
        }
    }
}

/// Gain in percentage points; the arrow is `-` when the gain rounds to 0.0.
pub fn performance_gain(before: f64, after: f64) -> Gain {
    let points = (after - before) * 100.0;
    let tenths = (points * 10.0).round();
    let arrow = if tenths == 0.0 {
        Arrow::Flat
    } else if after > before {
        Arrow::Up
    } else {
        Arrow::Down
    };
    Gain { points, arrow }
}

/// Per-phase tables as plain text and CSV.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RenderedReport {
    pub text: String,
    pub csv: String,
}

pub const CSV_HEADER: &str = "phase,task,dataset,model,f1";

fn fmt_score(v: f64) -> String {
    format!("{v:.3}")
}

fn render_table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (i, c) in row.iter().enumerate().take(cols) {
            widths[i] = widths[i].max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            let pad = widths[i] - c.chars().count();
            if i == 0 {
                s.push_str(c);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str(" | ");
                s.push_str(&" ".repeat(pad));
                s.push_str(c);
            }
        }
        s.push('\n');
        s
    };
    let mut out = line(header);
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 3 * (cols - 1)));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
    }
    out
}

/// Renders the grid. Task-specific tables carry bracketed ranks and an
/// average-ranking row; multi-task tables carry arrows against the
/// task-specific cell and a gain row per task; zero-shot tables mark the
/// best two models per row with `*`.
pub fn render_tables(grid: &ResultGrid) -> RenderedReport {
    let mut report = RenderedReport::default();
    if grid.is_empty() {
        return report;
    }
    report.csv.push_str(CSV_HEADER);
    report.csv.push('\n');

    for phase in grid.phases().collect::<Vec<_>>() {
        let models = grid.models(phase);
        if models.is_empty() {
            continue;
        }
        let mut header = vec![format!("{phase}")];
        header.extend(models.iter().cloned());
        let mut rows: Vec<Vec<String>> = Vec::new();

        let task_ranks: BTreeMap<TaskKind, BTreeMap<String, usize>> = grid
            .tasks(phase)
            .into_iter()
            .map(|t| (t, rank_models(&grid.task_scores(phase, t))))
            .collect();

        for task in grid.tasks(phase) {
            let datasets: Vec<(&RowKey, &BTreeMap<String, f64>)> =
                grid.rows(phase).filter(|(k, _)| k.task == task).collect();
            for (key, cells) in &datasets {
                let best_two = top_two(cells);
                let mut row = vec![if datasets.len() == 1 && key.dataset == task.as_str() {
                    task.to_string()
                } else {
                    format!("{task}/{}", key.dataset)
                }];
                for m in &models {
                    let cell = match cells.get(m) {
                        None => String::new(),
                        Some(v) => {
                            let mut s = fmt_score(*v);
                            match phase {
                                Phase::TaskSpecific if datasets.len() == 1 => {
                                    s.push_str(&format!(" ({})", task_ranks[&task][m]));
                                }
                                Phase::MultiTask => {
                                    if let Some(b) = grid.get(Phase::TaskSpecific, task, &key.dataset, m) {
                                        s.push_str(&performance_gain(b, *v).arrow.to_string());
                                    }
                                }
                                Phase::ZeroShot if best_two.iter().any(|(bm, _)| bm == m) => s.push('*'),
                                _ => {}
                            }
                            s
                        }
                    };
                    row.push(cell);
                }
                rows.push(row);
                for m in &models {
                    if let Some(v) = cells.get(m) {
                        report
                            .csv
                            .push_str(&format!("{phase},{task},{},{},{v}\n", csv_field(&key.dataset), csv_field(m)));
                    }
                }
            }
            if datasets.len() > 1 {
                let mut row = vec![format!("{task}/Avg")];
                for m in &models {
                    row.push(match grid.task_score(phase, task, m) {
                        None => String::new(),
                        Some(v) if phase == Phase::TaskSpecific => {
                            format!("{} ({})", fmt_score(v), task_ranks[&task][m])
                        }
                        Some(v) => fmt_score(v),
                    });
                }
                rows.push(row);
            }
            if phase == Phase::MultiTask {
                let gains: Vec<String> = models
                    .iter()
                    .map(|m| {
                        match (grid.task_score(Phase::TaskSpecific, task, m), grid.task_score(phase, task, m)) {
                            (Some(b), Some(a)) => format!("{}%", performance_gain(b, a).rendered()),
                            _ => String::new(),
                        }
                    })
                    .collect();
                if gains.iter().any(|g| !g.is_empty()) {
                    let mut row = vec![format!("{task}/Gain")];
                    row.extend(gains);
                    rows.push(row);
                }
            }
        }

        if phase == Phase::TaskSpecific {
            let mut row = vec!["Avg Ranking".to_string()];
            for m in &models {
                let ranks: Vec<usize> = task_ranks.values().filter_map(|r| r.get(m).copied()).collect();
                row.push(if ranks.is_empty() {
                    String::new()
                } else {
                    format!("{:.2}", avg_ranking(&ranks))
                });
            }
            rows.push(row);
        }

        if !report.text.is_empty() {
            report.text.push('\n');
        }
        report.text.push_str(&render_table(&header, &rows));
    }
    report
}

fn top_two(cells: &BTreeMap<String, f64>) -> Vec<(String, f64)> {
    let mut v: Vec<(String, f64)> = cells.iter().map(|(m, s)| (m.clone(), *s)).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.truncate(2);
    v
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Parses the CSV written by [`render_tables`] back into a grid.
pub fn grid_from_csv(text: &str) -> Result<ResultGrid, String> {
    let mut grid = ResultGrid::new();
    if text.trim().is_empty() {
        return Ok(grid);
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    for rec in reader.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.len() != 5 {
            return Err(format!("expected 5 columns, got {}", rec.len()));
        }
        let phase: Phase = rec[0].parse().map_err(|e| format!("{e}"))?;
        let task: TaskKind = rec[1].parse().map_err(|e| format!("{e}"))?;
        let f1: f64 = rec[4].parse().map_err(|e| format!("{e}"))?;
        grid.insert(phase, task, &rec[2], &rec[3], f1);
    }
    Ok(grid)
}
