//! Cross-validated training of every (dataset, model) pair, per-fold
//! sum-rule ensembles and the accuracy / significance report.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::augment;
use super::folds::kfold_split;
use super::wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};
use crate::data::Dataset;
use crate::ensemble::{accuracy, build_ensembles, fuse_sum, EnsembleSpec, ModelId, ScoreMatrix};
use crate::nn::{predict_scores, train_with, LayerSpec, Network, NetworkSpec, TrainConfig};
use crate::seed::{derive_seed, mix64};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct NamedDataset {
    pub name: String,
    pub data: Dataset,
}

/// How raw features reach the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputScaling {
    /// Features are used as loaded.
    #[default]
    AsIs,
    /// Each model sees features min-max rescaled to `[0, max_input]`.
    ToMaxInput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Batch size, learning rate and epochs. The seed is ignored: every cell
    /// derives its own from `seed`.
    pub train: TrainConfig,
    pub folds: usize,
    pub seed: u64,
    pub augment: bool,
    pub input_scaling: InputScaling,
    /// Layers before the output layer; `None` picks
    /// [`NetworkSpec::default_for`].
    pub hidden_layers: Option<Vec<LayerSpec>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train: TrainConfig::default(),
            folds: 5,
            seed: 0,
            augment: true,
            input_scaling: InputScaling::AsIs,
            hidden_layers: None,
        }
    }
}

impl ExperimentConfig {
    fn network_spec(&self, input: [usize; 3], classes: usize) -> NetworkSpec {
        match &self.hidden_layers {
            Some(hidden) => {
                let mut layers = hidden.clone();
                layers.push(LayerSpec::Dense { out: classes });
                NetworkSpec { input, layers }
            }
            None => NetworkSpec::default_for(input, classes),
        }
    }

    /// Identity of the trained model behind `id`: two ids with the same key
    /// share one set of trained networks.
    fn training_key(&self, id: &ModelId) -> String {
        match self.input_scaling {
            InputScaling::AsIs => id.effective_key(),
            InputScaling::ToMaxInput => id.to_string(),
        }
    }
}

/// Held-out labels and every model's scores for one fold. `None` marks a
/// model that diverged or whose scores are missing.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub labels: Vec<usize>,
    pub scores: BTreeMap<String, Option<ScoreMatrix>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetResults {
    pub name: String,
    pub folds: Vec<FoldResult>,
}

/// Out-of-fold score matrices of a whole experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub model_ids: Vec<String>,
    pub datasets: Vec<DatasetResults>,
}

struct Cell {
    dataset: usize,
    key: String,
    model: ModelId,
    fold: usize,
}

/// Trains `k` models per (dataset, model) pair and collects their held-out
/// scores. Ids that differ only in a `max_input` their family ignores are
/// trained once and share scores.
pub fn run_experiment(
    datasets: &[NamedDataset],
    models: &[ModelId],
    cfg: &ExperimentConfig,
) -> Result<ExperimentResults> {
    cfg.train.validate()?;
    if datasets.is_empty() || models.is_empty() {
        return Err(Error::config("an experiment needs at least one dataset and one model"));
    }
    let model_ids: Vec<String> = models.iter().map(ToString::to_string).collect();
    build_ensembles(&model_ids)?;
    let mut names = std::collections::HashSet::new();
    for d in datasets {
        if !names.insert(d.name.as_str()) {
            return Err(Error::config(format!("duplicate dataset name `{}`", d.name)));
        }
        if d.data.is_empty() {
            return Err(Error::config(format!("dataset `{}` is empty", d.name)));
        }
    }
    for m in models {
        crate::activations::Activation::new(m.family.clone())?;
    }

    let splits = datasets
        .iter()
        .map(|d| {
            kfold_split(d.data.len(), cfg.folds, d.data.labels(), derive_seed(cfg.seed, &[&d.name, "folds"]))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (di, _) in datasets.iter().enumerate() {
        for m in models {
            let key = cfg.training_key(m);
            if !seen.insert((di, key.clone())) {
                continue;
            }
            for fold in 0..cfg.folds {
                cells.push(Cell { dataset: di, key: key.clone(), model: m.clone(), fold });
            }
        }
    }

    let outputs: Vec<Option<ScoreMatrix>> = cells
        .par_iter()
        .map(|cell| {
            let ds = &datasets[cell.dataset];
            let split = &splits[cell.dataset];
            match train_cell(ds, split, cell, cfg) {
                Ok(scores) => Ok(Some(scores)),
                Err(e @ Error::Diverged { .. }) => {
                    log::warn!(
                        "{} / {} / fold {}: {e}; excluded from ensembles",
                        ds.name,
                        cell.model,
                        cell.fold
                    );
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let mut by_key: HashMap<(usize, &str, usize), &Option<ScoreMatrix>> = HashMap::new();
    for (cell, out) in cells.iter().zip(&outputs) {
        by_key.insert((cell.dataset, cell.key.as_str(), cell.fold), out);
    }
    let mut results = Vec::with_capacity(datasets.len());
    for (di, ds) in datasets.iter().enumerate() {
        let split = &splits[di];
        let mut folds = Vec::with_capacity(cfg.folds);
        for fold in 0..cfg.folds {
            let labels: Vec<usize> =
                split.test_indices(fold).iter().map(|&i| ds.data.labels()[i]).collect();
            let mut scores = BTreeMap::new();
            for (m, id) in models.iter().zip(&model_ids) {
                let key = cfg.training_key(m);
                let s = by_key[&(di, key.as_str(), fold)]
                    .as_ref()
                    .map(|s| ScoreMatrix::new(id.clone(), s.classes(), s.scores().to_vec()))
                    .transpose()?;
                scores.insert(id.clone(), s);
            }
            folds.push(FoldResult { labels, scores });
        }
        results.push(DatasetResults { name: ds.name.clone(), folds });
    }
    Ok(ExperimentResults { model_ids, datasets: results })
}

fn train_cell(
    ds: &NamedDataset,
    split: &super::folds::FoldSplit,
    cell: &Cell,
    cfg: &ExperimentConfig,
) -> Result<ScoreMatrix> {
    let data = match cfg.input_scaling {
        InputScaling::AsIs => ds.data.clone(),
        InputScaling::ToMaxInput => ds.data.normalized_to(cell.model.max_input()),
    };
    let train_set = data.subset(&split.train_indices(cell.fold));
    let test_set = data.subset(&split.test_indices(cell.fold));
    let seed = derive_seed(cfg.seed, &[&ds.name, &cell.key, &cell.fold.to_string()]);
    let spec = cfg.network_spec(data.sample_shape(), data.classes());
    let mut net = Network::new(spec, cell.model.family.clone(), seed)?;
    let train_cfg = TrainConfig { seed: mix64(seed), ..cfg.train.clone() };
    let shape = data.sample_shape();
    if cfg.augment && shape[1] >= 2 && shape[2] >= 2 {
        train_with(&mut net, &train_set, &train_cfg, |s, rng| {
            let out = augment(s, shape, rng);
            s.copy_from_slice(&out);
        })?;
    } else {
        train_with(&mut net, &train_set, &train_cfg, |_, _| {})?;
    }
    predict_scores(&net, &test_set, &cell.model.to_string())
}

// ---------------------------------------------------------------------------
// Persistence of results

impl ExperimentResults {
    /// Writes `models.txt`, `datasets.txt` and one CSV per (dataset, model,
    /// fold) under `cells/`, plus per-fold label files.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join("cells"))?;
        std::fs::write(dir.join("models.txt"), lines(&self.model_ids))?;
        let names: Vec<String> = self.datasets.iter().map(|d| d.name.clone()).collect();
        std::fs::write(dir.join("datasets.txt"), lines(&names))?;
        for d in &self.datasets {
            let ddir = dir.join("cells").join(&d.name);
            std::fs::create_dir_all(&ddir)?;
            for (k, fold) in d.folds.iter().enumerate() {
                let labels: Vec<String> = fold.labels.iter().map(ToString::to_string).collect();
                std::fs::write(ddir.join(format!("labels_fold{k}.csv")), lines(&labels))?;
                for (id, s) in &fold.scores {
                    let mdir = ddir.join(id);
                    std::fs::create_dir_all(&mdir)?;
                    let path = mdir.join(format!("fold{k}.csv"));
                    match s {
                        Some(s) => std::fs::write(path, s.to_csv())?,
                        None => {
                            if path.exists() {
                                std::fs::remove_file(path)?;
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Reads a directory written by [`write_dir`](Self::write_dir). Missing
    /// score files become `None` with a warning.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let model_ids = read_lines(&dir.join("models.txt"))?;
        let names = read_lines(&dir.join("datasets.txt"))?;
        let mut datasets = Vec::with_capacity(names.len());
        for name in names {
            let ddir = dir.join("cells").join(&name);
            let mut folds = Vec::new();
            for k in 0.. {
                let lpath = ddir.join(format!("labels_fold{k}.csv"));
                if !lpath.exists() {
                    break;
                }
                let labels = read_lines(&lpath)?
                    .iter()
                    .enumerate()
                    .map(|(i, l)| {
                        l.parse::<usize>().map_err(|_| Error::Parse {
                            location: crate::Location::Source(format!("{}:{}", lpath.display(), i + 1)),
                            message: format!("`{l}` is not a class index"),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut scores = BTreeMap::new();
                for id in &model_ids {
                    let path = ddir.join(id).join(format!("fold{k}.csv"));
                    let s = if path.exists() {
                        let m = ScoreMatrix::from_csv(&std::fs::read_to_string(&path)?)?;
                        if m.rows() != labels.len() {
                            return Err(Error::validation(format!(
                                "{} has {} rows, fold has {} labels",
                                path.display(),
                                m.rows(),
                                labels.len()
                            )));
                        }
                        Some(m)
                    } else {
                        log::warn!("missing cell {name} / {id} / fold {k}");
                        None
                    };
                    scores.insert(id.clone(), s);
                }
                folds.push(FoldResult { labels, scores });
            }
            if folds.is_empty() {
                return Err(Error::validation(format!("no folds found for dataset `{name}`")));
            }
            datasets.push(DatasetResults { name, folds });
        }
        Ok(ExperimentResults { model_ids, datasets })
    }
}

fn lines(items: &[String]) -> String {
    let mut s = String::new();
    for i in items {
        s.push_str(i);
        s.push('\n');
    }
    s
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(std::fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

// ---------------------------------------------------------------------------
// Report

/// Signed-rank comparison of a method against an ensemble over all
/// (dataset, fold) accuracy pairs available to both.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub method: String,
    pub ensemble: String,
    /// `a` = ensemble accuracies, `b` = method accuracies, so `p_greater`
    /// tests whether the ensemble is better.
    pub result: Option<WilcoxonResult>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub datasets: Vec<String>,
    /// Member model ids followed by ensemble names.
    pub methods: Vec<String>,
    pub ensembles: Vec<EnsembleSpec>,
    /// `fold_accuracy[method][dataset][fold]`, in percent.
    pub fold_accuracy: Vec<Vec<Vec<Option<f64>>>>,
    pub comparisons: Vec<Comparison>,
}

impl ExperimentReport {
    pub fn from_results(results: &ExperimentResults) -> Result<Self> {
        let ensembles = build_ensembles(&results.model_ids)?;
        let mut methods = results.model_ids.clone();
        methods.extend(ensembles.iter().map(EnsembleSpec::name));
        let mut fold_accuracy = vec![Vec::with_capacity(results.datasets.len()); methods.len()];
        for d in &results.datasets {
            let mut per_method: Vec<Vec<Option<f64>>> = vec![Vec::new(); methods.len()];
            for (k, fold) in d.folds.iter().enumerate() {
                for (mi, id) in results.model_ids.iter().enumerate() {
                    let acc = match fold.scores.get(id).and_then(Option::as_ref) {
                        Some(s) => Some(accuracy(s, &fold.labels)?),
                        None => None,
                    };
                    per_method[mi].push(acc);
                }
                for (ei, e) in ensembles.iter().enumerate() {
                    let mut present = Vec::with_capacity(e.members.len());
                    for m in &e.members {
                        match fold.scores.get(m).and_then(Option::as_ref) {
                            Some(s) => present.push(s),
                            None => log::warn!(
                                "{} / fold {k}: {} excluded from {} (no scores)",
                                d.name,
                                m,
                                e.name()
                            ),
                        }
                    }
                    let acc = if present.is_empty() {
                        None
                    } else {
                        Some(accuracy(&fuse_sum(&present)?, &fold.labels)?)
                    };
                    per_method[results.model_ids.len() + ei].push(acc);
                }
            }
            for (mi, v) in per_method.into_iter().enumerate() {
                fold_accuracy[mi].push(v);
            }
        }
        let mut report = ExperimentReport {
            datasets: results.datasets.iter().map(|d| d.name.clone()).collect(),
            methods,
            ensembles,
            fold_accuracy,
            comparisons: Vec::new(),
        };
        report.comparisons = report.compare_all();
        Ok(report)
    }

    fn method_index(&self, method: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == method)
    }

    /// Mean fold accuracy of a method on a dataset; `None` if any fold is
    /// missing.
    pub fn accuracy(&self, method: &str, dataset: &str) -> Option<f64> {
        let mi = self.method_index(method)?;
        let di = self.datasets.iter().position(|d| d == dataset)?;
        mean_all(&self.fold_accuracy[mi][di])
    }

    /// Arithmetic mean of [`accuracy`](Self::accuracy) over datasets; `None`
    /// if any dataset cell is missing.
    pub fn average(&self, method: &str) -> Option<f64> {
        let cells: Vec<Option<f64>> =
            self.datasets.iter().map(|d| self.accuracy(method, d)).collect();
        mean_all(&cells)
    }

    fn compare_all(&self) -> Vec<Comparison> {
        let mut out = Vec::new();
        for e in &self.ensembles {
            let en = e.name();
            let ei = self.method_index(&en).expect("ensemble is a method");
            for (mi, m) in self.methods.iter().enumerate() {
                if mi == ei {
                    continue;
                }
                let mut a = Vec::new();
                let mut b = Vec::new();
                for (ea, ma) in self.fold_accuracy[ei].iter().zip(&self.fold_accuracy[mi]) {
                    for (x, y) in ea.iter().zip(ma) {
                        if let (Some(x), Some(y)) = (x, y) {
                            a.push(*x);
                            b.push(*y);
                        }
                    }
                }
                let (result, note) = match wilcoxon_signed_rank(&a, &b) {
                    Ok(r) => {
                        let note = r.all_zero.then(|| "all differences zero".to_string());
                        (Some(r), note)
                    }
                    Err(e) => (None, Some(e.to_string())),
                };
                out.push(Comparison { method: m.clone(), ensemble: en.clone(), result, note });
            }
        }
        out
    }

    /// `method,<datasets...>,Avg`; missing cells are blank.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method");
        for d in &self.datasets {
            s.push(',');
            s.push_str(d);
        }
        s.push_str(",Avg\n");
        for m in &self.methods {
            s.push_str(m);
            for d in &self.datasets {
                s.push(',');
                if let Some(v) = self.accuracy(m, d) {
                    let _ = write!(s, "{v}");
                }
            }
            s.push(',');
            if let Some(v) = self.average(m) {
                let _ = write!(s, "{v}");
            }
            s.push('\n');
        }
        s
    }

    /// `dataset,method,fold,accuracy`.
    pub fn folds_csv(&self) -> String {
        let mut s = String::from("dataset,method,fold,accuracy\n");
        for (di, d) in self.datasets.iter().enumerate() {
            for (mi, m) in self.methods.iter().enumerate() {
                for (k, v) in self.fold_accuracy[mi][di].iter().enumerate() {
                    let _ = write!(s, "{d},{m},{k},");
                    if let Some(v) = v {
                        let _ = write!(s, "{v}");
                    }
                    s.push('\n');
                }
            }
        }
        s
    }

    /// One row per (method, ensemble) comparison.
    pub fn wilcoxon_csv(&self) -> String {
        let mut s = String::from("method,ensemble,n,statistic,p_two_sided,p_ensemble_better,p_method_better,note\n");
        for c in &self.comparisons {
            let _ = write!(s, "{},{},", c.method, c.ensemble);
            match &c.result {
                Some(r) => {
                    let _ = write!(
                        s,
                        "{},{},{},{},{}",
                        r.n, r.statistic, r.p_two_sided, r.p_greater, r.p_less
                    );
                }
                None => s.push_str(",,,,"),
            }
            s.push(',');
            if let Some(n) = &c.note {
                s.push('"');
                s.push_str(&n.replace('"', "'"));
                s.push('"');
            }
            s.push('\n');
        }
        s
    }

    /// Accuracy table (methods x datasets + Avg) and p-value table.
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| Method |");
        for d in &self.datasets {
            let _ = write!(s, " {d} |");
        }
        s.push_str(" Avg |\n|---|");
        for _ in 0..=self.datasets.len() {
            s.push_str("---:|");
        }
        s.push('\n');
        let fmt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.2}"));
        for m in &self.methods {
            let _ = write!(s, "| {m} |");
            for d in &self.datasets {
                let _ = write!(s, " {} |", fmt(self.accuracy(m, d)));
            }
            let _ = writeln!(s, " {} |", fmt(self.average(m)));
        }
        if !self.comparisons.is_empty() {
            s.push_str("\n| Method | vs | n | p (two-sided) | p (ensemble better) |\n|---|---|---:|---:|---:|\n");
            for c in &self.comparisons {
                match &c.result {
                    Some(r) => {
                        let _ = writeln!(
                            s,
                            "| {} | {} | {} | {:.4} | {:.4} |",
                            c.method, c.ensemble, r.n, r.p_two_sided, r.p_greater
                        );
                    }
                    None => {
                        let _ = writeln!(s, "| {} | {} | | | |", c.method, c.ensemble);
                    }
                }
            }
        }
        s
    }

    /// Writes `report.csv`, `report.md`, `folds.csv` and `wilcoxon.csv`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.csv"), self.to_csv())?;
        std::fs::write(dir.join("report.md"), self.to_markdown())?;
        std::fs::write(dir.join("folds.csv"), self.folds_csv())?;
        std::fs::write(dir.join("wilcoxon.csv"), self.wilcoxon_csv())?;
        Ok(())
    }
}

fn mean_all(values: &[Option<f64>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for v in values {
        sum += (*v)?;
    }
    Some(sum / values.len() as f64)
}
