//! Sum-rule fusion of per-model class scores.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::activations::ActivationFamily;
use crate::{Error, Result};

/// Tolerance on row sums for matrices of softmax probabilities.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Per-sample, per-class scores from one model (or a fused ensemble).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    model_id: String,
    classes: usize,
    scores: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(model_id: impl Into<String>, classes: usize, scores: Vec<f64>) -> Result<Self> {
        if classes == 0 || scores.len() % classes != 0 {
            return Err(Error::config(format!(
                "{} scores do not form rows of {classes} classes",
                scores.len()
            )));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("score matrix contains non-finite values"));
        }
        Ok(ScoreMatrix { model_id: model_id.into(), classes, scores })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn rows(&self) -> usize {
        self.scores.len() / self.classes
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.classes..(i + 1) * self.classes]
    }

    /// Whether every row sums to one within [`ROW_SUM_TOLERANCE`].
    pub fn is_normalized(&self) -> bool {
        (0..self.rows()).all(|i| (self.row(i).iter().sum::<f64>() - 1.0).abs() <= ROW_SUM_TOLERANCE)
    }

    /// Index of the largest score in each row; ties go to the lowest index.
    pub fn predictions(&self) -> Vec<usize> {
        (0..self.rows()).map(|i| argmax(self.row(i))).collect()
    }

    pub fn scaled(&self, factor: f64) -> ScoreMatrix {
        ScoreMatrix {
            model_id: self.model_id.clone(),
            classes: self.classes,
            scores: self.scores.iter().map(|v| v * factor).collect(),
        }
    }

    /// CSV with the model id on the first line and one row per sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.scores.len() * 20);
        out.push_str(&csv_escape(&self.model_id));
        out.push('\n');
        for i in 0..self.rows() {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut records = reader.records();
        let header = match records.next() {
            Some(r) => r.map_err(|e| Error::parse_line(1, e.to_string()))?,
            None => return Err(Error::parse_line(1, "missing model id header")),
        };
        if header.len() != 1 || header[0].is_empty() {
            return Err(Error::parse_line(1, "header must be the model id alone"));
        }
        let model_id = header[0].to_string();
        let mut classes = 0;
        let mut scores = Vec::new();
        for (i, r) in records.enumerate() {
            let line = i + 2;
            let r = r.map_err(|e| Error::parse_line(line, e.to_string()))?;
            if r.len() == 1 && r[0].is_empty() {
                continue;
            }
            if classes == 0 {
                classes = r.len();
            } else if r.len() != classes {
                return Err(Error::parse_line(line, format!("expected {classes} scores, found {}", r.len())));
            }
            for f in r.iter() {
                let v: f64 = f
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse_line(line, format!("`{f}` is not a number")))?;
                if !v.is_finite() {
                    return Err(Error::parse_line(line, "non-finite score"));
                }
                scores.push(v);
            }
        }
        if classes == 0 {
            return Err(Error::parse_line(2, "no score rows"));
        }
        ScoreMatrix::new(model_id, classes, scores)
    }
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Element-wise sum of the members. The result is not renormalised.
pub fn fuse_sum(matrices: &[&ScoreMatrix]) -> Result<ScoreMatrix> {
    let first = matrices.first().ok_or_else(|| Error::config("cannot fuse zero score matrices"))?;
    for m in &matrices[1..] {
        if m.classes != first.classes || m.scores.len() != first.scores.len() {
            return Err(Error::config(format!(
                "score matrix `{}` is {}x{}, expected {}x{}",
                m.model_id,
                m.rows(),
                m.classes,
                first.rows(),
                first.classes
            )));
        }
    }
    let mut scores = first.scores.clone();
    for m in &matrices[1..] {
        for (s, v) in scores.iter_mut().zip(&m.scores) {
            *s += v;
        }
    }
    let id = matrices.iter().map(|m| m.model_id.as_str()).collect::<Vec<_>>().join("+");
    Ok(ScoreMatrix { model_id: id, classes: first.classes, scores })
}

/// Percentage of rows whose argmax equals the label.
pub fn accuracy(scores: &ScoreMatrix, labels: &[usize]) -> Result<f64> {
    if labels.len() != scores.rows() {
        return Err(Error::config(format!(
            "{} labels for {} score rows",
            labels.len(),
            scores.rows()
        )));
    }
    if labels.is_empty() {
        return Err(Error::config("accuracy of zero samples is undefined"));
    }
    let correct = scores.predictions().iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(100.0 * correct as f64 / labels.len() as f64)
}

// ---------------------------------------------------------------------------
// Model ids and ensemble construction

/// `<family label>@<max_input>`, e.g. `melu8@255` or `relu@1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelId {
    pub family: ActivationFamily,
}

impl ModelId {
    pub fn new(family: ActivationFamily) -> Self {
        ModelId { family }
    }

    pub fn max_input(&self) -> f64 {
        self.family.max_input
    }

    /// Identity of the trained function: families that ignore `max_input`
    /// collapse to their label alone.
    pub fn effective_key(&self) -> String {
        if self.family.kind.depends_on_max_input() {
            self.to_string()
        } else {
            self.family.label()
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.family.label(), self.family.max_input)
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (label, max) = s
            .split_once('@')
            .ok_or_else(|| Error::config(format!("model id `{s}` is not <family>@<max_input>")))?;
        let max_input: f64 =
            max.parse().map_err(|_| Error::config(format!("bad max_input in model id `{s}`")))?;
        Ok(ModelId { family: ActivationFamily::parse_label(label, max_input)? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnsembleKind {
    /// All members sharing one `max_input`.
    Ens { max_input: f64 },
    /// All members across every `max_input`, deduplicated.
    Eens,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub members: Vec<String>,
}

impl EnsembleSpec {
    pub fn name(&self) -> String {
        match self.kind {
            EnsembleKind::Ens { max_input } => format!("ENS@{max_input}"),
            EnsembleKind::Eens => "eENS".to_string(),
        }
    }
}

/// One ENS per distinct `max_input` (ascending) and one eENS over the union,
/// in which families independent of `max_input` appear once.
pub fn build_ensembles(model_ids: &[String]) -> Result<Vec<EnsembleSpec>> {
    let mut seen = std::collections::HashSet::new();
    let mut parsed = Vec::with_capacity(model_ids.len());
    for id in model_ids {
        let m: ModelId = id.parse()?;
        if !seen.insert(m.to_string()) {
            return Err(Error::config(format!("duplicate model id `{id}`")));
        }
        parsed.push((id.clone(), m));
    }
    let mut by_max: BTreeMap<OrdF64, Vec<String>> = BTreeMap::new();
    for (id, m) in &parsed {
        by_max.entry(OrdF64(m.max_input())).or_default().push(id.clone());
    }
    let mut out: Vec<EnsembleSpec> = by_max
        .into_iter()
        .map(|(k, members)| EnsembleSpec { kind: EnsembleKind::Ens { max_input: k.0 }, members })
        .collect();
    let mut keys = std::collections::HashSet::new();
    let eens: Vec<String> = parsed
        .iter()
        .filter(|(_, m)| keys.insert(m.effective_key()))
        .map(|(id, _)| id.clone())
        .collect();
    if !eens.is_empty() {
        out.push(EnsembleSpec { kind: EnsembleKind::Eens, members: eens });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(id: &str, rows: &[[f64; 2]]) -> ScoreMatrix {
        ScoreMatrix::new(id, 2, rows.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn fusion_basics() {
        let a = m("a", &[[0.6, 0.4]]);
        let b = m("b", &[[0.3, 0.7]]);
        assert_eq!(fuse_sum(&[&a]).unwrap().scores(), a.scores());
        let f = fuse_sum(&[&a, &b]).unwrap();
        assert!((f.scores()[0] - 0.9).abs() < 1e-15 && (f.scores()[1] - 1.1).abs() < 1e-15);
        assert_eq!(f.predictions(), vec![1]);
        assert_eq!(f.model_id(), "a+b");
        assert_eq!(fuse_sum(&[&b, &a]).unwrap().scores(), f.scores());
        assert!(fuse_sum(&[]).is_err());
        let c = ScoreMatrix::new("c", 3, vec![0.2, 0.3, 0.5]).unwrap();
        assert!(fuse_sum(&[&a, &c]).is_err());
    }

    #[test]
    fn accuracy_cases() {
        let onehot = m("p", &[[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(accuracy(&onehot, &[0, 1]).unwrap(), 100.0);
        let uniform = m("u", &[[0.5, 0.5], [0.5, 0.5]]);
        assert_eq!(accuracy(&uniform, &[0, 0]).unwrap(), 100.0);
        let q = m("q", &[[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]);
        assert_eq!(accuracy(&q, &[0, 1, 1, 1]).unwrap(), 25.0);
        assert!(accuracy(&q, &[0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let a = ScoreMatrix::new("melu8@255", 3, vec![0.1, 0.2, 0.7, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])
            .unwrap();
        let text = a.to_csv();
        assert!(text.starts_with("melu8@255\n"));
        assert_eq!(ScoreMatrix::from_csv(&text).unwrap(), a);
        assert!(ScoreMatrix::from_csv("").is_err());
        assert!(ScoreMatrix::from_csv("id\n").is_err());
        assert!(ScoreMatrix::from_csv("id\n1,2\n3").is_err());
        assert!(ScoreMatrix::from_csv("id\n1,x").is_err());
        assert!(ScoreMatrix::from_csv("a,b\n1,2").is_err());
    }

    fn ids(list: &[&str], max: &str) -> Vec<String> {
        list.iter().map(|f| format!("{f}@{max}")).collect()
    }

    #[test]
    fn ensembles_from_table_blocks() {
        let low = ids(&["melu8", "leaky_relu", "elu", "melu4", "prelu", "srelu", "aplu5", "relu"], "1");
        let high = ids(&["melu8", "melu4", "srelu", "aplu5", "relu"], "255");
        let e = build_ensembles(&low).unwrap();
        assert_eq!(e[0].members.len(), 8);
        let e = build_ensembles(&high).unwrap();
        assert_eq!(e[0].members.len(), 5);
        let all: Vec<String> = low.iter().chain(&high).cloned().collect();
        let e = build_ensembles(&all).unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!(e[0].name(), "ENS@1");
        assert_eq!(e[1].name(), "ENS@255");
        assert_eq!(e[2].name(), "eENS");
        assert_eq!(e[2].members.len(), 12);
        assert!(!e[2].members.contains(&"relu@255".to_string()));
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(build_ensembles(&["relu@1".into(), "relu@1".into()]).is_err());
        assert!(build_ensembles(&["relu".into()]).is_err());
    }

    #[test]
    fn model_id_parse() {
        let id: ModelId = "aplu3@255".parse().unwrap();
        assert_eq!(id.family.aplu_hinge_count, 3);
        assert_eq!(id.to_string(), "aplu3@255");
        assert_eq!("elu@255".parse::<ModelId>().unwrap().effective_key(), "elu");
        assert!("melu8@-1".parse::<ModelId>().is_err());
    }
}
