//! Line-delimited JSON records for instances and predictions, and their validator.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::construction::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{parse_label, Prediction};
use crate::schema::{Gender, Instance, NliLabel, PairInstance, Task};
use crate::text::normalize_answer;

/// Coref instance line; field order is the wire order.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorefRecord {
    id: String,
    construction_id: String,
    task: Task,
    text: String,
    candidates: Vec<String>,
    pronoun: String,
    pronoun_gender: Gender,
    gold: String,
    metadata: BTreeMap<String, String>,
}

/// Nli pair line; field order is the wire order.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NliRecord {
    id: String,
    construction_id: String,
    task: Task,
    premise: String,
    hypothesis: String,
    gold: NliLabel,
    metadata: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionRecord {
    instance_id: String,
    model_id: String,
    answer: String,
}

pub fn instance_line(instance: &Instance) -> String {
    serde_json::to_string(&CorefRecord {
        id: instance.id.clone(),
        construction_id: instance.construction_id.clone(),
        task: instance.task,
        text: instance.text.clone(),
        candidates: instance.candidates.clone(),
        pronoun: instance.pronoun.clone(),
        pronoun_gender: instance.pronoun_gender,
        gold: instance.gold.clone(),
        metadata: instance.metadata.clone(),
    })
    .expect("records serialize")
}

pub fn pair_line(pair: &PairInstance) -> String {
    serde_json::to_string(&NliRecord {
        id: pair.id.clone(),
        construction_id: pair.construction_id.clone(),
        task: Task::Nli,
        premise: pair.premise.clone(),
        hypothesis: pair.hypothesis.clone(),
        gold: pair.gold_label,
        metadata: pair.metadata.clone(),
    })
    .expect("records serialize")
}

pub fn prediction_line(p: &Prediction) -> String {
    serde_json::to_string(&PredictionRecord {
        instance_id: p.instance_id.clone(),
        model_id: p.model_id.clone(),
        answer: p.answer.clone(),
    })
    .expect("records serialize")
}

/// One parsed dataset line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    Coref(Instance),
    Nli(PairInstance),
}

pub fn parse_record(origin: &str, line_no: usize, line: &str) -> Result<Record> {
    let bad = |m: String| Error::parse(origin, line_no, m);
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
    let task = value
        .get("task")
        .and_then(|t| t.as_str())
        .ok_or_else(|| bad("record lacks a `task` string".into()))?;
    match task.parse::<Task>().map_err(|e| bad(e.to_string()))? {
        Task::Coref => {
            let r: CorefRecord = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
            let inst = Instance {
                id: r.id,
                construction_id: r.construction_id,
                task: r.task,
                text: r.text,
                candidates: r.candidates,
                pronoun: r.pronoun,
                pronoun_gender: r.pronoun_gender,
                gold: r.gold,
                metadata: r.metadata,
            };
            inst.validate().map_err(|e| bad(e.to_string()))?;
            Ok(Record::Coref(inst))
        }
        Task::Nli => {
            let r: NliRecord = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
            let pair = PairInstance {
                id: r.id,
                construction_id: r.construction_id,
                premise: r.premise,
                hypothesis: r.hypothesis,
                gold_label: r.gold,
                metadata: r.metadata,
            };
            pair.validate().map_err(|e| bad(e.to_string()))?;
            Ok(Record::Nli(pair))
        }
    }
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = Result<(usize, String)>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let owned = path.to_path_buf();
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| match line {
            Err(e) => Some(Err(Error::io(&owned, e))),
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(Ok((i + 1, l))),
        }))
}

/// Reads a dataset file; all lines must share one task.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let origin = path.display().to_string();
    let mut coref = Vec::new();
    let mut nli = Vec::new();
    for item in open_lines(path)? {
        let (n, line) = item?;
        match parse_record(&origin, n, &line)? {
            Record::Coref(i) if nli.is_empty() => coref.push(i),
            Record::Nli(p) if coref.is_empty() => nli.push(p),
            _ => return Err(Error::parse(&origin, n, "dataset mixes coref and nli records")),
        }
    }
    Ok(if nli.is_empty() {
        Dataset::Coref(coref)
    } else {
        Dataset::Nli(nli)
    })
}

pub fn parse_prediction(origin: &str, line_no: usize, line: &str) -> Result<Prediction> {
    let r: PredictionRecord = serde_json::from_str(line).map_err(|e| Error::parse(origin, line_no, e.to_string()))?;
    if r.instance_id.is_empty() || r.model_id.is_empty() {
        return Err(Error::parse(origin, line_no, "empty instance_id or model_id"));
    }
    Ok(Prediction {
        instance_id: r.instance_id,
        model_id: r.model_id,
        answer: r.answer,
    })
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let origin = path.display().to_string();
    open_lines(path)?
        .map(|item| {
            let (n, line) = item?;
            parse_prediction(&origin, n, &line)
        })
        .collect()
}

pub fn write_lines<W: Write>(mut out: W, lines: impl IntoIterator<Item = String>) -> std::io::Result<()> {
    for line in lines {
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn dataset_lines(dataset: &Dataset) -> Box<dyn Iterator<Item = String> + '_> {
    match dataset {
        Dataset::Coref(v) => Box::new(v.iter().map(instance_line)),
        Dataset::Nli(v) => Box::new(v.iter().map(pair_line)),
    }
}

/// Outcome of validating a prediction file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionCheck {
    pub lines: usize,
    pub models: BTreeSet<String>,
    /// Instance ids of the reference dataset with no prediction, per model.
    pub uncovered: BTreeMap<String, Vec<String>>,
}

impl PredictionCheck {
    pub fn complete(&self) -> bool {
        self.uncovered.values().all(Vec::is_empty)
    }
}

/// Checks every line against the prediction record schema. With a dataset, also
/// checks that ids resolve, answers are admissible and which ids are uncovered.
pub fn validate_predictions(path: &Path, dataset: Option<&Dataset>) -> Result<PredictionCheck> {
    let origin = path.display().to_string();
    let candidates: Option<HashMap<&str, Option<Vec<String>>>> = dataset.map(|d| match d {
        Dataset::Coref(v) => v
            .iter()
            .map(|i| {
                (
                    i.id.as_str(),
                    Some(i.candidates.iter().map(|c| normalize_answer(c)).collect()),
                )
            })
            .collect(),
        Dataset::Nli(v) => v.iter().map(|p| (p.id.as_str(), None)).collect(),
    });
    let mut seen: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut lines = 0;
    for item in open_lines(path)? {
        let (n, line) = item?;
        let p = parse_prediction(&origin, n, &line)?;
        lines += 1;
        if let Some(known) = &candidates {
            match known.get(p.instance_id.as_str()) {
                None => {
                    return Err(Error::parse(
                        &origin,
                        n,
                        format!("unknown instance id `{}`", p.instance_id),
                    ))
                }
                Some(Some(cands)) => {
                    if !cands.contains(&normalize_answer(&p.answer)) {
                        return Err(Error::parse(
                            &origin,
                            n,
                            format!("answer `{}` is not a candidate", p.answer),
                        ));
                    }
                }
                Some(None) => {
                    parse_label(&p.answer).map_err(|e| Error::parse(&origin, n, e.to_string()))?;
                }
            }
        }
        if !seen
            .entry(p.model_id.clone())
            .or_default()
            .insert(p.instance_id.clone())
        {
            return Err(Error::parse(
                &origin,
                n,
                format!("second prediction for `{}` from `{}`", p.instance_id, p.model_id),
            ));
        }
    }
    let uncovered = match dataset {
        None => BTreeMap::new(),
        Some(d) => seen
            .iter()
            .map(|(model, ids)| {
                let missing = d
                    .ids()
                    .into_iter()
                    .filter(|id| !ids.contains(*id))
                    .map(str::to_string)
                    .collect();
                (model.clone(), missing)
            })
            .collect(),
    };
    Ok(PredictionCheck {
        lines,
        models: seen.into_keys().collect(),
        uncovered,
    })
}

/// Checks every line of a dataset file against the instance record schema and id uniqueness.
pub fn validate_dataset(path: &Path) -> Result<Dataset> {
    let dataset = read_dataset(path)?;
    let mut ids = BTreeSet::new();
    for id in dataset.ids() {
        if !ids.insert(id) {
            return Err(Error::invalid(format!(
                "{}: duplicate instance id {id}",
                path.display()
            )));
        }
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_key_order_is_fixed() {
        let line = prediction_line(&Prediction::new("abc", "m", "neutral"));
        assert_eq!(line, r#"{"instance_id":"abc","model_id":"m","answer":"neutral"}"#);
        assert_eq!(parse_prediction("t", 1, &line).unwrap().answer, "neutral");
        assert!(parse_prediction("t", 1, r#"{"instance_id":"a","model_id":"m"}"#).is_err());
        assert!(parse_prediction("t", 1, r#"{"instance_id":"a","model_id":"m","answer":"x","extra":1}"#).is_err());
    }

    #[test]
    fn pair_round_trip() {
        let pair = PairInstance {
            id: "1".into(),
            construction_id: "biasnli/baseline".into(),
            premise: "The doctor bought a bagel.".into(),
            hypothesis: "The man bought a bagel.".into(),
            gold_label: NliLabel::Neutral,
            metadata: BTreeMap::from([("verb".to_string(), "bought".to_string())]),
        };
        let line = pair_line(&pair);
        assert!(line.starts_with(r#"{"id":"1","construction_id":"biasnli/baseline","task":"nli","premise""#));
        assert_eq!(parse_record("t", 1, &line).unwrap(), Record::Nli(pair));
    }
}
