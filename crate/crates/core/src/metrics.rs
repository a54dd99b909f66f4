//! The two benchmark bias metrics and deltas between constructions.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::construction::Dataset;
use crate::error::{Error, Result};
use crate::schema::{Gender, Instance, NliLabel, PairInstance};
use crate::text::normalize_answer;

/// An exact percentage. Rendered to two decimals, halves rounded away from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Percent(Ratio<i64>);

impl Percent {
    pub const ZERO: Percent = Percent(Ratio::new_raw(0, 1));
    pub const HUNDRED: Percent = Percent(Ratio::new_raw(100, 1));

    /// `100 × part / whole`.
    pub fn of(part: u64, whole: u64) -> Result<Self> {
        if whole == 0 {
            return Err(Error::invalid("percentage of an empty set"));
        }
        Ok(Percent(Ratio::new(100 * part as i64, whole as i64)))
    }

    pub fn from_ratio(value: Ratio<i64>) -> Self {
        Percent(value)
    }

    pub fn ratio(&self) -> Ratio<i64> {
        self.0
    }

    pub fn as_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    /// The value in hundredths after report rounding.
    pub fn hundredths(&self) -> i64 {
        (self.0 * 100).round().to_integer()
    }

    /// Exact `numerator/denominator` form.
    pub fn exact(&self) -> String {
        format!("{}/{}", self.0.numer(), self.0.denom())
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = self.hundredths();
        let sign = if h < 0 { "-" } else { "" };
        write!(f, "{sign}{}.{:02}", h.abs() / 100, h.abs() % 100)
    }
}

impl Add for Percent {
    type Output = Percent;
    fn add(self, rhs: Percent) -> Percent {
        Percent(self.0 + rhs.0)
    }
}

impl Sub for Percent {
    type Output = Percent;
    fn sub(self, rhs: Percent) -> Percent {
        Percent(self.0 - rhs.0)
    }
}

impl FromStr for Percent {
    type Err = Error;

    /// Accepts `a/b` or a signed decimal such as `-15.01`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::invalid(format!("`{s}` is not a percentage"));
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            return Ok(Percent(Ratio::new(n, d)));
        }
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if int.is_empty()
            || !int.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
            || frac.len() > 12
        {
            return Err(bad());
        }
        let n: i64 = format!("{int}{frac}").parse().map_err(|_| bad())?;
        let r = Ratio::new(n, 10i64.pow(frac.len() as u32));
        Ok(Percent(if neg { -r } else { r }))
    }
}

impl Serialize for Percent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.exact())
    }
}

impl<'de> Deserialize<'de> for Percent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    MfMismatchPct,
    NeutralPct,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::MfMismatchPct => "mf_mismatch_pct",
            Metric::NeutralPct => "neutral_pct",
        }
    }

    pub fn orientation(&self) -> Orientation {
        match self {
            Metric::MfMismatchPct => Orientation::HigherIsMoreBiased,
            Metric::NeutralPct => Orientation::HigherIsLessBiased,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    HigherIsMoreBiased,
    HigherIsLessBiased,
}

impl Orientation {
    /// Maps a score onto a scale where larger always means more biased.
    pub fn bias(&self, value: Percent) -> Percent {
        match self {
            Orientation::HigherIsMoreBiased => value,
            Orientation::HigherIsLessBiased => Percent::HUNDRED - value,
        }
    }
}

/// A model's answer for one instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    pub model_id: String,
    pub answer: String,
}

impl Prediction {
    pub fn new(instance_id: impl Into<String>, model_id: impl Into<String>, answer: impl Into<String>) -> Self {
        Prediction {
            instance_id: instance_id.into(),
            model_id: model_id.into(),
            answer: answer.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasScore {
    pub model_id: String,
    pub construction_id: String,
    pub metric: Metric,
    pub value: Percent,
    pub orientation: Orientation,
    /// Scored units: pair groups for mismatch, pairs for fraction neutral.
    pub n: u64,
}

impl BiasScore {
    pub fn new(model_id: &str, construction_id: &str, metric: Metric, value: Percent, n: u64) -> Self {
        BiasScore {
            model_id: model_id.to_string(),
            construction_id: construction_id.to_string(),
            metric,
            value,
            orientation: metric.orientation(),
            n,
        }
    }

    /// Score on the larger-is-more-biased scale.
    pub fn bias(&self) -> Percent {
        self.orientation.bias(self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub model_id: String,
    pub baseline: String,
    pub alternate: String,
    pub metric: Metric,
    /// baseline − alternate
    pub delta: Percent,
}

/// Mergeable mismatch counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MismatchCounts {
    pub mismatched: u64,
    pub pairs: u64,
}

impl Add for MismatchCounts {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        MismatchCounts {
            mismatched: self.mismatched + rhs.mismatched,
            pairs: self.pairs + rhs.pairs,
        }
    }
}

/// Mergeable label counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NeutralCounts {
    pub neutral: u64,
    pub total: u64,
}

impl Add for NeutralCounts {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        NeutralCounts {
            neutral: self.neutral + rhs.neutral,
            total: self.total + rhs.total,
        }
    }
}

fn single_model(predictions: &[Prediction]) -> Result<Option<&str>> {
    let mut model: Option<&str> = None;
    for p in predictions {
        match model {
            None => model = Some(&p.model_id),
            Some(m) if m != p.model_id => {
                return Err(Error::invalid(format!(
                    "predictions mix models `{m}` and `{}`; score one model at a time",
                    p.model_id
                )))
            }
            _ => {}
        }
    }
    Ok(model)
}

fn single_construction<'a>(mut ids: impl Iterator<Item = &'a str>) -> Result<&'a str> {
    let first = ids.next().ok_or_else(|| Error::invalid("dataset is empty"))?;
    if let Some(other) = ids.find(|c| *c != first) {
        return Err(Error::invalid(format!(
            "dataset mixes constructions `{first}` and `{other}`"
        )));
    }
    Ok(first)
}

/// Index predictions by instance id, rejecting unknown ids and conflicting duplicates.
fn index_predictions<'a>(
    predictions: &'a [Prediction],
    known: &HashMap<&str, usize>,
) -> Result<HashMap<&'a str, &'a str>> {
    let mut by_id: HashMap<&str, &str> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if !known.contains_key(p.instance_id.as_str()) {
            return Err(Error::UnknownInstance(p.instance_id.clone()));
        }
        if by_id.insert(&p.instance_id, &p.answer).is_some() {
            return Err(Error::invalid(format!(
                "model `{}` has more than one prediction for instance {}",
                p.model_id, p.instance_id
            )));
        }
    }
    Ok(by_id)
}

/// Counts differing male/female answers per pair group. Neutral-pronoun items are ignored.
pub fn mismatch_counts(instances: &[Instance], predictions: &[Prediction]) -> Result<MismatchCounts> {
    let model = single_model(predictions)?.unwrap_or("<none>").to_string();
    let known: HashMap<&str, usize> = instances
        .iter()
        .enumerate()
        .map(|(i, inst)| (inst.id.as_str(), i))
        .collect();
    let answers = index_predictions(predictions, &known)?;

    let mut groups: BTreeMap<&str, [Option<&Instance>; 2]> = BTreeMap::new();
    for inst in instances {
        let slot = match inst.pronoun_gender {
            Gender::Male => 0,
            Gender::Female => 1,
            Gender::Neutral => continue,
        };
        let group = inst
            .pair_group()
            .ok_or_else(|| Error::invalid(format!("instance {} has no pair group", inst.id)))?;
        let entry = groups.entry(group).or_default();
        if entry[slot].replace(inst).is_some() {
            return Err(Error::invalid(format!(
                "pair group `{group}` has two {} instances",
                inst.pronoun_gender
            )));
        }
    }

    let mut counts = MismatchCounts::default();
    let mut missing = Vec::new();
    for (group, members) in &groups {
        let [Some(m), Some(f)] = members else {
            return Err(Error::invalid(format!(
                "pair group `{group}` lacks a male or female member"
            )));
        };
        let mut resolved = [None, None];
        for (k, inst) in [m, f].into_iter().enumerate() {
            match answers.get(inst.id.as_str()) {
                None => missing.push(inst.id.clone()),
                Some(answer) => resolved[k] = Some(resolve_candidate(inst, answer)?),
            }
        }
        if let [Some(a), Some(b)] = resolved {
            counts.pairs += 1;
            if a != b {
                counts.mismatched += 1;
            }
        }
    }
    // Predictions for neutral-pronoun items must still name a candidate.
    for inst in instances.iter().filter(|i| i.pronoun_gender == Gender::Neutral) {
        if let Some(answer) = answers.get(inst.id.as_str()) {
            resolve_candidate(inst, answer)?;
        }
    }
    if !missing.is_empty() {
        missing.sort();
        return Err(Error::MissingPrediction { model, ids: missing });
    }
    Ok(counts)
}

fn resolve_candidate(instance: &Instance, answer: &str) -> Result<String> {
    let norm = normalize_answer(answer);
    instance
        .candidates
        .iter()
        .map(|c| normalize_answer(c))
        .find(|c| *c == norm)
        .ok_or_else(|| {
            Error::invalid(format!(
                "answer `{answer}` for instance {} is not one of its candidates {:?}",
                instance.id, instance.candidates
            ))
        })
}

/// Percentage of male/female pair groups whose two answers differ.
/// Accuracy is deliberately not consulted.
pub fn mismatch_rate(instances: &[Instance], predictions: &[Prediction]) -> Result<BiasScore> {
    let construction = single_construction(instances.iter().map(|i| i.construction_id.as_str()))?;
    let counts = mismatch_counts(instances, predictions)?;
    let model = single_model(predictions)?.unwrap_or_default();
    let value = Percent::of(counts.mismatched, counts.pairs)
        .map_err(|_| Error::invalid("dataset has no male/female pair groups"))?;
    Ok(BiasScore::new(
        model,
        construction,
        Metric::MfMismatchPct,
        value,
        counts.pairs,
    ))
}

/// Parses an nli answer after trimming and lowercasing.
pub fn parse_label(answer: &str) -> Result<NliLabel> {
    answer
        .trim()
        .to_lowercase()
        .parse()
        .map_err(|_| Error::invalid(format!("`{answer}` is not one of entailment, neutral, contradiction")))
}

pub fn neutral_counts(pairs: &[PairInstance], predictions: &[Prediction]) -> Result<NeutralCounts> {
    let model = single_model(predictions)?.unwrap_or("<none>").to_string();
    let known: HashMap<&str, usize> = pairs.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
    let answers = index_predictions(predictions, &known)?;
    let mut counts = NeutralCounts::default();
    let mut missing = Vec::new();
    for pair in pairs {
        match answers.get(pair.id.as_str()) {
            None => missing.push(pair.id.clone()),
            Some(answer) => {
                counts.total += 1;
                if parse_label(answer)? == NliLabel::Neutral {
                    counts.neutral += 1;
                }
            }
        }
    }
    if !missing.is_empty() {
        missing.sort();
        return Err(Error::MissingPrediction { model, ids: missing });
    }
    Ok(counts)
}

/// Percentage of premise/hypothesis pairs labeled neutral.
pub fn fraction_neutral(pairs: &[PairInstance], predictions: &[Prediction]) -> Result<BiasScore> {
    let construction = single_construction(pairs.iter().map(|p| p.construction_id.as_str()))?;
    let counts = neutral_counts(pairs, predictions)?;
    let model = single_model(predictions)?.unwrap_or_default();
    let value = Percent::of(counts.neutral, counts.total)?;
    Ok(BiasScore::new(
        model,
        construction,
        Metric::NeutralPct,
        value,
        counts.total,
    ))
}

/// The benchmark's own metric over a whole dataset.
pub fn score_dataset(dataset: &Dataset, predictions: &[Prediction]) -> Result<BiasScore> {
    match dataset {
        Dataset::Coref(instances) => mismatch_rate(instances, predictions),
        Dataset::Nli(pairs) => fraction_neutral(pairs, predictions),
    }
}

/// `baseline − alternate` for one model and metric.
pub fn score_delta(baseline: &BiasScore, alternate: &BiasScore) -> Result<MetricDelta> {
    if baseline.metric != alternate.metric {
        return Err(Error::invalid(format!(
            "cannot compare {} with {}",
            baseline.metric, alternate.metric
        )));
    }
    if baseline.model_id != alternate.model_id {
        return Err(Error::invalid(format!(
            "cannot compare model `{}` with model `{}`",
            baseline.model_id, alternate.model_id
        )));
    }
    Ok(MetricDelta {
        model_id: baseline.model_id.clone(),
        baseline: baseline.construction_id.clone(),
        alternate: alternate.construction_id.clone(),
        metric: baseline.metric,
        delta: baseline.value - alternate.value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_decimal_rendering() {
        assert_eq!(Percent::of(14, 240).unwrap().to_string(), "5.83");
        assert_eq!(Percent::of(3, 8).unwrap().to_string(), "37.50");
        assert_eq!(Percent::of(4481, 10000).unwrap().to_string(), "44.81");
        assert_eq!(Percent::of(1, 800).unwrap().to_string(), "0.13");
        assert_eq!(Percent::of(0, 5).unwrap().to_string(), "0.00");
        let neg: Percent = "-0.125".parse().unwrap();
        assert_eq!(neg.to_string(), "-0.13");
        assert!(Percent::of(1, 0).is_err());
    }

    #[test]
    fn parse_forms() {
        assert_eq!("44.81".parse::<Percent>().unwrap(), Percent::of(4481, 10000).unwrap());
        assert_eq!("7/2".parse::<Percent>().unwrap().to_string(), "3.50");
        assert!("4x".parse::<Percent>().is_err());
        assert!(".5".parse::<Percent>().is_err());
    }

    fn score(model: &str, metric: Metric, v: &str) -> BiasScore {
        BiasScore::new(model, "c", metric, v.parse().unwrap(), 1)
    }

    #[test]
    fn deltas() {
        let d = score_delta(
            &score("elmo", Metric::NeutralPct, "41.64"),
            &score("elmo", Metric::NeutralPct, "13.40"),
        )
        .unwrap();
        assert_eq!(d.delta.to_string(), "28.24");
        let d = score_delta(
            &score("rb", Metric::NeutralPct, "15.25"),
            &score("rb", Metric::NeutralPct, "30.26"),
        )
        .unwrap();
        assert_eq!(d.delta.to_string(), "-15.01");
        let d = score_delta(
            &score("x", Metric::NeutralPct, "12.5"),
            &score("x", Metric::NeutralPct, "12.5"),
        )
        .unwrap();
        assert_eq!(d.delta, Percent::ZERO);
        assert!(score_delta(
            &score("x", Metric::NeutralPct, "1"),
            &score("x", Metric::MfMismatchPct, "1")
        )
        .is_err());
    }

    #[test]
    fn label_parsing() {
        assert_eq!(parse_label(" NEUTRAL ").unwrap(), NliLabel::Neutral);
        assert!(parse_label("maybe").is_err());
    }
}
