//! Rankings, rank inversions and subsampling-trial distributions.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construction::{biasnli_pairs, Benchmark, ConstructionDescriptor, Proportion};
use crate::error::{Error, Result};
use crate::metrics::{fraction_neutral, BiasScore, Metric, Percent, Prediction};
use crate::perturb::subsample_lexicon;
use crate::schema::{Lexicon, PairInstance, Template};

/// Proportions sampled by default.
pub const DEFAULT_PROPORTIONS: [&str; 3] = ["0.1", "0.25", "0.5"];
pub const DEFAULT_TRIALS: u32 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankEntry {
    pub model_id: String,
    pub score: Percent,
    /// Score on the larger-is-more-biased scale.
    pub bias: Percent,
    pub rank: usize,
}

/// Models ordered least biased first. Tied models share the lowest rank and are listed by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking {
    pub construction_id: String,
    pub metric: Metric,
    pub entries: Vec<RankEntry>,
}

impl Ranking {
    pub fn models(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.model_id.as_str()).collect()
    }

    pub fn bias_of(&self, model: &str) -> Option<Percent> {
        self.entries.iter().find(|e| e.model_id == model).map(|e| e.bias)
    }
}

pub fn rank_models(scores: &[BiasScore]) -> Result<Ranking> {
    let first = scores.first().ok_or_else(|| Error::invalid("nothing to rank"))?;
    let mut seen = BTreeSet::new();
    for s in scores {
        if s.metric != first.metric {
            return Err(Error::invalid(format!(
                "cannot rank {} together with {}",
                first.metric, s.metric
            )));
        }
        if s.construction_id != first.construction_id {
            return Err(Error::invalid(format!(
                "cannot rank scores from `{}` together with `{}`",
                first.construction_id, s.construction_id
            )));
        }
        if !seen.insert(s.model_id.as_str()) {
            return Err(Error::invalid(format!("model `{}` is scored twice", s.model_id)));
        }
    }
    let mut entries: Vec<RankEntry> = scores
        .iter()
        .map(|s| RankEntry {
            model_id: s.model_id.clone(),
            score: s.value,
            bias: s.bias(),
            rank: 0,
        })
        .collect();
    entries.sort_by(|a, b| a.bias.cmp(&b.bias).then_with(|| a.model_id.cmp(&b.model_id)));
    for i in 0..entries.len() {
        entries[i].rank = if i > 0 && entries[i].bias == entries[i - 1].bias {
            entries[i - 1].rank
        } else {
            i + 1
        };
    }
    Ok(Ranking {
        construction_id: first.construction_id.clone(),
        metric: first.metric,
        entries,
    })
}

/// Model pairs whose relative order strictly flips between two rankings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inversions {
    pub baseline: String,
    pub alternate: String,
    /// Each pair listed with the smaller model id first.
    pub pairs: BTreeSet<(String, String)>,
}

impl Inversions {
    /// Kendall distance: the number of discordant pairs.
    pub fn distance(&self) -> usize {
        self.pairs.len()
    }

    pub fn contains(&self, a: &str, b: &str) -> bool {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.pairs.iter().any(|(x, y)| (x.as_str(), y.as_str()) == key)
    }
}

pub fn rank_inversions(a: &Ranking, b: &Ranking) -> Result<Inversions> {
    let models_a: BTreeSet<&str> = a.models().into_iter().collect();
    let models_b: BTreeSet<&str> = b.models().into_iter().collect();
    if models_a != models_b {
        let diff: Vec<&str> = models_a.symmetric_difference(&models_b).copied().collect();
        return Err(Error::invalid(format!(
            "rankings `{}` and `{}` cover different models: {}",
            a.construction_id,
            b.construction_id,
            diff.join(", ")
        )));
    }
    let models: Vec<&str> = models_a.into_iter().collect();
    let mut pairs = BTreeSet::new();
    for (i, x) in models.iter().enumerate() {
        for y in &models[i + 1..] {
            let oa = a.bias_of(x).cmp(&a.bias_of(y));
            let ob = b.bias_of(x).cmp(&b.bias_of(y));
            if oa != Ordering::Equal && ob != Ordering::Equal && oa != ob {
                pairs.insert((x.to_string(), y.to_string()));
            }
        }
    }
    Ok(Inversions {
        baseline: a.construction_id.clone(),
        alternate: b.construction_id.clone(),
        pairs,
    })
}

/// Descriptive statistics over trial scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); 0 for a single trial.
    pub std_dev: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Inclusive quantile: linear interpolation at position `(n − 1)·p` of the sorted values.
pub fn quantile_inclusive(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("summary of no values"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std_dev = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(Summary {
            mean,
            std_dev,
            min: sorted[0],
            q1: quantile_inclusive(&sorted, 0.25),
            median: quantile_inclusive(&sorted, 0.5),
            q3: quantile_inclusive(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        })
    }
}

/// One model's scores across paired subsampling trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDistribution {
    pub model_id: String,
    pub metric: Metric,
    pub proportion: Proportion,
    pub base_seed: u64,
    /// Trial indices, ascending.
    pub trials: Vec<u32>,
    /// Derived per-trial seeds, aligned with `trials`.
    pub seeds: Vec<u64>,
    pub scores: Vec<Percent>,
    /// Score on the full (unsampled) dataset.
    pub full_score: Percent,
    pub summary: Summary,
}

impl TrialDistribution {
    pub fn new(
        model_id: &str,
        metric: Metric,
        proportion: Proportion,
        base_seed: u64,
        trials: Vec<u32>,
        scores: Vec<Percent>,
        full_score: Percent,
    ) -> Result<Self> {
        if trials.len() != scores.len() {
            return Err(Error::invalid("one score per trial is required"));
        }
        let seeds = trials.iter().map(|&t| crate::hash::trial_seed(base_seed, t)).collect();
        let values: Vec<f64> = scores.iter().map(Percent::as_f64).collect();
        Ok(TrialDistribution {
            model_id: model_id.to_string(),
            metric,
            proportion,
            base_seed,
            summary: Summary::of(&values)?,
            trials,
            seeds,
            scores,
            full_score,
        })
    }
}

/// A source of predictions for the full dataset (`trial = None`) and for each trial.
pub trait TrialPredictor: Sync {
    fn model_id(&self) -> &str;
    fn predict(&self, trial: Option<u32>, pairs: &[PairInstance]) -> Result<Vec<Prediction>>;
}

/// Predictions ingested from files, keyed by trial index.
#[derive(Debug, Clone, Default)]
pub struct RecordedPredictions {
    pub model_id: String,
    pub full: Option<Vec<Prediction>>,
    pub by_trial: BTreeMap<u32, Vec<Prediction>>,
}

impl TrialPredictor for RecordedPredictions {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn predict(&self, trial: Option<u32>, _pairs: &[PairInstance]) -> Result<Vec<Prediction>> {
        let found = match trial {
            None => self.full.as_ref(),
            Some(t) => self.by_trial.get(&t),
        };
        found.cloned().ok_or_else(|| Error::MissingTrial {
            model: self.model_id.clone(),
            trial: trial.map_or_else(|| "full".to_string(), |t| t.to_string()),
        })
    }
}

/// Paired subsampling trials for several models: trial `t` builds one dataset from
/// the occupations kept under the derived seed, and every model is scored on it.
/// Trials run in parallel; results are ordered by trial index.
pub fn subsampling_distributions(
    templates: &[Template],
    lexicon: &Lexicon,
    predictors: &[&dyn TrialPredictor],
    proportion: Proportion,
    trials: u32,
    base_seed: u64,
) -> Result<Vec<TrialDistribution>> {
    if trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    let baseline = ConstructionDescriptor::baseline(Benchmark::Biasnli);
    let full_pairs: Vec<PairInstance> = biasnli_pairs(templates, lexicon, &baseline)?.collect::<Result<_>>()?;
    let full: Vec<Percent> = predictors
        .iter()
        .map(|p| Ok(fraction_neutral(&full_pairs, &p.predict(None, &full_pairs)?)?.value))
        .collect::<Result<_>>()?;
    drop(full_pairs);

    let per_trial: Vec<Vec<Percent>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let descriptor = ConstructionDescriptor::subsample(proportion, base_seed, t);
            let seed = descriptor.sampling_seed().expect("subsample descriptors carry a seed");
            let sampled = subsample_lexicon(lexicon, proportion, seed)?;
            let pairs: Vec<PairInstance> = biasnli_pairs(templates, &sampled, &descriptor)?.collect::<Result<_>>()?;
            predictors
                .iter()
                .map(|p| Ok(fraction_neutral(&pairs, &p.predict(Some(t), &pairs)?)?.value))
                .collect()
        })
        .collect::<Result<_>>()?;

    predictors
        .iter()
        .enumerate()
        .map(|(m, p)| {
            TrialDistribution::new(
                p.model_id(),
                Metric::NeutralPct,
                proportion,
                base_seed,
                (0..trials).collect(),
                per_trial.iter().map(|row| row[m]).collect(),
                full[m],
            )
        })
        .collect()
}

/// Single-model form of [`subsampling_distributions`].
pub fn subsampling_distribution(
    templates: &[Template],
    lexicon: &Lexicon,
    predictor: &dyn TrialPredictor,
    proportion: Proportion,
    trials: u32,
    base_seed: u64,
) -> Result<TrialDistribution> {
    let mut out = subsampling_distributions(templates, lexicon, &[predictor], proportion, trials, base_seed)?;
    Ok(out.remove(0))
}

/// Fraction of paired trials in which the two models are ordered differently from
/// their full-dataset order. A tied trial counts as following the full-dataset order.
pub fn distribution_overlap(a: &TrialDistribution, b: &TrialDistribution) -> Result<f64> {
    if a.trials != b.trials || a.seeds != b.seeds || a.proportion != b.proportion {
        return Err(Error::invalid(format!(
            "distributions for `{}` and `{}` are not paired trial-for-trial",
            a.model_id, b.model_id
        )));
    }
    if a.metric != b.metric {
        return Err(Error::invalid("distributions use different metrics"));
    }
    let reference = a.full_score.cmp(&b.full_score);
    let differing = a
        .scores
        .iter()
        .zip(&b.scores)
        .filter(|(x, y)| {
            let o = x.cmp(y);
            o != Ordering::Equal && o != reference
        })
        .count();
    Ok(differing as f64 / a.scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(model: &str, v: &str) -> BiasScore {
        BiasScore::new(model, "c", Metric::MfMismatchPct, v.parse().unwrap(), 1)
    }

    #[test]
    fn tie_rule_shares_minimum_rank() {
        let r = rank_models(&[s("a", "3"), s("b", "3"), s("c", "5")]).unwrap();
        let ranks: Vec<usize> = r.entries.iter().map(|e| e.rank).collect();
        assert_eq!(ranks, [1, 1, 3]);
        let one = rank_models(&[s("only", "7")]).unwrap();
        assert_eq!(one.entries[0].rank, 1);
    }

    #[test]
    fn mixed_metrics_are_rejected() {
        let mut other = s("b", "1");
        other.metric = Metric::NeutralPct;
        assert!(rank_models(&[s("a", "1"), other]).is_err());
    }

    #[test]
    fn reversed_ranking_inverts_every_pair() {
        let a = rank_models(&[s("A", "1"), s("B", "2"), s("C", "3")]).unwrap();
        let b = rank_models(&[s("A", "3"), s("B", "2"), s("C", "1")]).unwrap();
        assert_eq!(rank_inversions(&a, &b).unwrap().distance(), 3);
        assert_eq!(rank_inversions(&a, &a).unwrap().distance(), 0);
        let missing = rank_models(&[s("A", "1"), s("B", "2")]).unwrap();
        assert!(rank_inversions(&a, &missing).is_err());
    }

    #[test]
    fn inclusive_quartiles() {
        let sm = Summary::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((sm.q1, sm.median, sm.q3), (1.75, 2.5, 3.25));
        assert!((sm.std_dev - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(Summary::of(&[4.0]).unwrap().std_dev, 0.0);
    }

    fn dist(model: &str, scores: &[i64], full: i64) -> TrialDistribution {
        TrialDistribution::new(
            model,
            Metric::NeutralPct,
            "0.5".parse().unwrap(),
            1,
            (0..scores.len() as u32).collect(),
            scores.iter().map(|&v| Percent::of(v as u64, 100).unwrap()).collect(),
            Percent::of(full as u64, 100).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn overlap_cases() {
        let hi = dist("hi", &[60, 70, 80], 70);
        let lo = dist("lo", &[10, 20, 30], 20);
        assert_eq!(distribution_overlap(&hi, &lo).unwrap(), 0.0);
        assert_eq!(distribution_overlap(&hi, &hi.clone()).unwrap(), 0.0);
        let crossing = dist("x", &[65, 10, 90], 20);
        assert!((distribution_overlap(&hi, &crossing).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let short = dist("s", &[1, 2], 1);
        assert!(distribution_overlap(&hi, &short).is_err());
    }
}
