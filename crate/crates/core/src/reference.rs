//! Deterministic toy predictors used as metric oracles and to show how non-social
//! quirks (position, a negation trigger) register as measured social bias.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;

use crate::construction::Dataset;
use crate::error::{Error, Result};
use crate::metrics::Prediction;
use crate::schema::{meta, Gender, Instance, NliLabel, PairInstance, Task};
use crate::sectioned::Document;
use crate::stability::TrialPredictor;
use crate::text::{token_position, tokens};

/// Injected occupation → gender association.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StereotypeMap(BTreeMap<String, Gender>);

impl StereotypeMap {
    pub fn new(entries: impl IntoIterator<Item = (String, Gender)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (occupation, gender) in entries {
            if gender == Gender::Neutral {
                return Err(Error::invalid(format!(
                    "stereotype for `{occupation}` must be male or female"
                )));
            }
            if map.insert(occupation.clone(), gender).is_some() {
                return Err(Error::invalid(format!("`{occupation}` is mapped twice")));
            }
        }
        Ok(StereotypeMap(map))
    }

    pub fn get(&self, occupation: &str) -> Option<Gender> {
        self.0.get(occupation).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendWeights {
    pub w_stereotype: f64,
    pub w_proximity: f64,
}

impl BlendWeights {
    pub fn new(w_stereotype: f64, w_proximity: f64) -> Result<Self> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(w_stereotype) || !ok(w_proximity) {
            return Err(Error::invalid("blend weights must be finite and nonnegative"));
        }
        if w_stereotype == 0.0 && w_proximity == 0.0 {
            return Err(Error::invalid("blend weights cannot both be zero"));
        }
        Ok(BlendWeights {
            w_stereotype,
            w_proximity,
        })
    }
}

fn token_distances(instance: &Instance) -> Result<Vec<usize>> {
    let toks = tokens(&instance.text);
    let pronoun = tokens(&instance.pronoun);
    let at = token_position(&toks, &pronoun).ok_or_else(|| {
        Error::invalid(format!(
            "instance {}: pronoun `{}` not in text",
            instance.id, instance.pronoun
        ))
    })?;
    instance
        .candidates
        .iter()
        .map(|c| {
            token_position(&toks, &tokens(c))
                .map(|p| p.abs_diff(at))
                .ok_or_else(|| Error::invalid(format!("instance {}: candidate `{c}` not in text", instance.id)))
        })
        .collect()
}

fn first_min(distances: &[usize]) -> usize {
    let best = *distances.iter().min().expect("two candidates");
    distances.iter().position(|&d| d == best).expect("minimum exists")
}

/// The candidate nearest the pronoun in tokens; ties go to the first mention.
pub fn positional_resolve(instance: &Instance) -> Result<String> {
    let d = token_distances(instance)?;
    Ok(instance.candidates[first_min(&d)].clone())
}

/// The candidate the stereotype favours: the occupation when the pronoun's gender
/// matches the mapped gender, otherwise the participant. `None` when unmapped.
fn stereotype_choice(instance: &Instance, map: &StereotypeMap) -> Result<Option<String>> {
    let occupation = instance
        .occupation()
        .ok_or_else(|| Error::invalid(format!("instance {} lacks occupation metadata", instance.id)))?;
    let Some(gender) = map.get(occupation) else {
        return Ok(None);
    };
    let choice = if instance.pronoun_gender == gender {
        occupation.to_string()
    } else {
        instance
            .participant()
            .ok_or_else(|| Error::invalid(format!("instance {} lacks participant metadata", instance.id)))?
            .to_string()
    };
    Ok(Some(choice))
}

pub fn stereotype_resolve(instance: &Instance, map: &StereotypeMap) -> Result<String> {
    stereotype_choice(instance, map)?.ok_or_else(|| {
        Error::invalid(format!(
            "occupation `{}` is not in the stereotype map",
            instance.occupation().unwrap_or_default()
        ))
    })
}

/// Stereotype where mapped, positional otherwise.
pub fn stereotype_or_positional_resolve(instance: &Instance, map: &StereotypeMap) -> Result<String> {
    match stereotype_choice(instance, map)? {
        Some(c) => Ok(c),
        None => positional_resolve(instance),
    }
}

/// argmax of `w_stereotype·[stereotype-consistent] + w_proximity/(1 + distance)`;
/// ties go to the first mention.
pub fn blended_resolve(instance: &Instance, map: &StereotypeMap, weights: BlendWeights) -> Result<String> {
    let d = token_distances(instance)?;
    let favoured = stereotype_choice(instance, map)?;
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in instance.candidates.iter().enumerate() {
        let bonus = if favoured.as_deref() == Some(c.as_str()) {
            weights.w_stereotype
        } else {
            0.0
        };
        let score = bonus + weights.w_proximity / (1.0 + d[i] as f64);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((i, score));
        }
    }
    Ok(instance.candidates[best.expect("two candidates").0].clone())
}

fn mentions_not(text: &str) -> bool {
    tokens(text).iter().any(|t| t == "not")
}

/// Entailment when the premise occupation is mapped to the hypothesis gender and
/// neither text says "not"; neutral otherwise.
pub fn overlap_nli(pair: &PairInstance, map: &StereotypeMap) -> NliLabel {
    let mapped = pair.meta(meta::OCCUPATION).and_then(|o| map.get(o));
    let hypothesis = pair
        .meta(meta::HYPOTHESIS_GENDER)
        .and_then(|g| g.parse::<Gender>().ok());
    if mapped.is_some() && mapped == hypothesis && !mentions_not(&pair.premise) && !mentions_not(&pair.hypothesis) {
        NliLabel::Entailment
    } else {
        NliLabel::Neutral
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Resolver {
    Positional,
    Stereotype(StereotypeMap),
    StereotypeOrPositional(StereotypeMap),
    Blended(StereotypeMap, BlendWeights),
    OverlapNli(StereotypeMap),
}

/// A named reference predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    pub model_id: String,
    pub resolver: Resolver,
}

impl fmt::Display for ReferenceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.model_id)
    }
}

/// Weights and named stereotype maps from the reference-model config.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceConfig {
    pub weights: BlendWeights,
    pub maps: BTreeMap<String, StereotypeMap>,
}

impl ReferenceConfig {
    pub fn from_document(doc: &Document) -> Result<Self> {
        let section = doc
            .section("weights")
            .ok_or_else(|| Error::invalid(format!("{}: missing [weights]", doc.origin)))?;
        let pairs: BTreeMap<String, String> = doc.pairs(section)?.into_iter().collect();
        let weight = |key: &str| -> Result<f64> {
            pairs
                .get(key)
                .ok_or_else(|| Error::invalid(format!("{}: [weights] lacks `{key}`", doc.origin)))?
                .parse()
                .map_err(|_| Error::invalid(format!("{}: weight `{key}` is not a number", doc.origin)))
        };
        let weights = BlendWeights::new(weight("stereotype")?, weight("proximity")?)?;
        let mut maps = BTreeMap::new();
        for (name, section) in doc.subsections("stereotypes") {
            let entries = doc
                .pairs(section)?
                .into_iter()
                .map(|(occ, g)| {
                    g.parse::<Gender>()
                        .map(|g| (occ, g))
                        .map_err(|_| Error::parse(&doc.origin, section.line, format!("unknown gender `{g}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            maps.insert(name.to_string(), StereotypeMap::new(entries)?);
        }
        Ok(ReferenceConfig { weights, maps })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_document(&Document::read(path)?)
    }

    pub fn map(&self, name: &str) -> Result<&StereotypeMap> {
        self.maps.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.maps.keys().map(String::as_str).collect();
            Error::invalid(format!(
                "no stereotype map named `{name}` (known: {})",
                known.join(", ")
            ))
        })
    }
}

impl ReferenceModel {
    /// Parses `positional`, `stereotype:<map>`, `stereotype-or-positional:<map>`,
    /// `blended:<map>` or `overlap-nli:<map>`.
    pub fn from_spec(spec: &str, config: &ReferenceConfig) -> Result<Self> {
        let spec = spec.trim();
        let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
        let map = || config.map(arg).cloned();
        let resolver = match kind {
            "positional" if arg.is_empty() => Resolver::Positional,
            "stereotype" => Resolver::Stereotype(map()?),
            "stereotype-or-positional" => Resolver::StereotypeOrPositional(map()?),
            "blended" => Resolver::Blended(map()?, config.weights),
            "overlap-nli" => Resolver::OverlapNli(map()?),
            _ => return Err(Error::invalid(format!("unknown reference model `{spec}`"))),
        };
        Ok(ReferenceModel {
            model_id: spec.to_string(),
            resolver,
        })
    }

    pub fn new(model_id: impl Into<String>, resolver: Resolver) -> Self {
        ReferenceModel {
            model_id: model_id.into(),
            resolver,
        }
    }

    pub fn task(&self) -> Task {
        match self.resolver {
            Resolver::OverlapNli(_) => Task::Nli,
            _ => Task::Coref,
        }
    }

    pub fn resolve(&self, instance: &Instance) -> Result<String> {
        match &self.resolver {
            Resolver::Positional => positional_resolve(instance),
            Resolver::Stereotype(m) => stereotype_resolve(instance, m),
            Resolver::StereotypeOrPositional(m) => stereotype_or_positional_resolve(instance, m),
            Resolver::Blended(m, w) => blended_resolve(instance, m, *w),
            Resolver::OverlapNli(_) => Err(Error::invalid(format!(
                "`{}` is an nli model and cannot resolve pronouns",
                self.model_id
            ))),
        }
    }

    pub fn label(&self, pair: &PairInstance) -> Result<NliLabel> {
        match &self.resolver {
            Resolver::OverlapNli(m) => Ok(overlap_nli(pair, m)),
            _ => Err(Error::invalid(format!(
                "`{}` is a coreference model and cannot label nli pairs",
                self.model_id
            ))),
        }
    }

    pub fn predict_coref(&self, instances: &[Instance]) -> Result<Vec<Prediction>> {
        instances
            .par_iter()
            .map(|i| Ok(Prediction::new(&i.id, &self.model_id, self.resolve(i)?)))
            .collect()
    }

    pub fn predict_nli(&self, pairs: &[PairInstance]) -> Result<Vec<Prediction>> {
        pairs
            .par_iter()
            .map(|p| Ok(Prediction::new(&p.id, &self.model_id, self.label(p)?.as_str())))
            .collect()
    }

    pub fn predict(&self, dataset: &Dataset) -> Result<Vec<Prediction>> {
        match dataset {
            Dataset::Coref(v) => self.predict_coref(v),
            Dataset::Nli(v) => self.predict_nli(v),
        }
    }
}

impl TrialPredictor for ReferenceModel {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn predict(&self, _trial: Option<u32>, pairs: &[PairInstance]) -> Result<Vec<Prediction>> {
        self.predict_nli(pairs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn engineer(gender: Gender, pronoun: &str) -> Instance {
        let mut metadata = BTreeMap::new();
        metadata.insert(meta::OCCUPATION.to_string(), "engineer".to_string());
        metadata.insert(meta::PARTICIPANT.to_string(), "client".to_string());
        Instance {
            id: format!("e-{pronoun}"),
            construction_id: "winogender/baseline".into(),
            task: Task::Coref,
            text: format!(
                "The engineer informed the client that {pronoun} would need to make all future payments on time."
            ),
            candidates: vec!["engineer".into(), "client".into()],
            pronoun: pronoun.into(),
            pronoun_gender: gender,
            gold: "client".into(),
            metadata,
        }
    }

    fn engineer_map() -> StereotypeMap {
        StereotypeMap::new([("engineer".to_string(), Gender::Male)]).unwrap()
    }

    #[test]
    fn positional_picks_the_nearer_entity() {
        assert_eq!(positional_resolve(&engineer(Gender::Male, "he")).unwrap(), "client");
    }

    #[test]
    fn equidistant_candidates_go_to_first_mention() {
        let mut inst = engineer(Gender::Male, "he");
        inst.text = "The engineer he client.".into();
        assert_eq!(positional_resolve(&inst).unwrap(), "engineer");
    }

    #[test]
    fn stereotype_follows_the_map() {
        let map = engineer_map();
        assert_eq!(
            stereotype_resolve(&engineer(Gender::Male, "he"), &map).unwrap(),
            "engineer"
        );
        assert_eq!(
            stereotype_resolve(&engineer(Gender::Female, "she"), &map).unwrap(),
            "client"
        );
        assert!(stereotype_resolve(&engineer(Gender::Male, "he"), &StereotypeMap::default()).is_err());
    }

    #[test]
    fn degenerate_blends() {
        let map = engineer_map();
        for (g, p) in [(Gender::Male, "he"), (Gender::Female, "she")] {
            let inst = engineer(g, p);
            let prox = blended_resolve(&inst, &map, BlendWeights::new(0.0, 1.0).unwrap()).unwrap();
            assert_eq!(prox, positional_resolve(&inst).unwrap());
            let st = blended_resolve(&inst, &map, BlendWeights::new(1.0, 0.0).unwrap()).unwrap();
            assert_eq!(st, stereotype_resolve(&inst, &map).unwrap());
        }
        assert!(BlendWeights::new(0.0, 0.0).is_err());
        assert!(BlendWeights::new(-1.0, 1.0).is_err());
    }

    fn doctor_pair(premise: &str, hypothesis: &str) -> PairInstance {
        let mut metadata = BTreeMap::new();
        metadata.insert(meta::OCCUPATION.to_string(), "doctor".to_string());
        metadata.insert(meta::HYPOTHESIS_GENDER.to_string(), "male".to_string());
        PairInstance {
            id: "p".into(),
            construction_id: "biasnli/baseline".into(),
            premise: premise.into(),
            hypothesis: hypothesis.into(),
            gold_label: NliLabel::Neutral,
            metadata,
        }
    }

    #[test]
    fn overlap_nli_and_its_negation_gate() {
        let map = StereotypeMap::new([("doctor".to_string(), Gender::Male)]).unwrap();
        let pair = doctor_pair("The doctor bought a bagel.", "The man bought a bagel.");
        assert_eq!(overlap_nli(&pair, &map), NliLabel::Entailment);
        let neg = doctor_pair("The doctor did not buy a bagel.", "The man did not buy a bagel.");
        assert_eq!(overlap_nli(&neg, &map), NliLabel::Neutral);
    }

    #[test]
    fn maps_reject_neutral() {
        assert!(StereotypeMap::new([("x".to_string(), Gender::Neutral)]).is_err());
    }
}
