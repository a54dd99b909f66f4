//! Meaning-preserving alternate-construction operators.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::construction::{rekey, ConstructionDescriptor, Operator, Proportion};
use crate::error::{Error, Result};
use crate::hash::seeded_word_hash;
use crate::schema::{meta, Instance, Lexicon, PairInstance, Template, TemplateKind};
use crate::sectioned::Document;
use crate::text::{capitalize, find_unique_word, find_word, tokens};

/// Words that carry the identity a benchmark measures; operators must never rewrite them.
pub const IDENTITY_WORDS: &[&str] = &[
    "he",
    "him",
    "his",
    "himself",
    "she",
    "her",
    "hers",
    "herself",
    "they",
    "them",
    "their",
    "theirs",
    "themselves",
    "man",
    "men",
    "woman",
    "women",
    "gentleman",
    "gentlemen",
    "lady",
    "ladies",
    "someone",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Occupation,
    Participant,
    Subject,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Occupation => "occupation",
            Target::Participant => "participant",
            Target::Subject => "subject",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjectiveMode {
    /// `good doctor`
    PreModifier,
    /// `doctor who was good`
    RelativeClause,
}

/// Synonym substitutions keyed by template id, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymTable(pub BTreeMap<String, Vec<(String, String)>>);

impl SynonymTable {
    /// Parses `template_id \t span \t replacement` rows; `#` lines are comments.
    pub fn parse(origin: &str, input: &str) -> Result<Self> {
        let mut table: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [id, span, replacement] = cols.as_slice() else {
                return Err(Error::parse(
                    origin,
                    i + 1,
                    format!("expected 3 tab-separated columns, found {}", cols.len()),
                ));
            };
            let (id, span, replacement) = (id.trim(), span.trim(), replacement.trim());
            if id.is_empty() || span.is_empty() || replacement.is_empty() {
                return Err(Error::parse(origin, i + 1, "empty synonym column"));
            }
            if let Some(word) = identity_word_in(span).or_else(|| identity_word_in(replacement)) {
                return Err(Error::parse(
                    origin,
                    i + 1,
                    format!("synonym for `{id}` touches identity word `{word}`"),
                ));
            }
            table
                .entry(id.to_string())
                .or_default()
                .push((span.to_string(), replacement.to_string()));
        }
        Ok(SynonymTable(table))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let input = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&path.display().to_string(), &input)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, template_id: &str) -> &[(String, String)] {
        self.0.get(template_id).map_or(&[], Vec::as_slice)
    }

    /// Every key names a template, every span occurs verbatim in it and avoids its entity words.
    pub fn validate_against(&self, templates: &[Template]) -> Result<()> {
        let by_id: BTreeMap<&str, &Template> = templates.iter().map(|t| (t.id.as_str(), t)).collect();
        for (id, entries) in &self.0 {
            let template = by_id
                .get(id.as_str())
                .ok_or_else(|| Error::invalid(format!("synonym table names unknown template `{id}`")))?;
            for (span, replacement) in entries {
                if !template.text.contains(span.as_str()) || span.contains('$') {
                    return Err(Error::invalid(format!(
                        "synonym span `{span}` does not occur verbatim in template `{id}`"
                    )));
                }
                if let TemplateKind::Coref {
                    occupation,
                    participant,
                    ..
                } = &template.kind
                {
                    for word in [occupation, participant] {
                        if !find_word(span, word).is_empty() || !find_word(replacement, word).is_empty() {
                            return Err(Error::invalid(format!(
                                "synonym for `{id}` touches entity word `{word}`"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn identity_word_in(text: &str) -> Option<&'static str> {
    let toks = tokens(text);
    IDENTITY_WORDS.iter().copied().find(|w| toks.iter().any(|t| t == w))
}

/// Pools and tables for every operator, as loaded from config.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PerturbationResources {
    pub adjective_pool: Vec<String>,
    pub clause_pool: Vec<String>,
    pub synonym_table: SynonymTable,
    pub verb_negation_table: BTreeMap<String, String>,
}

impl PerturbationResources {
    /// Reads `[adjectives]`, `[clauses]` and `[negations]` from a sectioned config.
    pub fn from_document(doc: &Document) -> Result<Self> {
        let mut res = PerturbationResources::default();
        for section in &doc.sections {
            match section.name.as_str() {
                "adjectives" => res.adjective_pool = doc.words(section)?,
                "clauses" => res.clause_pool = doc.words(section)?,
                "negations" => res.verb_negation_table = doc.pairs(section)?.into_iter().collect(),
                other => {
                    return Err(Error::parse(
                        &doc.origin,
                        section.line,
                        format!("unknown perturbation section [{other}]"),
                    ))
                }
            }
        }
        Ok(res)
    }

    pub fn load(config: &Path, synonyms: Option<&Path>) -> Result<Self> {
        let mut res = Self::from_document(&Document::read(config)?)?;
        if let Some(path) = synonyms {
            res.synonym_table = SynonymTable::load(path)?;
        }
        Ok(res)
    }

    /// The spec for one operator, checking the pools it references are non-empty.
    pub fn spec_for(&self, operator: Operator) -> Result<PerturbationSpec> {
        use Operator::*;
        let target = match operator {
            ClauseOccupation | AdjPreOccupation | AdjPostOccupation => Some(Target::Occupation),
            ClauseParticipant | AdjPreParticipant | AdjPostParticipant => Some(Target::Participant),
            Clauses => Some(Target::Subject),
            _ => None,
        };
        let mode = match operator {
            AdjPreOccupation | AdjPreParticipant => Some(AdjectiveMode::PreModifier),
            AdjPostOccupation | AdjPostParticipant => Some(AdjectiveMode::RelativeClause),
            _ => None,
        };
        let needs = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "operator `{operator}` needs a non-empty {what}"
                )))
            }
        };
        match operator {
            ClauseOccupation | ClauseParticipant | Clauses => needs(!self.clause_pool.is_empty(), "clause pool")?,
            AdjPreOccupation | AdjPostOccupation | AdjPreParticipant | AdjPostParticipant => {
                needs(!self.adjective_pool.is_empty(), "adjective pool")?
            }
            Negation => needs(!self.verb_negation_table.is_empty(), "verb negation table")?,
            _ => {}
        }
        Ok(PerturbationSpec {
            operator,
            clause_pool: self.clause_pool.clone(),
            adjective_pool: self.adjective_pool.clone(),
            synonym_table: self.synonym_table.clone(),
            verb_negation_table: self.verb_negation_table.clone(),
            target,
            mode,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbationSpec {
    pub operator: Operator,
    pub clause_pool: Vec<String>,
    pub adjective_pool: Vec<String>,
    pub synonym_table: SynonymTable,
    pub verb_negation_table: BTreeMap<String, String>,
    pub target: Option<Target>,
    pub mode: Option<AdjectiveMode>,
}

/// Inserts `, clause,` after the single whole-word occurrence of `word`
/// (just `, clause` when punctuation already follows).
pub fn insert_clause_text(text: &str, word: &str, clause: &str) -> Result<String> {
    let clause = clause.trim();
    if clause.is_empty() {
        return Err(Error::invalid("clause is empty"));
    }
    let at = find_unique_word(text, word).map_err(Error::Invalid)?;
    let end = at + word.len();
    let rest = &text[end..];
    let insertion = if rest.starts_with(['.', ',', ';', ':', '!', '?']) {
        format!(", {clause}")
    } else {
        format!(", {clause},")
    };
    Ok(format!("{}{insertion}{rest}", &text[..end]))
}

/// Adds `adjective` to the single whole-word occurrence of `word`.
pub fn insert_adjective_text(text: &str, word: &str, adjective: &str, mode: AdjectiveMode) -> Result<String> {
    let adjective = adjective.trim();
    if adjective.is_empty() {
        return Err(Error::invalid("adjective is empty"));
    }
    let at = find_unique_word(text, word).map_err(Error::Invalid)?;
    let end = at + word.len();
    match mode {
        // Indefinite pronouns take postposed adjectives: "someone arrogant".
        AdjectiveMode::PreModifier if word.eq_ignore_ascii_case("someone") => {
            Ok(format!("{} {adjective}{}", &text[..end], &text[end..]))
        }
        AdjectiveMode::PreModifier => {
            let mut out = format!("{}{adjective} {}", &text[..at], &text[at..]);
            crate::construction::repair_article_before(&mut out, at, adjective);
            Ok(out)
        }
        AdjectiveMode::RelativeClause => Ok(format!("{} who was {adjective}{}", &text[..end], &text[end..])),
    }
}

fn coref_target_word(instance: &Instance, target: Target) -> Result<&str> {
    let key = match target {
        Target::Occupation => meta::OCCUPATION,
        Target::Participant => meta::PARTICIPANT,
        Target::Subject => {
            return Err(Error::invalid(format!(
                "instance {}: coref items have no subject target",
                instance.id
            )))
        }
    };
    instance
        .meta(key)
        .ok_or_else(|| Error::invalid(format!("instance {} lacks `{key}` metadata", instance.id)))
}

/// Clause insertion after a coref entity.
pub fn insert_clause(instance: &Instance, clause: &str, target: Target) -> Result<Instance> {
    let word = coref_target_word(instance, target)?;
    let mut out = instance.clone();
    out.text = insert_clause_text(&instance.text, word, clause)
        .map_err(|e| Error::invalid(format!("instance {}: {e}", instance.id)))?;
    out.metadata.insert(meta::CLAUSE.to_string(), clause.trim().to_string());
    Ok(out)
}

/// Clause insertion after the subject of both premise and hypothesis.
pub fn insert_clause_pair(pair: &PairInstance, clause: &str) -> Result<PairInstance> {
    let (occupation, noun) = pair_subjects(pair)?;
    let wrap = |e: Error| Error::invalid(format!("pair {}: {e}", pair.id));
    let mut out = pair.clone();
    out.premise = insert_clause_text(&pair.premise, occupation, clause).map_err(wrap)?;
    out.hypothesis = insert_clause_text(&pair.hypothesis, noun, clause).map_err(wrap)?;
    out.metadata.insert(meta::CLAUSE.to_string(), clause.trim().to_string());
    Ok(out)
}

fn pair_subjects(pair: &PairInstance) -> Result<(&str, &str)> {
    let get = |key: &str| {
        pair.meta(key)
            .ok_or_else(|| Error::invalid(format!("pair {} lacks `{key}` metadata", pair.id)))
    };
    Ok((get(meta::OCCUPATION)?, get(meta::HYPOTHESIS_NOUN)?))
}

pub fn insert_adjective(instance: &Instance, adjective: &str, target: Target, mode: AdjectiveMode) -> Result<Instance> {
    let word = coref_target_word(instance, target)?;
    let mut out = instance.clone();
    out.text = insert_adjective_text(&instance.text, word, adjective, mode)
        .map_err(|e| Error::invalid(format!("instance {}: {e}", instance.id)))?;
    out.metadata
        .insert(meta::ADJECTIVE.to_string(), adjective.trim().to_string());
    Ok(out)
}

/// Applies every table entry for the instance's template; no entries is the identity.
pub fn substitute_synonyms(instance: &Instance, table: &SynonymTable) -> Result<Instance> {
    let template_id = instance.meta(meta::TEMPLATE_ID).unwrap_or_default();
    let entries = table.get(template_id);
    let mut out = instance.clone();
    let protected: Vec<&str> = [
        instance.occupation(),
        instance.participant(),
        Some(instance.pronoun.as_str()),
    ]
    .into_iter()
    .flatten()
    .collect();
    for (span, replacement) in entries {
        for word in &protected {
            if !find_word(span, word).is_empty() || !find_word(replacement, word).is_empty() {
                return Err(Error::invalid(format!(
                    "instance {}: synonym `{span}` → `{replacement}` touches `{word}`",
                    instance.id
                )));
            }
        }
        let at =
            find_unique_word(&out.text, span).map_err(|e| Error::invalid(format!("instance {}: {e}", instance.id)))?;
        let replacement = if out.text[at..].starts_with(|c: char| c.is_uppercase()) {
            capitalize(replacement)
        } else {
            replacement.clone()
        };
        out.text.replace_range(at..at + span.len(), &replacement);
    }
    if !entries.is_empty() {
        out.metadata
            .insert(meta::SYNONYMS.to_string(), entries.len().to_string());
    }
    Ok(out)
}

fn is_negated(text: &str) -> bool {
    text.split_whitespace().any(|raw| {
        let t = raw
            .trim_matches(|c: char| !c.is_alphanumeric() && c != '\'')
            .to_lowercase();
        t == "not" || t.ends_with("n't")
    })
}

/// Rewrites the template verb as `did not <lemma>` in both texts.
pub fn negate_verb(pair: &PairInstance, table: &BTreeMap<String, String>) -> Result<PairInstance> {
    if is_negated(&pair.premise) || is_negated(&pair.hypothesis) {
        return Err(Error::invalid(format!(
            "pair {} is already negated; double negation is unsupported",
            pair.id
        )));
    }
    let verb = pair
        .meta(meta::VERB)
        .ok_or_else(|| Error::invalid(format!("pair {} lacks `verb` metadata", pair.id)))?;
    let lemma = table
        .get(verb)
        .ok_or_else(|| Error::invalid(format!("verb `{verb}` is not in the negation table")))?;
    let negate = |text: &str| -> Result<String> {
        let at = find_unique_word(text, verb).map_err(|e| Error::invalid(format!("pair {}: {e}", pair.id)))?;
        Ok(format!("{}did not {lemma}{}", &text[..at], &text[at + verb.len()..]))
    };
    let mut out = pair.clone();
    out.premise = negate(&pair.premise)?;
    out.hypothesis = negate(&pair.hypothesis)?;
    Ok(out)
}

/// Keeps the `round_half_up(p·n)` occupations with the smallest FNV-1a(seed ‖ word),
/// ties broken by the word, in their original lexicon order.
pub fn subsample_lexicon(lexicon: &Lexicon, proportion: Proportion, seed: u64) -> Result<Lexicon> {
    let k = proportion.of(lexicon.occupations.len());
    let mut ranked: Vec<(u64, &str, usize)> = lexicon
        .occupations
        .iter()
        .enumerate()
        .map(|(i, w)| (seeded_word_hash(seed, w), w.as_str(), i))
        .collect();
    ranked.sort_unstable();
    let mut keep: Vec<usize> = ranked[..k].iter().map(|&(_, _, i)| i).collect();
    keep.sort_unstable();
    let mut out = lexicon.clone();
    out.occupations = keep.into_iter().map(|i| lexicon.occupations[i].clone()).collect();
    Ok(out)
}

fn pick(pool: &[String], index: usize) -> &str {
    &pool[index % pool.len()]
}

/// Applies a coref operator to a whole baseline dataset. Items in one pair group
/// share the rotation index, so gendered variants receive the same edit.
pub fn apply_to_instances(
    baseline: &[Instance],
    spec: &PerturbationSpec,
    descriptor: &ConstructionDescriptor,
) -> Result<Vec<Instance>> {
    let mut groups: Vec<&str> = baseline.iter().filter_map(Instance::pair_group).collect();
    groups.sort_unstable();
    groups.dedup();
    let ordinal: BTreeMap<&str, usize> = groups.into_iter().enumerate().map(|(i, g)| (g, i)).collect();

    let mut out = baseline
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let index = inst.pair_group().map_or(i, |g| ordinal[g]);
            let mut perturbed = apply_to_instance(index, inst, spec)?;
            let template_id = perturbed.meta(meta::TEMPLATE_ID).unwrap_or_default().to_string();
            perturbed.id = rekey(&template_id, &perturbed.fillers(), &descriptor.id);
            perturbed.construction_id = descriptor.id.clone();
            perturbed
                .metadata
                .insert(meta::OPERATOR.to_string(), descriptor.operator.to_string());
            Ok(perturbed)
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// One coref item under one operator; `index` selects from the rotation pools.
pub fn apply_to_instance(index: usize, instance: &Instance, spec: &PerturbationSpec) -> Result<Instance> {
    use Operator::*;
    match spec.operator {
        Baseline => Ok(instance.clone()),
        ClauseOccupation | ClauseParticipant => insert_clause(
            instance,
            pick(&spec.clause_pool, index),
            spec.target.expect("clause operators have a target"),
        ),
        AdjPreOccupation | AdjPostOccupation | AdjPreParticipant | AdjPostParticipant => insert_adjective(
            instance,
            pick(&spec.adjective_pool, index),
            spec.target.expect("adjective operators have a target"),
            spec.mode.expect("adjective operators have a mode"),
        ),
        Synonyms => substitute_synonyms(instance, &spec.synonym_table),
        op => Err(Error::invalid(format!(
            "operator `{op}` does not apply to coref instances"
        ))),
    }
}

/// One nli pair under one operator, re-keyed to `descriptor`.
pub fn apply_to_pair(
    index: usize,
    pair: &PairInstance,
    spec: &PerturbationSpec,
    descriptor: &ConstructionDescriptor,
) -> Result<PairInstance> {
    let mut out = match spec.operator {
        Operator::Baseline => pair.clone(),
        Operator::Negation => negate_verb(pair, &spec.verb_negation_table)?,
        Operator::Clauses => insert_clause_pair(pair, pick(&spec.clause_pool, index))?,
        op => return Err(Error::invalid(format!("operator `{op}` does not apply to nli pairs"))),
    };
    let template_id = out.meta(meta::TEMPLATE_ID).unwrap_or_default().to_string();
    out.id = rekey(&template_id, &out.fillers(), &descriptor.id);
    out.construction_id = descriptor.id.clone();
    out.metadata
        .insert(meta::OPERATOR.to_string(), descriptor.operator.to_string());
    Ok(out)
}
