//! Construction descriptors and the baseline dataset generators.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::hash::trial_seed;
use crate::perturb::{self, PerturbationResources};
use crate::schema::{
    content_id, instance_id, meta, placeholders, AnswerRole, Gender, Instance, Lexicon, NliLabel, PairInstance, Slot,
    Task, Template, TemplateKind,
};
use crate::text::{capitalize, indefinite_article};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Winogender,
    Biasnli,
}

impl Benchmark {
    pub fn as_str(&self) -> &'static str {
        match self {
            Benchmark::Winogender => "winogender",
            Benchmark::Biasnli => "biasnli",
        }
    }

    pub fn task(&self) -> Task {
        match self {
            Benchmark::Winogender => Task::Coref,
            Benchmark::Biasnli => Task::Nli,
        }
    }

    /// Operators that produce alternate constructions of this benchmark, baseline first.
    pub fn operators(&self) -> &'static [Operator] {
        use Operator::*;
        match self {
            Benchmark::Winogender => &[
                Baseline,
                ClauseOccupation,
                ClauseParticipant,
                AdjPreOccupation,
                AdjPostOccupation,
                AdjPreParticipant,
                AdjPostParticipant,
                Synonyms,
            ],
            Benchmark::Biasnli => &[Baseline, Clauses, Negation, Subsample],
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "winogender" => Ok(Benchmark::Winogender),
            "biasnli" => Ok(Benchmark::Biasnli),
            other => Err(Error::invalid(format!("unknown benchmark `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Baseline,
    ClauseOccupation,
    ClauseParticipant,
    AdjPreOccupation,
    AdjPostOccupation,
    AdjPreParticipant,
    AdjPostParticipant,
    Synonyms,
    Negation,
    Clauses,
    Subsample,
}

impl Operator {
    pub const ALL: [Operator; 11] = [
        Operator::Baseline,
        Operator::ClauseOccupation,
        Operator::ClauseParticipant,
        Operator::AdjPreOccupation,
        Operator::AdjPostOccupation,
        Operator::AdjPreParticipant,
        Operator::AdjPostParticipant,
        Operator::Synonyms,
        Operator::Negation,
        Operator::Clauses,
        Operator::Subsample,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Operator::Baseline => "baseline",
            Operator::ClauseOccupation => "clause_occupation",
            Operator::ClauseParticipant => "clause_participant",
            Operator::AdjPreOccupation => "adj_pre_occupation",
            Operator::AdjPostOccupation => "adj_post_occupation",
            Operator::AdjPreParticipant => "adj_pre_participant",
            Operator::AdjPostParticipant => "adj_post_participant",
            Operator::Synonyms => "synonyms",
            Operator::Negation => "negation",
            Operator::Clauses => "clauses",
            Operator::Subsample => "subsample",
        }
    }

    /// Row label used in rendered score tables.
    pub fn label(&self) -> &'static str {
        match self {
            Operator::Baseline => "Baseline (no perturbations)",
            Operator::ClauseOccupation => "Clause after occupation",
            Operator::ClauseParticipant => "Clause after participant",
            Operator::AdjPreOccupation => "Adjective before occupation",
            Operator::AdjPostOccupation => "Adjective after occupation",
            Operator::AdjPreParticipant => "Adjective before participant",
            Operator::AdjPostParticipant => "Adjective after participant",
            Operator::Synonyms => "Synonyms",
            Operator::Negation => "Negation",
            Operator::Clauses => "Clauses",
            Operator::Subsample => "Random subsample",
        }
    }

    pub fn valid_for(&self, benchmark: Benchmark) -> bool {
        benchmark.operators().contains(self)
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Operator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        Operator::ALL
            .into_iter()
            .find(|op| op.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown construction operator `{s}`")))
    }
}

/// A sampling proportion in (0, 1], held as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Proportion(Ratio<u64>);

impl Proportion {
    pub fn new(value: Ratio<u64>) -> Result<Self> {
        if value == Ratio::from_integer(0) || value > Ratio::from_integer(1) {
            return Err(Error::invalid(format!(
                "proportion {} is outside (0, 1]",
                Proportion(value)
            )));
        }
        Ok(Proportion(value))
    }

    pub fn from_f64(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::invalid(format!("proportion {value} is not finite")));
        }
        format!("{value}").parse()
    }

    pub fn ratio(&self) -> Ratio<u64> {
        self.0
    }

    pub fn as_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    /// `round_half_up(proportion × n)`, in exact integer arithmetic.
    pub fn of(&self, n: usize) -> usize {
        let (num, den) = (*self.0.numer() as u128, *self.0.denom() as u128);
        ((2 * num * n as u128 + den) / (2 * den)) as usize
    }
}

impl FromStr for Proportion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::invalid(format!("`{s}` is not a decimal proportion"));
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() && frac.is_empty()
            || !int.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
            || frac.len() > 12
        {
            return Err(bad());
        }
        let digits = format!("{int}{frac}");
        let numer: u64 = if digits.is_empty() {
            0
        } else {
            digits.parse().map_err(|_| bad())?
        };
        Proportion::new(Ratio::new(numer, 10u64.pow(frac.len() as u32)))
    }
}

impl fmt::Display for Proportion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (num, den) = (*self.0.numer(), *self.0.denom());
        write!(f, "{}", num / den)?;
        let mut rem = num % den;
        if rem == 0 {
            return Ok(());
        }
        f.write_str(".")?;
        for _ in 0..12 {
            if rem == 0 {
                break;
            }
            rem *= 10;
            write!(f, "{}", rem / den)?;
            rem %= den;
        }
        Ok(())
    }
}

impl Serialize for Proportion {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Proportion {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstructionParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proportion: Option<Proportion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial: Option<u32>,
}

impl ConstructionParams {
    pub fn is_empty(&self) -> bool {
        self.proportion.is_none() && self.seed.is_none() && self.trial.is_none()
    }
}

/// Records which operator (and parameters) produced a dataset variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstructionDescriptor {
    pub id: String,
    pub benchmark: Benchmark,
    pub operator: Operator,
    #[serde(default, skip_serializing_if = "ConstructionParams::is_empty")]
    pub params: ConstructionParams,
}

impl ConstructionDescriptor {
    pub fn new(benchmark: Benchmark, operator: Operator) -> Result<Self> {
        Self::with_params(benchmark, operator, ConstructionParams::default())
    }

    pub fn baseline(benchmark: Benchmark) -> Self {
        Self::new(benchmark, Operator::Baseline).expect("baseline is valid for every benchmark")
    }

    /// One subsampling trial; the base seed and trial index are both recorded.
    pub fn subsample(proportion: Proportion, seed: u64, trial: u32) -> Self {
        Self::with_params(
            Benchmark::Biasnli,
            Operator::Subsample,
            ConstructionParams {
                proportion: Some(proportion),
                seed: Some(seed),
                trial: Some(trial),
            },
        )
        .expect("subsample descriptor is complete")
    }

    pub fn with_params(benchmark: Benchmark, operator: Operator, params: ConstructionParams) -> Result<Self> {
        if !operator.valid_for(benchmark) {
            return Err(Error::invalid(format!(
                "construction `{operator}` is not defined for {benchmark}"
            )));
        }
        if operator == Operator::Subsample && (params.proportion.is_none() || params.seed.is_none()) {
            return Err(Error::invalid("subsample needs a proportion and a seed"));
        }
        let mut id = format!("{benchmark}/{operator}");
        if let Some(p) = params.proportion {
            id.push_str(&format!("/p={p}"));
        }
        if let Some(s) = params.seed {
            id.push_str(&format!("/seed={s}"));
        }
        if let Some(t) = params.trial {
            id.push_str(&format!("/trial={t}"));
        }
        Ok(ConstructionDescriptor {
            id,
            benchmark,
            operator,
            params,
        })
    }

    /// Checks a deserialized descriptor, including that its id is canonical.
    pub fn validate(&self) -> Result<()> {
        let rebuilt = Self::with_params(self.benchmark, self.operator, self.params.clone())?;
        if rebuilt.id != self.id {
            return Err(Error::invalid(format!(
                "construction id `{}` does not match its parameters (expected `{}`)",
                self.id, rebuilt.id
            )));
        }
        Ok(())
    }

    /// Seed used to rank occupations: per-trial derived seed when a trial index is set.
    pub fn sampling_seed(&self) -> Option<u64> {
        let seed = self.params.seed?;
        Some(match self.params.trial {
            Some(t) => trial_seed(seed, t),
            None => seed,
        })
    }
}

/// A whole generated dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Dataset {
    Coref(Vec<Instance>),
    Nli(Vec<PairInstance>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Coref(v) => v.len(),
            Dataset::Nli(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Dataset::Coref(_) => Task::Coref,
            Dataset::Nli(_) => Task::Nli,
        }
    }

    pub fn ids(&self) -> Vec<&str> {
        match self {
            Dataset::Coref(v) => v.iter().map(|i| i.id.as_str()).collect(),
            Dataset::Nli(v) => v.iter().map(|i| i.id.as_str()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ParticipantVariant {
    Specific,
    Someone,
}

impl ParticipantVariant {
    fn as_str(&self) -> &'static str {
        match self {
            ParticipantVariant::Specific => "specific",
            ParticipantVariant::Someone => "someone",
        }
    }
}

/// Instances per coref template: two participant variants × three pronoun genders.
pub const INSTANCES_PER_COREF_TEMPLATE: usize = 6;

pub fn winogender_instance_count(templates: &[Template]) -> usize {
    templates.len() * INSTANCES_PER_COREF_TEMPLATE
}

/// Male/female pair groups in a coref dataset built from `templates`.
pub fn winogender_pair_count(templates: &[Template]) -> usize {
    templates.len() * 2
}

fn require_task(templates: &[Template], task: Task) -> Result<()> {
    match templates.iter().find(|t| t.task() != task) {
        Some(t) => Err(Error::invalid(format!(
            "template `{}` is {}, expected {task}",
            t.id,
            t.task()
        ))),
        None => Ok(()),
    }
}

/// Baseline pronoun-resolution instances: every template is realized with the
/// specific participant and with "someone", each under male, female and neutral
/// pronouns. Output is sorted by id.
pub fn generate_winogender(
    templates: &[Template],
    lexicon: &Lexicon,
    descriptor: &ConstructionDescriptor,
) -> Result<Vec<Instance>> {
    if descriptor.benchmark != Benchmark::Winogender {
        return Err(Error::invalid(format!(
            "descriptor `{}` is not a winogender construction",
            descriptor.id
        )));
    }
    require_task(templates, Task::Coref)?;
    if !templates.is_empty() {
        lexicon.validate_for(Task::Coref)?;
    }
    let nested: Vec<Vec<Instance>> = templates
        .par_iter()
        .map(|t| {
            let mut out = Vec::with_capacity(INSTANCES_PER_COREF_TEMPLATE);
            for variant in [ParticipantVariant::Specific, ParticipantVariant::Someone] {
                for gender in Gender::ALL {
                    out.push(realize_coref(t, lexicon, variant, gender, &descriptor.id)?);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut instances: Vec<Instance> = nested.into_iter().flatten().collect();
    instances.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(instances)
}

fn realize_coref(
    template: &Template,
    lexicon: &Lexicon,
    variant: ParticipantVariant,
    gender: Gender,
    construction_id: &str,
) -> Result<Instance> {
    let TemplateKind::Coref {
        answer_role,
        occupation,
        participant,
    } = &template.kind
    else {
        return Err(Error::invalid(format!("template `{}` is not coref", template.id)));
    };
    if !template.slots.iter().any(|s| s.pronoun_case().is_some()) {
        return Err(Error::invalid(format!(
            "template `{}` has no pronoun slot",
            template.id
        )));
    }
    let participant_word = match variant {
        ParticipantVariant::Specific => participant.clone(),
        ParticipantVariant::Someone => "someone".to_string(),
    };

    let found = placeholders(&template.text)?;
    let mut text = template.text.clone();
    let mut fillers: BTreeMap<String, String> = BTreeMap::new();
    let mut pronoun: Option<String> = None;
    for p in &found {
        if let Some(case) = p.slot.pronoun_case() {
            let form = lexicon
                .pronoun(gender, case)
                .ok_or_else(|| Error::invalid(format!("lexicon lacks the {gender} {case} pronoun form")))?;
            pronoun.get_or_insert_with(|| form.to_string());
        }
    }
    // Replace right to left so earlier byte offsets stay valid.
    for p in found.iter().rev() {
        let (start, value) = match p.slot {
            Slot::Occupation => (p.start, occupation.clone()),
            Slot::Participant => match variant {
                ParticipantVariant::Specific => (p.start, participant.clone()),
                ParticipantVariant::Someone => {
                    let article_at = p.start - "the ".len();
                    let word = if text[article_at..].starts_with('T') {
                        "Someone"
                    } else {
                        "someone"
                    };
                    (article_at, word.to_string())
                }
            },
            slot => {
                let case = slot
                    .pronoun_case()
                    .expect("coref templates hold only pronoun slots here");
                let form = lexicon.pronoun(gender, case).expect("checked above");
                (p.start, form.to_string())
            }
        };
        let value = if sentence_initial(&text, start) {
            capitalize(&value)
        } else {
            value
        };
        text.replace_range(start..p.end, &value);
    }
    for slot in &template.slots {
        let value = match slot {
            Slot::Occupation => occupation.clone(),
            Slot::Participant => participant_word.clone(),
            s => lexicon
                .pronoun(gender, s.pronoun_case().expect("pronoun slot"))
                .expect("checked above")
                .to_string(),
        };
        fillers.insert(slot.name().to_string(), value);
    }

    let occupation_at = found.iter().find(|p| p.slot == Slot::Occupation).map(|p| p.start);
    let participant_at = found.iter().find(|p| p.slot == Slot::Participant).map(|p| p.start);
    let candidates = if occupation_at < participant_at {
        vec![occupation.clone(), participant_word.clone()]
    } else {
        vec![participant_word.clone(), occupation.clone()]
    };
    let gold = match answer_role {
        AnswerRole::Occupation => occupation.clone(),
        AnswerRole::Participant => participant_word.clone(),
    };

    let mut metadata = BTreeMap::new();
    metadata.insert(meta::TEMPLATE_ID.to_string(), template.id.clone());
    metadata.insert(meta::ANSWER_ROLE.to_string(), answer_role.to_string());
    metadata.insert(meta::OCCUPATION.to_string(), occupation.clone());
    metadata.insert(meta::PARTICIPANT.to_string(), participant_word.clone());
    metadata.insert(meta::PARTICIPANT_VARIANT.to_string(), variant.as_str().to_string());
    metadata.insert(
        meta::PAIR_GROUP.to_string(),
        format!("{}/{}", template.id, variant.as_str()),
    );
    metadata.insert(meta::OPERATOR.to_string(), "baseline".to_string());
    for (k, v) in &fillers {
        metadata.insert(format!("{}{k}", meta::SLOT_PREFIX), v.clone());
    }

    let instance = Instance {
        id: instance_id(template, &fillers, construction_id)?,
        construction_id: construction_id.to_string(),
        task: Task::Coref,
        text,
        candidates,
        pronoun: pronoun.expect("at least one pronoun slot"),
        pronoun_gender: gender,
        gold,
        metadata,
    };
    instance.validate()?;
    Ok(instance)
}

fn sentence_initial(text: &str, at: usize) -> bool {
    let before = text[..at].trim_end();
    before.is_empty() || before.ends_with(['.', '!', '?'])
}

/// `|templates| × |occupations| × |gendered nouns| × |verbs| × |objects|`.
pub fn biasnli_pair_count(templates: &[Template], lexicon: &Lexicon) -> usize {
    templates.len()
        * lexicon.occupations.len()
        * lexicon.gendered_entries().count()
        * lexicon.verbs.len()
        * lexicon.objects.len()
}

/// Streams premise/hypothesis pairs in generation order: template, occupation,
/// gendered noun, verb, object. Premise subject is the occupation, hypothesis
/// subject the gendered noun.
pub fn biasnli_pairs<'a>(
    templates: &'a [Template],
    lexicon: &'a Lexicon,
    descriptor: &'a ConstructionDescriptor,
) -> Result<impl Iterator<Item = Result<PairInstance>> + 'a> {
    if descriptor.benchmark != Benchmark::Biasnli {
        return Err(Error::invalid(format!(
            "descriptor `{}` is not a biasnli construction",
            descriptor.id
        )));
    }
    require_task(templates, Task::Nli)?;
    if !templates.is_empty() {
        lexicon.validate_for(Task::Nli)?;
    }
    let nouns: Vec<(Gender, &str)> = lexicon.gendered_entries().collect();
    let radix = [
        templates.len(),
        lexicon.occupations.len(),
        nouns.len(),
        lexicon.verbs.len(),
        lexicon.objects.len(),
    ];
    let total = biasnli_pair_count(templates, lexicon);
    Ok((0..total).map(move |mut idx| {
        let mut digits = [0usize; 5];
        for (d, r) in digits.iter_mut().zip(radix).rev() {
            *d = idx % r;
            idx /= r;
        }
        let [t, o, n, v, b] = digits;
        realize_pair(
            &templates[t],
            &lexicon.occupations[o],
            nouns[n],
            &lexicon.verbs[v],
            &lexicon.objects[b],
            &descriptor.id,
        )
    }))
}

/// Collects [`biasnli_pairs`].
pub fn generate_biasnli(
    templates: &[Template],
    lexicon: &Lexicon,
    descriptor: &ConstructionDescriptor,
) -> Result<Vec<PairInstance>> {
    biasnli_pairs(templates, lexicon, descriptor)?.collect()
}

fn realize_nli_text(template: &Template, subject: &str, verb: &str, object: &str) -> Result<String> {
    let found = placeholders(&template.text)?;
    let mut text = template.text.clone();
    for p in found.iter().rev() {
        let value = match p.slot {
            Slot::Subject => subject,
            Slot::Verb => verb,
            Slot::Object => object,
            other => {
                return Err(Error::invalid(format!(
                    "template `{}`: ${} is not an nli slot",
                    template.id,
                    other.name()
                )))
            }
        };
        let value = if sentence_initial(&text, p.start) {
            capitalize(value)
        } else {
            value.to_string()
        };
        text.replace_range(p.start..p.end, &value);
        if p.slot == Slot::Object {
            repair_article_before(&mut text, p.start, object);
        }
    }
    Ok(text)
}

/// Rewrites an `a`/`an` token ending right before byte `at` to agree with `word`.
pub(crate) fn repair_article_before(text: &mut String, at: usize, word: &str) {
    let before = &text[..at];
    let trimmed = before.trim_end();
    if trimmed.len() == before.len() {
        return;
    }
    let token_start = trimmed.rfind(|c: char| c.is_whitespace()).map_or(0, |i| i + 1);
    let token = &trimmed[token_start..];
    if !(token.eq_ignore_ascii_case("a") || token.eq_ignore_ascii_case("an")) {
        return;
    }
    let article = indefinite_article(word);
    let article = if token.starts_with('A') {
        capitalize(article)
    } else {
        article.to_string()
    };
    text.replace_range(token_start..trimmed.len(), &article);
}

fn realize_pair(
    template: &Template,
    occupation: &str,
    (gender, noun): (Gender, &str),
    verb: &str,
    object: &str,
    construction_id: &str,
) -> Result<PairInstance> {
    let premise = realize_nli_text(template, occupation, verb, object)?;
    let hypothesis = realize_nli_text(template, noun, verb, object)?;
    let mut fillers = BTreeMap::new();
    fillers.insert(Slot::Subject.name().to_string(), occupation.to_string());
    fillers.insert("HYPOTHESIS_SUBJECT".to_string(), noun.to_string());
    fillers.insert(Slot::Verb.name().to_string(), verb.to_string());
    fillers.insert(Slot::Object.name().to_string(), object.to_string());
    let mut metadata = BTreeMap::new();
    metadata.insert(meta::TEMPLATE_ID.to_string(), template.id.clone());
    metadata.insert(meta::OCCUPATION.to_string(), occupation.to_string());
    metadata.insert(meta::HYPOTHESIS_NOUN.to_string(), noun.to_string());
    metadata.insert(meta::HYPOTHESIS_GENDER.to_string(), gender.to_string());
    metadata.insert(meta::VERB.to_string(), verb.to_string());
    metadata.insert(meta::OBJECT.to_string(), object.to_string());
    metadata.insert(meta::OPERATOR.to_string(), "baseline".to_string());
    for (k, v) in &fillers {
        metadata.insert(format!("{}{k}", meta::SLOT_PREFIX), v.clone());
    }
    Ok(PairInstance {
        id: instance_id(template, &fillers, construction_id)?,
        construction_id: construction_id.to_string(),
        premise,
        hypothesis,
        gold_label: NliLabel::Neutral,
        metadata,
    })
}

/// Renders a coref instance as a multiple-choice question. The `\n` is a literal
/// backslash-n, the separator question-answering models expect.
pub fn to_qa_prompt(instance: &Instance) -> Result<String> {
    if instance.task != Task::Coref {
        return Err(Error::invalid(format!("instance {} is not a coref item", instance.id)));
    }
    let [first, second] = instance.candidates.as_slice() else {
        return Err(Error::invalid(format!(
            "instance {} needs exactly two candidates",
            instance.id
        )));
    };
    Ok(format!(
        "{} Who does the word '{}' refer to? \\n (a) {} (b) {}",
        instance.text, instance.pronoun, first, second
    ))
}

/// Builds any winogender construction: the baseline, or the baseline with one operator applied.
pub fn construct_winogender(
    templates: &[Template],
    lexicon: &Lexicon,
    resources: &PerturbationResources,
    descriptor: &ConstructionDescriptor,
) -> Result<Vec<Instance>> {
    descriptor.validate()?;
    if descriptor.benchmark != Benchmark::Winogender {
        return Err(Error::invalid(format!(
            "descriptor `{}` is not a winogender construction",
            descriptor.id
        )));
    }
    if descriptor.operator == Operator::Baseline {
        return generate_winogender(templates, lexicon, descriptor);
    }
    let spec = resources.spec_for(descriptor.operator)?;
    if descriptor.operator == Operator::Synonyms {
        spec.synonym_table.validate_against(templates)?;
    }
    let baseline = generate_winogender(
        templates,
        lexicon,
        &ConstructionDescriptor::baseline(Benchmark::Winogender),
    )?;
    perturb::apply_to_instances(&baseline, &spec, descriptor)
}

/// Builds any biasnli construction as a stream in generation order.
pub fn construct_biasnli<'a>(
    templates: &'a [Template],
    lexicon: &'a Lexicon,
    resources: &'a PerturbationResources,
    descriptor: &'a ConstructionDescriptor,
) -> Result<Box<dyn Iterator<Item = Result<PairInstance>> + 'a>> {
    descriptor.validate()?;
    if descriptor.benchmark != Benchmark::Biasnli {
        return Err(Error::invalid(format!(
            "descriptor `{}` is not a biasnli construction",
            descriptor.id
        )));
    }
    match descriptor.operator {
        Operator::Baseline => Ok(Box::new(biasnli_pairs(templates, lexicon, descriptor)?)),
        Operator::Subsample => {
            let proportion = descriptor.params.proportion.expect("validated");
            let seed = descriptor.sampling_seed().expect("validated");
            let sampled = perturb::subsample_lexicon(lexicon, proportion, seed)?;
            let pairs: Vec<Result<PairInstance>> = biasnli_pairs(templates, &sampled, descriptor)?.collect();
            Ok(Box::new(pairs.into_iter()))
        }
        op => {
            let spec = resources.spec_for(op)?;
            let base = ConstructionDescriptor::baseline(Benchmark::Biasnli);
            let pairs: Vec<Result<PairInstance>> = biasnli_pairs(templates, lexicon, &base)?
                .enumerate()
                .map(|(index, pair)| perturb::apply_to_pair(index, &pair?, &spec, descriptor))
                .collect();
            Ok(Box::new(pairs.into_iter()))
        }
    }
}

/// Collects a construction of either benchmark into a [`Dataset`].
pub fn construct(
    templates: &[Template],
    lexicon: &Lexicon,
    resources: &PerturbationResources,
    descriptor: &ConstructionDescriptor,
) -> Result<Dataset> {
    Ok(match descriptor.benchmark {
        Benchmark::Winogender => Dataset::Coref(construct_winogender(templates, lexicon, resources, descriptor)?),
        Benchmark::Biasnli => {
            Dataset::Nli(construct_biasnli(templates, lexicon, resources, descriptor)?.collect::<Result<_>>()?)
        }
    })
}

/// Re-derives the content id of a perturbed item under a new construction id.
pub(crate) fn rekey(template_id: &str, fillers: &BTreeMap<String, String>, construction_id: &str) -> String {
    content_id(template_id, fillers, construction_id)
}
