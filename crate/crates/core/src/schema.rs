//! Core domain types, template/lexicon loaders and content-derived instance ids.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::Fnv1a;
use crate::sectioned::{Document, Writer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Coref,
    Nli,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Neutral,
}

impl Gender {
    pub const ALL: [Gender; 3] = [Gender::Male, Gender::Female, Gender::Neutral];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PronounCase {
    Nominative,
    Accusative,
    Possessive,
}

impl PronounCase {
    pub const ALL: [PronounCase; 3] = [
        PronounCase::Nominative,
        PronounCase::Accusative,
        PronounCase::Possessive,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerRole {
    Occupation,
    Participant,
}

/// The three-way inference label set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliLabel {
    Entailment,
    Neutral,
    Contradiction,
}

macro_rules! str_enum {
    ($ty:ty { $($variant:path => $text:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self { $($variant => $text),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok($variant),)+
                    other => Err(Error::invalid(format!(
                        concat!("unknown ", stringify!($ty), " `{}`"), other
                    ))),
                }
            }
        }
    };
}

str_enum!(Task { Task::Coref => "coref", Task::Nli => "nli" });
str_enum!(Gender { Gender::Male => "male", Gender::Female => "female", Gender::Neutral => "neutral" });
str_enum!(PronounCase {
    PronounCase::Nominative => "nominative",
    PronounCase::Accusative => "accusative",
    PronounCase::Possessive => "possessive",
});
str_enum!(AnswerRole { AnswerRole::Occupation => "occupation", AnswerRole::Participant => "participant" });
str_enum!(NliLabel {
    NliLabel::Entailment => "entailment",
    NliLabel::Neutral => "neutral",
    NliLabel::Contradiction => "contradiction",
});

/// A typed template placeholder, written `$NAME` in template text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    Occupation,
    Participant,
    Subject,
    Verb,
    Object,
    NomPronoun,
    AccPronoun,
    PossPronoun,
}

impl Slot {
    pub const ALL: [Slot; 8] = [
        Slot::Occupation,
        Slot::Participant,
        Slot::Subject,
        Slot::Verb,
        Slot::Object,
        Slot::NomPronoun,
        Slot::AccPronoun,
        Slot::PossPronoun,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Slot::Occupation => "OCCUPATION",
            Slot::Participant => "PARTICIPANT",
            Slot::Subject => "SUBJECT",
            Slot::Verb => "VERB",
            Slot::Object => "OBJECT",
            Slot::NomPronoun => "NOM_PRONOUN",
            Slot::AccPronoun => "ACC_PRONOUN",
            Slot::PossPronoun => "POSS_PRONOUN",
        }
    }

    pub fn from_name(name: &str) -> Option<Slot> {
        Slot::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn pronoun_case(&self) -> Option<PronounCase> {
        match self {
            Slot::NomPronoun => Some(PronounCase::Nominative),
            Slot::AccPronoun => Some(PronounCase::Accusative),
            Slot::PossPronoun => Some(PronounCase::Possessive),
            _ => None,
        }
    }
}

/// One `$NAME` occurrence in template text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placeholder {
    pub slot: Slot,
    pub start: usize,
    pub end: usize,
}

/// Scans `text` for `$NAME` tokens. Unknown names are an error.
pub fn placeholders(text: &str) -> Result<Vec<Placeholder>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'$' {
            let start = i;
            let mut end = i + 1;
            while end < bytes.len() && (bytes[end].is_ascii_uppercase() || bytes[end] == b'_') {
                end += 1;
            }
            let name = &text[start + 1..end];
            let slot = Slot::from_name(name).ok_or_else(|| Error::invalid(format!("unknown placeholder `${name}`")))?;
            out.push(Placeholder { slot, start, end });
            i = end;
        } else {
            i += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateKind {
    /// Pronoun-resolution schema with its own occupation and participant fillers.
    Coref {
        answer_role: AnswerRole,
        occupation: String,
        participant: String,
    },
    /// Premise/hypothesis schema; the gold label is always neutral.
    Nli { gold_label: NliLabel },
}

/// A parameterized sentence schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub id: String,
    pub text: String,
    /// Distinct slots in order of first appearance.
    pub slots: Vec<Slot>,
    pub kind: TemplateKind,
}

impl Template {
    pub fn coref(
        id: impl Into<String>,
        text: impl Into<String>,
        answer_role: AnswerRole,
        occupation: impl Into<String>,
        participant: impl Into<String>,
    ) -> Result<Self> {
        Self::build(
            id.into(),
            text.into(),
            TemplateKind::Coref {
                answer_role,
                occupation: occupation.into(),
                participant: participant.into(),
            },
        )
    }

    pub fn nli(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        Self::build(
            id.into(),
            text.into(),
            TemplateKind::Nli {
                gold_label: NliLabel::Neutral,
            },
        )
    }

    fn build(id: String, text: String, kind: TemplateKind) -> Result<Self> {
        let fail = |msg: String| Error::invalid(format!("template `{id}`: {msg}"));
        if id.trim().is_empty() || id.contains(char::is_whitespace) {
            return Err(Error::invalid(format!("template id `{id}` must be a non-empty token")));
        }
        let found = placeholders(&text).map_err(|e| fail(e.to_string()))?;
        let count = |slot: Slot| found.iter().filter(|p| p.slot == slot).count();
        let mut slots: Vec<Slot> = Vec::new();
        for p in &found {
            if !slots.contains(&p.slot) {
                slots.push(p.slot);
            }
        }
        match &kind {
            TemplateKind::Coref {
                occupation,
                participant,
                ..
            } => {
                if count(Slot::Occupation) != 1 {
                    return Err(fail("coref text needs exactly one $OCCUPATION".into()));
                }
                if count(Slot::Participant) != 1 {
                    return Err(fail("coref text needs exactly one $PARTICIPANT".into()));
                }
                if !slots.iter().any(|s| s.pronoun_case().is_some()) {
                    return Err(fail("coref text needs at least one pronoun slot".into()));
                }
                if let Some(s) = slots
                    .iter()
                    .find(|s| matches!(s, Slot::Subject | Slot::Verb | Slot::Object))
                {
                    return Err(fail(format!("${} is not a coref slot", s.name())));
                }
                let participant_at = found
                    .iter()
                    .find(|p| p.slot == Slot::Participant)
                    .map(|p| p.start)
                    .unwrap_or_default();
                let before = &text[..participant_at];
                if !(before.ends_with("the ") || before.ends_with("The ")) {
                    return Err(fail("$PARTICIPANT must be preceded by `the`".into()));
                }
                for (what, word) in [("occupation", occupation), ("participant", participant)] {
                    if word.trim().is_empty() || word.trim() != word {
                        return Err(fail(format!("{what} filler `{word}` is empty or padded")));
                    }
                }
                if occupation.eq_ignore_ascii_case(participant) {
                    return Err(fail("occupation and participant must differ".into()));
                }
            }
            TemplateKind::Nli { gold_label } => {
                if *gold_label != NliLabel::Neutral {
                    return Err(fail("nli gold label must be neutral".into()));
                }
                if count(Slot::Subject) != 1 {
                    return Err(fail("nli text needs exactly one $SUBJECT".into()));
                }
                if count(Slot::Verb) > 1 || count(Slot::Object) > 1 {
                    return Err(fail("nli text allows at most one $VERB and one $OBJECT".into()));
                }
                if let Some(s) = slots
                    .iter()
                    .find(|s| !matches!(s, Slot::Subject | Slot::Verb | Slot::Object))
                {
                    return Err(fail(format!("${} is not an nli slot", s.name())));
                }
            }
        }
        Ok(Template { id, text, slots, kind })
    }

    pub fn task(&self) -> Task {
        match self.kind {
            TemplateKind::Coref { .. } => Task::Coref,
            TemplateKind::Nli { .. } => Task::Nli,
        }
    }
}

const UPSTREAM_HEADER: &str = "occupation(0)";

/// Loads templates of one task from the canonical tab-separated format or the
/// upstream Winogender `templates.tsv` layout (detected by its header row).
///
/// Canonical rows: `id, task, answer_role|gold_label, text` followed, for coref,
/// by the `occupation` and `participant` fillers. `#` lines are comments.
pub fn load_templates(path: &Path, task: Task) -> Result<Vec<Template>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_templates(&path.display().to_string(), &text, task)
}

pub fn parse_templates(origin: &str, input: &str, task: Task) -> Result<Vec<Template>> {
    let mut out: Vec<Template> = Vec::new();
    let mut upstream = false;
    for (idx, raw) in input.lines().enumerate() {
        let number = idx + 1;
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').map(str::trim).collect();
        if out.is_empty() && !upstream && cols[0] == UPSTREAM_HEADER {
            upstream = true;
            continue;
        }
        let err = |msg: String| Error::parse(origin, number, msg);
        let template = if upstream {
            if task != Task::Coref {
                return Err(err("upstream Winogender rows are coref templates".into()));
            }
            let [occupation, participant, answer, sentence] = cols[..] else {
                return Err(err(format!("expected 4 columns, found {}", cols.len())));
            };
            let role = match answer {
                "0" => AnswerRole::Occupation,
                "1" => AnswerRole::Participant,
                other => return Err(err(format!("answer must be 0 or 1, found `{other}`"))),
            };
            let id = format!("{occupation}.{participant}.{answer}");
            Template::coref(id, sentence, role, occupation, participant)
        } else {
            if cols.len() < 4 {
                return Err(err(format!("expected at least 4 columns, found {}", cols.len())));
            }
            let row_task: Task = cols[1].parse().map_err(|e: Error| err(e.to_string()))?;
            if row_task != task {
                return Err(err(format!(
                    "template `{}` has task {row_task}, expected {task}",
                    cols[0]
                )));
            }
            match task {
                Task::Coref => {
                    let [id, _, role, text, occupation, participant] = cols[..] else {
                        return Err(err(format!("coref rows need 6 columns, found {}", cols.len())));
                    };
                    let role: AnswerRole = role.parse().map_err(|e: Error| err(e.to_string()))?;
                    Template::coref(id, text, role, occupation, participant)
                }
                Task::Nli => {
                    let [id, _, label, text] = cols[..] else {
                        return Err(err(format!("nli rows need 4 columns, found {}", cols.len())));
                    };
                    if label != "neutral" {
                        return Err(err(format!(
                            "template `{id}`: gold label must be neutral, found `{label}`"
                        )));
                    }
                    Template::nli(id, text)
                }
            }
        }
        .map_err(|e| err(e.to_string()))?;
        if out.iter().any(|t| t.id == template.id) {
            return Err(err(format!("duplicate template id `{}`", template.id)));
        }
        out.push(template);
    }
    Ok(out)
}

/// Serializes templates in the canonical format read by [`parse_templates`].
pub fn write_templates(templates: &[Template]) -> String {
    let mut out = String::new();
    for t in templates {
        let line = match &t.kind {
            TemplateKind::Coref {
                answer_role,
                occupation,
                participant,
            } => format!(
                "{}\tcoref\t{}\t{}\t{}\t{}\n",
                t.id, answer_role, t.text, occupation, participant
            ),
            TemplateKind::Nli { gold_label } => {
                format!("{}\tnli\t{}\t{}\n", t.id, gold_label, t.text)
            }
        };
        out.push_str(&line);
    }
    out
}

/// Word lists used to populate templates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    pub occupations: Vec<String>,
    pub participants: Vec<String>,
    pub gendered_nouns: BTreeMap<Gender, Vec<String>>,
    pub verbs: Vec<String>,
    pub objects: Vec<String>,
    pub pronoun_forms: BTreeMap<(Gender, PronounCase), String>,
}

impl Lexicon {
    pub fn from_document(doc: &Document) -> Result<Self> {
        let mut lex = Lexicon::default();
        for section in &doc.sections {
            let name = section.name.as_str();
            let bad_gender =
                |g: &str| Error::parse(&doc.origin, section.line, format!("unknown gender `{g}` in [{name}]"));
            if let Some(g) = name.strip_prefix("gendered_nouns.") {
                let gender: Gender = g.parse().map_err(|_| bad_gender(g))?;
                lex.gendered_nouns.insert(gender, doc.words(section)?);
            } else if let Some(g) = name.strip_prefix("pronouns.") {
                let gender: Gender = g.parse().map_err(|_| bad_gender(g))?;
                for (case, form) in doc.pairs(section)? {
                    let case: PronounCase = case.parse().map_err(|_| {
                        Error::parse(
                            &doc.origin,
                            section.line,
                            format!("unknown pronoun case `{case}` in [{name}]"),
                        )
                    })?;
                    lex.pronoun_forms.insert((gender, case), form);
                }
            } else {
                let list = match name {
                    "occupations" => &mut lex.occupations,
                    "participants" => &mut lex.participants,
                    "verbs" => &mut lex.verbs,
                    "objects" => &mut lex.objects,
                    other => {
                        return Err(Error::parse(
                            &doc.origin,
                            section.line,
                            format!("unknown lexicon section [{other}]"),
                        ))
                    }
                };
                *list = doc.words(section)?;
            }
        }
        Ok(lex)
    }

    pub fn pronoun(&self, gender: Gender, case: PronounCase) -> Option<&str> {
        self.pronoun_forms.get(&(gender, case)).map(String::as_str)
    }

    /// Gendered nouns flattened in gender order, each tagged with its gender.
    pub fn gendered_entries(&self) -> impl Iterator<Item = (Gender, &str)> {
        self.gendered_nouns
            .iter()
            .flat_map(|(g, words)| words.iter().map(move |w| (*g, w.as_str())))
    }

    /// Checks the lists a task references.
    pub fn validate_for(&self, task: Task) -> Result<()> {
        match task {
            Task::Coref => {
                for gender in Gender::ALL {
                    for case in PronounCase::ALL {
                        if self.pronoun(gender, case).is_none() {
                            return Err(Error::invalid(format!(
                                "lexicon lacks the {gender} {case} pronoun form"
                            )));
                        }
                    }
                }
            }
            Task::Nli => {
                let lists = [
                    ("occupations", self.occupations.len()),
                    ("gendered_nouns", self.gendered_entries().count()),
                    ("verbs", self.verbs.len()),
                    ("objects", self.objects.len()),
                ];
                if let Some((name, _)) = lists.iter().find(|(_, n)| *n == 0) {
                    return Err(Error::invalid(format!("lexicon list `{name}` is empty")));
                }
            }
        }
        Ok(())
    }

    pub fn to_sectioned(&self) -> String {
        let mut w = Writer::new();
        for (name, list) in [("occupations", &self.occupations), ("participants", &self.participants)] {
            if !list.is_empty() {
                w.words(name, list);
            }
        }
        for (g, words) in &self.gendered_nouns {
            w.words(&format!("gendered_nouns.{g}"), words);
        }
        for (name, list) in [("verbs", &self.verbs), ("objects", &self.objects)] {
            if !list.is_empty() {
                w.words(name, list);
            }
        }
        for gender in Gender::ALL {
            let forms: Vec<(&str, &str)> = PronounCase::ALL
                .iter()
                .filter_map(|c| self.pronoun(gender, *c).map(|f| (c.as_str(), f)))
                .collect();
            if !forms.is_empty() {
                w.pairs(&format!("pronouns.{gender}"), &forms);
            }
        }
        w.finish()
    }
}

/// Loads and parses a lexicon file; duplicates within a list are rejected.
pub fn load_lexicon(path: &Path) -> Result<Lexicon> {
    Lexicon::from_document(&Document::read(path)?)
}

/// [`load_lexicon`] followed by the checks `task` needs.
pub fn load_lexicon_for(path: &Path, task: Task) -> Result<Lexicon> {
    let lex = load_lexicon(path)?;
    lex.validate_for(task)?;
    Ok(lex)
}

/// Metadata keys carried by instances.
pub mod meta {
    pub const TEMPLATE_ID: &str = "template_id";
    pub const ANSWER_ROLE: &str = "answer_role";
    pub const OCCUPATION: &str = "occupation";
    pub const PARTICIPANT: &str = "participant";
    pub const PARTICIPANT_VARIANT: &str = "participant_variant";
    pub const PAIR_GROUP: &str = "pair_group";
    pub const HYPOTHESIS_NOUN: &str = "hypothesis_noun";
    pub const HYPOTHESIS_GENDER: &str = "hypothesis_gender";
    pub const VERB: &str = "verb";
    pub const OBJECT: &str = "object";
    pub const OPERATOR: &str = "operator";
    pub const ADJECTIVE: &str = "adjective";
    pub const CLAUSE: &str = "clause";
    pub const SYNONYMS: &str = "synonyms";
    /// Prefix of the per-slot filler keys, e.g. `slot.OCCUPATION`.
    pub const SLOT_PREFIX: &str = "slot.";
}

/// One realized pronoun-resolution item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub id: String,
    pub construction_id: String,
    pub task: Task,
    pub text: String,
    /// Candidate antecedents in mention order.
    pub candidates: Vec<String>,
    pub pronoun: String,
    pub pronoun_gender: Gender,
    pub gold: String,
    pub metadata: BTreeMap<String, String>,
}

impl Instance {
    pub fn validate(&self) -> Result<()> {
        if self.task != Task::Coref {
            return Err(Error::invalid(format!("instance {} is not a coref item", self.id)));
        }
        if !self.candidates.contains(&self.gold) {
            return Err(Error::invalid(format!(
                "instance {}: gold `{}` is not a candidate",
                self.id, self.gold
            )));
        }
        if self.candidates.len() != 2 {
            return Err(Error::invalid(format!(
                "instance {}: expected two candidates, found {}",
                self.id,
                self.candidates.len()
            )));
        }
        Ok(())
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    /// Key shared by the gendered variants of one sentence.
    pub fn pair_group(&self) -> Option<&str> {
        self.meta(meta::PAIR_GROUP)
    }

    pub fn occupation(&self) -> Option<&str> {
        self.meta(meta::OCCUPATION)
    }

    pub fn participant(&self) -> Option<&str> {
        self.meta(meta::PARTICIPANT)
    }

    pub fn fillers(&self) -> BTreeMap<String, String> {
        slot_fillers(&self.metadata)
    }
}

/// One realized premise/hypothesis item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairInstance {
    pub id: String,
    pub construction_id: String,
    pub premise: String,
    pub hypothesis: String,
    pub gold_label: NliLabel,
    pub metadata: BTreeMap<String, String>,
}

impl PairInstance {
    pub fn validate(&self) -> Result<()> {
        if self.gold_label != NliLabel::Neutral {
            return Err(Error::invalid(format!("pair {}: gold label must be neutral", self.id)));
        }
        Ok(())
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    pub fn fillers(&self) -> BTreeMap<String, String> {
        slot_fillers(&self.metadata)
    }
}

fn slot_fillers(metadata: &BTreeMap<String, String>) -> BTreeMap<String, String> {
    metadata
        .iter()
        .filter_map(|(k, v)| {
            k.strip_prefix(meta::SLOT_PREFIX)
                .map(|name| (name.to_string(), v.clone()))
        })
        .collect()
}

/// Content id over `(template id, fillers, construction id)`; no coverage check.
pub fn content_id(template_id: &str, fillers: &BTreeMap<String, String>, construction_id: &str) -> String {
    let mut h = Fnv1a::new();
    h.update(template_id.as_bytes()).update(&[0x1f]);
    for (k, v) in fillers {
        h.update(k.as_bytes()).update(b"=").update(v.as_bytes()).update(&[0x1f]);
    }
    h.update(construction_id.as_bytes());
    format!("{:016x}", h.finish())
}

/// Stable instance id: hex FNV-1a over a canonical serialization of the
/// template id, the sorted slot fillers and the construction id.
pub fn instance_id(template: &Template, fillers: &BTreeMap<String, String>, construction_id: &str) -> Result<String> {
    if let Some(missing) = template.slots.iter().find(|s| !fillers.contains_key(s.name())) {
        return Err(Error::invalid(format!(
            "template `{}`: no filler for ${}",
            template.id,
            missing.name()
        )));
    }
    Ok(content_id(&template.id, fillers, construction_id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TECH: &str = "The $OCCUPATION told the $PARTICIPANT that $NOM_PRONOUN had completed the repair.";

    fn tech() -> Template {
        Template::coref("t0", TECH, AnswerRole::Occupation, "technician", "customer").unwrap()
    }

    #[test]
    fn slots_follow_first_appearance() {
        assert_eq!(
            tech().slots,
            vec![Slot::Occupation, Slot::Participant, Slot::NomPronoun]
        );
    }

    #[test]
    fn coref_invariants_are_enforced() {
        let no_pronoun = Template::coref(
            "x",
            "The $OCCUPATION met the $PARTICIPANT.",
            AnswerRole::Occupation,
            "a",
            "b",
        );
        assert!(no_pronoun.is_err());
        let two_occ = Template::coref(
            "x",
            "The $OCCUPATION met the $PARTICIPANT and the $OCCUPATION saw $ACC_PRONOUN.",
            AnswerRole::Occupation,
            "a",
            "b",
        );
        assert!(two_occ.is_err());
        let no_article = Template::coref(
            "x",
            "The $OCCUPATION met $PARTICIPANT and $NOM_PRONOUN left.",
            AnswerRole::Occupation,
            "a",
            "b",
        );
        assert!(no_article.is_err());
        let bad = Template::coref("x", "The $OCCUPATION $FOO", AnswerRole::Occupation, "a", "b");
        assert!(bad.unwrap_err().to_string().contains("$FOO"));
    }

    #[test]
    fn nli_needs_exactly_one_subject() {
        assert!(Template::nli("n", "The $SUBJECT $VERB a $OBJECT.").is_ok());
        assert!(Template::nli("n", "A $VERB a $OBJECT.").is_err());
        assert!(Template::nli("n", "The $SUBJECT and $SUBJECT $VERB.").is_err());
        assert!(Template::nli("n", "The $SUBJECT saw $NOM_PRONOUN.").is_err());
    }

    #[test]
    fn empty_input_gives_no_templates() {
        assert!(parse_templates("t", "", Task::Coref).unwrap().is_empty());
        assert!(parse_templates("t", "# only a comment\n\n", Task::Nli)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn row_missing_required_slot_names_row() {
        let input = "# header\nrow-7\tcoref\toccupation\tThe $OCCUPATION laughed because $NOM_PRONOUN won.\ttechnician\tcustomer\n";
        let err = parse_templates("f.tsv", input, Task::Coref).unwrap_err().to_string();
        assert!(err.contains("f.tsv:2"), "{err}");
        assert!(err.contains("row-7"), "{err}");
        assert!(err.contains("$PARTICIPANT"), "{err}");
    }

    #[test]
    fn unknown_placeholder_is_an_error() {
        let input = "a\tnli\tneutral\tThe $SUBJECT $EATS a $OBJECT.\n";
        let err = parse_templates("f", input, Task::Nli).unwrap_err().to_string();
        assert!(err.contains("$EATS"), "{err}");
    }

    #[test]
    fn wrong_task_row_is_rejected() {
        let input = "a\tnli\tneutral\tThe $SUBJECT $VERB a $OBJECT.\n";
        assert!(parse_templates("f", input, Task::Coref).is_err());
    }

    #[test]
    fn upstream_layout_is_recognised() {
        let input = format!("occupation(0)\tother-participant(1)\tanswer\tsentence\ntechnician\tcustomer\t0\t{TECH}\n");
        let t = parse_templates("up", &input, Task::Coref).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].id, "technician.customer.0");
        assert_eq!(
            t[0],
            Template {
                id: "technician.customer.0".into(),
                ..tech()
            }
        );
    }

    #[test]
    fn duplicate_lexicon_word_is_named() {
        let doc = Document::parse("lex", "[occupations]\ndoctor\nnurse\ndoctor\n").unwrap();
        let err = Lexicon::from_document(&doc).unwrap_err().to_string();
        assert!(err.contains("doctor"), "{err}");
    }

    #[test]
    fn missing_pronoun_form_fails_coref_validation() {
        let mut text = String::new();
        for (g, n, a, p) in [("male", "he", "him", "his"), ("neutral", "they", "them", "their")] {
            text.push_str(&format!(
                "[pronouns.{g}]\nnominative = {n}\naccusative = {a}\npossessive = {p}\n"
            ));
        }
        text.push_str("[pronouns.female]\nnominative = she\naccusative = her\n");
        let lex = Lexicon::from_document(&Document::parse("lex", &text).unwrap()).unwrap();
        let err = lex.validate_for(Task::Coref).unwrap_err().to_string();
        assert!(err.contains("female possessive"), "{err}");
    }

    #[test]
    fn instance_id_is_deterministic_and_requires_fillers() {
        let t = tech();
        let mut fillers = BTreeMap::new();
        fillers.insert("OCCUPATION".to_string(), "technician".to_string());
        fillers.insert("PARTICIPANT".to_string(), "customer".to_string());
        assert!(instance_id(&t, &fillers, "c").is_err());
        fillers.insert("NOM_PRONOUN".to_string(), "he".to_string());
        let a = instance_id(&t, &fillers, "c").unwrap();
        assert_eq!(a, instance_id(&t, &fillers, "c").unwrap());
        assert_eq!(a.len(), 16);
        assert_ne!(a, instance_id(&t, &fillers, "d").unwrap());
    }

    fn word() -> impl Strategy<Value = String> {
        "[a-z]{1,10}"
    }

    fn arb_template() -> impl Strategy<Value = Template> {
        let coref = (word(), word(), word(), any::<bool>(), "[a-z ]{0,12}").prop_filter_map(
            "distinct fillers",
            |(id, occ, part, role, filler)| {
                let text =
                    format!("The $OCCUPATION {filler} the $PARTICIPANT because $NOM_PRONOUN left $POSS_PRONOUN bag.");
                let role = if role {
                    AnswerRole::Occupation
                } else {
                    AnswerRole::Participant
                };
                Template::coref(format!("c-{id}"), text, role, occ, part).ok()
            },
        );
        let nli = (word(), "[a-z ]{0,12}").prop_map(|(id, filler)| {
            Template::nli(format!("n-{id}"), format!("The $SUBJECT {filler} $VERB a $OBJECT.")).unwrap()
        });
        prop_oneof![coref, nli]
    }

    proptest! {
        #[test]
        fn template_file_round_trips(templates in prop::collection::vec(arb_template(), 0..8)) {
            let mut seen = std::collections::HashSet::new();
            let templates: Vec<Template> = templates
                .into_iter()
                .filter(|t| seen.insert(t.id.clone()))
                .collect();
            for task in [Task::Coref, Task::Nli] {
                let subset: Vec<Template> =
                    templates.iter().filter(|t| t.task() == task).cloned().collect();
                let text = write_templates(&subset);
                prop_assert_eq!(parse_templates("rt", &text, task).unwrap(), subset);
            }
        }

        #[test]
        fn lexicon_round_trips(
            occupations in prop::collection::btree_set(word(), 0..6),
            verbs in prop::collection::btree_set(word(), 0..4),
            male in prop::collection::btree_set(word(), 1..3),
            pronoun in word(),
        ) {
            let mut lex = Lexicon {
                occupations: occupations.into_iter().collect(),
                verbs: verbs.into_iter().collect(),
                ..Lexicon::default()
            };
            lex.gendered_nouns.insert(Gender::Male, male.into_iter().collect());
            lex.pronoun_forms.insert((Gender::Female, PronounCase::Accusative), pronoun);
            let text = lex.to_sectioned();
            let back = Lexicon::from_document(&Document::parse("rt", &text).unwrap()).unwrap();
            prop_assert_eq!(back, lex);
        }
    }
}
