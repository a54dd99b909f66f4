//! Reader and writer for the sectioned word-list format shared by lexicons and config files.
//!
//! ```text
//! # comment
//! [occupations]
//! accountant
//! doctor
//!
//! [pronouns.male]
//! nominative = he
//! ```
//!
//! Each non-blank, non-comment line is either a section header, a bare entry, or a
//! `key = value` entry. Entries before the first header are rejected.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Entry {
    Word(String),
    Pair(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Line {
    pub number: usize,
    pub entry: Entry,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub lines: Vec<Line>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Document {
    pub origin: String,
    pub sections: Vec<Section>,
}

impl Document {
    pub fn parse(origin: &str, input: &str) -> Result<Self> {
        let mut sections: Vec<Section> = Vec::new();
        for (idx, raw) in input.lines().enumerate() {
            let number = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::parse(origin, number, "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(Error::parse(origin, number, "empty section name"));
                }
                if sections.iter().any(|s| s.name == name) {
                    return Err(Error::parse(origin, number, format!("section [{name}] appears twice")));
                }
                sections.push(Section {
                    name: name.to_string(),
                    line: number,
                    lines: Vec::new(),
                });
                continue;
            }
            let section = sections
                .last_mut()
                .ok_or_else(|| Error::parse(origin, number, "entry outside of any section"))?;
            let entry = match line.split_once('=') {
                Some((k, v)) => {
                    let (k, v) = (k.trim(), v.trim());
                    if k.is_empty() || v.is_empty() {
                        return Err(Error::parse(origin, number, "empty key or value"));
                    }
                    Entry::Pair(k.to_string(), v.to_string())
                }
                None => Entry::Word(line.to_string()),
            };
            section.lines.push(Line { number, entry });
        }
        Ok(Document {
            origin: origin.to_string(),
            sections,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&path.display().to_string(), &text)
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    /// Sections named `prefix.<suffix>`, yielding `(suffix, section)`.
    pub fn subsections<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a Section)> {
        self.sections.iter().filter_map(move |s| {
            s.name
                .strip_prefix(prefix)
                .and_then(|rest| rest.strip_prefix('.'))
                .map(|suffix| (suffix, s))
        })
    }

    /// Bare words of a section, rejecting `key = value` lines and duplicates.
    pub fn words(&self, section: &Section) -> Result<Vec<String>> {
        let mut out: Vec<String> = Vec::with_capacity(section.lines.len());
        for line in &section.lines {
            match &line.entry {
                Entry::Word(w) => {
                    if out.contains(w) {
                        return Err(Error::parse(
                            &self.origin,
                            line.number,
                            format!("duplicate entry `{w}` in [{}]", section.name),
                        ));
                    }
                    out.push(w.clone());
                }
                Entry::Pair(..) => {
                    return Err(Error::parse(
                        &self.origin,
                        line.number,
                        format!("[{}] expects one word per line", section.name),
                    ))
                }
            }
        }
        Ok(out)
    }

    /// `key = value` lines of a section, in file order, rejecting duplicate keys.
    pub fn pairs(&self, section: &Section) -> Result<Vec<(String, String)>> {
        let mut out: Vec<(String, String)> = Vec::with_capacity(section.lines.len());
        for line in &section.lines {
            match &line.entry {
                Entry::Pair(k, v) => {
                    if out.iter().any(|(seen, _)| seen == k) {
                        return Err(Error::parse(
                            &self.origin,
                            line.number,
                            format!("duplicate key `{k}` in [{}]", section.name),
                        ));
                    }
                    out.push((k.clone(), v.clone()));
                }
                Entry::Word(w) => {
                    return Err(Error::parse(
                        &self.origin,
                        line.number,
                        format!("[{}] expects `key = value`, found `{w}`", section.name),
                    ))
                }
            }
        }
        Ok(out)
    }
}

/// Incremental writer producing text that [`Document::parse`] reads back.
#[derive(Debug, Default)]
pub struct Writer {
    out: String,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn words<S: AsRef<str>>(&mut self, name: &str, words: &[S]) -> &mut Self {
        self.header(name);
        for w in words {
            self.out.push_str(w.as_ref());
            self.out.push('\n');
        }
        self
    }

    pub fn pairs<K: AsRef<str>, V: AsRef<str>>(&mut self, name: &str, pairs: &[(K, V)]) -> &mut Self {
        self.header(name);
        for (k, v) in pairs {
            self.out.push_str(k.as_ref());
            self.out.push_str(" = ");
            self.out.push_str(v.as_ref());
            self.out.push('\n');
        }
        self
    }

    fn header(&mut self, name: &str) {
        if !self.out.is_empty() {
            self.out.push('\n');
        }
        self.out.push('[');
        self.out.push_str(name);
        self.out.push_str("]\n");
    }

    pub fn finish(self) -> String {
        self.out
    }
}
