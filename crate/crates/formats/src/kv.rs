//! Flat `key = value` documents grouped into `[section]`s.
//!
//! ```text
//! # comment
//! [train]
//! batch_size = 7
//! learning_rate = 0.002
//! ```
//!
//! Keys before the first section header belong to the unnamed section `""`.
//! A value wrapped in double quotes has the quotes stripped, which is the only
//! way to write an empty value.

use crate::error::FormatError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvDocument {
    pub sections: Vec<Section>,
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}

impl KvDocument {
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let mut doc = KvDocument::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| FormatError::Syntax {
                    line,
                    msg: "unterminated section header".into(),
                })?;
                let name = name.trim();
                if !is_ident(name) {
                    return Err(FormatError::Syntax {
                        line,
                        msg: format!("invalid section name {name:?}"),
                    });
                }
                if doc.section(name).is_some() {
                    return Err(FormatError::Syntax {
                        line,
                        msg: format!("duplicate section [{name}]"),
                    });
                }
                doc.sections.push(Section {
                    name: name.to_string(),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| FormatError::Syntax {
                line,
                msg: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            if !is_ident(key) {
                return Err(FormatError::Syntax {
                    line,
                    msg: format!("invalid key {key:?}"),
                });
            }
            let mut value = value.trim();
            if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
                value = &value[1..value.len() - 1];
            }
            if doc.sections.is_empty() {
                doc.sections.push(Section {
                    name: String::new(),
                    line,
                    entries: Vec::new(),
                });
            }
            let section = doc.sections.last_mut().expect("pushed above");
            if section.get(key).is_some() {
                return Err(FormatError::Syntax {
                    line,
                    msg: format!("duplicate key {key:?}"),
                });
            }
            section.entries.push(Entry {
                key: key.to_string(),
                value: value.to_string(),
                line,
            });
        }
        Ok(doc)
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    /// Renders the document back to text. Values that would not survive a
    /// re-parse unquoted (empty, or padded with whitespace) are quoted.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, section) in self.sections.iter().enumerate() {
            if !section.name.is_empty() {
                if i > 0 {
                    out.push('\n');
                }
                out.push_str(&format!("[{}]\n", section.name));
            }
            for e in &section.entries {
                let needs_quotes = e.value.is_empty()
                    || e.value.trim() != e.value
                    || (e.value.starts_with('"') && e.value.ends_with('"'));
                if needs_quotes {
                    out.push_str(&format!("{} = \"{}\"\n", e.key, e.value));
                } else {
                    out.push_str(&format!("{} = {}\n", e.key, e.value));
                }
            }
        }
        out
    }
}
