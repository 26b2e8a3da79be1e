//! Minimal INI reader that remembers where every key came from.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

/// A config problem, located in its file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}", self.path.display(), line, self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ini {
    pub path: PathBuf,
    pub sections: Vec<Section>,
}

impl Ini {
    pub fn parse(path: &Path, text: &str) -> Result<Self, ConfigError> {
        let err = |line: usize, message: String| ConfigError {
            path: path.to_path_buf(),
            line: Some(line),
            message,
        };
        let mut sections: Vec<Section> = Vec::new();
        let mut seen_sections = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = strip_comment(raw).trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, format!("unterminated section header `{content}`")))?
                    .trim()
                    .to_ascii_lowercase();
                if name.is_empty() {
                    return Err(err(line, "empty section name".into()));
                }
                if !seen_sections.insert(name.clone()) {
                    return Err(err(line, format!("section [{name}] appears twice")));
                }
                sections.push(Section {
                    name,
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected `key = value`, found `{content}`")))?;
            let key = key.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(err(line, "empty key".into()));
            }
            let section = sections
                .last_mut()
                .ok_or_else(|| err(line, format!("key `{key}` outside any section")))?;
            if section.entries.iter().any(|e| e.key == key) {
                return Err(err(line, format!("key `{}.{key}` set twice", section.name)));
            }
            section.entries.push(Entry {
                key,
                value: value.trim().to_string(),
                line,
            });
        }
        Ok(Self {
            path: path.to_path_buf(),
            sections,
        })
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(path, &text)
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn error(&self, line: Option<usize>, message: impl Into<String>) -> ConfigError {
        ConfigError {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(i) => &line[..i],
        None => line,
    }
}
