//! Chain file loading with line-anchored diagnostics.

use std::fmt;
use std::path::Path;

use ergode::chain::Section;
use ergode::{validate_chain, ChainError, ChainSpec, RawChain};

#[derive(Debug)]
pub struct InputError {
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}", self.path, line, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

pub fn load_chain(path: &Path, row_tol: f64) -> Result<ChainSpec, InputError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| InputError {
        path: display.clone(),
        line: None,
        message: e.to_string(),
    })?;
    parse_chain(&display, &text, row_tol)
}

pub fn parse_chain(path: &str, text: &str, row_tol: f64) -> Result<ChainSpec, InputError> {
    let raw: RawChain = serde_json::from_str(text).map_err(|e| InputError {
        path: path.to_owned(),
        line: (e.line() > 0).then_some(e.line()),
        message: e.to_string(),
    })?;
    validate_chain(&raw, row_tol).map_err(|e| InputError {
        path: path.to_owned(),
        line: locate(text, &e),
        message: e.to_string(),
    })
}

/// Best-effort line of the JSON key a validation error refers to.
fn locate(text: &str, err: &ChainError) -> Option<usize> {
    let (section, label) = match err {
        ChainError::InitialMassError { .. } => (Some(Section::Initial), None),
        ChainError::EmptyStateSpace | ChainError::DuplicateLabel(_) | ChainError::EmptyLabel(_) => (None, None),
        other => match other.anchor() {
            Some((section, label)) => (Some(section), Some(label)),
            None => (None, None),
        },
    };
    let root = text.find('{')?;
    let pos = match section {
        None => member(text, root, "states")?,
        Some(section) => {
            let key = member(text, root, &section.to_string())?;
            match label {
                Some(label) => text[key..]
                    .find('{')
                    .and_then(|open| member(text, key + open, label))
                    .unwrap_or(key),
                None => key,
            }
        }
    };
    Some(text[..pos].matches('\n').count() + 1)
}

/// Byte offset of the member name `key` of the object opening at `open`.
/// Keys of nested objects are skipped.
fn member(text: &str, open: usize, key: &str) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut i = open;
    while i < bytes.len() {
        match bytes[i] {
            b'{' | b'[' => depth += 1,
            b'}' | b']' => {
                depth -= 1;
                if depth == 0 {
                    return None;
                }
            }
            b'"' => {
                let begin = i;
                i += 1;
                while i < bytes.len() && bytes[i] != b'"' {
                    i += if bytes[i] == b'\\' { 2 } else { 1 };
                }
                let is_key = text.get(i + 1..).is_some_and(|rest| rest.trim_start().starts_with(':'));
                if depth == 1 && is_key {
                    let name: Option<String> = serde_json::from_str(text.get(begin..=i)?).ok();
                    if name.as_deref() == Some(key) {
                        return Some(begin);
                    }
                }
            }
            _ => {}
        }
        i += 1;
    }
    None
}
