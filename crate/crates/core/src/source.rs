//! Source units and line spans shared by every analysis stage.

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::SourceError;

/// An inclusive range of 1-based source lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineSpan {
    pub start_line: u32,
    pub end_line: u32,
}

impl LineSpan {
    /// Panics if `start_line` is zero or greater than `end_line`.
    pub fn new(start_line: u32, end_line: u32) -> Self {
        assert!(start_line >= 1, "line numbers are 1-based");
        assert!(start_line <= end_line, "span start {start_line} after end {end_line}");
        LineSpan { start_line, end_line }
    }

    pub fn line(line: u32) -> Self {
        LineSpan::new(line, line)
    }

    pub fn merge(self, other: LineSpan) -> LineSpan {
        LineSpan { start_line: self.start_line.min(other.start_line), end_line: self.end_line.max(other.end_line) }
    }

    pub fn contains(&self, other: &LineSpan) -> bool {
        self.start_line <= other.start_line && other.end_line <= self.end_line
    }

    pub fn contains_line(&self, line: u32) -> bool {
        self.start_line <= line && line <= self.end_line
    }
}

impl fmt::Display for LineSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}--{}", self.start_line, self.end_line)
    }
}

/// A single program text with an optional file identifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceUnit {
    text: String,
    path: Option<String>,
    line_count: u32,
}

impl SourceUnit {
    pub fn new(text: impl Into<String>) -> Result<Self, SourceError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(SourceError::Empty);
        }
        let line_count = count_lines(&text);
        Ok(SourceUnit { text, path: None, line_count })
    }

    pub fn with_path(mut self, path: impl Into<String>) -> Self {
        self.path = Some(path.into());
        self
    }

    pub fn from_file(path: &Path) -> Result<Self, SourceError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| SourceError::Io { path: PathBuf::from(path), source: e })?;
        Ok(SourceUnit::new(text)?.with_path(path.display().to_string()))
    }

    /// Reads from `path`, or from standard input when `path` is `-`.
    pub fn from_path_or_stdin(path: &Path) -> Result<Self, SourceError> {
        if path.as_os_str() == "-" {
            let mut text = String::new();
            std::io::stdin()
                .read_to_string(&mut text)
                .map_err(|e| SourceError::Io { path: PathBuf::from("-"), source: e })?;
            return Ok(SourceUnit::new(text)?.with_path("<stdin>"));
        }
        SourceUnit::from_file(path)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn path(&self) -> Option<&str> {
        self.path.as_deref()
    }

    pub fn line_count(&self) -> u32 {
        self.line_count
    }

    /// Display name used in reports.
    pub fn label(&self) -> &str {
        self.path.as_deref().unwrap_or("<memory>")
    }
}

/// Number of newline-delimited lines; a trailing newline does not open a new line.
pub fn count_lines(text: &str) -> u32 {
    if text.is_empty() {
        return 0;
    }
    let newlines = text.bytes().filter(|&b| b == b'\n').count() as u32;
    if text.ends_with('\n') {
        newlines
    } else {
        newlines + 1
    }
}
