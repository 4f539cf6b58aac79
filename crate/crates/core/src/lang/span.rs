use std::fmt;

use serde::{Deserialize, Serialize};

/// A region of source text in 1-based line/column coordinates.
///
/// Columns count Unicode scalar values, not bytes. The end position is
/// inclusive: it names the last character of the region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SourceSpan {
    pub start_line: u32,
    pub start_col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

impl SourceSpan {
    pub fn new(start_line: u32, start_col: u32, end_line: u32, end_col: u32) -> Self {
        Self {
            start_line,
            start_col,
            end_line,
            end_col,
        }
    }

    /// A span covering a single position.
    pub fn point(line: u32, col: u32) -> Self {
        Self::new(line, col, line, col)
    }

    pub fn start(&self) -> (u32, u32) {
        (self.start_line, self.start_col)
    }

    pub fn end(&self) -> (u32, u32) {
        (self.end_line, self.end_col)
    }

    /// Smallest span covering both `self` and `other`.
    pub fn to(self, other: SourceSpan) -> SourceSpan {
        let (start_line, start_col) = self.start().min(other.start());
        let (end_line, end_col) = self.end().max(other.end());
        SourceSpan {
            start_line,
            start_col,
            end_line,
            end_col,
        }
    }

    pub fn contains(&self, other: &SourceSpan) -> bool {
        self.start() <= other.start() && other.end() <= self.end()
    }

    pub fn contains_line(&self, line: u32) -> bool {
        self.start_line <= line && line <= self.end_line
    }

    pub fn is_well_formed(&self) -> bool {
        self.start_line >= 1
            && self.start_col >= 1
            && self.end_line >= 1
            && self.end_col >= 1
            && self.start() <= self.end()
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}-{}:{}",
            self.start_line, self.start_col, self.end_line, self.end_col
        )
    }
}

/// Maps line/column positions back onto the original text.
///
/// Both LF and CRLF terminate a line; neither is part of the line's content.
#[derive(Debug, Clone)]
pub struct LineIndex<'a> {
    source: &'a str,
    lines: Vec<&'a str>,
    starts: Vec<usize>,
}

impl<'a> LineIndex<'a> {
    pub fn new(source: &'a str) -> Self {
        let mut lines = Vec::new();
        let mut starts = Vec::new();
        let mut start = 0;
        for (i, b) in source.bytes().enumerate() {
            if b == b'\n' {
                let mut end = i;
                if end > start && source.as_bytes()[end - 1] == b'\r' {
                    end -= 1;
                }
                lines.push(&source[start..end]);
                starts.push(start);
                start = i + 1;
            }
        }
        lines.push(&source[start..]);
        starts.push(start);
        Self {
            source,
            lines,
            starts,
        }
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    /// Content of a 1-based line without its terminator.
    pub fn line(&self, line: u32) -> Option<&'a str> {
        self.lines.get((line as usize).checked_sub(1)?).copied()
    }

    /// Width of every line in characters, in line order.
    pub fn line_widths(&self) -> Vec<u32> {
        self.lines.iter().map(|l| l.chars().count() as u32).collect()
    }

    fn offset(&self, line: u32, col: u32) -> Option<usize> {
        let idx = (line as usize).checked_sub(1)?;
        let text = self.lines.get(idx)?;
        let col = (col as usize).checked_sub(1)?;
        let within = match text.char_indices().nth(col) {
            Some((o, _)) => o,
            None if col == text.chars().count() => text.len(),
            None => return None,
        };
        Some(self.starts[idx] + within)
    }

    /// The exact source text covered by `span`, or `None` if it lies outside the text.
    pub fn slice(&self, span: &SourceSpan) -> Option<&'a str> {
        let start = self.offset(span.start_line, span.start_col)?;
        let last = self.offset(span.end_line, span.end_col)?;
        let end = last + self.source[last..].chars().next().map_or(0, char::len_utf8);
        self.source.get(start..end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slices_handle_crlf_and_multibyte() {
        let src = "ab\r\nçd\nxyz";
        let idx = LineIndex::new(src);
        assert_eq!(idx.line_count(), 3);
        assert_eq!(idx.line(2), Some("çd"));
        assert_eq!(idx.slice(&SourceSpan::new(2, 1, 2, 2)), Some("çd"));
        assert_eq!(idx.slice(&SourceSpan::new(1, 2, 3, 1)), Some("b\r\nçd\nx"));
        assert_eq!(idx.slice(&SourceSpan::new(4, 1, 4, 1)), None);
    }

    #[test]
    fn cover_and_contain() {
        let a = SourceSpan::new(1, 5, 1, 9);
        let b = SourceSpan::new(2, 1, 3, 4);
        let c = a.to(b);
        assert_eq!(c, SourceSpan::new(1, 5, 3, 4));
        assert!(c.contains(&a) && c.contains(&b));
        assert!(!a.contains(&c));
    }
}
