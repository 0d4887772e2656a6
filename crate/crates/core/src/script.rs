//! Attention scripts: time-coded intervals naming the element to focus on.
//!
//! Two textual forms are supported. The roadmap form has one entry per line,
//!
//! ```text
//! # comments and blank lines are ignored
//! 0:12 - 0:25 : the farthest turtle
//! 75.5 - 80 : the lion
//! ```
//!
//! where a time is `SS`, `SS.mmm`, `MM:SS` or `MM:SS.mmm`. The CSV form has the
//! header `start_seconds,end_seconds,description`.

use std::fmt::Write as _;

pub const CSV_HEADER: &str = "start_seconds,end_seconds,description";
pub const MAX_DESCRIPTION_BYTES: usize = 1024;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScriptError {
    #[error("line {line}, column {column}: {reason}")]
    Syntax { line: usize, column: usize, reason: String },
    #[error("script has no entries")]
    EmptyScript,
    #[error("line {line}: interval start {start} is not before end {end}")]
    InvalidInterval { line: usize, start: f64, end: f64 },
    #[error("CSV schema: {0}")]
    Schema(String),
    #[error("CSV row {row}: {reason}")]
    Row { row: usize, reason: String },
}

/// One attention interval `[start, end)` in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptEntry {
    start: f64,
    end: f64,
    description: String,
}

impl ScriptEntry {
    /// Validates and builds an entry. Errors are reported as plain reasons;
    /// callers attach positions.
    pub fn new(start: f64, end: f64, description: impl Into<String>) -> Result<Self, String> {
        let description = description.into();
        if !(start.is_finite() && end.is_finite()) {
            return Err("times must be finite".into());
        }
        if start < 0.0 {
            return Err(format!("start {start} is negative"));
        }
        if start >= end {
            return Err(format!("interval start {start} is not before end {end}"));
        }
        check_description(&description)?;
        Ok(Self { start, end, description })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }
}

fn check_description(d: &str) -> Result<(), String> {
    if d.is_empty() {
        return Err("description is empty".into());
    }
    if d.len() > MAX_DESCRIPTION_BYTES {
        return Err(format!("description exceeds {MAX_DESCRIPTION_BYTES} bytes"));
    }
    if d.chars().any(char::is_control) {
        return Err("description contains control characters".into());
    }
    Ok(())
}

/// Non-empty list of entries sorted by start, then end, then input order.
#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    entries: Vec<ScriptEntry>,
}

impl Script {
    pub fn new(mut entries: Vec<ScriptEntry>) -> Result<Self, ScriptError> {
        if entries.is_empty() {
            return Err(ScriptError::EmptyScript);
        }
        entries.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Indices of entries with `start <= t < end`, in script order.
    pub fn active_entries(&self, t: f64) -> Vec<usize> {
        self.entries.iter().enumerate().filter(|(_, e)| e.contains(t)).map(|(i, _)| i).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.entries.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for e in &self.entries {
            let _ =
                writeln!(out, "{},{},{}", format_seconds(e.start), format_seconds(e.end), quote_field(&e.description));
        }
        out
    }

    pub fn from_csv(doc: &str) -> Result<Self, ScriptError> {
        Self::from_csv_with_warnings(doc).map(|(s, _)| s)
    }

    /// Like [`Script::from_csv`], also returning warnings about ignored columns.
    pub fn from_csv_with_warnings(doc: &str) -> Result<(Self, Vec<String>), ScriptError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(doc.as_bytes());
        let header = reader.headers().map_err(|e| ScriptError::Schema(e.to_string()))?.clone();
        let names: Vec<&str> = header.iter().collect();
        let expected: Vec<&str> = CSV_HEADER.split(',').collect();
        if names.len() < 3 || names[..3] != expected[..] {
            return Err(ScriptError::Schema(format!("expected header `{CSV_HEADER}`, found `{}`", names.join(","))));
        }
        let mut warnings = Vec::new();
        if names.len() > 3 {
            warnings.push(format!("ignoring extra columns: {}", names[3..].join(",")));
        }
        let mut entries = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let row = i + 2;
            let record = record.map_err(|e| ScriptError::Row { row, reason: e.to_string() })?;
            if record.len() < 3 {
                if record.iter().all(str::is_empty) {
                    continue;
                }
                return Err(ScriptError::Row { row, reason: format!("expected 3 fields, found {}", record.len()) });
            }
            if record.len() > 3 && names.len() == 3 {
                warnings.push(format!("row {row}: ignoring {} extra fields", record.len() - 3));
            }
            let time = |idx: usize, name: &str| -> Result<f64, ScriptError> {
                let raw = record[idx].trim();
                parse_decimal(raw)
                    .ok_or_else(|| ScriptError::Row { row, reason: format!("{name} `{raw}` is not a decimal number") })
            };
            let start = time(0, "start_seconds")?;
            let end = time(1, "end_seconds")?;
            let entry = ScriptEntry::new(start, end, &record[2]).map_err(|reason| ScriptError::Row { row, reason })?;
            entries.push(entry);
        }
        Ok((Self::new(entries)?, warnings))
    }
}

/// Locale-independent decimal: digits with an optional `.` fraction.
fn parse_decimal(s: &str) -> Option<f64> {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    let ok = !int.is_empty()
        && int.bytes().all(|b| b.is_ascii_digit())
        && frac.bytes().all(|b| b.is_ascii_digit())
        && !(s.contains('.') && frac.is_empty());
    if !ok {
        return None;
    }
    s.parse().ok()
}

/// Shortest round-trip decimal, always with at least one fractional digit.
pub fn format_seconds(t: f64) -> String {
    let s = format!("{t}");
    if s.contains('.') {
        s
    } else {
        s + ".0"
    }
}

fn quote_field(f: &str) -> String {
    if f.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", f.replace('"', "\"\""))
    } else {
        f.to_string()
    }
}

/// Parses the roadmap grammar.
pub fn parse_roadmap(text: &str) -> Result<Script, ScriptError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        entries.push(parse_roadmap_line(line, line_no)?);
    }
    Script::new(entries)
}

struct LineCursor<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    line: &'a str,
    line_no: usize,
}

impl<'a> LineCursor<'a> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn peek_at(&self, k: usize) -> Option<char> {
        self.chars.get(self.pos + k).map(|&(_, c)| c)
    }

    fn column(&self) -> usize {
        self.pos + 1
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn error(&self, reason: impl Into<String>) -> ScriptError {
        ScriptError::Syntax { line: self.line_no, column: self.column(), reason: reason.into() }
    }

    fn digits(&mut self) -> Option<(u64, usize)> {
        let start = self.pos;
        let mut value: u64 = 0;
        while let Some(d) = self.peek().and_then(|c| c.to_digit(10)) {
            value = value.checked_mul(10)?.checked_add(d as u64)?;
            self.pos += 1;
        }
        (self.pos > start).then_some((value, self.pos - start))
    }

    fn expect(&mut self, c: char) -> Result<(), ScriptError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected `{c}`")))
        }
    }

    /// `SS`, `SS.mmm`, `MM:SS` or `MM:SS.mmm`, as whole milliseconds.
    fn time(&mut self) -> Result<u64, ScriptError> {
        let first = self.digits().ok_or_else(|| self.error("expected a time"))?.0;
        let mut total_ms;
        if self.peek() == Some(':') && self.peek_at(1).is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
            let col = self.column();
            let (secs, n) = self.digits().ok_or_else(|| self.error("expected seconds"))?;
            if n != 2 || secs >= 60 {
                return Err(ScriptError::Syntax {
                    line: self.line_no,
                    column: col,
                    reason: "seconds after `:` must be two digits below 60".into(),
                });
            }
            total_ms = first
                .checked_mul(60)
                .and_then(|m| m.checked_add(secs))
                .and_then(|s| s.checked_mul(1000))
                .ok_or_else(|| self.error("time out of range"))?;
        } else {
            total_ms = first.checked_mul(1000).ok_or_else(|| self.error("time out of range"))?;
        }
        if self.peek() == Some('.') {
            self.pos += 1;
            let col = self.column();
            let (frac, n) = self.digits().ok_or_else(|| self.error("expected digits after `.`"))?;
            if n > 3 {
                return Err(ScriptError::Syntax {
                    line: self.line_no,
                    column: col,
                    reason: "at most three fractional digits (milliseconds)".into(),
                });
            }
            total_ms += frac * 10u64.pow(3 - n as u32);
        }
        Ok(total_ms)
    }

    fn rest(&self) -> &'a str {
        match self.chars.get(self.pos) {
            Some(&(byte, _)) => &self.line[byte..],
            None => "",
        }
    }
}

fn parse_roadmap_line(line: &str, line_no: usize) -> Result<ScriptEntry, ScriptError> {
    let mut cur = LineCursor { chars: line.char_indices().collect(), pos: 0, line, line_no };
    cur.skip_ws();
    let start_ms = cur.time()?;
    cur.skip_ws();
    cur.expect('-')?;
    cur.skip_ws();
    let end_ms = cur.time()?;
    cur.skip_ws();
    cur.expect(':')?;
    cur.skip_ws();
    let desc_col = cur.column();
    let description = cur.rest().trim();
    let start = start_ms as f64 / 1000.0;
    let end = end_ms as f64 / 1000.0;
    if start_ms >= end_ms {
        return Err(ScriptError::InvalidInterval { line: line_no, start, end });
    }
    check_description(description).map_err(|reason| ScriptError::Syntax { line: line_no, column: desc_col, reason })?;
    Ok(ScriptEntry { start, end, description: description.to_string() })
}

/// Parses either form; CSV is recognized by its header on the first line.
pub fn parse_script_auto(text: &str) -> Result<Script, ScriptError> {
    let first = text.trim_start_matches('\u{feff}').lines().next().unwrap_or("");
    if is_csv(first) {
        Script::from_csv(text.trim_start_matches('\u{feff}'))
    } else {
        parse_roadmap(text)
    }
}

pub fn is_csv(first_line: &str) -> bool {
    first_line.trim_start_matches('\u{feff}').starts_with("start_seconds,")
}
