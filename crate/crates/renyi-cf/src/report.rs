//! Stable on-disk formats for run artifacts.
//!
//! JSON documents carry insertion-ordered keys and floats printed with 17
//! significant digits (full round-trip fidelity); CSV files carry `#`
//! comment headers with the schema version and the full configuration echo,
//! and floats printed with 15 significant digits. Identical runs produce
//! byte-identical files.

use std::fmt::Write as _;

/// Version stamp embedded in every artifact.
pub const SCHEMA_VERSION: &str = "1.0.0";

/// Current schema version of emitted reports.
pub fn report_schema_version() -> &'static str {
    SCHEMA_VERSION
}

/// A float with 17 significant digits, the shortest width that survives a
/// parse round trip exactly.
pub fn fmt_f64_json(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        // JSON has no infinities; artifacts never contain them in practice.
        "null".to_string()
    }
}

/// A float with 15 significant digits for CSV readability.
pub fn fmt_f64_csv(v: f64) -> String {
    format!("{v:.14e}")
}

/// JSON value with ordered object keys.
#[derive(Debug, Clone, PartialEq)]
pub enum JsonValue {
    Null,
    Bool(bool),
    Int(i64),
    UInt(u128),
    Float(f64),
    Str(String),
    Array(Vec<JsonValue>),
    Object(Vec<(String, JsonValue)>),
}

impl JsonValue {
    pub fn object(pairs: Vec<(&str, JsonValue)>) -> JsonValue {
        JsonValue::Object(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    pub fn write(&self, out: &mut String) {
        match self {
            JsonValue::Null => out.push_str("null"),
            JsonValue::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            JsonValue::Int(i) => {
                let _ = write!(out, "{i}");
            }
            JsonValue::UInt(u) => {
                let _ = write!(out, "{u}");
            }
            JsonValue::Float(v) => out.push_str(&fmt_f64_json(*v)),
            JsonValue::Str(s) => write_json_string(s, out),
            JsonValue::Array(items) => {
                out.push('[');
                for (k, item) in items.iter().enumerate() {
                    if k > 0 {
                        out.push(',');
                    }
                    item.write(out);
                }
                out.push(']');
            }
            JsonValue::Object(pairs) => {
                out.push('{');
                for (k, (key, value)) in pairs.iter().enumerate() {
                    if k > 0 {
                        out.push(',');
                    }
                    write_json_string(key, out);
                    out.push(':');
                    value.write(out);
                }
                out.push('}');
            }
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        self.write(&mut out);
        out.push('\n');
        out
    }
}

fn write_json_string(s: &str, out: &mut String) {
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Convert a parsed `serde_json` tree back into the ordered writer's values;
/// used by round-trip tests and by consumers that patch documents.
pub fn from_serde(value: &serde_json::Value) -> JsonValue {
    match value {
        serde_json::Value::Null => JsonValue::Null,
        serde_json::Value::Bool(b) => JsonValue::Bool(*b),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                JsonValue::Int(i)
            } else if let Some(u) = n.as_u64() {
                JsonValue::UInt(u as u128)
            } else {
                JsonValue::Float(n.as_f64().unwrap())
            }
        }
        serde_json::Value::String(s) => JsonValue::Str(s.clone()),
        serde_json::Value::Array(items) => JsonValue::Array(items.iter().map(from_serde).collect()),
        serde_json::Value::Object(map) => JsonValue::Object(
            map.iter()
                .map(|(k, v)| (k.clone(), from_serde(v)))
                .collect(),
        ),
    }
}

/// One CSV cell; numbers keep their type so formatting stays uniform.
#[derive(Debug, Clone, PartialEq)]
pub enum CsvCell {
    Str(String),
    Int(i64),
    UInt(u128),
    Float(f64),
    Empty,
}

impl CsvCell {
    fn write(&self, out: &mut String) {
        match self {
            CsvCell::Str(s) => {
                // artifact strings never contain commas or quotes
                out.push_str(s);
            }
            CsvCell::Int(i) => {
                let _ = write!(out, "{i}");
            }
            CsvCell::UInt(u) => {
                let _ = write!(out, "{u}");
            }
            CsvCell::Float(v) => out.push_str(&fmt_f64_csv(*v)),
            CsvCell::Empty => {}
        }
    }
}

/// A CSV document: `#` comments, a header row, data rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvDoc {
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<CsvCell>>,
}

impl CsvDoc {
    pub fn new(header: &[&str]) -> Self {
        CsvDoc {
            comments: vec![format!("schema: {SCHEMA_VERSION}")],
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) {
        self.comments.push(line.into());
    }

    pub fn row(&mut self, cells: Vec<CsvCell>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "{}", self.header.join(","));
        for row in &self.rows {
            for (k, cell) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                cell.write(&mut out);
            }
            out.push('\n');
        }
        out
    }
}

/// Parse a document produced by [`CsvDoc::render`]. Cells come back as raw
/// strings; [`reparse_cell`] recovers the typed form.
pub fn parse_csv(text: &str) -> Option<CsvDoc> {
    let mut comments = Vec::new();
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# ") {
            comments.push(rest.to_string());
        } else if header.is_none() {
            header = Some(line.split(',').map(|s| s.to_string()).collect());
        } else {
            rows.push(line.split(',').map(reparse_cell).collect());
        }
    }
    Some(CsvDoc {
        comments,
        header: header?,
        rows,
    })
}

/// Recover a typed cell from its textual form.
pub fn reparse_cell(text: &str) -> CsvCell {
    if text.is_empty() {
        return CsvCell::Empty;
    }
    // floats are always emitted in exponent notation, integers never are
    if text.contains(['e', 'E'])
        && text.starts_with(|c: char| c == '-' || c == '+' || c.is_ascii_digit())
    {
        if let Ok(v) = text.parse::<f64>() {
            return CsvCell::Float(v);
        }
    }
    if let Ok(i) = text.parse::<i64>() {
        return CsvCell::Int(i);
    }
    if let Ok(u) = text.parse::<u128>() {
        return CsvCell::UInt(u);
    }
    CsvCell::Str(text.to_string())
}
