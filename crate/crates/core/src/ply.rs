//! Minimal ASCII PLY tables: one `vertex` element with scalar properties.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyType {
    Double,
    Float,
    Int,
    UInt,
    UChar,
}

impl PlyType {
    fn name(self) -> &'static str {
        match self {
            PlyType::Double => "double",
            PlyType::Float => "float",
            PlyType::Int => "int",
            PlyType::UInt => "uint",
            PlyType::UChar => "uchar",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "double" | "float64" => PlyType::Double,
            "float" | "float32" => PlyType::Float,
            "int" | "int32" => PlyType::Int,
            "uint" | "uint32" => PlyType::UInt,
            "uchar" | "uint8" => PlyType::UChar,
            _ => return None,
        })
    }

    fn format(self, v: f64) -> String {
        match self {
            PlyType::Double => format!("{v}"),
            PlyType::Float => format!("{}", v as f32),
            PlyType::Int | PlyType::UInt | PlyType::UChar => format!("{}", v as i64),
        }
    }

    fn parse(self, tok: &str) -> Option<f64> {
        match self {
            PlyType::Double => tok.parse::<f64>().ok(),
            PlyType::Float => tok.parse::<f32>().ok().map(f64::from),
            PlyType::Int => tok.parse::<i32>().ok().map(f64::from),
            PlyType::UInt => tok.parse::<u32>().ok().map(f64::from),
            PlyType::UChar => tok.parse::<u8>().ok().map(f64::from),
        }
    }
}

/// Column-typed vertex table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlyTable {
    pub comments: Vec<String>,
    pub properties: Vec<(String, PlyType)>,
    pub rows: Vec<Vec<f64>>,
}

impl PlyTable {
    pub fn new(properties: Vec<(String, PlyType)>) -> Self {
        PlyTable {
            properties,
            ..Default::default()
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.properties.iter().position(|(n, _)| n == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .column_index(name)
            .ok_or_else(|| Error::Format(format!("PLY has no property `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Value of a `comment <key> <values...>` line.
    pub fn comment_value(&self, key: &str) -> Option<&str> {
        self.comments.iter().find_map(|c| {
            let rest = c.strip_prefix(key)?;
            rest.strip_prefix(' ').or(if rest.is_empty() { Some("") } else { None })
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("ply\nformat ascii 1.0\n");
        for c in &self.comments {
            let _ = writeln!(out, "comment {c}");
        }
        let _ = writeln!(out, "element vertex {}", self.rows.len());
        for (name, ty) in &self.properties {
            let _ = writeln!(out, "property {} {name}", ty.name());
        }
        out.push_str("end_header\n");
        for row in &self.rows {
            let line: Vec<String> = row
                .iter()
                .zip(&self.properties)
                .map(|(v, (_, ty))| ty.format(*v))
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Format(m);
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("ply") {
            return Err(bad("not a PLY file".into()));
        }
        let mut table = PlyTable::default();
        let mut count = None;
        for line in lines.by_ref() {
            let line = line.trim();
            if line == "end_header" {
                break;
            }
            let mut toks = line.split_whitespace();
            match toks.next() {
                Some("format") => {
                    if toks.next() != Some("ascii") {
                        return Err(bad("only ascii PLY is supported".into()));
                    }
                }
                Some("comment") => {
                    table.comments.push(line["comment".len()..].trim_start().to_string());
                }
                Some("element") => {
                    if toks.next() != Some("vertex") || count.is_some() {
                        return Err(bad("only a single vertex element is supported".into()));
                    }
                    count = toks.next().and_then(|t| t.parse::<usize>().ok());
                }
                Some("property") => {
                    let ty = toks.next().and_then(PlyType::from_name);
                    let name = toks.next();
                    match (ty, name) {
                        (Some(ty), Some(name)) => table.properties.push((name.to_string(), ty)),
                        _ => return Err(bad(format!("unsupported property line `{line}`"))),
                    }
                }
                _ => return Err(bad(format!("unexpected header line `{line}`"))),
            }
        }
        let count = count.ok_or_else(|| bad("missing vertex element".into()))?;
        for i in 0..count {
            let line = lines.next().ok_or_else(|| bad(format!("expected {count} rows, got {i}")))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != table.properties.len() {
                return Err(bad(format!("row {i} has {} values", toks.len())));
            }
            let row = toks
                .iter()
                .zip(&table.properties)
                .map(|(t, (_, ty))| ty.parse(t).ok_or_else(|| bad(format!("row {i}: bad value `{t}`"))))
                .collect::<Result<Vec<f64>>>()?;
            table.rows.push(row);
        }
        Ok(table)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
