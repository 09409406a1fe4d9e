//! Plain-text section format shared by graphons and allocation maps.
//!
//! ```text
//! # comment
//! row_breaks
//! 0 0.5 1
//! values
//! 0.9 0.1
//! 0.1 0.9
//! ```
//!
//! A line holding a single identifier opens a section; every following
//! non-empty line until the next header is one row of whitespace-separated
//! decimals. Numbers are written with 17 significant digits so that parsing
//! recovers the exact `f64`.

use crate::error::{Error, Result};

/// Format a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub rows: Vec<Vec<f64>>,
}

fn is_header(line: &str) -> bool {
    let mut chars = line.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && line.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !line.eq_ignore_ascii_case("inf")
        && !line.eq_ignore_ascii_case("nan")
}

pub fn parse_sections(text: &str) -> Result<Vec<Section>> {
    let mut out: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if is_header(line) {
            out.push(Section {
                name: line.to_string(),
                rows: Vec::new(),
            });
            continue;
        }
        let section = out.last_mut().ok_or_else(|| Error::Parse {
            line: idx + 1,
            msg: "data before the first section header".into(),
        })?;
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    msg: format!("{tok:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        section.rows.push(row);
    }
    Ok(out)
}

pub fn write_section(out: &mut String, name: &str, rows: impl IntoIterator<Item = Vec<f64>>) {
    out.push_str(name);
    out.push('\n');
    for row in rows {
        let line: Vec<String> = row.into_iter().map(fmt_f64).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

/// Fetch a named section, failing if it is missing or duplicated.
pub fn take<'a>(sections: &'a [Section], name: &str) -> Result<&'a Section> {
    let mut found = sections.iter().filter(|s| s.name == name);
    let first = found.next().ok_or_else(|| Error::Parse {
        line: 0,
        msg: format!("missing section `{name}`"),
    })?;
    if found.next().is_some() {
        return Err(Error::Parse {
            line: 0,
            msg: format!("duplicate section `{name}`"),
        });
    }
    Ok(first)
}

/// A section that must hold exactly one row (possibly wrapped over several lines).
pub fn flat(section: &Section) -> Vec<f64> {
    section.rows.iter().flatten().copied().collect()
}
