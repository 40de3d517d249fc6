//! Reading observations from CSV files.

use std::path::Path;

use nlr_core::{Error, Result, Sample};

/// Reads `y` or `y,level` rows. Blank lines, `#` comments and a
/// non-numeric header line are skipped.
pub fn read_sample(path: &Path) -> Result<Sample> {
    let text = std::fs::read_to_string(path)?;
    parse_sample(&text)
}

pub fn parse_sample(text: &str) -> Result<Sample> {
    let mut values = Vec::new();
    let mut levels = Vec::new();
    let mut width = None;
    let mut seen_row = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let Ok(y) = fields[0].parse::<f64>() else {
            if !seen_row {
                seen_row = true;
                continue;
            }
            return Err(Error::InvalidInput(format!("line {}: `{}` is not a number", lineno + 1, fields[0])));
        };
        seen_row = true;
        match *width.get_or_insert(fields.len()) {
            w if w != fields.len() => {
                return Err(Error::InvalidInput(format!("line {}: expected {w} fields", lineno + 1)));
            }
            1 => values.push(y),
            2 => {
                let level = fields[1]
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidInput(format!("line {}: bad level `{}`", lineno + 1, fields[1])))?;
                values.push(y);
                levels.push(level);
            }
            w => return Err(Error::InvalidInput(format!("line {}: expected 1 or 2 fields, got {w}", lineno + 1))),
        }
    }
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    if levels.is_empty() {
        Sample::new(values)
    } else {
        Sample::with_levels(values, levels)
    }
}
