//! Shared line handling for the toolkit's TSV and text formats.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(&[0xEF, 0xBB, 0xBF]) {
        return Err(Error::parse(path, 1, "byte-order mark is not allowed"));
    }
    String::from_utf8(bytes).map_err(|e| {
        let line = e.as_bytes()[..e.utf8_error().valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
            + 1;
        Error::parse(path, line, "invalid UTF-8")
    })
}

pub(crate) fn write_string(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

/// Yields `(line_number, line)` for every line that is neither a `#`
/// comment nor the empty remainder after a final newline.
pub(crate) fn data_lines(content: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut lines: Vec<&str> = content.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop();
    }
    lines
        .into_iter()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.starts_with('#'))
}

/// Formats a positive or zero value with `digits` significant digits in
/// fixed notation, falling back to scientific notation outside `[1e-5, 1e9)`.
pub fn format_significant(value: f64, digits: usize) -> String {
    assert!(digits >= 1);
    if value == 0.0 {
        return format!("{:.*}", digits - 1, 0.0);
    }
    let sci = format!("{:.*e}", digits - 1, value);
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-5..9).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        format!("{:.*}", decimals, value)
    } else {
        sci
    }
}
