//! Provenance line embedded in every text file the CLI writes.
//!
//! `#run cmd=<subcommand> key=value ...` with flags in a fixed order per
//! subcommand. Values are percent-escaped so they never contain spaces,
//! `=` or `%`. The worker thread count is left out because it cannot
//! change any output.

use std::fmt::Write as _;

pub const PREFIX: &str = "#run ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub command: String,
    pub params: Vec<(String, String)>,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        RunConfig {
            command: command.to_string(),
            params: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn to_line(&self) -> String {
        let mut out = format!("{PREFIX}cmd={}", escape(&self.command));
        for (k, v) in &self.params {
            let _ = write!(out, " {}={}", escape(k), escape(v));
        }
        out
    }

    pub fn parse_line(line: &str) -> Option<Self> {
        let mut fields = line.strip_prefix(PREFIX)?.split(' ');
        let command = unescape(fields.next()?.strip_prefix("cmd=")?)?;
        let params = fields
            .map(|f| {
                let (k, v) = f.split_once('=')?;
                Some((unescape(k)?, unescape(v)?))
            })
            .collect::<Option<Vec<_>>>()?;
        Some(RunConfig { command, params })
    }

    /// Finds the provenance line among the leading comment lines of a file.
    pub fn find_in(content: &str) -> Option<Self> {
        content
            .lines()
            .take_while(|l| l.starts_with('#'))
            .find(|l| l.starts_with(PREFIX))
            .and_then(Self::parse_line)
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_graphic() && !matches!(b, b'%' | b'=') {
            out.push(b as char);
        } else {
            let _ = write!(out, "%{b:02X}");
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = std::str::from_utf8(bytes.get(i + 1..i + 3)?).ok()?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

/// Places the provenance line after a format header line, or first when the
/// format has none.
pub fn with_run_line(content: &str, config: &RunConfig, has_format_header: bool) -> String {
    let line = config.to_line();
    if has_format_header {
        let (head, rest) = content.split_once('\n').unwrap_or((content, ""));
        format!("{head}\n{line}\n{rest}")
    } else {
        format!("{line}\n{content}")
    }
}
