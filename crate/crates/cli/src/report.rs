//! `key=value` reports on standard output.

use std::fmt::Display;
use std::io::{self, Write};

use so3lab::so3::Vec3;

/// Shortest decimal form that parses back to the same `f64`, switching to
/// exponent notation for very small or very large magnitudes.
pub fn format_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        let mut r = Report::default();
        r.push("command", command);
        r
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    /// Finite values print in shortest round-trip form; anything else as
    /// `none`.
    pub fn number(&mut self, key: &str, value: f64) {
        self.optional(key, value.is_finite().then_some(value));
    }

    pub fn optional(&mut self, key: &str, value: Option<f64>) {
        match value {
            Some(v) if v.is_finite() => self.push(key, format_f64(v)),
            _ => self.push(key, "none"),
        }
    }

    pub fn vector(&mut self, key: &str, v: &Vec3) {
        self.push(key, format!("{},{},{}", format_f64(v[0]), format_f64(v[1]), format_f64(v[2])));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write_to(&self, out: &mut impl Write) -> io::Result<()> {
        for (k, v) in &self.lines {
            writeln!(out, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Parses `key=value` lines; later keys do not replace earlier ones.
pub fn parse(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
