//! Report assembly and deterministic JSON rendering.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub task: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Default, Serialize)]
pub struct Report {
    pub tasks: Vec<String>,
    pub checks: Vec<Check>,
    pub data: BTreeMap<String, Value>,
    pub pass: bool,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// JSON text with sorted keys and every float at 17 significant digits.
    pub fn render(&self) -> String {
        let value = serde_json::to_value(self).expect("report is serialisable");
        let mut out = String::new();
        write_value(&value, 0, &mut out);
        out.push('\n');
        out
    }
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                write!(out, "{i}").unwrap();
            } else if let Some(u) = n.as_u64() {
                write!(out, "{u}").unwrap();
            } else {
                write_float(n.as_f64().unwrap_or(f64::NAN), out);
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Value::Array(items) => {
            if items.iter().all(|x| !x.is_object() && !x.is_array()) {
                out.push('[');
                for (i, x) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(x, indent, out);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, x) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(x, indent + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, x)) in map.iter().enumerate() {
                write!(out, "{}{}: ", pad(indent + 1), serde_json::to_string(k).expect("key")).unwrap();
                write_value(x, indent + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Non-finite values have no JSON literal and are written as `null`.
pub fn write_float(x: f64, out: &mut String) {
    if x.is_finite() {
        write!(out, "{x:.16e}").unwrap();
    } else {
        out.push_str("null");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_carry_seventeen_digits() {
        let mut s = String::new();
        write_float(0.1, &mut s);
        assert_eq!(s, "1.0000000000000001e-1");
        let back: f64 = s.parse().unwrap();
        assert_eq!(back, 0.1);
    }

    #[test]
    fn rendering_is_valid_json() {
        let mut r = Report::default();
        r.checks.push(Check { name: "x".into(), task: "t".into(), residual: 1e-17, tolerance: 1e-9, pass: true, error: None });
        r.data.insert("roots".into(), serde_json::json!([[1.0, 0.0], [-1.0, 0.0]]));
        let text = r.render();
        let parsed: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["checks"][0]["residual"].as_f64(), Some(1e-17));
    }
}
