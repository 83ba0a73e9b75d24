//! Canonical text encoding.
//!
//! Every document the engine writes (projects, frames, fixtures, hashes) goes
//! through this module: JSON with object keys sorted, no insignificant
//! whitespace in the compact form, and floats printed with at most six
//! decimals. Serializing the parse of a canonical document reproduces it
//! byte for byte.

use std::fmt::Write as _;

use serde::{Serialize, Serializer};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Maximum number of decimals written for a float.
pub const FLOAT_DECIMALS: usize = 6;

#[derive(Debug, thiserror::Error)]
pub enum CanonicalError {
    #[error("value is not representable as JSON: {0}")]
    Encode(#[from] serde_json::Error),
}

/// Compact canonical encoding (single line).
pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonicalError> {
    let value = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &value, None, 0);
    Ok(out)
}

/// Indented canonical encoding with a trailing newline, used for files people diff.
pub fn to_canonical_pretty<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonicalError> {
    let value = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &value, Some(2), 0);
    out.push('\n');
    Ok(out)
}

/// Canonical encoding of an already-built JSON value.
pub fn value_to_canonical(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value, None, 0);
    out
}

/// Hex SHA-256 of the canonical compact encoding.
pub fn canonical_hash<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonicalError> {
    Ok(sha256_hex(to_canonical_string(value)?.as_bytes()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Formats a float with up to [`FLOAT_DECIMALS`] decimals, trailing zeros trimmed.
pub fn format_float(x: f64) -> String {
    let mut s = format!("{:.*}", FLOAT_DECIMALS, x);
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

/// Rounds seconds to whole milliseconds.
pub fn round_millis(seconds: f64) -> f64 {
    let r = (seconds * 1000.0).round() / 1000.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// `serialize_with` helper for time fields stored at millisecond precision.
pub fn serialize_millis<S: Serializer>(seconds: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round_millis(*seconds))
}

fn write_value(out: &mut String, value: &Value, indent: Option<usize>, depth: usize) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else {
                out.push_str(&format_float(n.as_f64().unwrap_or(0.0)));
            }
        }
        Value::String(s) => write_string(out, s),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, indent, depth + 1);
                write_value(out, item, indent, depth + 1);
            }
            newline(out, indent, depth);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, indent, depth + 1);
                write_string(out, key);
                out.push(':');
                if indent.is_some() {
                    out.push(' ');
                }
                write_value(out, &map[*key], indent, depth + 1);
            }
            newline(out, indent, depth);
            out.push('}');
        }
    }
}

fn newline(out: &mut String, indent: Option<usize>, depth: usize) {
    if let Some(width) = indent {
        out.push('\n');
        for _ in 0..width * depth {
            out.push(' ');
        }
    }
}

fn write_string(out: &mut String, s: &str) {
    // serde_json's string escaping is already canonical (minimal escapes).
    out.push_str(&serde_json::to_string(s).expect("strings always encode"));
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn keys_are_sorted_and_floats_trimmed() {
        let v = json!({"b": 1.5, "a": [2.0, -0.0000001, 3], "c": {"z": null, "y": "x"}});
        assert_eq!(
            value_to_canonical(&v),
            r#"{"a":[2,0,3],"b":1.5,"c":{"y":"x","z":null}}"#
        );
    }

    #[test]
    fn six_decimal_rounding() {
        assert_eq!(format_float(0.1234567), "0.123457");
        assert_eq!(format_float(-79.3832), "-79.3832");
        assert_eq!(format_float(1e-9), "0");
        assert_eq!(round_millis(2.0004), 2.0);
        assert_eq!(round_millis(2.0006), 2.001);
    }

    #[test]
    fn pretty_form_is_stable() {
        let v = json!({"k": [1, {"b": 2, "a": 1}], "e": []});
        let a = to_canonical_pretty(&v).unwrap();
        let back: Value = serde_json::from_str(&a).unwrap();
        assert_eq!(a, to_canonical_pretty(&back).unwrap());
        assert!(a.starts_with("{\n  \"e\": [],"));
    }

    proptest! {
        #[test]
        fn reencoding_is_byte_stable(xs in proptest::collection::vec(-1e6f64..1e6, 0..20), s in ".{0,12}") {
            let v = json!({"xs": xs, "s": s});
            let first = value_to_canonical(&v);
            let reparsed: Value = serde_json::from_str(&first).unwrap();
            prop_assert_eq!(&first, &value_to_canonical(&reparsed));
        }
    }
}
