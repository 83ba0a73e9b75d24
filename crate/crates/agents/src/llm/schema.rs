//! A small subset of JSON Schema: enough to describe tool arguments and to
//! coerce what models actually send back.
//!
//! Supported keywords: `type` (object, array, string, number, integer,
//! boolean), `properties`, `required`, `default`, `items`, `minItems`, `enum`.

use serde_json::{Map, Number, Value};

/// Coerces `value` against `schema`, returning the cleaned value.
///
/// Warnings collect dropped unknown fields; errors collect everything that
/// could not be fixed (missing required fields, wrong types).
pub fn coerce(
    value: &Value,
    schema: &Value,
    path: &str,
    warnings: &mut Vec<String>,
    errors: &mut Vec<String>,
) -> Value {
    let ty = schema.get("type").and_then(Value::as_str).unwrap_or("any");
    let out = match ty {
        "object" => coerce_object(value, schema, path, warnings, errors),
        "array" => match value {
            Value::Array(items) => {
                let item_schema = schema.get("items").cloned().unwrap_or(Value::Null);
                let min = schema.get("minItems").and_then(Value::as_u64).unwrap_or(0);
                if (items.len() as u64) < min {
                    errors.push(format!("{path}: expected at least {min} items, got {}", items.len()));
                }
                Value::Array(
                    items
                        .iter()
                        .enumerate()
                        .map(|(i, v)| coerce(v, &item_schema, &format!("{path}[{i}]"), warnings, errors))
                        .collect(),
                )
            }
            other => {
                errors.push(format!("{path}: expected array, got {}", type_name(other)));
                other.clone()
            }
        },
        "number" => match value {
            Value::Number(_) => value.clone(),
            Value::String(s) => match s.trim().parse::<f64>().ok().and_then(Number::from_f64) {
                Some(n) => Value::Number(n),
                None => {
                    errors.push(format!("{path}: expected number, got {s:?}"));
                    value.clone()
                }
            },
            other => {
                errors.push(format!("{path}: expected number, got {}", type_name(other)));
                other.clone()
            }
        },
        "integer" => {
            let as_int = match value {
                Value::Number(n) => n
                    .as_i64()
                    .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64)),
                Value::String(s) => s.trim().parse::<i64>().ok().or_else(|| {
                    s.trim().parse::<f64>().ok().filter(|f| f.fract() == 0.0).map(|f| f as i64)
                }),
                _ => None,
            };
            match as_int {
                Some(i) => Value::from(i),
                None => {
                    errors.push(format!("{path}: expected integer, got {value}"));
                    value.clone()
                }
            }
        }
        "boolean" => match value {
            Value::Bool(_) => value.clone(),
            Value::String(s) if s.eq_ignore_ascii_case("true") => Value::Bool(true),
            Value::String(s) if s.eq_ignore_ascii_case("false") => Value::Bool(false),
            other => {
                errors.push(format!("{path}: expected boolean, got {}", type_name(other)));
                other.clone()
            }
        },
        "string" => match value {
            Value::String(_) => value.clone(),
            Value::Number(n) => Value::String(n.to_string()),
            other => {
                errors.push(format!("{path}: expected string, got {}", type_name(other)));
                other.clone()
            }
        },
        _ => value.clone(),
    };
    check_enum(out, schema, path, errors)
}

fn check_enum(value: Value, schema: &Value, path: &str, errors: &mut Vec<String>) -> Value {
    let Some(allowed) = schema.get("enum").and_then(Value::as_array) else {
        return value;
    };
    if allowed.contains(&value) {
        return value;
    }
    // Case-only mismatches are repaired.
    if let Value::String(s) = &value {
        if let Some(hit) = allowed
            .iter()
            .find(|a| a.as_str().is_some_and(|a| a.eq_ignore_ascii_case(s)))
        {
            return hit.clone();
        }
    }
    let names: Vec<String> = allowed.iter().map(Value::to_string).collect();
    errors.push(format!("{path}: {value} is not one of {}", names.join(", ")));
    value
}

fn coerce_object(
    value: &Value,
    schema: &Value,
    path: &str,
    warnings: &mut Vec<String>,
    errors: &mut Vec<String>,
) -> Value {
    let Value::Object(fields) = value else {
        errors.push(format!("{}: expected object, got {}", display(path), type_name(value)));
        return value.clone();
    };
    let empty = Map::new();
    let props = schema
        .get("properties")
        .and_then(Value::as_object)
        .unwrap_or(&empty);
    let required: Vec<&str> = schema
        .get("required")
        .and_then(Value::as_array)
        .map(|r| r.iter().filter_map(Value::as_str).collect())
        .unwrap_or_default();

    let mut out = Map::new();
    for (name, prop) in props {
        let child = join(path, name);
        match fields.get(name) {
            Some(v) if !v.is_null() => {
                out.insert(name.clone(), coerce(v, prop, &child, warnings, errors));
            }
            _ => {
                if let Some(d) = prop.get("default") {
                    out.insert(name.clone(), d.clone());
                } else if required.contains(&name.as_str()) {
                    errors.push(format!("missing required field {child}"));
                }
            }
        }
    }
    for name in fields.keys() {
        if !props.contains_key(name) {
            warnings.push(format!("dropped unknown field {}", join(path, name)));
        }
    }
    Value::Object(out)
}

/// Structural check of a schema document.
pub fn check_schema(schema: &Value, path: &str) -> Result<(), String> {
    let Some(obj) = schema.as_object() else {
        return Err(format!("{}: schema must be an object", display(path)));
    };
    let ty = obj.get("type").and_then(Value::as_str);
    match ty {
        Some("object") => {
            if let Some(props) = obj.get("properties") {
                let props = props
                    .as_object()
                    .ok_or_else(|| format!("{}: properties must be an object", display(path)))?;
                for (k, v) in props {
                    check_schema(v, &join(path, k))?;
                }
            }
            if let Some(req) = obj.get("required") {
                let names = req
                    .as_array()
                    .ok_or_else(|| format!("{}: required must be an array", display(path)))?;
                for n in names {
                    let n = n
                        .as_str()
                        .ok_or_else(|| format!("{}: required entries must be strings", display(path)))?;
                    if obj.get("properties").and_then(|p| p.get(n)).is_none() {
                        return Err(format!("{}: required field {n} is not declared", display(path)));
                    }
                }
            }
            Ok(())
        }
        Some("array") => match obj.get("items") {
            Some(items) => check_schema(items, &format!("{path}[]")),
            None => Err(format!("{}: array schema needs items", display(path))),
        },
        Some("string" | "number" | "integer" | "boolean") => Ok(()),
        Some(other) => Err(format!("{}: unsupported type {other}", display(path))),
        None => Err(format!("{}: missing type", display(path))),
    }
}

fn join(path: &str, name: &str) -> String {
    if path.is_empty() {
        name.to_string()
    } else {
        format!("{path}.{name}")
    }
}

fn display(path: &str) -> &str {
    if path.is_empty() {
        "arguments"
    } else {
        path
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}
