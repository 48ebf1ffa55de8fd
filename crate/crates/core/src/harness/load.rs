//! Scenario lookup, bundled fixtures and `key=value` overrides.

use std::path::Path;

use toml::Value;

use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;

const BUILTINS: &[(&str, &str)] = &[
    ("linear_small", include_str!("../../scenarios/linear_small.toml")),
    ("nonlinear_small", include_str!("../../scenarios/nonlinear_small.toml")),
    ("channel_stress", include_str!("../../scenarios/channel_stress.toml")),
];

pub const BUILTIN_PREFIX: &str = "builtin:";

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(n, _)| *n)
}

pub fn builtin_text(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Reads `builtin:NAME` or a TOML file, applies overrides in order and validates.
pub fn load_scenario(source: &str, overrides: &[String]) -> Result<ScenarioConfig> {
    let text = match source.strip_prefix(BUILTIN_PREFIX) {
        Some(name) => builtin_text(name)
            .ok_or_else(|| {
                let known: Vec<_> = builtin_names().collect();
                Error::config("config", format!("unknown builtin `{name}` (known: {})", known.join(", ")))
            })?
            .to_owned(),
        None => std::fs::read_to_string(Path::new(source))?,
    };
    let scenario = parse_with_overrides(&text, overrides)?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn builtin(name: &str) -> Result<ScenarioConfig> {
    load_scenario(&format!("{BUILTIN_PREFIX}{name}"), &[])
}

pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<ScenarioConfig> {
    let mut value: Value = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    for ov in overrides {
        apply_override(&mut value, ov)?;
    }
    value.try_into().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Key(String),
    Index(usize),
}

fn parse_path(path: &str) -> Result<Vec<Segment>> {
    let mut out = Vec::new();
    for part in path.split('.') {
        let (key, rest) = match part.find('[') {
            Some(p) => (&part[..p], &part[p..]),
            None => (part, ""),
        };
        if !key.is_empty() {
            out.push(match key.parse::<usize>() {
                Ok(i) => Segment::Index(i),
                Err(_) => Segment::Key(key.to_owned()),
            });
        }
        let mut rest = rest;
        while let Some(r) = rest.strip_prefix('[') {
            let end = r
                .find(']')
                .ok_or_else(|| Error::config(path, "unclosed `[` in override path"))?;
            let i = r[..end]
                .parse::<usize>()
                .map_err(|_| Error::config(path, "array index must be a non-negative integer"))?;
            out.push(Segment::Index(i));
            rest = &r[end + 1..];
        }
        if !rest.is_empty() {
            return Err(Error::config(path, "unexpected text after `]`"));
        }
    }
    if out.is_empty() {
        return Err(Error::config(path, "empty override path"));
    }
    Ok(out)
}

/// Parses the right-hand side as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_owned()))
}

/// Sets `a.b[0].c=value` (or `a.b.0.c=value`) in a TOML tree, creating missing table keys.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "override must look like key=value"))?;
    let path = path.trim();
    let segments = parse_path(path)?;
    let mut cur = root;
    let (last, init) = segments.split_last().expect("non-empty path");
    for seg in init {
        cur = match (seg, cur) {
            (Segment::Key(k), Value::Table(t)) => t
                .entry(k.clone())
                .or_insert_with(|| Value::Table(toml::Table::new())),
            (Segment::Index(i), Value::Array(a)) => a
                .get_mut(*i)
                .ok_or_else(|| Error::config(path, format!("index {i} out of range")))?,
            _ => return Err(Error::config(path, "path does not match the scenario structure")),
        };
    }
    let value = parse_value(raw);
    match (last, cur) {
        (Segment::Key(k), Value::Table(t)) => {
            t.insert(k.clone(), value);
        }
        (Segment::Index(i), Value::Array(a)) if *i < a.len() => a[*i] = value,
        _ => return Err(Error::config(path, "path does not match the scenario structure")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse_and_validate() {
        for name in builtin_names() {
            let sc = builtin(name).unwrap();
            assert_eq!(sc.name, name);
        }
        assert!(load_scenario("builtin:nope", &[]).is_err());
    }

    #[test]
    fn overrides_reach_nested_values() {
        let sc = load_scenario(
            "builtin:linear_small",
            &[
                "trials=7".into(),
                "etm.channels[1].rho=[3.5]".into(),
                "codec.channels.0.bits=6".into(),
                "etm.mode=always".into(),
            ],
        )
        .unwrap();
        assert_eq!(sc.trials, 7);
        assert_eq!(sc.etm.channels[1].rho, vec![3.5]);
        assert_eq!(sc.codec.channels[0].bits, 6);
        assert_eq!(sc.etm.mode, crate::etm::TriggerMode::Always);
    }

    #[test]
    fn zero_trials_rejected() {
        let err = load_scenario("builtin:linear_small", &["trials=0".into()]).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "trials"));
    }

    #[test]
    fn bad_paths_rejected() {
        let mut v: Value = toml::from_str("a = [1, 2]").unwrap();
        assert!(apply_override(&mut v, "a[5]=1").is_err());
        assert!(apply_override(&mut v, "a[0").is_err());
        assert!(apply_override(&mut v, "novalue").is_err());
        apply_override(&mut v, "a[1]=9").unwrap();
        assert_eq!(v["a"][1].as_integer(), Some(9));
    }
}
