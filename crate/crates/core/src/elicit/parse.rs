//! Parsing LLM responses into prior sets: JSON-block extraction with a
//! prose fallback for models that ignore the output contract.

use std::collections::BTreeMap;

use serde_json::Value;

use crate::dataset::ModelSpec;
use crate::priors::{validate_prior_set, Informativeness, PriorEntry, PriorSet};

use super::ElicitError;

/// Extracts prior sets from a raw LLM response.
///
/// The first JSON block conforming to the catalog schema wins; when the
/// response contains no JSON block at all, per-line `N(mean, sd)` pattern
/// extraction builds a single set. Every returned set validates against
/// `spec`; anything less is a parse error that preserves the raw text.
pub fn parse_response(raw: &str, spec: &ModelSpec) -> Result<Vec<PriorSet>, ElicitError> {
    let candidates = json_candidates(raw);
    if !candidates.is_empty() {
        let mut detail = String::from("no JSON block matched the catalog schema");
        for candidate in &candidates {
            match sets_from_value(candidate) {
                Ok(sets) if !sets.is_empty() => {
                    return validated(sets, spec, raw);
                }
                Ok(_) => {}
                Err(e) => detail = e,
            }
        }
        return Err(ElicitError::Parse {
            detail,
            raw: raw.to_string(),
        });
    }

    let set = prose_fallback(raw, spec)?;
    validated(vec![set], spec, raw)
}

fn validated(
    sets: Vec<PriorSet>,
    spec: &ModelSpec,
    raw: &str,
) -> Result<Vec<PriorSet>, ElicitError> {
    for set in &sets {
        let report = validate_prior_set(set, spec);
        if !report.is_empty() {
            return Err(ElicitError::Parse {
                detail: format!("set `{}` invalid: {report}", set.label),
                raw: raw.to_string(),
            });
        }
    }
    Ok(sets)
}

/// Candidate JSON values in the response: fenced code blocks first, then
/// balanced top-level `{...}` spans.
fn json_candidates(raw: &str) -> Vec<Value> {
    let mut out = Vec::new();
    for block in fenced_blocks(raw) {
        if let Ok(v) = serde_json::from_str::<Value>(block.trim()) {
            out.push(v);
        }
    }
    for span in balanced_object_spans(raw) {
        if let Ok(v) = serde_json::from_str::<Value>(span) {
            out.push(v);
        }
    }
    out
}

fn fenced_blocks(raw: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut rest = raw;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        // skip the info string (e.g. "json") up to the first newline
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
        let body = &after[body_start..];
        match body.find("```") {
            Some(end) => {
                blocks.push(&body[..end]);
                rest = &body[end + 3..];
            }
            None => break,
        }
    }
    blocks
}

/// Top-level `{...}` spans with balanced braces (string-literal aware).
fn balanced_object_spans(raw: &str) -> Vec<&str> {
    let bytes = raw.as_bytes();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let mut depth = 0usize;
            let mut in_string = false;
            let mut escaped = false;
            let mut end = None;
            for (j, &b) in bytes.iter().enumerate().skip(i) {
                if in_string {
                    if escaped {
                        escaped = false;
                    } else if b == b'\\' {
                        escaped = true;
                    } else if b == b'"' {
                        in_string = false;
                    }
                    continue;
                }
                match b {
                    b'"' => in_string = true,
                    b'{' => depth += 1,
                    b'}' => {
                        depth -= 1;
                        if depth == 0 {
                            end = Some(j);
                            break;
                        }
                    }
                    _ => {}
                }
            }
            match end {
                Some(j) => {
                    spans.push(&raw[i..=j]);
                    i = j + 1;
                }
                None => break,
            }
        } else {
            i += 1;
        }
    }
    spans
}

/// Converts a JSON value into prior sets, accepting a full catalog object,
/// a bare `{"sets": [...]}` object, an array of sets, or a single set.
fn sets_from_value(value: &Value) -> Result<Vec<PriorSet>, String> {
    let set_values: Vec<&Value> = if let Some(arr) = value.get("sets").and_then(Value::as_array) {
        arr.iter().collect()
    } else if let Some(arr) = value.as_array() {
        arr.iter().collect()
    } else if value.get("entries").is_some() {
        vec![value]
    } else {
        return Ok(Vec::new());
    };
    set_values.iter().map(|v| set_from_value(v)).collect()
}

fn set_from_value(value: &Value) -> Result<PriorSet, String> {
    let entries_value = value
        .get("entries")
        .and_then(Value::as_object)
        .ok_or("set has no entries object")?;
    let mut entries = BTreeMap::new();
    for (name, entry) in entries_value {
        let mean = number_field(entry, "mean")?;
        let sd = number_field(entry, "sd")?;
        let justification = entry
            .get("justification")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        entries.insert(
            name.clone(),
            PriorEntry {
                mean,
                sd,
                justification,
            },
        );
    }
    let label = value
        .get("label")
        .and_then(Value::as_str)
        .unwrap_or("set")
        .to_string();
    let source = value
        .get("source")
        .and_then(Value::as_str)
        .unwrap_or("llm")
        .to_string();
    let informativeness = match value.get("informativeness").and_then(Value::as_str) {
        Some(s) if s.to_ascii_lowercase().contains("mod") => Informativeness::Moderate,
        Some(s) if s.to_ascii_lowercase().contains("weak") => Informativeness::Weak,
        _ => Informativeness::Custom,
    };
    let confidence_weight = match value.get("confidence_weight") {
        Some(v) => normalize_weight(
            v.as_f64()
                .or_else(|| v.as_str().and_then(|s| s.trim().trim_end_matches('%').parse().ok()))
                .ok_or("confidence_weight is not a number")?,
        ),
        None => 1.0,
    };
    Ok(PriorSet {
        label,
        source,
        informativeness,
        confidence_weight,
        entries,
    })
}

fn number_field(entry: &Value, field: &str) -> Result<f64, String> {
    let v = entry
        .get(field)
        .ok_or_else(|| format!("entry missing `{field}`"))?;
    v.as_f64()
        .or_else(|| v.as_str().and_then(|s| s.trim().parse().ok()))
        .ok_or_else(|| format!("`{field}` is not numeric"))
}

/// Percent-style weights ("60" or 60) become fractions.
fn normalize_weight(w: f64) -> f64 {
    if w > 1.0 {
        w / 100.0
    } else {
        w
    }
}

/// Builds one prior set from per-line `<label>: N(mean, sd)` statements.
///
/// Labels may be coefficient names or beta indices (`beta_1`, `β₁`); a
/// trailing `^2` on the second argument marks a variance written as sd
/// squared, whose base is taken as the sd per the prompt's "clearly state
/// the mean and standard deviation" instruction.
fn prose_fallback(raw: &str, spec: &ModelSpec) -> Result<PriorSet, ElicitError> {
    let names = spec.coefficient_names();
    let mut entries: BTreeMap<String, PriorEntry> = BTreeMap::new();

    for line in raw.lines() {
        let Some((mean, sd)) = extract_normal(line) else {
            continue;
        };
        let Some(name) = match_coefficient(line, &names) else {
            continue;
        };
        entries.entry(name).or_insert(PriorEntry {
            mean,
            sd,
            justification: line.trim().to_string(),
        });
    }

    if entries.is_empty() {
        return Err(ElicitError::Parse {
            detail: "no JSON block and no recognizable N(mean, sd) statements".into(),
            raw: raw.to_string(),
        });
    }

    let confidence_weight = first_percent(raw).unwrap_or(1.0);
    Ok(PriorSet {
        label: "prose".into(),
        source: "prose".into(),
        informativeness: Informativeness::Custom,
        confidence_weight,
        entries,
    })
}

/// First "NN%" occurrence as a fraction, if any.
fn first_percent(raw: &str) -> Option<f64> {
    let bytes = raw.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'%' {
            let start = raw[..i]
                .rfind(|c: char| !(c.is_ascii_digit() || c == '.'))
                .map(|j| j + 1)
                .unwrap_or(0);
            if start < i {
                if let Ok(v) = raw[start..i].parse::<f64>() {
                    if (0.0..=100.0).contains(&v) {
                        return Some(v / 100.0);
                    }
                }
            }
        }
    }
    None
}

/// Finds `N(mean, sd)` or `Normal(mean, sd^2)` on a line.
fn extract_normal(line: &str) -> Option<(f64, f64)> {
    let norm = normalize_unicode(line);
    let lower = norm.to_ascii_lowercase();
    let start = lower
        .find("normal(")
        .map(|i| i + "normal".len())
        .or_else(|| find_bare_n(&norm))?;
    let open = norm[start..].find('(')? + start;
    let close = norm[open..].find(')')? + open;
    let inner = &norm[open + 1..close];
    let mut parts = inner.splitn(2, ',');
    let mean: f64 = parts.next()?.trim().parse().ok()?;
    let second = parts.next()?.trim();
    let sd_text = second.trim_end_matches("^2").trim();
    let sd: f64 = sd_text.parse().ok()?;
    (sd > 0.0).then_some((mean, sd))
}

/// Position of a standalone `N` immediately preceding `(`.
fn find_bare_n(text: &str) -> Option<usize> {
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'N' {
            let prev_ok = i == 0 || !bytes[i - 1].is_ascii_alphanumeric();
            let next_ok = bytes[i + 1..]
                .iter()
                .copied()
                .find(|&c| c != b' ')
                .map(|c| c == b'(')
                .unwrap_or(false);
            if prev_ok && next_ok {
                return Some(i);
            }
        }
    }
    None
}

/// Maps unicode math notation onto ASCII: beta glyphs, subscript digits,
/// squared sign, minus sign.
fn normalize_unicode(line: &str) -> String {
    line.chars()
        .flat_map(|c| match c {
            'β' => vec!['b', 'e', 't', 'a'],
            '²' => vec!['^', '2'],
            '−' => vec!['-'],
            '₀'..='₉' => {
                let digit = (c as u32 - '₀' as u32) as u8;
                vec![(b'0' + digit) as char]
            }
            other => vec![other],
        })
        .collect()
}

/// Matches a line to a coefficient: named match first, then beta-index.
fn match_coefficient(line: &str, names: &[String]) -> Option<String> {
    let norm = normalize_unicode(line);
    let lower = norm.to_ascii_lowercase();
    for name in names {
        if contains_word(&lower, &name.to_ascii_lowercase()) {
            return Some(name.clone());
        }
    }
    // beta indices: beta0 is the first coefficient in design order
    let idx = lower.find("beta")?;
    let digits: String = lower[idx + 4..]
        .chars()
        .skip_while(|&c| c == '_' || c == ' ')
        .take_while(|c| c.is_ascii_digit())
        .collect();
    let k: usize = digits.parse().ok()?;
    names.get(k).cloned()
}

/// Word-boundary substring match.
fn contains_word(haystack: &str, needle: &str) -> bool {
    let mut start = 0;
    while let Some(pos) = haystack[start..].find(needle) {
        let abs = start + pos;
        let before_ok = abs == 0
            || !haystack.as_bytes()[abs - 1].is_ascii_alphanumeric()
                && haystack.as_bytes()[abs - 1] != b'_';
        let after = abs + needle.len();
        let after_ok = after >= haystack.len()
            || !haystack.as_bytes()[after].is_ascii_alphanumeric()
                && haystack.as_bytes()[after] != b'_';
        if before_ok && after_ok {
            return true;
        }
        start = abs + 1;
    }
    false
}
