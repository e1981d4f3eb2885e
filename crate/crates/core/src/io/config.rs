//! Optimizer configuration documents (JSON objects keyed by field name).

use std::path::Path;

use serde_json::Value;

use crate::error::IoError;
use crate::graphopt::{OptConfig, OPT_CONFIG_KEYS};

/// How unknown keys are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    #[default]
    Strict,
    Warn,
}

/// Closest known key within edit distance 3, if any.
pub fn suggest_key(unknown: &str, known: &[&str]) -> Option<String> {
    known
        .iter()
        .map(|k| (strsim::levenshtein(unknown, k), *k))
        .filter(|(d, _)| *d <= 3)
        .min()
        .map(|(_, k)| k.to_string())
}

fn parse_error(label: &str, e: serde_json::Error) -> IoError {
    IoError::Parse {
        path: label.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Parses a config document. Returns the resolved config and any warnings.
pub fn parse_config(
    text: &str,
    label: &str,
    strictness: Strictness,
) -> Result<(OptConfig, Vec<String>), IoError> {
    if text.trim().is_empty() {
        return Ok((OptConfig::default(), Vec::new()));
    }
    let value: Value = serde_json::from_str(text).map_err(|e| parse_error(label, e))?;
    let Value::Object(mut map) = value else {
        return Err(IoError::validation(label, "config must be a JSON object"));
    };
    let unknown: Vec<String> = map
        .keys()
        .filter(|k| !OPT_CONFIG_KEYS.contains(&k.as_str()))
        .cloned()
        .collect();
    let mut warnings = Vec::new();
    for key in &unknown {
        let hint = suggest_key(key, OPT_CONFIG_KEYS)
            .map(|s| format!(" (did you mean \"{s}\"?)"))
            .unwrap_or_default();
        let message = format!("unknown key \"{key}\"{hint}");
        match strictness {
            Strictness::Strict => return Err(IoError::validation(key.clone(), message)),
            Strictness::Warn => {
                log::warn!("{label}: {message}");
                warnings.push(message);
                map.remove(key);
            }
        }
    }
    let cfg: OptConfig = if unknown.is_empty() {
        // Reparse the text so type errors keep their line and column.
        serde_json::from_str(text).map_err(|e| parse_error(label, e))?
    } else {
        serde_json::from_value(Value::Object(map))
            .map_err(|e| IoError::validation(label, e.to_string()))?
    };
    cfg.validate()
        .map_err(|e| IoError::validation(label, e.to_string()))?;
    Ok((cfg, warnings))
}

pub fn load_config(path: &Path, strictness: Strictness) -> Result<(OptConfig, Vec<String>), IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_config(&text, &path.display().to_string(), strictness)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        for text in ["", "{}", "  \n"] {
            let (cfg, warnings) = parse_config(text, "c", Strictness::Strict).unwrap();
            assert_eq!(cfg, OptConfig::default());
            assert!(warnings.is_empty());
        }
        let cfg = OptConfig::default();
        assert_eq!((cfg.alpha, cfg.sigma_int, cfg.sigma_spa), (0.5, 0.07, 3.0));
        assert_eq!((cfg.eta_p, cfg.eta_d, cfg.eta_n), (50.0, 0.5, 10.0));
        assert_eq!((cfg.levels, cfg.iterations.clone()), (3, vec![300, 150, 30]));
    }

    #[test]
    fn typo_suggests_field() {
        let err = parse_config(r#"{"sigma_intt": 0.1}"#, "c", Strictness::Strict).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sigma_intt") && msg.contains("\"sigma_int\""), "{msg}");
        assert!(err.is_validation());
    }

    #[test]
    fn warn_mode_drops_unknown() {
        let (cfg, warnings) =
            parse_config(r#"{"alpha": 0.25, "bogus": 1}"#, "c", Strictness::Warn).unwrap();
        assert_eq!(cfg.alpha, 0.25);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn syntax_error_has_position() {
        match parse_config("{\n  \"alpha\": ,\n}", "c", Strictness::Strict) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_config("{\n\"alpha\": \"x\"}", "c", Strictness::Strict) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(parse_config(r#"{"levels": 0}"#, "c", Strictness::Strict).is_err());
    }
}
