//! `key = value` session files.
//!
//! ```text
//! # comment
//! scheme = optimal          # or simple, or give a1/a2/a3
//! message_hex = 48656c6c6f
//! control_fraction = 0.5
//! abort_threshold = 0.08
//! loss_probability = 0
//! seed = 42
//! eve = optimal             # none | optimal | qnd | random:<seed> | random-fixed:<seed>
//! ```

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use crate::adversary::EveSpec;
use crate::protocol::{default_abort_threshold, ProtocolError, SessionConfig};
use crate::scheme::SchemeParams;

const KEYS: [&str; 11] = [
    "scheme",
    "a1",
    "a2",
    "a3",
    "message_hex",
    "control_fraction",
    "abort_threshold",
    "loss_probability",
    "seed",
    "eve",
    "message",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    Duplicate { line: usize, key: String },
    #[error("invalid value for {key}: {reason}")]
    Value { key: &'static str, reason: String },
    #[error("missing required key {0:?}")]
    Missing(&'static str),
    #[error(transparent)]
    Session(#[from] ProtocolError),
}

/// A parsed session file. `seed` is `None` when the file leaves it to the caller.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionFile {
    pub config: SessionConfig,
    pub seed: Option<u64>,
    pub eve: EveSpec,
}

impl SessionFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values: HashMap<&'static str, String> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let key = key.trim();
            let known = KEYS
                .iter()
                .find(|k| **k == key)
                .ok_or_else(|| ConfigError::UnknownKey {
                    line: i + 1,
                    key: key.to_string(),
                })?;
            if values.insert(known, value.trim().to_string()).is_some() {
                return Err(ConfigError::Duplicate {
                    line: i + 1,
                    key: key.to_string(),
                });
            }
        }

        let float = |key: &'static str| -> Result<Option<f64>, ConfigError> {
            values
                .get(key)
                .map(|v| {
                    v.parse::<f64>().map_err(|e| ConfigError::Value {
                        key,
                        reason: e.to_string(),
                    })
                })
                .transpose()
        };

        let explicit = [float("a1")?, float("a2")?, float("a3")?];
        let scheme = match (values.get("scheme").map(String::as_str), explicit) {
            (None | Some("custom") | Some("explicit"), [Some(a1), Some(a2), Some(a3)]) => SchemeParams::new(a1, a2, a3)
                .map_err(|e| ConfigError::Value {
                    key: "a1/a2/a3",
                    reason: e.to_string(),
                })?,
            (Some(name), [None, None, None]) => SchemeParams::preset(name).map_err(|e| ConfigError::Value {
                key: "scheme",
                reason: e.to_string(),
            })?,
            (None, [None, None, None]) => return Err(ConfigError::Missing("scheme")),
            _ => {
                return Err(ConfigError::Value {
                    key: "scheme",
                    reason: "give either a preset name or all of a1, a2, a3".into(),
                })
            }
        };

        let message = match (values.get("message_hex"), values.get("message")) {
            (Some(h), None) => hex::decode(h.trim()).map_err(|e| ConfigError::Value {
                key: "message_hex",
                reason: e.to_string(),
            })?,
            (None, Some(text)) => text.as_bytes().to_vec(),
            (Some(_), Some(_)) => {
                return Err(ConfigError::Value {
                    key: "message",
                    reason: "give only one of message_hex and message".into(),
                })
            }
            (None, None) => return Err(ConfigError::Missing("message_hex")),
        };

        let seed = values
            .get("seed")
            .map(|v| {
                v.parse::<u64>().map_err(|e| ConfigError::Value {
                    key: "seed",
                    reason: e.to_string(),
                })
            })
            .transpose()?;

        let eve = values
            .get("eve")
            .map(|v| {
                v.parse::<EveSpec>().map_err(|e| ConfigError::Value {
                    key: "eve",
                    reason: e.to_string(),
                })
            })
            .transpose()?
            .unwrap_or(EveSpec::None);

        let config = SessionConfig {
            scheme,
            message,
            control_fraction: float("control_fraction")?.unwrap_or(0.5),
            abort_threshold: float("abort_threshold")?.unwrap_or_else(|| default_abort_threshold(&scheme)),
            loss_probability: float("loss_probability")?.unwrap_or(0.0),
            seed: seed.unwrap_or(0),
        };
        config.validate()?;
        Ok(Self { config, seed, eve })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_file() {
        let f = SessionFile::parse(
            "# demo\nscheme = simple\nmessage_hex = 48 69\ncontrol_fraction=0.25\n\
             abort_threshold = 0.05\nloss_probability = 0.1\nseed = 7\neve = random-fixed:3\n",
        );
        // hex with an embedded space is rejected
        assert!(matches!(f, Err(ConfigError::Value { key: "message_hex", .. })));

        let f = SessionFile::parse(
            "# demo\nscheme = simple\nmessage_hex = 4869\ncontrol_fraction=0.25\n\
             abort_threshold = 0.05 # tight\nloss_probability = 0.1\nseed = 7\neve = random-fixed:3\n",
        )
        .unwrap();
        assert_eq!(f.config.scheme, SchemeParams::simple());
        assert_eq!(f.config.message, b"Hi");
        assert_eq!(f.config.control_fraction, 0.25);
        assert_eq!(f.config.abort_threshold, 0.05);
        assert_eq!(f.config.loss_probability, 0.1);
        assert_eq!(f.seed, Some(7));
        assert_eq!(f.eve, EveSpec::RandomFixed(3));
    }

    #[test]
    fn defaults_and_explicit_params() {
        let f = SessionFile::parse("a1 = 1\na2 = 0\na3 = 0\nmessage_hex = 00").unwrap();
        assert_eq!(f.config.scheme, SchemeParams::new(1.0, 0.0, 0.0).unwrap());
        assert_eq!(f.config.control_fraction, 0.5);
        assert_eq!(f.config.abort_threshold, 0.01);
        assert_eq!(f.seed, None);
        assert_eq!(f.eve, EveSpec::None);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(
            SessionFile::parse("scheme optimal"),
            Err(ConfigError::Syntax { line: 1 })
        ));
        assert!(matches!(
            SessionFile::parse("scheme = optimal\nfoo = 1"),
            Err(ConfigError::UnknownKey { line: 2, .. })
        ));
        assert!(matches!(
            SessionFile::parse("scheme = optimal\nscheme = simple"),
            Err(ConfigError::Duplicate { .. })
        ));
        assert!(matches!(
            SessionFile::parse("scheme = optimal"),
            Err(ConfigError::Missing("message_hex"))
        ));
        assert!(matches!(
            SessionFile::parse("a1 = 0.9\na2 = 0.3\na3 = 0.1\nmessage_hex = 00"),
            Err(ConfigError::Value { .. })
        ));
        assert!(matches!(
            SessionFile::parse("scheme = optimal\nmessage_hex = 00\nabort_threshold = 0.7"),
            Err(ConfigError::Session(ProtocolError::BadAbortThreshold(_)))
        ));
        assert!(matches!(
            SessionFile::parse("scheme = optimal\nmessage_hex ="),
            Err(ConfigError::Session(ProtocolError::EmptyMessage))
        ));
    }
}
