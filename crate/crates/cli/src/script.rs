//! Scenario script files.
//!
//! A script is TOML: a seed, a timeline of focus segments, a roster of
//! student profiles, and optionally a `[session]` table overriding the
//! session config (same keys as the server config's `[session]`).
//!
//! ```toml
//! seed = 7
//!
//! [[timeline]]
//! duration_ms = 30000
//! focus = { region = 5 }        # regions 1..9, row-major from top-left
//!
//! [[timeline]]
//! duration_ms = 30000
//! focus = { split = { a = 1, b = 9, ratio = 0.5 } }
//!
//! [[timeline]]
//! duration_ms = 30000
//! focus = "none"                # nobody is given a focus point
//!
//! [[roster]]
//! count = 31
//! behavior = "attentive"        # attentive | distracted | intermittent
//! mse_target = 0.07
//! sample_rate_hz = 30
//! ```

use std::path::Path;

use gazeclass_core::simulate::ScenarioScript;
use gazeclass_server::config::{ConfigError, SessionConfig};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
pub struct ScriptFile {
    #[serde(flatten)]
    pub script: ScenarioScript,
    #[serde(default)]
    pub session: Option<SessionConfig>,
}

impl ScriptFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let f: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        f.script.validate()?;
        if let Some(s) = &f.session {
            s.validate()?;
        }
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gazeclass_core::simulate::{Behavior, Focus};

    #[test]
    fn documented_example_parses() {
        let f = ScriptFile::parse(
            r#"
            seed = 7
            [[timeline]]
            duration_ms = 30000
            focus = { region = 5 }
            [[timeline]]
            duration_ms = 30000
            focus = { split = { a = 1, b = 9, ratio = 0.5 } }
            [[timeline]]
            duration_ms = 30000
            focus = "none"
            [[roster]]
            count = 31
            behavior = "attentive"
            [[roster]]
            behavior = "intermittent"
            [session.alert]
            threshold = 0.4
            "#,
        )
        .unwrap();
        assert_eq!(f.script.seed, 7);
        assert_eq!(f.script.student_count(), 32);
        assert_eq!(f.script.duration_ms(), 90_000);
        assert_eq!(f.script.timeline[2].focus, Focus::None);
        assert_eq!(f.script.roster[1].profile.behavior, Behavior::Intermittent);
        assert_eq!(f.session.unwrap().alert.threshold, 0.4);
    }

    #[test]
    fn bad_region_is_rejected() {
        let err = ScriptFile::parse(
            "[[timeline]]\nduration_ms = 1000\nfocus = { region = 10 }\n[[roster]]\ncount = 1\n",
        );
        assert!(err.is_err());
    }
}
