//! Layered run configuration: library defaults, then the TOML file, then
//! command-line flags, each overriding the layer below.

use std::path::Path;

use offrec_core::data::{LogSchema, RewardSpec, SplitSpec};
use offrec_core::{Error, Result};
use serde::de::DeserializeOwned;

/// The TOML file as a whole. Hyperparameter sections stay untyped tables
/// here because their shapes are owned by the library config structs; they
/// are materialized per command through [`build_section`].
#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataSection,
    pub policy: Option<toml::Table>,
    pub critic: Option<toml::Table>,
    pub pretrain: Option<toml::Table>,
    pub crr: Option<toml::Table>,
    #[serde(default)]
    pub eval: EvalSection,
}

impl RunConfig {
    /// Missing path means an empty file: every default applies.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default = "default_schema")]
    pub schema: LogSchema,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_cold_start")]
    pub emit_cold_start: bool,
    /// Defaults to the scheme matching the schema: a rating threshold for
    /// rating logs, per-event values for session logs.
    pub reward: Option<RewardSpec>,
    #[serde(default = "default_split")]
    pub split: SplitSpec,
}

impl DataSection {
    /// Each schema produces one feedback kind, so the reward scheme must
    /// match it; a mismatch would otherwise surface only mid-parse.
    pub fn resolved_reward(&self) -> Result<RewardSpec> {
        match (&self.reward, self.schema) {
            (None, LogSchema::Ratings) => Ok(RewardSpec::rating_default()),
            (None, LogSchema::Sessions) => Ok(RewardSpec::event_default()),
            (Some(r @ RewardSpec::RatingThreshold { .. }), LogSchema::Ratings)
            | (Some(r @ RewardSpec::EventValued { .. }), LogSchema::Sessions) => Ok(r.clone()),
            (Some(r), schema) => Err(Error::config(format!(
                "reward scheme {r:?} cannot score a {schema:?} log"
            ))),
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            schema: default_schema(),
            window: default_window(),
            emit_cold_start: default_cold_start(),
            reward: None,
            split: default_split(),
        }
    }
}

#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_k")]
    pub k: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { seed: 0, k: default_k() }
    }
}

fn default_schema() -> LogSchema {
    LogSchema::Ratings
}
fn default_window() -> usize {
    30
}
fn default_cold_start() -> bool {
    true
}
fn default_split() -> SplitSpec {
    SplitSpec { train: 0.8, validation: 0.1, test: 0.1 }
}
fn default_k() -> usize {
    10
}

/// Materializes one hyperparameter section into its library struct.
///
/// `reserved` fields belong to the pipeline (catalog size, window) and are
/// rejected if the file sets them; `set` entries are injected on top, which
/// is how both derived fields and flag overrides win over the file.
pub fn build_section<T: DeserializeOwned>(
    name: &str,
    table: Option<&toml::Table>,
    reserved: &[&str],
    set: &[(&str, serde_json::Value)],
) -> Result<T> {
    let mut value = match table {
        Some(t) => serde_json::to_value(t)
            .map_err(|e| Error::config(format!("[{name}]: {e}")))?,
        None => serde_json::Value::Object(serde_json::Map::new()),
    };
    let obj = value.as_object_mut().expect("a TOML table serializes to a JSON object");
    for &field in reserved {
        if obj.contains_key(field) {
            return Err(Error::config(format!(
                "[{name}].{field} is derived from the dataset; remove it from the config file"
            )));
        }
    }
    for (field, v) in set {
        obj.insert((*field).to_string(), v.clone());
    }
    serde_json::from_value(value).map_err(|e| Error::config(format!("[{name}]: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use offrec_core::crr::{CrrConfig, FilterKind};
    use offrec_core::models::PolicyConfig;

    #[test]
    fn empty_config_gives_every_default() {
        let cfg = RunConfig::load(None).unwrap();
        assert_eq!(cfg.data.window, 30);
        assert_eq!(cfg.data.schema, LogSchema::Ratings);
        assert_eq!(cfg.eval.k, 10);
        assert!(cfg.policy.is_none() && cfg.crr.is_none());
    }

    #[test]
    fn sections_materialize_with_injected_fields() {
        let text = r#"
            [data]
            window = 4

            [policy]
            dim = 32
            heads = 4

            [crr]
            iterations = 50
            [crr.filter]
            kind = "binary"
        "#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        let policy: PolicyConfig = build_section(
            "policy",
            cfg.policy.as_ref(),
            &["items", "window"],
            &[("items", 9.into()), ("window", cfg.data.window.into())],
        )
        .unwrap();
        assert_eq!(policy.dim, 32);
        assert_eq!(policy.heads, 4);
        assert_eq!(policy.items, 9);
        assert_eq!(policy.window, 4);
        assert_eq!(policy.blocks, 2);

        let crr: CrrConfig = build_section("crr", cfg.crr.as_ref(), &[], &[]).unwrap();
        assert_eq!(crr.iterations, 50);
        assert_eq!(crr.filter.kind, FilterKind::Binary);
        assert_eq!(crr.batch_size, 128);
    }

    #[test]
    fn reserved_fields_in_the_file_are_rejected() {
        let cfg: RunConfig = toml::from_str("[policy]\nitems = 7\n").unwrap();
        let err = build_section::<PolicyConfig>(
            "policy",
            cfg.policy.as_ref(),
            &["items", "window"],
            &[],
        )
        .unwrap_err();
        assert!(err.to_string().contains("[policy].items"), "{err}");
    }

    #[test]
    fn unknown_fields_name_the_section_and_field() {
        let err = toml::from_str::<RunConfig>("[data]\nwindwo = 4\n").unwrap_err();
        assert!(err.to_string().contains("windwo"), "{err}");

        let cfg: RunConfig = toml::from_str("[pretrain]\nepochz = 2\n").unwrap();
        let err = build_section::<offrec_core::pretrain::PretrainConfig>(
            "pretrain",
            cfg.pretrain.as_ref(),
            &[],
            &[("epochs", 1.into())],
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("pretrain") && msg.contains("epochz"), "{msg}");
    }

    #[test]
    fn flag_overrides_beat_file_values() {
        let cfg: RunConfig = toml::from_str("[crr]\niterations = 50\nseed = 3\n").unwrap();
        let crr: CrrConfig =
            build_section("crr", cfg.crr.as_ref(), &[], &[("seed", 9.into())]).unwrap();
        assert_eq!(crr.iterations, 50);
        assert_eq!(crr.seed, 9);
    }
}
