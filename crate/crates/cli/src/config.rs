//! Run configuration: a TOML file, overridden by `MALXAI__section__key`
//! environment variables, overridden by command-line flags.

use std::path::{Path, PathBuf};

use malxai::dataio::SmoteConfig;
use malxai::evalkit::SweepCell;
use malxai::models::{ModelKind, ModelSpec, TrainConfig};
use malxai::xai::{LimeConfig, ShapConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const ENV_PREFIX: &str = "MALXAI__";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Balance {
    None,
    Undersample,
    Smote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthRecipe {
    pub malware: usize,
    pub benign: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// CSV with columns `hash, t_0..t_99, malware`.
    pub path: Option<PathBuf>,
    /// Generated data, used when `path` is absent.
    pub synth: Option<SynthRecipe>,
    pub balance: Balance,
    pub smote: SmoteConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            synth: Some(SynthRecipe { malware: 1000, benign: 1000, seed: 1 }),
            balance: Balance::None,
            smote: SmoteConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Random,
    TopDown,
    BottomUp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub mode: SplitKind,
    pub train_frac: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { mode: SplitKind::Random, train_frac: 0.8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lime,
    Shap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub methods: Vec<Method>,
    /// `index:<row>` or `hash:<md5>`.
    pub sample: String,
    /// SHAP background rows drawn from the benign class.
    pub background_size: usize,
    /// Rows explained for the batch summary (bar chart).
    pub summary_size: usize,
    pub svg: bool,
    pub lime: LimeConfig,
    pub shap: ShapConfig,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Lime, Method::Shap],
            sample: "index:0".into(),
            background_size: 10,
            summary_size: 4,
            svg: true,
            lime: LimeConfig::default(),
            shap: ShapConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    #[serde(default)]
    pub cell: Vec<SweepCell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Grid TOML with `[[cell]]` tables; the built-in 16-row grid when
    /// absent.
    pub grid: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { grid: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub threshold: f64,
    pub data: DataConfig,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub split: SplitConfig,
    pub explain: ExplainConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: PathBuf::from("runs"),
            threshold: 0.5,
            data: DataConfig::default(),
            model: ModelSpec::default_for(ModelKind::Mlp),
            train: TrainConfig::default(),
            split: SplitConfig::default(),
            explain: ExplainConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// Parses an override value as a TOML literal, falling back to a bare
/// string.
fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

pub fn apply_overrides(
    table: &mut toml::Table,
    vars: impl IntoIterator<Item = (String, String)>,
) -> Result<(), CliError> {
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(|s| s.to_ascii_lowercase()).collect();
        if path.iter().any(String::is_empty) {
            return Err(CliError::config(format!("malformed override variable {key}")));
        }
        let mut node = &mut *table;
        for part in &path[..path.len() - 1] {
            let entry = node.entry(part.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            node = entry
                .as_table_mut()
                .ok_or_else(|| CliError::config(format!("{key}: {part} is not a table")))?;
        }
        node.insert(path[path.len() - 1].clone(), parse_value(&raw));
    }
    Ok(())
}

impl RunConfig {
    /// Reads `path` (or starts from defaults), then applies environment
    /// overrides.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::config(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| CliError::config(format!("config {}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        apply_overrides(&mut table, env)?;
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate().map_err(|e| CliError::config(e.to_string()))?;
        self.explain.lime.validate().map_err(|e| CliError::config(e.to_string()))?;
        if !(self.split.train_frac > 0.0 && self.split.train_frac < 1.0) {
            return Err(CliError::config(format!("split.train_frac must be in (0, 1), got {}", self.split.train_frac)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(CliError::config(format!("threshold must be in [0, 1], got {}", self.threshold)));
        }
        if self.data.path.is_none() && self.data.synth.is_none() {
            return Err(CliError::config("data needs either path or synth"));
        }
        if self.explain.background_size == 0 {
            return Err(CliError::config("explain.background_size must be >= 1"));
        }
        Ok(())
    }

    /// First 12 hex digits of the SHA-256 of the canonical JSON form, with
    /// `out_dir` left out.
    pub fn digest(&self) -> String {
        let keyed = RunConfig { out_dir: PathBuf::new(), ..self.clone() };
        let json = serde_json::to_vec(&keyed).expect("config serializes");
        Sha256::digest(&json).iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

pub fn load_grid(path: &Path) -> Result<Vec<SweepCell>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read grid {}: {e}", path.display())))?;
    let grid: GridFile = toml::from_str(&text).map_err(|e| CliError::config(format!("grid {}: {e}", path.display())))?;
    Ok(grid.cell)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn defaults_are_valid() {
        let cfg = RunConfig::load(None, vec![]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.digest().len(), 12);
    }

    #[test]
    fn env_overrides_nested_keys() {
        let env = vars(&[
            ("MALXAI__train__epochs", "7"),
            ("MALXAI__model__kind", "cnn-lstm"),
            ("MALXAI__model__hidden", "32"),
            ("MALXAI__data__balance", "smote"),
            ("OTHER", "x"),
        ]);
        let cfg = RunConfig::load(None, env).unwrap();
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.model.kind(), ModelKind::CnnLstm);
        assert_eq!(cfg.data.balance, Balance::Smote);
    }

    #[test]
    fn bad_values_are_config_errors() {
        let err = RunConfig::load(None, vars(&[("MALXAI__train__batch_size", "0")])).unwrap_err();
        assert_eq!(err.code, 1);
        let err = RunConfig::load(None, vars(&[("MALXAI__train__epochs", "many")])).unwrap_err();
        assert_eq!(err.code, 1);
        let err = RunConfig::load(None, vars(&[("MALXAI__nonsense", "1")])).unwrap_err();
        assert_eq!(err.code, 1);
    }

    #[test]
    fn toml_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        let cfg = RunConfig::default();
        std::fs::write(&p, toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(RunConfig::load(Some(&p), vec![]).unwrap(), cfg);
    }
}
