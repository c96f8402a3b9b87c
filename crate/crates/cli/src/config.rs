//! Run configuration: defaults, then a TOML file, then `--set` overrides,
//! then named flags.

use std::path::{Path, PathBuf};

use bayes_cancel::ingest::{default_features, Column};
use bayes_cancel::model::{Family, ModelSpec, PriorSpec};
use bayes_cancel::predict::PredictMode;
use bayes_cancel::sampler::SamplerConfig;
use bayes_cancel::simulate::SimulationSpec;
use bayes_cancel::{Error, Result};
use serde::{Deserialize, Serialize};

pub const FORMAT_HEADER_CONFIG: &str = "# bayes-cancel config v1";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: String,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub sampler: SamplerSection,
    pub output: OutputConfig,
    pub predict: PredictConfig,
    pub simulate: SimulationSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub features: Vec<String>,
    pub positive_label: String,
    /// Rows to draw without replacement; all rows when absent.
    pub subsample_n: Option<usize>,
    pub subsample_seed: u64,
    /// Merge rows with identical predictors into multi-trial observations.
    pub aggregate: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            features: default_features().into_iter().map(Column::name).collect(),
            positive_label: "Not_Canceled".into(),
            subsample_n: None,
            subsample_seed: 1,
            aggregate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub family: String,
    pub priors: PriorOverrides,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            family: "logistic".into(),
            priors: PriorOverrides::default(),
        }
    }
}

/// Prior settings replacing the family defaults one at a time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intercept_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intercept_sd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_sd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_shape: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_rate: Option<f64>,
}

impl PriorOverrides {
    fn apply(&self, base: PriorSpec) -> PriorSpec {
        PriorSpec {
            intercept_mean: self.intercept_mean.unwrap_or(base.intercept_mean),
            intercept_sd: self.intercept_sd.unwrap_or(base.intercept_sd),
            slope_mean: self.slope_mean.unwrap_or(base.slope_mean),
            slope_sd: self.slope_sd.unwrap_or(base.slope_sd),
            phi_shape: self.phi_shape.unwrap_or(base.phi_shape),
            phi_rate: self.phi_rate.unwrap_or(base.phi_rate),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub chains: usize,
    pub warmup: usize,
    pub samples: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub init_radius: f64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = SamplerConfig::default();
        SamplerSection {
            chains: d.chains,
            warmup: d.warmup_iters,
            samples: d.sampling_iters,
            seed: d.seed,
            target_accept: d.target_accept,
            max_tree_depth: d.max_tree_depth,
            init_radius: d.init_radius,
        }
    }
}

impl SamplerSection {
    pub fn to_sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            chains: self.chains,
            warmup_iters: self.warmup,
            sampling_iters: self.samples,
            target_accept: self.target_accept,
            max_tree_depth: self.max_tree_depth,
            seed: self.seed,
            init_radius: self.init_radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Text,
    Csv,
    #[serde(alias = "structured")]
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("fit"),
            format: OutputFormat::Text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictConfig {
    pub mode: PredictMode,
    pub seed: u64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            mode: PredictMode::Binary,
            seed: 1,
        }
    }
}

impl RunConfig {
    pub fn family(&self) -> Result<Family> {
        Family::parse(&self.model.family).ok_or_else(|| {
            Error::Config(format!(
                "model.family: unknown family {:?}",
                self.model.family
            ))
        })
    }

    pub fn features(&self) -> Result<Vec<Column>> {
        if self.data.features.is_empty() {
            return Err(Error::Config(
                "data.features must name at least one column".into(),
            ));
        }
        self.data
            .features
            .iter()
            .map(|f| Column::parse(f).ok_or_else(|| Error::UnknownFeature(f.clone())))
            .collect()
    }

    pub fn model_spec(&self, n_coefficients: usize) -> Result<ModelSpec> {
        let family = self.family()?;
        ModelSpec::new(
            family,
            self.model.priors.apply(family.default_priors()),
            n_coefficients,
        )
    }

    /// Checks everything that can be checked without reading data.
    pub fn validate(&self) -> Result<()> {
        self.family()?;
        self.features()?;
        self.model
            .priors
            .apply(self.family()?.default_priors())
            .validate()?;
        self.sampler.to_sampler_config().validate()
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data
            .path
            .as_deref()
            .ok_or_else(|| Error::Config("data.path is required (use --data)".into()))
    }

    pub fn to_toml(&self) -> Result<String> {
        let body = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        Ok(format!("{FORMAT_HEADER_CONFIG}\n{body}"))
    }
}

/// Parses a `--set` value as TOML, falling back to a plain string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Splits a dotted key into its segments; quoted segments may contain dots.
fn key_path(key: &str) -> Result<Vec<String>> {
    let bad = || Error::Config(format!("malformed key {key:?}"));
    let mut table = toml::from_str::<toml::Table>(&format!("{key} = 0")).map_err(|_| bad())?;
    let mut path = Vec::new();
    loop {
        let (name, value) = table.into_iter().next().ok_or_else(bad)?;
        path.push(name);
        match value {
            toml::Value::Table(inner) => table = inner,
            _ => return Ok(path),
        }
    }
}

/// Sets `a.b.c = value` inside `table`, creating sections as needed.
pub fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts = key_path(key)?;
    let (last, sections) = parts.split_last().expect("non-empty key");
    let mut current = table;
    for section in sections {
        let entry = current
            .entry(section.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {section} is not a section")))?;
    }
    current.insert(last.clone(), value);
    Ok(())
}

/// An override from `--set key=value`.
pub fn parse_assignment(raw: &str) -> Result<(String, toml::Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--set expects key=value, got {raw:?}")))?;
    Ok((key.trim().to_string(), parse_value(value.trim())))
}

/// Builds the effective configuration. Later sources win: file, then
/// `overrides` in order.
pub fn resolve(
    command: &str,
    file: Option<&Path>,
    overrides: &[(String, toml::Value)],
) -> Result<RunConfig> {
    let mut table = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str::<toml::Table>(&text)
                .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?
        }
        None => toml::Table::new(),
    };
    for (key, value) in overrides {
        set_dotted(&mut table, key, value.clone())?;
    }
    let mut config: RunConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    config.command = command.to_string();
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_need_only_a_data_path() {
        let c = resolve("fit", None, &[]).unwrap();
        assert!(c.data_path().is_err());
        assert_eq!(c.sampler.chains, 4);
        assert_eq!(c.data.features.len(), 11);
        c.validate().unwrap();
    }

    #[test]
    fn later_overrides_win() {
        let overrides = vec![
            parse_assignment("sampler.chains=2").unwrap(),
            parse_assignment("sampler.chains = 3").unwrap(),
            parse_assignment("data.path=bookings.csv").unwrap(),
            parse_assignment(r#"data.features=["lead.time","P.C"]"#).unwrap(),
        ];
        let c = resolve("fit", None, &overrides).unwrap();
        assert_eq!(c.sampler.chains, 3);
        assert_eq!(c.data.path.as_deref(), Some(Path::new("bookings.csv")));
        assert_eq!(c.data.features, ["lead.time", "P.C"]);
    }

    #[test]
    fn quoted_segments_keep_their_dots() {
        let c = resolve(
            "simulate",
            None,
            &[parse_assignment(r#"simulate.coefficients."lead.time"=-0.5"#).unwrap()],
        )
        .unwrap();
        assert_eq!(c.simulate.coefficients["lead.time"], -0.5);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let e = resolve(
            "fit",
            None,
            &[parse_assignment("sampler.chainz=2").unwrap()],
        )
        .unwrap_err();
        assert!(
            matches!(e, Error::Config(ref m) if m.contains("chainz")),
            "{e}"
        );
    }

    #[test]
    fn prior_overrides_replace_single_fields() {
        let c = resolve(
            "fit",
            None,
            &[parse_assignment("model.priors.slope_sd=1.5").unwrap()],
        )
        .unwrap();
        let spec = c.model_spec(3).unwrap();
        assert_eq!(spec.priors.slope_sd, 1.5);
        assert_eq!(spec.priors.intercept_mean, 3.5);
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut c = resolve(
            "fit",
            None,
            &[parse_assignment("model.priors.phi_rate=0.5").unwrap()],
        )
        .unwrap();
        c.data.path = Some("x.csv".into());
        let text = c.to_toml().unwrap();
        assert!(text.starts_with(FORMAT_HEADER_CONFIG));
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
