//! Run configuration, one JSON document per analysis.

use std::path::{Path, PathBuf};

use disparity_core::data_model::{
    AdmissibleSet, ColumnKind, ColumnMeta, Covariate, Criterion, EligibilityPartition, EstimatorKind, ModelForm,
    OutcomeKind, Prop3Weights, Proposition, Scale, StandardPopulation, TrialSpec, Truncation, TIME_UNIT,
};
use disparity_core::emulation::SelectionMode;
use disparity_core::inference::{InferenceConfig, ResampleMode};
use disparity_core::oracle_sim::DagConfig;
use disparity_core::sampling_design::DesignSizes;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::Schema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Estimate,
    Simulate,
    Sample,
    Validate,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EnrollmentGroups {
    /// Label of group 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginalized: Option<String>,
    /// Label of group 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub referent: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindConfig {
    Binary,
    Categorical,
    Continuous,
}

impl From<KindConfig> for ColumnKind {
    fn from(k: KindConfig) -> Self {
        match k {
            KindConfig::Binary => ColumnKind::Binary,
            KindConfig::Categorical => ColumnKind::Categorical,
            KindConfig::Continuous => ColumnKind::Continuous,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateConfig {
    pub name: String,
    pub kind: KindConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots: Option<Vec<f64>>,
}

/// `values` or a closed interval `[lower, upper]`, either bound optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionConfig {
    pub variable: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

impl CriterionConfig {
    fn build(&self) -> Result<Criterion> {
        let admissible = match (&self.values, self.lower, self.upper) {
            (Some(v), None, None) => AdmissibleSet::Values(v.clone()),
            (None, lower, upper) if lower.is_some() || upper.is_some() => AdmissibleSet::Interval { lower, upper },
            _ => {
                return Err(CliError::Config(format!(
                    "criterion on `{}` needs either `values` or `lower`/`upper`",
                    self.variable
                )))
            }
        };
        Ok(Criterion { variable: self.variable.clone(), admissible })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EligibilityConfig {
    #[serde(default)]
    pub pre: Vec<CriterionConfig>,
    #[serde(default)]
    pub intervened: Vec<CriterionConfig>,
    #[serde(default)]
    pub post: Vec<CriterionConfig>,
    #[serde(default)]
    pub post_affected_by_intervened: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TimeZero {
    #[serde(default)]
    pub selection: SelectionMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeConfig {
    pub kind: OutcomeKind,
}

impl Default for OutcomeConfig {
    fn default() -> Self {
        Self { kind: OutcomeKind::Binary }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub mode: ResampleMode,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<usize>,
    /// CSV of per-replicate differences.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates_out: Option<PathBuf>,
}

fn default_replicates() -> usize {
    1000
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub proposition: Proposition,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorKind,
    #[serde(default = "default_model")]
    pub model: ModelForm,
    #[serde(default)]
    pub prop3_weights: Prop3Weights,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapConfig>,
}

fn default_estimator() -> EstimatorKind {
    EstimatorKind::Both
}

fn default_model() -> ModelForm {
    ModelForm::MainEffects
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub n0: f64,
    pub n1: f64,
    pub n2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DagSource {
    Path(PathBuf),
    Inline(DagConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dag: Option<DagSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// CSV written by simulate and sample modes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub enrollment_groups: EnrollmentGroups,
    #[serde(default)]
    pub covariates: Vec<CovariateConfig>,
    #[serde(default)]
    pub eligibility: EligibilityConfig,
    #[serde(default)]
    pub allowables: Vec<String>,
    #[serde(default)]
    pub non_allowables: Vec<String>,
    pub standard: StandardPopulation,
    #[serde(default)]
    pub time_zero: TimeZero,
    #[serde(default)]
    pub outcome: OutcomeConfig,
    pub analysis: AnalysisConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingConfig>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.data.as_mut() {
            rebase(p);
        }
        for p in [cfg.out.as_mut(), cfg.data_out.as_mut()].into_iter().flatten() {
            rebase(p);
        }
        if let Some(p) = cfg.analysis.bootstrap.as_mut().and_then(|b| b.replicates_out.as_mut()) {
            rebase(p);
        }
        if let Some(DagSource::Path(p)) = cfg.dag.as_mut() {
            rebase(p);
        }
        Ok(cfg)
    }

    fn covariate(&self, name: &str) -> Result<Covariate> {
        if name == TIME_UNIT {
            return Ok(Covariate::new(name));
        }
        let c = self
            .covariates
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| CliError::Config(format!("`{name}` is not declared under `covariates`")))?;
        Ok(Covariate { name: c.name.clone(), knots: c.knots.clone() })
    }

    pub fn spec(&self) -> Result<TrialSpec> {
        let build = |v: &[CriterionConfig]| v.iter().map(CriterionConfig::build).collect::<Result<Vec<_>>>();
        let e = &self.eligibility;
        let spec = TrialSpec {
            partition: EligibilityPartition {
                w_ddagger: build(&e.pre)?,
                w_dagger: build(&e.intervened)?,
                w_prime: build(&e.post)?,
                prime_affected_by_dagger: e.post_affected_by_intervened,
            },
            allowables: self.allowables.iter().map(|n| self.covariate(n)).collect::<Result<_>>()?,
            non_allowables: self.non_allowables.iter().map(|n| self.covariate(n)).collect::<Result<_>>()?,
            standard: self.standard.clone(),
            proposition: self.analysis.proposition,
            estimator: self.analysis.estimator,
            model: self.analysis.model,
            prop3_weights: self.analysis.prop3_weights,
            truncation: self.analysis.truncation.map(|tail| Truncation { tail }),
            scale: Scale::Difference,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn schema(&self) -> Schema {
        Schema {
            covariates: self.covariates.iter().map(|c| ColumnMeta::new(c.name.clone(), c.kind.into())).collect(),
            outcome: self.outcome.kind,
        }
    }

    pub fn inference(&self, seed: u64) -> Option<InferenceConfig> {
        self.analysis.bootstrap.as_ref().filter(|b| b.replicates > 0).map(|b| InferenceConfig {
            replicates: b.replicates,
            mode: b.mode,
            level: b.level,
            seed,
            subsample: b.subsample,
        })
    }

    pub fn sizes(&self) -> Result<DesignSizes> {
        let s = self.sampling.ok_or_else(|| CliError::Config("sample mode needs a `sampling` block".into()))?;
        Ok(DesignSizes::uniform(s.n0, s.n1, s.n2))
    }

    pub fn dag(&self) -> Result<DagConfig> {
        match &self.dag {
            Some(DagSource::Inline(d)) => Ok(d.clone()),
            Some(DagSource::Path(p)) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
            }
            None => Err(CliError::Config("this mode needs a `dag`".into())),
        }
    }
}
