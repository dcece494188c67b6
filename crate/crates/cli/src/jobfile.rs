//! The JSON job document shared by `account`, `sweep-t` and `optimize`.
//!
//! ```json
//! {
//!   "mechanism": "plrvo",
//!   "params": {"k": 141.06, "theta": 8.32e-4},
//!   "job": {"steps_T": 250, "sampling_rate_zeta": 0.01024, "model_dim_N": 1000,
//!           "clip_C": 10.0, "delta": 2e-5, "lambda_max": 119},
//!   "target": {"epsilon_star": 1.8, "delta_star": 2e-5},
//!   "optimizer": {"clip_min": 5.0, "clip_max": 10.0}
//! }
//! ```
//!
//! `job.lambda_max` may be omitted and then defaults per mechanism. Unknown
//! keys are rejected at every level.

use plrvo::optimizer::{FeasibilityConfig, JobSkeleton};
use plrvo::{default_lambda_max, AccountingJob, LambdaSearch, Mechanism, PrivacyTarget, SumMode, DEFAULT_LAMBDA_MAX};
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::CliError;

const TOP_LEVEL: [&str; 5] = ["mechanism", "params", "job", "target", "optimizer"];

/// Optional `optimizer` section: the search box and tolerances.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub clip_min: f64,
    pub clip_max: Option<f64>,
    pub gamma_cdf_tol: Option<f64>,
    pub distortion_cap: Option<f64>,
    pub mode: Option<SumMode>,
    pub lambda_search: Option<LambdaSearch>,
}

#[derive(Debug, Clone)]
pub struct JobFile {
    pub mechanism: Mechanism,
    job: Map<String, Value>,
    pub target: Option<PrivacyTarget>,
    pub optimizer: Option<OptimizerSection>,
}

fn schema(msg: impl std::fmt::Display) -> CliError {
    CliError::Schema(msg.to_string())
}

impl JobFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| schema(format!("job file is not valid JSON: {e}")))?;
        let Value::Object(mut map) = value else {
            return Err(schema("job file must be a JSON object"));
        };
        if let Some(unknown) = map.keys().find(|k| !TOP_LEVEL.contains(&k.as_str())) {
            return Err(schema(format!("unknown top-level key `{unknown}`")));
        }
        let mut mech = Map::new();
        for key in ["mechanism", "params"] {
            let v = map.remove(key).ok_or_else(|| schema(format!("missing key `{key}`")))?;
            mech.insert(key.to_string(), v);
        }
        let mechanism: Mechanism =
            serde_json::from_value(Value::Object(mech)).map_err(|e| schema(format!("mechanism/params: {e}")))?;
        let job = match map.remove("job") {
            Some(Value::Object(job)) => job,
            Some(_) => return Err(schema("`job` must be an object")),
            None => return Err(schema("missing key `job`")),
        };
        let target = map
            .remove("target")
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| schema(format!("target: {e}")))?;
        let optimizer = map
            .remove("optimizer")
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| schema(format!("optimizer: {e}")))?;
        Ok(JobFile {
            mechanism,
            job,
            target,
            optimizer,
        })
    }

    /// The accounting job, with `lambda_max` defaulted when absent.
    pub fn accounting_job(&self) -> Result<AccountingJob, CliError> {
        let mut job = self.job.clone();
        if !job.contains_key("lambda_max") {
            let clip = job.get("clip_C").and_then(Value::as_f64).unwrap_or(0.0);
            job.insert("lambda_max".into(), default_lambda_max(&self.mechanism, clip).into());
        }
        serde_json::from_value(Value::Object(job)).map_err(|e| schema(format!("job: {e}")))
    }

    /// Optimizer configuration built from `job`, `target` and `optimizer`.
    /// `clip_C` and `delta` in `job` are ignored: the optimizer chooses the
    /// clip and uses `target.delta_star`.
    pub fn feasibility_config(&self) -> Result<FeasibilityConfig, CliError> {
        let target = self.target.ok_or_else(|| schema("optimize needs a `target` section"))?;
        let section = self
            .optimizer
            .clone()
            .ok_or_else(|| schema("optimize needs an `optimizer` section"))?;
        let mut job = self.job.clone();
        job.remove("clip_C");
        job.remove("delta");
        job.entry("lambda_max").or_insert(DEFAULT_LAMBDA_MAX.into());
        let skeleton: JobSkeleton =
            serde_json::from_value(Value::Object(job)).map_err(|e| schema(format!("job: {e}")))?;
        let mut cfg = FeasibilityConfig::new(section.clip_min, section.clip_max, target, skeleton)?;
        if let Some(t) = section.gamma_cdf_tol {
            cfg.gamma_cdf_tol = t;
        }
        if let Some(c) = section.distortion_cap {
            cfg.distortion_cap = c;
        }
        if let Some(m) = section.mode {
            cfg.mode = m;
        }
        if let Some(s) = section.lambda_search {
            cfg.lambda_search = s;
        }
        // Re-run validation on the adjusted fields.
        let text = serde_json::to_string(&cfg).map_err(|e| schema(e.to_string()))?;
        serde_json::from_str::<FeasibilityConfig>(&text).map_err(|e| schema(format!("optimizer: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{"mechanism":"gaussian","params":{"sigma":1.0},
        "job":{"steps_T":10,"sampling_rate_zeta":0.1,"model_dim_N":3,"clip_C":1.0,"delta":1e-5}}"#;

    #[test]
    fn defaults_lambda_max() {
        let f = JobFile::parse(GOOD).unwrap();
        assert_eq!(f.accounting_job().unwrap().lambda_max, DEFAULT_LAMBDA_MAX);
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(JobFile::parse(&GOOD.replace("\"job\"", "\"jobs\"")).is_err());
        let f = JobFile::parse(&GOOD.replace("\"delta\"", "\"dlta\"")).unwrap();
        assert!(f.accounting_job().is_err());
        assert!(JobFile::parse(&GOOD.replace("\"sigma\"", "\"sigm\"")).is_err());
        assert!(JobFile::parse(&GOOD.replace("gaussian", "cauchy")).is_err());
    }
}
