//! Validated parameter types shared by the accountant, the optimizer and the
//! samplers. Every constructor rejects out-of-range values; deserialization
//! goes through the same constructors.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn require(cond: bool, field: &'static str, message: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::invalid(field, message()))
    }
}

/// Shape `k` and scale `theta` of the Gamma law followed by the inverse noise
/// scale `u = 1/b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGamma", deny_unknown_fields)]
pub struct GammaPlrvParams {
    k: f64,
    theta: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGamma {
    k: f64,
    theta: f64,
}

impl TryFrom<RawGamma> for GammaPlrvParams {
    type Error = Error;
    fn try_from(raw: RawGamma) -> Result<Self> {
        GammaPlrvParams::new(raw.k, raw.theta)
    }
}

impl GammaPlrvParams {
    pub fn new(k: f64, theta: f64) -> Result<Self> {
        require(k > 0.0 && k.is_finite(), "k", || {
            format!("shape must be positive and finite, got {k}")
        })?;
        require(theta > 0.0 && theta.is_finite(), "theta", || {
            format!("scale must be positive and finite, got {theta}")
        })?;
        Ok(GammaPlrvParams { k, theta })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Expected per-coordinate noise magnitude is finite only for `k > 1`.
    pub fn has_finite_distortion(&self) -> bool {
        self.k > 1.0
    }

    /// Largest moment order whose MGF arguments stay admissible for clip `C`:
    /// `floor(1 / (C theta)) - 1`.
    pub fn max_lambda_for_clip(&self, clip: f64) -> u64 {
        max_admissible_lambda(clip, self.theta)
    }

    /// Checks that the Gamma MGF exists at every argument the accountant
    /// evaluates for `job`; the worst case is `t = lambda_max * C`.
    pub fn validate(&self, job: &AccountingJob) -> Result<()> {
        let t_theta = job.lambda_max as f64 * job.clip_c * self.theta;
        if t_theta < 1.0 {
            Ok(())
        } else {
            Err(Error::MgfDomainViolation {
                t_theta,
                max_lambda: self.max_lambda_for_clip(job.clip_c),
            })
        }
    }
}

pub(crate) fn max_admissible_lambda(clip: f64, theta: f64) -> u64 {
    let inv = 1.0 / (clip * theta);
    if !inv.is_finite() || inv >= u64::MAX as f64 {
        return u64::MAX;
    }
    (inv.floor() as u64).saturating_sub(1)
}

/// Standalone validation entry point: `Ok` iff `lambda_max * C * theta < 1`.
pub fn validate(job: &AccountingJob, params: &GammaPlrvParams) -> Result<()> {
    params.validate(job)
}

/// Noise multiplier of the Gaussian mechanism; the noise standard deviation
/// is `C * sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGaussian", deny_unknown_fields)]
pub struct GaussianParams {
    sigma: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGaussian {
    sigma: f64,
}

impl TryFrom<RawGaussian> for GaussianParams {
    type Error = Error;
    fn try_from(raw: RawGaussian) -> Result<Self> {
        GaussianParams::new(raw.sigma)
    }
}

impl GaussianParams {
    pub fn new(sigma: f64) -> Result<Self> {
        require(sigma > 0.0 && !sigma.is_nan(), "sigma", || {
            format!("noise multiplier must be positive, got {sigma}")
        })?;
        Ok(GaussianParams { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Fixed Laplace scale `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLaplace", deny_unknown_fields)]
pub struct LaplaceParams {
    b: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLaplace {
    b: f64,
}

impl TryFrom<RawLaplace> for LaplaceParams {
    type Error = Error;
    fn try_from(raw: RawLaplace) -> Result<Self> {
        LaplaceParams::new(raw.b)
    }
}

impl LaplaceParams {
    pub fn new(b: f64) -> Result<Self> {
        require(b > 0.0 && b.is_finite(), "b", || {
            format!("Laplace scale must be positive and finite, got {b}")
        })?;
        Ok(LaplaceParams { b })
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

/// Which noise family a curve or job refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MechanismKind {
    Plrvo,
    Gaussian,
    Laplace,
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MechanismKind::Plrvo => "plrvo",
            MechanismKind::Gaussian => "gaussian",
            MechanismKind::Laplace => "laplace",
        })
    }
}

/// A noise mechanism together with its parameters.
///
/// Serializes as `{"mechanism": "plrvo", "params": {"k": .., "theta": ..}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mechanism", content = "params", rename_all = "lowercase")]
pub enum Mechanism {
    Plrvo(GammaPlrvParams),
    Gaussian(GaussianParams),
    Laplace(LaplaceParams),
}

impl Mechanism {
    pub fn kind(&self) -> MechanismKind {
        match self {
            Mechanism::Plrvo(_) => MechanismKind::Plrvo,
            Mechanism::Gaussian(_) => MechanismKind::Gaussian,
            Mechanism::Laplace(_) => MechanismKind::Laplace,
        }
    }
}

/// Default moment-order cap for Gaussian and Laplace accounting.
pub const DEFAULT_LAMBDA_MAX: u32 = 64;
/// Default user cap on the moment order for PLRV accounting; the MGF bound
/// `floor(1/(C theta)) - 1` may lower it further.
pub const DEFAULT_PLRV_LAMBDA_CAP: u32 = 256;

/// Default `lambda_max` for a mechanism at clip `C`.
pub fn default_lambda_max(mechanism: &Mechanism, clip: f64) -> u32 {
    match mechanism {
        Mechanism::Plrvo(p) => {
            let mgf = p.max_lambda_for_clip(clip).min(u32::MAX as u64) as u32;
            DEFAULT_PLRV_LAMBDA_CAP.min(mgf).max(1)
        }
        _ => DEFAULT_LAMBDA_MAX,
    }
}

/// One accounting request: `T` steps at Poisson rate `zeta` over `N` model
/// coordinates clipped at `C`, converted at failure probability `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJob", deny_unknown_fields)]
pub struct AccountingJob {
    #[serde(rename = "steps_T")]
    pub steps_t: u64,
    pub sampling_rate_zeta: f64,
    #[serde(rename = "model_dim_N")]
    pub model_dim_n: u64,
    #[serde(rename = "clip_C")]
    pub clip_c: f64,
    pub delta: f64,
    pub lambda_max: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJob {
    #[serde(rename = "steps_T")]
    steps_t: u64,
    sampling_rate_zeta: f64,
    #[serde(rename = "model_dim_N")]
    model_dim_n: u64,
    #[serde(rename = "clip_C")]
    clip_c: f64,
    delta: f64,
    lambda_max: u32,
}

impl TryFrom<RawJob> for AccountingJob {
    type Error = Error;
    fn try_from(r: RawJob) -> Result<Self> {
        AccountingJob::new(
            r.steps_t,
            r.sampling_rate_zeta,
            r.model_dim_n,
            r.clip_c,
            r.delta,
            r.lambda_max,
        )
    }
}

impl AccountingJob {
    /// `zeta = 0` and `C = 0` are accepted as degenerate jobs whose moments
    /// are identically zero.
    pub fn new(
        steps_t: u64,
        sampling_rate_zeta: f64,
        model_dim_n: u64,
        clip_c: f64,
        delta: f64,
        lambda_max: u32,
    ) -> Result<Self> {
        require(steps_t >= 1, "steps_T", || "must be at least 1".into())?;
        require((0.0..=1.0).contains(&sampling_rate_zeta), "sampling_rate_zeta", || {
            format!("must lie in [0, 1], got {sampling_rate_zeta}")
        })?;
        require(model_dim_n >= 1, "model_dim_N", || "must be at least 1".into())?;
        require(clip_c >= 0.0 && clip_c.is_finite(), "clip_C", || {
            format!("must be finite and non-negative, got {clip_c}")
        })?;
        require(delta > 0.0 && delta < 1.0, "delta", || {
            format!("must lie in (0, 1), got {delta}")
        })?;
        require(lambda_max >= 1, "lambda_max", || "must be at least 1".into())?;
        Ok(AccountingJob {
            steps_t,
            sampling_rate_zeta,
            model_dim_n,
            clip_c,
            delta,
            lambda_max,
        })
    }

    pub fn with_clip(&self, clip_c: f64) -> Result<Self> {
        AccountingJob::new(
            self.steps_t,
            self.sampling_rate_zeta,
            self.model_dim_n,
            clip_c,
            self.delta,
            self.lambda_max,
        )
    }

    pub fn with_lambda_max(&self, lambda_max: u32) -> Result<Self> {
        AccountingJob::new(
            self.steps_t,
            self.sampling_rate_zeta,
            self.model_dim_n,
            self.clip_c,
            self.delta,
            lambda_max,
        )
    }

    pub fn with_steps(&self, steps_t: u64) -> Result<Self> {
        AccountingJob::new(
            steps_t,
            self.sampling_rate_zeta,
            self.model_dim_n,
            self.clip_c,
            self.delta,
            self.lambda_max,
        )
    }
}

/// Target budget `(epsilon*, delta*)`. `epsilon_star` may be infinite, which
/// makes the privacy constraint vacuous; JSON spells it `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTarget", deny_unknown_fields)]
pub struct PrivacyTarget {
    #[serde(with = "crate::io::extended_f64")]
    pub epsilon_star: f64,
    pub delta_star: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTarget {
    #[serde(with = "crate::io::extended_f64")]
    epsilon_star: f64,
    delta_star: f64,
}

impl TryFrom<RawTarget> for PrivacyTarget {
    type Error = Error;
    fn try_from(r: RawTarget) -> Result<Self> {
        PrivacyTarget::new(r.epsilon_star, r.delta_star)
    }
}

impl PrivacyTarget {
    pub fn new(epsilon_star: f64, delta_star: f64) -> Result<Self> {
        require(epsilon_star > 0.0, "epsilon_star", || {
            format!("must be positive, got {epsilon_star}")
        })?;
        require(delta_star > 0.0 && delta_star < 1.0, "delta_star", || {
            format!("must lie in (0, 1), got {delta_star}")
        })?;
        Ok(PrivacyTarget {
            epsilon_star,
            delta_star,
        })
    }
}

/// Per-step log moments `alpha(lambda)` of one mechanism, plus the number of
/// steps they have been composed over.
///
/// Values are stored per step; [`LogMomentCurve::alpha`] returns
/// `composed_steps * alpha_per_step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCurve", deny_unknown_fields)]
pub struct LogMomentCurve {
    #[serde(flatten)]
    mechanism: Mechanism,
    job: AccountingJob,
    composed_steps: u64,
    alpha_per_step: BTreeMap<u32, f64>,
}

#[derive(Deserialize)]
struct RawCurve {
    #[serde(flatten)]
    mechanism: Mechanism,
    job: AccountingJob,
    composed_steps: u64,
    alpha_per_step: BTreeMap<u32, f64>,
}

impl TryFrom<RawCurve> for LogMomentCurve {
    type Error = Error;
    fn try_from(r: RawCurve) -> Result<Self> {
        let mut curve = LogMomentCurve::new(r.mechanism, r.job, r.alpha_per_step)?;
        require(r.composed_steps >= 1, "composed_steps", || "must be at least 1".into())?;
        curve.composed_steps = r.composed_steps;
        Ok(curve)
    }
}

/// Slack allowed when checking that a curve is nondecreasing in `lambda`.
pub const MONOTONE_SLACK: f64 = 1e-10;

impl LogMomentCurve {
    /// Builds a per-step curve. Every value must be finite and non-negative,
    /// and the curve must be nondecreasing in `lambda` up to
    /// [`MONOTONE_SLACK`].
    pub fn new(mechanism: Mechanism, job: AccountingJob, alpha_per_step: BTreeMap<u32, f64>) -> Result<Self> {
        require(!alpha_per_step.is_empty(), "alpha_per_step", || {
            "curve has no points".into()
        })?;
        let mut prev: Option<(u32, f64)> = None;
        for (&lambda, &alpha) in &alpha_per_step {
            require(lambda >= 1, "alpha_per_step", || "moment orders start at 1".into())?;
            require(alpha >= 0.0 && alpha.is_finite(), "alpha_per_step", || {
                format!("alpha({lambda}) = {alpha} is not a finite non-negative number")
            })?;
            if let Some((pl, pa)) = prev {
                require(alpha >= pa - MONOTONE_SLACK * pa.max(1.0), "alpha_per_step", || {
                    format!("alpha decreases from {pa} at lambda={pl} to {alpha} at lambda={lambda}")
                })?;
            }
            prev = Some((lambda, alpha));
        }
        Ok(LogMomentCurve {
            mechanism,
            job,
            composed_steps: 1,
            alpha_per_step,
        })
    }

    pub fn mechanism(&self) -> &Mechanism {
        &self.mechanism
    }

    pub fn job(&self) -> &AccountingJob {
        &self.job
    }

    pub fn composed_steps(&self) -> u64 {
        self.composed_steps
    }

    pub fn per_step(&self) -> &BTreeMap<u32, f64> {
        &self.alpha_per_step
    }

    pub fn lambdas(&self) -> impl Iterator<Item = u32> + '_ {
        self.alpha_per_step.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.alpha_per_step.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_per_step.is_empty()
    }

    /// Composed log moment at `lambda`, if the curve holds that order.
    pub fn alpha(&self, lambda: u32) -> Option<f64> {
        self.alpha_per_step.get(&lambda).map(|a| self.composed_steps as f64 * a)
    }

    /// Iterates `(lambda, composed alpha)` in increasing `lambda`.
    pub fn points(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        let t = self.composed_steps as f64;
        self.alpha_per_step.iter().map(move |(&l, &a)| (l, t * a))
    }

    pub(crate) fn with_composed_steps(&self, steps: u64) -> LogMomentCurve {
        LogMomentCurve {
            composed_steps: steps,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job(lambda_max: u32) -> AccountingJob {
        AccountingJob::new(250, 0.01024, 1000, 10.0, 2e-5, lambda_max).unwrap()
    }

    #[test]
    fn validate_table2_row() {
        let p = GammaPlrvParams::new(141.06, 8.32e-4).unwrap();
        assert!(validate(&job(119), &p).is_ok());
        match validate(&job(121), &p) {
            Err(Error::MgfDomainViolation { t_theta, max_lambda }) => {
                assert!((t_theta - 1.00672).abs() < 1e-9);
                assert_eq!(max_lambda, 119);
            }
            other => panic!("expected MGF violation, got {other:?}"),
        }
    }

    #[test]
    fn validate_tiny_theta() {
        let p = GammaPlrvParams::new(3.0, 1e-300).unwrap();
        assert!(validate(&job(u32::MAX), &p).is_ok());
    }

    #[test]
    fn constructors_fail_loudly() {
        assert!(GammaPlrvParams::new(0.0, 1.0).is_err());
        assert!(GammaPlrvParams::new(1.0, -1.0).is_err());
        assert!(GammaPlrvParams::new(f64::NAN, 1.0).is_err());
        assert!(GaussianParams::new(0.0).is_err());
        assert!(LaplaceParams::new(-2.0).is_err());
        assert!(AccountingJob::new(0, 0.1, 1, 1.0, 1e-5, 8).is_err());
        assert!(AccountingJob::new(1, 1.5, 1, 1.0, 1e-5, 8).is_err());
        assert!(AccountingJob::new(1, 0.1, 1, 1.0, 1.0, 8).is_err());
        assert!(AccountingJob::new(1, 0.1, 1, 1.0, 1e-5, 0).is_err());
        assert!(PrivacyTarget::new(0.0, 1e-5).is_err());
        assert!(PrivacyTarget::new(f64::INFINITY, 1e-5).is_ok());
    }

    #[test]
    fn json_field_names() {
        let j = job(64);
        let text = serde_json::to_string(&j).unwrap();
        assert_eq!(
            text,
            r#"{"steps_T":250,"sampling_rate_zeta":0.01024,"model_dim_N":1000,"clip_C":10.0,"delta":0.00002,"lambda_max":64}"#
        );
        let back: AccountingJob = serde_json::from_str(&text).unwrap();
        assert_eq!(back, j);
        assert!(serde_json::from_str::<AccountingJob>(&text.replace("lambda_max", "lambda_mx")).is_err());
        let bad = r#"{"k": -1.0, "theta": 0.1}"#;
        assert!(serde_json::from_str::<GammaPlrvParams>(bad).is_err());
    }

    #[test]
    fn mechanism_json_layout() {
        let m = Mechanism::Plrvo(GammaPlrvParams::new(2.0, 0.5).unwrap());
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(text, r#"{"mechanism":"plrvo","params":{"k":2.0,"theta":0.5}}"#);
    }

    #[test]
    fn infinite_budget_round_trips() {
        let t = PrivacyTarget::new(f64::INFINITY, 1e-5).unwrap();
        let text = serde_json::to_string(&t).unwrap();
        assert_eq!(text, r#"{"epsilon_star":"inf","delta_star":0.00001}"#);
        assert_eq!(serde_json::from_str::<PrivacyTarget>(&text).unwrap(), t);
    }

    #[test]
    fn curve_rejects_decreasing_or_negative() {
        let m = Mechanism::Gaussian(GaussianParams::new(1.0).unwrap());
        let bad: BTreeMap<u32, f64> = [(1, 0.5), (2, 0.4)].into_iter().collect();
        assert!(LogMomentCurve::new(m, job(2), bad).is_err());
        let neg: BTreeMap<u32, f64> = [(1, -0.1)].into_iter().collect();
        assert!(LogMomentCurve::new(m, job(1), neg).is_err());
        let ok: BTreeMap<u32, f64> = [(1, 0.1), (2, 0.3)].into_iter().collect();
        let c = LogMomentCurve::new(m, job(2), ok).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        let back: LogMomentCurve = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn default_lambda_caps() {
        let p = Mechanism::Plrvo(GammaPlrvParams::new(141.06, 8.32e-4).unwrap());
        assert_eq!(default_lambda_max(&p, 10.0), 119);
        assert_eq!(default_lambda_max(&p, 1e-3), DEFAULT_PLRV_LAMBDA_CAP);
        let g = Mechanism::Gaussian(GaussianParams::new(1.0).unwrap());
        assert_eq!(default_lambda_max(&g, 10.0), DEFAULT_LAMBDA_MAX);
    }
}
